// authnet command line: each pipeline stage is independently invokable so
// runs can be cached, resumed and debugged stage by stage.
//
// Exit codes: 0 success, 1 configuration error, 2 partial failures (see the
// manifest), 3 corpus error.

#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "authnet/config.hpp"
#include "authnet/error.hpp"
#include "authnet/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitPartial = 2;
constexpr int kExitCorpus = 3;

int exit_code_for(const authnet::Error& error) {
  switch (error.code()) {
    case authnet::ErrorCode::ConfigInvalid:
      return kExitConfig;
    case authnet::ErrorCode::MissingRoot:
    case authnet::ErrorCode::MalformedLayout:
    case authnet::ErrorCode::EmptyCorpus:
      return kExitCorpus;
    default:
      return kExitConfig;
  }
}

struct Cli {
  authnet::Config config = authnet::Config::defaults();
  std::string config_file;
  std::map<std::string, std::string> flag_values;

  void resolve() {
    if (!config_file.empty()) config.load_file(config_file);
    config.apply_env();
    for (const auto& [key, value] : flag_values) config.set(key, value);
  }

  authnet::harness::ExperimentConfig experiment() {
    resolve();
    return authnet::harness::ExperimentConfig::from_config(config);
  }
};

void add_config_flags(CLI::App* app, Cli& cli) {
  app->add_option("--config", cli.config_file, "config file of key = value lines");
  for (const auto& spec : authnet::Config::schema()) {
    app->add_option_function<std::string>(
        "--" + spec.key,
        [&cli, key = spec.key](const std::string& value) { cli.flag_values[key] = value; },
        spec.description);
  }
}

void run_scan(Cli& cli) {
  auto config = cli.experiment();
  auto index = authnet::corpus::scan_corpus(config.corpus_root, config.layout);
  std::printf("root: %s\n", index.root.string().c_str());
  std::printf("layout: %s\n", authnet::corpus::to_string(index.layout));
  std::printf("speakers: %zu\n", index.speakers.size());
  std::printf("words: %zu\n", index.words.size());
  std::printf("utterances_per_word: %d\n", index.utterances_per_word);
  std::printf("entries: %zu\n", index.entries.size());
  std::printf("missing: %zu\n", index.missing.size());
  for (const auto& key : index.missing) {
    std::printf("  missing %s\n", authnet::corpus::to_string(key).c_str());
  }
}

// Cache-filling passes share this loop; `embed` also runs the backend.
void run_stage(Cli& cli, bool with_embedding) {
  auto config = cli.experiment();
  auto index = authnet::corpus::scan_corpus(config.corpus_root, config.layout);
  auto detector = authnet::preprocess::make_detector(config.detector);
  std::shared_ptr<authnet::embed::EmbeddingBackend> backend;
  if (with_embedding) backend = authnet::embed::make_backend(config.backend);

  authnet::preprocess::FrameCache frame_cache(config.cache_dir() / "frames",
                                              config.preprocess_digest());
  std::optional<authnet::embed::FeatureCache> feature_cache;
  if (with_embedding) {
    feature_cache.emplace(config.cache_dir() / "features", backend->id(),
                          config.preprocess_digest());
  }

  std::size_t done = 0, failed = 0;
  for (const auto& [key, source] : index.entries) {
    try {
      if (with_embedding) {
        authnet::harness::utterance_features(source, key, config, *detector, *backend,
                                             &frame_cache, &*feature_cache);
      } else if (!frame_cache.load(key)) {
        auto raw = authnet::preprocess::load_frames(source, config.fps);
        raw.source = key;
        auto normalized = authnet::preprocess::normalize_sequence(raw, config.timesteps,
                                                                  config.side, *detector);
        frame_cache.store(key, normalized);
      }
      ++done;
    } catch (const authnet::Error& e) {
      ++failed;
      std::fprintf(stderr, "%s: %s\n", authnet::corpus::to_string(key).c_str(), e.what());
    }
  }
  std::printf("%s: %zu utterances processed, %zu failed\n",
              with_embedding ? "embed" : "preprocess", done, failed);
  if (failed > 0) std::exit(kExitPartial);
}

void run_train(Cli& cli, const std::string& speaker, const std::string& word,
               const std::string& model_out) {
  auto config = cli.experiment();
  auto index = authnet::corpus::scan_corpus(config.corpus_root, config.layout);
  authnet::corpus::Target target{speaker, word};
  auto plan = authnet::corpus::make_split(index, target, config.split, config.seed);

  auto detector = authnet::preprocess::make_detector(config.detector);
  auto backend = authnet::embed::make_backend(config.backend);
  authnet::preprocess::FrameCache frame_cache(config.cache_dir() / "frames",
                                              config.preprocess_digest());
  authnet::embed::FeatureCache feature_cache(config.cache_dir() / "features", backend->id(),
                                             config.preprocess_digest());

  std::map<authnet::corpus::UtteranceKey, authnet::embed::FeatureSequence> features;
  std::map<authnet::corpus::UtteranceKey, int> valid;
  for (const auto& entry : plan.train) {
    if (features.count(entry.key)) continue;
    int v = config.timesteps;
    features[entry.key] = authnet::harness::utterance_features(
        index.entries.at(entry.key), entry.key, config, *detector, *backend,
        config.cache_enabled ? &frame_cache : nullptr,
        config.cache_enabled ? &feature_cache : nullptr, &v);
    valid[entry.key] = v;
  }

  auto model = authnet::classifier::train(plan, features, valid, config.verifier);
  std::filesystem::path out = model_out.empty()
                                  ? config.models_dir() / (speaker + "_" + word + ".model")
                                  : std::filesystem::path(model_out);
  std::filesystem::create_directories(out.parent_path());
  authnet::classifier::save_model(out, model);
  authnet::corpus::write_split_plan(config.plans_dir() / (speaker + "_" + word + ".plan"), plan);
  std::printf("trained %s/%s: final loss %.6f, model %s\n", speaker.c_str(), word.c_str(),
              model.training_loss_curve.back(), out.string().c_str());
}

void run_eval(Cli& cli, const std::string& speaker, const std::string& word,
              const std::string& model_path) {
  auto config = cli.experiment();
  auto index = authnet::corpus::scan_corpus(config.corpus_root, config.layout);
  authnet::corpus::Target target{speaker, word};
  auto plan = authnet::corpus::make_split(index, target, config.split, config.seed);

  std::filesystem::path model_file =
      model_path.empty() ? config.models_dir() / (speaker + "_" + word + ".model")
                         : std::filesystem::path(model_path);
  auto model = authnet::classifier::load_model(model_file, config.timesteps,
                                               config.backend.dimension);

  auto detector = authnet::preprocess::make_detector(config.detector);
  auto backend = authnet::embed::make_backend(config.backend);
  authnet::preprocess::FrameCache frame_cache(config.cache_dir() / "frames",
                                              config.preprocess_digest());
  authnet::embed::FeatureCache feature_cache(config.cache_dir() / "features", backend->id(),
                                             config.preprocess_digest());

  std::vector<authnet::metrics::ScoredSample> samples;
  for (const auto& entry : plan.test) {
    int v = config.timesteps;
    auto features = authnet::harness::utterance_features(
        index.entries.at(entry.key), entry.key, config, *detector, *backend,
        config.cache_enabled ? &frame_cache : nullptr,
        config.cache_enabled ? &feature_cache : nullptr, &v);
    auto prediction = authnet::classifier::score(model, features, v);
    samples.push_back({prediction.score, entry.label, entry.kind});
  }

  auto report = authnet::metrics::evaluate(samples, config.verifier.threshold, target);
  std::filesystem::create_directories(config.reports_dir());
  authnet::metrics::write_eval_report(
      config.reports_dir() / (speaker + "_" + word + ".json"), report);
  std::printf("evaluated %zu test samples\n", samples.size());
  std::printf("sensitivity %.4f  specificity %.4f  accuracy %.4f  auc %.4f  eer %.4f\n",
              report.sensitivity, report.specificity, report.accuracy, report.auc, report.eer);
}

int run_full(Cli& cli) {
  auto config = cli.experiment();
  auto manifest = authnet::harness::run_experiment(config);
  std::printf("run complete: %zu combinations, %zu completed, %zu failed\n",
              manifest.combinations.size(), manifest.completed_count(),
              manifest.failed_count());
  std::printf("manifest: %s\n", config.manifest_path().string().c_str());
  return manifest.failed_count() > 0 ? kExitPartial : kExitOk;
}

void run_verify(Cli& cli, const std::string& model_path, const std::string& input_path) {
  auto config = cli.experiment();
  auto outcome = authnet::harness::verify_utterance(model_path, input_path, config);
  std::printf("target: %s/%s\n", outcome.target.speaker_id.c_str(),
              outcome.target.word_id.c_str());
  std::printf("score: %.6f\n", outcome.prediction.score);
  std::printf("threshold: %.4f\n", outcome.threshold);
  std::printf("verdict: %s\n", outcome.verdict.c_str());
}

void run_report(Cli& cli) {
  auto config = cli.experiment();
  auto manifest = authnet::harness::read_manifest(config.manifest_path());
  authnet::harness::recompute_aggregates(config, manifest);
  authnet::harness::emit_report_artifacts(config, manifest);
  std::printf("%s", authnet::harness::render_report_tables(manifest).c_str());
  std::printf("\nwrote %s and %s\n",
              (config.reports_dir() / "aggregate.json").string().c_str(),
              config.plots_dir().string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video-password authentication pipeline"};
  app.require_subcommand(1);
  Cli cli;

  auto* scan = app.add_subcommand("scan", "index the corpus and print its statistics");
  add_config_flags(scan, cli);

  auto* preprocess = app.add_subcommand("preprocess", "fill the normalized-frame cache");
  add_config_flags(preprocess, cli);

  auto* embed = app.add_subcommand("embed", "fill the feature cache");
  add_config_flags(embed, cli);

  std::string speaker, word, model_path, input_path;
  auto* train = app.add_subcommand("train", "train one person-word verifier");
  add_config_flags(train, cli);
  train->add_option("--speaker", speaker, "target speaker id")->required();
  train->add_option("--word", word, "target word id")->required();
  train->add_option("--model-out", model_path, "model file path");

  auto* eval = app.add_subcommand("eval", "evaluate a trained verifier on its test split");
  add_config_flags(eval, cli);
  eval->add_option("--speaker", speaker, "target speaker id")->required();
  eval->add_option("--word", word, "target word id")->required();
  eval->add_option("--model", model_path, "model file path");

  auto* run = app.add_subcommand("run", "full loop over every person-word combination");
  add_config_flags(run, cli);

  auto* verify = app.add_subcommand("verify", "score one utterance against a saved model");
  add_config_flags(verify, cli);
  verify->add_option("--model", model_path, "model file path")->required();
  verify->add_option("--input", input_path, "utterance directory or video file")->required();

  auto* report = app.add_subcommand("report", "aggregate tables and plots from a manifest");
  add_config_flags(report, cli);

  CLI11_PARSE(app, argc, argv);

  try {
    if (scan->parsed()) run_scan(cli);
    if (preprocess->parsed()) run_stage(cli, false);
    if (embed->parsed()) run_stage(cli, true);
    if (train->parsed()) run_train(cli, speaker, word, model_path);
    if (eval->parsed()) run_eval(cli, speaker, word, model_path);
    if (run->parsed()) return run_full(cli);
    if (verify->parsed()) run_verify(cli, model_path, input_path);
    if (report->parsed()) run_report(cli);
  } catch (const authnet::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitOk;
}

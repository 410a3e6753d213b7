#include "authnet/harness.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "authnet/error.hpp"
#include "authnet/plots.hpp"
#include "authnet/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace authnet::harness {

namespace {

std::string target_slug(const corpus::Target& target) {
  return target.speaker_id + "_" + target.word_id;
}

void atomic_write_text(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::random_device rd;
  const fs::path staging =
      path.parent_path() / (path.filename().string() + ".tmp-" + std::to_string(rd() % 1000000));
  {
    std::ofstream out(staging, std::ios::binary);
    if (!out) raise(ErrorCode::IoFailure, "cannot write " + staging.string());
    out << content;
  }
  fs::rename(staging, path);
}

std::vector<metrics::ScoredSample> read_scores_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoFailure, "cannot read scores from " + path.string());
  std::vector<metrics::ScoredSample> samples;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string score_text, label_text, kind_text;
    std::getline(row, score_text, ',');
    std::getline(row, label_text, ',');
    std::getline(row, kind_text, ',');
    metrics::ScoredSample sample;
    sample.score = std::stod(score_text);
    sample.label = std::stoi(label_text);
    auto kind = corpus::imposter_kind_from_string(kind_text);
    if (!kind) raise(ErrorCode::IoFailure, "bad imposter kind in " + path.string());
    sample.kind = *kind;
    samples.push_back(sample);
  }
  return samples;
}

std::string scores_csv(const std::vector<metrics::ScoredSample>& samples) {
  std::ostringstream out;
  out.precision(17);
  out << "score,label,imposter_kind\n";
  for (const auto& sample : samples) {
    out << sample.score << "," << sample.label << "," << corpus::to_string(sample.kind) << "\n";
  }
  return out.str();
}

fs::path scores_path(const ExperimentConfig& config, const corpus::Target& target) {
  return config.reports_dir() / (target_slug(target) + ".scores.csv");
}

std::map<std::string, double> report_scalars(const metrics::EvalReport& report) {
  return {
      {"sensitivity", report.sensitivity},
      {"specificity", report.specificity},
      {"accuracy", report.accuracy},
      {"far", report.far},
      {"frr", report.frr},
      {"far_conventional", report.far_conventional},
      {"frr_conventional", report.frr_conventional},
      {"auc", report.auc},
      {"eer", report.eer},
  };
}

}  // namespace

ExperimentConfig ExperimentConfig::from_config(const Config& raw) {
  ExperimentConfig config;
  config.raw_ = raw;

  config.corpus_root = raw.get_path("corpus.root");
  config.layout = corpus::layout_from_string(raw.get("corpus.layout"));
  config.dataset_name = raw.get("dataset.name");

  config.split.held_out_speakers = static_cast<int>(raw.get_int("split.held_out_speakers"));
  config.split.held_out_words = static_cast<int>(raw.get_int("split.held_out_words"));
  config.split.oversample_factor = static_cast<int>(raw.get_int("split.oversample_factor"));
  config.split.train_fraction = raw.get_double("split.train_fraction");

  config.timesteps = static_cast<int>(raw.get_int("preprocess.T"));
  config.side = static_cast<int>(raw.get_int("preprocess.S"));
  config.fps = raw.get_double("preprocess.fps");
  config.detector.kind = raw.get("preprocess.detector.kind");
  config.detector.cascade_path = raw.get_path("preprocess.detector.cascade_path");
  config.detector.scale_factor = raw.get_double("preprocess.detector.scale_factor");
  config.detector.min_neighbors = static_cast<int>(raw.get_int("preprocess.detector.min_neighbors"));
  config.detector.min_size = static_cast<int>(raw.get_int("preprocess.detector.min_size"));

  config.backend.backend = raw.get("embedder.backend");
  config.backend.dimension = static_cast<int>(raw.get_int("embedder.dim"));
  config.backend.weights_path = raw.get_path("embedder.weights_path");
  config.backend.stub_seed = static_cast<std::uint64_t>(raw.get_int("embedder.stub_seed"));

  config.verifier.hidden_sizes = raw.get_int_list("classifier.hidden_sizes");
  if (raw.get_int("classifier.layers") != static_cast<std::int64_t>(config.verifier.hidden_sizes.size())) {
    raise(ErrorCode::ConfigInvalid,
          "classifier.layers must match the length of classifier.hidden_sizes");
  }
  config.verifier.timesteps = config.timesteps;
  config.verifier.feature_dim = config.backend.dimension;
  config.verifier.learning_rate = raw.get_double("classifier.learning_rate");
  config.verifier.epochs = static_cast<int>(raw.get_int("classifier.epochs"));
  config.verifier.batch_size = static_cast<int>(raw.get_int("classifier.batch_size"));
  config.verifier.threshold = raw.get_double("classifier.threshold");
  config.verifier.clamp_eps = raw.get_double("classifier.clamp_eps");
  config.verifier.adam_beta1 = raw.get_double("classifier.adam_beta1");
  config.verifier.adam_beta2 = raw.get_double("classifier.adam_beta2");
  config.verifier.adam_eps = raw.get_double("classifier.adam_eps");
  config.verifier.mask_padding = raw.get_bool("classifier.mask_padding");
  config.verifier.standardize_features = raw.get_bool("classifier.standardize_features");
  config.verifier.replica_jitter_std = raw.get_double("classifier.replica_jitter_std");

  config.output_dir = raw.get_path("output.dir");
  config.cache_enabled = raw.get_bool("cache.enabled");
  config.seed = static_cast<std::uint64_t>(raw.get_int("seed"));
  config.verifier.seed = config.seed;
  config.parallelism = static_cast<int>(raw.get_int("parallelism"));
  if (config.parallelism < 1) {
    raise(ErrorCode::ConfigInvalid, "parallelism must be >= 1");
  }
  config.verifier.validate();
  return config;
}

std::string ExperimentConfig::run_digest() const {
  Config semantic = raw_;
  semantic.set("parallelism", "1");
  semantic.set("output.dir", "");
  semantic.set("cache.enabled", "true");
  return semantic.digest();
}

std::string ExperimentConfig::preprocess_digest() const { return raw_.digest("preprocess."); }

std::size_t RunManifest::completed_count() const {
  std::size_t count = 0;
  for (const auto& result : combinations) count += result.status == "completed";
  return count;
}

std::size_t RunManifest::failed_count() const {
  std::size_t count = 0;
  for (const auto& result : combinations) count += result.status == "failed";
  return count;
}

void write_manifest(const fs::path& path, const RunManifest& manifest) {
  nlohmann::json node;
  node["config_digest"] = manifest.config_digest;
  node["dataset"] = manifest.dataset_name;
  nlohmann::json combos = nlohmann::json::array();
  for (const auto& result : manifest.combinations) {
    combos.push_back({
        {"speaker", result.target.speaker_id},
        {"word", result.target.word_id},
        {"status", result.status},
        {"error", result.error},
        {"wall_seconds", result.wall_seconds},
        {"report", result.report_path.string()},
        {"model", result.model_path.string()},
        {"leakage_free", result.leakage_free},
        {"retrained", result.retrained},
    });
  }
  node["combinations"] = combos;
  if (!manifest.macro.empty()) {
    nlohmann::json macro = nlohmann::json::object();
    for (const auto& [name, summary] : manifest.macro) {
      macro[name] = {{"mean", summary.mean}, {"min", summary.min}, {"max", summary.max}};
    }
    node["aggregate"]["macro"] = macro;
  }
  if (manifest.pooled) {
    node["aggregate"]["pooled"] = {
        {"sensitivity", manifest.pooled->sensitivity},
        {"specificity", manifest.pooled->specificity},
        {"accuracy", manifest.pooled->accuracy},
        {"far", manifest.pooled->far},
        {"frr", manifest.pooled->frr},
        {"far_conventional", manifest.pooled->far_conventional},
        {"frr_conventional", manifest.pooled->frr_conventional},
        {"auc", manifest.pooled->auc},
        {"eer", manifest.pooled->eer},
    };
  }
  atomic_write_text(path, node.dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoFailure, "cannot read manifest " + path.string());
  nlohmann::json node;
  try {
    in >> node;
  } catch (const nlohmann::json::exception&) {
    raise(ErrorCode::IoFailure, "unparsable manifest " + path.string());
  }
  RunManifest manifest;
  manifest.config_digest = node.value("config_digest", "");
  manifest.dataset_name = node.value("dataset", "");
  for (const auto& combo : node.value("combinations", nlohmann::json::array())) {
    CombinationResult result;
    result.target.speaker_id = combo.value("speaker", "");
    result.target.word_id = combo.value("word", "");
    result.status = combo.value("status", "");
    result.error = combo.value("error", "");
    result.wall_seconds = combo.value("wall_seconds", 0.0);
    result.report_path = combo.value("report", "");
    result.model_path = combo.value("model", "");
    result.leakage_free = combo.value("leakage_free", false);
    result.retrained = combo.value("retrained", false);
    manifest.combinations.push_back(std::move(result));
  }
  if (node.contains("aggregate") && node["aggregate"].contains("macro")) {
    for (const auto& [name, summary] : node["aggregate"]["macro"].items()) {
      manifest.macro[name] = MetricSummary{summary.value("mean", 0.0), summary.value("min", 0.0),
                                           summary.value("max", 0.0)};
    }
  }
  return manifest;
}

embed::FeatureSequence utterance_features(const corpus::FrameSource& source,
                                          const corpus::UtteranceKey& key,
                                          const ExperimentConfig& config,
                                          const preprocess::FaceDetector& detector,
                                          const embed::EmbeddingBackend& backend,
                                          preprocess::FrameCache* frame_cache,
                                          embed::FeatureCache* feature_cache,
                                          int* valid_timesteps) {
  if (valid_timesteps) *valid_timesteps = config.timesteps;

  if (feature_cache) {
    if (auto cached = feature_cache->load(key)) {
      if (valid_timesteps && frame_cache) {
        if (auto pad = frame_cache->pad_count(key)) {
          *valid_timesteps = config.timesteps - *pad;
        }
      }
      return *cached;
    }
  }

  preprocess::FrameSequence normalized;
  bool have_frames = false;
  if (frame_cache) {
    if (auto cached = frame_cache->load(key)) {
      normalized = std::move(*cached);
      have_frames = true;
    }
  }
  if (!have_frames) {
    preprocess::FrameSequence raw = preprocess::load_frames(source, config.fps);
    raw.source = key;
    normalized = preprocess::normalize_sequence(raw, config.timesteps, config.side, detector);
    if (frame_cache) frame_cache->store(key, normalized);
  }
  if (valid_timesteps) *valid_timesteps = config.timesteps - normalized.pad_count;

  embed::FeatureSequence features = embed_sequence(normalized, backend);
  if (feature_cache) feature_cache->store(key, features);
  return features;
}

namespace {

struct CombinationArtifacts {
  CombinationResult result;
  std::vector<metrics::ScoredSample> scores;
};

CombinationArtifacts run_combination(const ExperimentConfig& config,
                                     const corpus::CorpusIndex& index,
                                     const corpus::Target& target) {
  const auto start = std::chrono::steady_clock::now();
  CombinationArtifacts artifacts;
  artifacts.result.target = target;
  artifacts.result.retrained = true;

  corpus::SplitPlan plan = corpus::make_split(index, target, config.split, config.seed);

  // Leakage assertion recorded with the combination: no base utterance key
  // may appear on both sides.
  std::set<corpus::UtteranceKey> train_keys, test_keys;
  for (const auto& entry : plan.train) train_keys.insert(entry.key);
  for (const auto& entry : plan.test) test_keys.insert(entry.key);
  bool leakage_free = true;
  for (const auto& key : train_keys) {
    if (test_keys.count(key)) {
      leakage_free = false;
      break;
    }
  }
  artifacts.result.leakage_free = leakage_free;
  if (!leakage_free) {
    raise(ErrorCode::InvalidArgument, "split produced overlapping train/test keys");
  }

  auto detector = preprocess::make_detector(config.detector);
  auto backend = embed::make_backend(config.backend);

  std::optional<preprocess::FrameCache> frame_cache;
  std::optional<embed::FeatureCache> feature_cache;
  if (config.cache_enabled) {
    frame_cache.emplace(config.cache_dir() / "frames", config.preprocess_digest());
    feature_cache.emplace(config.cache_dir() / "features", backend->id(),
                          config.preprocess_digest());
  }

  // Features for every distinct base key on either side.
  std::map<corpus::UtteranceKey, embed::FeatureSequence> features;
  std::map<corpus::UtteranceKey, int> valid_timesteps;
  auto ensure_features = [&](const corpus::UtteranceKey& key) {
    if (features.count(key)) return;
    auto it = index.entries.find(key);
    if (it == index.entries.end()) {
      raise(ErrorCode::IoFailure, "plan references unknown utterance " + corpus::to_string(key));
    }
    int valid = config.timesteps;
    features[key] = utterance_features(it->second, key, config, *detector, *backend,
                                       frame_cache ? &*frame_cache : nullptr,
                                       feature_cache ? &*feature_cache : nullptr, &valid);
    valid_timesteps[key] = valid;
  };
  for (const auto& entry : plan.train) ensure_features(entry.key);
  for (const auto& entry : plan.test) ensure_features(entry.key);

  classifier::TrainedVerifier model =
      classifier::train(plan, features, valid_timesteps, config.verifier);

  for (const auto& entry : plan.test) {
    const auto& sequence = features.at(entry.key);
    classifier::Prediction prediction =
        classifier::score(model, sequence, valid_timesteps.at(entry.key));
    artifacts.scores.push_back(metrics::ScoredSample{prediction.score, entry.label, entry.kind});
  }

  metrics::EvalReport report =
      metrics::evaluate(artifacts.scores, config.verifier.threshold, target);

  const std::string slug = target_slug(target);
  fs::create_directories(config.models_dir());
  fs::create_directories(config.reports_dir());
  fs::create_directories(config.plans_dir());

  artifacts.result.model_path = config.models_dir() / (slug + ".model");
  artifacts.result.report_path = config.reports_dir() / (slug + ".json");
  classifier::save_model(artifacts.result.model_path, model);
  metrics::write_eval_report(artifacts.result.report_path, report);
  atomic_write_text(scores_path(config, target), scores_csv(artifacts.scores));
  corpus::write_split_plan(config.plans_dir() / (slug + ".plan"), plan);

  artifacts.result.status = "completed";
  artifacts.result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return artifacts;
}

}  // namespace

void recompute_aggregates(const ExperimentConfig& config, RunManifest& manifest) {
  std::vector<metrics::ScoredSample> pooled_scores;
  std::map<std::string, std::vector<double>> per_metric;

  for (const auto& result : manifest.combinations) {
    if (result.status != "completed") continue;
    metrics::EvalReport report = metrics::read_eval_report(result.report_path);
    for (const auto& [name, value] : report_scalars(report)) {
      per_metric[name].push_back(value);
    }
    const fs::path scores_file = scores_path(config, result.target);
    if (fs::exists(scores_file)) {
      for (const auto& sample : read_scores_csv(scores_file)) pooled_scores.push_back(sample);
    }
  }

  manifest.macro.clear();
  for (const auto& [name, values] : per_metric) {
    MetricSummary summary;
    summary.mean = 0.0;
    summary.min = values.front();
    summary.max = values.front();
    for (double v : values) {
      summary.mean += v;
      summary.min = std::min(summary.min, v);
      summary.max = std::max(summary.max, v);
    }
    summary.mean /= static_cast<double>(values.size());
    manifest.macro[name] = summary;
  }

  if (!pooled_scores.empty()) {
    manifest.pooled =
        metrics::evaluate(pooled_scores, config.verifier.threshold,
                          corpus::Target{"pooled", manifest.dataset_name});
  }
}

RunManifest run_experiment(const ExperimentConfig& config) {
  corpus::CorpusIndex index = corpus::scan_corpus(config.corpus_root, config.layout);
  std::vector<corpus::Target> targets =
      corpus::enumerate_targets(index, config.split, config.seed);

  RunManifest manifest;
  manifest.config_digest = config.run_digest();
  manifest.dataset_name = config.dataset_name;

  // Resume: completed combinations of an identical earlier run are kept.
  std::map<corpus::Target, CombinationResult> resumable;
  if (fs::exists(config.manifest_path())) {
    try {
      RunManifest previous = read_manifest(config.manifest_path());
      if (previous.config_digest == manifest.config_digest) {
        for (const auto& result : previous.combinations) {
          if (result.status == "completed" && fs::exists(result.report_path) &&
              fs::exists(result.model_path)) {
            resumable[result.target] = result;
          }
        }
      }
    } catch (const Error&) {
      // Unreadable manifest: rebuild everything.
    }
  }

  fs::create_directories(config.output_dir);
  manifest.combinations.resize(targets.size());

  std::mutex manifest_mutex;
  std::atomic<std::size_t> next_target{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t at = next_target.fetch_add(1);
      if (at >= targets.size()) return;
      const corpus::Target& target = targets[at];

      CombinationResult result;
      if (auto it = resumable.find(target); it != resumable.end()) {
        result = it->second;
        result.retrained = false;
      } else {
        try {
          result = run_combination(config, index, target).result;
        } catch (const Error& e) {
          result.target = target;
          result.status = "failed";
          result.error = e.what();
        } catch (const std::exception& e) {
          result.target = target;
          result.status = "failed";
          result.error = e.what();
        }
      }

      std::lock_guard<std::mutex> lock(manifest_mutex);
      manifest.combinations[at] = std::move(result);
      write_manifest(config.manifest_path(), manifest);
    }
  };

  const int workers = std::min<int>(config.parallelism, static_cast<int>(targets.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& thread : pool) thread.join();
  }

  recompute_aggregates(config, manifest);
  write_manifest(config.manifest_path(), manifest);
  return manifest;
}

VerifyOutcome verify_utterance(const fs::path& model_path, const fs::path& input_path,
                               const ExperimentConfig& config) {
  classifier::TrainedVerifier model =
      classifier::load_model(model_path, config.timesteps, config.backend.dimension);

  auto detector = preprocess::make_detector(config.detector);
  auto backend = embed::make_backend(config.backend);
  if (backend->dimension() != model.config.feature_dim) {
    raise(ErrorCode::ConfigMismatch, "embedder dimension does not match the model");
  }

  preprocess::FrameSequence raw;
  if (fs::is_directory(input_path)) {
    raw = preprocess::load_image_frames(input_path);
  } else {
    raw = preprocess::decode_video(input_path, config.fps);
  }
  preprocess::FrameSequence normalized =
      preprocess::normalize_sequence(raw, config.timesteps, config.side, *detector);
  embed::FeatureSequence features = embed_sequence(normalized, *backend);

  VerifyOutcome outcome;
  outcome.prediction =
      classifier::score(model, features, config.timesteps - normalized.pad_count);
  outcome.threshold = model.config.threshold;
  outcome.target = model.target;
  outcome.verdict = outcome.prediction.decision ? "ACCEPT" : "REJECT";
  return outcome;
}

std::string render_report_tables(const RunManifest& manifest) {
  if (manifest.completed_count() == 0) {
    raise(ErrorCode::EmptyManifest, "no completed combinations to report");
  }

  std::ostringstream out;
  out << "Performance (" << manifest.dataset_name << ", " << manifest.completed_count()
      << " person-word combinations)\n\n";

  const std::vector<std::pair<std::string, std::string>> rows = {
      {"Sensitivity", "sensitivity"}, {"Specificity", "specificity"},
      {"Accuracy", "accuracy"},       {"AUC Score", "auc"},
      {"Equal Error Rate", "eer"},
  };
  char line[160];
  std::snprintf(line, sizeof(line), "%-18s %14s %14s\n", "Metric", "macro mean", "pooled");
  out << line;
  for (const auto& [label, key] : rows) {
    const double macro = manifest.macro.count(key) ? manifest.macro.at(key).mean : 0.0;
    double pooled = 0.0;
    if (manifest.pooled) {
      const auto scalars = report_scalars(*manifest.pooled);
      pooled = scalars.at(key);
    }
    std::snprintf(line, sizeof(line), "%-18s %14.4f %14.4f\n", label.c_str(), macro, pooled);
    out << line;
  }

  if (manifest.pooled && !manifest.pooled->strata.empty()) {
    out << "\nSpecificity per imposter type (pooled)\n\n";
    std::snprintf(line, sizeof(line), "%-36s %10s %14s\n", "Imposter type", "samples",
                  "specificity");
    out << line;
    const std::vector<std::pair<corpus::ImposterKind, std::string>> kinds = {
        {corpus::ImposterKind::SamePersonDifferentWord, "Same Person-Different Words"},
        {corpus::ImposterKind::DifferentPersonSameWord, "Different Person-Same Words"},
        {corpus::ImposterKind::DifferentPersonDifferentWord, "Different Person-Different Words"},
    };
    for (const auto& [kind, label] : kinds) {
      auto it = manifest.pooled->strata.find(kind);
      if (it == manifest.pooled->strata.end()) continue;
      std::snprintf(line, sizeof(line), "%-36s %10zu %14.4f\n", label.c_str(), it->second.count,
                    it->second.specificity);
      out << line;
    }
  }
  return out.str();
}

void emit_report_artifacts(const ExperimentConfig& config, const RunManifest& manifest) {
  if (manifest.completed_count() == 0) {
    raise(ErrorCode::EmptyManifest, "no completed combinations to report");
  }
  nlohmann::json aggregate;
  aggregate["dataset"] = manifest.dataset_name;
  aggregate["combinations_completed"] = manifest.completed_count();
  aggregate["combinations_failed"] = manifest.failed_count();
  for (const auto& [name, summary] : manifest.macro) {
    aggregate["macro"][name] = {
        {"mean", summary.mean}, {"min", summary.min}, {"max", summary.max}};
  }
  if (manifest.pooled) {
    for (const auto& [name, value] : report_scalars(*manifest.pooled)) {
      aggregate["pooled"][name] = value;
    }
    nlohmann::json strata = nlohmann::json::object();
    for (const auto& [kind, stats] : manifest.pooled->strata) {
      strata[corpus::to_string(kind)] = {{"count", stats.count},
                                         {"specificity", stats.specificity}};
    }
    aggregate["pooled"]["strata"] = strata;
  }
  fs::create_directories(config.reports_dir());
  atomic_write_text(config.reports_dir() / "aggregate.json", aggregate.dump(2) + "\n");

  if (manifest.pooled) {
    plots::render_roc(config.plots_dir() / "roc.png", manifest.pooled->roc,
                      "ROC (" + manifest.dataset_name + ")");
    plots::render_confusion(config.plots_dir() / "confusion.png", manifest.pooled->confusion,
                            "Confusion (" + manifest.dataset_name + ")");
  }
}

}  // namespace authnet::harness

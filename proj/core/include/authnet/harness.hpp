#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "authnet/classifier.hpp"
#include "authnet/config.hpp"
#include "authnet/corpus.hpp"
#include "authnet/embedder.hpp"
#include "authnet/metrics.hpp"
#include "authnet/preprocess.hpp"

namespace authnet::harness {

/// Typed view of the flat config, resolved and validated once per run.
struct ExperimentConfig {
  std::filesystem::path corpus_root;
  corpus::CorpusLayout layout = corpus::CorpusLayout::MiraclVc1;
  std::string dataset_name;

  corpus::SplitConfig split;
  int timesteps = 20;
  int side = 224;
  double fps = 10.0;
  preprocess::DetectorConfig detector;
  embed::BackendConfig backend;
  classifier::VerifierConfig verifier;

  std::filesystem::path output_dir;
  bool cache_enabled = true;
  std::uint64_t seed = 42;
  int parallelism = 1;

  static ExperimentConfig from_config(const Config& raw);

  /// Digest over the keys that determine results (parallelism, output
  /// location and cache toggles excluded).
  std::string run_digest() const;
  /// Digest over the preprocessing keys; keys frame and feature caches.
  std::string preprocess_digest() const;

  std::filesystem::path models_dir() const { return output_dir / "models"; }
  std::filesystem::path reports_dir() const { return output_dir / "reports"; }
  std::filesystem::path plans_dir() const { return output_dir / "plans"; }
  std::filesystem::path plots_dir() const { return output_dir / "plots"; }
  std::filesystem::path cache_dir() const { return output_dir / "cache"; }
  std::filesystem::path manifest_path() const { return output_dir / "manifest.json"; }

 private:
  Config raw_;
};

struct CombinationResult {
  corpus::Target target;
  std::string status;  // completed | failed
  std::string error;
  double wall_seconds = 0.0;
  std::filesystem::path report_path;
  std::filesystem::path model_path;
  bool leakage_free = false;
  bool retrained = false;  // false when reused from an earlier identical run
};

struct MetricSummary {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct RunManifest {
  std::string config_digest;
  std::string dataset_name;
  std::vector<CombinationResult> combinations;
  // Macro statistics over completed combinations, plus the evaluation of all
  // pooled test scores. Both labeled because the two summaries differ.
  std::map<std::string, MetricSummary> macro;
  std::optional<metrics::EvalReport> pooled;

  std::size_t completed_count() const;
  std::size_t failed_count() const;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

/// Rebuilds the macro and pooled aggregates from the per-combination report
/// and score artifacts on disk.
void recompute_aggregates(const ExperimentConfig& config, RunManifest& manifest);

/// Cache-aware preprocess + embed of one utterance. `valid_timesteps` gets
/// T - pad_count when the pad count is known.
embed::FeatureSequence utterance_features(const corpus::FrameSource& source,
                                          const corpus::UtteranceKey& key,
                                          const ExperimentConfig& config,
                                          const preprocess::FaceDetector& detector,
                                          const embed::EmbeddingBackend& backend,
                                          preprocess::FrameCache* frame_cache,
                                          embed::FeatureCache* feature_cache,
                                          int* valid_timesteps = nullptr);

/// The full experiment loop: split, preprocess, embed, train and evaluate
/// every enumerated target, resumably and optionally in parallel. Failures
/// of single combinations are recorded without aborting the rest.
RunManifest run_experiment(const ExperimentConfig& config);

struct VerifyOutcome {
  classifier::Prediction prediction;
  double threshold = 0.5;
  corpus::Target target;
  std::string verdict;  // ACCEPT | REJECT
};

/// Scores one utterance (image directory or video file) against a saved
/// model.
VerifyOutcome verify_utterance(const std::filesystem::path& model_path,
                               const std::filesystem::path& input_path,
                               const ExperimentConfig& config);

/// Aggregate tables (scalar metric rows and the per-imposter-type
/// specificity table) rendered as fixed-width text.
std::string render_report_tables(const RunManifest& manifest);

/// Writes aggregate.json, the pooled ROC curve and the pooled confusion
/// heatmap under the run's output directory.
void emit_report_artifacts(const ExperimentConfig& config, const RunManifest& manifest);

}  // namespace authnet::harness

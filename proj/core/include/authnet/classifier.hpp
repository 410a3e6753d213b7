#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "authnet/corpus.hpp"
#include "authnet/embedder.hpp"
#include "authnet/lstm.hpp"

namespace authnet::classifier {

struct VerifierConfig {
  std::vector<int> hidden_sizes = {256, 128, 64, 32};
  int timesteps = 20;
  int feature_dim = 2622;
  double learning_rate = 0.001;
  int epochs = 60;
  int batch_size = 75;
  double threshold = 0.5;
  double clamp_eps = 1e-7;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool mask_padding = false;
  bool standardize_features = false;
  double replica_jitter_std = 0.0;
  std::uint64_t seed = 42;

  int layers() const { return static_cast<int>(hidden_sizes.size()); }
  void validate() const;
};

struct Prediction {
  double score = 0.0;   // sigmoid output in (0, 1)
  bool decision = false;  // score >= threshold
  int label() const { return decision ? 1 : 0; }
};

/// Immutable trained verifier for one person-word combination.
struct TrainedVerifier {
  corpus::Target target;
  VerifierConfig config;
  LstmNetwork network;
  std::vector<double> training_loss_curve;
  // Present when config.standardize_features: per-dimension train statistics.
  std::optional<Eigen::VectorXd> feature_mean;
  std::optional<Eigen::VectorXd> feature_scale;
};

/// Binary cross-entropy with the prediction clamped to [eps, 1-eps].
double bce_loss(double p, int y, double clamp_eps = 1e-7);

/// How pad timesteps are located for the optional mask: an all-white frame
/// embeds to a constant row, so the trainer receives per-sequence valid
/// lengths alongside the features.
struct TrainingSample {
  const embed::FeatureSequence* features = nullptr;
  int label = 0;
  int replica_idx = 0;
  int valid_timesteps = 0;  // T - pad_count; T when padding is unknown
};

/// Runs exactly config.epochs epochs of seeded mini-batch Adam over the
/// train side of a split plan. Replica entries reuse their base features
/// (plus optional seeded jitter).
TrainedVerifier train(const corpus::SplitPlan& plan,
                      const std::map<corpus::UtteranceKey, embed::FeatureSequence>& features,
                      const std::map<corpus::UtteranceKey, int>& valid_timesteps,
                      const VerifierConfig& config);

/// Same entry point when per-utterance pad counts are not tracked.
TrainedVerifier train(const corpus::SplitPlan& plan,
                      const std::map<corpus::UtteranceKey, embed::FeatureSequence>& features,
                      const VerifierConfig& config);

Prediction score(const TrainedVerifier& model, const embed::FeatureSequence& input);
Prediction score(const TrainedVerifier& model, const embed::FeatureSequence& input,
                 int valid_timesteps);

/// Self-describing container: magic, format version, JSON metadata (target,
/// config echo, loss curve, tensor shapes), raw float64 tensors.
void save_model(const std::filesystem::path& path, const TrainedVerifier& model);
TrainedVerifier load_model(const std::filesystem::path& path);

/// Load plus a pipeline-compatibility check on (T, D).
TrainedVerifier load_model(const std::filesystem::path& path, int expected_timesteps,
                           int expected_feature_dim);

}  // namespace authnet::classifier

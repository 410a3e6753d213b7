#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include "authnet/corpus.hpp"
#include "authnet/preprocess.hpp"

namespace authnet::embed {

using FeatureVector = Eigen::VectorXf;
using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// T x D matrix of per-frame embeddings for one utterance.
struct FeatureSequence {
  FeatureMatrix matrix;  // row t = embedding of frame t
  corpus::UtteranceKey source;
  std::string backend_id;
};

/// Maps one normalized frame to a fixed-dimension feature vector.
/// embed() must be deterministic for a fixed backend id and weights, and
/// reentrant for concurrent read-only use.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual const std::string& id() const = 0;
  virtual int dimension() const = 0;
  virtual FeatureVector embed(const cv::Mat& frame) const = 0;
};

/// Deterministic pseudo-embedding for data-free tests and offline runs.
///
/// The frame is reduced to an 8x8 grid of per-channel block means (192
/// values in [0,1], block boundaries at floor(k*extent/8)), and feature j is
/// the dot product of those means with projection weights
///   w(j, k) = 2 * unit(splitmix64(mix(seed, j * 192 + k))) - 1
/// scaled by 1/sqrt(192). Documented because tests recompute it
/// independently.
class StubHashBackend : public EmbeddingBackend {
 public:
  explicit StubHashBackend(int dimension, std::uint64_t seed = 17);

  const std::string& id() const override { return id_; }
  int dimension() const override { return dimension_; }
  FeatureVector embed(const cv::Mat& frame) const override;

  static constexpr int kGrid = 8;

 private:
  int dimension_;
  std::uint64_t seed_;
  std::string id_;
};

/// Pretrained face network loaded from an ONNX file via OpenCV DNN. The
/// frame is fed as a scaled BGR blob with the configured per-channel mean
/// subtracted; the network's final layer supplies the feature vector.
class OnnxFaceBackend : public EmbeddingBackend {
 public:
  OnnxFaceBackend(const std::filesystem::path& weights_path, int expected_dimension,
                  cv::Scalar mean_bgr = cv::Scalar(93.594, 104.762, 129.186),
                  std::string backend_id = "vggface-pretrained");

  const std::string& id() const override { return id_; }
  int dimension() const override { return dimension_; }
  FeatureVector embed(const cv::Mat& frame) const override;

 private:
  mutable cv::dnn::Net net_;
  int dimension_;
  cv::Scalar mean_bgr_;
  std::string id_;
};

struct BackendConfig {
  std::string backend = "stub-hash";
  int dimension = 2622;
  std::filesystem::path weights_path;
  std::uint64_t stub_seed = 17;
};

std::shared_ptr<EmbeddingBackend> make_backend(const BackendConfig& config);

/// Embeds every frame of a normalized sequence; row t of the result is
/// backend.embed(frames[t]).
FeatureSequence embed_sequence(const preprocess::FrameSequence& frames,
                               const EmbeddingBackend& backend);

/// Eq-style cosine difference 1 - (t . e) / (|t| |e|), in [0, 2].
double cosine_difference(const FeatureVector& a, const FeatureVector& b);

/// Per-timestep mean cosine difference of imposter utterances against the
/// target utterances, split by imposter category.
struct VariationRow {
  int timestep = 0;
  double mean_same_person_different_word = 0.0;
  std::size_t pairs_same_person = 0;
  double mean_different_person_same_word = 0.0;
  std::size_t pairs_different_person = 0;
};
using VariationTable = std::vector<VariationRow>;

VariationTable feature_variation_report(
    const std::map<corpus::UtteranceKey, FeatureSequence>& features,
    const std::vector<corpus::Target>& targets);

std::string variation_table_csv(const VariationTable& table);

/// Binary per-utterance feature files under `<root>/<backend_id>/...`:
/// 8-byte header (T then D, 32-bit unsigned little-endian) followed by
/// row-major T x D float32 little-endian. A meta file records the
/// preprocess digest; a digest change invalidates the backend's entries.
class FeatureCache {
 public:
  FeatureCache(std::filesystem::path root, std::string backend_id,
               std::string preprocess_digest);

  std::optional<FeatureSequence> load(const corpus::UtteranceKey& key) const;
  void store(const corpus::UtteranceKey& key, const FeatureSequence& features);

  std::filesystem::path entry_path(const corpus::UtteranceKey& key) const;

 private:
  bool digest_valid() const;

  std::filesystem::path root_;
  std::string backend_id_;
  std::string digest_;
};

}  // namespace authnet::embed

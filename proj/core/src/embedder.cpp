#include "authnet/embedder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "authnet/error.hpp"
#include "authnet/rng.hpp"

namespace fs = std::filesystem;

namespace authnet::embed {

namespace {

void write_u32(std::ostream& out, std::uint32_t value) {
  unsigned char bytes[4] = {
      static_cast<unsigned char>(value & 0xFF),
      static_cast<unsigned char>((value >> 8) & 0xFF),
      static_cast<unsigned char>((value >> 16) & 0xFF),
      static_cast<unsigned char>((value >> 24) & 0xFF),
  };
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::optional<std::uint32_t> read_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) return std::nullopt;
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

}  // namespace

StubHashBackend::StubHashBackend(int dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed), id_("stub-hash") {
  if (dimension <= 0) {
    raise(ErrorCode::ConfigInvalid, "stub backend dimension must be positive");
  }
}

FeatureVector StubHashBackend::embed(const cv::Mat& frame) const {
  if (frame.empty() || frame.channels() != 3 || frame.depth() != CV_8U) {
    raise(ErrorCode::BackendFailure, "stub backend expects a non-empty 8-bit 3-channel frame");
  }

  // Per-channel block means over an 8x8 grid, block k of axis length n
  // spanning [floor(k*n/8), floor((k+1)*n/8)).
  constexpr int grid = kGrid;
  double means[grid * grid * 3];
  for (int by = 0; by < grid; ++by) {
    const int y0 = by * frame.rows / grid;
    const int y1 = (by + 1) * frame.rows / grid;
    for (int bx = 0; bx < grid; ++bx) {
      const int x0 = bx * frame.cols / grid;
      const int x1 = (bx + 1) * frame.cols / grid;
      double sum[3] = {0.0, 0.0, 0.0};
      long long count = 0;
      for (int y = y0; y < std::max(y1, y0 + 1) && y < frame.rows; ++y) {
        const auto* row = frame.ptr<cv::Vec3b>(y);
        for (int x = x0; x < std::max(x1, x0 + 1) && x < frame.cols; ++x) {
          sum[0] += row[x][0];
          sum[1] += row[x][1];
          sum[2] += row[x][2];
          ++count;
        }
      }
      const int base = (by * grid + bx) * 3;
      for (int c = 0; c < 3; ++c) {
        means[base + c] = count > 0 ? sum[c] / (255.0 * static_cast<double>(count)) : 0.0;
      }
    }
  }

  constexpr int block_count = grid * grid * 3;
  const double scale = 1.0 / std::sqrt(static_cast<double>(block_count));
  FeatureVector features(dimension_);
  for (int j = 0; j < dimension_; ++j) {
    double acc = 0.0;
    for (int k = 0; k < block_count; ++k) {
      rng::SplitMix64 stream(rng::mix(seed_, static_cast<std::uint64_t>(j) * block_count + k));
      const double weight = 2.0 * stream.unit() - 1.0;
      acc += weight * means[k];
    }
    features[j] = static_cast<float>(acc * scale);
  }
  return features;
}

OnnxFaceBackend::OnnxFaceBackend(const fs::path& weights_path, int expected_dimension,
                                 cv::Scalar mean_bgr, std::string backend_id)
    : dimension_(expected_dimension), mean_bgr_(mean_bgr), id_(std::move(backend_id)) {
  if (!fs::exists(weights_path)) {
    raise(ErrorCode::BackendFailure,
          "embedder weights file not found: " + weights_path.string() +
              " (set embedder.weights_path, or use the stub-hash backend)");
  }
  try {
    net_ = cv::dnn::readNetFromONNX(weights_path.string());
  } catch (const cv::Exception& e) {
    raise(ErrorCode::BackendFailure,
          "cannot load ONNX network from " + weights_path.string() + ": " + e.what());
  }
}

FeatureVector OnnxFaceBackend::embed(const cv::Mat& frame) const {
  cv::Mat blob;
  try {
    blob = cv::dnn::blobFromImage(frame, 1.0, frame.size(), mean_bgr_,
                                  /*swapRB=*/false, /*crop=*/false, CV_32F);
    net_.setInput(blob);
    cv::Mat out = net_.forward();
    if (out.total() != static_cast<std::size_t>(dimension_)) {
      raise(ErrorCode::DimensionMismatch,
            "backend '" + id_ + "' produced " + std::to_string(out.total()) +
                " values, expected " + std::to_string(dimension_));
    }
    FeatureVector features(dimension_);
    const float* data = out.ptr<float>();
    for (int j = 0; j < dimension_; ++j) features[j] = data[j];
    return features;
  } catch (const Error&) {
    throw;
  } catch (const cv::Exception& e) {
    raise(ErrorCode::BackendFailure, std::string("ONNX inference failed: ") + e.what());
  }
}

std::shared_ptr<EmbeddingBackend> make_backend(const BackendConfig& config) {
  if (config.backend == "stub-hash") {
    return std::make_shared<StubHashBackend>(config.dimension, config.stub_seed);
  }
  if (config.backend == "vggface-pretrained") {
    return std::make_shared<OnnxFaceBackend>(config.weights_path, config.dimension);
  }
  raise(ErrorCode::ConfigInvalid, "unknown embedder backend '" + config.backend + "'");
}

FeatureSequence embed_sequence(const preprocess::FrameSequence& frames,
                               const EmbeddingBackend& backend) {
  if (frames.frames.empty()) {
    raise(ErrorCode::InvalidArgument, "embed_sequence needs a normalized, non-empty sequence");
  }
  const int timesteps = static_cast<int>(frames.frames.size());
  const int dim = backend.dimension();

  FeatureSequence sequence;
  sequence.source = frames.source;
  sequence.backend_id = backend.id();
  sequence.matrix.resize(timesteps, dim);
  for (int t = 0; t < timesteps; ++t) {
    FeatureVector row = backend.embed(frames.frames[static_cast<std::size_t>(t)]);
    if (row.size() != dim) {
      raise(ErrorCode::DimensionMismatch,
            "backend returned " + std::to_string(row.size()) + " dims, declared " +
                std::to_string(dim));
    }
    sequence.matrix.row(t) = row.transpose();
  }
  return sequence;
}

double cosine_difference(const FeatureVector& a, const FeatureVector& b) {
  if (a.size() != b.size()) {
    raise(ErrorCode::DimensionMismatch,
          "cosine_difference over dims " + std::to_string(a.size()) + " and " +
              std::to_string(b.size()));
  }
  const double norm_a = a.cast<double>().norm();
  const double norm_b = b.cast<double>().norm();
  if (norm_a == 0.0 || norm_b == 0.0) {
    raise(ErrorCode::ZeroVector, "cosine_difference is undefined for an all-zero vector");
  }
  const double dot = a.cast<double>().dot(b.cast<double>());
  return 1.0 - dot / (norm_a * norm_b);
}

VariationTable feature_variation_report(
    const std::map<corpus::UtteranceKey, FeatureSequence>& features,
    const std::vector<corpus::Target>& targets) {
  if (features.empty() || targets.empty()) {
    raise(ErrorCode::InsufficientSamples, "variation report needs features and targets");
  }
  int timesteps = 0;
  for (const auto& [key, seq] : features) {
    timesteps = static_cast<int>(seq.matrix.rows());
    break;
  }

  VariationTable table(static_cast<std::size_t>(timesteps));
  for (int t = 0; t < timesteps; ++t) table[static_cast<std::size_t>(t)].timestep = t;

  std::size_t total_pairs = 0;
  for (const corpus::Target& target : targets) {
    for (const auto& [target_key, target_seq] : features) {
      if (corpus::classify_imposter(target_key, target) != corpus::ImposterKind::Genuine) continue;
      for (const auto& [other_key, other_seq] : features) {
        const auto kind = corpus::classify_imposter(other_key, target);
        if (kind != corpus::ImposterKind::SamePersonDifferentWord &&
            kind != corpus::ImposterKind::DifferentPersonSameWord) {
          continue;
        }
        if (other_seq.matrix.rows() != target_seq.matrix.rows()) {
          raise(ErrorCode::DimensionMismatch, "feature sequences disagree on timesteps");
        }
        ++total_pairs;
        for (int t = 0; t < timesteps; ++t) {
          FeatureVector a = target_seq.matrix.row(t).transpose();
          FeatureVector b = other_seq.matrix.row(t).transpose();
          const double diff = cosine_difference(a, b);
          auto& row = table[static_cast<std::size_t>(t)];
          if (kind == corpus::ImposterKind::SamePersonDifferentWord) {
            row.mean_same_person_different_word += diff;
            ++row.pairs_same_person;
          } else {
            row.mean_different_person_same_word += diff;
            ++row.pairs_different_person;
          }
        }
      }
    }
  }
  if (total_pairs == 0) {
    raise(ErrorCode::InsufficientSamples,
          "no imposter pairs available against the requested targets");
  }
  for (auto& row : table) {
    if (row.pairs_same_person > 0) {
      row.mean_same_person_different_word /= static_cast<double>(row.pairs_same_person);
    }
    if (row.pairs_different_person > 0) {
      row.mean_different_person_same_word /= static_cast<double>(row.pairs_different_person);
    }
  }
  return table;
}

std::string variation_table_csv(const VariationTable& table) {
  std::ostringstream out;
  out << "timestep,mean_same_person_different_word,pairs_same_person,"
         "mean_different_person_same_word,pairs_different_person\n";
  for (const auto& row : table) {
    out << row.timestep << "," << row.mean_same_person_different_word << ","
        << row.pairs_same_person << "," << row.mean_different_person_same_word << ","
        << row.pairs_different_person << "\n";
  }
  return out.str();
}

FeatureCache::FeatureCache(fs::path root, std::string backend_id, std::string preprocess_digest)
    : root_(std::move(root)), backend_id_(std::move(backend_id)),
      digest_(std::move(preprocess_digest)) {}

fs::path FeatureCache::entry_path(const corpus::UtteranceKey& key) const {
  return root_ / backend_id_ / key.speaker_id / key.word_id /
         (std::to_string(key.utterance_idx) + ".bin");
}

bool FeatureCache::digest_valid() const {
  std::ifstream meta(root_ / backend_id_ / "meta.txt");
  if (!meta) return false;
  std::string stored;
  std::getline(meta, stored);
  return stored == digest_;
}

std::optional<FeatureSequence> FeatureCache::load(const corpus::UtteranceKey& key) const {
  if (!digest_valid()) return std::nullopt;
  std::ifstream in(entry_path(key), std::ios::binary);
  if (!in) return std::nullopt;

  auto timesteps = read_u32(in);
  auto dim = read_u32(in);
  if (!timesteps || !dim || *timesteps == 0 || *dim == 0) return std::nullopt;

  FeatureSequence sequence;
  sequence.source = key;
  sequence.backend_id = backend_id_;
  sequence.matrix.resize(static_cast<int>(*timesteps), static_cast<int>(*dim));
  const std::streamsize bytes =
      static_cast<std::streamsize>(sizeof(float)) * *timesteps * *dim;
  if (!in.read(reinterpret_cast<char*>(sequence.matrix.data()), bytes)) return std::nullopt;
  // Trailing junk means a writer raced or the file is stale; treat as a miss.
  char extra;
  if (in.read(&extra, 1)) return std::nullopt;
  return sequence;
}

void FeatureCache::store(const corpus::UtteranceKey& key, const FeatureSequence& features) {
  const fs::path path = entry_path(key);
  fs::create_directories(path.parent_path());

  const fs::path meta_path = root_ / backend_id_ / "meta.txt";
  if (!fs::exists(meta_path)) {
    std::ofstream meta(meta_path);
    meta << digest_ << "\n";
  } else if (!digest_valid()) {
    // Entries under the old digest are stale wholesale.
    fs::remove_all(root_ / backend_id_);
    fs::create_directories(path.parent_path());
    std::ofstream meta(meta_path);
    meta << digest_ << "\n";
  }

  std::random_device rd;
  const fs::path staging = path.parent_path() /
                           (path.filename().string() + ".tmp-" + std::to_string(rd() % 1000000));
  {
    std::ofstream out(staging, std::ios::binary);
    if (!out) raise(ErrorCode::IoFailure, "cannot write feature cache file " + staging.string());
    write_u32(out, static_cast<std::uint32_t>(features.matrix.rows()));
    write_u32(out, static_cast<std::uint32_t>(features.matrix.cols()));
    out.write(reinterpret_cast<const char*>(features.matrix.data()),
              static_cast<std::streamsize>(sizeof(float)) * features.matrix.size());
    if (!out) raise(ErrorCode::IoFailure, "short write on " + staging.string());
  }
  fs::rename(staging, path);
}

}  // namespace authnet::embed

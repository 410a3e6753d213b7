#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/objdetect.hpp>

#include "authnet/corpus.hpp"

namespace authnet::preprocess {

/// Ordered frames of one utterance. Before normalization frames may have any
/// size; afterwards every frame is S x S BGR and the sequence is exactly T
/// long with `pad_count` all-white frames appended at the end.
struct FrameSequence {
  std::vector<cv::Mat> frames;
  corpus::UtteranceKey source;
  int pad_count = 0;
};

struct DetectorConfig {
  std::string kind = "haar";  // haar | contrast
  std::filesystem::path cascade_path;
  double scale_factor = 1.1;
  int min_neighbors = 3;
  int min_size = 24;
};

/// Finds faces in a single frame. Implementations must be deterministic;
/// one instance per worker thread (no shared-state requirement).
class FaceDetector {
 public:
  virtual ~FaceDetector() = default;
  virtual std::vector<cv::Rect> detect_all(const cv::Mat& image) const = 0;

  /// The best face box, or nothing when no face is present. Ties are broken
  /// by larger area, then by smaller x.
  std::optional<cv::Rect> detect(const cv::Mat& image) const;
};

/// Viola-Jones cascade via OpenCV. Needs a trained cascade XML on disk.
class HaarFaceDetector : public FaceDetector {
 public:
  explicit HaarFaceDetector(const DetectorConfig& config);
  std::vector<cv::Rect> detect_all(const cv::Mat& image) const override;

 private:
  mutable cv::CascadeClassifier cascade_;
  DetectorConfig config_;
};

/// Self-contained multi-scale detector scoring Haar-style brightness
/// contrasts (forehead/cheeks bright, eye and mouth bands dark) on an
/// integral image. Needs no external data, so fixtures and offline tests run
/// against it; real photographs belong to the haar detector.
class ContrastFaceDetector : public FaceDetector {
 public:
  explicit ContrastFaceDetector(const DetectorConfig& config);
  std::vector<cv::Rect> detect_all(const cv::Mat& image) const override;

 private:
  DetectorConfig config_;
};

std::unique_ptr<FaceDetector> make_detector(const DetectorConfig& config);

/// Samples a video uniformly at `fps`; yields floor(duration * fps) frames.
FrameSequence decode_video(const std::filesystem::path& source, double fps);

/// Reads the color_* image files of one utterance directory in
/// lexicographic order.
FrameSequence load_image_frames(const std::filesystem::path& directory);

/// Dispatches on the frame-source kind.
FrameSequence load_frames(const corpus::FrameSource& source, double fps);

/// Face-crops each frame, resizes crops to S x S, drops frames without a
/// detectable face, white-pads at the end up to T (or uniformly subsamples
/// down to T) and records pad_count.
FrameSequence normalize_sequence(const FrameSequence& input, int timesteps, int side,
                                 const FaceDetector& detector);

/// On-disk cache of normalized frames under `<root>/<speaker>/<word>/<idx>`,
/// one PNG per frame plus a manifest carrying (T, S, pad_count, digest).
/// Entries written under a different preprocess digest read as misses.
class FrameCache {
 public:
  FrameCache(std::filesystem::path root, std::string preprocess_digest);

  std::optional<FrameSequence> load(const corpus::UtteranceKey& key) const;
  void store(const corpus::UtteranceKey& key, const FrameSequence& frames);

  /// The cached pad count alone, without decoding any frames.
  std::optional<int> pad_count(const corpus::UtteranceKey& key) const;

 private:
  std::filesystem::path entry_dir(const corpus::UtteranceKey& key) const;

  std::filesystem::path root_;
  std::string digest_;
};

}  // namespace authnet::preprocess

#include "authnet/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "authnet/error.hpp"
#include "authnet/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace authnet::preprocess {

namespace {

bool is_image_file(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp";
}

double region_mean(const cv::Mat& integral, const cv::Rect& region) {
  // integral is the (w+1)x(h+1) summed-area table of the grayscale image
  const double total = integral.at<double>(region.y + region.height, region.x + region.width) -
                       integral.at<double>(region.y, region.x + region.width) -
                       integral.at<double>(region.y + region.height, region.x) +
                       integral.at<double>(region.y, region.x);
  return total / (static_cast<double>(region.width) * region.height);
}

cv::Rect band(const cv::Rect& window, double top, double bottom, double left, double right) {
  const int x = window.x + static_cast<int>(std::lround(left * window.width));
  const int x2 = window.x + static_cast<int>(std::lround(right * window.width));
  const int y = window.y + static_cast<int>(std::lround(top * window.height));
  const int y2 = window.y + static_cast<int>(std::lround(bottom * window.height));
  return cv::Rect(x, y, std::max(1, x2 - x), std::max(1, y2 - y));
}

double overlap_ratio(const cv::Rect& a, const cv::Rect& b) {
  const double inter = (a & b).area();
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// Clusters candidate windows by overlap, drops clusters with fewer than
/// min_neighbors members and keeps each surviving cluster's largest window.
std::vector<cv::Rect> group_candidates(const std::vector<cv::Rect>& candidates,
                                       int min_neighbors) {
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    int assigned = -1;
    for (std::size_t c = 0; c < clusters.size() && assigned < 0; ++c) {
      for (std::size_t j : clusters[c]) {
        if (overlap_ratio(candidates[i], candidates[j]) > 0.4) {
          assigned = static_cast<int>(c);
          break;
        }
      }
    }
    if (assigned < 0) {
      clusters.push_back({i});
    } else {
      clusters[static_cast<std::size_t>(assigned)].push_back(i);
    }
  }

  std::vector<cv::Rect> result;
  for (const auto& members : clusters) {
    if (static_cast<int>(members.size()) < std::max(1, min_neighbors)) continue;
    cv::Rect best = candidates[members.front()];
    for (std::size_t j : members) {
      const cv::Rect& r = candidates[j];
      if (r.area() > best.area() || (r.area() == best.area() && r.x < best.x)) best = r;
    }
    result.push_back(best);
  }
  return result;
}

cv::Mat to_gray(const cv::Mat& image) {
  cv::Mat gray;
  if (image.channels() == 3) {
    cv::cvtColor(image, gray, cv::COLOR_BGR2GRAY);
  } else {
    gray = image;
  }
  return gray;
}

}  // namespace

std::optional<cv::Rect> FaceDetector::detect(const cv::Mat& image) const {
  if (image.empty()) {
    raise(ErrorCode::InvalidArgument, "detect called with an empty image");
  }
  std::vector<cv::Rect> boxes = detect_all(image);
  if (boxes.empty()) return std::nullopt;
  cv::Rect best = boxes.front();
  for (const cv::Rect& box : boxes) {
    if (box.area() > best.area() || (box.area() == best.area() && box.x < best.x)) best = box;
  }
  best &= cv::Rect(0, 0, image.cols, image.rows);
  return best;
}

HaarFaceDetector::HaarFaceDetector(const DetectorConfig& config) : config_(config) {
  if (config.cascade_path.empty() || !fs::exists(config.cascade_path)) {
    raise(ErrorCode::ConfigInvalid,
          "haar detector needs preprocess.detector.cascade_path pointing at a cascade XML");
  }
  if (!cascade_.load(config.cascade_path.string())) {
    raise(ErrorCode::ConfigInvalid,
          "failed to load cascade from " + config.cascade_path.string());
  }
}

std::vector<cv::Rect> HaarFaceDetector::detect_all(const cv::Mat& image) const {
  cv::Mat gray = to_gray(image);
  cv::equalizeHist(gray, gray);
  std::vector<cv::Rect> faces;
  cascade_.detectMultiScale(gray, faces, config_.scale_factor, config_.min_neighbors, 0,
                            cv::Size(config_.min_size, config_.min_size));
  return faces;
}

ContrastFaceDetector::ContrastFaceDetector(const DetectorConfig& config) : config_(config) {}

std::vector<cv::Rect> ContrastFaceDetector::detect_all(const cv::Mat& image) const {
  cv::Mat gray = to_gray(image);
  cv::Mat integral;
  cv::integral(gray, integral, CV_64F);

  const int limit = std::min(gray.cols, gray.rows);
  if (limit < config_.min_size) return {};

  // Window sizes climb by scale_factor; the full square is always probed so
  // an already-cropped face maps back onto itself.
  std::vector<int> sizes;
  for (double w = config_.min_size; w < limit; w *= config_.scale_factor) {
    sizes.push_back(static_cast<int>(std::lround(w)));
  }
  if (sizes.empty() || sizes.back() != limit) sizes.push_back(limit);

  constexpr double kMinContrast = 8.0;
  std::vector<cv::Rect> candidates;
  for (int w : sizes) {
    const int step = std::max(1, w / 12);
    for (int y = 0; y + w <= gray.rows; y += step) {
      for (int x = 0; x + w <= gray.cols; x += step) {
        const cv::Rect window(x, y, w, w);
        const double forehead = region_mean(integral, band(window, 0.08, 0.26, 0.25, 0.75));
        const double eyes = region_mean(integral, band(window, 0.30, 0.48, 0.20, 0.80));
        const double cheeks = region_mean(integral, band(window, 0.52, 0.68, 0.22, 0.78));
        const double mouth = region_mean(integral, band(window, 0.70, 0.88, 0.35, 0.65));
        if (forehead - eyes >= kMinContrast && cheeks - eyes >= kMinContrast &&
            cheeks - mouth >= kMinContrast) {
          candidates.push_back(window);
        }
      }
    }
  }
  return group_candidates(candidates, config_.min_neighbors);
}

std::unique_ptr<FaceDetector> make_detector(const DetectorConfig& config) {
  if (config.kind == "haar") return std::make_unique<HaarFaceDetector>(config);
  if (config.kind == "contrast") return std::make_unique<ContrastFaceDetector>(config);
  raise(ErrorCode::ConfigInvalid, "unknown detector kind '" + config.kind + "'");
}

FrameSequence decode_video(const fs::path& source, double fps) {
  if (fps <= 0.0) {
    raise(ErrorCode::InvalidArgument, "fps must be positive");
  }
  cv::VideoCapture capture(source.string());
  if (!capture.isOpened()) {
    raise(ErrorCode::UndecodableVideo, "cannot open video " + source.string());
  }

  std::vector<cv::Mat> native;
  cv::Mat frame;
  while (capture.read(frame)) {
    native.push_back(frame.clone());
  }
  if (native.empty()) {
    raise(ErrorCode::ZeroFrames, "video " + source.string() + " decoded to zero frames");
  }

  double native_fps = capture.get(cv::CAP_PROP_FPS);
  if (!(native_fps > 0.0)) native_fps = 30.0;

  // floor(duration * fps) output frames, sampled at the nearest native frame.
  const double duration = static_cast<double>(native.size()) / native_fps;
  const int count = std::max(1, static_cast<int>(std::floor(duration * fps + 1e-9)));

  FrameSequence sequence;
  sequence.frames.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / fps;
    auto idx = static_cast<std::size_t>(std::lround(t * native_fps));
    idx = std::min(idx, native.size() - 1);
    sequence.frames.push_back(native[idx]);
  }
  return sequence;
}

FrameSequence load_image_frames(const fs::path& directory) {
  if (!fs::is_directory(directory)) {
    raise(ErrorCode::IoFailure, directory.string() + " is not a directory");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("color", 0) == 0 && is_image_file(entry.path())) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    raise(ErrorCode::ZeroFrames, "no color_* frames under " + directory.string());
  }

  FrameSequence sequence;
  for (const fs::path& file : files) {
    cv::Mat image = cv::imread(file.string(), cv::IMREAD_COLOR);
    if (image.empty()) {
      raise(ErrorCode::IoFailure, "cannot decode image " + file.string());
    }
    sequence.frames.push_back(image);
  }
  return sequence;
}

FrameSequence load_frames(const corpus::FrameSource& source, double fps) {
  if (source.kind == corpus::FrameSource::Kind::VideoFile) {
    return decode_video(source.path, fps);
  }
  return load_image_frames(source.path);
}

FrameSequence normalize_sequence(const FrameSequence& input, int timesteps, int side,
                                 const FaceDetector& detector) {
  if (input.frames.empty()) {
    raise(ErrorCode::InvalidArgument, "normalize_sequence needs at least one frame");
  }
  if (timesteps <= 0 || side <= 0) {
    raise(ErrorCode::InvalidArgument, "timesteps and side must be positive");
  }

  // Crop to the detected face; frames without one are dropped before padding.
  std::vector<cv::Mat> crops;
  for (const cv::Mat& frame : input.frames) {
    std::optional<cv::Rect> box = detector.detect(frame);
    if (!box) continue;
    cv::Mat crop = frame(*box);
    cv::Mat resized;
    if (crop.cols == side && crop.rows == side) {
      resized = crop.clone();
    } else {
      cv::resize(crop, resized, cv::Size(side, side), 0.0, 0.0, cv::INTER_AREA);
    }
    crops.push_back(resized);
  }
  if (crops.empty()) {
    raise(ErrorCode::NoFaceInAnyFrame,
          "no face detected in any of the " + std::to_string(input.frames.size()) + " frames");
  }

  FrameSequence output;
  output.source = input.source;

  const auto available = static_cast<int>(crops.size());
  if (available > timesteps) {
    for (int i = 0; i < timesteps; ++i) {
      output.frames.push_back(crops[static_cast<std::size_t>(
          static_cast<long long>(i) * available / timesteps)]);
    }
    output.pad_count = 0;
  } else {
    output.frames = std::move(crops);
    output.pad_count = timesteps - available;
    for (int i = 0; i < output.pad_count; ++i) {
      output.frames.emplace_back(side, side, CV_8UC3, cv::Scalar::all(255));
    }
  }
  return output;
}

FrameCache::FrameCache(fs::path root, std::string preprocess_digest)
    : root_(std::move(root)), digest_(std::move(preprocess_digest)) {}

fs::path FrameCache::entry_dir(const corpus::UtteranceKey& key) const {
  return root_ / key.speaker_id / key.word_id / std::to_string(key.utterance_idx);
}

std::optional<FrameSequence> FrameCache::load(const corpus::UtteranceKey& key) const {
  const fs::path dir = entry_dir(key);
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream manifest_file(manifest_path);
  if (!manifest_file) return std::nullopt;

  nlohmann::json manifest;
  try {
    manifest_file >> manifest;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (manifest.value("digest", "") != digest_) return std::nullopt;

  const int count = manifest.value("T", 0);
  const int side = manifest.value("S", 0);
  FrameSequence sequence;
  sequence.source = key;
  sequence.pad_count = manifest.value("pad_count", 0);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03d.png", i);
    cv::Mat frame = cv::imread((dir / name).string(), cv::IMREAD_COLOR);
    if (frame.empty() || frame.cols != side || frame.rows != side) return std::nullopt;
    sequence.frames.push_back(frame);
  }
  if (sequence.frames.empty()) return std::nullopt;
  return sequence;
}

std::optional<int> FrameCache::pad_count(const corpus::UtteranceKey& key) const {
  std::ifstream manifest_file(entry_dir(key) / "manifest.json");
  if (!manifest_file) return std::nullopt;
  nlohmann::json manifest;
  try {
    manifest_file >> manifest;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (manifest.value("digest", "") != digest_) return std::nullopt;
  return manifest.value("pad_count", 0);
}

void FrameCache::store(const corpus::UtteranceKey& key, const FrameSequence& frames) {
  const fs::path dir = entry_dir(key);
  std::random_device rd;
  const fs::path staging = dir.parent_path() / (dir.filename().string() + ".tmp-" +
                                                std::to_string(rd() % 1000000));
  fs::create_directories(staging);
  for (std::size_t i = 0; i < frames.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03zu.png", i);
    if (!cv::imwrite((staging / name).string(), frames.frames[i])) {
      raise(ErrorCode::IoFailure, "cannot write cached frame under " + staging.string());
    }
  }
  nlohmann::json manifest = {
      {"T", static_cast<int>(frames.frames.size())},
      {"S", frames.frames.empty() ? 0 : frames.frames.front().cols},
      {"pad_count", frames.pad_count},
      {"digest", digest_},
  };
  std::ofstream manifest_file(staging / "manifest.json");
  manifest_file << manifest.dump(2) << "\n";
  manifest_file.close();

  // Concurrent workers may race on one utterance; whoever renames first wins
  // and the loser's staging directory is discarded.
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::rename(staging, dir, ec);
  if (ec) {
    fs::remove_all(staging, ec);
  }
}

}  // namespace authnet::preprocess

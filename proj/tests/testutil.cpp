#include "testutil.hpp"

#include <random>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "authnet/rng.hpp"

namespace fs = std::filesystem;

namespace authnet::testutil {

TempDir::TempDir(const std::string& tag) {
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          ("authnet-" + tag + "-" + std::to_string(rd()) + std::to_string(rd() % 1000));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

namespace {

std::string padded_id(const char* prefix, int i) {
  char buffer[16];
  std::snprintf(buffer, sizeof(buffer), "%s%02d", prefix, i + 1);
  return buffer;
}

}  // namespace

corpus::CorpusIndex synthetic_index(int n_speakers, int n_words, int n_utterances) {
  corpus::CorpusIndex index;
  index.root = "/synthetic";
  index.layout = corpus::CorpusLayout::MiraclVc1;
  index.utterances_per_word = n_utterances;
  for (int s = 0; s < n_speakers; ++s) index.speakers.push_back(padded_id("s", s));
  for (int w = 0; w < n_words; ++w) index.words.push_back(padded_id("w", w));
  for (const auto& speaker : index.speakers) {
    for (const auto& word : index.words) {
      for (int u = 0; u < n_utterances; ++u) {
        corpus::UtteranceKey key{speaker, word, u};
        index.entries[key] = corpus::FrameSource{
            corpus::FrameSource::Kind::ImageDirectory,
            index.root / speaker / "words" / word / std::to_string(u + 1)};
      }
    }
  }
  return index;
}

preprocess::DetectorConfig contrast_detector() {
  preprocess::DetectorConfig config;
  config.kind = "contrast";
  config.scale_factor = 1.1;
  config.min_neighbors = 3;
  config.min_size = 24;
  return config;
}

void draw_face(cv::Mat& canvas, const cv::Rect& box, int brightness) {
  const auto w = static_cast<double>(box.width);
  const auto h = static_cast<double>(box.height);
  const cv::Point center(box.x + static_cast<int>(0.5 * w), box.y + static_cast<int>(0.5 * h));
  const cv::Scalar skin(brightness - 10, brightness, brightness + 10);
  cv::ellipse(canvas, center, cv::Size(static_cast<int>(0.46 * w), static_cast<int>(0.50 * h)),
              0.0, 0.0, 360.0, skin, -1, cv::LINE_8);

  const cv::Scalar eye(30, 30, 30);
  const int eye_radius = std::max(1, static_cast<int>(0.08 * w));
  cv::circle(canvas,
             {box.x + static_cast<int>(0.32 * w), box.y + static_cast<int>(0.39 * h)},
             eye_radius, eye, -1, cv::LINE_8);
  cv::circle(canvas,
             {box.x + static_cast<int>(0.68 * w), box.y + static_cast<int>(0.39 * h)},
             eye_radius, eye, -1, cv::LINE_8);

  const cv::Scalar mouth(40, 40, 40);
  cv::ellipse(canvas, {box.x + static_cast<int>(0.5 * w), box.y + static_cast<int>(0.79 * h)},
              cv::Size(std::max(1, static_cast<int>(0.17 * w)),
                       std::max(1, static_cast<int>(0.07 * h))),
              0.0, 0.0, 360.0, mouth, -1, cv::LINE_8);
}

cv::Mat face_image(int width, int height, const cv::Rect& face_box, int brightness,
                   int background) {
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar::all(background));
  draw_face(canvas, face_box, brightness);
  return canvas;
}

cv::Mat fixture_frame(const corpus::UtteranceKey& key, int t, int size) {
  rng::SplitMix64 stream(rng::mix(rng::hash64(corpus::to_string(key)), 977));
  const int face = size / 2 + static_cast<int>(stream.below(static_cast<std::uint64_t>(size) / 4));
  const int max_offset = std::max(1, size - face - 2);
  const int x = 1 + static_cast<int>(stream.below(static_cast<std::uint64_t>(max_offset)));
  const int y = 1 + static_cast<int>(stream.below(static_cast<std::uint64_t>(max_offset)));
  const int tone = 180 + static_cast<int>(stream.below(40));

  cv::Mat canvas = face_image(size, size, cv::Rect(x, y, face, face), tone);
  // A small time-varying mark below the mouth stands in for articulation.
  const int shift = (t * 3) % std::max(1, face / 4);
  cv::circle(canvas,
             {x + face / 3 + shift, y + static_cast<int>(0.93 * face)},
             std::max(1, face / 30), cv::Scalar(90, 90, 90), -1, cv::LINE_8);
  return canvas;
}

void write_fixture_corpus(const fs::path& root, int n_speakers, int n_words, int n_utterances,
                          int frames_per_utterance, int image_size) {
  for (int s = 0; s < n_speakers; ++s) {
    const std::string speaker = padded_id("s", s);
    for (int w = 0; w < n_words; ++w) {
      const std::string word = padded_id("w", w);
      for (int u = 0; u < n_utterances; ++u) {
        const fs::path dir = root / speaker / "words" / word / padded_id("", u);
        fs::create_directories(dir);
        corpus::UtteranceKey key{speaker, word, u};
        for (int t = 0; t < frames_per_utterance; ++t) {
          char name[32];
          std::snprintf(name, sizeof(name), "color_%03d.png", t);
          cv::imwrite((dir / name).string(), fixture_frame(key, t, image_size));
        }
      }
    }
  }
}

embed::FeatureSequence separable_sequence(int timesteps, int dim, int label, int sample_idx,
                                          std::uint64_t seed) {
  rng::SplitMix64 stream(rng::mix(seed, static_cast<std::uint64_t>(sample_idx) * 2 + label));
  embed::FeatureSequence sequence;
  sequence.backend_id = "separable-fixture";
  sequence.source = corpus::UtteranceKey{label ? "pos" : "neg", "fixture", sample_idx};
  sequence.matrix.resize(timesteps, dim);
  const int marker_dims = std::min(dim, 8);
  for (int t = 0; t < timesteps; ++t) {
    for (int d = 0; d < dim; ++d) {
      double value = 0.2 * (2.0 * stream.unit() - 1.0);
      if (d < marker_dims) value += label ? 1.0 : -1.0;
      sequence.matrix(t, d) = static_cast<float>(value);
    }
  }
  return sequence;
}

}  // namespace authnet::testutil

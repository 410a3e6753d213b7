#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "authnet/corpus.hpp"
#include "authnet/embedder.hpp"
#include "authnet/preprocess.hpp"

namespace authnet::testutil {

/// Unique temp directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// In-memory corpus index of n_speakers x n_words x n_utterances with ids
/// s01..., w01.... Entry paths are placeholders; only split logic uses them.
corpus::CorpusIndex synthetic_index(int n_speakers, int n_words, int n_utterances);

/// Detector config for the data-free contrast detector.
preprocess::DetectorConfig contrast_detector();

/// Draws the synthetic face pattern the contrast detector responds to:
/// a bright oval with dark eye dots and a dark mouth, in the given box.
/// `brightness` shifts the skin tone so frames remain distinguishable.
void draw_face(cv::Mat& canvas, const cv::Rect& box, int brightness = 200);

/// Gray canvas with one synthetic face.
cv::Mat face_image(int width, int height, const cv::Rect& face_box, int brightness = 200,
                   int background = 110);

/// A deterministic face frame for (speaker, word, utterance, t): pose and
/// skin tone vary with the key so embeddings differ across utterances.
cv::Mat fixture_frame(const corpus::UtteranceKey& key, int t, int size = 64);

/// Writes a miracl-vc1 layout corpus of synthetic face frames.
void write_fixture_corpus(const std::filesystem::path& root, int n_speakers, int n_words,
                          int n_utterances, int frames_per_utterance, int image_size = 64);

/// Feature sequences that are linearly separable by construction: class 1
/// rides a positive offset on the first feature dimensions.
embed::FeatureSequence separable_sequence(int timesteps, int dim, int label, int sample_idx,
                                          std::uint64_t seed);

}  // namespace authnet::testutil

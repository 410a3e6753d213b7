#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/videoio.hpp>

#include "authnet/error.hpp"
#include "authnet/preprocess.hpp"
#include "authnet/rng.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace authnet;
using preprocess::FrameSequence;

namespace {

double iou(const cv::Rect& a, const cv::Rect& b) {
  const double inter = (a & b).area();
  return inter / (a.area() + b.area() - inter);
}

void write_mjpg(const std::filesystem::path& path, int frame_count, double fps, int size = 96) {
  cv::VideoWriter writer(path.string(), cv::VideoWriter::fourcc('M', 'J', 'P', 'G'), fps,
                         cv::Size(size, size));
  REQUIRE(writer.isOpened());
  for (int i = 0; i < frame_count; ++i) {
    cv::Mat frame = testutil::face_image(size, size, cv::Rect(16, 16, 64, 64), 180 + i % 40);
    writer.write(frame);
  }
}

bool frames_equal(const cv::Mat& a, const cv::Mat& b) {
  if (a.size() != b.size() || a.type() != b.type()) return false;
  return cv::norm(a, b, cv::NORM_INF) == 0.0;
}

}  // namespace

TEST_CASE("contrast detector finds annotated synthetic faces") {
  auto detector = preprocess::make_detector(testutil::contrast_detector());

  // Five fixture images with known face boxes; the detected box must overlap
  // each annotation by at least half.
  const std::vector<cv::Rect> annotations = {
      {20, 20, 60, 60}, {5, 40, 80, 80}, {60, 10, 50, 50}, {30, 60, 56, 56}, {10, 10, 100, 100},
  };
  for (const cv::Rect& truth : annotations) {
    cv::Mat image = testutil::face_image(144, 144, truth);
    auto box = detector->detect(image);
    REQUIRE(box.has_value());
    CHECK(iou(*box, truth) >= 0.5);
    CHECK(cv::Rect(0, 0, image.cols, image.rows).contains(box->tl()));
    CHECK((box->x + box->width) <= image.cols);
    CHECK((box->y + box->height) <= image.rows);
  }
}

TEST_CASE("detector returns nothing on a uniform black image") {
  auto detector = preprocess::make_detector(testutil::contrast_detector());
  cv::Mat black(128, 128, CV_8UC3, cv::Scalar::all(0));
  CHECK_FALSE(detector->detect(black).has_value());
}

TEST_CASE("two faces resolve to the larger one") {
  auto detector = preprocess::make_detector(testutil::contrast_detector());
  cv::Mat image(160, 320, CV_8UC3, cv::Scalar::all(110));
  const cv::Rect small_face(10, 40, 48, 48);
  const cv::Rect big_face(180, 20, 110, 110);
  testutil::draw_face(image, small_face);
  testutil::draw_face(image, big_face);

  auto box = detector->detect(image);
  REQUIRE(box.has_value());
  CHECK(iou(*box, big_face) >= 0.5);
  CHECK(iou(*box, small_face) < 0.2);
}

TEST_CASE("detect on an empty image is a precondition violation") {
  auto detector = preprocess::make_detector(testutil::contrast_detector());
  CHECK_THROWS_AS(detector->detect(cv::Mat()), Error);
}

TEST_CASE("haar detector construction fails without a cascade file") {
  preprocess::DetectorConfig config;
  config.kind = "haar";
  config.cascade_path = "/definitely/not/here.xml";
  try {
    preprocess::make_detector(config);
    FAIL("expected ConfigInvalid");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigInvalid);
  }
}

TEST_CASE("decode_video samples at the requested rate") {
  testutil::TempDir dir("video");

  SUBCASE("2 seconds at fps 10 gives 20 frames") {
    const auto path = dir.path() / "two_seconds.avi";
    write_mjpg(path, 60, 30.0);  // 60 native frames at 30 fps
    auto frames = preprocess::decode_video(path, 10.0);
    CHECK(frames.frames.size() == 20);
  }
  SUBCASE("1 second at fps 7 gives 7 frames") {
    const auto path = dir.path() / "one_second.avi";
    write_mjpg(path, 10, 10.0);
    auto frames = preprocess::decode_video(path, 7.0);
    CHECK(frames.frames.size() == 7);
  }
  SUBCASE("fps must be positive") {
    const auto path = dir.path() / "any.avi";
    write_mjpg(path, 10, 10.0);
    CHECK_THROWS_AS(preprocess::decode_video(path, 0.0), Error);
  }
  SUBCASE("garbage bytes are not decodable") {
    const auto path = dir.path() / "garbage.avi";
    std::ofstream(path) << "this is not a video";
    try {
      preprocess::decode_video(path, 10.0);
      FAIL("expected UndecodableVideo");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UndecodableVideo);
    }
  }
}

TEST_CASE("normalize pads short sequences with white frames at the end") {
  auto detector = preprocess::make_detector(testutil::contrast_detector());
  FrameSequence input;
  for (int i = 0; i < 13; ++i) {
    input.frames.push_back(testutil::face_image(96, 96, cv::Rect(12, 12, 64, 64)));
  }

  auto output = preprocess::normalize_sequence(input, 20, 48, *detector);
  CHECK(output.frames.size() == 20);
  CHECK(output.pad_count == 7);
  for (int t = 13; t < 20; ++t) {
    const cv::Mat& frame = output.frames[static_cast<std::size_t>(t)];
    CHECK(frame.cols == 48);
    CHECK(frame.rows == 48);
    // White padding is the maximum channel value in every pixel.
    CHECK(cv::countNonZero(frame.reshape(1) != 255) == 0);
  }
}

TEST_CASE("normalize keeps an exact-length sequence in order") {
  auto detector = preprocess::make_detector(testutil::contrast_detector());
  FrameSequence input;
  for (int i = 0; i < 20; ++i) {
    input.frames.push_back(testutil::face_image(96, 96, cv::Rect(12, 12, 64, 64), 170 + 4 * i));
  }
  auto output = preprocess::normalize_sequence(input, 20, 48, *detector);
  CHECK(output.frames.size() == 20);
  CHECK(output.pad_count == 0);

  // Brightness encodes the source position; it must increase monotonically.
  double previous = -1.0;
  for (const auto& frame : output.frames) {
    const double level = cv::mean(frame)[0];
    CHECK(level > previous);
    previous = level;
  }
}

TEST_CASE("normalize subsamples over-length sequences uniformly") {
  auto detector = preprocess::make_detector(testutil::contrast_detector());
  const int available = 25;
  const int timesteps = 20;
  FrameSequence input;
  for (int i = 0; i < available; ++i) {
    input.frames.push_back(testutil::face_image(96, 96, cv::Rect(12, 12, 64, 64), 150 + 4 * i));
  }
  auto output = preprocess::normalize_sequence(input, timesteps, 48, *detector);
  CHECK(output.frames.size() == 20);
  CHECK(output.pad_count == 0);

  // Each output frame must match the source frame at floor(i * 25 / 20),
  // identified through its brightness signature.
  for (int i = 0; i < timesteps; ++i) {
    const int expected_source = i * available / timesteps;
    const double level = cv::mean(output.frames[static_cast<std::size_t>(i)])[0];
    int closest = -1;
    double best = 1e9;
    for (int s = 0; s < available; ++s) {
      const double source_level = cv::mean(testutil::face_image(
          96, 96, cv::Rect(12, 12, 64, 64), 150 + 4 * s))[0];
      if (std::abs(source_level - level) < best) {
        best = std::abs(source_level - level);
        closest = s;
      }
    }
    CHECK(closest == expected_source);
  }
}

TEST_CASE("frames without a detectable face drop out before padding") {
  auto detector = preprocess::make_detector(testutil::contrast_detector());
  FrameSequence input;
  input.frames.push_back(testutil::face_image(96, 96, cv::Rect(12, 12, 64, 64), 170));
  input.frames.emplace_back(96, 96, CV_8UC3, cv::Scalar::all(0));  // no face
  input.frames.push_back(testutil::face_image(96, 96, cv::Rect(12, 12, 64, 64), 220));

  auto output = preprocess::normalize_sequence(input, 4, 48, *detector);
  CHECK(output.frames.size() == 4);
  CHECK(output.pad_count == 2);
  CHECK(cv::mean(output.frames[0])[0] < cv::mean(output.frames[1])[0]);
}

TEST_CASE("all-blank input raises NoFaceInAnyFrame") {
  auto detector = preprocess::make_detector(testutil::contrast_detector());
  FrameSequence input;
  for (int i = 0; i < 5; ++i) input.frames.emplace_back(64, 64, CV_8UC3, cv::Scalar::all(0));
  try {
    preprocess::normalize_sequence(input, 20, 48, *detector);
    FAIL("expected NoFaceInAnyFrame");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoFaceInAnyFrame);
  }
}

TEST_CASE("shape invariant holds across input lengths") {
  auto detector = preprocess::make_detector(testutil::contrast_detector());
  rng::SplitMix64 gen(3);
  for (int trial = 0; trial < 6; ++trial) {
    const int count = 1 + static_cast<int>(gen.below(30));
    FrameSequence input;
    for (int i = 0; i < count; ++i) {
      input.frames.push_back(testutil::face_image(96, 96, cv::Rect(12, 12, 64, 64)));
    }
    auto output = preprocess::normalize_sequence(input, 20, 32, *detector);
    CHECK(output.frames.size() == 20);
    for (const auto& frame : output.frames) {
      CHECK(frame.cols == 32);
      CHECK(frame.rows == 32);
      CHECK(frame.type() == CV_8UC3);
    }
    CHECK(output.pad_count == std::max(0, 20 - count));
  }
}

TEST_CASE("normalize is idempotent on an already-normalized sequence") {
  auto detector = preprocess::make_detector(testutil::contrast_detector());
  FrameSequence input;
  for (int i = 0; i < 9; ++i) {
    input.frames.push_back(testutil::face_image(120, 120, cv::Rect(20, 16, 80, 80), 180 + 4 * i));
  }
  auto once = preprocess::normalize_sequence(input, 12, 56, *detector);
  auto twice = preprocess::normalize_sequence(once, 12, 56, *detector);

  CHECK(twice.pad_count == once.pad_count);
  REQUIRE(twice.frames.size() == once.frames.size());
  for (std::size_t i = 0; i < once.frames.size(); ++i) {
    CHECK(frames_equal(once.frames[i], twice.frames[i]));
  }
}

TEST_CASE("frame cache round-trips and honors the digest") {
  testutil::TempDir dir("frame-cache");
  auto detector = preprocess::make_detector(testutil::contrast_detector());

  FrameSequence input;
  input.source = corpus::UtteranceKey{"s01", "w01", 0};
  for (int i = 0; i < 6; ++i) {
    input.frames.push_back(testutil::face_image(96, 96, cv::Rect(12, 12, 64, 64), 175 + 6 * i));
  }
  auto normalized = preprocess::normalize_sequence(input, 8, 40, *detector);
  normalized.source = input.source;

  preprocess::FrameCache cache(dir.path(), "digest-a");
  CHECK_FALSE(cache.load(input.source).has_value());
  cache.store(input.source, normalized);

  auto loaded = cache.load(input.source);
  REQUIRE(loaded.has_value());
  CHECK(loaded->pad_count == normalized.pad_count);
  REQUIRE(loaded->frames.size() == normalized.frames.size());
  for (std::size_t i = 0; i < normalized.frames.size(); ++i) {
    CHECK(frames_equal(loaded->frames[i], normalized.frames[i]));
  }
  CHECK(cache.pad_count(input.source) == normalized.pad_count);

  // A different preprocess digest invalidates the entry.
  preprocess::FrameCache stale(dir.path(), "digest-b");
  CHECK_FALSE(stale.load(input.source).has_value());
  CHECK_FALSE(stale.pad_count(input.source).has_value());
}

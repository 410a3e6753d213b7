#include <cmath>
#include <fstream>

#include "authnet/embedder.hpp"
#include "authnet/error.hpp"
#include "authnet/rng.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace authnet;
using embed::FeatureVector;

namespace {

// Independent implementation of the stub's documented hash-projection
// formula: plain pixel loops, no shared code with the backend.
FeatureVector stub_oracle(const cv::Mat& frame, int dimension, std::uint64_t seed) {
  constexpr int grid = embed::StubHashBackend::kGrid;
  constexpr int blocks = grid * grid * 3;
  double means[blocks];
  for (int by = 0; by < grid; ++by) {
    for (int bx = 0; bx < grid; ++bx) {
      const int y0 = by * frame.rows / grid, y1 = (by + 1) * frame.rows / grid;
      const int x0 = bx * frame.cols / grid, x1 = (bx + 1) * frame.cols / grid;
      double sum[3] = {0, 0, 0};
      long long n = 0;
      for (int y = y0; y < std::max(y1, y0 + 1) && y < frame.rows; ++y) {
        for (int x = x0; x < std::max(x1, x0 + 1) && x < frame.cols; ++x) {
          const auto& px = frame.at<cv::Vec3b>(y, x);
          sum[0] += px[0];
          sum[1] += px[1];
          sum[2] += px[2];
          ++n;
        }
      }
      for (int c = 0; c < 3; ++c) {
        means[(by * grid + bx) * 3 + c] = n > 0 ? sum[c] / (255.0 * n) : 0.0;
      }
    }
  }
  FeatureVector out(dimension);
  const double scale = 1.0 / std::sqrt(static_cast<double>(blocks));
  for (int j = 0; j < dimension; ++j) {
    double acc = 0.0;
    for (int k = 0; k < blocks; ++k) {
      rng::SplitMix64 stream(rng::mix(seed, static_cast<std::uint64_t>(j) * blocks + k));
      acc += (2.0 * stream.unit() - 1.0) * means[k];
    }
    out[j] = static_cast<float>(acc * scale);
  }
  return out;
}

preprocess::FrameSequence normalized_fixture(int frames, int size = 48) {
  preprocess::FrameSequence sequence;
  sequence.source = corpus::UtteranceKey{"s01", "w01", 0};
  for (int t = 0; t < frames; ++t) {
    sequence.frames.push_back(
        testutil::face_image(size, size, cv::Rect(4, 4, size - 8, size - 8), 170 + 3 * t));
  }
  return sequence;
}

}  // namespace

TEST_CASE("stub backend yields the declared 20 x 2622 shape") {
  embed::StubHashBackend backend(2622, 17);
  auto frames = normalized_fixture(20);
  auto features = embed::embed_sequence(frames, backend);
  CHECK(features.matrix.rows() == 20);
  CHECK(features.matrix.cols() == 2622);
  CHECK(features.backend_id == "stub-hash");
  for (Eigen::Index i = 0; i < features.matrix.size(); ++i) {
    CHECK(std::isfinite(features.matrix.data()[i]));
  }
}

TEST_CASE("identical frames embed to identical rows") {
  embed::StubHashBackend backend(64, 17);
  preprocess::FrameSequence frames;
  const cv::Mat frame = testutil::face_image(48, 48, cv::Rect(6, 6, 36, 36));
  for (int t = 0; t < 20; ++t) frames.frames.push_back(frame.clone());
  auto features = embed::embed_sequence(frames, backend);
  for (int t = 1; t < 20; ++t) {
    CHECK(features.matrix.row(t) == features.matrix.row(0));
  }
}

TEST_CASE("stub embedding matches the documented formula") {
  const int dim = 33;
  const std::uint64_t seed = 99;
  embed::StubHashBackend backend(dim, seed);
  auto frames = normalized_fixture(4, 40);

  auto features = embed::embed_sequence(frames, backend);
  for (int t = 0; t < 4; ++t) {
    FeatureVector expected = stub_oracle(frames.frames[static_cast<std::size_t>(t)], dim, seed);
    for (int d = 0; d < dim; ++d) {
      CHECK(features.matrix(t, d) == doctest::Approx(expected[d]).epsilon(1e-6));
    }
  }
}

TEST_CASE("stub embedding golden values stay frozen") {
  // Computed once from the formula above on the 40x40 fixture frame (t = 0,
  // brightness 170) with dim 33, seed 99. Guards the formula against drift.
  embed::StubHashBackend backend(33, 99);
  auto frames = normalized_fixture(1, 40);
  auto features = embed::embed_sequence(frames, backend);
  CHECK(features.matrix(0, 0) == doctest::Approx(AUTHNET_GOLDEN_0).epsilon(1e-6));
  CHECK(features.matrix(0, 1) == doctest::Approx(AUTHNET_GOLDEN_1).epsilon(1e-6));
  CHECK(features.matrix(0, 32) == doctest::Approx(AUTHNET_GOLDEN_32).epsilon(1e-6));
}

TEST_CASE("cosine difference matches hand values") {
  FeatureVector a(3), b(3);

  a << 1, 2, 2;
  b << 2, 1, 2;
  CHECK(embed::cosine_difference(a, b) == doctest::Approx(1.0 - 8.0 / 9.0).epsilon(1e-12));

  b = a;
  CHECK(embed::cosine_difference(a, b) == doctest::Approx(0.0));

  a << 1, 0, 0;
  b << 0, 1, 0;
  CHECK(embed::cosine_difference(a, b) == doctest::Approx(1.0));
}

TEST_CASE("cosine difference properties: symmetry, scale invariance, range") {
  rng::SplitMix64 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    FeatureVector a(16), b(16);
    for (int i = 0; i < 16; ++i) {
      a[i] = static_cast<float>(2.0 * gen.unit() - 1.0);
      b[i] = static_cast<float>(2.0 * gen.unit() - 1.0);
    }
    if (a.norm() == 0 || b.norm() == 0) continue;
    const double ab = embed::cosine_difference(a, b);
    CHECK(ab == doctest::Approx(embed::cosine_difference(b, a)));
    CHECK(ab >= 0.0);
    CHECK(ab <= 2.0 + 1e-12);
    const float c = static_cast<float>(0.5 + 3.0 * gen.unit());
    CHECK(embed::cosine_difference(a, (c * a).eval()) == doctest::Approx(0.0).epsilon(1e-5));
  }
}

TEST_CASE("cosine difference error paths") {
  FeatureVector a(3), b(4), zero(3);
  a << 1, 2, 3;
  b << 1, 2, 3, 4;
  zero.setZero();
  try {
    embed::cosine_difference(a, b);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
  try {
    embed::cosine_difference(a, zero);
    FAIL("expected ZeroVector");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroVector);
  }
}

TEST_CASE("feature cache round-trips byte-identically") {
  testutil::TempDir dir("feature-cache");
  embed::StubHashBackend backend(48, 17);
  auto frames = normalized_fixture(5);
  auto features = embed::embed_sequence(frames, backend);

  embed::FeatureCache cache(dir.path(), backend.id(), "pre-digest");
  CHECK_FALSE(cache.load(frames.source).has_value());
  cache.store(frames.source, features);

  auto loaded = cache.load(frames.source);
  REQUIRE(loaded.has_value());
  CHECK(loaded->matrix.rows() == features.matrix.rows());
  CHECK(loaded->matrix.cols() == features.matrix.cols());
  CHECK(std::memcmp(loaded->matrix.data(), features.matrix.data(),
                    sizeof(float) * features.matrix.size()) == 0);

  // The binary layout is pinned: 8-byte header of T then D, little endian.
  std::ifstream raw(cache.entry_path(frames.source), std::ios::binary);
  unsigned char header[8];
  raw.read(reinterpret_cast<char*>(header), 8);
  CHECK((header[0] | (header[1] << 8)) == 5);
  CHECK((header[4] | (header[5] << 8)) == 48);

  // Stale digest and truncated files read as misses.
  embed::FeatureCache stale(dir.path(), backend.id(), "other-digest");
  CHECK_FALSE(stale.load(frames.source).has_value());

  std::filesystem::resize_file(cache.entry_path(frames.source), 32);
  CHECK_FALSE(cache.load(frames.source).has_value());
}

TEST_CASE("embedding is byte-identical through the cache") {
  testutil::TempDir dir("feature-cache-identity");
  embed::StubHashBackend backend(32, 17);
  auto frames = normalized_fixture(6);

  embed::FeatureCache cache(dir.path(), backend.id(), "digest");
  auto fresh = embed::embed_sequence(frames, backend);
  cache.store(frames.source, fresh);
  auto cached = cache.load(frames.source);
  REQUIRE(cached.has_value());
  CHECK(std::memcmp(cached->matrix.data(), fresh.matrix.data(),
                    sizeof(float) * fresh.matrix.size()) == 0);
}

TEST_CASE("onnx backend embeds through the fixture network") {
  const std::filesystem::path fixture =
      std::filesystem::path(AUTHNET_FIXTURE_DIR) / "tiny_face_net.onnx";
  REQUIRE(std::filesystem::exists(fixture));

  embed::OnnxFaceBackend backend(fixture, 8, cv::Scalar(0, 0, 0), "tiny-face-net");
  CHECK(backend.dimension() == 8);

  cv::Mat frame(16, 16, CV_8UC3, cv::Scalar(64, 128, 192));
  FeatureVector out = backend.embed(frame);
  REQUIRE(out.size() == 8);

  // Oracle: the fixture's weights follow a documented mixing formula; rebuild
  // the two Gemm layers directly.
  auto weight = [](std::uint64_t layer, std::uint64_t i, std::uint64_t j) {
    std::uint64_t h = (layer * 2654435761ull + i * 40503ull + j * 97ull) & 0xFFFFFFFFull;
    // layer index packs as (matrix, row, col) in the generator script
    h = (i * 2654435761ull + j * 40503ull + layer * 97ull) & 0xFFFFFFFFull;
    return h;
  };
  (void)weight;

  // Flatten order is channel-major (NCHW): 768 inputs of value c/255.
  std::vector<double> input(768);
  const double values[3] = {64 / 255.0, 128 / 255.0, 192 / 255.0};
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 256; ++i) input[static_cast<std::size_t>(c) * 256 + i] = values[c];
  }
  auto mix_weight = [](std::uint64_t m, std::uint64_t i, std::uint64_t j) {
    std::uint64_t h = (m * 2654435761ull + i * 40503ull + j * 97ull) & 0xFFFFFFFFull;
    h ^= h >> 13;
    h = (h * 0x5BD1E995ull) & 0xFFFFFFFFull;
    h ^= h >> 15;
    return static_cast<double>(h) / 4294967296.0 - 0.5;
  };
  std::vector<double> hidden(12);
  for (int i = 0; i < 12; ++i) {
    double acc = mix_weight(1, static_cast<std::uint64_t>(i), 0);
    for (int j = 0; j < 768; ++j) {
      acc += mix_weight(0, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)) *
             input[static_cast<std::size_t>(j)];
    }
    hidden[static_cast<std::size_t>(i)] = std::max(0.0, acc);
  }
  for (int i = 0; i < 8; ++i) {
    double acc = mix_weight(3, static_cast<std::uint64_t>(i), 0);
    for (int j = 0; j < 12; ++j) {
      acc += mix_weight(2, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)) *
             hidden[static_cast<std::size_t>(j)];
    }
    CHECK(out[i] == doctest::Approx(acc).epsilon(1e-4));
  }
}

TEST_CASE("onnx backend error paths") {
  try {
    embed::OnnxFaceBackend backend("/missing/weights.onnx", 2622);
    FAIL("expected BackendFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BackendFailure);
  }

  const std::filesystem::path fixture =
      std::filesystem::path(AUTHNET_FIXTURE_DIR) / "tiny_face_net.onnx";
  embed::OnnxFaceBackend backend(fixture, 2622, cv::Scalar(0, 0, 0), "tiny-face-net");
  cv::Mat frame(16, 16, CV_8UC3, cv::Scalar::all(10));
  try {
    backend.embed(frame);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("variation report: identical sequences give zero differences") {
  std::map<corpus::UtteranceKey, embed::FeatureSequence> features;
  embed::FeatureSequence base;
  base.matrix = embed::FeatureMatrix::Ones(4, 6);
  for (const char* speaker : {"s01", "s02"}) {
    for (const char* word : {"w01", "w02"}) {
      embed::FeatureSequence seq = base;
      seq.source = corpus::UtteranceKey{speaker, word, 0};
      features[seq.source] = seq;
    }
  }
  auto table = embed::feature_variation_report(features, {corpus::Target{"s01", "w01"}});
  REQUIRE(table.size() == 4);
  for (const auto& row : table) {
    CHECK(row.mean_same_person_different_word == doctest::Approx(0.0));
    CHECK(row.mean_different_person_same_word == doctest::Approx(0.0));
    CHECK(row.pairs_same_person == 1);
    CHECK(row.pairs_different_person == 1);
  }
}

TEST_CASE("variation report on the stub fixture shows positive differences") {
  embed::StubHashBackend backend(64, 17);
  std::map<corpus::UtteranceKey, embed::FeatureSequence> features;
  for (const char* speaker : {"s01", "s02", "s03"}) {
    for (const char* word : {"w01", "w02"}) {
      corpus::UtteranceKey key{speaker, word, 0};
      preprocess::FrameSequence frames;
      frames.source = key;
      for (int t = 0; t < 5; ++t) frames.frames.push_back(testutil::fixture_frame(key, t, 48));
      features[key] = embed::embed_sequence(frames, backend);
    }
  }

  auto table = embed::feature_variation_report(features, {corpus::Target{"s01", "w01"}});
  // Brute-force check of one cell against direct pairwise cosine.
  double expected = 0.0;
  std::size_t pairs = 0;
  const auto& target_seq = features.at({"s01", "w01", 0});
  for (const char* speaker : {"s02", "s03"}) {
    const auto& other = features.at({speaker, "w01", 0});
    FeatureVector a = target_seq.matrix.row(0).transpose();
    FeatureVector b = other.matrix.row(0).transpose();
    expected += embed::cosine_difference(a, b);
    ++pairs;
  }
  expected /= static_cast<double>(pairs);
  CHECK(table[0].mean_different_person_same_word == doctest::Approx(expected).epsilon(1e-9));
  CHECK(table[0].pairs_different_person == 2);

  bool any_positive = false;
  for (const auto& row : table) {
    if (row.mean_different_person_same_word > 0.0) any_positive = true;
  }
  CHECK(any_positive);
}

TEST_CASE("variation report handles two utterances and rejects fewer") {
  embed::StubHashBackend backend(32, 17);
  std::map<corpus::UtteranceKey, embed::FeatureSequence> features;
  for (const char* speaker : {"s01", "s02"}) {
    corpus::UtteranceKey key{speaker, "w01", 0};
    preprocess::FrameSequence frames;
    frames.source = key;
    for (int t = 0; t < 3; ++t) frames.frames.push_back(testutil::fixture_frame(key, t, 48));
    features[key] = embed::embed_sequence(frames, backend);
  }
  auto table = embed::feature_variation_report(features, {corpus::Target{"s01", "w01"}});
  CHECK(table.size() == 3);
  CHECK(table[0].pairs_different_person == 1);
  CHECK(table[0].pairs_same_person == 0);

  std::map<corpus::UtteranceKey, embed::FeatureSequence> lone;
  lone[corpus::UtteranceKey{"s01", "w01", 0}] = features.at({"s01", "w01", 0});
  try {
    embed::feature_variation_report(lone, {corpus::Target{"s01", "w01"}});
    FAIL("expected InsufficientSamples");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientSamples);
  }
}

TEST_CASE("variation table renders as csv") {
  embed::VariationTable table(2);
  table[0].timestep = 0;
  table[0].mean_same_person_different_word = 0.25;
  table[0].pairs_same_person = 3;
  table[1].timestep = 1;
  const std::string csv = embed::variation_table_csv(table);
  CHECK(csv.find("timestep,") == 0);
  CHECK(csv.find("0,0.25,3,") != std::string::npos);
}

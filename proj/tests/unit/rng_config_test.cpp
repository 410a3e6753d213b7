#include <cstdlib>
#include <fstream>

#include "authnet/config.hpp"
#include "authnet/error.hpp"
#include "authnet/rng.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace authnet;

TEST_CASE("splitmix64 streams are reproducible and seed-sensitive") {
  rng::SplitMix64 a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto expected = a.next();
    CHECK(b.next() == expected);
  }
  bool all_equal = true;
  rng::SplitMix64 a2(42);
  for (int i = 0; i < 100; ++i) {
    if (a2.next() != c.next()) all_equal = false;
  }
  CHECK_FALSE(all_equal);
}

TEST_CASE("bounded draws stay in range") {
  rng::SplitMix64 gen(7);
  for (int i = 0; i < 1000; ++i) {
    CHECK(gen.below(10) < 10);
    const double u = gen.unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("shuffle is a permutation and reproducible") {
  std::vector<int> values(50);
  for (int i = 0; i < 50; ++i) values[i] = i;
  std::vector<int> copy = values;

  rng::SplitMix64 gen(11);
  gen.shuffle(values);
  rng::SplitMix64 gen2(11);
  gen2.shuffle(copy);
  CHECK(values == copy);

  std::vector<int> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("config defaults carry the canonical pipeline values") {
  Config config = Config::defaults();
  CHECK(config.get_int("preprocess.T") == 20);
  CHECK(config.get_int("preprocess.S") == 224);
  CHECK(config.get_int("embedder.dim") == 2622);
  CHECK(config.get_int("classifier.epochs") == 60);
  CHECK(config.get_int("classifier.batch_size") == 75);
  CHECK(config.get_double("classifier.learning_rate") == doctest::Approx(0.001));
  CHECK(config.get_int("split.held_out_speakers") == 5);
  CHECK(config.get_int("split.held_out_words") == 3);
  CHECK(config.get_int_list("classifier.hidden_sizes") == std::vector<int>{256, 128, 64, 32});
}

TEST_CASE("config file, env and explicit sets layer in precedence order") {
  testutil::TempDir dir("config");
  const auto file = dir.path() / "run.conf";
  {
    std::ofstream out(file);
    out << "# comment\n";
    out << "preprocess.T = 12\n";
    out << "seed = 7   # trailing comment\n";
  }

  Config config = Config::defaults();
  config.load_file(file);
  CHECK(config.get_int("preprocess.T") == 12);
  CHECK(config.get_int("seed") == 7);

  setenv("AUTHNET_PREPROCESS_T", "15", 1);
  config.apply_env();
  unsetenv("AUTHNET_PREPROCESS_T");
  CHECK(config.get_int("preprocess.T") == 15);

  config.set("preprocess.T", "18");
  CHECK(config.get_int("preprocess.T") == 18);
}

TEST_CASE("unknown or malformed config keys are rejected") {
  Config config = Config::defaults();
  CHECK_THROWS_AS(config.set("preprocess.unknown", "1"), Error);
  try {
    config.set("nope", "1");
    FAIL("expected ConfigInvalid");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigInvalid);
  }

  testutil::TempDir dir("config-bad");
  const auto file = dir.path() / "bad.conf";
  {
    std::ofstream out(file);
    out << "preprocess.T 12\n";
  }
  CHECK_THROWS_AS(config.load_file(file), Error);
}

TEST_CASE("config digests are stable and prefix-scoped") {
  Config a = Config::defaults();
  Config b = Config::defaults();
  CHECK(a.digest() == b.digest());
  CHECK(a.digest("preprocess.") == b.digest("preprocess."));

  b.set("classifier.epochs", "10");
  CHECK(a.digest() != b.digest());
  // classifier keys do not touch the preprocess digest
  CHECK(a.digest("preprocess.") == b.digest("preprocess."));
}

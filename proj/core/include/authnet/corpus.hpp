#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace authnet::corpus {

/// Identifies one recorded password attempt within a corpus.
struct UtteranceKey {
  std::string speaker_id;
  std::string word_id;
  int utterance_idx = 0;

  auto operator<=>(const UtteranceKey&) const = default;
};

std::string to_string(const UtteranceKey& key);

/// The enrolled identity one verifier is trained for.
struct Target {
  std::string speaker_id;
  std::string word_id;

  auto operator<=>(const Target&) const = default;
};

enum class ImposterKind {
  Genuine,
  SamePersonDifferentWord,
  DifferentPersonSameWord,
  DifferentPersonDifferentWord,
};

enum class SampleRole {
  TrainPositive,
  TrainNegative,
  TestPositive,
  TestNegative,
};

const char* to_string(ImposterKind kind) noexcept;
const char* to_string(SampleRole role) noexcept;
std::optional<ImposterKind> imposter_kind_from_string(const std::string& text);
std::optional<SampleRole> sample_role_from_string(const std::string& text);

enum class CorpusLayout { MiraclVc1, CollatedVideo };

CorpusLayout layout_from_string(const std::string& id);
const char* to_string(CorpusLayout layout) noexcept;

/// Where one utterance's frames come from on disk.
struct FrameSource {
  enum class Kind { ImageDirectory, VideoFile };
  Kind kind = Kind::ImageDirectory;
  std::filesystem::path path;
};

/// Index of every utterance found under a corpus root. Immutable once built.
struct CorpusIndex {
  std::filesystem::path root;
  CorpusLayout layout = CorpusLayout::MiraclVc1;
  std::vector<std::string> speakers;  // lexicographic
  std::vector<std::string> words;     // lexicographic
  int utterances_per_word = 0;
  std::map<UtteranceKey, FrameSource> entries;
  std::vector<UtteranceKey> missing;  // grid positions with no data on disk
};

struct SplitConfig {
  int held_out_speakers = 5;
  int held_out_words = 3;
  int oversample_factor = 10;  // replicas added per genuine utterance; 0 disables
  double train_fraction = 0.7;
};

struct PlanEntry {
  UtteranceKey key;
  SampleRole role = SampleRole::TrainNegative;
  int label = 0;        // 1 iff imposter_kind == Genuine
  int replica_idx = 0;  // 0 = the base utterance
  ImposterKind kind = ImposterKind::DifferentPersonDifferentWord;
};

/// Materialized train/test assignment for one target combination.
struct SplitPlan {
  Target target;
  std::uint64_t seed = 0;
  SplitConfig config;
  std::vector<std::string> held_out_speaker_ids;
  std::vector<std::string> held_out_word_ids;
  std::vector<PlanEntry> train;
  std::vector<PlanEntry> test;
};

/// Walks `root` with the named directory convention and indexes every
/// utterance. Speakers, words and utterances are ordered lexicographically;
/// grid positions missing on disk are listed in `missing`.
CorpusIndex scan_corpus(const std::filesystem::path& root, CorpusLayout layout);

/// The speakers/words set aside for a given seed, as a deterministic
/// function of (index, config, seed). Shared by make_split and
/// enumerate_targets so all targets of one run see the same partition.
struct HeldOutSelection {
  std::vector<std::string> speakers;
  std::vector<std::string> words;
};
HeldOutSelection select_held_out(const CorpusIndex& index, const SplitConfig& config,
                                 std::uint64_t seed);

/// Builds the full split for one target: pool the non-held-out utterances,
/// replicate the genuine ones oversample_factor times, split the bases
/// train_fraction/rest stratified by label (replicas follow their base), and
/// append every set-aside utterance to test as a negative.
SplitPlan make_split(const CorpusIndex& index, const Target& target, const SplitConfig& config,
                     std::uint64_t seed);

/// Cross product of non-held-out speakers and non-held-out words.
std::vector<Target> enumerate_targets(const CorpusIndex& index, const SplitConfig& config,
                                      std::uint64_t seed);

ImposterKind classify_imposter(const UtteranceKey& sample, const Target& target);

/// Flat text form: `# key value` header lines then one sample per line
/// (role label speaker word utterance replica imposter_kind).
std::string serialize_split_plan(const SplitPlan& plan);
SplitPlan parse_split_plan(const std::string& text);
void write_split_plan(const std::filesystem::path& path, const SplitPlan& plan);
SplitPlan read_split_plan(const std::filesystem::path& path);

}  // namespace authnet::corpus

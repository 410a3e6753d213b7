#include "authnet/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "authnet/error.hpp"
#include "authnet/rng.hpp"

namespace fs = std::filesystem;

namespace authnet::corpus {

namespace {

const std::set<std::string> kVideoExtensions = {".mp4", ".avi", ".mov", ".mkv", ".webm"};

std::vector<std::string> sorted_subdirectories(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::optional<long> parse_numeric(const std::string& name) {
  if (name.empty() || name.size() > 9) return std::nullopt;
  long value = 0;
  for (char c : name) {
    if (c < '0' || c > '9') return std::nullopt;
    value = value * 10 + (c - '0');
  }
  return value;
}

using UtteranceList = std::vector<std::pair<std::string, fs::path>>;  // sorted by name

/// Zero-padded numeric utterance names map to stable indices (name minus the
/// smallest name corpus-wide), so a hole in the numbering is flagged at its
/// true position. Any non-numeric name falls back to positional indices.
void assign_utterance_indices(
    const std::map<std::string, std::map<std::string, UtteranceList>>& tree,
    FrameSource::Kind kind, CorpusIndex& index) {
  bool all_numeric = true;
  long smallest = std::numeric_limits<long>::max();
  for (const auto& [speaker, words] : tree) {
    for (const auto& [word, utterances] : words) {
      for (const auto& [name, path] : utterances) {
        auto value = parse_numeric(name);
        if (!value) {
          all_numeric = false;
        } else {
          smallest = std::min(smallest, *value);
        }
      }
    }
  }

  int max_index = -1;
  for (const auto& [speaker, words] : tree) {
    for (const auto& [word, utterances] : words) {
      for (std::size_t i = 0; i < utterances.size(); ++i) {
        int utterance_idx = static_cast<int>(i);
        if (all_numeric) {
          utterance_idx = static_cast<int>(*parse_numeric(utterances[i].first) - smallest);
        }
        UtteranceKey key{speaker, word, utterance_idx};
        if (index.entries.count(key)) {
          raise(ErrorCode::MalformedLayout,
                "duplicate utterance index for " + to_string(key));
        }
        index.entries[key] = FrameSource{kind, utterances[i].second};
        max_index = std::max(max_index, utterance_idx);
      }
    }
  }
  index.utterances_per_word = max_index + 1;
}

bool has_color_frames(const fs::path& utterance_dir) {
  for (const auto& entry : fs::directory_iterator(utterance_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (name.rfind("color", 0) == 0) return true;
  }
  return false;
}

void scan_miracl(const fs::path& root, CorpusIndex& index) {
  std::set<std::string> word_set;
  std::map<std::string, std::map<std::string, UtteranceList>> tree;

  for (const std::string& speaker : sorted_subdirectories(root)) {
    fs::path words_dir = root / speaker / "words";
    if (!fs::is_directory(words_dir)) {
      raise(ErrorCode::MalformedLayout,
            "speaker directory '" + speaker + "' has no words/ subdirectory");
    }
    index.speakers.push_back(speaker);
    for (const std::string& word : sorted_subdirectories(words_dir)) {
      word_set.insert(word);
      auto& utterances = tree[speaker][word];
      for (const std::string& utt : sorted_subdirectories(words_dir / word)) {
        fs::path utt_dir = words_dir / word / utt;
        if (!has_color_frames(utt_dir)) {
          raise(ErrorCode::MalformedLayout,
                "utterance directory " + utt_dir.string() + " holds no color_* frames");
        }
        utterances.emplace_back(utt, utt_dir);
      }
    }
  }

  index.words.assign(word_set.begin(), word_set.end());
  assign_utterance_indices(tree, FrameSource::Kind::ImageDirectory, index);
}

void scan_collated(const fs::path& root, CorpusIndex& index) {
  std::set<std::string> word_set;
  std::map<std::string, std::map<std::string, UtteranceList>> tree;

  for (const std::string& speaker : sorted_subdirectories(root)) {
    index.speakers.push_back(speaker);
    for (const std::string& word : sorted_subdirectories(root / speaker)) {
      word_set.insert(word);
      UtteranceList videos;
      for (const auto& entry : fs::directory_iterator(root / speaker / word)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (kVideoExtensions.count(ext) == 0) {
          raise(ErrorCode::MalformedLayout,
                entry.path().string() + " is not a recognised video file");
        }
        videos.emplace_back(entry.path().stem().string(), entry.path());
      }
      std::sort(videos.begin(), videos.end());
      tree[speaker][word] = std::move(videos);
    }
  }

  index.words.assign(word_set.begin(), word_set.end());
  assign_utterance_indices(tree, FrameSource::Kind::VideoFile, index);
}

void flag_missing(CorpusIndex& index) {
  for (const std::string& speaker : index.speakers) {
    for (const std::string& word : index.words) {
      for (int i = 0; i < index.utterances_per_word; ++i) {
        UtteranceKey key{speaker, word, i};
        if (index.entries.count(key) == 0) index.missing.push_back(key);
      }
    }
  }
}

}  // namespace

std::string to_string(const UtteranceKey& key) {
  return key.speaker_id + "/" + key.word_id + "/" + std::to_string(key.utterance_idx);
}

const char* to_string(ImposterKind kind) noexcept {
  switch (kind) {
    case ImposterKind::Genuine: return "genuine";
    case ImposterKind::SamePersonDifferentWord: return "same_person_different_word";
    case ImposterKind::DifferentPersonSameWord: return "different_person_same_word";
    case ImposterKind::DifferentPersonDifferentWord: return "different_person_different_word";
  }
  return "?";
}

const char* to_string(SampleRole role) noexcept {
  switch (role) {
    case SampleRole::TrainPositive: return "train_positive";
    case SampleRole::TrainNegative: return "train_negative";
    case SampleRole::TestPositive: return "test_positive";
    case SampleRole::TestNegative: return "test_negative";
  }
  return "?";
}

std::optional<ImposterKind> imposter_kind_from_string(const std::string& text) {
  for (ImposterKind kind :
       {ImposterKind::Genuine, ImposterKind::SamePersonDifferentWord,
        ImposterKind::DifferentPersonSameWord, ImposterKind::DifferentPersonDifferentWord}) {
    if (text == to_string(kind)) return kind;
  }
  return std::nullopt;
}

std::optional<SampleRole> sample_role_from_string(const std::string& text) {
  for (SampleRole role : {SampleRole::TrainPositive, SampleRole::TrainNegative,
                          SampleRole::TestPositive, SampleRole::TestNegative}) {
    if (text == to_string(role)) return role;
  }
  return std::nullopt;
}

CorpusLayout layout_from_string(const std::string& id) {
  if (id == "miracl-vc1") return CorpusLayout::MiraclVc1;
  if (id == "collated-video") return CorpusLayout::CollatedVideo;
  raise(ErrorCode::ConfigInvalid, "unknown corpus layout '" + id + "'");
}

const char* to_string(CorpusLayout layout) noexcept {
  return layout == CorpusLayout::MiraclVc1 ? "miracl-vc1" : "collated-video";
}

CorpusIndex scan_corpus(const fs::path& root, CorpusLayout layout) {
  if (!fs::exists(root) || !fs::is_directory(root)) {
    raise(ErrorCode::MissingRoot, "corpus root " + root.string() + " does not exist");
  }
  CorpusIndex index;
  index.root = root;
  index.layout = layout;
  if (layout == CorpusLayout::MiraclVc1) {
    scan_miracl(root, index);
  } else {
    scan_collated(root, index);
  }
  if (index.entries.empty()) {
    raise(ErrorCode::EmptyCorpus, "no utterances found under " + root.string());
  }
  flag_missing(index);
  return index;
}

HeldOutSelection select_held_out(const CorpusIndex& index, const SplitConfig& config,
                                 std::uint64_t seed) {
  if (config.held_out_speakers < 0 ||
      config.held_out_speakers >= static_cast<int>(index.speakers.size())) {
    raise(ErrorCode::ConfigInvalid, "held_out_speakers must leave at least one speaker");
  }
  if (config.held_out_words < 0 || config.held_out_words >= static_cast<int>(index.words.size())) {
    raise(ErrorCode::ConfigInvalid, "held_out_words must leave at least one word");
  }

  HeldOutSelection selection;
  std::vector<std::string> speakers = index.speakers;
  rng::SplitMix64 speaker_stream(rng::mix(seed, rng::hash64("held-out-speakers")));
  speaker_stream.shuffle(speakers);
  selection.speakers.assign(speakers.begin(), speakers.begin() + config.held_out_speakers);
  std::sort(selection.speakers.begin(), selection.speakers.end());

  std::vector<std::string> words = index.words;
  rng::SplitMix64 word_stream(rng::mix(seed, rng::hash64("held-out-words")));
  word_stream.shuffle(words);
  selection.words.assign(words.begin(), words.begin() + config.held_out_words);
  std::sort(selection.words.begin(), selection.words.end());
  return selection;
}

ImposterKind classify_imposter(const UtteranceKey& sample, const Target& target) {
  const bool same_person = sample.speaker_id == target.speaker_id;
  const bool same_word = sample.word_id == target.word_id;
  if (same_person && same_word) return ImposterKind::Genuine;
  if (same_person) return ImposterKind::SamePersonDifferentWord;
  if (same_word) return ImposterKind::DifferentPersonSameWord;
  return ImposterKind::DifferentPersonDifferentWord;
}

SplitPlan make_split(const CorpusIndex& index, const Target& target, const SplitConfig& config,
                     std::uint64_t seed) {
  if (config.oversample_factor < 0) {
    raise(ErrorCode::ConfigInvalid, "oversample_factor must be >= 0");
  }
  if (config.train_fraction < 0.0 || config.train_fraction > 1.0) {
    raise(ErrorCode::ConfigInvalid, "train_fraction must lie in [0, 1]");
  }

  HeldOutSelection held_out = select_held_out(index, config, seed);
  const std::set<std::string> held_speakers(held_out.speakers.begin(), held_out.speakers.end());
  const std::set<std::string> held_words(held_out.words.begin(), held_out.words.end());

  if (held_speakers.count(target.speaker_id) || held_words.count(target.word_id)) {
    raise(ErrorCode::TargetHeldOut,
          "target " + target.speaker_id + "/" + target.word_id +
              " falls in a set-aside partition for seed " + std::to_string(seed));
  }

  // Pool the non-held-out utterances; everything set aside lands in test.
  std::vector<UtteranceKey> pool_positives;
  std::vector<UtteranceKey> pool_negatives;
  std::vector<UtteranceKey> set_aside;
  for (const auto& [key, source] : index.entries) {
    if (held_speakers.count(key.speaker_id) || held_words.count(key.word_id)) {
      set_aside.push_back(key);
    } else if (classify_imposter(key, target) == ImposterKind::Genuine) {
      pool_positives.push_back(key);
    } else {
      pool_negatives.push_back(key);
    }
  }

  if (pool_positives.empty()) {
    raise(ErrorCode::InsufficientPositives,
          "no genuine utterances for target " + target.speaker_id + "/" + target.word_id);
  }

  // Stratified split on base utterances; replicas follow their base so no
  // oversampled copy can straddle the train/test boundary.
  rng::SplitMix64 positive_stream(rng::mix(seed, rng::hash64("shuffle-positives")));
  rng::SplitMix64 negative_stream(rng::mix(seed, rng::hash64("shuffle-negatives")));
  positive_stream.shuffle(pool_positives);
  negative_stream.shuffle(pool_negatives);

  const auto train_count = [&](std::size_t n) {
    return static_cast<std::size_t>(config.train_fraction * static_cast<double>(n));
  };
  const std::size_t train_pos = train_count(pool_positives.size());
  const std::size_t train_neg = train_count(pool_negatives.size());

  SplitPlan plan;
  plan.target = target;
  plan.seed = seed;
  plan.config = config;
  plan.held_out_speaker_ids = held_out.speakers;
  plan.held_out_word_ids = held_out.words;

  auto emit = [&](std::vector<PlanEntry>& side, const UtteranceKey& key, bool train_side) {
    ImposterKind kind = classify_imposter(key, target);
    const int label = kind == ImposterKind::Genuine ? 1 : 0;
    SampleRole role = train_side ? (label ? SampleRole::TrainPositive : SampleRole::TrainNegative)
                                 : (label ? SampleRole::TestPositive : SampleRole::TestNegative);
    side.push_back(PlanEntry{key, role, label, 0, kind});
    if (label == 1) {
      for (int r = 1; r <= config.oversample_factor; ++r) {
        side.push_back(PlanEntry{key, role, label, r, kind});
      }
    }
  };

  for (std::size_t i = 0; i < pool_positives.size(); ++i) {
    emit(i < train_pos ? plan.train : plan.test, pool_positives[i], i < train_pos);
  }
  for (std::size_t i = 0; i < pool_negatives.size(); ++i) {
    emit(i < train_neg ? plan.train : plan.test, pool_negatives[i], i < train_neg);
  }

  std::sort(set_aside.begin(), set_aside.end());
  for (const UtteranceKey& key : set_aside) {
    plan.test.push_back(
        PlanEntry{key, SampleRole::TestNegative, 0, 0, classify_imposter(key, target)});
  }
  return plan;
}

std::vector<Target> enumerate_targets(const CorpusIndex& index, const SplitConfig& config,
                                      std::uint64_t seed) {
  HeldOutSelection held_out = select_held_out(index, config, seed);
  const std::set<std::string> held_speakers(held_out.speakers.begin(), held_out.speakers.end());
  const std::set<std::string> held_words(held_out.words.begin(), held_out.words.end());

  std::vector<Target> targets;
  for (const std::string& speaker : index.speakers) {
    if (held_speakers.count(speaker)) continue;
    for (const std::string& word : index.words) {
      if (held_words.count(word)) continue;
      targets.push_back(Target{speaker, word});
    }
  }
  return targets;
}

std::string serialize_split_plan(const SplitPlan& plan) {
  std::ostringstream out;
  out << "# authnet-split-plan v1\n";
  out << "# seed " << plan.seed << "\n";
  out << "# config held_out_speakers=" << plan.config.held_out_speakers
      << " held_out_words=" << plan.config.held_out_words
      << " oversample_factor=" << plan.config.oversample_factor
      << " train_fraction=" << plan.config.train_fraction << "\n";
  out << "# target " << plan.target.speaker_id << " " << plan.target.word_id << "\n";
  out << "# held_out_speakers";
  for (const auto& s : plan.held_out_speaker_ids) out << " " << s;
  out << "\n# held_out_words";
  for (const auto& w : plan.held_out_word_ids) out << " " << w;
  out << "\n";
  auto write_entry = [&](const PlanEntry& entry) {
    out << to_string(entry.role) << " " << entry.label << " " << entry.key.speaker_id << " "
        << entry.key.word_id << " " << entry.key.utterance_idx << " " << entry.replica_idx << " "
        << to_string(entry.kind) << "\n";
  };
  for (const auto& entry : plan.train) write_entry(entry);
  for (const auto& entry : plan.test) write_entry(entry);
  return out.str();
}

SplitPlan parse_split_plan(const std::string& text) {
  SplitPlan plan;
  std::istringstream in(text);
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream header(line.substr(1));
      std::string tag;
      header >> tag;
      if (tag == "authnet-split-plan") {
        saw_header = true;
      } else if (tag == "seed") {
        header >> plan.seed;
      } else if (tag == "target") {
        header >> plan.target.speaker_id >> plan.target.word_id;
      } else if (tag == "held_out_speakers") {
        std::string id;
        while (header >> id) plan.held_out_speaker_ids.push_back(id);
      } else if (tag == "held_out_words") {
        std::string id;
        while (header >> id) plan.held_out_word_ids.push_back(id);
      } else if (tag == "config") {
        std::string kv;
        while (header >> kv) {
          auto eq = kv.find('=');
          if (eq == std::string::npos) continue;
          std::string key = kv.substr(0, eq);
          std::string value = kv.substr(eq + 1);
          if (key == "held_out_speakers") plan.config.held_out_speakers = std::stoi(value);
          if (key == "held_out_words") plan.config.held_out_words = std::stoi(value);
          if (key == "oversample_factor") plan.config.oversample_factor = std::stoi(value);
          if (key == "train_fraction") plan.config.train_fraction = std::stod(value);
        }
      }
      continue;
    }
    std::istringstream row(line);
    std::string role_text, kind_text;
    PlanEntry entry;
    row >> role_text >> entry.label >> entry.key.speaker_id >> entry.key.word_id >>
        entry.key.utterance_idx >> entry.replica_idx >> kind_text;
    if (!row) {
      raise(ErrorCode::IoFailure, "malformed split plan row: " + line);
    }
    auto role = sample_role_from_string(role_text);
    auto kind = imposter_kind_from_string(kind_text);
    if (!role || !kind) {
      raise(ErrorCode::IoFailure, "malformed split plan row: " + line);
    }
    entry.role = *role;
    entry.kind = *kind;
    bool is_train = entry.role == SampleRole::TrainPositive || entry.role == SampleRole::TrainNegative;
    (is_train ? plan.train : plan.test).push_back(entry);
  }
  if (!saw_header) {
    raise(ErrorCode::IoFailure, "split plan text lacks the version header");
  }
  return plan;
}

void write_split_plan(const fs::path& path, const SplitPlan& plan) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::IoFailure, "cannot write split plan to " + path.string());
  out << serialize_split_plan(plan);
}

SplitPlan read_split_plan(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoFailure, "cannot read split plan from " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_split_plan(buffer.str());
}

}  // namespace authnet::corpus

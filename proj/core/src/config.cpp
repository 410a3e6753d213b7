#include "authnet/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "authnet/error.hpp"
#include "authnet/rng.hpp"

namespace authnet {

namespace {

std::string trim(const std::string& text) {
  std::size_t begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  std::size_t end = text.find_last_not_of(" \t\r\n");
  return text.substr(begin, end - begin + 1);
}

std::string env_name(const std::string& key) {
  std::string name = "AUTHNET_";
  for (char c : key) {
    name += (c == '.') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return name;
}

}  // namespace

const std::vector<Config::KeySpec>& Config::schema() {
  static const std::vector<KeySpec> specs = {
      {"corpus.root", "", "corpus root directory"},
      {"corpus.layout", "miracl-vc1", "directory convention: miracl-vc1 | collated-video"},
      {"dataset.name", "dataset", "label used in report tables"},

      {"split.held_out_speakers", "5", "speakers set aside entirely as unseen test data"},
      {"split.held_out_words", "3", "words of the remaining speakers set aside for testing"},
      {"split.oversample_factor", "10", "replicas added per genuine utterance (0 disables)"},
      {"split.train_fraction", "0.7", "fraction of the pooled samples assigned to train"},

      {"preprocess.T", "20", "timesteps per normalized sequence"},
      {"preprocess.S", "224", "side of the square face crop in pixels"},
      {"preprocess.fps", "10", "sampling rate when decoding video sources"},
      {"preprocess.detector.kind", "haar", "face detector: haar | contrast"},
      {"preprocess.detector.cascade_path", "", "Haar cascade XML (required for kind=haar)"},
      {"preprocess.detector.scale_factor", "1.1", "detector pyramid scale step"},
      {"preprocess.detector.min_neighbors", "3", "detections required to keep a face box"},
      {"preprocess.detector.min_size", "24", "smallest face window in pixels"},

      {"embedder.backend", "vggface-pretrained", "embedding backend: vggface-pretrained | stub-hash"},
      {"embedder.dim", "2622", "feature dimension D"},
      {"embedder.weights_path", "", "ONNX weights for the pretrained backend"},
      {"embedder.stub_seed", "17", "seed of the stub-hash projection"},

      {"classifier.layers", "4", "stacked LSTM layers"},
      {"classifier.hidden_sizes", "256,128,64,32", "per-layer hidden sizes"},
      {"classifier.learning_rate", "0.001", "Adam initial learning rate"},
      {"classifier.epochs", "60", "training epochs"},
      {"classifier.batch_size", "75", "mini-batch size (clamped to set size)"},
      {"classifier.threshold", "0.5", "decision threshold on the sigmoid score"},
      {"classifier.clamp_eps", "1e-7", "probability clamp before the loss"},
      {"classifier.adam_beta1", "0.9", "Adam first-moment decay"},
      {"classifier.adam_beta2", "0.999", "Adam second-moment decay"},
      {"classifier.adam_eps", "1e-8", "Adam denominator epsilon"},
      {"classifier.mask_padding", "false", "freeze recurrent state across padded timesteps"},
      {"classifier.standardize_features", "false", "per-feature standardization fit on train"},
      {"classifier.replica_jitter_std", "0", "additive noise on oversampled replicas (0 = exact copies)"},

      {"output.dir", "out", "run artifacts directory"},
      {"cache.enabled", "true", "reuse preprocessed frames and features on disk"},
      {"seed", "42", "global seed"},
      {"parallelism", "1", "combinations trained concurrently"},
  };
  return specs;
}

Config Config::defaults() {
  Config config;
  for (const auto& spec : schema()) {
    config.values_[spec.key] = spec.default_value;
  }
  return config;
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream input(path);
  if (!input) {
    raise(ErrorCode::ConfigInvalid, "cannot open config file " + path.string());
  }
  std::string line;
  int line_no = 0;
  while (std::getline(input, line)) {
    ++line_no;
    std::string stripped = line;
    if (auto hash = stripped.find('#'); hash != std::string::npos) {
      stripped.erase(hash);
    }
    stripped = trim(stripped);
    if (stripped.empty()) continue;
    auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      raise(ErrorCode::ConfigInvalid,
            path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
}

void Config::apply_env() {
  for (const auto& spec : schema()) {
    if (const char* value = std::getenv(env_name(spec.key).c_str())) {
      values_[spec.key] = value;
    }
  }
}

void Config::set(const std::string& key, const std::string& value) {
  bool known = std::any_of(schema().begin(), schema().end(),
                           [&](const KeySpec& spec) { return spec.key == key; });
  if (!known) {
    raise(ErrorCode::ConfigInvalid, "unknown config key '" + key + "'");
  }
  values_[key] = value;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    raise(ErrorCode::ConfigInvalid, "missing config key '" + key + "'");
  }
  return it->second;
}

std::int64_t Config::get_int(const std::string& key) const {
  const std::string& text = get(key);
  try {
    std::size_t used = 0;
    std::int64_t result = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return result;
  } catch (const std::exception&) {
    raise(ErrorCode::ConfigInvalid, key + " must be an integer, got '" + text + "'");
  }
}

double Config::get_double(const std::string& key) const {
  const std::string& text = get(key);
  try {
    std::size_t used = 0;
    double result = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return result;
  } catch (const std::exception&) {
    raise(ErrorCode::ConfigInvalid, key + " must be a number, got '" + text + "'");
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string& text = get(key);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  raise(ErrorCode::ConfigInvalid, key + " must be a boolean, got '" + text + "'");
}

std::filesystem::path Config::get_path(const std::string& key) const {
  return std::filesystem::path(get(key));
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  const std::string& text = get(key);
  std::vector<int> values;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      values.push_back(std::stoi(item));
    } catch (const std::exception&) {
      raise(ErrorCode::ConfigInvalid, key + " must be a comma-separated int list, got '" + text + "'");
    }
  }
  if (values.empty()) {
    raise(ErrorCode::ConfigInvalid, key + " must contain at least one integer");
  }
  return values;
}

std::string Config::digest() const { return digest(""); }

std::string Config::digest(const std::string& key_prefix) const {
  std::uint64_t hash = 0xCBF29CE484222325ull;
  for (const auto& [key, value] : values_) {
    if (key.rfind(key_prefix, 0) != 0) continue;
    hash = rng::mix(hash, rng::hash64(key));
    hash = rng::mix(hash, rng::hash64(value));
  }
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(hash));
  return std::string(buffer);
}

}  // namespace authnet

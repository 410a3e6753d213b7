#include "authnet/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "authnet/error.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace authnet::classifier {

namespace {

constexpr char kModelMagic[8] = {'A', 'N', 'E', 'T', 'L', 'S', 'T', 'M'};
constexpr std::uint32_t kModelVersion = 1;

struct Dataset {
  std::vector<Eigen::MatrixXf> sequences;  // D x T views copied per sample
  std::vector<int> labels;
  std::vector<int> valid;
};

Dataset assemble(const corpus::SplitPlan& plan,
                 const std::map<corpus::UtteranceKey, embed::FeatureSequence>& features,
                 const std::map<corpus::UtteranceKey, int>& valid_timesteps,
                 const VerifierConfig& config) {
  Dataset data;
  rng::SplitMix64 jitter_stream(rng::mix(config.seed, rng::hash64("replica-jitter")));

  for (const corpus::PlanEntry& entry : plan.train) {
    auto it = features.find(entry.key);
    if (it == features.end()) {
      raise(ErrorCode::ShapeMismatch,
            "no features for train sample " + corpus::to_string(entry.key));
    }
    const embed::FeatureSequence& seq = it->second;
    if (seq.matrix.rows() != config.timesteps || seq.matrix.cols() != config.feature_dim) {
      raise(ErrorCode::ShapeMismatch,
            "features for " + corpus::to_string(entry.key) + " are " +
                std::to_string(seq.matrix.rows()) + "x" + std::to_string(seq.matrix.cols()) +
                ", expected " + std::to_string(config.timesteps) + "x" +
                std::to_string(config.feature_dim));
    }

    Eigen::MatrixXf columns = seq.matrix.transpose();  // D x T
    if (entry.replica_idx > 0 && config.replica_jitter_std > 0.0) {
      for (Eigen::Index i = 0; i < columns.size(); ++i) {
        columns.data()[i] += static_cast<float>(jitter_stream.normal() *
                                                config.replica_jitter_std);
      }
    }
    data.sequences.push_back(std::move(columns));
    data.labels.push_back(entry.label);
    auto valid_it = valid_timesteps.find(entry.key);
    data.valid.push_back(valid_it != valid_timesteps.end() ? valid_it->second
                                                           : config.timesteps);
  }
  return data;
}

void standardize_fit(Dataset& data, const VerifierConfig& config, Eigen::VectorXd& mean,
                     Eigen::VectorXd& scale) {
  const int dim = config.feature_dim;
  mean = Eigen::VectorXd::Zero(dim);
  scale = Eigen::VectorXd::Zero(dim);
  std::size_t count = 0;
  for (const auto& seq : data.sequences) {
    for (int t = 0; t < seq.cols(); ++t) {
      mean += seq.col(t).cast<double>();
      ++count;
    }
  }
  mean /= static_cast<double>(count);
  for (const auto& seq : data.sequences) {
    for (int t = 0; t < seq.cols(); ++t) {
      scale += (seq.col(t).cast<double>() - mean).array().square().matrix();
    }
  }
  scale = (scale / static_cast<double>(count)).array().sqrt().matrix();
  for (int d = 0; d < dim; ++d) {
    if (scale[d] < 1e-12) scale[d] = 1.0;
  }
}

void standardize_apply(Eigen::MatrixXd& columns, const Eigen::VectorXd& mean,
                       const Eigen::VectorXd& scale) {
  columns = ((columns.colwise() - mean).array().colwise() / scale.array()).matrix();
}

BatchSequence to_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                       const VerifierConfig& config,
                       const std::optional<Eigen::VectorXd>& mean,
                       const std::optional<Eigen::VectorXd>& scale,
                       Eigen::VectorXd& labels, Eigen::MatrixXd& mask) {
  const int timesteps = config.timesteps;
  const auto batch = static_cast<int>(indices.size());
  BatchSequence x(static_cast<std::size_t>(timesteps),
                  Eigen::MatrixXd(config.feature_dim, batch));
  labels.resize(batch);
  mask = Eigen::MatrixXd::Ones(timesteps, batch);
  for (int b = 0; b < batch; ++b) {
    const auto& seq = data.sequences[indices[static_cast<std::size_t>(b)]];
    Eigen::MatrixXd columns = seq.cast<double>();
    if (mean) standardize_apply(columns, *mean, *scale);
    for (int t = 0; t < timesteps; ++t) {
      x[static_cast<std::size_t>(t)].col(b) = columns.col(t);
    }
    labels[b] = data.labels[indices[static_cast<std::size_t>(b)]];
    const int valid = data.valid[indices[static_cast<std::size_t>(b)]];
    for (int t = valid; t < timesteps; ++t) mask(t, b) = 0.0;
  }
  return x;
}

}  // namespace

void VerifierConfig::validate() const {
  if (hidden_sizes.empty()) raise(ErrorCode::ConfigInvalid, "classifier needs >= 1 layer");
  if (epochs < 1) raise(ErrorCode::ConfigInvalid, "epochs must be >= 1");
  if (learning_rate <= 0.0) raise(ErrorCode::ConfigInvalid, "learning_rate must be > 0");
  if (threshold <= 0.0 || threshold >= 1.0) {
    raise(ErrorCode::ConfigInvalid, "threshold must lie strictly inside (0, 1)");
  }
  if (batch_size < 1) raise(ErrorCode::ConfigInvalid, "batch_size must be >= 1");
  if (timesteps < 1 || feature_dim < 1) {
    raise(ErrorCode::ConfigInvalid, "timesteps and feature_dim must be >= 1");
  }
}

double bce_loss(double p, int y, double clamp_eps) {
  const double clamped = std::min(1.0 - clamp_eps, std::max(clamp_eps, p));
  return -(y * std::log(clamped) + (1 - y) * std::log(1.0 - clamped));
}

TrainedVerifier train(const corpus::SplitPlan& plan,
                      const std::map<corpus::UtteranceKey, embed::FeatureSequence>& features,
                      const VerifierConfig& config) {
  return train(plan, features, {}, config);
}

TrainedVerifier train(const corpus::SplitPlan& plan,
                      const std::map<corpus::UtteranceKey, embed::FeatureSequence>& features,
                      const std::map<corpus::UtteranceKey, int>& valid_timesteps,
                      const VerifierConfig& config) {
  config.validate();
  Dataset data = assemble(plan, features, valid_timesteps, config);
  if (data.sequences.empty()) {
    raise(ErrorCode::SingleClassTrainingSet, "train side of the plan is empty");
  }
  const bool has_positive = std::any_of(data.labels.begin(), data.labels.end(),
                                        [](int label) { return label == 1; });
  const bool has_negative = std::any_of(data.labels.begin(), data.labels.end(),
                                        [](int label) { return label == 0; });
  if (!has_positive || !has_negative) {
    raise(ErrorCode::SingleClassTrainingSet,
          "training needs both classes, got only " +
              std::string(has_positive ? "positives" : "negatives"));
  }

  TrainedVerifier model;
  model.target = plan.target;
  model.config = config;

  if (config.standardize_features) {
    Eigen::VectorXd mean, scale;
    standardize_fit(data, config, mean, scale);
    model.feature_mean = std::move(mean);
    model.feature_scale = std::move(scale);
  }

  rng::SplitMix64 init_stream(rng::mix(config.seed, rng::hash64("weight-init")));
  model.network = LstmNetwork::init(config.feature_dim, config.hidden_sizes, init_stream);

  AdamOptimizer optimizer(config.learning_rate, config.adam_beta1, config.adam_beta2,
                          config.adam_eps);

  const std::size_t sample_count = data.sequences.size();
  const std::size_t batch_size =
      std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), sample_count);

  std::vector<std::size_t> order(sample_count);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng::SplitMix64 shuffle_stream(
        rng::mix(config.seed, rng::mix(rng::hash64("epoch-shuffle"),
                                       static_cast<std::uint64_t>(epoch))));
    shuffle_stream.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < sample_count; begin += batch_size) {
      const std::size_t end = std::min(begin + batch_size, sample_count);
      std::vector<std::size_t> indices(order.begin() + static_cast<long>(begin),
                                       order.begin() + static_cast<long>(end));

      Eigen::VectorXd labels;
      Eigen::MatrixXd mask;
      BatchSequence x = to_batch(data, indices, config, model.feature_mean,
                                 model.feature_scale, labels, mask);

      ForwardCache cache;
      forward(model.network, x, &cache, config.mask_padding ? &mask : nullptr);

      Gradients grads;
      const double loss = backward(model.network, cache, labels, config.clamp_eps, grads);
      if (!std::isfinite(loss)) {
        raise(ErrorCode::DivergedLoss,
              "training loss became non-finite at epoch " + std::to_string(epoch));
      }
      optimizer.step(model.network, grads);
      epoch_loss += loss;
      ++batches;
    }
    model.training_loss_curve.push_back(epoch_loss / static_cast<double>(batches));
  }
  return model;
}

Prediction score(const TrainedVerifier& model, const embed::FeatureSequence& input) {
  return score(model, input, model.config.timesteps);
}

Prediction score(const TrainedVerifier& model, const embed::FeatureSequence& input,
                 int valid_timesteps) {
  const VerifierConfig& config = model.config;
  if (input.matrix.rows() != config.timesteps || input.matrix.cols() != config.feature_dim) {
    raise(ErrorCode::ShapeMismatch,
          "input is " + std::to_string(input.matrix.rows()) + "x" +
              std::to_string(input.matrix.cols()) + ", model expects " +
              std::to_string(config.timesteps) + "x" + std::to_string(config.feature_dim));
  }

  Eigen::MatrixXd columns = input.matrix.transpose().cast<double>();
  if (model.feature_mean) {
    standardize_apply(columns, *model.feature_mean, *model.feature_scale);
  }

  BatchSequence x(static_cast<std::size_t>(config.timesteps),
                  Eigen::MatrixXd(config.feature_dim, 1));
  for (int t = 0; t < config.timesteps; ++t) {
    x[static_cast<std::size_t>(t)].col(0) = columns.col(t);
  }
  Eigen::MatrixXd mask = Eigen::MatrixXd::Ones(config.timesteps, 1);
  for (int t = valid_timesteps; t < config.timesteps; ++t) mask(t, 0) = 0.0;

  Eigen::VectorXd scores =
      forward(model.network, x, nullptr, config.mask_padding ? &mask : nullptr);

  Prediction prediction;
  prediction.score = scores[0];
  prediction.decision = prediction.score >= config.threshold;
  return prediction;
}

namespace {

nlohmann::json config_to_json(const VerifierConfig& config) {
  return nlohmann::json{
      {"hidden_sizes", config.hidden_sizes},
      {"timesteps", config.timesteps},
      {"feature_dim", config.feature_dim},
      {"learning_rate", config.learning_rate},
      {"epochs", config.epochs},
      {"batch_size", config.batch_size},
      {"threshold", config.threshold},
      {"clamp_eps", config.clamp_eps},
      {"adam_beta1", config.adam_beta1},
      {"adam_beta2", config.adam_beta2},
      {"adam_eps", config.adam_eps},
      {"mask_padding", config.mask_padding},
      {"standardize_features", config.standardize_features},
      {"replica_jitter_std", config.replica_jitter_std},
      {"seed", config.seed},
  };
}

VerifierConfig config_from_json(const nlohmann::json& node) {
  VerifierConfig config;
  config.hidden_sizes = node.at("hidden_sizes").get<std::vector<int>>();
  config.timesteps = node.at("timesteps").get<int>();
  config.feature_dim = node.at("feature_dim").get<int>();
  config.learning_rate = node.at("learning_rate").get<double>();
  config.epochs = node.at("epochs").get<int>();
  config.batch_size = node.at("batch_size").get<int>();
  config.threshold = node.at("threshold").get<double>();
  config.clamp_eps = node.at("clamp_eps").get<double>();
  config.adam_beta1 = node.at("adam_beta1").get<double>();
  config.adam_beta2 = node.at("adam_beta2").get<double>();
  config.adam_eps = node.at("adam_eps").get<double>();
  config.mask_padding = node.at("mask_padding").get<bool>();
  config.standardize_features = node.at("standardize_features").get<bool>();
  config.replica_jitter_std = node.at("replica_jitter_std").get<double>();
  config.seed = node.at("seed").get<std::uint64_t>();
  return config;
}

void write_exact(std::ofstream& out, const void* data, std::size_t bytes) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

}  // namespace

void save_model(const fs::path& path, const TrainedVerifier& model) {
  nlohmann::json meta;
  meta["target"] = {{"speaker", model.target.speaker_id}, {"word", model.target.word_id}};
  meta["config"] = config_to_json(model.config);
  meta["loss_curve"] = model.training_loss_curve;
  meta["standardized"] = model.feature_mean.has_value();

  nlohmann::json tensors = nlohmann::json::array();
  std::vector<std::pair<const double*, std::size_t>> blobs;
  auto add = [&](const std::string& name, const double* data, std::vector<long> shape) {
    std::size_t total = 1;
    for (long s : shape) total *= static_cast<std::size_t>(s);
    tensors.push_back({{"name", name}, {"shape", shape}});
    blobs.push_back({data, total});
  };
  for (std::size_t l = 0; l < model.network.layers.size(); ++l) {
    const LstmLayer& layer = model.network.layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    add(prefix + "w_input", layer.w_input.data(),
        {static_cast<long>(layer.w_input.rows()), static_cast<long>(layer.w_input.cols())});
    add(prefix + "w_recur", layer.w_recur.data(),
        {static_cast<long>(layer.w_recur.rows()), static_cast<long>(layer.w_recur.cols())});
    add(prefix + "bias", layer.bias.data(), {static_cast<long>(layer.bias.size())});
  }
  add("head.weight", model.network.head_weight.data(),
      {static_cast<long>(model.network.head_weight.size())});
  add("head.bias", &model.network.head_bias, {1});
  if (model.feature_mean) {
    add("standardize.mean", model.feature_mean->data(),
        {static_cast<long>(model.feature_mean->size())});
    add("standardize.scale", model.feature_scale->data(),
        {static_cast<long>(model.feature_scale->size())});
  }
  meta["tensors"] = tensors;

  const std::string meta_text = meta.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::IoFailure, "cannot write model file " + path.string());

  write_exact(out, kModelMagic, sizeof(kModelMagic));
  const std::uint32_t version = kModelVersion;
  write_exact(out, &version, sizeof(version));
  const std::uint64_t meta_len = meta_text.size();
  write_exact(out, &meta_len, sizeof(meta_len));
  write_exact(out, meta_text.data(), meta_text.size());
  for (const auto& [data, count] : blobs) {
    write_exact(out, data, count * sizeof(double));
  }
  if (!out) raise(ErrorCode::IoFailure, "short write on model file " + path.string());
}

TrainedVerifier load_model(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoFailure, "cannot open model file " + path.string());

  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
    raise(ErrorCode::CorruptModelFile, path.string() + " lacks the model magic");
  }
  std::uint32_t version = 0;
  if (!in.read(reinterpret_cast<char*>(&version), sizeof(version)) || version != kModelVersion) {
    raise(ErrorCode::CorruptModelFile,
          "unsupported model format version in " + path.string());
  }
  std::uint64_t meta_len = 0;
  if (!in.read(reinterpret_cast<char*>(&meta_len), sizeof(meta_len)) || meta_len == 0 ||
      meta_len > (1ull << 30)) {
    raise(ErrorCode::CorruptModelFile, "bad metadata length in " + path.string());
  }
  std::string meta_text(meta_len, '\0');
  if (!in.read(meta_text.data(), static_cast<std::streamsize>(meta_len))) {
    raise(ErrorCode::CorruptModelFile, "truncated metadata in " + path.string());
  }

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_text);
  } catch (const nlohmann::json::exception&) {
    raise(ErrorCode::CorruptModelFile, "unparsable metadata in " + path.string());
  }

  TrainedVerifier model;
  try {
    model.target.speaker_id = meta.at("target").at("speaker").get<std::string>();
    model.target.word_id = meta.at("target").at("word").get<std::string>();
    model.config = config_from_json(meta.at("config"));
    model.training_loss_curve = meta.at("loss_curve").get<std::vector<double>>();
  } catch (const nlohmann::json::exception&) {
    raise(ErrorCode::CorruptModelFile, "incomplete metadata in " + path.string());
  }

  auto read_tensor = [&](std::size_t count) {
    std::vector<double> values(count);
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(count * sizeof(double)))) {
      raise(ErrorCode::CorruptModelFile, "truncated tensor data in " + path.string());
    }
    return values;
  };

  const int dim = model.config.feature_dim;
  int fan_in = dim;
  for (int hidden : model.config.hidden_sizes) {
    LstmLayer layer;
    auto w_input = read_tensor(static_cast<std::size_t>(4 * hidden) * fan_in);
    layer.w_input =
        Eigen::Map<Eigen::MatrixXd>(w_input.data(), 4 * hidden, fan_in);
    auto w_recur = read_tensor(static_cast<std::size_t>(4 * hidden) * hidden);
    layer.w_recur = Eigen::Map<Eigen::MatrixXd>(w_recur.data(), 4 * hidden, hidden);
    auto bias = read_tensor(static_cast<std::size_t>(4 * hidden));
    layer.bias = Eigen::Map<Eigen::VectorXd>(bias.data(), 4 * hidden);
    model.network.layers.push_back(std::move(layer));
    fan_in = hidden;
  }
  model.network.input_dim = dim;
  auto head = read_tensor(static_cast<std::size_t>(fan_in));
  model.network.head_weight = Eigen::Map<Eigen::VectorXd>(head.data(), fan_in);
  model.network.head_bias = read_tensor(1)[0];

  if (meta.value("standardized", false)) {
    auto mean = read_tensor(static_cast<std::size_t>(dim));
    auto scale = read_tensor(static_cast<std::size_t>(dim));
    model.feature_mean = Eigen::Map<Eigen::VectorXd>(mean.data(), dim);
    model.feature_scale = Eigen::Map<Eigen::VectorXd>(scale.data(), dim);
  }

  char extra;
  if (in.read(&extra, 1)) {
    raise(ErrorCode::CorruptModelFile, "trailing bytes in " + path.string());
  }
  return model;
}

TrainedVerifier load_model(const fs::path& path, int expected_timesteps,
                           int expected_feature_dim) {
  TrainedVerifier model = load_model(path);
  if (model.config.timesteps != expected_timesteps ||
      model.config.feature_dim != expected_feature_dim) {
    raise(ErrorCode::ConfigMismatch,
          "model expects " + std::to_string(model.config.timesteps) + "x" +
              std::to_string(model.config.feature_dim) + " sequences, pipeline is configured for " +
              std::to_string(expected_timesteps) + "x" + std::to_string(expected_feature_dim));
  }
  return model;
}

}  // namespace authnet::classifier

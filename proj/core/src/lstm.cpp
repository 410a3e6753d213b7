#include "authnet/lstm.hpp"

#include <cmath>

#include "authnet/error.hpp"

namespace authnet::classifier {

namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& x) {
  return 1.0 / (1.0 + (-x.array()).exp());
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

LstmNetwork LstmNetwork::init(int input_dim, const std::vector<int>& hidden_sizes,
                              rng::SplitMix64& gen) {
  if (input_dim <= 0 || hidden_sizes.empty()) {
    raise(ErrorCode::InvalidArgument, "network needs a positive input dim and >= 1 layer");
  }
  LstmNetwork network;
  network.input_dim = input_dim;

  int fan_in = input_dim;
  for (int hidden : hidden_sizes) {
    if (hidden <= 0) raise(ErrorCode::InvalidArgument, "hidden sizes must be positive");
    LstmLayer layer;
    const double input_scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    const double recur_scale = 1.0 / std::sqrt(static_cast<double>(hidden));
    layer.w_input.resize(4 * hidden, fan_in);
    layer.w_recur.resize(4 * hidden, hidden);
    layer.bias = Eigen::VectorXd::Zero(4 * hidden);
    for (int r = 0; r < layer.w_input.rows(); ++r) {
      for (int c = 0; c < layer.w_input.cols(); ++c) {
        layer.w_input(r, c) = (2.0 * gen.unit() - 1.0) * input_scale;
      }
    }
    for (int r = 0; r < layer.w_recur.rows(); ++r) {
      for (int c = 0; c < layer.w_recur.cols(); ++c) {
        layer.w_recur(r, c) = (2.0 * gen.unit() - 1.0) * recur_scale;
      }
    }
    // Forget gate biased open so early gradients survive the depth in time.
    layer.bias.segment(hidden, hidden).setConstant(1.0);
    network.layers.push_back(std::move(layer));
    fan_in = hidden;
  }

  network.head_weight.resize(fan_in);
  const double head_scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int i = 0; i < fan_in; ++i) {
    network.head_weight[i] = (2.0 * gen.unit() - 1.0) * head_scale;
  }
  network.head_bias = 0.0;
  return network;
}

std::size_t LstmNetwork::parameter_count() const {
  std::size_t count = head_weight.size() + 1;
  for (const auto& layer : layers) {
    count += layer.w_input.size() + layer.w_recur.size() + layer.bias.size();
  }
  return count;
}

Eigen::VectorXd LstmNetwork::flatten() const {
  Eigen::VectorXd values(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index at = 0;
  auto copy_out = [&](const auto& block) {
    for (Eigen::Index i = 0; i < block.size(); ++i) values[at++] = block.data()[i];
  };
  for (const auto& layer : layers) {
    copy_out(layer.w_input);
    copy_out(layer.w_recur);
    copy_out(layer.bias);
  }
  copy_out(head_weight);
  values[at++] = head_bias;
  return values;
}

void LstmNetwork::unflatten(const Eigen::VectorXd& values) {
  if (values.size() != static_cast<Eigen::Index>(parameter_count())) {
    raise(ErrorCode::ShapeMismatch, "flat parameter vector has the wrong length");
  }
  Eigen::Index at = 0;
  auto copy_in = [&](auto& block) {
    for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = values[at++];
  };
  for (auto& layer : layers) {
    copy_in(layer.w_input);
    copy_in(layer.w_recur);
    copy_in(layer.bias);
  }
  copy_in(head_weight);
  head_bias = values[at++];
}

Eigen::VectorXd forward(const LstmNetwork& network, const BatchSequence& input,
                        ForwardCache* cache, const Eigen::MatrixXd* mask) {
  if (input.empty()) raise(ErrorCode::ShapeMismatch, "empty input sequence");
  const int timesteps = static_cast<int>(input.size());
  const auto batch = static_cast<int>(input.front().cols());
  if (input.front().rows() != network.input_dim) {
    raise(ErrorCode::ShapeMismatch,
          "input dim " + std::to_string(input.front().rows()) + " != network dim " +
              std::to_string(network.input_dim));
  }
  if (mask && (mask->rows() != timesteps || mask->cols() != batch)) {
    raise(ErrorCode::ShapeMismatch, "mask shape must be T x B");
  }

  if (cache) {
    cache->input = &input;
    cache->mask = mask;
    cache->layers.assign(network.layers.size(), LayerCache{});
  }

  std::vector<Eigen::MatrixXd> current(input.begin(), input.end());
  for (std::size_t l = 0; l < network.layers.size(); ++l) {
    const LstmLayer& layer = network.layers[l];
    const int hidden = layer.hidden_size();
    Eigen::MatrixXd h_prev = Eigen::MatrixXd::Zero(hidden, batch);
    Eigen::MatrixXd c_prev = Eigen::MatrixXd::Zero(hidden, batch);

    LayerCache* layer_cache = cache ? &cache->layers[l] : nullptr;
    if (layer_cache) {
      layer_cache->gates.resize(timesteps);
      layer_cache->cell.resize(timesteps);
      layer_cache->hidden.resize(timesteps);
      layer_cache->tanh_cell.resize(timesteps);
    }

    for (int t = 0; t < timesteps; ++t) {
      Eigen::MatrixXd pre = layer.w_input * current[t] + layer.w_recur * h_prev;
      pre.colwise() += layer.bias;

      Eigen::MatrixXd gates(4 * hidden, batch);
      gates.topRows(hidden) = sigmoid(pre.topRows(hidden));                       // input
      gates.middleRows(hidden, hidden) = sigmoid(pre.middleRows(hidden, hidden)); // forget
      gates.middleRows(2 * hidden, hidden) = pre.middleRows(2 * hidden, hidden).array().tanh();
      gates.bottomRows(hidden) = sigmoid(pre.bottomRows(hidden));                 // output

      Eigen::MatrixXd c_pre =
          gates.middleRows(hidden, hidden).cwiseProduct(c_prev) +
          gates.topRows(hidden).cwiseProduct(gates.middleRows(2 * hidden, hidden));
      Eigen::MatrixXd tanh_c = c_pre.array().tanh();
      Eigen::MatrixXd h_pre = gates.bottomRows(hidden).cwiseProduct(tanh_c);

      Eigen::MatrixXd c_t = c_pre;
      Eigen::MatrixXd h_t = h_pre;
      if (mask) {
        // Row t of the mask blends: masked-out columns carry state forward.
        Eigen::RowVectorXd m = mask->row(t);
        Eigen::MatrixXd keep = m.replicate(hidden, 1);
        c_t = keep.cwiseProduct(c_pre) + (1.0 - keep.array()).matrix().cwiseProduct(c_prev);
        h_t = keep.cwiseProduct(h_pre) + (1.0 - keep.array()).matrix().cwiseProduct(h_prev);
      }

      if (layer_cache) {
        layer_cache->gates[t] = gates;
        layer_cache->cell[t] = c_t;
        layer_cache->hidden[t] = h_t;
        layer_cache->tanh_cell[t] = std::move(tanh_c);
      }

      current[t] = h_t;
      h_prev = std::move(h_t);
      c_prev = std::move(c_t);
    }
  }

  const Eigen::MatrixXd& last_hidden = current.back();
  Eigen::VectorXd logits =
      (network.head_weight.transpose() * last_hidden).transpose().array() + network.head_bias;
  Eigen::VectorXd scores(batch);
  for (int b = 0; b < batch; ++b) scores[b] = sigmoid(logits[b]);

  if (cache) {
    cache->logits = logits;
    cache->scores = scores;
  }
  return scores;
}

Gradients Gradients::zeros_like(const LstmNetwork& network) {
  Gradients grads;
  for (const auto& layer : network.layers) {
    LstmLayer zero;
    zero.w_input = Eigen::MatrixXd::Zero(layer.w_input.rows(), layer.w_input.cols());
    zero.w_recur = Eigen::MatrixXd::Zero(layer.w_recur.rows(), layer.w_recur.cols());
    zero.bias = Eigen::VectorXd::Zero(layer.bias.size());
    grads.layers.push_back(std::move(zero));
  }
  grads.head_weight = Eigen::VectorXd::Zero(network.head_weight.size());
  grads.head_bias = 0.0;
  return grads;
}

double backward(const LstmNetwork& network, const ForwardCache& cache,
                const Eigen::VectorXd& labels, double clamp_eps, Gradients& grads) {
  const BatchSequence& input = *cache.input;
  const int timesteps = static_cast<int>(input.size());
  const auto batch = static_cast<int>(input.front().cols());
  if (labels.size() != batch) {
    raise(ErrorCode::ShapeMismatch, "labels length must equal the batch size");
  }

  grads = Gradients::zeros_like(network);

  // Mean BCE over the batch; clamped samples are flat, so their dz is zero.
  double loss = 0.0;
  Eigen::VectorXd dz(batch);
  for (int b = 0; b < batch; ++b) {
    const double raw = cache.scores[b];
    const double p = std::min(1.0 - clamp_eps, std::max(clamp_eps, raw));
    const double y = labels[b];
    loss += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    dz[b] = (raw == p) ? (raw - y) / batch : 0.0;
  }
  loss /= batch;

  const std::size_t top = network.layers.size() - 1;
  const int top_hidden = network.layers[top].hidden_size();

  // Head gradients read the final hidden state of the top layer.
  const Eigen::MatrixXd& last_hidden = cache.layers[top].hidden[timesteps - 1];
  grads.head_weight = last_hidden * dz;
  grads.head_bias = dz.sum();

  // External per-timestep hidden-state gradients for the layer being
  // processed; starts as the head contribution on the top layer.
  std::vector<Eigen::MatrixXd> external(timesteps);
  for (int t = 0; t < timesteps; ++t) {
    external[t] = Eigen::MatrixXd::Zero(top_hidden, batch);
  }
  external[timesteps - 1] = network.head_weight * dz.transpose();

  for (int l = static_cast<int>(network.layers.size()) - 1; l >= 0; --l) {
    const LstmLayer& layer = network.layers[l];
    const LayerCache& lc = cache.layers[l];
    const int hidden = layer.hidden_size();
    LstmLayer& grad = grads.layers[l];

    const bool feeds_lower = l > 0;
    std::vector<Eigen::MatrixXd> lower_external;
    if (feeds_lower) {
      const int lower_hidden = network.layers[l - 1].hidden_size();
      lower_external.assign(timesteps, Eigen::MatrixXd::Zero(lower_hidden, batch));
    }

    Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(hidden, batch);
    Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(hidden, batch);

    for (int t = timesteps - 1; t >= 0; --t) {
      Eigen::MatrixXd dh = external[t] + dh_next;
      Eigen::MatrixXd dc = dc_next;

      Eigen::MatrixXd carry_h = Eigen::MatrixXd::Zero(hidden, batch);
      Eigen::MatrixXd carry_c = Eigen::MatrixXd::Zero(hidden, batch);
      if (cache.mask) {
        Eigen::MatrixXd keep = cache.mask->row(t).replicate(hidden, 1);
        Eigen::MatrixXd skip = (1.0 - keep.array()).matrix();
        carry_h = skip.cwiseProduct(dh);
        carry_c = skip.cwiseProduct(dc);
        dh = keep.cwiseProduct(dh);
        dc = keep.cwiseProduct(dc);
      }

      const auto gate_i = lc.gates[t].topRows(hidden);
      const auto gate_f = lc.gates[t].middleRows(hidden, hidden);
      const auto gate_g = lc.gates[t].middleRows(2 * hidden, hidden);
      const auto gate_o = lc.gates[t].bottomRows(hidden);
      const Eigen::MatrixXd& tanh_c = lc.tanh_cell[t];

      const Eigen::MatrixXd c_prev =
          t > 0 ? lc.cell[t - 1] : Eigen::MatrixXd::Zero(hidden, batch);
      const Eigen::MatrixXd h_prev =
          t > 0 ? lc.hidden[t - 1] : Eigen::MatrixXd::Zero(hidden, batch);

      Eigen::MatrixXd d_o = dh.cwiseProduct(tanh_c);
      dc += dh.cwiseProduct(gate_o)
                .cwiseProduct((1.0 - tanh_c.array().square()).matrix());

      Eigen::MatrixXd d_i = dc.cwiseProduct(gate_g);
      Eigen::MatrixXd d_f = dc.cwiseProduct(c_prev);
      Eigen::MatrixXd d_g = dc.cwiseProduct(gate_i);

      Eigen::MatrixXd d_pre(4 * hidden, batch);
      d_pre.topRows(hidden) =
          d_i.cwiseProduct(gate_i.cwiseProduct((1.0 - gate_i.array()).matrix()));
      d_pre.middleRows(hidden, hidden) =
          d_f.cwiseProduct(gate_f.cwiseProduct((1.0 - gate_f.array()).matrix()));
      d_pre.middleRows(2 * hidden, hidden) =
          d_g.cwiseProduct((1.0 - gate_g.array().square()).matrix());
      d_pre.bottomRows(hidden) =
          d_o.cwiseProduct(gate_o.cwiseProduct((1.0 - gate_o.array()).matrix()));

      const Eigen::MatrixXd& x_t =
          l == 0 ? input[static_cast<std::size_t>(t)] : cache.layers[l - 1].hidden[t];

      grad.w_input.noalias() += d_pre * x_t.transpose();
      grad.w_recur.noalias() += d_pre * h_prev.transpose();
      grad.bias += d_pre.rowwise().sum();

      dh_next = layer.w_recur.transpose() * d_pre + carry_h;
      dc_next = dc.cwiseProduct(gate_f) + carry_c;

      if (feeds_lower) {
        lower_external[t] = layer.w_input.transpose() * d_pre;
      }
    }

    if (feeds_lower) external = std::move(lower_external);
  }

  return loss;
}

AdamOptimizer::AdamOptimizer(double learning_rate, double beta1, double beta2, double eps)
    : learning_rate_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(LstmNetwork& network, const Gradients& grads) {
  if (!initialized_) {
    first_moment_ = Gradients::zeros_like(network);
    second_moment_ = Gradients::zeros_like(network);
    initialized_ = true;
  }
  ++step_count_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = (beta2_ * v.array() + (1.0 - beta2_) * g.array().square()).matrix();
    const auto m_hat = m.array() / bias1;
    const auto v_hat = v.array() / bias2;
    param.array() -= learning_rate_ * m_hat / (v_hat.sqrt() + eps_);
  };

  for (std::size_t l = 0; l < network.layers.size(); ++l) {
    update(network.layers[l].w_input, first_moment_.layers[l].w_input,
           second_moment_.layers[l].w_input, grads.layers[l].w_input);
    update(network.layers[l].w_recur, first_moment_.layers[l].w_recur,
           second_moment_.layers[l].w_recur, grads.layers[l].w_recur);
    update(network.layers[l].bias, first_moment_.layers[l].bias,
           second_moment_.layers[l].bias, grads.layers[l].bias);
  }
  update(network.head_weight, first_moment_.head_weight, second_moment_.head_weight,
         grads.head_weight);

  // Scalar head bias follows the same schedule.
  double& m = first_moment_.head_bias;
  double& v = second_moment_.head_bias;
  m = beta1_ * m + (1.0 - beta1_) * grads.head_bias;
  v = beta2_ * v + (1.0 - beta2_) * grads.head_bias * grads.head_bias;
  network.head_bias -= learning_rate_ * (m / bias1) / (std::sqrt(v / bias2) + eps_);
}

}  // namespace authnet::classifier

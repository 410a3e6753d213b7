#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "authnet/rng.hpp"

namespace authnet::classifier {

/// One LSTM layer's parameters. Gate rows are packed in the order
/// input, forget, candidate, output (4H rows total).
struct LstmLayer {
  Eigen::MatrixXd w_input;  // 4H x D_in
  Eigen::MatrixXd w_recur;  // 4H x H
  Eigen::VectorXd bias;     // 4H

  int hidden_size() const { return static_cast<int>(bias.size()) / 4; }
  int input_size() const { return static_cast<int>(w_input.cols()); }
};

/// Stacked LSTM with a single sigmoid readout on the final hidden state.
struct LstmNetwork {
  std::vector<LstmLayer> layers;
  Eigen::VectorXd head_weight;  // H_last
  double head_bias = 0.0;
  int input_dim = 0;

  static LstmNetwork init(int input_dim, const std::vector<int>& hidden_sizes,
                          rng::SplitMix64& gen);

  std::size_t parameter_count() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& values);
};

/// x[t] is D x B: one column per sequence in the batch.
using BatchSequence = std::vector<Eigen::MatrixXd>;

/// Per-timestep activations kept for backpropagation through time.
struct LayerCache {
  std::vector<Eigen::MatrixXd> gates;       // 4H x B, post-activation
  std::vector<Eigen::MatrixXd> cell;        // H x B, after mask blending
  std::vector<Eigen::MatrixXd> hidden;      // H x B, after mask blending
  std::vector<Eigen::MatrixXd> tanh_cell;  // tanh of the pre-blend cell
};

struct ForwardCache {
  const BatchSequence* input = nullptr;
  const Eigen::MatrixXd* mask = nullptr;  // T x B of {0,1}, or nullptr
  std::vector<LayerCache> layers;
  Eigen::VectorXd logits;  // B
  Eigen::VectorXd scores;  // B, sigmoid(logits)
};

/// Runs the stack over a batch. When `mask` is given, timesteps with mask 0
/// keep the previous hidden and cell state, so the readout at the last
/// timestep equals the state at each sequence's final valid step.
Eigen::VectorXd forward(const LstmNetwork& network, const BatchSequence& input,
                        ForwardCache* cache, const Eigen::MatrixXd* mask = nullptr);

struct Gradients {
  std::vector<LstmLayer> layers;  // same shapes as the network
  Eigen::VectorXd head_weight;
  double head_bias = 0.0;

  static Gradients zeros_like(const LstmNetwork& network);
};

/// Mean binary cross-entropy over the batch plus its parameter gradients.
/// Scores are clamped to [eps, 1-eps] before the loss; a clamped sample
/// contributes zero gradient.
double backward(const LstmNetwork& network, const ForwardCache& cache,
                const Eigen::VectorXd& labels, double clamp_eps, Gradients& grads);

class AdamOptimizer {
 public:
  AdamOptimizer(double learning_rate, double beta1, double beta2, double eps);

  void step(LstmNetwork& network, const Gradients& grads);

 private:
  double learning_rate_, beta1_, beta2_, eps_;
  long step_count_ = 0;
  bool initialized_ = false;
  Gradients first_moment_;
  Gradients second_moment_;
};

}  // namespace authnet::classifier

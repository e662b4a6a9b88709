#pragma once

// Shared-trunk actor-critic MLP over a flat parameter vector.
//
//   h0 = tanh(W0 x + b0)                         shared trunk
//   mean  = wa3 . tanh(Wa2 tanh(Wa1 h0 + ba1) + ba2) + ba3
//   value = wc3 . tanh(Wc2 tanh(Wc1 h0 + bc1) + bc2) + bc3
//   log_std: one free parameter (state independent)

#include <Eigen/Core>

#include <array>
#include <vector>

#include "dwq/errors.hpp"
#include "dwq/sme.hpp"

namespace dwq::rl {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

struct NetworkShape {
  int obs_dim = 2;
  int trunk = 512;
  int hidden1 = 256;
  int hidden2 = 128;

  void validate() const;
  bool operator==(const NetworkShape&) const = default;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Position of one weight matrix or bias vector inside the flat vector.
struct Block {
  int offset;
  int rows;
  int cols;
};

enum BlockId : int { W0, B0, WA1, BA1, WA2, BA2, WA3, BA3, WC1, BC1, WC2, BC2, WC3, BC3, LOG_STD, kNumBlocks };

struct PolicyOutput {
  double mean = 0.0;
  double log_std = 0.0;
  double value = 0.0;
};

/// Activations kept by forward_batch for the backward pass.
struct ForwardCache {
  MatrixXd x, h0, a1, a2, c1, c2;
  RowVectorXd mean, value;
};

class ActorCritic {
 public:
  explicit ActorCritic(const NetworkShape& shape = {});

  const NetworkShape& shape() const { return shape_; }
  int n_params() const { return static_cast<int>(params_.size()); }
  VectorXd& params() { return params_; }
  const VectorXd& params() const { return params_; }
  const std::array<Block, kNumBlocks>& blocks() const { return blocks_; }

  /// Orthogonal init: gain sqrt(2) on hidden layers, 0.01 on the policy
  /// head, 1 on the value head; zero biases; log_std = initial_log_std.
  void init(Rng& rng, double initial_log_std = 0.0);

  double log_std() const { return params_(blocks_[LOG_STD].offset); }
  void clamp_log_std();

  PolicyOutput forward(const VectorXd& obs) const;
  /// Columns of `obs` are observations.
  ForwardCache forward_batch(const MatrixXd& obs) const;
  /// Gradient of a loss with per-sample sensitivities d_mean, d_value and a
  /// direct sensitivity d_log_std.
  VectorXd backward(const ForwardCache& cache, const RowVectorXd& d_mean, const RowVectorXd& d_value,
                    double d_log_std) const;

  Eigen::Map<MatrixXd> block(BlockId id);
  Eigen::Map<const MatrixXd> block(BlockId id) const;

 private:
  NetworkShape shape_;
  std::array<Block, kNumBlocks> blocks_{};
  VectorXd params_;
};

/// Draws a random orthogonal (rows x cols) matrix scaled by `gain`.
MatrixXd orthogonal_matrix(int rows, int cols, double gain, Rng& rng);

}  // namespace dwq::rl

#include "dwq/rl/network.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>

namespace dwq::rl {

void NetworkShape::validate() const {
  if (obs_dim < 1 || trunk < 1 || hidden1 < 1 || hidden2 < 1) {
    throw InvalidArgument("network: every layer width must be >= 1");
  }
}

ActorCritic::ActorCritic(const NetworkShape& shape) : shape_(shape) {
  shape_.validate();
  const int t = shape.trunk, h1 = shape.hidden1, h2 = shape.hidden2;
  const std::array<std::pair<int, int>, kNumBlocks> dims{{{t, shape.obs_dim}, {t, 1}, {h1, t}, {h1, 1}, {h2, h1},
                                                          {h2, 1}, {1, h2}, {1, 1}, {h1, t}, {h1, 1}, {h2, h1},
                                                          {h2, 1}, {1, h2}, {1, 1}, {1, 1}}};
  int offset = 0;
  for (int i = 0; i < kNumBlocks; ++i) {
    blocks_[i] = {offset, dims[i].first, dims[i].second};
    offset += dims[i].first * dims[i].second;
  }
  params_ = VectorXd::Zero(offset);
}

Eigen::Map<MatrixXd> ActorCritic::block(BlockId id) {
  const Block& b = blocks_[id];
  return {params_.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<const MatrixXd> ActorCritic::block(BlockId id) const {
  const Block& b = blocks_[id];
  return {params_.data() + b.offset, b.rows, b.cols};
}

MatrixXd orthogonal_matrix(int rows, int cols, double gain, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const int big = std::max(rows, cols), small = std::min(rows, cols);
  MatrixXd g(big, small);
  for (int j = 0; j < small; ++j)
    for (int i = 0; i < big; ++i) g(i, j) = n(rng);
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(big, small);
  // Sign fix makes the distribution uniform (Haar).
  const VectorXd d = qr.matrixQR().diagonal();
  for (int j = 0; j < small; ++j)
    if (d(j) < 0) q.col(j) *= -1.0;
  return gain * (rows >= cols ? q : MatrixXd(q.transpose()));
}

void ActorCritic::init(Rng& rng, double initial_log_std) {
  params_.setZero();
  const double hidden = std::sqrt(2.0);
  for (auto [id, gain] : {std::pair{W0, hidden}, {WA1, hidden}, {WA2, hidden}, {WA3, 0.01}, {WC1, hidden},
                          {WC2, hidden}, {WC3, 1.0}}) {
    block(id) = orthogonal_matrix(blocks_[id].rows, blocks_[id].cols, gain, rng);
  }
  params_(blocks_[LOG_STD].offset) = initial_log_std;
  clamp_log_std();
}

void ActorCritic::clamp_log_std() {
  double& s = params_(blocks_[LOG_STD].offset);
  s = std::clamp(s, kLogStdMin, kLogStdMax);
}

ForwardCache ActorCritic::forward_batch(const MatrixXd& obs) const {
  if (obs.rows() != shape_.obs_dim) {
    throw DimensionMismatch("policy_forward: observation has " + std::to_string(obs.rows()) + " entries, expected " +
                            std::to_string(shape_.obs_dim));
  }
  ForwardCache c;
  c.x = obs;
  auto layer = [&](BlockId w, BlockId b, const MatrixXd& in) -> MatrixXd {
    MatrixXd z = block(w) * in;
    z.colwise() += block(b).col(0);
    return z.array().tanh().matrix();
  };
  c.h0 = layer(W0, B0, c.x);
  c.a1 = layer(WA1, BA1, c.h0);
  c.a2 = layer(WA2, BA2, c.a1);
  c.c1 = layer(WC1, BC1, c.h0);
  c.c2 = layer(WC2, BC2, c.c1);
  c.mean = (block(WA3) * c.a2).array() + block(BA3)(0, 0);
  c.value = (block(WC3) * c.c2).array() + block(BC3)(0, 0);
  return c;
}

PolicyOutput ActorCritic::forward(const VectorXd& obs) const {
  const ForwardCache c = forward_batch(obs);
  return {c.mean(0), log_std(), c.value(0)};
}

VectorXd ActorCritic::backward(const ForwardCache& c, const RowVectorXd& d_mean, const RowVectorXd& d_value,
                               double d_log_std) const {
  VectorXd g = VectorXd::Zero(params_.size());
  auto gblock = [&](BlockId id) {
    const Block& b = blocks_[id];
    return Eigen::Map<MatrixXd>(g.data() + b.offset, b.rows, b.cols);
  };

  // Walks one head back to the trunk and returns its contribution to dL/dh0.
  auto head = [&](const RowVectorXd& d_out, const MatrixXd& l1, const MatrixXd& l2, BlockId w1, BlockId b1,
                  BlockId w2, BlockId b2, BlockId w3, BlockId b3) -> MatrixXd {
    gblock(w3).noalias() = d_out * l2.transpose();
    gblock(b3)(0, 0) = d_out.sum();
    MatrixXd dz2 = (block(w3).transpose() * d_out).cwiseProduct((1.0 - l2.array().square()).matrix());
    gblock(w2).noalias() = dz2 * l1.transpose();
    gblock(b2) = dz2.rowwise().sum();
    MatrixXd dz1 = (block(w2).transpose() * dz2).cwiseProduct((1.0 - l1.array().square()).matrix());
    gblock(w1).noalias() = dz1 * c.h0.transpose();
    gblock(b1) = dz1.rowwise().sum();
    return block(w1).transpose() * dz1;
  };

  MatrixXd dh0 = head(d_mean, c.a1, c.a2, WA1, BA1, WA2, BA2, WA3, BA3);
  dh0 += head(d_value, c.c1, c.c2, WC1, BC1, WC2, BC2, WC3, BC3);
  const MatrixXd dz0 = dh0.cwiseProduct((1.0 - c.h0.array().square()).matrix());
  gblock(W0).noalias() = dz0 * c.x.transpose();
  gblock(B0) = dz0.rowwise().sum();
  g(blocks_[LOG_STD].offset) = d_log_std;
  return g;
}

}  // namespace dwq::rl

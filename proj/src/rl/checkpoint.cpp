#include "dwq/rl/checkpoint.hpp"

#include "dwq/io.hpp"

namespace dwq::rl {

namespace {

constexpr std::string_view kMagic{"DWQCKPT\0", 8};

void put_vector(io::ByteWriter& w, const VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v(i));
}

VectorXd get_vector(io::ByteReader& r, std::uint64_t n) {
  VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = r.f64();
  return v;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
  const ActorCritic layout(ck.shape);
  if (ck.params.size() != layout.n_params() || ck.adam.m.size() != ck.params.size() ||
      ck.adam.v.size() != ck.params.size()) {
    throw CheckpointShapeError("checkpoint: parameter count does not match the network shape");
  }
  io::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(kNumBlocks);
  for (const Block& b : layout.blocks()) {
    w.u32(static_cast<std::uint32_t>(b.rows));
    w.u32(static_cast<std::uint32_t>(b.cols));
  }
  for (int d : {ck.shape.obs_dim, ck.shape.trunk, ck.shape.hidden1, ck.shape.hidden2}) w.u32(static_cast<std::uint32_t>(d));

  const PpoConfig& c = ck.cfg;
  w.f64(c.clip_eps);
  w.f64(c.lr);
  for (int v : {c.n_envs, c.horizon, c.minibatch, c.epochs}) w.u32(static_cast<std::uint32_t>(v));
  for (double v : {c.discount, c.gae_lambda, c.value_coef, c.entropy_coef, c.max_grad_norm, c.initial_log_std, c.reward_scale}) w.f64(v);
  w.u32(static_cast<std::uint32_t>(c.checkpoint_every));

  w.u64(static_cast<std::uint64_t>(ck.iteration));
  w.u64(static_cast<std::uint64_t>(ck.total_steps));
  w.u64(ck.adam.t);
  w.f64(ck.adam.beta1);
  w.f64(ck.adam.beta2);
  w.f64(ck.adam.eps);
  w.u64(static_cast<std::uint64_t>(ck.params.size()));
  put_vector(w, ck.params);
  put_vector(w, ck.adam.m);
  put_vector(w, ck.adam.v);
  w.str(ck.rng_state);
  w.u64(io::fnv1a(w.data()));
  return w.data();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  io::ByteReader r(bytes);
  try {
    if (r.bytes(8) != kMagic) throw CheckpointCorruptError("checkpoint: bad magic bytes");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
      throw CheckpointVersionError("checkpoint: format version " + std::to_string(version) + ", expected " +
                                   std::to_string(kCheckpointVersion));
    }
    if (bytes.size() < 8 || io::fnv1a(bytes.substr(0, bytes.size() - 8)) !=
                                io::ByteReader(bytes.substr(bytes.size() - 8)).u64()) {
      throw CheckpointCorruptError("checkpoint: checksum mismatch");
    }
    const std::uint32_t n_blocks = r.u32();
    if (n_blocks != kNumBlocks) throw CheckpointShapeError("checkpoint: unexpected number of parameter blocks");
    std::vector<std::pair<std::uint32_t, std::uint32_t>> table(n_blocks);
    for (auto& [rows, cols] : table) {
      rows = r.u32();
      cols = r.u32();
    }
    Checkpoint ck;
    ck.shape.obs_dim = static_cast<int>(r.u32());
    ck.shape.trunk = static_cast<int>(r.u32());
    ck.shape.hidden1 = static_cast<int>(r.u32());
    ck.shape.hidden2 = static_cast<int>(r.u32());
    const ActorCritic layout(ck.shape);
    for (int i = 0; i < kNumBlocks; ++i) {
      if (static_cast<int>(table[i].first) != layout.blocks()[i].rows ||
          static_cast<int>(table[i].second) != layout.blocks()[i].cols) {
        throw CheckpointShapeError("checkpoint: shape table disagrees with the network shape");
      }
    }

    PpoConfig& c = ck.cfg;
    c.clip_eps = r.f64();
    c.lr = r.f64();
    c.n_envs = static_cast<int>(r.u32());
    c.horizon = static_cast<int>(r.u32());
    c.minibatch = static_cast<int>(r.u32());
    c.epochs = static_cast<int>(r.u32());
    c.discount = r.f64();
    c.gae_lambda = r.f64();
    c.value_coef = r.f64();
    c.entropy_coef = r.f64();
    c.max_grad_norm = r.f64();
    c.initial_log_std = r.f64();
    c.reward_scale = r.f64();
    c.checkpoint_every = static_cast<int>(r.u32());

    ck.iteration = static_cast<int>(r.u64());
    ck.total_steps = static_cast<std::int64_t>(r.u64());
    ck.adam.t = r.u64();
    ck.adam.beta1 = r.f64();
    ck.adam.beta2 = r.f64();
    ck.adam.eps = r.f64();
    const std::uint64_t n = r.u64();
    if (n != static_cast<std::uint64_t>(layout.n_params())) {
      throw CheckpointShapeError("checkpoint: parameter count does not match the shape table");
    }
    if (r.remaining() < 3 * 8 * n) throw CheckpointCorruptError("checkpoint: truncated parameter data");
    ck.params = get_vector(r, n);
    ck.adam.m = get_vector(r, n);
    ck.adam.v = get_vector(r, n);
    ck.rng_state = r.str();
    r.u64();  // checksum, verified above
    if (r.remaining() != 0) throw CheckpointCorruptError("checkpoint: trailing bytes");
    return ck;
  } catch (const io::ByteReader::Eof&) {
    throw CheckpointCorruptError("checkpoint: truncated file");
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  io::write_file_atomic(path, encode_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<int> expected_obs_dim) {
  Checkpoint ck = decode_checkpoint(io::read_file(path));
  if (expected_obs_dim && *expected_obs_dim != ck.shape.obs_dim) {
    throw CheckpointShapeError("checkpoint: network expects " + std::to_string(ck.shape.obs_dim) +
                               " observation entries, environment provides " + std::to_string(*expected_obs_dim));
  }
  return ck;
}

ActorCritic policy_from(const Checkpoint& ck) {
  ActorCritic net(ck.shape);
  if (ck.params.size() != net.n_params()) throw CheckpointShapeError("checkpoint: parameter count mismatch");
  net.params() = ck.params;
  return net;
}

}  // namespace dwq::rl

#include "dwq/rl/agent.hpp"

#include "dwq/env.hpp"
#include "dwq/rl/ppo.hpp"

namespace dwq::rl {

control::ControlAction PolicyController::act(const control::ControlObservation& obs, Rng& rng) {
  const PolicyOutput out = net_.forward(env::encode_observation(obs, normalize_, b_));
  return {sample_action(out.mean, out.log_std, rng, deterministic_).amplitude};
}

}  // namespace dwq::rl

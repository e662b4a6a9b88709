#pragma once

#include "dwq/control.hpp"
#include "dwq/rl/network.hpp"

namespace dwq::rl {

/// A trained network behind the controller interface. Sees exactly what the
/// training environment showed it.
class PolicyController final : public control::Controller {
 public:
  PolicyController(ActorCritic net, bool normalize_observations, double b, bool deterministic = true)
      : net_(std::move(net)), normalize_(normalize_observations), b_(b), deterministic_(deterministic) {}
  control::ControlAction act(const control::ControlObservation& obs, Rng& rng) override;
  std::string name() const override { return "drl"; }

 private:
  ActorCritic net_;
  bool normalize_;
  double b_;
  bool deterministic_;
};

}  // namespace dwq::rl

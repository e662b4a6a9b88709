#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "dwq/rl/checkpoint.hpp"

namespace dwq::rl {

struct TrainOptions {
  int iterations = 1;
  std::optional<std::filesystem::path> metrics_csv;  // rewritten atomically after every iteration
  std::optional<std::filesystem::path> checkpoint;   // every cfg.checkpoint_every iterations and at the end
  std::function<void(const IterationMetrics&)> on_iteration;
};

std::vector<IterationMetrics> train(PpoTrainer& trainer, const TrainOptions& opts);

/// Trailing moving average with window `w` (shorter at the start).
std::vector<double> moving_average(const std::vector<double>& v, int w);

}  // namespace dwq::rl

#include "dwq/rl/train.hpp"

#include "dwq/io.hpp"

namespace dwq::rl {

std::vector<IterationMetrics> train(PpoTrainer& trainer, const TrainOptions& opts) {
  if (opts.iterations < 1) throw InvalidArgument("train: iterations must be >= 1");
  std::vector<IterationMetrics> out;
  std::string csv = metrics_csv_header();
  const int every = trainer.config().checkpoint_every;
  for (int i = 0; i < opts.iterations; ++i) {
    out.push_back(trainer.iterate());
    csv += metrics_csv_row(out.back());
    if (opts.metrics_csv) io::write_file_atomic(*opts.metrics_csv, csv);
    if (opts.checkpoint && every > 0 && trainer.iteration() % every == 0) {
      save_checkpoint(*opts.checkpoint, trainer.snapshot());
    }
    if (opts.on_iteration) opts.on_iteration(out.back());
  }
  if (opts.checkpoint) save_checkpoint(*opts.checkpoint, trainer.snapshot());
  return out;
}

std::vector<double> moving_average(const std::vector<double>& v, int w) {
  if (w < 1) throw InvalidArgument("moving_average: window must be >= 1");
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    sum += v[i];
    if (i >= static_cast<std::size_t>(w)) sum -= v[i - w];
    out[i] = sum / static_cast<double>(std::min<std::size_t>(i + 1, w));
  }
  return out;
}

}  // namespace dwq::rl

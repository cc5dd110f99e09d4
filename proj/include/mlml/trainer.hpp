#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlml/dataset.hpp"
#include "mlml/error.hpp"
#include "mlml/model.hpp"
#include "mlml/numeric.hpp"
#include "mlml/sampler.hpp"

namespace mlml {

struct TrainConfig {
  Regime regime = Regime::kML2Plus;
  std::size_t batch_size = 10;
  int iterations = 3000;
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_decay_factor = 0.1;
  int decay_period = 1000;
  double margin = 0.2;
  int eval_every = 100;
  std::uint64_t seed = 1;
  bool pretrain = false;
  int pretrain_iterations = 1000;
  /// Members kept per group by hard class mining; 0 disables it.
  std::size_t hard_class_k = 0;
  int threads = 1;

  /// Batch size 10 for the group losses, 36 for the pair and triplet baselines.
  static TrainConfig defaults_for(Regime regime);
  /// Throws ConfigError naming the offending key.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
void from_json(const nlohmann::json& j, TrainConfig& c);

/// v ← μv + (g + λθ); θ ← θ − lr·v for every slot. Throws TrainingError
/// naming the slot when a gradient entry is not finite.
void sgd_step(ParamStore& params, double lr, double momentum, double weight_decay);

/// lr0 · factor^⌊iteration / period⌋.
double lr_schedule(int iteration, const TrainConfig& cfg);

struct EvalRecord {
  std::string phase;  // "pretrain" or "metric"
  int iteration = 0;  // steps completed within the phase
  double lr = 0.0;
  /// Mean training loss over the steps since the previous record.
  double train_loss = 0.0;
  std::optional<double> val_nmi;
  std::optional<double> val_recall_at_1;
};

struct TrainReport {
  std::vector<EvalRecord> records;
  /// Metric-phase iteration of the selected model; 0 when nothing was evaluated.
  int best_iteration = 0;
  std::optional<double> best_val_nmi;
  std::size_t skipped_groups = 0;
  double wall_clock_seconds = 0.0;
};

/// Everything except wall-clock time, so seeded runs serialize identically.
nlohmann::json to_json(const TrainReport& r);

struct TrainResult {
  EmbeddingModel best;
  EmbeddingModel last;
  TrainReport report;
};

/// Thrown when training stops early; carries the records gathered so far.
class TrainingAborted : public TrainingError {
 public:
  TrainingAborted(const std::string& what, TrainReport report)
      : TrainingError(what), report_(std::move(report)) {}
  const TrainReport& report() const noexcept { return report_; }

 private:
  TrainReport report_;
};

/// Optional pre-training of the trunk with per-label heads, then metric
/// learning under cfg.regime. Validation NMI and R@1 are measured every
/// cfg.eval_every metric steps and after the last one; the returned `best`
/// holds the weights with the highest validation NMI (earliest on ties).
/// encoder.input_dim must match the data. Throws ConfigError on a bad
/// configuration and TrainingAborted on a sampling or numerical failure.
TrainResult train(const Dataset& train_set, const Dataset& validation,
                  const TrainConfig& cfg, EncoderConfig encoder);

}  // namespace mlml

#pragma once

#include <cstdint>
#include <vector>

#include "omni/checkpoint/checkpoint.hpp"
#include "omni/nn/modules.hpp"

namespace omni {

// AdamW hyperparameters plus the learning-rate schedule: linear warmup from
// zero to the peak, then cosine decay down to floor_frac * peak by
// total_steps, flat afterwards.
struct OptimConfig {
  double peak_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
  int64_t warmup_steps = 0;
  int64_t total_steps = 1;
  double floor_frac = 0.1;
};

// lr as a function of the (1-based) step about to be applied; lr(0) == 0 and
// lr(warmup_steps) == peak exactly, nonincreasing afterwards.
double schedule_lr(const OptimConfig& cfg, int64_t step);

// Decoupled AdamW over registry parameters. Weight decay only touches
// parameters whose decay flag is set (biases and norm scales opt out), frozen
// parameters are never updated, and a parameter that received no gradient
// this step keeps both its value and its moments -- so a modality that sat
// out a batch is bit-identical afterwards.
class AdamW {
 public:
  AdamW(const OptimConfig& cfg, std::vector<Parameter*> params);

  // One update from the accumulated gradients; returns the lr applied.
  double step();
  void zero_grads();

  int64_t steps_done() const { return t_; }
  double last_lr() const { return last_lr_; }
  const OptimConfig& config() const { return cfg_; }

  // Moment export/import for checkpoints; import rejects size mismatches.
  OptState export_state() const;
  void import_state(const OptState& s);

 private:
  OptimConfig cfg_;
  std::vector<Parameter*> params_;
  OptState state_;
  int64_t t_ = 0;
  double last_lr_ = 0.0;
};

}  // namespace omni

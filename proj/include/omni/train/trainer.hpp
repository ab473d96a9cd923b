#pragma once

#include <map>
#include <string>
#include <vector>

#include "omni/model/model.hpp"
#include "omni/train/optimizer.hpp"
#include "omni/train/sampler.hpp"

namespace omni {

// System prompt prepended to every instruction-tuning sequence. Alignment
// sequences carry no system prompt by design.
inline constexpr const char* kInstructSystem = "Use the attached signal.";

// Per-phase step/batch/schedule settings; defaults are the tuned desk run.
struct PhaseSettings {
  int64_t steps = 500;
  int64_t batch = 8;
  double peak_lr = 6e-4;
  int64_t warmup_steps = 50;
  int64_t ckpt_every = 0;   // 0: final checkpoint only
  int64_t stop_after = 0;   // >0: interrupt this invocation after N steps,
                            // leaving a checkpoint to resume from
};

struct TrainSettings {
  ModelConfig model;
  uint64_t seed = 1;
  std::string data_dir = "data";
  std::string run_dir = "runs/default";
  uint64_t config_hash = 0;

  std::string expert_init = "image";    // "image" | "random" (stage II adoption)
  std::string instruct_mode = "joint";  // "joint" | "separate"
  Modality separate_modality = Modality::Image;
  ReplayMix replay_mix = ReplayMix::PerModality;
  bool stage2_replay = true;

  PhaseSettings lm_warmup{1200, 8, 3e-3, 120, 0, 0};
  PhaseSettings stage1{1000, 8, 3e-3, 100, 0, 0};
  PhaseSettings stage2{500, 8, 6e-4, 50, 0, 0};
  PhaseSettings stage3{500, 8, 6e-4, 50, 0, 0};
  PhaseSettings instruct{800, 8, 1.2e-3, 80, 0, 0};

  int64_t ledger_every = 100;  // frozen-hash audit cadence
  int64_t val_items = 16;      // held-out items per modality for stage reports
};

struct PhaseResult {
  std::string phase;
  int64_t steps_run = 0;  // steps executed by this invocation (resume-aware)
  double first_loss = 0.0;
  double final_loss = 0.0;
  int64_t trainable_params = 0;
  std::string checkpoint;
  std::map<std::string, double> numbers;  // val losses etc., merged into report
  // Mean routing weight per expert over the validation items, per modality.
  std::map<std::string, std::vector<double>> routing;
  std::vector<double> losses;             // per-step batch losses, this invocation
};

// Phase ids accepted by Trainer::run: "warmup", "I", "II", "III", "instruct".
// Each phase trains under its freeze policy, emits line-delimited metric
// records and a report.json into <run_dir>/<phase dir>/, and checkpoints at
// the end (plus every ckpt_every steps). A partial checkpoint in the phase
// directory makes run() resume from it bit-exactly; a completed phase
// (final checkpoint plus report) is reused without retraining, with
// steps_run = 0 in the returned result.
class Trainer {
 public:
  explicit Trainer(const TrainSettings& s);

  PhaseResult run(const std::string& phase);

  // Directory and final-checkpoint conventions, also used for prerequisites.
  std::string phase_dir(const std::string& phase) const;
  std::string phase_ckpt(const std::string& phase) const;
  const PhaseSettings& settings_for(const std::string& phase) const;

  // Sets frozen flags for a phase family ("warmup"/"instruct": decoder
  // trainable; "I"/"II"/"III": tokenizers+projection trainable) and returns
  // the trainable value count.
  static int64_t apply_freeze_policy(const std::string& phase, ParamRegistry& reg);

  const TrainSettings& settings() const { return s_; }

 private:
  TrainSettings s_;
};

}  // namespace omni

#pragma once

#include <map>
#include <string>

#include "omni/train/trainer.hpp"

namespace omni {

// One run's full configuration: the desk-tuned defaults overlaid with an INI
// file ([model], [data], [stages], [eval], [io] sections). Unknown sections
// or keys are rejected, so typos cannot silently fall back to defaults.
struct RunConfig {
  TrainSettings train;          // model, phase schedules, seeds, directories
  uint64_t data_seed = 1;       // generation seed ([data] seed)
  int64_t size_default = 256;   // items per modality unless overridden
  std::map<Modality, int64_t> size_override;
  std::string eval_task = "all";
  int64_t eval_items = 32;
  int eval_max_new = 48;
  int64_t ablate_eval_items = 8;

  // Per-modality dataset sizes with overrides applied.
  std::map<Modality, int64_t> sizes() const;
};

RunConfig default_config();

// Parse INI text over the defaults. ConfigError names the offending
// section/key/value.
RunConfig parse_config(const std::string& text);
// Same, from a file; a missing file is a ConfigError.
RunConfig load_config(const std::string& path);

// Canonical fully-resolved rendering: every key explicit, fixed order.
// parse_config(render_config(c)) reproduces c.
std::string render_config(const RunConfig& c);

// FNV-1a over the canonical rendering; recorded in checkpoints.
uint64_t config_hash(const RunConfig& c);

}  // namespace omni

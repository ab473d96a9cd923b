#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "omni/nn/modules.hpp"

namespace omni {

// Training state carried alongside the parameters so a resumed run continues
// bit-exactly: which phase, how many steps in, and where the sampler RNG was.
struct CheckpointMeta {
  std::string phase;
  uint64_t step = 0;
  uint64_t config_hash = 0;
  uint64_t rng_state = 0;
};

// First/second AdamW moments for one parameter, stored f32 like the weights.
struct OptSlot {
  std::vector<float> m, v;
};

// Optimizer state keyed by parameter name. `step` is the global AdamW step
// that drives bias correction.
struct OptState {
  int64_t step = 0;
  std::map<std::string, OptSlot> slots;
};

std::string checkpoint_path(const std::string& run_dir, int64_t step);

// Atomic save of every registry parameter plus optional optimizer moments.
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamRegistry& reg, const OptState* opt = nullptr);

// What a load touched; `missing` is only populated with allow_partial.
struct LoadReport {
  CheckpointMeta meta;
  std::vector<std::string> loaded;   // copied into the registry
  std::vector<std::string> skipped;  // in file but excluded or unknown
  std::vector<std::string> missing;  // in registry but absent from file
};

// Copies file entries into matching registry parameters (values and frozen
// flags, bit-exact) and fills `opt` if moments were saved. Entries whose name
// starts with an exclude prefix are skipped, as are registry parameters under
// such a prefix when checking coverage -- that is how a larger model adopts a
// smaller stage's weights while leaving new experts at their fresh init.
// Without allow_partial, any uncovered registry parameter is an error.
LoadReport load_checkpoint(const std::string& path, ParamRegistry& reg,
                           OptState* opt = nullptr,
                           const std::vector<std::string>& exclude_prefixes = {},
                           bool allow_partial = false);

// Metadata without touching any parameters (stage prerequisite checks).
CheckpointMeta peek_checkpoint(const std::string& path);

}  // namespace omni

#pragma once

#include <map>
#include <string>
#include <vector>

#include "omni/data/manifest.hpp"

namespace omni {

// Which modalities a stage introduces and which it replays from earlier
// stages. The sets are fixed by the curriculum; steps/lr live in the phase
// settings, not here.
struct StagePlan {
  std::string id;  // "I", "II", "III"
  std::vector<Modality> new_modalities;
  std::vector<Modality> replay_modalities;
};

// Canonical three-stage curriculum; unknown id throws ArgError.
StagePlan stage_plan(const std::string& id);

// How replay examples are mixed in. PerModality draws the modality uniformly
// over new+replay (every active modality equally likely). FiftyFifty first
// flips old-vs-new, then draws uniformly inside the chosen group.
enum class ReplayMix { PerModality, FiftyFifty };
ReplayMix replay_mix_from_name(const std::string& s);
const char* replay_mix_name(ReplayMix m);

// Deterministic batch source over loaded manifests. Draw order: modality,
// then item index, uniform at each level; the rng state round-trips through
// checkpoints so a resumed run sees the identical example sequence.
class StageSampler {
 public:
  StageSampler(const std::vector<Modality>& new_mods,
               const std::vector<Modality>& replay_mods,
               const std::map<Modality, Manifest>& datasets, uint64_t seed,
               ReplayMix mix = ReplayMix::PerModality);

  const SceneItem& next();
  const std::vector<Modality>& active() const { return active_; }

  uint64_t rng_state() const { return rng_.state(); }
  void set_rng_state(uint64_t s) { rng_.set_state(s); }

 private:
  const std::map<Modality, Manifest>& datasets_;
  std::vector<Modality> active_;  // canonical order, deduplicated
  std::vector<Modality> new_, replay_;
  ReplayMix mix_;
  Rng rng_;
};

}  // namespace omni

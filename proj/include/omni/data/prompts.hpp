#pragma once

#include <string>
#include <vector>

#include "omni/core/rng.hpp"
#include "omni/data/modality.hpp"
#include "omni/data/scene.hpp"

namespace omni {

// Instruction templates. The wording below is part of the external contract
// (checkpoints trained against one phrasing do not transfer to another), so
// tests pin these strings byte for byte.
enum class TaskKind { Caption, OpenQa, OptionQa, Region, Imu, Fmri };

const char* task_name(TaskKind t);
TaskKind task_from_name(const std::string& s);

// Caption requests for IMU/fMRI use their dedicated templates.
TaskKind caption_task_for(Modality m);

// question/options are only consulted by the QA tasks.
std::string render_prompt(TaskKind task, Modality modality,
                          const std::string& question = "",
                          const std::string& options = "");

// "(A) red (B) green (C) blue (D) small"
std::string format_options(const std::vector<std::string>& options);

struct OptionSet {
  std::vector<std::string> options;  // size 4
  int gold = 0;                      // index of the correct option
  char gold_letter() const { return static_cast<char>('A' + gold); }
};

// Gold answer plus three distinct distractors from the closed vocabulary;
// the gold position is drawn uniformly, so letter-frequency shortcuts score
// at chance.
OptionSet build_options(const QaItem& qa, Rng& rng);

}  // namespace omni

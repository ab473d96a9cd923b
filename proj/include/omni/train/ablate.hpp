#pragma once

#include <map>
#include <string>
#include <vector>

#include "omni/train/trainer.hpp"

namespace omni {

struct AblationSettings {
  TrainSettings base;    // every row starts from these settings
  std::string out_dir;   // table files plus one run directory per row
  int64_t eval_items = 8;
};

struct AblationRow {
  std::string label;
  std::map<std::string, double> metrics;  // keyed by table column
};

struct AblationTable {
  std::string axis;
  uint64_t data_seed = 0;   // from the image manifest; shared by every row
  uint64_t train_seed = 0;
  std::vector<std::string> columns;
  std::vector<AblationRow> rows;
};

// Controlled sweeps along one axis, every row sharing data, seed and the
// untouched settings. Axes:
//   mode     - instruction tuning jointly over all modalities vs one tuned
//              model per modality; rows report caption EM and QA accuracy
//              per modality
//   init     - stage-II experts adopted from the image expert vs freshly
//              initialized
//   experts  - expert count K in {1,3,5,7}
//   router   - soft / sparse / constant mixing
//   encoder  - frozen vs trainable shared encoder
// Alignment axes train through stage III and report per-modality perplexity.
// Shared prerequisite phases are trained once under <out_dir>/base and
// copied into the row directories. Writes table.txt, table.csv and
// table.json into out_dir. Unknown axis throws ArgError.
AblationTable run_ablation(const std::string& axis, const AblationSettings& s);

// Layout helpers shared with tests: the rows each axis must produce.
std::vector<std::string> ablation_row_labels(const std::string& axis);

}  // namespace omni

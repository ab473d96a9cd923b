#pragma once

#include <map>
#include <string>
#include <vector>

#include "omni/data/scene.hpp"
#include "omni/model/model.hpp"

namespace omni {

// Held-out evaluation over freshly rendered eval-split items; everything is
// deterministic in (seed, items), so two evals of one checkpoint agree.
struct EvalOptions {
  int64_t items = 32;  // per modality
  uint64_t seed = 1;   // data seed; the eval split derives from it
  int max_new = 48;    // generation budget for captions
  // When true, captions are generated from the instruction template the
  // instruction-tuned model was trained on instead of the bare prefix.
  bool instruction_format = false;
  RenderGeom geom;
};

struct ModalityEval {
  double caption_em = 0.0;
  double qa_accuracy = 0.0;
  double perplexity = 0.0;
  std::vector<double> mean_weights;  // mean routing weight per expert
};

struct EvalReport {
  std::map<std::string, ModalityEval> by_modality;
  // Macro averages over the evaluated modalities.
  double caption_em = 0.0;
  double qa_accuracy = 0.0;
  double perplexity = 0.0;
};

// task: "caption" | "qa" | "perplexity" | "all". Routing statistics are
// gathered in every mode. Unknown task throws ArgError.
EvalReport evaluate(Model& model, const std::vector<Modality>& mods,
                    const std::string& task, const EvalOptions& opt);

}  // namespace omni

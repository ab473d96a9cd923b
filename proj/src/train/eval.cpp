#include "omni/train/eval.hpp"

#include <cmath>

#include "omni/data/prompts.hpp"
#include "omni/train/trainer.hpp"

namespace omni {

namespace {

// Instruction-format greedy caption: [q_bar | BOS sys ins] -> text.
std::string instructed_caption(Model& model, Modality m, const Tensor& signal,
                               int max_new) {
  AssembledSequence prompt;
  prompt.prefix = model.project(m, signal).tokens.detach();
  prompt.order = {m};
  prompt.ids = {kBos};
  for (int32_t id : encode_text(kInstructSystem)) prompt.ids.push_back(id);
  for (int32_t id : encode_text(render_prompt(caption_task_for(m), m)))
    prompt.ids.push_back(id);
  prompt.loss_mask.assign(prompt.ids.size(), 0);
  return model.decoder().generate(prompt, max_new);
}

}  // namespace

EvalReport evaluate(Model& model, const std::vector<Modality>& mods,
                    const std::string& task, const EvalOptions& opt) {
  bool do_cap = task == "caption" || task == "all";
  bool do_qa = task == "qa" || task == "all";
  bool do_ppl = task == "perplexity" || task == "all";
  if (!do_cap && !do_qa && !do_ppl)
    throw ArgError("unknown eval task '" + task +
                   "' (expected caption, qa, perplexity or all)");
  if (mods.empty()) throw ArgError("evaluate: no modalities");
  if (opt.items < 1) throw ArgError("evaluate: items must be positive");

  int64_t experts = model.config().upm.experts;
  int64_t n_tok = model.config().upm.num_tokens;
  EvalReport rep;
  for (Modality m : mods) {
    ModalityEval me;
    me.mean_weights.assign(static_cast<size_t>(experts), 0.0);
    double nll_sum = 0.0;
    for (int64_t i = 0; i < opt.items; ++i) {
      SceneItem item =
          make_item(m, opt.seed, "eval", static_cast<uint64_t>(i), opt.geom);

      ProjectorOutput out = model.project(m, item.signal);
      for (int64_t r = 0; r < n_tok; ++r)
        for (int64_t k = 0; k < experts; ++k)
          me.mean_weights[static_cast<size_t>(k)] +=
              out.weights.at({r, k}) /
              static_cast<double>(n_tok * opt.items);

      if (do_cap) {
        std::string gen =
            opt.instruction_format
                ? instructed_caption(model, m, item.signal, opt.max_new)
                : model.caption(m, item.signal, opt.max_new);
        if (gen == item.caption) me.caption_em += 1.0;
      }
      if (do_ppl)
        nll_sum += model.alignment_loss(m, item.signal, item.caption).scalar();
      if (do_qa) {
        const QaItem& qa = item.qa[static_cast<size_t>(i) % item.qa.size()];
        Rng orng = derive_rng(opt.seed,
                              std::string("eval/options/") + modality_name(m),
                              static_cast<uint64_t>(i));
        OptionSet set = build_options(qa, orng);
        std::string question = render_prompt(TaskKind::OptionQa, m, qa.question,
                                             format_options(set.options));
        int best = 0;
        double best_lp = 0.0;
        for (int c = 0; c < 4; ++c) {
          double lp = model.option_logprob({{m, item.signal}}, kInstructSystem,
                                           question,
                                           std::string(1, static_cast<char>('A' + c)));
          if (c == 0 || lp > best_lp) {
            best = c;
            best_lp = lp;
          }
        }
        if (best == set.gold) me.qa_accuracy += 1.0;
      }
    }
    double n = static_cast<double>(opt.items);
    me.caption_em /= n;
    me.qa_accuracy /= n;
    me.perplexity = do_ppl ? std::exp(nll_sum / n) : 0.0;
    rep.by_modality[modality_name(m)] = me;
  }

  double nm = static_cast<double>(mods.size());
  for (const auto& [name, me] : rep.by_modality) {
    rep.caption_em += me.caption_em / nm;
    rep.qa_accuracy += me.qa_accuracy / nm;
    rep.perplexity += me.perplexity / nm;
  }
  return rep;
}

}  // namespace omni

#include "omni/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "omni/checkpoint/checkpoint.hpp"
#include "omni/core/ops.hpp"
#include "omni/data/prompts.hpp"

namespace omni {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

bool is_stage(const std::string& p) { return p == "I" || p == "II" || p == "III"; }

// Highest ckpt_<n>.olmc in `dir` with n < target, or 0 if none.
int64_t latest_partial(const std::string& dir, int64_t target) {
  int64_t best = 0;
  if (!fs::exists(dir)) return 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string name = e.path().filename().string();
    if (name.rfind("ckpt_", 0) != 0 || name.size() <= 10) continue;
    if (name.substr(name.size() - 5) != ".olmc") continue;
    std::string digits = name.substr(5, name.size() - 10);
    if (digits.empty() ||
        digits.find_first_not_of("0123456789") != std::string::npos)
      continue;
    int64_t n = std::stoll(digits);
    if (n > best && n < target) best = n;
  }
  return best;
}

Manifest load_dataset(const std::string& data_dir, Modality m,
                      const std::string& phase) {
  std::string path = manifest_path(data_dir, m);
  if (!fs::exists(path))
    throw PreconditionError("phase " + phase + " needs the " +
                            std::string(modality_name(m)) +
                            " dataset: expected manifest at '" + path +
                            "'; run generate-data first");
  return read_manifest(path);
}

// (instruction, answer) for one drawn training example.
std::pair<std::string, std::string> draw_turn(const SceneItem& item, Rng& rng) {
  switch (rng.next_below(3)) {
    case 0:
      return {render_prompt(caption_task_for(item.modality), item.modality),
              item.caption};
    case 1: {
      const QaItem& qa = item.qa[rng.next_below(item.qa.size())];
      return {render_prompt(TaskKind::OpenQa, item.modality, qa.question),
              qa.answer};
    }
    default: {
      const QaItem& qa = item.qa[rng.next_below(item.qa.size())];
      OptionSet set = build_options(qa, rng);
      return {render_prompt(TaskKind::OptionQa, item.modality, qa.question,
                            format_options(set.options)),
              std::string(1, set.gold_letter())};
    }
  }
}

}  // namespace

Trainer::Trainer(const TrainSettings& s) : s_(s) {
  if (s_.expert_init != "image" && s_.expert_init != "random")
    throw ConfigError("expert_init must be image or random, got '" +
                      s_.expert_init + "'");
  if (s_.instruct_mode != "joint" && s_.instruct_mode != "separate")
    throw ConfigError("instruct_mode must be joint or separate, got '" +
                      s_.instruct_mode + "'");
}

std::string Trainer::phase_dir(const std::string& phase) const {
  std::string leaf;
  if (phase == "warmup") leaf = "warmup";
  else if (phase == "I") leaf = "stageI";
  else if (phase == "II") leaf = "stageII";
  else if (phase == "III") leaf = "stageIII";
  else if (phase == "instruct") leaf = "instruct";
  else throw ArgError("unknown phase '" + phase + "'");
  return s_.run_dir + "/" + leaf;
}

const PhaseSettings& Trainer::settings_for(const std::string& phase) const {
  if (phase == "warmup") return s_.lm_warmup;
  if (phase == "I") return s_.stage1;
  if (phase == "II") return s_.stage2;
  if (phase == "III") return s_.stage3;
  if (phase == "instruct") return s_.instruct;
  throw ArgError("unknown phase '" + phase + "'");
}

std::string Trainer::phase_ckpt(const std::string& phase) const {
  return checkpoint_path(phase_dir(phase), settings_for(phase).steps);
}

int64_t Trainer::apply_freeze_policy(const std::string& phase,
                                     ParamRegistry& reg) {
  reg.set_frozen("", true);
  if (is_stage(phase)) {
    reg.set_frozen("tok.", false);
    reg.set_frozen("upm.", false);
  } else if (phase == "warmup" || phase == "instruct") {
    reg.set_frozen("dec.", false);
    // conditioning codes exist during warmup only
    if (reg.find("warm.codes")) reg.set_frozen("warm.", false);
  } else {
    throw ArgError("unknown phase '" + phase + "'");
  }
  return reg.count_values(true);
}

PhaseResult Trainer::run(const std::string& phase) {
  const PhaseSettings& ps = settings_for(phase);
  const std::string dir = phase_dir(phase);
  fs::create_directories(dir);
  auto t0 = std::chrono::steady_clock::now();

  // A phase that already ran to completion is reused as-is; delete the phase
  // directory to retrain. Interrupted runs fall through and resume.
  if (fs::exists(checkpoint_path(dir, ps.steps)) &&
      fs::exists(dir + "/report.json")) {
    json rep = json::parse(std::ifstream(dir + "/report.json"));
    if (!rep.value("interrupted", false)) {
      PhaseResult done;
      done.phase = phase;
      done.first_loss = rep.value("first_loss", 0.0);
      done.final_loss = rep.value("final_loss", 0.0);
      done.trainable_params = rep.value("trainable_params", int64_t{0});
      done.checkpoint = checkpoint_path(dir, ps.steps);
      for (const auto& [k, v] : rep.items())
        if (k.rfind("val_loss_", 0) == 0) done.numbers[k] = v.get<double>();
      if (rep.contains("routing"))
        for (const auto& [k, v] : rep["routing"].items())
          done.routing[k] = v.get<std::vector<double>>();
      return done;
    }
  }

  // Model shaped for the phase: one expert until stage II mixes several.
  ModelConfig mc = s_.model;
  if (phase == "warmup" || phase == "I") mc.upm.experts = 1;
  Model model(mc, s_.seed);

  if (phase == "warmup") {
    Rng crng = derive_rng(s_.seed, "init/warm-codes", 0);
    model.params().add(
        "warm.codes",
        Tensor::randn({kNumScenes, mc.upm.num_tokens * mc.upm.lm_dim}, crng,
                      0.02));
  } else if (phase == "I") {
    if (!fs::exists(phase_ckpt("warmup"))) run("warmup");
    load_checkpoint(phase_ckpt("warmup"), model.params());
  } else if (phase == "II") {
    std::string prev = phase_ckpt("I");
    if (!fs::exists(prev))
      throw PreconditionError(
          "stage II requires the stage-I checkpoint at '" + prev +
          "'; run train --stage I first");
    // Router heads are sized by expert count, so they always restart fresh;
    // experts restart fresh too under random init.
    std::vector<std::string> exclude{"upm.router"};
    if (s_.expert_init == "random") exclude.push_back("upm.expert");
    load_checkpoint(prev, model.params(), nullptr, exclude, true);
    if (s_.expert_init == "image") model.projector().broadcast_expert_weights(0);
  } else if (phase == "III") {
    std::string prev = phase_ckpt("II");
    if (!fs::exists(prev))
      throw PreconditionError(
          "stage III requires the stage-II checkpoint at '" + prev +
          "'; run train --stage II first");
    load_checkpoint(prev, model.params());
  } else if (phase == "instruct") {
    std::string prev = phase_ckpt("III");
    if (!fs::exists(prev))
      throw PreconditionError(
          "instruction tuning requires the stage-III checkpoint at '" + prev +
          "'; run train --stage III first");
    load_checkpoint(prev, model.params());
  }

  PhaseResult res;
  res.phase = phase;
  res.trainable_params = apply_freeze_policy(phase, model.params());
  if (is_stage(phase) && !s_.model.enc.frozen) {
    model.params().set_frozen("enc.", false);  // trainable-encoder ablation
    res.trainable_params = model.params().count_values(true);
  }

  // Frozen-prefix baseline hashes, audited every ledger_every steps.
  std::vector<std::pair<std::string, uint64_t>> ledger;
  {
    std::vector<std::string> frozen_pfx;
    if (is_stage(phase)) {
      frozen_pfx = {"dec."};
      if (s_.model.enc.frozen) frozen_pfx.push_back("enc.");
    } else {
      frozen_pfx = {"tok.", "enc.", "upm."};
    }
    for (const auto& p : frozen_pfx)
      ledger.emplace_back(p, model.params().content_hash(p));
  }
  auto audit_ledger = [&](int64_t step) {
    for (const auto& [pfx, h] : ledger)
      if (model.params().content_hash(pfx) != h)
        throw NumericalError("frozen parameters under '" + pfx +
                             "' changed by step " + std::to_string(step));
  };

  // Data and the single phase rng that drives every draw.
  std::map<Modality, Manifest> data;
  std::vector<Modality> new_mods, replay_mods;
  if (is_stage(phase)) {
    StagePlan plan = stage_plan(phase);
    new_mods = plan.new_modalities;
    replay_mods = plan.replay_modalities;
    if (phase == "II" && !s_.stage2_replay) replay_mods.clear();
  } else if (phase == "instruct") {
    if (s_.instruct_mode == "joint")
      new_mods.assign(kAllModalities.begin(), kAllModalities.end());
    else
      new_mods = {s_.separate_modality};
  }
  for (Modality m : new_mods) data.emplace(m, load_dataset(s_.data_dir, m, phase));
  for (Modality m : replay_mods)
    data.emplace(m, load_dataset(s_.data_dir, m, phase));

  Rng rng = derive_rng(s_.seed, "train/" + phase, 0);
  std::unique_ptr<StageSampler> sampler;
  if (!data.empty())
    sampler = std::make_unique<StageSampler>(new_mods, replay_mods, data,
                                             rng.state(), s_.replay_mix);

  std::vector<Parameter*> trainable;
  for (auto& p : model.params().all())
    if (!p->frozen) trainable.push_back(p.get());
  OptimConfig oc;
  oc.peak_lr = ps.peak_lr;
  oc.warmup_steps = ps.warmup_steps;
  oc.total_steps = ps.steps;
  AdamW opt(oc, trainable);

  // Resume from the newest partial checkpoint, if any.
  int64_t start = latest_partial(dir, ps.steps);
  if (start > 0) {
    OptState ost;
    LoadReport rep = load_checkpoint(checkpoint_path(dir, start),
                                     model.params(), &ost);
    opt.import_state(ost);
    if (sampler) sampler->set_rng_state(rep.meta.rng_state);
    rng.set_state(rep.meta.rng_state);
  }

  std::ofstream metrics(dir + "/metrics.jsonl",
                        start > 0 ? std::ios::app : std::ios::trunc);
  // CSV mirror of the loss curve for external plotting tools.
  std::ofstream curve(dir + "/loss.csv",
                      start > 0 ? std::ios::app : std::ios::trunc);
  if (start == 0) curve << "step,loss,lr\n";

  const int64_t n_tokens = mc.upm.num_tokens, lm_dim = mc.upm.lm_dim;
  Tensor* codes = phase == "warmup" ? &model.params().at("warm.codes").value
                                    : nullptr;

  auto save = [&](int64_t step) {
    OptState ost = opt.export_state();
    // sampler and rng share one stream; persist whichever is advancing
    uint64_t state = sampler ? sampler->rng_state() : rng.state();
    save_checkpoint(checkpoint_path(dir, step),
                    {phase, static_cast<uint64_t>(step), s_.config_hash, state},
                    model.params(), &ost);
  };

  // Any numerical failure — the op-level finite guards fire first — leaves a
  // snapshot of the state that produced it before propagating.
  auto abort_with_snapshot = [&](int64_t step, const std::string& what) {
    std::string snap = dir + "/abort_" + std::to_string(step) + ".olmc";
    OptState ost = opt.export_state();
    save_checkpoint(snap,
                    {phase, static_cast<uint64_t>(step), s_.config_hash,
                     sampler ? sampler->rng_state() : rng.state()},
                    model.params(), &ost);
    throw NumericalError(what + " at step " + std::to_string(step) +
                         "; snapshot saved to '" + snap + "'");
  };

  for (int64_t step = start + 1; step <= ps.steps; ++step) {
    if (ps.stop_after > 0 && res.steps_run >= ps.stop_after) break;
    opt.zero_grads();
    Tensor batch_loss;
    double loss = 0.0, lr = 0.0;
    std::map<std::string, std::pair<double, int>> by_mod;
    try {
      for (int64_t b = 0; b < ps.batch; ++b) {
        Tensor li;
        std::string mod_key;
        if (phase == "warmup") {
          int idx = static_cast<int>(rng.next_below(kNumScenes));
          std::string cap = caption_for(scene_from_index(idx));
          Tensor prefix = reshape(
              embedding_rows(*codes, {static_cast<int32_t>(idx)}),
              {n_tokens, lm_dim});
          li = model.decoder().loss(
              model.decoder().assemble_alignment(prefix, Modality::Image, cap));
          mod_key = "text";
        } else if (is_stage(phase)) {
          const SceneItem& item = sampler->next();
          li = model.alignment_loss(item.modality, item.signal, item.caption);
          mod_key = modality_name(item.modality);
        } else {
          const SceneItem& item = sampler->next();
          // aux draws ride the sampler's stream so one state covers resume
          Rng aux(sampler->rng_state());
          auto [ins, ans] = draw_turn(item, aux);
          sampler->set_rng_state(aux.state());
          li = model.instruction_loss({{item.modality, item.signal}},
                                      kInstructSystem, {{ins, ans}});
          mod_key = modality_name(item.modality);
        }
        double lval = li.scalar();
        auto& agg = by_mod[mod_key];
        agg.first += lval;
        agg.second += 1;
        batch_loss = b == 0 ? li : add(batch_loss, li);
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(ps.batch));
      loss = batch_loss.scalar();
      if (!std::isfinite(loss))
        throw NumericalError("non-finite batch loss");
      batch_loss.backward();
      lr = opt.step();
    } catch (const NumericalError& e) {
      abort_with_snapshot(step, e.what());
    }

    res.losses.push_back(loss);
    if (res.steps_run == 0) res.first_loss = loss;
    res.steps_run += 1;
    res.final_loss = loss;

    json rec{{"step", step}, {"phase", phase}, {"loss", loss}, {"lr", lr}};
    json bm = json::object();
    for (const auto& [k, v] : by_mod) bm[k] = v.first / v.second;
    rec["by_modality"] = bm;
    metrics << rec.dump() << "\n";
    curve << step << "," << loss << "," << lr << "\n";

    if (s_.ledger_every > 0 &&
        (step % s_.ledger_every == 0 || step == ps.steps))
      audit_ledger(step);
    if (ps.ckpt_every > 0 && step % ps.ckpt_every == 0 && step < ps.steps)
      save(step);
  }
  metrics.flush();
  int64_t done = start + res.steps_run;
  save(done);
  res.checkpoint = checkpoint_path(dir, done);
  if (done < ps.steps) {
    // interrupted invocation: leave the resume point and a stub report
    json stub{{"phase", phase},
              {"steps", ps.steps},
              {"steps_run", res.steps_run},
              {"interrupted", true},
              {"checkpoint", res.checkpoint}};
    std::ofstream(dir + "/report.json") << stub.dump(2) << "\n";
    return res;
  }

  // Held-out validation losses and mean routing weights per active modality
  // (fresh eval-split items).
  if (!new_mods.empty() && s_.val_items > 0) {
    std::vector<Modality> active = new_mods;
    active.insert(active.end(), replay_mods.begin(), replay_mods.end());
    for (Modality m : active) {
      double sum = 0.0;
      std::vector<double> wsum(static_cast<size_t>(mc.upm.experts), 0.0);
      for (int64_t i = 0; i < s_.val_items; ++i) {
        SceneItem it = make_item(m, s_.seed, "eval", static_cast<uint64_t>(i),
                                 RenderGeom{});
        if (phase == "instruct") {
          std::string ins = render_prompt(caption_task_for(m), m);
          sum += model
                     .instruction_loss({{m, it.signal}}, kInstructSystem,
                                       {{ins, it.caption}})
                     .scalar();
        } else {
          sum += model.alignment_loss(m, it.signal, it.caption).scalar();
        }
        Tensor w = model.project(m, it.signal).weights;
        for (int64_t r = 0; r < n_tokens; ++r)
          for (int64_t k = 0; k < mc.upm.experts; ++k)
            wsum[static_cast<size_t>(k)] +=
                w.at({r, k}) / static_cast<double>(n_tokens * s_.val_items);
      }
      res.numbers[std::string("val_loss_") + modality_name(m)] =
          sum / static_cast<double>(s_.val_items);
      res.routing[modality_name(m)] = wsum;
    }
  }

  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t0)
                    .count();
  json report{{"phase", phase},
              {"steps", ps.steps},
              {"steps_run", res.steps_run},
              {"first_loss", res.first_loss},
              {"final_loss", res.final_loss},
              {"trainable_params", res.trainable_params},
              {"checkpoint", res.checkpoint},
              {"wall_seconds", wall},
              {"replay", is_stage(phase) ? (phase != "II" || s_.stage2_replay)
                                         : false},
              {"expert_init", s_.expert_init},
              {"instruct_mode", s_.instruct_mode}};
  for (const auto& [k, v] : res.numbers) report[k] = v;
  json routing = json::object();
  for (const auto& [k, v] : res.routing) routing[k] = v;
  report["routing"] = routing;
  std::ofstream(dir + "/report.json") << report.dump(2) << "\n";
  return res;
}

}  // namespace omni

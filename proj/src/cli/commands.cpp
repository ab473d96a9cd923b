#include "omni/cli/commands.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <json.hpp>

#include "omni/checkpoint/checkpoint.hpp"
#include "omni/cli/config.hpp"
#include "omni/train/ablate.hpp"
#include "omni/train/eval.hpp"

namespace omni {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
};

RunConfig resolve(const Common& c) {
  RunConfig rc =
      c.config_path.empty() ? default_config() : load_config(c.config_path);
  if (c.seed_set) {
    rc.data_seed = c.seed;
    rc.train.seed = c.seed;
  }
  return rc;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "INI configuration file");
  cmd->add_option("--seed", c.seed, "override data and training seeds")
      ->each([&c](const std::string&) { c.seed_set = true; });
  cmd->add_option("--out", c.out, "override the command's output directory");
}

void write_resolved(const RunConfig& rc, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream(dir + "/config.resolved.ini") << render_config(rc);
}

int cmd_generate(const Common& c) {
  RunConfig rc = resolve(c);
  std::string dir = c.out.empty() ? rc.train.data_dir : c.out;
  GenerateOptions opt;
  opt.seed = rc.data_seed;
  opt.counts = rc.sizes();
  auto paths = generate_datasets(dir, opt);
  std::cout << "wrote " << paths.size() << " manifests (seed " << rc.data_seed
            << ") into " << dir << "\n";
  for (const auto& p : paths) std::cout << "  " << p << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& stage) {
  RunConfig rc = resolve(c);
  if (!c.out.empty()) rc.train.run_dir = c.out;
  rc.train.config_hash = config_hash(rc);
  write_resolved(rc, rc.train.run_dir);

  Trainer tr(rc.train);
  PhaseResult r = tr.run(stage);

  std::cout << std::fixed << std::setprecision(4);
  std::cout << "phase " << r.phase << ": " << r.steps_run
            << " steps this invocation";
  if (r.steps_run == 0) std::cout << " (already trained, reused)";
  std::cout << "\n";
  std::cout << "  trainable params: " << r.trainable_params << "\n";
  if (r.steps_run > 0)
    std::cout << "  loss: " << r.first_loss << " -> " << r.final_loss << "\n";
  std::cout << "  checkpoint: " << r.checkpoint << "\n";
  if (!r.numbers.empty()) {
    std::cout << "  validation loss per modality\n";
    for (const auto& [k, v] : r.numbers)
      std::cout << "    " << std::left << std::setw(18) << k << std::right
                << std::setw(10) << v << "\n";
  }
  if (!r.routing.empty()) {
    std::cout << "  mean routing weight per expert\n";
    for (const auto& [mod, w] : r.routing) {
      std::cout << "    " << std::left << std::setw(10) << mod << std::right;
      for (double x : w) std::cout << std::setw(9) << x;
      std::cout << "\n";
    }
  }
  return 0;
}

// Newest completed phase checkpoint, preferring later phases.
std::string probe_checkpoint(const Trainer& tr) {
  for (const char* phase : {"instruct", "III", "II", "I"}) {
    std::string p = tr.phase_ckpt(phase);
    if (fs::exists(p)) return p;
  }
  throw PreconditionError("no checkpoint under '" +
                          tr.settings().run_dir +
                          "'; run train first or pass a checkpoint path");
}

int cmd_eval(const Common& c, std::string ckpt, const std::string& task_flag) {
  RunConfig rc = resolve(c);
  Trainer tr(rc.train);
  if (ckpt.empty()) ckpt = probe_checkpoint(tr);
  std::string task = task_flag.empty() ? rc.eval_task : task_flag;

  CheckpointMeta meta = peek_checkpoint(ckpt);
  ModelConfig mc = rc.train.model;
  // Single-expert phases produced single-expert weights.
  if (meta.phase == "warmup" || meta.phase == "I") mc.upm.experts = 1;

  Model model(mc, rc.train.seed);
  load_checkpoint(ckpt, model.params());

  EvalOptions opt;
  opt.items = rc.eval_items;
  opt.seed = rc.train.seed;
  opt.max_new = rc.eval_max_new;
  opt.instruction_format = meta.phase == "instruct";
  std::vector<Modality> mods(kAllModalities.begin(), kAllModalities.end());
  EvalReport rep = evaluate(model, mods, task, opt);

  std::string dir = c.out.empty() ? rc.train.run_dir + "/eval" : c.out;
  fs::create_directories(dir);

  json by = json::object();
  for (const auto& [name, me] : rep.by_modality)
    by[name] = {{"caption_exact_match", me.caption_em},
                {"qa_token_accuracy", me.qa_accuracy},
                {"perplexity", me.perplexity},
                {"mean_routing", me.mean_weights}};
  json out{{"task", task},
           {"checkpoint", ckpt},
           {"checkpoint_phase", meta.phase},
           {"seed", rc.train.seed},
           {"items", rc.eval_items},
           {"by_modality", by},
           {"caption_exact_match", rep.caption_em},
           {"qa_token_accuracy", rep.qa_accuracy},
           {"perplexity", rep.perplexity}};
  std::ofstream(dir + "/metrics.json") << out.dump(2) << "\n";

  std::ofstream csv(dir + "/metrics.csv");
  csv << "modality,caption_exact_match,qa_token_accuracy,perplexity\n"
      << std::setprecision(10);
  for (const auto& [name, me] : rep.by_modality)
    csv << name << "," << me.caption_em << "," << me.qa_accuracy << ","
        << me.perplexity << "\n";

  std::cout << "evaluated " << ckpt << " (" << meta.phase << ", task " << task
            << ")\n";
  std::cout << std::left << std::setw(10) << "modality" << std::right
            << std::setw(14) << "caption_em" << std::setw(14) << "qa_acc"
            << std::setw(14) << "perplexity" << "\n"
            << std::fixed << std::setprecision(4);
  for (const auto& [name, me] : rep.by_modality)
    std::cout << std::left << std::setw(10) << name << std::right
              << std::setw(14) << me.caption_em << std::setw(14)
              << me.qa_accuracy << std::setw(14) << me.perplexity << "\n";
  std::cout << std::left << std::setw(10) << "macro" << std::right
            << std::setw(14) << rep.caption_em << std::setw(14)
            << rep.qa_accuracy << std::setw(14) << rep.perplexity << "\n";
  std::cout << "metrics written to " << dir << "/metrics.json\n";
  return 0;
}

int cmd_ablate(const Common& c, const std::string& axis) {
  RunConfig rc = resolve(c);
  rc.train.config_hash = config_hash(rc);
  AblationSettings as;
  as.base = rc.train;
  as.out_dir =
      c.out.empty() ? rc.train.run_dir + "/ablate_" + axis : c.out;
  as.eval_items = rc.ablate_eval_items;
  write_resolved(rc, as.out_dir);

  run_ablation(axis, as);
  std::cout << std::ifstream(as.out_dir + "/table.txt").rdbuf();
  std::cout << "table written to " << as.out_dir << "/table.{txt,csv,json}\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"unified multimodal alignment workbench"};
  app.require_subcommand(1);

  Common common;
  std::function<int()> action;

  CLI::App* gen = app.add_subcommand(
      "generate-data", "render the paired synthetic datasets (one manifest "
                       "per modality)");
  add_common(gen, common);
  gen->callback([&] { action = [&] { return cmd_generate(common); }; });

  std::string stage;
  CLI::App* train =
      app.add_subcommand("train", "run one training phase of the curriculum");
  add_common(train, common);
  train->add_option("--stage", stage, "I, II, III or instruct")
      ->required()
      ->check(CLI::IsMember({"I", "II", "III", "instruct"}));
  train->callback([&] { action = [&] { return cmd_train(common, stage); }; });

  std::string ckpt, task;
  CLI::App* ev = app.add_subcommand(
      "eval", "score a checkpoint on held-out items across all modalities");
  add_common(ev, common);
  ev->add_option("checkpoint", ckpt,
                 "checkpoint file (default: newest phase in run_dir)");
  ev->add_option("--task", task, "caption, qa, perplexity or all")
      ->check(CLI::IsMember({"caption", "qa", "perplexity", "all"}));
  ev->callback([&] { action = [&] { return cmd_eval(common, ckpt, task); }; });

  std::string axis;
  CLI::App* ab = app.add_subcommand(
      "ablate", "controlled sweep along one experimental axis");
  add_common(ab, common);
  ab->add_option("--axis", axis, "mode, init, experts, router or encoder")
      ->required()
      ->check(CLI::IsMember({"mode", "init", "experts", "router", "encoder"}));
  ab->callback([&] { action = [&] { return cmd_ablate(common, axis); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // help/version exit clean, usage errors as 1
  }

  try {
    return action();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const PreconditionError& e) {
    std::cerr << "precondition error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace omni

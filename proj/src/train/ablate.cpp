#include "omni/train/ablate.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>

#include "omni/checkpoint/checkpoint.hpp"
#include "omni/train/eval.hpp"

namespace omni {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Make `phase` of the donor run available to a variant run so the variant's
// prerequisite check and reuse logic treat it as already trained.
void adopt_phase(const TrainSettings& from, const TrainSettings& to,
                 const std::string& phase) {
  Trainer donor(from), heir(to);
  fs::create_directories(heir.phase_dir(phase));
  fs::copy_file(donor.phase_ckpt(phase), heir.phase_ckpt(phase),
                fs::copy_options::overwrite_existing);
  fs::copy_file(donor.phase_dir(phase) + "/report.json",
                heir.phase_dir(phase) + "/report.json",
                fs::copy_options::overwrite_existing);
}

EvalReport eval_checkpoint(const TrainSettings& s, const std::string& ckpt,
                           const std::vector<Modality>& mods,
                           const std::string& task, int64_t items,
                           bool instruction_format) {
  Model model(s.model, s.seed);
  load_checkpoint(ckpt, model.params());
  EvalOptions opt;
  opt.items = items;
  opt.seed = s.seed;
  opt.instruction_format = instruction_format;
  return evaluate(model, mods, task, opt);
}

std::vector<Modality> all_mods() {
  return {kAllModalities.begin(), kAllModalities.end()};
}

uint64_t dataset_seed(const std::string& data_dir) {
  std::string path = manifest_path(data_dir, Modality::Image);
  if (!fs::exists(path))
    throw PreconditionError("ablation needs datasets: expected manifest at '" +
                            path + "'; run generate-data first");
  return read_manifest(path).data_seed;
}

void write_table(const std::string& out_dir, const AblationTable& t) {
  size_t label_w = 8;
  for (const auto& r : t.rows) label_w = std::max(label_w, r.label.size() + 2);

  std::ofstream txt(out_dir + "/table.txt");
  txt << "axis: " << t.axis << "   data_seed: " << t.data_seed
      << "   train_seed: " << t.train_seed << "\n";
  txt << std::left << std::setw(static_cast<int>(label_w)) << "row";
  for (const auto& c : t.columns) txt << std::right << std::setw(14) << c;
  txt << "\n";
  txt << std::fixed << std::setprecision(4);
  for (const auto& r : t.rows) {
    txt << std::left << std::setw(static_cast<int>(label_w)) << r.label;
    for (const auto& c : t.columns)
      txt << std::right << std::setw(14) << r.metrics.at(c);
    txt << "\n";
  }

  std::ofstream csv(out_dir + "/table.csv");
  csv << "# axis=" << t.axis << " data_seed=" << t.data_seed
      << " train_seed=" << t.train_seed << "\n";
  csv << "row";
  for (const auto& c : t.columns) csv << "," << c;
  csv << "\n" << std::setprecision(10);
  for (const auto& r : t.rows) {
    csv << r.label;
    for (const auto& c : t.columns) csv << "," << r.metrics.at(c);
    csv << "\n";
  }

  json j{{"axis", t.axis},
         {"data_seed", t.data_seed},
         {"train_seed", t.train_seed},
         {"columns", t.columns}};
  j["rows"] = json::array();
  for (const auto& r : t.rows)
    j["rows"].push_back({{"label", r.label}, {"metrics", r.metrics}});
  std::ofstream(out_dir + "/table.json") << j.dump(2) << "\n";
}

// Caption-EM and QA-accuracy columns for one instruct-tuned model, restricted
// to `mods`.
void harvest_mode_metrics(const TrainSettings& s, const std::string& ckpt,
                          const std::vector<Modality>& mods, int64_t items,
                          AblationRow& row) {
  EvalReport rep = eval_checkpoint(s, ckpt, mods, "all", items, true);
  for (const auto& [name, me] : rep.by_modality) {
    row.metrics["em_" + name] = me.caption_em;
    row.metrics["qa_" + name] = me.qa_accuracy;
  }
}

}  // namespace

std::vector<std::string> ablation_row_labels(const std::string& axis) {
  if (axis == "mode") return {"separate", "joint"};
  if (axis == "init") return {"image", "random"};
  if (axis == "experts") return {"1", "3", "5", "7"};
  if (axis == "router") return {"soft", "sparse", "constant"};
  if (axis == "encoder") return {"frozen", "trainable"};
  throw ArgError("unknown ablation axis '" + axis +
                 "' (expected mode, init, experts, router or encoder)");
}

AblationTable run_ablation(const std::string& axis, const AblationSettings& as) {
  std::vector<std::string> labels = ablation_row_labels(axis);
  fs::create_directories(as.out_dir);

  AblationTable t;
  t.axis = axis;
  t.train_seed = as.base.seed;
  t.data_seed = dataset_seed(as.base.data_dir);

  TrainSettings bs = as.base;
  bs.run_dir = as.out_dir + "/base";
  Trainer base(bs);

  if (axis == "mode") {
    base.run("I");
    base.run("II");
    base.run("III");

    AblationRow sep_row{"separate", {}};
    for (Modality m : kAllModalities) {
      TrainSettings v = bs;
      v.run_dir = as.out_dir + "/mode_separate_" + modality_name(m);
      v.instruct_mode = "separate";
      v.separate_modality = m;
      adopt_phase(bs, v, "III");
      Trainer tv(v);
      tv.run("instruct");
      harvest_mode_metrics(v, tv.phase_ckpt("instruct"), {m}, as.eval_items,
                           sep_row);
    }

    TrainSettings vj = bs;
    vj.run_dir = as.out_dir + "/mode_joint";
    vj.instruct_mode = "joint";
    adopt_phase(bs, vj, "III");
    Trainer tj(vj);
    tj.run("instruct");
    AblationRow joint_row{"joint", {}};
    harvest_mode_metrics(vj, tj.phase_ckpt("instruct"), all_mods(),
                         as.eval_items, joint_row);

    for (Modality m : kAllModalities) {
      t.columns.push_back(std::string("em_") + modality_name(m));
      t.columns.push_back(std::string("qa_") + modality_name(m));
    }
    t.columns.push_back("em_macro");
    t.columns.push_back("qa_macro");
    for (AblationRow* r : {&sep_row, &joint_row}) {
      double em = 0, qa = 0;
      for (Modality m : kAllModalities) {
        em += r->metrics.at(std::string("em_") + modality_name(m)) / 8.0;
        qa += r->metrics.at(std::string("qa_") + modality_name(m)) / 8.0;
      }
      r->metrics["em_macro"] = em;
      r->metrics["qa_macro"] = qa;
    }
    t.rows = {sep_row, joint_row};
  } else {
    // Alignment axes share the earliest unaffected prefix of the chain:
    // encoder choice changes stage I, the others only matter from stage II.
    if (axis == "encoder")
      base.run("warmup");
    else
      base.run("I");

    for (const std::string& label : labels) {
      TrainSettings v = bs;
      v.run_dir = as.out_dir + "/" + axis + "_" + label;
      if (axis == "init") v.expert_init = label;
      if (axis == "experts") v.model.upm.experts = std::stoll(label);
      if (axis == "router") v.model.upm.router = router_from_name(label);
      if (axis == "encoder") v.model.enc.frozen = label == "frozen";

      Trainer tv(v);
      if (axis == "encoder") {
        adopt_phase(bs, v, "warmup");
        tv.run("I");
      } else {
        adopt_phase(bs, v, "I");
      }
      tv.run("II");
      tv.run("III");

      AblationRow row{label, {}};
      EvalReport rep = eval_checkpoint(v, tv.phase_ckpt("III"), all_mods(),
                                       "perplexity", as.eval_items, false);
      for (const auto& [name, me] : rep.by_modality)
        row.metrics["ppl_" + name] = me.perplexity;
      row.metrics["ppl_macro"] = rep.perplexity;
      t.rows.push_back(row);
    }
    for (Modality m : kAllModalities)
      t.columns.push_back(std::string("ppl_") + modality_name(m));
    t.columns.push_back("ppl_macro");
  }

  write_table(as.out_dir, t);
  return t;
}

}  // namespace omni

#include "omni/cli/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "omni/core/bytes.hpp"
#include "omni/core/hash.hpp"
#include "omni/model/projector.hpp"

namespace omni {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int64_t to_i64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  long long r = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("key '" + key + "' needs an integer, got '" + v + "'");
  return r;
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  unsigned long long r = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0' || v.find('-') != std::string::npos)
    throw ConfigError("key '" + key + "' needs a non-negative integer, got '" +
                      v + "'");
  return r;
}

double to_f64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  double r = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("key '" + key + "' needs a number, got '" + v + "'");
  return r;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "' needs true or false, got '" + v + "'");
}

Modality to_modality(const std::string& key, const std::string& v) {
  try {
    return modality_from_name(v);
  } catch (const ArgError&) {
    throw ConfigError("key '" + key + "' names no modality: '" + v + "'");
  }
}

// Width keys fan out to every component that must agree on them.
void set_dim(RunConfig& c, int64_t dim) {
  c.train.model.tok.dim = dim;
  c.train.model.enc.dim = dim;
  c.train.model.upm.dim = dim;
}

void set_lm_dim(RunConfig& c, int64_t dim) {
  c.train.model.upm.lm_dim = dim;
  c.train.model.dec.dim = dim;
}

void set_heads(RunConfig& c, int64_t heads) {
  c.train.model.enc.heads = heads;
  c.train.model.upm.heads = heads;
  c.train.model.dec.heads = heads;
}

PhaseSettings* phase_of(RunConfig& c, const std::string& name) {
  if (name == "lm_warmup") return &c.train.lm_warmup;
  if (name == "stage1") return &c.train.stage1;
  if (name == "stage2") return &c.train.stage2;
  if (name == "stage3") return &c.train.stage3;
  if (name == "instruct") return &c.train.instruct;
  return nullptr;
}

void apply(RunConfig& c, const std::string& section, const std::string& key,
           const std::string& value) {
  const std::string full = section + "." + key;
  if (section == "model") {
    if (key == "dim") return set_dim(c, to_i64(full, value));
    if (key == "lm_dim") return set_lm_dim(c, to_i64(full, value));
    if (key == "heads") return set_heads(c, to_i64(full, value));
    if (key == "num_tokens") {
      c.train.model.upm.num_tokens = to_i64(full, value);
      return;
    }
    if (key == "experts") {
      c.train.model.upm.experts = to_i64(full, value);
      return;
    }
    if (key == "enc_depth") {
      c.train.model.enc.depth = to_i64(full, value);
      return;
    }
    if (key == "upm_depth") {
      c.train.model.upm.expert_depth = to_i64(full, value);
      return;
    }
    if (key == "dec_depth") {
      c.train.model.dec.depth = to_i64(full, value);
      return;
    }
    if (key == "max_seq") {
      c.train.model.dec.max_seq = to_i64(full, value);
      return;
    }
    if (key == "router_type") {
      try {
        c.train.model.upm.router = router_from_name(value);
      } catch (const ArgError&) {
        throw ConfigError("key '" + full + "' names no router type: '" +
                          value + "'");
      }
      return;
    }
    if (key == "frozen_encoder") {
      c.train.model.enc.frozen = to_bool(full, value);
      return;
    }
  } else if (section == "data") {
    if (key == "seed") {
      c.data_seed = to_u64(full, value);
      return;
    }
    if (key == "size") {
      c.size_default = to_i64(full, value);
      return;
    }
    if (key.rfind("size_", 0) == 0) {
      Modality m = to_modality(full, key.substr(5));
      c.size_override[m] = to_i64(full, value);
      return;
    }
  } else if (section == "stages") {
    if (key == "seed") {
      c.train.seed = to_u64(full, value);
      return;
    }
    if (key == "batch") {
      int64_t b = to_i64(full, value);
      c.train.lm_warmup.batch = b;
      c.train.stage1.batch = b;
      c.train.stage2.batch = b;
      c.train.stage3.batch = b;
      c.train.instruct.batch = b;
      return;
    }
    if (key == "replay") {
      c.train.stage2_replay = to_bool(full, value);
      return;
    }
    if (key == "replay_mix") {
      c.train.replay_mix = replay_mix_from_name(value);
      return;
    }
    if (key == "expert_init") {
      if (value != "image" && value != "random")
        throw ConfigError("key '" + full + "' must be image or random, got '" +
                          value + "'");
      c.train.expert_init = value;
      return;
    }
    if (key == "instruct_mode") {
      if (value != "joint" && value != "separate")
        throw ConfigError("key '" + full +
                          "' must be joint or separate, got '" + value + "'");
      c.train.instruct_mode = value;
      return;
    }
    if (key == "separate_modality") {
      c.train.separate_modality = to_modality(full, value);
      return;
    }
    if (key == "ckpt_every") {
      int64_t n = to_i64(full, value);
      c.train.lm_warmup.ckpt_every = n;
      c.train.stage1.ckpt_every = n;
      c.train.stage2.ckpt_every = n;
      c.train.stage3.ckpt_every = n;
      c.train.instruct.ckpt_every = n;
      return;
    }
    if (key == "ledger_every") {
      c.train.ledger_every = to_i64(full, value);
      return;
    }
    if (key == "val_items") {
      c.train.val_items = to_i64(full, value);
      return;
    }
    size_t us = key.rfind('_');
    if (us != std::string::npos) {
      std::string field = key.substr(us + 1);
      PhaseSettings* ps = phase_of(c, key.substr(0, us));
      if (ps) {
        if (field == "steps") {
          ps->steps = to_i64(full, value);
          return;
        }
        if (field == "lr") {
          ps->peak_lr = to_f64(full, value);
          return;
        }
        if (field == "warmup") {
          ps->warmup_steps = to_i64(full, value);
          return;
        }
      }
    }
  } else if (section == "eval") {
    if (key == "tasks") {
      if (value != "all" && value != "caption" && value != "qa" &&
          value != "perplexity")
        throw ConfigError("key '" + full +
                          "' must be caption, qa, perplexity or all, got '" +
                          value + "'");
      c.eval_task = value;
      return;
    }
    if (key == "items") {
      c.eval_items = to_i64(full, value);
      return;
    }
    if (key == "max_new") {
      c.eval_max_new = static_cast<int>(to_i64(full, value));
      return;
    }
    if (key == "ablate_items") {
      c.ablate_eval_items = to_i64(full, value);
      return;
    }
  } else if (section == "io") {
    if (key == "run_dir") {
      c.train.run_dir = value;
      return;
    }
    if (key == "data_dir") {
      c.train.data_dir = value;
      return;
    }
  } else {
    throw ConfigError("unknown config section '" + section + "'");
  }
  throw ConfigError("unknown config key '" + full + "'");
}

}  // namespace

std::map<Modality, int64_t> RunConfig::sizes() const {
  std::map<Modality, int64_t> out;
  for (Modality m : kAllModalities) {
    auto it = size_override.find(m);
    out[m] = it == size_override.end() ? size_default : it->second;
  }
  return out;
}

RunConfig default_config() { return RunConfig{}; }

RunConfig parse_config(const std::string& text) {
  RunConfig c = default_config();
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t cut = line.find_first_of("#;");
    if (cut != std::string::npos) line = line.substr(0, cut);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": key '" +
                        key + "' appears before any [section]");
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key or value");
    apply(c, section, key, value);
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  try {
    return parse_config(read_file(path));
  } catch (const PreconditionError&) {
    throw ConfigError("config file not found: '" + path + "'");
  }
}

std::string render_config(const RunConfig& c) {
  std::ostringstream out;
  out.precision(17);
  const ModelConfig& m = c.train.model;
  out << "[model]\n";
  out << "dim = " << m.upm.dim << "\n";
  out << "lm_dim = " << m.upm.lm_dim << "\n";
  out << "heads = " << m.upm.heads << "\n";
  out << "num_tokens = " << m.upm.num_tokens << "\n";
  out << "experts = " << m.upm.experts << "\n";
  out << "enc_depth = " << m.enc.depth << "\n";
  out << "upm_depth = " << m.upm.expert_depth << "\n";
  out << "dec_depth = " << m.dec.depth << "\n";
  out << "max_seq = " << m.dec.max_seq << "\n";
  out << "router_type = " << router_name(m.upm.router) << "\n";
  out << "frozen_encoder = " << (m.enc.frozen ? "true" : "false") << "\n";
  out << "\n[data]\n";
  out << "seed = " << c.data_seed << "\n";
  out << "size = " << c.size_default << "\n";
  auto resolved = c.sizes();
  for (Modality mod : kAllModalities)
    out << "size_" << modality_name(mod) << " = " << resolved.at(mod) << "\n";
  out << "\n[stages]\n";
  out << "seed = " << c.train.seed << "\n";
  out << "batch = " << c.train.stage1.batch << "\n";
  const struct {
    const char* name;
    const PhaseSettings* ps;
  } phases[] = {{"lm_warmup", &c.train.lm_warmup},
                {"stage1", &c.train.stage1},
                {"stage2", &c.train.stage2},
                {"stage3", &c.train.stage3},
                {"instruct", &c.train.instruct}};
  for (const auto& p : phases) {
    out << p.name << "_steps = " << p.ps->steps << "\n";
    out << p.name << "_lr = " << p.ps->peak_lr << "\n";
    out << p.name << "_warmup = " << p.ps->warmup_steps << "\n";
  }
  out << "replay = " << (c.train.stage2_replay ? "true" : "false") << "\n";
  out << "replay_mix = " << replay_mix_name(c.train.replay_mix) << "\n";
  out << "expert_init = " << c.train.expert_init << "\n";
  out << "instruct_mode = " << c.train.instruct_mode << "\n";
  out << "separate_modality = " << modality_name(c.train.separate_modality)
      << "\n";
  out << "ckpt_every = " << c.train.stage1.ckpt_every << "\n";
  out << "ledger_every = " << c.train.ledger_every << "\n";
  out << "val_items = " << c.train.val_items << "\n";
  out << "\n[eval]\n";
  out << "tasks = " << c.eval_task << "\n";
  out << "items = " << c.eval_items << "\n";
  out << "max_new = " << c.eval_max_new << "\n";
  out << "ablate_items = " << c.ablate_eval_items << "\n";
  out << "\n[io]\n";
  out << "run_dir = " << c.train.run_dir << "\n";
  out << "data_dir = " << c.train.data_dir << "\n";
  return out.str();
}

uint64_t config_hash(const RunConfig& c) {
  std::string text = render_config(c);
  return fnv1a(text.data(), text.size());
}

}  // namespace omni

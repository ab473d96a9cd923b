#include "omni/model/projector.hpp"

#include <algorithm>

#include "omni/core/error.hpp"

namespace omni {

RouterType router_from_name(const std::string& name) {
  if (name == "soft") return RouterType::Soft;
  if (name == "sparse") return RouterType::Sparse;
  if (name == "constant") return RouterType::Constant;
  throw ConfigError("unknown router type '" + name +
                    "' (want soft, sparse or constant)");
}

std::string router_name(RouterType t) {
  switch (t) {
    case RouterType::Soft: return "soft";
    case RouterType::Sparse: return "sparse";
    case RouterType::Constant: return "constant";
  }
  throw ArgError("unknown router type");
}

Projector::Projector(const ProjectorConfig& cfg, ParamRegistry& reg,
                     uint64_t seed, Dtype dt)
    : cfg_(cfg), dt_(dt), reg_(&reg) {
  if (cfg.experts < 1) throw ArgError("projector wants at least one expert");
  if (cfg.dim % cfg.heads != 0)
    throw ConfigError("projector width must divide into heads");
  for (Modality m : kAllModalities) {
    std::string mod = modality_name(m);
    Rng qr = derive_rng(seed, "upm/q/" + mod, 0);
    q_.push_back(&reg.add("upm.q." + mod,
                          Tensor::randn({cfg.num_tokens, cfg.dim}, qr, 0.02, dt)));
    Rng rr = derive_rng(seed, "upm/router/" + mod, 0);
    routers_.emplace_back(
        Linear(reg, "upm.router." + mod + ".fc1", cfg.dim, cfg.dim, rr, dt),
        Linear(reg, "upm.router." + mod + ".fc2", cfg.dim, cfg.experts, rr, dt));
  }
  for (int64_t k = 0; k < cfg.experts; ++k) {
    Rng er = derive_rng(seed, "upm/expert", static_cast<uint64_t>(k));
    std::vector<TransformerBlock> blocks;
    for (int64_t i = 0; i < cfg.expert_depth; ++i)
      blocks.emplace_back(reg,
                          "upm.expert" + std::to_string(k) + ".block" +
                              std::to_string(i),
                          cfg.dim, cfg.heads, er, dt);
    experts_.push_back(std::move(blocks));
  }
  Rng ar = derive_rng(seed, "upm/adapter", 0);
  adapter_ = Linear(reg, "upm.adapter", cfg.dim, cfg.lm_dim, ar, dt);
}

Tensor Projector::route(Modality m, const Tensor& joint) const {
  const auto& r = routers_[static_cast<size_t>(m)];
  Tensor h = r.second.forward(gelu(r.first.forward(joint)));
  return softmax_rows(slice_rows(h, 0, cfg_.num_tokens));
}

Tensor Projector::run_expert(int64_t k, const Tensor& joint) const {
  Tensor x = joint;
  for (const TransformerBlock& b : experts_[static_cast<size_t>(k)])
    x = b.forward(x, nullptr);
  return x;
}

ProjectorOutput Projector::forward(Modality m, const Tensor& x) const {
  if (x.shape().size() != 2 || x.dim(1) != cfg_.dim)
    throw ConfigError("projector wants [L x " + std::to_string(cfg_.dim) +
                      "] features, got " + shape_str(x.shape()));
  int64_t N = cfg_.num_tokens, K = cfg_.experts;
  Tensor joint = concat_rows({q_[static_cast<size_t>(m)]->value, x});

  std::vector<Tensor> kept;
  kept.reserve(K);
  for (int64_t k = 0; k < K; ++k)
    kept.push_back(slice_rows(run_expert(k, joint), 0, N));

  ProjectorOutput out;
  switch (cfg_.router) {
    case RouterType::Soft: {
      Tensor w = route(m, joint);
      out.q_bar = mix_rows(kept, w, MixMode::Weighted);
      out.weights = w;
      break;
    }
    case RouterType::Sparse: {
      Tensor w = route(m, joint);
      out.q_bar = mix_rows(kept, w, MixMode::ArgmaxOnly);
      // report only the winning entries; ties resolve to the lower expert
      std::vector<double> rep(static_cast<size_t>(N * K), 0.0);
      for (int64_t n = 0; n < N; ++n) {
        int64_t star = row_argmax(w, n);
        rep[static_cast<size_t>(n * K + star)] = w.at({n, star});
      }
      out.weights = Tensor::from_data({N, K}, rep, dt_);
      break;
    }
    case RouterType::Constant: {
      Tensor w = Tensor::full({N, K}, 1.0 / static_cast<double>(K), dt_);
      out.q_bar = mix_rows(kept, w, MixMode::Mean);
      out.weights = w;
      break;
    }
  }
  out.tokens = adapter_.forward(out.q_bar);
  return out;
}

void Projector::broadcast_expert_weights(int64_t src) {
  if (src < 0 || src >= cfg_.experts) throw ArgError("no such expert");
  std::string from = "upm.expert" + std::to_string(src) + ".";
  for (Parameter* sp : reg_->with_prefix(from)) {
    std::string rest = sp->name.substr(from.size());
    for (int64_t k = 0; k < cfg_.experts; ++k) {
      if (k == src) continue;
      Parameter& dp = reg_->at("upm.expert" + std::to_string(k) + "." + rest);
      if (dp.value.shape() != sp->value.shape())
        throw ShapeError("expert weight shape mismatch at " + dp.name);
      if (dt_ == Dtype::F64) {
        auto s = sp->value.data<double>();
        std::copy(s.begin(), s.end(), dp.value.data<double>().begin());
      } else {
        auto s = sp->value.data<float>();
        std::copy(s.begin(), s.end(), dp.value.data<float>().begin());
      }
    }
  }
}

}  // namespace omni

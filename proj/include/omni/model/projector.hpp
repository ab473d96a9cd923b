#pragma once

#include <string>
#include <vector>

#include "omni/data/modality.hpp"
#include "omni/nn/modules.hpp"

namespace omni {

// How the K expert outputs combine: softmax-weighted mixture, winner-take-all
// scaled by the winning weight, or a uniform 1/K average that ignores the
// router entirely.
enum class RouterType { Soft, Sparse, Constant };
RouterType router_from_name(const std::string& name);
std::string router_name(RouterType t);

struct ProjectorConfig {
  int64_t dim = 64;         // encoder feature width
  int64_t num_tokens = 4;   // learnable query tokens per modality
  int64_t experts = 3;      // K
  int64_t expert_depth = 2; // transformer blocks per expert
  int64_t heads = 4;
  int64_t lm_dim = 64;      // decoder embedding width (adapter target)
  RouterType router = RouterType::Soft;
};

struct ProjectorOutput {
  Tensor tokens;   // [N x lm_dim] adapter-projected query tokens
  Tensor q_bar;    // [N x dim] mixed expert outputs at the query positions
  Tensor weights;  // [N x K] routing report: softmax rows (Soft), winner-only
                   // rows (Sparse), or uniform 1/K rows (Constant)
};

// Projection head shared by all modalities: per-modality query tokens are
// prepended to the encoded features, every expert processes the joint
// sequence, and a per-modality router decides the mix at the query positions.
// Only the query positions survive, giving a fixed-length output for any
// input length.
class Projector {
 public:
  Projector(const ProjectorConfig& cfg, ParamRegistry& reg, uint64_t seed,
            Dtype dt = Dtype::F32);

  // joint: [(N+L) x dim], query tokens first. Softmax router scores of the
  // first N positions.
  Tensor route(Modality m, const Tensor& joint) const;

  ProjectorOutput forward(Modality m, const Tensor& x) const;

  // Overwrite every expert's weights with expert src's (bitwise copies that
  // then train independently). Routers and query tokens are untouched.
  void broadcast_expert_weights(int64_t src);

  const ProjectorConfig& config() const { return cfg_; }

 private:
  Tensor run_expert(int64_t k, const Tensor& joint) const;

  ProjectorConfig cfg_;
  Dtype dt_;
  ParamRegistry* reg_ = nullptr;
  std::vector<Parameter*> q_;                       // per modality
  std::vector<std::pair<Linear, Linear>> routers_;  // per modality fc1/fc2
  std::vector<std::vector<TransformerBlock>> experts_;
  Linear adapter_;
};

}  // namespace omni

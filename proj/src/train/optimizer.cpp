#include "omni/train/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "omni/core/kernels.hpp"

namespace omni {

double schedule_lr(const OptimConfig& cfg, int64_t step) {
  if (step <= 0) return 0.0;
  double floor = cfg.peak_lr * cfg.floor_frac;
  if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps)
    return cfg.peak_lr * static_cast<double>(step) /
           static_cast<double>(cfg.warmup_steps);
  if (step >= cfg.total_steps) return floor;
  double denom = static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  if (denom <= 0.0) return floor;
  double prog = static_cast<double>(step - cfg.warmup_steps) / denom;
  return floor + (cfg.peak_lr - floor) * 0.5 *
                     (1.0 + std::cos(std::numbers::pi * prog));
}

AdamW::AdamW(const OptimConfig& cfg, std::vector<Parameter*> params)
    : cfg_(cfg), params_(std::move(params)) {
  if (cfg_.peak_lr < 0.0 || cfg_.total_steps <= 0 || cfg_.warmup_steps < 0 ||
      cfg_.warmup_steps > cfg_.total_steps)
    throw ArgError("optimizer: bad schedule (peak_lr " +
                   std::to_string(cfg_.peak_lr) + ", warmup " +
                   std::to_string(cfg_.warmup_steps) + ", total " +
                   std::to_string(cfg_.total_steps) + ")");
  std::set<std::string> seen;
  for (const Parameter* p : params_) {
    if (!p) throw ArgError("optimizer: null parameter");
    if (p->value.dtype() != Dtype::F32)
      throw ArgError("optimizer: '" + p->name + "' is not f32; training runs f32");
    if (!seen.insert(p->name).second)
      throw ArgError("optimizer: duplicate parameter '" + p->name + "'");
  }
}

double AdamW::step() {
  ++t_;
  double lr = schedule_lr(cfg_, t_);
  double c1 = 1.0 / (1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
  double c2 = 1.0 / (1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
  const auto& backend = kernels::active();
  for (Parameter* p : params_) {
    if (p->frozen || !p->value.has_grad()) continue;
    size_t n = static_cast<size_t>(p->value.numel());
    OptSlot& slot = state_.slots[p->name];
    if (slot.m.empty()) {
      slot.m.assign(n, 0.0f);
      slot.v.assign(n, 0.0f);
    }
    Tensor g = p->value.grad_tensor();
    double wd = p->decay ? cfg_.weight_decay : 0.0;
    backend.adamw_f32(static_cast<int64_t>(n), p->value.data<float>().data(),
                      g.data<float>().data(), slot.m.data(), slot.v.data(),
                      static_cast<float>(lr), static_cast<float>(cfg_.beta1),
                      static_cast<float>(cfg_.beta2),
                      static_cast<float>(cfg_.eps), static_cast<float>(wd),
                      static_cast<float>(c1), static_cast<float>(c2));
  }
  last_lr_ = lr;
  return lr;
}

void AdamW::zero_grads() {
  for (Parameter* p : params_) p->value.zero_grad();
}

OptState AdamW::export_state() const {
  OptState s = state_;
  s.step = t_;
  return s;
}

void AdamW::import_state(const OptState& s) {
  for (const Parameter* p : params_) {
    auto it = s.slots.find(p->name);
    if (it == s.slots.end()) continue;
    size_t n = static_cast<size_t>(p->value.numel());
    if (it->second.m.size() != n || it->second.v.size() != n)
      throw ArgError("optimizer: moment size mismatch for '" + p->name + "'");
  }
  state_ = s;
  t_ = s.step;
}

}  // namespace omni

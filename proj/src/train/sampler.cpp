#include "omni/train/sampler.hpp"

#include <algorithm>

namespace omni {

StagePlan stage_plan(const std::string& id) {
  if (id == "I")
    return {"I", {Modality::Image}, {}};
  if (id == "II")
    return {"II",
            {Modality::Video, Modality::Audio, Modality::Point},
            {Modality::Image}};
  if (id == "III")
    return {"III",
            {Modality::Depth, Modality::Normal, Modality::Imu, Modality::Fmri},
            {Modality::Image, Modality::Video, Modality::Audio, Modality::Point}};
  throw ArgError("unknown stage '" + id + "' (expected I, II or III)");
}

ReplayMix replay_mix_from_name(const std::string& s) {
  if (s == "per_modality") return ReplayMix::PerModality;
  if (s == "fifty_fifty") return ReplayMix::FiftyFifty;
  throw ConfigError("unknown replay mix '" + s +
                    "' (expected per_modality or fifty_fifty)");
}

const char* replay_mix_name(ReplayMix m) {
  return m == ReplayMix::PerModality ? "per_modality" : "fifty_fifty";
}

namespace {

// Canonical-order dedup so draw sequences do not depend on caller ordering.
std::vector<Modality> canonical(std::vector<Modality> mods) {
  std::vector<Modality> out;
  for (Modality m : kAllModalities)
    if (std::find(mods.begin(), mods.end(), m) != mods.end()) out.push_back(m);
  return out;
}

}  // namespace

StageSampler::StageSampler(const std::vector<Modality>& new_mods,
                           const std::vector<Modality>& replay_mods,
                           const std::map<Modality, Manifest>& datasets,
                           uint64_t seed, ReplayMix mix)
    : datasets_(datasets),
      new_(canonical(new_mods)),
      replay_(canonical(replay_mods)),
      mix_(mix),
      rng_(seed) {
  if (new_.empty()) throw ArgError("sampler: no new modalities");
  std::vector<Modality> all = new_;
  all.insert(all.end(), replay_.begin(), replay_.end());
  active_ = canonical(all);
  if (active_.size() != new_.size() + replay_.size())
    throw ArgError("sampler: new and replay modality sets overlap");
  for (Modality m : active_) {
    auto it = datasets_.find(m);
    if (it == datasets_.end())
      throw ConfigError(std::string("sampler: no dataset for modality '") +
                        modality_name(m) + "'");
    if (it->second.items.empty())
      throw ConfigError(std::string("sampler: empty dataset for modality '") +
                        modality_name(m) + "'");
  }
}

const SceneItem& StageSampler::next() {
  Modality m;
  if (mix_ == ReplayMix::PerModality || replay_.empty()) {
    m = active_[rng_.next_below(active_.size())];
  } else {
    const auto& group = rng_.next_bool() ? replay_ : new_;
    m = group[rng_.next_below(group.size())];
  }
  const auto& items = datasets_.at(m).items;
  return items[rng_.next_below(items.size())];
}

}  // namespace omni

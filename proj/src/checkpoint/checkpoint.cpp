#include "omni/checkpoint/checkpoint.hpp"

#include <algorithm>

#include "omni/core/bytes.hpp"
#include "omni/core/hash.hpp"
#include "omni/core/tensor.hpp"

namespace omni {

namespace {

constexpr char kMagic[4] = {'O', 'L', 'M', 'C'};
constexpr uint32_t kVersion = 1;

void write_payload(ByteWriter& w, const Tensor& t) {
  if (t.dtype() == Dtype::F32) {
    for (float v : t.data<float>()) w.f32(v);
  } else {
    for (double v : t.data<double>()) w.f64(v);
  }
}

void read_payload(ByteReader& r, Tensor& t) {
  if (t.dtype() == Dtype::F32) {
    for (float& v : t.data<float>()) v = r.f32();
  } else {
    for (double& v : t.data<double>()) v = r.f64();
  }
}

void skip_payload(ByteReader& r, Dtype dt, int64_t count) {
  size_t word = dt == Dtype::F32 ? 4 : 8;
  for (int64_t i = 0; i < count; ++i)
    for (size_t b = 0; b < word; ++b) r.u8();
}

// Shared front half of load/peek: integrity checks, then meta.
struct Opened {
  std::string data;
  CheckpointMeta meta;
  size_t body_off;  // reader offset just past the meta block
};

Opened open_checked(const std::string& path) {
  Opened o;
  o.data = read_file(path);
  if (o.data.size() < 4)
    throw FormatError(FormatError::Kind::Truncated,
                      "'" + path + "': shorter than the magic");
  if (std::string_view(o.data.data(), 4) != std::string_view(kMagic, 4))
    throw FormatError(FormatError::Kind::BadMagic,
                      "'" + path + "': not a checkpoint file");
  ByteReader r(o.data);
  char magic[4];
  r.raw(magic, 4);
  uint32_t version = r.u32();
  if (version != kVersion)
    throw FormatError(FormatError::Kind::BadVersion,
                      "'" + path + "': version " + std::to_string(version) +
                          ", expected " + std::to_string(kVersion));
  if (o.data.size() < r.offset() + 8)
    throw FormatError(FormatError::Kind::Truncated,
                      "'" + path + "': no room for integrity hash");
  uint64_t stored = 0;
  {
    ByteReader tail(std::string_view(o.data).substr(o.data.size() - 8));
    stored = tail.u64();
  }
  if (fnv1a(o.data.data(), o.data.size() - 8) != stored)
    throw FormatError(FormatError::Kind::BadHash,
                      "'" + path + "': integrity hash mismatch");
  o.meta.phase = r.str();
  o.meta.step = r.u64();
  o.meta.config_hash = r.u64();
  o.meta.rng_state = r.u64();
  o.body_off = r.offset();
  return o;
}

bool has_prefix(const std::string& name, const std::vector<std::string>& pfx) {
  return std::any_of(pfx.begin(), pfx.end(), [&](const std::string& p) {
    return name.rfind(p, 0) == 0;
  });
}

}  // namespace

std::string checkpoint_path(const std::string& run_dir, int64_t step) {
  return run_dir + "/ckpt_" + std::to_string(step) + ".olmc";
}

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamRegistry& reg, const OptState* opt) {
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.str(meta.phase);
  w.u64(meta.step);
  w.u64(meta.config_hash);
  w.u64(meta.rng_state);

  const auto& params = reg.all();
  w.u32(static_cast<uint32_t>(params.size()));
  for (const auto& p : params) {
    w.str(p->name);
    w.u8(p->value.dtype() == Dtype::F32 ? 0 : 1);
    w.u8(p->frozen ? 1 : 0);
    const auto& shape = p->value.shape();
    w.u32(static_cast<uint32_t>(shape.size()));
    for (int64_t d : shape) w.i64(d);
    w.u64(static_cast<uint64_t>(p->value.numel()));
    write_payload(w, p->value);
  }

  if (opt) {
    w.u32(static_cast<uint32_t>(opt->slots.size()));
    w.i64(opt->step);
    for (const auto& [name, slot] : opt->slots) {  // map order: deterministic
      w.str(name);
      w.u64(slot.m.size());
      for (float v : slot.m) w.f32(v);
      for (float v : slot.v) w.f32(v);
    }
  } else {
    w.u32(0);
    w.i64(0);
  }

  w.u64(fnv1a(w.buffer().data(), w.size()));
  write_file_atomic(path, w.buffer());
}

LoadReport load_checkpoint(const std::string& path, ParamRegistry& reg,
                           OptState* opt,
                           const std::vector<std::string>& exclude_prefixes,
                           bool allow_partial) {
  Opened o = open_checked(path);
  ByteReader r(std::string_view(o.data).substr(o.body_off));
  LoadReport rep;
  rep.meta = o.meta;

  uint32_t n_params = r.u32();
  for (uint32_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    uint8_t dt_tag = r.u8();
    if (dt_tag > 1)
      throw FormatError(FormatError::Kind::Malformed,
                        "'" + path + "': bad dtype tag for '" + name + "'");
    Dtype dt = dt_tag == 0 ? Dtype::F32 : Dtype::F64;
    bool frozen = r.u8() != 0;
    uint32_t ndim = r.u32();
    std::vector<int64_t> shape(ndim);
    for (auto& d : shape) d = r.i64();
    auto count = static_cast<int64_t>(r.u64());
    if (count != shape_numel(shape))
      throw FormatError(FormatError::Kind::Malformed,
                        "'" + path + "': count disagrees with shape for '" +
                            name + "'");
    Parameter* p = reg.find(name);
    if (!p || has_prefix(name, exclude_prefixes)) {
      skip_payload(r, dt, count);
      rep.skipped.push_back(name);
      continue;
    }
    if (p->value.dtype() != dt)
      throw ShapeError("checkpoint '" + path + "': dtype mismatch for '" +
                       name + "'");
    if (p->value.shape() != shape)
      throw ShapeError("checkpoint '" + path + "': shape mismatch for '" +
                       name + "': file " + shape_str(shape) + " vs model " +
                       shape_str(p->value.shape()));
    read_payload(r, p->value);
    p->frozen = frozen;
    rep.loaded.push_back(name);
  }

  uint32_t n_opt = r.u32();
  int64_t opt_step = r.i64();
  if (opt) {
    opt->step = opt_step;
    opt->slots.clear();
  }
  for (uint32_t i = 0; i < n_opt; ++i) {
    std::string name = r.str();
    uint64_t count = r.u64();
    if (opt && !has_prefix(name, exclude_prefixes)) {
      OptSlot& slot = opt->slots[name];
      slot.m.resize(count);
      slot.v.resize(count);
      for (float& v : slot.m) v = r.f32();
      for (float& v : slot.v) v = r.f32();
    } else {
      for (uint64_t k = 0; k < 2 * count; ++k) r.f32();
    }
  }

  if (r.remaining() != 8)
    throw FormatError(FormatError::Kind::Malformed,
                      "'" + path + "': unexpected trailing bytes");

  std::vector<std::string> sorted_loaded = rep.loaded;
  std::sort(sorted_loaded.begin(), sorted_loaded.end());
  for (const auto& p : reg.all()) {
    if (has_prefix(p->name, exclude_prefixes)) continue;
    if (!std::binary_search(sorted_loaded.begin(), sorted_loaded.end(), p->name))
      rep.missing.push_back(p->name);
  }
  if (!rep.missing.empty() && !allow_partial)
    throw PreconditionError("checkpoint '" + path + "' does not cover '" +
                            rep.missing.front() + "' (" +
                            std::to_string(rep.missing.size()) +
                            " parameters uncovered)");
  return rep;
}

CheckpointMeta peek_checkpoint(const std::string& path) {
  return open_checked(path).meta;
}

}  // namespace omni

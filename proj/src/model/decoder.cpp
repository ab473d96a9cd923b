#include "omni/model/decoder.hpp"

#include <cmath>

#include "omni/core/error.hpp"

namespace omni {

std::vector<int32_t> encode_text(const std::string& s) {
  std::vector<int32_t> ids;
  ids.reserve(s.size());
  for (unsigned char c : s) ids.push_back(static_cast<int32_t>(c));
  return ids;
}

std::string decode_text(const std::vector<int32_t>& ids) {
  std::string out;
  for (int32_t id : ids)
    if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
  return out;
}

Decoder::Decoder(const DecoderConfig& cfg, ParamRegistry& reg, Rng& rng, Dtype dt)
    : cfg_(cfg), dt_(dt) {
  if (cfg.dim % cfg.heads != 0)
    throw ConfigError("decoder width must divide into heads");
  embed_ = &reg.add("dec.embed", Tensor::randn({cfg.vocab, cfg.dim}, rng, 0.02, dt));
  pos_ = &reg.add("dec.pos", Tensor::randn({cfg.max_seq, cfg.dim}, rng, 0.02, dt));
  for (int64_t i = 0; i < cfg.depth; ++i)
    blocks_.emplace_back(reg, "dec.block" + std::to_string(i), cfg.dim, cfg.heads,
                         rng, dt);
  ln_f_ = LayerNorm(reg, "dec.ln_f", cfg.dim, dt);
  head_ = Linear(reg, "dec.head", cfg.dim, cfg.vocab, rng, dt);
}

AssembledSequence Decoder::assemble_alignment(const Tensor& prefix, Modality m,
                                              const std::string& caption) const {
  if (caption.empty()) throw ArgError("alignment caption is empty");
  if (prefix.shape().size() != 2 || prefix.dim(1) != cfg_.dim)
    throw ConfigError("prefix width mismatch, got " + shape_str(prefix.shape()));
  AssembledSequence seq;
  seq.prefix = prefix;
  seq.order = {m};
  int64_t budget = cfg_.max_seq - prefix.dim(0) - 2;  // BOS and EOS always fit
  if (budget < 1) throw ShapeError("prefix leaves no room for text");
  std::string text = caption;
  if (static_cast<int64_t>(text.size()) > budget) {
    text.resize(static_cast<size_t>(budget));
    seq.truncated = true;
  }
  seq.ids.push_back(kBos);
  seq.loss_mask.push_back(0);
  for (int32_t id : encode_text(text)) {
    seq.ids.push_back(id);
    seq.loss_mask.push_back(1);
  }
  seq.ids.push_back(kEos);
  seq.loss_mask.push_back(1);
  return seq;
}

AssembledSequence Decoder::assemble_instruction(
    const std::vector<std::pair<Modality, Tensor>>& prefixes,
    const std::string& sys,
    const std::vector<std::pair<std::string, std::string>>& turns) const {
  if (prefixes.empty()) throw ArgError("instruction sequence without modalities");
  if (turns.empty()) throw ArgError("instruction sequence without turns");
  AssembledSequence seq;
  std::vector<Tensor> blocks;
  for (const auto& [m, t] : prefixes) {
    if (t.shape().size() != 2 || t.dim(1) != cfg_.dim)
      throw ConfigError("prefix width mismatch for " +
                        std::string(modality_name(m)));
    blocks.push_back(t);
    seq.order.push_back(m);
  }
  seq.prefix = blocks.size() == 1 ? blocks[0] : concat_rows(blocks);

  seq.ids.push_back(kBos);
  seq.loss_mask.push_back(0);
  auto push = [&](const std::string& text, uint8_t mask) {
    for (int32_t id : encode_text(text)) {
      seq.ids.push_back(id);
      seq.loss_mask.push_back(mask);
    }
  };
  push(sys, 0);
  for (const auto& [ins, ans] : turns) {
    push(ins, 0);
    push(ans, 1);
  }
  seq.ids.push_back(kEos);
  seq.loss_mask.push_back(1);
  return seq;
}

Tensor Decoder::logits(const AssembledSequence& seq) const {
  int64_t M = seq.prefix.defined() ? seq.prefix.dim(0) : 0;
  int64_t T = M + static_cast<int64_t>(seq.ids.size());
  if (T > cfg_.max_seq)
    throw ShapeError("sequence length " + std::to_string(T) +
                     " exceeds decoder max_seq " + std::to_string(cfg_.max_seq));
  if (seq.ids.empty()) throw ArgError("sequence has no text ids");
  Tensor emb = embedding_rows(embed_->value, seq.ids);
  Tensor x = M > 0 ? concat_rows({seq.prefix, emb}) : emb;
  x = add(x, slice_rows(pos_->value, 0, T));
  Tensor mask = causal_mask(T, dt_);
  for (const TransformerBlock& b : blocks_) x = b.forward(x, &mask);
  return head_.forward(ln_f_.forward(x));
}

Tensor Decoder::loss(const AssembledSequence& seq) const {
  if (seq.loss_mask.size() != seq.ids.size())
    throw ArgError("loss mask length differs from ids");
  int64_t M = seq.prefix.defined() ? seq.prefix.dim(0) : 0;
  int64_t T = M + static_cast<int64_t>(seq.ids.size());
  std::vector<int32_t> targets(static_cast<size_t>(T), kPad);
  std::vector<uint8_t> rows(static_cast<size_t>(T), 0);
  bool any = false;
  for (size_t i = 0; i < seq.ids.size(); ++i) {
    if (!seq.loss_mask[i]) continue;
    int64_t predictor = M + static_cast<int64_t>(i) - 1;
    if (predictor < 0)
      throw ArgError("loss requested on the very first position");
    targets[static_cast<size_t>(predictor)] = seq.ids[i];
    rows[static_cast<size_t>(predictor)] = 1;
    any = true;
  }
  if (!any) throw ArgError("loss mask is entirely false");
  return cross_entropy_rows(logits(seq), targets, rows);
}

std::vector<int32_t> Decoder::generate_ids(const AssembledSequence& prompt,
                                           int64_t max_new) const {
  if (max_new < 1) throw ArgError("generate wants max_new >= 1");
  AssembledSequence cur = prompt;
  int64_t M = cur.prefix.defined() ? cur.prefix.dim(0) : 0;
  std::vector<int32_t> out;
  for (int64_t step = 0; step < max_new; ++step) {
    int64_t T = M + static_cast<int64_t>(cur.ids.size());
    if (T >= cfg_.max_seq) break;
    Tensor lg = logits(cur);
    int32_t next = static_cast<int32_t>(row_argmax(lg, T - 1));
    out.push_back(next);
    if (next == kEos) break;
    cur.ids.push_back(next);
    cur.loss_mask.push_back(0);
  }
  return out;
}

std::string Decoder::generate(const AssembledSequence& prompt,
                              int64_t max_new) const {
  return decode_text(generate_ids(prompt, max_new));
}

double Decoder::continuation_logprob(const AssembledSequence& prompt,
                                     const std::string& continuation,
                                     bool include_eos) const {
  AssembledSequence cur = prompt;
  std::vector<int32_t> cont = encode_text(continuation);
  if (include_eos) cont.push_back(kEos);
  if (cont.empty()) throw ArgError("empty continuation");
  size_t prompt_len = cur.ids.size();
  for (int32_t id : cont) {
    cur.ids.push_back(id);
    cur.loss_mask.push_back(0);
  }
  Tensor lg = logits(cur);
  int64_t M = cur.prefix.defined() ? cur.prefix.dim(0) : 0;
  double total = 0.0;
  for (size_t i = 0; i < cont.size(); ++i) {
    int64_t row = M + static_cast<int64_t>(prompt_len + i) - 1;
    double mx = lg.at({row, 0});
    for (int64_t v = 1; v < cfg_.vocab; ++v) mx = std::max(mx, lg.at({row, v}));
    double lse = 0.0;
    for (int64_t v = 0; v < cfg_.vocab; ++v)
      lse += std::exp(lg.at({row, v}) - mx);
    total += lg.at({row, cont[i]}) - (mx + std::log(lse));
  }
  return total;
}

}  // namespace omni

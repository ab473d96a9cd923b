#include "omni/model/model.hpp"

#include "omni/core/ops.hpp"

namespace omni {

Model::Model(const ModelConfig& cfg, uint64_t seed, Dtype dt) : cfg_(cfg) {
  if (cfg.tok.dim != cfg.enc.dim || cfg.enc.dim != cfg.upm.dim)
    throw ConfigError("model: tokenizer/encoder/projector dims disagree");
  if (cfg.upm.lm_dim != cfg.dec.dim)
    throw ConfigError("model: projector lm_dim must match decoder dim");

  Rng tok_rng = derive_rng(seed, "init/tok", 0);
  tok_ = std::make_unique<TokenizerBank>(cfg.tok, reg_, tok_rng, dt);
  Rng enc_rng = derive_rng(seed, "init/enc", 0);
  enc_ = std::make_unique<Encoder>(cfg.enc, reg_, enc_rng, dt);
  upm_ = std::make_unique<Projector>(cfg.upm, reg_, seed, dt);
  Rng dec_rng = derive_rng(seed, "init/dec", 0);
  dec_ = std::make_unique<Decoder>(cfg.dec, reg_, dec_rng, dt);
}

Tensor Model::embed(Modality m, const Tensor& signal) {
  if (m == Modality::Video) return enc_->encode_video(tok_->video(signal));
  return enc_->encode(tok_->tokenize(m, signal));
}

ProjectorOutput Model::project(Modality m, const Tensor& signal) {
  return upm_->forward(m, embed(m, signal));
}

Tensor Model::alignment_loss(Modality m, const Tensor& signal,
                             const std::string& caption) {
  ProjectorOutput out = project(m, signal);
  return dec_->loss(dec_->assemble_alignment(out.tokens, m, caption));
}

Tensor Model::instruction_loss(
    const std::vector<std::pair<Modality, Tensor>>& signals,
    const std::string& system,
    const std::vector<std::pair<std::string, std::string>>& turns) {
  std::vector<std::pair<Modality, Tensor>> prefixes;
  prefixes.reserve(signals.size());
  for (const auto& [m, sig] : signals)
    prefixes.emplace_back(m, project(m, sig).tokens);
  return dec_->loss(dec_->assemble_instruction(prefixes, system, turns));
}

std::string Model::caption(Modality m, const Tensor& signal, int max_new) {
  ProjectorOutput out = project(m, signal);
  AssembledSequence prompt;
  prompt.prefix = out.tokens.detach();
  prompt.ids = {kBos};
  prompt.loss_mask = {0};
  prompt.order = {m};
  return dec_->generate(prompt, max_new);
}

double Model::option_logprob(
    const std::vector<std::pair<Modality, Tensor>>& signals,
    const std::string& system, const std::string& question,
    const std::string& option) {
  if (signals.empty()) throw ArgError("option_logprob: no signals");
  std::vector<Tensor> blocks;
  AssembledSequence prompt;
  for (const auto& [m, sig] : signals) {
    blocks.push_back(project(m, sig).tokens.detach());
    prompt.order.push_back(m);
  }
  prompt.prefix = blocks.size() == 1 ? blocks[0] : concat_rows(blocks);
  prompt.ids = {kBos};
  for (int32_t id : encode_text(system)) prompt.ids.push_back(id);
  for (int32_t id : encode_text(question)) prompt.ids.push_back(id);
  prompt.loss_mask.assign(prompt.ids.size(), 0);
  return dec_->continuation_logprob(prompt, option, true);
}

}  // namespace omni

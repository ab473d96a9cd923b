#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "omni/model/decoder.hpp"
#include "omni/model/encoder.hpp"
#include "omni/model/projector.hpp"
#include "omni/nn/modules.hpp"
#include "omni/tokenizers/tokenizers.hpp"

namespace omni {

// Full pipeline configuration. Widths must agree where components meet:
// tokenizer/encoder/projector share `dim`, projector's lm_dim must equal the
// decoder dim. Defaults describe the small reference setup.
struct ModelConfig {
  TokenizerConfig tok;
  EncoderConfig enc;
  ProjectorConfig upm;
  DecoderConfig dec;
};

// Tokenize -> encode -> project -> decode, with one parameter registry so
// freeze policy and checkpointing see every weight under a stable name
// ("tok.", "enc.", "upm.", "dec." prefixes).
class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t seed, Dtype dt = Dtype::F32);

  ParamRegistry& params() { return reg_; }
  const ParamRegistry& params() const { return reg_; }
  const ModelConfig& config() const { return cfg_; }

  TokenizerBank& tokenizers() { return *tok_; }
  Encoder& encoder() { return *enc_; }
  Projector& projector() { return *upm_; }
  Decoder& decoder() { return *dec_; }

  // Encoder output for one signal; video averages per-frame encodings.
  Tensor embed(Modality m, const Tensor& signal);

  // Modality-agnostic prefix tokens plus routing diagnostics.
  ProjectorOutput project(Modality m, const Tensor& signal);

  // Mean NLL of the caption bytes given the projected prefix.
  Tensor alignment_loss(Modality m, const Tensor& signal,
                        const std::string& caption);

  // Mean NLL of answer bytes across turns, prompts excluded.
  Tensor instruction_loss(
      const std::vector<std::pair<Modality, Tensor>>& signals,
      const std::string& system,
      const std::vector<std::pair<std::string, std::string>>& turns);

  // Greedy caption from a projected prefix.
  std::string caption(Modality m, const Tensor& signal, int max_new = 48);

  // Log-probability of `option` (plus EOS) as the answer to `question`.
  double option_logprob(const std::vector<std::pair<Modality, Tensor>>& signals,
                        const std::string& system, const std::string& question,
                        const std::string& option);

 private:
  ModelConfig cfg_;
  ParamRegistry reg_;
  std::unique_ptr<TokenizerBank> tok_;
  std::unique_ptr<Encoder> enc_;
  std::unique_ptr<Projector> upm_;
  std::unique_ptr<Decoder> dec_;
};

}  // namespace omni

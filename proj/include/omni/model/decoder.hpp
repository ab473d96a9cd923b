#pragma once

#include <string>
#include <utility>
#include <vector>

#include "omni/data/modality.hpp"
#include "omni/nn/modules.hpp"

namespace omni {

// Byte-level text vocabulary: ids 0..255 are raw bytes, then three specials.
inline constexpr int32_t kBos = 256;
inline constexpr int32_t kEos = 257;
inline constexpr int32_t kPad = 258;
inline constexpr int32_t kVocabSize = 259;

std::vector<int32_t> encode_text(const std::string& s);
// Maps byte ids back to bytes; special ids are skipped.
std::string decode_text(const std::vector<int32_t>& ids);

struct DecoderConfig {
  int64_t depth = 2;
  int64_t dim = 64;  // embedding width; the projector's adapter targets this
  int64_t heads = 4;
  int64_t max_seq = 192;  // embedded prefix rows + text positions
  int64_t vocab = kVocabSize;
};

// A ready-to-train sample: embedded modality tokens followed by text ids.
// loss_mask marks the text positions that contribute to the loss (answers,
// captions, the closing EOS); prefix rows never do.
struct AssembledSequence {
  Tensor prefix;                   // [M x dim], M may be 0
  std::vector<int32_t> ids;        // starts with BOS
  std::vector<uint8_t> loss_mask;  // one flag per entry of ids
  std::vector<Modality> order;     // modality blocks, in prefix order
  bool truncated = false;          // caption was cut to fit max_seq
};

// Small causal byte LM. All parameters live under "dec." so the freezing
// policies can address the whole decoder by prefix.
class Decoder {
 public:
  Decoder(const DecoderConfig& cfg, ParamRegistry& reg, Rng& rng,
          Dtype dt = Dtype::F32);

  // [modality tokens | BOS caption EOS], loss on caption bytes and EOS.
  AssembledSequence assemble_alignment(const Tensor& prefix, Modality m,
                                       const std::string& caption) const;
  // [all modality blocks | BOS sys ins1 ans1 ... insT ansT EOS], loss on
  // answer spans and the final EOS.
  AssembledSequence assemble_instruction(
      const std::vector<std::pair<Modality, Tensor>>& prefixes,
      const std::string& sys,
      const std::vector<std::pair<std::string, std::string>>& turns) const;

  // Causal logits over [prefix rows ; embedded text], one row per position.
  Tensor logits(const AssembledSequence& seq) const;
  // Mean next-token cross-entropy over masked positions.
  Tensor loss(const AssembledSequence& seq) const;

  // Greedy continuation of a prompt; stops at EOS, max_new, or max_seq.
  std::vector<int32_t> generate_ids(const AssembledSequence& prompt,
                                    int64_t max_new) const;
  std::string generate(const AssembledSequence& prompt, int64_t max_new) const;

  // Log-probability of `continuation` (optionally plus EOS) after the prompt.
  double continuation_logprob(const AssembledSequence& prompt,
                              const std::string& continuation,
                              bool include_eos) const;

  const DecoderConfig& config() const { return cfg_; }

 private:
  DecoderConfig cfg_;
  Dtype dt_;
  Parameter* embed_ = nullptr;  // [vocab x dim]
  Parameter* pos_ = nullptr;    // [max_seq x dim]
  std::vector<TransformerBlock> blocks_;
  LayerNorm ln_f_;
  Linear head_;
};

}  // namespace omni

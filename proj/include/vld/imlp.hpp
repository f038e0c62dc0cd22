#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vld/layers.hpp"
#include "vld/rng.hpp"
#include "vld/tensor.hpp"
#include "vld/vit.hpp"

namespace vld {

inline constexpr std::uint64_t kTextSeed = 0x7E7D5EEDULL;

/// Word skeleton around the M learnable slots. Template 4 ("... person
/// observed in both day and night conditions.") is the default.
struct PromptTemplate {
  int id = 4;
  std::vector<std::string> prefix;
  std::vector<std::string> suffix;
};

PromptTemplate prompt_template(int template_id);

/// Stand-in for a pretrained text encoder: a seed-determined pre-norm
/// transformer whose weights never require gradients. The feature of a prompt
/// is the final-norm output at its last token, projected and unit-normalised.
class FrozenTextEncoder {
 public:
  FrozenTextEncoder(std::size_t dim, std::size_t heads, std::size_t max_tokens, std::uint64_t seed = kTextSeed,
                    std::size_t layers = 2);

  /// tokens [N_y, L, D] -> unit-norm features [N_y, D].
  Tensor encode(const Tensor& tokens) const;
  std::size_t dim() const { return dim_; }
  std::size_t max_tokens() const { return pos_embedding_.shape()[0]; }
  /// All weights, for freeze checks. None of them require gradients.
  ParameterList weights() const;

 private:
  std::size_t dim_;
  Tensor pos_embedding_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_norm_;
  Linear projection_;
};

/// Per-identity learnable slots plus template token embeddings shared by all
/// identities.
struct PromptBank {
  Tensor slots;   // [N_y, M, D], learnable
  Tensor prefix;  // [p, D], frozen; undefined when p == 0
  Tensor suffix;  // [s, D], frozen
  int template_id = 4;

  std::size_t identities() const { return slots.shape()[0]; }
  std::size_t slot_count() const { return slots.shape()[1]; }
  std::size_t sequence_length() const;
  /// Prompt token embeddings for every identity: [N_y, p + M + s, D].
  Tensor assemble() const;
};

/// Template embeddings are drawn from a generator keyed by (template id,
/// position), so they do not depend on rng.
PromptBank build_prompts(std::size_t identities, std::size_t slots, int template_id, std::size_t dim, Rng& rng,
                         std::uint64_t template_seed = kTextSeed);

struct TextPrototypes {
  Tensor features;  // [N_y, D], unit rows
};

TextPrototypes encode_prompts(const PromptBank& bank, const FrozenTextEncoder& encoder);

/// Learnable similarity temperature, stored as a log and clamped at 100.
struct LogitScale {
  Tensor log_scale;

  static LogitScale init(double initial = 1.0 / 0.07);
  Tensor value() const;
};

/// scale * cosine(features_i, prototype_j): [n, N_y].
Tensor cosine_logits(const Tensor& features, const TextPrototypes& prototypes, const Tensor& scale);

/// Mean cross-entropy of each feature against all N_y prototypes.
Tensor v2t_loss(const Tensor& features, std::span<const std::size_t> labels, const TextPrototypes& prototypes,
                const Tensor& scale);

}  // namespace vld

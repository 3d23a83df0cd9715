#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace atrium::vit {

enum class FeedForward {
  kMlp,     // Linear -> GELU -> Linear (fc1 / fc2)
  kSwiGlu,  // gated feed-forward (weights_in / weights_out)
};

/// Architecture of one backbone size. The published sizes load the
/// released self-supervised checkpoints; `tiny-test` is a small randomly
/// initialised configuration for CPU tests.
struct BackboneVariant {
  std::string name;
  std::int64_t embed_dim = 0;
  std::int64_t depth = 0;
  std::int64_t num_heads = 0;
  std::int64_t patch_size = 14;
  std::int64_t mlp_hidden = 0;
  FeedForward feed_forward = FeedForward::kMlp;
  /// Side of the square positional-embedding grid stored in the weights;
  /// resampled bicubically when the input produces a different grid.
  std::int64_t pos_grid = 32;
  double layer_norm_eps = 1e-6;

  static BackboneVariant base();
  static BackboneVariant large();
  static BackboneVariant giant();
  static BackboneVariant tiny_test(std::int64_t embed_dim = 64, std::int64_t depth = 2,
                                   std::int64_t num_heads = 4);
  /// "base" | "large" | "giant" | "tiny-test"; std::invalid_argument otherwise.
  static BackboneVariant from_name(std::string_view name);

  /// Throws std::invalid_argument when the fields are inconsistent
  /// (published name with the wrong width, width not divisible by heads...).
  void validate() const;
};

/// Names and shapes of every tensor in a backbone checkpoint, in module
/// order. Key names follow the layout of the released checkpoints
/// (`embeddings.*`, `encoder.layer.<i>.*`, `layernorm.*`).
std::vector<std::pair<std::string, std::vector<std::int64_t>>> parameter_schema(
    const BackboneVariant& variant);

/// Total scalar count of parameter_schema, computed without allocating.
std::int64_t parameter_count(const BackboneVariant& variant);

}  // namespace atrium::vit

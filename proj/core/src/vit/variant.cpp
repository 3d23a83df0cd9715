#include "atrium/vit/variant.hpp"

#include <stdexcept>

#include <c10/util/StringUtil.h>

namespace atrium::vit {

BackboneVariant BackboneVariant::base() {
  return {"base", 768, 12, 12, 14, 3072, FeedForward::kMlp, 37, 1e-6};
}

BackboneVariant BackboneVariant::large() {
  return {"large", 1024, 24, 16, 14, 4096, FeedForward::kMlp, 37, 1e-6};
}

BackboneVariant BackboneVariant::giant() {
  return {"giant", 1536, 40, 24, 14, 4096, FeedForward::kSwiGlu, 37, 1e-6};
}

BackboneVariant BackboneVariant::tiny_test(std::int64_t embed_dim, std::int64_t depth,
                                           std::int64_t num_heads) {
  BackboneVariant v{"tiny-test", embed_dim, depth, num_heads, 14, 4 * embed_dim, FeedForward::kMlp, 32, 1e-6};
  v.validate();
  return v;
}

BackboneVariant BackboneVariant::from_name(std::string_view name) {
  if (name == "base") return base();
  if (name == "large") return large();
  if (name == "giant") return giant();
  if (name == "tiny-test" || name == "tiny") return tiny_test();
  throw std::invalid_argument("unknown backbone variant '" + std::string(name) +
                              "' (expected base, large, giant or tiny-test)");
}

void BackboneVariant::validate() const {
  const std::pair<const char*, std::int64_t> published[] = {{"base", 768}, {"large", 1024}, {"giant", 1536}};
  for (const auto& [pub_name, dim] : published) {
    if (name == pub_name && embed_dim != dim) {
      throw std::invalid_argument(c10::str("variant '", name, "' has width ", dim, ", not ", embed_dim));
    }
  }
  if (name == "tiny-test" && embed_dim < 16) throw std::invalid_argument("tiny-test width must be >= 16");
  if (embed_dim < 1 || depth < 1 || num_heads < 1 || patch_size < 1 || mlp_hidden < 1 || pos_grid < 1) {
    throw std::invalid_argument("backbone variant fields must be positive");
  }
  if (embed_dim % num_heads != 0) {
    throw std::invalid_argument(c10::str("width ", embed_dim, " is not divisible by ", num_heads, " heads"));
  }
}

std::vector<std::pair<std::string, std::vector<std::int64_t>>> parameter_schema(
    const BackboneVariant& v) {
  const auto d = v.embed_dim;
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> schema;
  schema.push_back({"embeddings.cls_token", {1, 1, d}});
  schema.push_back({"embeddings.position_embeddings", {1, 1 + v.pos_grid * v.pos_grid, d}});
  schema.push_back({"embeddings.patch_embeddings.projection.weight", {d, 3, v.patch_size, v.patch_size}});
  schema.push_back({"embeddings.patch_embeddings.projection.bias", {d}});
  for (std::int64_t i = 0; i < v.depth; ++i) {
    const auto p = "encoder.layer." + std::to_string(i) + ".";
    schema.push_back({p + "norm1.weight", {d}});
    schema.push_back({p + "norm1.bias", {d}});
    for (const char* proj : {"query", "key", "value"}) {
      schema.push_back({p + "attention.attention." + proj + ".weight", {d, d}});
      schema.push_back({p + "attention.attention." + proj + ".bias", {d}});
    }
    schema.push_back({p + "attention.output.dense.weight", {d, d}});
    schema.push_back({p + "attention.output.dense.bias", {d}});
    schema.push_back({p + "layer_scale1.lambda1", {d}});
    schema.push_back({p + "norm2.weight", {d}});
    schema.push_back({p + "norm2.bias", {d}});
    if (v.feed_forward == FeedForward::kSwiGlu) {
      schema.push_back({p + "mlp.weights_in.weight", {2 * v.mlp_hidden, d}});
      schema.push_back({p + "mlp.weights_in.bias", {2 * v.mlp_hidden}});
      schema.push_back({p + "mlp.weights_out.weight", {d, v.mlp_hidden}});
      schema.push_back({p + "mlp.weights_out.bias", {d}});
    } else {
      schema.push_back({p + "mlp.fc1.weight", {v.mlp_hidden, d}});
      schema.push_back({p + "mlp.fc1.bias", {v.mlp_hidden}});
      schema.push_back({p + "mlp.fc2.weight", {d, v.mlp_hidden}});
      schema.push_back({p + "mlp.fc2.bias", {d}});
    }
    schema.push_back({p + "layer_scale2.lambda1", {d}});
  }
  schema.push_back({"layernorm.weight", {d}});
  schema.push_back({"layernorm.bias", {d}});
  return schema;
}

std::int64_t parameter_count(const BackboneVariant& variant) {
  std::int64_t total = 0;
  for (const auto& [name, shape] : parameter_schema(variant)) {
    std::int64_t n = 1;
    for (auto s : shape) n *= s;
    total += n;
  }
  return total;
}

}  // namespace atrium::vit

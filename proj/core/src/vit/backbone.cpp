#include "atrium/vit/backbone.hpp"

#include <cmath>

#include <c10/util/StringUtil.h>

#include "atrium/common/errors.hpp"

namespace atrium::vit {

namespace F = torch::nn::functional;

namespace {

constexpr double kInitStd = 0.02;

void trunc_normal_(torch::Tensor t, double std) {
  torch::NoGradGuard no_grad;
  // Resample tails beyond two standard deviations, as timm's initialiser does.
  t.normal_(0.0, std);
  auto outside = t.abs() > 2.0 * std;
  while (outside.any().item<bool>()) {
    t.masked_scatter_(outside, torch::randn({outside.sum().item<std::int64_t>()}, t.options()) * std);
    outside = t.abs() > 2.0 * std;
  }
}

void init_linear(torch::nn::Linear& linear) {
  trunc_normal_(linear->weight, kInitStd);
  torch::NoGradGuard no_grad;
  linear->bias.zero_();
}

std::int64_t grid_side(std::int64_t positions) {
  const auto side = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(positions))));
  if (side * side != positions) throw ShapeMismatch("positional table is not a square grid");
  return side;
}

torch::Tensor resample_positions(const torch::Tensor& table, std::int64_t grid_h, std::int64_t grid_w) {
  const auto dim = table.size(2);
  const auto side = grid_side(table.size(1) - 1);
  auto cls = table.narrow(1, 0, 1);
  auto grid = table.narrow(1, 1, side * side).reshape({1, side, side, dim}).permute({0, 3, 1, 2});
  grid = F::interpolate(grid.to(torch::kFloat64), F::InterpolateFuncOptions()
                                                     .size(std::vector<std::int64_t>{grid_h, grid_w})
                                                     .mode(torch::kBicubic)
                                                     .align_corners(false))
             .to(table.scalar_type());
  grid = grid.permute({0, 2, 3, 1}).reshape({1, grid_h * grid_w, dim});
  return torch::cat({cls, grid}, 1);
}

}  // namespace

torch::Tensor patchify(const torch::Tensor& image, std::int64_t patch) {
  const bool batched = image.dim() == 4;
  if (!batched && image.dim() != 3) throw std::invalid_argument("patchify expects [C,H,W] or [B,C,H,W]");
  auto x = batched ? image : image.unsqueeze(0);
  const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  if (h % patch != 0 || w % patch != 0) {
    throw std::invalid_argument(c10::str("image ", h, "x", w, " is not divisible into ", patch, "x",
                                         patch, " patches"));
  }
  const auto gh = h / patch, gw = w / patch;
  auto patches = x.reshape({b, c, gh, patch, gw, patch})
                     .permute({0, 2, 4, 1, 3, 5})
                     .reshape({b, gh * gw, c, patch, patch});
  return batched ? patches : patches.squeeze(0);
}

torch::Tensor untile(const torch::Tensor& patches, std::int64_t grid_h, std::int64_t grid_w) {
  const bool batched = patches.dim() == 5;
  if (!batched && patches.dim() != 4) throw std::invalid_argument("untile expects [N,C,p,p] or [B,N,C,p,p]");
  auto x = batched ? patches : patches.unsqueeze(0);
  const auto b = x.size(0), n = x.size(1), c = x.size(2), p = x.size(3);
  if (n != grid_h * grid_w) throw ShapeMismatch(c10::str(n, " patches do not fill a ", grid_h, "x", grid_w, " grid"));
  auto image = x.reshape({b, grid_h, grid_w, c, p, p})
                   .permute({0, 3, 1, 4, 2, 5})
                   .reshape({b, c, grid_h * p, grid_w * p});
  return batched ? image : image.squeeze(0);
}

PatchEmbeddingsImpl::PatchEmbeddingsImpl(std::int64_t embed_dim, std::int64_t patch_size) {
  projection = register_module(
      "projection", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, embed_dim, patch_size).stride(patch_size)));
  trunc_normal_(projection->weight, kInitStd);
  torch::NoGradGuard no_grad;
  projection->bias.zero_();
}

EmbeddingsImpl::EmbeddingsImpl(const BackboneVariant& variant) : pos_grid_(variant.pos_grid) {
  const auto dim = variant.embed_dim;
  cls_token = register_parameter("cls_token", torch::empty({1, 1, dim}));
  position_embeddings =
      register_parameter("position_embeddings", torch::empty({1, 1 + pos_grid_ * pos_grid_, dim}));
  patch_embeddings = register_module("patch_embeddings", PatchEmbeddings(dim, variant.patch_size));
  trunc_normal_(position_embeddings, kInitStd);
  torch::NoGradGuard no_grad;
  cls_token.normal_(0.0, 1e-6);
}

torch::Tensor EmbeddingsImpl::positions(std::int64_t grid_h, std::int64_t grid_w) const {
  if (grid_h == pos_grid_ && grid_w == pos_grid_) return position_embeddings;
  return resample_positions(position_embeddings, grid_h, grid_w);
}

torch::Tensor EmbeddingsImpl::forward(const torch::Tensor& patches, std::int64_t grid_h,
                                      std::int64_t grid_w) {
  if (patches.dim() != 5) throw std::invalid_argument("embed_tokens expects [B, N, 3, p, p]");
  const auto b = patches.size(0), n = patches.size(1);
  if (n != grid_h * grid_w) {
    throw ShapeMismatch(c10::str("expected ", grid_h * grid_w, " patches, got ", n));
  }
  auto& proj = patch_embeddings->projection;
  const auto dim = proj->weight.size(0);
  if (patches.size(2) * patches.size(3) * patches.size(4) != proj->weight[0].numel()) {
    throw ShapeMismatch(c10::str("patch shape ", patches.sizes().slice(2), " does not match the projection"));
  }
  // A stride-p convolution over the image equals this per-patch linear map.
  auto flat = patches.reshape({b, n, -1});
  auto tokens = torch::matmul(flat, proj->weight.reshape({dim, -1}).t()) + proj->bias;
  tokens = torch::cat({cls_token.expand({b, 1, dim}), tokens}, 1);
  return tokens + positions(grid_h, grid_w);
}

SelfAttentionImpl::SelfAttentionImpl(std::int64_t dim, std::int64_t heads) : heads_(heads) {
  query = register_module("query", torch::nn::Linear(dim, dim));
  key = register_module("key", torch::nn::Linear(dim, dim));
  value = register_module("value", torch::nn::Linear(dim, dim));
  init_linear(query);
  init_linear(key);
  init_linear(value);
}

torch::Tensor SelfAttentionImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0), n = x.size(1), d = x.size(2);
  const auto head_dim = d / heads_;
  auto split_heads = [&](const torch::Tensor& t) {
    return t.view({b, n, heads_, head_dim}).transpose(1, 2);
  };
  auto q = split_heads(query(x));
  auto k = split_heads(key(x));
  auto v = split_heads(value(x));
  auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim));
  auto out = torch::matmul(torch::softmax(scores, -1), v);
  return out.transpose(1, 2).reshape({b, n, d});
}

AttentionOutputImpl::AttentionOutputImpl(std::int64_t dim) {
  dense = register_module("dense", torch::nn::Linear(dim, dim));
  init_linear(dense);
}

AttentionImpl::AttentionImpl(std::int64_t dim, std::int64_t heads) {
  attention = register_module("attention", SelfAttention(dim, heads));
  output = register_module("output", AttentionOutput(dim));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& x) { return output->dense(attention(x)); }

LayerScaleImpl::LayerScaleImpl(std::int64_t dim) {
  lambda1 = register_parameter("lambda1", torch::ones({dim}));
}

FeedForwardBlockImpl::FeedForwardBlockImpl(std::int64_t dim, std::int64_t hidden, FeedForward kind)
    : kind_(kind) {
  if (kind == FeedForward::kSwiGlu) {
    fc1_ = register_module("weights_in", torch::nn::Linear(dim, 2 * hidden));
    fc2_ = register_module("weights_out", torch::nn::Linear(hidden, dim));
  } else {
    fc1_ = register_module("fc1", torch::nn::Linear(dim, hidden));
    fc2_ = register_module("fc2", torch::nn::Linear(hidden, dim));
  }
  init_linear(fc1_);
  init_linear(fc2_);
}

torch::Tensor FeedForwardBlockImpl::forward(const torch::Tensor& x) {
  auto h = fc1_(x);
  if (kind_ == FeedForward::kSwiGlu) {
    auto halves = h.chunk(2, -1);
    h = F::silu(halves[0]) * halves[1];
  } else {
    h = F::gelu(h);
  }
  return fc2_(h);
}

BlockImpl::BlockImpl(const BackboneVariant& v) {
  auto ln = [&] {
    return torch::nn::LayerNorm(torch::nn::LayerNormOptions({v.embed_dim}).eps(v.layer_norm_eps));
  };
  norm1 = register_module("norm1", ln());
  attention = register_module("attention", Attention(v.embed_dim, v.num_heads));
  layer_scale1 = register_module("layer_scale1", LayerScale(v.embed_dim));
  norm2 = register_module("norm2", ln());
  mlp = register_module("mlp", FeedForwardBlock(v.embed_dim, v.mlp_hidden, v.feed_forward));
  layer_scale2 = register_module("layer_scale2", LayerScale(v.embed_dim));
}

torch::Tensor BlockImpl::forward(const torch::Tensor& x) {
  auto h = x + layer_scale1(attention(norm1(x)));
  return h + layer_scale2(mlp(norm2(h)));
}

EncoderImpl::EncoderImpl(const BackboneVariant& variant) {
  layer = register_module("layer", torch::nn::ModuleList());
  for (std::int64_t i = 0; i < variant.depth; ++i) layer->push_back(Block(variant));
}

torch::Tensor EncoderImpl::forward(torch::Tensor x) {
  for (const auto& block : *layer) x = block->as<Block>()->forward(x);
  return x;
}

ViTBackboneImpl::ViTBackboneImpl(BackboneVariant variant) : variant_(std::move(variant)) {
  variant_.validate();
  embeddings = register_module("embeddings", Embeddings(variant_));
  encoder = register_module("encoder", Encoder(variant_));
  layernorm = register_module(
      "layernorm",
      torch::nn::LayerNorm(torch::nn::LayerNormOptions({variant_.embed_dim}).eps(variant_.layer_norm_eps)));
}

torch::Tensor ViTBackboneImpl::embed_tokens(const torch::Tensor& patches, std::int64_t grid_h,
                                            std::int64_t grid_w) {
  return embeddings->forward(patches, grid_h, grid_w);
}

torch::Tensor ViTBackboneImpl::encode_tokens(const torch::Tensor& tokens) {
  return layernorm(encoder(tokens));
}

torch::Tensor ViTBackboneImpl::encode(const torch::Tensor& images) {
  auto x = images.dim() == 3 ? images.unsqueeze(0) : images;
  if (x.dim() != 4 || x.size(1) != 3) {
    throw std::invalid_argument(c10::str("encode expects [B, 3, H, W], got ", images.sizes()));
  }
  const auto p = variant_.patch_size;
  auto patches = patchify(x, p);
  const auto gh = x.size(2) / p, gw = x.size(3) / p;
  auto tokens = encode_tokens(embed_tokens(patches, gh, gw));
  // Drop the class token; the patch tokens are already in row-major order.
  return tokens.narrow(1, 1, gh * gw).reshape({x.size(0), gh, gw, variant_.embed_dim});
}

LoadManifest ViTBackboneImpl::load_weights(const TensorArchive& archive) {
  TensorMap state = archive.tensors;
  // Exports of classification models nest the backbone under "dinov2.".
  const std::string nested = "dinov2.";
  if (!state.count("embeddings.cls_token") && state.count(nested + "embeddings.cls_token")) {
    TensorMap stripped;
    for (auto& [name, t] : state) {
      if (name.starts_with(nested)) stripped.emplace(name.substr(nested.size()), t);
    }
    state = std::move(stripped);
  }
  // Validate against the schema first so the error names the schema key.
  for (const auto& [name, shape] : parameter_schema(variant_)) {
    auto it = state.find(name);
    if (it == state.end()) throw MissingKey("backbone checkpoint is missing '" + name + "'");
    const auto& stored = it->second;
    if (name == "embeddings.position_embeddings" && stored.dim() == 3 && stored.size(0) == 1 &&
        stored.size(2) == shape[2] && stored.size(1) != shape[1]) {
      const auto side = grid_side(shape[1] - 1);
      it->second = resample_positions(stored.to(torch::kFloat32), side, side);
      continue;
    }
    if (stored.sizes() != c10::IntArrayRef(shape)) {
      throw ShapeMismatch(c10::str("backbone checkpoint tensor '", name, "' has shape ", stored.sizes(),
                                   ", variant '", variant_.name, "' expects ", c10::IntArrayRef(shape)));
    }
  }
  return load_module_state(*this, state);
}

LoadManifest ViTBackboneImpl::load_checkpoint(const std::filesystem::path& path) {
  return load_weights(load_archive(path));
}

TensorArchive ViTBackboneImpl::to_archive() const {
  TensorArchive archive;
  archive.tensors = clone_state(*this);
  archive.metadata["variant"] = variant_.name;
  archive.metadata["embed_dim"] = std::to_string(variant_.embed_dim);
  archive.metadata["depth"] = std::to_string(variant_.depth);
  archive.metadata["num_heads"] = std::to_string(variant_.num_heads);
  return archive;
}

void ViTBackboneImpl::freeze() {
  for (auto& p : parameters()) p.set_requires_grad(false);
  frozen_ = true;
  torch::nn::Module::train(false);
}

void ViTBackboneImpl::train(bool on) { torch::nn::Module::train(frozen_ ? false : on); }

}  // namespace atrium::vit

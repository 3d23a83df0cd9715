#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "atrium/common/errors.hpp"
#include "atrium/common/hashing.hpp"
#include "atrium/common/random.hpp"
#include "atrium/common/strings.hpp"
#include "atrium/common/tensor_archive.hpp"

namespace fs = std::filesystem;
using namespace atrium;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("atrium_common_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Fnv1a, KnownVectors) {
  // Reference values of 64-bit FNV-1a.
  EXPECT_EQ(Fnv1a().value(), 0xcbf29ce484222325ULL);
  EXPECT_EQ(Fnv1a().update(std::string_view("a")).value(), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(Fnv1a().update(std::string_view("foobar")).value(), 0x85944171f73967e8ULL);
  EXPECT_EQ(Fnv1a().update(std::string_view("foobar")).hex().size(), 16u);
}

TEST(Fnv1a, TensorHashSeesDtypeShapeAndValues) {
  auto a = torch::arange(6, torch::kFloat32);
  auto h = [](const torch::Tensor& t) { return Fnv1a().update(t).value(); };
  EXPECT_EQ(h(a), h(a.clone()));
  EXPECT_NE(h(a), h(a.reshape({2, 3})));
  EXPECT_NE(h(a), h(a.to(torch::kFloat64)));
  auto b = a.clone();
  b[3] = 3.5;
  EXPECT_NE(h(a), h(b));
  // Non-contiguous views hash by value.
  auto m = torch::arange(6, torch::kFloat32).reshape({2, 3});
  EXPECT_EQ(h(m.t()), h(m.t().contiguous()));
}

TEST(SeededPermutation, IsAPermutationAndDeterministic) {
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL}) {
    auto p = seeded_permutation(100, seed);
    std::set<std::size_t> seen(p.begin(), p.end());
    ASSERT_EQ(seen.size(), 100u);
    EXPECT_EQ(*seen.rbegin(), 99u);
    EXPECT_EQ(p, seeded_permutation(100, seed));
  }
  EXPECT_NE(seeded_permutation(100, 0), seeded_permutation(100, 1));
  EXPECT_TRUE(seeded_permutation(0, 3).empty());
}

TEST(MixSeed, SaltsSeparateStreams) {
  EXPECT_EQ(mix_seed(7, 1), mix_seed(7, 1));
  EXPECT_NE(mix_seed(7, 1), mix_seed(7, 2));
  EXPECT_NE(mix_seed(7, 1), mix_seed(8, 1));
}

TEST(Strings, DoubleRoundTripIsExact) {
  for (double v : {0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, 0.85}) {
    EXPECT_EQ(parse_double(format_double(v)), v) << format_double(v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_THROW(parse_double("1.5x"), std::invalid_argument);
  EXPECT_THROW(parse_double(""), std::invalid_argument);
}

TEST(Strings, SplitAndTrim) {
  EXPECT_EQ(split("a,b,,c", ','), (std::vector<std::string>{"a", "b", "", "c"}));
  EXPECT_EQ(trim("  x y \t\n"), "x y");
  EXPECT_EQ(trim("   "), "");
}

TEST(TensorArchive, RoundTripAllDtypes) {
  auto dir = scratch("roundtrip");
  TensorArchive archive;
  archive.tensors["f32"] = torch::randn({3, 4});
  archive.tensors["f64"] = torch::randn({2}, torch::kFloat64);
  archive.tensors["i64"] = torch::arange(5, torch::kInt64);
  archive.tensors["u8"] = torch::tensor({0, 1, 255}, torch::kUInt8);
  archive.tensors["scalar"] = torch::tensor(3.25f);
  archive.tensors["empty"] = torch::zeros({0, 3});
  archive.metadata["note"] = "hello";
  save_archive(dir / "a.safetensors", archive);

  auto back = load_archive(dir / "a.safetensors");
  ASSERT_EQ(back.tensors.size(), archive.tensors.size());
  for (const auto& [name, t] : archive.tensors) {
    ASSERT_TRUE(back.tensors.count(name)) << name;
    EXPECT_EQ(back.tensors[name].scalar_type(), t.scalar_type()) << name;
    EXPECT_TRUE(torch::equal(back.tensors[name], t)) << name;
  }
  EXPECT_EQ(back.metadata.at("note"), "hello");

  auto header = read_archive_header(dir / "a.safetensors");
  EXPECT_EQ(header.at("f32").shape, (std::vector<std::int64_t>{3, 4}));
  EXPECT_EQ(header.at("u8").dtype, torch::kUInt8);
}

TEST(TensorArchive, TruncatedAndMissingFilesFail) {
  auto dir = scratch("truncated");
  TensorArchive archive;
  archive.tensors["w"] = torch::randn({64, 64});
  save_archive(dir / "w.safetensors", archive);
  const auto size = fs::file_size(dir / "w.safetensors");
  fs::resize_file(dir / "w.safetensors", size - 100);
  EXPECT_THROW(load_archive(dir / "w.safetensors"), FormatError);

  { std::ofstream(dir / "tiny.bin") << "abc"; }
  EXPECT_THROW(load_archive(dir / "tiny.bin"), FormatError);
  EXPECT_THROW(load_archive(dir / "nope.safetensors"), IoError);
}

TEST(ModuleState, LoadRequiresEveryTensorWithMatchingShape) {
  torch::nn::Linear a(3, 2), b(3, 2);
  auto state = clone_state(*a);
  auto manifest = load_module_state(*b, state);
  EXPECT_EQ(manifest.loaded.size(), 2u);
  EXPECT_TRUE(torch::equal(a->weight, b->weight));

  auto missing = state;
  missing.erase("bias");
  try {
    load_module_state(*b, missing);
    FAIL() << "expected MissingKey";
  } catch (const MissingKey& e) {
    EXPECT_NE(std::string(e.what()).find("bias"), std::string::npos);
  }

  auto wrong = state;
  wrong["weight"] = torch::zeros({2, 4});
  EXPECT_THROW(load_module_state(*b, wrong), ShapeMismatch);

  auto extra = state;
  extra["unused"] = torch::zeros({1});
  EXPECT_EQ(load_module_state(*b, extra).ignored, std::vector<std::string>{"unused"});

  TensorMap prefixed;
  for (const auto& [k, v] : state) prefixed["lin." + k] = v;
  EXPECT_EQ(load_module_state(*b, prefixed, "lin.").loaded.size(), 2u);
}

TEST(ModuleState, CloneIsDetached) {
  torch::nn::Linear a(2, 2);
  auto copy = clone_state(*a);
  {
    torch::NoGradGuard guard;
    a->weight.add_(1.0);
  }
  EXPECT_FALSE(torch::equal(copy.at("weight"), a->weight));
}

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "atrium/common/errors.hpp"
#include "atrium/data/corpus.hpp"
#include "atrium/data/nifti.hpp"
#include "atrium/data/phantom.hpp"
#include "atrium/data/preprocess.hpp"
#include "atrium/data/split.hpp"
#include "atrium/data/volume.hpp"

namespace fs = std::filesystem;
using namespace atrium;
using namespace atrium::data;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("atrium_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Volume random_volume(const std::string& id, std::int64_t s, std::int64_t h, std::int64_t w,
                     std::uint64_t seed = 0) {
  torch::manual_seed(static_cast<std::int64_t>(seed));
  auto voxels = torch::rand({s, h, w});
  auto labels = (torch::rand({s, h, w}) > 0.7).to(torch::kUInt8);
  return Volume(voxels, labels, id);
}

std::vector<std::string> make_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("p" + std::to_string(1000 + i));
  return ids;
}

std::vector<SliceSample> slices_for_patients(std::size_t patients, std::size_t per_patient) {
  std::vector<SliceSample> out;
  for (std::size_t p = 0; p < patients; ++p) {
    for (std::size_t k = 0; k < per_patient; ++k) {
      out.push_back({torch::zeros({4, 4}), torch::zeros({4, 4}, torch::kUInt8),
                     "p" + std::to_string(p), static_cast<std::int64_t>(k)});
    }
  }
  return out;
}

}  // namespace

TEST(Volume, EnforcesInvariants) {
  auto v = random_volume("a", 3, 5, 7);
  EXPECT_EQ(v.slices(), 3);
  EXPECT_EQ(v.height(), 5);
  EXPECT_EQ(v.width(), 7);
  EXPECT_EQ(v.voxel_count(), 105);
  EXPECT_THROW(Volume(torch::zeros({2, 4, 4}), torch::zeros({2, 4, 5}, torch::kUInt8), "x"), ShapeMismatch);
  EXPECT_THROW(Volume(torch::zeros({4, 4}), torch::zeros({4, 4}, torch::kUInt8), "x"), ShapeMismatch);
  auto nonbinary = torch::zeros({1, 2, 2}, torch::kUInt8);
  nonbinary[0][0][0] = 2;
  EXPECT_THROW(Volume(torch::zeros({1, 2, 2}), nonbinary, "x"), std::invalid_argument);
  auto nan = torch::zeros({1, 2, 2});
  nan[0][1][1] = std::nan("");
  EXPECT_THROW(Volume(nan, torch::zeros({1, 2, 2}, torch::kUInt8), "x"), std::invalid_argument);
}

TEST(Slices, ExtractIsOrderedIdentity) {
  auto v = random_volume("pt", 44, 8, 6);
  auto slices = extract_slices(v);
  ASSERT_EQ(slices.size(), 44u);
  for (std::size_t k = 0; k < slices.size(); ++k) {
    EXPECT_EQ(slices[k].slice_index, static_cast<std::int64_t>(k));
    EXPECT_EQ(slices[k].patient_id, "pt");
    EXPECT_TRUE(torch::equal(slices[k].image, v.voxels()[k]));
    EXPECT_TRUE(torch::equal(slices[k].mask, v.labels()[k]));
  }
  auto back = stack_slices(slices);
  EXPECT_TRUE(torch::equal(back.voxels(), v.voxels()));
  EXPECT_TRUE(torch::equal(back.labels(), v.labels()));
}

TEST(Slices, EmptyMasksAreRetained) {
  Volume v(torch::rand({5, 4, 4}), torch::zeros({5, 4, 4}, torch::kUInt8), "empty");
  auto slices = extract_slices(v);
  ASSERT_EQ(slices.size(), 5u);
  for (const auto& s : slices) EXPECT_EQ(s.mask.sum().item<int64_t>(), 0);
}

TEST(Slices, ThreeChannelReplication) {
  auto img = torch::full({64, 64}, 0.7f);
  auto rgb = to_three_channel(img);
  EXPECT_EQ(rgb.sizes(), (std::vector<std::int64_t>{3, 64, 64}));
  EXPECT_FLOAT_EQ(rgb[0][5][5].item<float>(), 0.7f);
  EXPECT_FLOAT_EQ(rgb[2][5][5].item<float>(), 0.7f);
  auto r = torch::rand({9, 11});
  auto rr = to_three_channel(r);
  EXPECT_TRUE(torch::equal(rr[0], rr[2]));
  EXPECT_TRUE(torch::equal(rr[1], r));
  EXPECT_THROW(to_three_channel(torch::zeros({2, 3, 3})), std::invalid_argument);
}

TEST(Nifti, RoundTripPreservesVoxels) {
  auto dir = scratch("nifti");
  PhantomSpec spec;
  spec.n_volumes = 1;
  auto written = write_phantom(spec, dir);
  auto v = load_volume(dir / "phantom_000_image.nii.gz", dir / "phantom_000_label.nii.gz", "phantom_000");
  EXPECT_EQ(v.voxel_count(), 64 * 64 * 8);
  EXPECT_TRUE(torch::equal(v.voxels(), written[0].voxels()));
  EXPECT_TRUE(torch::equal(v.labels(), written[0].labels()));
  ASSERT_TRUE(v.spacing().has_value());
  EXPECT_DOUBLE_EQ((*v.spacing())[2], 2.5);

  auto extent = read_nifti_extent(dir / "phantom_000_image.nii.gz");
  EXPECT_EQ(extent.height, 64);
  EXPECT_EQ(extent.width, 64);
  EXPECT_EQ(extent.slices, 8);

  // Uncompressed files and non-square grids keep their orientation.
  auto data = torch::arange(2 * 3 * 5, torch::kFloat32).reshape({2, 3, 5});
  write_nifti(dir / "plain.nii", data, NiftiDatatype::kFloat32);
  auto back = read_nifti(dir / "plain.nii");
  EXPECT_TRUE(torch::equal(back.data, data));
}

TEST(Nifti, LabelsAreBinarizedAtHalf) {
  auto dir = scratch("nifti_bin");
  auto image = torch::rand({2, 4, 4});
  auto label = torch::tensor({0.0f, 0.4f, 0.6f, 1.0f}).repeat({8}).reshape({2, 4, 4});
  write_nifti(dir / "x_image.nii", image, NiftiDatatype::kFloat32);
  write_nifti(dir / "x_label.nii", label, NiftiDatatype::kFloat32);
  auto v = load_volume(dir / "x_image.nii", dir / "x_label.nii");
  EXPECT_TRUE(torch::equal(v.labels(), (label > 0.5f).to(torch::kUInt8)));
}

TEST(Nifti, Errors) {
  auto dir = scratch("nifti_err");
  write_nifti(dir / "a_image.nii.gz", torch::rand({2, 4, 4}), NiftiDatatype::kFloat32);
  write_nifti(dir / "a_label.nii.gz", torch::zeros({2, 4, 5}), NiftiDatatype::kUInt8);
  EXPECT_THROW(load_volume(dir / "a_image.nii.gz", dir / "a_label.nii.gz"), ShapeMismatch);
  EXPECT_THROW(read_nifti(dir / "missing.nii"), IoError);
  { std::ofstream(dir / "junk.nii") << "not a nifti file"; }
  EXPECT_THROW(read_nifti(dir / "junk.nii"), FormatError);
  // Corrupt magic in an otherwise valid header.
  write_nifti(dir / "b.nii", torch::rand({1, 4, 4}), NiftiDatatype::kFloat32);
  {
    std::fstream f(dir / "b.nii", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(344);
    f.write("xxxx", 4);
  }
  EXPECT_THROW(read_nifti(dir / "b.nii"), FormatError);
}

TEST(Corpus, PairsImagesAndLabels) {
  auto dir = scratch("corpus");
  PhantomSpec spec;
  spec.n_volumes = 3;
  spec.height = 20;
  spec.width = 24;
  spec.n_slices = 2;
  write_phantom(spec, dir);
  auto corpus = Corpus::open(dir);
  EXPECT_EQ(corpus.ids(), (std::vector<std::string>{"phantom_000", "phantom_001", "phantom_002"}));
  EXPECT_EQ(corpus.max_side(), 24);
  EXPECT_EQ(corpus.load("phantom_001").width(), 24);
  EXPECT_THROW(corpus.entry("nobody"), IoError);

  fs::remove(dir / "phantom_002_label.nii.gz");
  EXPECT_THROW(Corpus::open(dir), IoError);
  EXPECT_THROW(Corpus::open(dir / "missing"), IoError);
  EXPECT_THROW(Corpus::open(dir, {"*.png", "*_label.png"}), IoError);
}

TEST(Corpus, GlobMatching) {
  EXPECT_EQ(match_glob("*_image.nii.gz", "p01_image.nii.gz"), "p01");
  EXPECT_FALSE(match_glob("*_image.nii.gz", "p01_label.nii.gz").has_value());
  EXPECT_EQ(match_glob("lgemri_?_*.nii", "lgemri_a_xyz.nii"), "xyz");
}

TEST(Preprocess, BaselinePadsThenResizes) {
  SliceSample s{torch::rand({576, 576}), (torch::rand({576, 576}) > 0.5).to(torch::kUInt8), "p", 0};
  auto out = preprocess_baseline(s);
  EXPECT_EQ(out.image.sizes(), (std::vector<std::int64_t>{1, 320, 320}));
  EXPECT_EQ(out.mask.sizes(), (std::vector<std::int64_t>{320, 320}));
  // 32-pixel zero border on each side of 640 maps to a 16-pixel border at 320.
  EXPECT_EQ(out.mask.narrow(0, 0, 16).sum().item<int64_t>(), 0);
  EXPECT_GT(out.mask.narrow(0, 16, 288).sum().item<int64_t>(), 0);
  EXPECT_NEAR(out.image.mean().item<double>(), 0.0, 1e-5);
  EXPECT_NEAR(out.image.std(false).item<double>(), 1.0, 1e-4);

  // Already at the pad target: only resizing happens.
  auto img = torch::rand({640, 640});
  SliceSample full{img, torch::zeros({640, 640}, torch::kUInt8), "p", 0};
  auto expect = zscore(resize_bilinear(img, 320, 320));
  EXPECT_TRUE(torch::allclose(preprocess_baseline(full).image[0], expect));

  SliceSample big{torch::rand({700, 600}), torch::zeros({700, 600}, torch::kUInt8), "p", 0};
  EXPECT_THROW(preprocess_baseline(big), std::invalid_argument);
  BaselinePreprocessing crop;
  crop.crop_oversize = true;
  EXPECT_EQ(preprocess_baseline(big, crop).mask.size(0), 320);
}

TEST(Preprocess, MaskStaysBinaryOnEveryPath) {
  torch::manual_seed(3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto h = 30 + 7 * trial, w = 50 - 3 * trial;
    SliceSample s{torch::randn({h, w}), (torch::rand({h, w}) > 0.6).to(torch::kUInt8), "p", 0};
    BaselinePreprocessing b;
    b.target = 48;
    b.pad_target = 64;
    ViTPreprocessing v;
    v.size = 56;
    for (const auto& mask : {preprocess_baseline(s, b).mask, preprocess_vit(s, v).mask}) {
      EXPECT_EQ(mask.scalar_type(), torch::kUInt8);
      EXPECT_TRUE(((mask == 0) | (mask == 1)).all().item<bool>());
    }
  }
}

TEST(Preprocess, RestoreBaselineGeometryInvertsPadding) {
  BaselinePreprocessing b;
  b.target = 64;
  b.pad_target = 64;
  auto mask = (torch::rand({40, 52}) > 0.5).to(torch::kUInt8);
  SliceSample s{torch::rand({40, 52}), mask, "p", 0};
  auto prepared = preprocess_baseline(s, b);
  EXPECT_TRUE(torch::equal(restore_baseline_geometry(prepared.mask, 40, 52, b), mask));
}

TEST(Preprocess, ViTShapesAndConstants) {
  SliceSample s{torch::rand({640, 640}), torch::ones({640, 640}, torch::kUInt8), "p", 0};
  auto out = preprocess_vit(s);
  EXPECT_EQ(out.image.sizes(), (std::vector<std::int64_t>{3, 448, 448}));
  EXPECT_TRUE(out.mask.eq(1).all().item<bool>());
  EXPECT_EQ(out.mask.numel(), 448 * 448);

  SliceSample zero{torch::zeros({64, 64}), torch::zeros({64, 64}, torch::kUInt8), "p", 0};
  auto z = preprocess_vit(zero).image;
  const float mean[3] = {0.485f, 0.456f, 0.406f}, sd[3] = {0.229f, 0.224f, 0.225f};
  for (int c = 0; c < 3; ++c) {
    EXPECT_TRUE(torch::allclose(z[c], torch::full({448, 448}, (0.0f - mean[c]) / sd[c])));
  }
  ViTPreprocessing zs;
  zs.normalization = IntensityNormalization::kPerSliceZScore;
  auto n = preprocess_vit(s, zs).image;
  EXPECT_NEAR(n.mean().item<double>(), 0.0, 1e-5);
}

TEST(Split, FloorArithmeticRemainderToTest) {
  auto c = default_split_counts(130);
  EXPECT_EQ(c.train, 91u);
  EXPECT_EQ(c.val, 13u);
  EXPECT_EQ(c.test, 26u);
  c = default_split_counts(10);
  EXPECT_EQ(c.train, 7u);
  EXPECT_EQ(c.val, 1u);
  EXPECT_EQ(c.test, 2u);
  // Independent oracle over a range of sizes.
  for (std::size_t n = 3; n < 300; ++n) {
    auto k = default_split_counts(n);
    EXPECT_EQ(k.train, 7 * n / 10);
    EXPECT_EQ(k.val, n / 10);
    EXPECT_EQ(k.train + k.val + k.test, n);
  }
}

TEST(Split, DisjointCoveringDeterministic) {
  for (std::uint64_t seed : {0ULL, 5ULL, 99ULL}) {
    for (std::size_t n : {3u, 10u, 55u, 130u}) {
      auto ids = make_ids(n);
      auto s = split_patients(ids, seed);
      std::set<std::string> all;
      for (const auto* part : {&s.train_ids, &s.val_ids, &s.test_ids}) all.insert(part->begin(), part->end());
      EXPECT_EQ(all.size(), n);
      EXPECT_EQ(s.train_ids.size() + s.val_ids.size() + s.test_ids.size(), n);
      auto again = split_patients(ids, seed);
      EXPECT_EQ(s.train_ids, again.train_ids);
      EXPECT_EQ(s.test_ids, again.test_ids);
      // Input order does not matter.
      std::reverse(ids.begin(), ids.end());
      EXPECT_EQ(split_patients(ids, seed).val_ids, s.val_ids);
    }
  }
  EXPECT_NE(split_patients(make_ids(130), 0).train_ids, split_patients(make_ids(130), 1).train_ids);
}

TEST(Split, Errors) {
  EXPECT_THROW(split_patients(make_ids(2), 0), std::invalid_argument);
  EXPECT_THROW(split_patients({"a", "b", "a"}, 0), std::invalid_argument);
  EXPECT_THROW(split_patients(make_ids(10), 0, {5, 2, 2}), std::invalid_argument);
  auto s = split_patients(make_ids(55), 0, {40, 5, 10});
  EXPECT_EQ(s.val_ids.size(), 5u);
}

TEST(Split, ManifestRoundTrip) {
  auto dir = scratch("manifest");
  auto s = split_patients(make_ids(20), 7);
  write_split_manifest(s, dir);
  auto back = read_split_manifest(dir);
  EXPECT_EQ(back.train_ids, s.train_ids);
  EXPECT_EQ(back.val_ids, s.val_ids);
  EXPECT_EQ(back.test_ids, s.test_ids);
  EXPECT_EQ(back.seed, 7u);
  EXPECT_THROW(read_split_manifest(dir / "nope"), IoError);
}

TEST(Subsets, FractionCountsNestingIdentity) {
  auto samples = slices_for_patients(20, 10);
  EXPECT_EQ(subset_by_fraction(samples, 0.1, 3).size(), 20u);
  auto all = subset_by_fraction(samples, 1.0, 3);
  ASSERT_EQ(all.size(), samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(all[i].patient_id, samples[i].patient_id);
    EXPECT_EQ(all[i].slice_index, samples[i].slice_index);
  }
  for (std::size_t n : {7u, 33u, 200u}) {
    std::vector<std::size_t> prev;
    for (double f : {0.01, 0.05, 0.1, 0.25, 0.5, 1.0}) {
      auto idx = subset_indices_by_fraction(n, f, 11);
      EXPECT_EQ(idx.size(), static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9)));
      EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
      EXPECT_TRUE(std::includes(idx.begin(), idx.end(), prev.begin(), prev.end()));
      prev = idx;
    }
  }
  EXPECT_THROW(subset_indices_by_fraction(10, 0.0, 0), std::invalid_argument);
  EXPECT_THROW(subset_indices_by_fraction(10, 1.5, 0), std::invalid_argument);
}

TEST(Subsets, PatientCountsNesting) {
  auto samples = slices_for_patients(91, 3);
  auto one = subset_by_patients(samples, 1, 4);
  EXPECT_EQ(distinct_patients(one), 1u);
  EXPECT_EQ(one.size(), 3u);
  EXPECT_EQ(distinct_patients(subset_by_patients(samples, 10, 4)), 10u);
  EXPECT_EQ(subset_by_patients(samples, 91, 4).size(), samples.size());

  std::vector<std::string> pids;
  for (const auto& s : samples) pids.push_back(s.patient_id);
  std::vector<std::size_t> prev;
  for (std::size_t k : {1u, 10u, 50u, 91u}) {
    auto idx = subset_indices_by_patients(pids, k, 4);
    EXPECT_TRUE(std::includes(idx.begin(), idx.end(), prev.begin(), prev.end()));
    prev = idx;
  }
  EXPECT_THROW(subset_by_patients(samples, 0, 4), std::invalid_argument);
  EXPECT_THROW(subset_by_patients(samples, 92, 4), std::invalid_argument);
}

TEST(Phantom, DeterministicAndPlausible) {
  PhantomSpec spec;
  spec.n_volumes = 3;
  auto a = generate_phantom(spec), b = generate_phantom(spec);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(torch::equal(a[i].voxels(), b[i].voxels()));
    EXPECT_TRUE(torch::equal(a[i].labels(), b[i].labels()));
  }
  spec.seed = 1;
  EXPECT_FALSE(torch::equal(generate_phantom(spec)[0].voxels(), a[0].voxels()));
}

TEST(Phantom, ForegroundFractionBounds) {
  PhantomSpec spec;
  spec.n_volumes = 100;
  spec.height = 48;
  spec.width = 48;
  spec.n_slices = 8;
  for (const auto& v : generate_phantom(spec)) {
    const double fg = v.labels().to(torch::kFloat64).mean().item<double>();
    EXPECT_GE(fg, 0.01) << v.patient_id();
    EXPECT_LE(fg, 0.50) << v.patient_id();
  }
}

TEST(Phantom, ZeroNoiseIsPiecewiseConstant) {
  PhantomSpec spec;
  spec.n_volumes = 1;
  spec.noise_sigma = 0.0;
  auto v = generate_phantom(spec)[0];
  auto unique = std::get<0>(torch::_unique(v.voxels()));
  EXPECT_LE(unique.numel(), 4);  // background, body, neighbour, pool
  // The labelled region carries a single intensity.
  auto pool = v.voxels().masked_select(v.labels().to(torch::kBool));
  EXPECT_EQ(std::get<0>(torch::_unique(pool)).numel(), 1);
}

TEST(Phantom, RejectsTinyGrids) {
  PhantomSpec spec;
  spec.height = 8;
  EXPECT_THROW(generate_phantom(spec), std::invalid_argument);
  spec.height = 64;
  spec.noise_sigma = -1.0;
  EXPECT_THROW(generate_phantom(spec), std::invalid_argument);
}

#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "atrium/common/errors.hpp"
#include "atrium/data/volume.hpp"
#include "atrium/eval/inference.hpp"
#include "atrium/eval/metrics.hpp"
#include "atrium/eval/morphology.hpp"
#include "atrium/eval/overlay.hpp"
#include "atrium/eval/report.hpp"
#include "atrium/models/zoo.hpp"

namespace fs = std::filesystem;
using namespace atrium;
using namespace atrium::eval;

namespace {

torch::Tensor mask_from(std::initializer_list<std::initializer_list<int>> rows) {
  std::vector<std::uint8_t> flat;
  std::int64_t h = 0, w = 0;
  for (const auto& r : rows) {
    w = static_cast<std::int64_t>(r.size());
    for (int v : r) flat.push_back(static_cast<std::uint8_t>(v));
    ++h;
  }
  return torch::from_blob(flat.data(), {h, w}, torch::kUInt8).clone();
}

bool subset(const torch::Tensor& a, const torch::Tensor& b) {
  return (a.to(torch::kBool) & ~b.to(torch::kBool)).sum().item<std::int64_t>() == 0;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("atrium_eval_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Binarize, LogitAndProbabilityCuts) {
  auto logits = torch::tensor({-1.0f, -1e-7f, 0.0f, 2.0f});
  EXPECT_TRUE(torch::equal(binarize(logits), torch::tensor({0, 0, 1, 1}, torch::kUInt8)));
  auto probs = torch::tensor({0.2f, 0.5f, 0.7f});
  EXPECT_TRUE(torch::equal(binarize(probs, 0.5, true), torch::tensor({0, 1, 1}, torch::kUInt8)));
  // sigmoid(1) ~ 0.731: kept at 0.7, dropped at 0.75.
  EXPECT_EQ(binarize(torch::tensor({1.0f}), 0.7).item<int>(), 1);
  EXPECT_EQ(binarize(torch::tensor({1.0f}), 0.75).item<int>(), 0);
  EXPECT_TRUE(binarize(torch::full({3}, -100.0f), 0.0).all().item<bool>());
}

TEST(Metrics, WorkedExamples) {
  auto a = mask_from({{1, 1, 0}, {0, 1, 0}});
  auto b = mask_from({{1, 0, 0}, {0, 1, 1}});
  EXPECT_DOUBLE_EQ(dice(a, b), 2.0 * 2 / 6);
  EXPECT_DOUBLE_EQ(iou(a, b), 2.0 / 4);
  EXPECT_DOUBLE_EQ(dice(a, a), 1.0);
  auto empty = torch::zeros({2, 3}, torch::kUInt8);
  EXPECT_DOUBLE_EQ(dice(empty, empty), 1.0);
  EXPECT_DOUBLE_EQ(iou(empty, empty), 1.0);
  EXPECT_DOUBLE_EQ(dice(a, empty), 0.0);
  EXPECT_THROW(dice(a, torch::zeros({3, 2}, torch::kUInt8)), ShapeMismatch);
  EXPECT_THROW(dice(a, torch::full({2, 3}, 2, torch::kUInt8)), std::invalid_argument);
}

TEST(Metrics, BruteForceOracle) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const double p = 0.1 + 0.8 * (trial % 10) / 10.0;
    std::bernoulli_distribution coin(p);
    auto a = torch::zeros({16, 16}, torch::kUInt8), b = torch::zeros({16, 16}, torch::kUInt8);
    auto pa = a.accessor<std::uint8_t, 2>(), pb = b.accessor<std::uint8_t, 2>();
    long na = 0, nb = 0, both = 0, either = 0;
    for (int i = 0; i < 16; ++i) {
      for (int j = 0; j < 16; ++j) {
        pa[i][j] = coin(rng);
        pb[i][j] = coin(rng);
        na += pa[i][j];
        nb += pb[i][j];
        both += pa[i][j] && pb[i][j];
        either += pa[i][j] || pb[i][j];
      }
    }
    const double d = na + nb == 0 ? 1.0 : 2.0 * both / (na + nb);
    const double j = either == 0 ? 1.0 : static_cast<double>(both) / either;
    EXPECT_LE(std::abs(dice(a, b) - d), 1e-9);
    EXPECT_LE(std::abs(iou(a, b) - j), 1e-9);
    // iou = dice / (2 - dice) holds exactly in rationals: 2I/(A+B) / (2 - 2I/(A+B)) = I/(A+B-I).
    auto c = overlap(a, b);
    // dice / (2 - dice) = 2I / (2(A + B) - 2I); cross-multiply against I / U.
    if (c.union_size() > 0) {
      EXPECT_EQ(2 * c.intersection * c.union_size(), c.intersection * (2 * (c.a + c.b) - 2 * c.intersection));
    }
    EXPECT_NEAR(c.iou(), c.dice() / (2.0 - c.dice()), 1e-15);
  }
}

TEST(Morphology, IsolatedPixelAndHole) {
  auto speck = torch::zeros({7, 7}, torch::kUInt8);
  speck[3][3] = 1;
  EXPECT_EQ(morph_open(speck).sum().item<int>(), 0);

  auto block = torch::ones({7, 7}, torch::kUInt8);
  block[3][3] = 0;
  EXPECT_TRUE(morph_close(block).eq(1).all().item<bool>());

  // Closing at the image border keeps the input (outside counts as background).
  auto edge = torch::zeros({5, 5}, torch::kUInt8);
  edge[0][0] = 1;
  EXPECT_TRUE(subset(edge, morph_close(edge)));
}

TEST(Morphology, ErodeDilateByHand) {
  auto m = mask_from({{0, 0, 0, 0, 0}, {0, 1, 1, 1, 0}, {0, 1, 1, 1, 0}, {0, 1, 1, 1, 0}, {0, 0, 0, 0, 0}});
  auto e = erode(m);
  EXPECT_EQ(e.sum().item<int>(), 1);
  EXPECT_EQ(e[2][2].item<int>(), 1);
  EXPECT_EQ(dilate(m).sum().item<int>(), 25);
  EXPECT_EQ(dilate(e, StructuringElement::cross()).sum().item<int>(), 5);
  EXPECT_TRUE(torch::equal(morph_open(m), m));
  EXPECT_THROW(StructuringElement(torch::ones({2, 2})), std::invalid_argument);
  auto lopsided = torch::zeros({3, 3});
  lopsided[0][0] = 1;
  EXPECT_THROW(StructuringElement{lopsided}, std::invalid_argument);
}

TEST(Morphology, PropertiesOnRandomMasks) {
  torch::manual_seed(8);
  for (int trial = 0; trial < 50; ++trial) {
    auto m = (torch::rand({24, 20}) > (0.2 + 0.6 * trial / 50.0)).to(torch::kUInt8);
    auto o = morph_open(m), c = morph_close(m);
    EXPECT_TRUE(subset(o, m)) << trial;
    EXPECT_TRUE(subset(m, c)) << trial;
    EXPECT_TRUE(torch::equal(morph_open(o), o)) << trial;
    EXPECT_TRUE(torch::equal(morph_close(c), c)) << trial;
    EXPECT_TRUE(subset(erode(m), m));
    EXPECT_TRUE(subset(m, dilate(m)));
  }
}

TEST(Morphology, VolumesAreSliceWise) {
  auto v = (torch::rand({3, 12, 12}) > 0.5).to(torch::kUInt8);
  auto out = postprocess_baseline(v);
  for (int k = 0; k < 3; ++k) EXPECT_TRUE(torch::equal(out[k], postprocess_baseline(v[k])));
  EXPECT_TRUE(torch::equal(postprocess_baseline(v[0]), morph_close(morph_open(v[0]))));
}

TEST(Report, AggregateKnownValues) {
  auto r = aggregate("m", {{"b", 0.9, 0.8}, {"a", 0.8, 0.7}});
  EXPECT_EQ(r.per_patient[0].patient_id, "a");
  EXPECT_NEAR(r.dice_mean, 0.85, 1e-12);
  EXPECT_NEAR(r.dice_sd, 0.070711, 1e-6);
  EXPECT_NEAR(r.iou_mean, 0.75, 1e-12);
  const double single[] = {0.4};
  EXPECT_EQ(mean_sd(single).sd, 0.0);
  EXPECT_THROW(aggregate("m", {}), std::invalid_argument);
  EXPECT_THROW(aggregate("m", {{"a", 0.5, 0.3}, {"a", 0.6, 0.4}}), std::invalid_argument);
  EXPECT_THROW(aggregate("m", {{"a", 1.5, 0.3}}), std::invalid_argument);
}

TEST(Report, CsvRoundTripIsExact) {
  auto r = aggregate("vit_head", {{"p1", 1.0 / 3.0, 0.2}, {"p2", 0.875, 0.7777777777777778}, {"p3", 0.0, 0.0}});
  auto text = report_csv(r);
  EXPECT_NE(text.find("vit_head,summary,"), std::string::npos);
  auto back = parse_report_csv(text);
  EXPECT_EQ(back.method, r.method);
  ASSERT_EQ(back.per_patient.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.per_patient[i].patient_id, r.per_patient[i].patient_id);
    EXPECT_EQ(back.per_patient[i].dice, r.per_patient[i].dice);
    EXPECT_EQ(back.per_patient[i].iou, r.per_patient[i].iou);
  }
  EXPECT_EQ(back.dice_mean, r.dice_mean);
  EXPECT_EQ(back.dice_sd, r.dice_sd);

  auto dir = scratch("report");
  write_report_csv(dir / "r.csv", r);
  EXPECT_EQ(read_report_csv(dir / "r.csv").iou_sd, r.iou_sd);

  auto tampered = text;
  tampered.replace(tampered.find("p2,0.875"), 8, "p2,0.5");
  EXPECT_THROW(parse_report_csv(tampered), FormatError);
}

TEST(Inference, EvaluatePatientCases) {
  auto labels = torch::zeros({3, 4, 4}, torch::kUInt8);
  labels[0][1][1] = 1;
  labels[1][2][2] = 1;
  labels[2][3][3] = 1;
  data::Volume truth(torch::rand({3, 4, 4}), labels, "p");
  EXPECT_DOUBLE_EQ(evaluate_patient(labels.clone(), truth).dice, 1.0);
  EXPECT_DOUBLE_EQ(evaluate_patient(torch::zeros_like(labels), truth).dice, 0.0);
  auto partial = labels.clone();
  partial[2][3][3] = 0;
  auto m = evaluate_patient(partial, truth);
  EXPECT_DOUBLE_EQ(m.dice, 2.0 * 2 / 5);
  EXPECT_DOUBLE_EQ(m.iou, 2.0 / 3);
  EXPECT_EQ(m.patient_id, "p");
  EXPECT_THROW(evaluate_patient(labels.narrow(0, 0, 2), truth), ShapeMismatch);

  std::vector<torch::Tensor> slices;
  for (int k = 0; k < 3; ++k) slices.push_back(labels[k]);
  EXPECT_DOUBLE_EQ(evaluate_patient(slices, truth).dice, 1.0);
  // Masks at another resolution are resized to the native grid.
  for (auto& s : slices) s = s.repeat_interleave(2, 0).repeat_interleave(2, 1);
  EXPECT_DOUBLE_EQ(evaluate_patient(slices, truth).dice, 1.0);
}

TEST(Inference, PredictVolumeNativeGeometry) {
  auto spec = models::ModelSpec::defaults(models::Architecture::kUNet);
  spec.input_size = 32;
  spec.base_channels = 8;
  auto model = models::build_model(spec, 0);
  data::Volume v(torch::rand({2, 20, 28}), torch::zeros({2, 20, 28}, torch::kUInt8), "p");
  train::PreprocessConfig pre;
  pre.pad_target = 32;
  auto pred = predict_volume(*model, v, pre);
  EXPECT_EQ(pred.sizes(), (std::vector<std::int64_t>{2, 20, 28}));
  EXPECT_EQ(pred.scalar_type(), torch::kUInt8);
  EXPECT_TRUE(((pred == 0) | (pred == 1)).all().item<bool>());
}

TEST(Overlay, TintCountsMatchSetArithmetic) {
  torch::manual_seed(11);
  auto image = torch::rand({40, 30});
  auto pred = (torch::rand({40, 30}) > 0.6).to(torch::kUInt8);
  auto gt = (torch::rand({40, 30}) > 0.5).to(torch::kUInt8);
  auto rgb = render_overlay(image, pred, gt);
  EXPECT_EQ(rgb.sizes(), (std::vector<std::int64_t>{40, 30, 3}));
  auto p = pred.to(torch::kBool), g = gt.to(torch::kBool);
  auto tints = count_tints(rgb);
  EXPECT_EQ(tints.green, (p & ~g).sum().item<std::int64_t>());
  EXPECT_EQ(tints.red, (~p & g).sum().item<std::int64_t>());
  EXPECT_EQ(tints.yellow, (p & g).sum().item<std::int64_t>());

  auto dir = scratch("png");
  write_png(dir / "o.png", rgb);
  auto back = read_png(dir / "o.png");
  EXPECT_TRUE(torch::equal(back, rgb));
  EXPECT_THROW(render_overlay(image, pred.narrow(0, 0, 10), gt), ShapeMismatch);
}

TEST(Overlay, WritesOnePngPerSlice) {
  auto dir = scratch("overlays");
  data::Volume v(torch::rand({3, 8, 8}), torch::zeros({3, 8, 8}, torch::kUInt8), "pt");
  write_overlays(v, torch::ones({3, 8, 8}, torch::kUInt8), dir);
  EXPECT_TRUE(fs::exists(dir / "pt_000.png"));
  EXPECT_TRUE(fs::exists(dir / "pt_002.png"));
  EXPECT_EQ(count_tints(read_png(dir / "pt_001.png")).green, 64);
}

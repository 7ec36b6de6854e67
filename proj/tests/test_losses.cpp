#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gridcast/features.hpp"
#include "gridcast/losses.hpp"
#include "oracle_utils.hpp"

using namespace gridcast;
using testutil::random_tensor;

TEST_CASE("mse basics and loop oracle") {
  Rng rng(61);
  Tensor a = random_tensor(rng, {12, 4, 4, 8}, Dtype::Float64);
  CHECK(mse_value(a, a) == 0.0);

  Tensor b = a;
  for (auto& v : b.f64()) v += 0.1;
  CHECK(mse_value(a, b) == doctest::Approx(0.01).epsilon(1e-12));

  Tensor c = random_tensor(rng, a.dims(), Dtype::Float64);
  double by_hand = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = a.f64()[static_cast<size_t>(i)] - c.f64()[static_cast<size_t>(i)];
    by_hand += d * d;
  }
  by_hand /= static_cast<double>(a.numel());
  CHECK(mse_value(a, c) == doctest::Approx(by_hand).epsilon(1e-12));

  Tape t;
  Var loss = mse_12frames(t.constant(a), t.constant(c));
  CHECK(loss.value().item() == doctest::Approx(by_hand).epsilon(1e-12));
  CHECK_THROWS_AS(mse_value(a, random_tensor(rng, {3}, Dtype::Float64)), ValidationError);
}

TEST_CASE("validation selects exactly the six scored frames") {
  Rng rng(62);
  Tensor target = random_tensor(rng, {6, 3, 3, 8}, Dtype::Float32, 0.0, 255.0);
  Tensor pred = random_tensor(rng, {12, 3, 3, 8}, Dtype::Float32, 0.0, 255.0);
  // make the scored slots agree with the target, leave the rest arbitrary
  int64_t frame = 3 * 3 * 8;
  for (size_t k = 0; k < kScoredFrames.size(); ++k)
    std::copy_n(target.f32().data() + static_cast<int64_t>(k) * frame, frame,
                pred.f32().data() + static_cast<int64_t>(kScoredFrames[k]) * frame);
  EvalReport report = validation_mse_6frames(pred, target);
  CHECK(report.mse_raw == 0.0);
  CHECK(report.mse_normalized == 0.0);
}

TEST_CASE("perturbing unscored frames never changes the score") {
  Rng rng(63);
  Tensor pred = random_tensor(rng, {12, 4, 4, 8}, Dtype::Float32, 0.0, 255.0);
  Tensor target = random_tensor(rng, {6, 4, 4, 8}, Dtype::Float32, 0.0, 255.0);
  EvalReport before = validation_mse_6frames(pred, target);
  for (int f : {3, 4, 6, 7, 9, 10}) {
    Tensor perturbed = pred;
    auto v = perturbed.f32();
    int64_t frame = 4 * 4 * 8;
    for (int64_t i = 0; i < frame; ++i)
      v[static_cast<size_t>(f * frame + i)] = static_cast<float>(rng.uniform(0.0, 255.0));
    EvalReport after = validation_mse_6frames(perturbed, target);
    CHECK(after.mse_raw == before.mse_raw);
    CHECK(after.mse_normalized == before.mse_normalized);
    for (size_t k = 0; k < 6; ++k) CHECK(after.per_frame_raw[k] == before.per_frame_raw[k]);
  }
}

TEST_CASE("constant residual and the published-value conversion") {
  Tensor pred = Tensor::full({12, 2, 2, 8}, 100.0 + 25.5, Dtype::Float32);
  Tensor target = Tensor::full({6, 2, 2, 8}, 100.0, Dtype::Float32);
  EvalReport report = validation_mse_6frames(pred, target);
  CHECK(report.mse_raw == doctest::Approx(650.25).epsilon(1e-9));
  CHECK(report.mse_normalized == doctest::Approx(0.01).epsilon(1e-9));

  // scale identity and the quoted raw score conversion
  CHECK(report.mse_normalized * kRawToNormalized ==
        doctest::Approx(report.mse_raw).epsilon(1e-12));
  double converted = 93.720 / kRawToNormalized;
  CHECK(converted == doctest::Approx(0.0014415).epsilon(2e-4));
  CHECK(converted * kRawToNormalized == doctest::Approx(93.720).epsilon(1e-12));
}

TEST_CASE("select_scored_frames picks indices 0,1,2,5,8,11") {
  Tensor frames = Tensor::zeros({12, 1, 1, 8}, Dtype::Float32);
  for (int f = 0; f < 12; ++f) frames.set({f, 0, 0, 0}, static_cast<double>(f));
  Tensor scored = select_scored_frames(frames);
  CHECK(scored.dims() == std::vector<int64_t>{6, 1, 1, 8});
  const double expect[6] = {0, 1, 2, 5, 8, 11};
  for (int k = 0; k < 6; ++k) CHECK(scored.get({k, 0, 0, 0}) == expect[k]);
}

TEST_CASE("hidden layer loss reduces to the pixel loss and sums its terms") {
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 3;
  cfg.in_channels = 5;
  cfg.out_channels = 4;
  cfg.dtype = Dtype::Float64;
  UNet net(cfg, 13);
  Rng rng(64);
  Tensor predv = random_tensor(rng, {4, 8, 8}, Dtype::Float64);
  Tensor target = random_tensor(rng, {4, 8, 8}, Dtype::Float64);

  // pred == target makes every term vanish
  {
    Tape t;
    HiddenLossWeights w = HiddenLossWeights::uniform(cfg.depth);
    Var loss = hidden_layer_loss(t, net, t.constant(target), target, w);
    CHECK(loss.value().item() == 0.0);
  }
  // (1,0,...,0) is bit-identical to the plain 12-frame mse
  {
    Tape t;
    HiddenLossWeights w;
    w.w = {1.0, 0.0, 0.0};
    Var loss = hidden_layer_loss(t, net, t.constant(predv), target, w);
    Tape t2;
    Var plain = mse_12frames(t2.constant(predv), t2.constant(target));
    CHECK(loss.value().item() == plain.value().item());
  }
  // uniform weights equal the hand-summed term list
  {
    Tape t;
    HiddenLossWeights w = HiddenLossWeights::uniform(cfg.depth);
    Var loss = hidden_layer_loss(t, net, t.constant(predv), target, w);
    Tape t2;
    double hand = w.w[0] * mse_value(predv, target);
    auto pred_taps = net.encode_output_stack(t2, t2.constant(predv));
    auto target_taps = net.encode_output_stack(t2, t2.constant(target));
    for (int i = 0; i < cfg.depth; ++i)
      hand += w.w[static_cast<size_t>(i) + 1] *
              mse_value(pred_taps[static_cast<size_t>(i)].value(),
                        target_taps[static_cast<size_t>(i)].value());
    CHECK(loss.value().item() == doctest::Approx(hand).epsilon(1e-10));
  }
  // weight count must be depth+1
  {
    Tape t;
    HiddenLossWeights w;
    w.w = {1.0, 0.0};
    CHECK_THROWS_AS(hidden_layer_loss(t, net, t.constant(predv), target, w), ValidationError);
  }
}

TEST_CASE("hidden loss gradients flow only through the prediction branch") {
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 3;
  cfg.in_channels = 5;
  cfg.out_channels = 4;
  cfg.dtype = Dtype::Float64;
  UNet net(cfg, 10);
  Rng rng(1010);
  Parameter pred("pred", random_tensor(rng, {4, 8, 8}, Dtype::Float64));
  Tensor target = random_tensor(rng, {4, 8, 8}, Dtype::Float64);
  HiddenLossWeights w = HiddenLossWeights::uniform(cfg.depth);
  // encoder frozen: only the prediction is checked
  double err = testutil::fd_max_rel_err({&pred}, [&](Tape& t) {
    return hidden_layer_loss(t, net, t.leaf(pred), target, w);
  });
  MESSAGE("hidden loss fd err " << err);
  CHECK(err < 1e-4);
}

TEST_CASE("mean baseline averages all target frames") {
  TrafficMovie constant;
  constant.frames = Tensor::full({24, 4, 4, 9}, 42.0, Dtype::Byte);
  auto windows = make_windows(constant, 1);
  Tensor mean = mean_baseline(constant, windows);
  CHECK(max_abs_diff(mean, Tensor::full({4, 4, 8}, 42.0, Dtype::Float32)) == 0.0);
  // identical validation data scores zero
  Tensor pred12 = tile_frames(mean, 12);
  Tensor target6 = tile_frames(mean, 6);
  CHECK(validation_mse_6frames(pred12, target6).mse_raw == 0.0);

  // two windows with target values a and b average to (a+b)/2
  TrafficMovie two;
  two.frames = Tensor::zeros({48, 2, 2, 9}, Dtype::Byte);
  auto v = two.frames.u8();
  for (int64_t t = 12; t < 24; ++t)
    for (int64_t i = 0; i < 2 * 2 * 9; ++i) v[static_cast<size_t>(t * 36 + i)] = 10;
  for (int64_t t = 36; t < 48; ++t)
    for (int64_t i = 0; i < 2 * 2 * 9; ++i) v[static_cast<size_t>(t * 36 + i)] = 30;
  std::vector<SampleWindow> wins{{0, 0}, {24, 24}};
  Tensor mean2 = mean_baseline(two, wins);
  CHECK(max_abs_diff(mean2, Tensor::full({2, 2, 8}, 20.0, Dtype::Float32)) == 0.0);

  CHECK_THROWS_AS(mean_baseline(two, std::span<const SampleWindow>{}), ValidationError);
}

TEST_CASE("ensemble blending boundary cases and convexity") {
  Rng rng(65);
  Tensor a = random_tensor(rng, {12, 3, 3, 8}, Dtype::Float32, 0.0, 255.0);
  Tensor b = random_tensor(rng, {12, 3, 3, 8}, Dtype::Float32, 0.0, 255.0);
  CHECK(max_abs_diff(ensemble_predictions(a, a, 0.5), a) == 0.0);
  CHECK(max_abs_diff(ensemble_predictions(a, b, 1.0), a) == 0.0);
  CHECK(max_abs_diff(ensemble_predictions(a, b, 0.0), b) == 0.0);
  CHECK_THROWS_AS(ensemble_predictions(a, b, 1.5), ValidationError);

  for (int trial = 0; trial < 50; ++trial) {
    double lambda = rng.uniform();
    Tensor target = random_tensor(rng, {12, 3, 3, 8}, Dtype::Float32, 0.0, 255.0);
    Tensor pa = random_tensor(rng, {12, 3, 3, 8}, Dtype::Float32, 0.0, 255.0);
    Tensor pb = random_tensor(rng, {12, 3, 3, 8}, Dtype::Float32, 0.0, 255.0);
    Tensor mix = ensemble_predictions(pa, pb, lambda);
    double bound = lambda * mse_value(pa, target) + (1.0 - lambda) * mse_value(pb, target);
    REQUIRE(mse_value(mix, target) <= bound + 1e-6);
  }
}

TEST_CASE("eval report serializes as key-value lines") {
  EvalReport r;
  r.mse_raw = 650.25;
  r.mse_normalized = 0.01;
  std::string text = format_eval_report(r);
  CHECK(text.find("mse_raw = 650.25") != std::string::npos);
  CHECK(text.find("mse_normalized = 0.01") != std::string::npos);
  CHECK(text.find("mse_raw_60min") != std::string::npos);
}

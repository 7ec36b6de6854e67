#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gridcast/optim.hpp"
#include "gridcast/unet.hpp"
#include "oracle_utils.hpp"

using namespace gridcast;
using testutil::random_tensor;

TEST_CASE("pad_to_multiple computes the next multiples and round-trips") {
  PadInfo a = pad_info(32, 32, 16);
  CHECK(a.padded_h == 32);
  CHECK(a.padded_w == 32);
  CHECK_FALSE(a.padded());

  PadInfo b = pad_info(495, 436, 16);
  CHECK(b.padded_h == 496);
  CHECK(b.padded_w == 448);

  Rng rng(51);
  Tensor x = random_tensor(rng, {3, 21, 17}, Dtype::Float32);
  PadInfo info;
  Tensor padded = pad_to_multiple(x, 8, &info);
  CHECK(padded.dim(1) % 8 == 0);
  CHECK(padded.dim(2) % 8 == 0);
  CHECK(max_abs_diff(crop_grid(padded, info), x) == 0.0);
  // padded area is zero
  CHECK(padded.get({0, padded.dim(1) - 1, padded.dim(2) - 1}) == 0.0);
}

TEST_CASE("forward shape contract holds for several depths and odd sizes") {
  Rng rng(52);
  for (int depth : {1, 2, 3}) {
    UNetConfig cfg;
    cfg.depth = depth;
    cfg.base_channels = 4;
    cfg.in_channels = 7;
    cfg.out_channels = 10;
    cfg.dtype = Dtype::Float32;
    UNet net(cfg, 5);
    Tensor input = random_tensor(rng, {7, 22, 13}, Dtype::Float32);
    Tape t;
    auto result = net.forward(t, input);
    CHECK(result.prediction.value().dims() == std::vector<int64_t>{10, 22, 13});
    CHECK(result.taps.size() == static_cast<size_t>(depth));
    int64_t hp = pad_info(22, 13, net.pad_multiple()).padded_h;
    int64_t wp = pad_info(22, 13, net.pad_multiple()).padded_w;
    for (int i = 0; i < depth; ++i) {
      CHECK(result.taps[static_cast<size_t>(i)].value().dim(1) == hp >> i);
      CHECK(result.taps[static_cast<size_t>(i)].value().dim(2) == wp >> i);
      CHECK(result.taps[static_cast<size_t>(i)].value().dim(0) == 4ll << i);
    }
  }
}

TEST_CASE("paper-scale depth 8 shape check on a 64x64 grid") {
  UNetConfig cfg;
  cfg.depth = 8;
  cfg.base_channels = 1;
  cfg.in_channels = 3;
  cfg.out_channels = 2;
  cfg.dtype = Dtype::Float32;
  UNet net(cfg, 6);
  Rng rng(53);
  Tensor input = random_tensor(rng, {3, 64, 64}, Dtype::Float32);
  Tape t;
  auto result = net.forward(t, input);
  CHECK(result.prediction.value().dims() == std::vector<int64_t>{2, 64, 64});
  CHECK(result.taps.size() == 8);
  CHECK(result.taps.back().value().dims() == std::vector<int64_t>{128, 2, 2});
  // 64 needs padding to 256 for depth 8
  CHECK(result.taps.front().value().dim(1) == 256);
}

TEST_CASE("wrong channel count is rejected") {
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 4;
  UNet net(cfg, 7);
  Tape t;
  CHECK_THROWS_AS(net.forward(t, Tensor::zeros({14, 16, 16}, Dtype::Float32)), ValidationError);
}

TEST_CASE("encoder_only reproduces the forward taps bit-exactly") {
  UNetConfig cfg;
  cfg.depth = 3;
  cfg.base_channels = 4;
  cfg.in_channels = 6;
  cfg.out_channels = 8;
  cfg.dtype = Dtype::Float32;
  UNet net(cfg, 8);
  Rng rng(54);
  Tensor input = random_tensor(rng, {6, 24, 24}, Dtype::Float32);
  Tape t;
  auto result = net.forward(t, input);
  Tape t2;
  auto taps = net.encoder_only(t2, input);
  REQUIRE(taps.size() == result.taps.size());
  for (size_t i = 0; i < taps.size(); ++i)
    CHECK(max_abs_diff(taps[i].value(), result.taps[i].value()) == 0.0);
}

TEST_CASE("zero input taps match the recorded golden snapshot") {
  UNetConfig cfg;
  cfg.depth = 3;
  cfg.base_channels = 4;
  cfg.in_channels = 5;
  cfg.out_channels = 8;
  cfg.dtype = Dtype::Float64;
  UNet net(cfg, 77);
  int bi = 0;
  for (Parameter* p : net.parameters())
    if (p->name.ends_with(".b")) p->value.fill(0.05 * (++bi));
  Tensor zero = Tensor::zeros({5, 16, 16}, Dtype::Float64);
  Tape t;
  auto taps = net.encoder_only(t, zero);
  REQUIRE(taps.size() == 3);
  struct Golden {
    std::vector<int64_t> dims;
    double first, mean;
  };
  const Golden golden[3] = {
      {{4, 16, 16}, 0.13505376804279101, 0.12302622707170782},
      {{8, 8, 8}, 0.14085594486356237, 0.2551932156960634},
      {{16, 4, 4}, 0.022973147983405617, 0.311643453544869},
  };
  for (size_t i = 0; i < 3; ++i) {
    const Tensor& v = taps[i].value();
    CHECK(v.dims() == golden[i].dims);
    CHECK(v.f64()[0] == doctest::Approx(golden[i].first).epsilon(1e-12));
    double sum = 0.0;
    for (double x : v.f64()) sum += x;
    CHECK(sum / static_cast<double>(v.numel()) == doctest::Approx(golden[i].mean).epsilon(1e-12));
  }
}

TEST_CASE("reduced unet passes the finite-difference gradient check") {
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 3;
  cfg.in_channels = 4;
  cfg.out_channels = 3;
  cfg.dtype = Dtype::Float64;
  UNet net(cfg, 10);  // seed pair avoids relu kinks within the fd step
  Rng rng(1010);
  Tensor input = random_tensor(rng, {4, 8, 8}, Dtype::Float64);
  Tensor target = random_tensor(rng, {3, 8, 8}, Dtype::Float64);
  double err = testutil::fd_max_rel_err(net.parameters(), [&](Tape& t) {
    return mse(net.forward(t, input).prediction, t.constant(target));
  });
  MESSAGE("unet fd max rel err " << err);
  CHECK(err < 1e-4);
}

TEST_CASE("adapter path encodes output stacks at every depth") {
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 4;
  cfg.in_channels = 9;
  cfg.out_channels = 6;
  cfg.dtype = Dtype::Float32;
  UNet net(cfg, 11);
  Rng rng(55);
  Tensor stack = random_tensor(rng, {6, 10, 14}, Dtype::Float32);
  Tape t;
  auto taps = net.encode_output_stack(t, t.constant(stack));
  REQUIRE(taps.size() == 2);
  CHECK(taps[0].value().dim(1) == 12);  // padded to the multiple of 4
  CHECK(taps[1].value().dim(1) == 6);
}

TEST_CASE("a tiny unet fits random data noticeably") {
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 4;
  cfg.in_channels = 5;
  cfg.out_channels = 4;
  cfg.dtype = Dtype::Float32;
  UNet net(cfg, 12);
  Rng rng(56);
  Tensor input = random_tensor(rng, {5, 8, 8}, Dtype::Float32);
  Tensor target = random_tensor(rng, {4, 8, 8}, Dtype::Float32, 0.0, 1.0);
  Adam opt(net.parameters());
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 80; ++step) {
    Tape t;
    Var loss = mse(net.forward(t, input).prediction, t.constant(target));
    if (step == 0) first = loss.value().item();
    last = loss.value().item();
    opt.zero_grad();
    t.backward(loss);
    opt.step(3e-3);
  }
  CHECK(last < 0.2 * first);
}

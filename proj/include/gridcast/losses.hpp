#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "gridcast/autodiff.hpp"
#include "gridcast/dataio.hpp"
#include "gridcast/unet.hpp"

namespace gridcast {

// The six scored horizons (5,10,15,30,45,60 min) inside the 12 output frames.
constexpr std::array<int, 6> kScoredFrames{0, 1, 2, 5, 8, 11};
constexpr std::array<int, 6> kScoredMinutes{5, 10, 15, 30, 45, 60};
constexpr double kRawToNormalized = 65025.0;  // 255^2

// Training loss over every element of the 12-frame stack, normalized units.
Var mse_12frames(Var pred, Var target);
double mse_value(const Tensor& a, const Tensor& b);

struct EvalReport {
  double mse_raw = 0.0;
  double mse_normalized = 0.0;
  std::array<double, 6> per_frame_raw{};
  std::array<double, 6> per_frame_normalized{};
};

// pred must already be in raw 0-255 units (rescaled and clamped); only the
// six scored frame slots of the 12 contribute.
EvalReport validation_mse_6frames(const Tensor& pred12, const Tensor& target6);

Tensor select_scored_frames(const Tensor& frames12);  // (12,H,W,8) -> (6,H,W,8)

struct HiddenLossWeights {
  std::vector<double> w;  // size depth+1; w[0] weights the pixel loss

  static HiddenLossWeights uniform(int depth);
};

// w0 * MSE(pred,target) + sum_i w_i * MSE(enc_i(pred), enc_i(target)) with the
// target-side activations detached. pred is a (96,H,W) stack on the tape.
Var hidden_layer_loss(Tape& t, UNet& net, Var pred, const Tensor& target,
                      const HiddenLossWeights& weights);

// Per-pixel per-channel mean over every target frame of the given windows,
// raw units. The returned (H,W,8) map is constant in time.
Tensor mean_baseline(const TrafficMovie& movie, std::span<const SampleWindow> windows);
Tensor tile_frames(const Tensor& frame_map, int64_t count);  // (H,W,8) -> (count,H,W,8)

Tensor ensemble_predictions(const Tensor& a, const Tensor& b, double lambda = 0.5);

std::string format_eval_report(const EvalReport& report);
void write_eval_report(const std::string& path, const EvalReport& report);

}  // namespace gridcast

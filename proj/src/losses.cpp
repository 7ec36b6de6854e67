#include "gridcast/losses.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "gridcast/features.hpp"

namespace gridcast {

Var mse_12frames(Var pred, Var target) {
  if (!pred.value().same_dims(target.value()))
    throw ValidationError("mse_12frames dims mismatch " + dims_to_string(pred.value().dims()) +
                          " vs " + dims_to_string(target.value().dims()));
  return mse(pred, target);
}

double mse_value(const Tensor& a, const Tensor& b) {
  if (!a.same_dims(b))
    throw ValidationError("mse dims mismatch " + dims_to_string(a.dims()) + " vs " +
                          dims_to_string(b.dims()));
  double sum = 0.0;
  int64_t n = a.numel();
  auto read = [](const Tensor& t, int64_t i) {
    return t.dtype() == Dtype::Float64 ? t.f64()[static_cast<size_t>(i)]
                                       : static_cast<double>(t.f32()[static_cast<size_t>(i)]);
  };
  for (int64_t i = 0; i < n; ++i) {
    double d = read(a, i) - read(b, i);
    sum += d * d;
  }
  return sum / static_cast<double>(n);
}

EvalReport validation_mse_6frames(const Tensor& pred12, const Tensor& target6) {
  if (pred12.rank() != 4 || pred12.dim(0) != kTargetFrames || pred12.dim(3) != kOutputChannels)
    throw ValidationError("prediction must be (12,H,W,8), got " + dims_to_string(pred12.dims()));
  if (target6.rank() != 4 || target6.dim(0) != 6 || target6.dim(1) != pred12.dim(1) ||
      target6.dim(2) != pred12.dim(2) || target6.dim(3) != kOutputChannels)
    throw ValidationError("target must be (6,H,W,8) matching the prediction, got " +
                          dims_to_string(target6.dims()));
  auto p = pred12.f32();
  auto tg = target6.f32();
  int64_t frame = pred12.dim(1) * pred12.dim(2) * kOutputChannels;
  EvalReport report;
  double total = 0.0;
  for (size_t k = 0; k < kScoredFrames.size(); ++k) {
    const float* pf = p.data() + static_cast<int64_t>(kScoredFrames[k]) * frame;
    const float* tf = tg.data() + static_cast<int64_t>(k) * frame;
    double sum = 0.0;
    for (int64_t i = 0; i < frame; ++i) {
      double d = static_cast<double>(pf[i]) - static_cast<double>(tf[i]);
      sum += d * d;
    }
    report.per_frame_raw[k] = sum / static_cast<double>(frame);
    report.per_frame_normalized[k] = report.per_frame_raw[k] / kRawToNormalized;
    total += sum;
  }
  report.mse_raw = total / static_cast<double>(frame * 6);
  report.mse_normalized = report.mse_raw / kRawToNormalized;
  return report;
}

Tensor select_scored_frames(const Tensor& frames12) {
  if (frames12.rank() != 4 || frames12.dim(0) != kTargetFrames)
    throw ValidationError("select_scored_frames expects (12,H,W,8)");
  Tensor out =
      Tensor::zeros({6, frames12.dim(1), frames12.dim(2), frames12.dim(3)}, Dtype::Float32);
  auto src = frames12.f32();
  auto dst = out.f32();
  int64_t frame = frames12.dim(1) * frames12.dim(2) * frames12.dim(3);
  for (size_t k = 0; k < kScoredFrames.size(); ++k)
    std::copy_n(src.data() + static_cast<int64_t>(kScoredFrames[k]) * frame, frame,
                dst.data() + static_cast<int64_t>(k) * frame);
  return out;
}

HiddenLossWeights HiddenLossWeights::uniform(int depth) {
  HiddenLossWeights out;
  out.w.assign(static_cast<size_t>(depth) + 1, 1.0 / static_cast<double>(depth + 1));
  return out;
}

Var hidden_layer_loss(Tape& t, UNet& net, Var pred, const Tensor& target,
                      const HiddenLossWeights& weights) {
  int depth = net.config().depth;
  if (static_cast<int>(weights.w.size()) != depth + 1)
    throw ValidationError("hidden loss needs " + std::to_string(depth + 1) + " weights, got " +
                          std::to_string(weights.w.size()));
  bool any_positive = false;
  for (double w : weights.w) {
    if (w < 0.0) throw ValidationError("hidden loss weights must be nonnegative");
    if (w > 0.0) any_positive = true;
  }
  if (!any_positive) throw ValidationError("hidden loss needs at least one positive weight");

  Var total = scale(mse(pred, t.constant(target)), weights.w[0]);
  bool need_taps = false;
  for (size_t i = 1; i < weights.w.size(); ++i) need_taps |= weights.w[i] > 0.0;
  if (!need_taps) return total;

  std::vector<Var> pred_taps = net.encode_output_stack(t, pred);
  std::vector<Var> target_taps = net.encode_output_stack(t, t.constant(target));
  for (int i = 0; i < depth; ++i) {
    double w = weights.w[static_cast<size_t>(i) + 1];
    if (w == 0.0) continue;
    Var term = mse(pred_taps[static_cast<size_t>(i)],
                   detach(target_taps[static_cast<size_t>(i)]));
    total = add(total, scale(term, w));
  }
  return total;
}

Tensor mean_baseline(const TrafficMovie& movie, std::span<const SampleWindow> windows) {
  if (windows.empty()) throw ValidationError("mean baseline needs a nonempty training set");
  movie.validate();
  int64_t h = movie.height(), w = movie.width();
  Tensor acc = Tensor::zeros({h, w, kOutputChannels}, Dtype::Float64);
  auto a = acc.f64();
  auto src = movie.frames.u8();
  int64_t plane = h * w;
  int64_t count = 0;
  for (const SampleWindow& win : windows) {
    for (int f = 0; f < kTargetFrames; ++f) {
      int64_t frame = win.start + kInputFrames + f;
      for (int64_t p = 0; p < plane; ++p) {
        const uint8_t* cell = src.data() + (frame * plane + p) * kMovieChannels;
        double* slot = a.data() + p * kOutputChannels;
        for (int c = 0; c < kOutputChannels; ++c) slot[c] += static_cast<double>(cell[c]);
      }
    }
    count += kTargetFrames;
  }
  Tensor out = Tensor::zeros({h, w, kOutputChannels}, Dtype::Float32);
  auto o = out.f32();
  for (size_t i = 0; i < o.size(); ++i)
    o[i] = static_cast<float>(a[i] / static_cast<double>(count));
  return out;
}

Tensor tile_frames(const Tensor& frame_map, int64_t count) {
  if (frame_map.rank() != 3) throw ValidationError("tile_frames expects (H,W,C)");
  Tensor out =
      Tensor::zeros({count, frame_map.dim(0), frame_map.dim(1), frame_map.dim(2)}, Dtype::Float32);
  auto src = frame_map.f32();
  auto dst = out.f32();
  for (int64_t f = 0; f < count; ++f)
    std::copy(src.begin(), src.end(), dst.begin() + static_cast<int64_t>(src.size()) * f);
  return out;
}

Tensor ensemble_predictions(const Tensor& a, const Tensor& b, double lambda) {
  if (!a.same_dims(b))
    throw ValidationError("ensemble dims mismatch " + dims_to_string(a.dims()) + " vs " +
                          dims_to_string(b.dims()));
  if (lambda < 0.0 || lambda > 1.0) throw ValidationError("ensemble weight must be in [0,1]");
  Tensor out = Tensor::zeros(a.dims(), Dtype::Float32);
  auto o = out.f32();
  auto x = a.f32();
  auto y = b.f32();
  float l = static_cast<float>(lambda);
  for (size_t i = 0; i < o.size(); ++i) o[i] = l * x[i] + (1.0f - l) * y[i];
  return out;
}

std::string format_eval_report(const EvalReport& report) {
  char buf[128];
  std::string out;
  auto line = [&](const std::string& key, double v) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", key.c_str(), v);
    out += buf;
  };
  line("mse_raw", report.mse_raw);
  line("mse_normalized", report.mse_normalized);
  for (size_t k = 0; k < kScoredMinutes.size(); ++k) {
    line("mse_raw_" + std::to_string(kScoredMinutes[k]) + "min", report.per_frame_raw[k]);
    line("mse_normalized_" + std::to_string(kScoredMinutes[k]) + "min",
         report.per_frame_normalized[k]);
  }
  return out;
}

void write_eval_report(const std::string& path, const EvalReport& report) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << format_eval_report(report);
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace gridcast

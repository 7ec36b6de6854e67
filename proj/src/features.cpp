#include "gridcast/features.hpp"

#include <algorithm>
#include <cmath>

namespace gridcast {

Tensor compute_max_volume_map(const TrafficMovie& movie) {
  movie.validate();
  int64_t t = movie.t(), h = movie.height(), w = movie.width();
  Tensor out = Tensor::zeros({h, w}, Dtype::Float32);
  auto dst = out.f32();
  auto src = movie.frames.u8();
  for (int64_t f = 0; f < t; ++f)
    for (int64_t p = 0; p < h * w; ++p) {
      const uint8_t* cell = src.data() + (f * h * w + p) * kMovieChannels;
      uint8_t m = std::max(std::max(cell[0], cell[1]), std::max(cell[2], cell[3]));
      float& slot = dst[static_cast<size_t>(p)];
      slot = std::max(slot, static_cast<float>(m));
    }
  return out;
}

Tensor build_road_mask(const Tensor& max_volume, double threshold) {
  if (max_volume.rank() != 2) throw ValidationError("max volume map must be (H,W)");
  Tensor mask = Tensor::zeros(max_volume.dims(), Dtype::Byte);
  auto dst = mask.u8();
  auto src = max_volume.f32();
  for (size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= threshold ? 1 : 0;
  return mask;
}

Tensor build_clamp_table(std::span<const TrafficMovie> movies) {
  if (movies.empty()) throw ValidationError("clamp table needs at least one movie");
  int64_t h = movies[0].height(), w = movies[0].width();
  Tensor table = Tensor::zeros({h, w, kOutputChannels}, Dtype::Float32);
  auto dst = table.f32();
  for (const TrafficMovie& movie : movies) {
    movie.validate();
    if (movie.height() != h || movie.width() != w)
      throw ValidationError("clamp table movies must share spatial dims");
    auto src = movie.frames.u8();
    for (int64_t f = 0; f < movie.t(); ++f)
      for (int64_t p = 0; p < h * w; ++p) {
        const uint8_t* cell = src.data() + (f * h * w + p) * kMovieChannels;
        float* slot = dst.data() + p * kOutputChannels;
        for (int c = 0; c < kOutputChannels; ++c)
          slot[c] = std::max(slot[c], static_cast<float>(cell[c]));
      }
  }
  return table;
}

double time_of_day(int clock) {
  if (clock < 0 || clock >= kFramesPerDay)
    throw ValidationError("clock must be in [0,288), got " + std::to_string(clock));
  return static_cast<double>(clock) / static_cast<double>(kFramesPerDay);
}

namespace {

void check_window(const TrafficMovie& movie, const SampleWindow& window) {
  if (window.start < 0 || window.start + kWindowFrames > movie.t())
    throw ValidationError("window [" + std::to_string(window.start) + "," +
                          std::to_string(window.start + kWindowFrames) +
                          ") outside movie of length " + std::to_string(movie.t()));
}

}  // namespace

Tensor unet_features(const TrafficMovie& movie, const SampleWindow& window,
                     const StaticMap& static_map, const Tensor& mask) {
  movie.validate();
  check_window(movie, window);
  int64_t h = movie.height(), w = movie.width();
  if (static_map.height() != h || static_map.width() != w)
    throw ValidationError("static map dims do not match the movie");
  if (mask.rank() != 2 || mask.dim(0) != h || mask.dim(1) != w)
    throw ValidationError("road mask dims do not match the movie");

  Tensor out = Tensor::zeros({kUnetChannels, h, w}, Dtype::Float32);
  auto dst = out.f32();
  auto src = movie.frames.u8();
  auto stat = static_map.channels.u8();
  auto msk = mask.u8();
  int64_t plane = h * w;
  const float inv255 = 1.0f / 255.0f;

  for (int64_t p = 0; p < plane; ++p) {
    bool on_road = msk[static_cast<size_t>(p)] != 0;
    // raw frames and per-channel aggregates on the /255 scale
    for (int c = 0; c < kMovieChannels; ++c) {
      float mn = 1.0f, mx = 0.0f;
      double sum = 0.0, sum_sq = 0.0;
      for (int f = 0; f < kInputFrames; ++f) {
        float v = on_road ? static_cast<float>(
                                src[static_cast<size_t>(((window.start + f) * plane + p) *
                                                            kMovieChannels +
                                                        c)]) *
                                inv255
                          : 0.0f;
        dst[static_cast<size_t>((f * kMovieChannels + c) * plane + p)] = v;
        mn = std::min(mn, v);
        mx = std::max(mx, v);
        sum += v;
        sum_sq += static_cast<double>(v) * v;
      }
      double mean = sum / kInputFrames;
      double var = std::max(0.0, sum_sq / kInputFrames - mean * mean);
      int64_t agg = 116 + 3 * c;
      dst[static_cast<size_t>(agg * plane + p)] = mx - mn;
      dst[static_cast<size_t>((agg + 1) * plane + p)] = static_cast<float>(mean);
      dst[static_cast<size_t>((agg + 2) * plane + p)] = static_cast<float>(std::sqrt(var));
    }
    for (int c = 0; c < kStaticChannels; ++c)
      dst[static_cast<size_t>((108 + c) * plane + p)] =
          static_cast<float>(stat[static_cast<size_t>(p * kStaticChannels + c)]) * inv255;
    dst[static_cast<size_t>(115 * plane + p)] = static_cast<float>(time_of_day(window.clock));
  }
  return out;
}

Tensor gnn_node_features_raw(const TrafficMovie& movie, const SampleWindow& window,
                             const StaticMap& static_map, const RoadGraph& graph) {
  movie.validate();
  check_window(movie, window);
  int64_t h = movie.height(), w = movie.width();
  if (graph.height != h || graph.width != w)
    throw ValidationError("graph dims do not match the movie");
  if (static_map.height() != h || static_map.width() != w)
    throw ValidationError("static map dims do not match the movie");
  if (graph.num_nodes() == 0) throw ValidationError("node features need a nonempty graph");

  int64_t n = graph.num_nodes();
  Tensor out = Tensor::zeros({n, kGnnChannels}, Dtype::Float64);
  auto dst = out.f64();
  auto src = movie.frames.u8();
  auto stat = static_map.channels.u8();
  int64_t plane = h * w;
  double tod = time_of_day(window.clock);

  for (int64_t i = 0; i < n; ++i) {
    const PixelCoord& px = graph.nodes[static_cast<size_t>(i)];
    int64_t p = px.row * w + px.col;
    double* row = dst.data() + i * kGnnChannels;
    for (int c = 0; c < kMovieChannels; ++c) {
      double mn = 255.0, mx = 0.0, sum = 0.0;
      for (int f = 0; f < kInputFrames; ++f) {
        double v = static_cast<double>(
            src[static_cast<size_t>(((window.start + f) * plane + p) * kMovieChannels + c)]);
        if (f >= kInputFrames / 2) row[(f - kInputFrames / 2) * kMovieChannels + c] = v;
        mn = std::min(mn, v);
        mx = std::max(mx, v);
        sum += v;
      }
      row[54 + 3 * c] = sum / kInputFrames;
      row[54 + 3 * c + 1] = mn;
      row[54 + 3 * c + 2] = mx;
    }
    for (int c = 0; c < kStaticChannels; ++c)
      row[81 + c] = static_cast<double>(stat[static_cast<size_t>(p * kStaticChannels + c)]);
    row[88] = tod;
    row[89] = h > 1 ? static_cast<double>(px.row) / static_cast<double>(h - 1) : 0.0;
    row[90] = w > 1 ? static_cast<double>(px.col) / static_cast<double>(w - 1) : 0.0;
  }
  return out;
}

NormStats compute_norm_stats(std::span<const Tensor> raw_node_features) {
  if (raw_node_features.empty()) throw ValidationError("norm stats need at least one sample");
  Tensor mean = Tensor::zeros({kGnnChannels}, Dtype::Float64);
  Tensor stddev = Tensor::zeros({kGnnChannels}, Dtype::Float64);
  auto m = mean.f64();
  auto s = stddev.f64();
  int64_t count = 0;
  for (const Tensor& t : raw_node_features) {
    if (t.rank() != 2 || t.dim(1) != kGnnChannels)
      throw ValidationError("norm stats expect (N,91) tensors, got " + dims_to_string(t.dims()));
    auto v = t.f64();
    for (int64_t i = 0; i < t.dim(0); ++i)
      for (int64_t c = 0; c < kGnnChannels; ++c) {
        double x = v[static_cast<size_t>(i * kGnnChannels + c)];
        m[static_cast<size_t>(c)] += x;
        s[static_cast<size_t>(c)] += x * x;
      }
    count += t.dim(0);
  }
  if (count == 0) throw ValidationError("norm stats need at least one node");
  for (int64_t c = 0; c < kGnnChannels; ++c) {
    m[static_cast<size_t>(c)] /= static_cast<double>(count);
    double var = std::max(0.0, s[static_cast<size_t>(c)] / static_cast<double>(count) -
                                   m[static_cast<size_t>(c)] * m[static_cast<size_t>(c)]);
    s[static_cast<size_t>(c)] = std::max(1e-6, std::sqrt(var));
  }
  return {std::move(mean), std::move(stddev)};
}

Tensor standardize_features(const Tensor& raw, const NormStats& stats) {
  if (raw.rank() != 2 || raw.dim(1) != kGnnChannels)
    throw ValidationError("standardize expects (N,91)");
  if (stats.mean.numel() != kGnnChannels || stats.stddev.numel() != kGnnChannels)
    throw ValidationError("norm stats must carry exactly 91 channels");
  Tensor out = Tensor::zeros(raw.dims(), Dtype::Float32);
  auto dst = out.f32();
  auto src = raw.f64();
  auto m = stats.mean.f64();
  auto s = stats.stddev.f64();
  for (int64_t i = 0; i < raw.dim(0); ++i)
    for (int64_t c = 0; c < kGnnChannels; ++c)
      dst[static_cast<size_t>(i * kGnnChannels + c)] = static_cast<float>(
          (src[static_cast<size_t>(i * kGnnChannels + c)] - m[static_cast<size_t>(c)]) /
          s[static_cast<size_t>(c)]);
  return out;
}

Tensor gnn_features(const TrafficMovie& movie, const SampleWindow& window,
                    const StaticMap& static_map, const RoadGraph& graph,
                    const NormStats& stats) {
  return standardize_features(gnn_node_features_raw(movie, window, static_map, graph), stats);
}

Tensor clamp_predictions(const Tensor& pred, const Tensor& table) {
  if (pred.rank() != 4 || pred.dim(3) != kOutputChannels)
    throw ValidationError("predictions must be (T,H,W,8)");
  if (table.rank() != 3 || table.dim(0) != pred.dim(1) || table.dim(1) != pred.dim(2) ||
      table.dim(2) != kOutputChannels)
    throw ValidationError("clamp table must be (H,W,8) matching the prediction");
  Tensor out = Tensor::zeros(pred.dims(), Dtype::Float32);
  auto dst = out.f32();
  auto src = pred.f32();
  auto tab = table.f32();
  int64_t frame = pred.dim(1) * pred.dim(2) * kOutputChannels;
  for (int64_t f = 0; f < pred.dim(0); ++f)
    for (int64_t i = 0; i < frame; ++i)
      dst[static_cast<size_t>(f * frame + i)] =
          std::clamp(src[static_cast<size_t>(f * frame + i)], 0.0f, tab[static_cast<size_t>(i)]);
  return out;
}

Tensor target_frames(const TrafficMovie& movie, const SampleWindow& window) {
  movie.validate();
  check_window(movie, window);
  int64_t h = movie.height(), w = movie.width();
  Tensor out = Tensor::zeros({kTargetFrames, h, w, kOutputChannels}, Dtype::Float32);
  auto dst = out.f32();
  auto src = movie.frames.u8();
  int64_t plane = h * w;
  for (int64_t f = 0; f < kTargetFrames; ++f)
    for (int64_t p = 0; p < plane; ++p) {
      const uint8_t* cell =
          src.data() + ((window.start + kInputFrames + f) * plane + p) * kMovieChannels;
      float* slot = dst.data() + (f * plane + p) * kOutputChannels;
      for (int c = 0; c < kOutputChannels; ++c) slot[c] = static_cast<float>(cell[c]);
    }
  return out;
}

Tensor unet_target(const TrafficMovie& movie, const SampleWindow& window) {
  Tensor frames = target_frames(movie, window);
  Tensor out = frames_to_prediction(frames);
  auto v = out.f32();
  for (auto& x : v) x *= 1.0f / 255.0f;
  return out;
}

Tensor prediction_to_frames(const Tensor& out96) {
  if (out96.rank() != 3 || out96.dim(0) != kTargetFrames * kOutputChannels)
    throw ValidationError("expected a (96,H,W) prediction, got " + dims_to_string(out96.dims()));
  int64_t h = out96.dim(1), w = out96.dim(2);
  Tensor out = Tensor::zeros({kTargetFrames, h, w, kOutputChannels}, Dtype::Float32);
  auto dst = out.f32();
  auto src = out96.f32();
  int64_t plane = h * w;
  for (int64_t f = 0; f < kTargetFrames; ++f)
    for (int c = 0; c < kOutputChannels; ++c)
      for (int64_t p = 0; p < plane; ++p)
        dst[static_cast<size_t>((f * plane + p) * kOutputChannels + c)] =
            src[static_cast<size_t>((f * kOutputChannels + c) * plane + p)];
  return out;
}

Tensor frames_to_prediction(const Tensor& frames) {
  if (frames.rank() != 4 || frames.dim(0) != kTargetFrames || frames.dim(3) != kOutputChannels)
    throw ValidationError("expected (12,H,W,8) frames, got " + dims_to_string(frames.dims()));
  int64_t h = frames.dim(1), w = frames.dim(2);
  Tensor out = Tensor::zeros({kTargetFrames * kOutputChannels, h, w}, Dtype::Float32);
  auto dst = out.f32();
  auto src = frames.f32();
  int64_t plane = h * w;
  for (int64_t f = 0; f < kTargetFrames; ++f)
    for (int c = 0; c < kOutputChannels; ++c)
      for (int64_t p = 0; p < plane; ++p)
        dst[static_cast<size_t>((f * kOutputChannels + c) * plane + p)] =
            src[static_cast<size_t>((f * plane + p) * kOutputChannels + c)];
  return out;
}

}  // namespace gridcast

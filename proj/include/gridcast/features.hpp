#pragma once

#include <span>
#include <vector>

#include "gridcast/dataio.hpp"
#include "gridcast/graph.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {

constexpr int kUnetChannels = 143;  // 108 raw + 7 static + 1 time + 27 aggregates
constexpr int kGnnChannels = 91;    // 54 recent + 27 aggregates + 7 static + 1 time + 2 coords
constexpr double kDefaultRoadThreshold = 5.0;

// Grid feature layout:
//   [0..107]   frames oldest->newest, 9 channels each, divided by 255
//   [108..114] static channels / 255
//   [115]      time of day, clock / 288
//   [116..142] per raw channel c: 116+3c+(0 range, 1 mean, 2 std), /255 scale
// Node feature layout (raw byte scale before standardization):
//   [0..53]    newest 6 frames x 9 channels
//   [54..80]   per raw channel c: 54+3c+(0 mean, 1 min, 2 max) over 12 frames
//   [81..87]   static channels
//   [88]       time of day
//   [89..90]   row/(H-1), col/(W-1)

Tensor compute_max_volume_map(const TrafficMovie& movie);              // (H,W) f32
Tensor build_road_mask(const Tensor& max_volume, double threshold = kDefaultRoadThreshold);
Tensor build_clamp_table(std::span<const TrafficMovie> movies);        // (H,W,8) f32

double time_of_day(int clock);

Tensor unet_features(const TrafficMovie& movie, const SampleWindow& window,
                     const StaticMap& static_map, const Tensor& mask);  // (143,H,W) f32

struct NormStats {
  Tensor mean;    // (91) f64
  Tensor stddev;  // (91) f64, floored at 1e-6
};

Tensor gnn_node_features_raw(const TrafficMovie& movie, const SampleWindow& window,
                             const StaticMap& static_map, const RoadGraph& graph);  // (N,91) f64

NormStats compute_norm_stats(std::span<const Tensor> raw_node_features);

Tensor standardize_features(const Tensor& raw, const NormStats& stats);  // (N,91) f32

Tensor gnn_features(const TrafficMovie& movie, const SampleWindow& window,
                    const StaticMap& static_map, const RoadGraph& graph,
                    const NormStats& stats);  // (N,91) f32

// pred (12,H,W,8) in raw 0-255 units; table broadcast over the frame axis.
Tensor clamp_predictions(const Tensor& pred, const Tensor& table);

// Target/layout bridges between (96,H,W) model space and (12,H,W,8) frames.
Tensor target_frames(const TrafficMovie& movie, const SampleWindow& window);      // (12,H,W,8) f32 raw
Tensor unet_target(const TrafficMovie& movie, const SampleWindow& window);        // (96,H,W) f32 /255
Tensor prediction_to_frames(const Tensor& out96);                                 // (96,H,W) -> (12,H,W,8)
Tensor frames_to_prediction(const Tensor& frames);                                // inverse

}  // namespace gridcast

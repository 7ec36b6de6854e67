#pragma once

#include <vector>

#include "gridcast/autodiff.hpp"

namespace gridcast {

struct UNetConfig {
  int depth = 4;               // encoder stages; paper scale is 8
  int64_t base_channels = 16;  // doubles per stage
  int64_t in_channels = 143;
  int64_t out_channels = 96;
  Dtype dtype = Dtype::Float32;
};

struct PadInfo {
  int64_t orig_h = 0, orig_w = 0;
  int64_t padded_h = 0, padded_w = 0;
  bool padded() const { return orig_h != padded_h || orig_w != padded_w; }
};

PadInfo pad_info(int64_t h, int64_t w, int64_t multiple);
Tensor pad_to_multiple(const Tensor& x, int64_t multiple, PadInfo* info = nullptr);
Tensor crop_grid(const Tensor& x, const PadInfo& info);  // exact inverse of the pad

// Encoder-decoder over (C,H,W) grids: per stage two 3x3 convs + ReLU with
// average pooling between stages, nearest-neighbor upsampling and skip
// concatenation on the way back, 1x1 projection to the output stack.
// Activations are tapped at the end of every encoder stage, before pooling.
// A learned 1x1 adapter lets output stacks re-enter the shared encoder for
// the hidden-layer loss.
class UNet {
 public:
  UNet(const UNetConfig& cfg, uint64_t seed);

  struct Result {
    Var prediction;          // (out_channels, H, W), cropped to the input dims
    std::vector<Var> taps;   // depth entries, tap i at H/2^i
  };
  Result forward(Tape& t, const Tensor& input);

  // Same code path the forward pass uses, on a raw (in_channels,H,W) tensor.
  std::vector<Var> encoder_only(Tape& t, const Tensor& input);

  // Pads, adapts (out_channels -> in_channels) and encodes a prediction or
  // target stack that lives on the tape.
  std::vector<Var> encode_output_stack(Tape& t, Var frames);

  std::vector<Parameter*> parameters();
  const UNetConfig& config() const { return cfg_; }
  int64_t pad_multiple() const { return int64_t{1} << cfg_.depth; }

 private:
  struct ConvP {
    Parameter w, b;
  };
  struct Stage {
    ConvP c1, c2;
  };
  struct DecStage {
    ConvP shrink, c1, c2;
  };

  UNetConfig cfg_;
  std::vector<Stage> enc_;
  std::vector<Stage> bottleneck_;  // single entry; vector keeps Parameter addresses stable
  std::vector<DecStage> dec_;
  std::vector<ConvP> final_;    // 1x1 to out_channels
  std::vector<ConvP> adapter_;  // 1x1 out_channels -> in_channels

  struct Encoded {
    std::vector<Var> taps;
    Var bottom;
  };
  Encoded encode(Tape& t, Var x);
};

}  // namespace gridcast

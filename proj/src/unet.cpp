#include "gridcast/unet.hpp"

#include <string>

#include "gridcast/gnn.hpp"  // glorot_uniform

namespace gridcast {

PadInfo pad_info(int64_t h, int64_t w, int64_t multiple) {
  PadInfo info;
  info.orig_h = h;
  info.orig_w = w;
  info.padded_h = (h + multiple - 1) / multiple * multiple;
  info.padded_w = (w + multiple - 1) / multiple * multiple;
  return info;
}

Tensor pad_to_multiple(const Tensor& x, int64_t multiple, PadInfo* info_out) {
  if (x.rank() != 3) throw ValidationError("pad_to_multiple expects (C,H,W)");
  PadInfo info = pad_info(x.dim(1), x.dim(2), multiple);
  if (info_out != nullptr) *info_out = info;
  if (!info.padded()) return x;
  Tensor out = Tensor::zeros({x.dim(0), info.padded_h, info.padded_w}, x.dtype());
  if (x.dtype() == Dtype::Float32) {
    auto src = x.f32();
    auto dst = out.f32();
    for (int64_t c = 0; c < x.dim(0); ++c)
      for (int64_t y = 0; y < info.orig_h; ++y)
        std::copy_n(src.data() + (c * info.orig_h + y) * info.orig_w, info.orig_w,
                    dst.data() + (c * info.padded_h + y) * info.padded_w);
  } else if (x.dtype() == Dtype::Float64) {
    auto src = x.f64();
    auto dst = out.f64();
    for (int64_t c = 0; c < x.dim(0); ++c)
      for (int64_t y = 0; y < info.orig_h; ++y)
        std::copy_n(src.data() + (c * info.orig_h + y) * info.orig_w, info.orig_w,
                    dst.data() + (c * info.padded_h + y) * info.padded_w);
  } else {
    throw ValidationError("pad_to_multiple requires float tensors");
  }
  return out;
}

Tensor crop_grid(const Tensor& x, const PadInfo& info) {
  if (x.rank() != 3 || x.dim(1) != info.padded_h || x.dim(2) != info.padded_w)
    throw ValidationError("crop_grid input does not match the pad record");
  if (!info.padded()) return x;
  Tensor out = Tensor::zeros({x.dim(0), info.orig_h, info.orig_w}, x.dtype());
  if (x.dtype() == Dtype::Float32) {
    auto src = x.f32();
    auto dst = out.f32();
    for (int64_t c = 0; c < x.dim(0); ++c)
      for (int64_t y = 0; y < info.orig_h; ++y)
        std::copy_n(src.data() + (c * info.padded_h + y) * info.padded_w, info.orig_w,
                    dst.data() + (c * info.orig_h + y) * info.orig_w);
  } else {
    auto src = x.f64();
    auto dst = out.f64();
    for (int64_t c = 0; c < x.dim(0); ++c)
      for (int64_t y = 0; y < info.orig_h; ++y)
        std::copy_n(src.data() + (c * info.padded_h + y) * info.padded_w, info.orig_w,
                    dst.data() + (c * info.orig_h + y) * info.orig_w);
  }
  return out;
}

UNet::UNet(const UNetConfig& cfg, uint64_t seed) : cfg_(cfg) {
  if (cfg.depth < 1) throw ValidationError("unet depth must be >= 1");
  Rng rng(seed);
  auto conv = [&](const std::string& name, int64_t c_in, int64_t c_out) {
    return ConvP{Parameter(name + ".w", glorot_uniform(rng, c_in * 9, c_out * 9,
                                                       {c_out, c_in, 3, 3}, cfg.dtype)),
                 Parameter(name + ".b", Tensor::zeros({c_out}, cfg.dtype))};
  };
  auto proj = [&](const std::string& name, int64_t c_in, int64_t c_out) {
    return ConvP{
        Parameter(name + ".w", glorot_uniform(rng, c_in, c_out, {c_out, c_in}, cfg.dtype)),
        Parameter(name + ".b", Tensor::zeros({c_out}, cfg.dtype))};
  };

  int64_t prev = cfg.in_channels;
  enc_.reserve(static_cast<size_t>(cfg.depth));
  for (int i = 0; i < cfg.depth; ++i) {
    int64_t width = cfg.base_channels << i;
    std::string n = "enc" + std::to_string(i);
    enc_.push_back({conv(n + ".c1", prev, width), conv(n + ".c2", width, width)});
    prev = width;
  }
  int64_t bottom = cfg.base_channels << cfg.depth;
  bottleneck_.push_back({conv("bottleneck.c1", prev, bottom), conv("bottleneck.c2", bottom, bottom)});
  dec_.reserve(static_cast<size_t>(cfg.depth));
  for (int i = 0; i < cfg.depth; ++i) {
    int64_t width = cfg.base_channels << i;
    std::string n = "dec" + std::to_string(i);
    dec_.push_back({conv(n + ".shrink", width * 2, width), conv(n + ".c1", width * 2, width),
                    conv(n + ".c2", width, width)});
  }
  final_.push_back(proj("final", cfg.base_channels, cfg.out_channels));
  adapter_.push_back(proj("adapter", cfg.out_channels, cfg.in_channels));
}

UNet::Encoded UNet::encode(Tape& t, Var x) {
  Encoded enc;
  Var h = x;
  for (int i = 0; i < cfg_.depth; ++i) {
    Stage& s = enc_[static_cast<size_t>(i)];
    h = relu(conv2d(h, t.leaf(s.c1.w), t.leaf(s.c1.b)));
    h = relu(conv2d(h, t.leaf(s.c2.w), t.leaf(s.c2.b)));
    enc.taps.push_back(h);
    h = avg_pool2(h);
  }
  Stage& b = bottleneck_.front();
  h = relu(conv2d(h, t.leaf(b.c1.w), t.leaf(b.c1.b)));
  h = relu(conv2d(h, t.leaf(b.c2.w), t.leaf(b.c2.b)));
  enc.bottom = h;
  return enc;
}

UNet::Result UNet::forward(Tape& t, const Tensor& input) {
  if (input.rank() != 3 || input.dim(0) != cfg_.in_channels)
    throw ValidationError("unet expects (" + std::to_string(cfg_.in_channels) +
                          ",H,W) input, got " + dims_to_string(input.dims()));
  PadInfo info;
  Tensor padded = pad_to_multiple(input, pad_multiple(), &info);
  Var x = t.constant(padded);
  Encoded enc = encode(t, x);
  Var h = enc.bottom;
  for (int i = cfg_.depth - 1; i >= 0; --i) {
    DecStage& d = dec_[static_cast<size_t>(i)];
    h = upsample_nearest2(h);
    h = relu(conv2d(h, t.leaf(d.shrink.w), t.leaf(d.shrink.b)));
    h = concat_ch(h, enc.taps[static_cast<size_t>(i)]);
    h = relu(conv2d(h, t.leaf(d.c1.w), t.leaf(d.c1.b)));
    h = relu(conv2d(h, t.leaf(d.c2.w), t.leaf(d.c2.b)));
  }
  ConvP& f = final_.front();
  Var out = conv1x1(h, t.leaf(f.w), t.leaf(f.b));
  if (info.padded()) out = crop2d(out, info.orig_h, info.orig_w);
  return {out, std::move(enc.taps)};
}

std::vector<Var> UNet::encoder_only(Tape& t, const Tensor& input) {
  if (input.rank() != 3 || input.dim(0) != cfg_.in_channels)
    throw ValidationError("encoder expects (" + std::to_string(cfg_.in_channels) +
                          ",H,W) input, got " + dims_to_string(input.dims()));
  Tensor padded = pad_to_multiple(input, pad_multiple(), nullptr);
  return encode(t, t.constant(padded)).taps;
}

std::vector<Var> UNet::encode_output_stack(Tape& t, Var frames) {
  const Tensor& v = frames.value();
  if (v.rank() != 3 || v.dim(0) != cfg_.out_channels)
    throw ValidationError("encode_output_stack expects (" + std::to_string(cfg_.out_channels) +
                          ",H,W)");
  PadInfo info = pad_info(v.dim(1), v.dim(2), pad_multiple());
  Var h = frames;
  if (info.padded()) h = pad2d(h, info.padded_h, info.padded_w);
  ConvP& a = adapter_.front();
  h = conv1x1(h, t.leaf(a.w), t.leaf(a.b));
  return encode(t, h).taps;
}

std::vector<Parameter*> UNet::parameters() {
  std::vector<Parameter*> out;
  auto push = [&](ConvP& c) {
    out.push_back(&c.w);
    out.push_back(&c.b);
  };
  for (Stage& s : enc_) {
    push(s.c1);
    push(s.c2);
  }
  push(bottleneck_.front().c1);
  push(bottleneck_.front().c2);
  for (DecStage& d : dec_) {
    push(d.shrink);
    push(d.c1);
    push(d.c2);
  }
  push(final_.front());
  push(adapter_.front());
  return out;
}

}  // namespace gridcast

#include "gridcast/commands.hpp"

#include <array>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

#include "gridcast/checkpoint.hpp"
#include "gridcast/config.hpp"
#include "gridcast/dataio.hpp"
#include "gridcast/features.hpp"
#include "gridcast/gnn.hpp"
#include "gridcast/graph.hpp"
#include "gridcast/losses.hpp"
#include "gridcast/selfcheck.hpp"
#include "gridcast/training.hpp"
#include "gridcast/unet.hpp"

namespace gridcast {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

TrafficMovie load_movie(const std::string& path) {
  TrafficMovie movie;
  movie.frames = read_tensor_file(path);
  movie.validate();
  return movie;
}

StaticMap load_static(const std::string& path, const TrafficMovie& movie) {
  StaticMap stat;
  stat.channels = read_tensor_file(path);
  if (stat.channels.rank() != 3 || stat.channels.dim(0) != movie.height() ||
      stat.channels.dim(1) != movie.width() || stat.channels.dim(2) != kStaticChannels)
    throw ValidationError("static map must be (H,W,7) matching the movie, got " +
                          dims_to_string(stat.channels.dims()));
  return stat;
}

Tensor scaled_copy(const Tensor& t, float s) {
  Tensor out = t;
  for (auto& v : out.f32()) v *= s;
  return out;
}

Tensor scored_target(const TrafficMovie& movie, const SampleWindow& window) {
  return select_scored_frames(target_frames(movie, window));
}

}  // namespace

void cmd_synth(const SynthArgs& args) {
  if (args.out_dir.empty()) throw ValidationError("synth needs --out-dir");
  SynthResult result = synth_generate(args.seed, args.height, args.width, args.days);
  ensure_dir(args.out_dir);
  write_tensor_file(join(args.out_dir, "movie.gct"), result.movie.frames);
  write_tensor_file(join(args.out_dir, "static.gct"), result.static_map.channels);
}

void cmd_build_graph(const BuildGraphArgs& args) {
  TrafficMovie movie = load_movie(args.movie);
  Tensor maxvol = compute_max_volume_map(movie);
  Tensor mask = build_road_mask(maxvol, args.threshold);
  RoadGraph graph = extract_graph(mask);
  if (graph.num_nodes() == 0)
    throw ValidationError("threshold " + std::to_string(args.threshold) +
                          " leaves no road pixels; nothing to save");
  save_graph(args.out, graph);
}

void cmd_featurize(const FeaturizeArgs& args) {
  TrafficMovie movie = load_movie(args.movie);
  StaticMap stat = load_static(args.static_map, movie);
  ensure_dir(args.out_dir);
  Tensor maxvol = compute_max_volume_map(movie);
  Tensor mask = build_road_mask(maxvol);
  std::array<TrafficMovie, 1> movies{movie};
  Tensor clamp = build_clamp_table(movies);
  write_tensor_file(join(args.out_dir, "maxvol.gct"), maxvol);
  write_tensor_file(join(args.out_dir, "mask.gct"), mask);
  write_tensor_file(join(args.out_dir, "clamp.gct"), clamp);
  if (!args.graph.empty()) {
    RoadGraph graph = load_graph(args.graph, movie.height(), movie.width());
    std::vector<SampleWindow> windows = make_windows(movie, 12);
    std::vector<Tensor> raw;
    raw.reserve(windows.size());
    for (const SampleWindow& w : windows)
      raw.push_back(gnn_node_features_raw(movie, w, stat, graph));
    NormStats stats = compute_norm_stats(raw);
    write_tensor_records(join(args.out_dir, "stats.gct"), {stats.mean, stats.stddev});
  }
}

namespace {

constexpr std::array<std::string_view, 20> kTrainKeys = {
    "batch_size",   "epochs_per_cycle", "max_cycles",  "eta_max",    "eta_min",
    "train_stride", "val_stride",       "val_fraction", "threshold",  "adam_beta1",
    "adam_beta2",   "adam_eps",         "depth",       "base_channels", "hidden_loss",
    "arch",         "hidden",           "blocks",      "cheb_k",     "sg_k"};

struct TrainContext {
  TrafficMovie train_movie, val_movie;
  StaticMap stat;
  std::vector<SampleWindow> train_windows, val_windows;
  Tensor maxvol, mask, clamp;
};

TrainContext split_and_prepare(const TrafficMovie& movie, const StaticMap& stat,
                               const RunConfig& cfg) {
  double val_fraction = cfg.get_double("val_fraction", 0.25);
  if (val_fraction <= 0.0 || val_fraction >= 1.0)
    throw ValidationError("val_fraction must be in (0,1)");
  int64_t t = movie.t();
  int64_t val_frames =
      std::max<int64_t>(kWindowFrames, static_cast<int64_t>(static_cast<double>(t) * val_fraction));
  int64_t train_frames = t - val_frames;
  if (train_frames < kWindowFrames)
    throw ValidationError("movie too short to split: " + std::to_string(t) + " frames");

  TrainContext ctx;
  ctx.train_movie = slice_movie(movie, 0, train_frames);
  ctx.val_movie = slice_movie(movie, train_frames, t);
  ctx.stat = stat;
  ctx.train_windows = make_windows(ctx.train_movie, cfg.get_int("train_stride", 1));
  ctx.val_windows = make_windows(ctx.val_movie, cfg.get_int("val_stride", 12));
  shift_clocks(ctx.val_windows, train_frames);
  ctx.maxvol = compute_max_volume_map(ctx.train_movie);
  ctx.mask = build_road_mask(ctx.maxvol, cfg.get_double("threshold", kDefaultRoadThreshold));
  std::array<TrafficMovie, 1> movies{ctx.train_movie};
  ctx.clamp = build_clamp_table(movies);
  return ctx;
}

TrainSpec base_train_spec(const RunConfig& cfg, uint64_t seed, int64_t n_train) {
  TrainSpec spec;
  spec.n_train = n_train;
  spec.batch_size = static_cast<int>(cfg.get_int("batch_size", 4));
  spec.schedule.eta_max = cfg.get_double("eta_max", 3e-4);
  spec.schedule.eta_min = cfg.get_double("eta_min", 0.0);
  spec.schedule.epochs_per_cycle = static_cast<int>(cfg.get_int("epochs_per_cycle", 7));
  spec.max_cycles = static_cast<int>(cfg.get_int("max_cycles", 16));
  spec.seed = seed;
  spec.beta1 = cfg.get_double("adam_beta1", 0.9);
  spec.beta2 = cfg.get_double("adam_beta2", 0.999);
  spec.eps = cfg.get_double("adam_eps", 1e-8);
  return spec;
}

}  // namespace

void cmd_train(const TrainArgs& args) {
  if (args.kind != "unet" && args.kind != "gnn")
    throw ValidationError("train kind must be unet or gnn");
  RunConfig cfg =
      args.config.empty() ? RunConfig() : RunConfig::parse_file(args.config);
  cfg.validate(kTrainKeys);

  TrafficMovie movie = load_movie(join(args.data_dir, "movie.gct"));
  StaticMap stat = load_static(join(args.data_dir, "static.gct"), movie);
  TrainContext ctx = split_and_prepare(movie, stat, cfg);
  ensure_dir(args.out_dir);

  write_tensor_file(join(args.out_dir, "maxvol.gct"), ctx.maxvol);
  write_tensor_file(join(args.out_dir, "mask.gct"), ctx.mask);
  write_tensor_file(join(args.out_dir, "clamp.gct"), ctx.clamp);

  if (args.kind == "unet") {
    UNetConfig ucfg;
    ucfg.depth = static_cast<int>(cfg.get_int("depth", 4));
    ucfg.base_channels = cfg.get_int("base_channels", 16);
    UNet net(ucfg, args.seed);
    bool hidden = cfg.get_bool("hidden_loss", false);
    HiddenLossWeights weights = HiddenLossWeights::uniform(ucfg.depth);

    TrainSpec spec = base_train_spec(cfg, args.seed,
                                     static_cast<int64_t>(ctx.train_windows.size()));
    spec.params = net.parameters();
    spec.make_loss = [&](Tape& t, std::span<const int64_t> ids) {
      Var total;
      for (size_t i = 0; i < ids.size(); ++i) {
        const SampleWindow& w = ctx.train_windows[static_cast<size_t>(ids[i])];
        Tensor feats = unet_features(ctx.train_movie, w, ctx.stat, ctx.mask);
        Tensor target = unet_target(ctx.train_movie, w);
        Var pred = net.forward(t, feats).prediction;
        Var sample = hidden ? hidden_layer_loss(t, net, pred, target, weights)
                            : mse_12frames(pred, t.constant(target));
        total = i == 0 ? sample : add(total, sample);
      }
      return scale(total, 1.0 / static_cast<double>(ids.size()));
    };
    spec.validate = [&]() {
      double total = 0.0;
      for (const SampleWindow& w : ctx.val_windows) {
        Tensor feats = unet_features(ctx.val_movie, w, ctx.stat, ctx.mask);
        Tape t;
        Tensor pred96 = net.forward(t, feats).prediction.value();
        Tensor raw = prediction_to_frames(scaled_copy(pred96, 255.0f));
        Tensor clamped = clamp_predictions(raw, ctx.clamp);
        total += validation_mse_6frames(clamped, scored_target(ctx.val_movie, w)).mse_normalized;
      }
      return total / static_cast<double>(ctx.val_windows.size());
    };

    TrainOutcome outcome = train(spec);
    if (outcome.history.aborted) {
      write_history(join(args.out_dir, "history.txt"), outcome.history);
      throw NumericError("training aborted on a non-finite loss; history kept");
    }
    apply_parameters(spec.params, snapshot_average(outcome.store));
    write_history(join(args.out_dir, "history.txt"), outcome.history);

    std::map<std::string, std::string> meta;
    meta["depth"] = std::to_string(ucfg.depth);
    meta["base_channels"] = std::to_string(ucfg.base_channels);
    Checkpoint ckpt = make_checkpoint("unet", meta, spec.params);
    ckpt.extras.emplace_back("road_mask", ctx.mask);
    save_checkpoint(join(args.out_dir, "checkpoint.gct"), ckpt);
    return;
  }

  // gnn
  RoadGraph graph = extract_graph(ctx.mask);
  if (graph.num_nodes() == 0) throw ValidationError("road mask is empty; cannot train a gnn");
  GraphOperators ops = build_operators(graph);
  std::vector<Tensor> raw;
  raw.reserve(ctx.train_windows.size());
  for (const SampleWindow& w : ctx.train_windows)
    raw.push_back(gnn_node_features_raw(ctx.train_movie, w, ctx.stat, graph));
  NormStats stats = compute_norm_stats(raw);
  raw.clear();
  raw.shrink_to_fit();

  GnnConfig gcfg;
  gcfg.hidden = cfg.get_int("hidden", 64);
  gcfg.blocks = static_cast<int>(cfg.get_int("blocks", 4));
  gcfg.cheb_k = static_cast<int>(cfg.get_int("cheb_k", 3));
  gcfg.sg_k = static_cast<int>(cfg.get_int("sg_k", 5));
  std::string arch = cfg.get_string("arch", "ensemble");
  if (arch != "ensemble" && arch != "resnet")
    throw ValidationError("gnn arch must be ensemble or resnet");

  std::unique_ptr<GraphEnsembleNet> ens;
  std::unique_ptr<GraphResNet> res;
  std::function<Var(Tape&, Var)> forward;
  std::vector<Parameter*> params;
  if (arch == "ensemble") {
    ens = std::make_unique<GraphEnsembleNet>(gcfg, args.seed);
    params = ens->parameters();
    forward = [&](Tape& t, Var x) { return ens->forward(t, x, ops); };
  } else {
    res = std::make_unique<GraphResNet>(gcfg, args.seed);
    params = res->parameters();
    forward = [&](Tape& t, Var x) { return res->forward(t, x, ops); };
  }

  TrainSpec spec = base_train_spec(cfg, args.seed, static_cast<int64_t>(ctx.train_windows.size()));
  spec.params = params;
  spec.make_loss = [&](Tape& t, std::span<const int64_t> ids) {
    Var total;
    for (size_t i = 0; i < ids.size(); ++i) {
      const SampleWindow& w = ctx.train_windows[static_cast<size_t>(ids[i])];
      Tensor feats = gnn_features(ctx.train_movie, w, ctx.stat, graph, stats);
      Tensor target = grid_to_nodes(unet_target(ctx.train_movie, w), graph);
      Var pred = forward(t, t.constant(feats));
      Var sample = mse_12frames(pred, t.constant(target));
      total = i == 0 ? sample : add(total, sample);
    }
    return scale(total, 1.0 / static_cast<double>(ids.size()));
  };
  spec.validate = [&]() {
    double total = 0.0;
    for (const SampleWindow& w : ctx.val_windows) {
      Tensor feats = gnn_features(ctx.val_movie, w, ctx.stat, graph, stats);
      Tape t;
      Tensor nodes = forward(t, t.constant(feats)).value();
      Tensor grid = nodes_to_grid(nodes, graph, ctx.val_movie.height(), ctx.val_movie.width());
      Tensor raw_frames = prediction_to_frames(scaled_copy(grid, 255.0f));
      Tensor clamped = clamp_predictions(raw_frames, ctx.clamp);
      total += validation_mse_6frames(clamped, scored_target(ctx.val_movie, w)).mse_normalized;
    }
    return total / static_cast<double>(ctx.val_windows.size());
  };

  TrainOutcome outcome = train(spec);
  if (outcome.history.aborted) {
    write_history(join(args.out_dir, "history.txt"), outcome.history);
    throw NumericError("training aborted on a non-finite loss; history kept");
  }
  apply_parameters(spec.params, snapshot_average(outcome.store));
  write_history(join(args.out_dir, "history.txt"), outcome.history);
  save_graph(join(args.out_dir, "graph.gct"), graph);

  std::map<std::string, std::string> meta;
  meta["arch"] = arch;
  meta["hidden"] = std::to_string(gcfg.hidden);
  meta["blocks"] = std::to_string(gcfg.blocks);
  meta["cheb_k"] = std::to_string(gcfg.cheb_k);
  meta["sg_k"] = std::to_string(gcfg.sg_k);
  Checkpoint ckpt = make_checkpoint(arch == "ensemble" ? "gnn-ensemble" : "gnn-resnet", meta,
                                    spec.params);
  ckpt.extras.emplace_back("road_mask", ctx.mask);
  ckpt.extras.emplace_back("stats_mean", stats.mean);
  ckpt.extras.emplace_back("stats_std", stats.stddev);
  save_checkpoint(join(args.out_dir, "checkpoint.gct"), ckpt);
}

void cmd_predict(const PredictArgs& args) {
  Checkpoint ckpt = load_checkpoint(args.checkpoint);
  TrafficMovie movie = load_movie(args.movie);
  StaticMap stat = load_static(args.static_map, movie);
  Tensor clamp = read_tensor_file(args.clamp);
  if (clamp.rank() != 3 || clamp.dim(0) != movie.height() || clamp.dim(1) != movie.width())
    throw ValidationError("clamp table does not match the movie dims");

  int64_t t0 = args.t0 >= 0 ? args.t0 : movie.t() - kWindowFrames;
  if (t0 < 0 || t0 + kInputFrames > movie.t())
    throw ValidationError("t0 must leave 12 input frames inside the movie");
  SampleWindow window{t0, static_cast<int>(t0 % kFramesPerDay)};

  Tensor pred96;
  if (ckpt.kind == "unet") {
    RunConfig meta;  // rebuild from the stored strings
    UNetConfig ucfg;
    ucfg.depth = static_cast<int>(std::stoll(ckpt.config.at("depth")));
    ucfg.base_channels = std::stoll(ckpt.config.at("base_channels"));
    UNet net(ucfg, 0);
    auto params = net.parameters();
    load_into_parameters(ckpt, params);
    Tensor mask = ckpt.extra("road_mask");
    Tensor feats = unet_features(movie, window, stat, mask);
    Tape t;
    pred96 = net.forward(t, feats).prediction.value();
  } else if (ckpt.kind == "gnn-ensemble" || ckpt.kind == "gnn-resnet") {
    if (args.graph.empty())
      throw ValidationError("gnn checkpoints need --graph");
    RoadGraph graph = load_graph(args.graph, movie.height(), movie.width());
    GraphOperators ops = build_operators(graph);
    GnnConfig gcfg;
    gcfg.hidden = std::stoll(ckpt.config.at("hidden"));
    gcfg.blocks = static_cast<int>(std::stoll(ckpt.config.at("blocks")));
    gcfg.cheb_k = static_cast<int>(std::stoll(ckpt.config.at("cheb_k")));
    gcfg.sg_k = static_cast<int>(std::stoll(ckpt.config.at("sg_k")));
    NormStats stats{ckpt.extra("stats_mean"), ckpt.extra("stats_std")};
    Tensor feats = gnn_features(movie, window, stat, graph, stats);
    Tape t;
    Tensor nodes;
    if (ckpt.kind == "gnn-ensemble") {
      GraphEnsembleNet net(gcfg, 0);
      auto params = net.parameters();
      load_into_parameters(ckpt, params);
      nodes = net.forward(t, t.constant(feats), ops).value();
    } else {
      GraphResNet net(gcfg, 0);
      auto params = net.parameters();
      load_into_parameters(ckpt, params);
      nodes = net.forward(t, t.constant(feats), ops).value();
    }
    pred96 = nodes_to_grid(nodes, graph, movie.height(), movie.width());
  } else {
    throw ValidationError("unknown checkpoint kind '" + ckpt.kind + "'");
  }

  ensure_dir(args.out_dir);
  Tensor raw12 = prediction_to_frames(scaled_copy(pred96, 255.0f));
  write_tensor_file(join(args.out_dir, "pred12_raw.gct"), raw12);
  Tensor scored = select_scored_frames(clamp_predictions(raw12, clamp));
  write_tensor_file(join(args.out_dir, "pred6.gct"), scored);
  if (t0 + kWindowFrames <= movie.t())
    write_tensor_file(join(args.out_dir, "target6.gct"), scored_target(movie, window));
}

EvalReport cmd_evaluate(const EvaluateArgs& args) {
  Tensor pred = read_tensor_file(args.pred);
  Tensor target = read_tensor_file(args.target);
  EvalReport report;
  if (pred.rank() == 4 && pred.dim(0) == kTargetFrames) {
    report = validation_mse_6frames(pred, target);
  } else if (pred.rank() == 4 && pred.dim(0) == 6) {
    if (!pred.same_dims(target))
      throw ValidationError("scored prediction and target dims differ: " +
                            dims_to_string(pred.dims()) + " vs " + dims_to_string(target.dims()));
    auto p = pred.f32();
    auto tg = target.f32();
    int64_t frame = pred.dim(1) * pred.dim(2) * pred.dim(3);
    double total = 0.0;
    for (int64_t k = 0; k < 6; ++k) {
      double sum = 0.0;
      for (int64_t i = 0; i < frame; ++i) {
        double d = static_cast<double>(p[static_cast<size_t>(k * frame + i)]) -
                   static_cast<double>(tg[static_cast<size_t>(k * frame + i)]);
        sum += d * d;
      }
      report.per_frame_raw[static_cast<size_t>(k)] = sum / static_cast<double>(frame);
      report.per_frame_normalized[static_cast<size_t>(k)] =
          report.per_frame_raw[static_cast<size_t>(k)] / kRawToNormalized;
      total += sum;
    }
    report.mse_raw = total / static_cast<double>(frame * 6);
    report.mse_normalized = report.mse_raw / kRawToNormalized;
  } else {
    throw ValidationError("prediction must be (12,H,W,8) or (6,H,W,8), got " +
                          dims_to_string(pred.dims()));
  }
  std::cout << format_eval_report(report);
  if (!args.out.empty()) write_eval_report(args.out, report);
  return report;
}

void cmd_ensemble(const EnsembleArgs& args) {
  Tensor a = read_tensor_file(args.a);
  Tensor b = read_tensor_file(args.b);
  Tensor clamp = read_tensor_file(args.clamp);
  Tensor mixed = ensemble_predictions(a, b, args.lambda);
  ensure_dir(args.out_dir);
  write_tensor_file(join(args.out_dir, "ens12_raw.gct"), mixed);
  write_tensor_file(join(args.out_dir, "ens6.gct"),
                    select_scored_frames(clamp_predictions(mixed, clamp)));
}

int cmd_gradcheck(const std::string& perturb) {
  std::vector<CheckResult> results = run_selfcheck(perturb);
  std::cout << format_selfcheck(results);
  for (const CheckResult& r : results)
    if (!r.pass) return 3;
  return 0;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"raster traffic forecasting: synthetic data, road graphs, GNN and U-Net training"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic traffic movie");
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--height", synth.height);
  synth_cmd->add_option("--width", synth.width);
  synth_cmd->add_option("--days", synth.days);
  synth_cmd->add_option("--out-dir", synth.out_dir)->required();
  synth_cmd->callback([&] { cmd_synth(synth); });

  BuildGraphArgs bg;
  auto* bg_cmd = app.add_subcommand("build-graph", "extract the thresholded road graph");
  bg_cmd->add_option("--movie", bg.movie)->required();
  bg_cmd->add_option("--threshold", bg.threshold);
  bg_cmd->add_option("--out", bg.out)->required();
  bg_cmd->callback([&] { cmd_build_graph(bg); });

  FeaturizeArgs fz;
  auto* fz_cmd = app.add_subcommand("featurize", "write mask, clamp table and feature statistics");
  fz_cmd->add_option("--movie", fz.movie)->required();
  fz_cmd->add_option("--static", fz.static_map)->required();
  fz_cmd->add_option("--graph", fz.graph);
  fz_cmd->add_option("--out", fz.out_dir)->required();
  fz_cmd->callback([&] { cmd_featurize(fz); });

  TrainArgs tu{"unet", "", "", 0, ""};
  auto* tu_cmd = app.add_subcommand("train-unet", "train the U-Net with cyclic cosine annealing");
  tu_cmd->add_option("--data-dir", tu.data_dir)->required();
  tu_cmd->add_option("--config", tu.config);
  tu_cmd->add_option("--seed", tu.seed);
  tu_cmd->add_option("--out-dir", tu.out_dir)->required();
  tu_cmd->callback([&] { cmd_train(tu); });

  TrainArgs tg{"gnn", "", "", 0, ""};
  auto* tg_cmd = app.add_subcommand("train-gnn", "train the graph ensemble net or graph resnet");
  tg_cmd->add_option("--data-dir", tg.data_dir)->required();
  tg_cmd->add_option("--config", tg.config);
  tg_cmd->add_option("--seed", tg.seed);
  tg_cmd->add_option("--out-dir", tg.out_dir)->required();
  tg_cmd->callback([&] { cmd_train(tg); });

  PredictArgs pr;
  auto* pr_cmd = app.add_subcommand("predict", "write 12-frame raw and clamped scored predictions");
  pr_cmd->add_option("--checkpoint", pr.checkpoint)->required();
  pr_cmd->add_option("--movie", pr.movie)->required();
  pr_cmd->add_option("--static", pr.static_map)->required();
  pr_cmd->add_option("--graph", pr.graph);
  pr_cmd->add_option("--clamp", pr.clamp)->required();
  pr_cmd->add_option("--t0", pr.t0);
  pr_cmd->add_option("--out-dir", pr.out_dir)->required();
  pr_cmd->callback([&] { cmd_predict(pr); });

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "score a prediction against targets");
  ev_cmd->add_option("--pred", ev.pred)->required();
  ev_cmd->add_option("--target", ev.target)->required();
  ev_cmd->add_option("--out", ev.out);
  ev_cmd->callback([&] { cmd_evaluate(ev); });

  EnsembleArgs en;
  auto* en_cmd = app.add_subcommand("ensemble", "blend two 12-frame raw predictions");
  en_cmd->add_option("--a", en.a)->required();
  en_cmd->add_option("--b", en.b)->required();
  en_cmd->add_option("--weight", en.lambda);
  en_cmd->add_option("--clamp", en.clamp)->required();
  en_cmd->add_option("--out-dir", en.out_dir)->required();
  en_cmd->callback([&] { cmd_ensemble(en); });

  std::string perturb;
  int gradcheck_rc = 0;
  auto* gc_cmd = app.add_subcommand("gradcheck", "run the oracle and gradient self-checks");
  gc_cmd->add_option("--perturb", perturb)->description("corrupt the named kernel (test fixture)");
  gc_cmd->callback([&] { gradcheck_rc = cmd_gradcheck(perturb); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  }
  return gradcheck_rc;
}

}  // namespace gridcast

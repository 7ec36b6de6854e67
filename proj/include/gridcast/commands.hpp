#pragma once

#include <cstdint>
#include <string>

#include "gridcast/losses.hpp"

namespace gridcast {

// Full CLI entry point: parses argv, dispatches, maps exceptions to exit
// codes (1 validation, 2 I/O, 3 numeric).
int run_cli(int argc, const char* const* argv);

struct SynthArgs {
  uint64_t seed = 0;
  int64_t height = 32;
  int64_t width = 32;
  int days = 1;
  std::string out_dir;
};
void cmd_synth(const SynthArgs& args);

struct BuildGraphArgs {
  std::string movie;
  double threshold = 5.0;
  std::string out;
};
void cmd_build_graph(const BuildGraphArgs& args);

struct FeaturizeArgs {
  std::string movie;
  std::string static_map;
  std::string graph;  // optional; enables node-feature statistics
  std::string out_dir;
};
void cmd_featurize(const FeaturizeArgs& args);

struct TrainArgs {
  std::string kind;  // "unet" | "gnn"
  std::string data_dir;
  std::string config;  // optional path
  uint64_t seed = 0;
  std::string out_dir;
};
void cmd_train(const TrainArgs& args);

struct PredictArgs {
  std::string checkpoint;
  std::string movie;
  std::string static_map;
  std::string graph;  // required for gnn checkpoints
  std::string clamp;
  int64_t t0 = -1;  // default: latest window whose target frames exist
  std::string out_dir;
};
void cmd_predict(const PredictArgs& args);

struct EvaluateArgs {
  std::string pred;  // (12,H,W,8) or (6,H,W,8) raw-unit file
  std::string target;
  std::string out;  // optional report path
};
EvalReport cmd_evaluate(const EvaluateArgs& args);

struct EnsembleArgs {
  std::string a;
  std::string b;
  double lambda = 0.5;
  std::string clamp;
  std::string out_dir;
};
void cmd_ensemble(const EnsembleArgs& args);

int cmd_gradcheck(const std::string& perturb);  // prints one line per oracle

}  // namespace gridcast

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridcast/autodiff.hpp"
#include "gridcast/optim.hpp"

namespace gridcast {

// Cyclic cosine annealing: the rate resets to eta_max at the first step of
// every cycle and decays toward eta_min over the cycle's steps.
struct SgdrSchedule {
  double eta_max = 3e-4;
  double eta_min = 0.0;
  int epochs_per_cycle = 7;
};

double lr_at(int64_t step_in_cycle, int64_t steps_per_cycle, const SgdrSchedule& schedule);

struct Snapshot {
  int cycle = 0;
  double score = 0.0;
  std::vector<Tensor> values;  // parameter tensors in parameters() order
};

struct SnapshotStore {
  std::vector<Snapshot> snapshots;  // one per completed cycle
};

struct TrainHistory {
  uint64_t seed = 0;
  std::vector<double> step_loss;
  std::vector<double> epoch_score;
  std::vector<int64_t> cycle_starts;  // indices into epoch_score
  bool aborted = false;               // non-finite loss or gradient
};

struct TrainSpec {
  std::vector<Parameter*> params;
  // Builds the training loss for one batch of sample indices.
  std::function<Var(Tape&, std::span<const int64_t>)> make_loss;
  // Validation score at an epoch end, lower is better.
  std::function<double()> validate;
  int64_t n_train = 0;
  int batch_size = 4;
  SgdrSchedule schedule;
  uint64_t seed = 0;
  int max_cycles = 64;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct TrainOutcome {
  SnapshotStore store;
  TrainHistory history;
};

// Runs whole cycles until one fails to improve on the best score of all
// prior cycles (ties stop), or max_cycles is hit. Snapshots the best
// epoch-end parameters inside each cycle. Deterministic given seed.
TrainOutcome train(const TrainSpec& spec);

// Elementwise mean of the up-to-3 best snapshots (by score, then cycle).
std::vector<Tensor> snapshot_average(const SnapshotStore& store);

void apply_parameters(std::span<Parameter* const> params, std::span<const Tensor> values);

void write_history(const std::string& path, const TrainHistory& history);

}  // namespace gridcast

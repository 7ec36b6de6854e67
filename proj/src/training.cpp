#include "gridcast/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace gridcast {

double lr_at(int64_t step_in_cycle, int64_t steps_per_cycle, const SgdrSchedule& schedule) {
  if (steps_per_cycle < 1) throw ValidationError("steps_per_cycle must be >= 1");
  if (step_in_cycle < 0 || step_in_cycle >= steps_per_cycle)
    throw ValidationError("step " + std::to_string(step_in_cycle) + " outside cycle of " +
                          std::to_string(steps_per_cycle) + " steps");
  double frac = static_cast<double>(step_in_cycle) / static_cast<double>(steps_per_cycle);
  return schedule.eta_min +
         0.5 * (schedule.eta_max - schedule.eta_min) * (1.0 + std::cos(3.14159265358979323846 * frac));
}

namespace {

std::vector<Tensor> copy_values(std::span<Parameter* const> params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (Parameter* p : params) out.push_back(p->value);
  return out;
}

}  // namespace

void apply_parameters(std::span<Parameter* const> params, std::span<const Tensor> values) {
  if (params.size() != values.size())
    throw ValidationError("parameter/value count mismatch when restoring a checkpoint");
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->value.same_dims(values[i]))
      throw ValidationError("parameter '" + params[i]->name + "' dims mismatch on restore");
    params[i]->value = values[i];
  }
}

TrainOutcome train(const TrainSpec& spec) {
  if (spec.n_train < 1) throw ValidationError("training needs a nonempty train split");
  if (!spec.make_loss || !spec.validate) throw ValidationError("training callbacks not set");
  if (spec.batch_size < 1) throw ValidationError("batch size must be >= 1");

  TrainOutcome out;
  out.history.seed = spec.seed;
  Adam opt(spec.params, spec.beta1, spec.beta2, spec.eps);
  Rng shuffle_rng(spec.seed ^ 0x9e3779b97f4a7c15ull);

  int64_t batches_per_epoch = (spec.n_train + spec.batch_size - 1) / spec.batch_size;
  int64_t steps_per_cycle = batches_per_epoch * spec.schedule.epochs_per_cycle;
  double best_prior = std::numeric_limits<double>::infinity();

  std::vector<int64_t> order(static_cast<size_t>(spec.n_train));
  std::iota(order.begin(), order.end(), 0);

  for (int cycle = 0; cycle < spec.max_cycles; ++cycle) {
    out.history.cycle_starts.push_back(static_cast<int64_t>(out.history.epoch_score.size()));
    double cycle_best = std::numeric_limits<double>::infinity();
    std::vector<Tensor> cycle_best_values;
    int64_t step_in_cycle = 0;
    for (int epoch = 0; epoch < spec.schedule.epochs_per_cycle; ++epoch) {
      // Fisher-Yates with the deterministic engine
      for (int64_t i = spec.n_train - 1; i > 0; --i) {
        int64_t j = shuffle_rng.uniform_int(0, i);
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
      }
      for (int64_t b = 0; b < batches_per_epoch; ++b) {
        int64_t lo = b * spec.batch_size;
        int64_t hi = std::min<int64_t>(spec.n_train, lo + spec.batch_size);
        std::span<const int64_t> batch(order.data() + lo, static_cast<size_t>(hi - lo));
        double lr = lr_at(step_in_cycle, steps_per_cycle, spec.schedule);
        Tape tape;
        Var loss = spec.make_loss(tape, batch);
        double loss_value = loss.value().item();
        out.history.step_loss.push_back(loss_value);
        if (!std::isfinite(loss_value)) {
          out.history.aborted = true;
          return out;
        }
        opt.zero_grad();
        tape.backward(loss);
        try {
          opt.step(lr);
        } catch (const NumericError&) {
          out.history.aborted = true;
          return out;
        }
        ++step_in_cycle;
      }
      double score = spec.validate();
      out.history.epoch_score.push_back(score);
      if (!std::isfinite(score)) {
        out.history.aborted = true;
        return out;
      }
      if (score < cycle_best) {
        cycle_best = score;
        cycle_best_values = copy_values(spec.params);
      }
    }
    out.store.snapshots.push_back({cycle, cycle_best, std::move(cycle_best_values)});
    if (cycle_best >= best_prior) break;  // this cycle failed to improve
    best_prior = cycle_best;
  }
  return out;
}

std::vector<Tensor> snapshot_average(const SnapshotStore& store) {
  if (store.snapshots.empty()) throw ValidationError("snapshot store is empty");
  std::vector<size_t> idx(store.snapshots.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    if (store.snapshots[a].score != store.snapshots[b].score)
      return store.snapshots[a].score < store.snapshots[b].score;
    return store.snapshots[a].cycle < store.snapshots[b].cycle;
  });
  size_t take = std::min<size_t>(3, idx.size());
  idx.resize(take);
  // fixed summation order regardless of score ordering
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    return store.snapshots[a].cycle < store.snapshots[b].cycle;
  });

  const std::vector<Tensor>& first = store.snapshots[idx[0]].values;
  std::vector<Tensor> out;
  out.reserve(first.size());
  for (size_t p = 0; p < first.size(); ++p) {
    Tensor acc = Tensor::zeros(first[p].dims(), Dtype::Float64);
    auto a = acc.f64();
    for (size_t s : idx) {
      const Tensor& v = store.snapshots[s].values[p];
      if (!v.same_dims(first[p])) throw ValidationError("snapshot parameter dims mismatch");
      if (v.dtype() == Dtype::Float32) {
        auto src = v.f32();
        for (size_t i = 0; i < a.size(); ++i) a[i] += static_cast<double>(src[i]);
      } else {
        auto src = v.f64();
        for (size_t i = 0; i < a.size(); ++i) a[i] += src[i];
      }
    }
    double inv = 1.0 / static_cast<double>(take);
    for (size_t i = 0; i < a.size(); ++i) a[i] *= inv;
    out.push_back(acc.astype(first[p].dtype()));
  }
  return out;
}

void write_history(const std::string& path, const TrainHistory& history) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  char buf[128];
  os << "seed = " << history.seed << "\n";
  os << "aborted = " << (history.aborted ? 1 : 0) << "\n";
  for (size_t i = 0; i < history.cycle_starts.size(); ++i)
    os << "cycle_start_" << i << " = " << history.cycle_starts[i] << "\n";
  for (size_t i = 0; i < history.step_loss.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "step_loss_%zu = %.17g\n", i, history.step_loss[i]);
    os << buf;
  }
  for (size_t i = 0; i < history.epoch_score.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "epoch_score_%zu = %.17g\n", i, history.epoch_score[i]);
    os << buf;
  }
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace gridcast

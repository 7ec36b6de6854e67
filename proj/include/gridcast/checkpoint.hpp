#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gridcast/autodiff.hpp"

namespace gridcast {

// Checkpoint file: a JSON manifest (names, dims, model config) stored as a
// byte record, followed by one tensor record per parameter, then extras.
struct Checkpoint {
  std::string kind;  // "unet" | "gnn-ensemble" | "gnn-resnet"
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::pair<std::string, Tensor>> extras;

  const Tensor& extra(const std::string& name) const;
  bool has_extra(const std::string& name) const;
};

Checkpoint make_checkpoint(const std::string& kind,
                           const std::map<std::string, std::string>& config,
                           std::span<Parameter* const> params);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint tensors into live parameters; names and dims must match
// one to one, in order.
void load_into_parameters(const Checkpoint& ckpt, std::span<Parameter* const> params);

}  // namespace gridcast

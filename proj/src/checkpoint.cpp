#include "gridcast/checkpoint.hpp"

#include <fstream>

#include "json.hpp"

#include "gridcast/dataio.hpp"

namespace gridcast {

using nlohmann::json;

const Tensor& Checkpoint::extra(const std::string& name) const {
  for (const auto& [n, t] : extras)
    if (n == name) return t;
  throw IoError("checkpoint is missing extra tensor '" + name + "'");
}

bool Checkpoint::has_extra(const std::string& name) const {
  for (const auto& [n, t] : extras)
    if (n == name) return true;
  return false;
}

Checkpoint make_checkpoint(const std::string& kind,
                           const std::map<std::string, std::string>& config,
                           std::span<Parameter* const> params) {
  Checkpoint ckpt;
  ckpt.kind = kind;
  ckpt.config = config;
  for (Parameter* p : params) ckpt.params.emplace_back(p->name, p->value);
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json manifest;
  manifest["format"] = "gridcast-checkpoint";
  manifest["kind"] = ckpt.kind;
  manifest["config"] = ckpt.config;
  json params = json::array();
  for (const auto& [name, t] : ckpt.params) {
    json p;
    p["name"] = name;
    p["dims"] = t.dims();
    p["dtype"] = dtype_name(t.dtype());
    params.push_back(std::move(p));
  }
  manifest["params"] = std::move(params);
  json extras = json::array();
  for (const auto& [name, t] : ckpt.extras) extras.push_back(name);
  manifest["extras"] = std::move(extras);

  std::string text = manifest.dump();
  std::vector<uint8_t> bytes(text.begin(), text.end());
  int64_t manifest_len = static_cast<int64_t>(bytes.size());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_tensor(os, Tensor::from_bytes({manifest_len}, std::move(bytes)));
  for (const auto& [name, t] : ckpt.params) write_tensor(os, t);
  for (const auto& [name, t] : ckpt.extras) write_tensor(os, t);
  os.flush();
  if (!os) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  Tensor header = read_tensor(is);
  if (header.dtype() != Dtype::Byte || header.rank() != 1)
    throw IoError("checkpoint manifest record must be a byte tensor");
  auto bytes = header.u8();
  json manifest;
  try {
    manifest = json::parse(std::string(bytes.begin(), bytes.end()));
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  if (manifest.value("format", "") != "gridcast-checkpoint")
    throw IoError("not a gridcast checkpoint: " + path);

  Checkpoint ckpt;
  ckpt.kind = manifest.value("kind", "");
  if (manifest.contains("config"))
    ckpt.config = manifest["config"].get<std::map<std::string, std::string>>();
  for (const auto& p : manifest["params"]) {
    Tensor t = read_tensor(is);
    std::vector<int64_t> dims = p["dims"].get<std::vector<int64_t>>();
    if (dims != t.dims())
      throw IoError("checkpoint parameter '" + p["name"].get<std::string>() +
                    "' dims do not match its manifest entry");
    ckpt.params.emplace_back(p["name"].get<std::string>(), std::move(t));
  }
  if (manifest.contains("extras")) {
    for (const auto& name : manifest["extras"])
      ckpt.extras.emplace_back(name.get<std::string>(), read_tensor(is));
  }
  return ckpt;
}

void load_into_parameters(const Checkpoint& ckpt, std::span<Parameter* const> params) {
  if (ckpt.params.size() != params.size())
    throw ValidationError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                          " parameters, model expects " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, value] = ckpt.params[i];
    if (name != params[i]->name)
      throw ValidationError("checkpoint parameter '" + name + "' does not match model slot '" +
                            params[i]->name + "'");
    if (!value.same_dims(params[i]->value))
      throw ValidationError("checkpoint parameter '" + name + "' dims mismatch");
    params[i]->value = value.dtype() == params[i]->value.dtype()
                           ? value
                           : value.astype(params[i]->value.dtype());
  }
}

}  // namespace gridcast

#pragma once

// JSON checkpoint: {"format", "version", "config", "params": {name: {"shape",
// "data"}}, "training"}. Parameters are stored in double precision.

#include <filesystem>
#include <fstream>

#include "routex/classifier/model.hpp"

namespace routex {

inline constexpr int kCheckpointVersion = 1;

template <typename S>
json checkpoint_json(const ModelConfig& cfg, const ModelParams<S>& params, json training = json::object()) {
  json p = json::object();
  auto copy = params;
  copy.visit([&](const std::string& name, nn::Mat<S>& m) {
    std::vector<double> data(std::size_t(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) data[std::size_t(i)] = double(m.data()[i]);
    p[name] = json{{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
  });
  return json{{"format", "routex-edge-classifier"},
              {"version", kCheckpointVersion},
              {"config", cfg},
              {"params", std::move(p)},
              {"training", std::move(training)}};
}

struct Checkpoint {
  ModelConfig config;
  ModelParams<double> params;
  json training;
};

inline Checkpoint parse_checkpoint(const json& j) {
  if (j.value("format", "") != "routex-edge-classifier")
    throw Error("invalid_checkpoint", "not an edge classifier checkpoint");
  Checkpoint c;
  c.config = j.at("config").get<ModelConfig>();
  c.config.validate();
  c.params = ModelParams<double>::zeros(c.config);
  const auto& p = j.at("params");
  c.params.visit([&](const std::string& name, nn::Mat<double>& m) {
    if (!p.contains(name)) throw Error("invalid_checkpoint", "missing parameter " + name);
    const auto& entry = p.at(name);
    const auto shape = entry.at("shape").get<std::vector<long>>();
    if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols())
      throw Error("invalid_checkpoint", "shape mismatch for " + name);
    const auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != std::size_t(m.size())) throw Error("invalid_checkpoint", "size mismatch for " + name);
    std::copy(data.begin(), data.end(), m.data());
  });
  c.training = j.value("training", json::object());
  return c;
}

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams<S>& params,
                     json training = json::object()) {
  std::ofstream out(path);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  out << checkpoint_json(cfg, params, std::move(training)).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  try {
    return parse_checkpoint(json::parse(in));
  } catch (const json::exception& e) {
    throw Error("invalid_checkpoint", e.what());
  }
}

}  // namespace routex

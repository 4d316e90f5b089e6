#pragma once

// Kyoto sightseeing demo: one day from Kyoto Station, hours since midnight.
// Travel times are a fixed matrix in hours; coords are lon/lat scaled to the
// unit square for display.

#include "routex/core.hpp"

namespace routex {

inline VrpInstance kyoto_instance() {
  VrpInstance inst;
  inst.kind = ProblemKind::TSPTW;
  struct Row {
    const char* label;
    double x, y, open, close, stay;
    const char* remarks;
  };
  static constexpr Row rows[] = {
      {"Kyoto Station", 0.5075, 0.2586, 7.0, 22.0, 0.0, "Start/end point"},
      {"Kinkaku-ji Temple", 0.1375, 1.0, 9.0, 17.0, 1.0, nullptr},
      {"Ginkaku-ji Temple", 1.0, 0.8285, 9.0, 16.5, 1.0, "November schedule"},
      {"Fushimi-Inari Shrine", 0.6812, 0.0, 8.5, 16.5, 1.0, "For prayer"},
      {"Kiyomizu-dera Temple", 0.835, 0.3845, 6.0, 18.0, 1.0, nullptr},
      {"Nijo-jo Castle", 0.375, 0.6515, 8.75, 16.0, 1.0, nullptr},
      {"Kyoto Geishinkan", 0.5725, 0.7967, 10.5, 11.5, 2.5, "Attend an English guided tour and take lunch"},
      {"Ryoanji Temple", 0.0, 0.9322, 8.5, 16.5, 1.0, nullptr},
      {"Hanamikoji Dori", 0.71, 0.5062, 19.0, 20.0, 1.0, "Take dinner"},
  };
  for (const auto& r : rows) {
    Node n;
    n.coords = {r.x, r.y};
    n.time_window = TimeWindow{r.open, r.close};
    n.stay_duration = r.stay;
    n.label = r.label;
    if (r.remarks) n.remarks = r.remarks;
    inst.nodes.push_back(std::move(n));
  }
  inst.distance_matrix = std::vector<std::vector<double>>{
      {0.0, 0.48, 0.43, 0.21, 0.22, 0.26, 0.33, 0.48, 0.21},
      {0.48, 0.0, 0.47, 0.63, 0.51, 0.26, 0.28, 0.12, 0.42},
      {0.43, 0.47, 0.0, 0.51, 0.29, 0.36, 0.25, 0.53, 0.27},
      {0.21, 0.63, 0.51, 0.0, 0.26, 0.42, 0.47, 0.63, 0.31},
      {0.22, 0.51, 0.29, 0.26, 0.0, 0.31, 0.3, 0.54, 0.14},
      {0.26, 0.26, 0.36, 0.42, 0.31, 0.0, 0.17, 0.28, 0.23},
      {0.33, 0.28, 0.25, 0.47, 0.3, 0.17, 0.0, 0.33, 0.22},
      {0.48, 0.12, 0.53, 0.63, 0.54, 0.28, 0.33, 0.0, 0.45},
      {0.21, 0.42, 0.27, 0.31, 0.14, 0.23, 0.22, 0.45, 0.0},
  };
  return inst;
}

}  // namespace routex

// Copyright 2026 The CorrTalk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "corrtalk/common.hpp"
#include "corrtalk/tensor.hpp"

namespace corrtalk {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

// Rows x cols CSV; header optional.
inline void write_csv(const std::string& path, const Tensor& matrix,
                      const std::vector<std::string>& header = {}) {
  require(matrix.rank() == 2, "write_csv: matrix must be 2-D");
  std::ofstream os(path);
  require(os.good(), msg("cannot open '", path, "' for writing"));
  if (!header.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i)
      os << (i ? "," : "") << header[i];
    os << "\n";
  }
  for (std::size_t r = 0; r < matrix.shape[0]; ++r) {
    for (std::size_t c = 0; c < matrix.shape[1]; ++c)
      os << (c ? "," : "") << format_double(matrix.at(r, c));
    os << "\n";
  }
}

inline void write_csv_column(const std::string& path,
                             const std::vector<double>& column,
                             const std::string& header = {}) {
  std::ofstream os(path);
  require(os.good(), msg("cannot open '", path, "' for writing"));
  if (!header.empty()) os << header << "\n";
  for (double v : column) os << format_double(v) << "\n";
}

// Grayscale binary PGM (P5, maxval 255), one row per matrix row, values
// min-max scaled.
inline void write_pgm(const std::string& path, const Tensor& matrix) {
  require(matrix.rank() == 2, "write_pgm: matrix must be 2-D");
  const std::size_t h = matrix.shape[0], w = matrix.shape[1];
  double lo = matrix.data[0], hi = matrix.data[0];
  for (double v : matrix.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  std::ofstream os(path, std::ios::binary);
  require(os.good(), msg("cannot open '", path, "' for writing"));
  os << "P5\n" << w << " " << h << "\n255\n";
  for (double v : matrix.data) {
    const int g = static_cast<int>(std::lround((v - lo) / span * 255.0));
    os.put(static_cast<char>(g));
  }
}

// Worker count from CORRTALK_THREADS (default 1).
inline std::size_t worker_count() {
  if (const char* env = std::getenv("CORRTALK_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  return 1;
}

// Runs fn(i) for i in [0, n); items are partitioned by index so results land
// in caller-provided slots regardless of scheduling.
template <typename F>
void parallel_for_indexed(std::size_t n, F&& fn) {
  const std::size_t workers = std::min(worker_count(), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace corrtalk

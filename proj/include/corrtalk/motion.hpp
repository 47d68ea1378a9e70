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

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "corrtalk/common.hpp"
#include "corrtalk/tensor.hpp"

namespace corrtalk {

// Facial motion sequence: vertices is {T, V, 3} in millimeters.
struct MotionSequence {
  Tensor vertices;
  float fps = 30.0f;
  std::uint32_t subject_id = 0;

  std::size_t frames() const { return vertices.shape.at(0); }
  std::size_t vertex_count() const { return vertices.shape.at(1); }

  static MotionSequence zeros(std::size_t T, std::size_t V, float fps,
                              std::uint32_t subject = 0) {
    MotionSequence s;
    s.vertices = Tensor::zeros({T, V, 3});
    s.fps = fps;
    s.subject_id = subject;
    return s;
  }

  void validate() const {
    require(vertices.rank() == 3 && vertices.shape[2] == 3,
            "motion sequence must be TxVx3");
    require(frames() >= 1 && vertex_count() >= 1,
            "motion sequence must have T >= 1 and V >= 1");
    require(fps > 0, "motion fps must be positive");
    require(vertices.all_finite(), "motion sequence has non-finite values");
  }
};

// Rest-pose geometry: {V, 3} in millimeters.
struct NeutralGeometry {
  Tensor vertices;

  std::size_t vertex_count() const { return vertices.shape.at(0); }
};

struct RegionMask {
  std::vector<std::uint32_t> lip;
  std::vector<std::uint32_t> upper;

  void validate(std::size_t v_count) const {
    std::set<std::uint32_t> seen;
    for (auto i : lip) {
      require(i < v_count, msg("lip index ", i, " out of range V=", v_count));
      seen.insert(i);
    }
    for (auto i : upper) {
      require(i < v_count, msg("upper index ", i, " out of range V=", v_count));
      require(!seen.count(i),
              msg("vertex ", i, " is in both lip and upper sets"));
    }
  }
};

namespace io {

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
template <typename T>
void put(std::ostream& os, T v) {
  put_bytes(os, &v, sizeof(T));
}
inline void get_bytes(std::istream& is, void* p, std::size_t n,
                      const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw TruncatedError(msg("truncated payload reading ", what));
}
template <typename T>
T get(std::istream& is, const char* what) {
  T v;
  get_bytes(is, &v, sizeof(T), what);
  return v;
}

}  // namespace io

constexpr std::uint32_t kMotionFormatVersion = 1;

// FMSQ: magic "FMSQ", u32 version, u32 T, u32 V, f32 fps, u32 subject_id,
// then T*V*3 f64 coordinates frame-major, little-endian.
inline void write_sequence(const MotionSequence& seq, const std::string& path) {
  seq.validate();
  std::ofstream os(path, std::ios::binary);
  require(os.good(), msg("cannot open '", path, "' for writing"));
  io::put_bytes(os, "FMSQ", 4);
  io::put<std::uint32_t>(os, kMotionFormatVersion);
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(seq.frames()));
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(seq.vertex_count()));
  io::put<float>(os, seq.fps);
  io::put<std::uint32_t>(os, seq.subject_id);
  io::put_bytes(os, seq.vertices.data.data(),
                seq.vertices.data.size() * sizeof(double));
  require(os.good(), msg("write failed for '", path, "'"));
}

inline MotionSequence read_sequence(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), msg("cannot open '", path, "'"));
  char magic[4];
  io::get_bytes(is, magic, 4, "FMSQ magic");
  if (std::memcmp(magic, "FMSQ", 4) != 0)
    throw BadMagicError(msg("bad magic in '", path, "': not an FMSQ file"));
  const auto version = io::get<std::uint32_t>(is, "FMSQ version");
  if (version != kMotionFormatVersion)
    throw VersionError(
        msg("FMSQ version mismatch in '", path, "': got ", version));
  const auto T = io::get<std::uint32_t>(is, "FMSQ header");
  const auto V = io::get<std::uint32_t>(is, "FMSQ header");
  const float fps = io::get<float>(is, "FMSQ header");
  const auto subject = io::get<std::uint32_t>(is, "FMSQ header");
  MotionSequence seq;
  seq.fps = fps;
  seq.subject_id = subject;
  seq.vertices = Tensor::zeros({T, V, 3});
  io::get_bytes(is, seq.vertices.data.data(),
                seq.vertices.data.size() * sizeof(double), "FMSQ vertices");
  seq.validate();
  return seq;
}

// FNEU: magic "FNEU", u32 version, u32 V, V*3 f64.
inline void write_neutral(const NeutralGeometry& n, const std::string& path) {
  require(n.vertices.rank() == 2 && n.vertices.shape[1] == 3,
          "neutral geometry must be Vx3");
  std::ofstream os(path, std::ios::binary);
  require(os.good(), msg("cannot open '", path, "' for writing"));
  io::put_bytes(os, "FNEU", 4);
  io::put<std::uint32_t>(os, kMotionFormatVersion);
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(n.vertex_count()));
  io::put_bytes(os, n.vertices.data.data(),
                n.vertices.data.size() * sizeof(double));
  require(os.good(), msg("write failed for '", path, "'"));
}

inline NeutralGeometry read_neutral(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), msg("cannot open '", path, "'"));
  char magic[4];
  io::get_bytes(is, magic, 4, "FNEU magic");
  if (std::memcmp(magic, "FNEU", 4) != 0)
    throw BadMagicError(msg("bad magic in '", path, "': not an FNEU file"));
  const auto version = io::get<std::uint32_t>(is, "FNEU version");
  if (version != kMotionFormatVersion)
    throw VersionError(
        msg("FNEU version mismatch in '", path, "': got ", version));
  const auto V = io::get<std::uint32_t>(is, "FNEU header");
  NeutralGeometry n;
  n.vertices = Tensor::zeros({V, 3});
  io::get_bytes(is, n.vertices.data.data(),
                n.vertices.data.size() * sizeof(double), "FNEU vertices");
  return n;
}

// Region mask: text lines "lip <idx>" / "upper <idx>".
inline void write_region_mask(const RegionMask& m, const std::string& path) {
  std::ofstream os(path);
  require(os.good(), msg("cannot open '", path, "' for writing"));
  for (auto i : m.lip) os << "lip " << i << "\n";
  for (auto i : m.upper) os << "upper " << i << "\n";
}

inline RegionMask read_region_mask(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), msg("cannot open '", path, "'"));
  RegionMask m;
  std::string kind;
  while (is >> kind) {
    std::uint32_t idx;
    require(static_cast<bool>(is >> idx),
            msg("malformed region mask line in '", path, "'"));
    if (kind == "lip")
      m.lip.push_back(idx);
    else if (kind == "upper")
      m.upper.push_back(idx);
    else
      throw Error(msg("unknown region kind '", kind, "' in '", path, "'"));
  }
  return m;
}

// Per-vertex time-averaged Euclidean distance between two sequences.
inline std::vector<double> mean_vertex_error(const MotionSequence& a,
                                             const MotionSequence& b) {
  if (a.vertices.shape != b.vertices.shape)
    throw Error(msg("mean_vertex_error: shape mismatch ",
                    shape_str(a.vertices.shape), " vs ",
                    shape_str(b.vertices.shape)));
  const std::size_t T = a.frames(), V = a.vertex_count();
  std::vector<double> out(V, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t v = 0; v < V; ++v) {
      double d2 = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = a.vertices.at(t, v, c) - b.vertices.at(t, v, c);
        d2 += d * d;
      }
      out[v] += std::sqrt(d2);
    }
  for (double& v : out) v /= static_cast<double>(T);
  return out;
}

}  // namespace corrtalk

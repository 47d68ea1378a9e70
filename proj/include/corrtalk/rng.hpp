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
#include <string_view>

namespace corrtalk {

constexpr std::uint64_t kGolden64 = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t mix64(std::uint64_t x) {
  x += kGolden64;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Counter-based generator: the value at a counter is a pure function of
// (key, counter), so draws do not depend on evaluation order.
struct CounterRng {
  std::uint64_t key = 0;

  CounterRng() = default;
  explicit CounterRng(std::uint64_t k) : key(k) {}
  CounterRng(std::uint64_t seed, std::string_view stream)
      : key(mix64(seed) ^ fnv1a64(stream)) {}

  std::uint64_t bits(std::uint64_t counter) const {
    return mix64(key ^ (counter * kGolden64));
  }
  // [0, 1)
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }
  // [-half_width, +half_width)
  double uniform_sym(std::uint64_t counter, double half_width) const {
    return (2.0 * uniform(counter) - 1.0) * half_width;
  }
};

// Sequential stream with serializable state; used where a stream of draws is
// more convenient than counters.
struct StreamRng {
  std::uint64_t state = 0;

  StreamRng() = default;
  explicit StreamRng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    state += kGolden64;
    std::uint64_t x = state;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
};

}  // namespace corrtalk

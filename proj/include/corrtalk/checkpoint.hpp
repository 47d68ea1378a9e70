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
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "corrtalk/model.hpp"

namespace corrtalk {

class ConfigHashError : public Error {
 public:
  using Error::Error;
};

constexpr std::uint32_t kCheckpointVersion = 1;

namespace ckpt {

struct ByteWriter {
  std::string buf;
  template <typename T>
  void put(T v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_bytes(const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
};

struct ByteReader {
  const char* p;
  const char* end;
  const char* what;
  template <typename T>
  T get() {
    if (p + sizeof(T) > end)
      throw TruncatedError(msg("truncated payload reading ", what));
    T v;
    std::memcpy(&v, p, sizeof(T));
    p += sizeof(T);
    return v;
  }
  void get_bytes(void* dst, std::size_t n) {
    if (p + n > end)
      throw TruncatedError(msg("truncated payload reading ", what));
    std::memcpy(dst, p, n);
    p += n;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    get_bytes(s.data(), n);
    return s;
  }
};

inline void write_section(std::ostream& os, std::uint32_t tag,
                          const std::string& payload) {
  os.write(reinterpret_cast<const char*>(&tag), 4);
  const std::uint64_t len = payload.size();
  os.write(reinterpret_cast<const char*>(&len), 8);
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  const std::uint64_t digest = fnv1a64(payload.data(), payload.size());
  os.write(reinterpret_cast<const char*>(&digest), 8);
}

inline std::string read_section(std::istream& is, std::uint32_t expect_tag,
                                const char* what) {
  std::uint32_t tag;
  std::uint64_t len;
  is.read(reinterpret_cast<char*>(&tag), 4);
  is.read(reinterpret_cast<char*>(&len), 8);
  if (!is.good())
    throw TruncatedError(msg("truncated checkpoint section header (", what, ")"));
  if (tag != expect_tag)
    throw Error(msg("unexpected checkpoint section reading ", what));
  std::string payload(len, '\0');
  is.read(payload.data(), static_cast<std::streamsize>(len));
  std::uint64_t digest;
  is.read(reinterpret_cast<char*>(&digest), 8);
  if (!is.good())
    throw TruncatedError(msg("truncated checkpoint section (", what, ")"));
  if (digest != fnv1a64(payload.data(), payload.size()))
    throw IntegrityError(
        msg("checkpoint digest mismatch in section ", what));
  return payload;
}

constexpr std::uint32_t kTagMeta = 0x4154454d;   // "META"
constexpr std::uint32_t kTagParams = 0x534d5250; // "PRMS"
constexpr std::uint32_t kTagAdam = 0x4d414441;   // "ADAM"

}  // namespace ckpt

inline void save_checkpoint(CorrTalkModel& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), msg("cannot open '", path, "' for writing"));
  os.write("CTCK", 4);
  const std::uint32_t version = kCheckpointVersion;
  os.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t hash = m.cfg.hash();
  os.write(reinterpret_cast<const char*>(&hash), 8);

  ckpt::ByteWriter meta;
  meta.put<std::int64_t>(m.epoch);
  meta.put<std::int64_t>(m.step);
  meta.put<double>(m.adam.lr);
  meta.put<double>(m.adam.base_lr);
  meta.put<double>(m.adam.beta1);
  meta.put<double>(m.adam.beta2);
  meta.put<double>(m.adam.eps);
  meta.put<std::int64_t>(m.adam.step);
  meta.put<std::uint64_t>(m.train_rng.state);
  ckpt::write_section(os, ckpt::kTagMeta, meta.buf);

  auto params = m.params.all();
  ckpt::ByteWriter prm;
  prm.put<std::uint64_t>(params.size());
  for (const ad::Param* p : params) {
    prm.put_string(p->name);
    prm.put<std::uint32_t>(static_cast<std::uint32_t>(p->t.rank()));
    for (std::size_t d : p->t.shape) prm.put<std::uint64_t>(d);
    prm.put_bytes(p->t.data.data(), p->t.data.size() * sizeof(double));
  }
  ckpt::write_section(os, ckpt::kTagParams, prm.buf);

  ckpt::ByteWriter adam;
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam.put_bytes(m.adam.m[i].data.data(),
                   m.adam.m[i].data.size() * sizeof(double));
    adam.put_bytes(m.adam.v[i].data.data(),
                   m.adam.v[i].data.size() * sizeof(double));
  }
  ckpt::write_section(os, ckpt::kTagAdam, adam.buf);
  require(os.good(), msg("write failed for '", path, "'"));
}

// Restores parameters, optimizer state and progress counters into a model
// built from the same configuration. Refuses checkpoints whose config hash
// differs from the model's.
inline void load_checkpoint(CorrTalkModel& m, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), msg("cannot open '", path, "'"));
  char magic[4];
  is.read(magic, 4);
  if (!is.good() || std::memcmp(magic, "CTCK", 4) != 0)
    throw BadMagicError(msg("bad magic in '", path, "': not a checkpoint"));
  std::uint32_t version;
  is.read(reinterpret_cast<char*>(&version), 4);
  if (version != kCheckpointVersion)
    throw VersionError(msg("checkpoint version mismatch in '", path, "'"));
  std::uint64_t hash;
  is.read(reinterpret_cast<char*>(&hash), 8);
  if (hash != m.cfg.hash())
    throw ConfigHashError(
        msg("checkpoint '", path, "' was written with a different config"));

  {
    std::string payload = ckpt::read_section(is, ckpt::kTagMeta, "META");
    ckpt::ByteReader r{payload.data(), payload.data() + payload.size(), "META"};
    m.epoch = r.get<std::int64_t>();
    m.step = r.get<std::int64_t>();
    m.adam.lr = r.get<double>();
    m.adam.base_lr = r.get<double>();
    m.adam.beta1 = r.get<double>();
    m.adam.beta2 = r.get<double>();
    m.adam.eps = r.get<double>();
    m.adam.step = r.get<std::int64_t>();
    m.train_rng.state = r.get<std::uint64_t>();
  }
  auto params = m.params.all();
  {
    std::string payload = ckpt::read_section(is, ckpt::kTagParams, "PRMS");
    ckpt::ByteReader r{payload.data(), payload.data() + payload.size(), "PRMS"};
    const auto count = r.get<std::uint64_t>();
    if (count != params.size())
      throw Error(msg("checkpoint has ", count, " params, model has ",
                      params.size()));
    for (ad::Param* p : params) {
      const std::string name = r.get_string();
      if (name != p->name)
        throw Error(msg("checkpoint param order mismatch: '", name,
                        "' vs '", p->name, "'"));
      const auto rank = r.get<std::uint32_t>();
      std::vector<std::size_t> shape(rank);
      for (auto& d : shape) d = r.get<std::uint64_t>();
      if (shape != p->t.shape)
        throw Error(msg("checkpoint shape mismatch for '", name, "'"));
      r.get_bytes(p->t.data.data(), p->t.data.size() * sizeof(double));
    }
  }
  {
    std::string payload = ckpt::read_section(is, ckpt::kTagAdam, "ADAM");
    ckpt::ByteReader r{payload.data(), payload.data() + payload.size(), "ADAM"};
    for (std::size_t i = 0; i < params.size(); ++i) {
      r.get_bytes(m.adam.m[i].data.data(),
                  m.adam.m[i].data.size() * sizeof(double));
      r.get_bytes(m.adam.v[i].data.data(),
                  m.adam.v[i].data.size() * sizeof(double));
    }
  }
}

}  // namespace corrtalk

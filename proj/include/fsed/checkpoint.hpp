// Copyright 2026 The fsed Authors.
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

/**
 * @file checkpoint.hpp
 * @brief Versioned binary model container.
 *
 * Layout (little-endian):
 *
 *     magic "FSEDCKPT", u32 version (1)
 *     u32 L, L bytes model config text (key=value lines), u64 fnv1a of it
 *     u32 P, then P parameters:  u32 name length, name, u32 rank,
 *                                 rank x u64 dims, f64 values
 *     u32 B, then B batch-norm buffers: u32 name length, name, u64 C,
 *                                 C f64 running mean, C f64 running variance
 *     u8 has_optimizer; if set: u64 step, then per parameter in order the
 *                                 first and second moments (f64 values)
 *
 * Parameter names are namespaced `encoder.*`, `task_adaptive.*`, `head.tpn.*`.
 */
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "fsed/error.hpp"
#include "fsed/model.hpp"
#include "fsed/optim.hpp"

namespace fsed {

inline constexpr char kCkptMagic[8] = {'F', 'S', 'E', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCkptVersion = 1;

namespace detail {
template <typename T>
void ck_put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T ck_get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError("truncated checkpoint");
  return v;
}
inline void ck_put_string(std::ostream& out, const std::string& s) {
  ck_put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string ck_get_string(std::istream& in) {
  const auto n = ck_get<std::uint32_t>(in);
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw ParseError("truncated checkpoint string");
  return s;
}
inline void ck_put_values(std::ostream& out, const Tensor& t) {
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
}
inline void ck_get_values(std::istream& in, Tensor& t) {
  if (!in.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(double)))) {
    throw ParseError("truncated checkpoint values");
  }
}
}  // namespace detail

inline void save_checkpoint(std::ostream& out, const FewShotModel& model,
                            const Adam* optimizer = nullptr) {
  using namespace detail;
  out.write(kCkptMagic, 8);
  ck_put<std::uint32_t>(out, kCkptVersion);
  const std::string text = model.config().canonical();
  ck_put_string(out, text);
  ck_put<std::uint64_t>(out, fnv1a(text));
  const auto& params = model.parameters().params();
  ck_put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, v] : params) {
    ck_put_string(out, name);
    ck_put<std::uint32_t>(out, static_cast<std::uint32_t>(v.value().rank()));
    for (std::size_t d : v.shape()) ck_put<std::uint64_t>(out, d);
    ck_put_values(out, v.value());
  }
  const auto& bufs = model.parameters().buffers();
  ck_put<std::uint32_t>(out, static_cast<std::uint32_t>(bufs.size()));
  for (const auto& [name, bn] : bufs) {
    ck_put_string(out, name);
    ck_put<std::uint64_t>(out, bn.running_mean.size());
    ck_put_values(out, bn.running_mean);
    ck_put_values(out, bn.running_var);
  }
  ck_put<std::uint8_t>(out, optimizer ? 1 : 0);
  if (optimizer) {
    ck_put<std::uint64_t>(out, optimizer->steps());
    for (std::size_t i = 0; i < params.size(); ++i) {
      ck_put_values(out, optimizer->first_moments()[i]);
      ck_put_values(out, optimizer->second_moments()[i]);
    }
  }
  if (!out) throw IoError("failed writing checkpoint");
}

inline std::string checkpoint_bytes(const FewShotModel& model, const Adam* optimizer = nullptr) {
  std::ostringstream os(std::ios::binary);
  save_checkpoint(os, model, optimizer);
  return os.str();
}

inline void save_checkpoint(const std::filesystem::path& path, const FewShotModel& model,
                            const Adam* optimizer = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  save_checkpoint(out, model, optimizer);
}

/// Rebuilds the model from the stored config and restores every tensor.
/// The stream is left at the optimizer section.
inline std::unique_ptr<FewShotModel> load_checkpoint(std::istream& in) {
  using namespace detail;
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCkptMagic, 8) != 0) {
    throw ParseError("not a checkpoint");
  }
  if (ck_get<std::uint32_t>(in) != kCkptVersion) throw ParseError("unsupported checkpoint version");
  const std::string text = ck_get_string(in);
  if (ck_get<std::uint64_t>(in) != fnv1a(text)) throw ParseError("checkpoint config hash mismatch");
  auto model = std::make_unique<FewShotModel>(ModelConfig::parse(text));
  nn::ParameterSet& ps = model->parameters();
  const auto n_params = ck_get<std::uint32_t>(in);
  if (n_params != ps.size()) throw ParseError("checkpoint parameter count mismatch");
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const std::string name = ck_get_string(in);
    const auto rank = ck_get<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = ck_get<std::uint64_t>(in);
    if (!ps.contains(name)) throw ParseError("checkpoint has unknown parameter '" + name + "'");
    Tensor& dst = ps.get(name).mutable_value();
    if (dst.shape() != shape) throw ParseError("checkpoint shape mismatch for '" + name + "'");
    ck_get_values(in, dst);
  }
  const auto n_bufs = ck_get<std::uint32_t>(in);
  if (n_bufs != ps.buffers().size()) throw ParseError("checkpoint buffer count mismatch");
  for (std::uint32_t i = 0; i < n_bufs; ++i) {
    const std::string name = ck_get_string(in);
    const auto c = ck_get<std::uint64_t>(in);
    auto& bn = ps.buffer(name);
    if (bn.running_mean.size() != c) throw ParseError("checkpoint buffer size mismatch");
    ck_get_values(in, bn.running_mean);
    ck_get_values(in, bn.running_var);
  }
  return model;
}

/// Optimizer state following the model section, if any.
inline bool load_optimizer_state(std::istream& in, Adam& optimizer) {
  using namespace detail;
  const auto has = ck_get<std::uint8_t>(in);
  if (!has) return false;
  optimizer.set_steps(ck_get<std::uint64_t>(in));
  for (std::size_t i = 0; i < optimizer.first_moments().size(); ++i) {
    ck_get_values(in, optimizer.first_moments()[i]);
    ck_get_values(in, optimizer.second_moments()[i]);
  }
  return true;
}

inline std::unique_ptr<FewShotModel> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  return load_checkpoint(in);
}

inline std::unique_ptr<FewShotModel> load_checkpoint_bytes(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return load_checkpoint(in);
}

}  // namespace fsed

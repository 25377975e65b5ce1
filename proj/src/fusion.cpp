/*
 * Copyright 2026 The sortq Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "sortq/fusion.hpp"

#include <array>
#include <cmath>

#include "sortq/errors.hpp"

namespace sortq {

namespace {

constexpr std::array<const char*, 9> kReaders = {"q_proj", "k_proj", "v_proj", "up_proj", "gate_proj",
                                                 "z_proj", "x_proj", "B_proj", "C_proj"};
constexpr std::array<const char*, 3> kWriters = {"o_proj", "down_proj", "out_proj"};

HadamardFlags flags_for(const FusionConfig& cfg, const std::string& op) {
  const auto it = cfg.ops.find(op);
  return it == cfg.ops.end() ? HadamardFlags{} : it->second;
}

bool all_ones(std::span<const double> v) {
  for (double x : v)
    if (x != 1.0) return false;
  return true;
}

}  // namespace

FusionConfig FusionConfig::hadamard_all() {
  FusionConfig cfg;
  for (const char* op : kReaders) cfg.ops[op] = {true, false};
  for (const char* op : kWriters) cfg.ops[op] = {false, true};
  return cfg;
}

FusionConfig FusionConfig::none() {
  FusionConfig cfg;
  for (const char* op : kReaders) cfg.ops[op] = {false, false};
  for (const char* op : kWriters) cfg.ops[op] = {false, false};
  return cfg;
}

void FusionConfig::validate() const {
  for (const auto& [op, flags] : ops) {
    bool known = false;
    for (const char* r : kReaders) {
      if (op == r) {
        known = true;
        if (flags.output) throw UnsupportedError("fusion: output of " + op + " is a pruned dimension");
      }
    }
    for (const char* w : kWriters) {
      if (op == w) {
        known = true;
        if (flags.input) throw UnsupportedError("fusion: input of " + op + " is a pruned dimension");
      }
    }
    if (!known) throw FormatError("fusion: unknown operator '" + op + "'");
  }
  // The residual stream is either rotated everywhere or nowhere.
  const bool rot = rotates_residual();
  for (const char* r : kReaders)
    if (flags_for(*this, r).input != rot) throw UnsupportedError("fusion: inconsistent residual rotation flags");
  for (const char* w : kWriters)
    if (flags_for(*this, w).output != rot) throw UnsupportedError("fusion: inconsistent residual rotation flags");
}

bool FusionConfig::rotates_residual() const { return flags_for(*this, "q_proj").input; }

Matrix hadamard_matrix(std::size_t n) {
  if (n == 0 || (n & (n - 1)) != 0) throw UnsupportedError("hadamard size must be a power of two, got " + std::to_string(n));
  Matrix h(n, n);
  h(0, 0) = 1.0;
  for (std::size_t size = 1; size < n; size *= 2) {
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = 0; j < size; ++j) {
        const double v = h(i, j);
        h(i, j + size) = v;
        h(i + size, j) = v;
        h(i + size, j + size) = -v;
      }
    }
  }
  return scaled(h, 1.0 / std::sqrt(static_cast<double>(n)));
}

Matrix fuse_norm(std::span<const double> gamma, const Matrix& reader) { return scale_rows(reader, gamma); }

Model fuse_norms(const Model& model) {
  Model out = model;
  for (auto& layer : out.layers) {
    const auto& g = layer.norm_scale;
    if (auto* w = std::get_if<MlpWeights>(&layer.weights)) {
      w->w_up = fuse_norm(g, w->w_up);
      w->w_gate = fuse_norm(g, w->w_gate);
    } else if (auto* w = std::get_if<AttnWeights>(&layer.weights)) {
      w->w_q = fuse_norm(g, w->w_q);
      w->w_k = fuse_norm(g, w->w_k);
      w->w_v = fuse_norm(g, w->w_v);
    } else if (auto* w = std::get_if<MambaWeights>(&layer.weights)) {
      w->w_z = fuse_norm(g, w->w_z);
      w->w_x = fuse_norm(g, w->w_x);
      w->w_b = fuse_norm(g, w->w_b);
      w->w_c = fuse_norm(g, w->w_c);
      w->w_dt = fuse_norm(g, w->w_dt);
    }
    layer.norm_scale.assign(g.size(), 1.0);
  }
  out.lm_head = fuse_norm(out.final_norm, out.lm_head);
  out.final_norm.assign(out.final_norm.size(), 1.0);
  return out;
}

Model hadamard_fuse(const Model& model, const FusionConfig& config) {
  config.validate();
  if (!config.rotates_residual()) return model;
  if (model.residual_hadamard) throw UnsupportedError("hadamard_fuse: model is already rotated");
  for (const auto& layer : model.layers)
    if (!all_ones(layer.norm_scale)) throw UnsupportedError("hadamard_fuse: fuse norm scales first");
  if (!all_ones(model.final_norm)) throw UnsupportedError("hadamard_fuse: fuse norm scales first");

  const Matrix h = hadamard_matrix(model.d_hidden);
  auto read = [&](const Matrix& w) { return matmul_tn(h, w); };
  auto write = [&](const Matrix& w) { return matmul(w, h); };
  Model out = model;
  out.embedding = write(out.embedding);
  for (auto& layer : out.layers) {
    if (auto* w = std::get_if<MlpWeights>(&layer.weights)) {
      w->w_up = read(w->w_up);
      w->w_gate = read(w->w_gate);
      w->w_down = write(w->w_down);
    } else if (auto* w = std::get_if<AttnWeights>(&layer.weights)) {
      w->w_q = read(w->w_q);
      w->w_k = read(w->w_k);
      w->w_v = read(w->w_v);
      w->w_o = write(w->w_o);
    } else if (auto* w = std::get_if<MambaWeights>(&layer.weights)) {
      w->w_z = read(w->w_z);
      w->w_x = read(w->w_x);
      w->w_b = read(w->w_b);
      w->w_c = read(w->w_c);
      w->w_dt = read(w->w_dt);
      w->w_out = write(w->w_out);
    }
  }
  out.lm_head = read(out.lm_head);
  out.residual_hadamard = true;
  return out;
}

Model apply_fusion(const Model& model, const FusionConfig& config) {
  config.validate();
  const Model normed = config.norm_fusion ? fuse_norms(model) : model;
  return hadamard_fuse(normed, config);
}

}  // namespace sortq

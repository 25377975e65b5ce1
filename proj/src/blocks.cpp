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

#include "sortq/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sortq/errors.hpp"

namespace sortq {

namespace {

constexpr double kGateNormEps = 1e-6;

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string(name) + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                     ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

std::size_t divide_exact(std::size_t total, std::size_t parts, const char* name) {
  if (parts == 0 || total % parts != 0) {
    throw ShapeError(std::string(name) + ": " + std::to_string(total) + " not divisible by " +
                     std::to_string(parts));
  }
  return total / parts;
}

}  // namespace

void BlockSpec::validate() const {
  if (d_hidden == 0 || d_head == 0 || n_heads == 0 || n_kv_heads == 0 || n_ssm_heads == 0 ||
      n_ssm_groups == 0 || conv_width == 0) {
    throw ShapeError("BlockSpec: dimensions must be positive");
  }
  if (n_heads % n_kv_heads != 0) throw ShapeError("BlockSpec: n_heads not divisible by n_kv_heads");
  if (n_ssm_heads % n_ssm_groups != 0) throw ShapeError("BlockSpec: n_ssm_heads not divisible by n_ssm_groups");
  if (d_head % 2 != 0) throw ShapeError("BlockSpec: d_head must be even for RoPE");
}

BlockSpec toy_block_spec() { return BlockSpec{}; }

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double softplus(double x) { return x > 20.0 ? x : std::log1p(std::exp(x)); }

BlockOutput mlp_forward(const Matrix& x, const MlpWeights& w, bool capture) {
  const std::size_t d_int = w.w_up.cols();
  expect_shape(w.w_up, x.cols(), d_int, "w_up");
  expect_shape(w.w_gate, x.cols(), d_int, "w_gate");
  expect_shape(w.w_down, d_int, x.cols(), "w_down");
  Matrix gate = matmul(x, w.w_gate);
  const Matrix up = matmul(x, w.w_up);
  for (std::size_t i = 0; i < gate.size(); ++i) gate.data()[i] = silu(gate.data()[i]) * up.data()[i];
  BlockOutput out;
  out.y = matmul(gate, w.w_down);
  if (capture) {
    out.capture.hidden_in = x;
    out.capture.mlp_intermediate = std::move(gate);
  }
  return out;
}

Matrix rope_apply(const Matrix& x, std::size_t position_offset, double theta_base,
                  std::span<const std::size_t> gather, std::size_t freq_dim) {
  if (x.cols() % 2 != 0) throw ShapeError("rope_apply: head dimension must be even");
  const std::size_t half = x.cols() / 2;
  const std::size_t full = freq_dim == 0 ? x.cols() : freq_dim;
  if (full % 2 != 0 || full < x.cols()) throw ShapeError("rope_apply: invalid frequency dimension");
  if (!gather.empty() && gather.size() != half) throw ShapeError("rope_apply: gather length != D/2");
  std::vector<double> inv_freq(half);
  for (std::size_t j = 0; j < half; ++j) {
    const std::size_t g = gather.empty() ? j : gather[j];
    if (g >= full / 2) throw ShapeError("rope_apply: gather index out of range");
    inv_freq[j] = std::pow(theta_base, -2.0 * static_cast<double>(g) / static_cast<double>(full));
  }
  Matrix out(x.rows(), x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const double pos = static_cast<double>(position_offset + t);
    for (std::size_t j = 0; j < half; ++j) {
      const double angle = pos * inv_freq[j];
      const double c = std::cos(angle);
      const double s = std::sin(angle);
      const double a = x(t, j);
      const double b = x(t, j + half);
      out(t, j) = a * c - b * s;
      out(t, j + half) = b * c + a * s;
    }
  }
  return out;
}

BlockOutput attn_forward(const Matrix& x, const BlockSpec& spec, const AttnWeights& w,
                         std::span<const IndexVector> gather_per_kv_head, bool capture) {
  const std::size_t d_h = x.cols();
  const std::size_t hs = spec.n_heads;
  const std::size_t hkv = spec.n_kv_heads;
  if (hkv == 0 || hs % hkv != 0) throw ShapeError("attn_forward: n_heads not divisible by n_kv_heads");
  const std::size_t qk = divide_exact(w.w_q.cols(), hs, "w_q columns");
  const std::size_t dv = divide_exact(w.w_v.cols(), hkv, "w_v columns");
  expect_shape(w.w_q, d_h, hs * qk, "w_q");
  expect_shape(w.w_k, d_h, hkv * qk, "w_k");
  expect_shape(w.w_v, d_h, hkv * dv, "w_v");
  expect_shape(w.w_o, hs * dv, d_h, "w_o");
  if (!gather_per_kv_head.empty() && gather_per_kv_head.size() != hkv)
    throw ShapeError("attn_forward: need one gather index per kv head");

  const Matrix q_all = matmul(x, w.w_q);
  const Matrix k_all = matmul(x, w.w_k);
  const Matrix v_all = matmul(x, w.w_v);
  const std::size_t t_len = x.rows();
  const std::size_t group = hs / hkv;
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.d_head));

  BlockOutput out;
  std::vector<Matrix> k_heads(hkv);
  for (std::size_t h = 0; h < hkv; ++h) {
    std::span<const std::size_t> g;
    if (!gather_per_kv_head.empty()) g = gather_per_kv_head[h];
    k_heads[h] = rope_apply(column_block(k_all, h * qk, qk), 0, w.rope_theta, g, spec.d_head);
  }
  Matrix context(t_len, hs * dv);
  std::vector<double> probs(t_len);
  for (std::size_t h = 0; h < hs; ++h) {
    const std::size_t kv = h / group;
    std::span<const std::size_t> g;
    if (!gather_per_kv_head.empty()) g = gather_per_kv_head[kv];
    const Matrix q = rope_apply(column_block(q_all, h * qk, qk), 0, w.rope_theta, g, spec.d_head);
    const Matrix& k = k_heads[kv];
    for (std::size_t t = 0; t < t_len; ++t) {
      double max_logit = -INFINITY;
      for (std::size_t s = 0; s <= t; ++s) {
        double dot = 0.0;
        for (std::size_t c = 0; c < qk; ++c) dot += q(t, c) * k(s, c);
        probs[s] = dot * scale;
        max_logit = std::max(max_logit, probs[s]);
      }
      double denom = 0.0;
      for (std::size_t s = 0; s <= t; ++s) {
        probs[s] = std::exp(probs[s] - max_logit);
        denom += probs[s];
      }
      for (std::size_t s = 0; s <= t; ++s) {
        const double p = probs[s] / denom;
        for (std::size_t c = 0; c < dv; ++c) context(t, h * dv + c) += p * v_all(s, kv * dv + c);
      }
    }
    if (capture) out.capture.q_heads.push_back(q);
  }
  out.y = matmul(context, w.w_o);
  if (capture) {
    out.capture.hidden_in = x;
    out.capture.k_heads = std::move(k_heads);
    out.capture.attn_context = std::move(context);
  }
  return out;
}

Matrix rms_normalize(const Matrix& x, std::size_t width, double eps) {
  if (width == 0 || x.cols() % width != 0) throw ShapeError("rms_normalize: width does not divide columns");
  Matrix out = x;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto row = out.row(t);
    for (std::size_t start = 0; start < x.cols(); start += width) {
      double ms = 0.0;
      for (std::size_t c = 0; c < width; ++c) ms += row[start + c] * row[start + c];
      const double inv = 1.0 / std::sqrt(ms / static_cast<double>(width) + eps);
      for (std::size_t c = 0; c < width; ++c) row[start + c] *= inv;
    }
  }
  return out;
}

BlockOutput mamba_forward(const Matrix& x, const BlockSpec& spec, const MambaWeights& w, bool capture,
                          MambaState* state) {
  const std::size_t d_h = x.cols();
  const std::size_t hm = spec.n_ssm_heads;
  const std::size_t gs = spec.n_ssm_groups;
  if (gs == 0 || hm % gs != 0) throw ShapeError("mamba_forward: n_ssm_heads not divisible by n_ssm_groups");
  const std::size_t p_dim = divide_exact(w.w_x.cols(), hm, "w_x columns");
  const std::size_t n_dim = divide_exact(w.w_b.cols(), gs, "w_b columns");
  const std::size_t k = spec.conv_width;
  expect_shape(w.w_z, d_h, hm * p_dim, "w_z");
  expect_shape(w.w_x, d_h, hm * p_dim, "w_x");
  expect_shape(w.w_b, d_h, gs * n_dim, "w_b");
  expect_shape(w.w_c, d_h, gs * n_dim, "w_c");
  expect_shape(w.w_dt, d_h, hm, "w_dt");
  expect_shape(w.w_out, hm * p_dim, d_h, "w_out");
  expect_shape(w.conv_x, hm * p_dim, k, "conv_x");
  expect_shape(w.conv_b, gs * n_dim, k, "conv_b");
  expect_shape(w.conv_c, gs * n_dim, k, "conv_c");
  if (w.a_log.size() != hm || w.dt_bias.size() != hm) throw ShapeError("mamba_forward: per-head parameter count");

  const std::size_t t_len = x.rows();
  const std::size_t xc = hm * p_dim;
  const std::size_t bc = gs * n_dim;
  const std::size_t channels = xc + 2 * bc;

  const Matrix z = matmul(x, w.w_z);
  const Matrix parts[] = {matmul(x, w.w_x), matmul(x, w.w_b), matmul(x, w.w_c)};
  const Matrix pre = hstack(parts);
  const Matrix kernels_parts[] = {w.conv_x, w.conv_b, w.conv_c};
  const Matrix kernels = vstack(kernels_parts);
  const Matrix dt_raw = matmul(x, w.w_dt);

  // Causal depthwise conv over [previous tail; pre], then SiLU.
  Matrix padded(k - 1 + t_len, channels);
  if (state != nullptr && !state->conv_tail.empty()) {
    expect_shape(state->conv_tail, k - 1, channels, "conv_tail");
    set_row_block(padded, 0, state->conv_tail);
  }
  set_row_block(padded, k - 1, pre);
  Matrix act(t_len, channels);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += kernels(c, j) * padded(t + j, c);
      act(t, c) = silu(acc);
    }
  }
  if (state != nullptr) state->conv_tail = row_block(padded, t_len, k - 1);

  Matrix delta(t_len, hm);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t h = 0; h < hm; ++h) delta(t, h) = softplus(dt_raw(t, h) + w.dt_bias[h]);

  std::vector<Matrix> ssm(hm, Matrix(n_dim, p_dim));
  if (state != nullptr && !state->ssm.empty()) {
    if (state->ssm.size() != hm) throw ShapeError("mamba_forward: carried state head count");
    for (std::size_t h = 0; h < hm; ++h) {
      expect_shape(state->ssm[h], n_dim, p_dim, "ssm state");
      ssm[h] = state->ssm[h];
    }
  }

  BlockOutput out;
  if (capture) out.capture.ssm_states.assign(hm, Matrix(t_len * n_dim, p_dim));
  Matrix gated(t_len, xc);
  const std::size_t per_group = hm / gs;
  for (std::size_t h = 0; h < hm; ++h) {
    const std::size_t g = h / per_group;
    const double a = -std::exp(w.a_log[h]);
    Matrix& s = ssm[h];
    for (std::size_t t = 0; t < t_len; ++t) {
      const double dt = delta(t, h);
      const double decay = std::exp(dt * a);
      for (std::size_t n = 0; n < n_dim; ++n) {
        const double bn = dt * act(t, xc + g * n_dim + n);
        auto srow = s.row(n);
        for (std::size_t p = 0; p < p_dim; ++p) srow[p] = decay * srow[p] + bn * act(t, h * p_dim + p);
      }
      for (std::size_t p = 0; p < p_dim; ++p) {
        double y = 0.0;
        for (std::size_t n = 0; n < n_dim; ++n) y += act(t, xc + bc + g * n_dim + n) * s(n, p);
        gated(t, h * p_dim + p) = y * silu(z(t, h * p_dim + p));
      }
      if (capture) set_row_block(out.capture.ssm_states[h], t * n_dim, s);
    }
  }
  if (state != nullptr) state->ssm = ssm;

  Matrix normed = rms_normalize(gated, p_dim, kGateNormEps);
  out.y = matmul(normed, w.w_out);
  if (capture) {
    out.capture.hidden_in = x;
    out.capture.delta = std::move(delta);
    out.capture.ssm_b = column_block(act, xc, bc);
    out.capture.ssm_c = column_block(act, xc + bc, bc);
    out.capture.mamba_gated = std::move(normed);
  }
  return out;
}

BlockIoPair block_io_record(const Matrix& x_in, const Matrix& y_out) {
  require_same_shape(x_in, y_out, "block_io_record");
  return {x_in, y_out};
}

Matrix random_matrix(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

MlpWeights random_mlp_weights(const BlockSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const double s_in = 1.0 / std::sqrt(static_cast<double>(spec.d_hidden));
  const double s_int = 1.0 / std::sqrt(static_cast<double>(spec.d_intermediate));
  MlpWeights w;
  w.w_up = random_matrix(spec.d_hidden, spec.d_intermediate, s_in, rng);
  w.w_gate = random_matrix(spec.d_hidden, spec.d_intermediate, s_in, rng);
  w.w_down = random_matrix(spec.d_intermediate, spec.d_hidden, s_int, rng);
  return w;
}

AttnWeights random_attn_weights(const BlockSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const double s_in = 1.0 / std::sqrt(static_cast<double>(spec.d_hidden));
  const double s_o = 1.0 / std::sqrt(static_cast<double>(spec.n_heads * spec.d_head));
  AttnWeights w;
  w.w_q = random_matrix(spec.d_hidden, spec.n_heads * spec.d_head, s_in, rng);
  w.w_k = random_matrix(spec.d_hidden, spec.n_kv_heads * spec.d_head, s_in, rng);
  w.w_v = random_matrix(spec.d_hidden, spec.n_kv_heads * spec.d_head, s_in, rng);
  w.w_o = random_matrix(spec.n_heads * spec.d_head, spec.d_hidden, s_o, rng);
  return w;
}

MambaWeights random_mamba_weights(const BlockSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const double s_in = 1.0 / std::sqrt(static_cast<double>(spec.d_hidden));
  const std::size_t xc = spec.n_ssm_heads * spec.d_head;
  const std::size_t bc = spec.n_ssm_groups * spec.d_state;
  MambaWeights w;
  w.w_z = random_matrix(spec.d_hidden, xc, s_in, rng);
  w.w_x = random_matrix(spec.d_hidden, xc, s_in, rng);
  w.w_b = random_matrix(spec.d_hidden, bc, s_in, rng);
  w.w_c = random_matrix(spec.d_hidden, bc, s_in, rng);
  w.w_dt = random_matrix(spec.d_hidden, spec.n_ssm_heads, 0.5 * s_in, rng);
  w.w_out = random_matrix(xc, spec.d_hidden, 1.0 / std::sqrt(static_cast<double>(xc)), rng);
  std::uniform_real_distribution<double> a_dist(1.0, 4.0);
  std::uniform_real_distribution<double> dt_dist(std::log(0.01), std::log(0.1));
  for (std::size_t h = 0; h < spec.n_ssm_heads; ++h) {
    w.a_log.push_back(std::log(a_dist(rng)));
    const double dt = std::exp(dt_dist(rng));
    w.dt_bias.push_back(std::log(std::expm1(dt)));
  }
  const double s_conv = 1.0 / std::sqrt(static_cast<double>(spec.conv_width));
  w.conv_x = random_matrix(xc, spec.conv_width, s_conv, rng);
  w.conv_b = random_matrix(bc, spec.conv_width, s_conv, rng);
  w.conv_c = random_matrix(bc, spec.conv_width, s_conv, rng);
  return w;
}

}  // namespace sortq

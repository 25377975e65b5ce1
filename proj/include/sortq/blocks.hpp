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

#ifndef SORTQ_BLOCKS_HPP
#define SORTQ_BLOCKS_HPP

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "sortq/linalg.hpp"
#include "sortq/matrix.hpp"

namespace sortq {

/// Architecture dimensions for one block. Weights may carry pruned shapes;
/// a BlockSpec always describes the unpruned architecture (RoPE frequencies
/// and the attention scale are derived from d_head).
struct BlockSpec {
  std::size_t d_hidden = 64;
  std::size_t d_head = 16;
  std::size_t d_intermediate = 128;
  std::size_t d_state = 16;
  std::size_t n_heads = 4;
  std::size_t n_kv_heads = 2;
  std::size_t n_ssm_heads = 4;
  std::size_t n_ssm_groups = 2;
  std::size_t conv_width = 4;

  void validate() const;
  std::size_t queries_per_kv() const { return n_heads / n_kv_heads; }
  std::size_t ssm_heads_per_group() const { return n_ssm_heads / n_ssm_groups; }

  bool operator==(const BlockSpec&) const = default;
};

/// Default desk-scale geometry used by tests and the toy model.
BlockSpec toy_block_spec();

struct MlpWeights {
  Matrix w_up;    // D_h x D_int
  Matrix w_gate;  // D_h x D_int
  Matrix w_down;  // D_int x D_h

  std::size_t d_int() const { return w_up.cols(); }
};

struct AttnWeights {
  Matrix w_q;  // D_h x (H_s * qk_dim)
  Matrix w_k;  // D_h x (H_kv * qk_dim)
  Matrix w_v;  // D_h x (H_kv * v_dim)
  Matrix w_o;  // (H_s * v_dim) x D_h
  double rope_theta = 10000.0;
};

struct MambaWeights {
  Matrix w_z;    // D_h x (H_m * P)
  Matrix w_x;    // D_h x (H_m * P)
  Matrix w_b;    // D_h x (G_s * N)
  Matrix w_c;    // D_h x (G_s * N)
  Matrix w_dt;   // D_h x H_m, never sorted or pruned
  Matrix w_out;  // (H_m * P) x D_h
  std::vector<double> a_log;    // H_m
  std::vector<double> dt_bias;  // H_m
  // Depthwise causal conv kernels, one row per channel, conv_width taps.
  // Tap conv_width-1 multiplies the current token.
  Matrix conv_x;  // (H_m * P) x k
  Matrix conv_b;  // (G_s * N) x k
  Matrix conv_c;  // (G_s * N) x k
};

/// Intermediate activations recorded during a forward pass. Empty matrices
/// mean "not captured by this block type".
struct CalibrationCapture {
  Matrix hidden_in;         // T x D_h, the block input
  Matrix mlp_intermediate;  // T x D_int, input of w_down
  std::vector<Matrix> q_heads;  // per query head, T x qk_dim, post-RoPE
  std::vector<Matrix> k_heads;  // per kv head, T x qk_dim, post-RoPE
  Matrix attn_context;      // T x (H_s * v_dim), input of w_o
  Matrix delta;             // T x H_m, post-softplus step sizes
  Matrix ssm_b;             // T x (G_s * N), post conv + SiLU
  Matrix ssm_c;             // T x (G_s * N), post conv + SiLU
  std::vector<Matrix> ssm_states;  // per head, (T * N) x P, row t*N + s
  Matrix mamba_gated;       // T x (H_m * P), input of w_out
};

struct BlockOutput {
  Matrix y;
  CalibrationCapture capture;
};

double silu(double x);
double softplus(double x);

BlockOutput mlp_forward(const Matrix& x, const MlpWeights& w, bool capture = false);

/// Half-split rotary embedding. Pair j of the output rotates channels
/// (j, j + D/2) by pos * theta_base^(-2 g(j) / freq_dim), where g is `gather`
/// (identity when empty) and freq_dim defaults to x.cols(). A gather shorter
/// than the unpruned half dimension selects the surviving pairs.
Matrix rope_apply(const Matrix& x, std::size_t position_offset, double theta_base,
                  std::span<const std::size_t> gather = {}, std::size_t freq_dim = 0);

/// Causal (G)MHSA. `gather_per_kv_head` is empty or holds one RoPE gather
/// index per kv head, shared by that head's query group.
BlockOutput attn_forward(const Matrix& x, const BlockSpec& spec, const AttnWeights& w,
                         std::span<const IndexVector> gather_per_kv_head = {}, bool capture = false);

/// Carried recurrent state so a sequence can be evaluated in chunks.
struct MambaState {
  Matrix conv_tail;           // (k - 1) x channels of [x | b | c] pre-conv inputs
  std::vector<Matrix> ssm;    // per head, N x P
};

BlockOutput mamba_forward(const Matrix& x, const BlockSpec& spec, const MambaWeights& w,
                          bool capture = false, MambaState* state = nullptr);

struct BlockIoPair {
  Matrix x;
  Matrix y;
};

BlockIoPair block_io_record(const Matrix& x_in, const Matrix& y_out);

/// Scale-free RMS normalization of each row over `width`-wide segments.
Matrix rms_normalize(const Matrix& x, std::size_t width, double eps);

MlpWeights random_mlp_weights(const BlockSpec& spec, std::mt19937_64& rng);
AttnWeights random_attn_weights(const BlockSpec& spec, std::mt19937_64& rng);
MambaWeights random_mamba_weights(const BlockSpec& spec, std::mt19937_64& rng);
Matrix random_matrix(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng);

}  // namespace sortq

#endif  // SORTQ_BLOCKS_HPP

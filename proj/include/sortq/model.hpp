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

#ifndef SORTQ_MODEL_HPP
#define SORTQ_MODEL_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sortq/blocks.hpp"
#include "sortq/sorting.hpp"

namespace sortq {

enum class BlockKind { mlp, attention, mamba };

std::string to_string(BlockKind kind);
BlockKind block_kind_from_string(const std::string& s);

/// Pre-norm residual layer: h += block(rms_norm(h) * norm_scale).
struct Layer {
  BlockSpec spec;
  std::vector<double> norm_scale;  // D_h
  std::variant<MlpWeights, AttnWeights, MambaWeights> weights;
  std::vector<IndexVector> rope_gather;  // attention only; empty = identity

  BlockKind kind() const { return static_cast<BlockKind>(weights.index()); }
  AttnMode attn_mode() const { return spec.n_heads == spec.n_kv_heads ? AttnMode::mhsa : AttnMode::gqa; }
};

/// Token embedding, a stack of residual layers, final norm and output head.
struct Model {
  std::size_t vocab = 0;
  std::size_t d_hidden = 0;
  Matrix embedding;  // vocab x D_h
  std::vector<Layer> layers;
  std::vector<double> final_norm;  // D_h
  Matrix lm_head;                  // D_h x vocab
  double norm_eps = 1e-6;
  // Set once a Hadamard rotation is folded into the residual stream; raw
  // hidden-state inputs are rotated to match.
  bool residual_hadamard = false;

  void validate() const;
};

/// Per-layer captures and block input/output pairs from one forward pass.
struct ForwardTrace {
  std::vector<CalibrationCapture> captures;
  std::vector<BlockIoPair> io;
};

/// Calibration or evaluation inputs: token streams or raw hidden states.
struct CalibrationSet {
  std::vector<std::vector<int>> tokens;
  std::vector<Matrix> hidden;

  std::size_t size() const { return tokens.size() + hidden.size(); }
  bool empty() const { return size() == 0; }
};

Matrix rms_norm(const Matrix& x, std::span<const double> scale, double eps);
Matrix embed_tokens(const Model& model, std::span<const int> tokens);
/// Initial hidden states for every sequence in the set, checked against D_h.
std::vector<Matrix> model_inputs(const Model& model, const CalibrationSet& set);

BlockOutput layer_block_forward(const Layer& layer, const Matrix& x, bool capture);
/// Returns logits (T x vocab) from initial hidden states.
Matrix forward_hidden(const Model& model, const Matrix& h0, ForwardTrace* trace = nullptr, bool capture = false);
Matrix forward_tokens(const Model& model, std::span<const int> tokens, ForwardTrace* trace = nullptr,
                      bool capture = false);

/// Random model with the given layer layout. Layout entries: "mlp", "attn"
/// (GQA with the toy geometry), "mhsa" (n_kv_heads = n_heads), "mamba".
Model make_toy_model(std::uint64_t seed, std::span<const std::string> layout, std::size_t vocab = 256,
                     BlockSpec spec = toy_block_spec());
std::vector<std::string> default_toy_layout();

CalibrationSet make_token_set(std::uint64_t seed, std::size_t count, std::size_t seq_len, std::size_t vocab);

}  // namespace sortq

#endif  // SORTQ_MODEL_HPP

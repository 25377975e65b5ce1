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

#include "sortq/model.hpp"

#include <cmath>
#include <random>

#include "sortq/errors.hpp"
#include "sortq/fusion.hpp"

namespace sortq {

std::string to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::mlp: return "mlp";
    case BlockKind::attention: return "attention";
    case BlockKind::mamba: return "mamba";
  }
  return "unknown";
}

BlockKind block_kind_from_string(const std::string& s) {
  if (s == "mlp") return BlockKind::mlp;
  if (s == "attention") return BlockKind::attention;
  if (s == "mamba") return BlockKind::mamba;
  throw FormatError("unknown block kind '" + s + "'");
}

void Model::validate() const {
  if (embedding.rows() != vocab || embedding.cols() != d_hidden) throw ShapeError("embedding shape");
  if (lm_head.rows() != d_hidden || lm_head.cols() != vocab) throw ShapeError("lm_head shape");
  if (final_norm.size() != d_hidden) throw ShapeError("final norm size");
  for (const auto& layer : layers) {
    layer.spec.validate();
    if (layer.spec.d_hidden != d_hidden) throw ShapeError("layer d_hidden != model d_hidden");
    if (layer.norm_scale.size() != d_hidden) throw ShapeError("layer norm size");
  }
}

Matrix rms_norm(const Matrix& x, std::span<const double> scale, double eps) {
  if (scale.size() != x.cols()) throw ShapeError("rms_norm: scale size");
  Matrix out = rms_normalize(x, x.cols(), eps);
  for (std::size_t t = 0; t < out.rows(); ++t) {
    auto r = out.row(t);
    for (std::size_t c = 0; c < r.size(); ++c) r[c] *= scale[c];
  }
  return out;
}

Matrix embed_tokens(const Model& model, std::span<const int> tokens) {
  Matrix h(tokens.size(), model.d_hidden);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const int tok = tokens[t];
    if (tok < 0 || static_cast<std::size_t>(tok) >= model.vocab)
      throw ShapeError("token id " + std::to_string(tok) + " outside vocabulary");
    for (std::size_t c = 0; c < model.d_hidden; ++c) h(t, c) = model.embedding(static_cast<std::size_t>(tok), c);
  }
  return h;
}

std::vector<Matrix> model_inputs(const Model& model, const CalibrationSet& set) {
  std::vector<Matrix> out;
  out.reserve(set.size());
  for (const auto& seq : set.tokens) out.push_back(embed_tokens(model, seq));
  for (const auto& h : set.hidden) {
    if (h.cols() != model.d_hidden) {
      throw ShapeError("calibration hidden state has " + std::to_string(h.cols()) + " columns, model expects " +
                       std::to_string(model.d_hidden));
    }
    out.push_back(model.residual_hadamard ? matmul(h, hadamard_matrix(model.d_hidden)) : h);
  }
  return out;
}

BlockOutput layer_block_forward(const Layer& layer, const Matrix& x, bool capture) {
  switch (layer.kind()) {
    case BlockKind::mlp: return mlp_forward(x, std::get<MlpWeights>(layer.weights), capture);
    case BlockKind::attention:
      return attn_forward(x, layer.spec, std::get<AttnWeights>(layer.weights), layer.rope_gather, capture);
    case BlockKind::mamba: return mamba_forward(x, layer.spec, std::get<MambaWeights>(layer.weights), capture);
  }
  throw ShapeError("unknown block kind");
}

Matrix forward_hidden(const Model& model, const Matrix& h0, ForwardTrace* trace, bool capture) {
  if (h0.cols() != model.d_hidden) throw ShapeError("forward: hidden width mismatch");
  Matrix h = h0;
  for (const auto& layer : model.layers) {
    const Matrix xn = rms_norm(h, layer.norm_scale, model.norm_eps);
    BlockOutput out = layer_block_forward(layer, xn, capture && trace != nullptr);
    Matrix next = add(h, out.y);
    if (trace != nullptr) {
      trace->io.push_back(block_io_record(h, next));
      if (capture) trace->captures.push_back(std::move(out.capture));
    }
    h = std::move(next);
  }
  return matmul(rms_norm(h, model.final_norm, model.norm_eps), model.lm_head);
}

Matrix forward_tokens(const Model& model, std::span<const int> tokens, ForwardTrace* trace, bool capture) {
  return forward_hidden(model, embed_tokens(model, tokens), trace, capture);
}

std::vector<std::string> default_toy_layout() { return {"attn", "mlp", "mamba", "mhsa", "mlp", "mamba"}; }

Model make_toy_model(std::uint64_t seed, std::span<const std::string> layout, std::size_t vocab, BlockSpec spec) {
  spec.validate();
  std::mt19937_64 rng(seed);
  Model m;
  m.vocab = vocab;
  m.d_hidden = spec.d_hidden;
  m.embedding = random_matrix(vocab, spec.d_hidden, 1.0, rng);
  std::uniform_real_distribution<double> gamma(0.5, 1.5);
  for (const auto& name : layout) {
    Layer layer;
    layer.spec = spec;
    for (std::size_t c = 0; c < spec.d_hidden; ++c) layer.norm_scale.push_back(gamma(rng));
    if (name == "mlp") {
      layer.weights = random_mlp_weights(spec, rng);
    } else if (name == "attn" || name == "mhsa") {
      if (name == "mhsa") layer.spec.n_kv_heads = layer.spec.n_heads;
      layer.weights = random_attn_weights(layer.spec, rng);
    } else if (name == "mamba") {
      layer.weights = random_mamba_weights(spec, rng);
    } else {
      throw FormatError("unknown layer type '" + name + "'");
    }
    m.layers.push_back(std::move(layer));
  }
  for (std::size_t c = 0; c < spec.d_hidden; ++c) m.final_norm.push_back(gamma(rng));
  m.lm_head = random_matrix(spec.d_hidden, vocab, 1.0 / std::sqrt(static_cast<double>(spec.d_hidden)), rng);
  return m;
}

CalibrationSet make_token_set(std::uint64_t seed, std::size_t count, std::size_t seq_len, std::size_t vocab) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> tok(0, static_cast<int>(vocab) - 1);
  CalibrationSet set;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<int> seq(seq_len);
    for (int& t : seq) t = tok(rng);
    set.tokens.push_back(std::move(seq));
  }
  return set;
}

}  // namespace sortq

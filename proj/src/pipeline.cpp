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

#include "sortq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "sortq/errors.hpp"
#include "sortq/linalg.hpp"
#include "sortq/quantizer.hpp"
#include "sortq/sorting.hpp"

namespace sortq {

namespace {

constexpr std::size_t kSelfCheckSequences = 4;

std::vector<std::size_t> prunable_dims(const LayerRecord& rec) {
  switch (rec.kind) {
    case BlockKind::mlp: return {rec.spec.d_intermediate};
    case BlockKind::attention: return {rec.spec.d_head, rec.spec.d_head};
    case BlockKind::mamba: return {rec.spec.d_state, rec.spec.d_head};
  }
  return {};
}

CalibrationSet head_of(const CalibrationSet& set, std::size_t n) {
  CalibrationSet out;
  for (std::size_t i = 0; i < set.tokens.size() && out.size() < n; ++i) out.tokens.push_back(set.tokens[i]);
  for (std::size_t i = 0; i < set.hidden.size() && out.size() < n; ++i) out.hidden.push_back(set.hidden[i]);
  return out;
}

std::vector<Matrix> checked_inputs(const Model& model, const CalibrationSet& set) {
  try {
    return model_inputs(model, set);
  } catch (const ShapeError& e) {
    throw CalibrationError(std::string("calibration shape mismatch: ") + e.what());
  }
}

// Sorts one layer in place and returns its manifest record.
LayerRecord sort_layer(Layer& layer, std::span<const CalibrationCapture> caps, double lambda) {
  LayerRecord rec;
  rec.kind = layer.kind();
  rec.spec = layer.spec;
  switch (layer.kind()) {
    case BlockKind::mlp: {
      auto r = sort_mlp(std::get<MlpWeights>(layer.weights), caps, lambda);
      layer.weights = std::move(r.weights);
      rec.sort_records.push_back(std::move(r.record));
      break;
    }
    case BlockKind::attention: {
      const AttnMode mode = layer.attn_mode();
      auto qk = sort_qk(std::get<AttnWeights>(layer.weights), layer.spec, caps, mode);
      auto vo = sort_vo(qk.weights, layer.spec, caps, mode);
      rec.rope_theta = vo.weights.rope_theta;
      layer.weights = std::move(vo.weights);
      layer.rope_gather = qk.rope_gather;
      rec.rope_gather = std::move(qk.rope_gather);
      rec.sort_records = std::move(qk.records);
      rec.sort_records.insert(rec.sort_records.end(), vo.records.begin(), vo.records.end());
      rec.spectrum = std::move(vo.spectrum.per_head);
      break;
    }
    case BlockKind::mamba: {
      auto bc = sort_bc(std::get<MambaWeights>(layer.weights), layer.spec, caps);
      auto zxo = sort_zxo(bc.weights, layer.spec, caps, lambda);
      layer.weights = std::move(zxo.weights);
      rec.sort_records = std::move(bc.records);
      rec.sort_records.insert(rec.sort_records.end(), zxo.records.begin(), zxo.records.end());
      break;
    }
  }
  return rec;
}

ArtifactTensor& find_tensor(ModelArtifact& a, const std::string& name) {
  for (auto& t : a.tensors)
    if (t.name == name) return t;
  throw FormatError("artifact has no tensor '" + name + "'");
}

Matrix symmetric_gather(const Matrix& c, std::span<const std::size_t> idx) {
  return gather_columns(gather_rows(c, idx), idx);
}

class LayerQuantizer {
 public:
  explicit LayerQuantizer(const CompressConfig& cfg) : cfg_(cfg) {}

  QuantizedTensor operator()(const Matrix& w, const Matrix& c, std::span<const double> column_scale = {}) const {
    if (cfg_.gptq) return gptq_compensate(w, c, cfg_.bits, cfg_.group_size, cfg_.damp, column_scale).tensor;
    return quantize_group_sym(w, cfg_.bits, cfg_.group_size, column_scale);
  }

  // Rows interleaved rank-major across heads before quantization.
  ArtifactTensor head_rows(const std::string& name, const Matrix& w, const Matrix& c, std::size_t heads) const {
    const IndexVector perm = interleave_rows(w.rows(), heads);
    return ArtifactTensor::make_quantized(name, (*this)(gather_rows(w, perm), symmetric_gather(c, perm)), heads);
  }

 private:
  const CompressConfig& cfg_;
};

// QSVD value columns: quantize the unscaled factor, fold sigma into the scales.
QuantizedTensor quantize_qsvd_values(const LayerQuantizer& quant, const Matrix& w_v, const Matrix& c,
                                     const LayerRecord& rec) {
  const std::size_t d = rec.spec.d_head;
  std::vector<double> sigma(w_v.cols(), 1.0);
  for (std::size_t h = 0; h < rec.spectrum.size(); ++h)
    for (std::size_t j = 0; j < rec.spectrum[h].size() && j < d; ++j)
      if (rec.spectrum[h][j] > 0.0) sigma[h * d + j] = rec.spectrum[h][j];
  std::vector<double> inv(sigma.size());
  std::transform(sigma.begin(), sigma.end(), inv.begin(), [](double s) { return 1.0 / s; });
  return quant(scale_columns(w_v, inv), c, sigma);
}

void quantize_layers(ModelArtifact& a, const Model& fused, const CalibrationSet& calib, const CompressConfig& cfg) {
  const std::size_t n_layers = fused.layers.size();
  std::vector<CorrelationStats> in_stats, mid_stats;
  for (const auto& layer : fused.layers) {
    in_stats.emplace_back(fused.d_hidden);
    std::size_t mid = 0;
    if (const auto* w = std::get_if<MlpWeights>(&layer.weights)) mid = w->w_down.rows();
    if (const auto* w = std::get_if<AttnWeights>(&layer.weights)) mid = w->w_o.rows();
    if (const auto* w = std::get_if<MambaWeights>(&layer.weights)) mid = w->w_out.rows();
    mid_stats.emplace_back(mid);
  }
  for (const auto& h0 : checked_inputs(fused, calib)) {
    ForwardTrace trace;
    (void)forward_hidden(fused, h0, &trace, true);
    for (std::size_t l = 0; l < n_layers; ++l) {
      const auto& cap = trace.captures[l];
      in_stats[l].accumulate(cap.hidden_in);
      switch (fused.layers[l].kind()) {
        case BlockKind::mlp: mid_stats[l].accumulate(cap.mlp_intermediate); break;
        case BlockKind::attention: mid_stats[l].accumulate(cap.attn_context); break;
        case BlockKind::mamba: mid_stats[l].accumulate(cap.mamba_gated); break;
      }
    }
  }

  const LayerQuantizer quant(cfg);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Layer& layer = fused.layers[l];
    const Matrix c_in = in_stats[l].finalize();
    const Matrix c_mid = mid_stats[l].finalize();
    auto put = [&](const std::string& suffix, QuantizedTensor q) {
      const std::string name = layer_tensor_name(l, suffix);
      find_tensor(a, name) = ArtifactTensor::make_quantized(name, std::move(q));
    };
    if (const auto* w = std::get_if<MlpWeights>(&layer.weights)) {
      put("mlp.up", quant(w->w_up, c_in));
      put("mlp.gate", quant(w->w_gate, c_in));
      put("mlp.down", quant(w->w_down, c_mid));
    } else if (const auto* w = std::get_if<AttnWeights>(&layer.weights)) {
      put("attn.q", quant(w->w_q, c_in));
      put("attn.k", quant(w->w_k, c_in));
      put("attn.v", quantize_qsvd_values(quant, w->w_v, c_in, a.layers[l]));
      const std::string o = layer_tensor_name(l, "attn.o");
      find_tensor(a, o) = quant.head_rows(o, w->w_o, c_mid, layer.spec.n_heads);
    } else if (const auto* w = std::get_if<MambaWeights>(&layer.weights)) {
      put("mamba.z", quant(w->w_z, c_in));
      put("mamba.x", quant(w->w_x, c_in));
      put("mamba.b", quant(w->w_b, c_in));
      put("mamba.c", quant(w->w_c, c_in));
      put("mamba.dt", quant(w->w_dt, c_in));
      // Depthwise kernels have no shared input; round-to-nearest per tap.
      auto conv = [&](const std::string& suffix, const Matrix& k, std::size_t heads) {
        const std::string name = layer_tensor_name(l, suffix);
        const Matrix stored = gather_rows(k, interleave_rows(k.rows(), heads));
        find_tensor(a, name) =
            ArtifactTensor::make_quantized(name, quantize_group_sym(stored, cfg.bits, cfg.group_size), heads);
      };
      conv("mamba.conv_x", w->conv_x, layer.spec.n_ssm_heads);
      conv("mamba.conv_b", w->conv_b, layer.spec.n_ssm_groups);
      conv("mamba.conv_c", w->conv_c, layer.spec.n_ssm_groups);
      const std::string out = layer_tensor_name(l, "mamba.out");
      find_tensor(a, out) = quant.head_rows(out, w->w_out, c_mid, layer.spec.n_ssm_heads);
    }
  }
  // Lookup table and output head: plain round-to-nearest.
  find_tensor(a, "embedding") =
      ArtifactTensor::make_quantized("embedding", quantize_group_sym(fused.embedding, cfg.bits, cfg.group_size));
  find_tensor(a, "lm_head") =
      ArtifactTensor::make_quantized("lm_head", quantize_group_sym(fused.lm_head, cfg.bits, cfg.group_size));
}

// ---- pruning helpers ----

bool is_prefix(std::span<const std::size_t> idx) {
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (idx[i] != i) return false;
  return true;
}

void keep_columns(ArtifactTensor& t, std::span<const std::size_t> idx) {
  if (t.dtype == TensorDtype::quantized) {
    t.q = is_prefix(idx) ? prune_packed(t.q, idx.size()) : select_packed_columns(t.q, idx);
  } else {
    t.dense = gather_columns(t.dense, idx);
  }
}

IndexVector head_prefix(std::size_t heads, std::size_t per_head, std::size_t keep) {
  IndexVector idx;
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t j = 0; j < keep; ++j) idx.push_back(h * per_head + j);
  return idx;
}

// Keeps (j, j + D/2) for j < keep/2 inside every head.
IndexVector pair_prefix(std::size_t heads, std::size_t per_head, std::size_t keep) {
  IndexVector idx;
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t j = 0; j < keep / 2; ++j) idx.push_back(h * per_head + j);
    for (std::size_t j = 0; j < keep / 2; ++j) idx.push_back(h * per_head + per_head / 2 + j);
  }
  return idx;
}

void keep_head_rows(ArtifactTensor& t, std::size_t heads, std::size_t per_head, std::size_t keep) {
  if (t.interleave == heads && heads > 0) {
    if (t.dtype == TensorDtype::quantized) {
      t.q = prune_packed_rows(t.q, keep * heads);
    } else {
      t.dense = row_block(t.dense, 0, keep * heads);
    }
    return;
  }
  if (t.interleave > 1) throw FormatError("tensor '" + t.name + "' interleave does not match its head count");
  if (t.dtype == TensorDtype::quantized) {
    if (heads != 1) throw UnsupportedError("per-head row prune needs rank-major layout for '" + t.name + "'");
    t.q = prune_packed_rows(t.q, keep);
    return;
  }
  t.dense = gather_rows(t.dense, head_prefix(heads, per_head, keep));
}

double row_energy(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return s;
}

std::vector<double> log_softmax_row(std::span<const double> row) {
  const double mx = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double v : row) z += std::exp(v - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i] - lz;
  return out;
}

}  // namespace

ModelArtifact compress(const Model& model, const CalibrationSet& calib, const CompressConfig& cfg) {
  model.validate();
  cfg.fusion.validate();
  if (calib.empty()) throw CalibrationError("compress: calibration set is empty");
  if (model.residual_hadamard) throw UnsupportedError("compress: model already carries a residual rotation");
  for (const auto& layer : model.layers)
    if (!layer.rope_gather.empty()) throw UnsupportedError("compress: model is already sorted");

  // Pass 1: captures for sorting and block influence.
  const std::size_t n_layers = model.layers.size();
  const auto inputs = checked_inputs(model, calib);
  std::vector<std::vector<CalibrationCapture>> caps(n_layers);
  std::vector<double> bi(n_layers, 0.0);
  for (const auto& h0 : inputs) {
    ForwardTrace trace;
    (void)forward_hidden(model, h0, &trace, true);
    for (std::size_t l = 0; l < n_layers; ++l) {
      bi[l] += block_influence(trace.io[l].x, trace.io[l].y);
      caps[l].push_back(std::move(trace.captures[l]));
    }
  }
  for (double& b : bi) b /= static_cast<double>(inputs.size());

  Model sorted = model;
  std::vector<LayerRecord> records;
  for (std::size_t l = 0; l < n_layers; ++l) {
    records.push_back(sort_layer(sorted.layers[l], caps[l], cfg.lambda));
    std::vector<CalibrationCapture>().swap(caps[l]);
  }

  const PruningPlan plan = make_pruning_plan(bi, cfg.rates, cfg.epsilon, cfg.rate_cap);
  if (cfg.mask_hook && cfg.mask_steps > 0 && !plan.global_rates.empty()) {
    MaskSampler sampler(plan, cfg.seed);
    for (std::size_t step = 0; step < cfg.mask_steps; ++step) {
      const double rate = sampler.draw_rate();
      for (std::size_t l = 0; l < n_layers; ++l) cfg.mask_hook(step, l, masks_for_rate(plan, rate, l, prunable_dims(records[l])));
    }
  }

  const Model fused = apply_fusion(sorted, cfg.fusion);
  const double residual = relative_logit_error(fused, model, head_of(calib, kSelfCheckSequences));

  ModelArtifact a = artifact_from_model(fused, cfg.quantize ? TensorDtype::f16 : TensorDtype::f32);
  a.layers = std::move(records);
  a.plan = plan;
  a.fusion = cfg.fusion;
  a.self_check = residual;
  if (cfg.fusion.norm_fusion) {
    std::erase_if(a.tensors, [](const ArtifactTensor& t) {
      return t.name == "final_norm" || (t.name.size() > 5 && t.name.ends_with(".norm"));
    });
  }
  if (cfg.quantize) {
    a.kind = ArtifactKind::quantized;
    a.quant = QuantConfig{cfg.bits, cfg.group_size, cfg.damp};
    quantize_layers(a, fused, calib, cfg);
  }
  a.validate();
  return a;
}

KeptDims kept_dims(const BlockSpec& spec, double layer_rate) {
  KeptDims k;
  k.d_int = kept_channel_count(layer_rate, spec.d_intermediate);
  // q/k channels go in RoPE pairs; an odd pruned count rounds down.
  k.qk = spec.d_head - 2 * (pruned_channel_count(layer_rate, spec.d_head) / 2);
  k.v = kept_channel_count(layer_rate, spec.d_head);
  k.state = kept_channel_count(layer_rate, spec.d_state);
  k.ssm_head = kept_channel_count(layer_rate, spec.d_head);
  return k;
}

ModelArtifact prune_artifact(const ModelArtifact& artifact, double rate) {
  if (!std::isfinite(rate) || rate < 0.0 || !artifact.plan.has_rate(rate)) {
    std::string configured;
    for (double r : artifact.plan.global_rates) configured += (configured.empty() ? "" : ", ") + std::to_string(r);
    throw UnsupportedError("unsupported rate " + std::to_string(rate) + " (configured: {" + configured + "})");
  }
  const auto layer_rates = artifact.plan.layer_rates(rate);
  if (std::all_of(layer_rates.begin(), layer_rates.end(), [](double r) { return r == 0.0; })) return artifact;
  if (artifact.pruned_rate != 0.0) throw UnsupportedError("artifact is already pruned");

  ModelArtifact out = artifact;
  out.pruned_rate = rate;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    LayerRecord& rec = out.layers[l];
    const BlockSpec& s = rec.spec;
    const KeptDims k = kept_dims(s, layer_rates[l]);
    auto t = [&](const std::string& suffix) -> ArtifactTensor& { return find_tensor(out, layer_tensor_name(l, suffix)); };
    switch (rec.kind) {
      case BlockKind::mlp: {
        const IndexVector cols = head_prefix(1, s.d_intermediate, k.d_int);
        keep_columns(t("mlp.up"), cols);
        keep_columns(t("mlp.gate"), cols);
        keep_head_rows(t("mlp.down"), 1, s.d_intermediate, k.d_int);
        break;
      }
      case BlockKind::attention: {
        if (k.qk < 2) throw UnsupportedError("rate leaves no query/key pair in layer " + std::to_string(l));
        keep_columns(t("attn.q"), pair_prefix(s.n_heads, s.d_head, k.qk));
        keep_columns(t("attn.k"), pair_prefix(s.n_kv_heads, s.d_head, k.qk));
        keep_columns(t("attn.v"), head_prefix(s.n_kv_heads, s.d_head, k.v));
        keep_head_rows(t("attn.o"), s.n_heads, s.d_head, k.v);
        for (auto& g : rec.rope_gather) {
          if (g.empty()) continue;
          g.resize(k.qk / 2);
        }
        if (rec.rope_gather.empty()) {
          // Identity gather, truncated so RoPE keeps the original frequencies.
          IndexVector g(k.qk / 2);
          for (std::size_t j = 0; j < g.size(); ++j) g[j] = j;
          rec.rope_gather.assign(s.n_kv_heads, g);
        }
        break;
      }
      case BlockKind::mamba: {
        const IndexVector head_cols = head_prefix(s.n_ssm_heads, s.d_head, k.ssm_head);
        const IndexVector state_cols = head_prefix(s.n_ssm_groups, s.d_state, k.state);
        keep_columns(t("mamba.z"), head_cols);
        keep_columns(t("mamba.x"), head_cols);
        keep_head_rows(t("mamba.conv_x"), s.n_ssm_heads, s.d_head, k.ssm_head);
        keep_head_rows(t("mamba.out"), s.n_ssm_heads, s.d_head, k.ssm_head);
        keep_columns(t("mamba.b"), state_cols);
        keep_columns(t("mamba.c"), state_cols);
        keep_head_rows(t("mamba.conv_b"), s.n_ssm_groups, s.d_state, k.state);
        keep_head_rows(t("mamba.conv_c"), s.n_ssm_groups, s.d_state, k.state);
        break;
      }
    }
  }
  out.validate();
  return out;
}

Model deploy_prune(const ModelArtifact& artifact, double rate) {
  return model_from_artifact(prune_artifact(artifact, rate));
}

double relative_logit_error(const Model& a, const Model& b, const CalibrationSet& set) {
  const auto in_a = model_inputs(a, set);
  const auto in_b = model_inputs(b, set);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < in_a.size(); ++i) {
    const Matrix la = forward_hidden(a, in_a[i]);
    const Matrix lb = forward_hidden(b, in_b[i]);
    num += row_energy(subtract(la, lb));
    den += row_energy(lb);
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

EvalMetrics evaluate(const Model& model, const CalibrationSet& eval_set, const Model& reference) {
  if (model.vocab != reference.vocab) throw ShapeError("evaluate: vocabulary sizes differ");
  if (eval_set.empty()) throw CalibrationError("evaluate: empty evaluation set");
  const auto in_m = model_inputs(model, eval_set);
  const auto in_r = model_inputs(reference, eval_set);
  double sq = 0.0, kl = 0.0;
  std::size_t elems = 0, tokens = 0;
  for (std::size_t i = 0; i < in_m.size(); ++i) {
    const Matrix lm = forward_hidden(model, in_m[i]);
    const Matrix lr = forward_hidden(reference, in_r[i]);
    require_same_shape(lm, lr, "evaluate");
    for (std::size_t t = 0; t < lm.rows(); ++t) {
      const auto pm = log_softmax_row(lm.row(t));
      const auto pr = log_softmax_row(lr.row(t));
      double k = 0.0;
      for (std::size_t v = 0; v < pm.size(); ++v) {
        const double d = lm(t, v) - lr(t, v);
        sq += d * d;
        k += std::exp(pr[v]) * (pr[v] - pm[v]);
      }
      kl += std::max(k, 0.0);
    }
    elems += lm.size();
    tokens += lm.rows();
  }
  EvalMetrics m;
  m.logit_mse = elems > 0 ? sq / static_cast<double>(elems) : 0.0;
  m.logit_kl = tokens > 0 ? kl / static_cast<double>(tokens) : 0.0;
  return m;
}

EvalMetrics evaluate(const ModelArtifact& artifact, const CalibrationSet& eval_set, const Model& reference) {
  EvalMetrics m = evaluate(model_from_artifact(artifact), eval_set, reference);
  m.artifact_bytes = serialize_artifact(artifact).size();
  return m;
}

}  // namespace sortq

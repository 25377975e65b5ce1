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

#include "sortq/sorting.hpp"

#include <string>

#include "sortq/errors.hpp"

namespace sortq {

namespace {

void require_calibration(std::span<const CalibrationCapture> calib, const char* what) {
  if (calib.empty()) throw CalibrationError(std::string(what) + ": empty calibration set");
}

void require_mode(const BlockSpec& spec, AttnMode mode) {
  spec.validate();
  if (mode == AttnMode::mhsa && spec.n_heads != spec.n_kv_heads)
    throw ShapeError("mhsa sorting requires n_heads == n_kv_heads");
}

// Averaged Gram matrix of one column block gathered from every capture.
template <typename Getter>
Matrix averaged_correlation(std::span<const CalibrationCapture> calib, std::size_t dim, Getter get) {
  CorrelationStats stats(dim);
  for (const auto& cap : calib) stats.accumulate(get(cap));
  return stats.finalize();
}

}  // namespace

std::string to_string(SortKind kind) {
  switch (kind) {
    case SortKind::permute_mlp: return "permute_mlp";
    case SortKind::permute_qk_symmetric: return "permute_qk_symmetric";
    case SortKind::qsvd_vo: return "qsvd_vo";
    case SortKind::permute_bc: return "permute_bc";
    case SortKind::permute_zxo: return "permute_zxo";
  }
  return "unknown";
}

SortKind sort_kind_from_string(const std::string& s) {
  for (auto k : {SortKind::permute_mlp, SortKind::permute_qk_symmetric, SortKind::qsvd_vo, SortKind::permute_bc,
                 SortKind::permute_zxo}) {
    if (to_string(k) == s) return k;
  }
  throw FormatError("unknown sort kind '" + s + "'");
}

Matrix permute_column_block(const Matrix& m, std::size_t first, std::span<const std::size_t> idx) {
  if (!is_permutation(idx, idx.size()) || first + idx.size() > m.cols())
    throw ShapeError("permute_column_block: invalid permutation");
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j) out(i, first + j) = m(i, first + idx[j]);
  return out;
}

Matrix permute_row_block(const Matrix& m, std::size_t first, std::span<const std::size_t> idx) {
  if (!is_permutation(idx, idx.size()) || first + idx.size() > m.rows())
    throw ShapeError("permute_row_block: invalid permutation");
  Matrix out = m;
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(first + i, j) = m(first + idx[i], j);
  return out;
}

IndexVector symmetric_index(std::span<const std::size_t> half_perm) {
  const std::size_t half = half_perm.size();
  IndexVector idx(2 * half);
  for (std::size_t j = 0; j < half; ++j) {
    idx[j] = half_perm[j];
    idx[j + half] = half + half_perm[j];
  }
  return idx;
}

MlpWeights permute_mlp(const MlpWeights& w, std::span<const std::size_t> idx) {
  if (idx.size() != w.d_int()) throw ShapeError("permute_mlp: index length != D_int");
  return {permute_column_block(w.w_up, 0, idx), permute_column_block(w.w_gate, 0, idx),
          permute_row_block(w.w_down, 0, idx)};
}

AttnWeights permute_qk(const AttnWeights& w, const BlockSpec& spec, std::size_t kv_head,
                       std::span<const std::size_t> idx) {
  const std::size_t d = spec.d_head;
  if (idx.size() != d) throw ShapeError("permute_qk: index length != D_hd");
  AttnWeights out = w;
  const std::size_t group = spec.queries_per_kv();
  for (std::size_t q = kv_head * group; q < (kv_head + 1) * group; ++q)
    out.w_q = permute_column_block(out.w_q, q * d, idx);
  out.w_k = permute_column_block(out.w_k, kv_head * d, idx);
  return out;
}

MambaWeights permute_bc(const MambaWeights& w, const BlockSpec& spec, std::size_t group,
                        std::span<const std::size_t> idx) {
  const std::size_t n = spec.d_state;
  if (idx.size() != n) throw ShapeError("permute_bc: index length != D_s");
  MambaWeights out = w;
  out.w_b = permute_column_block(w.w_b, group * n, idx);
  out.w_c = permute_column_block(w.w_c, group * n, idx);
  out.conv_b = permute_row_block(w.conv_b, group * n, idx);
  out.conv_c = permute_row_block(w.conv_c, group * n, idx);
  return out;
}

MambaWeights permute_zxo(const MambaWeights& w, const BlockSpec& spec, std::size_t head,
                         std::span<const std::size_t> idx) {
  const std::size_t p = spec.d_head;
  if (idx.size() != p) throw ShapeError("permute_zxo: index length != D_hd");
  MambaWeights out = w;
  out.w_z = permute_column_block(w.w_z, head * p, idx);
  out.w_x = permute_column_block(w.w_x, head * p, idx);
  out.conv_x = permute_row_block(w.conv_x, head * p, idx);
  out.w_out = permute_row_block(w.w_out, head * p, idx);
  return out;
}

MlpSortResult sort_mlp(const MlpWeights& w, std::span<const CalibrationCapture> calib, double lambda) {
  require_calibration(calib, "sort_mlp");
  const std::size_t d_int = w.d_int();
  const Matrix c = averaged_correlation(calib, d_int, [](const CalibrationCapture& cap) -> const Matrix& {
    return cap.mlp_intermediate;
  });
  const ScoreVector scores = ridge_leverage(c, lambda);
  MlpSortResult out;
  out.record.target = "mlp";
  out.record.kind = SortKind::permute_mlp;
  out.record.indices = argsort_desc(scores);
  out.weights = permute_mlp(w, out.record.indices);
  return out;
}

ScoreVector qk_group_scores(const BlockSpec& spec, std::span<const CalibrationCapture> calib, std::size_t kv_head) {
  require_calibration(calib, "qk scores");
  const std::size_t d = spec.d_head;
  const std::size_t group = spec.queries_per_kv();
  for (const auto& cap : calib) {
    if (cap.q_heads.size() != spec.n_heads || cap.k_heads.size() != spec.n_kv_heads)
      throw CalibrationError("qk scores: capture lacks per-head q/k activations");
  }
  const Matrix ck = averaged_correlation(calib, d, [&](const CalibrationCapture& cap) -> const Matrix& {
    return cap.k_heads[kv_head];
  });
  const ScoreVector k_norm = root_column_norms(ck);
  ScoreVector s(d, 0.0);
  for (std::size_t q = kv_head * group; q < (kv_head + 1) * group; ++q) {
    const Matrix cq = averaged_correlation(calib, d, [&](const CalibrationCapture& cap) -> const Matrix& {
      return cap.q_heads[q];
    });
    const ScoreVector q_norm = root_column_norms(cq);
    for (std::size_t j = 0; j < d; ++j) s[j] += q_norm[j] * k_norm[j];
  }
  return s;
}

QkSortResult sort_qk(const AttnWeights& w, const BlockSpec& spec, std::span<const CalibrationCapture> calib,
                     AttnMode mode) {
  require_mode(spec, mode);
  require_calibration(calib, "sort_qk");
  const std::size_t half = spec.d_head / 2;
  QkSortResult out;
  out.weights = w;
  for (std::size_t kv = 0; kv < spec.n_kv_heads; ++kv) {
    const ScoreVector s = qk_group_scores(spec, calib, kv);
    ScoreVector folded(half);
    for (std::size_t j = 0; j < half; ++j) folded[j] = s[j] + s[j + half];
    IndexVector pi = argsort_desc(folded);
    SortRecord rec;
    rec.target = "attn.qk.kv" + std::to_string(kv);
    rec.kind = SortKind::permute_qk_symmetric;
    rec.per_head = true;
    rec.head = kv;
    rec.indices = symmetric_index(pi);
    out.weights = permute_qk(out.weights, spec, kv, rec.indices);
    out.records.push_back(std::move(rec));
    out.rope_gather.push_back(std::move(pi));
  }
  return out;
}

VoSortResult sort_vo(const AttnWeights& w, const BlockSpec& spec, std::span<const CalibrationCapture> calib,
                     AttnMode mode) {
  require_mode(spec, mode);
  require_calibration(calib, "sort_vo");
  const std::size_t d = spec.d_head;
  const std::size_t d_h = w.w_v.rows();
  // Floored so the refactoring is exact off the calibration subspace too.
  const Matrix c = floor_spectrum(averaged_correlation(calib, d_h, [](const CalibrationCapture& cap) -> const Matrix& {
    return cap.hidden_in;
  }));
  VoSortResult out;
  out.weights = w;
  auto emit = [&](std::size_t head, std::vector<double> sigma) {
    SortRecord rec;
    rec.target = "attn.vo.head" + std::to_string(head);
    rec.kind = SortKind::qsvd_vo;
    rec.per_head = true;
    rec.head = head;
    rec.sigma = sigma;
    out.records.push_back(std::move(rec));
    out.spectrum.per_head.push_back(std::move(sigma));
  };

  if (mode == AttnMode::mhsa) {
    const Matrix c_half = sqrt_psd(c);
    const Matrix c_inv_half = inv_sqrt_psd(c);
    for (std::size_t h = 0; h < spec.n_heads; ++h) {
      const Matrix wv = column_block(w.w_v, h * d, d);
      const Matrix wo = row_block(w.w_o, h * d, d);
      const SvdResult first = svd(matmul(c_half, wv));
      const Matrix inner = matmul(scale_rows(first.vt, first.sigma), wo);
      const SvdResult second = svd(inner);
      const Matrix new_v = scale_columns(matmul(c_inv_half, matmul(first.u, second.u)), second.sigma);
      set_column_block(out.weights.w_v, h * d, new_v);
      set_row_block(out.weights.w_o, h * d, second.vt);
      emit(h, second.sigma);
    }
    return out;
  }

  const std::size_t group = spec.queries_per_kv();
  for (std::size_t kv = 0; kv < spec.n_kv_heads; ++kv) {
    const Matrix wv = column_block(w.w_v, kv * d, d);
    const SvdResult dec = svd(matmul(c, wv));
    const Matrix new_v = solve_psd(c, scale_columns(dec.u, dec.sigma));
    set_column_block(out.weights.w_v, kv * d, new_v);
    for (std::size_t q = kv * group; q < (kv + 1) * group; ++q) {
      set_row_block(out.weights.w_o, q * d, matmul(dec.vt, row_block(w.w_o, q * d, d)));
    }
    emit(kv, dec.sigma);
  }
  return out;
}

ScoreVector bc_group_scores(const BlockSpec& spec, std::span<const CalibrationCapture> calib, std::size_t group) {
  require_calibration(calib, "bc scores");
  const std::size_t n = spec.d_state;
  const std::size_t per_group = spec.ssm_heads_per_group();
  for (const auto& cap : calib) {
    if (cap.ssm_b.empty() || cap.ssm_c.empty() || cap.delta.empty())
      throw CalibrationError("bc scores: capture lacks B/C/delta activations");
  }
  const Matrix cc = averaged_correlation(calib, n, [&](const CalibrationCapture& cap) {
    return column_block(cap.ssm_c, group * n, n);
  });
  const ScoreVector c_norm = root_column_norms(cc);
  ScoreVector s(n, 0.0);
  for (std::size_t h = group * per_group; h < (group + 1) * per_group; ++h) {
    // (delta B)_h: row t of B scaled by delta(t, h).
    const Matrix cb = averaged_correlation(calib, n, [&](const CalibrationCapture& cap) {
      std::vector<double> dt(cap.delta.rows());
      for (std::size_t t = 0; t < dt.size(); ++t) dt[t] = cap.delta(t, h);
      return scale_rows(column_block(cap.ssm_b, group * n, n), dt);
    });
    const ScoreVector b_norm = root_column_norms(cb);
    for (std::size_t j = 0; j < n; ++j) s[j] += b_norm[j] * c_norm[j];
  }
  return s;
}

MambaSortResult sort_bc(const MambaWeights& w, const BlockSpec& spec, std::span<const CalibrationCapture> calib) {
  spec.validate();
  require_calibration(calib, "sort_bc");
  MambaSortResult out;
  out.weights = w;
  for (std::size_t g = 0; g < spec.n_ssm_groups; ++g) {
    SortRecord rec;
    rec.target = "mamba.bc.group" + std::to_string(g);
    rec.kind = SortKind::permute_bc;
    rec.per_head = true;
    rec.head = g;
    rec.indices = argsort_desc(bc_group_scores(spec, calib, g));
    out.weights = permute_bc(out.weights, spec, g, rec.indices);
    out.records.push_back(std::move(rec));
  }
  return out;
}

MambaSortResult sort_zxo(const MambaWeights& w, const BlockSpec& spec, std::span<const CalibrationCapture> calib,
                         double lambda) {
  spec.validate();
  require_calibration(calib, "sort_zxo");
  const std::size_t p = spec.d_head;
  for (const auto& cap : calib) {
    if (cap.ssm_states.size() != spec.n_ssm_heads) throw CalibrationError("sort_zxo: capture lacks SSM states");
  }
  MambaSortResult out;
  out.weights = w;
  for (std::size_t h = 0; h < spec.n_ssm_heads; ++h) {
    const Matrix c = averaged_correlation(calib, p, [&](const CalibrationCapture& cap) -> const Matrix& {
      return cap.ssm_states[h];
    });
    SortRecord rec;
    rec.target = "mamba.zxo.head" + std::to_string(h);
    rec.kind = SortKind::permute_zxo;
    rec.per_head = true;
    rec.head = h;
    rec.indices = argsort_desc(ridge_leverage(c, lambda));
    out.weights = permute_zxo(out.weights, spec, h, rec.indices);
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace sortq

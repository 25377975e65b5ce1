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

#include "sortq/artifact.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <utility>

#include "bytes.hpp"
#include "json.hpp"
#include "sortq/errors.hpp"

namespace sortq {

namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'U', 'Q', 'A', 'R'};

Matrix round_to(const Matrix& m, TensorDtype dtype) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double v = m.data()[i];
    out.data()[i] = dtype == TensorDtype::f16 ? from_half_bits(to_half_bits(v))
                                              : static_cast<double>(static_cast<float>(v));
  }
  return out;
}

Matrix row_vector(std::span<const double> v) {
  Matrix m(1, v.size());
  std::copy(v.begin(), v.end(), m.data().begin());
  return m;
}

std::vector<double> as_vector(const Matrix& m) {
  if (m.rows() != 1) throw ShapeError("expected a row vector tensor");
  return std::vector<double>(m.data().begin(), m.data().end());
}

// Fused norms are identically one and may be left out of the tensor section.
std::vector<double> norm_vector(const ModelArtifact& a, const std::string& name) {
  if (!a.has_tensor(name) && a.fusion.norm_fusion) return std::vector<double>(a.d_hidden, 1.0);
  return as_vector(a.tensor(name).to_matrix());
}

// Dense tensors of one layer in canonical order.
std::vector<std::pair<std::string, Matrix>> layer_dense(const Layer& layer) {
  std::vector<std::pair<std::string, Matrix>> out;
  out.emplace_back("norm", row_vector(layer.norm_scale));
  if (const auto* w = std::get_if<MlpWeights>(&layer.weights)) {
    out.emplace_back("mlp.up", w->w_up);
    out.emplace_back("mlp.gate", w->w_gate);
    out.emplace_back("mlp.down", w->w_down);
  } else if (const auto* w = std::get_if<AttnWeights>(&layer.weights)) {
    out.emplace_back("attn.q", w->w_q);
    out.emplace_back("attn.k", w->w_k);
    out.emplace_back("attn.v", w->w_v);
    out.emplace_back("attn.o", w->w_o);
  } else if (const auto* w = std::get_if<MambaWeights>(&layer.weights)) {
    out.emplace_back("mamba.z", w->w_z);
    out.emplace_back("mamba.x", w->w_x);
    out.emplace_back("mamba.b", w->w_b);
    out.emplace_back("mamba.c", w->w_c);
    out.emplace_back("mamba.dt", w->w_dt);
    out.emplace_back("mamba.out", w->w_out);
    out.emplace_back("mamba.a_log", row_vector(w->a_log));
    out.emplace_back("mamba.dt_bias", row_vector(w->dt_bias));
    out.emplace_back("mamba.conv_x", w->conv_x);
    out.emplace_back("mamba.conv_b", w->conv_b);
    out.emplace_back("mamba.conv_c", w->conv_c);
  }
  return out;
}

json spec_to_json(const BlockSpec& s) {
  return {{"d_hidden", s.d_hidden},       {"d_head", s.d_head},           {"d_intermediate", s.d_intermediate},
          {"d_state", s.d_state},         {"n_heads", s.n_heads},         {"n_kv_heads", s.n_kv_heads},
          {"n_ssm_heads", s.n_ssm_heads}, {"n_ssm_groups", s.n_ssm_groups}, {"conv_width", s.conv_width}};
}

BlockSpec spec_from_json(const json& j) {
  BlockSpec s;
  s.d_hidden = j.at("d_hidden").get<std::size_t>();
  s.d_head = j.at("d_head").get<std::size_t>();
  s.d_intermediate = j.at("d_intermediate").get<std::size_t>();
  s.d_state = j.at("d_state").get<std::size_t>();
  s.n_heads = j.at("n_heads").get<std::size_t>();
  s.n_kv_heads = j.at("n_kv_heads").get<std::size_t>();
  s.n_ssm_heads = j.at("n_ssm_heads").get<std::size_t>();
  s.n_ssm_groups = j.at("n_ssm_groups").get<std::size_t>();
  s.conv_width = j.at("conv_width").get<std::size_t>();
  return s;
}

// Records are keyed by target; kind and head follow from the target name.
struct TargetForm {
  const char* prefix;
  SortKind kind;
  bool per_head;
};
constexpr TargetForm kTargets[] = {
    {"attn.qk.kv", SortKind::permute_qk_symmetric, true}, {"attn.vo.head", SortKind::qsvd_vo, true},
    {"mamba.bc.group", SortKind::permute_bc, true},       {"mamba.zxo.head", SortKind::permute_zxo, true},
    {"mlp", SortKind::permute_mlp, false},
};

std::string record_target(const SortRecord& r) {
  for (const auto& f : kTargets) {
    if (f.kind != r.kind) continue;
    return f.per_head ? f.prefix + std::to_string(r.head) : std::string(f.prefix);
  }
  throw FormatError("sort record with unknown kind");
}

json records_to_json(const std::vector<SortRecord>& records) {
  json j = json::object();
  for (const auto& r : records) {
    const std::string target = record_target(r);
    if (target != r.target || r.per_head != (r.kind != SortKind::permute_mlp))
      throw FormatError("sort record target '" + r.target + "' does not match its kind");
    j[target] = r.kind == SortKind::qsvd_vo ? json{{"sigma", r.sigma}} : json{{"perm", r.indices}};
  }
  return j;
}

std::vector<SortRecord> records_from_json(const json& j) {
  std::vector<SortRecord> out;
  for (const auto& [target, body] : j.items()) {
    SortRecord r;
    r.target = target;
    bool matched = false;
    for (const auto& f : kTargets) {
      const std::string prefix = f.prefix;
      if (f.per_head ? !target.starts_with(prefix) : target != prefix) continue;
      r.kind = f.kind;
      r.per_head = f.per_head;
      if (f.per_head) {
        const std::string digits = target.substr(prefix.size());
        if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
          throw FormatError("bad sort record target '" + target + "'");
        r.head = std::stoul(digits);
      }
      matched = true;
      break;
    }
    if (!matched) throw FormatError("unknown sort record target '" + target + "'");
    if (r.kind == SortKind::qsvd_vo) {
      r.sigma = body.at("sigma").get<std::vector<double>>();
    } else {
      r.indices = body.at("perm").get<IndexVector>();
    }
    out.push_back(std::move(r));
  }
  // Canonical order: kind, then head.
  std::stable_sort(out.begin(), out.end(), [](const SortRecord& x, const SortRecord& y) {
    return std::pair(static_cast<int>(x.kind), x.head) < std::pair(static_cast<int>(y.kind), y.head);
  });
  return out;
}

json plan_to_json(const PruningPlan& p) {
  json per_layer = json::array();
  for (const auto& lr : p.per_layer) per_layer.push_back({{"global_rate", lr.global_rate}, {"rates", lr.rates}});
  return {{"global_rates", p.global_rates}, {"per_layer", per_layer}, {"bi_scores", p.bi_scores},
          {"epsilon", p.epsilon},           {"rate_cap", p.rate_cap}};
}

PruningPlan plan_from_json(const json& j) {
  PruningPlan p;
  p.global_rates = j.at("global_rates").get<std::vector<double>>();
  for (const auto& lr : j.at("per_layer"))
    p.per_layer.push_back({lr.at("global_rate").get<double>(), lr.at("rates").get<std::vector<double>>()});
  p.bi_scores = j.at("bi_scores").get<std::vector<double>>();
  p.epsilon = j.at("epsilon").get<double>();
  p.rate_cap = j.at("rate_cap").get<double>();
  return p;
}

// Per-operator flags as "", "in", "out" or "in+out".
json fusion_to_json(const FusionConfig& f) {
  json ops = json::object();
  for (const auto& [op, flags] : f.ops) {
    std::string v = flags.input ? "in" : "";
    if (flags.output) v += v.empty() ? "out" : "+out";
    ops[op] = v;
  }
  return {{"norm_fusion", f.norm_fusion}, {"ops", ops}};
}

FusionConfig fusion_from_json(const json& j) {
  FusionConfig f;
  f.norm_fusion = j.at("norm_fusion").get<bool>();
  for (const auto& [op, v] : j.at("ops").items()) {
    const std::string s = v.get<std::string>();
    if (s != "" && s != "in" && s != "out" && s != "in+out") throw FormatError("bad fusion flags '" + s + "'");
    f.ops[op] = {s == "in" || s == "in+out", s == "out" || s == "in+out"};
  }
  return f;
}

json manifest_to_json(const ModelArtifact& a) {
  json layers = json::array();
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& l = a.layers[i];
    json jl = {{"index", i}, {"kind", to_string(l.kind)}};
    if (l.spec != a.layers.front().spec) jl["spec"] = spec_to_json(l.spec);
    if (!l.sort_records.empty()) jl["sort"] = records_to_json(l.sort_records);
    if (l.kind == BlockKind::attention) {
      jl["rope_theta"] = l.rope_theta;
      jl["rope_gather"] = l.rope_gather;
    }
    layers.push_back(std::move(jl));
  }
  json tensors = json::array();
  // [name, dtype, rows, cols] plus the interleave factor when present.
  for (const auto& t : a.tensors) {
    json e = {t.name, to_string(t.dtype), t.rows(), t.cols()};
    if (t.interleave > 0) e.push_back(t.interleave);
    tensors.push_back(std::move(e));
  }

  json j = {{"format", "sortq"},
            {"version", kArtifactFormatVersion},
            {"kind", to_string(a.kind)},
            {"model",
             {{"vocab", a.vocab},
              {"d_hidden", a.d_hidden},
              {"norm_eps", a.norm_eps},
              {"residual_hadamard", a.residual_hadamard},
              {"n_layers", a.layers.size()}}},
            {"spec", a.layers.empty() ? json(nullptr) : spec_to_json(a.layers.front().spec)},
            {"layers", layers},
            {"plan", plan_to_json(a.plan)},
            {"fusion", fusion_to_json(a.fusion)},
            {"pruned_rate", a.pruned_rate},
            {"tensors", tensors}};
  j["quant"] = a.quant ? json{{"bits", a.quant->bits}, {"group_size", a.quant->group_size}, {"damp", a.quant->damp}}
                       : json(nullptr);
  j["self_check"] = a.self_check ? json{{"zero_prune_rel_error", *a.self_check}} : json(nullptr);
  return j;
}

ModelArtifact manifest_from_json(const json& j) {
  if (j.at("format").get<std::string>() != "sortq") throw FormatError("not a sortq manifest");
  if (j.at("version").get<std::uint32_t>() != kArtifactFormatVersion) throw FormatError("unsupported manifest version");
  ModelArtifact a;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "fp") {
    a.kind = ArtifactKind::fp;
  } else if (kind == "quantized") {
    a.kind = ArtifactKind::quantized;
  } else {
    throw FormatError("unknown artifact kind '" + kind + "'");
  }
  const auto& m = j.at("model");
  a.vocab = m.at("vocab").get<std::size_t>();
  a.d_hidden = m.at("d_hidden").get<std::size_t>();
  a.norm_eps = m.at("norm_eps").get<double>();
  a.residual_hadamard = m.at("residual_hadamard").get<bool>();
  for (const auto& jl : j.at("layers")) {
    LayerRecord l;
    l.kind = block_kind_from_string(jl.at("kind").get<std::string>());
    // Layers inherit the shared spec unless they override it.
    l.spec = spec_from_json(jl.contains("spec") ? jl.at("spec") : j.at("spec"));
    if (jl.contains("sort")) l.sort_records = records_from_json(jl.at("sort"));
    if (l.kind == BlockKind::attention) {
      l.rope_theta = jl.at("rope_theta").get<double>();
      l.rope_gather = jl.at("rope_gather").get<std::vector<IndexVector>>();
    }
    // The QSVD spectrum is stored once, inside the sort records.
    for (const auto& r : l.sort_records)
      if (r.kind == SortKind::qsvd_vo) l.spectrum.push_back(r.sigma);
    a.layers.push_back(std::move(l));
  }
  a.plan = plan_from_json(j.at("plan"));
  a.fusion = fusion_from_json(j.at("fusion"));
  a.pruned_rate = j.at("pruned_rate").get<double>();
  if (!j.at("quant").is_null()) {
    const auto& q = j.at("quant");
    a.quant = QuantConfig{q.at("bits").get<unsigned>(), q.at("group_size").get<std::size_t>(),
                          q.at("damp").get<double>()};
  }
  if (!j.at("self_check").is_null()) a.self_check = j.at("self_check").at("zero_prune_rel_error").get<double>();
  return a;
}

std::vector<std::uint8_t> dense_blob(const ArtifactTensor& t) {
  detail::ByteWriter w;
  w.u32(static_cast<std::uint32_t>(t.dense.rows()));
  w.u32(static_cast<std::uint32_t>(t.dense.cols()));
  for (std::size_t i = 0; i < t.dense.size(); ++i) {
    const double v = t.dense.data()[i];
    if (t.dtype == TensorDtype::f16) {
      w.u16(to_half_bits(v));
    } else {
      w.f32(static_cast<float>(v));
    }
  }
  return std::move(w.bytes());
}

Matrix dense_from_blob(std::span<const std::uint8_t> blob, TensorDtype dtype) {
  detail::ByteReader r(blob);
  const std::size_t rows = r.u32();
  const std::size_t cols = r.u32();
  const std::size_t width = dtype == TensorDtype::f16 ? 2 : 4;
  if (r.remaining() != rows * cols * width) throw FormatError("dense tensor blob length mismatch");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i)
    m.data()[i] = dtype == TensorDtype::f16 ? from_half_bits(r.u16()) : static_cast<double>(r.f32());
  return m;
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

std::string to_string(ArtifactKind kind) { return kind == ArtifactKind::fp ? "fp" : "quantized"; }

std::string to_string(TensorDtype dtype) {
  switch (dtype) {
    case TensorDtype::quantized: return "quantized";
    case TensorDtype::f32: return "f32";
    case TensorDtype::f16: return "f16";
  }
  return "unknown";
}

ArtifactTensor ArtifactTensor::make_dense(std::string name, const Matrix& values, TensorDtype dtype) {
  if (dtype == TensorDtype::quantized) throw FormatError("make_dense: dtype must be f32 or f16");
  ArtifactTensor t;
  t.name = std::move(name);
  t.dtype = dtype;
  t.dense = round_to(values, dtype);
  return t;
}

ArtifactTensor ArtifactTensor::make_quantized(std::string name, QuantizedTensor q, std::size_t interleave) {
  q.validate();
  if (interleave > 0 && q.rows % interleave != 0) throw ShapeError("interleave does not divide rows of " + name);
  ArtifactTensor t;
  t.name = std::move(name);
  t.dtype = TensorDtype::quantized;
  t.q = std::move(q);
  t.interleave = interleave;
  return t;
}

std::size_t ArtifactTensor::rows() const { return dtype == TensorDtype::quantized ? q.rows : dense.rows(); }
std::size_t ArtifactTensor::cols() const { return dtype == TensorDtype::quantized ? q.cols : dense.cols(); }
Matrix ArtifactTensor::to_matrix() const {
  Matrix m = dtype == TensorDtype::quantized ? q.dequantize() : dense;
  if (interleave <= 1) return m;
  return gather_rows(m, inverse_permutation(interleave_rows(m.rows(), interleave)));
}

IndexVector interleave_rows(std::size_t rows, std::size_t heads) {
  if (heads == 0 || rows % heads != 0) throw ShapeError("interleave_rows: heads must divide rows");
  const std::size_t per = rows / heads;
  IndexVector idx(rows);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t j = 0; j < per; ++j) idx[j * heads + h] = h * per + j;
  return idx;
}

const ArtifactTensor& ModelArtifact::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw FormatError("artifact has no tensor '" + name + "'");
}

bool ModelArtifact::has_tensor(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(), [&](const ArtifactTensor& t) { return t.name == name; });
}

void ModelArtifact::validate() const {
  // Rebuilding the model checks every shape against the layer specs.
  (void)model_from_artifact(*this);
  for (std::size_t i = 0; i < tensors.size(); ++i)
    for (std::size_t j = i + 1; j < tensors.size(); ++j)
      if (tensors[i].name == tensors[j].name) throw FormatError("duplicate tensor '" + tensors[i].name + "'");
  if (!plan.per_layer.empty() && plan.bi_scores.size() != layers.size())
    throw FormatError("pruning plan layer count mismatch");
  fusion.validate();
}

std::string layer_tensor_name(std::size_t layer, const std::string& suffix) {
  return "layers." + std::to_string(layer) + "." + suffix;
}

std::string manifest_json(const ModelArtifact& a, int indent) { return manifest_to_json(a).dump(indent); }

std::vector<std::uint8_t> serialize_artifact(const ModelArtifact& a) {
  detail::ByteWriter w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kArtifactFormatVersion);
  const std::string manifest = manifest_json(a);
  w.u32(static_cast<std::uint32_t>(manifest.size()));
  w.str(manifest);
  w.u32(static_cast<std::uint32_t>(a.tensors.size()));
  for (const auto& t : a.tensors) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.str(t.name);
    w.u8(static_cast<std::uint8_t>(t.dtype));
    const auto blob = t.dtype == TensorDtype::quantized ? serialize_quantized(t.q) : dense_blob(t);
    w.u64(blob.size());
    w.raw(blob);
  }
  return std::move(w.bytes());
}

ModelArtifact deserialize_artifact(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  for (char c : kMagic)
    if (r.u8() != static_cast<std::uint8_t>(c)) throw FormatError("bad artifact magic");
  if (r.u32() != kArtifactFormatVersion) throw FormatError("unsupported artifact version");
  const std::string manifest = r.str(r.u32());
  json j;
  try {
    j = json::parse(manifest);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  ModelArtifact a;
  try {
    a = manifest_from_json(j);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    ArtifactTensor t;
    t.name = r.str(r.u32());
    const std::uint8_t dtype = r.u8();
    const auto blob = r.raw(r.u64());
    switch (dtype) {
      case static_cast<std::uint8_t>(TensorDtype::quantized):
        t.dtype = TensorDtype::quantized;
        t.q = deserialize_quantized(blob);
        break;
      case static_cast<std::uint8_t>(TensorDtype::f32):
      case static_cast<std::uint8_t>(TensorDtype::f16):
        t.dtype = static_cast<TensorDtype>(dtype);
        t.dense = dense_from_blob(blob, t.dtype);
        break;
      default: throw FormatError("unknown tensor dtype " + std::to_string(dtype));
    }
    a.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after tensor section");

  // The manifest's tensor index must describe the tensor section exactly.
  const auto& index = j.at("tensors");
  if (index.size() != a.tensors.size()) throw FormatError("manifest tensor count mismatch");
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    const auto& e = index[i];
    const auto& t = a.tensors[i];
    if (e.size() < 4 || e.size() > 5 || e.at(0).get<std::string>() != t.name ||
        e.at(1).get<std::string>() != to_string(t.dtype) || e.at(2).get<std::size_t>() != t.rows() ||
        e.at(3).get<std::size_t>() != t.cols())
      throw FormatError("tensor '" + t.name + "' does not match the manifest");
    a.tensors[i].interleave = e.size() == 5 ? e.at(4).get<std::size_t>() : 0;
    if (t.interleave > 0 && t.rows() % t.interleave != 0) throw FormatError("bad interleave for '" + t.name + "'");
  }
  a.validate();
  return a;
}

void write_artifact(const ModelArtifact& a, const std::string& path) {
  const auto bytes = serialize_artifact(a);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for '" + path + "'");
}

ModelArtifact read_artifact(const std::string& path) { return deserialize_artifact(read_bytes(path)); }

ModelArtifact artifact_from_model(const Model& model, TensorDtype dtype) {
  model.validate();
  ModelArtifact a;
  a.kind = ArtifactKind::fp;
  a.vocab = model.vocab;
  a.d_hidden = model.d_hidden;
  a.norm_eps = model.norm_eps;
  a.residual_hadamard = model.residual_hadamard;
  a.fusion.norm_fusion = false;
  a.tensors.push_back(ArtifactTensor::make_dense("embedding", model.embedding, dtype));
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& layer = model.layers[i];
    LayerRecord rec;
    rec.kind = layer.kind();
    rec.spec = layer.spec;
    rec.rope_gather = layer.rope_gather;
    if (const auto* w = std::get_if<AttnWeights>(&layer.weights)) rec.rope_theta = w->rope_theta;
    a.layers.push_back(std::move(rec));
    for (auto& [suffix, m] : layer_dense(layer))
      a.tensors.push_back(ArtifactTensor::make_dense(layer_tensor_name(i, suffix), m, dtype));
  }
  a.tensors.push_back(ArtifactTensor::make_dense("final_norm", row_vector(model.final_norm), dtype));
  a.tensors.push_back(ArtifactTensor::make_dense("lm_head", model.lm_head, dtype));
  return a;
}

Model model_from_artifact(const ModelArtifact& a) {
  Model m;
  m.vocab = a.vocab;
  m.d_hidden = a.d_hidden;
  m.norm_eps = a.norm_eps;
  m.residual_hadamard = a.residual_hadamard;
  m.embedding = a.tensor("embedding").to_matrix();
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const LayerRecord& rec = a.layers[i];
    auto get = [&](const std::string& suffix) { return a.tensor(layer_tensor_name(i, suffix)).to_matrix(); };
    Layer layer;
    layer.spec = rec.spec;
    layer.norm_scale = norm_vector(a, layer_tensor_name(i, "norm"));
    layer.rope_gather = rec.rope_gather;
    switch (rec.kind) {
      case BlockKind::mlp: layer.weights = MlpWeights{get("mlp.up"), get("mlp.gate"), get("mlp.down")}; break;
      case BlockKind::attention:
        layer.weights = AttnWeights{get("attn.q"), get("attn.k"), get("attn.v"), get("attn.o"), rec.rope_theta};
        break;
      case BlockKind::mamba: {
        MambaWeights w;
        w.w_z = get("mamba.z");
        w.w_x = get("mamba.x");
        w.w_b = get("mamba.b");
        w.w_c = get("mamba.c");
        w.w_dt = get("mamba.dt");
        w.w_out = get("mamba.out");
        w.a_log = as_vector(get("mamba.a_log"));
        w.dt_bias = as_vector(get("mamba.dt_bias"));
        w.conv_x = get("mamba.conv_x");
        w.conv_b = get("mamba.conv_b");
        w.conv_c = get("mamba.conv_c");
        layer.weights = std::move(w);
        break;
      }
    }
    m.layers.push_back(std::move(layer));
  }
  m.final_norm = norm_vector(a, "final_norm");
  m.lm_head = a.tensor("lm_head").to_matrix();
  m.validate();
  // A one-token forward pass checks every layer's weight shapes.
  const Matrix probe(1, m.d_hidden);
  (void)forward_hidden(m, probe);
  return m;
}

ModelArtifact to_fp16_equivalent(const ModelArtifact& a) {
  ModelArtifact out = a;
  out.kind = ArtifactKind::fp;
  out.quant.reset();
  for (auto& t : out.tensors) t = ArtifactTensor::make_dense(t.name, t.to_matrix(), TensorDtype::f16);
  return out;
}

}  // namespace sortq

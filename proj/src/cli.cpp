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

#include "sortq/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sortq/artifact.hpp"
#include "sortq/errors.hpp"
#include "sortq/pipeline.hpp"

namespace sortq {

namespace {

using json = nlohmann::json;

double percent(double p) { return p / 100.0; }

ModelArtifact read_plain_model(const std::string& path) {
  ModelArtifact a = read_artifact(path);
  const bool sorted = std::any_of(a.layers.begin(), a.layers.end(),
                                  [](const LayerRecord& l) { return !l.sort_records.empty(); });
  if (a.kind != ArtifactKind::fp || sorted || a.pruned_rate != 0.0)
    throw UnsupportedError("'" + path + "' is a compressed artifact, expected a plain fp model");
  return a;
}

Model read_model(const std::string& path) { return model_from_artifact(read_artifact(path)); }

}  // namespace

CalibrationSet read_calibration_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
  CalibrationSet set;
  try {
    if (j.contains("tokens")) set.tokens = j.at("tokens").get<std::vector<std::vector<int>>>();
    if (j.contains("hidden")) {
      for (const auto& seq : j.at("hidden")) {
        const auto rows = seq.get<std::vector<std::vector<double>>>();
        if (rows.empty()) throw CalibrationError("empty hidden-state sequence");
        Matrix m(rows.size(), rows.front().size());
        for (std::size_t t = 0; t < rows.size(); ++t) {
          if (rows[t].size() != m.cols()) throw CalibrationError("ragged hidden-state sequence");
          std::copy(rows[t].begin(), rows[t].end(), m.row(t).begin());
        }
        set.hidden.push_back(std::move(m));
      }
    }
  } catch (const json::exception& e) {
    throw FormatError("'" + path + "': " + e.what());
  }
  if (set.empty()) throw CalibrationError("'" + path + "' holds no sequences");
  for (const auto& h : set.hidden)
    if (h.cols() != set.hidden.front().cols()) throw CalibrationError("hidden-state widths differ across sequences");
  return set;
}

void write_calibration_set(const CalibrationSet& set, const std::string& path) {
  json j;
  if (!set.tokens.empty()) j["tokens"] = set.tokens;
  if (!set.hidden.empty()) {
    json hidden = json::array();
    for (const auto& m : set.hidden) {
      json rows = json::array();
      for (std::size_t t = 0; t < m.rows(); ++t) rows.push_back(std::vector<double>(m.row(t).begin(), m.row(t).end()));
      hidden.push_back(std::move(rows));
    }
    j["hidden"] = std::move(hidden);
  }
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << j.dump() << "\n";
}

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"sortq: sort, quantize and prune small language models"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Random seed")->envname("UNIQL_SEED");

  std::string out_path, model_path, calib_path, artifact_path, reference_path, data_path;

  auto* toy = app.add_subcommand("toy", "Write a random toy model as an fp artifact");
  std::string layout = "attn,mlp,mamba,mhsa,mlp,mamba";
  std::size_t vocab = 256;
  toy->add_option("--out", out_path, "Output model path")->required();
  toy->add_option("--layout", layout, "Comma-separated layer kinds: attn, mhsa, mlp, mamba");
  toy->add_option("--vocab", vocab, "Vocabulary size")->check(CLI::PositiveNumber);

  auto* make_data = app.add_subcommand("make-data", "Write random token sequences as JSON");
  std::size_t count = 32, seq_len = 128;
  make_data->add_option("--out", out_path, "Output JSON path")->required();
  make_data->add_option("--count", count, "Number of sequences")->check(CLI::PositiveNumber);
  make_data->add_option("--seq-len", seq_len, "Tokens per sequence")->check(CLI::PositiveNumber);
  make_data->add_option("--vocab", vocab, "Vocabulary size")->check(CLI::PositiveNumber);

  auto* compress_cmd = app.add_subcommand("compress", "Sort, allocate, fuse and quantize in one pass");
  CompressConfig cfg;
  std::vector<double> rates_pct = {15, 25, 35};
  std::string fusion = "hadamard";
  bool fp_only = false, rtn = false;
  compress_cmd->add_option("--model", model_path, "Input fp model artifact")->required();
  compress_cmd->add_option("--calib", calib_path, "Calibration JSON")->required();
  compress_cmd->add_option("--rates", rates_pct, "Global pruning rates in percent")->delimiter(',');
  compress_cmd->add_option("--bits", cfg.bits, "Weight bits")->check(CLI::Range(2, 8));
  compress_cmd->add_option("--group", cfg.group_size, "Quantization group size")->check(CLI::PositiveNumber);
  compress_cmd->add_option("--epsilon", cfg.epsilon, "Allocation temperature")->check(CLI::PositiveNumber);
  compress_cmd->add_option("--lambda", cfg.lambda, "Ridge regularizer")->check(CLI::PositiveNumber);
  compress_cmd->add_option("--damp", cfg.damp, "GPTQ relative damping")->check(CLI::NonNegativeNumber);
  compress_cmd->add_option("--fusion", fusion, "Residual rotation")->check(CLI::IsMember({"hadamard", "none"}));
  compress_cmd->add_flag("--fp", fp_only, "Skip quantization (fp32 artifact)");
  compress_cmd->add_flag("--rtn", rtn, "Round-to-nearest instead of GPTQ");
  compress_cmd->add_option("--out", out_path, "Output artifact path")->required();

  auto* prune_cmd = app.add_subcommand("prune", "Slice an artifact to a configured rate");
  double rate_pct = 0.0;
  prune_cmd->add_option("--artifact", artifact_path, "Compressed artifact")->required();
  prune_cmd->add_option("--rate", rate_pct, "Global pruning rate in percent")->required();
  prune_cmd->add_option("--out", out_path, "Output artifact path")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Compare a model against a reference; prints JSON");
  eval_cmd->add_option("--model", model_path, "Candidate artifact")->required();
  eval_cmd->add_option("--reference", reference_path, "Reference artifact")->required();
  eval_cmd->add_option("--data", data_path, "Evaluation JSON")->required();

  auto* inspect_cmd = app.add_subcommand("inspect", "Print an artifact manifest");
  inspect_cmd->add_option("--artifact", artifact_path, "Artifact path")->required();

  // CLI11 parses in reverse order.
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (toy->parsed()) {
      std::vector<std::string> kinds;
      std::stringstream ss(layout);
      for (std::string item; std::getline(ss, item, ',');) kinds.push_back(item);
      write_artifact(artifact_from_model(make_toy_model(seed, kinds, vocab)), out_path);
      out << "wrote " << out_path << "\n";
    } else if (make_data->parsed()) {
      write_calibration_set(make_token_set(seed, count, seq_len, vocab), out_path);
      out << "wrote " << out_path << "\n";
    } else if (compress_cmd->parsed()) {
      cfg.rates.clear();
      for (double r : rates_pct) cfg.rates.push_back(percent(r));
      cfg.fusion = fusion == "hadamard" ? FusionConfig::hadamard_all() : FusionConfig::none();
      cfg.quantize = !fp_only;
      cfg.gptq = !rtn;
      cfg.seed = seed;
      const Model model = model_from_artifact(read_plain_model(model_path));
      const ModelArtifact a = compress(model, read_calibration_set(calib_path), cfg);
      write_artifact(a, out_path);
      out << "wrote " << out_path << " (" << serialize_artifact(a).size()
          << " bytes, zero-prune residual " << a.self_check.value_or(0.0) << ")\n";
    } else if (prune_cmd->parsed()) {
      const ModelArtifact pruned = prune_artifact(read_artifact(artifact_path), percent(rate_pct));
      write_artifact(pruned, out_path);
      out << "wrote " << out_path << " (" << serialize_artifact(pruned).size() << " bytes)\n";
    } else if (eval_cmd->parsed()) {
      const EvalMetrics m =
          evaluate(read_artifact(model_path), read_calibration_set(data_path), read_model(reference_path));
      out << json{{"logit_mse", m.logit_mse}, {"logit_kl", m.logit_kl}, {"artifact_bytes", m.artifact_bytes}}.dump()
          << "\n";
    } else if (inspect_cmd->parsed()) {
      out << manifest_json(read_artifact(artifact_path), 2) << "\n";
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace sortq

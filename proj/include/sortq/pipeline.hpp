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

#ifndef SORTQ_PIPELINE_HPP
#define SORTQ_PIPELINE_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "sortq/allocation.hpp"
#include "sortq/artifact.hpp"
#include "sortq/fusion.hpp"
#include "sortq/model.hpp"

namespace sortq {

/// Receives the masks an external trainer would apply at one fine-tuning
/// step. Called once per (step, layer).
using MaskHook = std::function<void(std::size_t step, std::size_t layer, const MaskDraw& draw)>;

struct CompressConfig {
  std::vector<double> rates = {0.15, 0.25, 0.35};
  unsigned bits = 4;
  std::size_t group_size = 128;
  double epsilon = kDefaultEpsilon;
  double lambda = 1.0;
  double damp = 0.01;
  double rate_cap = kDefaultRateCap;
  FusionConfig fusion = FusionConfig::hadamard_all();
  bool quantize = true;  // false keeps an fp32 artifact (sorted and fused)
  bool gptq = true;      // false falls back to round-to-nearest
  std::uint64_t seed = 0;
  std::size_t mask_steps = 0;
  MaskHook mask_hook;
};

/// One pass: capture, sort every block, allocate per-layer rates from block
/// influence, fuse norms and rotations, quantize, and package.
ModelArtifact compress(const Model& model, const CalibrationSet& calib, const CompressConfig& config = {});

/// Channels kept in each prunable group of a layer at rate r.
struct KeptDims {
  std::size_t d_int = 0;     // MLP intermediate
  std::size_t qk = 0;        // per-head query/key width (even)
  std::size_t v = 0;         // per-head value width
  std::size_t state = 0;     // SSM state per group
  std::size_t ssm_head = 0;  // SSM head width
};

KeptDims kept_dims(const BlockSpec& spec, double layer_rate);

/// Slices a stored artifact to a configured global rate (0 is always valid).
/// Only sorted prefixes are dropped; no tensor is re-quantized.
ModelArtifact prune_artifact(const ModelArtifact& artifact, double rate);
/// prune_artifact followed by dequantization into a runnable model.
Model deploy_prune(const ModelArtifact& artifact, double rate);

struct EvalMetrics {
  double logit_mse = 0.0;
  double logit_kl = 0.0;  // mean KL(reference || model) per token
  std::size_t artifact_bytes = 0;
};

EvalMetrics evaluate(const Model& model, const CalibrationSet& eval_set, const Model& reference);
EvalMetrics evaluate(const ModelArtifact& artifact, const CalibrationSet& eval_set, const Model& reference);

/// ||a - b||_F / ||b||_F of logits over the whole set.
double relative_logit_error(const Model& a, const Model& b, const CalibrationSet& set);

}  // namespace sortq

#endif  // SORTQ_PIPELINE_HPP

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

#ifndef SORTQ_ALLOCATION_HPP
#define SORTQ_ALLOCATION_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sortq/matrix.hpp"

namespace sortq {

inline constexpr double kDefaultRateCap = 0.9;
inline constexpr double kDefaultEpsilon = 0.1;

struct LayerRates {
  double global_rate = 0.0;
  std::vector<double> rates;  // one per layer

  bool operator==(const LayerRates&) const = default;
};

/// Per-layer pruning rates for every configured global rate.
struct PruningPlan {
  std::vector<double> global_rates;
  std::vector<LayerRates> per_layer;  // parallel to global_rates
  std::vector<double> bi_scores;
  double epsilon = kDefaultEpsilon;
  double rate_cap = kDefaultRateCap;

  bool has_rate(double rate) const;
  /// Layer rates for `rate`; rate 0 always resolves to all zeros.
  std::vector<double> layer_rates(double rate) const;

  bool operator==(const PruningPlan&) const = default;
};

/// 1 - mean per-row cosine similarity between block input and output rows.
/// Rows where either side is zero are skipped.
double block_influence(const Matrix& x, const Matrix& y);

/// L * p_avg * softmax(-scores / epsilon), clamped to [0, rate_cap] with the
/// excess redistributed proportionally over the unclamped layers.
std::vector<double> allocate_rates(std::span<const double> scores, double p_avg, double epsilon,
                                   double rate_cap = kDefaultRateCap);

PruningPlan make_pruning_plan(std::span<const double> bi_scores, std::span<const double> global_rates,
                              double epsilon = kDefaultEpsilon, double rate_cap = kDefaultRateCap);

/// floor(rate * dim): the channels removed from the tail of a sorted group.
std::size_t pruned_channel_count(double rate, std::size_t dim);
/// dim - floor(rate * dim) == ceil((1 - rate) * dim).
std::size_t kept_channel_count(double rate, std::size_t dim);

struct MaskDraw {
  double global_rate = 0.0;
  double layer_rate = 0.0;
  std::vector<std::vector<bool>> masks;  // true = channel kept
};

/// Seeded stream of fine-tuning masks: each step draws a global rate
/// uniformly from the plan and masks the tail of every sortable group.
class MaskSampler {
 public:
  MaskSampler(const PruningPlan& plan, std::uint64_t seed);

  double draw_rate();
  MaskDraw sample(std::size_t layer, std::span<const std::size_t> dims);

 private:
  const PruningPlan* plan_;
  std::mt19937_64 rng_;
};

MaskDraw masks_for_rate(const PruningPlan& plan, double global_rate, std::size_t layer,
                        std::span<const std::size_t> dims);
MaskDraw sample_mask(const PruningPlan& plan, std::size_t layer, std::span<const std::size_t> dims,
                     std::uint64_t seed);

}  // namespace sortq

#endif  // SORTQ_ALLOCATION_HPP

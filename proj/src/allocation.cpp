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

#include "sortq/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sortq/errors.hpp"

namespace sortq {

namespace {

constexpr double kRateMatchTol = 1e-9;

}  // namespace

bool PruningPlan::has_rate(double rate) const {
  if (std::abs(rate) <= kRateMatchTol) return true;
  return std::any_of(global_rates.begin(), global_rates.end(),
                     [&](double r) { return std::abs(r - rate) <= kRateMatchTol; });
}

std::vector<double> PruningPlan::layer_rates(double rate) const {
  if (std::abs(rate) <= kRateMatchTol) return std::vector<double>(bi_scores.size(), 0.0);
  for (const auto& lr : per_layer) {
    if (std::abs(lr.global_rate - rate) <= kRateMatchTol) return lr.rates;
  }
  throw UnsupportedError("unsupported rate " + std::to_string(rate));
}

double block_influence(const Matrix& x, const Matrix& y) {
  require_same_shape(x, y, "block_influence");
  double cos_sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      dot += x(t, c) * y(t, c);
      nx += x(t, c) * x(t, c);
      ny += y(t, c) * y(t, c);
    }
    if (nx == 0.0 || ny == 0.0) continue;
    cos_sum += std::clamp(dot / std::sqrt(nx * ny), -1.0, 1.0);
    ++counted;
  }
  if (counted == 0) throw NumericalError("block_influence: all rows are zero");
  return 1.0 - cos_sum / static_cast<double>(counted);
}

std::vector<double> allocate_rates(std::span<const double> scores, double p_avg, double epsilon, double rate_cap) {
  if (scores.empty()) throw AllocationError("allocate_rates: no layers");
  if (!(p_avg > 0.0 && p_avg < 1.0)) throw AllocationError("allocate_rates: p_avg must be in (0, 1)");
  if (!(epsilon > 0.0)) throw AllocationError("allocate_rates: epsilon must be positive");
  if (p_avg > rate_cap) {
    throw AllocationError("allocate_rates: infeasible, p_avg " + std::to_string(p_avg) + " exceeds cap " +
                          std::to_string(rate_cap));
  }
  const std::size_t n = scores.size();
  double min_score = std::numeric_limits<double>::infinity();
  for (double s : scores) {
    if (std::isnan(s)) throw AllocationError("allocate_rates: NaN score");
    min_score = std::min(min_score, s);
  }
  if (!std::isfinite(min_score)) throw AllocationError("allocate_rates: no finite score");

  std::vector<double> rates(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    rates[i] = std::exp(-(scores[i] - min_score) / epsilon);
    z += rates[i];
  }
  // p * (n w / z) rather than (n p) w / z: uniform scores give exactly p.
  for (double& r : rates) r = p_avg * (static_cast<double>(n) * r / z);

  std::vector<bool> fixed(n, false);
  for (std::size_t iter = 0; iter <= n; ++iter) {
    double excess = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!fixed[i] && rates[i] > rate_cap) {
        excess += rates[i] - rate_cap;
        rates[i] = rate_cap;
        fixed[i] = true;
      }
    }
    if (excess == 0.0) break;
    double free_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!fixed[i]) free_mass += rates[i];
    if (free_mass <= 0.0) throw AllocationError("allocate_rates: cannot redistribute excess rate");
    for (std::size_t i = 0; i < n; ++i)
      if (!fixed[i]) rates[i] += excess * rates[i] / free_mass;
  }
  return rates;
}

PruningPlan make_pruning_plan(std::span<const double> bi_scores, std::span<const double> global_rates,
                              double epsilon, double rate_cap) {
  PruningPlan plan;
  plan.bi_scores.assign(bi_scores.begin(), bi_scores.end());
  plan.epsilon = epsilon;
  plan.rate_cap = rate_cap;
  for (double rate : global_rates) {
    if (!(rate >= 0.0 && rate < 1.0)) throw AllocationError("global rate must be in [0, 1)");
    plan.global_rates.push_back(rate);
    LayerRates lr;
    lr.global_rate = rate;
    lr.rates = rate == 0.0 ? std::vector<double>(bi_scores.size(), 0.0)
                           : allocate_rates(bi_scores, rate, epsilon, rate_cap);
    plan.per_layer.push_back(std::move(lr));
  }
  return plan;
}

std::size_t pruned_channel_count(double rate, std::size_t dim) {
  if (rate <= 0.0) return 0;
  // The small slack keeps exact products such as 0.35 * 100 from flooring to 34.
  const auto n = static_cast<std::size_t>(std::floor(rate * static_cast<double>(dim) + 1e-9));
  return std::min(n, dim);
}

std::size_t kept_channel_count(double rate, std::size_t dim) { return dim - pruned_channel_count(rate, dim); }

MaskSampler::MaskSampler(const PruningPlan& plan, std::uint64_t seed) : plan_(&plan), rng_(seed) {
  if (plan.global_rates.empty()) throw AllocationError("mask sampler: plan has no rates");
}

double MaskSampler::draw_rate() {
  std::uniform_int_distribution<std::size_t> pick(0, plan_->global_rates.size() - 1);
  return plan_->global_rates[pick(rng_)];
}

MaskDraw MaskSampler::sample(std::size_t layer, std::span<const std::size_t> dims) {
  return masks_for_rate(*plan_, draw_rate(), layer, dims);
}

MaskDraw masks_for_rate(const PruningPlan& plan, double global_rate, std::size_t layer,
                        std::span<const std::size_t> dims) {
  MaskDraw out;
  out.global_rate = global_rate;
  const auto rates = plan.layer_rates(global_rate);
  if (layer >= rates.size()) throw ShapeError("mask: layer index out of range");
  out.layer_rate = rates[layer];
  for (std::size_t d : dims) {
    std::vector<bool> mask(d, true);
    const std::size_t keep = kept_channel_count(out.layer_rate, d);
    for (std::size_t i = keep; i < d; ++i) mask[i] = false;
    out.masks.push_back(std::move(mask));
  }
  return out;
}

MaskDraw sample_mask(const PruningPlan& plan, std::size_t layer, std::span<const std::size_t> dims,
                     std::uint64_t seed) {
  MaskSampler sampler(plan, seed);
  return sampler.sample(layer, dims);
}

}  // namespace sortq

// Copyright 2026 The minis2t Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "minis2t/optimizer.hpp"

#include <cmath>

namespace minis2t {

SchedulerKind scheduler_kind_from_string(const std::string& name) {
  if (name == "fixed") return SchedulerKind::kFixed;
  if (name == "warmup-decay") return SchedulerKind::kWarmupDecay;
  if (name == "plateau-decay") return SchedulerKind::kPlateauDecay;
  throw ConfigError("unknown scheduler '" + name +
                    "' (want fixed | warmup-decay | plateau-decay)");
}

std::string scheduler_kind_to_string(SchedulerKind kind) {
  switch (kind) {
    case SchedulerKind::kFixed: return "fixed";
    case SchedulerKind::kWarmupDecay: return "warmup-decay";
    case SchedulerKind::kPlateauDecay: return "plateau-decay";
  }
  return "fixed";
}

AdamOptimizer::AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params,
                             OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
  slots_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].second.requires_grad()) {
      throw ContractError("optimizer: parameter '" + params_[i].first +
                          "' does not require gradients");
    }
    size_t n = static_cast<size_t>(params_[i].second.size());
    slots_[i].m.assign(n, 0.0f);
    slots_[i].v.assign(n, 0.0f);
  }
}

double AdamOptimizer::lr_at(int64_t step) const {
  double lr = config_.learning_rate;
  switch (config_.scheduler) {
    case SchedulerKind::kFixed:
      return lr;
    case SchedulerKind::kWarmupDecay: {
      double s = static_cast<double>(step);
      double w = static_cast<double>(std::max(1, config_.warmup_steps));
      return lr * std::min(s / w, std::sqrt(w / s));
    }
    case SchedulerKind::kPlateauDecay:
      return lr * std::pow(config_.plateau_factor, plateau_decays_);
  }
  return lr;
}

double AdamOptimizer::current_lr() const { return lr_at(step_count_ + 1); }

void AdamOptimizer::step() {
  ++step_count_;
  double lr = lr_at(step_count_);
  double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));

  double clip_scale = 1.0;
  if (config_.clip_grad_norm > 0.0) {
    double sq = 0.0;
    for (auto& [name, p] : params_) {
      for (float g : p.grad()) sq += static_cast<double>(g) * g;
    }
    double norm = std::sqrt(sq);
    if (norm > config_.clip_grad_norm) clip_scale = config_.clip_grad_norm / norm;
  }

  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].second;
    const std::vector<float>& g = p.grad();
    float* values = p.data();
    Slot& slot = slots_[i];
    for (size_t j = 0; j < g.size(); ++j) {
      double gj = static_cast<double>(g[j]) * clip_scale;
      if (!std::isfinite(gj)) {
        throw NumericError("non-finite gradient for parameter '" + params_[i].first + "'");
      }
      double m = config_.beta1 * slot.m[j] + (1.0 - config_.beta1) * gj;
      double v = config_.beta2 * slot.v[j] + (1.0 - config_.beta2) * gj * gj;
      slot.m[j] = static_cast<float>(m);
      slot.v[j] = static_cast<float>(v);
      double mhat = m / bc1;
      double vhat = v / bc2;
      values[j] = static_cast<float>(values[j] - lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

void AdamOptimizer::report_validation(bool improved) {
  if (config_.scheduler == SchedulerKind::kPlateauDecay && !improved) {
    ++plateau_decays_;
  }
}

void AdamOptimizer::restore(int64_t step_count, int plateau_decays, std::vector<Slot> slots) {
  if (slots.size() != params_.size()) {
    throw ContractError("optimizer restore: slot count mismatch");
  }
  for (size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].m.size() != static_cast<size_t>(params_[i].second.size())) {
      throw ShapeError("optimizer restore: moment size mismatch for '" + params_[i].first + "'");
    }
  }
  step_count_ = step_count;
  plateau_decays_ = plateau_decays;
  slots_ = std::move(slots);
}

}  // namespace minis2t

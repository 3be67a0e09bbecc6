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

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "minis2t/common.hpp"
#include "minis2t/tensor.hpp"

namespace minis2t {

using Tensor = TensorT<float>;
using Tape = TapeT<float>;
using TapeGuard = TapeScope<float>;

enum class SchedulerKind { kFixed, kWarmupDecay, kPlateauDecay };

SchedulerKind scheduler_kind_from_string(const std::string& name);
std::string scheduler_kind_to_string(SchedulerKind kind);

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  // 0 disables clipping; otherwise gradients are rescaled so their global
  // L2 norm does not exceed this.
  double clip_grad_norm = 0.0;
  SchedulerKind scheduler = SchedulerKind::kFixed;
  // warmup-decay: linear ramp over warmup_steps, then inverse-sqrt decay.
  int warmup_steps = 4000;
  // plateau-decay: multiply the rate by this when validation fails to improve.
  double plateau_factor = 0.5;
};

// Adam with bias correction, bound to a fixed list of named parameters.
// step() reads each parameter's gradient (zeros if the loss never touched
// it) and updates values in place. Deterministic: same state + same grads
// give bitwise identical updates.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params, OptimizerConfig config);

  void step();
  void zero_grad();

  // Hook for the plateau scheduler; call once per validation.
  void report_validation(bool improved);

  int64_t step_count() const { return step_count_; }
  // Learning rate the *next* step will use.
  double current_lr() const;

  const OptimizerConfig& config() const { return config_; }
  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }

  // Serializable state: per-parameter first/second moments plus counters.
  struct Slot {
    std::vector<float> m;
    std::vector<float> v;
  };
  const std::vector<Slot>& slots() const { return slots_; }
  int plateau_decays() const { return plateau_decays_; }

  void restore(int64_t step_count, int plateau_decays, std::vector<Slot> slots);

 private:
  double lr_at(int64_t step) const;

  std::vector<std::pair<std::string, Tensor>> params_;
  OptimizerConfig config_;
  std::vector<Slot> slots_;
  int64_t step_count_ = 0;
  int plateau_decays_ = 0;
};

}  // namespace minis2t

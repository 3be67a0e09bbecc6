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
//
// Checkpoint container format (all integers little-endian):
//
//   magic   "MS2T"
//   u32     format version (currently 1)
//   u32     number of model records
//   record* model records
//   u32     number of optimizer-state records
//   record* optimizer-state records
//
// where each record is
//
//   u32     name length, then that many UTF-8 bytes
//   u32     rank, then rank u32 extents
//   f32*    row-major payload (product of extents values)
//
// The model configuration travels inside the file as a record named
// "__config__": a rank-1 record whose f32 payload holds the bytes of a YAML
// blob, one byte value per element. That keeps every record readable by the
// same code path at the cost of 4x on a <2 KB string.

#pragma once

#include <string>
#include <vector>

#include "minis2t/common.hpp"
#include "minis2t/tensor.hpp"

namespace minis2t {

inline constexpr char kCheckpointMagic[4] = {'M', 'S', '2', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr const char* kConfigRecordName = "__config__";

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::vector<CheckpointRecord> model;
  std::vector<CheckpointRecord> optimizer;

  // Returns nullptr when absent.
  const CheckpointRecord* find_model(const std::string& name) const;
  const CheckpointRecord* find_optimizer(const std::string& name) const;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

// Text <-> record helpers for the embedded config blob.
CheckpointRecord make_text_record(const std::string& name, const std::string& text);
std::string text_from_record(const CheckpointRecord& record);

// Element-wise mean over checkpoints of identical structure. Optimizer
// sections are dropped; record names and shapes must match the first input.
Checkpoint average_checkpoints(const std::vector<Checkpoint>& inputs);

}  // namespace minis2t

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

#include "minis2t/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint i/o assumes a little-endian host");

namespace minis2t {

namespace {

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t read_u32(std::istream& in, const std::string& path) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw DataError("truncated checkpoint: " + path);
  return v;
}

void write_record(std::ostream& out, const CheckpointRecord& r) {
  write_u32(out, static_cast<uint32_t>(r.name.size()));
  out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
  write_u32(out, static_cast<uint32_t>(r.shape.size()));
  for (int d : r.shape) write_u32(out, static_cast<uint32_t>(d));
  out.write(reinterpret_cast<const char*>(r.values.data()),
            static_cast<std::streamsize>(r.values.size() * sizeof(float)));
}

CheckpointRecord read_record(std::istream& in, const std::string& path) {
  CheckpointRecord r;
  uint32_t name_len = read_u32(in, path);
  r.name.resize(name_len);
  in.read(r.name.data(), name_len);
  uint32_t rank = read_u32(in, path);
  if (rank > 8) throw DataError("corrupt checkpoint record (rank " + std::to_string(rank) + "): " + path);
  int64_t numel = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    uint32_t d = read_u32(in, path);
    if (d == 0) throw DataError("corrupt checkpoint record (zero extent): " + path);
    r.shape.push_back(static_cast<int>(d));
    numel *= d;
  }
  r.values.resize(static_cast<size_t>(numel));
  in.read(reinterpret_cast<char*>(r.values.data()),
          static_cast<std::streamsize>(r.values.size() * sizeof(float)));
  if (!in) throw DataError("truncated checkpoint: " + path);
  return r;
}

}  // namespace

const CheckpointRecord* Checkpoint::find_model(const std::string& name) const {
  for (const auto& r : model) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

const CheckpointRecord* Checkpoint::find_optimizer(const std::string& name) const {
  for (const auto& r : optimizer) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<uint32_t>(ckpt.model.size()));
  for (const auto& r : ckpt.model) write_record(out, r);
  write_u32(out, static_cast<uint32_t>(ckpt.optimizer.size()));
  for (const auto& r : ckpt.optimizer) write_record(out, r);
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw DataError("not a checkpoint (bad magic): " + path);
  }
  uint32_t version = read_u32(in, path);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  }
  Checkpoint ckpt;
  uint32_t n_model = read_u32(in, path);
  for (uint32_t i = 0; i < n_model; ++i) ckpt.model.push_back(read_record(in, path));
  uint32_t n_opt = read_u32(in, path);
  for (uint32_t i = 0; i < n_opt; ++i) ckpt.optimizer.push_back(read_record(in, path));
  return ckpt;
}

CheckpointRecord make_text_record(const std::string& name, const std::string& text) {
  CheckpointRecord r;
  r.name = name;
  r.shape = {static_cast<int>(text.empty() ? 1 : text.size())};
  if (text.empty()) {
    r.values = {0.0f};
  } else {
    r.values.reserve(text.size());
    for (char c : text) r.values.push_back(static_cast<float>(static_cast<unsigned char>(c)));
  }
  return r;
}

std::string text_from_record(const CheckpointRecord& record) {
  std::string text;
  text.reserve(record.values.size());
  for (float v : record.values) {
    int b = static_cast<int>(v);
    if (b == 0) continue;  // empty-text placeholder
    text.push_back(static_cast<char>(static_cast<unsigned char>(b)));
  }
  return text;
}

Checkpoint average_checkpoints(const std::vector<Checkpoint>& inputs) {
  if (inputs.empty()) throw ContractError("average_checkpoints: no inputs");
  Checkpoint out;
  out.model = inputs[0].model;
  const double k = static_cast<double>(inputs.size());
  for (size_t r = 0; r < out.model.size(); ++r) {
    std::vector<double> acc(out.model[r].values.begin(), out.model[r].values.end());
    for (size_t i = 1; i < inputs.size(); ++i) {
      if (r >= inputs[i].model.size() || inputs[i].model[r].name != out.model[r].name ||
          inputs[i].model[r].shape != out.model[r].shape) {
        throw ShapeError("average_checkpoints: record '" + out.model[r].name +
                         "' missing or shaped differently in input " + std::to_string(i));
      }
      const auto& v = inputs[i].model[r].values;
      if (out.model[r].name == kConfigRecordName && v != out.model[r].values) {
        throw DataError("average_checkpoints: inputs disagree on embedded model config");
      }
      for (size_t j = 0; j < v.size(); ++j) acc[j] += v[j];
    }
    if (out.model[r].name == kConfigRecordName) continue;  // carried through verbatim
    for (size_t j = 0; j < acc.size(); ++j) {
      out.model[r].values[j] = static_cast<float>(acc[j] / k);
    }
  }
  return out;
}

}  // namespace minis2t

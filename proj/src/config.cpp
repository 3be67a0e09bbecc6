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

#include "minis2t/config.hpp"

#include <charconv>
#include <cstdlib>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "minis2t/common.hpp"

namespace minis2t {
namespace {

[[noreturn]] void fail_at(int line, const std::string& message) {
  throw ConfigError("config line " + std::to_string(line) + ": " + message);
}

struct RawLine {
  int number = 0;  // 1-based source line
  int indent = 0;  // in two-space steps
  std::string text;
};

// Comment- and blank-stripped lines with indentation measured. A '#' starts
// a comment at the line head or after whitespace, unless inside
// double quotes.
std::vector<RawLine> scan_lines(const std::string& text) {
  std::vector<RawLine> out;
  int number = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++number;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool in_quotes = false;
    std::size_t cut = std::string::npos;
    for (std::size_t i = 0; i < line.size(); ++i) {
      char c = line[i];
      if (c == '"') {
        in_quotes = !in_quotes;
      } else if (c == '#' && !in_quotes &&
                 (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
        cut = i;
        break;
      }
    }
    if (cut != std::string::npos) line = line.substr(0, cut);
    std::size_t pos = 0;
    while (pos < line.size() && line[pos] == ' ') ++pos;
    if (pos < line.size() && line[pos] == '\t') {
      fail_at(number, "tab in indentation (use two-space steps)");
    }
    std::string body = trim(line.substr(pos));
    if (body.empty()) continue;
    if (pos % 2 != 0) fail_at(number, "indentation must use two-space steps");
    out.push_back({number, static_cast<int>(pos / 2), std::move(body)});
  }
  return out;
}

std::string unquote(const std::string& value, int line) {
  if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
    return value.substr(1, value.size() - 2);
  }
  if (!value.empty() && value.front() == '"') {
    fail_at(line, "unterminated quoted value");
  }
  return value;
}

YamlNode parse_block(const std::vector<RawLine>& lines, std::size_t& pos,
                     int indent);

bool is_list_item(const std::string& body) {
  return body[0] == '-' && (body.size() == 1 || body[1] == ' ');
}

YamlNode parse_map(const std::vector<RawLine>& lines, std::size_t& pos,
                   int indent) {
  YamlNode node;
  node.kind = YamlNode::Kind::kMap;
  node.line = lines[pos].number;
  while (pos < lines.size()) {
    const RawLine& ln = lines[pos];
    if (ln.indent < indent) break;
    if (ln.indent > indent) fail_at(ln.number, "unexpected indent");
    if (is_list_item(ln.text)) {
      fail_at(ln.number, "expected \"key: value\", found a list item");
    }
    std::size_t colon = ln.text.find(':');
    if (colon == std::string::npos) {
      fail_at(ln.number, "expected \"key: value\"");
    }
    if (colon + 1 < ln.text.size() && ln.text[colon + 1] != ' ') {
      fail_at(ln.number, "expected a space after ':'");
    }
    std::string key = trim(ln.text.substr(0, colon));
    if (key.empty()) fail_at(ln.number, "empty key");
    for (const auto& entry : node.entries) {
      if (entry.first == key) {
        fail_at(ln.number, "duplicate key \"" + key + "\"");
      }
    }
    std::string rest =
        colon + 1 < ln.text.size() ? trim(ln.text.substr(colon + 1)) : "";
    ++pos;
    YamlNode child;
    if (rest.empty()) {
      if (pos < lines.size() && lines[pos].indent > indent) {
        if (lines[pos].indent != indent + 1) {
          fail_at(lines[pos].number, "unexpected indent");
        }
        child = parse_block(lines, pos, indent + 1);
      } else {
        child.kind = YamlNode::Kind::kScalar;
        child.line = ln.number;
      }
    } else {
      child.kind = YamlNode::Kind::kScalar;
      child.scalar = unquote(rest, ln.number);
      child.line = ln.number;
    }
    node.entries.emplace_back(std::move(key), std::move(child));
  }
  return node;
}

YamlNode parse_list(const std::vector<RawLine>& lines, std::size_t& pos,
                    int indent) {
  YamlNode node;
  node.kind = YamlNode::Kind::kList;
  node.line = lines[pos].number;
  while (pos < lines.size()) {
    const RawLine& ln = lines[pos];
    if (ln.indent < indent) break;
    if (ln.indent > indent) fail_at(ln.number, "unexpected indent");
    if (!is_list_item(ln.text)) {
      fail_at(ln.number, "expected \"- item\"");
    }
    std::string item = ln.text.size() >= 2 ? trim(ln.text.substr(2)) : "";
    if (item.empty()) fail_at(ln.number, "empty list item");
    YamlNode child;
    child.kind = YamlNode::Kind::kScalar;
    child.scalar = unquote(item, ln.number);
    child.line = ln.number;
    node.items.push_back(std::move(child));
    ++pos;
    if (pos < lines.size() && lines[pos].indent > indent) {
      fail_at(lines[pos].number,
              "nested structures in lists are not supported");
    }
  }
  return node;
}

YamlNode parse_block(const std::vector<RawLine>& lines, std::size_t& pos,
                     int indent) {
  if (is_list_item(lines[pos].text)) return parse_list(lines, pos, indent);
  return parse_map(lines, pos, indent);
}

template <class T>
T parse_number(const std::string& text, const std::string& key_path,
               const char* wanted) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last) {
    throw ConfigError(key_path + ": expected " + wanted + ", got \"" + text +
                      "\"");
  }
  return value;
}

// Tracks which keys of one map were consumed so finish() can name every
// leftover with its dotted path.
class MapReader {
 public:
  MapReader(const YamlNode* node, std::string path)
      : node_(node), path_(std::move(path)) {}

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  std::string get_string(const std::string& key, std::string fallback) {
    const YamlNode* n = get(key);
    if (!n) return fallback;
    return scalar_of(n, key);
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) {
    const YamlNode* n = get(key);
    if (!n) return fallback;
    return parse_number<std::int64_t>(scalar_of(n, key), key_path(key),
                                      "an integer");
  }

  int get_int32(const std::string& key, int fallback) {
    std::int64_t v = get_int(key, fallback);
    if (v < std::numeric_limits<int>::min() ||
        v > std::numeric_limits<int>::max()) {
      throw ConfigError(key_path(key) + ": value out of range");
    }
    return static_cast<int>(v);
  }

  std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) {
    const YamlNode* n = get(key);
    if (!n) return fallback;
    return parse_number<std::uint64_t>(scalar_of(n, key), key_path(key),
                                       "an unsigned integer");
  }

  double get_double(const std::string& key, double fallback) {
    const YamlNode* n = get(key);
    if (!n) return fallback;
    return parse_number<double>(scalar_of(n, key), key_path(key), "a number");
  }

  bool get_bool(const std::string& key, bool fallback) {
    const YamlNode* n = get(key);
    if (!n) return fallback;
    const std::string& s = scalar_of(n, key);
    if (s == "true") return true;
    if (s == "false") return false;
    throw ConfigError(key_path(key) + ": expected true or false, got \"" + s +
                      "\"");
  }

  std::vector<std::string> get_string_list(const std::string& key) {
    const YamlNode* n = get(key);
    if (!n) return {};
    if (n->kind == YamlNode::Kind::kScalar && n->scalar.empty()) return {};
    if (n->kind != YamlNode::Kind::kList) {
      throw ConfigError(key_path(key) + ": expected a list");
    }
    std::vector<std::string> out;
    out.reserve(n->items.size());
    for (const YamlNode& item : n->items) out.push_back(item.scalar);
    return out;
  }

  MapReader section(const std::string& key) {
    const YamlNode* n = get(key);
    if (!n) return MapReader(nullptr, key_path(key));
    if (n->kind == YamlNode::Kind::kScalar && n->scalar.empty()) {
      return MapReader(nullptr, key_path(key));
    }
    if (n->kind != YamlNode::Kind::kMap) {
      throw ConfigError(key_path(key) + ": expected a section");
    }
    return MapReader(n, key_path(key));
  }

  void finish() {
    if (!node_) return;
    for (const auto& entry : node_->entries) {
      if (!seen_.count(entry.first)) {
        throw ConfigError("unknown key: " + key_path(entry.first));
      }
    }
  }

 private:
  const YamlNode* get(const std::string& key) {
    seen_.insert(key);
    return node_ ? node_->find(key) : nullptr;
  }

  const std::string& scalar_of(const YamlNode* n, const std::string& key) {
    if (n->kind != YamlNode::Kind::kScalar) {
      throw ConfigError(key_path(key) + ": expected a scalar value");
    }
    return n->scalar;
  }

  const YamlNode* node_;
  std::string path_;
  std::set<std::string> seen_;
};

// Re-tags conversion failures (which name only the bad value) with the
// config key they came from.
template <class Fn>
auto parse_named(const std::string& key_path, const std::string& value,
                 Fn&& fn) {
  try {
    return fn(value);
  } catch (const Error& err) {
    throw ConfigError(key_path + ": " + err.what());
  }
}

BatchLoadOptions::Cmvn cmvn_from_string(const std::string& name) {
  if (name == "utterance") return BatchLoadOptions::Cmvn::kUtterance;
  if (name == "global") return BatchLoadOptions::Cmvn::kGlobal;
  if (name == "none") return BatchLoadOptions::Cmvn::kNone;
  throw ConfigError("unknown cmvn mode \"" + name +
                    "\" (want utterance, global, or none)");
}

std::string cmvn_to_string(BatchLoadOptions::Cmvn cmvn) {
  switch (cmvn) {
    case BatchLoadOptions::Cmvn::kUtterance:
      return "utterance";
    case BatchLoadOptions::Cmvn::kGlobal:
      return "global";
    case BatchLoadOptions::Cmvn::kNone:
      return "none";
  }
  throw ContractError("invalid Cmvn value");
}

bool target_from_string(const std::string& name) {
  if (name == "transcript") return false;
  if (name == "translation") return true;
  throw ConfigError("unknown target column \"" + name +
                    "\" (want transcript or translation)");
}

RunConfig config_from_node(const YamlNode& root) {
  RunConfig cfg;
  MapReader r(&root, "");

  cfg.task = parse_named(r.key_path("task"),
                         r.get_string("task", task_kind_to_string(cfg.task)),
                         task_kind_from_string);
  {
    MapReader d = r.section("data");
    DataSection& s = cfg.data;
    s.train_manifest = d.get_string("train_manifest", s.train_manifest);
    s.dev_manifest = d.get_string("dev_manifest", s.dev_manifest);
    s.vocab = d.get_string("vocab", s.vocab);
    s.tokenizer = parse_named(
        d.key_path("tokenizer"),
        d.get_string("tokenizer", token_scheme_to_string(s.tokenizer)),
        token_scheme_from_string);
    s.bpe_merges = d.get_string("bpe_merges", s.bpe_merges);
    s.src_vocab = d.get_string("src_vocab", s.src_vocab);
    s.src_tokenizer = parse_named(
        d.key_path("src_tokenizer"),
        d.get_string("src_tokenizer", token_scheme_to_string(s.src_tokenizer)),
        token_scheme_from_string);
    s.src_bpe_merges = d.get_string("src_bpe_merges", s.src_bpe_merges);
    s.target_translation = parse_named(
        d.key_path("target"),
        d.get_string("target", s.target_translation ? "translation"
                                                    : "transcript"),
        target_from_string);
    s.protected_tokens = d.get_string_list("protected_tokens");
    s.min_frames = d.get_int("min_frames", s.min_frames);
    s.max_frames = d.get_int("max_frames", s.max_frames);
    s.max_target_tokens = d.get_int("max_target_tokens", s.max_target_tokens);
    s.cmvn = parse_named(d.key_path("cmvn"),
                         d.get_string("cmvn", cmvn_to_string(s.cmvn)),
                         cmvn_from_string);
    s.sample_rate_hz = d.get_int32("sample_rate_hz", s.sample_rate_hz);
    d.finish();
  }
  {
    MapReader m = r.section("model");
    ModelSection& s = cfg.model;
    s.feature_dim = m.get_int32("feature_dim", s.feature_dim);
    s.d_model = m.get_int32("d_model", s.d_model);
    s.num_heads = m.get_int32("num_heads", s.num_heads);
    s.ffn_dim = m.get_int32("ffn_dim", s.ffn_dim);
    s.num_encoder_layers =
        m.get_int32("num_encoder_layers", s.num_encoder_layers);
    s.num_decoder_layers =
        m.get_int32("num_decoder_layers", s.num_decoder_layers);
    s.num_conv_layers = m.get_int32("num_conv_layers", s.num_conv_layers);
    s.conv_kernel = m.get_int32("conv_kernel", s.conv_kernel);
    s.conv_stride = m.get_int32("conv_stride", s.conv_stride);
    s.dropout = m.get_double("dropout", s.dropout);
    s.use_ctc = m.get_bool("use_ctc", s.use_ctc);
    m.finish();
  }
  {
    MapReader t = r.section("training");
    TrainingSection& s = cfg.training;
    s.ctc_weight = t.get_double("ctc_weight", s.ctc_weight);
    s.label_smoothing = t.get_double("label_smoothing", s.label_smoothing);
    s.seed = t.get_uint64("seed", s.seed);
    s.learning_rate = t.get_double("learning_rate", s.learning_rate);
    s.scheduler = parse_named(
        t.key_path("scheduler"),
        t.get_string("scheduler", scheduler_kind_to_string(s.scheduler)),
        scheduler_kind_from_string);
    s.warmup_steps = t.get_int32("warmup_steps", s.warmup_steps);
    s.plateau_factor = t.get_double("plateau_factor", s.plateau_factor);
    s.clip_grad_norm = t.get_double("clip_grad_norm", s.clip_grad_norm);
    s.batch_frames = t.get_int("batch_frames", s.batch_frames);
    s.bucketing = t.get_bool("bucketing", s.bucketing);
    s.max_steps = t.get_int("max_steps", s.max_steps);
    s.validation_freq = t.get_int32("validation_freq", s.validation_freq);
    s.patience = t.get_int32("patience", s.patience);
    s.keep_best = t.get_int32("keep_best", s.keep_best);
    s.out_dir = t.get_string("out_dir", s.out_dir);
    s.specaugment = t.get_bool("specaugment", s.specaugment);
    s.num_freq_masks = t.get_int32("num_freq_masks", s.num_freq_masks);
    s.max_freq_width = t.get_int32("max_freq_width", s.max_freq_width);
    s.num_time_masks = t.get_int32("num_time_masks", s.num_time_masks);
    s.max_time_width = t.get_int32("max_time_width", s.max_time_width);
    t.finish();
  }
  {
    MapReader te = r.section("testing");
    TestingSection& s = cfg.testing;
    s.beam_size = te.get_int32("beam_size", s.beam_size);
    s.max_len = te.get_int32("max_len", s.max_len);
    s.length_penalty = te.get_double("length_penalty", s.length_penalty);
    s.repetition_penalty =
        te.get_double("repetition_penalty", s.repetition_penalty);
    s.no_repeat_ngram = te.get_int32("no_repeat_ngram", s.no_repeat_ngram);
    s.metric = parse_named(
        te.key_path("metric"),
        te.get_string("metric", metric_kind_to_string(s.metric)),
        metric_kind_from_string);
    s.batch_frames = te.get_int("batch_frames", s.batch_frames);
    te.finish();
  }
  r.finish();
  return cfg;
}

void apply_env_seed(RunConfig& cfg) {
  const char* env = std::getenv("MS2T_SEED");
  if (env == nullptr) return;
  std::string text(env);
  std::uint64_t value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last) {
    throw ConfigError("MS2T_SEED: expected an unsigned integer, got \"" +
                      text + "\"");
  }
  cfg.training.seed = value;
}

[[noreturn]] void fail_key(const std::string& key, const std::string& what) {
  throw ConfigError(key + " " + what);
}

void check_range_01_closed(const std::string& key, double v) {
  if (!(v >= 0.0 && v <= 1.0)) {
    fail_key(key, "must be in [0, 1], got " + format_double(v));
  }
}

void check_range_01_half_open(const std::string& key, double v) {
  if (!(v >= 0.0 && v < 1.0)) {
    fail_key(key, "must be in [0, 1), got " + format_double(v));
  }
}

void check_min_int(const std::string& key, std::int64_t v, std::int64_t lo) {
  if (v < lo) {
    fail_key(key, "must be >= " + std::to_string(lo) + ", got " +
                      std::to_string(v));
  }
}

std::string quote_value(const std::string& value) {
  if (value.empty()) return value;
  bool needs = value.find('#') != std::string::npos ||
               value.front() == ' ' || value.back() == ' ' ||
               value.front() == '"';
  if (!needs) return value;
  if (value.find('"') != std::string::npos &&
      value.find('#') != std::string::npos) {
    throw ContractError("config value mixes '#' and '\"'; cannot serialize: " +
                        value);
  }
  return "\"" + value + "\"";
}

void emit(std::string& out, const char* key, const std::string& value) {
  out += "  ";
  out += key;
  out += ':';
  std::string quoted = quote_value(value);
  if (!quoted.empty()) {
    out += ' ';
    out += quoted;
  }
  out += '\n';
}

void emit(std::string& out, const char* key, std::int64_t value) {
  emit(out, key, std::to_string(value));
}

void emit(std::string& out, const char* key, int value) {
  emit(out, key, std::to_string(value));
}

void emit(std::string& out, const char* key, std::uint64_t value) {
  emit(out, key, std::to_string(value));
}

void emit(std::string& out, const char* key, double value) {
  emit(out, key, format_double(value));
}

void emit(std::string& out, const char* key, bool value) {
  emit(out, key, std::string(value ? "true" : "false"));
}

}  // namespace

const YamlNode* YamlNode::find(const std::string& key) const {
  if (kind != Kind::kMap) return nullptr;
  for (const auto& entry : entries) {
    if (entry.first == key) return &entry.second;
  }
  return nullptr;
}

YamlNode parse_yaml(const std::string& text) {
  std::vector<RawLine> lines = scan_lines(text);
  if (lines.empty()) {
    YamlNode node;
    node.kind = YamlNode::Kind::kMap;
    node.line = 1;
    return node;
  }
  std::size_t pos = 0;
  return parse_block(lines, pos, 0);
}

TaskKind task_kind_from_string(const std::string& name) {
  std::string folded = lowercase_ascii(name);
  if (folded == "s2t") return TaskKind::kS2T;
  if (folded == "mt") return TaskKind::kMT;
  throw ConfigError("unknown task \"" + name + "\" (want s2t or mt)");
}

std::string task_kind_to_string(TaskKind task) {
  switch (task) {
    case TaskKind::kS2T:
      return "s2t";
    case TaskKind::kMT:
      return "mt";
  }
  throw ContractError("invalid TaskKind value");
}

MetricKind metric_kind_from_string(const std::string& name) {
  if (name == "wer") return MetricKind::kWer;
  if (name == "bleu") return MetricKind::kBleu;
  if (name == "chrf") return MetricKind::kChrf;
  throw ConfigError("unknown metric \"" + name +
                    "\" (want wer, bleu, or chrf)");
}

std::string metric_kind_to_string(MetricKind metric) {
  switch (metric) {
    case MetricKind::kWer:
      return "wer";
    case MetricKind::kBleu:
      return "bleu";
    case MetricKind::kChrf:
      return "chrf";
  }
  throw ContractError("invalid MetricKind value");
}

void RunConfig::validate() const {
  if (data.vocab.empty()) fail_key("data.vocab", "is required");
  if (data.tokenizer == TokenScheme::kBpe && data.bpe_merges.empty()) {
    throw ConfigError("data.tokenizer bpe requires data.bpe_merges");
  }
  check_min_int("data.min_frames", data.min_frames, 1);
  if (data.max_frames < data.min_frames) {
    fail_key("data.max_frames", "must be >= data.min_frames");
  }
  check_min_int("data.max_target_tokens", data.max_target_tokens, 1);
  check_min_int("data.sample_rate_hz", data.sample_rate_hz, 1);

  check_min_int("model.d_model", model.d_model, 1);
  check_min_int("model.num_heads", model.num_heads, 1);
  if (model.d_model % model.num_heads != 0) {
    fail_key("model.d_model", "must be divisible by model.num_heads");
  }
  check_min_int("model.ffn_dim", model.ffn_dim, 1);
  check_min_int("model.num_encoder_layers", model.num_encoder_layers, 1);
  check_min_int("model.num_decoder_layers", model.num_decoder_layers, 1);
  check_min_int("model.num_conv_layers", model.num_conv_layers, 0);
  check_min_int("model.conv_kernel", model.conv_kernel, 1);
  check_min_int("model.conv_stride", model.conv_stride, 1);
  check_range_01_half_open("model.dropout", model.dropout);

  if (task == TaskKind::kS2T) {
    if (model.feature_dim < 1) {
      fail_key("model.feature_dim", "must be >= 1 for task s2t");
    }
  } else {
    if (data.src_vocab.empty()) {
      fail_key("data.src_vocab", "is required for task mt");
    }
    if (data.src_tokenizer == TokenScheme::kBpe &&
        data.src_bpe_merges.empty()) {
      throw ConfigError("data.src_tokenizer bpe requires data.src_bpe_merges");
    }
    if (model.use_ctc) fail_key("model.use_ctc", "must be false for task mt");
    if (training.ctc_weight != 0.0) {
      fail_key("training.ctc_weight", "must be 0 for task mt");
    }
    if (!data.target_translation) {
      fail_key("data.target", "must be translation for task mt");
    }
  }

  check_range_01_closed("training.ctc_weight", training.ctc_weight);
  if (!model.use_ctc && training.ctc_weight != 0.0) {
    fail_key("training.ctc_weight", "must be 0 when model.use_ctc is false");
  }
  check_range_01_half_open("training.label_smoothing",
                           training.label_smoothing);
  if (!(training.learning_rate > 0.0)) {
    fail_key("training.learning_rate",
             "must be > 0, got " + format_double(training.learning_rate));
  }
  if (training.scheduler == SchedulerKind::kWarmupDecay) {
    check_min_int("training.warmup_steps", training.warmup_steps, 1);
  } else {
    check_min_int("training.warmup_steps", training.warmup_steps, 0);
  }
  if (training.scheduler == SchedulerKind::kPlateauDecay &&
      !(training.plateau_factor > 0.0 && training.plateau_factor < 1.0)) {
    fail_key("training.plateau_factor",
             "must be in (0, 1), got " + format_double(training.plateau_factor));
  }
  if (training.clip_grad_norm < 0.0) {
    fail_key("training.clip_grad_norm", "must be >= 0 (0 disables clipping)");
  }
  check_min_int("training.batch_frames", training.batch_frames, 1);
  check_min_int("training.max_steps", training.max_steps, 0);
  check_min_int("training.validation_freq", training.validation_freq, 1);
  check_min_int("training.patience", training.patience, 1);
  check_min_int("training.keep_best", training.keep_best, 1);
  if (training.out_dir.empty()) fail_key("training.out_dir", "is required");
  check_min_int("training.num_freq_masks", training.num_freq_masks, 0);
  check_min_int("training.max_freq_width", training.max_freq_width, 0);
  check_min_int("training.num_time_masks", training.num_time_masks, 0);
  check_min_int("training.max_time_width", training.max_time_width, 0);
  if (task == TaskKind::kS2T && training.specaugment &&
      training.max_freq_width > model.feature_dim) {
    fail_key("training.max_freq_width", "must be <= model.feature_dim");
  }

  check_min_int("testing.beam_size", testing.beam_size, 1);
  check_min_int("testing.max_len", testing.max_len, 1);
  if (testing.length_penalty < 0.0) {
    fail_key("testing.length_penalty",
             "must be >= 0, got " + format_double(testing.length_penalty));
  }
  if (testing.repetition_penalty < 1.0) {
    fail_key("testing.repetition_penalty",
             "must be >= 1, got " + format_double(testing.repetition_penalty));
  }
  check_min_int("testing.no_repeat_ngram", testing.no_repeat_ngram, 0);
  check_min_int("testing.batch_frames", testing.batch_frames, 1);
}

std::string RunConfig::to_yaml() const {
  std::string out;
  out += "task: " + task_kind_to_string(task) + "\n";

  out += "data:\n";
  emit(out, "train_manifest", data.train_manifest);
  emit(out, "dev_manifest", data.dev_manifest);
  emit(out, "vocab", data.vocab);
  emit(out, "tokenizer", token_scheme_to_string(data.tokenizer));
  emit(out, "bpe_merges", data.bpe_merges);
  emit(out, "src_vocab", data.src_vocab);
  emit(out, "src_tokenizer", token_scheme_to_string(data.src_tokenizer));
  emit(out, "src_bpe_merges", data.src_bpe_merges);
  emit(out, "target",
       std::string(data.target_translation ? "translation" : "transcript"));
  out += "  protected_tokens:\n";
  for (const std::string& token : data.protected_tokens) {
    out += "    - " + quote_value(token) + "\n";
  }
  emit(out, "min_frames", data.min_frames);
  emit(out, "max_frames", data.max_frames);
  emit(out, "max_target_tokens", data.max_target_tokens);
  emit(out, "cmvn", cmvn_to_string(data.cmvn));
  emit(out, "sample_rate_hz", data.sample_rate_hz);

  out += "model:\n";
  emit(out, "feature_dim", model.feature_dim);
  emit(out, "d_model", model.d_model);
  emit(out, "num_heads", model.num_heads);
  emit(out, "ffn_dim", model.ffn_dim);
  emit(out, "num_encoder_layers", model.num_encoder_layers);
  emit(out, "num_decoder_layers", model.num_decoder_layers);
  emit(out, "num_conv_layers", model.num_conv_layers);
  emit(out, "conv_kernel", model.conv_kernel);
  emit(out, "conv_stride", model.conv_stride);
  emit(out, "dropout", model.dropout);
  emit(out, "use_ctc", model.use_ctc);

  out += "training:\n";
  emit(out, "ctc_weight", training.ctc_weight);
  emit(out, "label_smoothing", training.label_smoothing);
  emit(out, "seed", training.seed);
  emit(out, "learning_rate", training.learning_rate);
  emit(out, "scheduler", scheduler_kind_to_string(training.scheduler));
  emit(out, "warmup_steps", training.warmup_steps);
  emit(out, "plateau_factor", training.plateau_factor);
  emit(out, "clip_grad_norm", training.clip_grad_norm);
  emit(out, "batch_frames", training.batch_frames);
  emit(out, "bucketing", training.bucketing);
  emit(out, "max_steps", training.max_steps);
  emit(out, "validation_freq", training.validation_freq);
  emit(out, "patience", training.patience);
  emit(out, "keep_best", training.keep_best);
  emit(out, "out_dir", training.out_dir);
  emit(out, "specaugment", training.specaugment);
  emit(out, "num_freq_masks", training.num_freq_masks);
  emit(out, "max_freq_width", training.max_freq_width);
  emit(out, "num_time_masks", training.num_time_masks);
  emit(out, "max_time_width", training.max_time_width);

  out += "testing:\n";
  emit(out, "beam_size", testing.beam_size);
  emit(out, "max_len", testing.max_len);
  emit(out, "length_penalty", testing.length_penalty);
  emit(out, "repetition_penalty", testing.repetition_penalty);
  emit(out, "no_repeat_ngram", testing.no_repeat_ngram);
  emit(out, "metric", metric_kind_to_string(testing.metric));
  emit(out, "batch_frames", testing.batch_frames);
  return out;
}

RunConfig parse_run_config(const std::string& text) {
  YamlNode root = parse_yaml(text);
  if (root.kind != YamlNode::Kind::kMap) {
    throw ConfigError("config line " + std::to_string(root.line) +
                      ": top-level structure must be a map");
  }
  RunConfig cfg = config_from_node(root);
  apply_env_seed(cfg);
  cfg.validate();
  return cfg;
}

RunConfig parse_run_config_file(const std::string& path) {
  return parse_run_config(read_text_file(path));
}

S2TModelConfig make_model_config(const RunConfig& run, int src_vocab_size,
                                 int vocab_size) {
  S2TModelConfig mc;
  mc.input_kind = run.task == TaskKind::kMT ? InputKind::kTokenEmbedding
                                            : InputKind::kFilterbank;
  mc.feature_dim = run.model.feature_dim;
  mc.src_vocab_size = run.task == TaskKind::kMT ? src_vocab_size : 0;
  mc.vocab_size = vocab_size;
  mc.d_model = run.model.d_model;
  mc.num_heads = run.model.num_heads;
  mc.ffn_dim = run.model.ffn_dim;
  mc.num_encoder_layers = run.model.num_encoder_layers;
  mc.num_decoder_layers = run.model.num_decoder_layers;
  mc.num_conv_layers = run.model.num_conv_layers;
  mc.conv_kernel = run.model.conv_kernel;
  mc.conv_stride = run.model.conv_stride;
  mc.dropout = run.model.dropout;
  mc.use_ctc = run.model.use_ctc;
  mc.validate();
  return mc;
}

DecodeOptions make_decode_options(const RunConfig& run, int vocab_size) {
  DecodeOptions opts;
  opts.vocab_size = vocab_size;
  opts.beam_size = run.testing.beam_size;
  opts.max_len = run.testing.max_len;
  opts.length_penalty = run.testing.length_penalty;
  opts.repetition_penalty = run.testing.repetition_penalty;
  opts.no_repeat_ngram = run.testing.no_repeat_ngram;
  opts.validate();
  return opts;
}

}  // namespace minis2t

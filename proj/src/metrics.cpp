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

#include "minis2t/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <regex>
#include <string>
#include <unordered_map>
#include <vector>

namespace minis2t {
namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

struct Cp {
  uint32_t value;
  bool valid;  // false: malformed byte, passed through verbatim
};

// Decodes one UTF-8 code point starting at `i` and advances `i`. Malformed
// sequences consume a single byte and are flagged instead of thrown so that
// scoring never fails on dirty text.
Cp decode_cp(const std::string& s, size_t& i) {
  const auto byte = [&s](size_t k) { return static_cast<unsigned char>(s[k]); };
  unsigned char c0 = byte(i);
  if (c0 < 0x80) {
    ++i;
    return {c0, true};
  }
  int len;
  uint32_t cp;
  if ((c0 & 0xE0) == 0xC0) {
    len = 2;
    cp = c0 & 0x1Fu;
  } else if ((c0 & 0xF0) == 0xE0) {
    len = 3;
    cp = c0 & 0x0Fu;
  } else if ((c0 & 0xF8) == 0xF0) {
    len = 4;
    cp = c0 & 0x07u;
  } else {
    ++i;
    return {c0, false};
  }
  if (i + static_cast<size_t>(len) > s.size()) {
    ++i;
    return {c0, false};
  }
  for (int k = 1; k < len; ++k) {
    if ((byte(i + static_cast<size_t>(k)) & 0xC0) != 0x80) {
      ++i;
      return {c0, false};
    }
    cp = (cp << 6) | (byte(i + static_cast<size_t>(k)) & 0x3Fu);
  }
  i += static_cast<size_t>(len);
  return {cp, true};
}

void encode_cp(uint32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

uint32_t lower_cp(uint32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  // Latin-1 supplement, skipping the multiplication sign.
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  return cp;
}

// Unicode punctuation (category P*) over the ASCII range plus the common
// non-ASCII blocks: Latin-1, General Punctuation, Supplemental Punctuation,
// CJK symbols, and fullwidth forms.
bool is_punct_cp(uint32_t cp) {
  switch (cp) {
    case 0xA1:  // inverted exclamation
    case 0xA7:  // section sign
    case 0xAB:  // left guillemet
    case 0xB6:  // pilcrow
    case 0xB7:  // middle dot
    case 0xBB:  // right guillemet
    case 0xBF:  // inverted question mark
    case 0x3030:
    case 0x303D:
    case 0x30A0:
    case 0x30FB:
      return true;
    default:
      break;
  }
  return (cp >= 0x21 && cp <= 0x23) || (cp >= 0x25 && cp <= 0x2A) ||
         (cp >= 0x2C && cp <= 0x2F) || cp == 0x3A || cp == 0x3B || cp == 0x3F || cp == 0x40 ||
         (cp >= 0x5B && cp <= 0x5D) || cp == 0x5F || cp == 0x7B || cp == 0x7D ||
         (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E) ||
         (cp >= 0x2E00 && cp <= 0x2E52) || (cp >= 0x3001 && cp <= 0x3003) ||
         (cp >= 0x3008 && cp <= 0x3011) || (cp >= 0x3014 && cp <= 0x301F) ||
         (cp >= 0xFF01 && cp <= 0xFF03) || (cp >= 0xFF05 && cp <= 0xFF0A) ||
         (cp >= 0xFF0C && cp <= 0xFF0F) || cp == 0xFF1A || cp == 0xFF1B || cp == 0xFF1F ||
         cp == 0xFF20 || (cp >= 0xFF3B && cp <= 0xFF3D) || cp == 0xFF3F || cp == 0xFF5B ||
         cp == 0xFF5D || (cp >= 0xFF5F && cp <= 0xFF65);
}

bool is_space_cp(uint32_t cp) {
  return (cp >= 0x09 && cp <= 0x0D) || cp == 0x20 || cp == 0x85 || cp == 0xA0 || cp == 0x1680 ||
         (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 || cp == 0x202F ||
         cp == 0x205F || cp == 0x3000;
}

void check_paired(const char* metric, size_t hyps, size_t refs) {
  if (hyps != refs) {
    throw ContractError(std::string(metric) + ": got " + std::to_string(hyps) +
                        " hypotheses for " + std::to_string(refs) + " references");
  }
}

std::unordered_map<std::string, long long> word_ngrams(const std::vector<std::string>& tokens,
                                                       int n) {
  std::unordered_map<std::string, long long> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (size_t i = 0; i + static_cast<size_t>(n) <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int k = 1; k < n; ++k) {
      key.push_back('\x1f');
      key += tokens[i + static_cast<size_t>(k)];
    }
    ++counts[key];
  }
  return counts;
}

std::unordered_map<std::u32string, long long> char_ngrams(const std::u32string& chars, int n) {
  std::unordered_map<std::u32string, long long> counts;
  if (static_cast<int>(chars.size()) < n) return counts;
  for (size_t i = 0; i + static_cast<size_t>(n) <= chars.size(); ++i) {
    ++counts[chars.substr(i, static_cast<size_t>(n))];
  }
  return counts;
}

// Code points of a segment with all whitespace removed; the unit ChrF
// n-grams are drawn from.
std::u32string chrf_chars(const std::string& segment) {
  std::u32string out;
  size_t i = 0;
  while (i < segment.size()) {
    Cp cp = decode_cp(segment, i);
    if (cp.valid && is_space_cp(cp.value)) continue;
    out.push_back(static_cast<char32_t>(cp.value));
  }
  return out;
}

template <typename Key>
long long clipped_matches(const std::unordered_map<Key, long long>& hyp,
                          const std::unordered_map<Key, long long>& ref) {
  long long matched = 0;
  for (const auto& [gram, count] : hyp) {
    auto it = ref.find(gram);
    if (it != ref.end()) matched += std::min(count, it->second);
  }
  return matched;
}

}  // namespace

EvalConfig EvalConfig::wer_default() {
  return EvalConfig{CaseRule::kLower, PunctRule::kStrip, EvalTokenizer::k13a};
}

EvalConfig EvalConfig::bleu_default() {
  return EvalConfig{CaseRule::kKeep, PunctRule::kKeep, EvalTokenizer::k13a};
}

std::string EvalConfig::signature(const std::string& metric) const {
  std::string s = metric;
  s += case_rule == CaseRule::kLower ? "|case:lower" : "|case:keep";
  s += punct_rule == PunctRule::kStrip ? "|punct:strip" : "|punct:keep";
  s += tokenizer == EvalTokenizer::k13a ? "|tok:13a" : "|tok:none";
  if (metric == "bleu") s += "|smooth:exp|ngrams:1-4";
  s += "|version:";
  s += kEvalVersion;
  return s;
}

std::string chrf_signature() {
  return std::string("chrf|chars:1-6|beta:2|space:removed|case:keep|version:") + kEvalVersion;
}

std::vector<std::string> tokenize_13a(const std::string& line) {
  std::string s = line;
  replace_all(s, "<skipped>", "");
  replace_all(s, "-\n", "");
  replace_all(s, "\n", " ");
  if (s.find('&') != std::string::npos) {
    replace_all(s, "&quot;", "\"");
    replace_all(s, "&amp;", "&");
    replace_all(s, "&lt;", "<");
    replace_all(s, "&gt;", ">");
  }
  s = " " + s + " ";
  // ASCII symbols other than apostrophe, comma, dash, and period.
  static const std::regex kSymbols(R"(([\x20-\x26\x28-\x2b\x2f\x3a-\x40\x5b-\x60\x7b-\x7e]))");
  // Period and comma split away from any non-digit neighbor; dash split when
  // it follows a digit.
  static const std::regex kPunctAfterNonDigit("([^0-9])([.,])");
  static const std::regex kPunctBeforeNonDigit("([.,])([^0-9])");
  static const std::regex kDashAfterDigit("([0-9])(-)");
  s = std::regex_replace(s, kSymbols, " $1 ");
  s = std::regex_replace(s, kPunctAfterNonDigit, "$1 $2 ");
  s = std::regex_replace(s, kPunctBeforeNonDigit, " $1 $2");
  s = std::regex_replace(s, kDashAfterDigit, "$1 $2 ");
  return split_whitespace(s);
}

std::vector<std::string> normalize_words(const std::string& line, const EvalConfig& config) {
  std::vector<std::string> tokens = config.tokenizer == EvalTokenizer::k13a
                                        ? tokenize_13a(line)
                                        : split_whitespace(line);
  std::vector<std::string> out;
  for (const std::string& token : tokens) {
    std::string kept;
    size_t i = 0;
    while (i < token.size()) {
      size_t start = i;
      Cp cp = decode_cp(token, i);
      if (!cp.valid) {
        kept.append(token, start, i - start);
        continue;
      }
      uint32_t value = cp.value;
      if (config.case_rule == CaseRule::kLower) value = lower_cp(value);
      if (config.punct_rule == PunctRule::kStrip && is_punct_cp(value)) continue;
      encode_cp(value, kept);
    }
    if (!kept.empty()) out.push_back(std::move(kept));
  }
  return out;
}

int levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const size_t n = a.size();
  const size_t m = b.size();
  std::vector<int> prev(m + 1);
  std::vector<int> cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      int substitute = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, substitute});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double wer(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
           const EvalConfig& config) {
  check_paired("wer", hyps.size(), refs.size());
  long long edits = 0;
  long long ref_words = 0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    std::vector<std::string> hyp = normalize_words(hyps[i], config);
    std::vector<std::string> ref = normalize_words(refs[i], config);
    edits += levenshtein(hyp, ref);
    ref_words += static_cast<long long>(ref.size());
  }
  if (ref_words == 0) {
    throw ContractError("wer: reference corpus is empty after normalization");
  }
  return 100.0 * static_cast<double>(edits) / static_cast<double>(ref_words);
}

double bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
            const EvalConfig& config) {
  check_paired("bleu", hyps.size(), refs.size());
  constexpr int kMaxOrder = 4;
  std::array<long long, kMaxOrder> correct{};
  std::array<long long, kMaxOrder> total{};
  long long sys_len = 0;
  long long ref_len = 0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    std::vector<std::string> hyp = normalize_words(hyps[i], config);
    std::vector<std::string> ref = normalize_words(refs[i], config);
    sys_len += static_cast<long long>(hyp.size());
    ref_len += static_cast<long long>(ref.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      if (static_cast<int>(hyp.size()) >= n) {
        total[n - 1] += static_cast<long long>(hyp.size()) - n + 1;
      }
      correct[n - 1] += clipped_matches(word_ngrams(hyp, n), word_ngrams(ref, n));
    }
  }
  if (ref_len == 0) {
    throw ContractError("bleu: reference corpus is empty after normalization");
  }

  // Exponential smoothing: each zero count halves the substitute precision.
  std::array<double, kMaxOrder> precision{};
  double smooth = 1.0;
  for (int n = 1; n <= kMaxOrder; ++n) {
    if (total[n - 1] == 0) break;
    if (correct[n - 1] == 0) {
      smooth *= 2.0;
      precision[n - 1] = 100.0 / (smooth * static_cast<double>(total[n - 1]));
    } else {
      precision[n - 1] =
          100.0 * static_cast<double>(correct[n - 1]) / static_cast<double>(total[n - 1]);
    }
  }
  double brevity = 1.0;
  if (sys_len < ref_len) {
    brevity = sys_len > 0
                  ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(sys_len))
                  : 0.0;
  }
  double log_sum = 0.0;
  for (double p : precision) log_sum += std::log(p);  // log(0) -> -inf -> score 0
  double score = brevity * std::exp(log_sum / kMaxOrder);
  return std::isfinite(score) ? score : 0.0;
}

double chrf(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  check_paired("chrf", hyps.size(), refs.size());
  constexpr int kOrder = 6;
  constexpr double kBeta = 2.0;
  struct OrderStats {
    long long hyp = 0;
    long long ref = 0;
    long long match = 0;
  };
  std::array<OrderStats, kOrder> stats{};
  long long ref_chars = 0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    std::u32string hyp = chrf_chars(hyps[i]);
    std::u32string ref = chrf_chars(refs[i]);
    ref_chars += static_cast<long long>(ref.size());
    for (int n = 1; n <= kOrder; ++n) {
      OrderStats& s = stats[static_cast<size_t>(n - 1)];
      if (static_cast<int>(hyp.size()) >= n) {
        s.hyp += static_cast<long long>(hyp.size()) - n + 1;
      }
      if (static_cast<int>(ref.size()) >= n) {
        s.ref += static_cast<long long>(ref.size()) - n + 1;
      }
      s.match += clipped_matches(char_ngrams(hyp, n), char_ngrams(ref, n));
    }
  }
  if (ref_chars == 0) {
    throw ContractError("chrf: reference corpus is empty after whitespace removal");
  }

  constexpr double kEps = 1e-16;
  const double factor = kBeta * kBeta;
  double score = 0.0;
  for (const OrderStats& s : stats) {
    double prec = s.hyp > 0 ? static_cast<double>(s.match) / static_cast<double>(s.hyp) : kEps;
    double rec = s.ref > 0 ? static_cast<double>(s.match) / static_cast<double>(s.ref) : kEps;
    double denom = factor * prec + rec;
    score += denom > 0.0 ? (1.0 + factor) * prec * rec / denom : kEps;
  }
  return 100.0 * score / kOrder;
}

std::string format_score(double value) {
  // nearbyint under the default rounding mode resolves ties to even.
  double rounded = std::nearbyint(value * 100.0) / 100.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", rounded);
  return buf;
}

}  // namespace minis2t

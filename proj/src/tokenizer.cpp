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

#include "minis2t/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace minis2t {
namespace {

const char* const kReservedNames[kNumReservedIds] = {"<blank>", "<pad>", "<unk>", "<bos>",
                                                     "<eos>"};

const char* const kBpeHeader = "#version: minis2t-bpe 1";

bool has_eow(const std::string& symbol) { return ends_with(symbol, kEowMarker); }

std::string strip_eow(const std::string& symbol) {
  return has_eow(symbol) ? symbol.substr(0, symbol.size() - std::string(kEowMarker).size())
                         : symbol;
}

// Word -> initial symbol sequence: one symbol per code point, the last
// carrying the end-of-word marker.
std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> symbols = utf8_chars(word);
  if (symbols.empty()) return symbols;
  symbols.back() += kEowMarker;
  return symbols;
}

// One greedy left-to-right pass merging every non-overlapping occurrence of
// (left, right).
void apply_merge(std::vector<std::string>& symbols, const std::string& left,
                 const std::string& right) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  size_t i = 0;
  while (i < symbols.size()) {
    if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
      out.push_back(left + right);
      i += 2;
    } else {
      out.push_back(symbols[i]);
      ++i;
    }
  }
  symbols = std::move(out);
}

}  // namespace

int Vocabulary::id(const std::string& token) const {
  for (int i = 0; i < kNumReservedIds; ++i) {
    if (token == kReservedNames[i]) return i;
  }
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  for (int i = 0; i < kNumReservedIds; ++i) {
    if (token == kReservedNames[i]) return true;
  }
  return index_.count(token) != 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw ContractError("token id " + std::to_string(id) + " out of range [0, " +
                        std::to_string(size()) + ")");
  }
  if (id < kNumReservedIds) {
    static const std::vector<std::string> names(kReservedNames, kReservedNames + kNumReservedIds);
    return names[id];
  }
  return tokens_[id - kNumReservedIds];
}

void Vocabulary::add(const std::string& token) {
  if (token.empty()) throw ContractError("cannot add empty token to vocabulary");
  if (contains(token)) throw ContractError("duplicate vocabulary token: " + token);
  index_.emplace(token, size());
  tokens_.push_back(token);
}

void Vocabulary::save(const std::string& path) const {
  std::string text;
  for (const std::string& t : tokens_) {
    text += t;
    text += '\n';
  }
  write_text_file(path, text);
}

Vocabulary Vocabulary::load(const std::string& path) {
  Vocabulary vocab;
  int line_no = 0;
  for (const std::string& line : read_lines(path)) {
    ++line_no;
    if (line.empty()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": empty vocabulary line");
    }
    vocab.add(line);
  }
  return vocab;
}

std::vector<std::string> BpeModel::apply_word(const std::string& word) const {
  std::vector<std::string> symbols = word_symbols(word);
  for (const auto& [left, right] : merges) {
    if (symbols.size() < 2) break;
    apply_merge(symbols, left, right);
  }
  return symbols;
}

void BpeModel::save(const std::string& path) const {
  std::string text = kBpeHeader;
  text += '\n';
  for (const auto& [left, right] : merges) {
    text += left;
    text += ' ';
    text += right;
    text += '\n';
  }
  write_text_file(path, text);
}

BpeModel BpeModel::load(const std::string& path) {
  std::vector<std::string> lines = read_lines(path);
  if (lines.empty() || lines[0] != kBpeHeader) {
    throw DataError(path + ": missing BPE header \"" + kBpeHeader + "\"");
  }
  BpeModel model;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    size_t space = lines[i].find(' ');
    if (space == std::string::npos || space == 0 || space + 1 >= lines[i].size()) {
      throw DataError(path + ":" + std::to_string(i + 1) + ": malformed merge line \"" + lines[i] +
                      "\"");
    }
    model.merges.emplace_back(lines[i].substr(0, space), lines[i].substr(space + 1));
  }
  return model;
}

BpeModel learn_bpe(const std::vector<std::string>& corpus_lines, int num_merges,
                   const std::vector<std::string>& protected_tokens) {
  if (num_merges < 0) throw ContractError("num_merges must be >= 0");
  std::unordered_set<std::string> protected_set(protected_tokens.begin(), protected_tokens.end());

  // Word-type frequencies; symbol state evolves as merges are applied.
  std::map<std::string, int64_t> word_freq;
  for (const std::string& line : corpus_lines) {
    for (const std::string& word : split_whitespace(line)) {
      if (protected_set.count(word)) continue;
      ++word_freq[word];
    }
  }
  std::vector<std::pair<std::vector<std::string>, int64_t>> types;
  types.reserve(word_freq.size());
  for (const auto& [word, freq] : word_freq) {
    std::vector<std::string> symbols = word_symbols(word);
    if (!symbols.empty()) types.emplace_back(std::move(symbols), freq);
  }

  BpeModel model;
  for (int m = 0; m < num_merges; ++m) {
    // std::map keeps pair keys ordered, which resolves frequency ties toward
    // the lexicographically smallest pair.
    std::map<std::pair<std::string, std::string>, int64_t> pair_freq;
    for (const auto& [symbols, freq] : types) {
      for (size_t i = 0; i + 1 < symbols.size(); ++i) {
        pair_freq[{symbols[i], symbols[i + 1]}] += freq;
      }
    }
    if (pair_freq.empty()) break;
    auto best = pair_freq.begin();
    for (auto it = pair_freq.begin(); it != pair_freq.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    model.merges.push_back(best->first);
    for (auto& [symbols, freq] : types) {
      if (symbols.size() >= 2) apply_merge(symbols, best->first.first, best->first.second);
    }
  }
  return model;
}

TokenScheme token_scheme_from_string(const std::string& name) {
  if (name == "char") return TokenScheme::kChar;
  if (name == "word") return TokenScheme::kWord;
  if (name == "bpe") return TokenScheme::kBpe;
  throw ConfigError("unknown token scheme \"" + name + "\" (want char, word, or bpe)");
}

std::string token_scheme_to_string(TokenScheme scheme) {
  switch (scheme) {
    case TokenScheme::kChar:
      return "char";
    case TokenScheme::kWord:
      return "word";
    case TokenScheme::kBpe:
      return "bpe";
  }
  throw ContractError("invalid TokenScheme value");
}

std::vector<std::string> tokenize(const std::string& text, TokenScheme scheme,
                                  const BpeModel* bpe,
                                  const std::unordered_set<std::string>& protected_tokens) {
  if (scheme == TokenScheme::kBpe && bpe == nullptr) {
    throw ContractError("BPE tokenization requires a BpeModel");
  }
  std::vector<std::string> words = split_whitespace(text);
  std::vector<std::string> out;
  bool first_word = true;
  for (const std::string& word : words) {
    if (protected_tokens.count(word)) {
      if (scheme == TokenScheme::kChar && !first_word) out.push_back(kSpaceSymbol);
      out.push_back(word);
      first_word = false;
      continue;
    }
    switch (scheme) {
      case TokenScheme::kWord:
        out.push_back(word);
        break;
      case TokenScheme::kChar: {
        if (!first_word) out.push_back(kSpaceSymbol);
        for (std::string& c : utf8_chars(word)) out.push_back(std::move(c));
        break;
      }
      case TokenScheme::kBpe: {
        for (std::string& s : bpe->apply_word(word)) out.push_back(std::move(s));
        break;
      }
    }
    first_word = false;
  }
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens, TokenScheme scheme) {
  switch (scheme) {
    case TokenScheme::kWord:
      return join(tokens, " ");
    case TokenScheme::kChar: {
      std::string out;
      for (const std::string& t : tokens) {
        if (t == kSpaceSymbol) {
          out += ' ';
        } else {
          out += t;
        }
      }
      return out;
    }
    case TokenScheme::kBpe: {
      std::string out;
      std::string word;
      for (const std::string& t : tokens) {
        word += strip_eow(t);
        if (has_eow(t)) {
          if (!out.empty()) out += ' ';
          out += word;
          word.clear();
        }
      }
      if (!word.empty()) {
        // Trailing partial word (no end marker yet): emit it anyway.
        if (!out.empty()) out += ' ';
        out += word;
      }
      return out;
    }
  }
  throw ContractError("invalid TokenScheme value");
}

std::vector<int> encode_ids(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                            bool add_bos_eos) {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 2);
  if (add_bos_eos) ids.push_back(kBosId);
  for (const std::string& t : tokens) ids.push_back(vocab.id(t));
  if (add_bos_eos) ids.push_back(kEosId);
  return ids;
}

std::vector<std::string> decode_ids(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= vocab.size()) {
      throw ContractError("token id " + std::to_string(id) + " out of range [0, " +
                          std::to_string(vocab.size()) + ")");
    }
    if (id < kNumReservedIds) continue;
    tokens.push_back(vocab.token(id));
  }
  return tokens;
}

TextNormalizer TextNormalizer::load(const std::string& path) {
  TextNormalizer norm;
  int line_no = 0;
  for (const std::string& line : read_lines(path)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": normalizer rule needs \"pattern<TAB>replacement\"");
    }
    try {
      norm.add_rule(line.substr(0, tab), line.substr(tab + 1));
    } catch (const std::regex_error& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad regex: " + e.what());
    }
  }
  return norm;
}

void TextNormalizer::add_rule(const std::string& pattern, const std::string& replacement) {
  rules_.emplace_back(std::regex(pattern, std::regex::ECMAScript | std::regex::icase),
                      replacement);
}

std::string TextNormalizer::apply(const std::string& text) const {
  std::string out = text;
  for (const auto& [pattern, replacement] : rules_) {
    out = std::regex_replace(out, pattern, replacement);
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<std::string>& corpus_lines, TokenScheme scheme,
                            const BpeModel* bpe, const std::vector<std::string>& protected_tokens,
                            int max_size) {
  std::unordered_set<std::string> protected_set(protected_tokens.begin(), protected_tokens.end());
  std::map<std::string, int64_t> freq;
  for (const std::string& line : corpus_lines) {
    for (const std::string& t : tokenize(line, scheme, bpe, protected_set)) ++freq[t];
  }
  std::vector<std::pair<std::string, int64_t>> entries(freq.begin(), freq.end());
  // Descending frequency, lexicographic among equals (std::map order is the
  // tiebreak because stable_sort keeps it).
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary vocab;
  for (const std::string& t : protected_tokens) {
    if (!vocab.contains(t)) vocab.add(t);
  }
  for (const auto& [token, count] : entries) {
    if (max_size > 0 && vocab.size() >= max_size) break;
    if (!vocab.contains(token)) vocab.add(token);
  }
  return vocab;
}

}  // namespace minis2t

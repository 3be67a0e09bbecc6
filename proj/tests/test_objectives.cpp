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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "minis2t/common.hpp"
#include "minis2t/objectives.hpp"
#include "minis2t/tensor.hpp"
#include "test_util.hpp"

using namespace minis2t;

namespace {

// Normalizes rows of [B, T, V] raw values into log-probabilities with plain
// double arithmetic, independent of the tensor ops.
template <class S>
TensorT<S> normalized_log_probs(const Shape& shape, uint64_t seed) {
  Rng rng(seed);
  TensorT<S> t = TensorT<S>::zeros(shape);
  int v = shape.back();
  int64_t rows = 1;
  for (size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
  S* p = t.data();
  for (int64_t r = 0; r < rows; ++r) {
    double z = 0.0;
    std::vector<double> raw(static_cast<size_t>(v));
    for (int k = 0; k < v; ++k) {
      raw[static_cast<size_t>(k)] = rng.uniform() * 4.0 - 2.0;
    }
    double hi = raw[0];
    for (double x : raw) hi = std::max(hi, x);
    for (double x : raw) z += std::exp(x - hi);
    double log_z = hi + std::log(z);
    for (int k = 0; k < v; ++k) {
      p[r * v + k] = static_cast<S>(raw[static_cast<size_t>(k)] - log_z);
    }
  }
  return t;
}

// Merge adjacent repeats, then remove blanks.
std::vector<int> collapse_path(const std::vector<int>& path, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int s : path) {
    if (s != prev) out.push_back(s);
    prev = s;
  }
  std::vector<int> no_blank;
  for (int s : out) {
    if (s != blank) no_blank.push_back(s);
  }
  return no_blank;
}

// Total probability over all frame paths collapsing to `target`, by direct
// enumeration of v^t paths.
double brute_force_ctc_nll(const TensorT<double>& log_probs, int b, int frames,
                           const std::vector<int>& target, int blank) {
  int v = log_probs.dim(2);
  std::vector<int> path(static_cast<size_t>(frames), 0);
  double total = 0.0;
  while (true) {
    if (collapse_path(path, blank) == target) {
      double lp = 0.0;
      for (int t = 0; t < frames; ++t) {
        lp += log_probs.at({b, t, path[static_cast<size_t>(t)]});
      }
      total += std::exp(lp);
    }
    int i = frames - 1;
    while (i >= 0 && path[static_cast<size_t>(i)] == v - 1) {
      path[static_cast<size_t>(i)] = 0;
      --i;
    }
    if (i < 0) break;
    ++path[static_cast<size_t>(i)];
  }
  return -std::log(total);
}

}  // namespace

TEST_CASE("label smoothing matches the closed-form hand computation") {
  // V = 5, pad = 1, gold = 3, epsilon = 0.1: q puts 0.9 on the gold id and
  // 0.1/3 on each of ids {0, 2, 4}.
  std::vector<double> p = {0.1, 0.05, 0.15, 0.6, 0.1};
  TensorT<double> lp = TensorT<double>::zeros({1, 1, 5});
  for (int k = 0; k < 5; ++k) lp.data()[k] = std::log(p[static_cast<size_t>(k)]);

  double expected = 0.9 * std::log(0.9) + 0.1 * std::log(0.1 / 3.0);  // sum q log q
  expected -= 0.9 * std::log(0.6) +
              (0.1 / 3.0) * (std::log(0.1) + std::log(0.15) + std::log(0.1));

  TensorT<double> loss = label_smoothed_nll(lp, {{3}}, 0.1);
  CHECK(loss.item() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(loss.item() == doctest::Approx(0.2415413).epsilon(1e-6));
}

TEST_CASE("epsilon zero reduces to plain negative log-likelihood") {
  TensorT<double> lp = normalized_log_probs<double>({2, 3, 7}, 5);
  std::vector<std::vector<int>> targets = {{4, 2, 6}, {5, 3}};
  TensorT<double> loss = label_smoothed_nll(lp, targets, 0.0);

  double expected = 0.0;
  expected -= lp.at({0, 0, 4}) + lp.at({0, 1, 2}) + lp.at({0, 2, 6});
  expected -= lp.at({1, 0, 5}) + lp.at({1, 1, 3});
  expected /= 5.0;  // mean over the five scored positions
  CHECK(loss.item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("pad positions are excluded from the average") {
  TensorT<double> lp = normalized_log_probs<double>({2, 4, 6}, 9);
  // Row 1 is shorter; its padded tail must not affect the loss.
  TensorT<double> lp_short = TensorT<double>::zeros({2, 2, 6});
  for (int b = 0; b < 2; ++b) {
    for (int u = 0; u < 2; ++u) {
      for (int k = 0; k < 6; ++k) {
        lp_short.data()[(b * 2 + u) * 6 + k] = lp.at({b, u, k});
      }
    }
  }
  std::vector<std::vector<int>> targets = {{3, 4}, {5, 2}};
  TensorT<double> padded = label_smoothed_nll(lp, targets, 0.2);
  TensorT<double> tight = label_smoothed_nll(lp_short, targets, 0.2);
  CHECK(padded.item() == doctest::Approx(tight.item()).epsilon(1e-12));

  // Explicit pad ids inside a row are also skipped.
  TensorT<double> trailing = label_smoothed_nll(lp, {{3, 4, kPadId, kPadId}, {5, 2}}, 0.2);
  CHECK(trailing.item() == doctest::Approx(tight.item()).epsilon(1e-12));
}

TEST_CASE("label smoothing input validation") {
  TensorT<double> lp = normalized_log_probs<double>({1, 2, 6}, 11);
  CHECK_THROWS_AS((void)label_smoothed_nll(lp, {{kPadId, kPadId}}, 0.1), ContractError);
  CHECK_THROWS_AS((void)label_smoothed_nll(lp, {{9}}, 0.1), ContractError);
  CHECK_THROWS_AS((void)label_smoothed_nll(lp, {{2, 3, 4}}, 0.1), ContractError);
  CHECK_THROWS_AS((void)label_smoothed_nll(lp, {{2}}, 1.0), ContractError);
  CHECK_THROWS_AS((void)label_smoothed_nll(lp, {{2}, {3}}, 0.1), ContractError);
}

TEST_CASE("label smoothing gradient agrees with finite differences") {
  Rng rng(13);
  TensorT<double> logits = minis2t::testutil::random_tensor({2, 3, 6}, rng);
  std::vector<std::vector<int>> targets = {{4, 2, 5}, {3, 0}};
  auto forward = [&]() { return label_smoothed_nll(log_softmax(logits), targets, 0.1); };
  CHECK(minis2t::testutil::max_grad_error(forward, {logits}) < 1e-4);

  auto forward_hard = [&]() { return label_smoothed_nll(log_softmax(logits), targets, 0.0); };
  CHECK(minis2t::testutil::max_grad_error(forward_hard, {logits}) < 1e-4);
}

TEST_CASE("ctc_min_frames counts labels plus forced blanks") {
  CHECK(ctc_min_frames({}) == 0);
  CHECK(ctc_min_frames({5}) == 1);
  CHECK(ctc_min_frames({5, 6}) == 2);
  CHECK(ctc_min_frames({5, 5}) == 3);  // repeat needs a separating blank
  CHECK(ctc_min_frames({5, 5, 5}) == 5);
  CHECK(ctc_min_frames({1, 2, 2, 3}) == 5);
}

TEST_CASE("ctc loss matches brute-force path enumeration") {
  TensorT<double> lp = normalized_log_probs<double>({4, 4, 3}, 17);
  std::vector<std::vector<int>> targets = {{1, 2}, {1, 1}, {2}, {}};
  std::vector<int> lengths = {4, 4, 3, 2};

  CtcResult<double> got = ctc_loss(lp, targets, lengths, /*skip_infeasible=*/false);
  double expected_mean = 0.0;
  for (int b = 0; b < 4; ++b) {
    double oracle = brute_force_ctc_nll(lp, b, lengths[static_cast<size_t>(b)],
                                        targets[static_cast<size_t>(b)], kBlankId);
    CHECK(got.per_utterance[static_cast<size_t>(b)] == doctest::Approx(oracle).epsilon(1e-10));
    expected_mean += oracle;
  }
  CHECK(got.loss.item() == doctest::Approx(expected_mean / 4.0).epsilon(1e-10));
  CHECK(got.num_skipped == 0);
}

TEST_CASE("repeated label at the frame limit leaves a single path") {
  // Three frames, target [1, 1]: the only alignment is 1, blank, 1.
  TensorT<double> lp = normalized_log_probs<double>({1, 3, 3}, 19);
  CtcResult<double> got = ctc_loss(lp, {{1, 1}}, {3}, false);
  double expected = -(lp.at({0, 0, 1}) + lp.at({0, 1, 0}) + lp.at({0, 2, 1}));
  CHECK(got.loss.item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("infeasible utterances are skipped or rejected") {
  TensorT<double> lp = normalized_log_probs<double>({2, 2, 3}, 23);
  // [1, 1] needs three frames but has two.
  CHECK_THROWS_AS((void)ctc_loss(lp, {{1, 2}, {1, 1}}, {2, 2}, false), DataError);

  CtcResult<double> got = ctc_loss(lp, {{1, 2}, {1, 1}}, {2, 2}, true);
  CHECK(got.num_skipped == 1);
  CHECK(std::isinf(got.per_utterance[1]));
  double oracle = brute_force_ctc_nll(lp, 0, 2, {1, 2}, kBlankId);
  CHECK(got.loss.item() == doctest::Approx(oracle).epsilon(1e-10));

  CHECK_THROWS_AS((void)ctc_loss(lp, {{1, 1}, {1, 1}}, {2, 2}, true), ContractError);
  CHECK_THROWS_AS((void)ctc_loss(lp, {{0}, {1}}, {2, 2}, false), ContractError);
  CHECK_THROWS_AS((void)ctc_loss(lp, {{7}, {1}}, {2, 2}, false), ContractError);
}

TEST_CASE("ctc gradient agrees with finite differences") {
  Rng rng(29);
  TensorT<double> logits = minis2t::testutil::random_tensor({2, 5, 4}, rng);
  std::vector<std::vector<int>> targets = {{1, 2, 1}, {3, 3}};
  std::vector<int> lengths = {5, 4};
  auto forward = [&]() {
    return ctc_loss(log_softmax(logits), targets, lengths, false).loss;
  };
  CHECK(minis2t::testutil::max_grad_error(forward, {logits}) < 1e-4);
}

TEST_CASE("ctc posterior mass sums to one per frame") {
  // For loss = -log P of one utterance, the gradient w.r.t. the frame
  // log-probabilities sums to -1 at every valid frame.
  TensorT<double> lp = normalized_log_probs<double>({1, 5, 4}, 31);
  lp.set_requires_grad(true);
  TapeT<double> tape;
  {
    TapeScope<double> scope(tape);
    CtcResult<double> got = ctc_loss(lp, {{2, 3}}, {5}, false);
    tape.backward(got.loss);
  }
  std::vector<double> g = lp.grad();
  for (int t = 0; t < 5; ++t) {
    double row = 0.0;
    for (int k = 0; k < 4; ++k) row += g[static_cast<size_t>(t) * 4 + k];
    CHECK(row == doctest::Approx(-1.0).epsilon(1e-9));
  }
}

TEST_CASE("joint loss endpoints recover the pure objectives") {
  Rng rng(37);
  TensorT<float> dec_logits = minis2t::testutil::random_tensor_f({2, 3, 8}, rng);
  TensorT<float> enc_logits = minis2t::testutil::random_tensor_f({2, 6, 8}, rng);
  TensorT<float> ctc_lp = log_softmax(enc_logits);
  std::vector<std::vector<int>> gold = {{5, 6, kEosId}, {7, kEosId}};
  std::vector<std::vector<int>> labels = {{5, 6}, {7}};
  std::vector<int> lengths = {6, 5};

  auto pure_xent = label_smoothed_nll(log_softmax(dec_logits), gold, 0.1);
  auto pure_ctc = ctc_loss(ctc_lp, labels, lengths, false);

  auto at0 = joint_loss(dec_logits, gold, &ctc_lp, labels, lengths, 0.0, 0.1, false);
  CHECK(at0.total.item() == doctest::Approx(pure_xent.item()).epsilon(1e-6));
  CHECK(at0.ctc == 0.0);
  CHECK(at0.num_tokens == 5);

  auto at1 = joint_loss(dec_logits, gold, &ctc_lp, labels, lengths, 1.0, 0.1, false);
  CHECK(at1.total.item() == doctest::Approx(pure_ctc.loss.item()).epsilon(1e-6));
  CHECK(at1.cross_entropy == doctest::Approx(pure_xent.item()).epsilon(1e-6));

  auto mid = joint_loss(dec_logits, gold, &ctc_lp, labels, lengths, 0.3, 0.1, false);
  CHECK(mid.total.item() ==
        doctest::Approx(0.7 * pure_xent.item() + 0.3 * pure_ctc.loss.item()).epsilon(1e-6));

  CHECK_THROWS_AS((void)joint_loss(dec_logits, gold, static_cast<const TensorT<float>*>(nullptr),
                                   labels, lengths, 0.3, 0.1, false),
                  ContractError);
  CHECK_THROWS_AS(
      (void)joint_loss(dec_logits, gold, &ctc_lp, labels, lengths, 1.5, 0.1, false),
      ContractError);
}

TEST_CASE("joint loss sends gradients to both heads") {
  Rng rng(41);
  TensorT<float> dec_logits = minis2t::testutil::random_tensor_f({1, 3, 8}, rng);
  TensorT<float> enc_logits = minis2t::testutil::random_tensor_f({1, 6, 8}, rng);
  dec_logits.set_requires_grad(true);
  enc_logits.set_requires_grad(true);
  dec_logits.zero_grad();
  enc_logits.zero_grad();

  TapeT<float> tape;
  {
    TapeScope<float> scope(tape);
    TensorT<float> ctc_lp = log_softmax(enc_logits);
    auto report = joint_loss(dec_logits, {{5, 6, kEosId}}, &ctc_lp, {{5, 6}}, {6}, 0.3, 0.1,
                             false);
    tape.backward(report.total);
  }
  double dec_norm = 0.0, enc_norm = 0.0;
  for (float v : dec_logits.grad()) dec_norm += static_cast<double>(v) * v;
  for (float v : enc_logits.grad()) enc_norm += static_cast<double>(v) * v;
  CHECK(dec_norm > 0.0);
  CHECK(enc_norm > 0.0);
}

TEST_CASE("joint gradient agrees with finite differences") {
  Rng rng(43);
  TensorT<double> dec_logits = minis2t::testutil::random_tensor({1, 3, 6}, rng);
  TensorT<double> enc_logits = minis2t::testutil::random_tensor({1, 5, 6}, rng);
  std::vector<std::vector<int>> gold = {{5, 2, kEosId}};
  std::vector<std::vector<int>> labels = {{5, 2}};
  auto forward = [&]() {
    TensorT<double> ctc_lp = log_softmax(enc_logits);
    return joint_loss(dec_logits, gold, &ctc_lp, labels, {5}, 0.3, 0.1, false).total;
  };
  CHECK(minis2t::testutil::max_grad_error(forward, {dec_logits, enc_logits}) < 1e-4);
}

#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "tiedmt/ops.hpp"
#include "tiedmt/rng.hpp"
#include "tiedmt/tensor.hpp"

using namespace tiedmt;
using tiedmt::testing::max_fd_error;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo, double hi,
                     bool requires_grad = true) {
  int64_t n = 1;
  for (int e : shape) n *= e;
  std::vector<Real> data(static_cast<size_t>(n));
  for (Real& v : data) v = static_cast<Real>(rng.uniform(lo, hi));
  return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

// Reduces an arbitrary op output to a scalar with fixed distinct weights so
// the finite-difference check exercises every output element.
Tensor weighted_total(const Tensor& out, const Tensor& weights) {
  return sum(mul(out, weights));
}

bool bitwise_equal(const std::vector<Real>& a, const std::vector<Real>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(Real)) == 0;
}

}  // namespace

TEST_CASE("softmax rows normalize with per-row max stabilization") {
  Tensor flat = Tensor::from({1, 3}, {0, 0, 0});
  Tensor p = softmax_rows(flat);
  for (int j = 0; j < 3; ++j) CHECK(p.data()[j] == doctest::Approx(1.0 / 3.0));

  // Two-class case checked against the logistic function, which is an
  // algebraically different route to the same number.
  Tensor two = Tensor::from({1, 2}, {2, 0});
  Tensor q = softmax_rows(two);
  double oracle = 1.0 / (1.0 + std::exp(-2.0));
  CHECK(q.data()[0] == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(q.data()[1] == doctest::Approx(1.0 - oracle).epsilon(1e-12));

  // Huge magnitudes must not overflow thanks to max subtraction.
  Tensor big = Tensor::from({1, 3}, {1000, 999, 998});
  Tensor pb = softmax_rows(big);
  CHECK(std::isfinite(pb.data()[0]));

  Rng rng(11);
  Tensor r = random_tensor(rng, {8, 13}, -5, 5, false);
  Tensor pr = softmax_rows(r);
  for (int i = 0; i < 8; ++i) {
    double rowsum = 0;
    for (int j = 0; j < 13; ++j) {
      double v = pr.data()[static_cast<size_t>(i) * 13 + j];
      CHECK(v >= 0.0);
      rowsum += v;
    }
    CHECK(std::abs(rowsum - 1.0) <= 1e-12);
  }
}

TEST_CASE("softmax rejects non-finite input naming the offending row") {
  Tensor bad = Tensor::from({2, 2}, {1, 2, std::nan(""), 4});
  CHECK_THROWS_WITH_AS(softmax_rows(bad),
                       "softmax_rows: non-finite value in row 1",
                       std::invalid_argument);
}

TEST_CASE("cross entropy matches analytic anchors") {
  // Uniform logits: loss is exactly ln(vocab).
  Tensor uniform = Tensor::from({1, 7}, std::vector<Real>(7, 0.4));
  CHECK(cross_entropy(uniform, {3}, 0).item() ==
        doctest::Approx(std::log(7.0)).epsilon(1e-12));

  // Probability concentrated on the target: loss tends to zero.
  Tensor peaked = Tensor::from({1, 3}, {25, 0, 0});
  CHECK(cross_entropy(peaked, {0}, 0).item() < 1e-6);

  // Label smoothing against a brute-force four-class oracle.
  std::vector<Real> logits = {1, 0, 0, 0};
  double z = 0;
  for (Real l : logits) z += std::exp(l);
  double eps = 0.1;
  double oracle = 0;
  for (int v = 0; v < 4; ++v) {
    double qv = eps / 4 + (v == 0 ? 1 - eps : 0.0);
    oracle -= qv * std::log(std::exp(logits[static_cast<size_t>(v)]) / z);
  }
  Tensor row = Tensor::from({1, 4}, logits);
  CHECK(std::abs(cross_entropy(row, {0}, 0.1).item() - oracle) < 1e-10);
}

TEST_CASE("cross entropy skips padding rows and validates targets") {
  Rng rng(3);
  Tensor logits = random_tensor(rng, {3, 4}, -2, 2, false);
  // Row 1 is padding; the loss must equal the mean of rows 0 and 2 alone.
  double manual = 0;
  for (int i : {0, 2}) {
    double mx = -1e30, s = 0;
    for (int j = 0; j < 4; ++j)
      mx = std::max(mx, static_cast<double>(
                            logits.data()[static_cast<size_t>(i) * 4 + j]));
    for (int j = 0; j < 4; ++j)
      s += std::exp(logits.data()[static_cast<size_t>(i) * 4 + j] - mx);
    int t = (i == 0) ? 2 : 1;
    manual += mx + std::log(s) - logits.data()[static_cast<size_t>(i) * 4 + t];
  }
  manual /= 2;
  CHECK(cross_entropy(logits, {2, 0, 1}, 0, /*pad_id=*/0).item() ==
        doctest::Approx(manual).epsilon(1e-12));

  CHECK_THROWS_AS(cross_entropy(logits, {2, 9, 1}, 0), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy(logits, {0, 0, 0}, 0, /*pad_id=*/0),
                  std::invalid_argument);
}

TEST_CASE("backward computes simple analytic gradients") {
  Tensor x = Tensor::scalar_value(3.0, true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = mul(x, x);
    tape.backward(loss);
  }
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-14));
  CHECK(x.grad().size() == x.data().size());

  // A parameter the loss never touches keeps an exactly-zero gradient.
  Tensor a = Tensor::from({2}, {1, 2}, true);
  Tensor untouched = Tensor::from({2}, {5, 5}, true);
  Tape tape2;
  {
    TapeScope scope(tape2);
    tape2.backward(sum(mul(a, a)));
  }
  for (Real g : untouched.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  Tensor v = Tensor::from({2}, {1, 2}, true);
  Tape tape;
  TapeScope scope(tape);
  Tensor out = mul(v, v);
  CHECK_THROWS_AS(tape.backward(out), std::invalid_argument);
}

TEST_CASE("a tensor used by several branches accumulates all their gradients") {
  Tensor x = Tensor::scalar_value(1.5, true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor s = mul(x, x);
    Tensor loss = add(add(s, s), s);  // three consumers of s
    tape.backward(loss);
  }
  double three_branch = x.grad()[0];

  // Same computation written as one branch scaled by three.
  Tensor y = Tensor::scalar_value(1.5, true);
  Tape tape2;
  {
    TapeScope scope(tape2);
    tape2.backward(scale(mul(y, y), 3.0));
  }
  CHECK(three_branch == doctest::Approx(y.grad()[0]).epsilon(1e-14));
  CHECK(three_branch == doctest::Approx(9.0).epsilon(1e-14));
}

TEST_CASE("tape replays every recorded step exactly once, in reverse order") {
  std::vector<int> visits;
  Tensor x = Tensor::scalar_value(2.0, true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.record([&] { visits.push_back(0); });
    Tensor s = mul(x, x);
    tape.record([&] { visits.push_back(1); });
    Tensor loss = add(s, s);
    tape.record([&] { visits.push_back(2); });
    CHECK(tape.num_entries() == 5);  // two ops plus three probes
    tape.backward(loss);
  }
  CHECK(visits == std::vector<int>{2, 1, 0});
}

TEST_CASE("finite differences validate elementwise ops") {
  Rng rng(101);
  Tensor a = random_tensor(rng, {3, 4}, -1, 1);
  Tensor b = random_tensor(rng, {3, 4}, -1, 1);
  Tensor w = random_tensor(rng, {3, 4}, 0.5, 1.5, false);

  CHECK(max_fd_error({a, b}, [&] { return weighted_total(add(a, b), w); }) <
        1e-4);
  CHECK(max_fd_error({a, b}, [&] { return weighted_total(sub(a, b), w); }) <
        1e-4);
  CHECK(max_fd_error({a, b}, [&] { return weighted_total(mul(a, b), w); }) <
        1e-4);
  CHECK(max_fd_error({a}, [&] { return weighted_total(scale(a, -2.5), w); }) <
        1e-4);
  CHECK(max_fd_error({a}, [&] { return weighted_total(sigmoid(a), w); }) < 1e-4);
  CHECK(max_fd_error({a}, [&] { return scale(sum(a), 0.7); }) < 1e-4);

  // Keep relu inputs away from the kink where the derivative jumps.
  Tensor r = Tensor::from({2, 3}, {0.8, -0.6, 1.2, -0.3, 0.5, -1.1}, true);
  Tensor wr = random_tensor(rng, {2, 3}, 0.5, 1.5, false);
  CHECK(max_fd_error({r}, [&] { return weighted_total(relu(r), wr); }) < 1e-4);

  Tensor m = random_tensor(rng, {3, 5}, -1, 1);
  Tensor bias = random_tensor(rng, {5}, -1, 1);
  Tensor wm = random_tensor(rng, {3, 5}, 0.5, 1.5, false);
  CHECK(max_fd_error({m, bias}, [&] {
          return weighted_total(add_bias(m, bias), wm);
        }) < 1e-4);

  Tensor s1 = Tensor::scalar_value(0.3, true);
  Tensor s2 = Tensor::scalar_value(-1.2, true);
  Tensor s3 = Tensor::scalar_value(2.4, true);
  CHECK(max_fd_error({s1, s2, s3}, [&] {
          return average({s1, s2, s3});
        }) < 1e-4);
}

TEST_CASE("finite differences validate matrix products") {
  Rng rng(202);
  Tensor a = random_tensor(rng, {3, 4}, -1, 1);
  Tensor b = random_tensor(rng, {4, 2}, -1, 1);
  Tensor w = random_tensor(rng, {3, 2}, 0.5, 1.5, false);
  CHECK(max_fd_error({a, b}, [&] { return weighted_total(matmul(a, b), w); }) <
        1e-4);

  Tensor c = random_tensor(rng, {5, 4}, -1, 1);
  Tensor wnt = random_tensor(rng, {3, 5}, 0.5, 1.5, false);
  CHECK(max_fd_error({a, c}, [&] {
          return weighted_total(matmul_nt(a, c), wnt);
        }) < 1e-4);

  // Forward anchor: a tiny product computed by hand.
  Tensor p = matmul(Tensor::from({2, 2}, {1, 2, 3, 4}),
                    Tensor::from({2, 2}, {5, 6, 7, 8}));
  CHECK(p.data() == std::vector<Real>{19, 22, 43, 50});
  Tensor pnt = matmul_nt(Tensor::from({2, 2}, {1, 2, 3, 4}),
                         Tensor::from({2, 2}, {5, 6, 7, 8}));
  CHECK(pnt.data() == std::vector<Real>{17, 23, 39, 53});
}

TEST_CASE("finite differences validate softmax, layer norm, embedding, gather") {
  Rng rng(303);
  Tensor logits = random_tensor(rng, {4, 6}, -2, 2);
  Tensor w = random_tensor(rng, {4, 6}, 0.5, 1.5, false);
  CHECK(max_fd_error({logits}, [&] {
          return weighted_total(softmax_rows(logits), w);
        }) < 1e-4);

  Tensor x = random_tensor(rng, {4, 6}, -2, 2);
  Tensor gain = random_tensor(rng, {6}, 0.5, 1.5);
  Tensor bias = random_tensor(rng, {6}, -0.5, 0.5);
  CHECK(max_fd_error({x, gain, bias}, [&] {
          return weighted_total(layer_norm_rows(x, gain, bias), w);
        }) < 1e-4);

  Tensor table = random_tensor(rng, {9, 5}, -1, 1);
  std::vector<int> ids = {3, 0, 3, 7};  // repeated id exercises accumulation
  Tensor we = random_tensor(rng, {4, 5}, 0.5, 1.5, false);
  CHECK(max_fd_error({table}, [&] {
          return weighted_total(embedding_rows(table, ids, 1.7), we);
        }) < 1e-4);

  // Rows of the table that were never looked up keep zero gradients.
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(weighted_total(embedding_rows(table, ids, 1.7), we));
    for (int j = 0; j < 5; ++j) CHECK(table.grad()[1 * 5 + j] == 0.0);
  }
  CHECK_THROWS_AS(embedding_rows(table, {9}), std::invalid_argument);

  Tensor src = random_tensor(rng, {6, 3}, -1, 1);
  std::vector<int> picks = {5, 2, 2};
  Tensor wg = random_tensor(rng, {3, 3}, 0.5, 1.5, false);
  CHECK(max_fd_error({src}, [&] {
          return weighted_total(gather_rows(src, picks), wg);
        }) < 1e-4);
  CHECK_THROWS_AS(gather_rows(src, {6}), std::invalid_argument);
}

TEST_CASE("finite differences validate fused multi-head attention") {
  Rng rng(404);
  const int d = 8, heads = 2;

  // Causal self-attention over two ragged segments of lengths 3 and 4.
  std::vector<int> offsets = {0, 3, 7};
  Tensor q = random_tensor(rng, {7, d}, -0.5, 0.5);
  Tensor k = random_tensor(rng, {7, d}, -0.5, 0.5);
  Tensor v = random_tensor(rng, {7, d}, -0.5, 0.5);
  Tensor w = random_tensor(rng, {7, d}, 0.5, 1.5, false);
  CHECK(max_fd_error({q, k, v}, [&] {
          return weighted_total(
              multihead_attention(q, k, v, heads, true, offsets, offsets), w);
        }) < 1e-4);

  // Cross-attention: query and key/value segment lengths differ.
  std::vector<int> q_off = {0, 2, 5};
  std::vector<int> kv_off = {0, 3, 4};
  Tensor cq = random_tensor(rng, {5, d}, -0.5, 0.5);
  Tensor ck = random_tensor(rng, {4, d}, -0.5, 0.5);
  Tensor cv = random_tensor(rng, {4, d}, -0.5, 0.5);
  Tensor cw = random_tensor(rng, {5, d}, 0.5, 1.5, false);
  CHECK(max_fd_error({cq, ck, cv}, [&] {
          return weighted_total(
              multihead_attention(cq, ck, cv, heads, false, q_off, kv_off), cw);
        }) < 1e-4);

  CHECK_THROWS_AS(multihead_attention(cq, ck, cv, 3, false, q_off, kv_off),
                  std::invalid_argument);
  CHECK_THROWS_AS(multihead_attention(cq, ck, cv, heads, true, q_off, kv_off),
                  std::invalid_argument);
}

TEST_CASE("causal attention cannot see future positions") {
  // With causality on, position 0's output depends only on row 0 of v.
  const int d = 4;
  Tensor q = Tensor::from({3, d}, std::vector<Real>(12, 0.3));
  Tensor k = Tensor::from({3, d}, std::vector<Real>(12, 0.1));
  std::vector<Real> vdata(12, 0.0);
  for (int j = 0; j < d; ++j) vdata[static_cast<size_t>(j)] = 7.0;
  Tensor v = Tensor::from({3, d}, vdata);
  Tensor out = multihead_attention(q, k, v, 2, true, {0, 3}, {0, 3});
  for (int j = 0; j < d; ++j)
    CHECK(out.data()[static_cast<size_t>(j)] == doctest::Approx(7.0));
}

TEST_CASE("finite differences validate the training losses") {
  Rng rng(505);
  Tensor logits = random_tensor(rng, {5, 6}, -2, 2);
  std::vector<int> targets = {1, 0, 5, 0, 3};  // pad token id 0 at row 1 & 3
  CHECK(max_fd_error({logits}, [&] {
          return cross_entropy(logits, targets, 0.0, /*pad_id=*/0);
        }) < 1e-4);
  CHECK(max_fd_error({logits}, [&] {
          return cross_entropy(logits, targets, 0.1, /*pad_id=*/0);
        }) < 1e-4);

  Tensor probs = random_tensor(rng, {3, 4}, 0.05, 0.95);
  std::vector<Real> y = {1, 0, 0, 1, 0, 1, 1, 0, 0, 0, 1, 0};
  std::vector<Real> cls = {1.0, 0.4, 2.0, 0.7};
  std::vector<Real> sw = {1.0, 0.5, 1.5};
  CHECK(max_fd_error({probs}, [&] {
          return weighted_bce(probs, y, cls, sw);
        }) < 1e-4);
  CHECK(max_fd_error({probs}, [&] { return f_beta_loss(probs, y, 2.0); }) <
        1e-4);
}

TEST_CASE("bce and f-beta handle their anchor and degenerate cases") {
  // Probability one-half everywhere with unit weights gives ln 2 exactly.
  Tensor half = Tensor::from({2, 3}, std::vector<Real>(6, 0.5));
  std::vector<Real> y = {1, 0, 1, 0, 0, 1};
  Tensor l = weighted_bce(half, y, {1, 1, 1}, {1, 1});
  CHECK(l.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // A row with no positive labels cannot score; loss 1, gradient 0.
  Tensor p = Tensor::from({1, 3}, {0.2, 0.9, 0.4}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor fl = f_beta_loss(p, {0, 0, 0}, 2.0);
    CHECK(fl.item() == doctest::Approx(1.0));
    tape.backward(fl);
  }
  for (Real g : p.grad()) CHECK(g == 0.0);

  // The loss stays inside [0,1] for arbitrary prob/label mixes.
  Rng rng(606);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor pr = random_tensor(rng, {2, 5}, 0.0, 1.0, false);
    std::vector<Real> labels(10);
    for (Real& lv : labels) lv = rng.below(2) ? 1.0 : 0.0;
    double v = f_beta_loss(pr, labels, 2.0).item();
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("dropout scales kept values and replays its mask in backward") {
  Tensor x = Tensor::from({4, 4}, std::vector<Real>(16, 1.0), true);
  Rng rng(7);
  CHECK(dropout(x, 0.0, rng).same_storage(x));  // rate 0 is the identity

  Tape tape;
  Tensor out;
  {
    TapeScope scope(tape);
    out = dropout(x, 0.5, rng);
    tape.backward(sum(out));
  }
  int kept = 0;
  for (int i = 0; i < 16; ++i) {
    // Kept entries are scaled by 1/(1-rate) = 2; dropped are exactly 0.
    bool is_kept = out.data()[static_cast<size_t>(i)] == 2.0;
    bool is_dropped = out.data()[static_cast<size_t>(i)] == 0.0;
    CHECK((is_kept || is_dropped));
    kept += is_kept;
    CHECK(x.grad()[static_cast<size_t>(i)] ==
          out.data()[static_cast<size_t>(i)]);
  }
  CHECK(kept > 0);
  CHECK(kept < 16);
  CHECK_THROWS_AS(dropout(x, 1.0, rng), std::invalid_argument);
}

TEST_CASE("identical seeds reproduce forward values and gradients bit for bit") {
  auto run = [](std::vector<Real>* values, std::vector<Real>* grads) {
    Rng rng(42);
    Tensor a = random_tensor(rng, {4, 6}, -1, 1);
    Tensor b = random_tensor(rng, {6, 4}, -1, 1);
    Tensor g = random_tensor(rng, {6}, 0.5, 1.5);
    Tensor bias = random_tensor(rng, {6}, -0.2, 0.2);
    Tape tape;
    TapeScope scope(tape);
    Tensor h = layer_norm_rows(matmul(matmul(a, b), a), g, bias);
    Tensor loss = cross_entropy(h, {1, 2, 3, 4}, 0.1);
    tape.backward(loss);
    *values = h.data();
    *grads = a.grad();
    grads->insert(grads->end(), b.grad().begin(), b.grad().end());
  };
  std::vector<Real> v1, g1, v2, g2;
  run(&v1, &g1);
  run(&v2, &g2);
  CHECK(bitwise_equal(v1, v2));
  CHECK(bitwise_equal(g1, g2));
}

TEST_CASE("tensor shape bookkeeping and validation") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.size() == 6);
  CHECK_THROWS_AS(Tensor::from({2, 3}, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::from({0}, {}), std::invalid_argument);
  Tensor s = Tensor::scalar_value(4.5);
  CHECK(s.item() == 4.5);
  CHECK_THROWS_AS(t.item(), std::invalid_argument);
  CHECK_THROWS_AS(add(t, s), std::invalid_argument);
  CHECK_THROWS_AS(matmul(t, t), std::invalid_argument);
}

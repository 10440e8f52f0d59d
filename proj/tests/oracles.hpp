#pragma once

// Independent test oracles. Everything here recomputes results from first
// principles (enumeration, brute force, direct loops) and never calls the
// implementation paths it is used to check.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "mrb/graph.hpp"
#include "mrb/rng.hpp"
#include "mrb/tensor.hpp"
#include "test_util.hpp"

namespace mrb::testutil {

// Minimum over all pairings of mean |a_i - b_perm(i)| (exact 1-D transport).
inline double w1_bruteforce(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<size_t> perm(b.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (size_t i = 0; i < a.size(); ++i) cost += std::abs(a[i] - b[perm[i]]);
    best = std::min(best, cost / static_cast<double>(a.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Wilcoxon signed-rank null by full sign enumeration; quadratic mid-ranks.
struct WilcoxonOracle {
  double w_plus = 0.0;
  double p_greater_inclusive = 0.0;  // P(W >= w)
  double p_at = 0.0;                 // P(W == w)
  int n_used = 0;
};

inline WilcoxonOracle wilcoxon_oracle(const std::vector<double>& a,
                                      const std::vector<double>& b) {
  std::vector<double> d;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  }
  WilcoxonOracle res;
  const size_t n = d.size();
  res.n_used = static_cast<int>(n);
  if (n == 0) return res;
  std::vector<double> rank(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    double less = 0.0, equal = 0.0;
    for (size_t j = 0; j < n; ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) less += 1.0;
      if (std::abs(d[j]) == std::abs(d[i])) equal += 1.0;
    }
    rank[i] = less + (equal + 1.0) / 2.0;
  }
  for (size_t i = 0; i < n; ++i) {
    if (d[i] > 0) res.w_plus += rank[i];
  }
  uint64_t ge = 0, eq = 0;
  const uint64_t total = 1ULL << n;
  for (uint64_t mask = 0; mask < total; ++mask) {
    double ws = 0.0;
    for (size_t i = 0; i < n; ++i) {
      if (mask & (1ULL << i)) ws += rank[i];
    }
    if (ws >= res.w_plus - 1e-9) ++ge;
    if (std::abs(ws - res.w_plus) <= 1e-9) ++eq;
  }
  res.p_greater_inclusive = static_cast<double>(ge) / static_cast<double>(total);
  res.p_at = static_cast<double>(eq) / static_cast<double>(total);
  return res;
}

// One random scalar-output graph exercising the given op, plus the inputs to
// differentiate. Drives the finite-difference sweep in the op property tests
// and the acceptance gradient criterion.
struct OpCase {
  Graph g;
  std::map<std::string, Tensor> inputs;
  std::vector<std::string> wrt;
};

inline OpCase make_op_case(Op op, Rng& rng) {
  OpCase c;
  const int h = 4 + static_cast<int>(rng.index(3)) * 2;
  const int w = 4 + static_cast<int>(rng.index(3)) * 2;
  const int ch = 1 + static_cast<int>(rng.index(3));
  NodeId x = c.g.input("x");
  c.inputs.emplace("x", random_tensor({h, w, ch}, rng, -0.8, 0.9));
  c.wrt.push_back("x");
  NodeId y = x;
  switch (op) {
    case Op::conv2d: {
      const int co = 1 + static_cast<int>(rng.index(3));
      const int k = rng.index(2) ? 3 : 1;
      NodeId wgt = c.g.input("w");
      NodeId bias = c.g.input("b");
      c.inputs.emplace("w", random_tensor({k, k, ch, co}, rng, -0.7, 0.7));
      c.inputs.emplace("b", random_tensor({co}, rng, -0.3, 0.3));
      c.wrt.push_back("w");
      c.wrt.push_back("b");
      const Pad pad = rng.index(2) ? Pad::reflect : Pad::zero;
      const int stride = 1 + static_cast<int>(rng.index(2));
      y = c.g.conv2d(x, wgt, bias, stride, pad);
      break;
    }
    case Op::max_pool:
      y = c.g.max_pool(x, 2);
      break;
    case Op::avg_pool:
      y = c.g.avg_pool(x, 2);
      break;
    case Op::global_avg_pool:
      y = c.g.global_avg_pool(x);
      break;
    case Op::relu:
      y = c.g.relu(x);
      break;
    case Op::sigmoid:
      y = c.g.sigmoid(c.g.scale(x, 3.0, -0.5));
      break;
    case Op::affine: {
      NodeId flat = c.g.global_avg_pool(x);
      const int m = 1 + static_cast<int>(rng.index(3));
      NodeId wgt = c.g.input("w");
      NodeId bias = c.g.input("b");
      c.inputs.emplace("w", random_tensor({ch, m}, rng, -0.7, 0.7));
      c.inputs.emplace("b", random_tensor({m}, rng, -0.3, 0.3));
      c.wrt.push_back("w");
      c.wrt.push_back("b");
      y = c.g.affine(flat, wgt, bias);
      break;
    }
    case Op::add:
    case Op::sub:
    case Op::mul:
    case Op::div: {
      NodeId other = c.g.input("y");
      c.inputs.emplace("y", random_tensor({h, w, ch}, rng, 0.4, 1.4));  // divisor off zero
      c.wrt.push_back("y");
      if (op == Op::add) y = c.g.add(x, other);
      if (op == Op::sub) y = c.g.sub(x, other);
      if (op == Op::mul) y = c.g.mul(x, other);
      if (op == Op::div) y = c.g.div(x, other);
      break;
    }
    case Op::scale:
      y = c.g.scale(x, rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0));
      break;
    case Op::sum:
      y = c.g.sum(x);
      break;
    case Op::mean:
      y = c.g.mean(x);
      break;
    case Op::sobel_h:
      y = c.g.sobel_h(x);
      break;
    case Op::sobel_v:
      y = c.g.sobel_v(x);
      break;
    case Op::square:
      y = c.g.square(x);
      break;
    case Op::sqrt_op:
      y = c.g.sqrt(c.g.scale(x, 0.5, 1.0), 1e-12);
      break;
    case Op::clamp:
      y = c.g.clamp(x, -0.5, 0.6);
      break;
    case Op::upsample2:
      y = c.g.upsample2(x);
      break;
    case Op::input:
    case Op::constant:
      break;
  }
  c.g.set_output(c.g.mean(y));
  return c;
}

inline const std::vector<Op>& all_checked_ops() {
  static const std::vector<Op> ops = {
      Op::conv2d,  Op::max_pool, Op::avg_pool, Op::global_avg_pool,
      Op::relu,    Op::sigmoid,  Op::affine,   Op::add,
      Op::sub,     Op::mul,      Op::div,      Op::scale,
      Op::sum,     Op::mean,     Op::sobel_h,  Op::sobel_v,
      Op::square,  Op::sqrt_op,  Op::clamp,    Op::upsample2,
  };
  return ops;
}

}  // namespace mrb::testutil

//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef HIERGEN_TESTS_FD_CHECK_H_
#define HIERGEN_TESTS_FD_CHECK_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hiergen/tensor.h"

namespace hiergen::testing {

struct FdReport {
  long checked = 0;
  // Coordinates whose perturbation moved a relu input across zero.
  long skipped_kinks = 0;
  double max_rel_error = 0;
  double max_abs_grad = 0;
  // Parameter name, numeric and analytic value at the worst coordinate.
  std::string worst;
};

// Central differences against backward() on up to `samples` coordinates
// drawn without replacement. Relative error uses max(|a|, |n|, 1e-6)
// with an absolute floor of 1e-8 for coordinates whose gradient vanishes.
// Coordinates whose stencil crosses a relu kink are counted and skipped.
inline FdReport check_gradients(
    nn::ParamStore<double> &store,
    const std::function<nn::Var<double>(nn::Tape<double> &)> &loss,
    long samples, double h, unsigned seed) {
  store.zero_grad();
  {
    nn::Tape<double> t;
    t.backward(loss(t));
  }
  std::vector<std::pair<int, long>> coords;
  for (int p = 0; p < store.size(); ++p)
    for (long k = 0; k < store[p].value.size(); ++k)
      coords.emplace_back(p, k);
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  if (static_cast<long>(coords.size()) > samples)
    coords.resize(samples);

  auto eval = [&](std::uint64_t &sig) {
    nn::Tape<double> t(false);
    double v = loss(t).scalar();
    sig = t.kink_signature();
    return v;
  };
  std::uint64_t base = 0, sig_up = 0, sig_down = 0;
  eval(base);
  FdReport report;
  for (auto [p, k]: coords) {
    double &x = store[p].value.data()[k];
    double x0 = x;
    x = x0 + h;
    double up = eval(sig_up);
    x = x0 - h;
    double down = eval(sig_down);
    x = x0;
    if (sig_up != base || sig_down != base) {
      ++report.skipped_kinks;
      continue;
    }
    double numeric = (up - down) / (2 * h);
    double analytic = store[p].grad.data()[k];
    double diff = std::abs(numeric - analytic);
    double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    double rel = diff < 1e-8 ? 0.0 : diff / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      std::ostringstream os;
      os << store[p].name << "[" << k << "] numeric " << numeric
         << " analytic " << analytic;
      report.worst = os.str();
    }
    report.max_abs_grad = std::max(report.max_abs_grad, std::abs(analytic));
    ++report.checked;
  }
  return report;
}

}  // namespace hiergen::testing

#endif  // HIERGEN_TESTS_FD_CHECK_H_

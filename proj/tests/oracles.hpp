#pragma once

// Test-only reference computations. Nothing here calls into the solver code
// paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mecctl/milp.hpp"

namespace oracle {

// Every constraint of `model` holds for `x` within `tol`, bounds included, and
// binaries are integral within `int_tol`.
inline std::vector<std::string> violations(const mecctl::milp::Model& model,
                                           std::span<const double> x, double tol,
                                           double int_tol = 1e-6) {
  using namespace mecctl::milp;
  std::vector<std::string> out;
  const auto& vars = model.variables();
  for (std::size_t j = 0; j < vars.size(); ++j) {
    if (x[j] < vars[j].lower - tol || x[j] > vars[j].upper + tol) {
      out.push_back("bound of var " + std::to_string(j));
    }
    if (vars[j].kind == VarKind::binary &&
        std::min(std::fabs(x[j]), std::fabs(1.0 - x[j])) > int_tol) {
      out.push_back("integrality of var " + std::to_string(j));
    }
  }
  for (std::size_t i = 0; i < model.constraints().size(); ++i) {
    const auto& c = model.constraints()[i];
    double lhs = 0.0;
    double scale = 1.0;
    for (const auto& t : c.terms) {
      lhs += t.coef * x[t.var];
      scale = std::max(scale, std::fabs(t.coef));
    }
    const double slack = tol * scale;
    const bool ok = (c.sense == Sense::less_equal && lhs <= c.rhs + slack) ||
                    (c.sense == Sense::greater_equal && lhs >= c.rhs - slack) ||
                    (c.sense == Sense::equal && std::fabs(lhs - c.rhs) <= slack);
    if (!ok) out.push_back("constraint " + std::to_string(i));
  }
  return out;
}

// Solves a dense n x n system by Gaussian elimination with partial pivoting.
inline std::optional<std::vector<double>> solve_dense(std::vector<std::vector<double>> a,
                                                      std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    }
    if (std::fabs(a[piv][col]) < 1e-10) return std::nullopt;
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
  return x;
}

// Minimum of c'x over {A x <= b, lo <= x <= hi} by enumerating every basic
// point (n active constraints among the rows and bounds). Returns nullopt
// when no vertex is feasible.
inline std::optional<double> vertex_enumeration(const std::vector<std::vector<double>>& a,
                                                const std::vector<double>& b,
                                                const std::vector<double>& lo,
                                                const std::vector<double>& hi,
                                                const std::vector<double>& c) {
  const std::size_t n = c.size();
  std::vector<std::vector<double>> planes = a;
  std::vector<double> rhs = b;
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> e(n, 0.0);
    e[j] = 1.0;
    planes.push_back(e);
    rhs.push_back(lo[j]);
    planes.push_back(e);
    rhs.push_back(hi[j]);
  }
  const std::size_t total = planes.size();
  std::optional<double> best;
  std::vector<std::size_t> pick(n);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
    if (depth == n) {
      std::vector<std::vector<double>> m;
      std::vector<double> r;
      for (auto p : pick) {
        m.push_back(planes[p]);
        r.push_back(rhs[p]);
      }
      auto x = solve_dense(m, r);
      if (!x) return;
      for (std::size_t i = 0; i < a.size(); ++i) {
        double lhs = 0.0;
        for (std::size_t j = 0; j < n; ++j) lhs += a[i][j] * (*x)[j];
        if (lhs > b[i] + 1e-9) return;
      }
      for (std::size_t j = 0; j < n; ++j) {
        if ((*x)[j] < lo[j] - 1e-9 || (*x)[j] > hi[j] + 1e-9) return;
      }
      double obj = 0.0;
      for (std::size_t j = 0; j < n; ++j) obj += c[j] * (*x)[j];
      if (!best || obj < *best) best = obj;
      return;
    }
    for (std::size_t p = start; p < total; ++p) {
      pick[depth] = p;
      rec(p + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

}  // namespace oracle

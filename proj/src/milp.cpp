#include "mecctl/milp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>

namespace mecctl::milp {

const char* to_string(Status status) {
  switch (status) {
    case Status::optimal:
      return "optimal";
    case Status::infeasible:
      return "infeasible";
    case Status::unbounded:
      return "unbounded";
    case Status::node_limit:
      return "node_limit";
  }
  return "unknown";
}

std::size_t Model::add_variable(double lower, double upper, VarKind kind,
                                std::string name) {
  variables_.push_back({lower, upper, kind, std::move(name)});
  objective_.push_back(0.0);
  return variables_.size() - 1;
}

void Model::add_constraint(std::vector<Term> terms, Sense sense, double rhs,
                           std::string name) {
  constraints_.push_back({std::move(terms), sense, rhs, std::move(name)});
}

void Model::add_objective(std::size_t var, double coef) {
  objective_.at(var) += coef;
}

void Model::set_objective(std::size_t var, double coef) {
  objective_.at(var) = coef;
}

void Model::set_bounds(std::size_t var, double lower, double upper) {
  auto& v = variables_.at(var);
  v.lower = lower;
  v.upper = upper;
}

std::size_t Model::num_binaries() const {
  return static_cast<std::size_t>(
      std::count_if(variables_.begin(), variables_.end(),
                    [](const Variable& v) { return v.kind == VarKind::binary; }));
}

void Model::validate() const {
  for (std::size_t j = 0; j < variables_.size(); ++j) {
    const auto& v = variables_[j];
    if (!std::isfinite(v.lower)) {
      throw std::invalid_argument("variable " + std::to_string(j) +
                                  " has a non-finite lower bound");
    }
    if (std::isnan(v.upper) || v.upper == -kInfinity) {
      throw std::invalid_argument("variable " + std::to_string(j) +
                                  " has an invalid upper bound");
    }
    if (v.kind == VarKind::binary && (v.lower < 0.0 || v.upper > 1.0)) {
      throw std::invalid_argument("binary variable " + std::to_string(j) +
                                  " has bounds outside [0,1]");
    }
    if (!std::isfinite(objective_[j])) {
      throw std::invalid_argument("objective coefficient of variable " +
                                  std::to_string(j) + " is not finite");
    }
  }
  for (std::size_t i = 0; i < constraints_.size(); ++i) {
    const auto& c = constraints_[i];
    if (!std::isfinite(c.rhs)) {
      throw std::invalid_argument("constraint " + std::to_string(i) +
                                  " has a non-finite right-hand side");
    }
    for (const auto& t : c.terms) {
      if (t.var >= variables_.size()) {
        throw std::invalid_argument("constraint " + std::to_string(i) +
                                    " references an unknown variable");
      }
      if (!std::isfinite(t.coef)) {
        throw std::invalid_argument("constraint " + std::to_string(i) +
                                    " has a non-finite coefficient");
      }
    }
  }
}

double evaluate_objective(const Model& model, std::span<const double> values) {
  double sum = 0.0;
  const auto& obj = model.objective();
  for (std::size_t j = 0; j < obj.size(); ++j) sum += obj[j] * values[j];
  return sum;
}

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-9;
constexpr double kZeroClean = 1e-13;

// Dense tableau in the form [A | b] with an extra cost row at the bottom.
class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_((rows + 1) * (cols + 1), 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data_[r * (cols_ + 1) + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * (cols_ + 1) + c];
  }
  double& rhs(std::size_t r) { return at(r, cols_); }
  double rhs(std::size_t r) const { return at(r, cols_); }
  double& cost(std::size_t c) { return at(rows_, c); }
  double cost(std::size_t c) const { return at(rows_, c); }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  void pivot(std::size_t pr, std::size_t pc) {
    const std::size_t width = cols_ + 1;
    double* prow = &data_[pr * width];
    const double inv = 1.0 / prow[pc];
    for (std::size_t c = 0; c < width; ++c) prow[c] *= inv;
    prow[pc] = 1.0;
    for (std::size_t r = 0; r <= rows_; ++r) {
      if (r == pr) continue;
      double* row = &data_[r * width];
      const double factor = row[pc];
      if (factor == 0.0) continue;
      for (std::size_t c = 0; c < width; ++c) {
        if (prow[c] == 0.0) continue;
        row[c] -= factor * prow[c];
        if (std::fabs(row[c]) < kZeroClean) row[c] = 0.0;
      }
      row[pc] = 0.0;
    }
  }

  void drop_row(std::size_t r) {
    const std::size_t width = cols_ + 1;
    data_.erase(data_.begin() + static_cast<std::ptrdiff_t>(r * width),
                data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * width));
    --rows_;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

enum class PivotResult { optimal, unbounded };

// Bland's rule: lowest-index improving column, ratio ties to the lowest basic
// column index.
PivotResult run_simplex(Tableau& t, std::vector<std::size_t>& basis,
                        std::size_t allowed_cols) {
  while (true) {
    std::size_t enter = allowed_cols;
    for (std::size_t c = 0; c < allowed_cols; ++c) {
      if (t.cost(c) < -kCostTol) {
        enter = c;
        break;
      }
    }
    if (enter == allowed_cols) return PivotResult::optimal;

    std::size_t leave = t.rows();
    double best = kInfinity;
    for (std::size_t r = 0; r < t.rows(); ++r) {
      const double a = t.at(r, enter);
      if (a <= kPivotTol) continue;
      const double ratio = std::max(t.rhs(r), 0.0) / a;
      if (leave == t.rows() || ratio < best - 1e-12) {
        best = ratio;
        leave = r;
      } else if (ratio <= best + 1e-12 && basis[r] < basis[leave]) {
        best = std::min(best, ratio);
        leave = r;
      }
    }
    if (leave == t.rows()) return PivotResult::unbounded;
    t.pivot(leave, enter);
    basis[leave] = enter;
  }
}

struct LpOutcome {
  Status status = Status::infeasible;
  std::vector<double> values;
  double objective = 0.0;
};

// Solves min c'x over the model's constraints with the given bounds
// (overriding the model's own). Binary kinds are ignored here.
LpOutcome solve_lp(const Model& model, std::span<const double> lower,
                   std::span<const double> upper, const SolverConfig& config) {
  const auto& vars = model.variables();
  const std::size_t n = vars.size();
  LpOutcome out;

  // Column mapping: fixed variables are substituted out, the rest shifted by
  // their lower bound.
  std::vector<std::ptrdiff_t> column(n, -1);
  std::size_t structural = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (upper[j] < lower[j] - config.feasibility_tol) return out;
    if (upper[j] - lower[j] > 1e-12) column[j] = static_cast<std::ptrdiff_t>(structural++);
  }

  struct Row {
    std::vector<std::pair<std::size_t, double>> coefs;
    Sense sense;
    double rhs;
  };
  std::vector<Row> rows;
  rows.reserve(model.constraints().size() + n);

  for (const auto& con : model.constraints()) {
    Row row{{}, con.sense, con.rhs};
    for (const auto& term : con.terms) {
      if (term.coef == 0.0) continue;
      row.rhs -= term.coef * lower[term.var];
      if (column[term.var] >= 0) {
        row.coefs.emplace_back(static_cast<std::size_t>(column[term.var]), term.coef);
      }
    }
    // Merge duplicate columns.
    std::sort(row.coefs.begin(), row.coefs.end());
    std::vector<std::pair<std::size_t, double>> merged;
    for (const auto& [c, a] : row.coefs) {
      if (!merged.empty() && merged.back().first == c) {
        merged.back().second += a;
      } else {
        merged.emplace_back(c, a);
      }
    }
    std::erase_if(merged, [](const auto& p) { return p.second == 0.0; });
    row.coefs = std::move(merged);

    if (row.coefs.empty()) {
      const double tol = config.feasibility_tol * std::max(1.0, std::fabs(con.rhs));
      const bool ok = (con.sense == Sense::less_equal && 0.0 <= row.rhs + tol) ||
                      (con.sense == Sense::greater_equal && 0.0 >= row.rhs - tol) ||
                      (con.sense == Sense::equal && std::fabs(row.rhs) <= tol);
      if (!ok) return out;
      continue;
    }
    // Row scaling keeps magnitudes comparable across constraint classes.
    double scale = 0.0;
    for (const auto& p : row.coefs) scale = std::max(scale, std::fabs(p.second));
    for (auto& p : row.coefs) p.second /= scale;
    row.rhs /= scale;
    rows.push_back(std::move(row));
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (column[j] >= 0 && std::isfinite(upper[j])) {
      rows.push_back({{{static_cast<std::size_t>(column[j]), 1.0}},
                      Sense::less_equal,
                      upper[j] - lower[j]});
    }
  }

  // Orient every row to a non-negative right-hand side.
  std::size_t slack_count = 0;
  std::size_t art_count = 0;
  for (auto& row : rows) {
    if (row.rhs < 0.0) {
      row.rhs = -row.rhs;
      for (auto& p : row.coefs) p.second = -p.second;
      if (row.sense == Sense::less_equal) {
        row.sense = Sense::greater_equal;
      } else if (row.sense == Sense::greater_equal) {
        row.sense = Sense::less_equal;
      }
    }
    if (row.sense != Sense::equal) ++slack_count;
    if (row.sense != Sense::less_equal) ++art_count;
  }

  const std::size_t m = rows.size();
  const std::size_t art_begin = structural + slack_count;
  const std::size_t total_cols = art_begin + art_count;
  Tableau t(m, total_cols);
  std::vector<std::size_t> basis(m);
  std::vector<bool> is_artificial(total_cols, false);

  std::size_t next_slack = structural;
  std::size_t next_art = art_begin;
  for (std::size_t r = 0; r < m; ++r) {
    const auto& row = rows[r];
    for (const auto& [c, a] : row.coefs) t.at(r, c) = a;
    t.rhs(r) = row.rhs;
    switch (row.sense) {
      case Sense::less_equal:
        t.at(r, next_slack) = 1.0;
        basis[r] = next_slack++;
        break;
      case Sense::greater_equal:
        t.at(r, next_slack++) = -1.0;
        t.at(r, next_art) = 1.0;
        is_artificial[next_art] = true;
        basis[r] = next_art++;
        break;
      case Sense::equal:
        t.at(r, next_art) = 1.0;
        is_artificial[next_art] = true;
        basis[r] = next_art++;
        break;
    }
  }

  // Phase 1: minimize the sum of artificials.
  if (art_count > 0) {
    for (std::size_t c = art_begin; c < total_cols; ++c) t.cost(c) = 1.0;
    for (std::size_t r = 0; r < m; ++r) {
      if (!is_artificial[basis[r]]) continue;
      for (std::size_t c = 0; c <= total_cols; ++c) t.at(m, c) -= t.at(r, c);
    }
    run_simplex(t, basis, total_cols);
    const double infeasibility = -t.rhs(m);
    if (infeasibility > config.feasibility_tol) return out;

    // Drive remaining artificials out of the basis; drop redundant rows.
    for (std::size_t r = t.rows(); r-- > 0;) {
      if (!is_artificial[basis[r]]) continue;
      std::size_t enter = art_begin;
      for (std::size_t c = 0; c < art_begin; ++c) {
        if (std::fabs(t.at(r, c)) > kPivotTol) {
          enter = c;
          break;
        }
      }
      if (enter < art_begin) {
        t.pivot(r, enter);
        basis[r] = enter;
      } else {
        t.drop_row(r);
        basis.erase(basis.begin() + static_cast<std::ptrdiff_t>(r));
      }
    }
  }

  // Phase 2 cost row from the original objective, restricted to
  // non-artificial columns.
  const std::size_t rows_now = t.rows();
  for (std::size_t c = 0; c <= total_cols; ++c) t.at(rows_now, c) = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (column[j] >= 0) t.cost(static_cast<std::size_t>(column[j])) = model.objective()[j];
  }
  for (std::size_t r = 0; r < rows_now; ++r) {
    const double cb = basis[r] < structural ? t.cost(basis[r]) : 0.0;
    if (cb == 0.0) continue;
    for (std::size_t c = 0; c <= total_cols; ++c) t.at(rows_now, c) -= cb * t.at(r, c);
  }
  if (run_simplex(t, basis, art_begin) == PivotResult::unbounded) {
    out.status = Status::unbounded;
    return out;
  }

  std::vector<double> shifted(structural, 0.0);
  for (std::size_t r = 0; r < rows_now; ++r) {
    if (basis[r] < structural) shifted[basis[r]] = std::max(t.rhs(r), 0.0);
  }
  out.values.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double v = lower[j];
    if (column[j] >= 0) v += shifted[static_cast<std::size_t>(column[j])];
    out.values[j] = std::clamp(v, lower[j], std::max(lower[j], upper[j]));
  }
  out.objective = evaluate_objective(model, out.values);
  out.status = Status::optimal;
  return out;
}

std::vector<double> bounds_lower(const Model& model) {
  std::vector<double> lo;
  lo.reserve(model.num_variables());
  for (const auto& v : model.variables()) lo.push_back(v.lower);
  return lo;
}

std::vector<double> bounds_upper(const Model& model) {
  std::vector<double> hi;
  hi.reserve(model.num_variables());
  for (const auto& v : model.variables()) hi.push_back(v.upper);
  return hi;
}

Solution to_solution(LpOutcome&& lp, std::size_t nodes) {
  Solution s;
  s.status = lp.status;
  s.nodes = nodes;
  if (lp.status == Status::optimal) {
    s.values = std::move(lp.values);
    s.objective = lp.objective;
  }
  return s;
}

}  // namespace

Solution simplex_solve(const Model& model, const SolverConfig& config) {
  model.validate();
  const auto lo = bounds_lower(model);
  const auto hi = bounds_upper(model);
  return to_solution(solve_lp(model, lo, hi, config), 1);
}

Solution branch_and_bound(const Model& model, const SolverConfig& config) {
  model.validate();
  const auto& vars = model.variables();
  std::vector<std::size_t> binaries;
  for (std::size_t j = 0; j < vars.size(); ++j) {
    if (vars[j].kind == VarKind::binary) binaries.push_back(j);
  }

  struct Node {
    std::vector<double> lower;
    std::vector<double> upper;
  };
  std::vector<Node> stack;
  stack.push_back({bounds_lower(model), bounds_upper(model)});

  Solution best;
  best.status = Status::infeasible;
  double incumbent = kInfinity;
  std::size_t nodes = 0;
  bool limit_hit = false;

  while (!stack.empty()) {
    if (nodes >= config.max_bb_nodes) {
      limit_hit = true;
      break;
    }
    Node node = std::move(stack.back());
    stack.pop_back();

    ++nodes;
    LpOutcome lp = solve_lp(model, node.lower, node.upper, config);
    if (lp.status == Status::unbounded) {
      Solution s;
      s.status = Status::unbounded;
      s.nodes = nodes;
      return s;
    }
    if (lp.status != Status::optimal) continue;
    if (std::isfinite(incumbent) &&
        lp.objective >= incumbent - config.relative_gap * std::max(1.0, std::fabs(incumbent))) {
      continue;
    }

    std::size_t branch_var = vars.size();
    double most = config.integrality_tol;
    for (std::size_t j : binaries) {
      const double v = lp.values[j];
      const double frac = std::min(v - std::floor(v), std::ceil(v) - v);
      if (frac > most + 1e-15) {
        most = frac;
        branch_var = j;
      }
    }

    if (branch_var == vars.size()) {
      // Integral: fix binaries to their rounded values and re-solve so the
      // continuous part is consistent with an exact 0/1 assignment.
      for (std::size_t j : binaries) {
        const double r = std::round(lp.values[j]);
        node.lower[j] = r;
        node.upper[j] = r;
      }
      ++nodes;
      LpOutcome fixed = solve_lp(model, node.lower, node.upper, config);
      if (fixed.status != Status::optimal) continue;
      if (fixed.objective < incumbent) {
        incumbent = fixed.objective;
        best = to_solution(std::move(fixed), 0);
      }
      continue;
    }

    Node one = node;
    one.lower[branch_var] = 1.0;
    one.upper[branch_var] = 1.0;
    node.lower[branch_var] = 0.0;
    node.upper[branch_var] = 0.0;
    stack.push_back(std::move(one));
    stack.push_back(std::move(node));
  }

  best.nodes = nodes;
  if (limit_hit) best.status = Status::node_limit;
  return best;
}

Solution brute_force_solve(const Model& model, const SolverConfig& config) {
  model.validate();
  const auto& vars = model.variables();
  std::vector<std::size_t> binaries;
  for (std::size_t j = 0; j < vars.size(); ++j) {
    if (vars[j].kind == VarKind::binary) binaries.push_back(j);
  }
  if (binaries.size() > kBruteForceMaxBinaries) {
    throw std::invalid_argument("brute_force_solve: " + std::to_string(binaries.size()) +
                                " binaries exceed the enumeration limit of " +
                                std::to_string(kBruteForceMaxBinaries));
  }

  auto lo = bounds_lower(model);
  auto hi = bounds_upper(model);
  Solution best;
  best.status = Status::infeasible;
  std::size_t nodes = 0;
  const std::uint64_t count = std::uint64_t{1} << binaries.size();
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    bool admissible = true;
    for (std::size_t b = 0; b < binaries.size(); ++b) {
      const std::size_t j = binaries[b];
      const double v = ((mask >> b) & 1U) ? 1.0 : 0.0;
      if (v < vars[j].lower || v > vars[j].upper) {
        admissible = false;
        break;
      }
      lo[j] = v;
      hi[j] = v;
    }
    if (!admissible) continue;
    ++nodes;
    LpOutcome lp = solve_lp(model, lo, hi, config);
    if (lp.status == Status::unbounded) {
      Solution s;
      s.status = Status::unbounded;
      s.nodes = nodes;
      return s;
    }
    if (lp.status != Status::optimal) continue;
    if (best.status != Status::optimal || lp.objective < best.objective) {
      best = to_solution(std::move(lp), 0);
    }
  }
  best.nodes = nodes;
  return best;
}

namespace {

void write_term(std::ostream& out, double coef, const std::string& name, bool first) {
  if (coef < 0) {
    out << (first ? "-" : " - ");
  } else if (!first) {
    out << " + ";
  }
  const double mag = std::fabs(coef);
  if (mag != 1.0) out << mag << ' ';
  out << name;
}

std::string var_name(const Model& model, std::size_t j) {
  const auto& name = model.variables()[j].name;
  return name.empty() ? "v" + std::to_string(j) : name;
}

}  // namespace

void write_lp(std::ostream& out, const Model& model) {
  out << "Minimize\n obj:";
  bool first = true;
  for (std::size_t j = 0; j < model.num_variables(); ++j) {
    const double c = model.objective()[j];
    if (c == 0.0) continue;
    if (first) out << ' ';
    write_term(out, c, var_name(model, j), first);
    first = false;
  }
  if (first) out << " 0";
  out << "\nSubject To\n";
  std::size_t idx = 0;
  for (const auto& con : model.constraints()) {
    out << ' ' << (con.name.empty() ? "c" + std::to_string(idx) : con.name) << ':';
    bool f = true;
    for (const auto& t : con.terms) {
      if (f) out << ' ';
      write_term(out, t.coef, var_name(model, t.var), f);
      f = false;
    }
    if (f) out << " 0";
    switch (con.sense) {
      case Sense::less_equal:
        out << " <= ";
        break;
      case Sense::equal:
        out << " = ";
        break;
      case Sense::greater_equal:
        out << " >= ";
        break;
    }
    out << con.rhs << '\n';
    ++idx;
  }
  out << "Bounds\n";
  for (std::size_t j = 0; j < model.num_variables(); ++j) {
    const auto& v = model.variables()[j];
    if (v.kind == VarKind::binary) continue;
    out << ' ' << v.lower << " <= " << var_name(model, j);
    if (std::isfinite(v.upper)) out << " <= " << v.upper;
    out << '\n';
  }
  out << "Binaries\n";
  for (std::size_t j = 0; j < model.num_variables(); ++j) {
    if (model.variables()[j].kind == VarKind::binary) out << ' ' << var_name(model, j) << '\n';
  }
  out << "End\n";
}

}  // namespace mecctl::milp

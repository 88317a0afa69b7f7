#pragma once

// Small-scale mixed-integer linear programming: a dense two-phase simplex for
// LP relaxations, depth-first branch-and-bound over binary variables and an
// exhaustive enumeration solver used as a test oracle.
//
// All models are minimization problems. Variables must have a finite lower
// bound; upper bounds may be infinite for continuous variables.

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace mecctl::milp {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class VarKind { continuous, binary };
enum class Sense { less_equal, equal, greater_equal };
enum class Status { optimal, infeasible, unbounded, node_limit };

const char* to_string(Status status);

struct Variable {
  double lower = 0.0;
  double upper = kInfinity;
  VarKind kind = VarKind::continuous;
  std::string name;
};

struct Term {
  std::size_t var;
  double coef;
};

struct Constraint {
  std::vector<Term> terms;
  Sense sense = Sense::less_equal;
  double rhs = 0.0;
  std::string name;
};

class Model {
 public:
  std::size_t add_variable(double lower, double upper, VarKind kind,
                           std::string name = {});
  std::size_t add_continuous(double lower, double upper, std::string name = {}) {
    return add_variable(lower, upper, VarKind::continuous, std::move(name));
  }
  std::size_t add_binary(std::string name = {}) {
    return add_variable(0.0, 1.0, VarKind::binary, std::move(name));
  }

  void add_constraint(std::vector<Term> terms, Sense sense, double rhs,
                      std::string name = {});

  // Objective coefficients accumulate.
  void add_objective(std::size_t var, double coef);
  void set_objective(std::size_t var, double coef);

  void set_bounds(std::size_t var, double lower, double upper);

  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<Constraint>& constraints() const { return constraints_; }
  const std::vector<double>& objective() const { return objective_; }
  std::size_t num_variables() const { return variables_.size(); }
  std::size_t num_binaries() const;

  // Throws std::invalid_argument describing the first structural problem.
  void validate() const;

 private:
  std::vector<Variable> variables_;
  std::vector<Constraint> constraints_;
  std::vector<double> objective_;
};

struct SolverConfig {
  double feasibility_tol = 1e-7;
  double integrality_tol = 1e-6;
  double relative_gap = 1e-6;
  std::size_t max_bb_nodes = 1'000'000;
};

struct Solution {
  Status status = Status::infeasible;
  std::vector<double> values;
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::size_t nodes = 0;  // LP solves performed

  bool has_values() const { return !values.empty(); }
};

// Solves the LP relaxation: binary variables are treated as continuous
// within their bounds. Pivoting follows Bland's rule.
Solution simplex_solve(const Model& model, const SolverConfig& config = {});

// Deterministic depth-first search: branch on the most fractional binary
// (ties to the lowest index) and explore the 0-branch first. On node-limit
// exhaustion the incumbent, if any, is returned with Status::node_limit.
Solution branch_and_bound(const Model& model, const SolverConfig& config = {});

inline constexpr std::size_t kBruteForceMaxBinaries = 20;

// Enumerates every binary assignment and solves the continuous remainder.
// Throws std::invalid_argument when the model has more than
// kBruteForceMaxBinaries binaries.
Solution brute_force_solve(const Model& model, const SolverConfig& config = {});

double evaluate_objective(const Model& model, std::span<const double> values);

// LP-format text dump, for cross-checking with external solvers.
void write_lp(std::ostream& out, const Model& model);

}  // namespace mecctl::milp

// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace npucp::cp {

// Literal over a boolean variable: true when var == (negated ? 0 : 1).
struct Lit {
  int var = -1;
  bool negated = false;

  Lit operator!() const { return {var, !negated}; }
};

struct Term {
  int var = -1;
  int64_t coef = 0;
};

enum class Rel { kLe, kEq, kGe };

struct Linear {
  std::vector<Term> terms;
  Rel rel = Rel::kLe;
  int64_t rhs = 0;
};

struct LinearConstraint {
  Linear lin;
  std::string name;
};

struct IndicatorConstraint {
  Lit lit;
  Linear lin;
  std::string name;
};

struct ExtremumEntry {
  Lit gate;
  int64_t value = 0;
};

// target = max (or min) of values with an active gate; default_value when none is active.
struct ExtremumConstraint {
  int target = -1;
  bool is_max = true;
  std::vector<ExtremumEntry> entries;
  int64_t default_value = 0;
  std::string name;
};

struct Variable {
  int64_t lo = 0;
  int64_t hi = 1;
  bool is_bool = true;
  std::string name;
  bool branch_low = false;  // search tries the low value first
};

class CpModel {
 public:
  int new_bool(std::string name = {}, bool branch_low = false);
  int new_int(int64_t lo, int64_t hi, std::string name = {});

  void add_linear(std::vector<Term> terms, Rel rel, int64_t rhs, std::string name = {});
  void add_indicator(Lit lit, std::vector<Term> terms, Rel rel, int64_t rhs, std::string name = {});
  void add_extremum(int target, bool is_max, std::vector<ExtremumEntry> entries, int64_t default_value,
                    std::string name = {});
  void minimize(std::vector<Term> terms, int64_t constant = 0);

  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<LinearConstraint>& linears() const { return linears_; }
  const std::vector<IndicatorConstraint>& indicators() const { return indicators_; }
  const std::vector<ExtremumConstraint>& extrema() const { return extrema_; }
  const std::vector<Term>& objective() const { return objective_; }
  int64_t objective_constant() const { return objective_constant_; }
  int num_vars() const { return static_cast<int>(vars_.size()); }

  // Textual LP-like dump for external cross-checking.
  std::string to_lp() const;

 private:
  void check_terms(const std::vector<Term>& terms) const;
  void check_lit(Lit lit) const;

  std::vector<Variable> vars_;
  std::vector<LinearConstraint> linears_;
  std::vector<IndicatorConstraint> indicators_;
  std::vector<ExtremumConstraint> extrema_;
  std::vector<Term> objective_;
  int64_t objective_constant_ = 0;
};

bool lit_value(Lit lit, const std::vector<int64_t>& values);
bool holds(const Linear& lin, const std::vector<int64_t>& values);
int64_t evaluate_objective(const CpModel& model, const std::vector<int64_t>& values);
int64_t extremum_value(const ExtremumConstraint& c, const std::vector<int64_t>& values);

// Names of violated constraints (empty when the assignment is feasible).
std::vector<std::string> violations(const CpModel& model, const std::vector<int64_t>& values);

// Equivalent model without extremum constraints: selector booleans plus indicator and linear constraints.
// Added variables are appended after the original ones.
CpModel linearize_extremum(const CpModel& model);

}  // namespace npucp::cp

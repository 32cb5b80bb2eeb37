// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include "npucp/cp_model.hpp"

#include <algorithm>
#include <sstream>

#include "npucp/common.hpp"

namespace npucp::cp {

int CpModel::new_bool(std::string name, bool branch_low) {
  vars_.push_back({0, 1, true, std::move(name), branch_low});
  return num_vars() - 1;
}

int CpModel::new_int(int64_t lo, int64_t hi, std::string name) {
  if (lo > hi) fail(ErrorCode::kContract, "cp: empty domain for " + name);
  vars_.push_back({lo, hi, false, std::move(name)});
  return num_vars() - 1;
}

void CpModel::check_terms(const std::vector<Term>& terms) const {
  for (const auto& t : terms) {
    if (t.var < 0 || t.var >= num_vars()) fail(ErrorCode::kContract, "cp: undeclared variable in constraint");
  }
}

void CpModel::check_lit(Lit lit) const {
  if (lit.var < 0 || lit.var >= num_vars() || !vars_[lit.var].is_bool) {
    fail(ErrorCode::kContract, "cp: literal over a non-boolean variable");
  }
}

void CpModel::add_linear(std::vector<Term> terms, Rel rel, int64_t rhs, std::string name) {
  check_terms(terms);
  linears_.push_back({{std::move(terms), rel, rhs}, std::move(name)});
}

void CpModel::add_indicator(Lit lit, std::vector<Term> terms, Rel rel, int64_t rhs, std::string name) {
  check_lit(lit);
  check_terms(terms);
  indicators_.push_back({lit, {std::move(terms), rel, rhs}, std::move(name)});
}

void CpModel::add_extremum(int target, bool is_max, std::vector<ExtremumEntry> entries, int64_t default_value,
                           std::string name) {
  if (target < 0 || target >= num_vars()) fail(ErrorCode::kContract, "cp: undeclared extremum target");
  for (const auto& e : entries) check_lit(e.gate);
  extrema_.push_back({target, is_max, std::move(entries), default_value, std::move(name)});
}

void CpModel::minimize(std::vector<Term> terms, int64_t constant) {
  check_terms(terms);
  objective_ = std::move(terms);
  objective_constant_ = constant;
}

namespace {

std::string var_name(const CpModel& m, int v) {
  const auto& n = m.variables()[v].name;
  return n.empty() ? "v" + std::to_string(v) : n;
}

void write_terms(std::ostream& os, const CpModel& m, const std::vector<Term>& terms) {
  if (terms.empty()) os << "0";
  for (size_t i = 0; i < terms.size(); ++i) {
    const int64_t c = terms[i].coef;
    if (i > 0) os << (c < 0 ? " - " : " + ");
    else if (c < 0) os << "-";
    const int64_t a = c < 0 ? -c : c;
    if (a != 1) os << a << " ";
    os << var_name(m, terms[i].var);
  }
}

const char* rel_text(Rel r) { return r == Rel::kLe ? "<=" : r == Rel::kEq ? "=" : ">="; }

std::string lit_text(const CpModel& m, Lit l) { return (l.negated ? "!" : "") + var_name(m, l.var); }

}  // namespace

std::string CpModel::to_lp() const {
  std::ostringstream os;
  os << "\\ npucp cp model: " << num_vars() << " variables\n";
  os << "Minimize\n obj: ";
  write_terms(os, *this, objective_);
  if (objective_constant_ != 0) os << " + " << objective_constant_;
  os << "\nSubject To\n";
  for (size_t i = 0; i < linears_.size(); ++i) {
    const auto& c = linears_[i];
    os << " " << (c.name.empty() ? "c" + std::to_string(i) : c.name) << ": ";
    write_terms(os, *this, c.lin.terms);
    os << " " << rel_text(c.lin.rel) << " " << c.lin.rhs << "\n";
  }
  for (size_t i = 0; i < indicators_.size(); ++i) {
    const auto& c = indicators_[i];
    os << " " << (c.name.empty() ? "ind" + std::to_string(i) : c.name) << ": "
       << var_name(*this, c.lit.var) << " = " << (c.lit.negated ? 0 : 1) << " -> ";
    write_terms(os, *this, c.lin.terms);
    os << " " << rel_text(c.lin.rel) << " " << c.lin.rhs << "\n";
  }
  if (!extrema_.empty()) os << "\\ extremum constraints (target = max|min over gated constants, default)\n";
  for (size_t i = 0; i < extrema_.size(); ++i) {
    const auto& c = extrema_[i];
    os << "\\ " << (c.name.empty() ? "ext" + std::to_string(i) : c.name) << ": " << var_name(*this, c.target)
       << " = " << (c.is_max ? "max" : "min") << "{";
    for (size_t e = 0; e < c.entries.size(); ++e) {
      os << (e ? ", " : "") << c.entries[e].value << " if " << lit_text(*this, c.entries[e].gate);
    }
    os << "} default " << c.default_value << "\n";
  }
  os << "Bounds\n";
  for (int v = 0; v < num_vars(); ++v) {
    if (!vars_[v].is_bool) os << " " << vars_[v].lo << " <= " << var_name(*this, v) << " <= " << vars_[v].hi << "\n";
  }
  os << "Binary\n";
  for (int v = 0; v < num_vars(); ++v) {
    if (vars_[v].is_bool) os << " " << var_name(*this, v) << "\n";
  }
  os << "End\n";
  return os.str();
}

bool lit_value(Lit lit, const std::vector<int64_t>& values) { return (values[lit.var] != 0) != lit.negated; }

bool holds(const Linear& lin, const std::vector<int64_t>& values) {
  int64_t s = 0;
  for (const auto& t : lin.terms) s += t.coef * values[t.var];
  switch (lin.rel) {
    case Rel::kLe: return s <= lin.rhs;
    case Rel::kEq: return s == lin.rhs;
    case Rel::kGe: return s >= lin.rhs;
  }
  return false;
}

int64_t extremum_value(const ExtremumConstraint& c, const std::vector<int64_t>& values) {
  bool any = false;
  int64_t best = 0;
  for (const auto& e : c.entries) {
    if (!lit_value(e.gate, values)) continue;
    if (!any || (c.is_max ? e.value > best : e.value < best)) best = e.value;
    any = true;
  }
  return any ? best : c.default_value;
}

int64_t evaluate_objective(const CpModel& model, const std::vector<int64_t>& values) {
  int64_t s = model.objective_constant();
  for (const auto& t : model.objective()) s += t.coef * values[t.var];
  return s;
}

std::vector<std::string> violations(const CpModel& model, const std::vector<int64_t>& values) {
  std::vector<std::string> out;
  if (static_cast<int>(values.size()) != model.num_vars()) return {"assignment size mismatch"};
  for (int v = 0; v < model.num_vars(); ++v) {
    const auto& var = model.variables()[v];
    if (values[v] < var.lo || values[v] > var.hi) out.push_back("domain of " + var_name(model, v));
  }
  for (size_t i = 0; i < model.linears().size(); ++i) {
    if (!holds(model.linears()[i].lin, values)) out.push_back("linear " + std::to_string(i) + " " + model.linears()[i].name);
  }
  for (size_t i = 0; i < model.indicators().size(); ++i) {
    const auto& c = model.indicators()[i];
    if (lit_value(c.lit, values) && !holds(c.lin, values)) out.push_back("indicator " + std::to_string(i) + " " + c.name);
  }
  for (size_t i = 0; i < model.extrema().size(); ++i) {
    const auto& c = model.extrema()[i];
    if (values[c.target] != extremum_value(c, values)) out.push_back("extremum " + std::to_string(i) + " " + c.name);
  }
  return out;
}

CpModel linearize_extremum(const CpModel& model) {
  CpModel out;
  for (const auto& v : model.variables()) {
    if (v.is_bool) out.new_bool(v.name, v.branch_low);
    else out.new_int(v.lo, v.hi, v.name);
  }
  for (const auto& c : model.linears()) out.add_linear(c.lin.terms, c.lin.rel, c.lin.rhs, c.name);
  for (const auto& c : model.indicators()) out.add_indicator(c.lit, c.lin.terms, c.lin.rel, c.lin.rhs, c.name);
  // Literal as a linear term: value(lit) = constant + coef * var.
  auto lit_term = [](Lit l, int64_t scale, std::vector<Term>& terms, int64_t& constant) {
    if (l.negated) {
      terms.push_back({l.var, -scale});
      constant += scale;
    } else {
      terms.push_back({l.var, scale});
    }
  };
  for (const auto& c : model.extrema()) {
    const Rel bound = c.is_max ? Rel::kGe : Rel::kLe;  // target vs every active value
    const Rel tight = c.is_max ? Rel::kLe : Rel::kGe;  // target vs the selected value
    std::vector<Term> pick_one;
    const int none = out.new_bool(c.name + "_none");
    pick_one.push_back({none, 1});
    out.add_indicator({none, false}, {{c.target, 1}}, Rel::kEq, c.default_value, c.name + "_default");
    for (size_t e = 0; e < c.entries.size(); ++e) {
      const auto& entry = c.entries[e];
      out.add_indicator(entry.gate, {{c.target, 1}}, bound, entry.value, c.name + "_bound");
      const int sel = out.new_bool(c.name + "_sel" + std::to_string(e));
      pick_one.push_back({sel, 1});
      out.add_indicator({sel, false}, {{c.target, 1}}, tight, entry.value, c.name + "_tight");
      // sel <= gate
      std::vector<Term> t{{sel, 1}};
      int64_t k = 0;
      lit_term(entry.gate, -1, t, k);
      out.add_linear(t, Rel::kLe, -k, c.name + "_sel_gate");
      // none + gate <= 1
      std::vector<Term> n{{none, 1}};
      int64_t kn = 0;
      lit_term(entry.gate, 1, n, kn);
      out.add_linear(n, Rel::kLe, 1 - kn, c.name + "_none_gate");
    }
    out.add_linear(pick_one, Rel::kEq, 1, c.name + "_pick");
  }
  out.minimize(model.objective(), model.objective_constant());
  return out;
}

}  // namespace npucp::cp

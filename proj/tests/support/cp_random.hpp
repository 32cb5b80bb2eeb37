#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "npucp/cp_model.hpp"

namespace testing_support {

using namespace npucp::cp;

inline bool lit_on(Lit l, const std::vector<int64_t>& v) { return (v[l.var] != 0) != l.negated; }

inline bool linear_ok(const Linear& lin, const std::vector<int64_t>& v) {
  int64_t s = 0;
  for (const auto& t : lin.terms) s += t.coef * v[t.var];
  if (lin.rel == Rel::kLe) return s <= lin.rhs;
  if (lin.rel == Rel::kGe) return s >= lin.rhs;
  return s == lin.rhs;
}

// Constraint semantics written out independently of the library evaluator.
inline bool satisfied(const CpModel& m, const std::vector<int64_t>& v) {
  for (int i = 0; i < m.num_vars(); ++i) {
    if (v[i] < m.variables()[i].lo || v[i] > m.variables()[i].hi) return false;
  }
  for (const auto& c : m.linears())
    if (!linear_ok(c.lin, v)) return false;
  for (const auto& c : m.indicators())
    if (lit_on(c.lit, v) && !linear_ok(c.lin, v)) return false;
  for (const auto& c : m.extrema()) {
    int64_t best = c.default_value;
    bool any = false;
    for (const auto& e : c.entries) {
      if (!lit_on(e.gate, v)) continue;
      if (!any) best = e.value;
      else best = c.is_max ? std::max(best, e.value) : std::min(best, e.value);
      any = true;
    }
    if (v[c.target] != best) return false;
  }
  return true;
}

struct BruteResult {
  bool feasible = false;
  int64_t objective = 0;
};

inline BruteResult brute_force(const CpModel& m) {
  const int n = m.num_vars();
  std::vector<int64_t> v(n);
  for (int i = 0; i < n; ++i) v[i] = m.variables()[i].lo;
  BruteResult r;
  while (true) {
    if (satisfied(m, v)) {
      int64_t obj = m.objective_constant();
      for (const auto& t : m.objective()) obj += t.coef * v[t.var];
      if (!r.feasible || obj < r.objective) r.objective = obj;
      r.feasible = true;
    }
    int i = 0;
    for (; i < n; ++i) {
      if (v[i] < m.variables()[i].hi) {
        ++v[i];
        break;
      }
      v[i] = m.variables()[i].lo;
    }
    if (i == n) break;
  }
  return r;
}

// Random 0-1 model with a few small integers, linear, indicator and extremum constraints.
inline CpModel random_model(std::mt19937_64& rng, int bools, int ints, bool with_extremum) {
  CpModel m;
  auto coef = [&rng]() { return static_cast<int64_t>(rng() % 9) - 4; };
  for (int i = 0; i < bools; ++i) m.new_bool();
  std::vector<int> int_vars;
  for (int i = 0; i < ints; ++i) {
    const int64_t lo = static_cast<int64_t>(rng() % 4) - 2;
    int_vars.push_back(m.new_int(lo, lo + 1 + static_cast<int64_t>(rng() % 3)));
  }
  const int n = m.num_vars();
  const int rows = 1 + rng() % 5;
  for (int r = 0; r < rows; ++r) {
    std::vector<Term> terms;
    const int k = 1 + rng() % 4;
    for (int j = 0; j < k; ++j) terms.push_back({static_cast<int>(rng() % n), coef()});
    const Rel rel = static_cast<Rel>(rng() % 3);
    m.add_linear(terms, rel, static_cast<int64_t>(rng() % 5) - 1);
  }
  const int inds = rng() % 3;
  for (int r = 0; r < inds; ++r) {
    std::vector<Term> terms{{static_cast<int>(rng() % n), coef()}, {static_cast<int>(rng() % n), coef()}};
    m.add_indicator({static_cast<int>(rng() % bools), rng() % 2 == 0}, terms, static_cast<Rel>(rng() % 3),
                    static_cast<int64_t>(rng() % 4) - 1);
  }
  if (with_extremum && !int_vars.empty()) {
    std::vector<ExtremumEntry> entries;
    const int k = 1 + rng() % 4;
    for (int j = 0; j < k; ++j) {
      entries.push_back({{static_cast<int>(rng() % bools), rng() % 3 == 0}, static_cast<int64_t>(rng() % 5) - 2});
    }
    const int target = int_vars[0];
    m.add_extremum(target, rng() % 2 == 0, entries, static_cast<int64_t>(rng() % 3) - 1);
  }
  std::vector<Term> obj;
  for (int i = 0; i < n; ++i) obj.push_back({i, coef()});
  m.minimize(obj, static_cast<int64_t>(rng() % 7));
  return m;
}

}  // namespace testing_support

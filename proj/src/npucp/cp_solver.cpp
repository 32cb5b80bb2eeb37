// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include "npucp/cp_solver.hpp"

#include <algorithm>
#include <chrono>
#include <map>

namespace npucp::cp {

const char* to_string(Status s) {
  switch (s) {
    case Status::kOptimal: return "optimal";
    case Status::kFeasible: return "feasible";
    case Status::kInfeasible: return "infeasible";
    case Status::kTimeout: return "timeout";
  }
  return "?";
}

namespace {

constexpr int64_t kInf = int64_t{1} << 60;

struct Row {
  std::vector<Term> terms;
  int64_t lo = -kInf;
  int64_t hi = kInf;
  int64_t min_act = 0;
  int64_t max_act = 0;
  int64_t max_span = 0;
  Lit gate;  // var < 0 when unconditional
  std::string name;
};

struct Extremum {
  int target;
  int64_t sign;  // +1 max, -1 min; values stored pre-multiplied
  std::vector<ExtremumEntry> entries;
  int64_t default_value;
  std::string name;
};

class Search {
 public:
  Search(const CpModel& model, const SolveOptions& opt) : model_(model), opt_(opt) {
    const int n = model.num_vars();
    lo_.resize(n);
    hi_.resize(n);
    for (int v = 0; v < n; ++v) {
      lo_[v] = model.variables()[v].lo;
      hi_[v] = model.variables()[v].hi;
    }
    var_rows_.resize(n);
    var_gates_.resize(n);
    var_ext_.resize(n);
    for (const auto& c : model.linears()) add_row(c.lin, {}, c.name);
    for (const auto& c : model.indicators()) add_row(c.lin, c.lit, c.name);
    Linear obj{model.objective(), Rel::kLe, kInf};
    objective_row_ = add_row(obj, {}, "objective");
    rows_[objective_row_].hi = kInf;
    for (const auto& c : model.extrema()) {
      Extremum e{c.target, c.is_max ? 1 : -1, c.entries, 0, c.name};
      e.default_value = e.sign * c.default_value;
      for (auto& en : e.entries) en.value *= e.sign;
      const int idx = static_cast<int>(ext_.size());
      var_ext_[c.target].push_back(idx);
      for (const auto& en : e.entries) {
        auto& w = var_ext_[en.gate.var];
        if (w.empty() || w.back() != idx) w.push_back(idx);
      }
      ext_.push_back(std::move(e));
    }
    for (auto& r : rows_) recompute(r);
    queued_.assign(rows_.size() + ext_.size(), 0);
    start_ = std::chrono::steady_clock::now();
    work_limit_ = opt.budget_ms * opt.work_per_ms;
  }

  Assignment run() {
    Assignment result;
    for (int i = 0; i < static_cast<int>(queued_.size()); ++i) enqueue(i);
    if (!propagate()) {
      result.status = Status::kInfeasible;
      result.conflict = "root propagation failed at " + failed_name();
      return finish(result);
    }
    const size_t root_trail = trail_.size();
    for (const auto& hint : opt_.hints) {
      if (stopped_) break;
      hint_ = &hint;
      dfs(/*stop_at_first=*/true);
      undo(root_trail);
      stack_.clear();
    }
    hint_ = nullptr;
    const bool exhausted = dfs(false);
    if (has_best_) {
      result.status = exhausted ? Status::kOptimal : Status::kFeasible;
      result.values = best_;
      result.objective = best_objective_;
    } else {
      result.status = exhausted ? Status::kInfeasible : Status::kTimeout;
      if (exhausted) result.conflict = "search exhausted; last conflict at " + failed_name();
    }
    return finish(result);
  }

 private:
  struct TrailEntry {
    int var;
    int64_t lo, hi;
  };

  struct Decision {
    int var;
    // Branch applied first: var >= bound (upper=false) or var <= bound (upper=true).
    bool upper;
    int64_t bound;
    size_t trail_size;
    int scan;
    bool alt_done;
  };

  int add_row(const Linear& lin, Lit gate, const std::string& name) {
    Row r;
    std::map<int, int64_t> merged;
    for (const auto& t : lin.terms) merged[t.var] += t.coef;
    for (const auto& [v, c] : merged) {
      if (c != 0) r.terms.push_back({v, c});
    }
    switch (lin.rel) {
      case Rel::kLe: r.hi = lin.rhs; break;
      case Rel::kGe: r.lo = lin.rhs; break;
      case Rel::kEq: r.lo = r.hi = lin.rhs; break;
    }
    r.gate = gate.var >= 0 ? gate : Lit{-1, false};
    r.name = name;
    const int idx = static_cast<int>(rows_.size());
    for (const auto& t : r.terms) var_rows_[t.var].push_back({idx, t.coef});
    if (r.gate.var >= 0) var_gates_[r.gate.var].push_back(idx);
    rows_.push_back(std::move(r));
    return idx;
  }

  void recompute(Row& r) {
    r.min_act = r.max_act = 0;
    r.max_span = 0;
    for (const auto& t : r.terms) {
      const int64_t a = t.coef * lo_[t.var], b = t.coef * hi_[t.var];
      r.min_act += std::min(a, b);
      r.max_act += std::max(a, b);
      r.max_span = std::max(r.max_span, std::max(a, b) - std::min(a, b));
    }
  }

  void enqueue(int id) {
    if (!queued_[id]) {
      queued_[id] = 1;
      queue_.push_back(id);
    }
  }

  void clear_queue() {
    for (int id : queue_) queued_[id] = 0;
    queue_.clear();
    qhead_ = 0;
  }

  bool set_lo(int v, int64_t x) {
    if (x <= lo_[v]) return true;
    if (x > hi_[v]) return false;
    trail_.push_back({v, lo_[v], hi_[v]});
    const int64_t d = x - lo_[v];
    for (const auto& [r, c] : var_rows_[v]) {
      if (c > 0) rows_[r].min_act += c * d;
      else rows_[r].max_act += c * d;
      enqueue(r);
    }
    lo_[v] = x;
    notify(v);
    return true;
  }

  bool set_hi(int v, int64_t x) {
    if (x >= hi_[v]) return true;
    if (x < lo_[v]) return false;
    trail_.push_back({v, lo_[v], hi_[v]});
    const int64_t d = hi_[v] - x;
    for (const auto& [r, c] : var_rows_[v]) {
      if (c > 0) rows_[r].max_act -= c * d;
      else rows_[r].min_act -= c * d;
      enqueue(r);
    }
    hi_[v] = x;
    notify(v);
    return true;
  }

  void notify(int v) {
    for (int r : var_gates_[v]) enqueue(r);
    const int base = static_cast<int>(rows_.size());
    for (int e : var_ext_[v]) enqueue(base + e);
  }

  void undo(size_t size) {
    while (trail_.size() > size) {
      const TrailEntry t = trail_.back();
      trail_.pop_back();
      const int64_t dlo = lo_[t.var] - t.lo;
      const int64_t dhi = t.hi - hi_[t.var];
      for (const auto& [r, c] : var_rows_[t.var]) {
        if (c > 0) {
          rows_[r].min_act -= c * dlo;
          rows_[r].max_act += c * dhi;
        } else {
          rows_[r].max_act -= c * dlo;
          rows_[r].min_act += c * dhi;
        }
      }
      lo_[t.var] = t.lo;
      hi_[t.var] = t.hi;
    }
  }

  // 1 true, 0 false, -1 unknown.
  int lit_state(Lit l) const {
    if (lo_[l.var] != hi_[l.var]) return -1;
    return (lo_[l.var] != 0) != l.negated ? 1 : 0;
  }

  bool set_lit(Lit l, bool value) {
    const int64_t v = (value != l.negated) ? 1 : 0;
    return set_lo(l.var, v) && set_hi(l.var, v);
  }

  bool propagate_row(int id) {
    Row& r = rows_[id];
    work_ += 1;
    if (r.gate.var >= 0) {
      const int s = lit_state(r.gate);
      if (s == 0) return true;
      if (s == -1) {
        if (r.min_act > r.hi || r.max_act < r.lo) return set_lit(r.gate, false);
        return true;
      }
    }
    if (r.min_act > r.hi || r.max_act < r.lo) return false;
    const int64_t slack_u = r.hi - r.min_act;
    const int64_t slack_l = r.max_act - r.lo;
    if (slack_u >= r.max_span && slack_l >= r.max_span) return true;
    work_ += static_cast<int64_t>(r.terms.size());
    for (const auto& t : r.terms) {
      const int v = t.var;
      const int64_t span = hi_[v] - lo_[v];
      if (span == 0) continue;
      if (t.coef > 0) {
        const int64_t c = t.coef;
        if (slack_u < c * span && !set_hi(v, lo_[v] + slack_u / c)) return false;
        if (slack_l < c * span && !set_lo(v, hi_[v] - slack_l / c)) return false;
      } else {
        const int64_t a = -t.coef;
        if (slack_u < a * span && !set_lo(v, hi_[v] - slack_u / a)) return false;
        if (slack_l < a * span && !set_hi(v, lo_[v] + slack_l / a)) return false;
      }
    }
    return true;
  }

  // In the sign-adjusted space the constraint is always a max.
  bool propagate_extremum(int idx) {
    const Extremum& e = ext_[idx];
    work_ += 1 + static_cast<int64_t>(e.entries.size());
    const int64_t s = e.sign;
    auto set_tlo = [&](int64_t x) { return s > 0 ? set_lo(e.target, x) : set_hi(e.target, -x); };
    auto set_thi = [&](int64_t x) { return s > 0 ? set_hi(e.target, x) : set_lo(e.target, -x); };

    bool any_active = false, any_possible = false;
    int64_t max_active = -kInf, max_possible = -kInf, min_possible = kInf;
    for (const auto& en : e.entries) {
      const int st = lit_state(en.gate);
      if (st == 0) continue;
      any_possible = true;
      max_possible = std::max(max_possible, en.value);
      min_possible = std::min(min_possible, en.value);
      if (st == 1) {
        any_active = true;
        max_active = std::max(max_active, en.value);
      }
    }
    if (!any_possible) return set_tlo(e.default_value) && set_thi(e.default_value);
    const int64_t lower = any_active ? max_active : std::min(e.default_value, min_possible);
    const int64_t upper = any_active ? max_possible : std::max(e.default_value, max_possible);
    if (!set_tlo(lower) || !set_thi(upper)) return false;

    const int64_t nlo = s > 0 ? lo_[e.target] : -hi_[e.target];
    const int64_t nhi = s > 0 ? hi_[e.target] : -lo_[e.target];
    // Entries above the target's upper bound cannot be active.
    for (const auto& en : e.entries) {
      if (en.value > nhi && lit_state(en.gate) == -1 && !set_lit(en.gate, false)) return false;
    }
    // The result must land in [nlo, nhi]; if the current floor cannot, some entry must switch on.
    const bool need = any_active ? max_active < nlo : (e.default_value < nlo || e.default_value > nhi);
    if (need) {
      int candidate = -1, count = 0;
      for (size_t i = 0; i < e.entries.size(); ++i) {
        const auto& en = e.entries[i];
        if (lit_state(en.gate) == -1 && en.value >= nlo && en.value <= nhi) {
          candidate = static_cast<int>(i);
          ++count;
        }
      }
      if (count == 0) return false;
      if (count == 1 && !set_lit(e.entries[candidate].gate, true)) return false;
    }
    return true;
  }

  bool propagate() {
    const int nrows = static_cast<int>(rows_.size());
    while (qhead_ < queue_.size()) {
      const int id = queue_[qhead_++];
      queued_[id] = 0;
      const bool ok = id < nrows ? propagate_row(id) : propagate_extremum(id - nrows);
      if (!ok) {
        failed_ = id;
        clear_queue();
        return false;
      }
    }
    queue_.clear();
    qhead_ = 0;
    return true;
  }

  std::string failed_name() const {
    if (failed_ < 0) return "?";
    const int nrows = static_cast<int>(rows_.size());
    const std::string& n = failed_ < nrows ? rows_[failed_].name : ext_[failed_ - nrows].name;
    return n.empty() ? "constraint #" + std::to_string(failed_) : n;
  }

  bool out_of_budget() {
    if (stopped_) return true;
    if (work_ > work_limit_) stopped_ = true;
    if ((++nodes_ & 255) == 0 && opt_.wall_factor > 0) {
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
      if (ms > static_cast<double>(opt_.budget_ms * opt_.wall_factor)) stopped_ = true;
    }
    return stopped_;
  }

  int pick_var(int& scan) const {
    const int n = static_cast<int>(lo_.size());
    for (; scan < n; ++scan) {
      if (model_.variables()[scan].is_bool && lo_[scan] != hi_[scan]) return scan;
    }
    for (int v = 0; v < n; ++v) {
      if (lo_[v] != hi_[v]) return v;
    }
    return -1;
  }

  void record_solution() {
    int64_t obj = model_.objective_constant();
    for (const auto& t : model_.objective()) obj += t.coef * lo_[t.var];
    if (!has_best_ || obj < best_objective_) {
      has_best_ = true;
      best_objective_ = obj;
      best_ = lo_;
      rows_[objective_row_].hi = obj - 1 - model_.objective_constant();
    }
  }

  bool apply(const Decision& d, bool alternative) {
    enqueue(objective_row_);
    bool ok;
    const bool upper = alternative ? !d.upper : d.upper;
    if (upper) ok = set_hi(d.var, alternative ? d.bound - 1 : d.bound);
    else ok = set_lo(d.var, alternative ? d.bound + 1 : d.bound);
    return ok && propagate();
  }

  // Returns true when the search space below the root was exhausted.
  bool dfs(bool stop_at_first) {
    int scan = 0;
    const int64_t dive_cap = nodes_ + 4 * static_cast<int64_t>(lo_.size()) + 1000;
    bool ok = propagate_objective();
    while (true) {
      if (ok) {
        const int v = pick_var(scan);
        if (v < 0) {
          record_solution();
          if (stop_at_first) return false;
          ok = false;
          continue;
        }
        if (out_of_budget()) return false;
        if (stop_at_first && nodes_ > dive_cap) return false;
        Decision d{v, false, 0, trail_.size(), scan, false};
        const int64_t h = hint_ && v < static_cast<int>(hint_->size()) ? (*hint_)[v] : -1;
        if (model_.variables()[v].is_bool) {
          const int64_t first = (hint_ && h >= 0) ? h : model_.variables()[v].branch_low ? 0 : 1;
          d.upper = first == 0;  // value 0 first: var <= 0
          d.bound = first;
        } else if (hint_ && h > lo_[v] && h <= hi_[v]) {
          d.upper = false;  // var >= h first
          d.bound = h;
        } else {
          d.upper = true;  // var <= lo first
          d.bound = lo_[v];
        }
        stack_.push_back(d);
        ok = apply(d, false);
        continue;
      }
      // Backtrack.
      while (!stack_.empty() && stack_.back().alt_done) {
        undo(stack_.back().trail_size);
        stack_.pop_back();
      }
      if (stack_.empty()) return true;
      if (out_of_budget()) return false;
      Decision& d = stack_.back();
      undo(d.trail_size);
      d.alt_done = true;
      scan = d.scan;
      ok = apply(d, true);
    }
  }

  bool propagate_objective() {
    enqueue(objective_row_);
    return propagate();
  }

  Assignment finish(Assignment r) {
    r.nodes = nodes_;
    r.work = work_;
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    return r;
  }

  const CpModel& model_;
  const SolveOptions& opt_;
  std::vector<int64_t> lo_, hi_;
  std::vector<Row> rows_;
  std::vector<Extremum> ext_;
  std::vector<std::vector<std::pair<int, int64_t>>> var_rows_;
  std::vector<std::vector<int>> var_gates_;
  std::vector<std::vector<int>> var_ext_;
  std::vector<int> queue_;
  size_t qhead_ = 0;
  std::vector<char> queued_;
  std::vector<TrailEntry> trail_;
  std::vector<Decision> stack_;
  int objective_row_ = -1;
  int failed_ = -1;
  const std::vector<int64_t>* hint_ = nullptr;
  bool has_best_ = false;
  int64_t best_objective_ = 0;
  std::vector<int64_t> best_;
  int64_t work_ = 0;
  int64_t work_limit_ = 0;
  int64_t nodes_ = 0;
  bool stopped_ = false;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

Assignment solve(const CpModel& model, const SolveOptions& options) {
  if (options.linearize && !model.extrema().empty()) {
    const CpModel lin = linearize_extremum(model);
    SolveOptions o = options;
    o.linearize = false;
    for (auto& h : o.hints) h.resize(lin.num_vars(), -1);
    Assignment a = solve(lin, o);
    if (!a.values.empty()) a.values.resize(model.num_vars());
    return a;
  }
  Search search(model, options);
  return search.run();
}

}  // namespace npucp::cp

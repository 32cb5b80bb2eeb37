// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include "npucp/allocator.hpp"

#include <algorithm>
#include <climits>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace npucp {

int Residency::virtual_low(int tick) const {
  for (const auto& s : placement) {
    if (tick >= s.from_tick && tick <= s.to_tick) return s.virtual_low;
  }
  return -1;
}

const Residency* AllocationResult::find(int tile, int tick) const {
  for (const auto& r : residencies) {
    if (r.tile == tile && tick >= r.from_tick && tick <= r.to_tick) return &r;
  }
  return nullptr;
}

namespace {

using Key = std::pair<int, int>;  // tensor, relative bank

struct Span {
  int lo = INT_MAX;
  int hi = INT_MIN;
  bool empty() const { return hi < lo; }
  int size() const { return empty() ? 0 : hi - lo + 1; }
};

// Output window of a reuse consumer placed right below the overwritten input.
struct Glue {
  int consumer_tensor = -1;
  int input_tensor = -1;
  int delta = 0;  // consumer base = input base + delta
};

// Sets table[v] = p and moves p's previous virtual bank onto the old entry of v.
void remap(std::vector<int>& table, std::vector<int>& inverse, int v, int p, std::vector<std::pair<int, int>>* log) {
  const int old = table[v];
  if (old == p) return;
  const int w = inverse[p];
  table[v] = p;
  inverse[p] = v;
  table[w] = old;
  inverse[old] = w;
  if (log) {
    log->push_back({v, p});
    log->push_back({w, old});
  }
}

class Placer {
 public:
  Placer(int capacity, const std::vector<int>& table) : capacity_(capacity), table_(table) {}

  // Returns the base of every window; `previous` holds the bases of the tick before.
  std::map<int, int> place(const std::map<int, Span>& windows, const std::map<int, int>& previous,
                           const std::optional<Glue>& glue, const std::map<Key, int>& phys, int* relocations) {
    std::map<int, int> base;
    std::vector<std::pair<int, int>> taken;  // virtual intervals
    auto interval = [&](int tensor, int b) { return std::make_pair(b + windows.at(tensor).lo, b + windows.at(tensor).hi); };
    auto fits = [&](std::pair<int, int> iv) {
      if (iv.first < 0 || iv.second >= capacity_) return false;
      for (const auto& t : taken) {
        if (iv.first <= t.second && t.first <= iv.second) return false;
      }
      return true;
    };
    auto occupy = [&](int tensor, int b) {
      base[tensor] = b;
      if (windows.count(tensor) && !windows.at(tensor).empty()) taken.push_back(interval(tensor, b));
    };
    const bool glued_empty = glue && (!windows.count(glue->consumer_tensor) || windows.at(glue->consumer_tensor).empty());

    for (const auto& [tensor, w] : windows) {
      if (w.empty()) continue;
      auto it = previous.find(tensor);
      if (it == previous.end() || !fits(interval(tensor, it->second))) continue;
      occupy(tensor, it->second);
    }
    if (glue && !glued_empty && base.count(glue->consumer_tensor) && base.count(glue->input_tensor) &&
        base[glue->consumer_tensor] != base[glue->input_tensor] + glue->delta) {
      unplace(base, taken, glue->consumer_tensor, windows);
    }
    if (glue && !glued_empty && base.count(glue->input_tensor) && !base.count(glue->consumer_tensor)) {
      const int b = base[glue->input_tensor] + glue->delta;
      if (fits(interval(glue->consumer_tensor, b))) occupy(glue->consumer_tensor, b);
      else unplace(base, taken, glue->input_tensor, windows);
    }
    if (glue && !glued_empty && base.count(glue->consumer_tensor) && !base.count(glue->input_tensor)) {
      const int b = base[glue->consumer_tensor] - glue->delta;
      if (fits(interval(glue->input_tensor, b))) occupy(glue->input_tensor, b);
      else unplace(base, taken, glue->consumer_tensor, windows);
    }
    bool ok = true;
    for (const auto& [tensor, w] : windows) {
      if (w.empty() || base.count(tensor)) continue;
      if (glue && !glued_empty && tensor == glue->consumer_tensor) continue;  // placed with its input
      int best = INT_MIN, best_cost = INT_MAX;
      const bool block = glue && !glued_empty && tensor == glue->input_tensor;
      for (int b = -w.lo; b + w.hi < capacity_; ++b) {
        if (!fits(interval(tensor, b))) continue;
        int cost = mismatch(tensor, b, w, phys);
        if (block) {
          const int cb = b + glue->delta;
          if (!fits(interval(glue->consumer_tensor, cb))) continue;
          cost += mismatch(glue->consumer_tensor, cb, windows.at(glue->consumer_tensor), phys);
        }
        if (cost < best_cost) {
          best_cost = cost;
          best = b;
        }
      }
      if (best == INT_MIN) {
        ok = false;
        break;
      }
      occupy(tensor, best);
      if (block) occupy(glue->consumer_tensor, best + glue->delta);
    }
    if (!ok) base = compact(windows, previous, glue, glued_empty);
    if (glue && glued_empty) base[glue->consumer_tensor] = base.at(glue->input_tensor) + glue->delta;
    for (const auto& [tensor, b] : base) {
      auto it = previous.find(tensor);
      if (it != previous.end() && it->second != b) ++*relocations;
    }
    return base;
  }

 private:
  // Banks whose current table entry would need a rewrite.
  int mismatch(int tensor, int b, const Span& w, const std::map<Key, int>& phys) const {
    int cost = 0;
    for (int r = w.lo; r <= w.hi; ++r) {
      auto it = phys.find({tensor, r});
      if (it == phys.end()) continue;
      if (it->second >= 0 && table_[b + r] != it->second) ++cost;
    }
    return cost;
  }

  static void unplace(std::map<int, int>& base, std::vector<std::pair<int, int>>& taken, int tensor,
                      const std::map<int, Span>& windows) {
    auto it = base.find(tensor);
    if (it == base.end()) return;
    const std::pair<int, int> iv{it->second + windows.at(tensor).lo, it->second + windows.at(tensor).hi};
    taken.erase(std::find(taken.begin(), taken.end(), iv));
    base.erase(it);
  }

  // Packs all windows from bank 0 in their previous order; a glued consumer goes right before its input.
  std::map<int, int> compact(const std::map<int, Span>& windows, const std::map<int, int>& previous,
                             const std::optional<Glue>& glue, bool glued_empty) const {
    std::vector<std::pair<int64_t, int>> order;
    for (const auto& [tensor, w] : windows) {
      if (w.empty()) continue;
      if (glue && !glued_empty && tensor == glue->consumer_tensor) continue;
      auto it = previous.find(tensor);
      order.push_back({it == previous.end() ? INT64_MAX : it->second + w.lo, tensor});
    }
    std::sort(order.begin(), order.end());
    std::map<int, int> base;
    int next = 0;
    for (const auto& [unused, tensor] : order) {
      if (glue && !glued_empty && tensor == glue->input_tensor) {
        const Span& c = windows.at(glue->consumer_tensor);
        base[glue->consumer_tensor] = next - c.lo;
        next += c.size();
        base[tensor] = base[glue->consumer_tensor] - glue->delta;
        next = base[tensor] + windows.at(tensor).hi + 1;
        continue;
      }
      base[tensor] = next - windows.at(tensor).lo;
      next += windows.at(tensor).size();
    }
    if (next > capacity_) fail(ErrorCode::kInternal, "allocator: windows exceed TCM capacity");
    return base;
  }

  int capacity_;
  const std::vector<int>& table_;
};

}  // namespace

AllocationResult allocate(const TimedSchedule& s, const TileProgram& p, const MachineModel& m) {
  const int C = m.tcm_banks;
  const int T = static_cast<int>(s.ticks.size());
  AllocationResult out;
  out.initial_table.resize(C);
  for (int v = 0; v < C; ++v) out.initial_table[v] = v;

  std::vector<int> pred = out.initial_table, pred_inv = out.initial_table;
  std::vector<std::map<int, int>> base_at(T);
  std::vector<std::map<Key, int>> phys_at(T);
  std::map<int, int> base_prev;
  std::map<Key, int> phys_prev;
  Placer placer(C, pred);

  for (int t = 0; t < T; ++t) {
    const Tick& tick = s.ticks[t];
    std::map<Key, int> live;
    std::map<int, Span> windows;
    for (const auto& o : tick.occupancy) {
      const int tensor = p.tiles[o.tile].tensor;
      Span& w = windows[tensor];
      w.lo = std::min(w.lo, o.low_bank);
      w.hi = std::max(w.hi, o.high_bank);
      for (int r = o.low_bank; r <= o.high_bank; ++r) live[{tensor, r}] = -1;
    }
    std::optional<Glue> glue;
    std::vector<std::pair<Key, Key>> handover;  // consumer bank, overwritten input bank
    if (tick.compute >= 0) {
      if (const ReuseConfig* r = p.reuse_for(tick.compute)) {
        const ProgramTile& c = p.tiles[tick.compute];
        const ProgramTile& in = p.tiles[r->overwritable.front()];
        const int first_saved = c.high_bank - r->banks_saved + 1;
        glue = Glue{c.tensor, in.tensor, in.low_bank - first_saved};
        for (int i = 0; i < r->banks_saved; ++i) {
          const Key ck{c.tensor, first_saved + i}, ik{in.tensor, in.low_bank + i};
          if (!live.count(ik)) fail(ErrorCode::kInternal, "allocator: overwritten tile not resident at tick " + std::to_string(t));
          if (live.count(ck)) fail(ErrorCode::kInternal, "allocator: reused bank already live at tick " + std::to_string(t));
          handover.push_back({ck, ik});
        }
        windows.try_emplace(c.tensor);
      }
    }
    for (auto& [key, ph] : live) {
      auto it = phys_prev.find(key);
      if (it != phys_prev.end()) ph = it->second;
    }
    try {
      base_at[t] = placer.place(windows, base_prev, glue, live, &out.relocations);
    } catch (const Error& e) {
      fail(e.code(), std::string(e.what()) + " at tick " + std::to_string(t));
    }

    std::vector<char> used(C, 0);
    for (const auto& [key, ph] : live) {
      if (ph >= 0) used[ph] = 1;
    }
    auto take = [&](const Key& key) {
      const int v = base_at[t].at(key.first) + key.second;
      int ph = (v >= 0 && v < C && !used[pred[v]]) ? pred[v] : -1;
      for (int q = 0; q < C && ph < 0; ++q) {
        if (!used[q]) ph = q;
      }
      if (ph < 0) fail(ErrorCode::kInternal, "allocator: no free bank at tick " + std::to_string(t));
      used[ph] = 1;
      return ph;
    };
    for (auto& [key, ph] : live) {
      if (ph < 0) ph = take(key);
    }
    for (const auto& [ck, ik] : handover) live[ck] = live.at(ik);
    for (const auto& [key, ph] : live) {
      const int v = base_at[t].at(key.first) + key.second;
      if (v >= 0 && v < C) remap(pred, pred_inv, v, ph, nullptr);
    }
    phys_at[t] = live;
    phys_prev = live;
    base_prev.clear();
    for (const auto& [tensor, w] : windows) {
      if (!w.empty()) base_prev[tensor] = base_at[t].at(tensor);
    }
  }

  // Stays of each tile: ticks where it occupies banks, plus its compute tick.
  std::map<int, std::vector<int>> present;
  for (int t = 0; t < T; ++t) {
    std::set<int> here;
    for (const auto& o : s.ticks[t].occupancy) here.insert(o.tile);
    if (s.ticks[t].compute >= 0) here.insert(s.ticks[t].compute);
    for (int j : here) present[j].push_back(t);
  }
  for (const auto& [tile, ticks] : present) {
    const ProgramTile& pt = p.tiles[tile];
    for (size_t i = 0; i < ticks.size();) {
      size_t k = i;
      while (k + 1 < ticks.size() && ticks[k + 1] == ticks[k] + 1) ++k;
      Residency r;
      r.tile = tile;
      r.from_tick = ticks[i];
      r.to_tick = ticks[k];
      for (int b = pt.low_bank; b <= pt.high_bank; ++b) {
        auto it = phys_at[r.from_tick].find({pt.tensor, b});
        if (it == phys_at[r.from_tick].end()) fail(ErrorCode::kInternal, "allocator: tile without banks at its arrival");
        r.physical.push_back(it->second);
      }
      for (int t = r.from_tick; t <= r.to_tick; ++t) {
        const int v = base_at[t].at(pt.tensor) + pt.low_bank;
        if (!r.placement.empty() && r.placement.back().virtual_low == v && r.placement.back().to_tick == t - 1) {
          r.placement.back().to_tick = t;
        } else {
          r.placement.push_back({t, t, v});
        }
      }
      out.residencies.push_back(std::move(r));
      i = k + 1;
    }
  }
  std::sort(out.residencies.begin(), out.residencies.end(), [](const Residency& a, const Residency& b) {
    return std::tie(a.from_tick, a.tile) < std::tie(b.from_tick, b.tile);
  });

  // Table rewrites: every compute must see its tiles through the table; a rewrite goes to the
  // cheapest earlier tick after the entries' last use.
  std::vector<int> table = out.initial_table, inverse = out.initial_table;
  std::vector<int> last_touch(C, -1);
  std::vector<int64_t> extra(T, 0);
  std::map<int, size_t> at_tick, standalone_at;
  for (int t = 0; t < T; ++t) {
    const Tick& tick = s.ticks[t];
    if (tick.compute < 0) continue;
    std::map<int, int> need;
    std::vector<int> tiles = p.tiles[tick.compute].deps;
    tiles.push_back(tick.compute);
    for (int j : tiles) {
      const Residency* r = out.find(j, t);
      if (!r) fail(ErrorCode::kInternal, "allocator: tile " + std::to_string(j) + " not resident at tick " + std::to_string(t));
      const int v0 = r->virtual_low(t);
      for (size_t i = 0; i < r->physical.size(); ++i) {
        const int v = v0 + static_cast<int>(i);
        if (v < 0 || v >= C) fail(ErrorCode::kInternal, "allocator: virtual bank out of range");
        auto [it, fresh] = need.try_emplace(v, r->physical[i]);
        if (!fresh && it->second != r->physical[i]) fail(ErrorCode::kInternal, "allocator: conflicting mappings at tick " + std::to_string(t));
      }
    }
    std::vector<std::pair<int, int>> log;
    std::vector<int> trial = table, trial_inv = inverse;
    for (const auto& [v, ph] : need) remap(trial, trial_inv, v, ph, &log);
    if (!log.empty()) {
      int after = -1;
      for (const auto& [v, ph] : log) after = std::max(after, last_touch[v]);
      int best = -1;
      int64_t best_cost = INT64_MAX;
      for (int u = after + 1; u < t; ++u) {
        const Tick& x = s.ticks[u];
        const int64_t add = at_tick.count(u) ? 0 : m.v2p_update_cycles;
        const int64_t cost = std::max(x.l_c, x.l_dm + extra[u] + add) - std::max(x.l_c, x.l_dm + extra[u]);
        if (cost <= best_cost) {
          best_cost = cost;
          best = u;
        }
      }
      V2pUpdate* up;
      if (best >= 0) {
        if (!at_tick.count(best)) {
          at_tick[best] = out.updates.size();
          out.updates.push_back({best, false, {}, m.v2p_update_cycles});
          extra[best] += m.v2p_update_cycles;
        }
        up = &out.updates[at_tick[best]];
      } else {
        if (!standalone_at.count(t)) {
          standalone_at[t] = out.updates.size();
          out.updates.push_back({t, true, {}, m.v2p_update_cycles});
        }
        up = &out.updates[standalone_at[t]];
      }
      const int when = best >= 0 ? best : t - 1;
      for (const auto& e : log) {
        up->entries.push_back(e);
        last_touch[e.first] = std::max(last_touch[e.first], when);
      }
      table = trial;
      inverse = trial_inv;
    }
    for (const auto& [v, ph] : need) last_touch[v] = std::max(last_touch[v], t);
  }
  std::stable_sort(out.updates.begin(), out.updates.end(), [](const V2pUpdate& a, const V2pUpdate& b) {
    return std::make_pair(a.tick, !a.standalone) < std::make_pair(b.tick, !b.standalone);
  });
  return out;
}

std::vector<int64_t> tick_latencies_with_v2p(const TimedSchedule& s, const AllocationResult& a) {
  std::map<int, int64_t> inline_cost, standalone_cost;
  for (const auto& u : a.updates) (u.standalone ? standalone_cost : inline_cost)[u.tick] += u.cycles;
  std::vector<int64_t> out;
  for (size_t t = 0; t < s.ticks.size(); ++t) {
    const int ti = static_cast<int>(t);
    if (standalone_cost.count(ti)) out.push_back(standalone_cost[ti]);
    const int64_t extra = inline_cost.count(ti) ? inline_cost[ti] : 0;
    out.push_back(std::max(s.ticks[t].l_c, s.ticks[t].l_dm + extra));
  }
  return out;
}

json allocation_to_json(const AllocationResult& a) {
  json res = json::array();
  for (const auto& r : a.residencies) {
    json placement = json::array();
    for (const auto& s : r.placement) placement.push_back({s.from_tick, s.to_tick, s.virtual_low});
    res.push_back({{"tile", r.tile}, {"from", r.from_tick}, {"to", r.to_tick}, {"physical", r.physical}, {"virtual", placement}});
  }
  json ups = json::array();
  for (const auto& u : a.updates) {
    json entries = json::array();
    for (const auto& [v, ph] : u.entries) entries.push_back({v, ph});
    ups.push_back({{"tick", u.tick}, {"standalone", u.standalone}, {"entries", entries}, {"cycles", u.cycles}});
  }
  return {{"initial_table", a.initial_table}, {"residencies", res}, {"v2p_updates", ups}, {"relocations", a.relocations}};
}

AllocationResult allocation_from_json(const json& j) {
  try {
    AllocationResult a;
    a.initial_table = j.at("initial_table").get<std::vector<int>>();
    for (const auto& r : j.at("residencies")) {
      Residency x;
      x.tile = r.at("tile");
      x.from_tick = r.at("from");
      x.to_tick = r.at("to");
      x.physical = r.at("physical").get<std::vector<int>>();
      for (const auto& s : r.at("virtual")) x.placement.push_back({s[0], s[1], s[2]});
      a.residencies.push_back(std::move(x));
    }
    for (const auto& u : j.at("v2p_updates")) {
      V2pUpdate x;
      x.tick = u.at("tick");
      x.standalone = u.at("standalone");
      x.cycles = u.at("cycles");
      for (const auto& e : u.at("entries")) x.entries.push_back({e[0], e[1]});
      a.updates.push_back(std::move(x));
    }
    a.relocations = j.at("relocations");
    return a;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("allocation: ") + e.what());
  }
}

std::string v2p_listing(const AllocationResult& a) {
  std::ostringstream os;
  os << "initial";
  for (size_t v = 0; v < a.initial_table.size(); ++v) os << ' ' << v << "->" << a.initial_table[v];
  os << '\n';
  for (const auto& u : a.updates) {
    os << "tick " << u.tick << (u.standalone ? " (own tick)" : "") << " cycles " << u.cycles << ':';
    for (const auto& [v, ph] : u.entries) os << ' ' << v << "->" << ph;
    os << '\n';
  }
  return os.str();
}

}  // namespace npucp

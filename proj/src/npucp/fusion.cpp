// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include "npucp/fusion.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace npucp {

namespace {

bool is_param(const NetGraph& g, int tensor) { return g.tensors[tensor].kind == TensorKind::kParameter; }

int span_banks(const Tile& t) { return t.high_bank - t.low_bank + 1; }

// Banks of the live tiles: each tensor occupies the range between its lowest and highest live bank.
int64_t live_banks(const TileGraph& tg, const std::vector<int>& live) {
  std::map<int, std::pair<int, int>> span;
  for (int id : live) {
    const Tile& t = tg.tiles[id];
    auto [it, fresh] = span.try_emplace(t.tensor, t.low_bank, t.high_bank);
    if (!fresh) {
      it->second.first = std::min(it->second.first, t.low_bank);
      it->second.second = std::max(it->second.second, t.high_bank);
    }
  }
  int64_t banks = 0;
  for (const auto& [tensor, s] : span) banks += s.second - s.first + 1;
  return banks;
}

}  // namespace

std::vector<int64_t> order_memory(const LoweredGraph& lowered, const TileGraph& tg, const std::vector<int>& tensor_option,
                                  const std::vector<int>& order) {
  const NetGraph& g = lowered.graph;
  const int steps = static_cast<int>(order.size());
  std::map<int, int> step_of;
  for (int s = 0; s < steps; ++s) step_of[order[s]] = s;
  std::map<int, std::pair<int, int>> live;  // tile -> first, last step
  std::vector<int64_t> param_banks(steps, 0);
  for (int s = 0; s < steps; ++s) {
    const Tile& c = tg.tiles[order[s]];
    auto [it, fresh] = live.try_emplace(c.id, s, s);
    if (!fresh) it->second.first = s;
    for (const auto& in : c.inputs) {
      for (int d : in.tiles[tensor_option[in.tensor]]) {
        if (is_param(g, in.tensor)) {
          param_banks[s] += span_banks(tg.tiles[d]);
          continue;
        }
        const int first = step_of.count(d) ? step_of[d] : 0;
        auto [dit, dfresh] = live.try_emplace(d, first, s);
        if (!dfresh) dit->second.second = std::max(dit->second.second, s);
      }
    }
  }
  std::vector<std::vector<int>> at(steps);
  for (const auto& [id, range] : live) {
    for (int s = range.first; s <= range.second; ++s) at[s].push_back(id);
  }
  std::vector<int64_t> banks(steps);
  for (int s = 0; s < steps; ++s) banks[s] = live_banks(tg, at[s]) + param_banks[s];
  return banks;
}

std::vector<FusionRegion> find_fusion_regions(const LoweredGraph& lowered, const TileGraph& tg, const MachineModel& m) {
  const NetGraph& g = lowered.graph;
  const int nl = static_cast<int>(g.layers.size());
  const std::vector<int> option(g.tensors.size(), 0);
  const std::vector<int64_t> mem = order_memory(lowered, tg, option, tg.default_order);
  std::vector<char> oversized(nl, 0);
  for (size_t s = 0; s < tg.default_order.size(); ++s) {
    if (mem[s] > m.tcm_banks) oversized[tg.tiles[tg.default_order[s]].producer_layer] = 1;
  }
  std::vector<FusionRegion> regions;
  for (int l = 0; l < nl; ++l) {
    if (!oversized[l]) continue;
    int e = l;
    while (e + 1 < nl && oversized[e + 1]) ++e;
    FusionRegion r{std::max(0, l - 1), std::min(nl - 1, e + 1)};
    if (!regions.empty() && regions.back().last_layer + 1 >= r.first_layer) regions.back().last_layer = r.last_layer;
    else regions.push_back(r);
    l = e;
  }
  return regions;
}

FusionModel build_fusion_model(const LoweredGraph& lowered, const TileGraph& tg, const MachineModel& m,
                               const FusionRegion& region, const std::vector<int>& tensor_option) {
  const NetGraph& g = lowered.graph;
  if (region.first_layer > region.last_layer) fail(ErrorCode::kContract, "fusion: empty region");
  FusionModel fm;
  fm.region = region;
  cp::CpModel& cm = fm.model;

  std::map<int, int> region_index;  // tensor -> position in region_tensors
  for (int l = region.first_layer; l <= region.last_layer; ++l) {
    region_index[g.layer_output[l]] = static_cast<int>(fm.region_tensors.size());
    fm.region_tensors.push_back(g.layer_output[l]);
  }
  auto options_of = [&](int tensor) { return tg.options_identical(tensor) ? 1 : 2; };

  for (int t : fm.region_tensors) {
    fm.horizon += static_cast<int>(std::max(tg.tensor_tiles[t][0].size(), tg.tensor_tiles[t][1].size()));
    for (int k = 0; k < options_of(t); ++k) {
      for (int id : tg.tensor_tiles[t][k]) fm.compute_tiles.push_back(id);
    }
  }
  std::set<int> resident;
  for (int id : fm.compute_tiles) {
    for (const auto& in : tg.tiles[id].inputs) {
      if (is_param(g, in.tensor) || region_index.count(in.tensor)) continue;
      for (int d : in.tiles[tensor_option[in.tensor]]) resident.insert(d);
    }
  }
  fm.resident_tiles.assign(resident.begin(), resident.end());
  const int T = fm.horizon;
  const int nc = static_cast<int>(fm.compute_tiles.size());
  const int nr = static_cast<int>(fm.resident_tiles.size());

  std::map<int, int> slot;  // tile -> index into tcm_var
  for (int i = 0; i < nc; ++i) slot[fm.compute_tiles[i]] = i;
  for (int i = 0; i < nr; ++i) slot[fm.resident_tiles[i]] = nc + i;

  // Selection first, then compute decisions (deepest layer first within a step), then states.
  for (int t : fm.region_tensors) {
    const std::string& id = g.tensors[t].id;
    fm.ls.push_back({cm.new_bool("ls0_" + id), cm.new_bool("ls1_" + id)});
  }
  std::vector<int> by_depth(nc);
  for (int i = 0; i < nc; ++i) by_depth[i] = i;
  std::stable_sort(by_depth.begin(), by_depth.end(), [&](int a, int b) {
    return tg.tiles[fm.compute_tiles[a]].producer_layer > tg.tiles[fm.compute_tiles[b]].producer_layer;
  });
  fm.compute_var.assign(nc, std::vector<int>(T, -1));
  for (int s = 0; s < T; ++s) {
    for (int i : by_depth) fm.compute_var[i][s] = cm.new_bool("cmp_" + std::to_string(fm.compute_tiles[i]) + "_" + std::to_string(s));
  }
  fm.tcm_var.assign(nc + nr, std::vector<int>(T, -1));
  for (int s = 0; s < T; ++s) {
    for (int i = 0; i < nc + nr; ++i) {
      const int tile = i < nc ? fm.compute_tiles[i] : fm.resident_tiles[i - nc];
      fm.tcm_var[i][s] = cm.new_bool("tcm_" + std::to_string(tile) + "_" + std::to_string(s), true);
    }
  }

  auto ls_of = [&](int tile) {
    const Tile& t = tg.tiles[tile];
    return fm.ls[region_index.at(t.tensor)][t.size_option];
  };

  for (size_t r = 0; r < fm.region_tensors.size(); ++r) {
    const int t = fm.region_tensors[r];
    cm.add_linear({{fm.ls[r][0], 1}, {fm.ls[r][1], 1}}, cp::Rel::kEq, 1, "ls_one_" + g.tensors[t].id);
    if (options_of(t) == 1) cm.add_linear({{fm.ls[r][1], 1}}, cp::Rel::kEq, 0, "ls_same_" + g.tensors[t].id);
  }
  for (int i = 0; i < nc; ++i) {
    const int tile = fm.compute_tiles[i];
    const std::string tag = std::to_string(tile);
    std::vector<cp::Term> once{{ls_of(tile), -1}};
    for (int s = 0; s < T; ++s) once.push_back({fm.compute_var[i][s], 1});
    cm.add_linear(once, cp::Rel::kEq, 0, "once_" + tag);
    for (int s = 0; s < T; ++s) {
      const int c = fm.compute_var[i][s];
      const int x = fm.tcm_var[i][s];
      cm.add_linear({{x, 1}, {ls_of(tile), -1}}, cp::Rel::kLe, 0, "enabled_" + tag);
      cm.add_linear({{c, 1}, {x, -1}}, cp::Rel::kLe, 0, "present_" + tag);
      if (s == 0) cm.add_linear({{x, 1}, {c, -1}}, cp::Rel::kLe, 0, "persist_" + tag);
      else cm.add_linear({{x, 1}, {fm.tcm_var[i][s - 1], -1}, {c, -1}}, cp::Rel::kLe, 0, "persist_" + tag);
    }
  }
  for (int i = 0; i < nr; ++i) {
    for (int s = 1; s < T; ++s) {
      cm.add_linear({{fm.tcm_var[nc + i][s], 1}, {fm.tcm_var[nc + i][s - 1], -1}}, cp::Rel::kLe, 0,
                    "resident_" + std::to_string(fm.resident_tiles[i]));
    }
  }
  for (int s = 0; s < T; ++s) {
    std::vector<cp::Term> one;
    for (int i = 0; i < nc; ++i) one.push_back({fm.compute_var[i][s], 1});
    cm.add_linear(one, cp::Rel::kLe, 1, "one_compute_" + std::to_string(s));
    if (s + 1 < T) {
      std::vector<cp::Term> gap = one;
      for (int i = 0; i < nc; ++i) gap.push_back({fm.compute_var[i][s + 1], -1});
      cm.add_linear(gap, cp::Rel::kGe, 0, "no_gap_" + std::to_string(s));
    }
  }
  // Dependencies, gated by the selected option of the producing tensor when it is in the region.
  for (int i = 0; i < nc; ++i) {
    const Tile& tile = tg.tiles[fm.compute_tiles[i]];
    for (const auto& in : tile.inputs) {
      if (is_param(g, in.tensor)) continue;
      const bool inside = region_index.count(in.tensor) > 0;
      const int n_opt = inside ? options_of(in.tensor) : 1;
      for (int k = 0; k < n_opt; ++k) {
        const auto& list = inside ? in.tiles[k] : in.tiles[tensor_option[in.tensor]];
        for (int d : list) {
          for (int s = 0; s < T; ++s) {
            if (inside) {
              cm.add_linear({{fm.compute_var[i][s], 1}, {fm.ls[region_index[in.tensor]][k], 1}, {fm.tcm_var[slot[d]][s], -1}},
                            cp::Rel::kLe, 1, "dep_" + std::to_string(tile.id));
            } else {
              cm.add_linear({{fm.compute_var[i][s], 1}, {fm.tcm_var[slot[d]][s], -1}}, cp::Rel::kLe, 0,
                            "dep_" + std::to_string(tile.id));
            }
          }
        }
      }
    }
  }
  // Tiles of one tensor are computed in ascending order.
  for (int i = 0; i + 1 < nc; ++i) {
    const Tile& a = tg.tiles[fm.compute_tiles[i]];
    const Tile& b = tg.tiles[fm.compute_tiles[i + 1]];
    if (a.tensor != b.tensor || a.size_option != b.size_option) continue;
    std::vector<cp::Term> terms{{ls_of(a.id), -1}};
    for (int s = 1; s < T; ++s) {
      terms.push_back({fm.compute_var[i + 1][s], s});
      terms.push_back({fm.compute_var[i][s], -s});
    }
    cm.add_linear(terms, cp::Rel::kGe, 0, "ascending_" + std::to_string(b.id));
  }

  // Memory per step.
  std::map<int, std::vector<int>> tensor_slots;
  for (int i = 0; i < nc + nr; ++i) {
    const int tile = i < nc ? fm.compute_tiles[i] : fm.resident_tiles[i - nc];
    tensor_slots[tg.tiles[tile].tensor].push_back(i);
  }
  int64_t big = 0;
  std::map<int, int> max_high;
  for (const auto& [tensor, slots] : tensor_slots) {
    int hi = 0;
    for (int i : slots) {
      const int tile = i < nc ? fm.compute_tiles[i] : fm.resident_tiles[i - nc];
      hi = std::max(hi, tg.tiles[tile].high_bank);
    }
    max_high[tensor] = hi;
    big += hi + 1;
  }
  std::vector<int64_t> param_banks(nc, 0);
  for (int i = 0; i < nc; ++i) {
    for (const auto& in : tg.tiles[fm.compute_tiles[i]].inputs) {
      if (is_param(g, in.tensor)) param_banks[i] += span_banks(tg.tiles[in.tiles[0].front()]);
    }
  }
  big += *std::max_element(param_banks.begin(), param_banks.end());
  const int64_t cap = m.tcm_banks;
  const int n_tensors = static_cast<int>(tensor_slots.size());
  std::vector<cp::Term> objective;
  for (int s = 0; s < T; ++s) {
    const std::string st = std::to_string(s);
    std::vector<cp::Term> row;
    for (const auto& [tensor, slots] : tensor_slots) {
      const std::string id = g.tensors[tensor].id + "_" + st;
      const int hi = cm.new_int(-1, max_high[tensor], "hi_" + id);
      const int lo = cm.new_int(0, max_high[tensor], "lo_" + id);
      std::vector<cp::ExtremumEntry> his, los;
      for (int i : slots) {
        const int tile = i < nc ? fm.compute_tiles[i] : fm.resident_tiles[i - nc];
        his.push_back({{fm.tcm_var[i][s], false}, tg.tiles[tile].high_bank});
        los.push_back({{fm.tcm_var[i][s], false}, tg.tiles[tile].low_bank});
      }
      cm.add_extremum(hi, true, his, -1, "top_" + id);
      cm.add_extremum(lo, false, los, 0, "bottom_" + id);
      row.push_back({hi, 1});
      row.push_back({lo, -1});
    }
    const int memth = cm.new_int(cap, std::max(cap, big), "memth_" + st);
    fm.memth.push_back(memth);
    for (int i = 0; i < nc; ++i) row.push_back({fm.compute_var[i][s], big + param_banks[i]});
    row.push_back({memth, -1});
    // Steps without a compute are unconstrained.
    cm.add_linear(row, cp::Rel::kLe, big - n_tensors, "memory_" + st);
    objective.push_back({memth, 1});
  }
  cm.minimize(objective, -cap * T);

  // Hint: layer by layer with the largest tiles, each tile kept until its last reader.
  std::vector<int> hint_order;
  for (int t : fm.region_tensors) {
    for (int id : tg.tensor_tiles[t][0]) hint_order.push_back(id);
  }
  std::vector<int> opt = tensor_option;
  for (int t : fm.region_tensors) opt[t] = 0;
  std::vector<int64_t>& h = fm.hint;
  h.assign(cm.num_vars(), -1);
  for (auto& ls : fm.ls) {
    h[ls[0]] = 1;
    h[ls[1]] = 0;
  }
  std::vector<int> first(nc + nr, T), last(nc + nr, -1);
  for (int i = 0; i < nr; ++i) first[nc + i] = 0;
  for (size_t s = 0; s < hint_order.size(); ++s) {
    const int i = slot[hint_order[s]];
    first[i] = static_cast<int>(s);
    last[i] = std::max(last[i], static_cast<int>(s));
    for (int d : tg.tiles[hint_order[s]].deps(opt)) {
      if (is_param(g, tg.tiles[d].tensor)) continue;
      last[slot[d]] = std::max(last[slot[d]], static_cast<int>(s));
    }
  }
  for (int i = 0; i < nc; ++i) {
    for (int s = 0; s < T; ++s) h[fm.compute_var[i][s]] = 0;
  }
  for (size_t s = 0; s < hint_order.size(); ++s) h[fm.compute_var[slot[hint_order[s]]][s]] = 1;
  for (int i = 0; i < nc + nr; ++i) {
    for (int s = 0; s < T; ++s) h[fm.tcm_var[i][s]] = (s >= first[i] && s <= last[i]) ? 1 : 0;
  }
  const std::vector<int64_t> mem = order_memory(lowered, tg, opt, hint_order);
  fm.hint_objective = 0;
  for (int s = 0; s < T; ++s) {
    const int64_t used = s < static_cast<int>(mem.size()) ? std::max(cap, mem[s]) : cap;
    h[fm.memth[s]] = used;
    fm.hint_objective += used - cap;
  }
  for (const auto& c : cm.extrema()) h[c.target] = cp::extremum_value(c, h);
  return fm;
}

RegionResult solve_fusion_region(const LoweredGraph& lowered, const TileGraph& tg, const MachineModel& m,
                                 const FusionRegion& region, const std::vector<int>& tensor_option,
                                 const FusionOptions& options) {
  const FusionModel fm = build_fusion_model(lowered, tg, m, region, tensor_option);
  if (!options.lp_dump_dir.empty()) {
    const std::string path = options.lp_dump_dir + "/fusion_" + lowered.graph.layers[region.first_layer].id + ".lp";
    std::ofstream out(path);
    if (!out) fail(ErrorCode::kIo, "cannot write " + path);
    out << fm.model.to_lp();
  }
  cp::SolveOptions so;
  so.budget_ms = options.budget_ms;
  so.hints.push_back(fm.hint);
  const cp::Assignment a = cp::solve(fm.model, so);
  if (a.status == cp::Status::kInfeasible) {
    fail(ErrorCode::kInternal, "fusion model infeasible: " + a.conflict);
  }
  RegionResult r;
  r.region = region;
  r.status = a.status;
  r.baseline_objective = fm.hint_objective;
  r.nodes = a.nodes;
  r.work = a.work;
  r.wall_ms = a.wall_ms;
  const std::vector<int64_t>& v = a.has_solution() ? a.values : fm.hint;
  const int nc = static_cast<int>(fm.compute_tiles.size());
  for (int s = 0; s < fm.horizon; ++s) {
    for (int i = 0; i < nc; ++i) {
      if (v[fm.compute_var[i][s]]) r.order.push_back(fm.compute_tiles[i]);
    }
  }
  for (size_t s = 0; s < r.order.size(); ++s) r.memth.push_back(v[fm.memth[s]]);
  r.objective = a.has_solution() ? a.objective : fm.hint_objective;
  return r;
}

FusionResult optimize_fusion(const LoweredGraph& lowered, const TileGraph& tg, const MachineModel& m,
                             const FusionOptions& options) {
  const NetGraph& g = lowered.graph;
  FusionResult res;
  res.tensor_option.assign(g.tensors.size(), 0);
  if (options.enabled) {
    for (const auto& region : find_fusion_regions(lowered, tg, m)) {
      RegionResult r = solve_fusion_region(lowered, tg, m, region, res.tensor_option, options);
      for (int id : r.order) res.tensor_option[tg.tiles[id].tensor] = tg.tiles[id].size_option;
      res.regions.push_back(std::move(r));
    }
  }
  size_t next = 0;
  for (int l = 0; l < static_cast<int>(g.layers.size()); ++l) {
    if (next < res.regions.size() && res.regions[next].region.contains(l)) {
      res.order.insert(res.order.end(), res.regions[next].order.begin(), res.regions[next].order.end());
      l = res.regions[next].region.last_layer;
      ++next;
      continue;
    }
    const int t = g.layer_output[l];
    for (int id : tg.tensor_tiles[t][res.tensor_option[t]]) res.order.push_back(id);
  }
  return res;
}

std::string memth_csv(const RegionResult& r, int capacity_banks) {
  std::ostringstream os;
  os << "timestep,memth_banks,capacity\n";
  for (size_t s = 0; s < r.memth.size(); ++s) os << s << "," << r.memth[s] << "," << capacity_banks << "\n";
  return os.str();
}

json fusion_result_to_json(const FusionResult& r) {
  json regions = json::array();
  for (const auto& x : r.regions) {
    regions.push_back({{"first_layer", x.region.first_layer},
                       {"last_layer", x.region.last_layer},
                       {"status", cp::to_string(x.status)},
                       {"order", x.order},
                       {"memth", x.memth},
                       {"objective", x.objective},
                       {"baseline_objective", x.baseline_objective},
                       {"nodes", x.nodes},
                       {"work", x.work}});
  }
  return {{"tensor_option", r.tensor_option}, {"order", r.order}, {"regions", regions}};
}

namespace {

cp::Status status_from_string(const std::string& s) {
  if (s == "optimal") return cp::Status::kOptimal;
  if (s == "feasible") return cp::Status::kFeasible;
  if (s == "infeasible") return cp::Status::kInfeasible;
  if (s == "timeout") return cp::Status::kTimeout;
  fail(ErrorCode::kParse, "unknown solver status '" + s + "'");
}

}  // namespace

FusionResult fusion_result_from_json(const json& j) {
  try {
    FusionResult r;
    r.tensor_option = j.at("tensor_option").get<std::vector<int>>();
    r.order = j.at("order").get<std::vector<int>>();
    for (const auto& x : j.at("regions")) {
      RegionResult rr;
      rr.region = {x.at("first_layer"), x.at("last_layer")};
      rr.status = status_from_string(x.at("status"));
      rr.order = x.at("order").get<std::vector<int>>();
      rr.memth = x.at("memth").get<std::vector<int64_t>>();
      rr.objective = x.at("objective");
      rr.baseline_objective = x.at("baseline_objective");
      rr.nodes = x.at("nodes");
      rr.work = x.at("work");
      r.regions.push_back(std::move(rr));
    }
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("fusion result: ") + e.what());
  }
}

}  // namespace npucp

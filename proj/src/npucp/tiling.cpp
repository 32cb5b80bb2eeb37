// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include "npucp/tiling.hpp"

#include <algorithm>

namespace npucp {

std::vector<int> Tile::deps(const std::vector<int>& tensor_option) const {
  std::vector<int> out;
  for (const auto& in : inputs) {
    const auto& list = in.tiles[tensor_option[in.tensor]];
    out.insert(out.end(), list.begin(), list.end());
  }
  return out;
}

Footprint bank_footprint(int64_t bytes, const MachineModel& m) { return {m.banks_for(bytes), bytes}; }

Footprint bank_footprint(const Tile& tile, int64_t expanded_lines, int64_t line_bytes, const MachineModel& m) {
  return bank_footprint(tile.bytes + expanded_lines * line_bytes, m);
}

Range receptive_lines(const LayerGeometry& g, Range out) {
  if (out.empty()) return {out.begin * g.stride, out.begin * g.stride};
  return {out.begin * g.stride, (out.end - 1) * g.stride + g.filter_h};
}

namespace {

bool is_param(const TensorSpec& t) { return t.kind == TensorKind::kParameter; }

// Bytes needed to compute h output lines of `layer` from line 0.
int64_t compute_footprint(const NetGraph& graph, int layer, int64_t h, const MachineModel& m) {
  const LayerGeometry g = graph.geometry(layer);
  const int out = graph.layer_output[layer];
  int64_t bytes = 2 * h * line_bytes(graph.tensors[out], m.word_bytes);
  const Range rec = receptive_lines(g, {0, h});
  for (int t : graph.layer_inputs[layer]) {
    const TensorSpec& in = graph.tensors[t];
    if (is_param(in)) bytes += tensor_bytes(in, m.word_bytes);
    else bytes += std::min(rec.end, in.height) * line_bytes(in, m.word_bytes);
  }
  return bytes;
}

}  // namespace

int64_t max_tile_lines(const NetGraph& graph, int tensor, const MachineModel& m) {
  const TensorSpec& t = graph.tensors[tensor];
  if (is_param(t)) return t.height;
  const int64_t cap = m.tcm_bytes();
  const int p = graph.producer[tensor];
  auto need = [&](int64_t h) {
    if (p < 0) return 2 * h * line_bytes(t, m.word_bytes);
    return compute_footprint(graph, p, h, m);
  };
  if (need(1) > cap) {
    const std::string who = p < 0 ? "tensor '" + t.id + "'" : "layer '" + graph.layers[p].id + "'";
    fail(ErrorCode::kInfeasibleLayer, who + ": one output line needs " + std::to_string(need(1)) +
                                          " bytes, TCM holds " + std::to_string(cap));
  }
  int64_t lo = 1, hi = t.height;
  while (lo < hi) {
    const int64_t mid = lo + (hi - lo + 1) / 2;
    if (need(mid) <= cap) lo = mid;
    else hi = mid - 1;
  }
  return lo;
}

namespace {

TileGraph build_once(const LoweredGraph& lowered, const MachineModel& m, int factor,
                     const std::map<int, int64_t>& caps) {
  const NetGraph& graph = lowered.graph;
  const int nt = static_cast<int>(graph.tensors.size());
  TileGraph tg;
  tg.reduction_factor = factor;
  tg.tensor_tiles.resize(nt);
  tg.option_lines.resize(nt);
  tg.tensor_format.assign(nt, Format::kDepth);

  for (int t = 0; t < nt; ++t) {
    const int p = graph.producer[t];
    if (p >= 0) tg.tensor_format[t] = lowered.formats[p];
    else if (!graph.consumers[t].empty()) tg.tensor_format[t] = lowered.formats[graph.consumers[t].front()];
  }

  for (int t = 0; t < nt; ++t) {
    const TensorSpec& spec = graph.tensors[t];
    if (is_param(spec)) {
      Tile tile;
      tile.id = static_cast<int>(tg.tiles.size());
      tile.tensor = t;
      tile.lines = {0, spec.height};
      tile.bytes = tensor_bytes(spec, m.word_bytes);
      tile.banks = m.banks_for(tile.bytes);
      tile.format = tg.tensor_format[t];
      tg.tiles.push_back(tile);
      tg.tensor_tiles[t] = {std::vector<int>{tile.id}, std::vector<int>{tile.id}};
      tg.option_lines[t] = {spec.height, spec.height};
      continue;
    }
    int64_t h0 = max_tile_lines(graph, t, m);
    if (auto it = caps.find(t); it != caps.end()) h0 = std::min(h0, it->second);
    const int64_t h1 = std::max<int64_t>(1, h0 / factor);
    tg.option_lines[t] = {h0, h1};
    const int64_t lb = line_bytes(spec, m.word_bytes);
    for (int opt = 0; opt < 2; ++opt) {
      const int64_t h = tg.option_lines[t][opt];
      int index = 0;
      for (int64_t a = 0; a < spec.height; a += h, ++index) {
        Tile tile;
        tile.id = static_cast<int>(tg.tiles.size());
        tile.tensor = t;
        tile.size_option = opt;
        tile.index = index;
        tile.lines = {a, std::min(a + h, spec.height)};
        tile.bytes = tile.lines.size() * lb;
        tile.banks = m.banks_for(tile.bytes);
        tile.format = tg.tensor_format[t];
        tile.producer_layer = graph.producer[t];
        tg.tiles.push_back(tile);
        tg.tensor_tiles[t][opt].push_back(tile.id);
      }
    }
  }

  for (int t = 0; t < nt; ++t) {
    for (int opt = 0; opt < 2; ++opt) {
      int64_t off = 0;
      for (int id : tg.tensor_tiles[t][opt]) {
        Tile& tile = tg.tiles[id];
        tile.low_bank = static_cast<int>(off / m.bank_bytes);
        tile.high_bank = static_cast<int>((off + std::max<int64_t>(tile.bytes, 1) - 1) / m.bank_bytes);
        off += tile.bytes;
      }
      if (tg.tensor_tiles[t][1] == tg.tensor_tiles[t][0]) break;
    }
  }

  // Dependencies through the exact receptive field.
  for (auto& tile : tg.tiles) {
    const int layer = tile.producer_layer;
    if (layer < 0) continue;
    const LayerGeometry g = graph.geometry(layer);
    const Range rec = receptive_lines(g, tile.lines);
    for (int in : graph.layer_inputs[layer]) {
      InputDeps d;
      d.tensor = in;
      for (int opt = 0; opt < 2; ++opt) {
        for (int id : tg.tensor_tiles[in][opt]) {
          const Tile& src = tg.tiles[id];
          if (is_param(graph.tensors[in]) || !intersect(src.lines, rec).empty()) d.tiles[opt].push_back(id);
        }
      }
      tile.inputs.push_back(std::move(d));
    }
  }

  for (int l = 0; l < static_cast<int>(graph.layers.size()); ++l) {
    for (int id : tg.tensor_tiles[graph.layer_output[l]][0]) tg.default_order.push_back(id);
  }
  return tg;
}

struct Overflow {
  int layer = -1;
  int tensor = -1;
  int64_t banks = 0;
};

// A compute tile, its dependency spans and parameters must fit together for every option mix.
Overflow first_overflow(const TileGraph& tg, const NetGraph& graph, const MachineModel& m) {
  auto shrinkable = [&](int t) { return !is_param(graph.tensors[t]) && tg.option_lines[t][0] > 1; };
  for (const auto& tile : tg.tiles) {
    if (tile.producer_layer < 0) continue;
    const int n_in = static_cast<int>(tile.inputs.size());
    for (int mask = 0; mask < (1 << n_in); ++mask) {
      int64_t total = tile.high_bank - tile.low_bank + 1;
      // Largest contributor that can still be cut into smaller tiles.
      int worst = shrinkable(tile.tensor) ? tile.tensor : -1;
      int64_t worst_banks = worst >= 0 ? total : 0;
      for (int k = 0; k < n_in; ++k) {
        const auto& list = tile.inputs[k].tiles[(mask >> k) & 1];
        if (list.empty()) continue;
        const int64_t banks = tg.tiles[list.back()].high_bank - tg.tiles[list.front()].low_bank + 1;
        total += banks;
        if (banks > worst_banks && shrinkable(tile.inputs[k].tensor)) {
          worst = tile.inputs[k].tensor;
          worst_banks = banks;
        }
      }
      if (total > m.tcm_banks) return {tile.producer_layer, worst, total};
    }
  }
  return {};
}

}  // namespace

TileGraph build_tile_graph(const LoweredGraph& lowered, const MachineModel& m, int reduction_factor,
                           const std::map<int, int64_t>& line_caps) {
  if (reduction_factor < 2) fail(ErrorCode::kUsage, "reduction factor must be at least 2");
  std::map<int, int64_t> caps = line_caps;
  while (true) {
    TileGraph tg = build_once(lowered, m, reduction_factor, caps);
    const Overflow o = first_overflow(tg, lowered.graph, m);
    if (o.layer < 0) return tg;
    if (o.tensor < 0) {
      fail(ErrorCode::kInfeasibleLayer, "layer '" + lowered.graph.layers[o.layer].id + "': needs " +
                                            std::to_string(o.banks) + " banks with single-line tiles, TCM has " +
                                            std::to_string(m.tcm_banks));
    }
    caps[o.tensor] = tg.option_lines[o.tensor][0] / 2;
  }
}

json tile_graph_to_json(const TileGraph& tg, const NetGraph& graph) {
  json tiles = json::array();
  for (const auto& t : tg.tiles) {
    json deps = json::object();
    for (const auto& in : t.inputs) {
      deps[graph.tensors[in.tensor].id] = {{"option0", in.tiles[0]}, {"option1", in.tiles[1]}};
    }
    tiles.push_back({{"id", t.id},
                     {"tensor", graph.tensors[t.tensor].id},
                     {"option", t.size_option},
                     {"index", t.index},
                     {"lines", {t.lines.begin, t.lines.end}},
                     {"bytes", t.bytes},
                     {"banks", t.banks},
                     {"format", to_string(t.format)},
                     {"producer", t.producer_layer >= 0 ? json(graph.layers[t.producer_layer].id) : json(nullptr)},
                     {"deps", deps}});
  }
  json tensors = json::array();
  for (size_t i = 0; i < graph.tensors.size(); ++i) {
    tensors.push_back({{"id", graph.tensors[i].id},
                       {"lines", {tg.option_lines[i][0], tg.option_lines[i][1]}},
                       {"format", to_string(tg.tensor_format[i])}});
  }
  return {{"reduction_factor", tg.reduction_factor},
          {"tensors", tensors},
          {"tiles", tiles},
          {"default_order", tg.default_order}};
}

const ReuseConfig* TileProgram::reuse_for(int consumer) const {
  for (const auto& r : reuse) {
    if (r.consumer == consumer) return &r;
  }
  return nullptr;
}

TileProgram finalize_program(const LoweredGraph& lowered, const TileGraph& tg, const std::vector<int>& tensor_option,
                             const std::vector<int>& order, const MachineModel& m) {
  const NetGraph& graph = lowered.graph;
  const int nt = static_cast<int>(graph.tensors.size());
  if (static_cast<int>(tensor_option.size()) != nt) fail(ErrorCode::kContract, "tile program: option per tensor expected");
  TileProgram p;
  p.tensor_option = tensor_option;
  p.tensor_tiles.resize(nt);
  std::vector<int> program_id(tg.tiles.size(), -1);
  for (int t = 0; t < nt; ++t) {
    for (int src : tg.tensor_tiles[t][tensor_option[t]]) {
      const Tile& s = tg.tiles[src];
      ProgramTile pt;
      pt.id = static_cast<int>(p.tiles.size());
      pt.source = src;
      pt.tensor = t;
      pt.index = s.index;
      pt.lines = s.lines;
      pt.plain_bytes = s.bytes;
      pt.slot_bytes = s.bytes;
      pt.format = s.format;
      pt.producer_layer = s.producer_layer;
      const TensorKind kind = graph.tensors[t].kind;
      pt.dram_backed = kind == TensorKind::kParameter || kind == TensorKind::kModelInput;
      pt.model_output = kind == TensorKind::kModelOutput;
      program_id[src] = pt.id;
      p.tensor_tiles[t].push_back(pt.id);
      p.tiles.push_back(pt);
    }
  }
  for (auto& pt : p.tiles) {
    if (!pt.computed()) continue;
    for (int src : tg.tiles[pt.source].deps(tensor_option)) pt.deps.push_back(program_id[src]);
    const LayerGeometry g = graph.geometry(pt.producer_layer);
    if (g.op == OpKind::kFormatSwitch) pt.copy_cycles = copy_cycles(pt.plain_bytes, m);
    else pt.compute_cycles = compute_cycles(g, lowered.formats[pt.producer_layer], m, pt.lines);
  }

  // Execution order: every selected compute tile once, after its producers, ascending per tensor.
  std::vector<int> seen(p.tiles.size(), 0);
  std::vector<int> next_index(nt, 0);
  for (int src : order) {
    if (src < 0 || src >= static_cast<int>(tg.tiles.size()) || program_id[src] < 0) {
      fail(ErrorCode::kContract, "tile program: order names a tile outside the selected options");
    }
    const ProgramTile& pt = p.tiles[program_id[src]];
    if (!pt.computed() || seen[pt.id]) fail(ErrorCode::kContract, "tile program: order repeats or names a non-compute tile");
    if (pt.index != next_index[pt.tensor]) fail(ErrorCode::kContract, "tile program: tiles of a tensor out of order");
    for (int d : pt.deps) {
      if (p.tiles[d].computed() && !seen[d]) fail(ErrorCode::kContract, "tile program: tile computed before its inputs");
    }
    seen[pt.id] = 1;
    ++next_index[pt.tensor];
    p.order.push_back(pt.id);
  }
  for (const auto& pt : p.tiles) {
    if (pt.computed() && !seen[pt.id]) fail(ErrorCode::kContract, "tile program: order misses a compute tile");
  }

  // Overlap lines of line-format consumers are duplicated next to the tile holding them.
  std::vector<int> next_slot(p.tiles.size(), 0);
  for (int c : p.order) {
    ProgramTile& ct = p.tiles[c];
    const int layer = ct.producer_layer;
    const LayerGeometry g = graph.geometry(layer);
    if (lowered.formats[layer] != Format::kLine || g.op == OpKind::kFormatSwitch || g.filter_h <= g.stride) continue;
    const int x = graph.activation_input(layer);
    const auto slices = slice_engines(g, Format::kLine, m.n_engines, ct.lines);
    for (int n = 1; n < m.n_engines; ++n) {
      for (int64_t h = slices[n].ifmap_lines.begin; h < slices[n].ifmap_lines.end; ++h) {
        bool shared = false;
        for (int k = 0; k < n && !shared; ++k) shared = slices[k].ifmap_lines.contains(h);
        if (!shared) continue;
        for (int d : ct.deps) {
          ProgramTile& dt = p.tiles[d];
          if (dt.tensor != x || !dt.lines.contains(h)) continue;
          dt.dups.push_back({c, n, h, next_slot[d]++});
          if (std::find(ct.ltcm_deps.begin(), ct.ltcm_deps.end(), d) == ct.ltcm_deps.end()) ct.ltcm_deps.push_back(d);
        }
      }
    }
    std::sort(ct.ltcm_deps.begin(), ct.ltcm_deps.end());
  }

  for (int t = 0; t < nt; ++t) {
    const int64_t lb = is_param(graph.tensors[t]) ? 0 : line_bytes(graph.tensors[t], m.word_bytes);
    int64_t off = 0;
    for (int id : p.tensor_tiles[t]) {
      ProgramTile& pt = p.tiles[id];
      pt.slot_bytes = pt.plain_bytes + static_cast<int64_t>(pt.dups.size()) * lb;
      pt.offset = off;
      pt.low_bank = static_cast<int>(off / m.bank_bytes);
      pt.high_bank = static_cast<int>((off + std::max<int64_t>(pt.slot_bytes, 1) - 1) / m.bank_bytes);
      off += pt.slot_bytes;
    }
  }
  p.reuse = compute_reuse(p, lowered);
  return p;
}

std::vector<ReuseConfig> compute_reuse(const TileProgram& p, const LoweredGraph& lowered) {
  const NetGraph& graph = lowered.graph;
  const int n = static_cast<int>(p.tiles.size());
  std::vector<int> pos(n, -1);
  for (size_t i = 0; i < p.order.size(); ++i) pos[p.order[i]] = static_cast<int>(i);
  std::vector<int> last_use(n, -1);
  for (int c : p.order) {
    for (int d : p.tiles[c].deps) last_use[d] = std::max(last_use[d], pos[c]);
  }
  std::vector<ReuseConfig> out;
  for (int c : p.order) {
    const ProgramTile& ct = p.tiles[c];
    const int layer = ct.producer_layer;
    if (graph.layers[layer].op == OpKind::kFormatSwitch) continue;
    const int x = graph.activation_input(layer);
    int o = -1;
    for (int d : ct.deps) {
      if (p.tiles[d].tensor == x) {
        o = d;
        break;
      }
    }
    if (o < 0 || last_use[o] != pos[c] || p.tiles[o].model_output) continue;
    const auto& xs = p.tensor_tiles[x];
    const ProgramTile& ot = p.tiles[o];
    bool lower_dead = true;
    for (int k = 0; k < ot.index; ++k) lower_dead = lower_dead && last_use[xs[k]] < pos[c];
    if (!lower_dead) continue;
    int c_banks = ct.high_bank - ct.low_bank + 1;
    if (ct.index > 0 && p.tiles[p.tensor_tiles[ct.tensor][ct.index - 1]].high_bank == ct.low_bank) --c_banks;
    int o_banks = ot.high_bank - ot.low_bank + 1;
    if (ot.index + 1 < static_cast<int>(xs.size()) && p.tiles[xs[ot.index + 1]].low_bank == ot.high_bank) --o_banks;
    const int saved = std::min(c_banks, o_banks);
    if (saved > 0) out.push_back({c, {o}, saved});
  }
  return out;
}

std::vector<FitViolation> fit_violations(const TileProgram& p, const LoweredGraph& lowered, const MachineModel& m) {
  const NetGraph& graph = lowered.graph;
  std::map<int, FitViolation> worst;
  for (int c : p.order) {
    const ProgramTile& ct = p.tiles[c];
    int64_t total = ct.high_bank - ct.low_bank + 1;
    int top = ct.tensor;
    int64_t top_banks = total;
    std::map<int, std::pair<int, int>> span;  // tensor -> low, high
    for (int d : ct.deps) {
      const ProgramTile& dt = p.tiles[d];
      auto [it, fresh] = span.try_emplace(dt.tensor, dt.low_bank, dt.high_bank);
      if (!fresh) {
        it->second.first = std::min(it->second.first, dt.low_bank);
        it->second.second = std::max(it->second.second, dt.high_bank);
      }
    }
    for (const auto& [t, s] : span) {
      const int64_t banks = s.second - s.first + 1;
      total += banks;
      if (banks > top_banks && !is_param(graph.tensors[t])) {
        top = t;
        top_banks = banks;
      }
    }
    if (total > m.tcm_banks) {
      auto& w = worst[ct.producer_layer];
      if (total > w.banks) w = {ct.producer_layer, top, total};
    }
  }
  std::vector<FitViolation> out;
  for (const auto& [l, v] : worst) out.push_back(v);
  return out;
}

json tile_program_to_json(const TileProgram& p) {
  json tiles = json::array();
  for (const auto& t : p.tiles) {
    json dups = json::array();
    for (const auto& d : t.dups) dups.push_back({d.consumer, d.engine, d.line, d.slot});
    tiles.push_back({{"id", t.id},
                     {"source", t.source},
                     {"tensor", t.tensor},
                     {"index", t.index},
                     {"lines", {t.lines.begin, t.lines.end}},
                     {"plain_bytes", t.plain_bytes},
                     {"slot_bytes", t.slot_bytes},
                     {"offset", t.offset},
                     {"banks", {t.low_bank, t.high_bank}},
                     {"format", to_string(t.format)},
                     {"producer", t.producer_layer},
                     {"dram_backed", t.dram_backed},
                     {"model_output", t.model_output},
                     {"deps", t.deps},
                     {"ltcm_deps", t.ltcm_deps},
                     {"dups", dups},
                     {"compute_cycles", t.compute_cycles},
                     {"copy_cycles", t.copy_cycles}});
  }
  json reuse = json::array();
  for (const auto& r : p.reuse) {
    reuse.push_back({{"consumer", r.consumer}, {"overwritable", r.overwritable}, {"banks_saved", r.banks_saved}});
  }
  return {{"tiles", tiles}, {"order", p.order}, {"reuse", reuse}, {"tensor_option", p.tensor_option},
          {"tensor_tiles", p.tensor_tiles}};
}

TileProgram tile_program_from_json(const json& j) {
  try {
    TileProgram p;
    for (const auto& t : j.at("tiles")) {
      ProgramTile pt;
      pt.id = t.at("id");
      pt.source = t.at("source");
      pt.tensor = t.at("tensor");
      pt.index = t.at("index");
      pt.lines = {t.at("lines")[0], t.at("lines")[1]};
      pt.plain_bytes = t.at("plain_bytes");
      pt.slot_bytes = t.at("slot_bytes");
      pt.offset = t.at("offset");
      pt.low_bank = t.at("banks")[0];
      pt.high_bank = t.at("banks")[1];
      pt.format = format_from_string(t.at("format"));
      pt.producer_layer = t.at("producer");
      pt.dram_backed = t.at("dram_backed");
      pt.model_output = t.at("model_output");
      pt.deps = t.at("deps").get<std::vector<int>>();
      pt.ltcm_deps = t.at("ltcm_deps").get<std::vector<int>>();
      for (const auto& d : t.at("dups")) pt.dups.push_back({d[0], d[1], d[2], d[3]});
      pt.compute_cycles = t.at("compute_cycles");
      pt.copy_cycles = t.at("copy_cycles");
      p.tiles.push_back(std::move(pt));
    }
    p.order = j.at("order").get<std::vector<int>>();
    for (const auto& r : j.at("reuse")) {
      p.reuse.push_back({r.at("consumer"), r.at("overwritable").get<std::vector<int>>(), r.at("banks_saved")});
    }
    p.tensor_option = j.at("tensor_option").get<std::vector<int>>();
    p.tensor_tiles = j.at("tensor_tiles").get<std::vector<std::vector<int>>>();
    return p;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("tile program: ") + e.what());
  }
}

}  // namespace npucp

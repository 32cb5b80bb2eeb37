#include <doctest.h>

#include <functional>
#include <map>
#include <random>
#include <set>

#include "npucp/fusion.hpp"
#include "npucp/generator.hpp"
#include "support/fixtures.hpp"
#include "support/nets.hpp"

using namespace npucp;

namespace {

MachineModel tiny_machine(int banks, int64_t bank_bytes) {
  MachineModel m;
  m.tcm_banks = banks;
  m.bank_bytes = bank_bytes;
  m.word_bytes = 16;
  return m;
}

// Tensor span of the live tiles plus parameters of the computing tile, for one step.
int64_t step_banks(const TileGraph& tg, const NetGraph& g, const std::set<int>& live, int computing) {
  std::map<int, std::pair<int, int>> span;
  for (int id : live) {
    const Tile& t = tg.tiles[id];
    if (!span.count(t.tensor)) span[t.tensor] = {t.low_bank, t.high_bank};
    span[t.tensor].first = std::min(span[t.tensor].first, t.low_bank);
    span[t.tensor].second = std::max(span[t.tensor].second, t.high_bank);
  }
  int64_t banks = 0;
  for (const auto& [t, s] : span) banks += s.second - s.first + 1;
  for (const auto& in : tg.tiles[computing].inputs) {
    if (g.tensors[in.tensor].kind != TensorKind::kParameter) continue;
    const Tile& p = tg.tiles[in.tiles[0][0]];
    banks += p.high_bank - p.low_bank + 1;
  }
  return banks;
}

// Excess over capacity of an order with minimal lifetimes; tiles from outside are resident from step 0.
int64_t order_excess(const TileGraph& tg, const NetGraph& g, const std::vector<int>& option, const std::vector<int>& order,
                     int capacity) {
  const int n = static_cast<int>(order.size());
  std::map<int, int> born, dies;
  for (int s = 0; s < n; ++s) {
    born[order[s]] = s;
    dies[order[s]] = std::max(dies[order[s]], s);
  }
  for (int s = 0; s < n; ++s) {
    for (const auto& in : tg.tiles[order[s]].inputs) {
      if (g.tensors[in.tensor].kind == TensorKind::kParameter) continue;
      for (int d : in.tiles[option[in.tensor]]) {
        if (!born.count(d)) born[d] = 0;
        dies[d] = std::max(dies[d], s);
      }
    }
  }
  int64_t excess = 0;
  for (int s = 0; s < n; ++s) {
    std::set<int> live;
    for (const auto& [id, b] : born) {
      if (b <= s && s <= dies[id]) live.insert(id);
    }
    excess += std::max<int64_t>(0, step_banks(tg, g, live, order[s]) - capacity);
  }
  return excess;
}

// Minimum excess over every option choice of the region tensors and every dependency-respecting order
// that keeps each tensor's tiles ascending.
int64_t exhaustive_best(const LoweredGraph& lg, const TileGraph& tg, const FusionRegion& r, int capacity) {
  const NetGraph& g = lg.graph;
  std::vector<int> tensors;
  for (int l = r.first_layer; l <= r.last_layer; ++l) tensors.push_back(g.layer_output[l]);
  int64_t best = -1;
  for (int mask = 0; mask < (1 << tensors.size()); ++mask) {
    std::vector<int> option(g.tensors.size(), 0);
    bool skip = false;
    for (size_t k = 0; k < tensors.size(); ++k) {
      option[tensors[k]] = (mask >> k) & 1;
      if (option[tensors[k]] == 1 && tg.options_identical(tensors[k])) skip = true;
    }
    if (skip) continue;
    std::vector<int> todo;
    for (int t : tensors) todo.insert(todo.end(), tg.tensor_tiles[t][option[t]].begin(), tg.tensor_tiles[t][option[t]].end());
    std::set<int> in_region(todo.begin(), todo.end());
    std::vector<int> order;
    std::set<int> done;
    std::function<void()> rec = [&]() {
      if (order.size() == todo.size()) {
        const int64_t e = order_excess(tg, g, option, order, capacity);
        if (best < 0 || e < best) best = e;
        return;
      }
      for (int id : todo) {
        if (done.count(id)) continue;
        const Tile& t = tg.tiles[id];
        if (t.index > 0 && !done.count(tg.tensor_tiles[t.tensor][option[t.tensor]][t.index - 1])) continue;
        bool ready = true;
        for (int d : t.deps(option)) ready = ready && (!in_region.count(d) || done.count(d));
        if (!ready) continue;
        done.insert(id);
        order.push_back(id);
        rec();
        order.pop_back();
        done.erase(id);
      }
    };
    rec();
  }
  return best;
}

int64_t total_tiles(const TileGraph& tg, const NetGraph& g, const FusionRegion& r) {
  int64_t n = 0;
  for (int l = r.first_layer; l <= r.last_layer; ++l) n += static_cast<int64_t>(tg.tensor_tiles[g.layer_output[l]][1].size());
  return n;
}

}  // namespace

TEST_CASE("fusion regions") {
  SUBCASE("tiny network fits entirely") {
    const NetGraph g = build_chain({{OpKind::kConv, 1, 1, 8}, {OpKind::kConv, 1, 1, 8}}, 4, 4, 8);
    const LoweredGraph lg = with_formats(g, Format::kDepth);
    const TileGraph tg = build_tile_graph(lg, default_machine(), 2);
    CHECK(find_fusion_regions(lg, tg, default_machine()).empty());
  }
  SUBCASE("one oversized middle block") {
    // Layers 2 and 3 widen the activations far beyond the others.
    const NetGraph g = build_chain({{OpKind::kConv, 1, 1, 16},
                                    {OpKind::kConv, 1, 1, 16},
                                    {OpKind::kConv, 1, 1, 256},
                                    {OpKind::kConv, 1, 1, 256},
                                    {OpKind::kConv, 1, 1, 16},
                                    {OpKind::kConv, 1, 1, 16},
                                    {OpKind::kConv, 1, 1, 16}},
                                   16, 16, 16);
    const MachineModel m = tiny_machine(64, 2048);
    const LoweredGraph lg = with_formats(g, Format::kDepth);
    const TileGraph tg = build_tile_graph(lg, m, 2);
    // Independent accounting of the layer-by-layer order with the largest tiles.
    const std::vector<int> option(g.tensors.size(), 0);
    std::set<int> over;
    std::map<int, int> born, dies;
    const auto& order = tg.default_order;
    for (size_t s = 0; s < order.size(); ++s) born[order[s]] = dies[order[s]] = static_cast<int>(s);
    for (size_t s = 0; s < order.size(); ++s) {
      for (int d : tg.tiles[order[s]].deps(option)) {
        if (g.tensors[tg.tiles[d].tensor].kind == TensorKind::kParameter) continue;
        if (!born.count(d)) born[d] = 0;
        dies[d] = std::max(dies[d], static_cast<int>(s));
      }
    }
    for (size_t s = 0; s < order.size(); ++s) {
      std::set<int> live;
      for (const auto& [id, b] : born) {
        if (b <= static_cast<int>(s) && static_cast<int>(s) <= dies[id]) live.insert(id);
      }
      if (step_banks(tg, g, live, order[s]) > m.tcm_banks) over.insert(tg.tiles[order[s]].producer_layer);
    }
    REQUIRE(!over.empty());
    CHECK(*over.begin() >= 2);
    CHECK(*over.rbegin() <= 4);
    const auto regions = find_fusion_regions(lg, tg, m);
    REQUIRE(regions.size() == 1);
    CHECK(regions[0].first_layer == std::max(0, *over.begin() - 1));
    CHECK(regions[0].last_layer == *over.rbegin() + 1);
  }
  SUBCASE("mobilenet prefix: the first layers form one region") {
    const NetGraph g = parse_model(read_text(fixture_path("mobilenetv2_prefix.json")));
    const MachineModel m = default_machine();
    const LoweredGraph lg = apply_format_plan(g, select_formats(g, m));
    const TileGraph tg = build_tile_graph(lg, m, 2);
    const auto regions = find_fusion_regions(lg, tg, m);
    REQUIRE(regions.size() == 1);
    CHECK(regions[0].first_layer == 0);
    CHECK(regions[0].last_layer >= 3);
  }
}

TEST_CASE("fusion model trivial cases") {
  SUBCASE("single tile, single step") {
    const NetGraph g = build_chain({{OpKind::kConv, 1, 1, 16}}, 1, 4, 16);
    for (int cap : {1, 2, 64}) {
      const MachineModel m = tiny_machine(cap, 64);
      const LoweredGraph lg = with_formats(g, Format::kDepth);
      const TileGraph tg = build_tile_graph(lg, default_machine(), 2, {});
      const FusionModel fm = build_fusion_model(lg, tg, m, {0, 0}, std::vector<int>(g.tensors.size(), 0));
      CHECK(fm.horizon == 1);
      const RegionResult r = solve_fusion_region(lg, tg, m, {0, 0}, std::vector<int>(g.tensors.size(), 0), {});
      const Tile& out = tg.tiles[r.order.at(0)];
      const int64_t tile_banks = out.high_bank - out.low_bank + 1;
      REQUIRE(r.memth.size() == 1);
      int64_t expected = 0;
      std::set<int> live{out.id};
      for (int d : out.deps(std::vector<int>(g.tensors.size(), 0))) {
        if (g.tensors[tg.tiles[d].tensor].kind != TensorKind::kParameter) live.insert(d);
      }
      expected = step_banks(tg, g, live, out.id);
      CHECK(expected >= tile_banks);
      CHECK(r.memth[0] == std::max<int64_t>(cap, expected));
      CHECK(r.objective == std::max<int64_t>(expected - cap, 0));
    }
  }
  SUBCASE("two independent single-tile layers with slack") {
    const NetGraph g = build_chain({{OpKind::kConv, 1, 1, 16}, {OpKind::kConv, 1, 1, 16}}, 2, 4, 16);
    const MachineModel m = default_machine();
    const LoweredGraph lg = with_formats(g, Format::kDepth);
    const TileGraph tg = build_tile_graph(lg, m, 2);
    const RegionResult r = solve_fusion_region(lg, tg, m, {0, 1}, std::vector<int>(g.tensors.size(), 0), {});
    CHECK(r.objective == 0);
  }
}

TEST_CASE("fusing a chain beats layer by layer and matches exhaustive search") {
  const NetGraph g = build_chain({{OpKind::kConv, 1, 1, 16}, {OpKind::kConv, 1, 1, 16}, {OpKind::kConv, 1, 1, 16}}, 4, 4, 16);
  const MachineModel m = tiny_machine(4, 64);  // one line per bank
  const LoweredGraph lg = with_formats(g, Format::kDepth);
  std::map<int, int64_t> caps;
  for (size_t t = 0; t < g.tensors.size(); ++t) caps[static_cast<int>(t)] = 2;
  const TileGraph tg = build_tile_graph(lg, tiny_machine(64, 64), 2, caps);
  const FusionRegion region{0, 2};
  const RegionResult r = solve_fusion_region(lg, tg, m, region, std::vector<int>(g.tensors.size(), 0), {});
  CHECK(r.status == cp::Status::kOptimal);
  CHECK(r.objective < r.baseline_objective);
  CHECK(r.objective == exhaustive_best(lg, tg, region, m.tcm_banks));
  std::vector<int> option(g.tensors.size(), 0);
  for (int id : r.order) option[tg.tiles[id].tensor] = tg.tiles[id].size_option;
  CHECK(r.objective == order_excess(tg, g, option, r.order, m.tcm_banks));
}

TEST_CASE("fusion equals exhaustive search on random small regions") {
  std::mt19937_64 rng(5);
  int checked = 0;
  for (int trial = 0; trial < 300 && checked < 25; ++trial) {
    const NetGraph g = random_network(rng(), 2 + static_cast<int>(rng() % 2), trial % 2 == 0);
    const LoweredGraph lg = with_formats(g, Format::kDepth);
    std::map<int, int64_t> caps;
    for (size_t t = 0; t < g.tensors.size(); ++t) caps[static_cast<int>(t)] = 1 + static_cast<int64_t>(rng() % 4);
    const MachineModel sizing = tiny_machine(4096, 256);
    TileGraph tg;
    try {
      tg = build_tile_graph(lg, sizing, 2, caps);
    } catch (const Error&) {
      continue;
    }
    const FusionRegion region{0, static_cast<int>(g.layers.size()) - 1};
    if (total_tiles(tg, g, region) > 8) continue;
    const MachineModel m = tiny_machine(1 + static_cast<int>(rng() % 6), 256);
    const std::vector<int> fixed(g.tensors.size(), 0);
    const FusionModel fm = build_fusion_model(lg, tg, m, region, fixed);
    CHECK(cp::violations(fm.model, fm.hint).empty());
    const RegionResult r = solve_fusion_region(lg, tg, m, region, fixed, {});
    REQUIRE(r.status == cp::Status::kOptimal);
    CHECK(r.objective <= r.baseline_objective);
    CHECK(r.objective == exhaustive_best(lg, tg, region, m.tcm_banks));
    ++checked;
  }
  CHECK(checked >= 10);
}

TEST_CASE("fused order replays through the tile program") {
  const NetGraph g = parse_model(read_text(fixture_path("mobilenetv2_prefix.json")));
  const MachineModel m = default_machine();
  const LoweredGraph lg = apply_format_plan(g, select_formats(g, m));
  const TileGraph tg = build_tile_graph(lg, m, 2);
  FusionOptions fo;
  fo.budget_ms = 200;
  const FusionResult fused = optimize_fusion(lg, tg, m, fo);
  REQUIRE(!fused.regions.empty());
  const TileProgram p = finalize_program(lg, tg, fused.tensor_option, fused.order, m);
  CHECK(p.order.size() == fused.order.size());
  for (const auto& r : fused.regions) CHECK(r.objective <= r.baseline_objective);

  FusionOptions off = fo;
  off.enabled = false;
  const FusionResult plain = optimize_fusion(lg, tg, m, off);
  CHECK(plain.order == tg.default_order);
  const auto peak = [&](const FusionResult& f) {
    const auto mem = order_memory(lg, tg, f.tensor_option, f.order);
    return *std::max_element(mem.begin(), mem.end());
  };
  CHECK(peak(fused) <= peak(plain));

  const FusionResult back = fusion_result_from_json(fusion_result_to_json(fused));
  CHECK(fusion_result_to_json(back) == fusion_result_to_json(fused));
  const std::string csv = memth_csv(fused.regions[0], m.tcm_banks);
  CHECK(csv.rfind("timestep,memth_banks,capacity\n0,", 0) == 0);
}

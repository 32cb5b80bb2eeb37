#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "npucp/generator.hpp"
#include "npucp/tiling.hpp"
#include "support/fixtures.hpp"
#include "support/nets.hpp"

using namespace npucp;

namespace {

MachineModel small_tcm(int banks, int64_t bank_bytes, int64_t word = 16) {
  MachineModel m;
  m.tcm_banks = banks;
  m.bank_bytes = bank_bytes;
  m.word_bytes = word;
  return m;
}

std::vector<int> all_option(const TileGraph& tg, int opt) { return std::vector<int>(tg.tensor_tiles.size(), opt); }

// Default order restricted to the chosen options: layer by layer, tiles ascending.
std::vector<int> order_for(const NetGraph& g, const TileGraph& tg, const std::vector<int>& opt) {
  std::vector<int> order;
  for (size_t l = 0; l < g.layers.size(); ++l) {
    const int t = g.layer_output[l];
    for (int id : tg.tensor_tiles[t][opt[t]]) order.push_back(id);
  }
  return order;
}

}  // namespace

TEST_CASE("max tile height counts double-buffered output, receptive input and parameters") {
  // 2 KiB lines in and out, a 3-line filter, 8 banks of 4 KiB.
  const NetGraph g = single_layer("depthwise", 18, 16, 128, 128, 3, 1, 1);
  const MachineModel m = small_tcm(8, 4096);
  const int y = g.tensor_index("y");
  CHECK(line_bytes(g.tensors[y], m.word_bytes) == 2048);
  const int64_t params = tensor_bytes(g.tensors[g.tensor_index("w")], m.word_bytes);
  auto need = [&](int64_t h) { return 2 * h * 2048 + (h + 2) * 2048 + params; };
  CHECK(need(4) <= 32768);
  CHECK(need(5) > 32768);
  CHECK(max_tile_lines(g, y, m) == 4);
}

TEST_CASE("max tile height edge cases") {
  SUBCASE("whole tensor fits") {
    const NetGraph g = single_layer("conv", 6, 6, 8, 8, 3, 3, 1);
    CHECK(max_tile_lines(g, g.tensor_index("y"), default_machine()) == 4);
  }
  SUBCASE("single-line tensor") {
    const NetGraph g = single_layer("conv", 3, 8, 8, 8, 3, 3, 1);
    CHECK(max_tile_lines(g, g.tensor_index("y"), default_machine()) == 1);
  }
  SUBCASE("one line does not fit") {
    const NetGraph g = single_layer("conv", 4, 64, 64, 64, 1, 1, 1);  // 4 KiB lines
    try {
      max_tile_lines(g, g.tensor_index("y"), small_tcm(2, 4096));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInfeasibleLayer);
      CHECK(std::string(e.what()).find("l0") != std::string::npos);
    }
  }
}

TEST_CASE("tile graph options and receptive dependencies") {
  const NetGraph g = single_layer("depthwise", 10, 16, 128, 128, 3, 1, 1);
  const MachineModel m = small_tcm(8, 4096);
  const TileGraph tg = build_tile_graph(with_formats(g, Format::kDepth), m, 2);
  const int y = g.tensor_index("y");
  CHECK(tg.option_lines[y][0] == 4);
  std::vector<Range> opt0, opt1;
  for (int id : tg.tensor_tiles[y][0]) opt0.push_back(tg.tiles[id].lines);
  for (int id : tg.tensor_tiles[y][1]) opt1.push_back(tg.tiles[id].lines);
  CHECK(opt0 == std::vector<Range>{{0, 4}, {4, 8}});
  CHECK(opt1 == std::vector<Range>{{0, 2}, {2, 4}, {4, 6}, {6, 8}});

  const Tile& second = tg.tiles[tg.tensor_tiles[y][0][1]];
  const int x = g.tensor_index("x");
  for (int opt = 0; opt < 2; ++opt) {
    std::set<int64_t> covered;
    for (const auto& in : second.inputs) {
      if (in.tensor != x) continue;
      for (int id : in.tiles[opt]) {
        for (int64_t h = tg.tiles[id].lines.begin; h < tg.tiles[id].lines.end; ++h) covered.insert(h);
      }
    }
    CHECK(*covered.begin() <= 4);
    CHECK(*covered.rbegin() == 9);
    for (int64_t h = 4; h < 10; ++h) CHECK(covered.count(h) == 1);
  }
}

TEST_CASE("elementwise add depends on same-range tiles only") {
  const NetGraph g = parse_model(read_text(fixture_path("residual_small.json")));
  const MachineModel m = small_tcm(16, 256);
  const TileGraph tg = build_tile_graph(with_formats(g, Format::kDepth), m, 2);
  const int s = g.tensor_index("s");
  for (int opt = 0; opt < 2; ++opt) {
    for (int id : tg.tensor_tiles[s][opt]) {
      const Tile& t = tg.tiles[id];
      for (const auto& in : t.inputs) {
        if (g.tensors[in.tensor].kind == TensorKind::kParameter) continue;
        for (int o = 0; o < 2; ++o) {
          for (int d : in.tiles[o]) CHECK(!intersect(tg.tiles[d].lines, t.lines).empty());
          if (tg.option_lines[in.tensor][o] == tg.option_lines[s][opt]) {
            REQUIRE(in.tiles[o].size() == 1);
            CHECK(tg.tiles[in.tiles[o][0]].lines == t.lines);
          }
        }
      }
    }
  }
}

TEST_CASE("bank footprint") {
  // 4 lines of 4 x 8 int8 with 64-byte banks and 8-byte words.
  const MachineModel m = small_tcm(16, 64, 8);
  TensorSpec t{"t", 4, 4, 8, 1, TensorKind::kActivation};
  Tile tile;
  tile.lines = {0, 4};
  tile.bytes = tensor_bytes(t, m.word_bytes);
  CHECK(bank_footprint(tile, 0, line_bytes(t, m.word_bytes), m).bytes == 128);
  CHECK(bank_footprint(tile, 0, line_bytes(t, m.word_bytes), m).banks == 2);
  CHECK(bank_footprint(tile, 2, line_bytes(t, m.word_bytes), m).bytes == 192);
  CHECK(bank_footprint(tile, 2, line_bytes(t, m.word_bytes), m).banks == 3);
  TensorSpec six{"u", 4, 4, 6, 1, TensorKind::kActivation};
  CHECK(line_bytes(six, m.word_bytes) == 32);
}

TEST_CASE("line-format consumers get duplicated overlap lines") {
  // 3x3 stride 1, 4 engines, 8 output lines per tile: each engine window shares 2 lines with the previous one.
  const NetGraph g = single_layer("conv", 10, 10, 16, 16, 3, 3, 1);
  const MachineModel m = default_machine();
  const LoweredGraph lg = with_formats(g, Format::kLine);
  const TileGraph tg = build_tile_graph(lg, m, 2);
  const auto opt = all_option(tg, 0);
  const TileProgram p = finalize_program(lg, tg, opt, order_for(g, tg, opt), m);
  const int x = g.tensor_index("x");
  int64_t dups = 0;
  for (int id : p.tensor_tiles[x]) dups += static_cast<int64_t>(p.tiles[id].dups.size());
  const LayerGeometry geo = g.geometry(0);
  CHECK(dups == overlap_line_count(geo, m.n_engines, {0, geo.out_h}));
  for (int id : p.tensor_tiles[x]) {
    const ProgramTile& t = p.tiles[id];
    CHECK(t.slot_bytes == t.plain_bytes + static_cast<int64_t>(t.dups.size()) * line_bytes(g.tensors[x], m.word_bytes));
  }
  const ProgramTile& out = p.tiles[p.order.front()];
  CHECK(!out.ltcm_deps.empty());

  const TileProgram depth = finalize_program(with_formats(g, Format::kDepth), tg, opt, order_for(g, tg, opt), m);
  for (const auto& t : depth.tiles) CHECK(t.dups.empty());
}

TEST_CASE("program rejects orders that break dependencies") {
  const NetGraph g = parse_model(read_text(fixture_path("residual_small.json")));
  const MachineModel m = small_tcm(16, 256);
  const LoweredGraph lg = with_formats(g, Format::kDepth);
  const TileGraph tg = build_tile_graph(lg, m, 2);
  const auto opt = all_option(tg, 0);
  auto order = order_for(g, tg, opt);
  std::reverse(order.begin(), order.end());
  CHECK_THROWS_AS(finalize_program(lg, tg, opt, order, m), Error);
  order = order_for(g, tg, opt);
  order.pop_back();
  CHECK_THROWS_AS(finalize_program(lg, tg, opt, order, m), Error);
}

namespace {

bool tile_touches_bank(const ProgramTile& t, int bank) { return t.low_bank <= bank && bank <= t.high_bank; }

void check_program_properties(const NetGraph& g, const TileProgram& p, const MachineModel& m) {
  // Dependencies cover exactly the receptive field.
  for (int c : p.order) {
    const ProgramTile& ct = p.tiles[c];
    const LayerGeometry geo = g.geometry(ct.producer_layer);
    const Range want = ct.producer_layer >= 0 && geo.op != OpKind::kFormatSwitch
                           ? Range{ct.lines.begin * geo.stride, (ct.lines.end - 1) * geo.stride + geo.filter_h}
                           : ct.lines;
    for (int in : g.layer_inputs[ct.producer_layer]) {
      if (g.tensors[in].kind == TensorKind::kParameter) continue;
      std::set<int64_t> covered;
      for (int d : ct.deps) {
        if (p.tiles[d].tensor != in) continue;
        CHECK(!intersect(p.tiles[d].lines, want).empty());
        for (int64_t h = p.tiles[d].lines.begin; h < p.tiles[d].lines.end; ++h) covered.insert(h);
      }
      for (int64_t h = want.begin; h < want.end; ++h) CHECK(covered.count(h) == 1);
    }
  }
  // Tiles cover every tensor byte.
  for (size_t t = 0; t < g.tensors.size(); ++t) {
    int64_t bytes = 0;
    for (int id : p.tensor_tiles[t]) bytes += p.tiles[id].plain_bytes;
    CHECK(bytes >= tensor_bytes(g.tensors[t], m.word_bytes));
  }
  // Replay the order: banks taken over by reuse hold nothing still needed.
  std::vector<int> pos(p.tiles.size(), -1);
  for (size_t i = 0; i < p.order.size(); ++i) pos[p.order[i]] = static_cast<int>(i);
  std::vector<int> last(p.tiles.size(), -1);
  for (int c : p.order) {
    for (int d : p.tiles[c].deps) last[d] = std::max(last[d], pos[c]);
  }
  for (const auto& r : p.reuse) {
    REQUIRE(r.overwritable.size() == 1);
    const ProgramTile& ct = p.tiles[r.consumer];
    const ProgramTile& ot = p.tiles[r.overwritable[0]];
    CHECK(last[ot.id] == pos[ct.id]);
    for (int k = 0; k < r.banks_saved; ++k) {
      const int in_bank = ot.low_bank + k;
      const int out_bank = ct.high_bank - k;
      CHECK(in_bank <= ot.high_bank);
      CHECK(out_bank >= ct.low_bank);
      for (int id : p.tensor_tiles[ot.tensor]) {
        if (id != ot.id && tile_touches_bank(p.tiles[id], in_bank)) CHECK(last[id] < pos[ct.id]);
      }
      for (int id : p.tensor_tiles[ct.tensor]) {
        if (id != ct.id && tile_touches_bank(p.tiles[id], out_bank)) CHECK(pos[id] > pos[ct.id]);
      }
    }
  }
}

}  // namespace

TEST_CASE("tiling properties on random networks") {
  std::mt19937_64 rng(11);
  int reuse_seen = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const NetGraph g = random_network(rng(), 3 + static_cast<int>(rng() % 5), trial % 2 == 1);
    MachineModel m = small_tcm(8 + static_cast<int>(rng() % 24), 256 << (rng() % 4), 8);
    LoweredGraph lg;
    TileGraph tg;
    try {
      lg = apply_format_plan(g, select_formats(g, m));
      tg = build_tile_graph(lg, m, 2 + static_cast<int>(rng() % 2));
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInfeasibleLayer);
      continue;
    }
    std::vector<int> opt(tg.tensor_tiles.size());
    for (auto& o : opt) o = static_cast<int>(rng() % 2);
    const TileProgram p = finalize_program(lg, tg, opt, order_for(lg.graph, tg, opt), m);
    check_program_properties(lg.graph, p, m);
    reuse_seen += static_cast<int>(p.reuse.size());
    const TileProgram back = tile_program_from_json(tile_program_to_json(p));
    CHECK(tile_program_to_json(back) == tile_program_to_json(p));
  }
  CHECK(reuse_seen > 0);
}

TEST_CASE("fit violations match an independent span count") {
  const NetGraph g = parse_model(read_text(fixture_path("mobilenetv2_prefix.json")));
  const MachineModel m = default_machine();
  const LoweredGraph lg = apply_format_plan(g, select_formats(g, m));
  const TileGraph tg = build_tile_graph(lg, m, 2);
  const auto opt = all_option(tg, 0);
  const TileProgram p = finalize_program(lg, tg, opt, tg.default_order, m);
  CHECK(p.order.size() == tg.default_order.size());
  std::set<int> over;
  for (int c : p.order) {
    const ProgramTile& ct = p.tiles[c];
    std::map<int, std::pair<int, int>> span;
    for (int d : ct.deps) {
      auto [it, fresh] = span.try_emplace(p.tiles[d].tensor, p.tiles[d].low_bank, p.tiles[d].high_bank);
      it->second.first = std::min(it->second.first, p.tiles[d].low_bank);
      it->second.second = std::max(it->second.second, p.tiles[d].high_bank);
    }
    int64_t banks = ct.high_bank - ct.low_bank + 1;
    for (const auto& [t, s] : span) banks += s.second - s.first + 1;
    if (banks > m.tcm_banks) over.insert(ct.producer_layer);
  }
  std::set<int> reported;
  for (const auto& v : fit_violations(p, lg, m)) reported.insert(v.layer);
  CHECK(over == reported);
  const json dump = tile_graph_to_json(tg, lg.graph);
  CHECK(dump["tiles"].size() == tg.tiles.size());
  CHECK(dump["tensors"][0]["id"] == lg.graph.tensors[0].id);
}

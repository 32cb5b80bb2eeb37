// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include "npucp/simulator.hpp"

#include <algorithm>
#include <set>

namespace npucp {

namespace {

enum class Where { kNone, kDram, kTcm, kLtcm };

int32_t load_element(const uint8_t* p, int elem_bytes) {
  uint32_t v = 0;
  for (int b = 0; b < elem_bytes; ++b) v |= uint32_t{p[b]} << (8 * b);
  if (elem_bytes < 4) {
    const uint32_t sign = uint32_t{1} << (8 * elem_bytes - 1);
    v = (v ^ sign) - sign;
  }
  return static_cast<int32_t>(v);
}

void store_element(uint8_t* p, int elem_bytes, int32_t value) {
  const uint32_t v = static_cast<uint32_t>(value);
  for (int b = 0; b < elem_bytes; ++b) p[b] = static_cast<uint8_t>(v >> (8 * b));
}

class Machine {
 public:
  Machine(const LoweredGraph& lowered, const TileProgram& p, const TimedSchedule& s, const AllocationResult& a,
          const MachineModel& m)
      : lowered_(lowered), graph_(lowered.graph), p_(p), s_(s), a_(a), m_(m),
        tcm_(static_cast<size_t>(m.tcm_banks * m.bank_bytes), 0), table_(a.initial_table),
        where_(p.tiles.size(), Where::kNone), computed_(p.tiles.size(), 0) {
    if (static_cast<int>(table_.size()) != m.tcm_banks) fail(ErrorCode::kContract, "simulate: table size differs from TCM banks");
    int64_t next = 0;
    for (size_t t = 0; t < graph_.tensors.size(); ++t) {
      dram_base_.push_back(next);
      next += tensor_bytes(graph_.tensors[t], m.word_bytes);
    }
    dram_.assign(static_cast<size_t>(next), 0);
    for (const auto& t : p.tiles) {
      if (t.dram_backed) where_[t.id] = Where::kDram;
    }
  }

  SimReport& report() { return r_; }

  void load_inputs(const NetworkData& data) {
    for (size_t t = 0; t < graph_.tensors.size(); ++t) {
      const TensorSpec& spec = graph_.tensors[t];
      std::vector<uint8_t> bytes;
      if (spec.kind == TensorKind::kModelInput) {
        const HostTensor& v = data.inputs.at(static_cast<int>(t));
        bytes = pack_lines(v, spec.elem_bytes, m_.word_bytes, 0, v.h);
      } else if (spec.kind == TensorKind::kParameter) {
        bytes = pack_params(data.params.at(static_cast<int>(t)), m_.word_bytes);
      } else {
        continue;
      }
      std::copy(bytes.begin(), bytes.end(), dram_.begin() + dram_base_[t]);
    }
  }

  void run() {
    std::map<int, std::vector<const V2pUpdate*>> inline_updates, standalone;
    for (const auto& u : a_.updates) (u.standalone ? standalone : inline_updates)[u.tick].push_back(&u);
    r_.capacity = m_.tcm_banks;
    for (int t = 0; t < static_cast<int>(s_.ticks.size()); ++t) {
      const Tick& tick = s_.ticks[t];
      SimTick st;
      st.schedule_tick = t;
      st.compute = tick.compute;
      st.jobs = static_cast<int>(tick.dm.size());
      for (const auto* u : standalone[t]) {
        apply_update(*u, t, -1);
        st.v2p_before += m_.v2p_update_cycles;
      }
      check_memory(t);
      check_bus(t);
      if (tick.compute >= 0) run_compute(t, st);
      for (const auto& job : tick.dm) run_job(t, job, st);
      if (st.l_c != tick.l_c || st.l_dm != tick.l_dm) {
        add(ErrorCode::kInternal, t, tick.compute, "latency model differs from the schedule");
      }
      for (const auto* u : inline_updates[t]) {
        apply_update(*u, t, tick.compute);
        st.v2p_inline += m_.v2p_update_cycles;
      }
      r_.ticks.push_back(st);
      if (tick.compute >= 0) where_[tick.compute] = Where::kTcm;
    }
    for (const auto& t : r_.ticks) {
      r_.latency_cycles += t.latency();
      r_.latency_with_v2p_cycles += t.latency_with_v2p();
    }
    r_.v2p_updates = static_cast<int64_t>(a_.updates.size());
    r_.v2p_cycles = r_.v2p_updates * m_.v2p_update_cycles;
    for (const auto& t : p_.tiles) {
      if (t.computed() && computed_[t.id] != 1) {
        add(ErrorCode::kValidationPersistency, -1, t.id, "computed " + std::to_string(computed_[t.id]) + " times");
      }
      if (t.model_output && where_[t.id] != Where::kDram) {
        add(ErrorCode::kValidationOutput, -1, t.id, "model output tile not in DRAM at the end");
      }
    }
  }

  std::map<int, HostTensor> read_outputs() const {
    std::map<int, HostTensor> out;
    for (size_t t = 0; t < graph_.tensors.size(); ++t) {
      const TensorSpec& spec = graph_.tensors[t];
      if (spec.kind != TensorKind::kModelOutput) continue;
      HostTensor v(spec.height, spec.width, spec.channels);
      const int64_t cb = padded_channel_bytes(spec.channels, spec.elem_bytes, m_.word_bytes);
      for (int64_t y = 0; y < v.h; ++y)
        for (int64_t x = 0; x < v.w; ++x)
          for (int64_t c = 0; c < v.c; ++c) {
            const int64_t at = dram_base_[t] + (y * v.w + x) * cb + c * spec.elem_bytes;
            v.at(y, x, c) = load_element(dram_.data() + at, spec.elem_bytes);
          }
      out[static_cast<int>(t)] = std::move(v);
    }
    return out;
  }

 private:
  void add(ErrorCode code, int tick, int tile, const std::string& what) {
    std::string msg = "tick " + std::to_string(tick);
    if (tile >= 0) msg += ", tile " + std::to_string(tile);
    r_.violations.push_back({code, tick, tile, msg + ": " + what});
  }

  int64_t dram_address(const ProgramTile& t) const {
    const TensorSpec& spec = graph_.tensors[t.tensor];
    if (spec.kind == TensorKind::kParameter) return dram_base_[t.tensor];
    return dram_base_[t.tensor] + t.lines.begin * line_bytes(spec, m_.word_bytes);
  }

  // Physical TCM address of byte i of a tile's slot, as the datamover sees it.
  int64_t physical_address(const ProgramTile& t, const Residency& r, int64_t i) const {
    const int64_t rel = t.offset + i - int64_t{t.low_bank} * m_.bank_bytes;
    return int64_t{r.physical[rel / m_.bank_bytes]} * m_.bank_bytes + rel % m_.bank_bytes;
  }

  // TCM address of byte i of a tile's slot, as the engines see it through the table.
  int64_t engine_address(const ProgramTile& t, int tick, int64_t i) {
    const Residency* r = a_.find(t.id, tick);
    if (!r) {
      if (bad_view_.insert({tick, t.id}).second) add(ErrorCode::kValidationAllocation, tick, t.id, "tile has no banks");
      return 0;
    }
    const int64_t rel = t.offset + i - int64_t{t.low_bank} * m_.bank_bytes;
    const int64_t vbank = r->virtual_low(tick) + rel / m_.bank_bytes;
    if (vbank < 0 || vbank >= m_.tcm_banks) {
      add(ErrorCode::kValidationAllocation, tick, t.id, "virtual bank out of range");
      return 0;
    }
    const int ph = table_[vbank];
    if (ph != r->physical[rel / m_.bank_bytes] && !bad_view_.count({tick, t.id})) {
      bad_view_.insert({tick, t.id});
      add(ErrorCode::kValidationAllocation, tick, t.id, "table maps the engine view to the wrong bank");
    }
    return int64_t{ph} * m_.bank_bytes + rel % m_.bank_bytes;
  }

  void apply_update(const V2pUpdate& u, int tick, int compute) {
    std::set<int> busy_v, busy_p;
    if (compute >= 0) {
      std::vector<int> tiles = p_.tiles[compute].deps;
      tiles.push_back(compute);
      for (int j : tiles) {
        const Residency* r = a_.find(j, tick);
        if (!r) continue;
        for (size_t k = 0; k < r->physical.size(); ++k) {
          busy_v.insert(r->virtual_low(tick) + static_cast<int>(k));
          busy_p.insert(r->physical[k]);
        }
      }
    }
    for (const auto& [v, ph] : u.entries) {
      if (busy_v.count(v) || busy_p.count(ph)) {
        add(ErrorCode::kValidationBankConflict, tick, compute, "table update on banks of the running compute");
      }
      table_[v] = ph;
    }
    std::vector<int> seen(table_.size(), 0);
    for (int ph : table_) {
      if (ph < 0 || ph >= m_.tcm_banks || seen[ph]++) {
        add(ErrorCode::kValidationAllocation, tick, -1, "table is not a permutation");
        break;
      }
    }
  }

  std::set<int> banks_of(int tile, int tick) const {
    std::set<int> out;
    if (const Residency* r = a_.find(tile, tick)) out.insert(r->physical.begin(), r->physical.end());
    return out;
  }

  void check_bus(int t) {
    const Tick& tick = s_.ticks[t];
    if (tick.compute < 0) return;
    std::set<int> busy = banks_of(tick.compute, t);
    for (int d : p_.tiles[tick.compute].deps) {
      const auto b = banks_of(d, t);
      busy.insert(b.begin(), b.end());
    }
    for (const auto& job : tick.dm) {
      for (int b : banks_of(job.tile, t)) {
        if (busy.count(b)) {
          add(ErrorCode::kValidationBankConflict, t, job.tile, std::string(to_string(job.kind)) + " on a bank the compute uses");
          break;
        }
      }
    }
  }

  void check_memory(int t) {
    const Tick& tick = s_.ticks[t];
    std::map<int, std::pair<int, int>> span;
    for (const auto& o : tick.occupancy) {
      const int tensor = p_.tiles[o.tile].tensor;
      auto [it, fresh] = span.try_emplace(tensor, o.low_bank, o.high_bank);
      if (!fresh) it->second = {std::min(it->second.first, o.low_bank), std::max(it->second.second, o.high_bank)};
    }
    const ReuseConfig* reuse = tick.compute >= 0 ? p_.reuse_for(tick.compute) : nullptr;
    int spans = 0;
    if (tick.compute >= 0) {
      // The whole output tile counts; a reusing one shares its saved banks with its input.
      const ProgramTile& c = p_.tiles[tick.compute];
      auto [it, fresh] = span.try_emplace(c.tensor, c.low_bank, c.high_bank);
      if (!fresh) it->second = {std::min(it->second.first, c.low_bank), std::max(it->second.second, c.high_bank)};
      if (reuse) spans -= reuse->banks_saved;
    }
    for (const auto& [tensor, lh] : span) spans += lh.second - lh.first + 1;
    if (spans > m_.tcm_banks) add(ErrorCode::kValidationCapacity, t, -1, "tensor spans exceed TCM capacity");

    std::map<int, int> owner;  // physical bank -> tensor
    MemorySample sample;
    sample.tick = t;
    std::set<int> tiles;
    for (const auto& o : tick.occupancy) tiles.insert(o.tile);
    if (tick.compute >= 0) tiles.insert(tick.compute);
    for (int j : tiles) {
      const ProgramTile& tile = p_.tiles[j];
      const Residency* r = a_.find(j, t);
      if (!r) {
        add(ErrorCode::kValidationAllocation, t, j, "resident tile without banks");
        continue;
      }
      for (int ph : r->physical) {
        auto [it, fresh] = owner.try_emplace(ph, tile.tensor);
        const bool shared = reuse && (j == tick.compute || j == reuse->overwritable.front());
        if (!fresh && it->second != tile.tensor && !shared) {
          add(ErrorCode::kValidationAllocation, t, j, "physical bank " + std::to_string(ph) + " held by two tensors");
        }
      }
    }
    std::map<int, std::set<int>> per_tensor;
    for (const auto& [ph, tensor] : owner) per_tensor[tensor].insert(ph);
    for (const auto& [tensor, banks] : per_tensor) sample.tensor_banks[tensor] = static_cast<int>(banks.size());
    sample.total = static_cast<int>(owner.size());
    if (sample.total > m_.tcm_banks) add(ErrorCode::kValidationCapacity, t, -1, "more banks in use than exist");
    r_.peak_banks = std::max(r_.peak_banks, sample.total);
    r_.memory.push_back(std::move(sample));
  }

  bool on_chip(int tile) const { return where_[tile] == Where::kTcm || where_[tile] == Where::kLtcm; }

  void run_job(int t, const DmJob& job, SimTick& st) {
    const ProgramTile& tile = p_.tiles[job.tile];
    const Residency* r = a_.find(tile.id, t);
    int64_t cycles = 0, bytes = 0;
    ++r_.n_dm;
    auto dram_cycles = [&](int64_t b) { return (b + m_.dram_bytes_per_cycle - 1) / m_.dram_bytes_per_cycle + m_.dm_fixed_overhead_cycles; };
    switch (job.kind) {
      case JobKind::kFetch:
      case JobKind::kLfetch: {
        if (on_chip(tile.id) && tile.dram_backed) where_[tile.id] = Where::kDram;
        if (where_[tile.id] != Where::kDram) add(ErrorCode::kValidationPersistency, t, tile.id, "fetch of a tile not in DRAM");
        if (!r) {
          add(ErrorCode::kValidationAllocation, t, tile.id, "fetch into unallocated banks");
          break;
        }
        const int64_t base = dram_address(tile);
        for (int64_t i = 0; i < tile.plain_bytes; ++i) tcm_[physical_address(tile, *r, i)] = dram_[base + i];
        bytes = tile.plain_bytes;
        if (job.kind == JobKind::kLfetch) {
          if (tile.dups.empty()) add(ErrorCode::kValidationPersistency, t, tile.id, "expanded fetch of a tile without overlap lines");
          fill_dups(tile, [&](int64_t from, int64_t to) { tcm_[physical_address(tile, *r, to)] = dram_[base + from]; });
          bytes = tile.slot_bytes;
        }
        cycles = dram_cycles(bytes);
        where_[tile.id] = job.kind == JobKind::kFetch ? Where::kTcm : Where::kLtcm;
        break;
      }
      case JobKind::kPush: {
        if (!on_chip(tile.id)) add(ErrorCode::kValidationPersistency, t, tile.id, "push of a tile not on chip");
        if (r) {
          const int64_t base = dram_address(tile);
          for (int64_t i = 0; i < tile.plain_bytes; ++i) dram_[base + i] = tcm_[physical_address(tile, *r, i)];
        } else {
          add(ErrorCode::kValidationAllocation, t, tile.id, "push from unallocated banks");
        }
        bytes = tile.plain_bytes;
        cycles = dram_cycles(bytes);
        where_[tile.id] = Where::kDram;
        break;
      }
      case JobKind::kLcopy: {
        if (where_[tile.id] != Where::kTcm) add(ErrorCode::kValidationPersistency, t, tile.id, "l-copy of a tile not in TCM");
        if (tile.dups.empty()) add(ErrorCode::kValidationPersistency, t, tile.id, "l-copy of a tile without overlap lines");
        if (r) {
          fill_dups(tile, [&](int64_t from, int64_t to) { tcm_[physical_address(tile, *r, to)] = tcm_[physical_address(tile, *r, from)]; });
        }
        bytes = tile.slot_bytes - tile.plain_bytes;
        cycles = (bytes + m_.tcm_copy_bytes_per_cycle - 1) / m_.tcm_copy_bytes_per_cycle + m_.dm_fixed_overhead_cycles;
        where_[tile.id] = Where::kLtcm;
        break;
      }
    }
    if (cycles != job.cycles) add(ErrorCode::kInternal, t, tile.id, "datamover cost differs from the schedule");
    r_.dm_traffic_bytes += bytes;
    st.l_dm += cycles;
  }

  // Calls copy(source byte, slot byte) for every duplicated line, both relative to the tile.
  template <class F>
  void fill_dups(const ProgramTile& tile, F copy) const {
    const int64_t lb = line_bytes(graph_.tensors[tile.tensor], m_.word_bytes);
    for (const auto& d : tile.dups) {
      const int64_t from = (d.line - tile.lines.begin) * lb;
      const int64_t to = tile.plain_bytes + d.slot * lb;
      for (int64_t i = 0; i < lb; ++i) copy(from + i, to + i);
    }
  }

  // Tile of `tensor` among the compute's dependencies holding line h.
  const ProgramTile* holder(const ProgramTile& c, int tensor, int64_t h) const {
    for (int d : c.deps) {
      const ProgramTile& t = p_.tiles[d];
      if (t.tensor == tensor && t.lines.contains(h)) return &t;
    }
    return nullptr;
  }

  void run_compute(int t, SimTick& st) {
    const ProgramTile& c = p_.tiles[s_.ticks[t].compute];
    if (!c.computed()) {
      add(ErrorCode::kValidationPersistency, t, c.id, "compute of a tile without a producer");
      return;
    }
    ++computed_[c.id];
    for (int d : c.deps) {
      const bool expanded = std::find(c.ltcm_deps.begin(), c.ltcm_deps.end(), d) != c.ltcm_deps.end();
      if (expanded ? where_[d] != Where::kLtcm : !on_chip(d)) {
        add(ErrorCode::kValidationDependency, t, c.id, "dependency " + std::to_string(d) + (expanded ? " not expanded in TCM" : " not in TCM"));
      }
    }
    const int layer = c.producer_layer;
    const LayerNode& node = graph_.layers[layer];
    const LayerGeometry g = graph_.geometry(layer);
    const Format f = lowered_.formats[layer];
    const TensorSpec& out_spec = graph_.tensors[c.tensor];
    const int64_t out_lb = line_bytes(out_spec, m_.word_bytes);
    const int64_t out_cb = padded_channel_bytes(out_spec.channels, out_spec.elem_bytes, m_.word_bytes);

    std::vector<int> acts;
    int param = -1;
    for (int tensor : graph_.layer_inputs[layer]) {
      if (graph_.tensors[tensor].kind == TensorKind::kParameter) param = tensor;
      else acts.push_back(tensor);
    }

    if (g.op == OpKind::kFormatSwitch) {
      std::vector<uint8_t> buf(c.plain_bytes, 0);
      for (int64_t h = c.lines.begin; h < c.lines.end; ++h) {
        const ProgramTile* src = holder(c, acts[0], h);
        if (!src) {
          add(ErrorCode::kValidationDependency, t, c.id, "input line " + std::to_string(h) + " missing");
          continue;
        }
        for (int64_t i = 0; i < out_lb; ++i) {
          buf[(h - c.lines.begin) * out_lb + i] = tcm_[engine_address(*src, t, (h - src->lines.begin) * out_lb + i)];
        }
      }
      for (int64_t i = 0; i < c.plain_bytes; ++i) tcm_[engine_address(c, t, i)] = buf[i];
      st.l_dm += (c.plain_bytes + m_.tcm_copy_bytes_per_cycle - 1) / m_.tcm_copy_bytes_per_cycle;
      return;
    }

    // Parameters, read through the engine view.
    std::vector<int32_t> weights, bias;
    int64_t taps = 0, w_in_c = 0;
    if (param >= 0) {
      const ProgramTile* pt = nullptr;
      for (int d : c.deps) {
        if (p_.tiles[d].tensor == param) pt = &p_.tiles[d];
      }
      if (!pt) {
        add(ErrorCode::kValidationDependency, t, c.id, "parameters missing");
        return;
      }
      const TensorSpec& ps = graph_.tensors[param];
      taps = ps.width;
      w_in_c = ps.channels;
      const int64_t n_w = ps.height * ps.width * ps.channels;
      weights.resize(n_w);
      for (int64_t i = 0; i < n_w; ++i) weights[i] = static_cast<int8_t>(tcm_[engine_address(*pt, t, i)]);
      bias.resize(ps.height);
      for (int64_t co = 0; co < ps.height; ++co) {
        uint8_t b[4];
        for (int k = 0; k < 4; ++k) b[k] = tcm_[engine_address(*pt, t, n_w + 4 * co + k)];
        bias[co] = load_element(b, 4);
      }
    }
    auto weight = [&](int64_t co, int64_t tap, int64_t ci) { return weights[(co * taps + tap) * w_in_c + ci]; };

    const auto slices = slice_engines(g, f, m_.n_engines, c.lines);
    int64_t busiest = 0;
    for (const auto& sl : slices) busiest = std::max(busiest, sl.ofmap_lines.size() * sl.ofmap_channels.size());
    for (const auto& sl : slices) {
      if (sl.ofmap_lines.size() * sl.ofmap_channels.size() != busiest && !sl.padded) {
        add(ErrorCode::kValidationLockstep, t, c.id, "engine " + std::to_string(sl.engine) + " runs a short partition");
      }
    }
    int64_t max_work = 0;
    for (const auto& sl : slices) {
      const int64_t lines = f == Format::kLine ? ceil_div(c.lines.size(), m_.n_engines) : sl.ofmap_lines.size();
      const int64_t chans = f == Format::kDepth ? ceil_div(g.out_c, m_.n_engines) : sl.ofmap_channels.size();
      max_work = std::max(max_work, lines * g.out_w * chans * g.macs_per_output);
    }
    st.l_c = (max_work + m_.macs_per_cycle() - 1) / m_.macs_per_cycle();

    std::vector<std::pair<int64_t, int32_t>> writes;  // byte offset in tile, value
    for (const auto& sl : slices) {
      if (sl.ofmap_lines.empty() || sl.ofmap_channels.empty()) continue;
      // Input window of this engine: [input][line - begin] -> pixel bytes start (TCM address per byte).
      std::vector<std::vector<HostTensor>> window;
      std::vector<HostTensor> inputs;
      for (int tensor : acts) {
        const TensorSpec& is = graph_.tensors[tensor];
        const int64_t lb = line_bytes(is, m_.word_bytes);
        const int64_t cb = padded_channel_bytes(is.channels, is.elem_bytes, m_.word_bytes);
        HostTensor win(sl.ifmap_lines.size(), is.width, is.channels);
        for (int64_t h = sl.ifmap_lines.begin; h < sl.ifmap_lines.end; ++h) {
          const ProgramTile* src = holder(c, tensor, h);
          if (!src) {
            add(ErrorCode::kValidationDependency, t, c.id, "input line " + std::to_string(h) + " missing");
            continue;
          }
          int64_t line_at = (h - src->lines.begin) * lb;
          bool shared = false;
          for (const auto& lower : slices) {
            shared = shared || (lower.engine < sl.engine && lower.ifmap_lines.contains(h));
          }
          if (f == Format::kLine && shared && tensor == graph_.activation_input(layer)) {
            bool found = false;
            for (const auto& d : src->dups) {
              if (d.consumer == c.id && d.engine == sl.engine && d.line == h) {
                line_at = src->plain_bytes + d.slot * lb;
                found = true;
              }
            }
            if (!found) add(ErrorCode::kValidationDependency, t, c.id, "overlap line " + std::to_string(h) + " not expanded");
          }
          for (int64_t x = 0; x < is.width; ++x) {
            for (int64_t ch = sl.ifmap_channels.begin; ch < sl.ifmap_channels.end; ++ch) {
              uint8_t b[4] = {0, 0, 0, 0};
              for (int k = 0; k < is.elem_bytes; ++k) {
                b[k] = tcm_[engine_address(*src, t, line_at + x * cb + ch * is.elem_bytes + k)];
              }
              win.at(h - sl.ifmap_lines.begin, x, ch) = load_element(b, is.elem_bytes);
            }
          }
        }
        inputs.push_back(std::move(win));
      }
      for (int64_t ho = sl.ofmap_lines.begin; ho < sl.ofmap_lines.end; ++ho) {
        for (int64_t wo = 0; wo < g.out_w; ++wo) {
          for (int64_t co = sl.ofmap_channels.begin; co < sl.ofmap_channels.end; ++co) {
            int64_t acc = 0;
            const int64_t hy = ho * g.stride - sl.ifmap_lines.begin;
            switch (g.op) {
              case OpKind::kConv:
              case OpKind::kFullyConnected:
                acc = bias[co];
                for (int fy = 0; fy < g.filter_h; ++fy)
                  for (int fx = 0; fx < g.filter_w; ++fx)
                    for (int64_t ci = 0; ci < g.in_c; ++ci)
                      acc += int64_t{weight(co, fy * g.filter_w + fx, ci)} * inputs[0].at(hy + fy, wo * g.stride + fx, ci);
                break;
              case OpKind::kDepthwise:
              case OpKind::kScalar:
                acc = bias[co];
                for (int fy = 0; fy < g.filter_h; ++fy)
                  for (int fx = 0; fx < g.filter_w; ++fx)
                    acc += int64_t{weight(co, fy * g.filter_w + fx, 0)} * inputs[0].at(hy + fy, wo * g.stride + fx, co);
                break;
              case OpKind::kElementwiseAdd:
                acc = int64_t{inputs[0].at(hy, wo, co)} * weight(co, 0, 0) + int64_t{inputs[1].at(hy, wo, co)} * weight(co, 1, 0) + bias[co];
                break;
              case OpKind::kHadamard:
                acc = int64_t{inputs[0].at(hy, wo, co)} * inputs[1].at(hy, wo, co);
                break;
              case OpKind::kFormatSwitch:
                break;
            }
            const int64_t at = (ho - c.lines.begin) * out_lb + wo * out_cb + co * out_spec.elem_bytes;
            writes.push_back({at, requantize(static_cast<int32_t>(acc), node.shift)});
          }
        }
      }
    }
    // Results land after every engine has read its inputs, padding bytes included.
    std::vector<uint8_t> buf(c.plain_bytes, 0);
    for (const auto& [at, v] : writes) store_element(buf.data() + at, out_spec.elem_bytes, v);
    for (int64_t i = 0; i < c.plain_bytes; ++i) tcm_[engine_address(c, t, i)] = buf[i];
  }

  const LoweredGraph& lowered_;
  const NetGraph& graph_;
  const TileProgram& p_;
  const TimedSchedule& s_;
  const AllocationResult& a_;
  const MachineModel& m_;
  std::vector<uint8_t> dram_, tcm_;
  std::vector<int64_t> dram_base_;
  std::vector<int> table_;
  std::vector<Where> where_;
  std::vector<int> computed_;
  std::set<std::pair<int, int>> bad_view_;
  SimReport r_;
};

const std::pair<const char*, ErrorCode> kChecks[] = {
    {"dependency", ErrorCode::kValidationDependency}, {"bank-conflict", ErrorCode::kValidationBankConflict},
    {"capacity", ErrorCode::kValidationCapacity},     {"lockstep", ErrorCode::kValidationLockstep},
    {"output", ErrorCode::kValidationOutput},         {"persistency", ErrorCode::kValidationPersistency},
    {"allocation", ErrorCode::kValidationAllocation}, {"latency-model", ErrorCode::kInternal},
};

}  // namespace

SimResult simulate(const LoweredGraph& lowered, const TileProgram& p, const TimedSchedule& s, const AllocationResult& a,
                   const MachineModel& m, const NetworkData& data) {
  Machine machine(lowered, p, s, a, m);
  machine.load_inputs(data);
  machine.run();
  SimResult out;
  out.outputs = machine.read_outputs();
  out.report = std::move(machine.report());
  for (const auto& [name, code] : kChecks) {
    bool ok = true;
    for (const auto& v : out.report.violations) ok = ok && v.code != code;
    out.report.checks.push_back({name, ok});
  }
  return out;
}

}  // namespace npucp

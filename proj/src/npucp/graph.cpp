// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#include "npucp/graph.hpp"

#include <algorithm>
#include <cstdio>
#include <queue>

namespace npucp {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOk: return "ok";
    case ErrorCode::kInternal: return "internal";
    case ErrorCode::kUsage: return "usage";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kStructural: return "structural";
    case ErrorCode::kUnsupportedOp: return "unsupported-op";
    case ErrorCode::kInfeasibleLayer: return "infeasible-layer";
    case ErrorCode::kSolver: return "solver";
    case ErrorCode::kContract: return "contract";
    case ErrorCode::kValidationDependency: return "validation-dependency";
    case ErrorCode::kValidationBankConflict: return "validation-bank-conflict";
    case ErrorCode::kValidationCapacity: return "validation-capacity";
    case ErrorCode::kValidationLockstep: return "validation-lockstep";
    case ErrorCode::kValidationOutput: return "validation-output";
    case ErrorCode::kValidationPersistency: return "validation-persistency";
    case ErrorCode::kValidationAllocation: return "validation-allocation";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

namespace {

struct OpName {
  OpKind op;
  const char* name;
};

constexpr OpName kOpNames[] = {
    {OpKind::kConv, "conv"},
    {OpKind::kDepthwise, "depthwise"},
    {OpKind::kFullyConnected, "fully-connected"},
    {OpKind::kElementwiseAdd, "elementwise-add"},
    {OpKind::kHadamard, "hadamard"},
    {OpKind::kScalar, "scalar"},
    {OpKind::kFormatSwitch, "format-switch"},
};

bool is_streamed(TensorKind k) { return k != TensorKind::kParameter; }

}  // namespace

const char* to_string(TensorKind kind) {
  switch (kind) {
    case TensorKind::kActivation: return "activation";
    case TensorKind::kParameter: return "parameter";
    case TensorKind::kModelInput: return "model-input";
    case TensorKind::kModelOutput: return "model-output";
  }
  return "?";
}

const char* to_string(OpKind op) {
  for (const auto& e : kOpNames) {
    if (e.op == op) return e.name;
  }
  return "?";
}

TensorKind tensor_kind_from_string(const std::string& s, const std::string& path) {
  if (s == "activation") return TensorKind::kActivation;
  if (s == "parameter") return TensorKind::kParameter;
  if (s == "model-input") return TensorKind::kModelInput;
  if (s == "model-output") return TensorKind::kModelOutput;
  fail(ErrorCode::kParse, path + ": unknown tensor kind '" + s + "'");
}

OpKind op_from_string(const std::string& s, const std::string& path) {
  for (const auto& e : kOpNames) {
    if (s == e.name) return e.op;
  }
  fail(ErrorCode::kUnsupportedOp, path + ": unsupported op '" + s + "'");
}

bool is_conv_like(OpKind op) {
  return op == OpKind::kConv || op == OpKind::kFullyConnected;
}

bool has_params(OpKind op) {
  return op == OpKind::kConv || op == OpKind::kFullyConnected ||
         op == OpKind::kDepthwise || op == OpKind::kScalar ||
         op == OpKind::kElementwiseAdd;
}

// Activation inputs plus the parameter tensor when present.
int expected_input_count(OpKind op) {
  switch (op) {
    case OpKind::kConv:
    case OpKind::kFullyConnected:
    case OpKind::kDepthwise:
    case OpKind::kScalar:
      return 2;
    case OpKind::kElementwiseAdd:
      return 3;
    case OpKind::kHadamard:
      return 2;
    case OpKind::kFormatSwitch:
      return 1;
  }
  return 0;
}

bool LayerGeometry::channel_local() const { return !is_conv_like(op); }

int64_t padded_channel_bytes(int64_t channels, int elem_bytes, int64_t word_bytes) {
  return round_up(channels * elem_bytes, word_bytes);
}

int64_t line_bytes(const TensorSpec& t, int64_t word_bytes) {
  return t.width * padded_channel_bytes(t.channels, t.elem_bytes, word_bytes);
}

int64_t param_payload_bytes(const TensorSpec& t) {
  return t.height * t.width * t.channels * t.elem_bytes + 4 * t.height;
}

int64_t tensor_bytes(const TensorSpec& t, int64_t word_bytes) {
  if (t.kind == TensorKind::kParameter) {
    return round_up(param_payload_bytes(t), word_bytes);
  }
  return t.height * line_bytes(t, word_bytes);
}

int NetGraph::tensor_index(const std::string& id) const {
  auto it = tensor_ids_.find(id);
  return it == tensor_ids_.end() ? -1 : it->second;
}

int NetGraph::layer_index(const std::string& id) const {
  auto it = layer_ids_.find(id);
  return it == layer_ids_.end() ? -1 : it->second;
}

int NetGraph::activation_input(int layer) const {
  for (int t : layer_inputs[layer]) {
    if (is_streamed(tensors[t].kind)) return t;
  }
  return -1;
}

int NetGraph::param_input(int layer) const {
  for (int t : layer_inputs[layer]) {
    if (tensors[t].kind == TensorKind::kParameter) return t;
  }
  return -1;
}

LayerGeometry NetGraph::geometry(int layer) const {
  const LayerNode& l = layers[layer];
  const TensorSpec& in = tensors[activation_input(layer)];
  const TensorSpec& out = tensors[layer_output[layer]];
  LayerGeometry g;
  g.op = l.op;
  g.in_h = in.height;
  g.in_w = in.width;
  g.in_c = in.channels;
  g.out_h = out.height;
  g.out_w = out.width;
  g.out_c = out.channels;
  g.filter_h = l.filter_h;
  g.filter_w = l.filter_w;
  g.stride = l.stride;
  g.in_elem_bytes = in.elem_bytes;
  switch (l.op) {
    case OpKind::kConv:
    case OpKind::kFullyConnected:
      g.macs_per_output = int64_t{l.filter_h} * l.filter_w * in.channels;
      break;
    case OpKind::kDepthwise:
    case OpKind::kScalar:
      g.macs_per_output = int64_t{l.filter_h} * l.filter_w;
      break;
    case OpKind::kElementwiseAdd:
      g.macs_per_output = 2;
      break;
    case OpKind::kHadamard:
      g.macs_per_output = 1;
      break;
    case OpKind::kFormatSwitch:
      g.macs_per_output = 0;
      break;
  }
  return g;
}

namespace {

[[noreturn]] void structural(const std::string& msg) { fail(ErrorCode::kStructural, msg); }

void check_same_shape(const TensorSpec& a, const TensorSpec& b, const std::string& where) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    structural(where + ": shape of '" + a.id + "' does not match '" + b.id + "'");
  }
}

void check_params(const TensorSpec& p, int64_t rows, int64_t taps, int64_t cols,
                  const std::string& where) {
  if (p.height != rows || p.width != taps || p.channels != cols) {
    structural(where + ": parameter tensor '" + p.id + "' must be " + std::to_string(rows) +
               "x" + std::to_string(taps) + "x" + std::to_string(cols));
  }
  if (p.elem_bytes != 1) structural(where + ": parameter tensor '" + p.id + "' must be int8");
}

}  // namespace

void NetGraph::validate() {
  tensor_ids_.clear();
  layer_ids_.clear();
  for (size_t i = 0; i < tensors.size(); ++i) {
    const TensorSpec& t = tensors[i];
    const std::string where = "tensors[" + std::to_string(i) + "]";
    if (t.id.empty()) fail(ErrorCode::kParse, where + ".id: empty");
    if (t.height < 1 || t.width < 1 || t.channels < 1) {
      fail(ErrorCode::kParse, where + ": dimensions must be >= 1");
    }
    if (t.elem_bytes != 1 && t.elem_bytes != 2) {
      fail(ErrorCode::kParse, where + ".elem_bytes: must be 1 or 2");
    }
    if (!tensor_ids_.emplace(t.id, static_cast<int>(i)).second) {
      structural("duplicate tensor id '" + t.id + "'");
    }
  }
  for (size_t i = 0; i < layers.size(); ++i) {
    const LayerNode& l = layers[i];
    const std::string where = "layers[" + std::to_string(i) + "]";
    if (l.id.empty()) fail(ErrorCode::kParse, where + ".id: empty");
    if (l.stride < 1) fail(ErrorCode::kParse, where + ".stride: must be >= 1");
    if (l.filter_h < 1 || l.filter_w < 1) fail(ErrorCode::kParse, where + ": filter dims must be >= 1");
    if (!layer_ids_.emplace(l.id, static_cast<int>(i)).second) {
      structural("duplicate layer id '" + l.id + "'");
    }
    for (const auto& in : l.inputs) {
      if (!tensor_ids_.count(in)) structural("layer '" + l.id + "' consumes undeclared tensor '" + in + "'");
    }
    if (!tensor_ids_.count(l.output)) {
      structural("layer '" + l.id + "' produces undeclared tensor '" + l.output + "'");
    }
  }

  // Producers.
  const int nt = static_cast<int>(tensors.size());
  const int nl = static_cast<int>(layers.size());
  std::vector<int> prod(nt, -1);
  for (int i = 0; i < nl; ++i) {
    int out = tensor_ids_.at(layers[i].output);
    if (prod[out] != -1) structural("tensor '" + layers[i].output + "' has more than one producer");
    prod[out] = i;
  }
  for (int t = 0; t < nt; ++t) {
    const auto k = tensors[t].kind;
    const bool produced = prod[t] != -1;
    if ((k == TensorKind::kParameter || k == TensorKind::kModelInput) && produced) {
      structural("tensor '" + tensors[t].id + "' of kind " + to_string(k) + " cannot be produced by a layer");
    }
    if ((k == TensorKind::kActivation || k == TensorKind::kModelOutput) && !produced) {
      structural("tensor '" + tensors[t].id + "' has no producer");
    }
  }

  // Stable topological order (Kahn, smallest original index first).
  std::vector<std::vector<int>> succ(nl);
  std::vector<int> indeg(nl, 0);
  for (int i = 0; i < nl; ++i) {
    std::vector<int> preds;
    for (const auto& in : layers[i].inputs) {
      int p = prod[tensor_ids_.at(in)];
      if (p == i) structural("cycle: layer '" + layers[i].id + "' consumes its own output");
      if (p >= 0) preds.push_back(p);
    }
    std::sort(preds.begin(), preds.end());
    preds.erase(std::unique(preds.begin(), preds.end()), preds.end());
    for (int p : preds) {
      succ[p].push_back(i);
      ++indeg[i];
    }
  }
  std::priority_queue<int, std::vector<int>, std::greater<int>> ready;
  for (int i = 0; i < nl; ++i) {
    if (indeg[i] == 0) ready.push(i);
  }
  std::vector<int> order;
  while (!ready.empty()) {
    int i = ready.top();
    ready.pop();
    order.push_back(i);
    for (int s : succ[i]) {
      if (--indeg[s] == 0) ready.push(s);
    }
  }
  if (static_cast<int>(order.size()) != nl) {
    for (int i = 0; i < nl; ++i) {
      if (indeg[i] > 0) structural("cycle in layer graph involving layer '" + layers[i].id + "'");
    }
  }
  std::vector<LayerNode> sorted;
  sorted.reserve(nl);
  for (int i : order) sorted.push_back(layers[i]);
  layers = std::move(sorted);
  layer_ids_.clear();
  for (int i = 0; i < nl; ++i) layer_ids_[layers[i].id] = i;

  layer_inputs.assign(nl, {});
  layer_output.assign(nl, -1);
  producer.assign(nt, -1);
  consumers.assign(nt, {});
  for (int i = 0; i < nl; ++i) {
    LayerNode& l = layers[i];
    for (const auto& in : l.inputs) {
      int t = tensor_ids_.at(in);
      layer_inputs[i].push_back(t);
      if (consumers[t].empty() || consumers[t].back() != i) consumers[t].push_back(i);
    }
    layer_output[i] = tensor_ids_.at(l.output);
    producer[layer_output[i]] = i;
  }

  // Per-op shape rules.
  for (int i = 0; i < nl; ++i) {
    LayerNode& l = layers[i];
    const std::string where = "layer '" + l.id + "'";
    if (static_cast<int>(l.inputs.size()) != expected_input_count(l.op)) {
      structural(where + ": " + to_string(l.op) + " expects " +
                 std::to_string(expected_input_count(l.op)) + " inputs");
    }
    std::vector<const TensorSpec*> acts;
    const TensorSpec* par = nullptr;
    for (int t : layer_inputs[i]) {
      if (tensors[t].kind == TensorKind::kParameter) {
        if (par) structural(where + ": more than one parameter tensor");
        par = &tensors[t];
      } else {
        acts.push_back(&tensors[t]);
      }
    }
    const TensorSpec& out = tensors[layer_output[i]];
    const bool needs_params = has_params(l.op);
    if (needs_params != (par != nullptr)) {
      structural(where + (needs_params ? ": missing parameter tensor" : ": unexpected parameter tensor"));
    }
    const size_t n_act = (l.op == OpKind::kElementwiseAdd || l.op == OpKind::kHadamard) ? 2 : 1;
    if (acts.size() != n_act) structural(where + ": wrong number of activation inputs");
    const TensorSpec& in = *acts[0];
    if (l.op == OpKind::kFormatSwitch && out.elem_bytes != in.elem_bytes) {
      structural(where + ": format-switch cannot change element width");
    }
    if (!is_conv_like(l.op) && l.op != OpKind::kDepthwise) {
      if (l.filter_h != 1 || l.filter_w != 1 || l.stride != 1) {
        structural(where + ": " + to_string(l.op) + " requires a 1x1 filter with stride 1");
      }
    }
    if (l.op == OpKind::kFullyConnected && (l.filter_h != 1 || l.filter_w != 1)) {
      structural(where + ": fully-connected requires a 1x1 filter");
    }
    if (in.height < l.filter_h || in.width < l.filter_w) {
      structural(where + ": filter larger than input");
    }
    const int64_t oh = (in.height - l.filter_h) / l.stride + 1;
    const int64_t ow = (in.width - l.filter_w) / l.stride + 1;
    if (out.height != oh || out.width != ow) {
      structural(where + ": output '" + out.id + "' must be " + std::to_string(oh) + "x" +
                 std::to_string(ow) + " spatially");
    }
    switch (l.op) {
      case OpKind::kConv:
      case OpKind::kFullyConnected:
        check_params(*par, out.channels, int64_t{l.filter_h} * l.filter_w, in.channels, where);
        break;
      case OpKind::kDepthwise:
      case OpKind::kScalar:
        if (out.channels != in.channels) structural(where + ": channel count must be preserved");
        check_params(*par, out.channels, int64_t{l.filter_h} * l.filter_w, 1, where);
        break;
      case OpKind::kElementwiseAdd:
        check_same_shape(*acts[0], *acts[1], where);
        check_same_shape(in, out, where);
        check_params(*par, out.channels, 2, 1, where);
        break;
      case OpKind::kHadamard:
        check_same_shape(*acts[0], *acts[1], where);
        check_same_shape(in, out, where);
        break;
      case OpKind::kFormatSwitch:
        check_same_shape(in, out, where);
        break;
    }
    const int64_t macs = out.height * out.width * out.channels * geometry(i).macs_per_output;
    if (l.macs != 0 && l.macs != macs) {
      structural(where + ": stored macs " + std::to_string(l.macs) + " != " + std::to_string(macs));
    }
    l.macs = macs;
  }
}

namespace {

template <typename T>
T get_field(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(ErrorCode::kParse, path + "." + key + ": missing");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::kParse, path + "." + key + ": wrong type");
  }
}

template <typename T>
T get_optional(const json& obj, const char* key, T fallback, const std::string& path) {
  if (!obj.contains(key)) return fallback;
  return get_field<T>(obj, key, path);
}

}  // namespace

NetGraph parse_model_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::kParse, "$: expected an object");
  const int version = get_field<int>(doc, "version", "$");
  if (version != 1) fail(ErrorCode::kParse, "$.version: unsupported version " + std::to_string(version));
  if (!doc.contains("tensors") || !doc["tensors"].is_array()) fail(ErrorCode::kParse, "$.tensors: expected an array");
  if (!doc.contains("layers") || !doc["layers"].is_array()) fail(ErrorCode::kParse, "$.layers: expected an array");
  NetGraph g;
  const json& ts = doc["tensors"];
  for (size_t i = 0; i < ts.size(); ++i) {
    const std::string path = "$.tensors[" + std::to_string(i) + "]";
    if (!ts[i].is_object()) fail(ErrorCode::kParse, path + ": expected an object");
    TensorSpec t;
    t.id = get_field<std::string>(ts[i], "id", path);
    t.height = get_field<int64_t>(ts[i], "h", path);
    t.width = get_field<int64_t>(ts[i], "w", path);
    t.channels = get_field<int64_t>(ts[i], "c", path);
    t.elem_bytes = get_field<int>(ts[i], "elem_bytes", path);
    t.kind = tensor_kind_from_string(get_field<std::string>(ts[i], "kind", path), path + ".kind");
    if (t.height < 1) fail(ErrorCode::kParse, path + ".h: must be >= 1");
    if (t.width < 1) fail(ErrorCode::kParse, path + ".w: must be >= 1");
    if (t.channels < 1) fail(ErrorCode::kParse, path + ".c: must be >= 1");
    if (t.elem_bytes != 1 && t.elem_bytes != 2) fail(ErrorCode::kParse, path + ".elem_bytes: must be 1 or 2");
    g.tensors.push_back(std::move(t));
  }
  const json& ls = doc["layers"];
  for (size_t i = 0; i < ls.size(); ++i) {
    const std::string path = "$.layers[" + std::to_string(i) + "]";
    if (!ls[i].is_object()) fail(ErrorCode::kParse, path + ": expected an object");
    LayerNode l;
    l.id = get_field<std::string>(ls[i], "id", path);
    l.op = op_from_string(get_field<std::string>(ls[i], "op", path), path + ".op");
    l.stride = get_optional<int>(ls[i], "stride", 1, path);
    l.filter_h = get_optional<int>(ls[i], "fh", 1, path);
    l.filter_w = get_optional<int>(ls[i], "fw", 1, path);
    l.shift = get_optional<int>(ls[i], "shift", 0, path);
    l.macs = get_optional<int64_t>(ls[i], "macs", 0, path);
    if (l.stride < 1) fail(ErrorCode::kParse, path + ".stride: must be >= 1");
    if (l.filter_h < 1) fail(ErrorCode::kParse, path + ".fh: must be >= 1");
    if (l.filter_w < 1) fail(ErrorCode::kParse, path + ".fw: must be >= 1");
    if (l.shift < 0 || l.shift > 31) fail(ErrorCode::kParse, path + ".shift: must be in [0, 31]");
    l.inputs = get_field<std::vector<std::string>>(ls[i], "inputs", path);
    l.output = get_field<std::string>(ls[i], "output", path);
    g.layers.push_back(std::move(l));
  }
  g.validate();
  return g;
}

NetGraph parse_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParse, std::string("$: malformed JSON (") + e.what() + ")");
  }
  return parse_model_json(doc);
}

json model_to_json(const NetGraph& graph) {
  json doc;
  doc["version"] = 1;
  json ts = json::array();
  for (const auto& t : graph.tensors) {
    ts.push_back({{"id", t.id},
                  {"h", t.height},
                  {"w", t.width},
                  {"c", t.channels},
                  {"elem_bytes", t.elem_bytes},
                  {"kind", to_string(t.kind)}});
  }
  json ls = json::array();
  for (const auto& l : graph.layers) {
    json j = {{"id", l.id},
              {"op", to_string(l.op)},
              {"stride", l.stride},
              {"fh", l.filter_h},
              {"fw", l.filter_w},
              {"inputs", l.inputs},
              {"output", l.output},
              {"macs", l.macs}};
    if (l.shift != 0) j["shift"] = l.shift;
    ls.push_back(std::move(j));
  }
  doc["tensors"] = std::move(ts);
  doc["layers"] = std::move(ls);
  return doc;
}

std::string serialize_model(const NetGraph& graph) { return model_to_json(graph).dump(2) + "\n"; }

uint64_t graph_hash(const NetGraph& graph) { return fnv1a64(model_to_json(graph).dump()); }

}  // namespace npucp

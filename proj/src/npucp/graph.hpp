// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "npucp/common.hpp"

namespace npucp {

using json = nlohmann::json;

enum class TensorKind { kActivation, kParameter, kModelInput, kModelOutput };

enum class OpKind {
  kConv,
  kDepthwise,
  kFullyConnected,
  kElementwiseAdd,
  kHadamard,
  kScalar,
  kFormatSwitch,
};

const char* to_string(TensorKind kind);
const char* to_string(OpKind op);
TensorKind tensor_kind_from_string(const std::string& s, const std::string& path);
OpKind op_from_string(const std::string& s, const std::string& path);

// HWC layout. Channels are padded to a word multiple when sizing bytes.
struct TensorSpec {
  std::string id;
  int64_t height = 1;
  int64_t width = 1;
  int64_t channels = 1;
  int elem_bytes = 1;
  TensorKind kind = TensorKind::kActivation;

  bool operator==(const TensorSpec&) const = default;
};

struct LayerNode {
  std::string id;
  OpKind op = OpKind::kConv;
  int stride = 1;
  int filter_h = 1;
  int filter_w = 1;
  // Right shift applied to the int32 accumulator before saturation.
  int shift = 0;
  std::vector<std::string> inputs;
  std::string output;
  int64_t macs = 0;

  bool operator==(const LayerNode&) const = default;
};

// Shapes of one layer with tensor indices resolved.
struct LayerGeometry {
  OpKind op = OpKind::kConv;
  int64_t in_h = 0, in_w = 0, in_c = 0;
  int64_t out_h = 0, out_w = 0, out_c = 0;
  int filter_h = 1, filter_w = 1, stride = 1;
  int in_elem_bytes = 1;
  int64_t macs_per_output = 0;  // per output element

  // Channel-local ops (depthwise, scalar, elementwise) read only their own channel.
  bool channel_local() const;
};

class NetGraph {
 public:
  std::vector<TensorSpec> tensors;
  std::vector<LayerNode> layers;  // topologically ordered after validate()

  // Resolved after validate().
  std::vector<std::vector<int>> layer_inputs;  // tensor indices
  std::vector<int> layer_output;
  std::vector<int> producer;                   // per tensor, -1 if none
  std::vector<std::vector<int>> consumers;     // per tensor, layer indices ascending

  int tensor_index(const std::string& id) const;
  int layer_index(const std::string& id) const;

  // Resolves ids, orders layers topologically, checks shapes and recomputes macs.
  void validate();

  LayerGeometry geometry(int layer) const;
  // Main streamed input (first activation-like input).
  int activation_input(int layer) const;
  int param_input(int layer) const;  // -1 if the op has no parameters

 private:
  std::map<std::string, int> tensor_ids_;
  std::map<std::string, int> layer_ids_;
};

NetGraph parse_model(const std::string& text);
NetGraph parse_model_json(const json& doc);
json model_to_json(const NetGraph& graph);
std::string serialize_model(const NetGraph& graph);
uint64_t graph_hash(const NetGraph& graph);

int64_t padded_channel_bytes(int64_t channels, int elem_bytes, int64_t word_bytes);
int64_t line_bytes(const TensorSpec& t, int64_t word_bytes);
int64_t tensor_bytes(const TensorSpec& t, int64_t word_bytes);
// Weights (int8) followed by one int32 bias word per output channel.
int64_t param_payload_bytes(const TensorSpec& t);

bool is_conv_like(OpKind op);
bool has_params(OpKind op);
int expected_input_count(OpKind op);

}  // namespace npucp

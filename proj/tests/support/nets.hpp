#pragma once

#include <string>

#include "npucp/graph.hpp"
#include "npucp/parallelism.hpp"

// One layer from model input "x" to model output "y" with parameters "w" when the op has them.
inline npucp::NetGraph single_layer(const std::string& op, int64_t h, int64_t w, int64_t c, int64_t out_c, int fh,
                                    int fw, int stride) {
  using npucp::json;
  const int64_t oh = (h - fh) / stride + 1;
  const int64_t ow = (w - fw) / stride + 1;
  const bool local = op == "depthwise";
  json doc = {{"version", 1},
              {"tensors",
               {{{"id", "x"}, {"h", h}, {"w", w}, {"c", c}, {"elem_bytes", 1}, {"kind", "model-input"}},
                {{"id", "w"}, {"h", out_c}, {"w", fh * fw}, {"c", local ? 1 : c}, {"elem_bytes", 1}, {"kind", "parameter"}},
                {{"id", "y"}, {"h", oh}, {"w", ow}, {"c", out_c}, {"elem_bytes", 1}, {"kind", "model-output"}}}},
              {"layers",
               {{{"id", "l0"}, {"op", op}, {"stride", stride}, {"fh", fh}, {"fw", fw}, {"inputs", {"x", "w"}},
                 {"output", "y"}}}}};
  return npucp::parse_model_json(doc);
}

inline npucp::LoweredGraph with_formats(const npucp::NetGraph& g, npucp::Format f) {
  return {g, std::vector<npucp::Format>(g.layers.size(), f)};
}

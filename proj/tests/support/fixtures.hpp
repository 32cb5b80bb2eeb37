#pragma once

#include <fstream>
#include <sstream>
#include <string>

#ifndef NPUCP_SOURCE_DIR
#error "NPUCP_SOURCE_DIR must be defined"
#endif

inline std::string fixture_path(const std::string& name) { return std::string(NPUCP_SOURCE_DIR) + "/fixtures/" + name; }
inline std::string config_path(const std::string& name) { return std::string(NPUCP_SOURCE_DIR) + "/configs/" + name; }

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

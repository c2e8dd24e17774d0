#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace cprpca::config {

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// Minimal INI reader: "[section]" headers, "key = value" pairs, '#' or ';'
// comments. Pairs before any header land in section "".
using Sections = std::map<std::string, std::vector<KeyValue>>;
Sections parse_ini(std::istream& in, const std::string& name = "<config>");
Sections load_ini(const std::string& path);

double to_double(const KeyValue& kv, const std::string& name);
int to_int(const KeyValue& kv, const std::string& name);

}  // namespace cprpca::config

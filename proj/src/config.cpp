#include "cprpca/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>

#include "cprpca/error.hpp"

namespace cprpca::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Sections parse_ini(std::istream& in, const std::string& name) {
  Sections out;
  std::string section;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find_first_of("#;");
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(name, lineno, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      out[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(name, lineno, "expected key = value");
    KeyValue kv{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno};
    if (kv.key.empty()) throw ParseError(name, lineno, "empty key");
    out[section].push_back(std::move(kv));
  }
  return out;
}

Sections load_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  return parse_ini(in, path);
}

double to_double(const KeyValue& kv, const std::string& name) {
  double v = 0.0;
  const auto* end = kv.value.data() + kv.value.size();
  auto [ptr, ec] = std::from_chars(kv.value.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ParseError(name, kv.line, "'" + kv.key + "' expects a number");
  return v;
}

int to_int(const KeyValue& kv, const std::string& name) {
  int v = 0;
  const auto* end = kv.value.data() + kv.value.size();
  auto [ptr, ec] = std::from_chars(kv.value.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ParseError(name, kv.line, "'" + kv.key + "' expects an integer");
  return v;
}

}  // namespace cprpca::config

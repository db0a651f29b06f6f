#ifndef PPGGLU_CONFIG_HPP
#define PPGGLU_CONFIG_HPP

#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ppgglu/errors.hpp"

namespace ppgglu {

// Flat `key = value` text with '#' comments; the one config syntax used by
// the CLI config file and the model-file header.
namespace kv {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::map<std::string, std::string> parse(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidConfig("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw InvalidConfig("line " + std::to_string(lineno) + ": empty key");
    if (out.count(key))
      throw InvalidConfig("line " + std::to_string(lineno) + ": duplicate key '" +
                          key + "'");
    out[key] = value;
  }
  return out;
}

inline std::string serialize(const std::map<std::string, std::string>& m) {
  std::string out;
  for (const auto& [k, v] : m) out += k + " = " + v + "\n";
  return out;
}

inline double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw InvalidConfig("key '" + key + "': cannot parse number '" + value + "'");
  }
}

inline long long to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw InvalidConfig("key '" + key + "': cannot parse integer '" + value + "'");
  }
}

inline std::vector<std::size_t> to_size_list(const std::string& key,
                                             const std::string& value) {
  std::vector<std::size_t> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    const long long v = to_int(key, trim(item));
    if (v < 1) throw InvalidConfig("key '" + key + "': entries must be >= 1");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw InvalidConfig("key '" + key + "': empty list");
  return out;
}

inline std::vector<double> to_double_list(const std::string& key,
                                          const std::string& value) {
  std::vector<double> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out << ',';
    out << v[i];
  }
  return out.str();
}

}  // namespace kv

}  // namespace ppgglu

#endif  // PPGGLU_CONFIG_HPP

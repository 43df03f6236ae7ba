#include "json_arrays.hpp"

#include <fstream>
#include <sstream>

namespace densefit::detail {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << doc.dump() << '\n';
}

long long get_count(const json& doc, const char* name) {
  auto it = doc.find(name);
  if (it == doc.end() || !it->is_number_integer()) {
    throw ParseError(std::string("missing or non-integer field '") + name + "'");
  }
  const long long v = it->get<long long>();
  if (v < 0) {
    throw ParseError(std::string("field '") + name + "' is negative");
  }
  return v;
}

namespace {

const json& get_array(const json& doc, const char* name, std::size_t expected) {
  auto it = doc.find(name);
  if (it == doc.end() || !it->is_array()) {
    throw ParseError(std::string("missing array '") + name + "'");
  }
  if (it->size() != expected) {
    std::ostringstream msg;
    msg << "array '" << name << "' has " << it->size() << " entries, expected " << expected;
    throw ParseError(msg.str());
  }
  return *it;
}

}  // namespace

std::vector<double> get_doubles(const json& doc, const char* name, std::size_t expected) {
  const json& arr = get_array(doc, name, expected);
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& v : arr) {
    if (!v.is_number()) {
      throw ParseError(std::string("array '") + name + "' has a non-numeric entry");
    }
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<int> get_ints(const json& doc, const char* name, std::size_t expected) {
  const json& arr = get_array(doc, name, expected);
  std::vector<int> out;
  out.reserve(expected);
  for (const auto& v : arr) {
    if (!v.is_number_integer()) {
      throw ParseError(std::string("array '") + name + "' has a non-integer entry");
    }
    out.push_back(v.get<int>());
  }
  return out;
}

Eigen::MatrixXd unflatten(const std::vector<double>& values, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values[static_cast<std::size_t>(r * cols + c)];
  return m;
}

}  // namespace densefit::detail

#pragma once

#include "densefit/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace densefit::detail {

using nlohmann::json;

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& doc);

// Header integers and named numeric arrays. Flat arrays are row-major.
long long get_count(const json& doc, const char* name);
std::vector<double> get_doubles(const json& doc, const char* name, std::size_t expected);
std::vector<int> get_ints(const json& doc, const char* name, std::size_t expected);

// Row-major flattening of an Eigen matrix and the inverse.
template <typename Derived>
json flatten(const Eigen::MatrixBase<Derived>& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

Eigen::MatrixXd unflatten(const std::vector<double>& values, Eigen::Index rows, Eigen::Index cols);

}  // namespace densefit::detail

#pragma once

// Shared JSON helpers for the file readers. Internal to the core library.

#include "goat/error.hpp"
#include "goat/graph.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace goat::detail {

using nlohmann::json;

inline const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw parse_error(where + ": missing field \"" + key + "\"");
  return *it;
}

inline int as_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw parse_error(where + ": expected integer");
  return j.get<int>();
}

inline double as_double(const json& j, const std::string& where) {
  if (!j.is_number()) throw parse_error(where + ": expected number");
  return j.get<double>();
}

inline Matrix parse_matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw parse_error(where + ": expected non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array()) throw parse_error(where + "[0]: expected array");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[r];
    const std::string rw = where + "[" + std::to_string(r) + "]";
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw parse_error(rw + ": expected array of " + std::to_string(cols) + " numbers");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[c].is_number()) throw parse_error(rw + "[" + std::to_string(c) + "]: expected number");
      m(r, c) = row[c].get<double>();
    }
  }
  return m;
}

inline Vector parse_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw parse_error(where + ": expected array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = as_double(j[i], where + "[" + std::to_string(i) + "]");
  return v;
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename Derived>
json vector_to_json(const Eigen::DenseBase<Derived>& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline json parse_text(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw parse_error(where + ": " + e.what());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out << text;
  if (!out) throw io_error("write failed for " + path.string());
}

}  // namespace goat::detail

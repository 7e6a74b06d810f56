#include "output.hpp"

#include <charconv>
#include <cmath>

namespace boundrat::cli {

std::string format_real(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_csv(std::ostream& out, const Table& table) {
  for (std::size_t c = 0; c < table.names.size(); ++c) {
    if (c > 0) out << ',';
    out << csv_field(table.names[c]);
  }
  out << '\n';
  for (std::size_t r = 0; r < table.rows(); ++r) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      if (c > 0) out << ',';
      out << format_real(table.columns[c][r]);
    }
    out << '\n';
  }
}

void write_json(std::ostream& out, const Table& table) {
  Json doc = Json::object();
  Json columns = Json::object();
  for (std::size_t c = 0; c < table.names.size(); ++c) {
    Json values = Json::array();
    for (double v : table.columns[c]) {
      if (std::isfinite(v)) {
        values.push_back(v);
      } else {
        values.push_back(nullptr);
      }
    }
    columns[table.names[c]] = std::move(values);
  }
  doc["columns"] = std::move(columns);
  doc["metadata"] = table.metadata;
  out << doc.dump(2) << '\n';
}

}  // namespace boundrat::cli

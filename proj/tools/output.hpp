#pragma once

#include <ostream>
#include <string>

#include "scenario.hpp"

namespace boundrat::cli {

/// Shortest decimal that parses back to the same double; empty for NaN and
/// infinities.
std::string format_real(double v);

/// Quotes a CSV field when it contains a comma, quote, CR or LF.
std::string csv_field(const std::string& s);

/// Header row then one line per row, CRLF-free.
void write_csv(std::ostream& out, const Table& table);

/// {"columns": {name: [values]}, "metadata": {...}}; non-finite values are null.
void write_json(std::ostream& out, const Table& table);

}  // namespace boundrat::cli

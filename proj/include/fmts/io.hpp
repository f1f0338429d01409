#ifndef FMTS_IO_HPP
#define FMTS_IO_HPP

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "fmts/core.hpp"

namespace fmts {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace detail

/// One value per line. A non-numeric first line is a header; blank lines
/// are skipped.
inline std::vector<double> read_values(std::istream& in) {
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    const auto field = detail::trim(line);
    if (field.empty()) continue;
    double v = 0.0;
    if (!detail::parse_double(field, v)) {
      if (first) {
        first = false;
        continue;
      }
      throw Error(ErrorCode::CsvParse,
                  "line " + std::to_string(line_no) + ": '" + std::string(field) + "' is not a number");
    }
    first = false;
    values.push_back(v);
  }
  if (values.empty()) throw Error(ErrorCode::CsvParse, "no numeric values found");
  return values;
}

inline std::vector<double> read_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::CsvParse, "cannot open '" + path + "'");
  return read_values(in);
}

inline void write_values(std::ostream& os, const std::string& header, std::span<const double> v) {
  const auto old = os.precision(17);
  os << header << '\n';
  for (double x : v) os << x << '\n';
  os.precision(old);
}

}  // namespace fmts

#endif  // FMTS_IO_HPP

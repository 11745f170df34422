/**
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace attnet::csv {

  struct Row {
    size_t line = 0;
    std::vector<std::string> fields;

    const std::string &field(size_t i) const {
      return fields.at(i);
    }

    template <typename T>
    T number(size_t i) const {
      const auto &f = fields.at(i);
      T value{};
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
      if (ec != std::errc{} || ptr != f.data() + f.size() || f.empty()) {
        throw Error("parse-error", "line " + std::to_string(line) + ": bad integer '" + f + "'");
      }
      return value;
    }

    uint64_t u64(size_t i) const {
      return number<uint64_t>(i);
    }
    uint32_t u32(size_t i) const {
      return number<uint32_t>(i);
    }
  };

  inline std::vector<std::string> split(std::string_view text, char sep = ',') {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
      const auto pos = text.find(sep, start);
      out.emplace_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
      if (pos == std::string_view::npos) {
        break;
      }
      start = pos + 1;
    }
    return out;
  }

  /// Calls `fn` for each data row. Blank lines and `#` comments are skipped.
  /// `min_fields` rows shorter than this are a parse error; 0 disables the
  /// check.
  template <typename Fn>
  void for_each_row(std::istream &in, size_t min_fields, Fn &&fn, bool exact = true) {
    std::string text;
    Row row;
    while (std::getline(in, text)) {
      ++row.line;
      if (!text.empty() && text.back() == '\r') {
        text.pop_back();
      }
      if (text.empty() || text.front() == '#') {
        continue;
      }
      row.fields = split(text);
      if (row.fields.size() < min_fields || (exact && row.fields.size() != min_fields)) {
        throw Error("parse-error", "line " + std::to_string(row.line) + ": expected "
                                       + std::to_string(min_fields) + " fields, got "
                                       + std::to_string(row.fields.size()));
      }
      fn(row);
    }
  }

  /// Fixed six-decimal rendering so text outputs are stable.
  inline std::string fixed(double x, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
  }

}  // namespace attnet::csv

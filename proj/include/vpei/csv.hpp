#pragma once

#include <charconv>
#include <cstddef>
#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

namespace vpei {

/// Formats a double with 17 significant digits so values round-trip.
inline std::string format_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return {buf, res.ptr};
}

/// Minimal comma-separated writer: comment lines, one header, typed rows.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void comment(std::string_view text) { out_ << "# " << text << '\n'; }

  void header(std::initializer_list<std::string_view> cols) {
    bool first = true;
    for (auto c : cols) {
      out_ << (first ? "" : ",") << c;
      first = false;
    }
    out_ << '\n';
  }

  template <class... Ts>
  void row(const Ts&... vals) {
    bool first = true;
    ((out_ << (first ? "" : ","), put(vals), first = false), ...);
    out_ << '\n';
  }

  template <class Range>
  void row_range(const Range& vals) {
    bool first = true;
    for (const auto& v : vals) {
      out_ << (first ? "" : ",");
      put(v);
      first = false;
    }
    out_ << '\n';
  }

  std::ostream& stream() { return out_; }

 private:
  template <class T>
  void put(const T& v) {
    if constexpr (std::is_floating_point_v<T>)
      out_ << format_real(static_cast<double>(v));
    else
      out_ << v;
  }

  std::ostream& out_;
};

}  // namespace vpei

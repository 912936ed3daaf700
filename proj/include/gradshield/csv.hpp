#pragma once

#include <initializer_list>
#include <string>
#include <string_view>
#include <variant>

#include "gradshield/common.hpp"

namespace gradshield {

// One CSV value; formatting is centralized so every writer emits identical
// bytes for identical numbers.
class CsvField {
 public:
  CsvField(double v) : text_(format_double(v)) {}
  CsvField(int v) : text_(format_int(v)) {}
  CsvField(long v) : text_(format_int(v)) {}
  CsvField(long long v) : text_(format_int(v)) {}
  CsvField(std::size_t v) : text_(format_int(static_cast<long long>(v))) {}
  CsvField(bool v) : text_(v ? "1" : "0") {}
  CsvField(const char* v) : text_(v) {}
  CsvField(std::string v) : text_(std::move(v)) {}

  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

// Builds the whole file in memory; callers persist via write_file so the
// bytes that hit disk are exactly the bytes that get checksummed.
class CsvBuilder {
 public:
  explicit CsvBuilder(std::string_view header) {
    buf_.append(header);
    buf_.push_back('\n');
    columns_ = 1 + static_cast<int>(std::count(header.begin(), header.end(), ','));
  }

  void row(std::initializer_list<CsvField> fields) {
    if (static_cast<int>(fields.size()) != columns_) {
      throw ValidationError("csv row width does not match header");
    }
    bool first = true;
    for (const auto& f : fields) {
      if (!first) buf_.push_back(',');
      buf_.append(f.text());
      first = false;
    }
    buf_.push_back('\n');
  }

  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
  int columns_ = 0;
};

}  // namespace gradshield

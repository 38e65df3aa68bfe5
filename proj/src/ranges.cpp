#include "blocksr/ranges.hpp"

#include <charconv>
#include <string>

#include "blocksr/error.hpp"

namespace blocksr {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void fail(std::string_view field, std::string_view item) {
  throw ParseError(ErrorCode::kSyntax,
                   std::string(field) + ": cannot parse '" + std::string(item) + "'", 0, 0,
                   std::string(field));
}

template <typename T>
T number(std::string_view text, std::string_view field) {
  const std::string_view t = trim(text);
  T value{};
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc() || end != t.data() + t.size()) fail(field, text);
  return value;
}

template <typename F>
void for_each_item(std::string_view text, std::string_view field, F&& body) {
  if (trim(text).empty()) fail(field, text);
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = text.find(',', start);
    const std::string_view item = trim(text.substr(start, comma - start));
    if (item.empty()) fail(field, text);
    body(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
}

}  // namespace

std::vector<int> parse_int_list(std::string_view text, std::string_view field,
                                int default_stride) {
  std::vector<int> out;
  for_each_item(text, field, [&](std::string_view item) {
    const std::size_t dots = item.find("..");
    if (dots == std::string_view::npos) {
      out.push_back(number<int>(item, field));
      return;
    }
    const int lo = number<int>(item.substr(0, dots), field);
    std::string_view rest = item.substr(dots + 2);
    int stride = default_stride;
    if (const std::size_t colon = rest.find(':'); colon != std::string_view::npos) {
      stride = number<int>(rest.substr(colon + 1), field);
      rest = rest.substr(0, colon);
    }
    const int hi = number<int>(rest, field);
    if (stride <= 0 || hi < lo) fail(field, item);
    for (int v = lo; v <= hi; v += stride) out.push_back(v);
  });
  return out;
}

std::vector<double> parse_real_list(std::string_view text, std::string_view field) {
  std::vector<double> out;
  for_each_item(text, field, [&](std::string_view item) { out.push_back(number<double>(item, field)); });
  return out;
}

std::string format_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace blocksr

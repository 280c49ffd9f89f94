#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dromql {

// A dot-path through nested documents. Segments are non-empty and dot-free.
class FieldPath {
 public:
  FieldPath() = default;
  explicit FieldPath(std::vector<std::string> segments) : segments_(std::move(segments)) {}

  // Splits a dotted string; rejects empty segments and empty input.
  static std::optional<FieldPath> parse(std::string_view dotted);

  const std::vector<std::string>& segments() const { return segments_; }
  std::size_t depth() const { return segments_.size(); }
  const std::string& last() const { return segments_.back(); }
  bool empty() const { return segments_.empty(); }

  FieldPath child(std::string segment) const;
  // Direct prefixes, shortest first, excluding the path itself.
  std::vector<FieldPath> ancestors() const;

  std::string dotted() const;

  friend bool operator==(const FieldPath& a, const FieldPath& b) {
    return a.segments_ == b.segments_;
  }
  friend bool operator<(const FieldPath& a, const FieldPath& b) {
    return a.segments_ < b.segments_;
  }

 private:
  std::vector<std::string> segments_;
};

inline std::optional<FieldPath> FieldPath::parse(std::string_view dotted) {
  if (dotted.empty()) return std::nullopt;
  std::vector<std::string> segs;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string_view seg =
        dot == std::string_view::npos ? dotted.substr(start) : dotted.substr(start, dot - start);
    if (seg.empty()) return std::nullopt;
    segs.emplace_back(seg);
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return FieldPath(std::move(segs));
}

inline FieldPath FieldPath::child(std::string segment) const {
  std::vector<std::string> segs = segments_;
  segs.push_back(std::move(segment));
  return FieldPath(std::move(segs));
}

inline std::vector<FieldPath> FieldPath::ancestors() const {
  std::vector<FieldPath> out;
  for (std::size_t n = 1; n < segments_.size(); ++n) {
    out.emplace_back(std::vector<std::string>(segments_.begin(), segments_.begin() + n));
  }
  return out;
}

inline std::string FieldPath::dotted() const {
  std::string out;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (i) out += '.';
    out += segments_[i];
  }
  return out;
}

}  // namespace dromql

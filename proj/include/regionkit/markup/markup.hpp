#pragma once

// Region-placeholder grammar:
//
//   text    := (plain | "<Image>" | region)*
//   region  := "<Region>" "[" num "," num "," num "," num "]" "</Region>"
//   num     := "-"? (digits ("." digits*)? | "." digits)
//
// Blanks (space, tab) are allowed anywhere between the brackets. A
// `<Region>` opener or a stray `</Region>` that does not complete the
// production above is a malformed region.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "regionkit/core/error.hpp"
#include "regionkit/core/region.hpp"

namespace regionkit::markup {

inline constexpr std::string_view kImageTag = "<Image>";
inline constexpr std::string_view kRegionOpen = "<Region>";
inline constexpr std::string_view kRegionClose = "</Region>";

enum class SegmentKind { kPlain, kImagePlaceholder, kRegionPlaceholder };

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct Segment {
  SegmentKind kind = SegmentKind::kPlain;
  Span span;
  std::optional<Region> region;  // set iff kind == kRegionPlaceholder
};

struct MarkedText {
  std::string raw;
  std::vector<Segment> segments;

  std::string_view text_of(const Segment& s) const {
    return std::string_view(raw).substr(s.span.begin, s.span.size());
  }

  std::vector<Region> regions() const {
    std::vector<Region> out;
    for (const auto& s : segments) {
      if (s.region) out.push_back(*s.region);
    }
    return out;
  }
};

struct MalformedRegion {
  Span span;
  std::string reason;
};

/// Result of the non-throwing scanner. Malformed regions are kept as plain
/// segments so the segments still tile the input.
struct ScanResult {
  MarkedText text;
  std::vector<MalformedRegion> malformed;
};

/// Coordinate number style.
///   kCanonical:   "0", "1", "0.5", "0.156"
///   kKeepDecimal: "0.0", "1.0", "0.5", "0.156" (integral values keep ".0")
enum class CoordStyle { kCanonical, kKeepDecimal };

namespace detail {

inline bool is_blank(char c) { return c == ' ' || c == '\t'; }
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Parses "[a, b, c, d]" starting at `pos` (which must be '['). On success
// returns the region and sets `pos` past ']'. On failure returns nullopt
// and a reason.
inline std::optional<Region> parse_bracket_list(std::string_view s, std::size_t& pos,
                                                std::string& reason) {
  if (pos >= s.size() || s[pos] != '[') {
    reason = "expected '[' after <Region>";
    return std::nullopt;
  }
  ++pos;
  std::vector<double> values;
  for (;;) {
    while (pos < s.size() && is_blank(s[pos])) ++pos;
    std::size_t start = pos;
    if (pos < s.size() && s[pos] == '-') ++pos;
    std::size_t int_digits = 0;
    while (pos < s.size() && is_digit(s[pos])) ++pos, ++int_digits;
    std::size_t frac_digits = 0;
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      while (pos < s.size() && is_digit(s[pos])) ++pos, ++frac_digits;
    }
    if (int_digits == 0 && frac_digits == 0) {
      reason = "expected a number";
      return std::nullopt;
    }
    std::string_view num = s.substr(start, pos - start);
    // from_chars does not accept a bare trailing '.', e.g. "1."
    std::string buf(num);
    if (!buf.empty() && buf.back() == '.') buf.push_back('0');
    if (buf.front() == '.' || (buf.size() > 1 && buf[0] == '-' && buf[1] == '.')) {
      buf.insert(buf.front() == '-' ? 1 : 0, "0");
    }
    try {
      values.push_back(regionkit::detail::parse_double(buf));
    } catch (const Error&) {
      reason = "number out of range";
      return std::nullopt;
    }
    while (pos < s.size() && is_blank(s[pos])) ++pos;
    if (pos < s.size() && s[pos] == ',') {
      ++pos;
      if (values.size() >= 4) {
        reason = "more than 4 numbers";
        return std::nullopt;
      }
      continue;
    }
    if (pos < s.size() && s[pos] == ']') {
      ++pos;
      break;
    }
    reason = "expected ',' or ']'";
    return std::nullopt;
  }
  if (values.size() != 4) {
    reason = "expected 4 numbers, got " + std::to_string(values.size());
    return std::nullopt;
  }
  try {
    return Region(values[0], values[1], values[2], values[3]);
  } catch (const InvalidRegionError& e) {
    reason = e.what();
    return std::nullopt;
  }
}

}  // namespace detail

inline ScanResult scan_marked(std::string_view text) {
  ScanResult out;
  out.text.raw = std::string(text);
  auto& segs = out.text.segments;
  std::size_t plain_start = 0;
  std::size_t pos = 0;

  auto flush_plain = [&](std::size_t upto) {
    if (upto > plain_start) {
      if (!segs.empty() && segs.back().kind == SegmentKind::kPlain &&
          segs.back().span.end == plain_start) {
        segs.back().span.end = upto;
      } else {
        segs.push_back({SegmentKind::kPlain, {plain_start, upto}, std::nullopt});
      }
    }
  };

  while (pos < text.size()) {
    if (text[pos] != '<') {
      ++pos;
      continue;
    }
    std::string_view rest = text.substr(pos);
    if (rest.starts_with(kImageTag)) {
      flush_plain(pos);
      segs.push_back({SegmentKind::kImagePlaceholder, {pos, pos + kImageTag.size()}, std::nullopt});
      pos += kImageTag.size();
      plain_start = pos;
    } else if (rest.starts_with(kRegionOpen)) {
      std::size_t cursor = pos + kRegionOpen.size();
      std::string reason;
      auto region = detail::parse_bracket_list(text, cursor, reason);
      if (region && text.substr(cursor).starts_with(kRegionClose)) {
        flush_plain(pos);
        std::size_t end = cursor + kRegionClose.size();
        segs.push_back({SegmentKind::kRegionPlaceholder, {pos, end}, region});
        pos = end;
        plain_start = pos;
        continue;
      }
      if (region) reason = "missing </Region>";
      // Malformed: swallow through the matching closer when one appears
      // before the next opener, otherwise just the opener.
      std::size_t next_open = text.find(kRegionOpen, pos + kRegionOpen.size());
      std::size_t close = text.find(kRegionClose, pos + kRegionOpen.size());
      std::size_t end = pos + kRegionOpen.size();
      if (close != std::string_view::npos && close < next_open) {
        end = close + kRegionClose.size();
      }
      out.malformed.push_back({{pos, end}, reason});
      pos = end;
    } else if (rest.starts_with(kRegionClose)) {
      std::size_t end = pos + kRegionClose.size();
      out.malformed.push_back({{pos, end}, "</Region> without opener"});
      pos = end;
    } else {
      ++pos;
    }
  }
  pos = text.size();
  flush_plain(pos);
  return out;
}

/// Throws MarkupError (carrying the offending span) on the first malformed
/// region.
inline MarkedText parse_marked(std::string_view text) {
  ScanResult scan = scan_marked(text);
  if (!scan.malformed.empty()) {
    const auto& m = scan.malformed.front();
    throw MarkupError("malformed region at [" + std::to_string(m.span.begin) + ", " +
                          std::to_string(m.span.end) + "): " + m.reason,
                      m.span.begin, m.span.end);
  }
  return std::move(scan.text);
}

/// Parses a bare "[a, b, c, d]" list (the whole string).
inline std::optional<Region> parse_region_list(std::string_view text) {
  std::size_t pos = 0;
  std::string reason;
  auto r = detail::parse_bracket_list(text, pos, reason);
  if (!r || pos != text.size()) return std::nullopt;
  return r;
}

inline std::string format_coord(double v, CoordStyle style = CoordStyle::kCanonical) {
  std::string s = regionkit::detail::shortest_fixed(round_coord(v));
  if (style == CoordStyle::kKeepDecimal && s.find('.') == std::string::npos) s += ".0";
  return s;
}

inline std::string render_region(const Region& r, CoordStyle style = CoordStyle::kCanonical) {
  return "[" + format_coord(r.x1(), style) + ", " + format_coord(r.y1(), style) + ", " +
         format_coord(r.x2(), style) + ", " + format_coord(r.y2(), style) + "]";
}

inline std::string render_tagged(const Region& r) {
  return std::string(kRegionOpen) + render_region(r) + std::string(kRegionClose);
}

struct RegionPresence {
  std::size_t well_formed = 0;
  std::size_t malformed = 0;
  bool any() const { return well_formed + malformed > 0; }
};

/// Counts region placeholders and malformed region attempts.
inline RegionPresence contains_region(std::string_view text) {
  ScanResult scan = scan_marked(text);
  RegionPresence p;
  p.malformed = scan.malformed.size();
  for (const auto& s : scan.text.segments) {
    if (s.kind == SegmentKind::kRegionPlaceholder) ++p.well_formed;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Layout planning for feature splicing.

enum class SlotKind { kText, kImageFeatures, kRegionFeatures };

struct LayoutSlot {
  SlotKind kind = SlotKind::kText;
  // Feature slots: feature token count. Text slots: byte length of the
  // text, since tokenization belongs to the model.
  std::size_t length = 0;
  std::optional<std::size_t> region_index;
  Span span;
};

struct LayoutPlan {
  std::vector<LayoutSlot> slots;
};

inline LayoutPlan plan_layout(const MarkedText& m, std::size_t image_feature_len,
                              std::size_t region_feature_len) {
  if (image_feature_len == 0 || region_feature_len == 0) {
    throw ConfigError("feature lengths must be at least 1");
  }
  LayoutPlan plan;
  std::size_t next_region = 0;
  for (const auto& seg : m.segments) {
    switch (seg.kind) {
      case SegmentKind::kPlain:
        plan.slots.push_back({SlotKind::kText, seg.span.size(), std::nullopt, seg.span});
        break;
      case SegmentKind::kImagePlaceholder:
        plan.slots.push_back({SlotKind::kImageFeatures, image_feature_len, std::nullopt, seg.span});
        break;
      case SegmentKind::kRegionPlaceholder:
        plan.slots.push_back({SlotKind::kRegionFeatures, region_feature_len, next_region++, seg.span});
        break;
    }
  }
  return plan;
}

}  // namespace regionkit::markup

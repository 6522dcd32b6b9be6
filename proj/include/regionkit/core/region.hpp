#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <system_error>

#include "regionkit/core/error.hpp"

namespace regionkit {

/// Overshoot outside [0,1] that is treated as float noise and clamped.
inline constexpr double kClampTolerance = 1e-9;

/// Normalized bounding box: top-left (x1, y1), bottom-right (x2, y2), all
/// fractions of the image size. Always valid once constructed.
class Region {
 public:
  /// Throws InvalidRegionError unless 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1.
  /// Values within kClampTolerance outside [0,1] are clamped first.
  Region(double x1, double y1, double x2, double y2)
      : x1_(clamp_unit(x1)), y1_(clamp_unit(y1)), x2_(clamp_unit(x2)),
        y2_(clamp_unit(y2)) {
    if (!(x1_ < x2_) || !(y1_ < y2_)) {
      throw InvalidRegionError("region corners must satisfy x1 < x2 and y1 < y2");
    }
  }

  static bool is_valid(double x1, double y1, double x2, double y2) noexcept {
    try {
      Region r(x1, y1, x2, y2);
      return true;
    } catch (const InvalidRegionError&) {
      return false;
    }
  }

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  std::array<double, 4> coords() const { return {x1_, y1_, x2_, y2_}; }

  friend bool operator==(const Region&, const Region&) = default;

 private:
  static double clamp_unit(double v) {
    if (std::isnan(v)) throw InvalidRegionError("region coordinate is NaN");
    if (v < 0.0) {
      if (v < -kClampTolerance) {
        throw InvalidRegionError("region coordinate below 0: " + std::to_string(v));
      }
      return 0.0;
    }
    if (v > 1.0) {
      if (v > 1.0 + kClampTolerance) {
        throw InvalidRegionError("region coordinate above 1: " + std::to_string(v));
      }
      return 1.0;
    }
    return v;
  }

  double x1_, y1_, x2_, y2_;
};

/// A box in source-dataset pixel space (top-left corner plus size).
struct PixelBox {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;
  double image_w = 0;
  double image_h = 0;
};

inline Region normalize(const PixelBox& box) {
  if (!(box.image_w > 0) || !(box.image_h > 0)) {
    throw DegenerateBoxError("image dimensions must be positive");
  }
  if (!(box.w > 0) || !(box.h > 0)) {
    throw DegenerateBoxError("box has zero width or height");
  }
  if (box.x < 0 || box.y < 0 || box.x + box.w > box.image_w ||
      box.y + box.h > box.image_h) {
    throw InvalidRegionError("box extends outside the image");
  }
  return Region(box.x / box.image_w, box.y / box.image_h,
                (box.x + box.w) / box.image_w, (box.y + box.h) / box.image_h);
}

inline double area(const Region& r) {
  return (r.x2() - r.x1()) * (r.y2() - r.y1());
}

namespace detail {

// Shortest fixed-notation decimal that round-trips to v.
inline std::string shortest_fixed(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] =
      std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed);
  if (ec != std::errc{}) throw Error("cannot format coordinate");
  return std::string(buf.data(), ptr);
}

inline double parse_double(std::string_view s) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error("not a number: " + std::string(s));
  }
  return out;
}

// Half-to-even rounding of a plain decimal string to `places` fraction
// digits. Input is "[-]digits[.digits]"; output has no trailing zeros.
inline std::string round_decimal_string(std::string_view s, int places) {
  bool negative = !s.empty() && s.front() == '-';
  if (negative) s.remove_prefix(1);
  auto dot = s.find('.');
  std::string int_part(s.substr(0, dot));
  std::string frac = dot == std::string_view::npos ? "" : std::string(s.substr(dot + 1));
  if (int_part.empty()) int_part = "0";

  std::string kept = frac.substr(0, std::min<std::size_t>(frac.size(), places));
  kept.resize(places, '0');
  std::string rest = frac.size() > static_cast<std::size_t>(places) ? frac.substr(places) : "";

  bool round_up = false;
  if (!rest.empty()) {
    bool tail_nonzero = rest.find_first_not_of('0', 1) != std::string::npos;
    if (rest[0] > '5' || (rest[0] == '5' && tail_nonzero)) {
      round_up = true;
    } else if (rest[0] == '5') {
      char last = places > 0 ? kept.back() : int_part.back();
      round_up = ((last - '0') % 2) == 1;
    }
  }

  std::string digits = int_part + kept;
  if (round_up) {
    int i = static_cast<int>(digits.size()) - 1;
    while (i >= 0 && digits[i] == '9') digits[i--] = '0';
    if (i < 0) {
      digits.insert(digits.begin(), '1');
    } else {
      ++digits[i];
    }
  }
  std::string ip = digits.substr(0, digits.size() - places);
  std::string fp = digits.substr(digits.size() - places);
  while (!fp.empty() && fp.back() == '0') fp.pop_back();
  auto first_nz = ip.find_first_not_of('0');
  ip = first_nz == std::string::npos ? "0" : ip.substr(first_nz);
  std::string out = ip;
  if (!fp.empty()) out += "." + fp;
  if (negative && out != "0") out.insert(out.begin(), '-');
  return out;
}

}  // namespace detail

/// Rounds to three decimals, half-to-even. The tie test is made on the
/// shortest decimal that round-trips to `v`, so 0.9995 is a tie (-> 1.0)
/// even though its binary value is slightly below it.
inline double round_coord(double v) {
  return detail::parse_double(detail::round_decimal_string(detail::shortest_fixed(v), 3));
}

}  // namespace regionkit

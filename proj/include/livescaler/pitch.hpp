#pragma once

// Pitch-space mathematics: equal temperaments, affine and interval-periodic
// pitch maps, range restriction, degree algebra and image classification.
// Everything here is a pure function of its arguments.

#include <livescaler/errors.hpp>

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace livescaler {

/// A note of the discretized linear pitch space (the anchor is 0).
using Pitch = std::int64_t;

namespace detail {

inline Pitch checked_add(Pitch a, Pitch b) {
  Pitch r;
  if (__builtin_add_overflow(a, b, &r)) throw OverflowError("pitch addition overflows");
  return r;
}

inline Pitch checked_sub(Pitch a, Pitch b) {
  Pitch r;
  if (__builtin_sub_overflow(a, b, &r)) throw OverflowError("pitch subtraction overflows");
  return r;
}

inline Pitch checked_mul(Pitch a, Pitch b) {
  Pitch r;
  if (__builtin_mul_overflow(a, b, &r)) throw OverflowError("pitch multiplication overflows");
  return r;
}

}  // namespace detail

/// Euclidean remainder: always in [0, m) for m > 0.
constexpr Pitch floor_mod(Pitch a, Pitch m) noexcept {
  Pitch r = a % m;
  return r < 0 ? r + m : r;
}

/// Quotient paired with floor_mod: a == floor_div(a, m) * m + floor_mod(a, m).
constexpr Pitch floor_div(Pitch a, Pitch m) noexcept {
  Pitch q = a / m;
  return (a % m != 0 && a < 0) ? q - 1 : q;
}

// ---------------------------------------------------------------------------
// Temperament

/// Equal temperament: `base` divisions per octave, `anchor_midi` is pitch 0.
struct Temperament {
  int anchor_midi = 60;
  int base = 12;
  /// Frequency of the anchor, only needed for frequency conversion.
  std::optional<double> anchor_freq;

  Temperament() = default;

  Temperament(int anchor, int divisions, std::optional<double> freq = std::nullopt)
      : anchor_midi(anchor), base(divisions), anchor_freq(freq) {
    validate();
  }

  void validate() const {
    if (base < 1) throw ConfigError("temperament base must be >= 1");
    if (anchor_freq && !(*anchor_freq > 0.0)) throw ConfigError("anchor frequency must be > 0");
  }

  friend bool operator==(const Temperament&, const Temperament&) = default;
};

/// Frequency of MIDI note 0 as commonly rounded; with base 12 it reproduces MIDI numbering.
inline constexpr double kMidiZeroHz = 8.1758;

/// Boundary guard added before flooring. It absorbs both floating-point error at
/// exact step boundaries and the 4-digit rounding of kMidiZeroHz (about 2.3e-6 step).
inline constexpr double kStepEpsilon = 1e-5;

/// floor(base * log2(f / anchor_freq)), guarded at step boundaries.
inline Pitch freq_to_pitch(double freq, const Temperament& t) {
  if (!(freq > 0.0) || !std::isfinite(freq)) throw std::domain_error("frequency must be positive and finite");
  if (!t.anchor_freq) throw ConfigError("temperament has no anchor frequency");
  const double steps = static_cast<double>(t.base) * std::log2(freq / *t.anchor_freq);
  return static_cast<Pitch>(std::floor(steps + kStepEpsilon));
}

// ---------------------------------------------------------------------------
// Affine maps n -> mu*n + tau

struct AffineTransform {
  Pitch mu = 1;
  Pitch tau = 0;

  static constexpr AffineTransform identity() noexcept { return {1, 0}; }

  friend bool operator==(const AffineTransform&, const AffineTransform&) = default;
};

inline Pitch affine_apply(const AffineTransform& a, Pitch n) {
  return detail::checked_add(detail::checked_mul(a.mu, n), a.tau);
}

/// M<->m: negate the mode, then offset the transposition by five times the new mode.
/// This ordering is the one that sends I to i and ii to II; it is an involution.
inline AffineTransform toggle_quality(const AffineTransform& a) {
  const Pitch mu = detail::checked_sub(0, a.mu);
  return {mu, detail::checked_add(a.tau, detail::checked_mul(5, mu))};
}

inline AffineTransform shift_transposition(const AffineTransform& a, Pitch k) {
  return {a.mu, detail::checked_add(a.tau, k)};
}

inline AffineTransform multiply_mode(const AffineTransform& a, Pitch k) {
  return {detail::checked_mul(a.mu, k), a.tau};
}

/// Residues reached by the map modulo `base`. Its size is base / gcd(mu, base).
inline std::set<Pitch> pitch_class_image_set(const AffineTransform& a, Pitch base) {
  if (base < 1) throw ConfigError("base must be >= 1");
  std::set<Pitch> out;
  // Work on residues so that huge mu/tau cannot overflow.
  const Pitch mu = floor_mod(a.mu, base);
  const Pitch tau = floor_mod(a.tau, base);
  for (Pitch n = 0; n < base; ++n) {
    const auto v = (static_cast<__int128>(mu) * n + tau) % base;
    out.insert(static_cast<Pitch>(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scale degrees

enum class Degree { I, ii, iii, IV, V, vi, vii };

inline constexpr std::array<std::pair<std::string_view, AffineTransform>, 7> kDegreeTable{{
    {"I", {1, 0}},
    {"ii", {-1, -3}},
    {"iii", {-1, -1}},
    {"IV", {1, 5}},
    {"V", {1, 7}},
    {"vi", {-1, 4}},
    {"vii", {-1, 6}},
}};

inline AffineTransform degree_transform(Degree d) {
  return kDegreeTable[static_cast<std::size_t>(d)].second;
}

inline AffineTransform degree_transform(std::string_view name) {
  for (const auto& [label, a] : kDegreeTable)
    if (label == name) return a;
  throw LookupError("unknown degree: " + std::string(name));
}

/// Degree label of an affine map, searching the seven diatonic degrees and their
/// quality toggles (i, II, III, iv, v, VI, VII). Empty when the map is not one of them.
inline std::string degree_label(const AffineTransform& a) {
  for (const auto& [label, t] : kDegreeTable) {
    if (t == a) return std::string(label);
    if (toggle_quality(t) == a) {
      std::string flipped(label);
      for (auto& ch : flipped) ch = std::isupper(static_cast<unsigned char>(ch)) ? std::tolower(ch) : std::toupper(ch);
      return flipped;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Interval-periodic maps

/// A pitch map X whose offset X(n) - n repeats with period `interval`.
/// image()[k] is X(k) for 0 <= k < interval. Non-injective maps (quantizers) are allowed.
class PeriodicMap {
 public:
  PeriodicMap() : interval_(1), image_{0} {}

  explicit PeriodicMap(std::vector<Pitch> image) : interval_(static_cast<Pitch>(image.size())), image_(std::move(image)) {
    if (image_.empty()) throw ConfigError("periodic map needs at least one entry");
  }

  static PeriodicMap identity(Pitch interval) {
    if (interval < 1) throw ConfigError("periodic interval must be >= 1");
    std::vector<Pitch> img(static_cast<std::size_t>(interval));
    std::iota(img.begin(), img.end(), Pitch{0});
    return PeriodicMap(std::move(img));
  }

  Pitch interval() const noexcept { return interval_; }
  const std::vector<Pitch>& image() const noexcept { return image_; }

  /// The periodic offset Y(k) = X(k) - k.
  Pitch offset(Pitch k) const { return image_[static_cast<std::size_t>(floor_mod(k, interval_))] - floor_mod(k, interval_); }

  friend bool operator==(const PeriodicMap&, const PeriodicMap&) = default;

 private:
  Pitch interval_;
  std::vector<Pitch> image_;
};

inline Pitch periodic_apply(const PeriodicMap& m, Pitch n) {
  const Pitch q = floor_div(n, m.interval());
  const Pitch k = floor_mod(n, m.interval());
  return detail::checked_add(detail::checked_mul(q, m.interval()), m.image()[static_cast<std::size_t>(k)]);
}

/// C major quantizer over the octave: each chromatic step snaps down to a scale tone,
/// except the leading semitones 10 and 11 which both reach 11.
inline PeriodicMap major_scale_quantizer() {
  return PeriodicMap({0, 0, 2, 4, 4, 5, 5, 7, 7, 9, 11, 11});
}

/// Reads the periodic map text format:
///
///     # comment
///     interval <i>
///     <k> <image>      (exactly i lines, k = 0 .. i-1 in order)
inline PeriodicMap parse_periodic_map(std::string_view text);

// ---------------------------------------------------------------------------
// Range restriction

/// Largest allowed downward and upward distance between a note and its image.
struct RangeBounds {
  Pitch delta_minus = 6;
  Pitch delta_plus = 6;

  /// A window of delta_minus + delta_plus + 1 notes contains every residue mod base.
  bool admits(Pitch base) const noexcept {
    return delta_minus >= 0 && delta_plus >= 0 && base >= 1 &&
           static_cast<__int128>(delta_minus) + delta_plus + 1 >= base;
  }

  void validate(Pitch base) const {
    if (delta_minus < 0 || delta_plus < 0) throw ConfigError("range bounds must be non-negative");
    if (!admits(base))
      throw ConfigError("delta_minus + delta_plus + 1 must be >= base (" + std::to_string(base) + ")");
  }

  friend bool operator==(const RangeBounds&, const RangeBounds&) = default;
};

/// The member of { raw + k*base } inside [orig - delta_minus, orig + delta_plus]
/// closest to raw. Since the window always holds a candidate, a raw value outside
/// it has all candidates on one side and no tie can arise.
inline Pitch restrict_interval(Pitch orig, Pitch raw, const RangeBounds& b, Pitch base) {
  b.validate(base);
  using Wide = __int128;
  const Wide lo = Wide{orig} - b.delta_minus;
  const Wide hi = Wide{orig} + b.delta_plus;
  const Wide r = raw;
  Wide out;
  if (r >= lo && r <= hi) {
    out = r;
  } else if (r < lo) {
    Wide m = (r - lo) % base;
    if (m < 0) m += base;
    out = lo + m;
  } else {
    Wide m = (hi - r) % base;
    if (m < 0) m += base;
    out = hi - m;
  }
  if (out < INT64_MIN || out > INT64_MAX) throw OverflowError("restricted pitch overflows");
  return static_cast<Pitch>(out);
}

// ---------------------------------------------------------------------------
// Complete scale transforms

/// One of the two transform families plus the accumulated modulation offset,
/// which is added after the family-specific map.
struct ScaleTransform {
  std::variant<AffineTransform, PeriodicMap> kind = AffineTransform::identity();
  Pitch key_offset = 0;

  static ScaleTransform identity() { return {}; }

  bool is_affine() const noexcept { return std::holds_alternative<AffineTransform>(kind); }

  Pitch map(Pitch n) const {
    const Pitch raw = std::visit(
        [n](const auto& t) -> Pitch {
          if constexpr (std::is_same_v<std::decay_t<decltype(t)>, AffineTransform>)
            return affine_apply(t, n);
          else
            return periodic_apply(t, n);
        },
        kind);
    return detail::checked_add(raw, key_offset);
  }

  friend bool operator==(const ScaleTransform&, const ScaleTransform&) = default;
};

inline constexpr int kMidiMin = 0;
inline constexpr int kMidiMax = 127;

/// Transforms a MIDI note: relative to the anchor, map, restrict around the
/// original, then fold by octaves into [0, 127]. Empty when no congruent note
/// exists in MIDI range (only possible for base > 128).
inline std::optional<int> transform_midi_note(int note, const ScaleTransform& s, const Temperament& t,
                                              const RangeBounds& b) {
  const Pitch n = Pitch{note} - t.anchor_midi;
  const Pitch raw = s.map(n);
  Pitch out = detail::checked_add(t.anchor_midi, restrict_interval(n, raw, b, t.base));
  if (out > kMidiMax) out -= ((out - kMidiMax + t.base - 1) / t.base) * t.base;
  if (out < kMidiMin) out += ((kMidiMin - out + t.base - 1) / t.base) * t.base;
  if (out < kMidiMin || out > kMidiMax) return std::nullopt;
  return static_cast<int>(out);
}

// ---------------------------------------------------------------------------

inline PeriodicMap parse_periodic_map(std::string_view text) {
  auto trim = [](std::string_view s) {
    const auto ws = " \t\r";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return std::string_view{};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
  };
  auto parse_int = [](std::string_view tok, std::size_t line) -> Pitch {
    if (tok.empty()) throw ParseError(line, "expected integer");
    std::size_t pos = 0;
    bool neg = false;
    if (tok[0] == '-' || tok[0] == '+') {
      neg = tok[0] == '-';
      pos = 1;
    }
    if (pos == tok.size()) throw ParseError(line, "expected integer, got '" + std::string(tok) + "'");
    Pitch v = 0;
    for (; pos < tok.size(); ++pos) {
      const char c = tok[pos];
      if (c < '0' || c > '9') throw ParseError(line, "expected integer, got '" + std::string(tok) + "'");
      if (__builtin_mul_overflow(v, 10, &v) || __builtin_add_overflow(v, c - '0', &v))
        throw ParseError(line, "integer out of range");
    }
    return neg ? -v : v;
  };
  auto split = [&](std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
      while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
      const auto start = i;
      while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
      if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
  };

  std::optional<Pitch> interval;
  std::vector<Pitch> image;
  std::size_t line_no = 0;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    auto end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(begin, end - begin);
    begin = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto tokens = split(line);
    if (!interval) {
      if (tokens.size() != 2 || tokens[0] != "interval") throw ParseError(line_no, "expected 'interval <i>' header");
      const Pitch i = parse_int(tokens[1], line_no);
      if (i < 1) throw ParseError(line_no, "interval must be >= 1");
      if (i > (Pitch{1} << 20)) throw ParseError(line_no, "interval too large");
      interval = i;
      image.reserve(static_cast<std::size_t>(i));
    } else {
      if (tokens.size() != 2) throw ParseError(line_no, "expected '<residue> <image>'");
      const Pitch k = parse_int(tokens[0], line_no);
      const Pitch v = parse_int(tokens[1], line_no);
      if (static_cast<Pitch>(image.size()) >= *interval)
        throw ParseError(line_no, "more entries than interval " + std::to_string(*interval));
      if (k != static_cast<Pitch>(image.size()))
        throw ParseError(line_no, "expected residue " + std::to_string(image.size()) + ", got " + std::to_string(k));
      image.push_back(v);
    }
    if (end == text.size()) break;
  }
  if (!interval) throw ParseError(line_no, "missing 'interval' header");
  if (static_cast<Pitch>(image.size()) != *interval)
    throw ParseError(line_no, "expected " + std::to_string(*interval) + " entries, got " + std::to_string(image.size()));
  return PeriodicMap(std::move(image));
}

}  // namespace livescaler

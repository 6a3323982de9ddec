#pragma once

// Pad-grid control surface. Turns presses on a 4x4 grid into broadcast
// transform records: the two centre columns fire degree transforms, the outer
// columns are modifiers held while a degree is pressed.

#include <livescaler/errors.hpp>
#include <livescaler/pitch.hpp>
#include <livescaler/wire.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bitset>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace livescaler {

inline constexpr int kGridSize = 4;
inline constexpr std::size_t kHistoryDepth = 8;

enum class Modifier { Hist, Up, Down, Mod, Toggle, Times2, Times3, Times4 };

inline std::string_view to_string(Modifier m) {
  switch (m) {
    case Modifier::Hist: return "Hist";
    case Modifier::Up: return "++";
    case Modifier::Down: return "--";
    case Modifier::Mod: return "Mod";
    case Modifier::Toggle: return "M<->m";
    case Modifier::Times2: return "2";
    case Modifier::Times3: return "3";
    case Modifier::Times4: return "4";
  }
  return "?";
}

/// A pad that fires a transform.
struct TransformPad {
  std::string label;
  std::variant<AffineTransform, PeriodicMap> kind;
};

using PadRole = std::variant<std::monostate, Modifier, TransformPad>;

/// Row-major 4x4 grid of pad roles.
using Layout = std::array<PadRole, kGridSize * kGridSize>;

/// Degree name when the transform is in the degree table (or its toggle), else A⟨μ,τ⟩.
inline std::string affine_label(const AffineTransform& a) {
  auto label = degree_label(a);
  if (!label.empty()) return std::string(label);
  return "A\u27E8" + std::to_string(a.mu) + "," + std::to_string(a.tau) + "\u27E9";
}

/// Name of the key whose tonic sits key_offset steps above the anchor.
inline std::string key_name(const Temperament& t, Pitch key_offset) {
  if (t.base != 12) return std::to_string(floor_mod(key_offset, t.base));
  static const char* const kNames[] = {"C", "D\u266D", "D", "E\u266D", "E", "F", "F\u266F", "G", "A\u266D", "A", "B\u266D", "B"};
  return kNames[floor_mod(t.anchor_midi + key_offset, 12)];
}

inline TransformPad degree_pad(std::string_view name) { return {std::string(name), degree_transform(name)}; }

/// Column 0 (top to bottom): Hist, ++, --, Mod. Columns 1-2: relative major/minor
/// pairs I|vi, IV|ii, V|iii, II|vii. Column 3: M<->m, 2, 3, 4.
inline Layout default_layout() {
  Layout l;
  auto at = [&](int r, int c) -> PadRole& { return l[static_cast<std::size_t>(r * kGridSize + c)]; };
  at(0, 0) = Modifier::Hist;
  at(1, 0) = Modifier::Up;
  at(2, 0) = Modifier::Down;
  at(3, 0) = Modifier::Mod;
  at(0, 1) = degree_pad("I");
  at(0, 2) = degree_pad("vi");
  at(1, 1) = degree_pad("IV");
  at(1, 2) = degree_pad("ii");
  at(2, 1) = degree_pad("V");
  at(2, 2) = degree_pad("iii");
  at(3, 1) = TransformPad{"II", AffineTransform{1, 2}};
  at(3, 2) = degree_pad("vii");
  at(0, 3) = Modifier::Toggle;
  at(1, 3) = Modifier::Times2;
  at(2, 3) = Modifier::Times3;
  at(3, 3) = Modifier::Times4;
  return l;
}

/// Parses a pad role name: a modifier (hist, ++, --, mod, toggle, 2, 3, 4), a degree
/// name (I ii iii IV V vi vii, or II), `affine:<mu>,<tau>`, or `none`. Periodic pads
/// are built by the caller, which owns file access.
inline PadRole parse_pad_role(std::string_view name) {
  static const std::map<std::string, Modifier, std::less<>> modifiers{
      {"hist", Modifier::Hist},     {"++", Modifier::Up},         {"up", Modifier::Up},
      {"--", Modifier::Down},       {"down", Modifier::Down},     {"mod", Modifier::Mod},
      {"toggle", Modifier::Toggle}, {"m<->m", Modifier::Toggle},  {"2", Modifier::Times2},
      {"3", Modifier::Times3},      {"4", Modifier::Times4},
  };
  if (name == "none" || name.empty()) return std::monostate{};
  std::string lower(name);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (auto it = modifiers.find(lower); it != modifiers.end()) return it->second;
  if (name == "II") return TransformPad{"II", AffineTransform{1, 2}};
  if (lower.rfind("affine:", 0) == 0) {
    const auto args = lower.substr(7);
    const auto comma = args.find(',');
    if (comma == std::string::npos) throw LookupError("affine pad needs '<mu>,<tau>': " + std::string(name));
    try {
      std::size_t p1 = 0, p2 = 0;
      const auto mu_s = args.substr(0, comma), tau_s = args.substr(comma + 1);
      const Pitch mu = std::stoll(mu_s, &p1);
      const Pitch tau = std::stoll(tau_s, &p2);
      if (p1 != mu_s.size() || p2 != tau_s.size()) throw std::invalid_argument("trailing");
      const AffineTransform a{mu, tau};
      return TransformPad{affine_label(a), a};
    } catch (const std::logic_error&) {
      throw LookupError("bad affine pad: " + std::string(name));
    }
  }
  return degree_pad(name);
}

inline std::string pad_label(const PadRole& role) {
  if (const auto* m = std::get_if<Modifier>(&role)) return std::string(to_string(*m));
  if (const auto* t = std::get_if<TransformPad>(&role)) return t->label;
  return "";
}

// ---------------------------------------------------------------------------

struct PadEvent {
  enum class State { Down, Up };
  int row = 0;
  int col = 0;
  State state = State::Down;
  std::int64_t time_us = 0;

  static PadEvent down(int r, int c, std::int64_t t = 0) { return {r, c, State::Down, t}; }
  static PadEvent up(int r, int c, std::int64_t t = 0) { return {r, c, State::Up, t}; }
};

struct SurfaceState {
  std::bitset<kGridSize * kGridSize> held;
  Pitch key_offset = 0;
  /// Most recent first.
  std::deque<ScaleTransform> history;
  ScaleTransform current;
  std::uint64_t seq = 0;
};

/// Outcome of one pad event: at most one broadcast, and an optional warning.
struct GestureResult {
  std::optional<GlobalTransformMsg> broadcast;
  std::optional<std::string> warning;
  bool state_changed = false;
};

class Conductor {
 public:
  explicit Conductor(Layout layout = default_layout(), Temperament temperament = Temperament(60, 12))
      : layout_(std::move(layout)), temperament_(temperament) {}

  const SurfaceState& state() const noexcept { return state_; }
  const Layout& layout() const noexcept { return layout_; }
  const Temperament& temperament() const noexcept { return temperament_; }

  const PadRole& role(int row, int col) const { return layout_[index(row, col)]; }

  GestureResult handle(const PadEvent& ev) {
    const auto idx = index(ev.row, ev.col);
    const auto& r = layout_[idx];
    GestureResult res;
    if (ev.state == PadEvent::State::Up) {
      res.state_changed = state_.held.test(idx);
      state_.held.reset(idx);
      return res;
    }
    if (const auto* m = std::get_if<Modifier>(&r)) {
      res.state_changed = !state_.held.test(idx);
      state_.held.set(idx);
      if (*m == Modifier::Hist) recall(res);
      return res;
    }
    if (const auto* t = std::get_if<TransformPad>(&r)) fire(*t, res);
    return res;
  }

  /// Releases every held pad, as when a UI loses focus or disconnects.
  bool release_all() {
    const bool any = state_.held.any();
    state_.held.reset();
    return any;
  }

  /// UI snapshot frame.
  nlohmann::ordered_json snapshot() const {
    nlohmann::ordered_json j;
    j["type"] = "state";
    j["key_offset"] = state_.key_offset;
    j["key"] = key_name(temperament_, state_.key_offset);
    j["current"] = labelled(state_.current);
    auto hist = nlohmann::ordered_json::array();
    for (const auto& h : state_.history) hist.push_back(labelled(h));
    j["history"] = std::move(hist);
    j["seq"] = state_.seq;
    auto held = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < state_.held.size(); ++i)
      if (state_.held.test(i)) held.push_back({i / kGridSize, i % kGridSize});
    j["held"] = std::move(held);
    return j;
  }

  /// Frame sent to a UI when it connects; the UI renders pad labels from it.
  nlohmann::ordered_json layout_frame() const {
    nlohmann::ordered_json j;
    j["type"] = "layout";
    auto rows = nlohmann::ordered_json::array();
    for (int r = 0; r < kGridSize; ++r) {
      auto row = nlohmann::ordered_json::array();
      for (int c = 0; c < kGridSize; ++c) row.push_back(pad_label(role(r, c)));
      rows.push_back(std::move(row));
    }
    j["pads"] = std::move(rows);
    j["anchor_midi"] = temperament_.anchor_midi;
    j["base"] = temperament_.base;
    return j;
  }

 private:
  static std::size_t index(int row, int col) {
    if (row < 0 || row >= kGridSize || col < 0 || col >= kGridSize)
      throw std::invalid_argument("pad out of grid: " + std::to_string(row) + "," + std::to_string(col));
    return static_cast<std::size_t>(row * kGridSize + col);
  }

  int held_count(Modifier m) const {
    int n = 0;
    for (std::size_t i = 0; i < layout_.size(); ++i)
      if (state_.held.test(i))
        if (const auto* h = std::get_if<Modifier>(&layout_[i]); h && *h == m) ++n;
    return n;
  }

  static nlohmann::ordered_json labelled(const ScaleTransform& s) {
    auto j = transform_json(s);
    if (const auto* a = std::get_if<AffineTransform>(&s.kind)) {
      j["label"] = affine_label(*a);
    } else {
      j["label"] = "periodic";
    }
    return j;
  }

  void broadcast(const ScaleTransform& s, GestureResult& res) {
    GlobalTransformMsg m;
    m.seq = ++state_.seq;
    m.transform = s;
    m.anchor_midi = temperament_.anchor_midi;
    m.base = temperament_.base;
    state_.current = s;
    res.broadcast = std::move(m);
    res.state_changed = true;
  }

  void push_history(const ScaleTransform& s) {
    state_.history.push_front(s);
    if (state_.history.size() > kHistoryDepth) state_.history.pop_back();
  }

  void fire(const TransformPad& pad, GestureResult& res) {
    const bool mod = held_count(Modifier::Mod) > 0;
    const auto* affine = std::get_if<AffineTransform>(&pad.kind);
    if (!affine) {
      if (mod) {
        res.warning = "Mod has no effect on a periodic pad";
        return;
      }
      if (held_count(Modifier::Toggle) + held_count(Modifier::Times2) + held_count(Modifier::Times3) +
              held_count(Modifier::Times4) + held_count(Modifier::Up) + held_count(Modifier::Down) > 0)
        res.warning = "modifiers ignored on a periodic pad";
      const ScaleTransform s{pad.kind, state_.key_offset};
      broadcast(s, res);
      push_history(s);
      return;
    }

    // Fixed order: quality toggle, then mode multipliers, then semitone shifts.
    AffineTransform a = *affine;
    for (int i = held_count(Modifier::Toggle); i > 0; --i) a = toggle_quality(a);
    for (int i = held_count(Modifier::Times2); i > 0; --i) a = multiply_mode(a, 2);
    for (int i = held_count(Modifier::Times3); i > 0; --i) a = multiply_mode(a, 3);
    for (int i = held_count(Modifier::Times4); i > 0; --i) a = multiply_mode(a, 4);
    a = shift_transposition(a, held_count(Modifier::Up) - held_count(Modifier::Down));

    if (mod) {
      state_.key_offset = detail::checked_add(state_.key_offset, a.tau);
      const ScaleTransform s{AffineTransform::identity(), state_.key_offset};
      broadcast(s, res);
      push_history(s);
      return;
    }
    const ScaleTransform s{a, state_.key_offset};
    broadcast(s, res);
    push_history(s);
  }

  void recall(GestureResult& res) {
    std::size_t depth = 1;
    if (held_count(Modifier::Times2) > 0) depth = 2;
    if (held_count(Modifier::Times3) > 0) depth = 3;
    if (held_count(Modifier::Times4) > 0) depth = 4;
    if (depth >= state_.history.size()) {
      res.warning = "history holds " + std::to_string(state_.history.size()) + " entries, cannot recall depth " +
                    std::to_string(depth);
      return;
    }
    ScaleTransform s = state_.history[depth];
    if (held_count(Modifier::Toggle) > 0) {
      const auto* a = std::get_if<AffineTransform>(&s.kind);
      if (!a) {
        res.warning = "M<->m cannot toggle a periodic map";
        return;
      }
      s.kind = toggle_quality(*a);
    }
    broadcast(s, res);
  }

  Layout layout_;
  Temperament temperament_;
  SurfaceState state_;
};

// ---------------------------------------------------------------------------
// UI protocol

/// Parses an inbound UI frame. Returns nothing for frame types other than "pad".
inline std::optional<PadEvent> parse_ui_frame(std::string_view text, std::int64_t now_us = 0) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DecodeError(std::string("malformed UI frame: ") + e.what());
  }
  if (!j.is_object()) throw DecodeError("UI frame is not an object");
  const auto type = j.find("type");
  if (type == j.end() || !type->is_string()) throw DecodeError("UI frame has no type");
  if (*type != "pad") return std::nullopt;
  const auto row = detail::wire_int(j, "row", 0, kGridSize - 1);
  const auto col = detail::wire_int(j, "col", 0, kGridSize - 1);
  const auto state = j.find("state");
  if (state == j.end() || !state->is_string()) throw DecodeError("pad frame has no state");
  PadEvent ev{static_cast<int>(row), static_cast<int>(col), PadEvent::State::Down, now_us};
  if (*state == "down")
    ev.state = PadEvent::State::Down;
  else if (*state == "up")
    ev.state = PadEvent::State::Up;
  else
    throw DecodeError("pad state must be 'down' or 'up'");
  return ev;
}

inline std::string ui_pad_frame(int row, int col, PadEvent::State state) {
  nlohmann::ordered_json j;
  j["type"] = "pad";
  j["row"] = row;
  j["col"] = col;
  j["state"] = state == PadEvent::State::Down ? "down" : "up";
  return j.dump();
}

/// MIDI control notes mapped onto pads: note-on presses, note-off releases.
class ControlMap {
 public:
  void bind(int note, int row, int col) {
    if (note < kMidiMin || note > kMidiMax) throw ConfigError("control note out of range");
    if (row < 0 || row >= kGridSize || col < 0 || col >= kGridSize) throw ConfigError("control pad out of grid");
    pads_[note] = {row, col};
  }

  bool empty() const noexcept { return pads_.empty(); }

  std::optional<PadEvent> translate(int note, bool down, std::int64_t now_us = 0) const {
    const auto it = pads_.find(note);
    if (it == pads_.end()) return std::nullopt;
    return PadEvent{it->second.first, it->second.second, down ? PadEvent::State::Down : PadEvent::State::Up, now_us};
  }

 private:
  std::map<int, std::pair<int, int>> pads_;
};

}  // namespace livescaler

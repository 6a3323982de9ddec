#pragma once

// `key = value` configuration files for instruments and the conductor.

#include <livescaler/conductor.hpp>
#include <livescaler/engine.hpp>
#include <livescaler/errors.hpp>
#include <livescaler/pitch.hpp>

#include <charconv>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace livescaler {

struct ConfigEntry {
  std::size_t line;
  std::string key;
  std::string value;
};

/// Splits a config document into entries. `#` starts a comment.
inline std::vector<ConfigEntry> parse_key_values(std::string_view text) {
  auto trim = [](std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return std::string_view{};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  std::vector<ConfigEntry> out;
  std::size_t line_no = 0;
  std::size_t begin = 0;
  while (begin < text.size()) {
    auto end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(begin, end - begin);
    begin = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(line_no, "empty key");
    out.push_back({line_no, std::string(key), std::string(trim(line.substr(eq + 1)))});
  }
  return out;
}

namespace detail {

inline std::int64_t config_int(const ConfigEntry& e, std::int64_t lo, std::int64_t hi) {
  std::int64_t v = 0;
  const auto* first = e.value.data();
  const auto* last = first + e.value.size();
  if (!e.value.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || e.value.empty())
    throw ConfigError("line " + std::to_string(e.line) + ": '" + e.key + "' must be an integer");
  if (v < lo || v > hi)
    throw ConfigError("line " + std::to_string(e.line) + ": '" + e.key + "' must be in [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  return v;
}

inline std::vector<std::string> split_list(std::string_view s, char sep = ',') {
  std::vector<std::string> out;
  std::size_t b = 0;
  while (b <= s.size()) {
    auto e = s.find(sep, b);
    if (e == std::string_view::npos) e = s.size();
    auto item = s.substr(b, e - b);
    while (!item.empty() && (item.front() == ' ' || item.front() == '\t')) item.remove_prefix(1);
    while (!item.empty() && (item.back() == ' ' || item.back() == '\t')) item.remove_suffix(1);
    if (!item.empty()) out.emplace_back(item);
    b = e + 1;
  }
  return out;
}

}  // namespace detail

/// Where an instrument listens for broadcast records.
struct ListenSpec {
  enum class Kind { None, Udp, InProcess };
  Kind kind = Kind::None;
  std::string address;  // host:port for UDP, channel id in-process

  static ListenSpec parse(std::string_view s) {
    if (s.empty() || s == "none") return {};
    if (s.rfind("udp://", 0) == 0) return {Kind::Udp, std::string(s.substr(6))};
    if (s.rfind("inproc://", 0) == 0) return {Kind::InProcess, std::string(s.substr(9))};
    throw ConfigError("listen must be udp://host:port, inproc://id or none");
  }
};

struct InstrumentConfig {
  /// Raw MIDI byte stream to read: a device node, a FIFO, `-` for stdin, or `none`.
  std::string input_port = "none";
  /// Raw MIDI byte stream to write: a device node, a FIFO, a file, or `-` for stdout.
  std::string output_port = "-";
  SwitchMode mode = SwitchMode::Legato;
  std::int64_t retrigger_delay_us = 10'000;
  Pitch delta_minus = 6;
  Pitch delta_plus = 6;
  int anchor_midi = 60;
  int base = 12;
  ListenSpec listen;
  /// Channels whose notes are transformed; others pass through untouched. Empty means all.
  std::set<int> channels;

  RangeBounds bounds() const { return {delta_minus, delta_plus}; }

  EngineConfig engine() const {
    EngineConfig c;
    c.mode = mode;
    c.retrigger_delay_us = retrigger_delay_us;
    c.bounds = bounds();
    c.temperament = Temperament(anchor_midi, base);
    return c;
  }

  bool transforms_channel(int ch) const { return channels.empty() || channels.count(ch) > 0; }

  void validate() const { engine().validate(); }

  static InstrumentConfig parse(std::string_view text) {
    InstrumentConfig c;
    for (const auto& e : parse_key_values(text)) {
      const auto& k = e.key;
      if (k == "input") c.input_port = e.value;
      else if (k == "output") c.output_port = e.value;
      else if (k == "mode") c.mode = parse_switch_mode(e.value);
      else if (k == "retrigger_delay_us") c.retrigger_delay_us = detail::config_int(e, 1, 10'000'000);
      else if (k == "delta_minus") c.delta_minus = detail::config_int(e, 0, 1'000'000);
      else if (k == "delta_plus") c.delta_plus = detail::config_int(e, 0, 1'000'000);
      else if (k == "anchor_midi") c.anchor_midi = static_cast<int>(detail::config_int(e, kMidiMin, kMidiMax));
      else if (k == "base") c.base = static_cast<int>(detail::config_int(e, 1, kMaxWireBase));
      else if (k == "listen") c.listen = ListenSpec::parse(e.value);
      else if (k == "channels") {
        for (const auto& item : detail::split_list(e.value))
          c.channels.insert(static_cast<int>(detail::config_int({e.line, k, item}, 0, 15)));
      } else
        throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + k + "'");
    }
    c.validate();
    return c;
  }
};

struct ConductorConfig {
  int anchor_midi = 60;
  int base = 12;
  /// UDP destinations (host:port); multicast group addresses are allowed.
  std::vector<std::string> udp_targets;
  int multicast_ttl = 1;
  /// In-process channel ids to publish on (used when instruments share the process).
  std::vector<std::string> inproc_targets;
  std::string ui_listen = "127.0.0.1:8765";
  /// Raw MIDI byte stream carrying control notes, or `none`.
  std::string control_input = "none";
  ControlMap control_map;
  Layout layout = default_layout();

  /// `load_map` reads a periodic map file for `periodic:<path>` pad roles.
  static ConductorConfig parse(std::string_view text,
                               const std::function<PeriodicMap(const std::string&)>& load_map = {}) {
    ConductorConfig c;
    for (const auto& e : parse_key_values(text)) {
      const auto& k = e.key;
      const auto where = "line " + std::to_string(e.line) + ": ";
      if (k == "anchor_midi") c.anchor_midi = static_cast<int>(detail::config_int(e, kMidiMin, kMidiMax));
      else if (k == "base") c.base = static_cast<int>(detail::config_int(e, 1, kMaxWireBase));
      else if (k == "udp_targets") c.udp_targets = detail::split_list(e.value);
      else if (k == "inproc_targets") c.inproc_targets = detail::split_list(e.value);
      else if (k == "multicast_ttl") c.multicast_ttl = static_cast<int>(detail::config_int(e, 0, 255));
      else if (k == "ui_listen") c.ui_listen = e.value;
      else if (k == "control_input") c.control_input = e.value;
      else if (k.rfind("control.", 0) == 0) {
        const ConfigEntry note{e.line, k, k.substr(8)};
        const auto rc = detail::split_list(e.value);
        if (rc.size() != 2) throw ConfigError(where + "control mapping must be '<row>,<col>'");
        c.control_map.bind(static_cast<int>(detail::config_int(note, kMidiMin, kMidiMax)),
                           static_cast<int>(detail::config_int({e.line, k, rc[0]}, 0, kGridSize - 1)),
                           static_cast<int>(detail::config_int({e.line, k, rc[1]}, 0, kGridSize - 1)));
      } else if (k.rfind("pad.", 0) == 0) {
        const auto rc = detail::split_list(k.substr(4), '.');
        if (rc.size() != 2) throw ConfigError(where + "pad key must be 'pad.<row>.<col>'");
        const auto row = detail::config_int({e.line, k, rc[0]}, 0, kGridSize - 1);
        const auto col = detail::config_int({e.line, k, rc[1]}, 0, kGridSize - 1);
        auto& slot = c.layout[static_cast<std::size_t>(row * kGridSize + col)];
        if (e.value.rfind("periodic:", 0) == 0) {
          if (!load_map) throw ConfigError(where + "periodic pads need file access");
          const auto path = e.value.substr(9);
          try {
            slot = TransformPad{"map:" + path, load_map(path)};
          } catch (const ParseError& pe) {
            throw ConfigError(where + path + ": " + pe.what());
          }
        } else {
          try {
            slot = parse_pad_role(e.value);
          } catch (const LookupError& le) {
            throw ConfigError(where + le.what());
          }
        }
      } else
        throw ConfigError(where + "unknown key '" + k + "'");
    }
    Temperament(c.anchor_midi, c.base).validate();
    return c;
  }
};

}  // namespace livescaler

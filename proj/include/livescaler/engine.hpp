#pragma once

// Per-instrument note stream transformer. Applies the current ScaleTransform to
// incoming notes, remembers which note was emitted for every held original so
// that note-offs always release the right pitch, and implements the four
// policies for notes that are sounding when the transform changes.

#include <livescaler/errors.hpp>
#include <livescaler/pitch.hpp>

#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace livescaler {

enum class SwitchMode { Stop, Legato, ReTrigger, Wait };

inline std::string_view to_string(SwitchMode m) {
  switch (m) {
    case SwitchMode::Stop: return "stop";
    case SwitchMode::Legato: return "legato";
    case SwitchMode::ReTrigger: return "retrigger";
    case SwitchMode::Wait: return "wait";
  }
  return "?";
}

inline SwitchMode parse_switch_mode(std::string_view s) {
  std::string lower(s);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "stop") return SwitchMode::Stop;
  if (lower == "legato") return SwitchMode::Legato;
  if (lower == "retrigger") return SwitchMode::ReTrigger;
  if (lower == "wait") return SwitchMode::Wait;
  throw ConfigError("unknown switch mode: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Events

struct NoteOn {
  int note = 0;
  int velocity = 0;
  int channel = 0;
  friend bool operator==(const NoteOn&, const NoteOn&) = default;
};

struct NoteOff {
  int note = 0;
  int channel = 0;
  friend bool operator==(const NoteOff&, const NoteOff&) = default;
};

/// A new transform, optionally with the global temperament that comes with it.
struct TransformChange {
  ScaleTransform transform;
  std::optional<Temperament> temperament;
};

struct Flush {};

struct Tick {
  std::int64_t time_us = 0;
};

using InputEvent = std::variant<NoteOn, NoteOff, TransformChange, Flush, Tick>;

namespace detail {
inline void check_note_channel(int note, int channel) {
  if (note < kMidiMin || note > kMidiMax) throw std::invalid_argument("note out of range: " + std::to_string(note));
  if (channel < 0 || channel > 15) throw std::invalid_argument("channel out of range: " + std::to_string(channel));
}
}  // namespace detail

/// Validated note-on; velocity 0 becomes a note-off.
inline InputEvent make_note_on(int note, int velocity, int channel) {
  detail::check_note_channel(note, channel);
  if (velocity < 0 || velocity > 127) throw std::invalid_argument("velocity out of range: " + std::to_string(velocity));
  if (velocity == 0) return NoteOff{note, channel};
  return NoteOn{note, velocity, channel};
}

inline InputEvent make_note_off(int note, int channel) {
  detail::check_note_channel(note, channel);
  return NoteOff{note, channel};
}

struct OutputEvent {
  enum class Kind { NoteOn, NoteOff };
  Kind kind = Kind::NoteOn;
  int note = 0;
  int velocity = 0;  // 0 for note-offs
  int channel = 0;
  /// Offset from the triggering input. Non-zero only for ReTrigger re-attacks.
  std::int64_t delay_us = 0;

  static OutputEvent on(int note, int velocity, int channel, std::int64_t delay = 0) {
    return {Kind::NoteOn, note, velocity, channel, delay};
  }
  static OutputEvent off(int note, int channel) { return {Kind::NoteOff, note, 0, channel, 0}; }

  bool is_on() const noexcept { return kind == Kind::NoteOn; }

  friend bool operator==(const OutputEvent&, const OutputEvent&) = default;
};

// ---------------------------------------------------------------------------

/// Instrument-local parameters.
struct EngineConfig {
  SwitchMode mode = SwitchMode::Legato;
  std::int64_t retrigger_delay_us = 10'000;
  RangeBounds bounds;
  Temperament temperament;

  void validate() const {
    temperament.validate();
    bounds.validate(temperament.base);
    if (retrigger_delay_us <= 0) throw ConfigError("retrigger delay must be positive");
  }
};

class NoteEngine {
 public:
  static constexpr int kChannels = 16;
  static constexpr int kNotes = 128;

  explicit NoteEngine(EngineConfig cfg, ScaleTransform initial = ScaleTransform::identity())
      : cfg_(std::move(cfg)), current_(std::move(initial)) {
    cfg_.validate();
    counts_.fill(0);
    stale_per_channel_.fill(0);
  }

  const EngineConfig& config() const noexcept { return cfg_; }
  const ScaleTransform& current() const noexcept { return current_; }

  /// Notes that could not be placed in MIDI range (or overflowed) and were dropped.
  std::size_t dropped() const noexcept { return dropped_; }

  /// Emitted note currently bound to an original note, if any.
  std::optional<int> binding(int channel, int note) const {
    const auto& b = bindings_[slot(channel, note)];
    if (!b.active()) return std::nullopt;
    return b.emitted;
  }

  bool is_stale(int channel, int note) const { return bindings_[slot(channel, note)].stale; }

  /// Reference count of an emitted note.
  std::uint32_t sounding(int channel, int note) const { return counts_[slot(channel, note)]; }

  std::size_t binding_count() const noexcept {
    std::size_t n = 0;
    for (const auto& b : bindings_) n += b.active() ? 1 : 0;
    return n;
  }

  /// True when the binding table and the reference counts agree.
  bool invariants_hold() const {
    std::array<std::uint32_t, kChannels * kNotes> expected{};
    std::array<std::uint16_t, kChannels> stale{};
    for (int i = 0; i < kChannels * kNotes; ++i) {
      const auto& b = bindings_[i];
      if (!b.active()) {
        if (b.stale) return false;
        continue;
      }
      if (b.emitted < kMidiMin || b.emitted > kMidiMax) return false;
      ++expected[slot(i / kNotes, b.emitted)];
      if (b.stale) ++stale[i / kNotes];
    }
    return expected == counts_ && stale == stale_per_channel_;
  }

  void process(const InputEvent& ev, std::vector<OutputEvent>& out) {
    std::visit([&](const auto& e) { handle(e, out); }, ev);
  }

  std::vector<OutputEvent> process(const InputEvent& ev) {
    std::vector<OutputEvent> out;
    process(ev, out);
    return out;
  }

 private:
  struct Binding {
    int emitted = -1;
    int velocity = 0;
    bool stale = false;
    bool active() const noexcept { return emitted >= 0; }
  };

  static constexpr std::size_t slot(int channel, int note) noexcept {
    return static_cast<std::size_t>(channel * kNotes + note);
  }

  std::optional<int> map_note(int note) {
    try {
      auto r = transform_midi_note(note, current_, cfg_.temperament, cfg_.bounds);
      if (!r) ++dropped_;
      return r;
    } catch (const OverflowError&) {
      ++dropped_;
      return std::nullopt;
    }
  }

  // Drops the binding at `idx` and emits the note-off if nothing else holds its note.
  void release(std::size_t idx, std::vector<OutputEvent>& out) {
    auto& b = bindings_[idx];
    const int channel = static_cast<int>(idx / kNotes);
    if (b.stale) --stale_per_channel_[channel];
    auto& count = counts_[slot(channel, b.emitted)];
    if (--count == 0) out.push_back(OutputEvent::off(b.emitted, channel));
    b = Binding{};
  }

  void acquire(std::size_t idx, int emitted, int velocity, std::int64_t delay, std::vector<OutputEvent>& out) {
    const int channel = static_cast<int>(idx / kNotes);
    bindings_[idx] = Binding{emitted, velocity, false};
    if (counts_[slot(channel, emitted)]++ == 0) out.push_back(OutputEvent::on(emitted, velocity, channel, delay));
  }

  void handle(const NoteOn& e, std::vector<OutputEvent>& out) {
    if (stale_per_channel_[e.channel] > 0) {
      for (int n = 0; n < kNotes; ++n) {
        const auto idx = slot(e.channel, n);
        if (bindings_[idx].stale) release(idx, out);
      }
    }
    const auto idx = slot(e.channel, e.note);
    if (bindings_[idx].active()) release(idx, out);
    const auto mapped = map_note(e.note);
    if (!mapped) return;
    acquire(idx, *mapped, e.velocity, 0, out);
  }

  void handle(const NoteOff& e, std::vector<OutputEvent>& out) {
    const auto idx = slot(e.channel, e.note);
    if (bindings_[idx].active()) release(idx, out);
  }

  void handle(const TransformChange& e, std::vector<OutputEvent>& out) {
    if (e.temperament) {
      cfg_.bounds.validate(e.temperament->base);
      cfg_.temperament = *e.temperament;
    }
    current_ = e.transform;
    switch (cfg_.mode) {
      case SwitchMode::Stop:
        for (std::size_t idx = 0; idx < bindings_.size(); ++idx)
          if (bindings_[idx].active()) release(idx, out);
        break;
      case SwitchMode::Legato:
        rebind_all(0, out);
        break;
      case SwitchMode::ReTrigger:
        rebind_all(cfg_.retrigger_delay_us, out);
        break;
      case SwitchMode::Wait:
        for (std::size_t idx = 0; idx < bindings_.size(); ++idx) {
          auto& b = bindings_[idx];
          if (b.active() && !b.stale) {
            b.stale = true;
            ++stale_per_channel_[idx / kNotes];
          }
        }
        break;
    }
  }

  // Moves every sounding note to its image under the new transform. All releases
  // happen before any re-attack so that swapped pitches come out as clean off/on pairs.
  void rebind_all(std::int64_t delay, std::vector<OutputEvent>& out) {
    struct Move {
      std::size_t idx;
      std::optional<int> target;
      int velocity;
    };
    std::vector<Move> moves;
    for (std::size_t idx = 0; idx < bindings_.size(); ++idx) {
      const auto& b = bindings_[idx];
      if (!b.active()) continue;
      const auto target = map_note(static_cast<int>(idx % kNotes));
      if (target && *target == b.emitted) continue;
      moves.push_back({idx, target, b.velocity});
    }
    for (const auto& m : moves) release(m.idx, out);
    for (const auto& m : moves)
      if (m.target) acquire(m.idx, *m.target, m.velocity, delay, out);
  }

  void handle(const Flush&, std::vector<OutputEvent>& out) {
    for (int c = 0; c < kChannels; ++c)
      for (int n = 0; n < kNotes; ++n)
        if (counts_[slot(c, n)] > 0) out.push_back(OutputEvent::off(n, c));
    bindings_.fill(Binding{});
    counts_.fill(0);
    stale_per_channel_.fill(0);
  }

  void handle(const Tick&, std::vector<OutputEvent>&) {}

  EngineConfig cfg_;
  ScaleTransform current_;
  std::array<Binding, kChannels * kNotes> bindings_{};
  std::array<std::uint32_t, kChannels * kNotes> counts_{};
  std::array<std::uint16_t, kChannels> stale_per_channel_{};
  std::size_t dropped_ = 0;
};

// ---------------------------------------------------------------------------

/// Releases delayed output events when they fall due. A note-off that arrives
/// while a re-attack of the same note is still pending cancels that re-attack
/// and is itself swallowed, since the note never restarted. Time units are the
/// caller's (microseconds live, ticks offline).
class OutputScheduler {
 public:
  template <typename Sink>
  void submit(std::int64_t now, const OutputEvent& ev, std::int64_t delay, Sink&& sink) {
    if (delay > 0) {
      pending_.push_back({now + delay, seq_++, ev});
      return;
    }
    if (!ev.is_on()) {
      for (auto it = pending_.begin(); it != pending_.end(); ++it) {
        if (it->event.is_on() && it->event.note == ev.note && it->event.channel == ev.channel) {
          pending_.erase(it);
          return;
        }
      }
    }
    sink(now, ev);
  }

  /// Emits everything due at or before `now`, in due-time order.
  template <typename Sink>
  void poll(std::int64_t now, Sink&& sink) {
    while (true) {
      auto best = pending_.end();
      for (auto it = pending_.begin(); it != pending_.end(); ++it)
        if (it->due <= now && (best == pending_.end() || std::pair(it->due, it->seq) < std::pair(best->due, best->seq)))
          best = it;
      if (best == pending_.end()) return;
      const auto item = *best;
      pending_.erase(best);
      OutputEvent ev = item.event;
      ev.delay_us = 0;
      sink(item.due, ev);
    }
  }

  std::optional<std::int64_t> next_due() const {
    std::optional<std::int64_t> best;
    for (const auto& p : pending_)
      if (!best || p.due < *best) best = p.due;
    return best;
  }

  bool empty() const noexcept { return pending_.empty(); }

 private:
  struct Pending {
    std::int64_t due;
    std::uint64_t seq;
    OutputEvent event;
  };
  std::vector<Pending> pending_;
  std::uint64_t seq_ = 0;
};

}  // namespace livescaler

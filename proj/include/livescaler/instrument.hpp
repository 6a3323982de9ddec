#pragma once

// Live instrument bridge: raw MIDI bytes in, broadcast records in, raw MIDI
// bytes out. Runs the same engine, scheduler and receiver as the offline renderer.

#include <livescaler/config.hpp>
#include <livescaler/engine.hpp>
#include <livescaler/wire.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace livescaler {

/// Splits a live MIDI byte stream into messages. Handles running status,
/// interleaved real-time bytes and sysex. Stray data bytes are discarded.
class MidiStreamParser {
 public:
  template <typename Sink>
  void feed(std::span<const std::uint8_t> bytes, Sink&& sink) {
    for (const auto b : bytes) feed(b, sink);
  }

  template <typename Sink>
  void feed(std::uint8_t b, Sink&& sink) {
    if (b >= 0xF8) {  // real-time: single byte, may appear anywhere
      const std::uint8_t msg[1] = {b};
      sink(std::span<const std::uint8_t>(msg, 1));
      return;
    }
    if (in_sysex_) {
      msg_.push_back(b);
      if (b == 0xF7) {
        in_sysex_ = false;
        sink(std::span<const std::uint8_t>(msg_));
        msg_.clear();
      } else if (b & 0x80) {  // sysex aborted by a new status
        msg_.pop_back();
        msg_.clear();
        in_sysex_ = false;
        feed(b, sink);
      }
      return;
    }
    if (b & 0x80) {
      msg_.clear();
      if (b == 0xF0) {
        in_sysex_ = true;
        running_ = 0;
        msg_.push_back(b);
        return;
      }
      if (b >= 0xF0) {  // system common cancels running status
        running_ = 0;
        expected_ = system_common_length(b);
        msg_.push_back(b);
        if (expected_ == 0) {
          sink(std::span<const std::uint8_t>(msg_));
          msg_.clear();
        }
        return;
      }
      running_ = b;
      expected_ = ((b & 0xF0) == 0xC0 || (b & 0xF0) == 0xD0) ? 1 : 2;
      msg_.push_back(b);
      return;
    }
    if (msg_.empty()) {
      if (!running_) {
        ++discarded_;
        return;
      }
      msg_.push_back(running_);
      expected_ = ((running_ & 0xF0) == 0xC0 || (running_ & 0xF0) == 0xD0) ? 1 : 2;
    }
    msg_.push_back(b);
    if (static_cast<int>(msg_.size()) - 1 == expected_) {
      sink(std::span<const std::uint8_t>(msg_));
      msg_.clear();
    }
  }

  std::size_t discarded() const noexcept { return discarded_; }

 private:
  static int system_common_length(std::uint8_t b) {
    switch (b) {
      case 0xF1: case 0xF3: return 1;
      case 0xF2: return 2;
      default: return 0;
    }
  }

  std::vector<std::uint8_t> msg_;
  std::uint8_t running_ = 0;
  int expected_ = 0;
  bool in_sysex_ = false;
  std::size_t discarded_ = 0;
};

/// Encodes an engine output as a 3-byte channel message.
inline std::array<std::uint8_t, 3> encode_output(const OutputEvent& e) {
  if (e.is_on())
    return {static_cast<std::uint8_t>(0x90 | e.channel), static_cast<std::uint8_t>(e.note),
            static_cast<std::uint8_t>(e.velocity)};
  return {static_cast<std::uint8_t>(0x80 | e.channel), static_cast<std::uint8_t>(e.note), 0x40};
}

class Instrument {
 public:
  /// Receives each outgoing MIDI message.
  using MidiSink = std::function<void(std::span<const std::uint8_t>)>;
  /// Optional observer of every emitted note event, with its emission time.
  using EventObserver = std::function<void(std::int64_t, const OutputEvent&)>;

  explicit Instrument(InstrumentConfig cfg)
      : cfg_(std::move(cfg)), engine_(cfg_.engine()), receiver_(cfg_.bounds()) {}

  const InstrumentConfig& config() const noexcept { return cfg_; }
  const NoteEngine& engine() const noexcept { return engine_; }
  const Receiver& receiver() const noexcept { return receiver_; }

  void set_observer(EventObserver obs) { observer_ = std::move(obs); }

  void on_midi(std::span<const std::uint8_t> bytes, std::int64_t now_us, const MidiSink& out) {
    parser_.feed(bytes, [&](std::span<const std::uint8_t> msg) { on_message(msg, now_us, out); });
  }

  /// Applies one broadcast record. Malformed, rejected and stale records change nothing.
  Receiver::Result on_record(std::string_view record, std::int64_t now_us, const MidiSink& out) {
    auto r = receiver_.receive(record);
    if (r.status == Receiver::Status::Fresh) run(r.msg->to_change(), now_us, out);
    return r;
  }

  /// Applies an already-decoded message through the same sequence guard.
  Receiver::Result on_record(const GlobalTransformMsg& m, std::int64_t now_us, const MidiSink& out) {
    return on_record(encode_msg(m), now_us, out);
  }

  void poll(std::int64_t now_us, const MidiSink& out) {
    scheduler_.poll(now_us, [&](std::int64_t t, const OutputEvent& e) { write(t, e, out); });
  }

  std::optional<std::int64_t> next_due() const { return scheduler_.next_due(); }

  /// Releases everything still sounding. Nothing remains scheduled afterwards.
  void shutdown(std::int64_t now_us, const MidiSink& out) {
    poll(now_us, out);
    run(Flush{}, now_us, out);
  }

 private:
  void on_message(std::span<const std::uint8_t> msg, std::int64_t now_us, const MidiSink& out) {
    if (msg.size() == 3 && (msg[0] & 0xE0) == 0x80) {
      const int ch = msg[0] & 0x0F;
      if (cfg_.transforms_channel(ch)) {
        const bool on = (msg[0] & 0xF0) == 0x90;
        run(on ? make_note_on(msg[1], msg[2], ch) : make_note_off(msg[1], ch), now_us, out);
        return;
      }
    }
    out(msg);
  }

  void run(const InputEvent& ev, std::int64_t now_us, const MidiSink& out) {
    poll(now_us, out);
    outputs_.clear();
    engine_.process(ev, outputs_);
    for (const auto& e : outputs_)
      scheduler_.submit(now_us, e, e.delay_us, [&](std::int64_t t, const OutputEvent& oe) { write(t, oe, out); });
  }

  void write(std::int64_t t, const OutputEvent& e, const MidiSink& out) {
    if (observer_) observer_(t, e);
    const auto bytes = encode_output(e);
    out(std::span<const std::uint8_t>(bytes));
  }

  InstrumentConfig cfg_;
  NoteEngine engine_;
  Receiver receiver_;
  OutputScheduler scheduler_;
  MidiStreamParser parser_;
  std::vector<OutputEvent> outputs_;
  EventObserver observer_;
};

}  // namespace livescaler

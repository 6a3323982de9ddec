#pragma once

// Offline rendering: replays a Standard MIDI File through one note engine per
// track, applying broadcast records from a command script at given ticks.

#include <livescaler/config.hpp>
#include <livescaler/engine.hpp>
#include <livescaler/errors.hpp>
#include <livescaler/smf.hpp>
#include <livescaler/wire.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace livescaler {

struct ScriptEntry {
  std::uint64_t tick = 0;
  /// The record exactly as it appears in the script.
  std::string record;
};

using CommandScript = std::vector<ScriptEntry>;

/// Parses `at <tick> <wire-record>` lines. Records are validated here so that a
/// bad script fails before rendering starts.
inline CommandScript parse_command_script(std::string_view text) {
  CommandScript out;
  std::size_t line_no = 0;
  std::size_t begin = 0;
  while (begin < text.size()) {
    auto end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(begin, end - begin);
    begin = end + 1;
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
    if (line.empty() || line.front() == '#') continue;
    if (line.rfind("at ", 0) != 0) throw ParseError(line_no, "expected 'at <tick> <record>'");
    line.remove_prefix(3);
    const auto sp = line.find(' ');
    if (sp == std::string_view::npos) throw ParseError(line_no, "missing record");
    const auto tick_s = line.substr(0, sp);
    std::uint64_t tick = 0;
    if (tick_s.empty() || tick_s.find_first_not_of("0123456789") != std::string_view::npos || tick_s.size() > 18)
      throw ParseError(line_no, "bad tick '" + std::string(tick_s) + "'");
    for (char c : tick_s) tick = tick * 10 + static_cast<std::uint64_t>(c - '0');
    auto record = line.substr(sp + 1);
    while (!record.empty() && record.front() == ' ') record.remove_prefix(1);
    try {
      decode_msg(record);
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
    if (!out.empty() && tick < out.back().tick) throw ParseError(line_no, "script times must be non-decreasing");
    out.push_back({tick, std::string(record)});
  }
  return out;
}

inline std::string format_command_script(const std::vector<std::pair<std::uint64_t, GlobalTransformMsg>>& entries) {
  std::string out;
  for (const auto& [tick, msg] : entries) out += "at " + std::to_string(tick) + " " + encode_msg(msg);
  return out;
}

/// Converts microseconds to ticks under the file's tempo map.
class TempoMap {
 public:
  explicit TempoMap(const smf::File& f) : division_(f.division) {
    for (const auto& c : f.chunks)
      for (const auto& ev : c.events)
        if (const auto t = ev.tempo()) changes_.emplace_back(ev.tick, t);
    std::stable_sort(changes_.begin(), changes_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  }

  /// Number of ticks covering `us` starting at `tick`; at least one tick.
  std::uint64_t ticks_for(std::uint64_t tick, std::int64_t us) const {
    double ticks;
    if (division_ & 0x8000) {
      const int fps_code = -static_cast<std::int8_t>(division_ >> 8);
      const double fps = fps_code == 29 ? 29.97 : fps_code;
      ticks = static_cast<double>(us) * fps * (division_ & 0xFF) / 1e6;
    } else {
      std::uint32_t tempo = 500'000;
      for (const auto& [t, v] : changes_) {
        if (t > tick) break;
        tempo = v;
      }
      ticks = static_cast<double>(us) * division_ / tempo;
    }
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(ticks)));
  }

 private:
  std::uint16_t division_;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> changes_;
};

struct RenderStats {
  std::size_t dropped_notes = 0;
  std::size_t stale_records = 0;
  std::size_t rejected_records = 0;
};

struct RenderResult {
  smf::File file;
  RenderStats stats;
};

namespace detail {

inline smf::Event synth_event(std::uint64_t tick, const OutputEvent& e) {
  smf::Event ev;
  ev.tick = tick;
  if (e.is_on())
    ev.bytes = {static_cast<std::uint8_t>(0x90 | e.channel), static_cast<std::uint8_t>(e.note),
                static_cast<std::uint8_t>(e.velocity)};
  else
    ev.bytes = {static_cast<std::uint8_t>(0x80 | e.channel), static_cast<std::uint8_t>(e.note), 0x40};
  return ev;
}

inline std::vector<smf::Event> render_track(const std::vector<smf::Event>& events, const CommandScript& script,
                                            const InstrumentConfig& cfg, const TempoMap& tempo, RenderStats& stats) {
  NoteEngine engine(cfg.engine());
  Receiver receiver(cfg.bounds());
  OutputScheduler scheduler;
  std::vector<smf::Event> out;
  std::vector<OutputEvent> outputs;

  auto emit = [&](std::int64_t tick, const OutputEvent& e) { out.push_back(synth_event(static_cast<std::uint64_t>(tick), e)); };
  auto submit_all = [&](std::uint64_t tick, const smf::Event* source) {
    // The last output that answers the input note in kind keeps the input's encoding.
    std::size_t direct = outputs.size();
    if (source && !outputs.empty()) {
      const auto& last = outputs.back();
      if (last.delay_us == 0 && last.channel == source->channel() && last.is_on() == source->is_note_on())
        direct = outputs.size() - 1;
    }
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      const auto& e = outputs[i];
      const auto delay = e.delay_us > 0 ? static_cast<std::int64_t>(tempo.ticks_for(tick, e.delay_us)) : 0;
      if (i == direct) {
        scheduler.submit(static_cast<std::int64_t>(tick), e, delay, [&](std::int64_t, const OutputEvent& oe) {
          smf::Event ev = *source;
          ev.bytes[1] = static_cast<std::uint8_t>(oe.note);
          out.push_back(std::move(ev));
        });
      } else {
        scheduler.submit(static_cast<std::int64_t>(tick), e, delay, emit);
      }
    }
    outputs.clear();
  };

  std::size_t next_cmd = 0;
  auto apply_script_until = [&](std::uint64_t tick) {
    for (; next_cmd < script.size() && script[next_cmd].tick <= tick; ++next_cmd) {
      const auto at = script[next_cmd].tick;
      scheduler.poll(static_cast<std::int64_t>(at), emit);
      const auto r = receiver.receive(script[next_cmd].record);
      if (r.status == Receiver::Status::Stale) ++stats.stale_records;
      if (r.status == Receiver::Status::Rejected) ++stats.rejected_records;
      if (r.status != Receiver::Status::Fresh) continue;
      engine.process(r.msg->to_change(), outputs);
      submit_all(at, nullptr);
    }
  };

  bool ended = false;
  for (const auto& ev : events) {
    apply_script_until(ev.tick);
    scheduler.poll(static_cast<std::int64_t>(ev.tick), emit);
    if (ev.is_end_of_track()) {
      engine.process(Flush{}, outputs);
      submit_all(ev.tick, nullptr);
      scheduler.poll(static_cast<std::int64_t>(ev.tick), emit);
      out.push_back(ev);
      ended = true;
      continue;
    }
    if (ev.is_note() && cfg.transforms_channel(ev.channel())) {
      const int note = ev.bytes[1];
      if (ev.is_note_on())
        engine.process(NoteOn{note, ev.bytes[2], ev.channel()}, outputs);
      else
        engine.process(NoteOff{note, ev.channel()}, outputs);
      submit_all(ev.tick, &ev);
      continue;
    }
    out.push_back(ev);
  }
  if (!ended) {
    const std::uint64_t last = events.empty() ? 0 : events.back().tick;
    engine.process(Flush{}, outputs);
    submit_all(last, nullptr);
    scheduler.poll(static_cast<std::int64_t>(last), emit);
  }
  stats.dropped_notes += engine.dropped();
  return out;
}

}  // namespace detail

/// Pure function of its inputs: identical inputs give byte-identical output.
/// Transform changes at a tick apply before the notes at that tick; the end of
/// each track flushes every note still sounding.
inline RenderResult render_offline(const smf::File& in, const CommandScript& script, const InstrumentConfig& cfg) {
  cfg.validate();
  RenderResult res;
  res.file.format = in.format;
  res.file.division = in.division;
  res.file.header_extra = in.header_extra;
  const TempoMap tempo(in);
  for (const auto& c : in.chunks) {
    smf::Chunk oc = c;
    if (c.is_track) oc.events = detail::render_track(c.events, script, cfg, tempo, res.stats);
    res.file.chunks.push_back(std::move(oc));
  }
  return res;
}

}  // namespace livescaler

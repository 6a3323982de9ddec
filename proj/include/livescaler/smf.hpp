#pragma once

// Standard MIDI File reading and writing (formats 0 and 1).
//
// The reader keeps enough of the original encoding (running status usage, the
// exact delta-time bytes, unknown chunks, extra header bytes) for the writer to
// reproduce an unmodified file byte for byte.

#include <livescaler/errors.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace livescaler::smf {

struct Event {
  /// Absolute time in ticks.
  std::uint64_t tick = 0;
  /// Complete message including its status byte. Meta events start with 0xFF,
  /// sysex with 0xF0/0xF7, and both keep their length prefix.
  std::vector<std::uint8_t> bytes;
  /// The status byte was omitted in the source file.
  bool running_status = false;
  /// Delta-time bytes as found in the source file; empty for synthesized events.
  std::vector<std::uint8_t> delta_bytes;

  std::uint8_t status() const noexcept { return bytes.empty() ? 0 : bytes[0]; }
  bool is_channel() const noexcept { return status() >= 0x80 && status() < 0xF0; }
  bool is_meta() const noexcept { return status() == 0xFF; }
  int channel() const noexcept { return status() & 0x0F; }
  bool is_note_on() const noexcept { return (status() & 0xF0) == 0x90 && bytes.size() == 3 && bytes[2] > 0; }
  /// Note-off, including note-on with velocity 0.
  bool is_note_off() const noexcept {
    return bytes.size() == 3 && ((status() & 0xF0) == 0x80 || ((status() & 0xF0) == 0x90 && bytes[2] == 0));
  }
  bool is_note() const noexcept { return is_note_on() || is_note_off(); }
  bool is_end_of_track() const noexcept { return is_meta() && bytes.size() >= 2 && bytes[1] == 0x2F; }
  /// Tempo in microseconds per quarter note, or 0 if this is not a tempo event.
  std::uint32_t tempo() const noexcept {
    if (!is_meta() || bytes.size() < 6 || bytes[1] != 0x51 || bytes[2] != 3) return 0;
    return (std::uint32_t{bytes[3]} << 16) | (std::uint32_t{bytes[4]} << 8) | bytes[5];
  }
};

struct Chunk {
  char id[4] = {'M', 'T', 'r', 'k'};
  bool is_track = true;
  std::vector<Event> events;          // for tracks
  std::vector<std::uint8_t> payload;  // for other chunks, verbatim
};

struct File {
  std::uint16_t format = 1;
  std::uint16_t division = 480;
  std::vector<std::uint8_t> header_extra;
  std::vector<Chunk> chunks;

  std::size_t track_count() const {
    std::size_t n = 0;
    for (const auto& c : chunks) n += c.is_track ? 1 : 0;
    return n;
  }
};

namespace detail {

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data, std::size_t base = 0) : data_(data), base_(base) {}

  std::size_t pos() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ >= data_.size(); }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  std::uint8_t u8() {
    if (pos_ >= data_.size()) throw SmfError(base_ + pos_, "unexpected end of data");
    return data_[pos_++];
  }
  std::uint8_t peek() const {
    if (pos_ >= data_.size()) throw SmfError(base_ + pos_, "unexpected end of data");
    return data_[pos_];
  }
  std::uint16_t u16() {
    const auto hi = u8();
    return static_cast<std::uint16_t>((hi << 8) | u8());
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | u8();
    return v;
  }
  std::uint32_t vlq(std::vector<std::uint8_t>* raw = nullptr) {
    const auto start = pos_;
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const auto b = u8();
      if (raw) raw->push_back(b);
      v = (v << 7) | (b & 0x7F);
      if (!(b & 0x80)) return v;
    }
    throw SmfError(base_ + start, "variable-length quantity longer than 4 bytes");
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    if (n > remaining()) throw SmfError(base_ + pos_, "length " + std::to_string(n) + " runs past end of data");
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t base_ = 0;
  std::size_t pos_ = 0;
};

inline void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[5];
  int n = 0;
  buf[n++] = v & 0x7F;
  while (v >>= 7) buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
  while (n) out.push_back(buf[--n]);
}

inline std::uint32_t decode_vlq(const std::vector<std::uint8_t>& raw) {
  std::uint32_t v = 0;
  for (auto b : raw) v = (v << 7) | (b & 0x7F);
  return v;
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

inline std::vector<Event> read_track(std::span<const std::uint8_t> body, std::size_t base_offset) {
  Reader r(body, base_offset);
  std::vector<Event> events;
  std::uint8_t running = 0;
  std::uint64_t tick = 0;
  auto fail = [&](std::size_t at, const std::string& what) -> SmfError { return SmfError(base_offset + at, what); };
  while (!r.at_end()) {
      Event ev;
      tick += r.vlq(&ev.delta_bytes);
      ev.tick = tick;
      const auto status_pos = r.pos();
      std::uint8_t status = r.peek();
      if (status & 0x80) {
        r.u8();
      } else {
        if (!running) throw fail(status_pos, "data byte without running status");
        status = running;
        ev.running_status = true;
      }
      ev.bytes.push_back(status);
      if (status < 0xF0) {
        const int n = ((status & 0xF0) == 0xC0 || (status & 0xF0) == 0xD0) ? 1 : 2;
        for (int i = 0; i < n; ++i) {
          const auto at = r.pos();
          const auto b = r.u8();
          if (b & 0x80) throw fail(at, "status byte inside channel message");
          ev.bytes.push_back(b);
        }
        running = status;
      } else if (status == 0xF0 || status == 0xF7) {
        std::vector<std::uint8_t> len_raw;
        const auto len = r.vlq(&len_raw);
        ev.bytes.insert(ev.bytes.end(), len_raw.begin(), len_raw.end());
        const auto data = r.bytes(len);
        ev.bytes.insert(ev.bytes.end(), data.begin(), data.end());
        running = 0;
      } else if (status == 0xFF) {
        ev.bytes.push_back(r.u8());
        std::vector<std::uint8_t> len_raw;
        const auto len = r.vlq(&len_raw);
        ev.bytes.insert(ev.bytes.end(), len_raw.begin(), len_raw.end());
        const auto data = r.bytes(len);
        ev.bytes.insert(ev.bytes.end(), data.begin(), data.end());
        running = 0;
      } else {
        throw fail(status_pos, "invalid status byte in track");
      }
      const bool eot = ev.is_end_of_track();
      events.push_back(std::move(ev));
      if (eot && !r.at_end()) throw fail(r.pos(), "data after end-of-track");
  }
  return events;
}

}  // namespace detail

/// Parses a format 0 or 1 file. Throws SmfError with the byte offset of the problem.
inline File read(std::span<const std::uint8_t> data) {
  detail::Reader r(data);
  File f;
  const auto magic = r.bytes(4);
  if (std::string(magic.begin(), magic.end()) != "MThd") throw SmfError(0, "missing MThd header");
  const auto hlen = r.u32();
  if (hlen < 6) throw SmfError(4, "header chunk too short");
  const auto header = r.bytes(hlen);
  f.format = static_cast<std::uint16_t>((header[0] << 8) | header[1]);
  const auto ntracks = static_cast<std::uint16_t>((header[2] << 8) | header[3]);
  f.division = static_cast<std::uint16_t>((header[4] << 8) | header[5]);
  f.header_extra.assign(header.begin() + 6, header.end());
  if (f.format > 1) throw SmfError(8, "unsupported SMF format " + std::to_string(f.format));
  if (f.division == 0) throw SmfError(12, "division is zero");

  while (!r.at_end()) {
    const auto chunk_pos = r.pos();
    if (r.remaining() < 8) throw SmfError(chunk_pos, "truncated chunk header");
    Chunk c;
    const auto id = r.bytes(4);
    std::copy(id.begin(), id.end(), c.id);
    const auto len = r.u32();
    const auto body_pos = r.pos();
    const auto body = r.bytes(len);
    c.is_track = std::string(c.id, 4) == "MTrk";
    if (c.is_track)
      c.events = detail::read_track(body, body_pos);
    else
      c.payload.assign(body.begin(), body.end());
    f.chunks.push_back(std::move(c));
  }
  if (f.track_count() != ntracks)
    throw SmfError(10, "header declares " + std::to_string(ntracks) + " tracks, file has " + std::to_string(f.track_count()));
  if (f.format == 0 && ntracks != 1) throw SmfError(10, "format 0 file must have exactly one track");
  return f;
}

inline std::vector<std::uint8_t> write(const File& f) {
  std::vector<std::uint8_t> out{'M', 'T', 'h', 'd'};
  detail::put_u32(out, static_cast<std::uint32_t>(6 + f.header_extra.size()));
  const auto ntracks = f.track_count();
  for (std::uint16_t v : {f.format, static_cast<std::uint16_t>(ntracks), f.division}) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
  }
  out.insert(out.end(), f.header_extra.begin(), f.header_extra.end());

  for (const auto& c : f.chunks) {
    out.insert(out.end(), c.id, c.id + 4);
    const auto len_pos = out.size();
    detail::put_u32(out, 0);
    const auto body_start = out.size();
    if (!c.is_track) {
      out.insert(out.end(), c.payload.begin(), c.payload.end());
    } else {
      std::uint64_t prev = 0;
      std::uint8_t running = 0;
      for (const auto& ev : c.events) {
        const auto delta = static_cast<std::uint32_t>(ev.tick - prev);
        prev = ev.tick;
        if (!ev.delta_bytes.empty() && detail::decode_vlq(ev.delta_bytes) == delta)
          out.insert(out.end(), ev.delta_bytes.begin(), ev.delta_bytes.end());
        else
          detail::put_vlq(out, delta);
        if (ev.is_channel()) {
          const bool omit = ev.running_status && running == ev.status();
          out.insert(out.end(), ev.bytes.begin() + (omit ? 1 : 0), ev.bytes.end());
          running = ev.status();
        } else {
          out.insert(out.end(), ev.bytes.begin(), ev.bytes.end());
          running = 0;
        }
      }
    }
    const auto len = static_cast<std::uint32_t>(out.size() - body_start);
    for (int i = 0; i < 4; ++i) out[len_pos + i] = static_cast<std::uint8_t>(len >> (24 - 8 * i));
  }
  return out;
}

/// Meta event bytes for an end-of-track marker.
inline std::vector<std::uint8_t> end_of_track() { return {0xFF, 0x2F, 0x00}; }

/// Meta event bytes for a tempo change.
inline std::vector<std::uint8_t> tempo_event(std::uint32_t us_per_quarter) {
  return {0xFF, 0x51, 0x03, static_cast<std::uint8_t>(us_per_quarter >> 16),
          static_cast<std::uint8_t>(us_per_quarter >> 8), static_cast<std::uint8_t>(us_per_quarter)};
}

}  // namespace livescaler::smf

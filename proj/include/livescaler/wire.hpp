#pragma once

// Conductor -> instrument broadcast records. One JSON object per line:
//
//   {"v":1,"seq":7,"kind":"affine","mu":-1,"tau":4,"key_offset":2,"anchor_midi":60,"base":12}
//   {"v":1,"seq":8,"kind":"periodic","interval":12,"image":[0,0,2,...],"key_offset":0,"anchor_midi":60,"base":12}
//
// Integers only; unknown fields are ignored.

#include <livescaler/engine.hpp>
#include <livescaler/errors.hpp>
#include <livescaler/pitch.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

namespace livescaler {

inline constexpr int kWireVersion = 1;
inline constexpr std::int64_t kMaxWireInterval = 1 << 16;
inline constexpr std::int64_t kMaxWireBase = 1024;

struct GlobalTransformMsg {
  int version = kWireVersion;
  std::uint64_t seq = 0;
  ScaleTransform transform;
  int anchor_midi = 60;
  int base = 12;

  Temperament temperament() const { return Temperament(anchor_midi, base); }

  TransformChange to_change() const { return TransformChange{transform, temperament()}; }

  friend bool operator==(const GlobalTransformMsg&, const GlobalTransformMsg&) = default;
};

/// The transform part of a record or snapshot, without sequencing.
inline nlohmann::ordered_json transform_json(const ScaleTransform& s) {
  nlohmann::ordered_json j;
  if (const auto* a = std::get_if<AffineTransform>(&s.kind)) {
    j["kind"] = "affine";
    j["mu"] = a->mu;
    j["tau"] = a->tau;
  } else {
    const auto& m = std::get<PeriodicMap>(s.kind);
    j["kind"] = "periodic";
    j["interval"] = m.interval();
    j["image"] = m.image();
  }
  j["key_offset"] = s.key_offset;
  return j;
}

/// Canonical single-line encoding, newline-terminated.
inline std::string encode_msg(const GlobalTransformMsg& m) {
  nlohmann::ordered_json j;
  j["v"] = m.version;
  j["seq"] = m.seq;
  const auto body = transform_json(m.transform);
  for (const auto& [k, v] : body.items()) j[k] = v;
  j["anchor_midi"] = m.anchor_midi;
  j["base"] = m.base;
  return j.dump() + "\n";
}

namespace detail {

inline std::int64_t wire_int(const nlohmann::json& obj, const char* key, std::int64_t lo, std::int64_t hi) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw DecodeError(std::string("missing field '") + key + "'");
  if (!it->is_number_integer()) throw DecodeError(std::string("field '") + key + "' must be an integer");
  if (it->is_number_unsigned() && it->get<std::uint64_t>() > static_cast<std::uint64_t>(hi))
    throw DecodeError(std::string("field '") + key + "' out of range");
  const auto v = it->get<std::int64_t>();
  if (v < lo || v > hi) throw DecodeError(std::string("field '") + key + "' out of range");
  return v;
}

}  // namespace detail

/// Strict inverse of encode_msg. Throws DecodeError; never returns a partial message.
inline GlobalTransformMsg decode_msg(std::string_view bytes) {
  while (!bytes.empty() && (bytes.back() == '\n' || bytes.back() == '\r')) bytes.remove_suffix(1);
  if (bytes.empty()) throw DecodeError("empty record");
  if (bytes.find('\n') != std::string_view::npos) throw DecodeError("more than one record");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw DecodeError(std::string("malformed record: ") + e.what());
  }
  if (!j.is_object()) throw DecodeError("record is not an object");

  constexpr auto kMin = std::numeric_limits<std::int64_t>::min();
  constexpr auto kMax = std::numeric_limits<std::int64_t>::max();

  GlobalTransformMsg m;
  const auto version = detail::wire_int(j, "v", kMin, kMax);
  if (version != kWireVersion) throw DecodeError("unknown version " + std::to_string(version));
  m.version = static_cast<int>(version);
  m.seq = static_cast<std::uint64_t>(detail::wire_int(j, "seq", 0, kMax));

  const auto kind = j.find("kind");
  if (kind == j.end()) throw DecodeError("missing field 'kind'");
  if (!kind->is_string()) throw DecodeError("field 'kind' must be a string");
  const auto kind_name = kind->get<std::string>();
  if (kind_name == "affine") {
    m.transform.kind = AffineTransform{detail::wire_int(j, "mu", kMin, kMax), detail::wire_int(j, "tau", kMin, kMax)};
  } else if (kind_name == "periodic") {
    const auto interval = detail::wire_int(j, "interval", 1, kMaxWireInterval);
    const auto image = j.find("image");
    if (image == j.end()) throw DecodeError("missing field 'image'");
    if (!image->is_array()) throw DecodeError("field 'image' must be an array");
    if (static_cast<std::int64_t>(image->size()) != interval)
      throw DecodeError("image has " + std::to_string(image->size()) + " entries, interval is " + std::to_string(interval));
    std::vector<Pitch> values;
    values.reserve(image->size());
    for (const auto& v : *image) {
      if (!v.is_number_integer()) throw DecodeError("image entries must be integers");
      if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(kMax))
        throw DecodeError("image entry out of range");
      values.push_back(v.get<std::int64_t>());
    }
    m.transform.kind = PeriodicMap(std::move(values));
  } else {
    throw DecodeError("unknown kind '" + kind_name + "'");
  }
  m.transform.key_offset = detail::wire_int(j, "key_offset", kMin, kMax);
  m.anchor_midi = static_cast<int>(detail::wire_int(j, "anchor_midi", kMidiMin, kMidiMax));
  m.base = static_cast<int>(detail::wire_int(j, "base", 1, kMaxWireBase));
  return m;
}

/// Receiving side of the broadcast: decodes, validates against local bounds and
/// applies the sequence guard (only strictly newer records are fresh).
class Receiver {
 public:
  enum class Status { Fresh, Stale, Malformed, Rejected };

  struct Result {
    Status status;
    std::optional<GlobalTransformMsg> msg;
    std::string error;
  };

  explicit Receiver(RangeBounds bounds = {}) : bounds_(bounds) {}

  Result receive(std::string_view bytes) {
    GlobalTransformMsg m;
    try {
      m = decode_msg(bytes);
    } catch (const std::exception& e) {  // DecodeError, or ConfigError from an empty map
      ++malformed_;
      return {Status::Malformed, std::nullopt, e.what()};
    }
    if (!bounds_.admits(m.base)) {
      ++rejected_;
      return {Status::Rejected, std::move(m), "base " + std::to_string(m.base) + " not admitted by local range bounds"};
    }
    if (last_seq_ && m.seq <= *last_seq_) {
      ++stale_;
      return {Status::Stale, std::move(m), {}};
    }
    last_seq_ = m.seq;
    ++applied_;
    return {Status::Fresh, std::move(m), {}};
  }

  std::optional<std::uint64_t> last_seq() const noexcept { return last_seq_; }
  std::size_t applied() const noexcept { return applied_; }
  std::size_t stale() const noexcept { return stale_; }
  std::size_t malformed() const noexcept { return malformed_; }
  std::size_t rejected() const noexcept { return rejected_; }

 private:
  RangeBounds bounds_;
  std::optional<std::uint64_t> last_seq_;
  std::size_t applied_ = 0;
  std::size_t stale_ = 0;
  std::size_t malformed_ = 0;
  std::size_t rejected_ = 0;
};

}  // namespace livescaler

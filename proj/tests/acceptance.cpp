// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Chord and scale expectations are literal values; everything else is checked
// against brute-force oracles in test_support.hpp.

#include <livescaler/bench.hpp>
#include <livescaler/render.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fuzz_support.hpp"
#include "smf_support.hpp"
#include "test_support.hpp"
#include "wire_support.hpp"

using namespace livescaler;
namespace lt = livescaler::testing;

namespace {

/// Failures collected by one criterion; empty means PASS.
struct Outcome {
  std::vector<std::string> failures;
  std::string detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

int g_failed = 0;

void criterion(const std::string& id, double budget_s, const std::function<void(Outcome&)>& body) {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.failures.push_back(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs >= budget_s) {
    std::ostringstream s;
    s << "took " << secs << "s, budget " << budget_s << "s";
    out.failures.push_back(s.str());
  }
  const bool pass = out.failures.empty();
  if (!pass) ++g_failed;
  std::printf("%s %-26s %.3fs/%.0fs  %s\n", pass ? "PASS" : "FAIL", id.c_str(), secs, budget_s, out.detail.c_str());
  for (std::size_t i = 0; i < out.failures.size() && i < 10; ++i) std::printf("     - %s\n", out.failures[i].c_str());
  std::fflush(stdout);
}

std::string show(const std::set<int>& s) {
  static const char* const kNames[] = {"C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"};
  std::string out = "{";
  for (int p : s) out += std::string(out.size() > 1 ? "," : "") + kNames[p];
  return out + "}";
}

/// Pitch classes of a root-position triad voiced from `root_midi` after the transform.
std::set<int> transformed_triad(const std::string& chord, int root_midi, const ScaleTransform& s, const Temperament& t) {
  const auto pcs = lt::triad(chord);
  const int root_pc = root_midi % 12;
  std::set<int> out;
  for (int p : pcs) {
    const int note = root_midi + ((p - root_pc) % 12 + 12) % 12;
    const auto r = transform_midi_note(note, s, t, {6, 6});
    if (r) out.insert(*r % 12);
  }
  return out;
}

int root_pc(const std::string& chord) { return lt::pc(chord.substr(0, chord.size() - (chord.back() == 'o' ? 1 : 2))); }

ScaleTransform affine(Pitch mu, Pitch tau, Pitch key = 0) { return {AffineTransform{mu, tau}, key}; }

GlobalTransformMsg msg(std::uint64_t seq, Pitch mu, Pitch tau, Pitch key = 0) {
  GlobalTransformMsg m;
  m.seq = seq;
  m.transform = affine(mu, tau, key);
  return m;
}

std::map<std::uint64_t, std::set<int>> chords_by_tick(const smf::File& f) {
  std::map<std::uint64_t, std::set<int>> out;
  for (const auto& c : f.chunks)
    for (const auto& ev : c.events)
      if (ev.is_note_on()) out[ev.tick].insert(ev.bytes[1] % 12);
  return out;
}

// ----------------------------------------------------------------------------

void inversion_triads(Outcome& o) {
  // Left column: anchor C, chords of C major. Right column: anchor G, chords of G major.
  struct Row {
    const char* from;
    const char* to;
  };
  const Row c_rows[] = {{"Cma", "Ami"}, {"Dmi", "Gma"}, {"Emi", "Fma"}, {"Fma", "Emi"},
                        {"Gma", "Dmi"}, {"Ami", "Cma"}, {"Bo", "Bo"}};
  const Row g_rows[] = {{"Gma", "Emi"}, {"Ami", "Dma"}, {"Bmi", "Cma"}, {"Cma", "Bmi"},
                        {"Dma", "Ami"}, {"Emi", "Gma"}, {"F#o", "F#o"}};
  const auto inv = affine(-1, 4);
  int ok = 0;
  for (const auto& [rows, anchor] : {std::pair{c_rows, 60}, std::pair{g_rows, 67}}) {
    const Temperament t(anchor, 12);
    for (int i = 0; i < 7; ++i) {
      const std::string from = rows[i].from;
      // Voice every chord in each of three octaves around the anchor.
      for (int oct : {-12, 0, 12}) {
        const int root = anchor + oct + floor_mod(root_pc(from) - anchor, 12);
        const auto got = transformed_triad(from, root, inv, t);
        const bool match = got == lt::triad(rows[i].to);
        o.expect(match, "anchor " + std::to_string(anchor) + ": " + from + " -> " + show(got) + ", want " + rows[i].to);
        if (match && oct == 0) ++ok;
      }
    }
  }
  o.detail = std::to_string(ok) + "/14 mappings exact";
}

void degree_triads(Outcome& o) {
  const std::pair<const char*, AffineTransform> published[] = {{"I", {1, 0}},  {"ii", {-1, -3}}, {"iii", {-1, -1}},
                                                               {"IV", {1, 5}}, {"V", {1, 7}},    {"vi", {-1, 4}},
                                                               {"vii", {-1, 6}}};
  const char* chords[] = {"Cma", "Dmi", "Emi", "Fma", "Gma", "Ami", "Bmi"};
  const Temperament t(60, 12);
  int ok = 0;
  for (int i = 0; i < 7; ++i) {
    const auto& [name, a] = published[i];
    const auto mine = degree_transform(name);
    o.expect(mine == a, std::string(name) + " transform differs from the expected map");
    const auto got = transformed_triad("Cma", 60, {mine, 0}, t);
    const auto oracle = lt::affine_pc_image(lt::triad("Cma"), a.mu, a.tau, 0);
    o.expect(got == lt::triad(chords[i]), std::string(name) + ": Cma -> " + show(got) + ", want " + chords[i]);
    o.expect(oracle == got, std::string(name) + ": engine disagrees with modular oracle");
    o.expect(degree_label(mine) == name, std::string(name) + ": label round trip");
    if (mine == a && got == lt::triad(chords[i])) ++ok;
  }
  o.detail = std::to_string(ok) + "/7 degrees exact";
}

void whole_tone_images(Outcome& o) {
  const std::pair<const char*, const char*> major[] = {{"C", "C"}, {"D", "E"},  {"E", "G#"}, {"F", "A#"},
                                                       {"G", "D"}, {"A", "F#"}, {"B", "A#"}};
  const std::pair<const char*, const char*> minor[] = {{"C", "C"}, {"D", "E"},  {"Eb", "F#"}, {"F", "A#"},
                                                       {"G", "D"}, {"Ab", "E"}, {"Bb", "G#"}};
  const AffineTransform doubling{2, 0};
  int ok = 0;
  for (const auto* scale : {major, minor}) {
    std::set<int> image;
    for (int i = 0; i < 7; ++i) {
      const int from = lt::pc(scale[i].first);
      const auto got = static_cast<int>(floor_mod(affine_apply(doubling, from), 12));
      image.insert(got);
      o.expect(got == lt::pc(scale[i].second),
               std::string(scale[i].first) + " -> " + show({got}) + ", want " + scale[i].second);
      if (got == lt::pc(scale[i].second)) ++ok;
    }
    o.expect(image == lt::pcs({"C", "D", "E", "F#", "G#", "A#"}), "image is not the whole-tone scale: " + show(image));
  }
  o.detail = std::to_string(ok) + "/14 pitch classes exact";
}

void image_size_law(Outcome& o) {
  int cases = 0;
  for (Pitch beta = 1; beta <= 24; ++beta)
    for (Pitch mu = -12; mu <= 12; ++mu) {
      // Oracle: enumerate residues directly.
      std::set<Pitch> seen;
      for (Pitch n = 0; n < beta; ++n) seen.insert(((mu * n) % beta + beta) % beta);
      const auto want = static_cast<std::size_t>(beta / lt::gcd_oracle(mu, beta));
      const auto lib = pitch_class_image_set({mu, 3}, beta).size();
      o.expect(seen.size() == want && lib == want,
               "mu=" + std::to_string(mu) + " beta=" + std::to_string(beta) + ": enumerated " +
                   std::to_string(seen.size()) + ", library " + std::to_string(lib) + ", law " + std::to_string(want));
      ++cases;
    }
  // Classification rows for beta = 12.
  const std::pair<Pitch, std::size_t> rows[] = {{-1, 12}, {0, 1}, {1, 12}, {-2, 6}, {2, 6},  {-3, 4}, {3, 4}, {-4, 3},
                                                {4, 3},   {-5, 12}, {5, 12}, {-6, 2}, {6, 2}, {12, 1}};
  for (const auto& [mu, classes] : rows)
    o.expect(pitch_class_image_set({mu, 0}, 12).size() == classes, "classification row mu=" + std::to_string(mu));
  o.detail = std::to_string(cases) + " (mu,beta) pairs + 14 classification rows";
}

void pitch_class_preservation(Outcome& o) {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<Pitch> mu_d(-24, 24), tau_d(-1000, 1000), beta_d(1, 48), n_d(-10000, 10000),
      k_d(-50, 50);
  for (int i = 0; i < 10000; ++i) {
    const AffineTransform a{mu_d(rng), tau_d(rng)};
    const Pitch beta = beta_d(rng);
    const Pitch n1 = n_d(rng);
    const Pitch n2 = n1 + k_d(rng) * beta;
    const bool ok = floor_mod(affine_apply(a, n1) - affine_apply(a, n2), beta) == 0;
    o.expect(ok, "mu=" + std::to_string(a.mu) + " beta=" + std::to_string(beta) + " n1=" + std::to_string(n1));
  }
  o.detail = "10000 cases, " + std::to_string(o.failures.size()) + " violations";
}

void restriction(Outcome& o) {
  std::mt19937_64 rng(1002);
  std::uniform_int_distribution<Pitch> base_d(1, 24), note(-500, 500), raw_off(-1000, 1000), extra(0, 40);
  int in_window = 0;
  for (int i = 0; i < 10000; ++i) {
    const Pitch base = base_d(rng);
    const Pitch dm = extra(rng);
    const Pitch dp = std::max<Pitch>(0, base - 1 - dm) + extra(rng) % 5;
    const Pitch orig = note(rng);
    // Half the raws land inside the window so the idempotence clause is exercised.
    const Pitch raw = (i % 2) ? orig + raw_off(rng) : orig - dm + floor_mod(raw_off(rng), dm + dp + 1);
    const RangeBounds b{dm, dp};
    const Pitch r = restrict_interval(orig, raw, b, base);
    const auto oracle = lt::brute_force_restrict(orig, raw, dm, dp, base);
    const auto where = "orig=" + std::to_string(orig) + " raw=" + std::to_string(raw) + " d-=" + std::to_string(dm) +
                       " d+=" + std::to_string(dp) + " base=" + std::to_string(base);
    o.expect(r >= orig - dm && r <= orig + dp, "outside window: " + where);
    o.expect(floor_mod(r - raw, base) == 0, "not congruent: " + where);
    o.expect(oracle && *oracle == r, "brute force disagrees: " + where);
    o.expect(restrict_interval(orig, r, b, base) == r, "not idempotent: " + where);
    if (raw >= orig - dm && raw <= orig + dp) {
      ++in_window;
      o.expect(r == raw, "in-window raw moved: " + where);
    }
  }
  o.detail = "10000 cases (" + std::to_string(in_window) + " in window), brute-force exact";
}

void toggle(Outcome& o) {
  std::mt19937_64 rng(1003);
  std::uniform_int_distribution<Pitch> d(-1000, 1000);
  for (int i = 0; i < 10000; ++i) {
    const AffineTransform a{d(rng), d(rng)};
    o.expect(toggle_quality(toggle_quality(a)) == a, "not an involution at mu=" + std::to_string(a.mu));
  }
  const std::pair<const char*, const char*> pairs[] = {{"I", "Cmi"},  {"ii", "Dma"}, {"iii", "Ema"}, {"IV", "Fmi"},
                                                       {"V", "Gmi"},  {"vi", "Ama"}, {"vii", "Bma"}};
  const Temperament t(60, 12);
  for (const auto& [deg, want] : pairs) {
    const auto toggled = toggle_quality(degree_transform(deg));
    const auto got = transformed_triad("Cma", 60, {toggled, 0}, t);
    o.expect(got == lt::triad(want), std::string("M<->m ") + deg + ": " + show(got) + ", want " + want);
  }
  o.detail = "10000 involution cases + 7 toggled degrees (I->i, ii->II, ...)";
}

void hygiene_fuzz(Outcome& o) {
  constexpr std::uint64_t kRuns = 10000;
  std::size_t events = 0;
  std::string per_mode;
  for (auto mode : {SwitchMode::Stop, SwitchMode::Legato, SwitchMode::ReTrigger, SwitchMode::Wait}) {
    std::size_t bad = 0;
    for (std::uint64_t seed = 0; seed < kRuns; ++seed) {
      const auto r = lt::fuzz_run(mode, 0x5eed0000 + seed);
      events += r.events;
      if (r.violations || r.stuck || r.broken_invariants) {
        ++bad;
        o.expect(false, std::string(to_string(mode)) + " seed " + std::to_string(seed) + ": " + std::to_string(r.violations) +
                            " count violations, " + std::to_string(r.stuck) + " stuck");
      }
    }
    per_mode += std::string(per_mode.empty() ? "" : " ") + std::string(to_string(mode)) + "=" + std::to_string(bad);
  }
  o.detail = std::to_string(kRuns) + " runs/mode, " + std::to_string(events) + " events, failing runs " + per_mode;
}

void render_fixtures(Outcome& o) {
  constexpr std::uint32_t kPeriod = 192, kLength = 180;
  InstrumentConfig cfg;
  cfg.mode = SwitchMode::Legato;

  // Identity script: byte-for-byte, in every mode.
  const auto mixed = lt::file(1, 96, {lt::conductor_track(), lt::chord_track({60, 64, 67}, 6, kPeriod, kLength),
                                      lt::chord_track({48, 55}, 3, 2 * kPeriod, kPeriod, 9)});
  const auto identity = parse_command_script("at 0 " + encode_msg(msg(1, 1, 0)));
  for (auto mode : {SwitchMode::Stop, SwitchMode::Legato, SwitchMode::ReTrigger, SwitchMode::Wait}) {
    auto c = cfg;
    c.mode = mode;
    o.expect(smf::write(render_offline(smf::read(mixed), identity, c).file) == mixed,
             "identity render changed bytes in " + std::string(to_string(mode)));
  }

  // C major triads under A<-1,4> become A minor.
  const auto loop = lt::file(1, 96, {lt::conductor_track(), lt::chord_track({60, 64, 67}, 8, kPeriod, kLength)});
  const auto inverted = chords_by_tick(
      render_offline(smf::read(loop), parse_command_script("at 0 " + encode_msg(msg(1, -1, 4))), cfg).file);
  o.expect(inverted.size() == 8, "expected 8 chords");
  for (const auto& [tick, pcs] : inverted) o.expect(pcs == lt::triad("Ami"), "tick " + std::to_string(tick) + ": " + show(pcs));

  // Summer Nights opening, scripted through the conductor.
  Conductor conductor;
  std::vector<std::pair<std::uint64_t, GlobalTransformMsg>> entries;
  auto press = [&](std::uint64_t tick, std::pair<int, int> pad, bool mod = false) {
    if (mod) conductor.handle(PadEvent::down(3, 0));
    const auto r = conductor.handle(PadEvent::down(pad.first, pad.second));
    conductor.handle(PadEvent::up(pad.first, pad.second));
    if (mod) conductor.handle(PadEvent::up(3, 0));
    entries.emplace_back(tick, r.broadcast.value());
  };
  press(0, {3, 1}, true);  // Mod + II
  std::uint64_t tick = 0;
  for (auto pad : {std::pair{0, 1}, {1, 1}, {2, 1}, {1, 1}, {0, 1}, {1, 1}, {2, 1}}) {
    press(tick, pad);
    tick += kPeriod;
  }
  const auto seven = lt::file(1, 96, {lt::conductor_track(), lt::chord_track({60, 64, 67}, 7, kPeriod, kLength)});
  const auto rendered = render_offline(smf::read(seven), parse_command_script(format_command_script(entries)), cfg);
  std::vector<std::string> roots;
  const char* want[] = {"Dma", "Gma", "Ama", "Gma", "Dma", "Gma", "Ama"};
  const auto chords = chords_by_tick(rendered.file);
  o.expect(chords.size() == 7, "expected 7 chords, got " + std::to_string(chords.size()));
  std::size_t i = 0;
  std::string seq;
  for (const auto& [t, pcs] : chords) {
    if (i < 7) o.expect(pcs == lt::triad(want[i]), "chord " + std::to_string(i) + ": " + show(pcs) + ", want " + want[i]);
    seq += std::string(seq.empty() ? "" : ",") + (i < 7 && pcs == lt::triad(want[i]) ? std::string(want[i], 1) : "?");
    ++i;
  }
  o.expect(smf::write(rendered.file) == smf::write(render_offline(smf::read(seven), parse_command_script(format_command_script(entries)), cfg).file),
           "render is not deterministic");
  o.detail = "identity x4 modes, Cma->Ami x8, roots " + seq;
}

void latency(Outcome& o) {
  LatencyBenchOptions opt;
  opt.gestures = 10000;
  opt.spacing = std::chrono::microseconds(200);
  const auto r = run_latency_bench(opt);
  o.expect(r.samples_us.size() >= 9900, "too few samples: " + std::to_string(r.samples_us.size()));
  o.expect(r.percentile(99) < 1000.0, "p99 " + std::to_string(r.percentile(99)) + "us >= 1000us");
  o.detail = "in-process " + r.summary();
}

void wire(Outcome& o) {
  std::mt19937_64 rng(1004);
  for (int i = 0; i < 10000; ++i) {
    const auto m = lt::random_msg(rng);
    const auto enc = encode_msg(m);
    bool ok = false;
    try {
      ok = decode_msg(enc) == m && encode_msg(decode_msg(enc)) == enc;
    } catch (const DecodeError&) {
    }
    o.expect(ok, "round trip failed: " + enc);
  }
  const auto bad = lt::malformed_records();
  std::size_t rejected = 0;
  for (const auto& rec : bad) {
    try {
      decode_msg(rec);
      o.expect(false, "accepted malformed record: " + rec);
    } catch (const DecodeError&) {
      ++rejected;
    }
  }
  o.expect(bad.size() >= 20, "fewer than 20 malformed records");
  o.detail = "10000 round trips, " + std::to_string(rejected) + "/" + std::to_string(bad.size()) + " malformed rejected";
}

}  // namespace

int main() {
  criterion("inversion-triads", 1, inversion_triads);
  criterion("degree-triads", 1, degree_triads);
  criterion("whole-tone-images", 1, whole_tone_images);
  criterion("image-size-law", 1, image_size_law);
  criterion("pitch-class-preservation", 5, pitch_class_preservation);
  criterion("restriction-oracle", 5, restriction);
  criterion("quality-toggle", 1, toggle);
  criterion("midi-hygiene-fuzz", 30, hygiene_fuzz);
  criterion("render-fixtures", 5, render_fixtures);
  criterion("latency-p99-under-1ms", 30, latency);
  criterion("wire-protocol", 5, wire);
  std::printf("%s: %d failing\n", g_failed ? "FAIL" : "PASS", g_failed);
  return g_failed ? 1 : 0;
}

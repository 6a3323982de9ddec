#include <livescaler/conductor.hpp>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace livescaler;
using livescaler::testing::triad;

namespace {

// Grid positions in the default layout.
constexpr std::pair<int, int> kHist{0, 0}, kUp{1, 0}, kDown{2, 0}, kMod{3, 0};
constexpr std::pair<int, int> kI{0, 1}, kVi{0, 2}, kIV{1, 1}, kIi{1, 2}, kV{2, 1}, kIii{2, 2}, kII{3, 1}, kVii{3, 2};
constexpr std::pair<int, int> kToggle{0, 3}, kTimes2{1, 3}, kTimes3{2, 3}, kTimes4{3, 3};

struct Surface {
  Conductor c;
  std::vector<GlobalTransformMsg> sent;

  GestureResult down(std::pair<int, int> p) {
    auto r = c.handle(PadEvent::down(p.first, p.second));
    if (r.broadcast) sent.push_back(*r.broadcast);
    return r;
  }
  void up(std::pair<int, int> p) { EXPECT_FALSE(c.handle(PadEvent::up(p.first, p.second)).broadcast); }

  /// Presses `pad` while holding `mods`, releasing everything afterwards.
  GestureResult press(std::pair<int, int> pad, std::initializer_list<std::pair<int, int>> mods = {}) {
    for (auto m : mods) EXPECT_FALSE(down(m).broadcast);
    auto r = down(pad);
    up(pad);
    for (auto m : mods) up(m);
    return r;
  }
};

/// Pitch classes of the C-major triad (C4 E4 G4) after a broadcast, with C4 as anchor.
std::set<int> image_of_c_major(const GlobalTransformMsg& m) {
  std::set<int> out;
  for (int n : {60, 64, 67}) {
    const auto r = transform_midi_note(n, m.transform, m.temperament(), {6, 6});
    EXPECT_TRUE(r);
    if (r) out.insert(*r % 12);
  }
  return out;
}

ScaleTransform affine(Pitch mu, Pitch tau, Pitch key = 0) { return {AffineTransform{mu, tau}, key}; }

}  // namespace

TEST(Conductor, DegreePadBroadcastsItsTransform) {
  Surface s;
  const auto r = s.press(kI);
  ASSERT_TRUE(r.broadcast);
  EXPECT_EQ(r.broadcast->transform, affine(1, 0));
  EXPECT_EQ(r.broadcast->seq, 1u);
  EXPECT_EQ(r.broadcast->anchor_midi, 60);
  EXPECT_EQ(r.broadcast->base, 12);
  EXPECT_EQ(s.press(kVi).broadcast->transform, affine(-1, 4));
  EXPECT_EQ(s.press(kII).broadcast->transform, affine(1, 2));
}

TEST(Conductor, ModifiersAloneDoNotBroadcast) {
  Surface s;
  for (auto m : {kUp, kDown, kMod, kToggle, kTimes2, kTimes3, kTimes4}) {
    EXPECT_FALSE(s.down(m).broadcast);
    s.up(m);
  }
  EXPECT_EQ(s.c.state().seq, 0u);
}

TEST(Conductor, ToggleGivesParallelQuality) {
  Surface s;
  EXPECT_EQ(s.press(kVi, {kToggle}).broadcast->transform, affine(1, 9));
  EXPECT_EQ(image_of_c_major(s.sent.back()), triad("Ama"));
  EXPECT_EQ(s.press(kI, {kToggle}).broadcast->transform, affine(-1, -5));
  EXPECT_EQ(image_of_c_major(s.sent.back()), triad("Cmi"));
  EXPECT_EQ(s.press(kIi, {kToggle}).broadcast->transform, affine(1, 2));
  EXPECT_EQ(image_of_c_major(s.sent.back()), triad("Dma"));
}

TEST(Conductor, ModifierOrderIsToggleMultiplyShift) {
  Surface s;
  // vi = <-1,4>; toggle -> <1,9>; x2 -> <2,9>; ++ -> <2,10>.
  EXPECT_EQ(s.press(kVi, {kUp, kTimes2, kToggle}).broadcast->transform, affine(2, 10));
  // Two shift pads cancel.
  EXPECT_EQ(s.press(kV, {kUp, kDown}).broadcast->transform, affine(1, 7));
  EXPECT_EQ(s.press(kI, {kTimes3}).broadcast->transform, affine(3, 0));
  EXPECT_EQ(s.press(kI, {kTimes4}).broadcast->transform, affine(4, 0));
}

TEST(Conductor, ModulationToD) {
  Surface s;
  const auto r = s.press(kII, {kMod});
  ASSERT_TRUE(r.broadcast);
  EXPECT_EQ(r.broadcast->transform, affine(1, 0, 2));
  EXPECT_EQ(s.c.state().key_offset, 2);
  EXPECT_EQ(image_of_c_major(s.press(kI).broadcast.value()), triad("Dma"));
  EXPECT_EQ(image_of_c_major(s.press(kIV).broadcast.value()), triad("Gma"));
  EXPECT_EQ(image_of_c_major(s.press(kV).broadcast.value()), triad("Ama"));
  EXPECT_EQ(s.c.snapshot()["key"], "D");
}

TEST(Conductor, ModulationUpASemitone) {
  Surface s;
  s.press(kII, {kMod});
  const auto r = s.press(kI, {kMod, kUp});
  EXPECT_EQ(s.c.state().key_offset, 3);
  EXPECT_EQ(image_of_c_major(*r.broadcast), triad("Ebma"));
  EXPECT_EQ(s.c.snapshot()["key"], "E♭");
}

TEST(Conductor, ModulationIsAdditiveInTau) {
  // II before modulating and I after Mod+II emit the same pitches.
  Surface before, after;
  const auto ii = before.press(kII).broadcast.value();
  after.press(kII, {kMod});
  const auto i = after.press(kI).broadcast.value();
  for (int n = 0; n < 128; ++n)
    EXPECT_EQ(transform_midi_note(n, ii.transform, ii.temperament(), {6, 6}),
              transform_midi_note(n, i.transform, i.temperament(), {6, 6}));
  // With an inverting degree only tau is kept.
  Surface minor;
  minor.press(kVi, {kMod});
  EXPECT_EQ(minor.c.state().key_offset, 4);
  EXPECT_EQ(minor.sent.back().transform, affine(1, 0, 4));
}

TEST(Conductor, SummerNightsPrefix) {
  Surface s;
  s.press(kII, {kMod});
  std::vector<std::set<int>> chords;
  for (auto pad : {kI, kIV, kV, kIV, kI, kIV, kV}) chords.push_back(image_of_c_major(s.press(pad).broadcast.value()));
  const std::vector<std::set<int>> expected = {triad("Dma"), triad("Gma"), triad("Ama"), triad("Gma"),
                                               triad("Dma"), triad("Gma"), triad("Ama")};
  EXPECT_EQ(chords, expected);
}

TEST(Conductor, SummerNightsModulationBarFollowsToggleRule) {
  Surface s;
  s.press(kII, {kMod});
  // ++ M<->m vi in D gives C major by the toggle rule.
  const auto r = s.press(kVi, {kUp, kToggle});
  EXPECT_EQ(r.broadcast->transform, affine(1, 10, 2));
  EXPECT_EQ(image_of_c_major(*r.broadcast), triad("Cma"));
  // Then Mod ++ I lands in E flat, and I IV V IV follow there.
  EXPECT_EQ(image_of_c_major(*s.press(kI, {kMod, kUp}).broadcast), triad("Ebma"));
  std::vector<std::set<int>> chords;
  for (auto pad : {kI, kIV, kV, kIV}) chords.push_back(image_of_c_major(s.press(pad).broadcast.value()));
  EXPECT_EQ(chords, (std::vector<std::set<int>>{triad("Ebma"), triad("Abma"), triad("Bbma"), triad("Abma")}));
}

TEST(Conductor, SeqStrictlyIncreases) {
  Surface s;
  for (int i = 0; i < 20; ++i) {
    if (i % 3 == 0)
      s.press(kV, {kMod});
    else
      s.press(kI);
  }
  ASSERT_EQ(s.sent.size(), 20u);
  for (std::size_t i = 1; i < s.sent.size(); ++i) EXPECT_GT(s.sent[i].seq, s.sent[i - 1].seq);
}

// --- history ---------------------------------------------------------------------

TEST(ConductorHistory, RecallsPreviousBroadcast) {
  Surface s;
  s.press(kI);
  s.press(kIV);
  s.press(kV);
  const auto r = s.press(kHist);
  ASSERT_TRUE(r.broadcast);
  EXPECT_EQ(r.broadcast->transform, affine(1, 5));
  EXPECT_EQ(r.broadcast->seq, 4u);
  // Recall does not push; the history head is still V.
  EXPECT_EQ(s.c.state().history.front(), affine(1, 7));
  EXPECT_EQ(s.c.state().history.size(), 3u);
}

TEST(ConductorHistory, NumeralSelectsDepth) {
  Surface s;
  for (auto pad : {kI, kIi, kIii, kIV, kV}) s.press(pad);  // T1..T5
  EXPECT_EQ(s.press(kHist, {kTimes2}).broadcast->transform, affine(-1, -1));  // T3
  EXPECT_EQ(s.press(kHist, {kTimes3}).broadcast->transform, affine(-1, -3));  // T2
  EXPECT_EQ(s.press(kHist, {kTimes4}).broadcast->transform, affine(1, 0));    // T1
}

TEST(ConductorHistory, ToggleRecallsParallel) {
  Surface s;
  s.press(kI);
  s.press(kV);
  EXPECT_EQ(s.press(kHist, {kToggle}).broadcast->transform, affine(-1, -5));
}

TEST(ConductorHistory, TooDeepIsWarningOnly) {
  Surface s;
  s.press(kI);
  const auto r = s.press(kHist);
  EXPECT_FALSE(r.broadcast);
  EXPECT_TRUE(r.warning);
  EXPECT_EQ(s.c.state().seq, 1u);
}

TEST(ConductorHistory, BoundedToEight) {
  Surface s;
  for (int i = 0; i < 20; ++i) s.press(i % 2 ? kV : kIV);
  EXPECT_EQ(s.c.state().history.size(), kHistoryDepth);
}

TEST(ConductorHistory, RecallKeepsStoredKey) {
  Surface s;
  s.press(kI);
  s.press(kII, {kMod});
  s.press(kV);
  s.press(kHist, {kTimes2});  // I, stored before the modulation
  EXPECT_EQ(s.sent.back().transform, affine(1, 0, 0));
  EXPECT_EQ(s.c.state().key_offset, 2);
}

// --- periodic pads and layouts -------------------------------------------------------

TEST(Conductor, PeriodicPadIgnoresModifiers) {
  Layout l = default_layout();
  l[5] = TransformPad{"major", major_scale_quantizer()};  // (1,1)
  Conductor c(l);
  c.handle(PadEvent::down(1, 0));  // ++
  const auto r = c.handle(PadEvent::down(1, 1));
  ASSERT_TRUE(r.broadcast);
  EXPECT_TRUE(r.warning);
  EXPECT_EQ(r.broadcast->transform, (ScaleTransform{major_scale_quantizer(), 0}));
  c.handle(PadEvent::up(1, 1));
  c.handle(PadEvent::up(1, 0));
  c.handle(PadEvent::down(3, 0));  // Mod
  const auto m = c.handle(PadEvent::down(1, 1));
  EXPECT_FALSE(m.broadcast);
  EXPECT_TRUE(m.warning);
}

TEST(PadRoles, Parse) {
  EXPECT_EQ(std::get<Modifier>(parse_pad_role("Hist")), Modifier::Hist);
  EXPECT_EQ(std::get<Modifier>(parse_pad_role("++")), Modifier::Up);
  EXPECT_EQ(std::get<Modifier>(parse_pad_role("toggle")), Modifier::Toggle);
  EXPECT_TRUE(std::holds_alternative<std::monostate>(parse_pad_role("none")));
  EXPECT_EQ(std::get<AffineTransform>(std::get<TransformPad>(parse_pad_role("IV")).kind), (AffineTransform{1, 5}));
  const auto custom = std::get<TransformPad>(parse_pad_role("affine:2,3"));
  EXPECT_EQ(custom.label, "A⟨2,3⟩");
  EXPECT_EQ(std::get<TransformPad>(parse_pad_role("affine:1,9")).label, "VI");
  EXPECT_THROW(parse_pad_role("affine:1"), LookupError);
  EXPECT_THROW(parse_pad_role("affine:1,x"), LookupError);
  EXPECT_THROW(parse_pad_role("IX"), LookupError);
}

TEST(Conductor, PadOutsideGridThrows) {
  Conductor c;
  EXPECT_THROW(c.handle(PadEvent::down(4, 0)), std::invalid_argument);
}

// --- UI frames ---------------------------------------------------------------------

TEST(UiProtocol, SnapshotFields) {
  Surface s;
  s.press(kII, {kMod});
  s.press(kVi);
  s.down(kUp);
  const auto j = s.c.snapshot();
  EXPECT_EQ(j["type"], "state");
  EXPECT_EQ(j["key_offset"], 2);
  EXPECT_EQ(j["key"], "D");
  EXPECT_EQ(j["current"]["label"], "vi");
  EXPECT_EQ(j["current"]["mu"], -1);
  EXPECT_EQ(j["history"].size(), 2u);
  EXPECT_EQ(j["history"][1]["label"], "I");
  EXPECT_EQ(j["seq"], 2);
  EXPECT_EQ(j["held"], nlohmann::ordered_json::parse("[[1,0]]"));
  EXPECT_TRUE(s.c.release_all());
  EXPECT_TRUE(s.c.snapshot()["held"].empty());
}

TEST(UiProtocol, LayoutFrame) {
  const auto j = Conductor().layout_frame();
  EXPECT_EQ(j["type"], "layout");
  EXPECT_EQ(j["pads"][0], nlohmann::ordered_json::parse(R"(["Hist","I","vi","M<->m"])"));
  EXPECT_EQ(j["pads"][3][1], "II");
}

TEST(UiProtocol, PadFrames) {
  const auto ev = parse_ui_frame(R"({"type":"pad","row":0,"col":1,"state":"down"})");
  ASSERT_TRUE(ev);
  EXPECT_EQ(ev->row, 0);
  EXPECT_EQ(ev->col, 1);
  EXPECT_EQ(ev->state, PadEvent::State::Down);
  EXPECT_EQ(ui_pad_frame(0, 1, PadEvent::State::Up), R"({"type":"pad","row":0,"col":1,"state":"up"})");
  EXPECT_FALSE(parse_ui_frame(R"({"type":"hello"})"));
  for (const char* bad : {"nope", "[]", R"({"row":0})", R"({"type":"pad","row":4,"col":0,"state":"down"})",
                          R"({"type":"pad","row":0,"col":0,"state":"pressed"})", R"({"type":"pad","row":0,"col":0})"})
    EXPECT_THROW(parse_ui_frame(bad), DecodeError) << bad;
}

TEST(ControlMap, TranslatesBoundNotes) {
  ControlMap m;
  m.bind(36, 2, 1);
  const auto ev = m.translate(36, true);
  ASSERT_TRUE(ev);
  EXPECT_EQ(ev->row, 2);
  EXPECT_EQ(ev->col, 1);
  EXPECT_FALSE(m.translate(37, true));
  EXPECT_THROW(m.bind(36, 4, 0), ConfigError);
}

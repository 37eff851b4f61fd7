#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "otms/ot.hpp"
#include "otms/synthdata.hpp"

using namespace otms;

namespace {

bool is_involution(const Permutation& p) {
  for (Index m = 0; m < p.size(); ++m)
    if (p[p[m]] != m) return false;
  return true;
}

Index moved_count(const Permutation& p) {
  Index c = 0;
  for (Index m = 0; m < p.size(); ++m) c += p[m] != m;
  return c;
}

}  // namespace

TEST(Scene, LetterE) {
  Rng rng(1);
  const Scene s = make_scene(SceneSpec{}, rng);
  EXPECT_EQ(s.signal.size(), 512);
  EXPECT_GE(s.components.size(), 4u);
  EXPECT_EQ(s.support.size(), 20 + 12 + 10 + 12);
  Index total = 0;
  std::set<Index> seen;
  for (const auto& c : s.components) {
    total += c.size();
    seen.insert(c.indices().begin(), c.indices().end());
  }
  EXPECT_EQ(Index(seen.size()), total);  // disjoint
  EXPECT_EQ(total, s.support.size());
  for (Index n = 0; n < 512; ++n) EXPECT_EQ(s.signal.values()[n], s.support.contains(n) ? 1.0 : 0.0);
}

TEST(Scene, LetterT) {
  Rng rng(2);
  SceneSpec spec;
  spec.letter = Letter::T;
  spec.level = 2.5;
  const Scene s = make_scene(spec, rng);
  EXPECT_EQ(s.components.size(), 2u);
  EXPECT_EQ(s.support.size(), 36);
  EXPECT_DOUBLE_EQ(s.signal.values().maxCoeff(), 2.5);
}

TEST(Scene, JitterStaysWithinRange) {
  SceneSpec spec;
  spec.jitter = 0;
  Rng a(3), b(4);
  EXPECT_EQ(make_scene(spec, a).support.indices(), make_scene(spec, b).support.indices());
}

TEST(Scene, LetterMustFit) {
  SceneSpec spec;
  spec.grid = Grid(8, 8);
  Rng rng(1);
  try {
    make_scene(spec, rng);
    FAIL() << "expected LetterDoesNotFit";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LetterDoesNotFit);
  }
}

TEST(Deformation, ZeroShiftsGiveIdentity) {
  Rng rng(5);
  const Scene s = make_scene(SceneSpec{}, rng);
  const Permutation p =
      deformation_from_shifts(s.signal.grid(), s.components, std::vector<Coord>(s.components.size(), {0, 0}));
  EXPECT_TRUE(p.is_identity());
}

TEST(Deformation, MovesStrokesRigidly) {
  const Grid& g = SceneSpec{}.grid;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Scene s = make_scene(SceneSpec{}, rng);
    const DeformationOp f = make_deformation(s, PerturbSpec{}, rng);
    ASSERT_TRUE(f.is_permutation());
    const Permutation& p = f.permutation();
    for (const auto& c : s.components) {
      // All pixels of a stroke share one displacement.
      std::set<std::pair<int, int>> shifts;
      for (Index m = 0; m < p.size(); ++m)
        if (c.contains(p[m])) {
          const Coord a = g.position(p[m]), b = g.position(m);
          shifts.insert({b.row - a.row, b.col - a.col});
        }
      EXPECT_EQ(shifts.size(), 1u);
      const auto [dr, dc] = *shifts.begin();
      EXPECT_LE(std::abs(dr), 1);
      EXPECT_LE(std::abs(dc), 1);
    }
    // Mass is carried, never created.
    const Vector fx = f.apply(s.signal.values());
    EXPECT_DOUBLE_EQ(fx.sum(), s.signal.values().sum());
  }
}

TEST(LocalPermutation, RadiusZeroIsIdentity) {
  Rng rng(1);
  const Scene s = make_scene(SceneSpec{}, rng);
  EXPECT_TRUE(make_local_permutation(s.signal.grid(), s.support, 0, rng).is_identity());
}

TEST(LocalPermutation, Properties) {
  const Grid g(16, 32);
  for (int r = 1; r <= 3; ++r)
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng rng(seed);
      const Scene s = make_scene(SceneSpec{}, rng);
      const Permutation p = make_local_permutation(g, s.support, r, rng);
      EXPECT_TRUE(is_involution(p));
      EXPECT_LE(max_displacement(p, g), double(r) + 1e-12);
      EXPECT_LE(permutation_cost(p, g), double(r * r) * double(moved_count(p)));
      // Every moved pixel touches the support.
      for (Index m = 0; m < p.size(); ++m)
        if (p[m] != m) EXPECT_TRUE(s.support.contains(m) || s.support.contains(p[m]));
    }
}

TEST(LocalPermutation, SwapFractionOneMovesSomething) {
  Rng rng(9);
  const Scene s = make_scene(SceneSpec{}, rng);
  EXPECT_GT(moved_count(make_local_permutation(s.signal.grid(), s.support, 2, rng, 1.0)), 0);
}

TEST(Measurement, CountRoundsToNearest) {
  EXPECT_EQ(measurement_count(0.7, 512), 358);
  EXPECT_EQ(measurement_count(1.0, 512), 512);
  EXPECT_EQ(measurement_count(0.5, 512), 256);
}

TEST(Measurement, ZeroRowsRejected) {
  Rng rng(1);
  try {
    make_measurement(Vector::Ones(10), 0.01, kNoiseless, rng);
    FAIL() << "expected ZeroRows";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroRows);
  }
}

TEST(Instance, NoiselessMeasurementsAreExact) {
  const Instance inst = build_instance(SceneSpec{}, PerturbSpec{}, 3, 0.7, kNoiseless, 11);
  ASSERT_EQ(inst.views.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const ViewData& v = inst.views[i];
    EXPECT_EQ(v.A.rows(), 358);
    EXPECT_EQ(v.y, v.A.matrix() * inst.x_i_true[i].values());
    // x_i = P_i F_i x
    EXPECT_EQ(inst.x_i_true[i].values(), inst.p_true[i].apply(v.F.apply(inst.x_true.values())));
    EXPECT_TRUE(inst.noise[i].isZero(0));
  }
}

TEST(Instance, NoiseHitsTargetSnr) {
  const Instance inst = build_instance(SceneSpec{}, PerturbSpec{}, 2, 0.8, 15.0, 12);
  for (std::size_t i = 0; i < 2; ++i) {
    const Vector clean = inst.views[i].A.matrix() * inst.x_i_true[i].values();
    EXPECT_NEAR(snr_db(clean, inst.noise[i]), 15.0, 1e-9);
    EXPECT_TRUE((inst.views[i].y - clean - inst.noise[i]).isZero(1e-12));
  }
}

TEST(Instance, DeterministicForSeed) {
  const Instance a = build_instance(SceneSpec{}, PerturbSpec{}, 2, 0.6, 20.0, 5);
  const Instance b = build_instance(SceneSpec{}, PerturbSpec{}, 2, 0.6, 20.0, 5);
  const Instance c = build_instance(SceneSpec{}, PerturbSpec{}, 2, 0.6, 20.0, 6);
  EXPECT_EQ(a.views[1].y, b.views[1].y);
  EXPECT_EQ(a.p_true[0].source(), b.p_true[0].source());
  EXPECT_NE(a.views[1].y, c.views[1].y);
}

TEST(Instance, JsonRoundTrip) {
  const Instance a = build_instance(SceneSpec{}, PerturbSpec{}, 2, 0.5, 25.0, 8);
  const auto path = std::filesystem::temp_directory_path() / "otms_test_instance.json";
  save_instance(a, path.string());
  const Instance b = load_instance(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(b.x_true.values(), a.x_true.values());
  EXPECT_EQ(b.support.indices(), a.support.indices());
  EXPECT_EQ(b.components.size(), a.components.size());
  EXPECT_EQ(b.seed, a.seed);
  EXPECT_EQ(b.snr_db, a.snr_db);
  ASSERT_EQ(b.views.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(b.views[i].y, a.views[i].y);
    EXPECT_EQ(b.views[i].A.matrix(), a.views[i].A.matrix());
    EXPECT_EQ(b.views[i].F.permutation().source(), a.views[i].F.permutation().source());
    EXPECT_EQ(b.p_true[i].source(), a.p_true[i].source());
    EXPECT_EQ(b.noise[i], a.noise[i]);
  }
}

TEST(Instance, NoiselessSnrSerializesAsInf) {
  const Instance a = build_instance(SceneSpec{}, PerturbSpec{}, 1, 0.5, kNoiseless, 1);
  const auto j = instance_to_json(a);
  EXPECT_EQ(j.at("snr_db").get<std::string>(), "inf");
  EXPECT_TRUE(is_noiseless(instance_from_json(j).snr_db));
}

TEST(Instance, MalformedJsonIsParseError) {
  try {
    instance_from_json(nlohmann::ordered_json{{"format", "otms-instance"}});
    FAIL() << "expected Parse";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Parse);
  }
}

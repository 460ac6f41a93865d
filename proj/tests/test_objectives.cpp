#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "prefopt/objectives.hpp"

using namespace prefopt;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr double kSoftplusNeg01 = 0.64439666007357089;   // ln(1 + e^-0.1)
constexpr double kSigmoidNeg01 = 0.47502081252106001;
constexpr double kSigmoid02 = 0.54983399731247791;
constexpr double kSigmoidNeg1 = 0.26894142136999512;
constexpr double kTwoSoftplus1 = 2.6265233750364457;     // 2 ln(1 + e)

PairLogRatios random_pair(std::mt19937_64& rng, double radius) {
  return {(2.0 * uniform01(rng) - 1.0) * radius,
          (2.0 * uniform01(rng) - 1.0) * radius};
}

}  // namespace

TEST_CASE("dpo matches closed forms") {
  ObjectiveConfig cfg = testutil::objective(ObjectiveKind::dpo);

  const LossGrad zero = dpo_loss({0.0, 0.0}, cfg);
  REQUIRE_THAT(zero.loss, WithinAbs(kLn2, 1e-15));
  REQUIRE_THAT(zero.d_rho_w, WithinAbs(-0.05, 1e-16));
  REQUIRE_THAT(zero.d_rho_l, WithinAbs(0.05, 1e-16));

  const LossGrad one = dpo_loss({1.0, 0.0}, cfg);
  REQUIRE_THAT(one.loss, WithinAbs(kSoftplusNeg01, 1e-15));
  REQUIRE_THAT(one.d_rho_w, WithinAbs(-0.1 * kSigmoidNeg01, 1e-15));

  const LossGrad wide = dpo_loss({100.0, -100.0}, cfg);
  REQUIRE_THAT(wide.loss, WithinRel(2.0611536203143807e-9, 1e-9));
  REQUIRE(std::abs(wide.d_rho_w) < 1e-9);
  REQUIRE(std::isfinite(wide.loss));
  REQUIRE(std::isfinite(wide.d_rho_w));
}

TEST_CASE("cdpo reduces to dpo at epsilon zero, exactly") {
  ObjectiveConfig cfg = testutil::objective(ObjectiveKind::cdpo);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    const PairLogRatios pair = random_pair(rng, 25.0);
    const LossGrad a = cdpo_loss(pair, cfg);
    const LossGrad b = dpo_loss(pair, cfg);
    REQUIRE(a.loss == b.loss);
    REQUIRE(a.d_rho_w == b.d_rho_w);
    REQUIRE(a.d_rho_l == b.d_rho_l);
  }
}

TEST_CASE("cdpo closed form at the symmetric point") {
  ObjectiveConfig cfg = testutil::objective(ObjectiveKind::cdpo);
  cfg.epsilon = 0.1;
  const LossGrad lg = cdpo_loss({0.0, 0.0}, cfg);
  REQUIRE_THAT(lg.loss, WithinAbs(kLn2, 1e-15));
  REQUIRE_THAT(lg.d_rho_w, WithinAbs(-0.04, 1e-15));
  REQUIRE_THAT(lg.d_rho_l, WithinAbs(0.04, 1e-15));
}

TEST_CASE("cdpo rejects epsilon at the 0.5 boundary") {
  ObjectiveConfig cfg = testutil::objective(ObjectiveKind::cdpo);
  cfg.epsilon = 0.5;
  REQUIRE_THROWS_WITH(cdpo_loss({0.0, 0.0}, cfg),
                      Catch::Matchers::ContainsSubstring("epsilon"));
}

TEST_CASE("dpo_hinge piecewise values and tie convention") {
  ObjectiveConfig cfg = testutil::objective(ObjectiveKind::dpo_hinge);

  const LossGrad active = dpo_hinge_loss({0.0, 0.0}, cfg);
  REQUIRE(active.loss == 1.0);
  REQUIRE(active.d_rho_w == -0.1);
  REQUIRE(active.d_rho_l == 0.1);

  const LossGrad saturated = dpo_hinge_loss({20.0, 0.0}, cfg);
  REQUIRE(saturated.loss == 0.0);
  REQUIRE(saturated.d_rho_w == 0.0);
  REQUIRE(saturated.d_rho_l == 0.0);

  const LossGrad partial = dpo_hinge_loss({5.0, 0.0}, cfg);
  REQUIRE_THAT(partial.loss, WithinAbs(0.5, 1e-15));

  // Exact kink: alpha = 1, beta = 0.5, delta_r = 2.
  ObjectiveConfig kink = cfg;
  kink.beta = 0.5;
  const LossGrad at_kink = dpo_hinge_loss({2.0, 0.0}, kink);
  REQUIRE(at_kink.loss == 0.0);
  REQUIRE(at_kink.d_rho_w == 0.0);
}

TEST_CASE("apo_zero closed forms and saturation") {
  ObjectiveConfig cfg = testutil::objective(ObjectiveKind::apo_zero);

  const LossGrad zero = apo_zero_loss({0.0, 0.0}, cfg);
  REQUIRE(zero.loss == 0.0);
  REQUIRE_THAT(zero.d_rho_w, WithinAbs(-0.1 / 4.0, 1e-16));
  REQUIRE_THAT(zero.d_rho_l, WithinAbs(0.1 / 4.0, 1e-16));

  const LossGrad mid = apo_zero_loss({2.0, -1.0}, cfg);
  REQUIRE_THAT(mid.loss, WithinAbs(-kSigmoid02 + kSigmoidNeg01, 1e-15));

  const LossGrad wide = apo_zero_loss({1e4, -1e4}, cfg);
  REQUIRE_THAT(wide.loss, WithinAbs(-1.0, 1e-12));
  REQUIRE(std::isfinite(wide.d_rho_w));
}

TEST_CASE("apo_down closed forms") {
  ObjectiveConfig cfg = testutil::objective(ObjectiveKind::apo_down);

  REQUIRE(apo_down_loss({0.0, 0.0}, cfg).loss == 0.0);

  const LossGrad lg = apo_down_loss({0.0, 10.0}, cfg);
  REQUIRE_THAT(lg.loss, WithinAbs(0.5 - kSigmoidNeg1, 1e-15));
}

TEST_CASE("apo_hinge_zero arithmetic and two-sided saturation") {
  ObjectiveConfig cfg = testutil::objective(ObjectiveKind::apo_hinge_zero);

  const LossGrad both = apo_hinge_zero_loss({0.0, 0.0}, cfg);
  REQUIRE(both.loss == 2.0);
  REQUIRE(both.d_rho_w == -0.1);
  REQUIRE(both.d_rho_l == 0.1);

  const LossGrad saturated = apo_hinge_zero_loss({15.0, -20.0}, cfg);
  REQUIRE(saturated.loss == 0.0);
  REQUIRE(saturated.d_rho_w == 0.0);
  REQUIRE(saturated.d_rho_l == 0.0);

  const LossGrad mixed = apo_hinge_zero_loss({5.0, 2.0}, cfg);
  REQUIRE_THAT(mixed.loss, WithinAbs(1.7, 1e-15));
  REQUIRE(mixed.d_rho_w == -0.1);
  REQUIRE(mixed.d_rho_l == 0.1);
}

TEST_CASE("apo_hinge_softplus closed form, dominance, and small tau") {
  ObjectiveConfig cfg = testutil::objective(ObjectiveKind::apo_hinge_softplus);

  const LossGrad zero = apo_hinge_softplus_loss({0.0, 0.0}, cfg);
  REQUIRE_THAT(zero.loss, WithinAbs(kTwoSoftplus1, 1e-14));

  // softplus upper-bounds the hinge with gap at most 2 tau ln 2.
  std::mt19937_64 rng(5);
  for (int i = 0; i < 400; ++i) {
    ObjectiveConfig sp = cfg;
    sp.tau = 0.25 + 2.0 * uniform01(rng);
    ObjectiveConfig hz = sp;
    hz.kind = ObjectiveKind::apo_hinge_zero;
    const PairLogRatios pair = random_pair(rng, 30.0);
    const double soft = apo_hinge_softplus_loss(pair, sp).loss;
    const double hard = apo_hinge_zero_loss(pair, hz).loss;
    REQUIRE(soft >= hard - 1e-12);
    REQUIRE(soft - hard <= 2.0 * sp.tau * kLn2 + 1e-12);
  }

  ObjectiveConfig sharp = cfg;
  sharp.tau = 0.01;
  const LossGrad lg = apo_hinge_softplus_loss({15.0, -20.0}, sharp);
  REQUIRE(lg.loss < 1e-6);
  REQUIRE(lg.d_rho_w < 0.0);  // never exactly zero
  REQUIRE(lg.d_rho_l > 0.0);
}

TEST_CASE("apo_hinge_softplus converges to the hard hinge as tau -> 0") {
  std::mt19937_64 rng(17);
  ObjectiveConfig sp = testutil::objective(ObjectiveKind::apo_hinge_softplus);
  sp.tau = 1e-3;
  ObjectiveConfig hz = sp;
  hz.kind = ObjectiveKind::apo_hinge_zero;
  int tested = 0;
  while (tested < 300) {
    const PairLogRatios pair = random_pair(rng, 30.0);
    const double kink = std::min(std::abs(sp.margin - sp.beta * pair.rho_w),
                                 std::abs(sp.margin + sp.beta * pair.rho_l));
    if (kink < 0.05) continue;
    ++tested;
    const LossGrad soft = apo_hinge_softplus_loss(pair, sp);
    const LossGrad hard = apo_hinge_zero_loss(pair, hz);
    REQUIRE_THAT(soft.loss, WithinAbs(hard.loss, 1e-2));
    REQUIRE_THAT(soft.d_rho_w, WithinAbs(hard.d_rho_w, 1e-2));
    REQUIRE_THAT(soft.d_rho_l, WithinAbs(hard.d_rho_l, 1e-2));
  }
}

TEST_CASE("margin_sigmoid truncation and reductions") {
  ObjectiveConfig cfg = testutil::objective(ObjectiveKind::margin_sigmoid);

  // delta = 0, eps = 0, gamma = 0 is exactly dpo.
  std::mt19937_64 rng(23);
  for (int i = 0; i < 300; ++i) {
    const PairLogRatios pair = random_pair(rng, 25.0);
    const LossGrad a = margin_sigmoid_loss(pair, cfg);
    const LossGrad b = dpo_loss(pair, cfg);
    REQUIRE(a.loss == b.loss);
    REQUIRE(a.d_rho_w == b.d_rho_w);
  }

  // Gradient starvation: both terms below the threshold.
  ObjectiveConfig starved = cfg;
  starved.delta = 0.7;
  starved.epsilon = 0.1;
  const LossGrad dead = margin_sigmoid_loss({0.0, 0.0}, starved);
  REQUIRE(dead.loss == 0.0);
  REQUIRE(dead.d_rho_w == 0.0);
  REQUIRE(dead.d_rho_l == 0.0);

  ObjectiveConfig clamp = cfg;
  clamp.delta = 0.6;
  const LossGrad clipped = margin_sigmoid_loss({0.0, 0.0}, clamp);
  REQUIRE_THAT(clipped.loss, WithinAbs(kLn2 - 0.6, 1e-15));
}

TEST_CASE("margin_sigmoid reduces to cdpo at delta=0, gamma=0, exactly") {
  std::mt19937_64 rng(29);
  for (double eps : {0.0, 0.1, 0.3}) {
    ObjectiveConfig ms = testutil::objective(ObjectiveKind::margin_sigmoid);
    ms.epsilon = eps;
    ObjectiveConfig cd = testutil::objective(ObjectiveKind::cdpo);
    cd.epsilon = eps;
    for (int i = 0; i < 200; ++i) {
      const PairLogRatios pair = random_pair(rng, 25.0);
      const LossGrad a = margin_sigmoid_loss(pair, ms);
      const LossGrad b = cdpo_loss(pair, cd);
      REQUIRE(a.loss == b.loss);
      REQUIRE(a.d_rho_w == b.d_rho_w);
      REQUIRE(a.d_rho_l == b.d_rho_l);
    }
  }
}

TEST_CASE("margin_sigmoid focal weight stays finite in extreme regimes") {
  ObjectiveConfig cfg = testutil::objective(ObjectiveKind::margin_sigmoid);
  cfg.gamma = 0.5;
  for (double rho : {-1e4, -7400.0, -500.0, 0.0, 500.0, 7400.0, 1e4}) {
    const LossGrad lg = margin_sigmoid_loss({rho, 0.0}, cfg);
    REQUIRE(std::isfinite(lg.loss));
    REQUIRE(std::isfinite(lg.d_rho_w));
    REQUIRE(std::isfinite(lg.d_rho_l));
  }
}

TEST_CASE("delta_r-based objectives couple gradients antisymmetrically") {
  std::mt19937_64 rng(31);
  for (ObjectiveKind kind :
       {ObjectiveKind::dpo, ObjectiveKind::cdpo, ObjectiveKind::dpo_hinge,
        ObjectiveKind::margin_sigmoid}) {
    ObjectiveConfig cfg = testutil::objective(kind);
    cfg.epsilon = 0.1;
    cfg.delta = 0.2;
    for (int i = 0; i < 200; ++i) {
      const LossGrad lg = evaluate_objective(random_pair(rng, 20.0), cfg);
      REQUIRE(lg.d_rho_w == -lg.d_rho_l);
    }
  }
}

TEST_CASE("delta_r-based objectives are shift invariant, anchored ones are not") {
  // Shifts chosen so rho + c is exact in binary floating point.
  const double shifts[] = {2.0, -16.0, 1024.0, -0.5};
  const PairLogRatios base{0.75, -1.25};
  for (double c : shifts) {
    const PairLogRatios moved{base.rho_w + c, base.rho_l + c};
    for (ObjectiveKind kind :
         {ObjectiveKind::dpo, ObjectiveKind::cdpo, ObjectiveKind::dpo_hinge,
          ObjectiveKind::margin_sigmoid}) {
      ObjectiveConfig cfg = testutil::objective(kind);
      cfg.epsilon = 0.2;
      cfg.delta = 0.1;
      REQUIRE(evaluate_objective(base, cfg).loss ==
              evaluate_objective(moved, cfg).loss);
    }
  }
  // Anchored objectives must notice the shift at generic points.
  for (ObjectiveKind kind :
       {ObjectiveKind::apo_zero, ObjectiveKind::apo_hinge_zero,
        ObjectiveKind::apo_hinge_softplus}) {
    ObjectiveConfig cfg = testutil::objective(kind);
    const PairLogRatios point{15.0, 0.0};
    const PairLogRatios moved{16.0, 1.0};
    REQUIRE(evaluate_objective(point, cfg).loss !=
            evaluate_objective(moved, cfg).loss);
  }
  // apo_down depends on rho_w and delta_r, so it is anchored too.
  ObjectiveConfig down = testutil::objective(ObjectiveKind::apo_down);
  REQUIRE(apo_down_loss({2.0, -1.0}, down).loss !=
          apo_down_loss({3.0, 0.0}, down).loss);
}

TEST_CASE("monotonicity in the preference gap") {
  ObjectiveConfig dpo = testutil::objective(ObjectiveKind::dpo);
  ObjectiveConfig hinge = testutil::objective(ObjectiveKind::dpo_hinge);
  std::mt19937_64 rng(37);
  double prev_dr = -30.0;
  double prev_dpo = dpo_loss({prev_dr, 0.0}, dpo).loss;
  double prev_hinge = dpo_hinge_loss({prev_dr, 0.0}, hinge).loss;
  for (int i = 0; i < 300; ++i) {
    const double dr = prev_dr + 0.01 + uniform01(rng);
    const double l_dpo = dpo_loss({dr, 0.0}, dpo).loss;
    const double l_hinge = dpo_hinge_loss({dr, 0.0}, hinge).loss;
    REQUIRE(l_dpo < prev_dpo);      // strictly decreasing
    REQUIRE(l_hinge <= prev_hinge);  // non-increasing
    prev_dr = dr;
    prev_dpo = l_dpo;
    prev_hinge = l_hinge;
  }

  // apo_hinge_zero: non-increasing in rho_w, non-decreasing in rho_l.
  ObjectiveConfig hz = testutil::objective(ObjectiveKind::apo_hinge_zero);
  for (int i = 0; i < 200; ++i) {
    const double a = -30.0 + 60.0 * uniform01(rng);
    const double b = a + 0.01 + uniform01(rng);
    REQUIRE(apo_hinge_zero_loss({b, 0.0}, hz).loss <=
            apo_hinge_zero_loss({a, 0.0}, hz).loss);
    REQUIRE(apo_hinge_zero_loss({0.0, b}, hz).loss >=
            apo_hinge_zero_loss({0.0, a}, hz).loss);
  }
}

TEST_CASE("no kernel produces non-finite output at |rho| up to 1e4") {
  std::vector<ObjectiveConfig> configs;
  for (ObjectiveKind kind : {ObjectiveKind::dpo, ObjectiveKind::cdpo,
                             ObjectiveKind::dpo_hinge, ObjectiveKind::apo_zero,
                             ObjectiveKind::apo_down,
                             ObjectiveKind::apo_hinge_zero,
                             ObjectiveKind::apo_hinge_softplus,
                             ObjectiveKind::margin_sigmoid}) {
    ObjectiveConfig plain = testutil::objective(kind);
    configs.push_back(plain);
    ObjectiveConfig spicy = plain;
    spicy.beta = 2.0;
    spicy.epsilon = 0.3;
    spicy.tau = 0.5;
    spicy.gamma = 2.0;
    spicy.delta = 0.7;
    configs.push_back(spicy);
  }
  const double grid[] = {-1e4, -123.5, 0.0, 77.0, 1e4};
  for (const ObjectiveConfig& cfg : configs) {
    for (double w : grid) {
      for (double l : grid) {
        const LossGrad lg = evaluate_objective({w, l}, cfg);
        REQUIRE(std::isfinite(lg.loss));
        REQUIRE(std::isfinite(lg.d_rho_w));
        REQUIRE(std::isfinite(lg.d_rho_l));
      }
    }
  }
}

TEST_CASE("non-finite inputs are rejected with the field named") {
  ObjectiveConfig cfg = testutil::objective(ObjectiveKind::dpo);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_WITH(dpo_loss({nan, 0.0}, cfg),
                      Catch::Matchers::ContainsSubstring("rho_w"));
  REQUIRE_THROWS_WITH(dpo_loss({0.0, inf}, cfg),
                      Catch::Matchers::ContainsSubstring("rho_l"));
  ObjectiveConfig bad = cfg;
  bad.beta = nan;
  REQUIRE_THROWS_WITH(dpo_loss({0.0, 0.0}, bad),
                      Catch::Matchers::ContainsSubstring("beta"));
  ObjectiveConfig negative = cfg;
  negative.margin = -1.0;
  REQUIRE_THROWS_WITH(evaluate_objective({0.0, 0.0}, negative),
                      Catch::Matchers::ContainsSubstring("m must be > 0"));
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <random>

#include "helpers.hpp"
#include "prefopt/io.hpp"
#include "prefopt/policy.hpp"

using namespace prefopt;
using Catch::Matchers::WithinAbs;

namespace {

PolicyTable table_from_rows(const std::vector<std::vector<double>>& logits,
                            const std::vector<std::vector<double>>& ref) {
  PolicyTable t;
  const int rows = static_cast<int>(logits.size());
  const int cols = static_cast<int>(logits[0].size());
  t.logits = Mat<double>(rows, cols);
  t.ref_logits = Mat<double>(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      t.logits(i, j) = logits[i][j];
      t.ref_logits(i, j) = ref[i][j];
    }
  }
  return t;
}

}  // namespace

TEST_CASE("log_prob closed forms and stability") {
  const PolicyTable uniform = table_from_rows({{0.0, 0.0}}, {{0.0, 0.0}});
  REQUIRE_THAT(log_prob(uniform, 0, 0, PolicySide::policy),
               WithinAbs(std::log(0.5), 1e-15));
  REQUIRE_THAT(log_prob(uniform, 0, 1, PolicySide::policy),
               WithinAbs(std::log(0.5), 1e-15));

  const PolicyTable steep = table_from_rows({{1000.0, 0.0}}, {{0.0, 0.0}});
  const double lp = log_prob(steep, 0, 0, PolicySide::policy);
  REQUIRE(lp > -1e-6);
  REQUIRE(lp <= 0.0);
  REQUIRE(std::isfinite(log_prob(steep, 0, 1, PolicySide::policy)));

  const PolicyTable three =
      table_from_rows({{1.0, 2.0, 3.0}}, {{0.0, 0.0, 0.0}});
  REQUIRE_THAT(log_prob(three, 0, 1, PolicySide::policy),
               WithinAbs(-1.4076059644443803, 1e-13));
}

TEST_CASE("log_ratio identities") {
  // Identity policy: every ratio is exactly zero.
  PolicyTable same = table_from_rows({{0.3, -1.2, 0.8}}, {{0.3, -1.2, 0.8}});
  for (int y = 0; y < 3; ++y) REQUIRE(log_ratio(same, 0, y) == 0.0);

  // ln sigma(1) - ln 0.5 = ln(e / (1 + e)) + ln 2.
  PolicyTable pair = table_from_rows({{1.0, 0.0}}, {{0.0, 0.0}});
  REQUIRE_THAT(log_ratio(pair, 0, 0),
               WithinAbs(0.37988549304172248, 1e-14));

  // Adding a constant to a whole row leaves its ratios unchanged.
  PolicyTable shifted = pair;
  for (int y = 0; y < 2; ++y) shifted.logits(0, y) += 7.0;
  for (int y = 0; y < 2; ++y) {
    REQUIRE_THAT(log_ratio(shifted, 0, y),
                 WithinAbs(log_ratio(pair, 0, y), 1e-12));
  }
}

TEST_CASE("index validation") {
  PolicyTable t = table_from_rows({{0.0, 0.0}}, {{0.0, 0.0}});
  REQUIRE_THROWS_AS(log_prob(t, 1, 0, PolicySide::policy), std::out_of_range);
  REQUIRE_THROWS_AS(log_prob(t, 0, 2, PolicySide::policy), std::out_of_range);
  GradBuffer buffer(1, 2);
  REQUIRE_THROWS_WITH(accumulate_pair_grad(t, buffer, 0, 1, 1, 0.5, 0.5),
                      Catch::Matchers::ContainsSubstring("degenerate"));
}

TEST_CASE("accumulate_pair_grad matches the softmax Jacobian") {
  PolicyTable t = table_from_rows({{0.0, 0.0}}, {{0.0, 0.0}});
  GradBuffer buffer(1, 2);

  // Zero derivatives leave the buffer untouched but count the pair.
  accumulate_pair_grad(t, buffer, 0, 0, 1, 0.0, 0.0);
  REQUIRE(buffer.grads(0, 0) == 0.0);
  REQUIRE(buffer.grads(0, 1) == 0.0);
  REQUIRE(buffer.accumulated_pairs == 1);

  buffer.reset();
  accumulate_pair_grad(t, buffer, 0, 0, 1, 1.0, 0.0);
  REQUIRE_THAT(buffer.grads(0, 0), WithinAbs(0.5, 1e-15));
  REQUIRE_THAT(buffer.grads(0, 1), WithinAbs(-0.5, 1e-15));
}

TEST_CASE("row gradient from any pair sums to zero") {
  std::mt19937_64 rng(13);
  PolicyTable t;
  t.logits = Mat<double>(3, 5);
  t.ref_logits = Mat<double>(3, 5, 0.0);
  for (double& v : t.logits.data) v = 4.0 * (uniform01(rng) - 0.5);
  GradBuffer buffer(3, 5);
  for (int trial = 0; trial < 100; ++trial) {
    buffer.reset();
    const int x = uniform_index(rng, 3);
    const int y_w = uniform_index(rng, 5);
    int y_l = uniform_index(rng, 4);
    if (y_l >= y_w) ++y_l;
    accumulate_pair_grad(t, buffer, x, y_w, y_l, uniform01(rng) - 0.5,
                         uniform01(rng) - 0.5);
    double row_sum = 0.0;
    for (int y = 0; y < 5; ++y) row_sum += buffer.grads(x, y);
    REQUIRE_THAT(row_sum, WithinAbs(0.0, 1e-12));
    // Other rows untouched.
    for (int r = 0; r < 3; ++r) {
      if (r == x) continue;
      for (int y = 0; y < 5; ++y) REQUIRE(buffer.grads(r, y) == 0.0);
    }
  }
}

TEST_CASE("full-chain gradients match finite differences for every objective") {
  std::mt19937_64 rng(17);
  PolicyTable t;
  t.logits = Mat<double>(2, 3);
  t.ref_logits = Mat<double>(2, 3);
  for (double& v : t.logits.data) v = 2.0 * (uniform01(rng) - 0.5);
  for (double& v : t.ref_logits.data) v = 2.0 * (uniform01(rng) - 0.5);

  const std::vector<PrefRecord> pairs = {
      {0, 0, 1}, {0, 2, 0}, {1, 1, 2}, {1, 0, 2}};

  for (ObjectiveKind kind :
       {ObjectiveKind::dpo, ObjectiveKind::cdpo, ObjectiveKind::dpo_hinge,
        ObjectiveKind::apo_zero, ObjectiveKind::apo_down,
        ObjectiveKind::apo_hinge_zero, ObjectiveKind::apo_hinge_softplus,
        ObjectiveKind::margin_sigmoid}) {
    ObjectiveConfig cfg = testutil::objective(kind);
    cfg.beta = 0.3;
    cfg.epsilon = 0.1;
    cfg.delta = 0.2;

    const auto total_loss = [&](const PolicyTable& table) {
      double sum = 0.0;
      for (const PrefRecord& rec : pairs) {
        const PairLogRatios pair{log_ratio(table, rec.prompt, rec.winner),
                                 log_ratio(table, rec.prompt, rec.loser)};
        sum += evaluate_objective(pair, cfg).loss;
      }
      return sum / static_cast<double>(pairs.size());
    };

    GradBuffer buffer(2, 3);
    for (const PrefRecord& rec : pairs) {
      const PairLogRatios pair{log_ratio(t, rec.prompt, rec.winner),
                               log_ratio(t, rec.prompt, rec.loser)};
      const LossGrad lg = evaluate_objective(pair, cfg);
      accumulate_pair_grad(t, buffer, rec.prompt, rec.winner, rec.loser,
                           lg.d_rho_w / pairs.size(),
                           lg.d_rho_l / pairs.size());
    }

    const double h = 1e-5;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 3; ++j) {
        PolicyTable probe = t;
        probe.logits(i, j) += h;
        const double hi = total_loss(probe);
        probe.logits(i, j) = t.logits(i, j) - h;
        const double lo = total_loss(probe);
        const double fd = (hi - lo) / (2.0 * h);
        const double analytic = buffer.grads(i, j);
        const double ref = std::max({std::abs(fd), std::abs(analytic), 1e-8});
        INFO(to_string(kind) << " at logit (" << i << "," << j << ")");
        REQUIRE(std::abs(fd - analytic) / ref < 1e-6);
      }
    }
  }
}

TEST_CASE("sample_response is deterministic, concentrated, and calibrated") {
  std::mt19937_64 rng(21);

  const PolicyTable spike =
      table_from_rows({{1e6, 0.0, 0.0}}, {{0.0, 0.0, 0.0}});
  int hits = 0;
  for (int i = 0; i < 10000; ++i) {
    if (sample_response(spike, 0, rng, PolicySide::policy) == 0) ++hits;
  }
  REQUIRE(hits > 9990);

  const PolicyTable flat = table_from_rows({{0.0, 0.0, 0.0, 0.0}},
                                           {{0.0, 0.0, 0.0, 0.0}});
  std::map<int, int> counts;
  for (int i = 0; i < 100000; ++i) {
    counts[sample_response(flat, 0, rng, PolicySide::policy)]++;
  }
  for (const auto& [response, count] : counts) {
    REQUIRE_THAT(count / 100000.0, WithinAbs(0.25, 0.01));
  }

  std::mt19937_64 a(99), b(99);
  for (int i = 0; i < 200; ++i) {
    REQUIRE(sample_response(flat, 0, a, PolicySide::policy) ==
            sample_response(flat, 0, b, PolicySide::policy));
  }
}

TEST_CASE("checkpoint round-trip is bit exact") {
  std::mt19937_64 rng(31);
  PolicyTable t;
  t.logits = Mat<double>(3, 4);
  t.ref_logits = Mat<double>(3, 4);
  for (double& v : t.logits.data) v = std::ldexp(uniform01(rng) - 0.5, -30);
  for (double& v : t.ref_logits.data) v = 1e3 * (uniform01(rng) - 0.5);
  t.logits(0, 0) = 1e-300;
  t.logits(0, 1) = -0.0;
  t.logits(0, 2) = 3.141592653589793;

  const auto path = testutil::fresh_temp_dir("policy_io") / "table.policy";
  save_policy(t, 987654321ull, path);
  const LoadedPolicy loaded = load_policy(path);
  REQUIRE(loaded.seed == 987654321ull);
  REQUIRE(loaded.table.logits == t.logits);
  REQUIRE(loaded.table.ref_logits == t.ref_logits);
}

TEST_CASE("corrupted checkpoints are rejected") {
  const auto dir = testutil::fresh_temp_dir("policy_bad");
  {
    std::ofstream out(dir / "bad.policy");
    out << "prefopt-policy v1\nprompts 2 responses 2 seed 1\nref_logits\n"
        << "0x0p+0 0x0p+0\n";  // truncated
  }
  REQUIRE_THROWS(load_policy(dir / "bad.policy"));
  REQUIRE_THROWS_WITH(load_policy(dir / "missing.policy"),
                      Catch::Matchers::ContainsSubstring("missing.policy"));
}

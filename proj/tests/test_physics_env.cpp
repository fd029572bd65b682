#include <doctest.h>

#include <cmath>
#include <thread>
#include <vector>

#include "pcfmem/errors.hpp"
#include "pcfmem/physics_env.hpp"

using namespace pcfmem;

namespace {

Geometry geo(double pitch, double fill, int rings) { return {pitch, fill * pitch, rings}; }

}  // namespace

TEST_CASE("sellmeier index of fused silica") {
  // Reference values from a 30-digit evaluation of the three-term sum.
  CHECK(sellmeier_index(1.55) == doctest::Approx(1.4440236217032609).epsilon(1e-13));
  CHECK(sellmeier_index(1.30) == doctest::Approx(1.4469175294461719).epsilon(1e-13));
  CHECK(sellmeier_index(1.30) > sellmeier_index(1.55));
  CHECK(sellmeier_index(1.55) == sellmeier_index(1.55));
  CHECK_THROWS_AS(sellmeier_index(1.19), DomainError);
  CHECK_THROWS_AS(sellmeier_index(1.71), DomainError);
}

TEST_CASE("effective index surrogate") {
  const Geometry g = geo(2.3, 0.5, 6);
  CHECK(effective_index(g, 1.55) == doctest::Approx(1.4311780712926698).epsilon(1e-12));
  // Correction term vanishes as the holes shrink.
  const Geometry tiny{2.3, 1e-9, 6};
  CHECK(effective_index(tiny, 1.55) == doctest::Approx(sellmeier_index(1.55)).epsilon(1e-12));
  double prev = effective_index(geo(2.3, 0.1, 6), 1.55);
  for (double f = 0.2; f <= 0.9; f += 0.1) {
    const double n = effective_index(geo(2.3, f, 6), 1.55);
    CHECK(n < prev);
    CHECK(n < sellmeier_index(1.55));
    prev = n;
  }
}

TEST_CASE("dispersion against the analytic second derivative") {
  CHECK(dispersion(geo(2.3, 0.5, 6), 1.55) == doctest::Approx(77.199727961794573).epsilon(1e-7));
  // The correction term contributes -kDispersionUnit * lambda * (-2 A r^p / pitch^2).
  const double r = 0.5, pitch = 2.3, lambda = 1.55;
  const double corr = surrogate::kDispersionUnit * lambda * 2.0 * surrogate::kIndexScale *
                      std::pow(r, surrogate::kFillExponent) / (pitch * pitch);
  const double silica_only = dispersion(Geometry{pitch, 1e-12, 6}, lambda);
  CHECK(dispersion(geo(pitch, r, 6), lambda) - silica_only == doctest::Approx(corr).epsilon(1e-6));
  CHECK_THROWS_AS(dispersion(geo(2.3, 0.5, 6), 1.2), DomainError);
  CHECK_THROWS_AS(dispersion(geo(2.3, 0.5, 6), 1.7), DomainError);
}

TEST_CASE("confinement loss") {
  CHECK(confinement_loss(geo(2.3, 0.5, 6), 1.55) ==
        doctest::Approx(0.025454531698342627).epsilon(1e-12));
  CHECK(confinement_loss(geo(4.0, 0.9, 10), 1.2) < 1e-8);
  for (int n = 3; n < 10; ++n)
    CHECK(confinement_loss(geo(2.0, 0.5, n + 1), 1.55) < confinement_loss(geo(2.0, 0.5, n), 1.55));
  CHECK(confinement_loss(geo(2.0, 0.6, 6), 1.55) < confinement_loss(geo(2.0, 0.5, 6), 1.55));
  CHECK(confinement_loss(geo(2.0, 0.5, 6), 1.55) > 0.0);
}

TEST_CASE("simulate charges one call per successful evaluation") {
  CallCounter c;
  const Geometry g = geo(2.3, 0.5, 6);
  const SimResult a = simulate(g, 1.55, c);
  const SimResult b = simulate(g, 1.55, c);
  CHECK(a == b);
  CHECK(c.total_calls() == 2);
  CHECK(a.n_eff == effective_index(g, 1.55));
  CHECK(a.loss_db_km == confinement_loss(g, 1.55));
  CHECK(a.dispersion_ps_nm_km == dispersion(g, 1.55));

  CHECK_THROWS_AS(simulate(geo(0.9, 0.5, 6), 1.55, c), ValidationError);
  CHECK_THROWS_AS(simulate(geo(2.0, 0.95, 6), 1.55, c), ValidationError);
  CHECK_THROWS_AS(simulate(geo(2.0, 0.5, 11), 1.55, c), ValidationError);
  CHECK_THROWS_AS(simulate(g, 1.9, c), DomainError);
  CHECK(c.total_calls() == 2);

  c.begin_query();
  CHECK(c.per_query_calls() == 0);
  simulate(g, 1.31, c);
  CHECK(c.per_query_calls() == 1);
}

TEST_CASE("validate names every violated bound") {
  try {
    validate(Geometry{5.0, 4.9, 2});
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("pitch") != std::string::npos);
    CHECK(msg.find("hole_d_um/pitch_um") != std::string::npos);
    CHECK(msg.find("rings") != std::string::npos);
  }
  CHECK(is_valid(geo(1.0, 0.9, 3)));
  CHECK_FALSE(is_valid(Geometry{2.0, 0.0, 6}));
}

TEST_CASE("clamp_to_bounds always lands inside the box") {
  for (double p : {0.2, 1.0, 2.7, 4.0, 9.0})
    for (double d : {-1.0, 0.0, 0.3, 3.6, 40.0})
      for (int n : {-2, 3, 7, 10, 30}) CHECK(is_valid(clamp_to_bounds(Geometry{p, d, n})));
}

TEST_CASE("verify uses strict tolerances") {
  SimResult r{1.55, 1.43, 0.02, 30.0};
  TargetSpec t{1.55, 30.0, 0.02};
  CHECK(verify(r, t));
  t.d_target = 35.0;
  CHECK_FALSE(verify(r, t));  // exactly tol_d away
  t.d_target = 34.9;
  t.alpha_target = 0.022;
  CHECK_FALSE(verify(r, t));
  t.alpha_target = 0.02;
  CHECK(verify(r, t));
  t.lambda_um = 1.31;
  CHECK_THROWS_AS(verify(r, t), ValidationError);
}

TEST_CASE("trend signs follow the surrogate") {
  const Geometry g = geo(2.3, 0.5, 6);
  CHECK(trend_sign(g, 1.55, Param::kHoleD, Metric::kLoss) == -1);
  CHECK(trend_sign(g, 1.55, Param::kRings, Metric::kLoss) == -1);
  CHECK(trend_sign(g, 1.55, Param::kHoleD, Metric::kNeff) == -1);
  CHECK(trend_sign(g, 1.55, Param::kRings, Metric::kDispersion) == 0);
  CHECK(trend_sign(g, 1.55, Param::kHoleD, Metric::kDispersion) == 1);
}

TEST_CASE("dispersion is bit-identical across threads") {
  const double ref = dispersion(geo(2.3, 0.5, 6), 1.55);
  std::vector<double> out(4);
  std::vector<std::thread> ts;
  for (int i = 0; i < 4; ++i) ts.emplace_back([&, i] { out[i] = dispersion(geo(2.3, 0.5, 6), 1.55); });
  for (auto& t : ts) t.join();
  for (double v : out) CHECK(v == ref);
}

TEST_CASE("json round trip of physics records") {
  const Geometry g = geo(2.3, 0.5, 6);
  nlohmann::json j = g;
  CHECK(j.at("pitch_um") == 2.3);
  CHECK(j.get<Geometry>() == g);
  const SimResult r{1.55, 1.43, 0.02, 30.0};
  CHECK(nlohmann::json(r).get<SimResult>() == r);
  const TargetSpec t{1.31, -10.0, 1e-4};
  CHECK(nlohmann::json(t).get<TargetSpec>() == t);
}

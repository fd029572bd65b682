#include <doctest.h>

#include <cmath>

#include "pcfmem/baselines.hpp"
#include "pcfmem/errors.hpp"
#include "pcfmem/eval_suite.hpp"

using namespace pcfmem;

namespace {

TargetSpec reachable(const Geometry& g, double lambda) {
  CallCounter scratch;
  const SimResult r = simulate(g, lambda, scratch);
  return {lambda, r.dispersion_ps_nm_km, r.loss_db_km, 5.0, 1e-3};
}

}  // namespace

TEST_CASE("random search spends exactly its budget") {
  const TargetSpec t = reachable({2.3, 1.15, 6}, 1.55);
  CallCounter c;
  Rng rng(5);
  const BaselineResult r = random_search(t, c, rng);
  CHECK(c.total_calls() == 100);
  CHECK(r.calls == 100);
  CHECK(is_valid(r.geometry));
  CHECK(r.budget_exhausted == !verify(r.result, t));
  CHECK(r.text == templated_answer(r.geometry, r.result));
  Rng again(5);
  CallCounter c2;
  CHECK(random_search(t, c2, again).geometry == r.geometry);
}

TEST_CASE("Nelder-Mead respects the hard cap") {
  for (const Geometry& g : {Geometry{2.3, 1.15, 6}, Geometry{1.2, 1.0, 9}, Geometry{3.8, 1.0, 4}}) {
    for (double lambda : {1.31, 1.55}) {
      const TargetSpec t = reachable(g, lambda);
      CallCounter c;
      const BaselineResult r = nelder_mead(t, c);
      CHECK(c.total_calls() <= 135);
      CHECK(r.calls == c.total_calls());
      CHECK(is_valid(r.geometry));
    }
  }
  CallCounter c;
  const BaselineResult small = nelder_mead(reachable({3.8, 1.0, 4}, 1.31), c, 10);
  CHECK(c.total_calls() <= 10);
}

TEST_CASE("surrogate verifies a single candidate") {
  Rng rng(7);
  CallCounter training;
  const auto data = SurrogateModel::make_dataset(400, rng, training);
  CHECK(training.total_calls() == 400);
  SurrogateModel m(11);
  const double first = m.train(data, 1, 64, 1e-3, rng);
  const double last = m.train(data, 15, 64, 1e-3, rng);
  CHECK(last < first);
  const auto y = m.predict({2.3, 1.15, 6}, 1.55);
  for (double v : y) CHECK(std::isfinite(v));

  const TargetSpec t = reachable({2.3, 1.15, 6}, 1.55);
  CallCounter c;
  const BaselineResult r = surrogate_search(m, t, c, rng);
  CHECK(c.total_calls() == 1);
  CHECK(r.calls == 1);
}

TEST_CASE("surrogate gradient matches finite differences") {
  Rng rng(13);
  CallCounter training;
  const auto data = SurrogateModel::make_dataset(16, rng, training);
  SurrogateModel m(17);
  std::vector<double> grad;
  m.batch_loss(data, &grad);
  REQUIRE(grad.size() == m.weights().size());
  const double h = 1e-4;  // loss is O(10); smaller steps drown in rounding
  for (std::size_t i = 0; i < grad.size(); i += 997) {
    CAPTURE(i);
    const double w0 = m.weights()[i];
    m.weights()[i] = w0 + h;
    const double up = m.batch_loss(data, nullptr);
    m.weights()[i] = w0 - h;
    const double dn = m.batch_loss(data, nullptr);
    m.weights()[i] = w0;
    CHECK(grad[i] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-4).scale(1e-7));
  }
  std::vector<SurrogateModel::Sample> one(data.begin(), data.begin() + 1);
  CHECK_THROWS_AS(m.batch_loss(one, nullptr), ValidationError);
}

TEST_CASE("baseline names") {
  CHECK(baseline_from_string("nelder_mead") == BaselineKind::kNelderMead);
  CHECK(to_string(BaselineKind::kSurrogate) == "surrogate");
  CHECK_THROWS(baseline_from_string("grid"));
}

#include <doctest.h>

#include <cmath>

#include "pcfmem/data_synth.hpp"
#include "pcfmem/errors.hpp"
#include "pcfmem/rl_trainer.hpp"

using namespace pcfmem;

namespace {

struct Small {
  std::vector<Trace> train, val;
  QueryIndex queries;
};

const Small& small_data() {
  static const Small data = [] {
    CallCounter c;
    const Corpus corpus = gen_corpus(5, 80, c);
    Rng rng(6);
    const Splits s = split(corpus.traces, rng);
    Small d;
    for (const auto& t : corpus.traces) {
      if (std::find(s.train.begin(), s.train.end(), t.id) != s.train.end()) d.train.push_back(t);
      if (std::find(s.val.begin(), s.val.end(), t.id) != s.val.end()) d.val.push_back(t);
    }
    d.queries = index_queries(corpus.queries);
    return d;
  }();
  return data;
}

TrainerConfig tiny() {
  TrainerConfig cfg;
  cfg.ppo.inner_epochs = 2;
  cfg.ppo.outer_epochs = 2;
  cfg.ppo.batch = 4;
  cfg.ppo.minibatch = 8;
  cfg.ppo.epochs_per_update = 1;
  cfg.val_traces = 6;
  return cfg;
}

}  // namespace

TEST_CASE("reward redistribution") {
  auto r = redistribute(1.0, 3, 0.5, 0.0);
  CHECK(r[0] == doctest::Approx(1.0 / 7.0));
  CHECK(r[1] == doctest::Approx(2.0 / 7.0));
  CHECK(r[2] == doctest::Approx(4.0 / 7.0));
  r = redistribute(1.0, 3, 0.5, 0.5);
  CHECK(r[0] == doctest::Approx(0.5 / 7.0));
  CHECK(r[2] == doctest::Approx(5.5 / 7.0));
  r = redistribute(0.7, 4, 0.9, 1.0);
  CHECK(r == std::vector<double>{0.0, 0.0, 0.0, 0.7});
  for (std::size_t T : {1u, 2u, 7u, 13u}) {
    const auto v = redistribute(0.3, T, 0.9, 0.5);
    double s = 0.0;
    for (double x : v) s += x;
    CHECK(s == 0.3);
  }
  CHECK(redistribute(0.0, 5, 0.9, 0.5) == std::vector<double>(5, 0.0));
  CHECK_THROWS_AS(redistribute(1.0, 0, 0.9, 0.5), ValidationError);
  CHECK(compose_step_rewards({0.05, -0.1}, {0.2, 0.3}) ==
        std::vector<double>{0.05 + 0.2, -0.1 + 0.3});
  CHECK_THROWS_AS(compose_step_rewards({0.0}, {0.0, 1.0}), ValidationError);
}

TEST_CASE("generalized advantage estimation") {
  const auto g = compute_gae({1.0, 0.0, 2.0}, {0.5, 0.2, 0.1}, 0.9, 0.5);
  CHECK(g.advantages[2] == doctest::Approx(1.9));
  CHECK(g.advantages[1] == doctest::Approx(0.745));
  CHECK(g.advantages[0] == doctest::Approx(1.01525));
  CHECK(g.returns[0] == doctest::Approx(1.51525));
  CHECK(g.returns[2] == doctest::Approx(2.0));
  // lambda = 1, zero values: discounted reward-to-go.
  const auto mc = compute_gae({1.0, 1.0}, {0.0, 0.0}, 0.5, 1.0);
  CHECK(mc.advantages[0] == doctest::Approx(1.5));
  CHECK_THROWS_AS(compute_gae({}, {}, 0.9, 0.9), ValidationError);

  std::vector<double> adv{1.0, 2.0, 3.0, 4.0};
  normalize_advantages(adv);
  double m = 0.0, v = 0.0;
  for (double a : adv) m += a / 4;
  for (double a : adv) v += (a - m) * (a - m) / 4;
  CHECK(m == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(v == doctest::Approx(1.0));
  std::vector<double> one{3.0};
  normalize_advantages(one);
  CHECK(one[0] == 0.0);
}

TEST_CASE("AdamW step") {
  AdamW opt(2, 0.1, 0.01);
  std::vector<double> w{1.0, -2.0};
  opt.step(w, {0.5, -0.25});
  CHECK(w[0] == doctest::Approx(1.0 - 0.1 * (1.0 + 0.01)));
  CHECK(w[1] == doctest::Approx(-2.0 - 0.1 * (-1.0 - 0.02)));
  CHECK(opt.steps() == 1);
  // Zero gradient still decays the weights.
  std::vector<double> u{1.0, 1.0};
  AdamW plain(2, 0.1, 0.5);
  plain.step(u, {0.0, 0.0});
  CHECK(u[0] == doctest::Approx(0.95));
  CHECK_THROWS_AS(plain.step(u, {0.0}), ValidationError);
}

TEST_CASE("config validation") {
  PPOConfig c;
  c.validate();
  c.gamma_d = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PPOConfig{};
  c.beta = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PPOConfig{};
  c.minibatch = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

namespace {

std::vector<Transition> fake_batch(const PolicyParams& p, const std::vector<Embedding>& skills,
                                   const std::vector<double>& adv, const std::vector<double>& shift) {
  const auto& data = small_data();
  std::vector<Transition> out;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    const Span& s = data.train[i].spans.front();
    Transition t;
    t.x = context_input(s, {});
    const auto f = p.forward(t.x);
    t.bias = {0.0, 0.0, 0.5, 0.0};
    const auto z = skill_logits(f.h, skills, t.bias);
    t.actions = {static_cast<int>(i % 4), static_cast<int>((i + 1) % 4)};
    t.logp_old = action_logprob(z, t.actions) + shift[i];
    t.value_old = f.value;
    t.advantage = adv[i];
    t.ret = 0.3 * static_cast<double>(i);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

TEST_CASE("ppo loss at the behavior policy") {
  const PolicyParams p(31);
  const auto skills = skill_embeddings(initial_bank());
  const auto batch = fake_batch(p, skills, {1.0, -0.5, 0.3}, {0.0, 0.0, 0.0});
  std::vector<const Transition*> ptr;
  for (const auto& t : batch) ptr.push_back(&t);
  const LossParts l = ppo_loss(p, ptr, skills, PPOConfig{}, nullptr);
  CHECK(l.mean_ratio == doctest::Approx(1.0));
  CHECK(l.clip_fraction == 0.0);
  CHECK(l.approx_kl == doctest::Approx(0.0).scale(1e-12));
  CHECK(l.policy == doctest::Approx(-(1.0 - 0.5 + 0.3) / 3.0));
}

TEST_CASE("ppo loss gradient matches finite differences") {
  PolicyParams p(37);
  const auto skills = skill_embeddings(initial_bank());
  // Ratios around 0.74, 1.0 and 1.35: both clipped and unclipped branches appear.
  const auto batch = fake_batch(p, skills, {1.0, -0.7, 0.4, -1.2}, {0.3, 0.0, -0.3, 0.1});
  std::vector<const Transition*> ptr;
  for (const auto& t : batch) ptr.push_back(&t);
  PPOConfig cfg;
  std::vector<double> grad;
  const LossParts base = ppo_loss(p, ptr, skills, cfg, &grad);
  CHECK(base.clip_fraction > 0.0);
  const std::size_t probes[] = {PolicyParams::kW1 + 3, PolicyParams::kB1 + 100, PolicyParams::kW2 + 777,
                                PolicyParams::kW3 + 4000, PolicyParams::kB3 + 9, PolicyParams::kWv + 2,
                                PolicyParams::kBv};
  const double h = 1e-6;
  for (std::size_t i : probes) {
    CAPTURE(i);
    const double w0 = p.weights()[i];
    p.weights()[i] = w0 + h;
    const double up = ppo_loss(p, ptr, skills, cfg, nullptr).total;
    p.weights()[i] = w0 - h;
    const double dn = ppo_loss(p, ptr, skills, cfg, nullptr).total;
    p.weights()[i] = w0;
    CHECK(grad[i] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-4).scale(1e-6));
  }
}

TEST_CASE("ppo update changes weights and reports statistics") {
  PolicyParams p(41);
  const PolicyParams before = p;
  const auto skills = skill_embeddings(initial_bank());
  const auto batch = fake_batch(p, skills, {1.0, -1.0, 0.5, -0.5}, {0.0, 0.0, 0.0, 0.0});
  AdamW opt(p.size(), 1e-4, 0.01);
  Rng rng(1);
  PPOConfig cfg;
  cfg.minibatch = 2;
  const PPOStats s = ppo_update(p, opt, batch, skills, cfg, rng);
  CHECK(s.minibatches == 8);
  CHECK(opt.steps() == 8);
  CHECK_FALSE(p == before);
  CHECK(std::isfinite(s.loss));

  auto bad = batch;
  bad[0].advantage = std::nan("");
  CHECK_THROWS_AS(ppo_update(p, opt, bad, skills, cfg, rng), NumericError);
}

TEST_CASE("episode rewards sum to process plus final reward") {
  const auto& data = small_data();
  const SkillBank bank = initial_bank();
  const auto emb = skill_embeddings(bank);
  const PolicyParams p(43);
  const Trace& t = data.train.front();
  Rng rng(2);
  CallCounter counter;
  const EpisodeResult ep = run_episode(p, bank, emb, {}, t, data.queries.at(t.id), SelectionMode::kSample,
                                       TrainerConfig{}, rng, counter);
  CHECK(ep.transitions.size() == t.spans.size());
  CHECK(ep.transitions.back().done);
  double proc = 0.0;
  for (double r : ep.process_rewards) proc += r;
  CHECK(ep.episode_return == doctest::Approx(proc + ep.r_final));
  CHECK(ep.answers.size() == data.queries.at(t.id).size());
  CHECK(counter.total_calls() == 1);  // one parameter_adjustment query
  for (const auto& tr : ep.transitions) CHECK(tr.actions.size() == 2);
}

TEST_CASE("closed loop is deterministic across worker counts") {
  const auto& d = small_data();
  TrainerConfig a = tiny();
  TrainerConfig b = tiny();
  b.workers = 3;
  const auto ra = run_closed_loop(a, d.train, d.val, d.queries, 77);
  const auto rb = run_closed_loop(b, d.train, d.val, d.queries, 77);
  CHECK(ra.params == rb.params);
  CHECK(ra.bank == rb.bank);
  REQUIRE(ra.log.size() == 4);
  for (std::size_t i = 0; i < ra.log.size(); ++i) CHECK(ra.log[i].mean_return == rb.log[i].mean_return);
  const auto rc = run_closed_loop(a, d.train, d.val, d.queries, 78);
  CHECK_FALSE(rc.params == ra.params);
}

TEST_CASE("zero outer epochs runs one inner loop without designer") {
  const auto& d = small_data();
  TrainerConfig cfg = tiny();
  cfg.ppo.outer_epochs = 0;
  cfg.ppo.inner_epochs = 3;
  const auto r = run_closed_loop(cfg, d.train, d.val, d.queries, 1);
  CHECK(r.log.size() == 3);
  CHECK(r.cycles.empty());
  CHECK(r.bank == initial_bank());
}

TEST_CASE("identity proposals are accepted with a version bump") {
  const auto& d = small_data();
  TrainerConfig cfg = tiny();
  Designer same = [](const SkillBank& b, const std::vector<FailureCluster>&, int) {
    return Proposal{b, {}, true};
  };
  const auto r = run_closed_loop(cfg, d.train, d.val, d.queries, 3, initial_bank(), same);
  REQUIRE(r.cycles.size() == 2);
  for (const auto& c : r.cycles) {
    CHECK(c.accepted);
    CHECK(c.j_current == c.j_candidate);
  }
  CHECK(r.bank.version() == 2);
  CHECK(r.bank.skills() == initial_bank().skills());
}

TEST_CASE("a destructive proposal is rolled back") {
  const auto& d = small_data();
  TrainerConfig cfg = tiny();
  cfg.ppo.outer_epochs = 1;
  cfg.val_traces = 12;
  Designer wipe = [](const SkillBank& b, const std::vector<FailureCluster>&, int epoch) {
    Skill del = catalog_skill(TemplateId::kDeleteInvalid);
    del.params["theta_del"] = 0.0;
    Proposal p;
    p.candidate = mutate(b, {RetireSkill{"s0"}, RetireSkill{"s1"}, RetireSkill{"s2"}, AddSkill{del}}, epoch);
    p.identity = false;
    return p;
  };
  const auto r = run_closed_loop(cfg, d.train, d.val, d.queries, 3, initial_bank(), wipe);
  REQUIRE(r.cycles.size() == 1);
  CHECK(r.cycles[0].j_candidate < r.cycles[0].j_current);
  CHECK_FALSE(r.cycles[0].accepted);
  CHECK(r.bank == initial_bank());
}

TEST_CASE("bank size cap turns proposals into identity") {
  const auto& d = small_data();
  TrainerConfig cfg = tiny();
  cfg.ppo.outer_epochs = 1;
  cfg.max_bank_size = 4;
  Designer grow = [](const SkillBank& b, const std::vector<FailureCluster>&, int epoch) {
    return Proposal{mutate(b, {AddSkill{catalog_skill(TemplateId::kFailureBoundaryInsert)}}, epoch), {"add"}, false};
  };
  const auto r = run_closed_loop(cfg, d.train, d.val, d.queries, 3, initial_bank(), grow);
  CHECK(r.cycles[0].identity);
  CHECK(r.bank.size() == 4);
}

TEST_CASE("validation subset is the first traces by id") {
  const auto& d = small_data();
  const auto v = validation_subset(d.val, 3);
  REQUIRE(v.size() == 3);
  CHECK(v[0].id < v[1].id);
  CHECK(v[1].id < v[2].id);
  for (const auto& t : d.val) CHECK(t.id >= v[0].id);
  CHECK(validation_subset(d.val, 1000).size() == d.val.size());
}

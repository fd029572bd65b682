// End-to-end acceptance checks. Prints one line per criterion and exits
// non-zero if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pcfmem/baselines.hpp"
#include "pcfmem/pipeline.hpp"

using namespace pcfmem;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool close_rel(double a, double b, double rel, double floor) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + floor;
}

// ---------------------------------------------------------------- 1
Outcome reward_conservation() {
  double worst = 0.0;
  for (std::size_t T = 1; T <= 64; ++T)
    for (double g : {0.5, 0.9, 0.99})
      for (double b : {0.0, 0.5, 1.0})
        for (double r : {1.0, 2.0 / 3.0, 0.0, -0.4}) {
          double s = 0.0;
          for (double x : redistribute(r, T, g, b)) s += x;
          worst = std::max(worst, std::abs(s - r));
        }
  return {worst <= 1e-9, "max |sum - R| = " + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------- 2
void tuples(std::size_t n, std::size_t k, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (cur.size() == k) {
    out.push_back(cur);
    return;
  }
  for (int i = 0; i < static_cast<int>(n); ++i) {
    if (std::find(cur.begin(), cur.end(), i) != cur.end()) continue;
    cur.push_back(i);
    tuples(n, k, cur, out);
    cur.pop_back();
  }
}

Outcome plackett_luce() {
  Rng rng(2024);
  double worst_sum = 0.0;
  for (std::size_t n = 1; n <= 6; ++n)
    for (std::size_t k = 1; k <= std::min<std::size_t>(3, n); ++k) {
      std::vector<double> z(n);
      for (double& v : z) v = rng.uniform(-3.0, 3.0);
      std::vector<std::vector<int>> all;
      std::vector<int> cur;
      tuples(n, k, cur, all);
      double s = 0.0;
      for (const auto& t : all) s += std::exp(action_logprob(z, t));
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }

  int violations = 0, cells = 0;
  const int draws = 100000;
  for (auto [n, k] : {std::pair<std::size_t, std::size_t>{4, 2}, {5, 3}}) {
    std::vector<double> z(n);
    for (double& v : z) v = rng.uniform(-1.5, 1.5);
    std::map<std::vector<int>, int> counts;
    for (int i = 0; i < draws; ++i) ++counts[sample_topk(z, k, rng)];
    std::vector<std::vector<int>> all;
    std::vector<int> cur;
    tuples(n, k, cur, all);
    for (const auto& t : all) {
      const double p = std::exp(action_logprob(z, t));
      const double f = static_cast<double>(counts[t]) / draws;
      ++cells;
      if (std::abs(f - p) > 3.0 * std::sqrt(p * (1.0 - p) / draws)) ++violations;
    }
  }
  return {worst_sum <= 1e-10 && violations == 0,
          "max |sum - 1| = " + fmt("%.2g", worst_sum) + ", tuples outside 3 sigma: " +
              std::to_string(violations) + "/" + std::to_string(cells)};
}

// ---------------------------------------------------------------- 3
Outcome gradient_checks(const Dataset& data) {
  Rng rng(3);
  int checked = 0, failed = 0;
  double worst = 0.0;
  const double h = 1e-6;
  auto compare = [&](double analytic, double numeric) {
    ++checked;
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    if (!close_rel(analytic, numeric, 1e-4, 1e-8)) {
      ++failed;
      worst = std::max(worst, rel);
    } else if (std::abs(analytic) > 1e-6) {
      worst = std::max(worst, rel);
    }
  };
  const std::size_t blocks[][2] = {{PolicyParams::kW1, PolicyParams::kB1}, {PolicyParams::kB1, PolicyParams::kW2},
                                   {PolicyParams::kW2, PolicyParams::kB2}, {PolicyParams::kB2, PolicyParams::kW3},
                                   {PolicyParams::kW3, PolicyParams::kB3}, {PolicyParams::kB3, PolicyParams::kWv},
                                   {PolicyParams::kWv, PolicyParams::kTotal}};

  for (int inst = 0; inst < 20; ++inst) {
    PolicyParams p(1000 + inst);
    SkillBank bank = initial_bank();
    if (inst % 2)
      bank = mutate(bank, {AddSkill{catalog_skill(TemplateId::kFailureBoundaryInsert)},
                           AddSkill{catalog_skill(TemplateId::kSensitivityHotspotInsert)}},
                    1);
    const auto skills = skill_embeddings(bank);
    const int n = static_cast<int>(bank.size());
    std::vector<double> bias(bank.size());
    for (double& b : bias) b = rng.uniform(0.0, 1.0);

    // Controller: d/dw [logprob(actions) + c * value].
    const Trace& tr = data.train[rng.uniform_int(0, static_cast<int>(data.train.size()) - 1)];
    const Span& span = tr.spans[rng.uniform_int(0, static_cast<int>(tr.spans.size()) - 1)];
    MemoryBank mem;
    MemoryEdit e;
    e.op = EditOp::kInsert;
    e.payload.statement = tr.spans.front().text;
    mem.apply(e);
    const auto x = context_input(span, retrieve(mem, embed_text(span.text), 5));
    const int a0 = rng.uniform_int(0, n - 1);
    int a1 = rng.uniform_int(0, n - 2);
    if (a1 >= a0) ++a1;
    const std::vector<int> acts{a0, a1};
    const double c = rng.uniform(-1.0, 1.0);
    auto objective = [&](const PolicyParams& q) {
      const auto f = q.forward(x);
      return action_logprob(skill_logits(f.h, skills, bias), acts) + c * f.value;
    };
    const auto f = p.forward(x);
    const auto dz = action_logprob_grad(skill_logits(f.h, skills, bias), acts);
    std::vector<double> dh(kMatchDim, 0.0);
    for (std::size_t i = 0; i < skills.size(); ++i)
      for (std::size_t d = 0; d < kMatchDim; ++d) dh[d] += dz[i] * skills[i].values[d] / kMatchTemperature;
    std::vector<double> grad(p.size(), 0.0);
    p.backward(f, x, dh, c, grad);

    // PPO loss over a four-transition batch drawn around the same policy.
    std::vector<Transition> batch;
    for (int b = 0; b < 4; ++b) {
      const Span& s = tr.spans[b % tr.spans.size()];
      Transition t;
      t.x = context_input(s, {});
      t.bias = bias;
      const auto fb = p.forward(t.x);
      const auto zb = skill_logits(fb.h, skills, t.bias);
      t.actions = sample_topk(zb, 2, rng);
      t.logp_old = action_logprob(zb, t.actions) + rng.uniform(-0.4, 0.4);
      t.advantage = rng.normal();
      t.ret = rng.uniform(-1.0, 1.0);
      batch.push_back(std::move(t));
    }
    std::vector<const Transition*> ptr;
    for (const auto& t : batch) ptr.push_back(&t);
    PPOConfig cfg;
    std::vector<double> pgrad;
    ppo_loss(p, ptr, skills, cfg, &pgrad);

    for (const auto& blk : blocks) {
      const std::size_t i = blk[0] + static_cast<std::size_t>(rng.next() % (blk[1] - blk[0]));
      const double w0 = p.weights()[i];
      p.weights()[i] = w0 + h;
      const double up = objective(p), lup = ppo_loss(p, ptr, skills, cfg, nullptr).total;
      p.weights()[i] = w0 - h;
      const double dn = objective(p), ldn = ppo_loss(p, ptr, skills, cfg, nullptr).total;
      p.weights()[i] = w0;
      compare(grad[i], (up - dn) / (2 * h));
      compare(pgrad[i], (lup - ldn) / (2 * h));
    }
  }
  return {failed == 0, std::to_string(checked) + " coordinates over 20 instances, " + std::to_string(failed) +
                           " mismatches, worst relative error " + fmt("%.2g", worst)};
}

// ---------------------------------------------------------------- 4
// Closed-form d2n/dlambda2 of the surrogate index: Sellmeier term plus the
// A r^p (lambda/pitch)^q correction.
double analytic_dispersion(const Geometry& g, double lambda) {
  using namespace surrogate;
  const double u = lambda * lambda;
  double s = 1.0, s1 = 0.0, s2 = 0.0;
  for (int j = 0; j < 3; ++j) {
    const double b = kSellmeierB[j], c = kSellmeierC[j], w = u - c;
    s += b * u / w;
    s1 += -2.0 * b * c * lambda / (w * w);
    s2 += 2.0 * b * c * (3.0 * u + c) / (w * w * w);
  }
  const double n = std::sqrt(s);
  const double q = kLambdaExponent;
  const double corr = kIndexScale * std::pow(g.fill(), kFillExponent) * q * (q - 1.0) *
                      std::pow(lambda, q - 2.0) / std::pow(g.pitch_um, q);
  const double n2 = s2 / (2.0 * n) - s1 * s1 / (4.0 * n * n * n) - corr;
  return -kDispersionUnit * lambda * n2;
}

Outcome physics_oracle() {
  double worst = 0.0;
  double order_sum = 0.0, min_order = 1e9;
  int order_n = 0;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      for (double lambda : {1.31, 1.45, 1.55, 1.65}) {
        const double pitch = 1.0 + 3.0 * i / 9.0;
        const double fill = 0.1 + 0.75 * j / 9.0;
        const Geometry g{pitch, fill * pitch, 6};
        const double oracle = analytic_dispersion(g, lambda);
        worst = std::max(worst, std::abs(dispersion(g, lambda) - oracle) / std::max(std::abs(oracle), 1.0));
        // Order from steps where truncation dominates rounding.
        const double e1 = std::abs(dispersion(g, lambda, 0.02) - oracle);
        const double e2 = std::abs(dispersion(g, lambda, 0.01) - oracle);
        const double order = std::log2(e1 / e2);
        order_sum += order;
        min_order = std::min(min_order, order);
        ++order_n;
      }
  const double mean_order = order_sum / order_n;
  return {worst <= 1e-4 && mean_order >= 3.5,
          "max relative deviation from closed form " + fmt("%.2g", worst) + ", mean observed order " +
              fmt("%.2f", mean_order) + " (min " + fmt("%.2f", min_order) + ")"};
}

// ---------------------------------------------------------------- 5
Outcome call_budgets(const nlohmann::json& evolve_doc, const Dataset& data, const RunConfig& cfg) {
  const double agent = evolve_doc.at("rows").at(0).at("Calls/q").get<double>();
  // Rebuild the trained agent to count calls over parameter_adjustment only.
  const PolicyParams params =
      PolicyParams::from_json(nlohmann::json::parse(slurp(fs::path(cfg.out_dir) / "policy.json")));
  const SkillBank bank = SkillBank::from_json(evolve_doc.at("bank"));
  const auto outcomes = evaluate_split(params, bank, data.test, data.queries, cfg.trainer(), cfg.seed);
  const double per_param = aggregate("agent", outcomes, true).calls_per_query;
  std::string detail = "agent " + fmt("%.3f", agent) + " calls/query (" + fmt("%.3f", per_param) +
                       " per parameter_adjustment)";
  bool ok = agent <= 1.05 && per_param <= 1.05;
  for (BaselineKind k : {BaselineKind::kRandomSearch, BaselineKind::kNelderMead, BaselineKind::kSurrogate}) {
    const auto rows = run_baseline(k, data, cfg);
    std::int64_t lo = 1 << 30, hi = 0;
    for (const auto& r : rows) {
      lo = std::min(lo, r.calls);
      hi = std::max(hi, r.calls);
    }
    const MetricReport rep = aggregate(std::string(to_string(k)), rows, true);
    detail += "; " + std::string(to_string(k)) + " " + fmt("%.2f", rep.calls_per_query) + " (max " +
              std::to_string(hi) + ")";
    switch (k) {
      case BaselineKind::kRandomSearch: ok = ok && lo == 100 && hi == 100; break;
      case BaselineKind::kNelderMead: ok = ok && hi <= 135; break;
      case BaselineKind::kSurrogate: ok = ok && lo == 1 && hi == 1; break;
    }
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- 6
Outcome rollback(const Dataset& data) {
  TrainerConfig cfg;
  cfg.ppo.outer_epochs = 1;
  cfg.ppo.inner_epochs = 3;
  cfg.ppo.batch = 8;
  Designer adversarial = [](const SkillBank& b, const std::vector<FailureCluster>&, int epoch) {
    // Retire every editing skill and add an unconditional delete.
    Skill wipe = catalog_skill(TemplateId::kDeleteInvalid);
    wipe.params["theta_del"] = 0.0;
    std::vector<SkillChange> changes;
    for (const auto& s : b.skills())
      if (s.action_type != EditOp::kNoop) changes.push_back(RetireSkill{s.id});
    changes.push_back(AddSkill{wipe});
    Proposal p;
    p.candidate = mutate(b, changes, epoch);
    p.changes = {"adversarial"};
    p.identity = false;
    return p;
  };
  Designer identity = [](const SkillBank& b, const std::vector<FailureCluster>&, int) {
    return Proposal{b, {}, true};
  };
  const SkillBank before = initial_bank();
  const auto adv = run_closed_loop(cfg, data.train, data.val, data.queries, 6, before, adversarial);
  const auto& c = adv.cycles.at(0);
  const bool rolled = c.j_candidate - c.j_current < 0.0 && !c.accepted &&
                      adv.bank.to_json().dump() == before.to_json().dump();
  const auto same = run_closed_loop(cfg, data.train, data.val, data.queries, 6, before, identity);
  const auto& ci = same.cycles.at(0);
  const bool kept = ci.accepted && ci.j_candidate == ci.j_current && same.bank.version() == 1 &&
                    same.bank.skills() == before.skills();
  return {rolled && kept, "adversarial dJ " + fmt("%+.4f", c.j_candidate - c.j_current) +
                              (c.accepted ? " accepted" : " rolled back") + ", identity dJ " +
                              fmt("%+.4f", ci.j_candidate - ci.j_current) +
                              (ci.accepted ? " accepted" : " rejected")};
}

// ---------------------------------------------------------------- 7
struct SeedResult {
  double full = 0.0, uniform = 0.0;
};

double succ_of(const nlohmann::json& doc, const std::string& label) {
  for (const auto& r : doc["rows"])
    if (r["method"] == label) return r["Succ."].get<double>();
  throw std::runtime_error("missing row " + label);
}

Outcome learning_signal(const std::vector<SeedResult>& seeds) {
  int wins = 0;
  double margin = 0.0;
  std::string detail;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    wins += seeds[i].full > seeds[i].uniform;
    margin += (seeds[i].full - seeds[i].uniform) / seeds.size();
    detail += "seed " + std::to_string(i + 1) + ": " + fmt("%.2f", seeds[i].full) + " vs " +
              fmt("%.2f", seeds[i].uniform) + "; ";
  }
  detail += "wins " + std::to_string(wins) + "/3, pooled margin " + fmt("%.2f", margin);
  return {wins >= 2 && margin >= 5.0, detail};
}

// ---------------------------------------------------------------- 8
Outcome ablation_report(const RunConfig& base) {
  RunConfig cfg = base;
  cfg.ppo.outer_epochs = 2;
  cfg.ppo.inner_epochs = 3;
  cfg.ppo.batch = 8;
  const auto doc = stage_eval(cfg, std::vector<Ablation>(std::begin(kAllAblations), std::end(kAllAblations)));
  std::set<std::string> labels;
  std::set<std::size_t> sizes;
  for (const auto& r : doc["rows"]) {
    labels.insert(r["method"].get<std::string>());
    sizes.insert(r["n_queries"].get<std::size_t>());
  }
  bool ok = doc["rows"].size() == 5 && sizes.size() == 1 && doc["config"]["seed"] == cfg.seed;
  for (Ablation a : kAllAblations) ok = ok && labels.count(ablation_label(a));
  std::string detail;
  for (const auto& l : labels) detail += (detail.empty() ? "" : ", ") + l;
  return {ok, "rows: " + detail + " on " + std::to_string(*sizes.begin()) + " test queries each"};
}

// ---------------------------------------------------------------- 9
Outcome dataset_bands() {
  CallCounter c;
  const Corpus corpus = gen_corpus(1, 500, c);
  double spans = 0.0, success = 0.0;
  for (const auto& t : corpus.traces) {
    spans += static_cast<double>(t.spans.size());
    success += t.success;
  }
  spans /= 500.0;
  success /= 500.0;
  return {spans >= 4.5 && spans <= 6.5 && success >= 0.65 && success <= 0.85,
          "mean spans " + fmt("%.2f", spans) + ", success rate " + fmt("%.3f", success)};
}

template <typename F>
Outcome timed(int id, F&& fn, std::map<int, Outcome>& results) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.detail += " [" + fmt("%.1f", secs) + " s]";
  std::printf("criterion %2d: %s - %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
  results[id] = o;
  return o;
}

}  // namespace

int main() {
  std::map<int, Outcome> results;
  const fs::path work = fs::temp_directory_path() / "pcfmem_acceptance";
  fs::remove_all(work);

  RunConfig cfg;  // defaults: 500 traces, 10 outer x 50 inner, batch 32
  cfg.seed = 1;
  cfg.out_dir = (work / "evolve").string();
  const Dataset data = prepare_data(cfg);

  timed(1, reward_conservation, results);
  timed(2, plackett_luce, results);
  timed(3, [&] { return gradient_checks(data); }, results);
  timed(4, physics_oracle, results);
  timed(9, dataset_bands, results);
  timed(6, [&] { return rollback(data); }, results);
  timed(8, [&] { return ablation_report(cfg); }, results);

  // Two full evolve runs on seed 1; the first also supplies the seed-1
  // full-system score and the agent call rate.
  nlohmann::json first;
  std::string first_bytes;
  timed(10, [&] {
    first = stage_evolve(cfg);
    write_results(first, cfg.out_dir);
    first_bytes = slurp(fs::path(cfg.out_dir) / "results.json");
    const auto second = stage_evolve(cfg);
    write_results(second, cfg.out_dir);
    const bool same = first_bytes == slurp(fs::path(cfg.out_dir) / "results.json");
    return Outcome{same, std::string(same ? "identical" : "different") + " results.json (" +
                             std::to_string(first_bytes.size()) + " bytes)"};
  }, results);

  timed(5, [&] { return call_budgets(first, data, cfg); }, results);

  timed(7, [&] {
    std::vector<SeedResult> seeds;
    for (std::uint64_t s : {1, 2, 3}) {
      RunConfig c = cfg;
      c.seed = s;
      SeedResult r;
      if (s == 1) {
        r.full = succ_of(first, ablation_label(Ablation::kNone));
        r.uniform = succ_of(stage_eval(c, {Ablation::kNoController}), ablation_label(Ablation::kNoController));
      } else {
        const auto doc = stage_eval(c, {Ablation::kNone, Ablation::kNoController});
        r.full = succ_of(doc, ablation_label(Ablation::kNone));
        r.uniform = succ_of(doc, ablation_label(Ablation::kNoController));
      }
      std::printf("  seed %llu: full %.2f, uniform selection %.2f\n", static_cast<unsigned long long>(s), r.full,
                  r.uniform);
      std::fflush(stdout);
      seeds.push_back(r);
    }
    return learning_signal(seeds);
  }, results);

  std::printf("\nsummary\n");
  int failed = 0;
  for (const auto& [id, o] : results) {
    std::printf("criterion %2d: %s\n", id, o.pass ? "PASS" : "FAIL");
    failed += !o.pass;
  }
  fs::remove_all(work);
  return failed == 0 ? 0 : 1;
}

#include "pcfmem/rl_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "pcfmem/errors.hpp"
#include "pcfmem/skill_executor.hpp"

namespace pcfmem {

namespace {

constexpr std::uint64_t kTagBatch = 0x6261;
constexpr std::uint64_t kTagEpisode = 0x6570;
constexpr std::uint64_t kTagUpdate = 0x7570;
constexpr std::uint64_t kTagPolicy = 0x706f;
constexpr std::uint64_t kTagValidation = 0x7661;
constexpr std::uint64_t kTagEval = 0x6576;

// Runs fn(i) for i in [0, n) on `workers` threads. Results must be written
// to slot i so the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t w = std::clamp<std::size_t>(workers < 1 ? 1 : workers, 1, std::max<std::size_t>(n, 1));
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(w);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < w; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += w) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

const std::vector<Query>& queries_for(const QueryIndex& index, const std::string& trace_id) {
  static const std::vector<Query> none;
  auto it = index.find(trace_id);
  return it == index.end() ? none : it->second;
}

std::vector<int> uniform_topk(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(k);
  return idx;
}

double global_norm(const std::vector<double>& g) {
  double s = 0.0;
  for (double v : g) s += v * v;
  return std::sqrt(s);
}

}  // namespace

void PPOConfig::validate() const {
  auto open01 = [](double v) { return v > 0.0 && v < 1.0; };
  if (!open01(gamma_d)) throw ConfigError("gamma_d must lie in (0, 1)");
  if (!open01(gamma_r)) throw ConfigError("gamma_r must lie in (0, 1)");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("gae_lambda must lie in [0, 1]");
  if (!(clip > 0.0)) throw ConfigError("clip must be positive");
  if (epochs_per_update < 1 || minibatch < 1 || batch < 1)
    throw ConfigError("epochs_per_update, minibatch and batch must be positive");
  if (inner_epochs < 0 || outer_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  if (!(learning_rate > 0.0) || !(grad_clip > 0.0)) throw ConfigError("learning_rate and grad_clip must be positive");
}

std::vector<double> redistribute(double r_final, std::size_t T, double gamma_r, double beta) {
  if (T == 0) throw ValidationError("redistribute: empty episode");
  std::vector<double> w(T);
  double sum = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    w[t] = std::pow(gamma_r, static_cast<double>(T - 1 - t));
    sum += w[t];
  }
  std::vector<double> out(T);
  double acc = 0.0;
  for (std::size_t t = 0; t + 1 < T; ++t) {
    out[t] = (1.0 - beta) * r_final * w[t] / sum;
    acc += out[t];
  }
  // The last step takes the remainder so the total is exact.
  out[T - 1] = r_final - acc;
  return out;
}

std::vector<double> compose_step_rewards(const std::vector<double>& r_proc,
                                         const std::vector<double>& r_tilde) {
  if (r_proc.size() != r_tilde.size())
    throw ValidationError("compose_step_rewards: length mismatch");
  std::vector<double> out(r_proc.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = r_proc[i] + r_tilde[i];
  return out;
}

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      double gamma_d, double lambda) {
  if (rewards.empty()) throw ValidationError("compute_gae: empty episode");
  if (values.size() != rewards.size()) throw ValidationError("compute_gae: length mismatch");
  const std::size_t T = rewards.size();
  GaeResult out;
  out.advantages.assign(T, 0.0);
  out.returns.assign(T, 0.0);
  double running = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    const double next_v = t + 1 < T ? values[t + 1] : 0.0;
    const double delta = rewards[t] + gamma_d * next_v - values[t];
    running = delta + gamma_d * lambda * running;
    out.advantages[t] = running;
    out.returns[t] = running + values[t];
  }
  return out;
}

void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / adv.size();
  for (double& a : adv) a -= mean;
  if (adv.size() < 2) return;
  double var = 0.0;
  for (double a : adv) var += a * a;
  const double sd = std::sqrt(var / adv.size());
  if (sd < 1e-12) return;
  for (double& a : adv) a /= sd;
}

AdamW::AdamW(std::size_t n, double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void AdamW::step(std::vector<double>& w, const std::vector<double>& grad) {
  if (w.size() != m_.size() || grad.size() != m_.size())
    throw ValidationError("AdamW: parameter size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < w.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    w[i] -= lr_ * ((m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_) + wd_ * w[i]);
  }
}

LossParts ppo_loss(const PolicyParams& params, std::span<const Transition* const> batch,
                   const std::vector<Embedding>& skills, const PPOConfig& cfg,
                   std::vector<double>* grad) {
  LossParts out;
  if (batch.empty()) throw ValidationError("ppo_loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  if (grad) grad->assign(params.size(), 0.0);
  std::vector<double> d_h(kMatchDim);
  for (const Transition* tr : batch) {
    const auto f = params.forward(tr->x);
    const auto z = skill_logits(f.h, skills, tr->bias);
    const double logp = action_logprob(z, tr->actions);
    const double ratio = std::exp(logp - tr->logp_old);
    const double A = tr->advantage;
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const bool unclipped_active = ratio * A <= clipped * A;
    const double surrogate = std::min(ratio * A, clipped * A);
    const double entropy = first_pick_entropy(z);
    const double verr = f.value - tr->ret;

    out.policy += -surrogate * inv_n;
    out.value += cfg.value_coef * verr * verr * inv_n;
    out.entropy += entropy * inv_n;
    out.mean_ratio += ratio * inv_n;
    out.clip_fraction += (std::abs(ratio - 1.0) > cfg.clip ? 1.0 : 0.0) * inv_n;
    out.approx_kl += (tr->logp_old - logp) * inv_n;
    if (!grad) continue;

    std::vector<double> dz(z.size(), 0.0);
    if (unclipped_active) {
      const auto g = action_logprob_grad(z, tr->actions);
      for (std::size_t i = 0; i < z.size(); ++i) dz[i] -= A * ratio * g[i] * inv_n;
    }
    const auto ge = first_pick_entropy_grad(z);
    for (std::size_t i = 0; i < z.size(); ++i) dz[i] -= cfg.entropy_coef * ge[i] * inv_n;
    std::fill(d_h.begin(), d_h.end(), 0.0);
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (dz[i] == 0.0) continue;
      const auto& u = skills[i].values;
      for (std::size_t k = 0; k < kMatchDim; ++k) d_h[k] += dz[i] * u[k] / kMatchTemperature;
    }
    const double d_value = 2.0 * cfg.value_coef * verr * inv_n;
    params.backward(f, tr->x, d_h, d_value, *grad);
  }
  out.total = out.policy + out.value - cfg.entropy_coef * out.entropy;
  return out;
}

PPOStats ppo_update(PolicyParams& params, AdamW& opt, const std::vector<Transition>& batch,
                    const std::vector<Embedding>& skills, const PPOConfig& cfg, Rng& rng) {
  if (batch.empty()) throw ValidationError("ppo_update: empty batch");
  PPOStats stats;
  stats.mean_ratio = 0.0;
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad;
  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
      std::vector<const Transition*> mb;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.minibatch); ++i)
        mb.push_back(&batch[order[i]]);
      const LossParts parts = ppo_loss(params, mb, skills, cfg, &grad);
      const double norm = global_norm(grad);
      if (!std::isfinite(parts.total) || !std::isfinite(norm)) {
        std::ostringstream msg;
        msg << "ppo_update: non-finite loss (policy " << parts.policy << ", value " << parts.value
            << ", entropy " << parts.entropy << ", grad norm " << norm << ") at epoch " << epoch;
        throw NumericError(msg.str());
      }
      if (norm > cfg.grad_clip)
        for (double& g : grad) g *= cfg.grad_clip / norm;
      opt.step(params.weights(), grad);
      stats.mean_ratio += parts.mean_ratio;
      stats.clip_fraction += parts.clip_fraction;
      stats.approx_kl += parts.approx_kl;
      stats.loss += parts.total;
      ++stats.minibatches;
    }
  }
  const double n = static_cast<double>(stats.minibatches);
  stats.mean_ratio /= n;
  stats.clip_fraction /= n;
  stats.approx_kl /= n;
  stats.loss /= n;
  return stats;
}

QueryIndex index_queries(const std::vector<Query>& queries) {
  QueryIndex out;
  for (const auto& q : queries)
    if (!q.trace_ids.empty()) out[q.trace_ids.front()].push_back(q);
  return out;
}

EpisodeResult run_episode(const PolicyParams& params, const SkillBank& bank,
                          const std::vector<Embedding>& skill_emb, std::span<const double> bias,
                          const Trace& trace, const std::vector<Query>& queries, SelectionMode mode,
                          const TrainerConfig& cfg, Rng& rng, CallCounter& counter) {
  if (bank.size() == 0) throw ValidationError("run_episode: empty skill bank");
  EpisodeResult ep;
  ep.trace_id = trace.id;
  const std::size_t k = std::min(cfg.top_k, bank.size());
  for (const Span& span : trace.spans) {
    const auto retrieved = retrieve(ep.memory, embed_text(span.text), cfg.retrieval_k);
    Transition tr;
    if (mode == SelectionMode::kUniform) {
      tr.actions = uniform_topk(bank.size(), k, rng);
    } else {
      tr.x = context_input(span, retrieved);
      const auto f = params.forward(tr.x);
      tr.bias.assign(bias.begin(), bias.end());
      const auto z = skill_logits(f.h, skill_emb, tr.bias);
      tr.actions = mode == SelectionMode::kSample ? sample_topk(z, k, rng) : greedy_topk(z, k);
      tr.logp_old = action_logprob(z, tr.actions);
      tr.value_old = f.value;
    }
    SpanContext ctx;
    ctx.span = &span;
    ctx.retrieved = retrieved;
    for (int a : tr.actions) ctx.selected.push_back(bank.skills()[a]);
    ctx.bank = &ep.memory;
    ctx.target = trace.target;
    const ExecutionResult exec = execute(ctx);
    ep.memory = apply_edits(std::move(ep.memory), exec.edits).first;
    ep.process_rewards.push_back(process_reward(exec.events));
    ep.transitions.push_back(std::move(tr));
  }
  if (!ep.transitions.empty()) ep.transitions.back().done = true;

  int passed = 0;
  for (const Query& q : queries) {
    counter.begin_query();
    ep.answers.push_back(answer_query(ep.memory, q, counter));
    passed += ep.answers.back().outcome.passed;
  }
  ep.r_final = queries.empty() ? 0.0 : static_cast<double>(passed) / queries.size();

  if (!ep.transitions.empty()) {
    const auto r_tilde = redistribute(ep.r_final, ep.transitions.size(), cfg.ppo.gamma_r, cfg.ppo.beta);
    const auto rewards = compose_step_rewards(ep.process_rewards, r_tilde);
    for (std::size_t t = 0; t < rewards.size(); ++t) {
      ep.transitions[t].reward = rewards[t];
      ep.episode_return += rewards[t];
    }
  }
  return ep;
}

std::vector<FailureCase> collect_failures(const EpisodeResult& ep, const Trace& trace,
                                          const std::vector<Query>& queries) {
  std::vector<FailureCase> out;
  for (std::size_t i = 0; i < ep.answers.size() && i < queries.size(); ++i) {
    const Answer& a = ep.answers[i];
    const Query& q = queries[i];
    if (q.type != QueryType::kParameterAdjustment || a.outcome.passed) continue;
    if (!a.response.geometry || !a.outcome.feedback) continue;
    FailureCase c;
    c.trace_id = trace.id;
    c.query_id = q.id;
    c.proposal = *a.response.geometry;
    c.retrieved = a.considered;
    c.decisive = a.decisive;
    c.feedback = *a.outcome.feedback;
    c.target = q.target.value();
    c.failure_type = classify_failure(c.retrieved, c.decisive, c.proposal, c.target.lambda_um, true);
    c.regime = regime_of(c.proposal.fill());
    c.difficulty = miss_distance(c.feedback, c.target);
    out.push_back(std::move(c));
  }
  return out;
}

InnerLoopResult run_inner_loop(PolicyParams& params, AdamW& opt, const SkillBank& bank,
                               const std::vector<Trace>& train, const QueryIndex& queries,
                               const TrainerConfig& cfg, std::uint64_t seed, int outer_epoch) {
  InnerLoopResult res;
  if (train.empty()) throw ValidationError("run_inner_loop: empty training split");
  const auto skill_emb = skill_embeddings(bank);
  const SelectionMode mode = cfg.use_controller ? SelectionMode::kSample : SelectionMode::kUniform;
  const std::uint64_t outer_tag = static_cast<std::uint64_t>(outer_epoch);

  for (int inner = 0; inner < cfg.ppo.inner_epochs; ++inner) {
    const std::uint64_t inner_tag = static_cast<std::uint64_t>(inner);
    Rng pick(derive_seed(seed, {kTagBatch, outer_tag, inner_tag}));
    std::vector<std::size_t> chosen(cfg.ppo.batch);
    for (auto& c : chosen) c = static_cast<std::size_t>(pick.next() % train.size());

    const auto bias = new_action_bias(bank, outer_epoch, inner, cfg.bias_b0);
    std::vector<EpisodeResult> episodes(chosen.size());
    CallCounter counter;
    parallel_for(chosen.size(), cfg.workers, [&](std::size_t i) {
      Rng rng(derive_seed(seed, {kTagEpisode, outer_tag, inner_tag, i}));
      const Trace& tr = train[chosen[i]];
      episodes[i] = run_episode(params, bank, skill_emb, bias, tr, queries_for(queries, tr.id),
                                mode, cfg, rng, counter);
    });

    EpochLog log;
    log.outer = outer_epoch;
    log.inner = inner;
    std::size_t n_param = 0, verified = 0, n_queries = 0;
    std::int64_t calls = 0;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      const auto& ep = episodes[i];
      const Trace& tr = train[chosen[i]];
      log.mean_return += ep.episode_return / episodes.size();
      for (const auto& a : ep.answers) {
        ++n_queries;
        calls += a.outcome.calls;
        if (a.outcome.type == QueryType::kParameterAdjustment) {
          ++n_param;
          verified += a.outcome.verified;
        }
      }
      for (auto& c : collect_failures(ep, tr, queries_for(queries, tr.id))) res.failures.add(std::move(c));
    }
    log.success = n_param ? static_cast<double>(verified) / n_param : 0.0;
    log.calls_per_query = n_queries ? static_cast<double>(calls) / n_queries : 0.0;

    if (cfg.use_controller) {
      std::vector<Transition> batch;
      std::vector<double> adv;
      for (auto& ep : episodes) {
        if (ep.transitions.empty()) continue;
        std::vector<double> rewards, values;
        for (const auto& t : ep.transitions) {
          rewards.push_back(t.reward);
          values.push_back(t.value_old);
        }
        const GaeResult g = compute_gae(rewards, values, cfg.ppo.gamma_d, cfg.ppo.gae_lambda);
        for (std::size_t t = 0; t < ep.transitions.size(); ++t) {
          ep.transitions[t].advantage = g.advantages[t];
          ep.transitions[t].ret = g.returns[t];
          adv.push_back(g.advantages[t]);
          batch.push_back(std::move(ep.transitions[t]));
        }
      }
      normalize_advantages(adv);
      for (std::size_t i = 0; i < batch.size(); ++i) batch[i].advantage = adv[i];
      if (!batch.empty()) {
        Rng rng(derive_seed(seed, {kTagUpdate, outer_tag, inner_tag}));
        log.ppo = ppo_update(params, opt, batch, skill_emb, cfg.ppo, rng);
      }
    }
    res.log.push_back(log);
  }
  return res;
}

namespace {

std::vector<EpisodeResult> held_out_episodes(const PolicyParams& params, const SkillBank& bank,
                                             const std::vector<Trace>& traces,
                                             const QueryIndex& queries, const TrainerConfig& cfg,
                                             std::uint64_t seed, CallCounter& counter) {
  const auto skill_emb = skill_embeddings(bank);
  const SelectionMode mode = cfg.use_controller ? SelectionMode::kGreedy : SelectionMode::kUniform;
  std::vector<EpisodeResult> out(traces.size());
  parallel_for(traces.size(), cfg.workers, [&](std::size_t i) {
    Rng rng(derive_seed(seed, {i}));
    out[i] = run_episode(params, bank, skill_emb, {}, traces[i], queries_for(queries, traces[i].id),
                         mode, cfg, rng, counter);
  });
  return out;
}

}  // namespace

double validation_score(const PolicyParams& params, const SkillBank& bank,
                        const std::vector<Trace>& traces, const QueryIndex& queries,
                        const TrainerConfig& cfg) {
  if (traces.empty()) return 0.0;
  CallCounter counter;
  double sum = 0.0;
  for (const auto& ep : held_out_episodes(params, bank, traces, queries, cfg, kTagValidation, counter))
    sum += ep.r_final;
  return sum / static_cast<double>(traces.size());
}

std::vector<QueryOutcome> evaluate_split(const PolicyParams& params, const SkillBank& bank,
                                         const std::vector<Trace>& traces,
                                         const QueryIndex& queries, const TrainerConfig& cfg,
                                         std::uint64_t seed) {
  CallCounter counter;
  std::vector<QueryOutcome> rows;
  for (const auto& ep :
       held_out_episodes(params, bank, traces, queries, cfg, derive_seed(seed, {kTagEval}), counter))
    for (const auto& a : ep.answers) rows.push_back(a.outcome);
  return rows;
}

std::vector<Trace> validation_subset(const std::vector<Trace>& val, std::size_t n) {
  std::vector<Trace> sorted = val;
  std::sort(sorted.begin(), sorted.end(), [](const Trace& a, const Trace& b) { return a.id < b.id; });
  if (sorted.size() > n) sorted.resize(n);
  return sorted;
}

ClosedLoopResult run_closed_loop(const TrainerConfig& cfg, const std::vector<Trace>& train,
                                 const std::vector<Trace>& val, const QueryIndex& queries,
                                 std::uint64_t seed, SkillBank initial, Designer designer) {
  cfg.ppo.validate();
  if (!designer) designer = propose;
  ClosedLoopResult res;
  res.params = PolicyParams(derive_seed(seed, {kTagPolicy}));
  res.bank = std::move(initial);
  AdamW opt(res.params.size(), cfg.ppo.learning_rate, cfg.ppo.weight_decay);
  const auto vset = validation_subset(val, cfg.val_traces);

  if (cfg.ppo.outer_epochs == 0) {
    auto inner = run_inner_loop(res.params, opt, res.bank, train, queries, cfg, seed, 0);
    res.log = std::move(inner.log);
    return res;
  }

  for (int outer = 0; outer < cfg.ppo.outer_epochs; ++outer) {
    auto inner = run_inner_loop(res.params, opt, res.bank, train, queries, cfg, seed, outer);
    res.log.insert(res.log.end(), inner.log.begin(), inner.log.end());

    CycleRecord rec;
    rec.outer = outer;
    rec.failures = inner.failures.size();
    const bool design_now = cfg.use_designer && (outer + 1) % std::max(1, cfg.designer_every) == 0;
    if (design_now) {
      const auto clusters = cluster_failures(inner.failures);
      for (const auto& c : clusters)
        rec.clusters.push_back(std::string(to_string(c.type)) + "/" + std::string(to_string(c.regime)) +
                               " x" + std::to_string(c.members.size()));
      Proposal p = designer(res.bank, clusters, outer + 1);
      if (cfg.max_bank_size > 0 && p.candidate.size() > cfg.max_bank_size) {
        p.changes.push_back("dropped: bank size " + std::to_string(p.candidate.size()) + " over cap");
        p.candidate = res.bank;
        p.identity = true;
      }
      rec.changes = p.changes;
      rec.identity = p.identity;
      rec.j_current = validation_score(res.params, res.bank, vset, queries, cfg);
      rec.j_candidate = validation_score(res.params, p.candidate, vset, queries, cfg);
      rec.accepted = rec.j_candidate - rec.j_current >= 0.0;
      if (rec.accepted) res.bank = p.identity ? bump_version(res.bank) : std::move(p.candidate);
    }
    rec.bank_version = res.bank.version();
    rec.bank_size = res.bank.size();
    res.cycles.push_back(std::move(rec));
  }
  return res;
}

nlohmann::json to_json(const EpochLog& e) {
  return nlohmann::json{{"outer", e.outer},
                        {"inner", e.inner},
                        {"mean_return", e.mean_return},
                        {"success", e.success},
                        {"calls_per_query", e.calls_per_query},
                        {"mean_ratio", e.ppo.mean_ratio},
                        {"clip_fraction", e.ppo.clip_fraction},
                        {"approx_kl", e.ppo.approx_kl},
                        {"loss", e.ppo.loss}};
}

nlohmann::json to_json(const CycleRecord& c) {
  return nlohmann::json{{"outer", c.outer},
                        {"failures", c.failures},
                        {"clusters", c.clusters},
                        {"changes", c.changes},
                        {"identity", c.identity},
                        {"j_current", c.j_current},
                        {"j_candidate", c.j_candidate},
                        {"delta_j", c.j_candidate - c.j_current},
                        {"accepted", c.accepted},
                        {"bank_version", c.bank_version},
                        {"bank_size", c.bank_size}};
}

}  // namespace pcfmem

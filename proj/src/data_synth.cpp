#include "pcfmem/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "pcfmem/errors.hpp"
#include "pcfmem/skill_executor.hpp"

namespace pcfmem {

namespace {

constexpr int kCorpusVersion = 1;
constexpr std::uint64_t kTraceTag = 0x7472;
constexpr std::uint64_t kQueryTag = 0x7172;
constexpr double kWavelengths[] = {1.31, 1.55};

constexpr std::array<FamilyPrior, kNumFamilies> kFamilies = {{
    {"solid_core_hexagonal", 1.0, 1.75, 0.40, 0.55, 8, 10},
    {"high_birefringence_pm", 1.75, 2.5, 0.40, 0.55, 8, 10},
    {"hollow_core_pbg", 2.5, 3.25, 0.55, 0.70, 7, 10},
    {"kagome", 3.25, 4.0, 0.55, 0.70, 7, 10},
    {"anti_resonant", 1.0, 1.75, 0.70, 0.85, 6, 9},
    {"nested_antiresonant", 1.75, 2.5, 0.70, 0.85, 6, 9},
    {"graded_index_multiring", 2.5, 3.25, 0.40, 0.55, 8, 10},
    {"fractal_quasicrystal", 3.25, 4.0, 0.70, 0.85, 6, 9},
}};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string describe(const Geometry& g) {
  return "pitch " + fmt("%.3f", g.pitch_um) + " hole_d " + fmt("%.3f", g.hole_d_um) + " rings " +
         std::to_string(g.n_rings);
}

double objective(const SimResult& r, const TargetSpec& t) {
  return std::log1p(std::abs(r.dispersion_ps_nm_km - t.d_target) / t.tol_d) +
         std::log1p(std::abs(r.loss_db_km - t.alpha_target) / t.tol_alpha);
}

struct Move {
  Param param;
  double value;
};

std::vector<Move> candidate_moves(const Geometry& g) {
  static constexpr double kPitchSteps[] = {0.01, 0.03, 0.1, 0.3};
  static constexpr double kHoleSteps[] = {0.005, 0.015, 0.05, 0.15};
  std::vector<Move> out;
  auto push = [&](Param p, double v) {
    if (is_valid(with_param(g, p, v))) out.push_back({p, v});
  };
  for (double s : kPitchSteps)
    for (int sign : {1, -1}) push(Param::kPitch, g.pitch_um + sign * s);
  for (double s : kHoleSteps)
    for (int sign : {1, -1}) push(Param::kHoleD, g.hole_d_um + sign * s);
  for (int sign : {1, -1}) push(Param::kRings, g.n_rings + sign);
  return out;
}

Geometry sample_box(const FamilyPrior& f, Rng& rng) {
  Geometry g;
  g.pitch_um = rng.uniform(f.pitch_lo, f.pitch_hi);
  g.hole_d_um = rng.uniform(f.fill_lo, f.fill_hi) * g.pitch_um;
  g.n_rings = rng.uniform_int(f.rings_lo, f.rings_hi);
  return g;
}

std::string difficulty_of(std::size_t spans) {
  if (spans <= 3) return "easy";
  if (spans <= 7) return "medium";
  return "hard";
}

MemoryEntry planted_entry(EntryId id, EntryKind kind, Param p, Metric m, int direction,
                          const Geometry& at, const SimResult& res, int support,
                          int contradictions) {
  MemoryEntry e;
  e.id = id;
  e.kind = kind;
  e.key = {p, m, lambda_bucket(res.lambda_um), regime_of(at.fill())};
  e.direction = direction;
  e.slope = direction * 1.0;
  e.support_count = support;
  e.contradictions = contradictions;
  e.confidence = std::min(1.0, support / 5.0);
  e.anchor = Anchor{at, res};
  e.statement = render_statement(kind, e.key, direction, e.slope, *e.anchor, support);
  e.embedding = embed_text(e.statement);
  return e;
}

SimResult uncharged(const Geometry& g, double lambda_um) {
  CallCounter scratch;
  return simulate(g, lambda_um, scratch);
}

Query failure_query(const Trace& trace, Rng& rng) {
  const Geometry base = trace.spans.back().geometry_after();
  const double lambda = trace.target.lambda_um;
  const auto type = static_cast<FailureType>(rng.uniform_int(0, 3));
  Param p = rng.bernoulli(0.5) ? Param::kPitch : Param::kHoleD;
  Metric m = rng.bernoulli(0.5) ? Metric::kDispersion : Metric::kLoss;

  FailureScenario s;
  s.lambda_um = lambda;
  s.tolerance_violated = true;
  s.proposal = base;
  if (type == FailureType::kMissingConstraint) {
    // Over-filled cladding: d/pitch beyond the fabrication limit.
    s.proposal.hole_d_um = std::min(0.95, surrogate::kFillMax + 0.03) * base.pitch_um;
  } else {
    s.proposal = clamp_to_bounds(with_param(base, p, param_value(base, p) * 1.05));
  }
  const int truth = trend_sign(s.proposal, lambda, p, m);
  const SimResult at = uncharged(clamp_to_bounds(s.proposal), lambda);
  MemoryEntry decisive = planted_entry(1, EntryKind::kParamMap, p, m, truth, s.proposal, at, 3, 0);
  switch (type) {
    case FailureType::kWrongTrend:
      decisive = planted_entry(1, EntryKind::kParamMap, p, m, -truth, s.proposal, at, 3, 0);
      break;
    case FailureType::kMissingConstraint:
      break;
    case FailureType::kOutdatedKnowledge:
      decisive = planted_entry(1, EntryKind::kParamMap, p, m, truth, s.proposal, at, 4,
                               rng.uniform_int(2, 4));
      break;
    case FailureType::kSpuriousMemory:
      decisive = planted_entry(1, EntryKind::kParamMap, p, m, truth, s.proposal, at, 1, 0);
      break;
  }
  s.retrieved.push_back(decisive);
  s.decisive = decisive.id;
  if (type == FailureType::kOutdatedKnowledge || type == FailureType::kSpuriousMemory)
    s.retrieved.push_back(
        planted_entry(2, EntryKind::kBoundary, p, Metric::kDispersion, 1, s.proposal, at, 1, 0));

  Query q;
  q.type = QueryType::kFailureAnalysis;
  std::string text = "the proposal " + describe(s.proposal) + " missed the target at wavelength " +
                     fmt("%.3f", lambda) + " um. retrieved memory:";
  for (const auto& e : s.retrieved) text += " [" + std::to_string(e.id) + "] " + e.statement + ";";
  q.text = text + " diagnose the failure";
  q.scenario = std::move(s);
  q.gt_failure = type;
  q.gt_text = "failure type " + std::string(to_string(type));
  return q;
}

}  // namespace

const std::array<FamilyPrior, kNumFamilies>& family_priors() { return kFamilies; }

const FamilyPrior& family_prior(std::string_view name) {
  for (const auto& f : kFamilies)
    if (f.name == name) return f;
  throw ValidationError("unknown family '" + std::string(name) + "'");
}

const std::vector<std::string>& concept_keys() {
  static const std::vector<std::string> keys = {"pitch", "hole_d",     "rings", "dispersion",
                                                "loss",  "wavelength", "n_eff"};
  return keys;
}

std::string render_span_text(const SpanEdit& edit, const SimResult& before, const SimResult& after) {
  const bool rings = edit.param == Param::kRings;
  const char* vf = rings ? "%.0f" : "%.3f";
  return std::string(edit.new_value > edit.old_value ? "increase " : "decrease ") +
         std::string(to_string(edit.param)) + " from " + fmt(vf, edit.old_value) + " to " +
         fmt(vf, edit.new_value) + (rings ? "" : " um") + ": dispersion " +
         fmt("%.2f", before.dispersion_ps_nm_km) + " -> " + fmt("%.2f", after.dispersion_ps_nm_km) +
         " ps/(nm km), loss " + fmt("%.3g", before.loss_db_km) + " -> " +
         fmt("%.3g", after.loss_db_km) + " dB/km, n_eff " + fmt("%.5f", before.n_eff) + " -> " +
         fmt("%.5f", after.n_eff) + " at wavelength " + fmt("%.3f", after.lambda_um) + " um";
}

Trace gen_trace(Rng& rng, std::size_t family_index, const std::string& id, CallCounter& counter,
                const GeneratorConfig& cfg) {
  const FamilyPrior& fam = kFamilies.at(family_index % kNumFamilies);
  Trace t;
  t.id = id;
  t.family = std::string(fam.name);

  const double lambda = kWavelengths[rng.uniform_int(0, 1)];
  t.goal_geometry = sample_box(fam, rng);
  const SimResult goal = simulate(t.goal_geometry, lambda, counter);
  t.target.lambda_um = lambda;
  t.target.d_target = goal.dispersion_ps_nm_km + rng.uniform(-0.5, 0.5) * t.target.tol_d;
  // Keep the loss target positive; the goal still lies inside the tolerance.
  t.target.alpha_target = std::max(goal.loss_db_km + rng.uniform(-0.5, 0.5) * t.target.tol_alpha,
                                   0.5 * goal.loss_db_km);

  // Start from a perturbed goal that misses by at least min_start_miss
  // tolerances (or the last draw after a few attempts).
  Geometry g;
  SimResult s;
  for (int attempt = 0;; ++attempt) {
    g = t.goal_geometry;
    const double sp = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const double sf = rng.bernoulli(0.5) ? 1.0 : -1.0;
    g.pitch_um *= 1.0 + sp * rng.uniform(cfg.pitch_jitter_lo, cfg.pitch_jitter_hi);
    const double fill = t.goal_geometry.fill() + sf * rng.uniform(cfg.fill_jitter_lo, cfg.fill_jitter_hi);
    g.pitch_um = std::clamp(g.pitch_um, surrogate::kPitchMin, surrogate::kPitchMax);
    g.hole_d_um = std::clamp(fill, 0.05, surrogate::kFillMax) * g.pitch_um;
    g.n_rings += rng.uniform_int(-cfg.rings_jitter, cfg.rings_jitter);
    g = clamp_to_bounds(g);
    s = simulate(g, lambda, counter);
    const double miss = std::max(std::abs(s.dispersion_ps_nm_km - t.target.d_target) / t.target.tol_d,
                                 std::abs(s.loss_db_km - t.target.alpha_target) / t.target.tol_alpha);
    if (miss >= cfg.min_start_miss || attempt >= 16) break;
  }

  for (int step = 0; step < cfg.max_steps; ++step) {
    const bool done = verify(s, t.target);
    if (done && static_cast<int>(t.spans.size()) >= cfg.min_spans) break;
    const auto moves = candidate_moves(g);
    if (moves.empty()) break;
    Move chosen = moves.front();
    SimResult next;
    if (rng.bernoulli(cfg.random_move_prob)) {
      chosen = moves[rng.uniform_int(0, static_cast<int>(moves.size()) - 1)];
      next = simulate(with_param(g, chosen.param, chosen.value), lambda, counter);
    } else {
      double best = std::numeric_limits<double>::infinity();
      bool best_keeps = false;
      for (const auto& mv : moves) {
        const SimResult r = simulate(with_param(g, mv.param, mv.value), lambda, counter);
        const double j = objective(r, t.target);
        const bool keeps = verify(r, t.target);
        // Once on target, prefer moves that stay there.
        const bool better = done ? (keeps && !best_keeps) || (keeps == best_keeps && j < best)
                                 : j < best;
        if (better) {
          best = j;
          best_keeps = keeps;
          chosen = mv;
          next = r;
        }
      }
      if (!done && best >= objective(s, t.target)) break;  // stuck
    }
    Span span;
    span.index = static_cast<int>(t.spans.size());
    span.edit = {chosen.param, param_value(g, chosen.param), chosen.value};
    span.geometry_before = g;
    span.sim_before = s;
    span.sim_after = next;
    span.text = render_span_text(span.edit, s, next);
    t.spans.push_back(std::move(span));
    g = with_param(g, chosen.param, chosen.value);
    s = next;
  }
  // A stuck start still yields a two-span trace.
  while (static_cast<int>(t.spans.size()) < cfg.min_spans) {
    const auto moves = candidate_moves(g);
    const Move mv = moves[rng.uniform_int(0, static_cast<int>(moves.size()) - 1)];
    const SimResult next = simulate(with_param(g, mv.param, mv.value), lambda, counter);
    Span span;
    span.index = static_cast<int>(t.spans.size());
    span.edit = {mv.param, param_value(g, mv.param), mv.value};
    span.geometry_before = g;
    span.sim_before = s;
    span.sim_after = next;
    span.text = render_span_text(span.edit, s, next);
    t.spans.push_back(std::move(span));
    g = with_param(g, mv.param, mv.value);
    s = next;
  }
  t.success = verify(t.spans.back().sim_after, t.target);
  return t;
}

std::vector<Query> gen_queries(const Trace& trace, Rng& rng) {
  if (trace.spans.empty()) throw ValidationError("gen_queries: trace without spans");
  const double lambda = trace.target.lambda_um;
  const Geometry final_g = trace.spans.back().geometry_after();
  const std::string band = " at wavelength " + fmt("%.3f", lambda) + " um";
  const std::string diff = difficulty_of(trace.spans.size());
  std::vector<Query> out;

  Query pa;
  pa.type = QueryType::kParameterAdjustment;
  pa.text = "design pitch hole_d rings for dispersion " + fmt("%.2f", trace.target.d_target) +
            " ps/(nm km) and loss " + fmt("%.3g", trace.target.alpha_target) + " dB/km" + band;
  pa.target = trace.target;
  pa.reference_geometry = trace.goal_geometry;
  const SimResult goal = uncharged(trace.goal_geometry, lambda);
  pa.gt_text = "parameters " + describe(trace.goal_geometry) + " yield dispersion " +
               fmt("%.2f", goal.dispersion_ps_nm_km) + " loss " + fmt("%.3g", goal.loss_db_km) +
               band;
  out.push_back(std::move(pa));

  // Trend question about a parameter the trace actually edited.
  std::vector<Param> edited;
  for (const auto& sp : trace.spans)
    if (std::find(edited.begin(), edited.end(), sp.edit.param) == edited.end())
      edited.push_back(sp.edit.param);
  const Param p = edited[rng.uniform_int(0, static_cast<int>(edited.size()) - 1)];
  std::vector<Metric> metrics;
  for (Metric m : kAllMetrics)
    if (trend_sign(final_g, lambda, p, m) != 0) metrics.push_back(m);
  const Metric m = metrics[rng.uniform_int(0, static_cast<int>(metrics.size()) - 1)];
  Query tq;
  tq.type = QueryType::kTrendPrediction;
  tq.trend = TrendQuestion{p, m, final_g, lambda};
  tq.gt_direction = trend_sign(final_g, lambda, p, m);
  tq.text = "trend: " + std::string(to_string(p)) + " up -> " + std::string(to_string(m)) +
            " in " + std::string(to_string(lambda_bucket(lambda))) + " near " + describe(final_g) +
            band;
  tq.gt_text = std::string(to_string(m)) + (tq.gt_direction > 0 ? " increases" : " decreases") +
               " when " + std::string(to_string(p)) + " increases";
  out.push_back(std::move(tq));

  if (rng.bernoulli(0.5)) {
    Query dr;
    dr.type = QueryType::kDesignReasoning;
    dr.text = "explain how pitch hole_d and rings set dispersion " +
              fmt("%.2f", trace.target.d_target) + " and loss " +
              fmt("%.3g", trace.target.alpha_target) + band;
    dr.gt_concepts = concept_keys();
    std::string gt = "starting from " + describe(trace.spans.front().geometry_before) + ":";
    for (const auto& sp : trace.spans)
      gt += " " + std::string(to_string(sp.edit.param)) + " " + fmt("%.3f", sp.edit.new_value) +
            " gives dispersion " + fmt("%.2f", sp.sim_after.dispersion_ps_nm_km) + " loss " +
            fmt("%.3g", sp.sim_after.loss_db_km) + " n_eff " + fmt("%.5f", sp.sim_after.n_eff) + ";";
    dr.gt_text = gt + band;
    out.push_back(std::move(dr));
  } else {
    out.push_back(failure_query(trace, rng));
  }

  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].id = trace.id + "-q" + std::to_string(i);
    out[i].trace_ids = {trace.id};
    out[i].difficulty = diff;
  }
  return out;
}

Corpus gen_corpus(std::uint64_t seed, std::size_t n_traces, CallCounter& counter, int workers,
                  const GeneratorConfig& cfg) {
  Corpus c;
  c.traces.resize(n_traces);
  std::vector<std::vector<Query>> queries(n_traces);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < n_traces; i += stride) {
      char id[32];
      std::snprintf(id, sizeof id, "t%04zu", i);
      Rng rng(derive_seed(seed, {kTraceTag, i}));
      c.traces[i] = gen_trace(rng, i % kNumFamilies, id, counter, cfg);
      Rng qrng(derive_seed(seed, {kQueryTag, i}));
      queries[i] = gen_queries(c.traces[i], qrng);
    }
  };
  const std::size_t w = static_cast<std::size_t>(std::max(1, workers));
  if (w == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < w; ++k) pool.emplace_back(work, k, w);
    for (auto& th : pool) th.join();
  }
  for (auto& q : queries) c.queries.insert(c.queries.end(), q.begin(), q.end());
  return c;
}

Splits split(const std::vector<Trace>& traces, Rng& rng) {
  std::map<std::string, std::vector<std::string>> by_family;
  for (const auto& t : traces) by_family[t.family].push_back(t.id);
  Splits out;
  static constexpr double kShares[3] = {0.70, 0.15, 0.15};
  for (auto& [family, ids] : by_family) {
    if (ids.size() < 10)
      throw ValidationError("split: family " + family + " has fewer than 10 traces");
    rng.shuffle(ids.begin(), ids.end());
    const double n = static_cast<double>(ids.size());
    std::size_t counts[3];
    double frac[3];
    std::size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
      const double exact = kShares[k] * n;
      counts[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      frac[k] = exact - counts[k];
      assigned += counts[k];
    }
    int order[3] = {0, 1, 2};
    std::stable_sort(order, order + 3, [&](int a, int b) { return frac[a] > frac[b]; });
    for (std::size_t r = 0; r < ids.size() - assigned; ++r) ++counts[order[r]];
    auto it = ids.begin();
    out.train.insert(out.train.end(), it, it + counts[0]);
    it += counts[0];
    out.val.insert(out.val.end(), it, it + counts[1]);
    it += counts[1];
    out.test.insert(out.test.end(), it, it + counts[2]);
  }
  return out;
}

namespace {

template <typename T>
std::string to_jsonl(std::string_view format, const std::vector<T>& items) {
  std::string out = nlohmann::json{{"format", format}, {"version", kCorpusVersion},
                                   {"count", items.size()}}
                        .dump() +
                    "\n";
  for (const auto& item : items) out += nlohmann::json(item).dump() + "\n";
  return out;
}

template <typename T>
std::vector<T> from_jsonl(std::string_view format, std::string_view text) {
  std::vector<T> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::size_t expected = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError("line " + std::to_string(line_no) + ": " + ex.what(), line_no);
    }
    if (line_no == 1) {
      if (j.value("format", "") != format)
        throw ParseError("line 1: expected format " + std::string(format), 1);
      if (j.value("version", -1) != kCorpusVersion)
        throw ParseError("line 1: unsupported version " + j.value("version", nlohmann::json()).dump(), 1);
      expected = j.at("count").get<std::size_t>();
      continue;
    }
    try {
      out.push_back(j.get<T>());
    } catch (const std::exception& ex) {
      throw ParseError("line " + std::to_string(line_no) + ": " + ex.what(), line_no);
    }
  }
  if (line_no == 0) throw ParseError("empty corpus", 0);
  if (out.size() != expected)
    throw ParseError("expected " + std::to_string(expected) + " records, found " +
                         std::to_string(out.size()),
                     line_no);
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string traces_to_jsonl(const std::vector<Trace>& traces) {
  return to_jsonl("pcfmem-traces", traces);
}
std::vector<Trace> traces_from_jsonl(std::string_view text) {
  return from_jsonl<Trace>("pcfmem-traces", text);
}
std::string queries_to_jsonl(const std::vector<Query>& queries) {
  return to_jsonl("pcfmem-queries", queries);
}
std::vector<Query> queries_from_jsonl(std::string_view text) {
  return from_jsonl<Query>("pcfmem-queries", text);
}

void save_traces(const std::filesystem::path& path, const std::vector<Trace>& traces) {
  write_file(path, traces_to_jsonl(traces));
}
std::vector<Trace> load_traces(const std::filesystem::path& path) {
  return traces_from_jsonl(read_file(path));
}
void save_queries(const std::filesystem::path& path, const std::vector<Query>& queries) {
  write_file(path, queries_to_jsonl(queries));
}
std::vector<Query> load_queries(const std::filesystem::path& path) {
  return queries_from_jsonl(read_file(path));
}

void save_splits(const std::filesystem::path& path, const Splits& s) {
  write_file(path, nlohmann::json{{"format", "pcfmem-splits"},
                                  {"version", kCorpusVersion},
                                  {"train", s.train},
                                  {"val", s.val},
                                  {"test", s.test}}
                           .dump(1) +
                       "\n");
}

Splits load_splits(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& ex) {
    throw ParseError(std::string("splits: ") + ex.what(), ex.byte);
  }
  if (j.value("format", "") != "pcfmem-splits" || j.value("version", -1) != kCorpusVersion)
    throw ParseError("splits: unsupported format or version", 0);
  Splits s;
  j.at("train").get_to(s.train);
  j.at("val").get_to(s.val);
  j.at("test").get_to(s.test);
  return s;
}

}  // namespace pcfmem

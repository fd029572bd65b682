#include "pcfmem/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "pcfmem/errors.hpp"

namespace pcfmem {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::uint64_t kTagSplit = 0x7370;
constexpr std::uint64_t kTagRandomSearch = 0x7273;
constexpr std::uint64_t kTagSurrogate = 0x7375;

std::vector<Trace> select(const std::vector<Trace>& traces, const std::vector<std::string>& ids) {
  std::map<std::string, const Trace*> by_id;
  for (const auto& t : traces) by_id[t.id] = &t;
  std::vector<Trace> out;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("split references unknown trace '" + id + "'");
    out.push_back(*it->second);
  }
  return out;
}

void finish(Dataset& d) {
  d.train = select(d.corpus.traces, d.splits.train);
  d.val = select(d.corpus.traces, d.splits.val);
  d.test = select(d.corpus.traces, d.splits.test);
  d.queries = index_queries(d.corpus.queries);
}

json base_doc(const std::string& stage, const RunConfig& cfg) {
  return json{{"stage", stage}, {"config", to_json(cfg)}, {"missing_metrics", missing_metrics()}};
}

json log_json(const std::vector<EpochLog>& log) {
  json out = json::array();
  for (const auto& e : log) out.push_back(to_json(e));
  return out;
}

json cycles_json(const std::vector<CycleRecord>& cycles) {
  json out = json::array();
  for (const auto& c : cycles) out.push_back(to_json(c));
  return out;
}

std::string cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_number()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v.get<double>());
    return buf;
  }
  return v.get<std::string>();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

ClosedLoopResult train_system(const RunConfig& cfg, const Dataset& data, TrainerConfig tcfg) {
  return run_closed_loop(tcfg, data.train, data.val, data.queries, cfg.seed);
}

}  // namespace

Dataset generate_data(const RunConfig& cfg) {
  Dataset d;
  CallCounter generation;
  d.corpus = gen_corpus(cfg.seed, cfg.n_traces, generation, cfg.workers);
  Rng rng(derive_seed(cfg.seed, {kTagSplit}));
  d.splits = split(d.corpus.traces, rng);
  finish(d);
  return d;
}

Dataset prepare_data(const RunConfig& cfg) {
  if (cfg.data_dir.empty()) return generate_data(cfg);
  const fs::path dir(cfg.data_dir);
  Dataset d;
  d.corpus.traces = load_traces(dir / "traces.jsonl");
  d.corpus.queries = load_queries(dir / "queries.jsonl");
  d.splits = load_splits(dir / "splits.json");
  finish(d);
  return d;
}

void write_data(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  save_traces(dir / "traces.jsonl", data.corpus.traces);
  save_queries(dir / "queries.jsonl", data.corpus.queries);
  save_splits(dir / "splits.json", data.splits);
}

json stage_gen_data(const RunConfig& cfg) {
  const Dataset d = generate_data(cfg);
  write_data(d, cfg.out_dir);
  double spans = 0.0, success = 0.0;
  for (const auto& t : d.corpus.traces) {
    spans += static_cast<double>(t.spans.size());
    success += t.success;
  }
  const double n = static_cast<double>(d.corpus.traces.size());
  json doc = base_doc("gen-data", cfg);
  doc["traces"] = d.corpus.traces.size();
  doc["queries"] = d.corpus.queries.size();
  doc["mean_spans"] = spans / n;
  doc["success_rate"] = success / n;
  doc["splits"] = {{"train", d.splits.train.size()},
                   {"val", d.splits.val.size()},
                   {"test", d.splits.test.size()}};
  doc["rows"] = json::array();
  return doc;
}

MetricReport evaluate_agent(const std::string& label, const PolicyParams& params,
                            const SkillBank& bank, const Dataset& data, const TrainerConfig& tcfg,
                            std::uint64_t seed) {
  return aggregate(label, evaluate_split(params, bank, data.test, data.queries, tcfg, seed));
}

namespace {

json trained_doc(const std::string& stage, const RunConfig& cfg, TrainerConfig tcfg) {
  const Dataset data = prepare_data(cfg);
  const ClosedLoopResult res = train_system(cfg, data, tcfg);
  json doc = base_doc(stage, cfg);
  doc["log"] = log_json(res.log);
  doc["cycles"] = cycles_json(res.cycles);
  doc["bank"] = res.bank.to_json();
  doc["rows"] = json::array({to_json(evaluate_agent(ablation_label(cfg.ablation), res.params,
                                                    res.bank, data, tcfg, cfg.seed))});
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  write_text(out / "policy.json", res.params.to_json().dump());
  doc["checkpoint"] = "policy.json";
  return doc;
}

}  // namespace

json stage_train(const RunConfig& cfg) {
  TrainerConfig tcfg = cfg.trainer();
  tcfg.ppo.outer_epochs = 0;
  return trained_doc("train", cfg, tcfg);
}

json stage_evolve(const RunConfig& cfg) { return trained_doc("evolve", cfg, cfg.trainer()); }

json stage_eval(const RunConfig& cfg, const std::vector<Ablation>& ablations) {
  const Dataset data = prepare_data(cfg);
  json doc = base_doc("eval", cfg);
  doc["rows"] = json::array();
  doc["cycles"] = json::object();
  for (Ablation a : ablations) {
    RunConfig variant = cfg;
    variant.ablation = a;
    const TrainerConfig tcfg = variant.trainer();
    const ClosedLoopResult res = train_system(variant, data, tcfg);
    doc["rows"].push_back(
        to_json(evaluate_agent(ablation_label(a), res.params, res.bank, data, tcfg, cfg.seed)));
    doc["cycles"][std::string(to_string(a))] = cycles_json(res.cycles);
  }
  return doc;
}

std::vector<QueryOutcome> run_baseline(BaselineKind kind, const Dataset& data, const RunConfig& cfg) {
  std::optional<SurrogateModel> model;
  if (kind == BaselineKind::kSurrogate) {
    Rng rng(derive_seed(cfg.seed, {kTagSurrogate}));
    CallCounter training;  // never merged into evaluation accounting
    const auto samples = SurrogateModel::make_dataset(cfg.surrogate.train_samples, rng, training);
    model.emplace(derive_seed(cfg.seed, {kTagSurrogate, 1}));
    model->train(samples, cfg.surrogate.epochs, cfg.surrogate.batch, cfg.surrogate.learning_rate, rng);
  }
  std::vector<QueryOutcome> rows;
  std::uint64_t index = 0;
  for (const Trace& t : data.test) {
    auto it = data.queries.find(t.id);
    if (it == data.queries.end()) continue;
    for (const Query& q : it->second) {
      if (q.type != QueryType::kParameterAdjustment) continue;
      const TargetSpec& spec = q.target.value();
      CallCounter counter;
      BaselineResult r;
      Rng rng(derive_seed(cfg.seed, {kTagRandomSearch, static_cast<std::uint64_t>(kind), index++}));
      switch (kind) {
        case BaselineKind::kRandomSearch: r = random_search(spec, counter, rng); break;
        case BaselineKind::kNelderMead: r = nelder_mead(spec, counter); break;
        case BaselineKind::kSurrogate: r = surrogate_search(*model, spec, counter, rng); break;
      }
      const SuccessQuality sq = success_quality(r.result, spec);
      QueryOutcome row;
      row.query_id = q.id;
      row.type = q.type;
      row.f1 = token_f1(r.text, q.gt_text);
      row.param = param_accuracy(r.geometry, q.reference_geometry.value());
      row.proposed = true;
      row.verified = sq.success;
      row.quality = sq.quality;
      row.feedback = r.result;
      row.calls = counter.total_calls();
      row.passed = sq.success;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

json stage_baseline(const RunConfig& cfg, const std::vector<BaselineKind>& kinds) {
  const Dataset data = prepare_data(cfg);
  json doc = base_doc("baseline", cfg);
  doc["rows"] = json::array();
  for (BaselineKind k : kinds)
    doc["rows"].push_back(to_json(aggregate(std::string(to_string(k)), run_baseline(k, data, cfg), true)));
  return doc;
}

json stage_report(const std::vector<fs::path>& inputs) {
  json doc{{"stage", "report"}, {"missing_metrics", missing_metrics()}, {"sources", json::array()},
           {"rows", json::array()}};
  for (const auto& p : inputs) {
    std::ifstream in(p);
    if (!in) throw ValidationError("cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    json src;
    try {
      src = json::parse(ss.str());
    } catch (const json::parse_error& e) {
      throw ParseError(p.string() + ": " + e.what(), e.byte);
    }
    if (!src.contains("rows") || !src["rows"].is_array())
      throw ValidationError(p.string() + " has no rows array");
    doc["sources"].push_back(p.generic_string());
    for (const auto& row : src["rows"]) doc["rows"].push_back(row);
  }
  return doc;
}

json stage_sweep(const RunConfig& cfg, const std::vector<std::string>& axes) {
  const Dataset data = prepare_data(cfg);
  json doc = base_doc("sweep", cfg);
  doc["rows"] = json::array();
  for (const auto& axis : axes) {
    std::vector<double> values;
    if (axis == "retrieval_k") values = {3, 5, 8};
    else if (axis == "learning_rate") values = {3e-5, 1e-4, 3e-4};
    else if (axis == "entropy_coef") values = {0.0, 0.01, 0.05};
    else if (axis == "designer_every") values = {1, 2, 5};
    else if (axis == "max_bank_size") values = {5, 8, 12};
    else if (axis == "top_k") values = {1, 2, 3};
    else throw ConfigError("unknown sweep axis '" + axis + "'");
    for (double v : values) {
      TrainerConfig t = cfg.trainer();
      if (axis == "retrieval_k") t.retrieval_k = static_cast<std::size_t>(v);
      else if (axis == "learning_rate") t.ppo.learning_rate = v;
      else if (axis == "entropy_coef") t.ppo.entropy_coef = v;
      else if (axis == "designer_every") t.designer_every = static_cast<int>(v);
      else if (axis == "max_bank_size") t.max_bank_size = static_cast<std::size_t>(v);
      else if (axis == "top_k") t.top_k = static_cast<std::size_t>(v);
      char label[96];
      std::snprintf(label, sizeof label, "%s=%g", axis.c_str(), v);
      const ClosedLoopResult res = train_system(cfg, data, t);
      doc["rows"].push_back(to_json(evaluate_agent(label, res.params, res.bank, data, t, cfg.seed)));
    }
  }
  return doc;
}

void write_results(const json& doc, const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / "results.json", doc.dump(2) + "\n");
  std::string csv = csv_header() + "\n";
  if (doc.contains("rows"))
    for (const auto& r : doc["rows"]) {
      csv += cell(r.at("method"));
      for (const char* k : {"F1", "Design", "Param", "Trend", "Succ.", "Qual.", "Phys.", "Calls/q"})
        csv += "," + cell(r.at(k));
      csv += "\n";
    }
  write_text(dir / "results.csv", csv);
}

}  // namespace pcfmem

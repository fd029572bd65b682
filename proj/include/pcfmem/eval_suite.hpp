#ifndef PCFMEM_EVAL_SUITE_HPP_
#define PCFMEM_EVAL_SUITE_HPP_

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pcfmem/memory_bank.hpp"
#include "pcfmem/physics_env.hpp"
#include "pcfmem/trace_types.hpp"

namespace pcfmem {

inline constexpr std::size_t kRetrievalDepth = 5;

double token_f1(std::string_view pred, std::string_view truth);
// Fraction of `concepts` whose surface forms appear in pred.
double concept_coverage(std::string_view pred, const std::vector<std::string>& concepts);
// Mean strict 10%-relative match over (pitch, hole_d, rings).
double param_accuracy(const std::optional<Geometry>& pred, const Geometry& truth);
// 0 in pred means "unknown" and never matches.
double trend_accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

struct SuccessQuality {
  bool success = false;
  double quality = 0.0;
};
SuccessQuality success_quality(const SimResult& res, const TargetSpec& spec);
// 1 - Q before clamping; the Nelder-Mead objective.
double unclamped_miss(const SimResult& res, const TargetSpec& spec);

struct Response {
  std::string text;
  std::optional<Geometry> geometry;
  std::vector<EntryId> cited;
  int direction = 0;                   // trend answers
  std::optional<FailureType> failure;  // failure-analysis answers
};

// Per-query evaluation row.
struct QueryOutcome {
  std::string query_id;
  QueryType type = QueryType::kTrendPrediction;
  double f1 = 0.0;
  std::optional<double> design;  // design_reasoning
  std::optional<double> param;   // parameter_adjustment
  std::optional<double> trend;   // trend_prediction
  std::optional<bool> failure_correct;
  bool proposed = false;
  bool verified = false;
  double quality = 0.0;
  std::optional<SimResult> feedback;
  std::int64_t calls = 0;
  // Whether the query counts as passed for the episode reward.
  bool passed = false;
};

struct Answer {
  Response response;
  QueryOutcome outcome;
  std::vector<MemoryEntry> considered;  // entries the answer relied on
  std::optional<EntryId> decisive;
};

// Rule-based answerer over a trace memory. Only parameter_adjustment
// queries touch the environment, with exactly one charged call.
Answer answer_query(const MemoryBank& bank, const Query& query, CallCounter& counter);

struct MetricReport {
  std::string label;
  double f1 = 0.0, design = 0.0, param = 0.0, trend = 0.0;
  double succ = 0.0, qual = 0.0, phys = 0.0, calls_per_query = 0.0;
  std::size_t n_queries = 0;
  // Which columns carry data (baselines answer parameter_adjustment only).
  bool has_design = true, has_trend = true;
};

// Rates are reported x100. `calls_over_param_only` averages calls over
// parameter_adjustment rows (baseline convention).
MetricReport aggregate(const std::string& label, const std::vector<QueryOutcome>& rows,
                       bool calls_over_param_only = false);

// Metric columns this artifact does not produce.
const std::vector<std::string>& missing_metrics();

nlohmann::json to_json(const MetricReport& r);
std::string csv_header();
std::string csv_row(const MetricReport& r);

}  // namespace pcfmem

#endif  // PCFMEM_EVAL_SUITE_HPP_

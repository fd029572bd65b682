#ifndef PCFMEM_TRACE_TYPES_HPP_
#define PCFMEM_TRACE_TYPES_HPP_

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pcfmem/memory_bank.hpp"
#include "pcfmem/physics_env.hpp"

namespace pcfmem {

struct SpanEdit {
  Param param = Param::kPitch;
  double old_value = 0.0;
  double new_value = 0.0;
  bool operator==(const SpanEdit&) const = default;
};

// One design step: a single-parameter edit with its before/after outcome.
struct Span {
  int index = 0;
  std::string text;
  SpanEdit edit;
  Geometry geometry_before;
  SimResult sim_before;
  SimResult sim_after;

  Geometry geometry_after() const { return with_param(geometry_before, edit.param, edit.new_value); }
  bool operator==(const Span&) const = default;
};

struct Trace {
  std::string id;
  std::string family;
  TargetSpec target;
  // Geometry the target was derived from; reference answer for Param.
  Geometry goal_geometry;
  std::vector<Span> spans;
  bool success = false;
  bool operator==(const Trace&) const = default;
};

enum class QueryType { kTrendPrediction, kParameterAdjustment, kDesignReasoning, kFailureAnalysis };
enum class FailureType { kWrongTrend, kMissingConstraint, kOutdatedKnowledge, kSpuriousMemory };

std::string_view to_string(QueryType t);
std::string_view to_string(FailureType t);
QueryType query_type_from_string(std::string_view s);
FailureType failure_type_from_string(std::string_view s);

struct TrendQuestion {
  Param param = Param::kPitch;
  Metric metric = Metric::kDispersion;
  Geometry point;
  double lambda_um = 1.55;
  bool operator==(const TrendQuestion&) const = default;
};

// Planted hard case for failure_analysis queries.
struct FailureScenario {
  std::vector<MemoryEntry> retrieved;
  std::optional<EntryId> decisive;
  Geometry proposal;
  double lambda_um = 1.55;
  bool tolerance_violated = true;
  bool operator==(const FailureScenario&) const = default;
};

struct Query {
  std::string id;
  std::vector<std::string> trace_ids;
  QueryType type = QueryType::kTrendPrediction;
  std::string text;
  std::string difficulty;

  // Ground truth, populated per type.
  std::optional<TrendQuestion> trend;
  int gt_direction = 0;
  std::optional<TargetSpec> target;
  std::optional<Geometry> reference_geometry;
  std::vector<std::string> gt_concepts;
  std::optional<FailureScenario> scenario;
  std::optional<FailureType> gt_failure;
  std::string gt_text;

  bool operator==(const Query&) const = default;
};

void to_json(nlohmann::json& j, const TrendQuestion& t);
void from_json(const nlohmann::json& j, TrendQuestion& t);
void to_json(nlohmann::json& j, const FailureScenario& s);
void from_json(const nlohmann::json& j, FailureScenario& s);
void to_json(nlohmann::json& j, const Span& s);
void from_json(const nlohmann::json& j, Span& s);
void to_json(nlohmann::json& j, const Trace& t);
void from_json(const nlohmann::json& j, Trace& t);
void to_json(nlohmann::json& j, const Query& q);
void from_json(const nlohmann::json& j, Query& q);

}  // namespace pcfmem

#endif  // PCFMEM_TRACE_TYPES_HPP_

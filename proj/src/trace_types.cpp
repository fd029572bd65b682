#include "pcfmem/trace_types.hpp"

#include <utility>

#include "pcfmem/errors.hpp"

namespace pcfmem {

namespace {

constexpr std::pair<QueryType, std::string_view> kQueryTypes[] = {
    {QueryType::kTrendPrediction, "trend_prediction"},
    {QueryType::kParameterAdjustment, "parameter_adjustment"},
    {QueryType::kDesignReasoning, "design_reasoning"},
    {QueryType::kFailureAnalysis, "failure_analysis"}};
constexpr std::pair<FailureType, std::string_view> kFailureTypes[] = {
    {FailureType::kWrongTrend, "wrong_trend"},
    {FailureType::kMissingConstraint, "missing_constraint"},
    {FailureType::kOutdatedKnowledge, "outdated_knowledge"},
    {FailureType::kSpuriousMemory, "spurious_memory"}};

template <typename T>
nlohmann::json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> opt_get(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<T>();
}


}  // namespace

void to_json(nlohmann::json& j, const TrendQuestion& t) {
  j = nlohmann::json{{"param", to_string(t.param)},
                     {"metric", to_string(t.metric)},
                     {"point", t.point},
                     {"lambda_um", t.lambda_um}};
}

void from_json(const nlohmann::json& j, TrendQuestion& t) {
  t.param = param_from_string(j.at("param").get<std::string>());
  t.metric = metric_from_string(j.at("metric").get<std::string>());
  j.at("point").get_to(t.point);
  j.at("lambda_um").get_to(t.lambda_um);
}

void to_json(nlohmann::json& j, const FailureScenario& s) {
  j = nlohmann::json{{"retrieved", s.retrieved},
                     {"decisive", opt_json(s.decisive)},
                     {"proposal", s.proposal},
                     {"lambda_um", s.lambda_um},
                     {"tolerance_violated", s.tolerance_violated}};
}

void from_json(const nlohmann::json& j, FailureScenario& s) {
  j.at("retrieved").get_to(s.retrieved);
  s.decisive = opt_get<EntryId>(j, "decisive");
  j.at("proposal").get_to(s.proposal);
  j.at("lambda_um").get_to(s.lambda_um);
  j.at("tolerance_violated").get_to(s.tolerance_violated);
}

std::string_view to_string(QueryType t) {
  for (const auto& [v, n] : kQueryTypes)
    if (v == t) return n;
  return "?";
}

std::string_view to_string(FailureType t) {
  for (const auto& [v, n] : kFailureTypes)
    if (v == t) return n;
  return "?";
}

QueryType query_type_from_string(std::string_view s) {
  for (const auto& [v, n] : kQueryTypes)
    if (n == s) return v;
  throw ValidationError("unknown query type '" + std::string(s) + "'");
}

FailureType failure_type_from_string(std::string_view s) {
  for (const auto& [v, n] : kFailureTypes)
    if (n == s) return v;
  throw ValidationError("unknown failure type '" + std::string(s) + "'");
}

void to_json(nlohmann::json& j, const Span& s) {
  j = nlohmann::json{{"index", s.index},
                     {"text", s.text},
                     {"edit",
                      {{"param", to_string(s.edit.param)},
                       {"old_value", s.edit.old_value},
                       {"new_value", s.edit.new_value}}},
                     {"geometry_before", s.geometry_before},
                     {"sim_before", s.sim_before},
                     {"sim_after", s.sim_after}};
}

void from_json(const nlohmann::json& j, Span& s) {
  j.at("index").get_to(s.index);
  j.at("text").get_to(s.text);
  const auto& e = j.at("edit");
  s.edit.param = param_from_string(e.at("param").get<std::string>());
  e.at("old_value").get_to(s.edit.old_value);
  e.at("new_value").get_to(s.edit.new_value);
  j.at("geometry_before").get_to(s.geometry_before);
  j.at("sim_before").get_to(s.sim_before);
  j.at("sim_after").get_to(s.sim_after);
}

void to_json(nlohmann::json& j, const Trace& t) {
  j = nlohmann::json{{"id", t.id},         {"family", t.family},
                     {"target", t.target}, {"goal_geometry", t.goal_geometry},
                     {"spans", t.spans},   {"success", t.success}};
}

void from_json(const nlohmann::json& j, Trace& t) {
  j.at("id").get_to(t.id);
  j.at("family").get_to(t.family);
  j.at("target").get_to(t.target);
  j.at("goal_geometry").get_to(t.goal_geometry);
  j.at("spans").get_to(t.spans);
  j.at("success").get_to(t.success);
}

void to_json(nlohmann::json& j, const Query& q) {
  j = nlohmann::json{
      {"id", q.id},
      {"trace_ids", q.trace_ids},
      {"type", to_string(q.type)},
      {"text", q.text},
      {"difficulty", q.difficulty},
      {"trend", opt_json(q.trend)},
      {"gt_direction", q.gt_direction},
      {"target", opt_json(q.target)},
      {"reference_geometry", opt_json(q.reference_geometry)},
      {"gt_concepts", q.gt_concepts},
      {"scenario", opt_json(q.scenario)},
      {"gt_failure", q.gt_failure ? nlohmann::json(to_string(*q.gt_failure)) : nlohmann::json()},
      {"gt_text", q.gt_text}};
}

void from_json(const nlohmann::json& j, Query& q) {
  j.at("id").get_to(q.id);
  j.at("trace_ids").get_to(q.trace_ids);
  q.type = query_type_from_string(j.at("type").get<std::string>());
  j.at("text").get_to(q.text);
  j.at("difficulty").get_to(q.difficulty);
  q.trend = opt_get<TrendQuestion>(j, "trend");
  j.at("gt_direction").get_to(q.gt_direction);
  q.target = opt_get<TargetSpec>(j, "target");
  q.reference_geometry = opt_get<Geometry>(j, "reference_geometry");
  j.at("gt_concepts").get_to(q.gt_concepts);
  q.scenario = opt_get<FailureScenario>(j, "scenario");
  const auto& f = j.at("gt_failure");
  q.gt_failure = f.is_null() ? std::nullopt
                             : std::optional<FailureType>(failure_type_from_string(f.get<std::string>()));
  j.at("gt_text").get_to(q.gt_text);
}

}  // namespace pcfmem

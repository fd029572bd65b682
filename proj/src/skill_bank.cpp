#include "pcfmem/skill_bank.hpp"

#include <algorithm>
#include <utility>

#include "pcfmem/errors.hpp"

namespace pcfmem {

namespace {

struct TemplateInfo {
  TemplateId id;
  std::string_view name;
  EditOp action;
  std::string_view skill_name;
  std::string_view description;
  std::vector<std::pair<std::string, double>> defaults;
};

const std::vector<TemplateInfo>& template_table() {
  static const std::vector<TemplateInfo> table = {
      {TemplateId::kInsertTopology, "insert_topology", EditOp::kInsert, "InsertTopologyFeature",
       "insert a new parameter to property mapping when a geometry change of pitch hole_d or "
       "rings shifts dispersion loss or effective index; record direction slope wavelength "
       "band and regime",
       {{"theta_sig", 0.0}}},
      {TemplateId::kUpdateTrend, "update_trend", EditOp::kUpdate, "UpdatePerformanceTrend",
       "update an existing trend memory with new simulation evidence; agreeing evidence raises "
       "support and refines the slope, disagreeing evidence lowers confidence",
       {{"support_saturation", 5.0}}},
      {TemplateId::kDeleteInvalid, "delete_invalid", EditOp::kDelete, "DeleteInvalidAssumption",
       "delete a memory whose trend direction is contradicted by simulation evidence and keep "
       "the reason in the audit log",
       {{"theta_del", 1.0}}},
      {TemplateId::kSkip, "skip", EditOp::kNoop, "Skip",
       "skip this span without a memory update because the change is within noise",
       {{"theta_noise", 1.0}}},
      {TemplateId::kEvidenceGatedInsert, "evidence_gated_insert", EditOp::kInsert,
       "InsertTopologyFeature-v2",
       "insert a new parameter to property mapping only when the dispersion loss or effective "
       "index change exceeds a significance threshold in tolerance units; record direction "
       "slope band and regime",
       {{"theta_sig", 0.5}}},
      {TemplateId::kWavelengthScopedInsert, "wavelength_scoped_insert", EditOp::kInsert,
       "InsertTopologyFeature-v3",
       "insert a parameter to property mapping bound to the exact wavelength of the span so it "
       "is not reused across bands",
       {{"theta_sig", 0.0}}},
      {TemplateId::kRegimeAwareUpdate, "regime_aware_update", EditOp::kUpdate,
       "UpdatePerformanceTrend-v2",
       "update an existing trend memory per hole_d to pitch regime; disagreeing evidence from a "
       "different low mid or high regime splits the trend into a regime specific entry",
       {{"support_saturation", 5.0}}},
      {TemplateId::kConfidenceCalibratedUpdate, "confidence_calibrated_update", EditOp::kUpdate,
       "UpdatePerformanceTrend-v3",
       "update an existing trend memory with confidence tied to support count and slope "
       "variance",
       {{"support_saturation", 5.0}}},
      {TemplateId::kCrossVerifiedDelete, "cross_verified_delete", EditOp::kDelete,
       "DeleteInvalidAssumption-v2",
       "delete a memory only after repeated contradictions from spans that edit the same "
       "parameter, keeping the reason in the audit log",
       {{"theta_del", 2.0}}},
      {TemplateId::kRollbackSafeDelete, "rollback_safe_delete", EditOp::kDelete,
       "DeleteInvalidAssumption-v3",
       "archive a contradicted memory together with the payload needed to restore it",
       {{"theta_del", 1.0}}},
      {TemplateId::kNoiseThresholdSkip, "noise_threshold_skip", EditOp::kNoop, "Skip-v2",
       "skip the span when every property change is below a sensitivity threshold",
       {{"theta_noise", 0.5}}},
      {TemplateId::kFailureBoundaryInsert, "failure_boundary_insert", EditOp::kInsert,
       "InsertFailureBoundaryMap",
       "insert an explicit failure boundary when the design misses the dispersion or loss "
       "tolerance so the invalid interval is not sampled again",
       {}},
      {TemplateId::kSensitivityHotspotInsert, "sensitivity_hotspot_insert", EditOp::kInsert,
       "InsertSensitivityHotspot",
       "mark a high sensitivity hotspot where a small geometry step moves dispersion or loss "
       "by several tolerances",
       {{"theta_hot", 20.0}}},
      {TemplateId::kTradeoffFrontierUpdate, "tradeoff_frontier_update", EditOp::kInsert,
       "UpdateTradeoffFrontier",
       "record non dominated dispersion error and loss error design points as a trade off "
       "frontier and archive dominated points",
       {}},
  };
  return table;
}

const TemplateInfo& info(TemplateId t) {
  for (const auto& i : template_table())
    if (i.id == t) return i;
  throw ConfigError("unknown template id");
}

void check_params(const Skill& s) {
  if (s.description.empty()) throw ValidationError("skill " + s.name + ": empty description");
  for (const auto& p : required_params(s.template_id))
    if (!s.params.contains(p))
      throw ValidationError("skill " + s.name + ": missing parameter " + p);
}

}  // namespace

std::string_view to_string(TemplateId t) { return info(t).name; }

TemplateId template_from_string(std::string_view s) {
  for (const auto& i : template_table())
    if (i.name == s) return i.id;
  throw ConfigError("unknown template '" + std::string(s) + "'");
}

EditOp action_type_of(TemplateId t) { return info(t).action; }

std::vector<std::string> required_params(TemplateId t) {
  std::vector<std::string> out;
  for (const auto& [k, v] : info(t).defaults) out.push_back(k);
  return out;
}

double Skill::param(const std::string& key) const {
  auto it = params.find(key);
  if (it == params.end()) throw ConfigError("skill " + name + " has no parameter " + key);
  return it->second;
}

Skill catalog_skill(TemplateId t) {
  const auto& i = info(t);
  Skill s;
  s.name = std::string(i.skill_name);
  s.action_type = i.action;
  s.description = std::string(i.description);
  s.template_id = t;
  for (const auto& [k, v] : i.defaults) s.params[k] = v;
  // Refinements carry their generation in the name ("...-v2").
  if (auto pos = s.name.rfind("-v"); pos != std::string::npos)
    s.version = std::stoi(s.name.substr(pos + 2));
  return s;
}

const Skill* SkillBank::find(std::string_view id) const {
  for (const auto& s : skills_)
    if (s.id == id) return &s;
  return nullptr;
}

const Skill* SkillBank::find_template(TemplateId t) const {
  for (const auto& s : skills_)
    if (s.template_id == t) return &s;
  return nullptr;
}

SkillBank initial_bank() {
  SkillBank bank;
  for (TemplateId t : {TemplateId::kInsertTopology, TemplateId::kUpdateTrend,
                       TemplateId::kDeleteInvalid, TemplateId::kSkip}) {
    Skill s = catalog_skill(t);
    s.id = "s" + std::to_string(bank.next_serial_++);
    s.introduced_epoch = 0;
    bank.skills_.push_back(std::move(s));
  }
  return bank;
}

SkillBank mutate(const SkillBank& bank, const std::vector<SkillChange>& changes, int epoch) {
  SkillBank out = bank;
  auto add = [&](Skill s) {
    check_params(s);
    s.id = "s" + std::to_string(out.next_serial_++);
    s.introduced_epoch = epoch;
    out.skills_.push_back(std::move(s));
  };
  auto retire = [&](const std::string& id) {
    auto it = std::find_if(out.skills_.begin(), out.skills_.end(),
                           [&](const Skill& s) { return s.id == id; });
    if (it == out.skills_.end()) throw ValidationError("mutate: unknown skill id " + id);
    out.retired_.push_back({*it, bank.version_ + 1});
    out.skills_.erase(it);
  };
  for (const auto& change : changes) {
    if (const auto* a = std::get_if<AddSkill>(&change)) {
      add(a->skill);
    } else if (const auto* r = std::get_if<ReplaceSkill>(&change)) {
      retire(r->id);
      add(r->replacement);
    } else if (const auto* d = std::get_if<RetireSkill>(&change)) {
      retire(d->id);
    }
  }
  if (out.skills_.empty()) throw ValidationError("mutate: bank would be empty");
  if (std::none_of(out.skills_.begin(), out.skills_.end(),
                   [](const Skill& s) { return s.action_type == EditOp::kNoop; }))
    throw ValidationError("mutate: bank must keep at least one NOOP skill");
  out.version_ = bank.version_ + 1;
  return out;
}

SkillBank bump_version(const SkillBank& bank) {
  SkillBank out = bank;
  out.version_ = bank.version_ + 1;
  return out;
}

std::vector<Embedding> skill_embeddings(const SkillBank& bank) {
  std::vector<Embedding> out;
  out.reserve(bank.size());
  for (const auto& s : bank.skills()) out.push_back(embed_text(s.description));
  return out;
}

void to_json(nlohmann::json& j, const Skill& s) {
  j = nlohmann::json{{"id", s.id},
                     {"name", s.name},
                     {"action_type", to_string(s.action_type)},
                     {"description", s.description},
                     {"template_id", to_string(s.template_id)},
                     {"params", s.params},
                     {"version", s.version},
                     {"introduced_epoch", s.introduced_epoch}};
}

void from_json(const nlohmann::json& j, Skill& s) {
  j.at("id").get_to(s.id);
  j.at("name").get_to(s.name);
  s.action_type = edit_op_from_string(j.at("action_type").get<std::string>());
  j.at("description").get_to(s.description);
  s.template_id = template_from_string(j.at("template_id").get<std::string>());
  j.at("params").get_to(s.params);
  j.at("version").get_to(s.version);
  j.at("introduced_epoch").get_to(s.introduced_epoch);
}

nlohmann::json SkillBank::to_json() const {
  nlohmann::json retired = nlohmann::json::array();
  for (const auto& r : retired_)
    retired.push_back({{"skill", r.skill}, {"retired_at_version", r.retired_at_version}});
  return nlohmann::json{{"bank_version", version_},
                        {"next_serial", next_serial_},
                        {"skills", skills_},
                        {"retired", retired}};
}

SkillBank SkillBank::from_json(const nlohmann::json& j) {
  SkillBank b;
  try {
    j.at("bank_version").get_to(b.version_);
    j.at("next_serial").get_to(b.next_serial_);
    j.at("skills").get_to(b.skills_);
    for (const auto& r : j.at("retired"))
      b.retired_.push_back({r.at("skill").get<Skill>(), r.at("retired_at_version").get<int>()});
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("skill bank: ") + ex.what(), 0);
  }
  for (const auto& s : b.skills_) check_params(s);
  return b;
}

}  // namespace pcfmem

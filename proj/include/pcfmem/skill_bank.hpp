#ifndef PCFMEM_SKILL_BANK_HPP_
#define PCFMEM_SKILL_BANK_HPP_

#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pcfmem/memory_bank.hpp"
#include "pcfmem/text_embed.hpp"

namespace pcfmem {

// Executor rule a skill is bound to. The first four are the primitives;
// the rest form the evolution catalog.
enum class TemplateId {
  kInsertTopology,
  kUpdateTrend,
  kDeleteInvalid,
  kSkip,
  kEvidenceGatedInsert,
  kWavelengthScopedInsert,
  kRegimeAwareUpdate,
  kConfidenceCalibratedUpdate,
  kCrossVerifiedDelete,
  kRollbackSafeDelete,
  kNoiseThresholdSkip,
  kFailureBoundaryInsert,
  kSensitivityHotspotInsert,
  kTradeoffFrontierUpdate,
};

inline constexpr TemplateId kCatalogTemplates[] = {
    TemplateId::kEvidenceGatedInsert,      TemplateId::kWavelengthScopedInsert,
    TemplateId::kRegimeAwareUpdate,        TemplateId::kConfidenceCalibratedUpdate,
    TemplateId::kCrossVerifiedDelete,      TemplateId::kRollbackSafeDelete,
    TemplateId::kNoiseThresholdSkip,       TemplateId::kFailureBoundaryInsert,
    TemplateId::kSensitivityHotspotInsert, TemplateId::kTradeoffFrontierUpdate,
};

std::string_view to_string(TemplateId t);
TemplateId template_from_string(std::string_view s);
EditOp action_type_of(TemplateId t);
// Parameter names a template reads; all must be present in Skill::params.
std::vector<std::string> required_params(TemplateId t);

struct Skill {
  std::string id;
  std::string name;
  EditOp action_type = EditOp::kNoop;
  std::string description;
  TemplateId template_id = TemplateId::kSkip;
  std::map<std::string, double> params;
  int version = 1;
  int introduced_epoch = 0;

  double param(const std::string& name) const;
  bool operator==(const Skill&) const = default;
};

struct RetiredSkill {
  Skill skill;
  int retired_at_version = 0;
  bool operator==(const RetiredSkill&) const = default;
};

struct AddSkill {
  Skill skill;
};
struct ReplaceSkill {
  std::string id;
  Skill replacement;
};
struct RetireSkill {
  std::string id;
};
using SkillChange = std::variant<AddSkill, ReplaceSkill, RetireSkill>;

class SkillBank {
 public:
  const std::vector<Skill>& skills() const { return skills_; }
  const std::vector<RetiredSkill>& retired() const { return retired_; }
  int version() const { return version_; }
  std::size_t size() const { return skills_.size(); }

  const Skill* find(std::string_view id) const;
  const Skill* find_template(TemplateId t) const;
  bool has_template(TemplateId t) const { return find_template(t) != nullptr; }

  nlohmann::json to_json() const;
  static SkillBank from_json(const nlohmann::json& j);

  bool operator==(const SkillBank&) const = default;

  friend SkillBank initial_bank();
  friend SkillBank mutate(const SkillBank& bank, const std::vector<SkillChange>& changes,
                          int epoch);
  friend SkillBank bump_version(const SkillBank& bank);

 private:
  std::vector<Skill> skills_;
  std::vector<RetiredSkill> retired_;
  int version_ = 0;
  int next_serial_ = 0;
};

// The four primitives at version 0.
SkillBank initial_bank();

// Applies changes in order and returns a bank with version+1. Added skills
// get fresh ids and introduced_epoch = epoch; retired ones move to the
// ledger. Throws ValidationError if the result has no NOOP skill, an unknown
// id is referenced, or a skill is missing template parameters.
SkillBank mutate(const SkillBank& bank, const std::vector<SkillChange>& changes, int epoch);

// Same content, version+1 (accepting an identity proposal).
SkillBank bump_version(const SkillBank& bank);

std::vector<Embedding> skill_embeddings(const SkillBank& bank);

// Catalog template with default name, description and parameters.
Skill catalog_skill(TemplateId t);

void to_json(nlohmann::json& j, const Skill& s);
void from_json(const nlohmann::json& j, Skill& s);

}  // namespace pcfmem

#endif  // PCFMEM_SKILL_BANK_HPP_

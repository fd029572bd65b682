#include "pcfmem/skill_designer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace pcfmem {

namespace {

constexpr std::size_t kClustersPerCycle = 2;
constexpr std::size_t kRepresentatives = 2;
constexpr double kGateStep = 0.5;
constexpr double kGateMax = 1.0;

bool is_trend_like(EntryKind k) { return k == EntryKind::kParamMap || k == EntryKind::kTrend; }

const MemoryEntry* find_entry(const std::vector<MemoryEntry>& v, const std::optional<EntryId>& id) {
  if (!id) return nullptr;
  for (const auto& e : v)
    if (e.id == *id) return &e;
  return nullptr;
}

// One escalation step. Returns false when the step is already in place.
bool apply_step(TemplateId step, const SkillBank& current, std::vector<SkillChange>& changes,
                std::vector<std::string>& log) {
  auto replace_or_add = [&](TemplateId old_t, Skill fresh) {
    if (const Skill* old = current.find_template(old_t)) {
      log.push_back("replace " + old->name + " with " + fresh.name);
      changes.push_back(ReplaceSkill{old->id, std::move(fresh)});
    } else {
      log.push_back("add " + fresh.name);
      changes.push_back(AddSkill{std::move(fresh)});
    }
  };

  if (step == TemplateId::kEvidenceGatedInsert) {
    const Skill* gated = current.find_template(TemplateId::kEvidenceGatedInsert);
    if (gated) {
      const double theta = gated->param("theta_sig");
      if (theta >= kGateMax) return false;
      Skill next = *gated;
      next.params["theta_sig"] = std::min(kGateMax, theta + kGateStep);
      next.version = gated->version + 1;
      log.push_back("raise " + gated->name + " theta_sig to " +
                    std::to_string(next.params["theta_sig"]));
      changes.push_back(ReplaceSkill{gated->id, std::move(next)});
      return true;
    }
    Skill fresh = catalog_skill(step);
    double base = 0.0;
    if (const Skill* plain = current.find_template(TemplateId::kInsertTopology))
      base = plain->param("theta_sig");
    fresh.params["theta_sig"] = std::min(kGateMax, base + kGateStep);
    replace_or_add(TemplateId::kInsertTopology, std::move(fresh));
    return true;
  }
  if (current.has_template(step)) return false;
  switch (step) {
    case TemplateId::kRegimeAwareUpdate:
      replace_or_add(TemplateId::kUpdateTrend, catalog_skill(step));
      return true;
    case TemplateId::kCrossVerifiedDelete:
      replace_or_add(TemplateId::kDeleteInvalid, catalog_skill(step));
      return true;
    default:
      log.push_back("add " + catalog_skill(step).name);
      changes.push_back(AddSkill{catalog_skill(step)});
      return true;
  }
}

const std::vector<TemplateId>& escalation(FailureType t) {
  static const std::map<FailureType, std::vector<TemplateId>> chains = {
      {FailureType::kWrongTrend,
       {TemplateId::kRegimeAwareUpdate, TemplateId::kSensitivityHotspotInsert,
        TemplateId::kConfidenceCalibratedUpdate}},
      {FailureType::kMissingConstraint,
       {TemplateId::kFailureBoundaryInsert, TemplateId::kTradeoffFrontierUpdate,
        TemplateId::kWavelengthScopedInsert}},
      {FailureType::kOutdatedKnowledge,
       {TemplateId::kCrossVerifiedDelete, TemplateId::kRollbackSafeDelete}},
      {FailureType::kSpuriousMemory,
       {TemplateId::kEvidenceGatedInsert, TemplateId::kNoiseThresholdSkip}},
  };
  return chains.at(t);
}

}  // namespace

double miss_distance(const SimResult& res, const TargetSpec& target) {
  return std::max(std::abs(res.dispersion_ps_nm_km - target.d_target) / target.tol_d,
                  std::abs(res.loss_db_km - target.alpha_target) / target.tol_alpha);
}

void FailureBuffer::add(FailureCase c) {
  if (!(c.difficulty >= 1.0)) return;
  if (cases_.size() < capacity_) {
    cases_.push_back(std::move(c));
    return;
  }
  auto weakest = cases_.begin();
  for (auto it = cases_.begin(); it != cases_.end(); ++it)
    if (it->difficulty <= weakest->difficulty) weakest = it;
  if (c.difficulty > weakest->difficulty) *weakest = std::move(c);
}

FailureType classify_failure(const std::vector<MemoryEntry>& retrieved,
                             const std::optional<EntryId>& decisive, const Geometry& proposal,
                             double lambda_um, bool tolerance_violated) {
  for (const auto& e : retrieved) {
    if (!is_trend_like(e.kind)) continue;
    const int truth = trend_sign(proposal, lambda_um, e.key.param, e.key.metric);
    if (truth != 0 && truth != e.direction) return FailureType::kWrongTrend;
  }
  const bool guarded = std::any_of(retrieved.begin(), retrieved.end(), [](const MemoryEntry& e) {
    return e.kind == EntryKind::kConstraint || e.kind == EntryKind::kBoundary;
  });
  if ((!is_valid(proposal) || tolerance_violated) && !guarded)
    return FailureType::kMissingConstraint;
  const MemoryEntry* d = find_entry(retrieved, decisive);
  if (d && d->contradictions >= 2) return FailureType::kOutdatedKnowledge;
  return FailureType::kSpuriousMemory;
}

FailureType classify_failure(const FailureScenario& s) {
  return classify_failure(s.retrieved, s.decisive, s.proposal, s.lambda_um, s.tolerance_violated);
}

std::vector<FailureCluster> cluster_failures(const FailureBuffer& buffer) {
  std::map<std::pair<FailureType, Regime>, FailureCluster> groups;
  for (const auto& c : buffer.cases()) {
    auto& g = groups[{c.failure_type, c.regime}];
    g.type = c.failure_type;
    g.regime = c.regime;
    g.members.push_back(c);
    g.total_difficulty += c.difficulty;
  }
  std::vector<FailureCluster> out;
  for (auto& [key, g] : groups) {
    g.representatives = g.members;
    std::stable_sort(g.representatives.begin(), g.representatives.end(),
                     [](const FailureCase& a, const FailureCase& b) {
                       return a.difficulty > b.difficulty;
                     });
    if (g.representatives.size() > kRepresentatives) g.representatives.resize(kRepresentatives);
    out.push_back(std::move(g));
  }
  auto label = [](const FailureCluster& c) {
    return std::string(to_string(c.type)) + "/" + std::string(to_string(c.regime));
  };
  std::stable_sort(out.begin(), out.end(), [&](const FailureCluster& a, const FailureCluster& b) {
    if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
    if (a.total_difficulty != b.total_difficulty) return a.total_difficulty > b.total_difficulty;
    return label(a) < label(b);
  });
  return out;
}

Proposal propose(const SkillBank& bank, const std::vector<FailureCluster>& clusters, int epoch) {
  Proposal p;
  p.candidate = bank;
  SkillBank working = bank;
  std::vector<SkillChange> all;
  for (std::size_t i = 0; i < clusters.size() && i < kClustersPerCycle; ++i) {
    for (TemplateId step : escalation(clusters[i].type)) {
      std::vector<SkillChange> changes;
      if (!apply_step(step, working, changes, p.changes)) continue;
      working = mutate(working, changes, epoch);
      all.insert(all.end(), changes.begin(), changes.end());
      break;
    }
  }
  if (all.empty()) return p;
  p.candidate = mutate(bank, all, epoch);
  p.identity = false;
  return p;
}

std::vector<double> new_action_bias(const SkillBank& bank, int epoch, int inner_epoch, double b0) {
  std::vector<double> bias(bank.size(), 0.0);
  const double b = b0 * std::ldexp(1.0, -inner_epoch);
  for (std::size_t i = 0; i < bank.size(); ++i)
    if (bank.skills()[i].introduced_epoch == epoch && epoch > 0) bias[i] = b;
  return bias;
}

nlohmann::json to_json(const FailureBuffer& buffer) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : buffer.cases()) {
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& e : c.retrieved) ids.push_back(e.id);
    arr.push_back({{"trace_id", c.trace_id},
                   {"query_id", c.query_id},
                   {"proposal", c.proposal},
                   {"retrieved_ids", ids},
                   {"decisive", c.decisive ? nlohmann::json(*c.decisive) : nlohmann::json(nullptr)},
                   {"feedback", c.feedback},
                   {"failure_type", to_string(c.failure_type)},
                   {"regime", to_string(c.regime)},
                   {"difficulty", c.difficulty}});
  }
  return nlohmann::json{{"capacity", buffer.capacity()}, {"cases", arr}};
}

nlohmann::json to_json(const std::vector<FailureCluster>& clusters) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : clusters) {
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& r : c.representatives) reps.push_back(r.query_id);
    arr.push_back({{"failure_type", to_string(c.type)},
                   {"regime", to_string(c.regime)},
                   {"size", c.members.size()},
                   {"total_difficulty", c.total_difficulty},
                   {"representatives", reps}});
  }
  return arr;
}

}  // namespace pcfmem

#ifndef PCFMEM_SKILL_DESIGNER_HPP_
#define PCFMEM_SKILL_DESIGNER_HPP_

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcfmem/memory_bank.hpp"
#include "pcfmem/physics_env.hpp"
#include "pcfmem/skill_bank.hpp"
#include "pcfmem/trace_types.hpp"

namespace pcfmem {

struct FailureCase {
  std::string trace_id;
  std::string query_id;
  Geometry proposal;
  std::vector<MemoryEntry> retrieved;
  std::optional<EntryId> decisive;
  SimResult feedback;
  TargetSpec target;
  FailureType failure_type = FailureType::kSpuriousMemory;
  Regime regime = Regime::kMid;
  double difficulty = 0.0;  // max(|dD|/tol_d, |dalpha|/tol_alpha)
};

// Normalized miss distance of a result against its target.
double miss_distance(const SimResult& res, const TargetSpec& target);

class FailureBuffer {
 public:
  explicit FailureBuffer(std::size_t capacity = 256) : capacity_(capacity) {}

  // Cases with difficulty < 1 are ignored. When full, the lowest-difficulty
  // case (latest among ties) is evicted if the newcomer is harder.
  void add(FailureCase c);
  const std::vector<FailureCase>& cases() const { return cases_; }
  std::size_t size() const { return cases_.size(); }
  bool empty() const { return cases_.empty(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::vector<FailureCase> cases_;
};

// First matching rule wins: wrong_trend, missing_constraint,
// outdated_knowledge, spurious_memory (also the fallback).
FailureType classify_failure(const std::vector<MemoryEntry>& retrieved,
                             const std::optional<EntryId>& decisive, const Geometry& proposal,
                             double lambda_um, bool tolerance_violated);
FailureType classify_failure(const FailureScenario& s);

struct FailureCluster {
  FailureType type = FailureType::kSpuriousMemory;
  Regime regime = Regime::kMid;
  std::vector<FailureCase> members;
  std::vector<FailureCase> representatives;  // top-2 by difficulty
  double total_difficulty = 0.0;
};

std::vector<FailureCluster> cluster_failures(const FailureBuffer& buffer);

struct Proposal {
  SkillBank candidate;
  std::vector<std::string> changes;  // human-readable log
  bool identity = true;
};

// Catalog-driven proposal for the top-2 clusters. `epoch` stamps new skills.
Proposal propose(const SkillBank& bank, const std::vector<FailureCluster>& clusters, int epoch);

// b0 * 2^-inner_epoch on skills introduced at `epoch`, zero elsewhere.
std::vector<double> new_action_bias(const SkillBank& bank, int epoch, int inner_epoch,
                                    double b0 = 1.0);

nlohmann::json to_json(const FailureBuffer& buffer);
nlohmann::json to_json(const std::vector<FailureCluster>& clusters);

}  // namespace pcfmem

#endif  // PCFMEM_SKILL_DESIGNER_HPP_

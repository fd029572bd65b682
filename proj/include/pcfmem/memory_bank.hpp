#ifndef PCFMEM_MEMORY_BANK_HPP_
#define PCFMEM_MEMORY_BANK_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pcfmem/physics_env.hpp"
#include "pcfmem/text_embed.hpp"

namespace pcfmem {

enum class LambdaBucket { k1310, k1550 };
enum class Regime { kLow, kMid, kHigh };
enum class EntryKind { kParamMap, kTrend, kConstraint, kBoundary, kHotspot, kFrontierPoint };

std::string_view to_string(LambdaBucket b);
std::string_view to_string(Regime r);
std::string_view to_string(EntryKind k);
LambdaBucket bucket_from_string(std::string_view s);
Regime regime_from_string(std::string_view s);
EntryKind kind_from_string(std::string_view s);

LambdaBucket lambda_bucket(double lambda_um);
// d/Lambda thresholds 0.45 / 0.70.
Regime regime_of(double fill);

struct EntryKey {
  Param param = Param::kPitch;
  Metric metric = Metric::kDispersion;
  LambdaBucket bucket = LambdaBucket::k1550;
  Regime regime = Regime::kMid;

  bool operator==(const EntryKey&) const = default;
  // Same param/metric/band, any regime.
  bool same_relation(const EntryKey& o) const {
    return param == o.param && metric == o.metric && bucket == o.bucket;
  }
};

// Operating point an entry's evidence was observed at.
struct Anchor {
  Geometry geometry;
  SimResult result;
  bool operator==(const Anchor&) const = default;
};

using EntryId = std::uint64_t;

struct MemoryEntry {
  EntryId id = 0;
  EntryKey key;
  EntryKind kind = EntryKind::kParamMap;
  std::string statement;
  int direction = 1;
  double slope = 0.0;
  int support_count = 1;
  double confidence = 0.2;
  int created_step = 0;
  bool archived = false;
  std::optional<std::string> archive_reason;
  // Number of spans whose evidence disagreed with `direction`.
  int contradictions = 0;
  std::optional<Anchor> anchor;
  std::optional<std::string> family;

  Embedding embedding;  // embed_text(statement); derived, not serialized

  bool operator==(const MemoryEntry& o) const;
};

// Mutable fields an INSERT creates or an UPDATE swaps in.
struct EntryPayload {
  std::string statement;
  int direction = 1;
  double slope = 0.0;
  int support_count = 1;
  double confidence = 0.2;
  int contradictions = 0;
  std::optional<Anchor> anchor;
  std::optional<std::string> family;
};

enum class EditOp { kInsert, kUpdate, kDelete, kNoop };
std::string_view to_string(EditOp op);
EditOp edit_op_from_string(std::string_view s);

struct MemoryEdit {
  EditOp op = EditOp::kNoop;
  // UPDATE / DELETE address an entry by id, or by key+kind when id is unset.
  std::optional<EntryId> target_id;
  EntryKey key;
  EntryKind kind = EntryKind::kParamMap;
  EntryPayload payload;
  int step = 0;
  // Required for DELETE (kept as archive_reason) and NOOP.
  std::string rationale;
};

enum class EditStatus { kAccepted, kDuplicate, kRejected, kNoop };
std::string_view to_string(EditStatus s);

struct EditOutcome {
  EditStatus status = EditStatus::kRejected;
  std::optional<EntryId> entry_id;
  std::string message;
};

class MemoryBank {
 public:
  const std::vector<MemoryEntry>& entries() const { return entries_; }
  EntryId next_id() const { return next_id_; }

  std::size_t active_count() const;
  std::size_t archived_count() const;
  const MemoryEntry* find(EntryId id) const;
  const MemoryEntry* find_active(const EntryKey& key, EntryKind kind) const;

  // Applies one edit; the bank is unchanged unless the outcome is accepted.
  EditOutcome apply(const MemoryEdit& edit);

  nlohmann::json snapshot() const;
  static MemoryBank load(const nlohmann::json& j);
  static MemoryBank load(std::string_view text);

  bool operator==(const MemoryBank& o) const {
    return next_id_ == o.next_id_ && entries_ == o.entries_;
  }

 private:
  MemoryEntry* find_mut(EntryId id);
  MemoryEntry* resolve(const MemoryEdit& edit);

  std::vector<MemoryEntry> entries_;  // ascending id
  EntryId next_id_ = 1;
};

// Top-k active entries by cosine(query, statement embedding); ties go to the
// lower id.
std::vector<MemoryEntry> retrieve(const MemoryBank& bank, const Embedding& query,
                                  std::size_t k = 5);

std::pair<MemoryBank, std::vector<EditOutcome>> apply_edits(MemoryBank bank,
                                                            const std::vector<MemoryEdit>& edits);

void to_json(nlohmann::json& j, const MemoryEntry& e);
void from_json(const nlohmann::json& j, MemoryEntry& e);
void to_json(nlohmann::json& j, const EntryKey& k);
void from_json(const nlohmann::json& j, EntryKey& k);
void to_json(nlohmann::json& j, const Anchor& a);
void from_json(const nlohmann::json& j, Anchor& a);

}  // namespace pcfmem

#endif  // PCFMEM_MEMORY_BANK_HPP_

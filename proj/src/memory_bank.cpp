#include "pcfmem/memory_bank.hpp"

#include <algorithm>
#include <numeric>

#include "pcfmem/errors.hpp"

namespace pcfmem {

namespace {

template <typename E, std::size_t N>
E enum_from(std::string_view s, const std::pair<E, std::string_view> (&table)[N],
            const char* what) {
  for (const auto& [e, name] : table)
    if (name == s) return e;
  throw ValidationError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string_view enum_name(E e, const std::pair<E, std::string_view> (&table)[N]) {
  for (const auto& [v, name] : table)
    if (v == e) return name;
  return "?";
}

constexpr std::pair<LambdaBucket, std::string_view> kBuckets[] = {
    {LambdaBucket::k1310, "1.31-band"}, {LambdaBucket::k1550, "1.55-band"}};
constexpr std::pair<Regime, std::string_view> kRegimes[] = {
    {Regime::kLow, "low"}, {Regime::kMid, "mid"}, {Regime::kHigh, "high"}};
constexpr std::pair<EntryKind, std::string_view> kKinds[] = {
    {EntryKind::kParamMap, "param_map"},   {EntryKind::kTrend, "trend"},
    {EntryKind::kConstraint, "constraint"}, {EntryKind::kBoundary, "boundary"},
    {EntryKind::kHotspot, "hotspot"},       {EntryKind::kFrontierPoint, "frontier_point"}};
constexpr std::pair<EditOp, std::string_view> kOps[] = {{EditOp::kInsert, "INSERT"},
                                                        {EditOp::kUpdate, "UPDATE"},
                                                        {EditOp::kDelete, "DELETE"},
                                                        {EditOp::kNoop, "NOOP"}};
constexpr std::pair<EditStatus, std::string_view> kStatuses[] = {
    {EditStatus::kAccepted, "accepted"},
    {EditStatus::kDuplicate, "duplicate"},
    {EditStatus::kRejected, "rejected"},
    {EditStatus::kNoop, "noop"}};

void write_payload(MemoryEntry& e, const EntryPayload& p) {
  e.statement = p.statement;
  e.direction = p.direction;
  e.slope = p.slope;
  e.support_count = p.support_count;
  e.confidence = p.confidence;
  e.contradictions = p.contradictions;
  e.anchor = p.anchor;
  if (p.family) e.family = p.family;
  e.embedding = embed_text(e.statement);
}

std::string payload_problem(const EntryPayload& p) {
  if (p.statement.empty()) return "empty statement";
  if (p.direction != 1 && p.direction != -1) return "direction must be +1 or -1";
  if (p.support_count < 1) return "support_count must be >= 1";
  if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) return "confidence outside [0, 1]";
  if (p.contradictions < 0) return "negative contradiction count";
  return {};
}

}  // namespace

std::string_view to_string(LambdaBucket b) { return enum_name(b, kBuckets); }
std::string_view to_string(Regime r) { return enum_name(r, kRegimes); }
std::string_view to_string(EntryKind k) { return enum_name(k, kKinds); }
std::string_view to_string(EditOp op) { return enum_name(op, kOps); }
std::string_view to_string(EditStatus s) { return enum_name(s, kStatuses); }
LambdaBucket bucket_from_string(std::string_view s) { return enum_from(s, kBuckets, "bucket"); }
Regime regime_from_string(std::string_view s) { return enum_from(s, kRegimes, "regime"); }
EntryKind kind_from_string(std::string_view s) { return enum_from(s, kKinds, "entry kind"); }
EditOp edit_op_from_string(std::string_view s) { return enum_from(s, kOps, "edit op"); }

LambdaBucket lambda_bucket(double lambda_um) {
  return lambda_um < 1.43 ? LambdaBucket::k1310 : LambdaBucket::k1550;
}

Regime regime_of(double fill) {
  if (fill < 0.45) return Regime::kLow;
  if (fill < 0.70) return Regime::kMid;
  return Regime::kHigh;
}

bool MemoryEntry::operator==(const MemoryEntry& o) const {
  return id == o.id && key == o.key && kind == o.kind && statement == o.statement &&
         direction == o.direction && slope == o.slope && support_count == o.support_count &&
         confidence == o.confidence && created_step == o.created_step &&
         archived == o.archived && archive_reason == o.archive_reason &&
         contradictions == o.contradictions && anchor == o.anchor && family == o.family;
}

std::size_t MemoryBank::active_count() const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [](const auto& e) { return !e.archived; }));
}

std::size_t MemoryBank::archived_count() const { return entries_.size() - active_count(); }

const MemoryEntry* MemoryBank::find(EntryId id) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                             [](const MemoryEntry& e, EntryId v) { return e.id < v; });
  return (it != entries_.end() && it->id == id) ? &*it : nullptr;
}

MemoryEntry* MemoryBank::find_mut(EntryId id) { return const_cast<MemoryEntry*>(find(id)); }

const MemoryEntry* MemoryBank::find_active(const EntryKey& key, EntryKind kind) const {
  for (const auto& e : entries_)
    if (!e.archived && e.kind == kind && e.key == key) return &e;
  return nullptr;
}

MemoryEntry* MemoryBank::resolve(const MemoryEdit& edit) {
  if (edit.target_id) {
    MemoryEntry* e = find_mut(*edit.target_id);
    return (e && !e->archived) ? e : nullptr;
  }
  return const_cast<MemoryEntry*>(find_active(edit.key, edit.kind));
}

EditOutcome MemoryBank::apply(const MemoryEdit& edit) {
  switch (edit.op) {
    case EditOp::kNoop:
      if (edit.rationale.empty()) return {EditStatus::kRejected, {}, "NOOP without rationale"};
      return {EditStatus::kNoop, {}, edit.rationale};

    case EditOp::kInsert: {
      if (auto problem = payload_problem(edit.payload); !problem.empty())
        return {EditStatus::kRejected, {}, "malformed INSERT: " + problem};
      if (const MemoryEntry* dup = find_active(edit.key, edit.kind))
        return {EditStatus::kDuplicate, dup->id, "active entry with same key and kind"};
      MemoryEntry e;
      e.id = next_id_++;
      e.key = edit.key;
      e.kind = edit.kind;
      e.created_step = edit.step;
      write_payload(e, edit.payload);
      entries_.push_back(std::move(e));
      return {EditStatus::kAccepted, entries_.back().id, "inserted"};
    }

    case EditOp::kUpdate: {
      if (auto problem = payload_problem(edit.payload); !problem.empty())
        return {EditStatus::kRejected, {}, "malformed UPDATE: " + problem};
      MemoryEntry* e = resolve(edit);
      if (!e) return {EditStatus::kRejected, {}, "UPDATE target not found"};
      write_payload(*e, edit.payload);
      return {EditStatus::kAccepted, e->id, "updated"};
    }

    case EditOp::kDelete: {
      if (edit.rationale.empty()) return {EditStatus::kRejected, {}, "DELETE without reason"};
      MemoryEntry* e = resolve(edit);
      if (!e) return {EditStatus::kRejected, {}, "DELETE target not found"};
      e->archived = true;
      e->archive_reason = edit.rationale;
      return {EditStatus::kAccepted, e->id, "archived"};
    }
  }
  return {EditStatus::kRejected, {}, "unknown op"};
}

std::vector<MemoryEntry> retrieve(const MemoryBank& bank, const Embedding& query,
                                  std::size_t k) {
  if (k == 0) throw ValidationError("retrieve: k must be >= 1");
  std::vector<std::pair<double, const MemoryEntry*>> scored;
  for (const auto& e : bank.entries())
    if (!e.archived) scored.emplace_back(cosine(query, e.embedding), &e);
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->id < b.second->id;
  });
  std::vector<MemoryEntry> out;
  for (std::size_t i = 0; i < scored.size() && i < k; ++i) out.push_back(*scored[i].second);
  return out;
}

std::pair<MemoryBank, std::vector<EditOutcome>> apply_edits(MemoryBank bank,
                                                            const std::vector<MemoryEdit>& edits) {
  std::vector<EditOutcome> outcomes;
  outcomes.reserve(edits.size());
  for (const auto& e : edits) outcomes.push_back(bank.apply(e));
  return {std::move(bank), std::move(outcomes)};
}

void to_json(nlohmann::json& j, const EntryKey& k) {
  j = nlohmann::json{{"param", to_string(k.param)},
                     {"metric", to_string(k.metric)},
                     {"lambda_bucket", to_string(k.bucket)},
                     {"regime", to_string(k.regime)}};
}

void from_json(const nlohmann::json& j, EntryKey& k) {
  k.param = param_from_string(j.at("param").get<std::string>());
  k.metric = metric_from_string(j.at("metric").get<std::string>());
  k.bucket = bucket_from_string(j.at("lambda_bucket").get<std::string>());
  k.regime = regime_from_string(j.at("regime").get<std::string>());
}

void to_json(nlohmann::json& j, const Anchor& a) {
  j = nlohmann::json{{"geometry", a.geometry}, {"result", a.result}};
}

void from_json(const nlohmann::json& j, Anchor& a) {
  j.at("geometry").get_to(a.geometry);
  j.at("result").get_to(a.result);
}

void to_json(nlohmann::json& j, const MemoryEntry& e) {
  j = nlohmann::json{{"id", e.id},
                     {"key", e.key},
                     {"kind", to_string(e.kind)},
                     {"statement", e.statement},
                     {"direction", e.direction},
                     {"slope", e.slope},
                     {"support_count", e.support_count},
                     {"confidence", e.confidence},
                     {"created_step", e.created_step},
                     {"archived", e.archived},
                     {"archive_reason", e.archive_reason ? nlohmann::json(*e.archive_reason)
                                                         : nlohmann::json(nullptr)},
                     {"contradictions", e.contradictions},
                     {"anchor", e.anchor ? nlohmann::json(*e.anchor) : nlohmann::json(nullptr)},
                     {"family", e.family ? nlohmann::json(*e.family) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, MemoryEntry& e) {
  j.at("id").get_to(e.id);
  j.at("key").get_to(e.key);
  e.kind = kind_from_string(j.at("kind").get<std::string>());
  j.at("statement").get_to(e.statement);
  j.at("direction").get_to(e.direction);
  j.at("slope").get_to(e.slope);
  j.at("support_count").get_to(e.support_count);
  j.at("confidence").get_to(e.confidence);
  j.at("created_step").get_to(e.created_step);
  j.at("archived").get_to(e.archived);
  const auto& reason = j.at("archive_reason");
  e.archive_reason = reason.is_null() ? std::nullopt
                                      : std::optional<std::string>(reason.get<std::string>());
  j.at("contradictions").get_to(e.contradictions);
  const auto& anchor = j.at("anchor");
  e.anchor = anchor.is_null() ? std::nullopt : std::optional<Anchor>(anchor.get<Anchor>());
  const auto& family = j.at("family");
  e.family = family.is_null() ? std::nullopt
                              : std::optional<std::string>(family.get<std::string>());
  e.embedding = embed_text(e.statement);
}

nlohmann::json MemoryBank::snapshot() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : entries_) entries.push_back(e);
  return nlohmann::json{{"next_id", next_id_}, {"entries", std::move(entries)}};
}

MemoryBank MemoryBank::load(const nlohmann::json& j) {
  MemoryBank bank;
  try {
    j.at("next_id").get_to(bank.next_id_);
    for (const auto& item : j.at("entries")) bank.entries_.push_back(item.get<MemoryEntry>());
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("memory bank: ") + ex.what(), 0);
  }
  std::sort(bank.entries_.begin(), bank.entries_.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < bank.entries_.size(); ++i)
    if (bank.entries_[i].id == bank.entries_[i - 1].id)
      throw ParseError("memory bank: duplicate id " + std::to_string(bank.entries_[i].id), i);
  if (!bank.entries_.empty() && bank.entries_.back().id >= bank.next_id_)
    throw ParseError("memory bank: next_id not above largest id", 0);
  return bank;
}

MemoryBank MemoryBank::load(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& ex) {
    throw ParseError(std::string("memory bank: ") + ex.what(), ex.byte);
  }
  return load(j);
}

}  // namespace pcfmem

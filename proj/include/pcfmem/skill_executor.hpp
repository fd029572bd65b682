#ifndef PCFMEM_SKILL_EXECUTOR_HPP_
#define PCFMEM_SKILL_EXECUTOR_HPP_

#include <string_view>
#include <vector>

#include "pcfmem/memory_bank.hpp"
#include "pcfmem/skill_bank.hpp"
#include "pcfmem/trace_types.hpp"

namespace pcfmem {

// Scale used to express an n_eff change in "tolerance units"; the target
// spec carries no n_eff tolerance.
inline constexpr double kNeffChangeScale = 1.0e-3;

struct SpanContext {
  const Span* span = nullptr;
  std::vector<MemoryEntry> retrieved;
  std::vector<Skill> selected;
  // Trace memory before this span. Skills run against a private copy, so a
  // later skill sees the entries an earlier one inserted or archived.
  const MemoryBank* bank = nullptr;
  // Trace target; supplies tolerances and the boundary/frontier reference.
  TargetSpec target;
};

enum class EventCategory { kAccepted, kDuplicate, kRejected, kCorrectSkip, kIncorrectSkip };
std::string_view to_string(EventCategory c);
double reward_of(EventCategory c);

struct ProcessEvent {
  int edit_index = 0;
  EventCategory category = EventCategory::kAccepted;
  double reward_delta = 0.0;
};

struct ExecutionResult {
  std::vector<MemoryEdit> edits;
  std::vector<ProcessEvent> events;
};

// Per-metric evidence a span carries.
struct MetricEvidence {
  Metric metric = Metric::kDispersion;
  EntryKey key;
  double delta = 0.0;       // after - before
  double slope = 0.0;       // delta / d(param)
  int direction = 0;        // sign(slope), 0 when the metric did not move
  double normalized = 0.0;  // |delta| in tolerance units
};

std::vector<MetricEvidence> span_evidence(const Span& span, const TargetSpec& target);

// Largest tolerance-normalized property change of the span.
double max_normalized_change(const Span& span, const TargetSpec& target);

// Runs the selected skills in order. Throws ConfigError for templates the
// executor has no rule for. Never touches the physics environment.
ExecutionResult execute(const SpanContext& ctx);

// Sum of event rewards clamped to [-0.2, 0.2].
double process_reward(const std::vector<ProcessEvent>& events);

std::string render_statement(EntryKind kind, const EntryKey& key, int direction, double slope,
                             const Anchor& anchor, int support);

}  // namespace pcfmem

#endif  // PCFMEM_SKILL_EXECUTOR_HPP_

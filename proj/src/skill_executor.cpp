#include "pcfmem/skill_executor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>

#include "pcfmem/errors.hpp"

namespace pcfmem {

namespace {

constexpr double kAcceptedReward = 0.05;
constexpr double kSkipReward = 0.02;
constexpr double kProcessClamp = 0.2;

double param_scale(Param p) {
  switch (p) {
    case Param::kPitch: return 0.1;
    case Param::kHoleD: return 0.05;
    case Param::kRings: return 1.0;
  }
  return 1.0;
}

double tolerance_of(Metric m, const TargetSpec& t) {
  switch (m) {
    case Metric::kDispersion: return t.tol_d;
    case Metric::kLoss: return t.tol_alpha;
    case Metric::kNeff: return kNeffChangeScale;
  }
  return 1.0;
}

std::string_view unit_of(Metric m) {
  switch (m) {
    case Metric::kDispersion: return "ps/(nm km)";
    case Metric::kLoss: return "dB/km";
    case Metric::kNeff: return "";
  }
  return "";
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string describe_point(const Anchor& a) {
  return "at pitch " + fmt("%.3f", a.geometry.pitch_um) + " hole_d " +
         fmt("%.3f", a.geometry.hole_d_um) + " rings " + std::to_string(a.geometry.n_rings) +
         " dispersion " + fmt("%.2f", a.result.dispersion_ps_nm_km) + " loss " +
         fmt("%.3g", a.result.loss_db_km) + " wavelength " + fmt("%.3f", a.result.lambda_um);
}

Anchor anchor_after(const Span& span) { return {span.geometry_after(), span.sim_after}; }

bool is_trend_like(EntryKind k) { return k == EntryKind::kParamMap || k == EntryKind::kTrend; }

// Mutable view of the trace memory while one span's skills run.
class Workspace {
 public:
  explicit Workspace(const SpanContext& ctx) : ctx_(ctx), bank_(*ctx.bank) {
    for (const auto& e : ctx.retrieved) view_.push_back(e.id);
  }

  // Current state of the entries this span may touch: the retrieved set
  // plus anything inserted by earlier skills in the same call.
  std::vector<MemoryEntry> view() const {
    std::vector<MemoryEntry> out;
    for (EntryId id : view_)
      if (const MemoryEntry* e = bank_.find(id); e && !e->archived) out.push_back(*e);
    return out;
  }

  const MemoryBank& bank() const { return bank_; }

  void emit(MemoryEdit edit, ExecutionResult& out, std::optional<bool> skip_correct = {}) {
    edit.step = ctx_.span->index;
    const EditOutcome outcome = bank_.apply(edit);
    if (outcome.status == EditStatus::kAccepted && edit.op == EditOp::kInsert && outcome.entry_id)
      view_.push_back(*outcome.entry_id);

    ProcessEvent ev;
    ev.edit_index = static_cast<int>(out.edits.size());
    if (skip_correct) {
      ev.category = *skip_correct ? EventCategory::kCorrectSkip : EventCategory::kIncorrectSkip;
    } else {
      switch (outcome.status) {
        case EditStatus::kAccepted: ev.category = EventCategory::kAccepted; break;
        case EditStatus::kDuplicate: ev.category = EventCategory::kDuplicate; break;
        case EditStatus::kRejected:
        case EditStatus::kNoop: ev.category = EventCategory::kRejected; break;
      }
    }
    ev.reward_delta = reward_of(ev.category);
    out.events.push_back(ev);
    out.edits.push_back(std::move(edit));
  }

 private:
  const SpanContext& ctx_;
  MemoryBank bank_;
  std::vector<EntryId> view_;
};

MemoryEdit make_insert(EntryKind kind, const EntryKey& key, int direction, double slope,
                       const Anchor& anchor, std::string statement) {
  MemoryEdit e;
  e.op = EditOp::kInsert;
  e.key = key;
  e.kind = kind;
  e.payload.statement = std::move(statement);
  e.payload.direction = direction;
  e.payload.slope = slope;
  e.payload.support_count = 1;
  e.payload.confidence = 0.2;
  e.payload.anchor = anchor;
  e.rationale = "new evidence";
  return e;
}

EntryPayload payload_of(const MemoryEntry& e) {
  EntryPayload p;
  p.statement = e.statement;
  p.direction = e.direction;
  p.slope = e.slope;
  p.support_count = e.support_count;
  p.confidence = e.confidence;
  p.contradictions = e.contradictions;
  p.anchor = e.anchor;
  p.family = e.family;
  return p;
}

const MetricEvidence* evidence_for(const std::vector<MetricEvidence>& ev, const EntryKey& key) {
  for (const auto& m : ev)
    if (m.key.same_relation(key) && m.direction != 0) return &m;
  return nullptr;
}

void run_insert(const Skill& skill, const SpanContext& ctx, const std::vector<MetricEvidence>& ev,
                Workspace& ws, ExecutionResult& out) {
  const double theta = skill.param("theta_sig");
  const Anchor anchor = anchor_after(*ctx.span);
  const bool scoped = skill.template_id == TemplateId::kWavelengthScopedInsert;
  for (const auto& m : ev) {
    if (m.direction == 0 || m.normalized < theta) continue;
    std::string statement =
        render_statement(EntryKind::kParamMap, m.key, m.direction, m.slope, anchor, 1);
    if (scoped) statement += " scoped to wavelength " + fmt("%.3f", ctx.target.lambda_um) + " um only";
    ws.emit(make_insert(EntryKind::kParamMap, m.key, m.direction, m.slope, anchor,
                        std::move(statement)),
            out);
  }
}

void run_update(const Skill& skill, const SpanContext& ctx, const std::vector<MetricEvidence>& ev,
                Workspace& ws, ExecutionResult& out) {
  const double saturation = skill.param("support_saturation");
  const Anchor anchor = anchor_after(*ctx.span);
  for (const auto& entry : ws.view()) {
    if (!is_trend_like(entry.kind)) continue;
    const MetricEvidence* m = evidence_for(ev, entry.key);
    if (!m) continue;
    EntryPayload p = payload_of(entry);
    if (m->direction == entry.direction) {
      const int support = entry.support_count + 1;
      const double mean = (entry.slope * entry.support_count + m->slope) / support;
      p.support_count = support;
      p.slope = mean;
      p.confidence = std::min(1.0, support / saturation);
      if (skill.template_id == TemplateId::kConfidenceCalibratedUpdate) {
        const double spread = std::abs(m->slope - entry.slope) / std::max(std::abs(entry.slope), 1e-12);
        p.confidence *= 1.0 - 0.5 * std::min(1.0, spread);
      }
      p.anchor = anchor;
      p.statement = render_statement(entry.kind, entry.key, entry.direction, mean, anchor, support);
    } else if (skill.template_id == TemplateId::kRegimeAwareUpdate &&
               entry.key.regime != m->key.regime) {
      std::string statement =
          render_statement(EntryKind::kTrend, m->key, m->direction, m->slope, anchor, 1);
      MemoryEdit split = make_insert(EntryKind::kTrend, m->key, m->direction, m->slope, anchor,
                                     std::move(statement));
      split.rationale = "regime split from entry " + std::to_string(entry.id);
      ws.emit(std::move(split), out);
      continue;
    } else {
      p.confidence = entry.confidence / 2.0;
      p.contradictions = entry.contradictions + 1;
    }
    MemoryEdit e;
    e.op = EditOp::kUpdate;
    e.target_id = entry.id;
    e.key = entry.key;
    e.kind = entry.kind;
    e.payload = std::move(p);
    e.rationale = "span " + std::to_string(ctx.span->index) + " evidence";
    ws.emit(std::move(e), out);
  }
}

void run_delete(const Skill& skill, const SpanContext& ctx, const std::vector<MetricEvidence>& ev,
                Workspace& ws, ExecutionResult& out) {
  const double theta = skill.param("theta_del");
  for (const auto& entry : ws.view()) {
    bool archive = false;
    std::string reason;
    if (theta <= 0.0) {
      archive = true;
      reason = "unconditional delete";
    } else {
      const MetricEvidence* m = evidence_for(ev, entry.key);
      if (!m || (!is_trend_like(entry.kind) && entry.kind != EntryKind::kHotspot)) continue;
      if (m->direction == entry.direction) continue;
      if (skill.template_id == TemplateId::kCrossVerifiedDelete &&
          ctx.span->edit.param != entry.key.param)
        continue;
      const int total = entry.contradictions + 1;
      if (total < theta) continue;
      archive = true;
      reason = "direction " + std::to_string(entry.direction) + " contradicted " +
               std::to_string(total) + "x; span " + std::to_string(ctx.span->index) +
               " shows " + std::string(to_string(entry.key.metric)) +
               (m->direction > 0 ? " up" : " down");
    }
    if (!archive) continue;
    if (skill.template_id == TemplateId::kRollbackSafeDelete)
      reason += "; rollback: direction=" + std::to_string(entry.direction) +
                " slope=" + fmt("%.6g", entry.slope) +
                " support=" + std::to_string(entry.support_count);
    MemoryEdit e;
    e.op = EditOp::kDelete;
    e.target_id = entry.id;
    e.key = entry.key;
    e.kind = entry.kind;
    e.rationale = std::move(reason);
    ws.emit(std::move(e), out);
  }
}

void run_skip(const Skill& skill, const SpanContext& ctx, Workspace& ws, ExecutionResult& out) {
  const double theta = skill.param("theta_noise");
  const double change = max_normalized_change(*ctx.span, ctx.target);
  MemoryEdit e;
  e.op = EditOp::kNoop;
  e.rationale = "largest property change " + fmt("%.3g", change) + " tolerance units";
  ws.emit(std::move(e), out, change < theta);
}

void run_boundary(const SpanContext& ctx, const std::vector<MetricEvidence>& ev, Workspace& ws,
                  ExecutionResult& out) {
  const Span& span = *ctx.span;
  const Anchor anchor = anchor_after(span);
  const double d_err = span.sim_after.dispersion_ps_nm_km - ctx.target.d_target;
  const double a_err = span.sim_after.loss_db_km - ctx.target.alpha_target;
  for (Metric m : {Metric::kDispersion, Metric::kLoss}) {
    const double err = m == Metric::kDispersion ? d_err : a_err;
    const double tol = tolerance_of(m, ctx.target);
    if (std::abs(err) < tol) continue;
    EntryKey key{span.edit.param, m, lambda_bucket(ctx.target.lambda_um),
                 regime_of(span.geometry_after().fill())};
    double slope = 0.0;
    for (const auto& e : ev)
      if (e.metric == m) slope = e.slope;
    const int dir = err > 0 ? 1 : -1;
    std::string statement = "boundary: " + std::string(to_string(m)) +
                            (dir > 0 ? " above" : " below") + " target by " +
                            fmt("%.3g", std::abs(err)) + " " + std::string(unit_of(m)) + " when " +
                            std::string(to_string(span.edit.param)) + " moved " +
                            fmt("%.4g", span.edit.old_value) + " to " +
                            fmt("%.4g", span.edit.new_value) + " " + describe_point(anchor);
    MemoryEdit e = make_insert(EntryKind::kBoundary, key, dir, slope, anchor, std::move(statement));
    e.rationale = "tolerance violated";
    ws.emit(std::move(e), out);
  }
}

void run_hotspot(const Skill& skill, const SpanContext& ctx, const std::vector<MetricEvidence>& ev,
                 Workspace& ws, ExecutionResult& out) {
  const double theta = skill.param("theta_hot");
  const Span& span = *ctx.span;
  const double dp = std::abs(span.edit.new_value - span.edit.old_value) / param_scale(span.edit.param);
  if (dp <= 0.0) return;
  const Anchor anchor = anchor_after(span);
  for (const auto& m : ev) {
    if (m.direction == 0) continue;
    const double sensitivity = m.normalized / dp;
    if (sensitivity < theta) continue;
    std::string statement = "hotspot: " + std::string(to_string(m.metric)) + " sensitivity " +
                            fmt("%.3g", sensitivity) + " tolerances per step of " +
                            std::string(to_string(span.edit.param)) + " in " +
                            std::string(to_string(m.key.regime)) + " regime " +
                            describe_point(anchor);
    ws.emit(make_insert(EntryKind::kHotspot, m.key, m.direction, m.slope, anchor,
                        std::move(statement)),
            out);
  }
}

void run_frontier(const SpanContext& ctx, Workspace& ws, ExecutionResult& out) {
  const Span& span = *ctx.span;
  const Anchor anchor = anchor_after(span);
  auto errors = [&](const SimResult& r) {
    return std::pair{std::abs(r.dispersion_ps_nm_km - ctx.target.d_target) / ctx.target.tol_d,
                     std::abs(r.loss_db_km - ctx.target.alpha_target) / ctx.target.tol_alpha};
  };
  const auto [ed, ea] = errors(span.sim_after);
  auto dominates = [](std::pair<double, double> a, std::pair<double, double> b) {
    return a.first <= b.first && a.second <= b.second && (a.first < b.first || a.second < b.second);
  };
  std::vector<EntryId> dominated;
  for (const auto& e : ws.bank().entries()) {
    if (e.archived || e.kind != EntryKind::kFrontierPoint || !e.anchor) continue;
    const auto other = errors(e.anchor->result);
    if (dominates(other, {ed, ea}) || other == std::pair{ed, ea}) return;
    if (dominates({ed, ea}, other)) dominated.push_back(e.id);
  }
  for (EntryId id : dominated) {
    MemoryEdit del;
    del.op = EditOp::kDelete;
    del.target_id = id;
    del.kind = EntryKind::kFrontierPoint;
    del.rationale = "dominated by span " + std::to_string(span.index) + " frontier point";
    ws.emit(std::move(del), out);
  }
  EntryKey key{span.edit.param, ed >= ea ? Metric::kDispersion : Metric::kLoss,
               lambda_bucket(ctx.target.lambda_um), regime_of(span.geometry_after().fill())};
  std::string statement = "frontier point: dispersion error " + fmt("%.3g", ed) +
                          " loss error " + fmt("%.3g", ea) + " tolerances " +
                          describe_point(anchor);
  MemoryEdit e = make_insert(EntryKind::kFrontierPoint, key, 1, 0.0, anchor, std::move(statement));
  e.rationale = "non dominated design point";
  ws.emit(std::move(e), out);
}

}  // namespace

std::string_view to_string(EventCategory c) {
  switch (c) {
    case EventCategory::kAccepted: return "accepted";
    case EventCategory::kDuplicate: return "duplicate";
    case EventCategory::kRejected: return "rejected";
    case EventCategory::kCorrectSkip: return "correct_skip";
    case EventCategory::kIncorrectSkip: return "incorrect_skip";
  }
  return "?";
}

double reward_of(EventCategory c) {
  switch (c) {
    case EventCategory::kAccepted: return kAcceptedReward;
    case EventCategory::kDuplicate:
    case EventCategory::kRejected: return -kAcceptedReward;
    case EventCategory::kCorrectSkip: return kSkipReward;
    case EventCategory::kIncorrectSkip: return -kSkipReward;
  }
  return 0.0;
}

std::string render_statement(EntryKind kind, const EntryKey& key, int direction, double slope,
                             const Anchor& anchor, int support) {
  return std::string(to_string(kind)) + ": " + std::string(to_string(key.param)) + " up -> " +
         std::string(to_string(key.metric)) + (direction > 0 ? " up" : " down") + ", slope " +
         fmt("%.4g", slope) + " " + std::string(unit_of(key.metric)) + " per unit " +
         std::string(to_string(key.param)) + ", " + std::string(to_string(key.regime)) +
         " regime, " + std::string(to_string(key.bucket)) + ", support " +
         std::to_string(support) + ", " + describe_point(anchor);
}

std::vector<MetricEvidence> span_evidence(const Span& span, const TargetSpec& target) {
  std::vector<MetricEvidence> out;
  const double dp = span.edit.new_value - span.edit.old_value;
  const EntryKey base{span.edit.param, Metric::kDispersion, lambda_bucket(span.sim_after.lambda_um),
                      regime_of(span.geometry_after().fill())};
  for (Metric m : kAllMetrics) {
    MetricEvidence e;
    e.metric = m;
    e.key = base;
    e.key.metric = m;
    e.delta = metric_value(span.sim_after, m) - metric_value(span.sim_before, m);
    e.slope = dp != 0.0 ? e.delta / dp : 0.0;
    e.direction = (e.delta == 0.0 || dp == 0.0) ? 0 : (e.slope > 0 ? 1 : -1);
    e.normalized = std::abs(e.delta) / tolerance_of(m, target);
    out.push_back(e);
  }
  return out;
}

double max_normalized_change(const Span& span, const TargetSpec& target) {
  const double d = std::abs(span.sim_after.dispersion_ps_nm_km - span.sim_before.dispersion_ps_nm_km) /
                   target.tol_d;
  const double a = std::abs(span.sim_after.loss_db_km - span.sim_before.loss_db_km) / target.tol_alpha;
  return std::max(d, a);
}

ExecutionResult execute(const SpanContext& ctx) {
  if (!ctx.span || !ctx.bank) throw ValidationError("execute: missing span or bank");
  const auto evidence = span_evidence(*ctx.span, ctx.target);
  Workspace ws(ctx);
  ExecutionResult out;
  for (const auto& skill : ctx.selected) {
    switch (skill.template_id) {
      case TemplateId::kInsertTopology:
      case TemplateId::kEvidenceGatedInsert:
      case TemplateId::kWavelengthScopedInsert:
        run_insert(skill, ctx, evidence, ws, out);
        break;
      case TemplateId::kUpdateTrend:
      case TemplateId::kRegimeAwareUpdate:
      case TemplateId::kConfidenceCalibratedUpdate:
        run_update(skill, ctx, evidence, ws, out);
        break;
      case TemplateId::kDeleteInvalid:
      case TemplateId::kCrossVerifiedDelete:
      case TemplateId::kRollbackSafeDelete:
        run_delete(skill, ctx, evidence, ws, out);
        break;
      case TemplateId::kSkip:
      case TemplateId::kNoiseThresholdSkip:
        run_skip(skill, ctx, ws, out);
        break;
      case TemplateId::kFailureBoundaryInsert:
        run_boundary(ctx, evidence, ws, out);
        break;
      case TemplateId::kSensitivityHotspotInsert:
        run_hotspot(skill, ctx, evidence, ws, out);
        break;
      case TemplateId::kTradeoffFrontierUpdate:
        run_frontier(ctx, ws, out);
        break;
      default:
        throw ConfigError("execute: skill " + skill.name + " references an unknown template");
    }
  }
  return out;
}

double process_reward(const std::vector<ProcessEvent>& events) {
  double sum = 0.0;
  for (const auto& e : events) sum += e.reward_delta;
  return std::clamp(sum, -kProcessClamp, kProcessClamp);
}

}  // namespace pcfmem

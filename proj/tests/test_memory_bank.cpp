#include <doctest.h>

#include <set>

#include "pcfmem/errors.hpp"
#include "pcfmem/memory_bank.hpp"
#include "pcfmem/rng.hpp"

using namespace pcfmem;

namespace {

EntryKey key(Param p, Metric m, Regime r = Regime::kMid) { return {p, m, LambdaBucket::k1550, r}; }

MemoryEdit insert(const EntryKey& k, std::string statement, int dir = 1) {
  MemoryEdit e;
  e.op = EditOp::kInsert;
  e.key = k;
  e.kind = EntryKind::kParamMap;
  e.payload.statement = std::move(statement);
  e.payload.direction = dir;
  e.payload.slope = 2.0 * dir;
  return e;
}

MemoryEdit del(EntryId id, std::string reason = "contradicted") {
  MemoryEdit e;
  e.op = EditOp::kDelete;
  e.target_id = id;
  e.rationale = std::move(reason);
  return e;
}

}  // namespace

TEST_CASE("bucket and regime thresholds") {
  CHECK(lambda_bucket(1.31) == LambdaBucket::k1310);
  CHECK(lambda_bucket(1.55) == LambdaBucket::k1550);
  CHECK(regime_of(0.449) == Regime::kLow);
  CHECK(regime_of(0.45) == Regime::kMid);
  CHECK(regime_of(0.699) == Regime::kMid);
  CHECK(regime_of(0.70) == Regime::kHigh);
  CHECK(bucket_from_string(to_string(LambdaBucket::k1310)) == LambdaBucket::k1310);
  CHECK_THROWS_AS(kind_from_string("nope"), ValidationError);
}

TEST_CASE("retrieve on small banks") {
  MemoryBank b;
  CHECK(retrieve(b, embed_text("pitch"), 5).empty());
  b.apply(insert(key(Param::kPitch, Metric::kDispersion), "pitch raises dispersion"));
  b.apply(insert(key(Param::kHoleD, Metric::kLoss), "hole diameter lowers loss", -1));
  b.apply(insert(key(Param::kRings, Metric::kLoss), "rings lower loss", -1));
  CHECK(retrieve(b, embed_text("pitch"), 5).size() == 3);
  CHECK(retrieve(b, embed_text("pitch dispersion"), 1).front().id == 1);
  CHECK_THROWS_AS(retrieve(b, embed_text("pitch"), 0), ValidationError);
}

TEST_CASE("retrieve breaks ties by ascending id") {
  MemoryBank b;
  // Same statement under two keys: identical cosine for any query.
  b.apply(insert(key(Param::kRings, Metric::kLoss), "same words"));
  b.apply(insert(key(Param::kPitch, Metric::kLoss), "same words"));
  const auto r = retrieve(b, embed_text("words"), 2);
  REQUIRE(r.size() == 2);
  CHECK(r[0].id == 1);
  CHECK(r[1].id == 2);
  const auto none = retrieve(b, embed_text(""), 2);
  CHECK(none[0].id == 1);
}

TEST_CASE("apply_edits semantics") {
  const EntryKey k = key(Param::kHoleD, Metric::kDispersion);
  auto [b, out] = apply_edits(MemoryBank{}, {insert(k, "hole_d up dispersion up"),
                                             insert(k, "hole_d up dispersion up")});
  CHECK(out[0].status == EditStatus::kAccepted);
  CHECK(out[1].status == EditStatus::kDuplicate);
  CHECK(b.active_count() == 1);

  auto [b2, out2] = apply_edits(b, {del(1, "wrong sign")});
  CHECK(out2[0].status == EditStatus::kAccepted);
  CHECK(b2.active_count() == 0);
  CHECK(b2.archived_count() == 1);
  CHECK(b2.find(1)->archive_reason == std::optional<std::string>("wrong sign"));
  CHECK(retrieve(b2, embed_text("hole"), 5).empty());
  // The original is untouched.
  CHECK(b.active_count() == 1);

  MemoryEdit upd;
  upd.op = EditOp::kUpdate;
  upd.key = k;
  upd.kind = EntryKind::kParamMap;
  upd.payload.statement = "flipped";
  upd.payload.direction = -1;
  upd.payload.support_count = 3;
  auto [b3, out3] = apply_edits(b, {upd});
  CHECK(out3[0].status == EditStatus::kAccepted);
  CHECK(b3.find(1)->direction == -1);
  CHECK(b3.find(1)->support_count == 3);
  CHECK(b3.find(1)->statement == "flipped");
  CHECK(b3.find(1)->embedding == embed_text("flipped"));

  auto [b4, out4] = apply_edits(b2, {upd});
  CHECK(out4[0].status == EditStatus::kRejected);
  CHECK(b4 == b2);

  MemoryEdit noop;
  noop.op = EditOp::kNoop;
  CHECK(MemoryBank{}.apply(noop).status == EditStatus::kRejected);
  noop.rationale = "nothing changed";
  MemoryBank empty;
  CHECK(empty.apply(noop).status == EditStatus::kNoop);
  CHECK(empty == MemoryBank{});

  CHECK(MemoryBank{}.apply(del(1, "")).status == EditStatus::kRejected);
  MemoryEdit bad = insert(k, "");
  CHECK(MemoryBank{}.apply(bad).status == EditStatus::kRejected);
  bad = insert(k, "x", 0);
  CHECK(MemoryBank{}.apply(bad).status == EditStatus::kRejected);
}

TEST_CASE("later edits observe earlier effects") {
  const EntryKey k = key(Param::kPitch, Metric::kLoss);
  auto [b, out] = apply_edits(MemoryBank{}, {insert(k, "a"), del(1), insert(k, "b")});
  CHECK(out[2].status == EditStatus::kAccepted);
  CHECK(b.entries().size() == 2);
  CHECK(b.active_count() == 1);
  CHECK(b.find(2)->statement == "b");
}

TEST_CASE("random edit sequences keep key uniqueness and audit counts") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    MemoryBank b;
    int accepted_deletes = 0;
    for (int step = 0; step < 60; ++step) {
      const EntryKey k = key(kAllParams[rng.uniform_int(0, 2)], kAllMetrics[rng.uniform_int(0, 2)],
                             static_cast<Regime>(rng.uniform_int(0, 2)));
      MemoryEdit e;
      switch (rng.uniform_int(0, 2)) {
        case 0: e = insert(k, "entry " + std::to_string(step)); break;
        case 1:
          e = insert(k, "upd " + std::to_string(step));
          e.op = EditOp::kUpdate;
          break;
        default: e = del(static_cast<EntryId>(rng.uniform_int(1, 20)));
      }
      const auto outcome = b.apply(e);
      accepted_deletes += e.op == EditOp::kDelete && outcome.status == EditStatus::kAccepted;
    }
    std::set<std::pair<int, int>> seen;
    std::set<std::tuple<int, int, int, int>> keys;
    for (const auto& e : b.entries()) {
      if (e.archived) {
        CHECK(e.archive_reason.has_value());
        continue;
      }
      const auto t = std::tuple{int(e.key.param), int(e.key.metric), int(e.key.regime), int(e.kind)};
      CHECK(keys.insert(t).second);
    }
    CHECK(b.archived_count() == static_cast<std::size_t>(accepted_deletes));
  }
}

TEST_CASE("snapshot round trip") {
  CHECK(MemoryBank{}.snapshot().dump() == R"({"entries":[],"next_id":1})");
  const EntryKey k = key(Param::kPitch, Metric::kDispersion);
  MemoryEdit withanchor = insert(key(Param::kRings, Metric::kLoss), "anchored", -1);
  withanchor.payload.anchor = Anchor{Geometry{2.0, 1.0, 6}, SimResult{1.55, 1.43, 0.1, 20.0}};
  withanchor.payload.family = "kagome";
  auto [b, out] = apply_edits(MemoryBank{}, {insert(k, "one"), withanchor, del(1)});
  const MemoryBank back = MemoryBank::load(std::string_view(b.snapshot().dump()));
  CHECK(back == b);
  CHECK(back.find(2)->embedding == b.find(2)->embedding);
  CHECK(back.snapshot() == b.snapshot());
  // Entry order in the input does not matter.
  nlohmann::json shuffled = b.snapshot();
  std::swap(shuffled["entries"][0], shuffled["entries"][1]);
  CHECK(MemoryBank::load(shuffled) == b);

  CHECK_THROWS_AS(MemoryBank::load(std::string_view("{\"next_id\": 1, ")), ParseError);
  CHECK_THROWS_AS(MemoryBank::load(std::string_view("{\"entries\": []}")), ParseError);
}

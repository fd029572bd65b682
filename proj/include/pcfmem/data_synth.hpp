#ifndef PCFMEM_DATA_SYNTH_HPP_
#define PCFMEM_DATA_SYNTH_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pcfmem/physics_env.hpp"
#include "pcfmem/rng.hpp"
#include "pcfmem/trace_types.hpp"

namespace pcfmem {

// Geometry prior of one fiber family: a box in (pitch, d/pitch, rings).
struct FamilyPrior {
  std::string_view name;
  double pitch_lo, pitch_hi;
  double fill_lo, fill_hi;
  int rings_lo, rings_hi;
};

inline constexpr std::size_t kNumFamilies = 8;
const std::array<FamilyPrior, kNumFamilies>& family_priors();
const FamilyPrior& family_prior(std::string_view name);

struct GeneratorConfig {
  int max_steps = 12;
  int min_spans = 2;
  double random_move_prob = 0.2;
  // Start perturbation: relative for pitch, absolute for d/pitch.
  double pitch_jitter_lo = 0.20, pitch_jitter_hi = 0.50;
  double fill_jitter_lo = 0.10, fill_jitter_hi = 0.25;
  int rings_jitter = 2;
  double min_start_miss = 20.0;
};

// `counter` is the generation-phase counter; it never feeds evaluation
// accounting.
Trace gen_trace(Rng& rng, std::size_t family_index, const std::string& id, CallCounter& counter,
                const GeneratorConfig& cfg = {});

// Three queries per trace: parameter_adjustment, trend_prediction and one of
// design_reasoning / failure_analysis.
std::vector<Query> gen_queries(const Trace& trace, Rng& rng);

// Span text for an edit and its outcome.
std::string render_span_text(const SpanEdit& edit, const SimResult& before, const SimResult& after);

// The seven design-concept keys.
const std::vector<std::string>& concept_keys();

struct Corpus {
  std::vector<Trace> traces;
  std::vector<Query> queries;
};

// Trace i belongs to family i mod 8 and draws from its own derived stream.
Corpus gen_corpus(std::uint64_t seed, std::size_t n_traces, CallCounter& counter,
                  int workers = 1, const GeneratorConfig& cfg = {});

struct Splits {
  std::vector<std::string> train, val, test;
  bool operator==(const Splits&) const = default;
};

// Per-family 70/15/15 with largest-remainder rounding after a seeded
// shuffle. Throws ValidationError if a family has fewer than 10 traces.
Splits split(const std::vector<Trace>& traces, Rng& rng);

void save_traces(const std::filesystem::path& path, const std::vector<Trace>& traces);
std::vector<Trace> load_traces(const std::filesystem::path& path);
void save_queries(const std::filesystem::path& path, const std::vector<Query>& queries);
std::vector<Query> load_queries(const std::filesystem::path& path);
void save_splits(const std::filesystem::path& path, const Splits& s);
Splits load_splits(const std::filesystem::path& path);

// Stream variants used by the file functions; `line` numbers start at 1
// with the header.
std::string traces_to_jsonl(const std::vector<Trace>& traces);
std::vector<Trace> traces_from_jsonl(std::string_view text);
std::string queries_to_jsonl(const std::vector<Query>& queries);
std::vector<Query> queries_from_jsonl(std::string_view text);

}  // namespace pcfmem

#endif  // PCFMEM_DATA_SYNTH_HPP_

#pragma once

// Counterfactual explanation engine. A counterfactual is produced in three
// steps: the shift predictor maps a latent z and intervention codes to z_hat
// (abduction + action), then the frozen generator and black-box classifier
// are re-run on z_hat (prediction). Necessity and sufficiency are Monte-Carlo
// frequencies of outcome flips over a population of sampled latents.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cflens/classifiers.hpp"
#include "cflens/io.hpp"
#include "cflens/shifter.hpp"
#include "cflens/stats.hpp"
#include "cflens/world.hpp"

namespace cflens {

// Condition codes with at least one attribute set.
class Intervention {
 public:
  explicit Intervention(ConditionVector codes);
  static Intervention single(Index m, Index attribute, int code) {
    return Intervention(ConditionVector::single(m, attribute, code));
  }
  // Grammar: attr<i>=(+1|-1), comma-joined.
  static Intervention parse(const std::string& text, Index m);

  const ConditionVector& codes() const { return codes_; }
  std::string to_string() const;

 private:
  ConditionVector codes_;
};

// Subgroup filter on factual attribute classes.
class Context {
 public:
  Context() = default;
  // Grammar: attr<i>=(0|1), ampersand-joined; empty string means no constraint.
  static Context parse(const std::string& text, Index m);

  // Throws if the attribute is already constrained.
  Context& require(Index attribute, bool value);

  bool empty() const { return constraints_.empty(); }
  const std::vector<std::pair<Index, bool>>& constraints() const { return constraints_; }
  // Sorted canonical form, e.g. "attr0=1&attr3=0"; "" when empty.
  std::string to_string() const;
  bool matches(const Vec& attribute_probabilities) const;

 private:
  std::vector<std::pair<Index, bool>> constraints_;  // sorted by attribute
};

enum class Direction { kIncrease, kDecrease };
enum class ScoreKind { kNecessity, kSufficiency };

inline int code_of(Direction direction) { return direction == Direction::kIncrease ? 1 : -1; }
inline const char* symbol(Direction direction) {
  return direction == Direction::kIncrease ? "+" : "-";
}
inline const char* symbol(ScoreKind kind) { return kind == ScoreKind::kNecessity ? "NEC" : "SUF"; }

// Maps latents [d x b] and codes [m x b] to counterfactual latents.
using ShiftFn = std::function<Mat(const Mat& latents, const Mat& codes)>;
// Maps latents and their decoded images to attribute probabilities [m x b].
using ReadoutFn = std::function<Mat(const Mat& latents, const Mat& images)>;

ShiftFn learned_shifts(const ShiftPredictor& predictor);
// Exact hyperplane projections from the world, applied per set attribute.
ShiftFn oracle_shifts(const WorldSpec& world);

ReadoutFn classifier_readout(const AttributeClassifier& classifier);
// Ground-truth attribute bits as probabilities in {0, 1}.
ReadoutFn perfect_readout(const WorldSpec& world);

struct EngineOptions {
  bool condition_on_factual_attribute = false;
  Index threads = 1;
};

// Holds non-owning references; the referenced models must outlive it.
class ExplanationEngine {
 public:
  ExplanationEngine(const WorldSpec& world, ShiftFn shift, ReadoutFn readout,
                    const TargetClassifier& target, EngineOptions options = {});
  ExplanationEngine(WorldSpec&&, ShiftFn, ReadoutFn, const TargetClassifier&, EngineOptions = {}) = delete;
  ExplanationEngine(const WorldSpec&, ShiftFn, ReadoutFn, TargetClassifier&&, EngineOptions = {}) = delete;

  const WorldSpec& world() const { return *world_; }
  const TargetClassifier& target() const { return *target_; }
  const EngineOptions& options() const { return options_; }

  Mat shift(const Mat& latents, const Mat& codes) const;
  Mat readout(const Mat& latents, const Mat& images) const;
  // Target probability per column given images and attribute probabilities.
  Vec target_probability(const Mat& images, const Mat& attributes) const;

 private:
  const WorldSpec* world_;
  ShiftFn shift_;
  ReadoutFn readout_;
  const TargetClassifier* target_;
  EngineOptions options_;
};

struct CounterfactualRecord {
  Vec z;
  Vec z_hat;
  Vec image;
  Vec cf_image;
  Vec codes;
  TargetPrediction target_before;
  TargetPrediction target_after;
  Vec attrs_before;
  Vec attrs_after;
};

CounterfactualRecord counterfactual(const ExplanationEngine& engine, const Vec& z,
                                    const Intervention& iv);

Json record_to_json(const CounterfactualRecord& record);
CounterfactualRecord record_from_json(const Json& doc);

// Factual evaluation of sampled latents plus the counterfactual class of every
// member under each single-attribute increase and decrease.
struct Population {
  std::uint64_t seed = 0;
  Mat latents;        // [d x N]
  Mat attributes;     // [m x N] factual attribute probabilities
  Vec target_p;       // [N]
  Mat cf_positive;    // [2m x N]; row 2i is increase of attribute i, 2i + 1 decrease

  Index size() const { return latents.cols(); }
  bool positive(Index j) const { return classify(target_p[j]); }
  bool cf_positive_at(Index attribute, Direction direction, Index j) const {
    return cf_positive(2 * attribute + (direction == Direction::kIncrease ? 0 : 1), j) > 0.5;
  }
};

Population evaluate_population(const ExplanationEngine& engine, const Mat& latents,
                               std::uint64_t seed = 0);
// N latents from the prior, keyed by seed.
Population sample_population(const ExplanationEngine& engine, std::uint64_t seed, Index size);

struct Estimate {
  Index k = 0;
  Index n = 0;
  std::optional<double> value;  // k / n, absent when n == 0
  std::optional<Interval> ci;

  bool defined() const { return value.has_value(); }
  bool operator==(const Estimate&) const = default;
};

Estimate make_estimate(Index k, Index n);

// P(outcome under iv | context): subgroup on factual attribute classes, then
// the fraction whose counterfactual target class equals outcome.
Estimate estimate_query(const ExplanationEngine& engine, const Population& population,
                        const Intervention& iv, bool outcome, const Context& context = {});

// Among factual positives in context: fraction turned negative by the
// single-attribute intervention.
Estimate necessity(const ExplanationEngine& engine, const Population& population, Index attribute,
                   Direction direction, const Context& context = {});
// Among factual negatives in context: fraction turned positive.
Estimate sufficiency(const ExplanationEngine& engine, const Population& population, Index attribute,
                     Direction direction, const Context& context = {});

struct ScoreEntry {
  Index attribute = 0;
  Direction direction = Direction::kIncrease;
  ScoreKind kind = ScoreKind::kNecessity;
  Estimate estimate;

  bool operator==(const ScoreEntry&) const = default;
};

struct ScoreReport {
  std::vector<ScoreEntry> entries;  // attribute-major, then +/-, then NEC/SUF
  std::uint64_t population_seed = 0;
  Index population_size = 0;
  std::string context;
  bool condition_on_factual_attribute = false;

  const ScoreEntry& at(Index attribute, Direction direction, ScoreKind kind) const;
  bool any_undefined() const;
  bool operator==(const ScoreReport&) const = default;
};

ScoreReport contextual_scores(const ExplanationEngine& engine, const Population& population,
                              const Context& context);
inline ScoreReport global_scores(const ExplanationEngine& engine, const Population& population) {
  return contextual_scores(engine, population, Context{});
}

// Columns: attribute,direction,kind,estimate,k,n,ci_lo,ci_hi,context.
// Undefined estimates print as "undefined" with empty interval fields.
std::string report_to_csv(const ScoreReport& report);
Json report_to_json(const ScoreReport& report);
ScoreReport report_from_json(const Json& doc);

}  // namespace cflens

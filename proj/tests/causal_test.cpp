#include "cflens/causal.hpp"

#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "cflens/baseline.hpp"
#include "support/fixtures.hpp"

namespace cflens {
namespace {

using testing::grid_scores;
using testing::micro_world;
using testing::reference_world;

// Positive exactly when attribute `attribute` is on, under a 0/1 readout.
TargetClassifier indicator_target(Index m, Index attribute) {
  Vec beta = Vec::Zero(m);
  beta[attribute] = 20.0;
  return logistic_target(beta, -10.0);
}

Vec reference_beta4() {
  Vec beta(4);
  beta << 1.5, 1.0, -1.5, -1.0;
  return beta;
}

TEST(InterventionParse, CanonicalGrammar) {
  const Intervention iv = Intervention::parse("attr2=+1,attr4=-1", 6);
  EXPECT_EQ(iv.codes().code(2), 1);
  EXPECT_EQ(iv.codes().code(4), -1);
  EXPECT_EQ(iv.codes().code(0), 0);
  EXPECT_EQ(iv.to_string(), "attr2=+1,attr4=-1");
  EXPECT_EQ(Intervention::parse(iv.to_string(), 6).codes(), iv.codes());
}

TEST(InterventionParse, Rejections) {
  EXPECT_THROW(Intervention::parse("attr1=0", 3), ValidationError);
  EXPECT_THROW(Intervention::parse("", 3), ValidationError);
  EXPECT_THROW(Intervention::parse("attr0=+1,attr0=-1", 3), ValidationError);
  EXPECT_THROW(Intervention::parse("attr0=2", 3), ValidationError);
  EXPECT_THROW(Intervention::parse("color=+1", 3), ValidationError);
  try {
    Intervention::parse("attr9=+1", 6);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("attr0..attr5"), std::string::npos) << e.what();
  }
  EXPECT_THROW(Intervention(ConditionVector::unset(3)), ValidationError);
}

TEST(ContextParse, CanonicalFormAndMatching) {
  const Context ctx = Context::parse("attr2=0&attr0=1", 4);
  EXPECT_EQ(ctx.to_string(), "attr0=1&attr2=0");
  EXPECT_TRUE(Context::parse("", 4).empty());
  Vec probs(4);
  probs << 0.9, 0.1, 0.2, 0.7;
  EXPECT_TRUE(ctx.matches(probs));
  probs[2] = 0.6;
  EXPECT_FALSE(ctx.matches(probs));
  probs << 0.5, 0.0, 0.0, 0.0;  // 0.5 is class 0
  EXPECT_FALSE(ctx.matches(probs));
  EXPECT_THROW(Context::parse("attr0=1&attr0=0", 4), ValidationError);
  EXPECT_THROW(Context::parse("attr0=+1", 4), ValidationError);
  EXPECT_THROW(Context::parse("attr4=1", 4), ValidationError);
}

TEST(Engine, RejectsMismatchedTarget) {
  const WorldSpec world = micro_world(0.0, 0.0, 0.5);
  const TargetClassifier wrong = logistic_target(Vec::Ones(3), 0.0);
  EXPECT_THROW(ExplanationEngine(world, oracle_shifts(world), perfect_readout(world), wrong), ValidationError);
}

TEST(Estimates, UndefinedWhenDenominatorEmpty) {
  const Estimate e = make_estimate(0, 0);
  EXPECT_FALSE(e.defined());
  EXPECT_FALSE(e.ci.has_value());
  const Estimate f = make_estimate(3, 4);
  EXPECT_DOUBLE_EQ(*f.value, 0.75);
  EXPECT_LE(f.ci->lo, 0.75);
}

class ConstantTarget : public ::testing::TestWithParam<double> {};

TEST_P(ConstantTarget, DegenerateScores) {
  const double bias = GetParam();
  const WorldSpec world = micro_world(0.4, 0.2, 0.5);
  const TargetClassifier target = logistic_target(Vec::Zero(1), bias);
  const ExplanationEngine engine(world, oracle_shifts(world), perfect_readout(world), target);
  const ScoreReport report = global_scores(engine, sample_population(engine, 3, 300));
  const bool positive = bias > 0.0;
  for (const ScoreEntry& e : report.entries) {
    const bool denominators_exist = (e.kind == ScoreKind::kNecessity) == positive;
    if (denominators_exist) {
      ASSERT_TRUE(e.estimate.defined());
      EXPECT_EQ(*e.estimate.value, 0.0);
      EXPECT_EQ(e.estimate.n, 300);
    } else {
      EXPECT_FALSE(e.estimate.defined());
    }
  }
  EXPECT_TRUE(report.any_undefined());
}

INSTANTIATE_TEST_SUITE_P(Signs, ConstantTarget, ::testing::Values(10.0, -10.0, 0.0));

struct MicroCase {
  double angle, offset, margin;
};

class MicroWorld : public ::testing::TestWithParam<MicroCase> {};

TEST_P(MicroWorld, MatchesGridEnumeration) {
  const MicroCase c = GetParam();
  const WorldSpec world = micro_world(c.angle, c.offset, c.margin);
  const TargetClassifier target = indicator_target(1, 0);
  const ExplanationEngine engine(world, oracle_shifts(world), perfect_readout(world), target);
  const Population pop = sample_population(engine, 17, 10000);
  const testing::GridScores grid = grid_scores(c.angle, c.offset, c.margin);
  const ScoreReport report = global_scores(engine, pop);
  auto value = [&](Direction dir, ScoreKind kind) { return *report.at(0, dir, kind).estimate.value; };
  EXPECT_NEAR(static_cast<double>(report.at(0, Direction::kIncrease, ScoreKind::kNecessity).estimate.n) / 1e4,
              grid.positive_mass, 0.02);
  EXPECT_NEAR(value(Direction::kIncrease, ScoreKind::kNecessity), grid.nec_plus, 0.02);
  EXPECT_NEAR(value(Direction::kDecrease, ScoreKind::kNecessity), grid.nec_minus, 0.02);
  EXPECT_NEAR(value(Direction::kIncrease, ScoreKind::kSufficiency), grid.suf_plus, 0.02);
  EXPECT_NEAR(value(Direction::kDecrease, ScoreKind::kSufficiency), grid.suf_minus, 0.02);
}

INSTANTIATE_TEST_SUITE_P(Planes, MicroWorld,
                         ::testing::Values(MicroCase{0.0, 0.0, 0.5}, MicroCase{0.7, 0.4, 0.5},
                                           MicroCase{2.1, -0.8, 0.25}, MicroCase{-1.0, 1.3, 1.0}));

TEST(GridOracle, PositiveMassIsNormalTail) {
  // P(w.z + b > 0) = Phi(b) for unit w.
  EXPECT_NEAR(grid_scores(0.3, 0.5, 0.5).positive_mass, 0.6914624612740131, 0.01);
  EXPECT_NEAR(grid_scores(1.0, 0.0, 0.5).positive_mass, 0.5, 1e-3);
}

TEST(OracleShifts, IndicatorScoresAreExact) {
  const auto& ref = reference_world();
  for (Index i = 0; i < 4; ++i) {
    const TargetClassifier target = indicator_target(4, i);
    const ExplanationEngine engine(ref.world, oracle_shifts(ref.world), perfect_readout(ref.world), target);
    const Population pop = sample_population(engine, 5, 400);
    EXPECT_EQ(*necessity(engine, pop, i, Direction::kDecrease).value, 1.0);
    EXPECT_EQ(*sufficiency(engine, pop, i, Direction::kIncrease).value, 1.0);
    EXPECT_EQ(*necessity(engine, pop, i, Direction::kIncrease).value, 0.0);
    EXPECT_EQ(*sufficiency(engine, pop, i, Direction::kDecrease).value, 0.0);
    // Orthonormal planes: moving attribute i never changes another indicator.
    const Index other = (i + 1) % 4;
    EXPECT_EQ(*necessity(engine, pop, other, Direction::kDecrease).value, 0.0);
  }
}

// Residual misses come from the classifier near the +/- margin, where it is
// least accurate.
TEST(OracleShifts, LearnedReadoutNearlyExact) {
  const auto& ref = reference_world();
  double total = 0.0;
  for (Index i = 0; i < 4; ++i) {
    const TargetClassifier target = indicator_target(4, i);
    const ExplanationEngine engine(ref.world, oracle_shifts(ref.world), classifier_readout(ref.classifier), target);
    const Population pop = sample_population(engine, 5, 400);
    for (const double v : {*necessity(engine, pop, i, Direction::kDecrease).value,
                           *sufficiency(engine, pop, i, Direction::kIncrease).value}) {
      EXPECT_GE(v, 0.7) << "attribute " << i;
      total += v;
    }
  }
  EXPECT_GE(total / 8.0, 0.9);
}

TEST(LinearTarget, SignOfCoefficientBoundsScores) {
  const auto& ref = reference_world();
  const TargetClassifier target = logistic_target(reference_beta4(), 0.0);
  const ExplanationEngine engine(ref.world, oracle_shifts(ref.world), perfect_readout(ref.world), target);
  const ScoreReport report = global_scores(engine, sample_population(engine, 9, 500));
  const Vec beta = reference_beta4();
  for (Index i = 0; i < 4; ++i) {
    // Moving a bit along its coefficient only raises the logit.
    const Direction raises = beta[i] > 0 ? Direction::kIncrease : Direction::kDecrease;
    const Direction lowers = beta[i] > 0 ? Direction::kDecrease : Direction::kIncrease;
    EXPECT_EQ(*report.at(i, raises, ScoreKind::kNecessity).estimate.value, 0.0);
    EXPECT_EQ(*report.at(i, lowers, ScoreKind::kSufficiency).estimate.value, 0.0);
    EXPECT_GT(*report.at(i, raises, ScoreKind::kSufficiency).estimate.value, 0.0);
    EXPECT_GT(*report.at(i, lowers, ScoreKind::kNecessity).estimate.value, 0.0);
  }
  // Larger coefficients move more members across the boundary.
  EXPECT_GE(*report.at(0, Direction::kIncrease, ScoreKind::kSufficiency).estimate.value,
            *report.at(1, Direction::kIncrease, ScoreKind::kSufficiency).estimate.value);
  EXPECT_GE(*report.at(2, Direction::kIncrease, ScoreKind::kNecessity).estimate.value,
            *report.at(3, Direction::kIncrease, ScoreKind::kNecessity).estimate.value);
}

// Exact projections may only sharpen the two headline rank correlations.
TEST(LinearBaseline, OracleShiftsImproveOrTiePrimaryCorrelations) {
  const auto& base = testing::baseline_world();
  const Vec beta = reference_beta();
  const TargetClassifier target = logistic_target(beta, 0.0);
  const ExplanationEngine learned(base.world, learned_shifts(base.shifter.predictor),
                                  classifier_readout(base.classifier), target);
  const ExplanationEngine oracle(base.world, oracle_shifts(base.world), classifier_readout(base.classifier), target);
  const BaselineReport a = baseline_alignment(global_scores(learned, sample_population(learned, 1, 200)), beta);
  const BaselineReport b = baseline_alignment(global_scores(oracle, sample_population(oracle, 1, 200)), beta);
  EXPECT_GE(a.rho_beta_suf_plus, 0.8);
  EXPECT_GE(a.rho_neg_beta_nec_plus, 0.8);
  EXPECT_GE(b.rho_beta_suf_plus, a.rho_beta_suf_plus);
  EXPECT_GE(b.rho_neg_beta_nec_plus, a.rho_neg_beta_nec_plus);
}

class Scoring : public ::testing::Test {
 protected:
  Scoring()
      : ref_(reference_world()),
        target_(logistic_target(reference_beta4(), 0.0)),
        engine_(ref_.world, learned_shifts(ref_.shifter.predictor), classifier_readout(ref_.classifier), target_),
        population_(sample_population(engine_, 21, 200)) {}

  const testing::TrainedWorld& ref_;
  TargetClassifier target_;
  ExplanationEngine engine_;
  Population population_;
};

TEST_F(Scoring, FourEntriesPerAttributeAllDefined) {
  const ScoreReport report = global_scores(engine_, population_);
  EXPECT_EQ(report.entries.size(), 16u);
  EXPECT_FALSE(report.any_undefined());
  EXPECT_EQ(report.population_size, 200);
}

TEST_F(Scoring, EmptyContextIsGlobal) {
  EXPECT_EQ(contextual_scores(engine_, population_, Context::parse("", 4)), global_scores(engine_, population_));
  EXPECT_EQ(report_to_csv(contextual_scores(engine_, population_, Context{})),
            report_to_csv(global_scores(engine_, population_)));
}

TEST_F(Scoring, ComplementaryContextsPartitionDenominators) {
  const ScoreReport global = global_scores(engine_, population_);
  for (Index c = 0; c < 4; ++c) {
    Context on, off;
    on.require(c, true);
    off.require(c, false);
    const ScoreReport a = contextual_scores(engine_, population_, on);
    const ScoreReport b = contextual_scores(engine_, population_, off);
    for (std::size_t e = 0; e < global.entries.size(); ++e) {
      EXPECT_EQ(a.entries[e].estimate.n + b.entries[e].estimate.n, global.entries[e].estimate.n);
      EXPECT_EQ(a.entries[e].estimate.k + b.entries[e].estimate.k, global.entries[e].estimate.k);
    }
  }
}

// Recount a contextual score straight from the population arrays.
TEST_F(Scoring, ContextMatchesDirectRecount) {
  const Context ctx = Context::parse("attr0=1&attr3=0", 4);
  const ScoreReport report = contextual_scores(engine_, population_, ctx);
  for (Index i = 0; i < 4; ++i)
    for (Direction dir : {Direction::kIncrease, Direction::kDecrease}) {
      Index k = 0, n = 0;
      for (Index j = 0; j < population_.size(); ++j) {
        if (!(population_.attributes(0, j) > 0.5) || population_.attributes(3, j) > 0.5) continue;
        if (!(population_.target_p[j] > 0.5)) continue;
        ++n;
        if (!population_.cf_positive_at(i, dir, j)) ++k;
      }
      const Estimate& e = report.at(i, dir, ScoreKind::kNecessity).estimate;
      EXPECT_EQ(e.n, n);
      EXPECT_EQ(e.k, k);
    }
}

TEST_F(Scoring, PermutingPopulationLeavesScores) {
  std::vector<Index> order(200);
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  std::rotate(order.begin(), order.begin() + 37, order.end());
  Mat shuffled(population_.latents.rows(), 200);
  for (Index j = 0; j < 200; ++j) shuffled.col(j) = population_.latents.col(order[static_cast<std::size_t>(j)]);
  const Population permuted = evaluate_population(engine_, shuffled, population_.seed);
  const ScoreReport a = global_scores(engine_, population_);
  const ScoreReport b = global_scores(engine_, permuted);
  EXPECT_EQ(a.entries, b.entries);
}

TEST_F(Scoring, QueryAgreesWithPopulationCache) {
  for (Index i = 0; i < 4; ++i) {
    const Intervention iv = Intervention::single(4, i, +1);
    const Estimate q = estimate_query(engine_, population_, iv, true);
    Index k = 0;
    for (Index j = 0; j < 200; ++j) k += population_.cf_positive_at(i, Direction::kIncrease, j);
    EXPECT_EQ(q.n, 200);
    EXPECT_EQ(q.k, k);
  }
}

TEST_F(Scoring, ThreadCountDoesNotChangeResults) {
  EngineOptions options;
  options.threads = 3;
  const ExplanationEngine threaded(ref_.world, learned_shifts(ref_.shifter.predictor),
                                   classifier_readout(ref_.classifier), target_, options);
  const Population again = sample_population(threaded, 21, 200);
  EXPECT_EQ(again.cf_positive, population_.cf_positive);
  EXPECT_EQ(again.target_p, population_.target_p);
}

TEST_F(Scoring, StrictVariantRestrictsToFactualAttributeClass) {
  EngineOptions options;
  options.condition_on_factual_attribute = true;
  const ExplanationEngine strict(ref_.world, learned_shifts(ref_.shifter.predictor),
                                 classifier_readout(ref_.classifier), target_, options);
  const ScoreReport loose = global_scores(engine_, population_);
  const ScoreReport tight = global_scores(strict, population_);
  EXPECT_TRUE(tight.condition_on_factual_attribute);
  for (Index i = 0; i < 4; ++i) {
    Index off_positive = 0;
    for (Index j = 0; j < 200; ++j)
      off_positive += population_.target_p[j] > 0.5 && !(population_.attributes(i, j) > 0.5);
    EXPECT_EQ(tight.at(i, Direction::kIncrease, ScoreKind::kNecessity).estimate.n, off_positive);
    EXPECT_LE(tight.at(i, Direction::kDecrease, ScoreKind::kSufficiency).estimate.n,
              loose.at(i, Direction::kDecrease, ScoreKind::kSufficiency).estimate.n);
  }
}

TEST_F(Scoring, ReportRoundTripsAndCsvLayout) {
  const ScoreReport report = contextual_scores(engine_, population_, Context::parse("attr1=1", 4));
  EXPECT_EQ(report_from_json(Json::parse(report_to_json(report).dump())), report);
  const std::string csv = report_to_csv(report);
  EXPECT_EQ(csv.rfind("attribute,direction,kind,estimate,k,n,ci_lo,ci_hi,context\n0,+,NEC,", 0), 0u) << csv;
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 17);
  EXPECT_NE(csv.find(",attr1=1\n"), std::string::npos);
}

TEST_F(Scoring, UndefinedRowsInCsv) {
  const TargetClassifier always = logistic_target(Vec::Zero(4), 5.0);
  const ExplanationEngine engine(ref_.world, learned_shifts(ref_.shifter.predictor),
                                 classifier_readout(ref_.classifier), always);
  const std::string csv = report_to_csv(global_scores(engine, sample_population(engine, 21, 200)));
  EXPECT_NE(csv.find("0,+,SUF,undefined,0,0,,,\n"), std::string::npos) << csv;
}

TEST_F(Scoring, CounterfactualRecord) {
  const Vec z = sample_latent(ref_.world, 3, 0);
  const Intervention iv = Intervention::parse("attr1=+1,attr3=-1", 4);
  const CounterfactualRecord record = counterfactual(engine_, z, iv);
  EXPECT_EQ(record.z, z);
  EXPECT_EQ(record.codes, iv.codes().codes());
  EXPECT_EQ(record.image, decode(ref_.world, z));
  EXPECT_EQ(record.cf_image, decode(ref_.world, record.z_hat));
  EXPECT_GT(record.attrs_after[1], 0.5);
  EXPECT_LE(record.attrs_after[3], 0.5);
  EXPECT_EQ(record.target_after.positive, classify(record.target_after.p));
  const CounterfactualRecord back = record_from_json(Json::parse(record_to_json(record).dump()));
  EXPECT_EQ(back.z_hat, record.z_hat);
  EXPECT_EQ(back.attrs_after, record.attrs_after);
  EXPECT_EQ(back.target_before.p, record.target_before.p);
}

TEST_F(Scoring, PopulationIsDeterministic) {
  const Population again = sample_population(engine_, 21, 200);
  EXPECT_EQ(again.latents, population_.latents);
  EXPECT_EQ(report_to_csv(global_scores(engine_, again)), report_to_csv(global_scores(engine_, population_)));
  EXPECT_NE(sample_population(engine_, 22, 200).latents, population_.latents);
}

}  // namespace
}  // namespace cflens

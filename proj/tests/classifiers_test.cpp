#include "cflens/classifiers.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "cflens/world.hpp"

namespace cflens {
namespace {

const WorldSpec& eight_dim_world() {
  static const WorldSpec world = [] {
    WorldOptions options;
    options.d = 8;
    options.m = 3;
    options.n = 64;
    options.seed = 1;
    return make_world(options);
  }();
  return world;
}

const AttributeClassifier& trained_classifier() {
  static const AttributeClassifier classifier =
      train_attribute_classifier(eight_dim_world(), 4096, 1000, 10, 1);
  return classifier;
}

TEST(AttributeClassifier, ReachesNinetyPercent) {
  const AttributeClassifier& clf = trained_classifier();
  ASSERT_EQ(clf.validation_accuracy.size(), 3);
  EXPECT_EQ(clf.epochs, 10);
  EXPECT_GE(clf.validation_accuracy.minCoeff(), 0.9) << clf.validation_accuracy.transpose();
  const Vec fresh = attribute_accuracy(clf, eight_dim_world(), sample_latents(eight_dim_world(), 999, 2000));
  EXPECT_GE(fresh.minCoeff(), 0.88) << fresh.transpose();
}

TEST(AttributeClassifier, UntrainedFailsWithTable) {
  try {
    train_attribute_classifier(eight_dim_world(), 1024, 1000, 0, 1);
    FAIL() << "expected TrainingFailedError";
  } catch (const TrainingFailedError& e) {
    ASSERT_EQ(e.accuracy().size(), 3);
    for (Index i = 0; i < 3; ++i) {
      EXPECT_GT(e.accuracy()[i], 0.3);
      EXPECT_LT(e.accuracy()[i], 0.7);
    }
  }
}

TEST(AttributeClassifier, SameSeedSameWeights) {
  AttributeTrainOptions options;
  options.min_mean_accuracy = 0.0;
  std::vector<double> losses;
  options.on_epoch = [&](int, double loss) { losses.push_back(loss); };
  const AttributeClassifier a = train_attribute_classifier(eight_dim_world(), 512, 256, 2, 3, options);
  options.on_epoch = nullptr;
  const AttributeClassifier b = train_attribute_classifier(eight_dim_world(), 512, 256, 2, 3, options);
  EXPECT_EQ(a, b);
  EXPECT_EQ(losses.size(), 2u);
  const AttributeClassifier c = train_attribute_classifier(eight_dim_world(), 512, 256, 2, 4, options);
  EXPECT_NE(a.net, c.net);
}

TEST(AttributeClassifier, RejectsTinyTrainingSet) {
  EXPECT_THROW(train_attribute_classifier(eight_dim_world(), 100, 100, 1, 1), ValidationError);
}

TEST(AttributeClassifier, ZeroNetGivesHalf) {
  AttributeClassifier clf = trained_classifier();
  for (auto& layer : clf.net.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  const Mat p = predict_attributes(clf, decode(eight_dim_world(), sample_latents(eight_dim_world(), 1, 4)));
  EXPECT_TRUE(p.isConstant(0.5, 0.0));
}

TEST(AttributeClassifier, AgreesWithTruthAwayFromBoundary) {
  const WorldSpec& world = eight_dim_world();
  const Mat z = sample_latents(world, 77, 2000);
  const Mat margins = attribute_margins(world, z);
  const Mat p = predict_attributes(trained_classifier(), decode(world, z));
  for (Index i = 0; i < 3; ++i) {
    Index far = 0, agree = 0;
    for (Index j = 0; j < z.cols() && far < 500; ++j) {
      if (std::abs(margins(i, j)) <= world.margin) continue;
      ++far;
      if ((p(i, j) > 0.5) == (margins(i, j) > 0.0)) ++agree;
    }
    ASSERT_EQ(far, 500);
    EXPECT_GE(agree, 450) << "attribute " << i;
  }
}

TEST(AttributeClassifier, JsonRoundTrip) {
  const AttributeClassifier& clf = trained_classifier();
  const Json doc = Json::parse(attribute_classifier_to_json(clf).dump());
  EXPECT_EQ(doc.at("format"), kNetFormat);
  EXPECT_EQ(doc.at("training").at("epochs"), 10);
  EXPECT_EQ(attribute_classifier_from_json(doc), clf);
}

TEST(LogisticTarget, WorkedValues) {
  Vec beta(2);
  beta << 2.0, 1.0;
  const TargetClassifier t = logistic_target(beta, 0.0);
  EXPECT_EQ(t.input_kind(), InputKind::kAttributeProbabilities);
  EXPECT_EQ(t.input_dim(), 2);
  Vec a(2);
  a << 0.5, 0.6;
  const TargetPrediction pred = predict_target(t, InputKind::kAttributeProbabilities, a);
  EXPECT_NEAR(pred.p, 0.8320183851339245, 1e-15);
  EXPECT_TRUE(pred.positive);
  a << 0.5, 0.0;
  EXPECT_NEAR(predict_target(t, InputKind::kAttributeProbabilities, a).p, 0.7310585786300049, 1e-15);
}

TEST(LogisticTarget, ExactTieIsNegative) {
  const TargetClassifier t = logistic_target(Vec::Zero(3), 0.0);
  const TargetPrediction pred = predict_target(t, InputKind::kAttributeProbabilities, Vec::Ones(3));
  EXPECT_EQ(pred.p, 0.5);
  EXPECT_FALSE(pred.positive);
}

TEST(LogisticTarget, InputKindMismatchRejected) {
  const TargetClassifier t = logistic_target(Vec::Ones(3), 0.0);
  EXPECT_THROW(predict_target(t, InputKind::kPixels, Vec::Ones(3)), ValidationError);
  EXPECT_THROW(predict_target(t, InputKind::kAttributeProbabilities, Vec::Ones(4)), ValidationError);
}

TEST(LogisticTarget, BackwardClosedForm) {
  Vec beta(3);
  beta << 1.5, -0.5, 0.25;
  const TargetClassifier t = logistic_target(beta, 0.1);
  Vec a(3);
  a << 0.2, 0.9, 0.4;
  const double p = predict_target(t, InputKind::kAttributeProbabilities, a).p;
  const Vec grad = target_input_backward(t, InputKind::kAttributeProbabilities, a, 2.0);
  EXPECT_LT((grad - 2.0 * p * (1 - p) * beta).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LogisticTarget, MonotoneInPositiveCoefficient) {
  Vec beta(2);
  beta << 1.0, -1.0;
  const TargetClassifier t = logistic_target(beta, 0.0);
  double previous = 0.0;
  for (double v = 0.0; v <= 1.0; v += 0.1) {
    Vec a(2);
    a << v, 0.3;
    const double p = predict_target(t, InputKind::kAttributeProbabilities, a).p;
    EXPECT_GT(p, previous);
    previous = p;
  }
}

TEST(NetTarget, BackwardMatchesDifferences) {
  const TargetClassifier t{NetTarget{make_dense_net({6, 5, 1}, {Activation::kTanh, Activation::kSigmoid}, 3)}};
  EXPECT_EQ(t.input_kind(), InputKind::kPixels);
  Vec x(6);
  for (Index i = 0; i < 6; ++i) x[i] = 0.1 * static_cast<double>(i);
  const Vec grad = target_input_backward(t, InputKind::kPixels, x, 1.0);
  for (Index i = 0; i < 6; ++i) {
    Vec up = x, down = x;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    const double numeric = (predict_target(t, InputKind::kPixels, up).p -
                            predict_target(t, InputKind::kPixels, down).p) / 2e-6;
    EXPECT_NEAR(grad[i], numeric, 1e-8);
  }
}

TEST(NetTarget, BatchMatchesSingle) {
  const TargetClassifier t{NetTarget{make_dense_net({4, 3, 1}, {Activation::kTanh, Activation::kSigmoid}, 8)}};
  Mat x = Mat::Random(4, 5);
  const Vec batch = predict_target_batch(t, InputKind::kPixels, x);
  for (Index j = 0; j < 5; ++j)
    EXPECT_DOUBLE_EQ(batch[j], predict_target(t, InputKind::kPixels, Vec(x.col(j))).p);
}

TEST(TargetJson, RoundTripBothKinds) {
  Vec beta(3);
  beta << 1.0, -0.5, 0.3333333333333333;
  const TargetClassifier logistic = logistic_target(beta, -0.25);
  const Json doc = Json::parse(target_to_json(logistic).dump());
  EXPECT_EQ(doc.at("format"), kLogisticFormat);
  EXPECT_EQ(target_from_json(doc), logistic);
  const TargetClassifier net{NetTarget{make_dense_net({4, 1}, {Activation::kSigmoid}, 2)}};
  EXPECT_EQ(target_from_json(Json::parse(target_to_json(net).dump())), net);
  EXPECT_THROW(target_from_json(Json{{"format", "cflens-world-v1"}}), ValidationError);
}

}  // namespace
}  // namespace cflens

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "cflens/io.hpp"
#include "cflens/numkit.hpp"
#include "cflens/world.hpp"

namespace cflens {

// Multi-task attribute classifier: pixels -> m independent probabilities.
struct AttributeClassifier {
  DenseNet net;
  int epochs = 0;
  Vec validation_accuracy;  // per attribute, held-out

  double mean_accuracy() const {
    return validation_accuracy.size() ? validation_accuracy.mean() : 0.0;
  }
  bool operator==(const AttributeClassifier&) const = default;
};

struct AttributeTrainOptions {
  Index hidden = 64;
  Index batch = 64;
  OptimizerSettings optimizer{Algorithm::kAdam, 3e-3};
  double min_mean_accuracy = 0.85;
  // Called after each epoch with the mean training loss.
  std::function<void(int epoch, double loss)> on_epoch;
};

// Carries the classifier and its accuracy table when training falls short.
class TrainingFailedError : public std::runtime_error {
 public:
  TrainingFailedError(const std::string& what, AttributeClassifier classifier)
      : std::runtime_error(what), classifier_(std::move(classifier)) {}

  const AttributeClassifier& classifier() const { return classifier_; }
  const Vec& accuracy() const { return classifier_.validation_accuracy; }

 private:
  AttributeClassifier classifier_;
};

// Trains on (decode(z), true_attributes(z)) pairs drawn from the world prior.
AttributeClassifier train_attribute_classifier(const WorldSpec& world, Index n_train, Index n_val,
                                               int epochs, std::uint64_t seed,
                                               const AttributeTrainOptions& options = {});

Mat predict_attributes(const AttributeClassifier& classifier, const Mat& images);
Vec predict_attributes(const AttributeClassifier& classifier, const Vec& image);

// Thresholded accuracy per attribute on fresh latents.
Vec attribute_accuracy(const AttributeClassifier& classifier, const WorldSpec& world,
                       const Mat& latents);

Json attribute_classifier_to_json(const AttributeClassifier& classifier);
AttributeClassifier attribute_classifier_from_json(const Json& doc);

// Black-box target classifier under explanation. The logistic variant reads
// attribute probabilities; the net variant reads pixels.
struct LogisticTarget {
  Vec beta;
  double beta0 = 0.0;
  bool operator==(const LogisticTarget&) const = default;
};

struct NetTarget {
  DenseNet net;
  bool operator==(const NetTarget&) const = default;
};

enum class InputKind { kPixels, kAttributeProbabilities };

struct TargetClassifier {
  static constexpr double kThreshold = 0.5;

  std::variant<LogisticTarget, NetTarget> model;

  InputKind input_kind() const;
  Index input_dim() const;
  bool operator==(const TargetClassifier&) const = default;
};

inline bool classify(double p) { return p > TargetClassifier::kThreshold; }

inline TargetClassifier logistic_target(Vec beta, double beta0) {
  return TargetClassifier{LogisticTarget{std::move(beta), beta0}};
}

struct TargetPrediction {
  double p = 0.0;
  bool positive = false;
};

TargetPrediction predict_target(const TargetClassifier& classifier, InputKind kind, const Vec& input);
// Probability per column.
Vec predict_target_batch(const TargetClassifier& classifier, InputKind kind, const Mat& inputs);

// d(grad_out * p) / d input.
Vec target_input_backward(const TargetClassifier& classifier, InputKind kind, const Vec& input,
                          double grad_out);

inline constexpr const char* kLogisticFormat = "cflens-logistic-v1";

// Logistic targets use cflens-logistic-v1, net targets cflens-net-v1.
Json target_to_json(const TargetClassifier& classifier);
TargetClassifier target_from_json(const Json& doc);

}  // namespace cflens

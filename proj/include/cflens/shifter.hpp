#pragma once

// Shift predictor: a residual dense network mapping (z, condition codes) to a
// counterfactual latent z_hat = z + net([z; codes]), trained by
// backpropagating an attribute loss through the frozen decoder and attribute
// classifier plus a faithfulness penalty on the displacement.

#include <cstdint>
#include <string>
#include <vector>

#include "cflens/classifiers.hpp"
#include "cflens/numkit.hpp"
#include "cflens/world.hpp"

namespace cflens {

// Per-attribute intervention codes: -1 decrease, 0 unset, +1 increase.
class ConditionVector {
 public:
  explicit ConditionVector(Vec codes);
  static ConditionVector unset(Index m) { return ConditionVector(Vec::Zero(m)); }
  // Single nonzero code on one attribute.
  static ConditionVector single(Index m, Index attribute, int code);

  const Vec& codes() const { return codes_; }
  Index size() const { return codes_.size(); }
  int code(Index i) const { return static_cast<int>(codes_[i]); }
  bool any_set() const { return (codes_.array() != 0.0).any(); }

  bool operator==(const ConditionVector&) const = default;

 private:
  Vec codes_;
};

// Throws unless every entry of the [m x batch] matrix is in {-1, 0, +1}.
void validate_codes(const Mat& codes);

inline constexpr const char* kShifterFormat = "cflens-shifter-v1";

struct ShiftPredictor {
  DenseNet net;  // (d + m) -> ... -> d, last layer linear and zero-initialized
  Index d = 0;
  Index m = 0;
  double gamma = 0.1;

  bool operator==(const ShiftPredictor&) const = default;
};

ShiftPredictor make_shift_predictor(Index d, Index m, const std::vector<Index>& hidden,
                                    std::uint64_t seed);

Vec predict_shift(const ShiftPredictor& predictor, const Vec& z, const ConditionVector& cond);
// Columns of latents paired with columns of codes.
Mat predict_shift(const ShiftPredictor& predictor, const Mat& latents, const Mat& codes);

struct ShiftLosses {
  double attribute = 0.0;     // masked BCE, mean over batch
  double faithfulness = 0.0;  // mean L2 displacement
  double total = 0.0;         // attribute + gamma * faithfulness
  bool all_masked = false;
  GradientBundle grads;  // w.r.t. the shift predictor's parameters only
};

// Codes +1 -> BCE target 1, -1 -> target 0, 0 -> masked out.
ShiftLosses shift_losses(const ShiftPredictor& predictor, const Mat& latents, const Mat& codes,
                         const WorldSpec& world, const AttributeClassifier& classifier,
                         double gamma);

struct ShiftTrainConfig {
  double gamma = 0.1;
  Index batch = 64;
  Index iterations = 3000;
  double p_unset = 0.5;
  OptimizerSettings optimizer{};
  std::uint64_t seed = 1;
  std::vector<Index> hidden{128, 128};
  double min_classifier_accuracy = 0.85;
};

void validate(const ShiftTrainConfig& config);

struct LossRecord {
  double attribute = 0.0;
  double faithfulness = 0.0;
  double total = 0.0;
};

struct ShiftTrainResult {
  ShiftPredictor predictor;
  std::vector<LossRecord> history;
  Index all_masked_batches = 0;
};

// Codes for one batch: unset with probability p_unset, else +1 or -1 evenly.
Mat sample_conditions(Index m, Index batch, double p_unset, const CounterRng& rng);

ShiftTrainResult train_shift_predictor(const ShiftTrainConfig& config, const WorldSpec& world,
                                       const AttributeClassifier& classifier);

// Mean of the first and last `window` entries of a loss column.
std::pair<double, double> windowed_endpoints(const std::vector<LossRecord>& history, std::size_t window,
                                             double LossRecord::*field);

std::string loss_history_csv(const std::vector<LossRecord>& history);

Json shifter_to_json(const ShiftPredictor& predictor);
ShiftPredictor shifter_from_json(const Json& doc);

}  // namespace cflens

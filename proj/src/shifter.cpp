#include "cflens/shifter.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

#include "cflens/rng.hpp"

namespace cflens {

ConditionVector::ConditionVector(Vec codes) : codes_(std::move(codes)) {
  validate_codes(codes_);
}

ConditionVector ConditionVector::single(Index m, Index attribute, int code) {
  if (attribute < 0 || attribute >= m)
    throw ValidationError("attribute index " + std::to_string(attribute) + " out of range [0, " +
                          std::to_string(m) + ")");
  Vec codes = Vec::Zero(m);
  codes[attribute] = code;
  return ConditionVector(std::move(codes));
}

void validate_codes(const Mat& codes) {
  for (Index j = 0; j < codes.cols(); ++j)
    for (Index i = 0; i < codes.rows(); ++i) {
      const double c = codes(i, j);
      if (c != -1.0 && c != 0.0 && c != 1.0)
        throw ValidationError("condition codes must be -1, 0 or +1");
    }
}

ShiftPredictor make_shift_predictor(Index d, Index m, const std::vector<Index>& hidden,
                                    std::uint64_t seed) {
  if (d < 1 || m < 1) throw ValidationError("shift predictor dimensions must be positive");
  std::vector<Index> dims{d + m};
  std::vector<Activation> acts;
  for (Index width : hidden) {
    dims.push_back(width);
    acts.push_back(Activation::kTanh);
  }
  dims.push_back(d);
  acts.push_back(Activation::kLinear);
  ShiftPredictor predictor;
  predictor.net = make_dense_net<double>(dims, acts, seed);
  predictor.net.layers.back().weight.setZero();
  predictor.net.layers.back().bias.setZero();
  predictor.d = d;
  predictor.m = m;
  return predictor;
}

namespace {

Mat stack_inputs(const ShiftPredictor& predictor, const Mat& latents, const Mat& codes) {
  if (latents.rows() != predictor.d || codes.rows() != predictor.m ||
      latents.cols() != codes.cols())
    throw ValidationError("shift predictor expects [" + std::to_string(predictor.d) + " x b] latents and [" +
                          std::to_string(predictor.m) + " x b] codes");
  Mat x(predictor.d + predictor.m, latents.cols());
  x.topRows(predictor.d) = latents;
  x.bottomRows(predictor.m) = codes;
  return x;
}

}  // namespace

Mat predict_shift(const ShiftPredictor& predictor, const Mat& latents, const Mat& codes) {
  validate_codes(codes);
  return latents + evaluate(predictor.net, stack_inputs(predictor, latents, codes));
}

Vec predict_shift(const ShiftPredictor& predictor, const Vec& z, const ConditionVector& cond) {
  return predict_shift(predictor, Mat(z), Mat(cond.codes())).col(0);
}

ShiftLosses shift_losses(const ShiftPredictor& predictor, const Mat& latents, const Mat& codes,
                         const WorldSpec& world, const AttributeClassifier& classifier,
                         double gamma) {
  if (latents.cols() < 1) throw ValidationError("shift_losses: empty batch");
  if (!std::isfinite(gamma) || gamma < 0.0) throw ValidationError("shift_losses: gamma must be finite and >= 0");
  validate_codes(codes);
  const auto batch = static_cast<double>(latents.cols());

  // M -> G -> C
  const ForwardPass shift = forward(predictor.net, stack_inputs(predictor, latents, codes));
  const Mat& displacement = shift.output;
  const Mat shifted = latents + displacement;
  const ForwardPass decoded = forward(world.decoder, shifted);
  const ForwardPass attrs = forward(classifier.net, decoded.output);

  const Mat target = (codes.array() > 0.0).cast<double>();
  const Mat mask = (codes.array() != 0.0).cast<double>();
  const BceBatchResult bce = bce_loss_logits_batch(attrs.tape.pre.back(), target, mask);

  ShiftLosses out;
  out.all_masked = (mask.array() == 0.0).all();
  out.attribute = bce.loss;
  const Vec norms = displacement.colwise().norm().transpose();
  out.faithfulness = norms.sum() / batch;
  out.total = out.attribute + gamma * out.faithfulness;

  const Mat grad_pixels =
      backward(classifier.net, attrs.tape, bce.grad, Gradients::kInputOnly, Seed::kLogits).input;
  Mat grad_displacement =
      backward(world.decoder, decoded.tape, grad_pixels, Gradients::kInputOnly).input;
  for (Index j = 0; j < displacement.cols(); ++j)
    if (norms[j] > 0.0) grad_displacement.col(j) += (gamma / batch / norms[j]) * displacement.col(j);
  out.grads = backward(predictor.net, shift.tape, grad_displacement);
  return out;
}

void validate(const ShiftTrainConfig& config) {
  if (config.batch < 1) throw ValidationError("shift training: batch must be >= 1");
  if (config.iterations < 0) throw ValidationError("shift training: iterations must be >= 0");
  if (!std::isfinite(config.gamma) || config.gamma < 0.0)
    throw ValidationError("shift training: gamma must be finite and >= 0");
  if (!(config.p_unset >= 0.0 && config.p_unset <= 1.0))
    throw ValidationError("shift training: p_unset must lie in [0, 1]");
}

Mat sample_conditions(Index m, Index batch, double p_unset, const CounterRng& rng) {
  Mat codes(m, batch);
  for (Index j = 0; j < batch; ++j)
    for (Index i = 0; i < m; ++i) {
      const auto counter = static_cast<std::uint64_t>(j * m + i);
      if (rng.uniform(2 * counter) < p_unset) {
        codes(i, j) = 0.0;
      } else {
        codes(i, j) = rng.uniform(2 * counter + 1) < 0.5 ? -1.0 : 1.0;
      }
    }
  return codes;
}

ShiftTrainResult train_shift_predictor(const ShiftTrainConfig& config, const WorldSpec& world,
                                       const AttributeClassifier& classifier) {
  validate(config);
  if (classifier.validation_accuracy.size() != world.m)
    throw ValidationError("attribute classifier has no recorded held-out accuracy");
  if (classifier.mean_accuracy() < config.min_classifier_accuracy)
    throw ValidationError("attribute classifier held-out accuracy " +
                          std::to_string(classifier.mean_accuracy()) + " is below " +
                          std::to_string(config.min_classifier_accuracy));
  if (classifier.net.in_dim() != world.n || classifier.net.out_dim() != world.m)
    throw ValidationError("attribute classifier does not map n -> m for this world");

  const CounterRng root(config.seed);
  ShiftTrainResult result;
  result.predictor = make_shift_predictor(world.d, world.m, config.hidden, root.split(stream::kInit).key());
  result.predictor.gamma = config.gamma;
  OptimizerState state = make_optimizer_state(result.predictor.net, config.optimizer);

  const std::uint64_t latent_seed = root.split(stream::kLatents).key();
  const CounterRng conditions = root.split(stream::kConditions);
  result.history.reserve(static_cast<std::size_t>(config.iterations));
  for (Index it = 0; it < config.iterations; ++it) {
    const Mat latents = sample_latents(world, latent_seed, config.batch, it * config.batch);
    const Mat codes = sample_conditions(world.m, config.batch, config.p_unset,
                                        conditions.split(static_cast<std::uint64_t>(it)));
    ShiftLosses losses = shift_losses(result.predictor, latents, codes, world, classifier, config.gamma);
    if (!std::isfinite(losses.total))
      throw NumericError("shift predictor loss became non-finite at iteration " + std::to_string(it));
    if (losses.all_masked && result.all_masked_batches++ == 0)
      std::clog << "warning: iteration " << it
                << " has every attribute unset; training on the faithfulness term alone\n";
    result.history.push_back({losses.attribute, losses.faithfulness, losses.total});
    optimizer_step(result.predictor.net, losses.grads, state);
  }
  return result;
}

std::pair<double, double> windowed_endpoints(const std::vector<LossRecord>& history, std::size_t window,
                                             double LossRecord::*field) {
  if (history.empty() || window == 0) throw ValidationError("windowed_endpoints: empty history");
  window = std::min(window, history.size());
  double head = 0.0;
  double tail = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    head += history[i].*field;
    tail += history[history.size() - window + i].*field;
  }
  return {head / static_cast<double>(window), tail / static_cast<double>(window)};
}

std::string loss_history_csv(const std::vector<LossRecord>& history) {
  std::ostringstream out;
  out << "iter,loss_a,loss_f,loss_total\n";
  for (std::size_t i = 0; i < history.size(); ++i)
    out << i << ',' << format_double(history[i].attribute) << ','
        << format_double(history[i].faithfulness) << ',' << format_double(history[i].total) << '\n';
  return out.str();
}

Json shifter_to_json(const ShiftPredictor& predictor) {
  return {{"format", kShifterFormat},
          {"d", predictor.d},
          {"m", predictor.m},
          {"gamma", predictor.gamma},
          {"net", net_to_json(predictor.net)}};
}

ShiftPredictor shifter_from_json(const Json& doc) {
  expect_format(doc, kShifterFormat);
  try {
    ShiftPredictor predictor;
    predictor.d = doc.at("d").get<Index>();
    predictor.m = doc.at("m").get<Index>();
    predictor.gamma = doc.at("gamma").get<double>();
    predictor.net = net_from_json(doc.at("net"));
    if (predictor.net.in_dim() != predictor.d + predictor.m || predictor.net.out_dim() != predictor.d)
      throw ValidationError("shifter net does not map (d + m) -> d");
    return predictor;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed ") + kShifterFormat + " document: " + e.what());
  }
}

}  // namespace cflens

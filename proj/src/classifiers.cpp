#include "cflens/classifiers.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "cflens/rng.hpp"

namespace cflens {

namespace {

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

std::vector<Index> shuffled_indices(Index count, const CounterRng& rng) {
  std::vector<Index> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), Index{0});
  for (Index i = count - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.bits(static_cast<std::uint64_t>(i)) %
                                      static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  return order;
}

}  // namespace

AttributeClassifier train_attribute_classifier(const WorldSpec& world, Index n_train, Index n_val,
                                               int epochs, std::uint64_t seed,
                                               const AttributeTrainOptions& options) {
  if (n_train < 256) throw ValidationError("train_attribute_classifier: n_train must be >= 256");
  if (n_val < 1) throw ValidationError("train_attribute_classifier: n_val must be >= 1");
  if (epochs < 0) throw ValidationError("train_attribute_classifier: epochs must be >= 0");
  if (options.batch < 1) throw ValidationError("train_attribute_classifier: batch must be >= 1");

  const CounterRng root(seed);
  const Mat train_latents = sample_latents(world, root.split(stream::kTrain).key(), n_train);
  const Mat images = decode(world, train_latents);
  const Mat labels = true_attributes(world, train_latents);
  const Mat ones = Mat::Ones(world.m, options.batch);

  AttributeClassifier classifier;
  const Index dims[] = {world.n, options.hidden, world.m};
  const Activation acts[] = {Activation::kTanh, Activation::kSigmoid};
  classifier.net = make_dense_net<double>(dims, acts, root.split(stream::kInit).key());
  OptimizerState state = make_optimizer_state(classifier.net, options.optimizer);

  const CounterRng shuffle = root.split(stream::kShuffle);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto order = shuffled_indices(n_train, shuffle.split(static_cast<std::uint64_t>(epoch)));
    double epoch_loss = 0.0;
    Index batches = 0;
    for (Index start = 0; start < n_train; start += options.batch) {
      const Index size = std::min(options.batch, n_train - start);
      Mat x(world.n, size);
      Mat t(world.m, size);
      for (Index j = 0; j < size; ++j) {
        const Index src = order[static_cast<std::size_t>(start + j)];
        x.col(j) = images.col(src);
        t.col(j) = labels.col(src);
      }
      const ForwardPass pass = forward(classifier.net, x);
      const BceBatchResult loss = bce_loss_batch(pass.output, t, ones.leftCols(size));
      if (!std::isfinite(loss.loss))
        throw NumericError("attribute classifier loss became non-finite in epoch " +
                           std::to_string(epoch));
      optimizer_step(classifier.net, backward(classifier.net, pass.tape, loss.grad), state);
      epoch_loss += loss.loss;
      ++batches;
    }
    if (options.on_epoch) options.on_epoch(epoch, epoch_loss / static_cast<double>(batches));
  }
  classifier.epochs = epochs;

  const Mat val_latents = sample_latents(world, root.split(stream::kValidation).key(), n_val);
  classifier.validation_accuracy = attribute_accuracy(classifier, world, val_latents);
  if (classifier.mean_accuracy() < options.min_mean_accuracy) {
    std::ostringstream msg;
    msg << "attribute classifier reached mean held-out accuracy " << classifier.mean_accuracy()
        << " < " << options.min_mean_accuracy << "; per attribute:";
    for (Index i = 0; i < classifier.validation_accuracy.size(); ++i)
      msg << " attr" << i << '=' << classifier.validation_accuracy[i];
    throw TrainingFailedError(msg.str(), std::move(classifier));
  }
  return classifier;
}

Mat predict_attributes(const AttributeClassifier& classifier, const Mat& images) {
  return evaluate(classifier.net, images);
}

Vec predict_attributes(const AttributeClassifier& classifier, const Vec& image) {
  return evaluate(classifier.net, image).col(0);
}

Vec attribute_accuracy(const AttributeClassifier& classifier, const WorldSpec& world,
                       const Mat& latents) {
  const Mat predicted = predict_attributes(classifier, decode(world, latents));
  const Mat truth = true_attributes(world, latents);
  const Mat hits = ((predicted.array() > 0.5).cast<double>() == truth.array()).cast<double>();
  return hits.rowwise().mean();
}

Json attribute_classifier_to_json(const AttributeClassifier& classifier) {
  Json doc = net_to_json(classifier.net);
  doc["training"] = {{"epochs", classifier.epochs},
                     {"validation_accuracy", vec_to_json(classifier.validation_accuracy)}};
  return doc;
}

AttributeClassifier attribute_classifier_from_json(const Json& doc) {
  AttributeClassifier classifier;
  classifier.net = net_from_json(doc);
  if (classifier.net.layers.back().act != Activation::kSigmoid)
    throw ValidationError("attribute classifier must end in a sigmoid layer");
  if (doc.contains("training")) {
    const auto& training = doc["training"];
    classifier.epochs = training.value("epochs", 0);
    if (training.contains("validation_accuracy"))
      classifier.validation_accuracy = vec_from_json(training["validation_accuracy"]);
  }
  return classifier;
}

InputKind TargetClassifier::input_kind() const {
  return std::holds_alternative<LogisticTarget>(model) ? InputKind::kAttributeProbabilities
                                                       : InputKind::kPixels;
}

Index TargetClassifier::input_dim() const {
  if (const auto* logistic = std::get_if<LogisticTarget>(&model)) return logistic->beta.size();
  return std::get<NetTarget>(model).net.in_dim();
}

namespace {

void check_target_input(const TargetClassifier& classifier, InputKind kind, Index rows) {
  if (kind != classifier.input_kind())
    throw ValidationError(classifier.input_kind() == InputKind::kPixels
                              ? "net target classifier consumes pixels, got attribute probabilities"
                              : "logistic target classifier consumes attribute probabilities, got pixels");
  if (rows != classifier.input_dim())
    throw ValidationError("target classifier expects " + std::to_string(classifier.input_dim()) +
                          " inputs, got " + std::to_string(rows));
}

}  // namespace

Vec predict_target_batch(const TargetClassifier& classifier, InputKind kind, const Mat& inputs) {
  check_target_input(classifier, kind, inputs.rows());
  if (const auto* logistic = std::get_if<LogisticTarget>(&classifier.model)) {
    Vec logits = inputs.transpose() * logistic->beta;
    logits.array() += logistic->beta0;
    return logits.unaryExpr(&sigmoid);
  }
  return evaluate(std::get<NetTarget>(classifier.model).net, inputs).row(0).transpose();
}

TargetPrediction predict_target(const TargetClassifier& classifier, InputKind kind, const Vec& input) {
  const double p = predict_target_batch(classifier, kind, input)[0];
  return {p, classify(p)};
}

Vec target_input_backward(const TargetClassifier& classifier, InputKind kind, const Vec& input,
                          double grad_out) {
  check_target_input(classifier, kind, input.size());
  if (const auto* logistic = std::get_if<LogisticTarget>(&classifier.model)) {
    const double p = sigmoid(logistic->beta.dot(input) + logistic->beta0);
    return p * (1.0 - p) * grad_out * logistic->beta;
  }
  const DenseNet& net = std::get<NetTarget>(classifier.model).net;
  const ForwardPass pass = forward(net, input);
  return backward(net, pass.tape, Mat::Constant(1, 1, grad_out), Gradients::kInputOnly).input.col(0);
}

Json target_to_json(const TargetClassifier& classifier) {
  if (const auto* logistic = std::get_if<LogisticTarget>(&classifier.model))
    return {{"format", kLogisticFormat}, {"beta", vec_to_json(logistic->beta)}, {"beta0", logistic->beta0}};
  return net_to_json(std::get<NetTarget>(classifier.model).net);
}

TargetClassifier target_from_json(const Json& doc) {
  if (doc.is_object() && doc.value("format", "") == kLogisticFormat) {
    try {
      Vec beta = vec_from_json(doc.at("beta"));
      if (beta.size() < 1) throw ValidationError("logistic target: beta must be nonempty");
      return logistic_target(std::move(beta), doc.at("beta0").get<double>());
    } catch (const Json::exception& e) {
      throw ValidationError(std::string("malformed ") + kLogisticFormat + " document: " + e.what());
    }
  }
  DenseNet net = net_from_json(doc);
  if (net.out_dim() != 1 || net.layers.back().act != Activation::kSigmoid)
    throw ValidationError("net target classifier must end in a single sigmoid output");
  return TargetClassifier{NetTarget{std::move(net)}};
}

}  // namespace cflens

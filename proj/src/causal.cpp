#include "cflens/causal.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "cflens/parallel.hpp"
#include "cflens/rng.hpp"

namespace cflens {

namespace {

// Population members are processed in fixed blocks so every member sees the
// same batch shapes regardless of worker count.
constexpr Index kBlock = 64;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, sep)) parts.push_back(trim(part));
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

// Parses "attr<i>=<value>" into (i, value text).
std::pair<Index, std::string> parse_assignment(const std::string& item, Index m, const char* what) {
  const auto eq = item.find('=');
  if (item.rfind("attr", 0) != 0 || eq == std::string::npos || eq == 4)
    throw ValidationError(std::string("malformed ") + what + " term '" + item +
                          "'; expected attr<i>=<value>");
  Index index = -1;
  const char* first = item.data() + 4;
  const char* last = item.data() + eq;
  const auto [ptr, ec] = std::from_chars(first, last, index);
  if (ec != std::errc() || ptr != last)
    throw ValidationError(std::string("malformed attribute index in '") + item + "'");
  if (index < 0 || index >= m)
    throw ValidationError("attribute attr" + std::to_string(index) + " out of range; valid are attr0..attr" +
                          std::to_string(m - 1));
  return {index, item.substr(eq + 1)};
}

Mat single_codes(Index m, Index attribute, Direction direction, Index count) {
  Mat codes = Mat::Zero(m, count);
  codes.row(attribute).setConstant(code_of(direction));
  return codes;
}

}  // namespace

Intervention::Intervention(ConditionVector codes) : codes_(std::move(codes)) {
  if (!codes_.any_set()) throw ValidationError("an intervention must set at least one attribute");
}

Intervention Intervention::parse(const std::string& text, Index m) {
  Vec codes = Vec::Zero(m);
  std::vector<bool> seen(static_cast<std::size_t>(m), false);
  for (const auto& item : split(trim(text), ',')) {
    const auto [index, value] = parse_assignment(item, m, "intervention");
    if (seen[static_cast<std::size_t>(index)])
      throw ValidationError("attribute attr" + std::to_string(index) + " set twice in intervention");
    seen[static_cast<std::size_t>(index)] = true;
    if (value == "+1") {
      codes[index] = 1.0;
    } else if (value == "-1") {
      codes[index] = -1.0;
    } else if (value == "0") {
      codes[index] = 0.0;
    } else {
      throw ValidationError("intervention value for attr" + std::to_string(index) + " must be +1 or -1, got '" +
                            value + "'");
    }
  }
  return Intervention(ConditionVector(std::move(codes)));
}

std::string Intervention::to_string() const {
  std::string out;
  for (Index i = 0; i < codes_.size(); ++i) {
    if (codes_.code(i) == 0) continue;
    if (!out.empty()) out += ',';
    out += "attr" + std::to_string(i) + (codes_.code(i) > 0 ? "=+1" : "=-1");
  }
  return out;
}

Context Context::parse(const std::string& text, Index m) {
  Context context;
  if (trim(text).empty()) return context;
  for (const auto& item : split(trim(text), '&')) {
    const auto [index, value] = parse_assignment(item, m, "context");
    if (value != "0" && value != "1")
      throw ValidationError("context value for attr" + std::to_string(index) + " must be 0 or 1, got '" +
                            value + "'");
    context.require(index, value == "1");
  }
  return context;
}

Context& Context::require(Index attribute, bool value) {
  const auto pos = std::lower_bound(
      constraints_.begin(), constraints_.end(), attribute,
      [](const std::pair<Index, bool>& c, Index a) { return c.first < a; });
  if (pos != constraints_.end() && pos->first == attribute)
    throw ValidationError("context constrains attr" + std::to_string(attribute) + " more than once");
  constraints_.insert(pos, {attribute, value});
  return *this;
}

std::string Context::to_string() const {
  std::string out;
  for (const auto& [attribute, value] : constraints_) {
    if (!out.empty()) out += '&';
    out += "attr" + std::to_string(attribute) + '=' + (value ? '1' : '0');
  }
  return out;
}

bool Context::matches(const Vec& attribute_probabilities) const {
  for (const auto& [attribute, value] : constraints_) {
    if (attribute >= attribute_probabilities.size())
      throw ValidationError("context refers to attr" + std::to_string(attribute) + " beyond m");
    if ((attribute_probabilities[attribute] > 0.5) != value) return false;
  }
  return true;
}

ShiftFn learned_shifts(const ShiftPredictor& predictor) {
  return [&predictor](const Mat& latents, const Mat& codes) {
    return predict_shift(predictor, latents, codes);
  };
}

ShiftFn oracle_shifts(const WorldSpec& world) {
  return [&world](const Mat& latents, const Mat& codes) {
    validate_codes(codes);
    Mat out = latents;
    for (Index j = 0; j < latents.cols(); ++j)
      for (Index i = 0; i < codes.rows(); ++i)
        if (codes(i, j) != 0.0) out.col(j) = oracle_counterfactual(world, out.col(j), i, codes(i, j) > 0.0);
    return out;
  };
}

ReadoutFn classifier_readout(const AttributeClassifier& classifier) {
  return [&classifier](const Mat&, const Mat& images) { return predict_attributes(classifier, images); };
}

ReadoutFn perfect_readout(const WorldSpec& world) {
  return [&world](const Mat& latents, const Mat&) { return true_attributes(world, latents); };
}

ExplanationEngine::ExplanationEngine(const WorldSpec& world, ShiftFn shift, ReadoutFn readout,
                                     const TargetClassifier& target, EngineOptions options)
    : world_(&world),
      shift_(std::move(shift)),
      readout_(std::move(readout)),
      target_(&target),
      options_(options) {
  const Index expected = target.input_kind() == InputKind::kPixels ? world.n : world.m;
  if (target.input_dim() != expected)
    throw ValidationError("target classifier expects " + std::to_string(target.input_dim()) +
                          " inputs but the world provides " + std::to_string(expected));
}

Mat ExplanationEngine::shift(const Mat& latents, const Mat& codes) const {
  Mat out = shift_(latents, codes);
  if (out.rows() != latents.rows() || out.cols() != latents.cols())
    throw ValidationError("shift function changed the latent batch shape");
  if (!out.allFinite()) throw NumericError("shift produced non-finite latents");
  return out;
}

Mat ExplanationEngine::readout(const Mat& latents, const Mat& images) const {
  Mat out = readout_(latents, images);
  if (out.rows() != world_->m || out.cols() != latents.cols())
    throw ValidationError("attribute readout returned the wrong shape");
  return out;
}

Vec ExplanationEngine::target_probability(const Mat& images, const Mat& attributes) const {
  if (target_->input_kind() == InputKind::kPixels)
    return predict_target_batch(*target_, InputKind::kPixels, images);
  return predict_target_batch(*target_, InputKind::kAttributeProbabilities, attributes);
}

CounterfactualRecord counterfactual(const ExplanationEngine& engine, const Vec& z,
                                    const Intervention& iv) {
  const WorldSpec& world = engine.world();
  if (z.size() != world.d)
    throw ValidationError("latent has " + std::to_string(z.size()) + " entries, world d = " +
                          std::to_string(world.d));
  if (iv.codes().size() != world.m)
    throw ValidationError("intervention has " + std::to_string(iv.codes().size()) +
                          " codes, world m = " + std::to_string(world.m));
  CounterfactualRecord record;
  record.z = z;
  record.codes = iv.codes().codes();
  record.z_hat = engine.shift(Mat(z), Mat(record.codes)).col(0);
  record.image = decode(world, record.z);
  record.cf_image = decode(world, record.z_hat);
  record.attrs_before = engine.readout(Mat(record.z), Mat(record.image)).col(0);
  record.attrs_after = engine.readout(Mat(record.z_hat), Mat(record.cf_image)).col(0);
  const double before = engine.target_probability(Mat(record.image), Mat(record.attrs_before))[0];
  const double after = engine.target_probability(Mat(record.cf_image), Mat(record.attrs_after))[0];
  record.target_before = {before, classify(before)};
  record.target_after = {after, classify(after)};
  return record;
}

Json record_to_json(const CounterfactualRecord& record) {
  auto prediction = [](const TargetPrediction& p) {
    return Json{{"p", p.p}, {"class", p.positive ? 1 : 0}};
  };
  return {{"format", "cflens-record-v1"},
          {"codes", vec_to_json(record.codes)},
          {"z", vec_to_json(record.z)},
          {"z_hat", vec_to_json(record.z_hat)},
          {"image", vec_to_json(record.image)},
          {"cf_image", vec_to_json(record.cf_image)},
          {"target_before", prediction(record.target_before)},
          {"target_after", prediction(record.target_after)},
          {"attrs_before", vec_to_json(record.attrs_before)},
          {"attrs_after", vec_to_json(record.attrs_after)}};
}

CounterfactualRecord record_from_json(const Json& doc) {
  expect_format(doc, "cflens-record-v1");
  try {
    auto prediction = [](const Json& p) {
      return TargetPrediction{p.at("p").get<double>(), p.at("class").get<int>() == 1};
    };
    CounterfactualRecord record;
    record.codes = vec_from_json(doc.at("codes"));
    record.z = vec_from_json(doc.at("z"));
    record.z_hat = vec_from_json(doc.at("z_hat"));
    record.image = vec_from_json(doc.at("image"));
    record.cf_image = vec_from_json(doc.at("cf_image"));
    record.target_before = prediction(doc.at("target_before"));
    record.target_after = prediction(doc.at("target_after"));
    record.attrs_before = vec_from_json(doc.at("attrs_before"));
    record.attrs_after = vec_from_json(doc.at("attrs_after"));
    return record;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed cflens-record-v1 document: ") + e.what());
  }
}

Population evaluate_population(const ExplanationEngine& engine, const Mat& latents,
                               std::uint64_t seed) {
  const WorldSpec& world = engine.world();
  if (latents.cols() < 1) throw ValidationError("population must be nonempty");
  if (latents.rows() != world.d) throw ValidationError("population latents do not match world d");
  Population pop;
  pop.seed = seed;
  pop.latents = latents;
  const Index size = latents.cols();
  pop.attributes.resize(world.m, size);
  pop.target_p.resize(size);
  pop.cf_positive.resize(2 * world.m, size);

  const Index blocks = (size + kBlock - 1) / kBlock;
  parallel_for(blocks, engine.options().threads, [&](Index first_block, Index last_block) {
    for (Index b = first_block; b < last_block; ++b) {
      const Index begin = b * kBlock;
      const Index count = std::min(kBlock, size - begin);
      const Mat z = latents.middleCols(begin, count);
      const Mat images = decode(world, z);
      const Mat attrs = engine.readout(z, images);
      pop.attributes.middleCols(begin, count) = attrs;
      pop.target_p.segment(begin, count) = engine.target_probability(images, attrs);
      for (Index i = 0; i < world.m; ++i)
        for (const Direction dir : {Direction::kIncrease, Direction::kDecrease}) {
          const Mat z_hat = engine.shift(z, single_codes(world.m, i, dir, count));
          const Mat cf_images = decode(world, z_hat);
          const Vec p = engine.target_probability(cf_images, engine.readout(z_hat, cf_images));
          const Index row = 2 * i + (dir == Direction::kIncrease ? 0 : 1);
          for (Index j = 0; j < count; ++j) pop.cf_positive(row, begin + j) = classify(p[j]) ? 1.0 : 0.0;
        }
    }
  });
  return pop;
}

Population sample_population(const ExplanationEngine& engine, std::uint64_t seed, Index size) {
  const std::uint64_t stream_seed = CounterRng(seed).split(stream::kPopulation).key();
  return evaluate_population(engine, sample_latents(engine.world(), stream_seed, size), seed);
}

Estimate make_estimate(Index k, Index n) {
  Estimate e;
  e.k = k;
  e.n = n;
  if (n > 0) {
    e.value = static_cast<double>(k) / static_cast<double>(n);
    e.ci = wilson_interval(k, n);
  }
  return e;
}

Estimate estimate_query(const ExplanationEngine& engine, const Population& population,
                        const Intervention& iv, bool outcome, const Context& context) {
  const WorldSpec& world = engine.world();
  if (population.size() < 1) throw ValidationError("population must be nonempty");
  if (iv.codes().size() != world.m) throw ValidationError("intervention does not match world m");
  std::vector<Index> members;
  for (Index j = 0; j < population.size(); ++j)
    if (context.matches(population.attributes.col(j))) members.push_back(j);
  const auto n = static_cast<Index>(members.size());
  if (n == 0) return make_estimate(0, 0);

  std::vector<char> hit(members.size(), 0);
  const Index blocks = (n + kBlock - 1) / kBlock;
  parallel_for(blocks, engine.options().threads, [&](Index first_block, Index last_block) {
    for (Index b = first_block; b < last_block; ++b) {
      const Index begin = b * kBlock;
      const Index count = std::min(kBlock, n - begin);
      Mat z(world.d, count);
      for (Index j = 0; j < count; ++j) z.col(j) = population.latents.col(members[static_cast<std::size_t>(begin + j)]);
      const Mat codes = iv.codes().codes().replicate(1, count);
      const Mat z_hat = engine.shift(z, codes);
      const Mat images = decode(world, z_hat);
      const Vec p = engine.target_probability(images, engine.readout(z_hat, images));
      for (Index j = 0; j < count; ++j) hit[static_cast<std::size_t>(begin + j)] = classify(p[j]) == outcome;
    }
  });
  const auto k = static_cast<Index>(std::count(hit.begin(), hit.end(), 1));
  return make_estimate(k, n);
}

namespace {

Estimate flip_score(const ExplanationEngine& engine, const Population& population, Index attribute,
                    Direction direction, const Context& context, bool factual_positive) {
  if (population.size() < 1) throw ValidationError("population must be nonempty");
  if (attribute < 0 || attribute >= engine.world().m)
    throw ValidationError("attribute index " + std::to_string(attribute) + " out of range");
  const bool strict = engine.options().condition_on_factual_attribute;
  // Under the strict variant an increase applies to members whose attribute
  // is factually off, a decrease to those where it is on.
  const bool required_attribute = direction == Direction::kDecrease;
  Index k = 0;
  Index n = 0;
  for (Index j = 0; j < population.size(); ++j) {
    if (population.positive(j) != factual_positive) continue;
    if (!context.matches(population.attributes.col(j))) continue;
    if (strict && (population.attributes(attribute, j) > 0.5) != required_attribute) continue;
    ++n;
    if (population.cf_positive_at(attribute, direction, j) != factual_positive) ++k;
  }
  return make_estimate(k, n);
}

}  // namespace

Estimate necessity(const ExplanationEngine& engine, const Population& population, Index attribute,
                   Direction direction, const Context& context) {
  return flip_score(engine, population, attribute, direction, context, true);
}

Estimate sufficiency(const ExplanationEngine& engine, const Population& population, Index attribute,
                     Direction direction, const Context& context) {
  return flip_score(engine, population, attribute, direction, context, false);
}

const ScoreEntry& ScoreReport::at(Index attribute, Direction direction, ScoreKind kind) const {
  for (const auto& entry : entries)
    if (entry.attribute == attribute && entry.direction == direction && entry.kind == kind) return entry;
  throw ValidationError("score report has no entry for attr" + std::to_string(attribute));
}

bool ScoreReport::any_undefined() const {
  return std::any_of(entries.begin(), entries.end(),
                     [](const ScoreEntry& e) { return !e.estimate.defined(); });
}

ScoreReport contextual_scores(const ExplanationEngine& engine, const Population& population,
                              const Context& context) {
  ScoreReport report;
  report.population_seed = population.seed;
  report.population_size = population.size();
  report.context = context.to_string();
  report.condition_on_factual_attribute = engine.options().condition_on_factual_attribute;
  for (Index i = 0; i < engine.world().m; ++i)
    for (const Direction dir : {Direction::kIncrease, Direction::kDecrease}) {
      report.entries.push_back({i, dir, ScoreKind::kNecessity, necessity(engine, population, i, dir, context)});
      report.entries.push_back({i, dir, ScoreKind::kSufficiency, sufficiency(engine, population, i, dir, context)});
    }
  return report;
}

std::string report_to_csv(const ScoreReport& report) {
  std::ostringstream out;
  out << "attribute,direction,kind,estimate,k,n,ci_lo,ci_hi,context\n";
  for (const auto& e : report.entries) {
    out << e.attribute << ',' << symbol(e.direction) << ',' << symbol(e.kind) << ',';
    if (e.estimate.defined()) {
      out << format_double(*e.estimate.value) << ',' << e.estimate.k << ',' << e.estimate.n << ','
          << format_double(e.estimate.ci->lo) << ',' << format_double(e.estimate.ci->hi);
    } else {
      out << "undefined," << e.estimate.k << ',' << e.estimate.n << ",,";
    }
    out << ',' << report.context << '\n';
  }
  return out.str();
}

Json report_to_json(const ScoreReport& report) {
  Json entries = Json::array();
  for (const auto& e : report.entries) {
    Json entry = {{"attribute", e.attribute},
                  {"direction", symbol(e.direction)},
                  {"kind", symbol(e.kind)},
                  {"k", e.estimate.k},
                  {"n", e.estimate.n},
                  {"defined", e.estimate.defined()}};
    entry["estimate"] = e.estimate.defined() ? Json(*e.estimate.value) : Json(nullptr);
    entry["ci_lo"] = e.estimate.defined() ? Json(e.estimate.ci->lo) : Json(nullptr);
    entry["ci_hi"] = e.estimate.defined() ? Json(e.estimate.ci->hi) : Json(nullptr);
    entries.push_back(std::move(entry));
  }
  return {{"format", "cflens-scores-v1"},
          {"population_seed", report.population_seed},
          {"population_size", report.population_size},
          {"context", report.context},
          {"condition_on_factual_attribute", report.condition_on_factual_attribute},
          {"entries", std::move(entries)}};
}

ScoreReport report_from_json(const Json& doc) {
  expect_format(doc, "cflens-scores-v1");
  try {
    ScoreReport report;
    report.population_seed = doc.at("population_seed").get<std::uint64_t>();
    report.population_size = doc.at("population_size").get<Index>();
    report.context = doc.at("context").get<std::string>();
    report.condition_on_factual_attribute = doc.at("condition_on_factual_attribute").get<bool>();
    for (const auto& entry : doc.at("entries")) {
      ScoreEntry e;
      e.attribute = entry.at("attribute").get<Index>();
      e.direction = entry.at("direction").get<std::string>() == "+" ? Direction::kIncrease : Direction::kDecrease;
      e.kind = entry.at("kind").get<std::string>() == "NEC" ? ScoreKind::kNecessity : ScoreKind::kSufficiency;
      e.estimate = make_estimate(entry.at("k").get<Index>(), entry.at("n").get<Index>());
      report.entries.push_back(std::move(e));
    }
    return report;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed cflens-scores-v1 document: ") + e.what());
  }
}

}  // namespace cflens

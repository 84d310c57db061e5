#include "commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <thread>

#include "CLI11.hpp"

#include "cflens/baseline.hpp"
#include "cflens/io.hpp"
#include "cflens/rng.hpp"

namespace cflens::cli {

namespace fs = std::filesystem;

namespace {

constexpr Index kGridSamples = 5;
constexpr Index kFrequencySamples = 10000;

// Reference pipeline used by `baseline` when no checkpoints are given.
constexpr Index kReferenceD = 16;
constexpr Index kReferenceN = 64;
constexpr Index kReferenceTrain = 8192;
constexpr Index kReferenceVal = 2000;
constexpr int kReferenceEpochs = 40;

std::string option_name(const std::string& key) {
  std::string name = key;
  std::replace(name.begin(), name.end(), '_', '-');
  return "--" + name;
}

// Removes `--config <file>` and appends every key of the JSON object that the
// command line does not already set.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> result;
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ValidationError("--config needs a file path");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      result.push_back(args[i]);
    }
  }
  if (config_path.empty()) return result;
  const Json doc = read_json_file(config_path);
  if (!doc.is_object()) throw ValidationError("config file must hold a JSON object");
  for (const auto& [key, value] : doc.items()) {
    const std::string name = option_name(key);
    const bool given = std::any_of(result.begin(), result.end(), [&](const std::string& a) {
      return a == name || a.rfind(name + "=", 0) == 0;
    });
    if (given) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) result.push_back(name);
    } else if (value.is_string()) {
      result.push_back(name);
      result.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      result.push_back(name);
      result.push_back(value.dump());
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& item : value) joined += (joined.empty() ? "" : ",") + item.dump();
      result.push_back(name);
      result.push_back(joined);
    } else {
      throw ValidationError("config key '" + key + "' has an unsupported value");
    }
  }
  return result;
}

void check_dims(const std::string& what, Index got, Index expected, const char* dim) {
  if (got != expected)
    throw ValidationError(what + " declares " + dim + " = " + std::to_string(got) + " but the world has " +
                          std::to_string(expected));
}

Vec parse_list(const std::string& text) {
  std::vector<double> values;
  std::string item;
  for (char c : text + ",") {
    if (c == ',') {
      if (!item.empty()) {
        try {
          std::size_t used = 0;
          values.push_back(std::stod(item, &used));
          if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
          throw ValidationError("cannot parse '" + item + "' as a number");
        }
      }
      item.clear();
    } else if (c != ' ') {
      item += c;
    }
  }
  return Eigen::Map<Vec>(values.data(), static_cast<Index>(values.size()));
}

// (decrease | original | increase) strips for the first few members.
std::string attribute_grid(const ExplanationEngine& engine, const Population& pop, Index attribute) {
  const WorldSpec& world = engine.world();
  const auto [w, h] = image_shape(world.n);
  const Index rows = std::min(kGridSamples, pop.size());
  const Index width = 3 * w + 2;
  const Index height = rows * h + (rows - 1);
  Vec canvas = Vec::Ones(width * height);
  const Mat z = pop.latents.leftCols(rows);
  Mat codes = Mat::Zero(world.m, rows);
  codes.row(attribute).setConstant(-1.0);
  const Mat lower = decode(world, engine.shift(z, codes));
  codes.row(attribute).setConstant(1.0);
  const Mat upper = decode(world, engine.shift(z, codes));
  const Mat original = decode(world, z);
  for (Index r = 0; r < rows; ++r) {
    const Mat* panels[] = {&lower, &original, &upper};
    for (Index p = 0; p < 3; ++p)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
          canvas[(r * (h + 1) + y) * width + p * (w + 1) + x] = (*panels[p])(y * w + x, r);
  }
  return to_pgm(canvas, width, height);
}

std::string image_pgm(const Vec& pixels) {
  const auto [w, h] = image_shape(pixels.size());
  return to_pgm(pixels, w, h);
}

void print_report(std::ostream& out, const ScoreReport& report) {
  out << "population " << report.population_size << " seed " << report.population_seed;
  if (!report.context.empty()) out << " context " << report.context;
  out << '\n';
  for (const auto& e : report.entries) {
    out << "  attr" << e.attribute << ' ' << symbol(e.kind) << symbol(e.direction) << ' ';
    if (e.estimate.defined())
      out << std::fixed << std::setprecision(3) << *e.estimate.value << std::defaultfloat << " ("
          << e.estimate.k << '/' << e.estimate.n << ")\n";
    else
      out << "undefined (0/0)\n";
  }
}

ExplanationEngine make_engine(const LoadedModels& models, const RunConfig& config) {
  EngineOptions options;
  options.condition_on_factual_attribute = config.condition_on_factual_attribute;
  options.threads = resolve_threads(config.threads);
  ShiftFn shift = config.oracle_shifts ? oracle_shifts(*models.world) : learned_shifts(*models.shifter);
  return ExplanationEngine(*models.world, std::move(shift), classifier_readout(*models.attributes),
                           *models.target, options);
}

void require(bool present, const std::string& message) {
  if (!present) throw ValidationError(message);
}

// --- commands ---------------------------------------------------------------

int cmd_gen_world(const WorldOptions& options, const RunConfig& config, std::ostream& out) {
  const WorldSpec world = make_world(options);
  const fs::path path = fs::path(config.out) / "world.json";
  write_json_file(path, world_to_json(world));
  const Mat bits = true_attributes(world, sample_latents(world, config.seed, kFrequencySamples));
  out << "wrote " << path.string() << " (d = " << world.d << ", m = " << world.m << ", n = " << world.n
      << ")\nattribute frequencies over " << kFrequencySamples << " prior samples:\n";
  for (Index i = 0; i < world.m; ++i) out << "  attr" << i << ' ' << bits.row(i).mean() << '\n';
  return kOk;
}

struct TrainFlags {
  std::string which;
  Index n_train = kReferenceTrain;
  Index n_val = kReferenceVal;
  int epochs = kReferenceEpochs;
  ShiftTrainConfig shift;
  double learning_rate = 1e-3;
};

int cmd_train(const TrainFlags& flags, const RunConfig& config, std::ostream& out) {
  require(!config.world.empty(), "train needs --world <world.json> (create one with `cflens gen-world`)");
  if (flags.which == "attributes") {
    RunConfig only_world;
    only_world.world = config.world;
    const WorldSpec world = *load_models(only_world).world;
    std::string csv = "epoch,loss\n";
    AttributeTrainOptions options;
    options.on_epoch = [&](int epoch, double loss) {
      csv += std::to_string(epoch) + ',' + format_double(loss) + '\n';
    };
    AttributeClassifier classifier;
    try {
      classifier = train_attribute_classifier(world, flags.n_train, flags.n_val, flags.epochs, config.seed, options);
    } catch (const TrainingFailedError& e) {
      write_text_file(fs::path(config.out) / "attributes_loss.csv", csv);
      throw;
    }
    write_json_file(fs::path(config.out) / "attributes.json", attribute_classifier_to_json(classifier));
    write_text_file(fs::path(config.out) / "attributes_loss.csv", csv);
    out << "attribute classifier held-out accuracy:";
    for (Index i = 0; i < classifier.validation_accuracy.size(); ++i)
      out << " attr" << i << '=' << classifier.validation_accuracy[i];
    out << "\nwrote " << (fs::path(config.out) / "attributes.json").string() << '\n';
    return kOk;
  }
  require(!config.attributes.empty(),
          "train --which shifter needs --attributes <attributes.json>; create it with "
          "`cflens train --which attributes --world <world.json>`");
  RunConfig inputs;
  inputs.world = config.world;
  inputs.attributes = config.attributes;
  const LoadedModels models = load_models(inputs);
  ShiftTrainConfig shift = flags.shift;
  shift.seed = config.seed;
  shift.optimizer.learning_rate = flags.learning_rate;
  const ShiftTrainResult result = train_shift_predictor(shift, *models.world, *models.attributes);
  write_json_file(fs::path(config.out) / "shifter.json", shifter_to_json(result.predictor));
  write_text_file(fs::path(config.out) / "loss.csv", loss_history_csv(result.history));
  if (!result.history.empty()) {
    const auto [first, last] = windowed_endpoints(result.history, 100, &LossRecord::attribute);
    out << "attribute loss (100-iteration window) " << first << " -> " << last << '\n';
  }
  out << "wrote " << (fs::path(config.out) / "shifter.json").string() << '\n';
  return kOk;
}

int cmd_gen_target(const std::string& beta_text, double beta0, const RunConfig& config, std::ostream& out) {
  const Vec beta = beta_text.empty() ? reference_beta() : parse_list(beta_text);
  if (beta.size() < 1) throw ValidationError("--beta must list at least one coefficient");
  if (!config.world.empty()) {
    RunConfig only_world;
    only_world.world = config.world;
    check_dims("target --beta", beta.size(), load_models(only_world).world->m, "m");
  }
  const fs::path path = fs::path(config.out) / "target.json";
  write_json_file(path, target_to_json(logistic_target(beta, beta0)));
  out << "wrote " << path.string() << '\n';
  return kOk;
}

int write_scores(const ScoreReport& report, const RunConfig& config, std::ostream& out) {
  write_text_file(fs::path(config.out) / "scores.csv", report_to_csv(report));
  write_json_file(fs::path(config.out) / "scores.json", report_to_json(report));
  print_report(out, report);
  if (report.any_undefined()) {
    out << "report contains undefined scores (empty denominators)\n";
    return kUndefinedScores;
  }
  return kOk;
}

int cmd_explain(const RunConfig& config, std::ostream& out) {
  require(!config.world.empty() && !config.attributes.empty() && !config.target.empty(),
          "explain needs --world, --attributes and --target");
  require(config.oracle_shifts || !config.shifter.empty(), "explain needs --shifter (or --oracle-shifts)");
  if (config.population < 1) throw ValidationError("--population must be >= 1");
  const LoadedModels models = load_models(config);
  const Context context = Context::parse(config.context, models.world->m);
  const ExplanationEngine engine = make_engine(models, config);
  const Population pop = sample_population(engine, config.seed, config.population);
  const ScoreReport report = contextual_scores(engine, pop, context);
  for (Index i = 0; i < models.world->m; ++i)
    write_text_file(fs::path(config.out) / ("grid_attr" + std::to_string(i) + ".pgm"),
                    attribute_grid(engine, pop, i));
  return write_scores(report, config, out);
}

int cmd_baseline(const std::string& beta_text, double beta0, RunConfig config, std::ostream& out) {
  const bool any = !config.world.empty() || !config.attributes.empty() || !config.shifter.empty();
  const bool all = !config.world.empty() && !config.attributes.empty() &&
                   (!config.shifter.empty() || config.oracle_shifts);
  if (any && !all)
    throw ValidationError("baseline takes either no checkpoints or all of --world, --attributes, --shifter");

  const Vec beta = beta_text.empty() ? reference_beta() : parse_list(beta_text);
  config.target.clear();
  LoadedModels models;
  if (all) {
    models = load_models(config);
  } else {
    out << "building reference pipeline (d = " << kReferenceD << ", m = " << beta.size()
        << ", n = " << kReferenceN << ", seed " << config.seed << ")\n";
    WorldOptions world_options;
    world_options.d = kReferenceD;
    world_options.m = beta.size();
    world_options.n = kReferenceN;
    world_options.seed = config.seed;
    models.world = make_world(world_options);
    models.attributes = train_attribute_classifier(*models.world, kReferenceTrain, kReferenceVal,
                                                   kReferenceEpochs, config.seed);
    write_json_file(fs::path(config.out) / "world.json", world_to_json(*models.world));
    write_json_file(fs::path(config.out) / "attributes.json", attribute_classifier_to_json(*models.attributes));
    if (!config.oracle_shifts) {
      ShiftTrainConfig shift;
      shift.seed = config.seed;
      ShiftTrainResult trained = train_shift_predictor(shift, *models.world, *models.attributes);
      write_json_file(fs::path(config.out) / "shifter.json", shifter_to_json(trained.predictor));
      write_text_file(fs::path(config.out) / "loss.csv", loss_history_csv(trained.history));
      models.shifter = std::move(trained.predictor);
    }
  }
  check_dims("--beta", beta.size(), models.world->m, "m");
  models.target = logistic_target(beta, beta0);
  const ExplanationEngine engine = make_engine(models, config);
  const Population pop = sample_population(engine, config.seed, config.population);
  const ScoreReport scores = global_scores(engine, pop);
  const BaselineReport baseline = baseline_alignment(scores, beta);
  write_text_file(fs::path(config.out) / "baseline.csv", baseline_to_csv(baseline));
  write_json_file(fs::path(config.out) / "baseline.json", baseline_to_json(baseline));
  out << baseline_to_csv(baseline) << "spearman rho(beta, SUF+) = " << baseline.rho_beta_suf_plus
      << "\nspearman rho(-beta, NEC+) = " << baseline.rho_neg_beta_nec_plus
      << "\nspearman rho(-beta, SUF-) = " << baseline.rho_neg_beta_suf_minus
      << "\nspearman rho(beta, NEC-) = " << baseline.rho_beta_nec_minus << '\n';
  return write_scores(scores, config, out);
}

int cmd_counterfactual(const std::string& intervention, std::optional<std::uint64_t> latent_seed,
                       Index index, const RunConfig& config, std::ostream& out) {
  require(!config.world.empty() && !config.attributes.empty() && !config.target.empty(),
          "counterfactual needs --world, --attributes and --target");
  require(config.oracle_shifts || !config.shifter.empty(),
          "counterfactual needs --shifter (or --oracle-shifts)");
  const LoadedModels models = load_models(config);
  const Intervention iv = Intervention::parse(intervention, models.world->m);
  if (index < 0) throw ValidationError("--index must be >= 0");
  const ExplanationEngine engine = make_engine(models, config);
  const Vec z = sample_latent(*models.world, latent_seed.value_or(config.seed), index);
  const CounterfactualRecord record = counterfactual(engine, z, iv);
  write_json_file(fs::path(config.out) / "counterfactual.json", record_to_json(record));
  write_text_file(fs::path(config.out) / "factual.pgm", image_pgm(record.image));
  write_text_file(fs::path(config.out) / "counterfactual.pgm", image_pgm(record.cf_image));
  out << "intervention " << iv.to_string() << "\n  target p " << record.target_before.p << " -> "
      << record.target_after.p << " (class " << record.target_before.positive << " -> "
      << record.target_after.positive << ")\n  |z_hat - z| = " << (record.z_hat - record.z).norm() << '\n';
  return kOk;
}

}  // namespace

Index resolve_threads(Index requested) {
  if (requested > 0) return requested;
  Index threads = std::max<Index>(1, static_cast<Index>(std::thread::hardware_concurrency()));
  if (const char* cap = std::getenv("CFLENS_THREADS")) {
    try {
      const long value = std::stol(cap);
      if (value >= 1) threads = std::min<Index>(threads, value);
    } catch (const std::exception&) {
      throw ValidationError("CFLENS_THREADS must be a positive integer");
    }
  }
  return threads;
}

LoadedModels load_models(const RunConfig& config) {
  LoadedModels models;
  auto load = [](const std::string& path, const char* flag) {
    if (!fs::exists(path)) throw ValidationError(std::string(flag) + ": file '" + path + "' does not exist");
    return read_json_file(path);
  };
  if (config.world.empty()) throw ValidationError("a --world checkpoint is required");
  models.world = world_from_json(load(config.world, "--world"));
  const WorldSpec& world = *models.world;
  if (!config.attributes.empty()) {
    models.attributes = attribute_classifier_from_json(load(config.attributes, "--attributes"));
    check_dims("attribute classifier", models.attributes->net.in_dim(), world.n, "n");
    check_dims("attribute classifier", models.attributes->net.out_dim(), world.m, "m");
  }
  if (!config.shifter.empty()) {
    models.shifter = shifter_from_json(load(config.shifter, "--shifter"));
    check_dims("shifter", models.shifter->d, world.d, "d");
    check_dims("shifter", models.shifter->m, world.m, "m");
  }
  if (!config.target.empty()) {
    models.target = target_from_json(load(config.target, "--target"));
    if (models.target->input_kind() == InputKind::kPixels)
      check_dims("target classifier", models.target->input_dim(), world.n, "n");
    else
      check_dims("target classifier", models.target->input_dim(), world.m, "m");
  }
  return models;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"cflens: counterfactual necessity and sufficiency explanations"};
  app.require_subcommand(1);
  RunConfig config;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--out", config.out, "Output directory")->capture_default_str();
    cmd->add_option("--seed", config.seed, "Seed")->capture_default_str();
    cmd->add_option("--threads", config.threads, "Worker threads (0: auto, capped by CFLENS_THREADS)");
  };
  auto add_models = [&](CLI::App* cmd, bool with_target) {
    cmd->add_option("--world", config.world, "World checkpoint (cflens-world-v1)");
    cmd->add_option("--attributes", config.attributes, "Attribute classifier checkpoint");
    cmd->add_option("--shifter", config.shifter, "Shift predictor checkpoint");
    if (with_target) cmd->add_option("--target", config.target, "Target classifier checkpoint");
    cmd->add_flag("--oracle-shifts", config.oracle_shifts, "Use exact world projections instead of the shifter");
  };

  WorldOptions world_options;
  auto* gen_world = app.add_subcommand("gen-world", "Generate a synthetic world");
  add_common(gen_world);
  gen_world->add_option("--d", world_options.d, "Latent dimension")->capture_default_str();
  gen_world->add_option("--m", world_options.m, "Attribute count")->capture_default_str();
  gen_world->add_option("--n", world_options.n, "Pixel count")->capture_default_str();
  gen_world->add_option("--hidden", world_options.hidden, "Decoder hidden width")->capture_default_str();
  gen_world->add_option("--margin", world_options.margin, "Oracle margin")->capture_default_str();

  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "Train the attribute classifier or the shift predictor");
  add_common(train);
  train->add_option("--which", train_flags.which, "attributes | shifter")
      ->required()
      ->check(CLI::IsMember({"attributes", "shifter"}));
  train->add_option("--world", config.world, "World checkpoint");
  train->add_option("--attributes", config.attributes, "Attribute classifier checkpoint (shifter only)");
  train->add_option("--n-train", train_flags.n_train)->capture_default_str();
  train->add_option("--n-val", train_flags.n_val)->capture_default_str();
  train->add_option("--epochs", train_flags.epochs)->capture_default_str();
  train->add_option("--iterations", train_flags.shift.iterations)->capture_default_str();
  train->add_option("--batch", train_flags.shift.batch)->capture_default_str();
  train->add_option("--gamma", train_flags.shift.gamma, "Faithfulness ratio")->capture_default_str();
  train->add_option("--p-unset", train_flags.shift.p_unset)->capture_default_str();
  train->add_option("--lr", train_flags.learning_rate, "Adam learning rate")->capture_default_str();

  std::string beta_text;
  double beta0 = 0.0;
  auto* gen_target = app.add_subcommand("gen-target", "Write a logistic target classifier");
  add_common(gen_target);
  gen_target->add_option("--beta", beta_text, "Comma-separated coefficients");
  gen_target->add_option("--beta0", beta0, "Intercept")->capture_default_str();
  gen_target->add_option("--world", config.world, "World checkpoint to check m against");

  auto* explain = app.add_subcommand("explain", "Estimate NEC/SUF scores over a sampled population");
  add_common(explain);
  add_models(explain, true);
  explain->add_option("--population", config.population, "Population size")->capture_default_str();
  explain->add_option("--context", config.context, "Subgroup, e.g. attr0=1&attr2=0");
  explain->add_flag("--condition-on-factual-attribute", config.condition_on_factual_attribute);

  auto* baseline = app.add_subcommand("baseline", "Explain a known-coefficient logistic target");
  add_common(baseline);
  add_models(baseline, false);
  baseline->add_option("--beta", beta_text, "Comma-separated coefficients");
  baseline->add_option("--beta0", beta0, "Intercept")->capture_default_str();
  baseline->add_option("--population", config.population, "Population size")->capture_default_str();
  baseline->add_flag("--condition-on-factual-attribute", config.condition_on_factual_attribute);

  std::string intervention;
  std::optional<std::uint64_t> latent_seed;
  Index index = 0;
  auto* cf = app.add_subcommand("counterfactual", "Trace a single counterfactual");
  add_common(cf);
  add_models(cf, true);
  cf->add_option("--intervention", intervention, "e.g. attr2=+1,attr4=-1")->required();
  cf->add_option("--latent-seed", latent_seed, "Latent stream seed (default: --seed)");
  cf->add_option("--index", index, "Latent index within the stream")->capture_default_str();

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }

  try {
    if (*gen_world) return cmd_gen_world(world_options, config, out);
    if (*train) return cmd_train(train_flags, config, out);
    if (*gen_target) return cmd_gen_target(beta_text, beta0, config, out);
    if (*explain) return cmd_explain(config, out);
    if (*baseline) return cmd_baseline(beta_text, beta0, config, out);
    if (*cf) return cmd_counterfactual(intervention, latent_seed, index, config, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const TrainingFailedError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace cflens::cli

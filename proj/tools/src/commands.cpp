#include "commands.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hybridpool/design.hpp"
#include "hybridpool/error.hpp"
#include "hybridpool/estimate.hpp"
#include "hybridpool/fisher.hpp"
#include "hybridpool/io.hpp"
#include "hybridpool/simulate.hpp"

namespace hybridpool::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

// Flag values shared by every command. Each one, when given, overrides the
// matching key of the --config document.
struct Flags {
  std::string config;
  std::string out;
  std::string seed;
  std::string llod;
  std::string family;
  std::string data;
  std::string header;
  std::string raw;
  std::string free;
  std::string fix;
  std::string alphas;
  int replications = 0;
  int threads = 1;
};

[[noreturn]] void fail(const std::string& message) { throw ConfigError(message); }

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(' ');
    const auto last = item.find_last_not_of(' ');
    if (first != std::string::npos) out.push_back(item.substr(first, last - first + 1));
  }
  return out;
}

// Reals in configs may be numbers or the strings "inf" / "-inf".
double real_value(const json& j, const std::string& key) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    if (const auto v = io::parse_double(j.get<std::string>())) return *v;
  }
  fail("'" + key + "' must be a number");
}

json real_json(double v) { return std::isfinite(v) ? json(v) : json(io::format_double(v)); }

double parse_real_flag(const std::string& text, const char* name) {
  const auto v = io::parse_double(text);
  if (!v || std::isnan(*v)) fail(std::string("--") + name + " is not a number: '" + text + "'");
  return *v;
}

class Config {
 public:
  Config(json doc, std::string command, std::set<std::string> allowed)
      : doc_(std::move(doc)), command_(std::move(command)), allowed_(std::move(allowed)) {
    if (!doc_.is_object()) fail("config must be a JSON object");
    if (doc_.contains("command")) {
      if (doc_["command"] != command_) {
        fail("config was written for '" + doc_["command"].dump() + "', not '" + command_ + "'");
      }
      doc_.erase("command");
    }
  }

  void check_keys() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!allowed_.contains(key)) fail("unknown config key '" + key + "' for " + command_);
    }
  }

  bool has(const std::string& key) const { return doc_.contains(key); }
  json& operator[](const std::string& key) { return doc_[key]; }
  const json& at(const std::string& key) const {
    if (!doc_.contains(key)) fail("config key '" + key + "' is required for " + command_);
    return doc_.at(key);
  }

  int integer(const std::string& key) const {
    const auto& j = at(key);
    if (!j.is_number_integer()) fail("'" + key + "' must be an integer");
    return j.get<int>();
  }
  int integer_or(const std::string& key, int fallback) const {
    return has(key) ? integer(key) : fallback;
  }
  double real(const std::string& key) const { return real_value(at(key), key); }
  double real_or(const std::string& key, double fallback) const {
    return has(key) ? real(key) : fallback;
  }
  std::string text(const std::string& key) const {
    const auto& j = at(key);
    if (!j.is_string()) fail("'" + key + "' must be a string");
    return j.get<std::string>();
  }
  std::string text_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
  }
  std::uint64_t seed() const {
    if (!has("seed")) return 1;
    const auto& j = doc_.at("seed");
    if (!j.is_number_unsigned()) fail("'seed' must be a non-negative integer");
    return j.get<std::uint64_t>();
  }
  std::vector<double> reals(const std::string& key) const {
    const auto& j = at(key);
    if (!j.is_array()) fail("'" + key + "' must be an array");
    std::vector<double> out;
    for (const auto& v : j) out.push_back(real_value(v, key));
    return out;
  }

  json sidecar() const {
    json j = doc_;
    j["command"] = command_;
    return j;
  }

 private:
  json doc_;
  std::string command_;
  std::set<std::string> allowed_;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  const std::string text = io::read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail("config '" + path + "' is not valid JSON: " + e.what());
  }
}

std::uint64_t parse_seed_flag(const std::string& text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail("--seed must be an unsigned 64-bit integer: '" + text + "'");
  }
  return v;
}

// Applies the flags shared by several commands onto the config document.
void apply_common(Config& cfg, const Flags& flags, bool llod_list) {
  if (!flags.seed.empty()) cfg["seed"] = parse_seed_flag(flags.seed);
  if (!flags.family.empty()) cfg["family"] = flags.family;
  if (!flags.llod.empty()) {
    const double v = parse_real_flag(flags.llod, "llod");
    if (llod_list) {
      cfg["llods"] = json::array({real_json(v)});
    } else {
      cfg["llod"] = real_json(v);
    }
  }
  if (!flags.alphas.empty()) {
    json list = json::array();
    for (const auto& a : split_list(flags.alphas)) list.push_back(parse_real_flag(a, "alphas"));
    cfg["alphas"] = list;
  }
  if (flags.replications > 0) cfg["replications"] = flags.replications;
  if (!flags.free.empty()) cfg["free"] = split_list(flags.free);
  if (!flags.fix.empty()) {
    json fixed = json::object();
    for (const auto& item : split_list(flags.fix)) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) fail("--fix expects name=value, got '" + item + "'");
      fixed[item.substr(0, eq)] = parse_real_flag(item.substr(eq + 1), "fix");
    }
    cfg["fixed"] = fixed;
  }
}

Family family_of(const Config& cfg, Family fallback = Family::kNormal) {
  return cfg.has("family") ? parse_family(cfg.text("family")) : fallback;
}

ModelSpec model_of(const Config& cfg, Family family) {
  const json& m = cfg.at("model");
  if (!m.is_object()) fail("'model' must be an object");
  const auto names = parameter_names(family);
  ParamVector v{0.0, 0.0, 0.0, 0.0};
  std::array<bool, kParamCount> seen{};
  for (const auto& [key, value] : m.items()) {
    const std::size_t i = parameter_index(family, key);
    v[i] = real_value(value, key);
    seen[i] = true;
  }
  for (std::size_t i = 0; i < 2; ++i) {
    if (!seen[i]) fail("model is missing '" + std::string(names[i]) + "'");
  }
  return ModelSpec::from_params(family, v);
}

std::optional<ParamMask> mask_of(const Config& cfg, Family family, const std::string& key) {
  if (!cfg.has(key)) return std::nullopt;
  const auto& list = cfg.at(key);
  if (!list.is_array()) fail("'" + key + "' must be an array of parameter names");
  ParamMask mask{};
  for (const auto& name : list) {
    if (!name.is_string()) fail("'" + key + "' must be an array of parameter names");
    mask[parameter_index(family, name.get<std::string>())] = true;
  }
  return mask;
}

std::vector<double> alphas_of(const Config& cfg, int total_specimens, int total_assays,
                              std::optional<ThreeAssayExtras> extras) {
  if (cfg.has("alphas")) return cfg.reals("alphas");
  if (cfg.has("alpha_count")) {
    const int count = cfg.integer("alpha_count");
    return extras ? alpha_grid(total_specimens, total_assays, count, extras->beta,
                               extras->second_pool_size)
                  : alpha_grid(total_specimens, total_assays, count);
  }
  fail("give either 'alphas' or 'alpha_count'");
}

std::optional<ThreeAssayExtras> extras_of(const Config& cfg) {
  if (cfg.has("beta") != cfg.has("p2")) fail("'beta' and 'p2' go together");
  if (!cfg.has("beta")) return std::nullopt;
  return ThreeAssayExtras{cfg.real("beta"), cfg.integer("p2")};
}

void emit(const Flags& flags, const Config& cfg, const std::string& content,
          std::ostream& out) {
  if (flags.out.empty()) {
    out << content;
    return;
  }
  io::write_file_atomic(flags.out, content);
  io::write_file_atomic(flags.out + ".config.json", cfg.sidecar().dump(2) + '\n');
}

int cmd_sweep(const Flags& flags, std::ostream& out) {
  Config cfg(load_config(flags.config), "sweep",
             {"family", "model", "N", "n", "llods", "alphas", "alpha_count", "beta", "p2",
              "free", "backend", "replications", "seed"});
  apply_common(cfg, flags, true);
  cfg.check_keys();

  const Family family = family_of(cfg);
  const ModelSpec model = model_of(cfg, family);
  const int total_specimens = cfg.integer("N");
  const int total_assays = cfg.integer("n");
  const auto llods = cfg.reals("llods");
  if (llods.empty()) fail("'llods' is empty");
  const auto extras = extras_of(cfg);
  const auto alphas = alphas_of(cfg, total_specimens, total_assays, extras);
  const auto free = mask_of(cfg, family, "free");
  const std::string backend =
      cfg.text_or("backend", family == Family::kNormal ? "analytic" : "monte_carlo");
  if (backend != "analytic" && backend != "monte_carlo") {
    fail("backend must be 'analytic' or 'monte_carlo'");
  }
  if (backend == "analytic" && family != Family::kNormal) {
    fail("the analytic backend supports the normal family only");
  }
  if (backend == "monte_carlo" && extras) {
    fail("the monte_carlo backend supports two-assay designs only");
  }

  std::vector<SweepResult> results;
  for (double llod : llods) {
    if (backend == "analytic") {
      results.push_back(sweep_alpha(model, total_specimens, total_assays, llod, alphas, extras,
                                    free, flags.threads));
    } else {
      results.push_back(monte_carlo_sweep(model, total_specimens, total_assays, llod, alphas,
                                          cfg.integer_or("replications", 1000), cfg.seed(),
                                          free, flags.threads));
    }
  }
  emit(flags, cfg, io::sweep_to_csv(results, backend == "monte_carlo"), out);
  return kExitOk;
}

io::DatasetHeader header_for(const Config& cfg, const std::string& data_path) {
  io::DatasetHeader header;
  std::string path = cfg.text_or("header", "");
  if (path.empty() && fs::exists(data_path + ".json")) path = data_path + ".json";
  if (!path.empty()) header = io::dataset_header_from_json(io::read_text_file(path));
  if (cfg.has("llod")) header.llod = cfg.real("llod");
  return header;
}

int cmd_fit(const Flags& flags, std::ostream& out) {
  Config cfg(load_config(flags.config), "fit",
             {"data", "header", "llod", "family", "free", "fixed", "seed"});
  apply_common(cfg, flags, false);
  if (!flags.data.empty()) cfg["data"] = flags.data;
  if (!flags.header.empty()) cfg["header"] = flags.header;
  cfg.check_keys();

  const std::string data_path = cfg.text("data");
  const io::DatasetHeader header = header_for(cfg, data_path);
  Dataset data = io::dataset_from_csv(io::read_text_file(data_path), header);
  const Family family = family_of(cfg, header.family.value_or(Family::kNormal));
  if (cfg.has("family")) data.family = family;

  ParamMask free = mask_of(cfg, family, "free").value_or(default_free_mask(family));
  ParamVector base = family == Family::kNormal ? ParamVector{0.0, 1.0, 0.0, 0.0}
                                               : ParamVector{1.0, 1.0, 0.0, 0.0};
  if (cfg.has("fixed")) {
    const auto& fixed = cfg.at("fixed");
    if (!fixed.is_object()) fail("'fixed' must be an object of name: value");
    for (const auto& [name, value] : fixed.items()) {
      const std::size_t i = parameter_index(family, name);
      base[i] = real_value(value, name);
      free[i] = false;
    }
  }
  const CensoredLikelihood likelihood(data);
  FitOptions options;
  options.free = free;
  options.init = moment_initial_values(family, likelihood,
                                       ModelSpec::from_params(family, base), free);
  if (cfg.has("seed")) options.restart_seed = cfg.seed();
  const FitResult fit = fit_mle(family, likelihood, options);
  emit(flags, cfg, io::fit_result_to_json(fit), out);
  return kExitOk;
}

int cmd_errors(const Flags& flags, std::ostream& out) {
  Config cfg(load_config(flags.config), "errors", {"data"});
  if (!flags.data.empty()) cfg["data"] = flags.data;
  cfg.check_keys();

  const auto pairs = io::replicate_pairs_from_csv(io::read_text_file(cfg.text("data")));
  if (pairs.individual_diffs.size() < 2 || pairs.pooled_diffs.size() < 2) {
    fail("need at least two individual and two pooled replicate pairs");
  }
  const auto variances = replicate_error_variances(pairs);
  const auto individual = fit_laplace_scale(pairs.individual_diffs);
  const auto pooled = fit_laplace_scale(pairs.pooled_diffs);
  const double scale_c = individual.component_scale;
  const double excess =
      pooled.diff_scale * pooled.diff_scale - individual.diff_scale * individual.diff_scale;
  const double scale_d = std::sqrt(std::max(0.0, excess) / 2.0);
  emit(flags, cfg, io::error_estimate_to_json(variances, individual, pooled, scale_c, scale_d),
       out);
  return kExitOk;
}

DesignSpec design_of(const Config& cfg) {
  DesignSpec design;
  if (cfg.has("design")) {
    design = design_from_json(cfg.at("design").dump());
  } else {
    const int total_specimens = cfg.integer("N");
    const int total_assays = cfg.integer("n");
    const double alpha = cfg.real("alpha");
    if (const auto extras = extras_of(cfg)) {
      design = three_assay_design(total_specimens, total_assays, alpha, extras->beta,
                                  extras->second_pool_size);
    } else {
      design = two_assay_design(total_specimens, total_assays, alpha);
    }
  }
  const int replicates = cfg.integer_or("replicates", 0);
  if (replicates < 0) fail("'replicates' must be positive");
  if (replicates > 0) {
    for (auto& g : design.groups) g.replicates = replicates;
  }
  design.validate();
  return design;
}

std::string numbered_path(const std::string& path, int index, int total) {
  if (total == 1) return path;
  const fs::path p(path);
  const int width = static_cast<int>(std::to_string(total - 1).size());
  std::ostringstream name;
  name << p.stem().string() << '_' << std::setw(width) << std::setfill('0') << index
       << p.extension().string();
  return (p.parent_path() / name.str()).string();
}

int cmd_simulate(const Flags& flags, std::ostream& out) {
  Config cfg(load_config(flags.config), "simulate",
             {"family", "model", "design", "N", "n", "alpha", "beta", "p2", "replicates",
              "llod", "replications", "seed", "pooling_error"});
  apply_common(cfg, flags, false);
  cfg.check_keys();
  if (flags.out.empty()) fail("simulate needs --out");

  const Family family = family_of(cfg);
  const ModelSpec model = model_of(cfg, family);
  const DesignSpec design = design_of(cfg);
  const double llod = cfg.real_or("llod", -std::numeric_limits<double>::infinity());
  const int replications = cfg.integer_or("replications", 1);
  if (replications < 1) fail("'replications' must be at least 1");
  const std::string mode_name = cfg.text_or("pooling_error", "independent");
  if (mode_name != "independent" && mode_name != "shared") {
    fail("pooling_error must be 'independent' or 'shared'");
  }
  const auto mode =
      mode_name == "shared" ? PoolingErrorMode::kShared : PoolingErrorMode::kIndependent;

  for (int i = 0; i < replications; ++i) {
    const Dataset data = generate_dataset(
        model, design, llod, replication_seed(cfg.seed(), static_cast<std::uint64_t>(i)), mode);
    const std::string path = numbered_path(flags.out, i, replications);
    io::write_file_atomic(path, io::dataset_to_csv(data));
    io::write_file_atomic(path + ".json", io::dataset_header_to_json(data));
    out << path << '\n';
  }
  io::write_file_atomic(flags.out + ".config.json", cfg.sidecar().dump(2) + '\n');
  return kExitOk;
}

int cmd_bootstrap(const Flags& flags, std::ostream& out) {
  Config cfg(load_config(flags.config), "bootstrap",
             {"raw", "N", "n", "llods", "alphas", "alpha_count", "replications", "seed",
              "resample"});
  apply_common(cfg, flags, true);
  if (!flags.raw.empty()) cfg["raw"] = flags.raw;
  cfg.check_keys();

  const auto raw = io::raw_values_from_csv(io::read_text_file(cfg.text("raw")));
  const int total_specimens = cfg.integer("N");
  const int total_assays = cfg.integer("n");
  const auto llods = cfg.reals("llods");
  if (llods.empty()) fail("'llods' is empty");
  const auto alphas = alphas_of(cfg, total_specimens, total_assays, std::nullopt);
  const int replications = cfg.integer_or("replications", 1000);
  const std::string resample = cfg.text_or("resample", "replacement");
  if (resample != "replacement" && resample != "permutation") {
    fail("resample must be 'replacement' or 'permutation'");
  }
  const auto mode = resample == "permutation" ? ResampleMode::kPermutation
                                              : ResampleMode::kWithReplacement;

  std::vector<SweepResult> results;
  for (double llod : llods) {
    results.push_back(bootstrap_design_eval(raw, total_specimens, total_assays, alphas, llod,
                                            replications, cfg.seed(), flags.threads, mode));
  }
  emit(flags, cfg, io::sweep_to_csv(results, true), out);
  return kExitOk;
}

int cmd_surrogate(const Flags& flags, std::ostream& out) {
  Config cfg(load_config(flags.config), "surrogate", {"count", "mean", "sd", "seed"});
  apply_common(cfg, flags, false);
  cfg.check_keys();
  const auto values = surrogate_normal_sample(cfg.integer_or("count", 40), cfg.real("mean"),
                                              cfg.real("sd"), cfg.seed());
  emit(flags, cfg, io::raw_values_to_csv(values), out);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hybrid pooled/unpooled design evaluation under a lower limit of detection"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  Flags flags;
  std::map<std::string, std::function<int(const Flags&, std::ostream&)>> handlers;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags.config, "JSON config; flags override its keys");
    cmd->add_option("--out", flags.out, "Output path (stdout when omitted)");
    cmd->add_option("--threads", flags.threads, "Worker threads (0 = all cores)")
        ->check(CLI::NonNegativeNumber);
  };

  auto* sweep = app.add_subcommand("sweep", "Variance sweep over alpha (long-format CSV)");
  common(sweep);
  sweep->add_option("--seed", flags.seed, "Base seed for the Monte Carlo backend");
  sweep->add_option("--llod", flags.llod, "Single LLOD (replaces 'llods')");
  sweep->add_option("--family", flags.family, "normal|gamma");
  sweep->add_option("--alphas", flags.alphas, "Comma-separated alpha grid");
  sweep->add_option("--free", flags.free, "Comma-separated free parameters");
  sweep->add_option("--replications", flags.replications, "Monte Carlo replications");
  handlers["sweep"] = cmd_sweep;

  auto* fit = app.add_subcommand("fit", "Censored maximum likelihood fit (JSON)");
  common(fit);
  fit->add_option("--data", flags.data, "Dataset CSV");
  fit->add_option("--header", flags.header, "Dataset header JSON (default <data>.json)");
  fit->add_option("--llod", flags.llod, "LLOD (overrides the header)");
  fit->add_option("--family", flags.family, "normal|gamma");
  fit->add_option("--free", flags.free, "Comma-separated free parameters");
  fit->add_option("--fix", flags.fix, "Comma-separated name=value fixed parameters");
  fit->add_option("--seed", flags.seed, "Seed for the restart jitter");
  handlers["fit"] = cmd_fit;

  auto* errors = app.add_subcommand("errors", "Error variances from replicate pairs (JSON)");
  common(errors);
  errors->add_option("--data", flags.data, "Replicate CSV");
  handlers["errors"] = cmd_errors;

  auto* simulate = app.add_subcommand("simulate", "Generate synthetic datasets");
  common(simulate);
  simulate->add_option("--seed", flags.seed, "Base seed");
  simulate->add_option("--llod", flags.llod, "LLOD");
  simulate->add_option("--family", flags.family, "normal|gamma");
  simulate->add_option("--replications", flags.replications, "Number of datasets");
  handlers["simulate"] = cmd_simulate;

  auto* bootstrap = app.add_subcommand("bootstrap", "Resampling design evaluation (CSV)");
  common(bootstrap);
  bootstrap->add_option("--raw", flags.raw, "Raw individual values, one per line");
  bootstrap->add_option("--seed", flags.seed, "Base seed");
  bootstrap->add_option("--llod", flags.llod, "Single LLOD (replaces 'llods')");
  bootstrap->add_option("--alphas", flags.alphas, "Comma-separated alpha grid");
  bootstrap->add_option("--replications", flags.replications, "Resampling replications");
  handlers["bootstrap"] = cmd_bootstrap;

  auto* surrogate = app.add_subcommand("surrogate", "Normal sample with exact mean and sd");
  common(surrogate);
  surrogate->add_option("--seed", flags.seed, "Seed");
  handlers["surrogate"] = cmd_surrogate;

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return handlers.at(name)(flags, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace hybridpool::cli

#pragma once

/**
 * @file runner.hpp
 * @brief Experiment configuration, subcommand dispatch, and report emission.
 *
 * Configuration is a flat list of key/value pairs, read either from a text
 * file (one `key = value` per line, '#' starts a comment) or from command-line
 * flags with the same names. run_experiment() is pure: it returns the JSON
 * summary and any table/trace/family text, and only write_outputs() touches
 * the filesystem.
 *
 * Exit codes: 0 success, 1 usage/argument/capacity error, 2 a checked bound
 * was numerically violated (shrinkage or tail bound for the planted coupling,
 * truncated second moment bound or lemma-chain equalities, coupling trace
 * invariants, or spread preservation across rounds). Bounds are asserted only
 * when the measure is R-spread at the R in use and δ is the canonical one.
 */

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spreadlab/coupling.hpp"
#include "spreadlab/experiment.hpp"
#include "spreadlab/families.hpp"
#include "spreadlab/family_io.hpp"
#include "spreadlab/measure.hpp"
#include "spreadlab/moments.hpp"
#include "spreadlab/planted.hpp"
#include "spreadlab/spread.hpp"

namespace spreadlab {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitBoundViolated = 2;

inline const std::vector<std::string>& known_commands() {
  static const std::vector<std::string> cmds = {"spread-check", "planted-sim",  "moments",   "coupling-run",
                                                "threshold-sweep", "matching-demo", "family-gen"};
  return cmds;
}

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "command", "family",     "family_file", "p",          "q",           "delta",     "R",
      "rounds",  "replicates", "seed",        "out",        "csv",         "trace_out", "family_out",
      "mode",    "grid",       "delta_grid",  "n",          "path",        "pair_budget",
      "exact_budget", "candidate_budget"};
  return keys;
}

struct Budgets {
  std::uint64_t pair = kDefaultPairBudget;
  std::uint64_t exact = kDefaultExactBudget;
  std::uint64_t candidate = kDefaultCandidateBudget;
};

struct ExperimentConfig {
  std::string command;
  std::optional<std::string> family;       ///< builtin descriptor, e.g. "matchings:6"
  std::optional<std::string> family_file;
  std::optional<double> p, q, delta, r;
  std::optional<int> rounds;
  std::uint64_t replicates = 1000;
  std::uint64_t seed = 1;
  std::optional<std::string> out, csv, trace_out, family_out;
  std::string mode = "montecarlo";
  std::vector<double> grid, delta_grid;
  int n = 10;
  MomentPath path = MomentPath::Automatic;
  Budgets budgets;
  std::map<std::string, std::string> raw;  ///< echoed into the summary
};

namespace detail {
inline std::string trim_copy(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || !std::isfinite(out)) throw ArgumentError("key '" + key + "': bad number '" + v + "'");
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ArgumentError("key '" + key + "': expected a nonnegative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ArgumentError("key '" + key + "': integer out of range");
  }
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim_copy(item)));
  if (out.empty()) throw ArgumentError("key '" + key + "': empty list");
  return out;
}

inline std::optional<std::uint64_t> env_budget(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return parse_uint(name, v);
}
}  // namespace detail

/// Budget defaults, overridable through SPREADLAB_PAIR_BUDGET,
/// SPREADLAB_EXACT_BUDGET and SPREADLAB_CANDIDATE_BUDGET.
inline Budgets default_budgets() {
  Budgets b;
  if (auto v = detail::env_budget("SPREADLAB_PAIR_BUDGET")) b.pair = *v;
  if (auto v = detail::env_budget("SPREADLAB_EXACT_BUDGET")) b.exact = *v;
  if (auto v = detail::env_budget("SPREADLAB_CANDIDATE_BUDGET")) b.candidate = *v;
  return b;
}

/// Builds and validates a config from key/value pairs.
inline ExperimentConfig config_from_entries(const std::map<std::string, std::string>& entries) {
  ExperimentConfig cfg;
  cfg.budgets = default_budgets();
  cfg.raw = entries;
  const auto& keys = known_keys();
  for (const auto& [key, value] : entries) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ArgumentError("unknown key '" + key + "'");
    if (key == "command") cfg.command = value;
    else if (key == "family") cfg.family = value;
    else if (key == "family_file") cfg.family_file = value;
    else if (key == "p") cfg.p = detail::parse_double(key, value);
    else if (key == "q") cfg.q = detail::parse_double(key, value);
    else if (key == "delta") cfg.delta = detail::parse_double(key, value);
    else if (key == "R") cfg.r = detail::parse_double(key, value);
    else if (key == "rounds") cfg.rounds = static_cast<int>(detail::parse_uint(key, value));
    else if (key == "replicates") cfg.replicates = detail::parse_uint(key, value);
    else if (key == "seed") cfg.seed = detail::parse_uint(key, value);
    else if (key == "out") cfg.out = value;
    else if (key == "csv") cfg.csv = value;
    else if (key == "trace_out") cfg.trace_out = value;
    else if (key == "family_out") cfg.family_out = value;
    else if (key == "mode") cfg.mode = value;
    else if (key == "grid") cfg.grid = detail::parse_list(key, value);
    else if (key == "delta_grid") cfg.delta_grid = detail::parse_list(key, value);
    else if (key == "n") cfg.n = static_cast<int>(detail::parse_uint(key, value));
    else if (key == "path") {
      if (value == "auto") cfg.path = MomentPath::Automatic;
      else if (value == "pairs") cfg.path = MomentPath::PairLoop;
      else if (value == "closed-form") cfg.path = MomentPath::ClosedForm;
      else throw ArgumentError("key 'path': expected auto, pairs or closed-form");
    }
    else if (key == "pair_budget") cfg.budgets.pair = detail::parse_uint(key, value);
    else if (key == "exact_budget") cfg.budgets.exact = detail::parse_uint(key, value);
    else if (key == "candidate_budget") cfg.budgets.candidate = detail::parse_uint(key, value);
  }

  const auto& cmds = known_commands();
  if (cfg.command.empty()) throw ArgumentError("missing 'command'");
  if (std::find(cmds.begin(), cmds.end(), cfg.command) == cmds.end()) {
    throw ArgumentError("unknown command '" + cfg.command + "'");
  }
  const bool needs_family = cfg.command != "matching-demo";
  const int sources = (cfg.family ? 1 : 0) + (cfg.family_file ? 1 : 0);
  if (needs_family && sources != 1) throw ArgumentError("exactly one of 'family' or 'family_file' is required");
  if (!needs_family && sources != 0) throw ArgumentError("matching-demo takes 'n', not a family");
  for (const auto& [name, v] : {std::pair{"p", cfg.p}, std::pair{"q", cfg.q}}) {
    if (v) numeric::require_probability(*v, name);
  }
  for (double g : cfg.grid) numeric::require_probability(g, "grid value");
  if (cfg.delta && !(*cfg.delta > 0.0)) throw ArgumentError("delta must be > 0");
  for (double d : cfg.delta_grid) {
    if (!(d > 0.0)) throw ArgumentError("delta_grid values must be > 0");
  }
  if (cfg.r && !(*cfg.r > 1.0)) throw ArgumentError("R must be > 1");
  if (cfg.replicates < 1) throw ArgumentError("replicates must be >= 1");
  if (cfg.mode != "montecarlo" && cfg.mode != "exact") throw ArgumentError("mode must be 'exact' or 'montecarlo'");
  if (cfg.rounds && *cfg.rounds < 1) throw ArgumentError("rounds must be >= 1");

  if ((cfg.command == "planted-sim" || cfg.command == "moments") && !cfg.p && cfg.grid.empty()) {
    throw ArgumentError(cfg.command + " needs 'p'");
  }
  if (cfg.command == "planted-sim" && !cfg.p) throw ArgumentError("planted-sim needs 'p'");
  if (cfg.command == "coupling-run" && !cfg.q) throw ArgumentError("coupling-run needs 'q'");
  if (cfg.command == "threshold-sweep" && cfg.grid.empty()) throw ArgumentError("threshold-sweep needs 'grid'");
  return cfg;
}

/// Parses the flat `key = value` config grammar.
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> entries;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim_copy(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ArgumentError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim_copy(line.substr(0, eq));
    const std::string value = detail::trim_copy(line.substr(eq + 1));
    if (key.empty()) throw ArgumentError("config line " + std::to_string(line_no) + ": empty key");
    if (!entries.emplace(key, value).second) {
      throw ArgumentError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return entries;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_entries(parse_config_text(buf.str()));
}

/// A builtin family descriptor: matchings:<n>, kuniform:<N>:<k>, kuniform-closed:<N>:<k>, singletons:<N>.
struct FamilySource {
  std::optional<DiscreteMeasure> measure;
  std::optional<KUniformFamily> kuniform;
  std::string description;
};

inline FamilySource resolve_family(const ExperimentConfig& cfg) {
  FamilySource src;
  if (cfg.family_file) {
    src.measure = read_family_file(*cfg.family_file);
    src.description = "file:" + *cfg.family_file;
    return src;
  }
  const std::string& descriptor = *cfg.family;
  std::vector<std::string> parts;
  std::stringstream ss(descriptor);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  auto arg = [&](std::size_t i) {
    if (i >= parts.size()) throw ArgumentError("family descriptor '" + descriptor + "' is missing a parameter");
    return static_cast<int>(detail::parse_uint("family", parts[i]));
  };
  src.description = descriptor;
  if (parts.empty()) throw ArgumentError("empty family descriptor");
  const std::string& kind = parts[0];
  std::size_t expected = 0;
  if (kind == "matchings") {
    expected = 2;
    src.measure = perfect_matchings(arg(1)).uniform_measure();
  } else if (kind == "kuniform" || kind == "kuniform-closed") {
    expected = 3;
    src.kuniform = KUniformFamily(arg(1), arg(2), kind == "kuniform-closed");
    if (src.kuniform->materialized()) src.measure = src.kuniform->measure();
  } else if (kind == "singletons") {
    expected = 2;
    const int n = arg(1);
    Universe u(n);
    SetFamily fam(u);
    for (int i = 0; i < n; ++i) fam.add(SubsetMask(u, {i}));
    src.measure = DiscreteMeasure::uniform(fam);
  } else {
    throw ArgumentError("unknown family kind '" + kind + "'");
  }
  if (parts.size() != expected) throw ArgumentError("family descriptor '" + descriptor + "' has the wrong parameter count");
  return src;
}

inline const DiscreteMeasure& require_measure(const FamilySource& src, const std::string& command) {
  if (!src.measure) throw ArgumentError(command + " needs a materialized family; closed-form families only support moments");
  return *src.measure;
}

struct RunResult {
  int exit_code = kExitOk;
  std::string summary;      ///< JSON summary (empty on error)
  std::string csv;
  std::string traces;       ///< JSON lines, coupling-run only
  std::string family_text;  ///< family-gen only
  std::string error;        ///< JSON error object on failure
};

namespace detail {
inline Json set_json(const SubsetMask& s) { return Json(s.elements()); }

inline std::string set_field(const SubsetMask& s) {
  std::string out;
  for (int e : s.elements()) {
    if (!out.empty()) out += ' ';
    out += std::to_string(e);
  }
  return out;
}

/// RFC-4180 field quoting.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string num(double x) {
  if (!std::isfinite(x)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json proportion_json(const ProportionEstimate& e) {
  return Json{{"estimate", e.estimate}, {"lower", e.lower}, {"upper", e.upper},
              {"successes", e.successes}, {"trials", e.trials}};
}

struct SpreadBasis {
  double r;
  bool from_user;
  double r_star;
  bool premise;  ///< measure is R-spread at the R used
};

inline SpreadBasis spread_basis(const DiscreteMeasure& m, const ExperimentConfig& cfg) {
  const auto rep = max_spread_factor(m, cfg.budgets.candidate);
  if (rep.unbounded && !cfg.r) throw ArgumentError("R* is unbounded for this measure; pass R");
  const double r = cfg.r.value_or(rep.max_spread_factor);
  const bool premise = rep.unbounded || r <= rep.max_spread_factor * (1.0 + kSpreadTolerance);
  return {r, cfg.r.has_value(), rep.max_spread_factor, premise};
}

inline Json moment_json(const MomentReport& rep) {
  return Json{{"p", rep.p},
              {"R", rep.r},
              {"R_from_user", rep.r_from_user},
              {"delta", rep.delta},
              {"seven_delta_below_one", rep.nonvacuous},
              {"max_set_size", rep.max_set_size},
              {"law_source", rep.law_source},
              {"truncated_value", rep.truncated_value},
              {"truncated_divergent", rep.truncated_divergent},
              {"truncated_bound", rep.truncated_bound},
              {"truncated_ratio_to_bound", rep.truncated_value / rep.truncated_bound},
              {"truncated_bound_holds", rep.truncated_bound_holds},
              {"full_second_moment", rep.full_second_moment},
              {"full_divergent", rep.full_divergent},
              {"ell_zero_mass", rep.ell_zero_mass},
              {"ell_one_term", rep.ell_one_term},
              {"ell_one_term_exceeds_threshold", rep.ell_one_term > kSecondMomentThreshold},
              {"second_moment_threshold", kSecondMomentThreshold},
              {"second_moment_verdict", rep.second_moment_threshold_holds ? "satisfied" : "violated"},
              {"paley_zygmund_lower_bound", rep.paley_zygmund_lower_bound},
              {"majorant", Json{{"value", rep.majorant.value},
                                {"ratio", rep.majorant.ratio},
                                {"divergent", rep.majorant.divergent}}}};
}

inline Json lemma_chain_json(const LemmaChainReport& rep) {
  return Json{{"delta", rep.delta},
              {"tail_probability", rep.tail_probability},
              {"ratio_expectation", rep.ratio_expectation},
              {"truncated_planted", rep.truncated_planted},
              {"truncated_moment", rep.truncated_moment},
              {"small_ratio_probability", rep.small_ratio_probability},
              {"tail_equals_ratio", rep.tail_equals_ratio},
              {"planted_equals_moment", rep.planted_equals_moment},
              {"planting_step_holds", rep.planting_step_holds},
              {"seven_delta_below_one", rep.nonvacuous},
              {"bounds_hold", rep.bounds_hold}};
}

// ---- subcommands -----------------------------------------------------------

inline int run_spread_check(const ExperimentConfig& cfg, const FamilySource& src, Json& result, RunResult&) {
  const auto& m = require_measure(src, cfg.command);
  const auto rep = max_spread_factor(m, cfg.budgets.candidate);
  result["universe"] = m.universe().size();
  result["support_size"] = m.size();
  result["max_set_size"] = m.max_size();
  result["unbounded"] = rep.unbounded;
  result["max_spread_factor"] = finite_or_null(rep.max_spread_factor);
  result["witness"] = rep.witness ? set_json(*rep.witness) : Json(nullptr);
  if (cfg.r) {
    const auto check = check_spread(m, *cfg.r, cfg.budgets.candidate);
    result["checked_R"] = *cfg.r;
    result["passed"] = check.passed;
    result["violating_set"] = check.witness ? set_json(*check.witness) : Json(nullptr);
  }
  return kExitOk;
}

inline int run_planted_sim(const ExperimentConfig& cfg, const FamilySource& src, Json& result, Json& checks,
                           RunResult& out) {
  const auto& m = require_measure(src, cfg.command);
  const double p = *cfg.p;
  const auto basis = spread_basis(m, cfg);
  const double delta = cfg.delta.value_or(TruncationParams::canonical(p, basis.r).delta);

  std::ostringstream csv;
  csv << "draw,A,V,Y,A_prime,Z_Y,overlap_ratio\n";
  MeanAccumulator shrink, overlap;
  std::uint64_t tail_hits = 0;
  std::vector<std::uint64_t> counts(m.size(), 0);
  for (std::uint64_t i = 0; i < cfg.replicates; ++i) {
    Rng rng(derive_seed(cfg.seed, i));
    const PlantedDraw d = sample_coupling(m, p, rng);
    const int size_a = d.signal.size();
    const int ov = d.resampled.overlap(d.signal);
    const double ratio = size_a == 0 ? 0.0 : static_cast<double>(ov) / size_a;
    shrink.add(size_a == 0 ? 0.0 : static_cast<double>(d.resampled.and_not(d.noise).size()) / size_a);
    overlap.add(ratio);
    if (exceeds_threshold(ov, size_a, delta)) ++tail_hits;
    ++counts[*m.family().find(d.resampled)];
    csv << i << ',' << csv_field(set_field(d.signal)) << ',' << csv_field(set_field(d.noise)) << ','
        << csv_field(set_field(d.observed)) << ',' << csv_field(set_field(d.resampled)) << ',' << num(d.z_y) << ','
        << num(ratio) << '\n';
  }
  out.csv = csv.str();
  double tv = 0.0;
  for (std::size_t j = 0; j < m.size(); ++j) {
    tv += std::abs(static_cast<double>(counts[j]) / static_cast<double>(cfg.replicates) - m.weights()[j]);
  }

  result["p"] = p;
  result["R"] = basis.r;
  result["R_star"] = finite_or_null(basis.r_star);
  result["R_from_user"] = basis.from_user;
  result["delta"] = delta;
  result["replicates"] = cfg.replicates;
  result["montecarlo"] = Json{{"shrinkage_mean", shrink.mean()},
                              {"shrinkage_se", shrink.standard_error()},
                              {"overlap_ratio_mean", overlap.mean()},
                              {"overlap_ratio_se", overlap.standard_error()},
                              {"tail", proportion_json(wilson_interval(tail_hits, cfg.replicates))},
                              {"resample_marginal_tv", 0.5 * tv}};

  const double bound = shrinkage_bound(p, basis.r);
  const bool nonvacuous = 7.0 * delta < 1.0;
  result["shrinkage_bound"] = bound;
  result["tail_bound"] = 6.0 * delta;
  result["seven_delta_below_one"] = nonvacuous;
  int exit_code = kExitOk;
  try {
    ExactPlanted exact(m, p, cfg.budgets.exact);
    const auto e = exact.coupling_expectations(delta);
    result["exact"] = Json{{"shrinkage", e.shrinkage},
                           {"overlap_ratio", e.overlap_ratio},
                           {"tail", e.tail},
                           {"truncated_planted", e.truncated_z}};
    const bool shrink_ok = e.shrinkage <= bound + 1e-12;
    // The tail bound is only claimed at the canonical δ.
    const bool tail_ok = cfg.delta || !nonvacuous || e.tail <= 6.0 * delta + 1e-12;
    checks["premise_R_spread"] = basis.premise;
    checks["shrinkage_bound_holds"] = shrink_ok;
    checks["tail_bound_holds"] = tail_ok;
    if (basis.premise && (!shrink_ok || !tail_ok)) exit_code = kExitBoundViolated;
  } catch (const CapacityError& err) {
    result["exact"] = nullptr;
    result["exact_skipped"] = err.what();
  }
  return exit_code;
}

inline int run_moments(const ExperimentConfig& cfg, const FamilySource& src, Json& result, Json& checks,
                       RunResult& out) {
  auto report_at = [&](double p, std::optional<double> delta) {
    if (src.kuniform && (cfg.path != MomentPath::PairLoop || !src.measure)) {
      if (cfg.path == MomentPath::PairLoop) throw ArgumentError("pair path needs a materialized family");
      return moment_report(*src.kuniform, p, cfg.r, delta, MomentPath::ClosedForm);
    }
    if (cfg.path == MomentPath::ClosedForm) throw ArgumentError("closed-form path needs a k-uniform family");
    return moment_report(*src.measure, p, cfg.r, delta, cfg.budgets.pair);
  };
  double r_star = 0.0;
  if (src.kuniform && !src.measure) {
    r_star = src.kuniform->max_spread_factor().first;
  } else {
    const auto rep = max_spread_factor(*src.measure, cfg.budgets.candidate);
    if (rep.unbounded && !cfg.r) throw ArgumentError("R* is unbounded for this measure; pass R");
    r_star = rep.max_spread_factor;
  }
  const double r = cfg.r.value_or(r_star);
  const bool premise = r <= r_star * (1.0 + kSpreadTolerance);
  result["R_star"] = finite_or_null(r_star);
  checks["premise_R_spread"] = premise;
  int exit_code = kExitOk;

  if (cfg.p) {
    const MomentReport rep = report_at(*cfg.p, cfg.delta);
    result["report"] = moment_json(rep);
    checks["truncated_bound_holds"] = rep.truncated_bound_holds;
    // 6δ² is only claimed at the canonical δ; other δ values are reported, not asserted.
    if (premise && !cfg.delta && !rep.truncated_bound_holds) exit_code = kExitBoundViolated;
    if (src.measure && src.measure->universe().size() <= 14) {
      try {
        const auto chain = lemma_chain_check(*src.measure, *cfg.p, r, rep.delta, cfg.budgets.exact);
        result["lemma_chain"] = lemma_chain_json(chain);
        const bool equal = chain.tail_equals_ratio && chain.planted_equals_moment;
        checks["lemma_chain_equalities"] = equal;
        if (!equal) exit_code = kExitBoundViolated;
      } catch (const CapacityError& err) {
        result["lemma_chain_skipped"] = err.what();
      }
    }
  }
  if (!cfg.grid.empty()) {
    std::ostringstream csv;
    csv << "p,delta,R,truncated_value,truncated_bound,truncated_divergent,full_second_moment,full_divergent,"
           "ell_one_term,paley_zygmund_lower_bound,seven_delta_below_one\n";
    std::size_t rows = 0;
    bool grid_ok = true;
    for (double p : cfg.grid) {
      std::vector<std::optional<double>> deltas;
      if (cfg.delta_grid.empty()) deltas.push_back(cfg.delta);
      for (double d : cfg.delta_grid) deltas.emplace_back(d);
      for (const auto& d : deltas) {
        const MomentReport rep = report_at(p, d);
        if (!d) grid_ok = grid_ok && rep.truncated_bound_holds;
        csv << num(p) << ',' << num(rep.delta) << ',' << num(rep.r) << ',' << num(rep.truncated_value) << ','
            << num(rep.truncated_bound) << ',' << (rep.truncated_divergent ? 1 : 0) << ','
            << num(rep.full_second_moment) << ',' << (rep.full_divergent ? 1 : 0) << ',' << num(rep.ell_one_term)
            << ',' << num(rep.paley_zygmund_lower_bound) << ',' << (rep.nonvacuous ? 1 : 0) << '\n';
        ++rows;
      }
    }
    out.csv = csv.str();
    result["batch_rows"] = rows;
    checks["batch_truncated_bound_holds"] = grid_ok;
    if (premise && !grid_ok) exit_code = kExitBoundViolated;
  }
  return exit_code;
}

inline Json trace_json(std::uint64_t index, const CouplingTrace& t) {
  Json rounds = Json::array();
  for (const auto& r : t.rounds) {
    rounds.push_back(Json{{"V", set_json(r.noise)}, {"A", set_json(r.signal)}, {"B", set_json(r.resample)}});
  }
  return Json{{"trace", index},
              {"rounds", rounds},
              {"final", set_json(t.final_set)},
              {"noise_union", set_json(t.noise_union)},
              {"cover_witness", t.cover_witness ? set_json(*t.cover_witness) : Json(nullptr)}};
}

inline int run_coupling(const ExperimentConfig& cfg, const FamilySource& src, Json& result, Json& checks,
                        RunResult& out) {
  const auto& m = require_measure(src, cfg.command);
  const auto basis = spread_basis(m, cfg);
  CouplingConfig cc{*cfg.q, cfg.rounds.value_or(default_round_count(m.max_size())), cfg.seed};
  cc.validate();
  std::vector<CouplingTrace> traces;
  traces.reserve(cfg.replicates);
  std::ostringstream dump;
  std::uint64_t invariant_failures = 0, spread_failures = 0, covered = 0;
  std::optional<std::string> first_violation;
  for (std::uint64_t i = 0; i < cfg.replicates; ++i) {
    Rng rng(derive_seed(cfg.seed, i));
    CouplingTrace t = run_rounds(m, cc, rng);
    if (auto v = trace_violation(m, t)) {
      ++invariant_failures;
      if (!first_violation) first_violation = "trace " + std::to_string(i) + ": " + *v;
    }
    if (!basis.from_user || basis.r > 1.0) {
      for (bool ok : conditional_law_spread_check(t, basis.r)) {
        if (!ok) {
          ++spread_failures;
          break;
        }
      }
    }
    if (t.cover_witness) ++covered;
    dump << trace_json(i, t).dump() << '\n';
    t.laws.clear();
    traces.push_back(std::move(t));
  }
  out.traces = dump.str();

  const auto default_q = asymptotic_default_q(basis.r);
  result["q"] = cc.q;
  result["rounds"] = cc.rounds;
  result["rounds_default"] = default_round_count(m.max_size());
  result["R"] = basis.r;
  result["R_star"] = finite_or_null(basis.r_star);
  result["replicates"] = cfg.replicates;
  result["effective_p"] = effective_p(cc.q, cc.rounds);
  result["asymptotic_default_q"] = Json{{"value", default_q.value}, {"feasible", default_q.feasible}};
  result["covered_traces"] = covered;
  result["invariant_failures"] = invariant_failures;
  result["spread_preservation_failures"] = spread_failures;
  if (first_violation) result["first_violation"] = *first_violation;
  if (traces.size() >= kMinShrinkageTraces) {
    const auto s = shrinkage_diagnostic(traces, m.max_size(), cc.q, basis.r);
    result["shrinkage"] = Json{{"mean_root", s.mean_root},
                               {"mean_root_se", s.mean_root_se},
                               {"bound_cube_root", s.bound},
                               {"bound_fourth_root", s.bound_quarter},
                               {"nonvacuous", s.nonvacuous},
                               {"within_bound", s.within_bound},
                               {"nonempty", proportion_json(s.nonempty)},
                               {"round_ratio", s.round_ratio},
                               {"round_ratio_se", s.round_ratio_se},
                               {"holder_composite", s.holder_composite}};
  } else {
    result["shrinkage"] = nullptr;
  }
  checks["premise_R_spread"] = basis.premise;
  checks["trace_invariants_hold"] = invariant_failures == 0;
  checks["spread_preserved"] = spread_failures == 0;
  if (invariant_failures > 0 || (basis.premise && spread_failures > 0)) return kExitBoundViolated;
  return kExitOk;
}

inline int run_sweep(const ExperimentConfig& cfg, const FamilySource& src, Json& result, RunResult& out) {
  const auto& m = require_measure(src, cfg.command);
  const CoverMode mode = cfg.mode == "exact" ? CoverMode::Exact : CoverMode::MonteCarlo;
  const SweepResult sweep = threshold_sweep(m, cfg.grid, mode, cfg.replicates, cfg.seed);
  std::ostringstream csv;
  csv << "p,estimate,lower,upper\n";
  Json points = Json::array();
  for (const auto& pt : sweep.points) {
    const double lo = pt.cover.interval ? pt.cover.interval->lower : pt.cover.value;
    const double hi = pt.cover.interval ? pt.cover.interval->upper : pt.cover.value;
    csv << num(pt.p) << ',' << num(pt.cover.value) << ',' << num(lo) << ',' << num(hi) << '\n';
    points.push_back(Json{{"p", pt.p}, {"estimate", pt.cover.value}, {"lower", lo}, {"upper", hi}});
  }
  out.csv = csv.str();
  result["mode"] = cfg.mode;
  result["replicates"] = mode == CoverMode::Exact ? Json(nullptr) : Json(cfg.replicates);
  result["target"] = sweep.target;
  result["points"] = points;
  result["crossing"] = sweep.crossing;
  result["left_censored"] = sweep.left_censored;
  result["right_censored"] = sweep.right_censored;
  result["R_star"] = finite_or_null(sweep.r_star);
  result["k"] = sweep.k;
  result["normalized_crossing"] = sweep.normalized_crossing ? Json(*sweep.normalized_crossing) : Json(nullptr);
  return kExitOk;
}

inline int run_matching_demo(const ExperimentConfig& cfg, Json& result) {
  const auto rep = counterexample_report(cfg.n);
  result["n"] = rep.n;
  result["p"] = rep.p;
  result["R_star"] = rep.r_star;
  result["R_star_over_n"] = rep.r_star_over_n;
  result["overlap_law"] = rep.overlap.law.probs;
  result["mean_overlap"] = rep.overlap.mean;
  result["mean_overlap_closed_form"] = rep.overlap.expected_mean;
  result["p_share_one"] = rep.overlap.p_share_one;
  result["p_share_any"] = rep.overlap.p_share_any;
  result["ell_one_term"] = rep.ell_one_term;
  result["full_second_moment"] = rep.full_second_moment;
  result["second_moment_threshold"] = kSecondMomentThreshold;
  result["unrestricted_bound_violated"] = rep.unrestricted_bound_violated;
  result["ell_one_term_exceeds_threshold"] = rep.ell_one_term_exceeds_threshold;
  result["delta"] = rep.delta;
  result["truncated_value"] = rep.truncated_value;
  result["truncated_finite"] = rep.truncated_finite;
  return kExitOk;
}

inline int run_family_gen(const ExperimentConfig& cfg, const FamilySource& src, Json& result, RunResult& out) {
  const auto& m = require_measure(src, cfg.command);
  out.family_text = format_family(m);
  result["universe"] = m.universe().size();
  result["support_size"] = m.size();
  result["max_set_size"] = m.max_size();
  return kExitOk;
}

inline std::string error_json(const std::string& kind, const std::string& message) {
  return Json{{"error", Json{{"kind", kind}, {"message", message}}}}.dump();
}
}  // namespace detail

/// Runs one experiment without touching the filesystem (except reading a family file).
inline RunResult run_experiment(const ExperimentConfig& cfg) {
  RunResult out;
  try {
    Json result = Json::object();
    Json checks = Json::object();
    int code = kExitOk;
    if (cfg.command == "matching-demo") {
      code = detail::run_matching_demo(cfg, result);
    } else {
      const FamilySource src = resolve_family(cfg);
      if (cfg.command == "spread-check") code = detail::run_spread_check(cfg, src, result, out);
      else if (cfg.command == "planted-sim") code = detail::run_planted_sim(cfg, src, result, checks, out);
      else if (cfg.command == "moments") code = detail::run_moments(cfg, src, result, checks, out);
      else if (cfg.command == "coupling-run") code = detail::run_coupling(cfg, src, result, checks, out);
      else if (cfg.command == "threshold-sweep") code = detail::run_sweep(cfg, src, result, out);
      else if (cfg.command == "family-gen") code = detail::run_family_gen(cfg, src, result, out);
      result["family"] = src.description;
    }
    Json config = Json::object();
    for (const auto& [k, v] : cfg.raw) {
      if (k != "out" && k != "csv" && k != "trace_out" && k != "family_out") config[k] = v;
    }
    Json summary{{"schema", kSchemaVersion},
                 {"command", cfg.command},
                 {"config", config},
                 {"result", result},
                 {"checks", checks},
                 {"exit_code", code},
                 {"metadata", Json{{"tool", "spreadlab"}, {"version", kToolVersion}, {"log_base", "e"}}}};
    out.summary = summary.dump(2) + "\n";
    out.exit_code = code;
  } catch (const CapacityError& e) {
    out = RunResult{kExitError, {}, {}, {}, {}, detail::error_json("capacity", e.what())};
  } catch (const ArgumentError& e) {
    out = RunResult{kExitError, {}, {}, {}, {}, detail::error_json("argument", e.what())};
  } catch (const std::exception& e) {
    out = RunResult{kExitError, {}, {}, {}, {}, detail::error_json("internal", e.what())};
  }
  return out;
}

/// Writes the configured outputs; the summary goes to stdout when `out` is unset.
/// Nothing is written for a failed run.
inline void write_outputs(const ExperimentConfig& cfg, const RunResult& result, std::ostream& stdout_stream) {
  if (result.exit_code == kExitError) return;
  auto write = [](const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ArgumentError("cannot write '" + path + "'");
    f << text;
  };
  if (cfg.out) write(*cfg.out, result.summary);
  else stdout_stream << result.summary;
  if (cfg.csv && !result.csv.empty()) write(*cfg.csv, result.csv);
  if (cfg.trace_out && !result.traces.empty()) write(*cfg.trace_out, result.traces);
  if (!result.family_text.empty()) {
    if (cfg.family_out) write(*cfg.family_out, result.family_text);
    else if (cfg.out) stdout_stream << result.family_text;
  }
}

}  // namespace spreadlab

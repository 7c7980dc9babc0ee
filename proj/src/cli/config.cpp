#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "confactor/families.hpp"
#include "confactor/invariance.hpp"

namespace confactor::cli {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "command", "family", "group",  "factor",    "pin",    "data",
      "alpha",   "delta",  "trials", "n_obs",     "seed",   "stream_id",
      "jobs",    "output", "emit_plot", "rule_a", "rule_b"};
  return keys;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"posterior", "coverage", "fiducial",
                                              "compare-priors", "pit", "reduce"};
  return names;
}

const std::vector<std::string>& rule_names() {
  static const std::vector<std::string> names{"consistency", "reference", "jeffreys",
                                              "uniform"};
  return names;
}

// Base (unpinned) family labels: registry labels without a pinned suffix.
std::vector<std::string> base_labels() {
  std::vector<std::string> out;
  for (const auto& label : family_labels())
    if (label.find('-') == std::string::npos) out.push_back(label);
  return out;
}

struct Extractor {
  const nlohmann::json& doc;
  std::vector<std::string>& issues;

  bool has(const std::string& key) const { return doc.contains(key); }

  std::optional<double> number(const std::string& key) {
    if (!doc.contains(key)) return std::nullopt;
    const auto& v = doc.at(key);
    if (!v.is_number()) {
      issues.push_back(key + ": must be a number");
      return std::nullopt;
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
      issues.push_back(key + ": must be finite");
      return std::nullopt;
    }
    return x;
  }

  std::optional<std::uint64_t> uinteger(const std::string& key) {
    if (!doc.contains(key)) return std::nullopt;
    const auto& v = doc.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0)) {
      issues.push_back(key + ": must be a nonnegative integer");
      return std::nullopt;
    }
    return v.get<std::uint64_t>();
  }

  std::optional<std::string> text(const std::string& key) {
    if (!doc.contains(key)) return std::nullopt;
    const auto& v = doc.at(key);
    if (!v.is_string()) {
      issues.push_back(key + ": must be a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  }

  std::optional<bool> boolean(const std::string& key) {
    if (!doc.contains(key)) return std::nullopt;
    const auto& v = doc.at(key);
    if (!v.is_boolean()) {
      issues.push_back(key + ": must be a boolean");
      return std::nullopt;
    }
    return v.get<bool>();
  }
};

// "custom:<t1>=<z1>,<t2>=<z2>,..." -- syntax and table-shape checks only; the
// factor itself is constructed at run time.
void check_custom_factor(const std::string& spec, std::vector<std::string>& issues) {
  const std::string table = spec.substr(std::string("custom:").size());
  if (table.empty()) {
    issues.push_back("factor: custom table is empty; expected theta=zeta pairs");
    return;
  }
  std::istringstream rows(table);
  std::string pair;
  double prev_theta = -kInf;
  int count = 0;
  while (std::getline(rows, pair, ',')) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos) {
      issues.push_back("factor: custom table entry '" + pair + "' is not theta=zeta");
      return;
    }
    errno = 0;
    char* end = nullptr;
    const double theta = std::strtod(pair.c_str(), &end);
    const bool theta_ok = end == pair.c_str() + eq && errno == 0 && std::isfinite(theta);
    errno = 0;
    const char* zbegin = pair.c_str() + eq + 1;
    const double zeta = std::strtod(zbegin, &end);
    const bool zeta_ok =
        end == pair.c_str() + pair.size() && errno == 0 && std::isfinite(zeta);
    if (!theta_ok || !zeta_ok) {
      issues.push_back("factor: custom table entry '" + pair + "' has a malformed number");
      return;
    }
    if (!(zeta > 0.0)) {
      issues.push_back("factor: custom table zeta values must be positive, got " + pair);
      return;
    }
    if (!(theta > prev_theta)) {
      issues.push_back("factor: custom table thetas must be strictly increasing");
      return;
    }
    prev_theta = theta;
    ++count;
  }
  if (count == 0)
    issues.push_back("factor: custom table is empty; expected theta=zeta pairs");
}

// Parses the "data" field into either a list or a generator spec.
void parse_data(const nlohmann::json& doc, ExperimentConfig& cfg,
                std::vector<std::string>& issues) {
  if (!doc.contains("data")) return;
  const auto& v = doc.at("data");
  if (v.is_array()) {
    for (const auto& e : v) {
      if (!e.is_number() || !std::isfinite(e.get<double>())) {
        issues.push_back("data: every list entry must be a finite number");
        return;
      }
      cfg.data.push_back(e.get<double>());
    }
    return;
  }
  if (!v.is_object()) {
    issues.push_back("data: must be a list of numbers or a generator object");
    return;
  }
  GeneratorSpec gen;
  if (!v.contains("kind") || !v.at("kind").is_string()) {
    issues.push_back("data: generator needs a string 'kind' (fixed | cycle | uniform)");
    return;
  }
  gen.kind = v.at("kind").get<std::string>();
  if (gen.kind == "fixed") {
    if (!v.contains("value") || !v.at("value").is_number() ||
        !std::isfinite(v.at("value").get<double>())) {
      issues.push_back("data: fixed generator needs a finite numeric 'value'");
      return;
    }
    gen.value = v.at("value").get<double>();
  } else if (gen.kind == "cycle") {
    if (!v.contains("values") || !v.at("values").is_array() || v.at("values").empty()) {
      issues.push_back("data: cycle generator needs a non-empty 'values' list");
      return;
    }
    for (const auto& e : v.at("values")) {
      if (!e.is_number() || !std::isfinite(e.get<double>())) {
        issues.push_back("data: cycle values must be finite numbers");
        return;
      }
      gen.values.push_back(e.get<double>());
    }
  } else if (gen.kind == "uniform") {
    if (!v.contains("lo") || !v.contains("hi") || !v.at("lo").is_number() ||
        !v.at("hi").is_number()) {
      issues.push_back("data: uniform generator needs numeric 'lo' and 'hi'");
      return;
    }
    gen.lo = v.at("lo").get<double>();
    gen.hi = v.at("hi").get<double>();
    if (!(std::isfinite(gen.lo) && std::isfinite(gen.hi) && gen.lo < gen.hi)) {
      issues.push_back("data: uniform generator needs finite lo < hi");
      return;
    }
  } else {
    issues.push_back("data: unknown generator kind '" + gen.kind +
                     "'; expected fixed, cycle, or uniform");
    return;
  }
  cfg.generator = std::move(gen);
}

// Applies a command-line override onto the document, with type conversion.
void apply_override(nlohmann::json& doc, const std::string& key,
                    const std::string& raw, std::vector<std::string>& issues) {
  const auto fail = [&](const char* want) {
    issues.push_back("override --" + key + ": expected " + want + ", got '" + raw + "'");
  };
  if (key == "seed" || key == "trials" || key == "stream_id") {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(raw.c_str(), &end, 10);
    if (end != raw.c_str() + raw.size() || raw.empty() || errno != 0 || raw[0] == '-')
      return fail("a nonnegative integer");
    doc[key] = static_cast<std::uint64_t>(v);
  } else if (key == "jobs" || key == "n_obs") {
    errno = 0;
    char* end = nullptr;
    const long v = std::strtol(raw.c_str(), &end, 10);
    if (end != raw.c_str() + raw.size() || raw.empty() || errno != 0)
      return fail("an integer");
    doc[key] = static_cast<std::int64_t>(v);
  } else if (key == "delta" || key == "alpha") {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(raw.c_str(), &end);
    if (end != raw.c_str() + raw.size() || raw.empty() || errno != 0) return fail("a number");
    doc[key] = v;
  } else if (key == "emit_plot") {
    doc[key] = (raw == "true" || raw == "1");
  } else {  // output and any other free-form string field
    doc[key] = raw;
  }
}

}  // namespace

ConfigInvalid::ConfigInvalid(std::vector<std::string> issue_list)
    : Error("config invalid: " + join(issue_list, "; ")), issues(std::move(issue_list)) {}

ExperimentConfig validate(const std::string& config_text, const Overrides& overrides) {
  std::vector<std::string> issues;

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(config_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid({std::string("config: not valid JSON: ") + e.what()});
  }
  if (!doc.is_object())
    throw ConfigInvalid({"config: top level must be a JSON object"});

  for (const auto& item : doc.items())
    if (!known_keys().count(item.key()))
      issues.push_back(item.key() + ": unknown field; known fields: " +
                       join({known_keys().begin(), known_keys().end()}, ", "));

  for (const auto& [key, raw] : overrides) apply_override(doc, key, raw, issues);

  ExperimentConfig cfg;
  Extractor get{doc, issues};

  // --- command ---
  if (auto cmd = get.text("command")) {
    cfg.command_name = *cmd;
    const auto& names = command_names();
    const auto pos = std::find(names.begin(), names.end(), *cmd);
    if (pos == names.end())
      issues.push_back("command: unknown command '" + *cmd +
                       "'; expected one of: " + join(names, ", "));
    else
      cfg.command = static_cast<Command>(pos - names.begin());
  } else if (!get.has("command")) {
    issues.push_back("command: required field is missing");
  }

  // --- family ---
  int family_dim = 0;
  if (auto fam = get.text("family")) {
    cfg.family = *fam;
    if (cfg.command == Command::compare_priors) {
      const auto bases = base_labels();
      if (std::find(bases.begin(), bases.end(), cfg.family) == bases.end())
        issues.push_back("family: compare-priors needs a base family label; available: " +
                         join(bases, ", "));
    } else {
      const auto labels = family_labels();
      if (std::find(labels.begin(), labels.end(), cfg.family) == labels.end()) {
        issues.push_back("family: unknown label '" + cfg.family +
                         "'; available: " + join(labels, ", "));
      } else {
        family_dim = family_by_label(cfg.family).dim_param;
        if (family_dim != 1 && cfg.command != Command::compare_priors)
          issues.push_back("family: command '" + cfg.command_name +
                           "' works on one-parameter families; '" + cfg.family +
                           "' has two parameters (use a pinned -location/-scale label)");
      }
    }
  } else if (!get.has("family")) {
    issues.push_back("family: required field is missing");
  }

  // --- pin ---
  if (auto pin = get.number("pin")) cfg.pin = *pin;

  // --- group ---
  if (auto grp = get.text("group")) {
    cfg.group = *grp;
    const auto labels = group_labels();
    if (std::find(labels.begin(), labels.end(), *grp) == labels.end())
      issues.push_back("group: unknown label '" + *grp +
                       "'; available: " + join(labels, ", "));
    else if (cfg.command == Command::reduce && *grp == "affine")
      issues.push_back("group: reduce needs a one-dimensional group (translation or scaling)");
  }

  // --- factor ---
  if (auto fac = get.text("factor")) {
    cfg.factor = *fac;
    static const std::vector<std::string> builtin{"location", "scale",
                                                  "joint-location-scale", "jeffreys",
                                                  "uniform"};
    if (cfg.factor.rfind("custom:", 0) == 0)
      check_custom_factor(cfg.factor, issues);
    else if (std::find(builtin.begin(), builtin.end(), cfg.factor) == builtin.end())
      issues.push_back("factor: unknown label '" + cfg.factor + "'; expected " +
                       join(builtin, ", ") + ", or custom:<theta=zeta table>");
  }

  // --- data ---
  parse_data(doc, cfg, issues);

  // --- scalars ---
  if (auto v = get.number("delta")) {
    if (*v <= 0.0 || *v >= 1.0)
      issues.push_back("delta: must lie strictly between 0 and 1, got " +
                       std::to_string(*v));
    else
      cfg.delta = *v;
  }
  bool alpha_given = false;
  if (auto v = get.number("alpha")) {
    if (*v < 0.0 || *v >= 1.0)
      issues.push_back("alpha: must lie in [0, 1), got " + std::to_string(*v));
    else {
      cfg.alpha = *v;
      alpha_given = true;
    }
  }
  if (!alpha_given) cfg.alpha = 0.5 * (1.0 - cfg.delta);  // central interval
  if (cfg.alpha + cfg.delta > 1.0)
    issues.push_back("alpha: alpha + delta must not exceed 1 (alpha " +
                     std::to_string(cfg.alpha) + ", delta " + std::to_string(cfg.delta) +
                     ")");

  if (auto v = get.uinteger("trials")) {
    if (*v < 1)
      issues.push_back("trials: must be at least 1");
    else
      cfg.trials = *v;
  }
  if (auto v = get.uinteger("n_obs")) {
    if (*v < 1 || *v > 1000000)
      issues.push_back("n_obs: must be between 1 and 1000000");
    else
      cfg.n_obs = static_cast<int>(*v);
  }
  if (auto v = get.uinteger("seed")) cfg.seed = *v;
  if (auto v = get.uinteger("stream_id")) cfg.stream_id = *v;
  if (auto v = get.uinteger("jobs")) cfg.jobs = static_cast<int>(std::min<std::uint64_t>(*v, 4096));
  if (auto v = get.text("output")) {
    if (v->empty())
      issues.push_back("output: must be a non-empty path prefix");
    else
      cfg.output = *v;
  }
  if (auto v = get.boolean("emit_plot")) cfg.emit_plot = *v;

  for (auto* rule : {&cfg.rule_a, &cfg.rule_b}) {
    const std::string key = rule == &cfg.rule_a ? "rule_a" : "rule_b";
    if (auto v = get.text(key)) {
      const auto& names = rule_names();
      if (std::find(names.begin(), names.end(), *v) == names.end())
        issues.push_back(key + ": unknown rule '" + *v +
                         "'; expected one of: " + join(names, ", "));
      else
        *rule = *v;
    }
  }

  // --- per-command data requirements ---
  const bool have_list = !cfg.data.empty();
  const bool have_gen = cfg.generator.has_value();
  switch (cfg.command) {
    case Command::posterior:
      if (!have_list)
        issues.push_back("data: posterior needs a non-empty list of observations");
      break;
    case Command::fiducial:
      if (cfg.data.size() != 1 || have_gen)
        issues.push_back("data: fiducial needs exactly one observation in a list");
      break;
    case Command::compare_priors:
      if (!have_list || cfg.data.size() < 2)
        issues.push_back("data: compare-priors needs a list of at least 2 observations");
      else if (std::all_of(cfg.data.begin(), cfg.data.end(),
                           [](double x) { return x == 0.0; }))
        issues.push_back("data: compare-priors needs at least one nonzero observation");
      break;
    case Command::coverage:
      if (!have_list && !have_gen)
        issues.push_back("data: coverage needs truth values (a list or a generator)");
      break;
    case Command::pit:
      if (have_gen && cfg.generator->kind != "fixed")
        issues.push_back("data: pit takes a single true parameter (fixed generator or one-element list)");
      if (!have_gen && cfg.data.size() != 1)
        issues.push_back("data: pit takes a single true parameter (fixed generator or one-element list)");
      break;
    case Command::reduce:
      break;  // reduce consumes no data
  }

  if (!issues.empty()) throw ConfigInvalid(std::move(issues));

  // --- effective-config echo (deterministic: keys sorted by nlohmann) ---
  nlohmann::json echo;
  echo["command"] = cfg.command_name;
  echo["family"] = cfg.family;
  if (cfg.group) echo["group"] = *cfg.group;
  if (!cfg.factor.empty()) echo["factor"] = cfg.factor;
  if (cfg.pin) echo["pin"] = *cfg.pin;
  if (!cfg.data.empty()) echo["data"] = cfg.data;
  if (cfg.generator) {
    nlohmann::json g;
    g["kind"] = cfg.generator->kind;
    if (cfg.generator->kind == "fixed") g["value"] = cfg.generator->value;
    if (cfg.generator->kind == "cycle") g["values"] = cfg.generator->values;
    if (cfg.generator->kind == "uniform") {
      g["lo"] = cfg.generator->lo;
      g["hi"] = cfg.generator->hi;
    }
    echo["data"] = g;
  }
  echo["alpha"] = cfg.alpha;
  echo["delta"] = cfg.delta;
  echo["trials"] = cfg.trials;
  echo["n_obs"] = cfg.n_obs;
  echo["seed"] = cfg.seed;
  echo["stream_id"] = cfg.stream_id;
  echo["jobs"] = cfg.jobs;
  echo["output"] = cfg.output;
  echo["emit_plot"] = cfg.emit_plot;
  if (cfg.command == Command::compare_priors) {
    echo["rule_a"] = cfg.rule_a;
    echo["rule_b"] = cfg.rule_b;
  }
  cfg.echo = std::move(echo);
  return cfg;
}

}  // namespace confactor::cli

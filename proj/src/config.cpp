#include "gradshield/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "gradshield/dataset.hpp"
#include "gradshield/defend.hpp"
#include "gradshield/dlg.hpp"
#include "gradshield/utility.hpp"

namespace gradshield::harness {

ExperimentKind kind_from_name(const std::string& name) {
  if (name == "bound-curve") return ExperimentKind::bound_curve;
  if (name == "attack-sweep") return ExperimentKind::attack_sweep;
  if (name == "noise-utility") return ExperimentKind::noise_utility;
  if (name == "adaptive-train") return ExperimentKind::adaptive_train;
  if (name == "concentration") return ExperimentKind::concentration;
  if (name == "descent") return ExperimentKind::descent;
  throw ConfigError("unknown experiment kind '" + name +
                    "' (expected bound-curve, attack-sweep, noise-utility, "
                    "adaptive-train, concentration, or descent)");
}

std::string kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::bound_curve: return "bound-curve";
    case ExperimentKind::attack_sweep: return "attack-sweep";
    case ExperimentKind::noise_utility: return "noise-utility";
    case ExperimentKind::adaptive_train: return "adaptive-train";
    case ExperimentKind::concentration: return "concentration";
    case ExperimentKind::descent: return "descent";
  }
  throw ConfigError("unknown experiment kind enum value");
}

namespace {

enum class KeyType {
  text,      // free or enumerated string
  integer,   // long long
  number,    // double
  boolean,   // true/false
  seed,      // uint64
  int_list,  // comma-separated long long
  num_list,  // comma-separated double
  text_list, // comma-separated strings
  lambda,    // "auto" or a double
};

struct KeySpec {
  const char* key;  // qualified "section.key", or bare for top level
  KeyType type;
  const char* preset;  // default value, in source syntax
};

constexpr KeySpec kRegistry[] = {
    {"kind", KeyType::text, ""},
    {"name", KeyType::text, "run"},
    {"seed", KeyType::seed, "0"},
    {"out", KeyType::text, "out"},
    {"models", KeyType::text_list, ""},

    {"model.arch", KeyType::text, "linear"},
    {"model.loss", KeyType::text, "cross-entropy"},
    {"model.input_dim", KeyType::integer, "10"},
    {"model.output_dim", KeyType::integer, "10"},
    {"model.hidden_dim", KeyType::integer, "32"},
    {"model.image_side", KeyType::integer, "12"},
    {"model.conv_channels", KeyType::integer, "16"},
    {"model.conv_kernel", KeyType::integer, "3"},
    {"model.bias", KeyType::boolean, "true"},
    {"model.init_scale", KeyType::number, "0.5"},
    {"model.init_seed", KeyType::seed, "7"},

    {"data.source", KeyType::text, "synthetic"},
    {"data.path", KeyType::text, ""},
    {"data.count", KeyType::integer, "64"},
    {"data.tau", KeyType::number, "1"},
    {"data.label_rule", KeyType::text, "teacher"},
    {"data.flip_prob", KeyType::number, "0"},
    {"data.noise_std", KeyType::number, "0"},
    {"data.teacher_seed", KeyType::seed, "1234"},

    {"defense.strategy", KeyType::text, "magnitude"},
    {"defense.z", KeyType::number, "0.5"},
    {"defense.z_grid", KeyType::num_list, "0,0.1,0.3,0.5,0.7,0.9,0.99"},
    {"defense.sigma", KeyType::number, "0.01"},
    {"defense.sigma_grid", KeyType::num_list, "0,0.001,0.01,0.1,1"},
    {"defense.fixed_indices", KeyType::int_list, ""},

    {"bound.lambda1", KeyType::lambda, "auto"},
    {"bound.sample_cap", KeyType::integer, "32"},
    {"bound.fd_step", KeyType::number, "0.0001"},

    {"attack.objective", KeyType::text, "l2"},
    {"attack.iterations", KeyType::integer, "2000"},
    {"attack.restarts", KeyType::integer, "4"},
    {"attack.step_size", KeyType::number, "0.05"},
    {"attack.init_scale", KeyType::number, "1"},
    {"attack.fd_step", KeyType::number, "0.0001"},
    {"attack.trials", KeyType::integer, "20"},
    {"attack.known_target", KeyType::boolean, "true"},
    {"attack.write_trace", KeyType::boolean, "false"},

    {"train.rounds", KeyType::integer, "50"},
    {"train.clients", KeyType::integer, "3"},
    {"train.eta", KeyType::number, "0.1"},
    {"train.aggregation", KeyType::text, "sum"},
    {"train.adaptive", KeyType::boolean, "true"},
    {"train.delta", KeyType::number, "0.05"},
    {"train.kappa", KeyType::number, "0.9"},
    {"train.sigma_max", KeyType::number, "0.01"},
    {"train.label_skew", KeyType::number, "0"},
    {"train.descent_trials", KeyType::integer, "256"},
    {"train.post_aggregation_noise", KeyType::boolean, "false"},
    {"train.recompute_mask", KeyType::boolean, "true"},

    {"concentration.n_grid", KeyType::int_list, "1,3,10"},
    {"concentration.d_grid", KeyType::int_list, "4,64,1024"},
    {"concentration.delta_grid", KeyType::num_list, "0.2,0.05,0.01"},
    {"concentration.trials", KeyType::integer, "20000"},

    {"descent.b_list", KeyType::num_list, "1,2,0.5"},
    {"descent.mu_norm_list", KeyType::num_list, "1,0.8,1.2"},
    {"descent.d", KeyType::integer, "4"},
    {"descent.delta", KeyType::number, "0.05"},
    {"descent.eta", KeyType::number, "0.01"},
    {"descent.trials", KeyType::integer, "10000"},
    {"descent.sigma_factors", KeyType::num_list, "0.5,0.9,1,2,10"},
};

constexpr const char* kSections[] = {"model", "data", "defense", "bound",
                                     "attack", "train", "concentration",
                                     "descent"};

const KeySpec* find_key(const std::string& qualified) {
  for (const KeySpec& spec : kRegistry) {
    if (qualified == spec.key) return &spec;
  }
  return nullptr;
}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return std::string(s.substr(a, b - a));
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::string leaf_of(std::string_view qualified) {
  const std::size_t dot = qualified.find('.');
  return std::string(dot == std::string_view::npos ? qualified
                                                   : qualified.substr(dot + 1));
}

// Nearest known key in the same section (falling back to any section).
std::string suggest_key(const std::string& section, const std::string& key) {
  std::string best;
  std::size_t best_dist = std::string::npos;
  for (const KeySpec& spec : kRegistry) {
    const std::string qualified(spec.key);
    const std::size_t dot = qualified.find('.');
    const std::string spec_section =
        dot == std::string::npos ? "" : qualified.substr(0, dot);
    const std::string spec_leaf = leaf_of(qualified);
    std::size_t dist = edit_distance(key, spec_leaf);
    if (spec_section != section) dist += 2;  // prefer same-section names
    if (dist < best_dist) {
      best_dist = dist;
      best = spec_leaf;
    }
  }
  if (best_dist <= std::max<std::size_t>(2, key.size() / 2)) return best;
  return {};
}

std::string suggest_section(const std::string& section) {
  std::string best;
  std::size_t best_dist = std::string::npos;
  for (const char* s : kSections) {
    const std::size_t dist = edit_distance(section, s);
    if (dist < best_dist) {
      best_dist = dist;
      best = s;
    }
  }
  if (best_dist <= 2) return best;
  return {};
}

double parse_number_token(const std::string& token, const std::string& field) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ValidationError(field + ": expected a number, got '" + token + "'");
  }
  if (!std::isfinite(v)) {
    throw ValidationError(field + ": value must be finite, got '" + token + "'");
  }
  return v;
}

long long parse_integer_token(const std::string& token, const std::string& field) {
  long long v = 0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ValidationError(field + ": expected an integer, got '" + token + "'");
  }
  return v;
}

std::uint64_t parse_seed_token(const std::string& token, const std::string& field) {
  std::uint64_t v = 0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ValidationError(field + ": expected an unsigned integer, got '" +
                          token + "'");
  }
  return v;
}

bool parse_bool_token(const std::string& token, const std::string& field) {
  if (token == "true" || token == "1" || token == "yes" || token == "on") return true;
  if (token == "false" || token == "0" || token == "no" || token == "off") return false;
  throw ValidationError(field + ": expected a boolean, got '" + token + "'");
}

std::vector<std::string> split_list(const std::string& value,
                                    const std::string& field) {
  std::vector<std::string> out;
  if (trim(value).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = value.find(',', start);
    const std::string token =
        trim(value.substr(start, comma == std::string::npos ? std::string::npos
                                                            : comma - start));
    if (token.empty()) {
      throw ValidationError(field + ": empty list element");
    }
    out.push_back(token);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// Normalizes a raw value into its canonical form (numbers reformatted,
// aliases resolved), so that semantically identical configs render -- and
// hash -- identically.
std::string normalize_value(const KeySpec& spec, const std::string& raw) {
  const std::string field(spec.key);
  const std::string value = trim(raw);
  switch (spec.type) {
    case KeyType::text: {
      if (field == "kind" && !value.empty()) return kind_name(kind_from_name(value));
      if (field == "model.arch") return nn::arch_name(nn::arch_from_name(value));
      if (field == "model.loss") return nn::loss_name(nn::loss_from_name(value));
      if (field == "data.label_rule") {
        return nn::label_rule_name(nn::label_rule_from_name(value));
      }
      if (field == "defense.strategy") {
        return defense::strategy_name(defense::strategy_from_name(value));
      }
      if (field == "attack.objective") {
        return attack::objective_name(attack::objective_from_name(value));
      }
      if (field == "train.aggregation") {
        return utility::aggregation_name(utility::aggregation_from_name(value));
      }
      if (field == "data.source") {
        if (value != "synthetic" && value != "images" && value != "gsds") {
          throw ValidationError(
              "data.source: expected synthetic, images, or gsds; got '" + value +
              "'");
        }
      }
      return value;
    }
    case KeyType::integer:
      return format_int(parse_integer_token(value, field));
    case KeyType::number:
      return format_double(parse_number_token(value, field));
    case KeyType::boolean:
      return parse_bool_token(value, field) ? "true" : "false";
    case KeyType::seed:
      return std::to_string(parse_seed_token(value, field));
    case KeyType::int_list: {
      std::string out;
      for (const std::string& token : split_list(value, field)) {
        if (!out.empty()) out += ",";
        out += format_int(parse_integer_token(token, field));
      }
      return out;
    }
    case KeyType::num_list: {
      std::string out;
      for (const std::string& token : split_list(value, field)) {
        if (!out.empty()) out += ",";
        out += format_double(parse_number_token(token, field));
      }
      return out;
    }
    case KeyType::text_list: {
      std::string out;
      for (const std::string& token : split_list(value, field)) {
        if (!out.empty()) out += ",";
        out += token;
      }
      return out;
    }
    case KeyType::lambda: {
      if (value == "auto") return "auto";
      const double v = parse_number_token(value, field);
      if (v < 0.0) throw ValidationError("bound.lambda1 must be >= 0 or auto");
      return format_double(v);
    }
  }
  throw ConfigError("unknown config key type");
}

}  // namespace

namespace {

void check_range(const ExperimentConfig& cfg, const std::string& key,
                 double lo, double hi, const char* what) {
  const double v = cfg.num(key);
  if (!(v >= lo && v <= hi)) {
    throw ValidationError(key + ": " + what + " (got " + format_double(v) + ")");
  }
}

void check_min_int(const ExperimentConfig& cfg, const std::string& key,
                   long long lo) {
  if (cfg.integer(key) < lo) {
    throw ValidationError(key + " must be >= " + format_int(lo));
  }
}

void check_positive(const ExperimentConfig& cfg, const std::string& key) {
  if (!(cfg.num(key) > 0.0)) {
    throw ValidationError(key + " must be > 0");
  }
}

}  // namespace

void validate_config(const ExperimentConfig& cfg) {
  check_min_int(cfg, "model.input_dim", 1);
  check_min_int(cfg, "model.output_dim", 1);
  check_min_int(cfg, "model.hidden_dim", 1);
  check_min_int(cfg, "model.image_side", 1);
  check_min_int(cfg, "model.conv_channels", 1);
  check_min_int(cfg, "model.conv_kernel", 1);
  if (cfg.num("model.init_scale") < 0.0) {
    throw ValidationError("model.init_scale must be >= 0");
  }
  for (const std::string& name : cfg.str_list("models")) {
    nn::model_by_name(name);  // throws on unknown presets
  }

  check_min_int(cfg, "data.count", 1);
  check_positive(cfg, "data.tau");
  check_range(cfg, "data.flip_prob", 0.0, 1.0, "flip_prob out of [0,1]");
  if (cfg.num("data.noise_std") < 0.0) {
    throw ValidationError("data.noise_std must be >= 0");
  }
  if (cfg.str("data.source") != "synthetic" && cfg.str("data.path").empty()) {
    throw ValidationError("data.path is required when data.source is '" +
                          cfg.str("data.source") + "'");
  }

  check_range(cfg, "defense.z", 0.0, 1.0, "z out of [0,1]");
  const std::vector<double> z_grid = cfg.num_list("defense.z_grid");
  if (z_grid.empty()) throw ValidationError("defense.z_grid must be nonempty");
  for (double z : z_grid) {
    if (!(z >= 0.0 && z <= 1.0)) {
      throw ValidationError("defense.z_grid: z out of [0,1] (got " +
                            format_double(z) + ")");
    }
  }
  if (cfg.num("defense.sigma") < 0.0) {
    throw ValidationError("defense.sigma must be >= 0");
  }
  const std::vector<double> sigma_grid = cfg.num_list("defense.sigma_grid");
  if (sigma_grid.empty()) {
    throw ValidationError("defense.sigma_grid must be nonempty");
  }
  for (double s : sigma_grid) {
    if (s < 0.0) throw ValidationError("defense.sigma_grid entries must be >= 0");
  }
  for (long long idx : cfg.int_list("defense.fixed_indices")) {
    if (idx < 0) throw ValidationError("defense.fixed_indices must be >= 0");
  }

  if (cfg.integer("bound.sample_cap") < 0) {
    throw ValidationError("bound.sample_cap must be >= 0");
  }
  check_positive(cfg, "bound.fd_step");

  check_min_int(cfg, "attack.iterations", 1);
  check_min_int(cfg, "attack.restarts", 1);
  check_positive(cfg, "attack.step_size");
  if (cfg.num("attack.init_scale") < 0.0) {
    throw ValidationError("attack.init_scale must be >= 0");
  }
  check_positive(cfg, "attack.fd_step");
  check_min_int(cfg, "attack.trials", 1);

  check_min_int(cfg, "train.rounds", 1);
  check_min_int(cfg, "train.clients", 1);
  check_positive(cfg, "train.eta");
  const double delta = cfg.num("train.delta");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ValidationError("train.delta must lie in (0,1)");
  }
  const double kappa = cfg.num("train.kappa");
  if (!(kappa > 0.0 && kappa <= 1.0)) {
    throw ValidationError("train.kappa must lie in (0,1]");
  }
  check_positive(cfg, "train.sigma_max");
  check_range(cfg, "train.label_skew", 0.0, 1.0, "label_skew out of [0,1]");
  if (cfg.integer("train.descent_trials") < 0) {
    throw ValidationError("train.descent_trials must be >= 0");
  }

  const std::vector<long long> n_grid = cfg.int_list("concentration.n_grid");
  const std::vector<long long> d_grid = cfg.int_list("concentration.d_grid");
  const std::vector<double> delta_grid = cfg.num_list("concentration.delta_grid");
  if (n_grid.empty() || d_grid.empty() || delta_grid.empty()) {
    throw ValidationError("concentration grids must be nonempty");
  }
  for (long long n : n_grid) {
    if (n < 1) throw ValidationError("concentration.n_grid entries must be >= 1");
  }
  for (long long d : d_grid) {
    if (d < 1) throw ValidationError("concentration.d_grid entries must be >= 1");
  }
  for (double dp : delta_grid) {
    if (!(dp > 0.0 && dp < 1.0)) {
      throw ValidationError("concentration.delta_grid entries must lie in (0,1)");
    }
  }
  check_min_int(cfg, "concentration.trials", 1);

  const std::vector<double> b_list = cfg.num_list("descent.b_list");
  const std::vector<double> mu_list = cfg.num_list("descent.mu_norm_list");
  if (b_list.empty() || mu_list.empty()) {
    throw ValidationError("descent.b_list and descent.mu_norm_list must be nonempty");
  }
  if (b_list.size() != mu_list.size()) {
    throw ValidationError(
        "descent.b_list and descent.mu_norm_list must have equal length");
  }
  for (double mu : mu_list) {
    if (mu < 0.0) throw ValidationError("descent.mu_norm_list entries must be >= 0");
  }
  if (cfg.integer("descent.d") < 0) {
    throw ValidationError("descent.d must be >= 0");
  }
  const double ddelta = cfg.num("descent.delta");
  if (!(ddelta > 0.0 && ddelta < 1.0)) {
    throw ValidationError("descent.delta must lie in (0,1)");
  }
  check_positive(cfg, "descent.eta");
  check_min_int(cfg, "descent.trials", 1);
  const std::vector<double> factors = cfg.num_list("descent.sigma_factors");
  if (factors.empty()) {
    throw ValidationError("descent.sigma_factors must be nonempty");
  }
  for (double f : factors) {
    if (f < 0.0) throw ValidationError("descent.sigma_factors entries must be >= 0");
  }

  // Kind-specific constraints, once the kind is known.
  if (cfg.has_kind()) {
    const ExperimentKind kind = cfg.kind();
    if (kind == ExperimentKind::noise_utility &&
        std::find(sigma_grid.begin(), sigma_grid.end(), 0.0) ==
            sigma_grid.end()) {
      throw ValidationError(
          "defense.sigma_grid must include 0 (the noise-free baseline) for "
          "noise-utility experiments");
    }
    if (kind == ExperimentKind::concentration && !(cfg.num("defense.sigma") > 0.0)) {
      throw ValidationError(
          "defense.sigma must be > 0 for concentration experiments");
    }
    if (kind == ExperimentKind::descent && cfg.integer("descent.d") < 1) {
      throw ValidationError("descent.d must be >= 1 for descent experiments");
    }
  }
}

const std::string& ExperimentConfig::str(const std::string& key) const {
  const auto it = values.find(key);
  if (it == values.end()) {
    throw ConfigError("internal: unknown config key '" + key + "'");
  }
  return it->second;
}

long long ExperimentConfig::integer(const std::string& key) const {
  return parse_integer_token(str(key), key);
}

double ExperimentConfig::num(const std::string& key) const {
  return parse_number_token(str(key), key);
}

bool ExperimentConfig::flag(const std::string& key) const {
  return parse_bool_token(str(key), key);
}

std::uint64_t ExperimentConfig::seed() const {
  return parse_seed_token(str("seed"), "seed");
}

std::vector<double> ExperimentConfig::num_list(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& token : split_list(str(key), key)) {
    out.push_back(parse_number_token(token, key));
  }
  return out;
}

std::vector<long long> ExperimentConfig::int_list(const std::string& key) const {
  std::vector<long long> out;
  for (const std::string& token : split_list(str(key), key)) {
    out.push_back(parse_integer_token(token, key));
  }
  return out;
}

std::vector<std::string> ExperimentConfig::str_list(const std::string& key) const {
  return split_list(str(key), key);
}

bool ExperimentConfig::has_kind() const { return !str("kind").empty(); }

ExperimentKind ExperimentConfig::kind() const {
  if (!has_kind()) {
    throw ConfigError("experiment kind is not set (config key 'kind' or CLI)");
  }
  return kind_from_name(str("kind"));
}

void ExperimentConfig::set_kind(ExperimentKind kind) {
  values["kind"] = kind_name(kind);
}

double ExperimentConfig::lambda1(double tau) const {
  const std::string& raw = str("bound.lambda1");
  if (raw == "auto") {
    if (!(tau > 0.0)) throw ValidationError("data.tau must be > 0 for lambda1 = auto");
    return 1.0 / (tau * tau);
  }
  return parse_number_token(raw, "bound.lambda1");
}

std::string ExperimentConfig::canonical() const {
  std::string out;
  for (const auto& [key, value] : values) {
    out += key;
    out += " = ";
    out += value;
    out += "\n";
  }
  return out;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(canonical()); }

std::string ExperimentConfig::hash_hex() const { return hex64(hash()); }

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  for (const KeySpec& spec : kRegistry) {
    cfg.values[spec.key] =
        *spec.preset ? normalize_value(spec, spec.preset) : std::string();
  }
  return cfg;
}

ExperimentConfig parse_config_text(std::string_view text,
                                   const std::string& origin) {
  ExperimentConfig cfg = default_config();
  std::map<std::string, int> set_lines;

  std::string section;
  int line_no = 0;
  std::size_t at = 0;
  while (at <= text.size()) {
    const std::size_t nl = text.find('\n', at);
    std::string line(text.substr(
        at, nl == std::string_view::npos ? std::string_view::npos : nl - at));
    ++line_no;
    at = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

    const std::size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.resize(hash_pos);
    line = trim(line);
    if (line.empty()) continue;

    const std::string where = origin + ":" + format_int(line_no);

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ParseError(where + ": malformed section header '" + line + "'");
      }
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (std::find_if(std::begin(kSections), std::end(kSections),
                       [&](const char* s) { return name == s; }) ==
          std::end(kSections)) {
        std::string msg = where + ": unknown section [" + name + "]";
        const std::string hint = suggest_section(name);
        if (!hint.empty()) msg += "; did you mean [" + hint + "]?";
        throw ConfigError(msg);
      }
      section = name;
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(where + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(where + ": missing key before '='");
    for (char c : key) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) {
        throw ParseError(where + ": invalid key name '" + key + "'");
      }
    }

    const std::string qualified = section.empty() ? key : section + "." + key;
    const KeySpec* spec = find_key(qualified);
    if (spec == nullptr) {
      std::string msg = where + ": unknown key '" + key + "'";
      if (!section.empty()) msg += " in [" + section + "]";
      const std::string hint = suggest_key(section, key);
      if (!hint.empty()) msg += "; did you mean '" + hint + "'?";
      throw ConfigError(msg);
    }
    const auto prior = set_lines.find(qualified);
    if (prior != set_lines.end()) {
      throw ParseError(where + ": duplicate key '" + qualified +
                       "' (first set on line " + format_int(prior->second) + ")");
    }
    set_lines[qualified] = line_no;
    try {
      cfg.values[qualified] = normalize_value(*spec, value);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }

  validate_config(cfg);
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  return parse_config_text(read_file(path), path.string());
}

nn::ModelSpec model_from_config(const ExperimentConfig& cfg) {
  const std::vector<std::string> presets = cfg.str_list("models");
  if (!presets.empty()) return nn::model_by_name(presets.front());
  nn::ModelSpec spec;
  spec.arch = nn::arch_from_name(cfg.str("model.arch"));
  spec.loss = nn::loss_from_name(cfg.str("model.loss"));
  spec.input_dim = static_cast<int>(cfg.integer("model.input_dim"));
  spec.output_dim = static_cast<int>(cfg.integer("model.output_dim"));
  spec.hidden_dim = static_cast<int>(cfg.integer("model.hidden_dim"));
  spec.image_side = static_cast<int>(cfg.integer("model.image_side"));
  spec.conv_channels = static_cast<int>(cfg.integer("model.conv_channels"));
  spec.conv_kernel = static_cast<int>(cfg.integer("model.conv_kernel"));
  spec.with_bias = cfg.flag("model.bias");
  spec.name = "custom";
  spec.validate();
  return spec;
}

std::vector<nn::ModelSpec> models_from_config(const ExperimentConfig& cfg) {
  const std::vector<std::string> presets = cfg.str_list("models");
  if (presets.empty()) return {model_from_config(cfg)};
  std::vector<nn::ModelSpec> out;
  out.reserve(presets.size());
  for (const std::string& name : presets) out.push_back(nn::model_by_name(name));
  return out;
}

nn::ParameterVector initial_params(const ExperimentConfig& cfg,
                                   const nn::ModelSpec& spec) {
  const double scale = cfg.num("model.init_scale");
  const std::uint64_t seed = parse_seed_token(cfg.str("model.init_seed"),
                                              "model.init_seed");
  if (scale == 0.0) return nn::zero_params(spec);
  return nn::random_params(spec, scale, seed);
}

std::vector<nn::DataSample> dataset_from_config(const ExperimentConfig& cfg,
                                                const nn::ModelSpec& spec) {
  const std::string source = cfg.str("data.source");
  nn::LabelRule rule;
  rule.kind = nn::label_rule_from_name(cfg.str("data.label_rule"));
  rule.flip_prob = cfg.num("data.flip_prob");
  rule.noise_std = cfg.num("data.noise_std");
  rule.teacher_seed = parse_seed_token(cfg.str("data.teacher_seed"),
                                       "data.teacher_seed");

  if (source == "synthetic") {
    nn::SyntheticPrior prior;
    prior.tau = cfg.num("data.tau");
    return nn::generate_synthetic_dataset(
        spec.input_dim, static_cast<int>(cfg.integer("data.count")), prior, rule,
        spec.output_dim, derive_seed(cfg.seed(), 0xda7a));
  }

  if (source == "images") {
    std::vector<nn::DataSample> samples =
        nn::load_image_dataset(cfg.str("data.path"));
    if (samples.empty()) {
      throw IngestError("image directory '" + cfg.str("data.path") +
                        "' produced an empty dataset");
    }
    for (const nn::DataSample& s : samples) {
      if (static_cast<int>(s.x.size()) != spec.input_dim) {
        throw IngestError("image pixel count " + format_int(static_cast<long long>(
                              s.x.size())) +
                          " does not match model input_dim " +
                          format_int(spec.input_dim));
      }
      if (s.target.kind == nn::Target::Kind::class_index &&
          (s.target.cls < 0 || s.target.cls >= spec.output_dim)) {
        throw IngestError("image label " + format_int(s.target.cls) +
                          " out of range for output_dim " +
                          format_int(spec.output_dim));
      }
    }
    return samples;
  }

  // source == "gsds": stored inputs, labels re-derived from the rule.
  nn::RawDataset raw = nn::load_dataset(cfg.str("data.path"));
  if (raw.input_dim != spec.input_dim) {
    throw IngestError("dataset input_dim " + format_int(raw.input_dim) +
                      " does not match model input_dim " +
                      format_int(spec.input_dim));
  }
  if (raw.rows.empty()) {
    throw IngestError("dataset file '" + cfg.str("data.path") + "' is empty");
  }
  return nn::label_rows(std::move(raw.rows), rule, spec.output_dim,
                        derive_seed(cfg.seed(), 0xda7a));
}

}  // namespace gradshield::harness

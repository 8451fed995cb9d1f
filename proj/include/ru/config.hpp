#pragma once

// Scenario configuration: a JSON tree read strictly. Unknown keys, wrong
// types and out-of-range values raise ConfigError naming the dotted field.

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ru/errors.hpp"
#include "ru/market.hpp"
#include "ru/utility.hpp"
#include "ru/verify.hpp"

namespace ru {

struct MarketPiece {
  double start = 0.0;
  Vector alpha;
  Matrix sigma;
};

struct MarketConfig {
  std::size_t d = 1, n = 1;
  std::vector<MarketPiece> pieces;  // constant market: one piece at t = 0
  Vector s0;
  double ellipticity_eps = 1e-8;

  MarketModel model() const {
    if (pieces.size() == 1) return MarketModel::constant(pieces[0].alpha, pieces[0].sigma, s0);
    std::vector<double> starts;
    std::vector<Vector> alphas;
    std::vector<Matrix> sigmas;
    for (const auto& p : pieces) {
      starts.push_back(p.start);
      alphas.push_back(p.alpha);
      sigmas.push_back(p.sigma);
    }
    return MarketModel::piecewise(starts, alphas, sigmas, s0);
  }
};

struct OutputConfig {
  std::string dir = "out";
  bool paths_csv = false;
  bool correction_csv = false;
  bool hedge_csv = false;
};

struct ScenarioConfig {
  std::string name = "scenario";
  MarketConfig market;
  std::string utility = "log";
  bool assume_valid = false;
  double x0 = 1.0;
  double t_end = 1.0;
  std::size_t steps = 64;
  std::size_t n_paths = 20000;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  std::vector<StoppingRule> stopping_rules;
  std::vector<Perturbation> perturbations;
  std::vector<double> epsilons = default_epsilons();
  std::size_t basis_order = 2;
  double hedge_tol = 1e-8;
  std::size_t martingale_times = 8;
  OutputConfig output;

  TimeGrid grid() const { return {t_end, steps}; }
  UtilityFamily family() const { return parse_utility(utility, assume_valid); }
};

namespace detail {

using nlohmann::json;

/// Strict view of one JSON object: every key must be consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json& get(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError(field(key), "missing required field");
    seen_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key) { return as_number(get(key), field(key)); }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  std::uint64_t count(const std::string& key) { return as_count(get(key), field(key)); }
  std::uint64_t count(const std::string& key, std::uint64_t fallback) { return has(key) ? count(key) : fallback; }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = get(key);
    if (!v.is_boolean()) throw ConfigError(field(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const json& v = get(key);
    if (!v.is_string()) throw ConfigError(field(key), "expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) { return has(key) ? string(key) : fallback; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown key");
  }

  static double as_number(const json& v, const std::string& f) {
    if (!v.is_number()) throw ConfigError(f, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(f, "must be finite");
    return x;
  }
  static std::uint64_t as_count(const json& v, const std::string& f) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ConfigError(f, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Vector read_vector(const json& v, const std::string& f, std::size_t len) {
  if (!v.is_array()) throw ConfigError(f, "expected an array of numbers");
  if (v.size() != len) throw ConfigError(f, "expected " + std::to_string(len) + " entries, got " + std::to_string(v.size()));
  Vector out(static_cast<Eigen::Index>(len));
  for (std::size_t i = 0; i < len; ++i)
    out[static_cast<Eigen::Index>(i)] = ObjectReader::as_number(v[i], f + "[" + std::to_string(i) + "]");
  return out;
}

inline Matrix read_matrix(const json& v, const std::string& f, std::size_t rows, std::size_t cols) {
  if (!v.is_array() || v.size() != rows)
    throw ConfigError(f, "expected " + std::to_string(rows) + " rows of " + std::to_string(cols) + " numbers");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    m.row(static_cast<Eigen::Index>(i)) = read_vector(v[i], f + "[" + std::to_string(i) + "]", cols).transpose();
  return m;
}

inline MarketConfig read_market(const json& j) {
  ObjectReader r(j, "market");
  MarketConfig m;
  m.d = r.count("d");
  m.n = r.count("n");
  if (m.d < 1 || m.d > m.n) throw ConfigError(r.field("d"), "need 1 <= d <= n");
  if (m.n > 16) throw ConfigError(r.field("n"), "at most 16 Brownian factors");
  m.s0 = read_vector(r.get("s0"), r.field("s0"), m.d);
  for (Eigen::Index i = 0; i < m.s0.size(); ++i)
    if (!(m.s0[i] > 0.0)) throw ConfigError(r.field("s0") + "[" + std::to_string(i) + "]", "prices must be positive");
  m.ellipticity_eps = r.number("ellipticity_eps", m.ellipticity_eps);
  if (m.ellipticity_eps < 0.0) throw ConfigError(r.field("ellipticity_eps"), "eigenvalue floor must be >= 0");
  if (r.has("pieces")) {
    if (r.has("alpha") || r.has("sigma")) throw ConfigError(r.field("pieces"), "give either pieces or alpha/sigma");
    const json& ps = r.get("pieces");
    if (!ps.is_array() || ps.empty()) throw ConfigError(r.field("pieces"), "expected a non-empty array");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      ObjectReader pr(ps[i], r.field("pieces") + "[" + std::to_string(i) + "]");
      MarketPiece piece;
      piece.start = pr.number("start");
      piece.alpha = read_vector(pr.get("alpha"), pr.field("alpha"), m.d);
      piece.sigma = read_matrix(pr.get("sigma"), pr.field("sigma"), m.d, m.n);
      pr.finish();
      if (i == 0 && piece.start != 0.0) throw ConfigError(pr.field("start"), "first piece must start at 0");
      if (i > 0 && !(piece.start > m.pieces.back().start))
        throw ConfigError(pr.field("start"), "piece starts must increase");
      m.pieces.push_back(std::move(piece));
    }
  } else {
    MarketPiece piece;
    piece.alpha = read_vector(r.get("alpha"), r.field("alpha"), m.d);
    piece.sigma = read_matrix(r.get("sigma"), r.field("sigma"), m.d, m.n);
    m.pieces.push_back(std::move(piece));
  }
  r.finish();
  return m;
}

inline StoppingRule read_rule(const json& j, const std::string& path, std::size_t d, double t_end) {
  ObjectReader r(j, path);
  const std::string kind = r.string("kind");
  StoppingRule rule;
  if (kind == "deterministic") {
    const double t = r.number("t");
    if (t < 0.0 || t > t_end) throw ConfigError(r.field("t"), "must lie in [0, T]");
    rule = Deterministic{t};
  } else if (kind == "hitting") {
    Hitting h;
    h.asset = r.count("asset", 0);
    if (h.asset >= d) throw ConfigError(r.field("asset"), "asset index out of range");
    h.level = r.number("level");
    const std::string dir = r.string("direction", "up");
    if (dir != "up" && dir != "down") throw ConfigError(r.field("direction"), "expected \"up\" or \"down\"");
    h.direction = dir == "up" ? Direction::Up : Direction::Down;
    rule = h;
  } else if (kind == "z_band") {
    ZBand z{r.number("lower"), r.number("upper")};
    if (!(z.lower < z.upper)) throw ConfigError(r.field("upper"), "need lower < upper");
    rule = z;
  } else {
    throw ConfigError(r.field("kind"), "unknown stopping rule '" + kind + "'");
  }
  r.finish();
  return rule;
}

inline Perturbation read_perturbation(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  const std::string kind = r.string("kind");
  Perturbation p;
  if (kind == "const") {
    p = Perturbation::constant(r.number("value"));
  } else if (kind == "scale") {
    p = Perturbation::scale(r.number("value"));
  } else if (kind == "fraction") {
    p = Perturbation::fraction(r.number("value"));
  } else if (kind == "shift") {
    const auto lag = r.count("lag");
    if (lag < 1) throw ConfigError(r.field("lag"), "lag must be at least one step");
    p = Perturbation::shift(lag);
  } else {
    throw ConfigError(r.field("kind"), "unknown perturbation '" + kind + "'");
  }
  r.finish();
  return p;
}

}  // namespace detail

inline ScenarioConfig parse_config(const nlohmann::json& j) {
  detail::ObjectReader r(j, "");
  ScenarioConfig c;
  c.name = r.string("name", c.name);
  c.market = detail::read_market(r.get("market"));

  {
    detail::ObjectReader u(r.get("utility"), "utility");
    c.utility = u.string("family");
    c.assume_valid = u.boolean("assume_valid", false);
    u.finish();
    try {
      (void)c.family();
    } catch (const std::exception& e) {
      throw ConfigError(u.field("family"), e.what());
    }
  }

  c.x0 = r.number("x0");
  if (!(c.x0 > 0.0)) throw ConfigError("x0", "initial wealth must be positive");
  {
    detail::ObjectReader g(r.get("grid"), "grid");
    c.t_end = g.number("T");
    c.steps = g.count("N");
    g.finish();
    if (!(c.t_end > 0.0)) throw ConfigError("grid.T", "horizon must be positive");
    if (c.steps < 1) throw ConfigError("grid.N", "need at least one step");
  }
  c.n_paths = r.count("n_paths");
  if (c.n_paths < 2) throw ConfigError("n_paths", "need at least two paths");
  c.seed = r.count("seed", c.seed);
  c.threads = r.count("threads", 0);

  if (r.has("stopping_rules")) {
    const auto& rules = r.get("stopping_rules");
    if (!rules.is_array()) throw ConfigError("stopping_rules", "expected an array");
    for (std::size_t i = 0; i < rules.size(); ++i)
      c.stopping_rules.push_back(
          detail::read_rule(rules[i], "stopping_rules[" + std::to_string(i) + "]", c.market.d, c.t_end));
  } else {
    c.stopping_rules.push_back(Deterministic{c.t_end});
  }

  if (r.has("perturbations")) {
    const auto& ps = r.get("perturbations");
    if (!ps.is_array()) throw ConfigError("perturbations", "expected an array");
    for (std::size_t i = 0; i < ps.size(); ++i)
      c.perturbations.push_back(detail::read_perturbation(ps[i], "perturbations[" + std::to_string(i) + "]"));
  } else {
    c.perturbations = default_perturbations();
  }
  for (const auto& p : c.perturbations)
    if (p.kind == Perturbation::Kind::Shift && static_cast<std::size_t>(p.value) > c.steps)
      throw ConfigError("perturbations", "shift lag exceeds the number of steps");

  if (r.has("epsilons")) {
    const auto& es = r.get("epsilons");
    if (!es.is_array() || es.empty()) throw ConfigError("epsilons", "expected a non-empty array");
    c.epsilons.clear();
    for (std::size_t i = 0; i < es.size(); ++i)
      c.epsilons.push_back(detail::ObjectReader::as_number(es[i], "epsilons[" + std::to_string(i) + "]"));
  }

  if (r.has("hedge")) {
    detail::ObjectReader h(r.get("hedge"), "hedge");
    c.basis_order = h.count("basis_order", c.basis_order);
    c.hedge_tol = h.number("tol", c.hedge_tol);
    h.finish();
    if (c.basis_order < 1 || c.basis_order > 6) throw ConfigError("hedge.basis_order", "must be between 1 and 6");
    if (!(c.hedge_tol > 0.0)) throw ConfigError("hedge.tol", "must be positive");
  }
  c.martingale_times = r.count("martingale_times", c.martingale_times);
  if (c.martingale_times < 1 || c.martingale_times > c.steps)
    throw ConfigError("martingale_times", "must be between 1 and grid.N");

  if (r.has("output")) {
    detail::ObjectReader o(r.get("output"), "output");
    c.output.dir = o.string("dir", c.output.dir);
    c.output.paths_csv = o.boolean("paths_csv", false);
    c.output.correction_csv = o.boolean("correction_csv", false);
    c.output.hedge_csv = o.boolean("hedge_csv", false);
    o.finish();
  }
  r.finish();

  ModelReport rep;
  try {
    rep = validate_model(c.market.model(), c.grid(), c.market.ellipticity_eps);
  } catch (const std::exception& e) {
    throw ConfigError("market", e.what());
  }
  if (!rep.passed) throw ConfigError(c.market.pieces.size() > 1 ? "market.pieces" : "market.sigma", rep.message);
  return c;
}

/// Reads and parses a config file. JSON syntax errors report line and column.
inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<syntax>", path + ": " + e.what());
  }
  return parse_config(j);
}

/// Fully resolved configuration, defaults included.
inline nlohmann::ordered_json to_json(const ScenarioConfig& c) {
  using oj = nlohmann::ordered_json;
  auto vec = [](const Vector& v) {
    oj a = oj::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
  };
  auto mat = [&](const Matrix& m) {
    oj a = oj::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec(m.row(i).transpose()));
    return a;
  };
  oj market;
  market["d"] = c.market.d;
  market["n"] = c.market.n;
  market["s0"] = vec(c.market.s0);
  market["ellipticity_eps"] = c.market.ellipticity_eps;
  oj pieces = oj::array();
  for (const auto& p : c.market.pieces) pieces.push_back(oj{{"start", p.start}, {"alpha", vec(p.alpha)}, {"sigma", mat(p.sigma)}});
  market["pieces"] = pieces;

  oj rules = oj::array();
  for (const auto& r : c.stopping_rules) rules.push_back(label(r));
  oj perts = oj::array();
  for (const auto& p : c.perturbations) perts.push_back(p.label());

  oj out;
  out["name"] = c.name;
  out["market"] = market;
  out["utility"] = oj{{"family", c.utility}, {"assume_valid", c.assume_valid}};
  out["x0"] = c.x0;
  out["grid"] = oj{{"T", c.t_end}, {"N", c.steps}};
  out["n_paths"] = c.n_paths;
  out["seed"] = c.seed;
  out["stopping_rules"] = rules;
  out["perturbations"] = perts;
  out["epsilons"] = c.epsilons;
  out["hedge"] = oj{{"basis_order", c.basis_order}, {"tol", c.hedge_tol}};
  out["martingale_times"] = c.martingale_times;
  out["output"] = oj{{"dir", c.output.dir},
                     {"paths_csv", c.output.paths_csv},
                     {"correction_csv", c.output.correction_csv},
                     {"hedge_csv", c.output.hedge_csv}};
  return out;
}

}  // namespace ru

#include "ddvar/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

namespace ddvar {

const char* const kFormulations = "is4dvar, rbl4dvar, minres, rpcg, dd4dvar";

void check_formulation(const std::string& f) {
  if (f == "is4dvar" || f == "rbl4dvar" || f == "minres" || f == "rpcg" || f == "dd4dvar") return;
  throw InvalidArgument("unknown formulation '" + f + "' (valid: " + kFormulations + ")");
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
T parse_number(const std::string& s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw InvalidArgument("not a valid number: '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw InvalidArgument("not a valid boolean: '" + s + "'");
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
Field number(T ExperimentConfig::*m) {
  return {[m](ExperimentConfig& c, const std::string& s) { c.*m = parse_number<T>(s); },
          [m](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt(c.*m);
            else return std::to_string(c.*m);
          }};
}

Field boolean(bool ExperimentConfig::*m) {
  return {[m](ExperimentConfig& c, const std::string& s) { c.*m = parse_bool(s); },
          [m](const ExperimentConfig& c) { return std::string(c.*m ? "true" : "false"); }};
}

Field text(std::string ExperimentConfig::*m) {
  return {[m](ExperimentConfig& c, const std::string& s) { c.*m = s; },
          [m](const ExperimentConfig& c) { return c.*m; }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  using C = ExperimentConfig;
  static const std::vector<std::pair<std::string, Field>> f = {
      {"nx", number(&C::nx)},
      {"ny", number(&C::ny)},
      {"dx", number(&C::dx)},
      {"dy", number(&C::dy)},
      {"dt", number(&C::dt)},
      {"n_steps", number(&C::n_steps)},
      {"model", {[](C& c, const std::string& s) { c.model = parse_model_kind(s); },
                 [](const C& c) { return to_string(c.model); }}},
      {"cx", number(&C::cx)},
      {"cy", number(&C::cy)},
      {"nu", number(&C::nu)},
      {"boundary", {[](C& c, const std::string& s) { c.boundary = parse_boundary_kind(s); },
                    [](const C& c) { return to_string(c.boundary); }}},
      {"bg_amplitude", number(&C::bg_amplitude)},
      {"sigma_b", number(&C::sigma_b)},
      {"length", number(&C::length)},
      {"nugget", number(&C::nugget)},
      {"sigma_f", number(&C::sigma_f)},
      {"sigma_bnd", number(&C::sigma_bnd)},
      {"obs_surface", number(&C::obs_surface)},
      {"obs_track", number(&C::obs_track)},
      {"obs_profile", number(&C::obs_profile)},
      {"sigma_surface", number(&C::sigma_surface)},
      {"sigma_track", number(&C::sigma_track)},
      {"sigma_profile", number(&C::sigma_profile)},
      {"noise_factor", number(&C::noise_factor)},
      {"obs_file", text(&C::obs_file)},
      {"ntile_i", number(&C::ntile_i)},
      {"ntile_j", number(&C::ntile_j)},
      {"halo", number(&C::halo)},
      {"n_t", number(&C::n_t)},
      {"formulation", {[](C& c, const std::string& s) {
                         check_formulation(s);
                         c.formulation = s;
                       },
                       [](const C& c) { return c.formulation; }}},
      {"nouter", number(&C::nouter)},
      {"ninner", number(&C::ninner)},
      {"tol", number(&C::tol)},
      {"reorthogonalize", boolean(&C::reorthogonalize)},
      {"dd_max_iter", number(&C::dd_max_iter)},
      {"dd_tol", number(&C::dd_tol)},
      {"dd_ninner", number(&C::dd_ninner)},
      {"dd_inner_tol", number(&C::dd_inner_tol)},
      {"alpha", number(&C::alpha)},
      {"beta_i", number(&C::beta_i)},
      {"beta_j", number(&C::beta_j)},
      {"gamma_i", number(&C::gamma_i)},
      {"gamma_j", number(&C::gamma_j)},
      {"dd_acceleration", {[](C& c, const std::string& s) { c.dd_acceleration = parse_acceleration(s); },
                           [](const C& c) { return to_string(c.dd_acceleration); }}},
      {"dd_relaxation", number(&C::dd_relaxation)},
      {"impact", boolean(&C::impact)},
      {"sensitivity", boolean(&C::sensitivity)},
      {"section_column", number(&C::section_column)},
      {"forecast_horizon", number(&C::forecast_horizon)},
      {"seed", number(&C::seed)},
      {"output", text(&C::output)},
  };
  return f;
}

const std::set<std::string> kMandatory = {"nx", "ny", "n_steps", "formulation"};

// Rejects with the key name; line numbers are added by the parser when known.
void check(bool ok, const std::string& key, const std::string& msg) {
  if (!ok) throw InvalidArgument("key '" + key + "': " + msg);
}

}  // namespace

Grid ExperimentConfig::grid() const { return {nx, ny, dx, dy, dt, n_steps}; }

ModelConfig ExperimentConfig::model_config() const {
  ModelConfig m;
  m.kind = model;
  m.cx = cx;
  m.cy = cy;
  m.nu = nu;
  m.boundary = boundary;
  return m;
}

CovarianceSpec ExperimentConfig::covariance_spec() const { return {sigma_b, length, nugget, sigma_f, sigma_bnd}; }

PlatformSpec ExperimentConfig::platform_spec() const {
  PlatformSpec p;
  p.counts = {obs_surface, obs_track, obs_profile};
  p.sigma = {sigma_surface, sigma_track, sigma_profile};
  p.noise_factor = noise_factor;
  return p;
}

DDConfig ExperimentConfig::dd_config() const {
  DDConfig d;
  d.max_iter = dd_max_iter;
  d.tol = dd_tol;
  d.ninner = dd_ninner;
  d.inner_tol = dd_inner_tol;
  d.weights = {alpha, beta_i, beta_j, gamma_i, gamma_j};
  d.acceleration = dd_acceleration;
  d.relaxation = dd_relaxation;
  return d;
}

OuterLoopConfig ExperimentConfig::outer_config() const {
  OuterLoopConfig o;
  o.nouter = nouter;
  o.ninner = ninner;
  o.solver = parse_solver(formulation);
  o.tol = tol;
  o.reorthogonalize = reorthogonalize;
  return o;
}

void ExperimentConfig::validate() const {
  check(nx >= 2, "nx", "must be >= 2");
  check(ny >= 2, "ny", "must be >= 2");
  check(dx > 0, "dx", "must be positive");
  check(dy > 0, "dy", "must be positive");
  check(dt > 0, "dt", "must be positive");
  check(n_steps >= 1, "n_steps", "must be >= 1");
  check(nu >= 0, "nu", "must be >= 0");
  try {
    model_config().validate(grid());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(std::string("key 'dt': ") + e.what());
  }
  check(sigma_b > 0, "sigma_b", "must be positive");
  check(length > 0, "length", "must be positive");
  check(nugget >= 1e-10, "nugget", "must be >= 1e-10");
  check(sigma_f > 0, "sigma_f", "must be positive");
  check(sigma_bnd > 0, "sigma_bnd", "must be positive");
  check(obs_surface >= 0, "obs_surface", "must be >= 0");
  check(obs_track >= 0, "obs_track", "must be >= 0");
  check(obs_profile >= 0, "obs_profile", "must be >= 0");
  check(sigma_surface > 0, "sigma_surface", "must be positive");
  check(sigma_track > 0, "sigma_track", "must be positive");
  check(sigma_profile > 0, "sigma_profile", "must be positive");
  check(noise_factor >= 0, "noise_factor", "must be >= 0");
  check(!obs_file.empty() || obs_surface + obs_track + obs_profile >= 1, "obs_surface",
        "at least one observation is required when obs_file is not given");
  check(ntile_i >= 1, "ntile_i", "must be >= 1");
  check(ntile_j >= 1, "ntile_j", "must be >= 1");
  check(ntile_i <= nx, "ntile_i", "exceeds nx");
  check(ntile_j <= ny, "ntile_j", "exceeds ny");
  check(halo >= 1, "halo", "must be >= 1");
  check(n_t >= 1, "n_t", "must be >= 1");
  check(n_t <= n_steps, "n_t", "exceeds n_steps");
  check(!formulation.empty(), "formulation", std::string("missing (valid: ") + kFormulations + ")");
  check_formulation(formulation);
  check(nouter >= 1, "nouter", "must be >= 1");
  check(ninner >= 1, "ninner", "must be >= 1");
  check(tol > 0, "tol", "must be positive");
  check(dd_max_iter >= 1, "dd_max_iter", "must be >= 1");
  check(dd_tol > 0, "dd_tol", "must be positive");
  check(dd_ninner >= 1, "dd_ninner", "must be >= 1");
  check(dd_inner_tol > 0, "dd_inner_tol", "must be positive");
  check(alpha > 0, "alpha", "must be positive");
  check(beta_i >= 0, "beta_i", "must be >= 0");
  check(beta_j >= 0, "beta_j", "must be >= 0");
  check(gamma_i >= 0, "gamma_i", "must be >= 0");
  check(gamma_j >= 0, "gamma_j", "must be >= 0");
  check(dd_relaxation > 0, "dd_relaxation", "must be positive");
  check(section_column >= -1 && section_column < nx, "section_column", "outside the grid");
  check(forecast_horizon >= 0, "forecast_horizon", "must be >= 0");
  check(!output.empty(), "output", "must not be empty");
  if (is_dd()) {
    try {
      build_tiles(grid(), ntile_i, ntile_j, halo, boundary == BoundaryKind::Periodic);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(std::string("key 'halo': ") + e.what());
    }
  }
}

ExperimentConfig parse_config(const std::string& text) {
  std::map<std::string, const Field*> table;
  for (const auto& [name, f] : fields()) table[name] = &f;
  ExperimentConfig c;
  std::map<std::string, int> seen;
  std::istringstream is(text);
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    const std::string where = "config line " + std::to_string(line);
    if (eq == std::string::npos) throw InvalidArgument(where + ": expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    const auto it = table.find(key);
    if (it == table.end()) throw InvalidArgument(where + ": unknown key '" + key + "'");
    if (!seen.emplace(key, line).second) throw InvalidArgument(where + ": duplicate key '" + key + "'");
    try {
      it->second->set(c, value);
    } catch (const std::exception& e) {
      throw InvalidArgument(where + ": key '" + key + "': " + e.what());
    }
  }
  for (const std::string& k : kMandatory)
    if (!seen.count(k)) throw InvalidArgument("config: missing mandatory key '" + k + "'");
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    if (msg.rfind("key '", 0) == 0) {
      const std::string key = msg.substr(5, msg.find('\'', 5) - 5);
      const auto it = seen.find(key);
      if (it != seen.end()) throw InvalidArgument("config line " + std::to_string(it->second) + ": " + msg);
    }
    throw InvalidArgument("config: " + msg);
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const ExperimentConfig& c) {
  std::string out;
  for (const auto& [name, f] : fields()) {
    const std::string v = f.get(c);
    if (v.empty()) continue;
    out += name + " = " + v + "\n";
  }
  return out;
}

}  // namespace ddvar

#include "qpf/config_io.hpp"

#include <fstream>
#include <iomanip>
#include <initializer_list>
#include <ostream>
#include <sstream>
#include <string_view>

#include <json.hpp>

#include "qpf/errors.hpp"

namespace qpf {

namespace {

using nlohmann::json;

void RejectUnknownKeys(json const& doc, std::string_view what,
                       std::initializer_list<std::string_view> allowed) {
  if (!doc.is_object()) {
    throw ConfigError(std::string(what) + " must be a JSON object");
  }
  for (auto const& [key, value] : doc.items()) {
    bool known = false;
    for (std::string_view const a : allowed) {
      known = known || key == a;
    }
    if (!known) {
      throw ConfigError("unknown key '" + key + "' in " + std::string(what));
    }
  }
}

json const& Require(json const& doc, char const* key, std::string_view what) {
  auto const it = doc.find(key);
  if (it == doc.end()) {
    throw ConfigError("missing key '" + std::string(key) + "' in " +
                      std::string(what));
  }
  return *it;
}

double Number(json const& value, char const* key) {
  if (!value.is_number()) {
    throw ConfigError(std::string("'") + key + "' must be a number");
  }
  return value.get<double>();
}

Vec3 Vector3(json const& value, char const* key) {
  if (!value.is_array() || value.size() != 3) {
    throw ConfigError(std::string("'") + key + "' must be a 3-element array");
  }
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    v[i] = Number(value[static_cast<std::size_t>(i)], key);
  }
  return v;
}

json ToJson(Vec3 const& v) { return json::array({v.x(), v.y(), v.z()}); }

GyroParams ParseGyro(json const& doc) {
  RejectUnknownKeys(doc, "gyro", {"sigma_v", "sigma_u", "dt"});
  GyroParams g;
  g.sigma_v = Number(Require(doc, "sigma_v", "gyro"), "sigma_v");
  g.sigma_u = Number(Require(doc, "sigma_u", "gyro"), "sigma_u");
  g.dt = Number(Require(doc, "dt", "gyro"), "dt");
  return g;
}

json GyroToJson(GyroParams const& g) {
  return json{{"sigma_v", g.sigma_v}, {"sigma_u", g.sigma_u}, {"dt", g.dt}};
}

RateProfile ParseRateProfile(json const& doc) {
  std::string const type = [&] {
    json const& t = Require(doc, "type", "rate_profile");
    if (!t.is_string()) {
      throw ConfigError("rate_profile.type must be a string");
    }
    return t.get<std::string>();
  }();
  if (type == "constant") {
    RejectUnknownKeys(doc, "rate_profile", {"type", "omega"});
    return RateProfile::Constant(
        Vector3(Require(doc, "omega", "rate_profile"), "omega"));
  }
  if (type == "sinusoidal") {
    RejectUnknownKeys(doc, "rate_profile", {"type", "amplitude", "period"});
    double const period =
        Number(Require(doc, "period", "rate_profile"), "period");
    if (!(period > 0.0)) {
      throw ConfigError("rate_profile.period must be positive");
    }
    return RateProfile::Sinusoidal(
        Vector3(Require(doc, "amplitude", "rate_profile"), "amplitude"),
        period);
  }
  throw ConfigError("rate_profile.type must be 'constant' or 'sinusoidal'");
}

json RateProfileToJson(RateProfile const& profile) {
  switch (profile.kind()) {
    case RateProfile::Kind::kConstant:
      return json{{"type", "constant"}, {"omega", ToJson(profile.vector())}};
    case RateProfile::Kind::kSinusoidal:
      return json{{"type", "sinusoidal"},
                  {"amplitude", ToJson(profile.vector())},
                  {"period", profile.period()}};
  }
  return json{};
}

json ParseText(std::string const& text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (json::parse_error const& e) {
    throw ConfigError("invalid JSON in " + std::string(what) + ": " + e.what());
  }
}

std::string ReadFile(std::filesystem::path const& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

json SummaryJson(MonteCarloSummary const& s, MetricsOptions const& options) {
  json runs = json::array();
  for (std::size_t i = 0; i < s.seeds.size(); ++i) {
    runs.push_back(json{{"seed", s.seeds[i]},
                        {"final_rmse_rad", s.final_rmse[i]},
                        {"diverged", static_cast<bool>(s.diverged[i])}});
  }
  return json{
      {"strategy", ToString(s.strategy)},
      {"n_runs", s.n_runs},
      {"median_final_rmse_rad", s.median_final_rmse_rad},
      {"mean_final_rmse_rad", s.mean_final_rmse_rad},
      {"sigma3_consistency", s.sigma3_consistency},
      {"wall_time_s", s.wall_time_s},
      {"divergence_count", s.divergence_count},
      {"metrics",
       {{"convergence_exclusion_s", options.convergence_exclusion},
        {"final_window_fraction", options.final_window_fraction},
        {"divergence_threshold_rad", options.divergence_threshold},
        {"sigma3_envelope", "3*sqrt(trace(attitude covariance)) in radians"}}},
      {"runs", runs},
  };
}

}  // namespace

Scenario ParseScenario(std::string const& json_text) {
  json const doc = ParseText(json_text, "scenario");
  constexpr std::string_view kWhat = "scenario";
  RejectUnknownKeys(doc, kWhat,
                    {"description", "duration", "dt", "rate_profile", "gyro",
                     "references", "obs_sigma", "obs_interval",
                     "init_attitude_error", "init_bias_error"});
  Scenario s;
  s.duration = Number(Require(doc, "duration", kWhat), "duration");
  s.dt = Number(Require(doc, "dt", kWhat), "dt");
  s.rate_profile = ParseRateProfile(Require(doc, "rate_profile", kWhat));
  s.gyro = ParseGyro(Require(doc, "gyro", kWhat));
  json const& refs = Require(doc, "references", kWhat);
  if (!refs.is_array()) {
    throw ConfigError("'references' must be an array of 3-vectors");
  }
  for (json const& r : refs) {
    s.references.push_back(Vector3(r, "references"));
  }
  s.obs_sigma = Number(Require(doc, "obs_sigma", kWhat), "obs_sigma");
  s.obs_interval = Number(Require(doc, "obs_interval", kWhat), "obs_interval");
  s.init_attitude_error = Number(Require(doc, "init_attitude_error", kWhat),
                                 "init_attitude_error");
  s.init_bias_error =
      Number(Require(doc, "init_bias_error", kWhat), "init_bias_error");
  s.Validate();
  return s;
}

Scenario LoadScenario(std::filesystem::path const& path) {
  return ParseScenario(ReadFile(path));
}

std::string ScenarioToJson(Scenario const& s) {
  json refs = json::array();
  for (Vec3 const& r : s.references) {
    refs.push_back(ToJson(r));
  }
  json const doc{{"duration", s.duration},
                 {"dt", s.dt},
                 {"rate_profile", RateProfileToJson(s.rate_profile)},
                 {"gyro", GyroToJson(s.gyro)},
                 {"references", refs},
                 {"obs_sigma", s.obs_sigma},
                 {"obs_interval", s.obs_interval},
                 {"init_attitude_error", s.init_attitude_error},
                 {"init_bias_error", s.init_bias_error}};
  return doc.dump(2);
}

FilterConfig ParseFilterConfig(std::string const& json_text) {
  json const doc = ParseText(json_text, "filter config");
  constexpr std::string_view kWhat = "filter config";
  RejectUnknownKeys(doc, kWhat,
                    {"description", "n_particles", "fiducial", "grp_a",
                     "grp_f", "resample_threshold", "jitter_bandwidth",
                     "max_tempering_stages", "gyro", "seed"});
  FilterConfig c;
  if (auto it = doc.find("n_particles"); it != doc.end()) {
    if (!it->is_number_integer()) {
      throw ConfigError("'n_particles' must be an integer");
    }
    c.n_particles = it->get<int>();
  }
  if (auto it = doc.find("fiducial"); it != doc.end()) {
    if (!it->is_string()) {
      throw ConfigError("'fiducial' must be \"baseline\" or \"mmse\"");
    }
    c.fiducial = ParseFiducialStrategy(it->get<std::string>());
  }
  if (auto it = doc.find("grp_a"); it != doc.end()) {
    c.grp.a = Number(*it, "grp_a");
  }
  if (auto it = doc.find("grp_f"); it != doc.end()) {
    c.grp.f = Number(*it, "grp_f");
  }
  if (auto it = doc.find("resample_threshold"); it != doc.end()) {
    c.resample_threshold = Number(*it, "resample_threshold");
  }
  if (auto it = doc.find("jitter_bandwidth"); it != doc.end()) {
    if (it->is_string() && it->get<std::string>() == "silverman") {
      c.jitter_bandwidth.reset();
    } else {
      c.jitter_bandwidth = Number(*it, "jitter_bandwidth");
    }
  }
  if (auto it = doc.find("max_tempering_stages"); it != doc.end()) {
    if (!it->is_number_integer()) {
      throw ConfigError("'max_tempering_stages' must be an integer");
    }
    c.max_tempering_stages = it->get<int>();
  }
  if (auto it = doc.find("gyro"); it != doc.end()) {
    c.gyro = ParseGyro(*it);
  }
  if (auto it = doc.find("seed"); it != doc.end()) {
    if (!it->is_number_unsigned()) {
      throw ConfigError("'seed' must be a nonnegative integer");
    }
    c.seed = it->get<std::uint64_t>();
  }
  c.Validate();
  return c;
}

FilterConfig LoadFilterConfig(std::filesystem::path const& path) {
  return ParseFilterConfig(ReadFile(path));
}

std::string FilterConfigToJson(FilterConfig const& c) {
  json doc{{"n_particles", c.n_particles},
           {"fiducial", ToString(c.fiducial)},
           {"grp_a", c.grp.a},
           {"grp_f", c.grp.f},
           {"resample_threshold", c.resample_threshold},
           {"max_tempering_stages", c.max_tempering_stages},
           {"gyro", GyroToJson(c.gyro)},
           {"seed", c.seed}};
  if (c.jitter_bandwidth) {
    doc["jitter_bandwidth"] = *c.jitter_bandwidth;
  } else {
    doc["jitter_bandwidth"] = "silverman";
  }
  return doc.dump(2);
}

void WriteRunCsv(RunMetrics const& m, std::ostream& out) {
  out << "t,err_att_rad,err_bias_x,err_bias_y,err_bias_z,sig3_att,ess,norm_dev\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < m.t.size(); ++i) {
    out << m.t[i] << ',' << m.err_att[i] << ',' << m.err_bias[i].x() << ','
        << m.err_bias[i].y() << ',' << m.err_bias[i].z() << ','
        << m.sig3_att[i] << ',' << m.ess[i] << ',' << m.norm_dev[i] << '\n';
  }
}

std::string SummaryToJson(MonteCarloSummary const& summary,
                          MetricsOptions const& options) {
  return SummaryJson(summary, options).dump(2);
}

void WriteComparisonCsv(ComparisonReport const& report, std::ostream& out) {
  std::string const a = ToString(report.first.strategy);
  std::string const b = ToString(report.second.strategy);
  out << "seed," << a << "_final_rmse_rad," << b << "_final_rmse_rad," << a
      << "_diverged," << b << "_diverged,same_streams\n";
  out << std::setprecision(17);
  for (ComparisonRow const& row : report.rows) {
    out << row.seed << ',' << row.first_final_rmse << ','
        << row.second_final_rmse << ',' << (row.first_diverged ? 1 : 0) << ','
        << (row.second_diverged ? 1 : 0) << ',' << (row.same_streams ? 1 : 0)
        << '\n';
  }
}

std::string ComparisonToJson(ComparisonReport const& report,
                             MetricsOptions const& options) {
  bool all_same = true;
  for (ComparisonRow const& row : report.rows) {
    all_same = all_same && row.same_streams;
  }
  double const a = report.first.median_final_rmse_rad;
  double const b = report.second.median_final_rmse_rad;
  json const doc{
      {"first", SummaryJson(report.first, options)},
      {"second", SummaryJson(report.second, options)},
      {"median_ratio_second_over_first", a > 0.0 ? b / a : 1.0},
      {"common_random_numbers", all_same},
  };
  return doc.dump(2);
}

}  // namespace qpf

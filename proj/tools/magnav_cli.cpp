// magnav-cli: simulation, Monte-Carlo sweeps, compensation calibration, and
// CRLB evaluation over the magnav core library. All data outputs are plain
// CSV; each run directory gets a manifest.json listing files and checksums.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "magnav/crlb.hpp"
#include "magnav/csv.hpp"
#include "magnav/field.hpp"
#include "magnav/hybrid.hpp"
#include "magnav/rng.hpp"
#include "magnav/tolles_lawson.hpp"
#include "magnav/toy_odometry.hpp"
#include "magnav/trajectory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace magnav;

namespace {

constexpr const char* kToolVersion = "magnav-cli 0.1.0";
constexpr const char* kArtifactVersion = "1";

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Config parsing. Strict: unknown keys are errors, reported with their path.

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) throw ConfigError("unknown config key: " + path + "." + it.key());
  }
}

template <typename T>
void get_to(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) obj.at(key).get_to(out);
}

TrajectoryKind parse_kind(const std::string& s, const std::string& path) {
  if (s == "lawnmower") return TrajectoryKind::Lawnmower;
  if (s == "figure8") return TrajectoryKind::FigureEight;
  if (s == "spiral") return TrajectoryKind::Spiral;
  if (s == "irregular") return TrajectoryKind::Irregular;
  throw ConfigError("invalid trajectory kind at " + path + ": " + s);
}

Scenario parse_scenario(const std::string& s, const std::string& path) {
  if (s == "known") return Scenario::KnownStructure;
  if (s == "nn") return Scenario::NeuralNetwork;
  throw ConfigError("invalid scenario at " + path + ": " + s);
}

FeatureSet parse_feature_set(const std::string& s, const std::string& path) {
  if (s == "m") return FeatureSet::M;
  if (s == "mv") return FeatureSet::MV;
  if (s == "all") return FeatureSet::ALL;
  throw ConfigError("invalid feature_set at " + path + ": " + s);
}

DecouplingLevel parse_decoupling(const std::string& s, const std::string& path) {
  if (s == "full") return DecouplingLevel::FullyCoupled;
  if (s == "state_model") return DecouplingLevel::StateModel;
  if (s == "layer_wise") return DecouplingLevel::LayerWise;
  if (s == "diag") return DecouplingLevel::FullDiagonalParams;
  throw ConfigError("invalid decoupling at " + path + ": " + s);
}

void parse_sim_section(const json& obj, const std::string& path, SimConfig& sim) {
  check_keys(obj, path,
             {"scenario", "feature_set", "n_hidden", "nn_gain", "nn_output_scale",
              "nn_output_bias", "sigma_w", "sigma_upsilon", "p0_state", "p0_params",
              "q_state_filter", "q_params", "r_filter", "gate_active", "gate_threshold",
              "gate_warmup_s", "decoupling", "seed", "record_jacobians"});
  if (obj.contains("scenario"))
    sim.scenario = parse_scenario(obj.at("scenario").get<std::string>(), path);
  if (obj.contains("feature_set"))
    sim.feature_set = parse_feature_set(obj.at("feature_set").get<std::string>(), path);
  get_to(obj, "n_hidden", sim.n_hidden);
  get_to(obj, "nn_gain", sim.nn_gain);
  get_to(obj, "nn_output_scale", sim.nn_output_scale);
  get_to(obj, "nn_output_bias", sim.nn_output_bias);
  get_to(obj, "sigma_w", sim.sigma_w);
  get_to(obj, "sigma_upsilon", sim.sigma_upsilon);
  get_to(obj, "p0_state", sim.p0_state);
  get_to(obj, "p0_params", sim.p0_params);
  get_to(obj, "q_state_filter", sim.q_state_filter);
  get_to(obj, "q_params", sim.q_params);
  get_to(obj, "r_filter", sim.r_filter);
  get_to(obj, "gate_active", sim.gate.active);
  get_to(obj, "gate_threshold", sim.gate.threshold);
  get_to(obj, "gate_warmup_s", sim.gate_warmup_s);
  if (obj.contains("decoupling"))
    sim.decoupling = parse_decoupling(obj.at("decoupling").get<std::string>(), path);
  get_to(obj, "seed", sim.seed);
  get_to(obj, "record_jacobians", sim.record_jacobians);
}

struct AppConfig {
  TrajectoryPlan plan;
  std::uint64_t map_seed = 42;
  int map_bumps = 40;
  double map_extent = 2000.0;
  std::string map_csv;  // non-empty: load a grid map instead
  InterferenceTruth truth;
  SimConfig sim;
  int trials = 100;
  std::vector<McConfig> grid;
  HybridSimConfig hybrid;

  AnomalyMap2D make_map() const {
    if (!map_csv.empty()) return AnomalyMap2D::load_grid_csv(map_csv);
    return AnomalyMap2D::random_default(map_seed, map_bumps, map_extent);
  }
};

InterferenceTruth default_truth() { return InterferenceTruth::toy_default(); }

AppConfig parse_config(const json& root) {
  AppConfig cfg;
  cfg.truth = default_truth();
  check_keys(root, "$",
             {"trajectory", "map", "truth", "sim", "montecarlo", "hybrid"});

  if (root.contains("trajectory")) {
    const json& tr = root.at("trajectory");
    check_keys(tr, "trajectory",
               {"kind", "duration", "dt", "nominal_speed", "speed_jitter",
                "speed_period", "start_x", "start_y", "leg_length", "leg_spacing",
                "radius", "spiral_pitch", "n_waypoints", "extent", "margin"});
    if (tr.contains("kind"))
      cfg.plan.kind = parse_kind(tr.at("kind").get<std::string>(), "trajectory.kind");
    get_to(tr, "duration", cfg.plan.duration);
    get_to(tr, "dt", cfg.plan.dt);
    get_to(tr, "nominal_speed", cfg.plan.nominal_speed);
    get_to(tr, "speed_jitter", cfg.plan.speed_jitter);
    get_to(tr, "speed_period", cfg.plan.speed_period);
    get_to(tr, "start_x", cfg.plan.start.x());
    get_to(tr, "start_y", cfg.plan.start.y());
    get_to(tr, "leg_length", cfg.plan.leg_length);
    get_to(tr, "leg_spacing", cfg.plan.leg_spacing);
    get_to(tr, "radius", cfg.plan.radius);
    get_to(tr, "spiral_pitch", cfg.plan.spiral_pitch);
    get_to(tr, "n_waypoints", cfg.plan.n_waypoints);
    get_to(tr, "extent", cfg.plan.extent);
    get_to(tr, "margin", cfg.plan.margin);
  }

  if (root.contains("map")) {
    const json& mp = root.at("map");
    check_keys(mp, "map", {"seed", "n_bumps", "extent", "grid_csv"});
    get_to(mp, "seed", cfg.map_seed);
    get_to(mp, "n_bumps", cfg.map_bumps);
    get_to(mp, "extent", cfg.map_extent);
    get_to(mp, "grid_csv", cfg.map_csv);
  }

  if (root.contains("truth")) {
    const json& tu = root.at("truth");
    check_keys(tu, "truth", {"beta", "c"});
    if (tu.contains("beta")) {
      auto v = tu.at("beta").get<std::vector<double>>();
      if (v.size() != 7) throw ConfigError("truth.beta must have 7 entries");
      for (int i = 0; i < 7; ++i) cfg.truth.beta(i) = v[i];
    }
    get_to(tu, "c", cfg.truth.c);
  }

  if (root.contains("sim")) parse_sim_section(root.at("sim"), "sim", cfg.sim);

  if (root.contains("montecarlo")) {
    const json& mc = root.at("montecarlo");
    check_keys(mc, "montecarlo", {"trials", "grid"});
    get_to(mc, "trials", cfg.trials);
    if (mc.contains("grid")) {
      int idx = 0;
      for (const json& entry : mc.at("grid")) {
        McConfig g;
        g.sim = cfg.sim;
        const std::string path = "montecarlo.grid[" + std::to_string(idx) + "]";
        if (!entry.contains("label"))
          throw ConfigError(path + " missing required key: label");
        g.label = entry.at("label").get<std::string>();
        json overrides = entry;
        overrides.erase("label");
        parse_sim_section(overrides, path, g.sim);
        cfg.grid.push_back(std::move(g));
        ++idx;
      }
    }
  }
  if (cfg.grid.empty()) cfg.grid.push_back({cfg.sim, "default"});

  if (root.contains("hybrid")) {
    const json& hy = root.at("hybrid");
    check_keys(hy, "hybrid",
               {"duration", "dt", "external_field_ned", "att_amplitude", "att_period",
                "tl_truth", "residual_amplitude", "sigma_meas", "n_hidden", "nn_gain",
                "nn_alpha", "p0_tl", "p0_cb", "p0_nn", "q_tl", "q_cb", "q_nn", "r",
                "seed"});
    get_to(hy, "duration", cfg.hybrid.duration);
    get_to(hy, "dt", cfg.hybrid.dt);
    auto get_vec3 = [&](const char* key, Eigen::Vector3d& out) {
      if (!hy.contains(key)) return;
      auto v = hy.at(key).get<std::vector<double>>();
      if (v.size() != 3)
        throw ConfigError(std::string("hybrid.") + key + " must have 3 entries");
      out = Eigen::Vector3d(v[0], v[1], v[2]);
    };
    get_vec3("external_field_ned", cfg.hybrid.external_field_ned);
    get_vec3("att_amplitude", cfg.hybrid.att_amplitude);
    get_vec3("att_period", cfg.hybrid.att_period);
    if (hy.contains("tl_truth")) {
      auto v = hy.at("tl_truth").get<std::vector<double>>();
      if (v.size() != 18) throw ConfigError("hybrid.tl_truth must have 18 entries");
      for (int i = 0; i < 18; ++i) cfg.hybrid.tl_truth.beta(i) = v[i];
    }
    get_to(hy, "residual_amplitude", cfg.hybrid.residual_amplitude);
    get_to(hy, "sigma_meas", cfg.hybrid.sigma_meas);
    get_to(hy, "n_hidden", cfg.hybrid.n_hidden);
    get_to(hy, "nn_gain", cfg.hybrid.nn_gain);
    get_to(hy, "nn_alpha", cfg.hybrid.nn_alpha);
    get_to(hy, "p0_tl", cfg.hybrid.p0_tl);
    get_to(hy, "p0_cb", cfg.hybrid.p0_cb);
    get_to(hy, "p0_nn", cfg.hybrid.p0_nn);
    get_to(hy, "q_tl", cfg.hybrid.q_tl);
    get_to(hy, "q_cb", cfg.hybrid.q_cb);
    get_to(hy, "q_nn", cfg.hybrid.q_nn);
    get_to(hy, "r", cfg.hybrid.r);
    get_to(hy, "seed", cfg.hybrid.seed);
  }

  return cfg;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in, nullptr, /*allow_exceptions=*/true,
                       /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
}

// Serialized snapshot of the fully resolved configuration for the manifest.
json config_snapshot(const AppConfig& cfg) {
  const char* kinds[] = {"lawnmower", "figure8", "spiral", "irregular"};
  const char* scenarios[] = {"known", "nn"};
  const char* fsets[] = {"m", "mv", "all"};
  const char* decs[] = {"full", "state_model", "layer_wise", "diag"};
  auto sim_json = [&](const SimConfig& s) {
    return json{{"scenario", scenarios[static_cast<int>(s.scenario)]},
                {"feature_set", fsets[static_cast<int>(s.feature_set)]},
                {"n_hidden", s.n_hidden},
                {"nn_gain", s.nn_gain},
                {"nn_output_scale", s.nn_output_scale},
                {"nn_output_bias", s.nn_output_bias},
                {"sigma_w", s.sigma_w},
                {"sigma_upsilon", s.sigma_upsilon},
                {"p0_state", s.p0_state},
                {"p0_params", s.p0_params},
                {"q_state_filter", s.q_state_filter},
                {"q_params", s.q_params},
                {"r_filter", s.r_filter},
                {"gate_active", s.gate.active},
                {"gate_threshold", s.gate.threshold},
                {"gate_warmup_s", s.gate_warmup_s},
                {"decoupling", decs[static_cast<int>(s.decoupling)]},
                {"seed", s.seed},
                {"record_jacobians", s.record_jacobians}};
  };
  json j;
  j["trajectory"] = {{"kind", kinds[static_cast<int>(cfg.plan.kind)]},
                     {"duration", cfg.plan.duration},
                     {"dt", cfg.plan.dt},
                     {"nominal_speed", cfg.plan.nominal_speed},
                     {"speed_jitter", cfg.plan.speed_jitter},
                     {"speed_period", cfg.plan.speed_period},
                     {"start_x", cfg.plan.start.x()},
                     {"start_y", cfg.plan.start.y()},
                     {"leg_length", cfg.plan.leg_length},
                     {"leg_spacing", cfg.plan.leg_spacing},
                     {"radius", cfg.plan.radius},
                     {"spiral_pitch", cfg.plan.spiral_pitch},
                     {"n_waypoints", cfg.plan.n_waypoints},
                     {"extent", cfg.plan.extent},
                     {"margin", cfg.plan.margin}};
  j["map"] = {{"seed", cfg.map_seed},
              {"n_bumps", cfg.map_bumps},
              {"extent", cfg.map_extent},
              {"grid_csv", cfg.map_csv}};
  j["truth"] = {{"beta", std::vector<double>(cfg.truth.beta.data(),
                                             cfg.truth.beta.data() + 7)},
                {"c", cfg.truth.c}};
  j["sim"] = sim_json(cfg.sim);
  json grid = json::array();
  for (const auto& g : cfg.grid) {
    json e = sim_json(g.sim);
    e["label"] = g.label;
    grid.push_back(e);
  }
  j["montecarlo"] = {{"trials", cfg.trials}, {"grid", grid}};
  return j;
}

// ---------------------------------------------------------------------------
// Manifest / artifact helpers.

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%FT%TZ", std::gmtime(&t));
  return buf;
}

struct Manifest {
  json config;
  std::uint64_t seed = 0;
  std::string started = iso_now();
  std::vector<std::pair<std::string, std::uint32_t>> files;  // name, crc32

  void add(const fs::path& path) {
    files.emplace_back(path.filename().string(), crc32_file(path.string()));
  }

  void write(const fs::path& dir) const {
    json j;
    j["tool_version"] = kToolVersion;
    j["artifact_version"] = kArtifactVersion;
    j["seed"] = seed;
    j["started"] = started;
    j["finished"] = iso_now();
    j["config"] = config;
    json f = json::object();
    for (const auto& [name, crc] : files) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08x", crc);
      f[name] = buf;
    }
    j["files"] = f;
    std::ofstream out(dir / "manifest.json");
    out << j.dump(2) << "\n";
  }
};

void write_trial_csv(const fs::path& path, const RunResult& run) {
  std::ofstream out(path);
  out << "t,truth_x,truth_y,odo_x,odo_y,est_x,est_y,g_true,g_model,nis,gated\n";
  for (std::size_t i = 0; i < run.t.size(); ++i) {
    out << format_double(run.t[i]) << ',' << format_double(run.truth_pos[i].x()) << ','
        << format_double(run.truth_pos[i].y()) << ','
        << format_double(run.odo_pos[i].x()) << ','
        << format_double(run.odo_pos[i].y()) << ','
        << format_double(run.est_pos[i].x()) << ','
        << format_double(run.est_pos[i].y()) << ',' << format_double(run.g_true[i])
        << ',' << format_double(run.g_model[i]) << ',' << format_double(run.nis[i])
        << ',' << (run.gated[i] ? 1 : 0) << '\n';
  }
}

// Side-file consumed by `crlb`: filter model scalars, then one measurement-
// Jacobian row per step.
void write_jacobians_csv(const fs::path& path, const RunResult& run) {
  std::ofstream out(path);
  out << "n_params,dt,q_state,q_params,r,p0_state,p0_params\n";
  out << run.n_params << ',' << format_double(run.dt) << ','
      << format_double(run.q_state) << ',' << format_double(run.q_params) << ','
      << format_double(run.r) << ',' << format_double(run.p0_state) << ','
      << format_double(run.p0_params) << "\nh_rows\n";
  for (const auto& h : run.jacobians) {
    for (int i = 0; i < h.size(); ++i) {
      if (i) out << ',';
      out << format_double(h(i));
    }
    out << '\n';
  }
}

void write_summary_csv(const fs::path& path, const std::vector<McSummary>& rows) {
  std::ofstream out(path);
  out << "label,scenario,feature_set,n_hidden,n_trials,n_diverged,"
         "pos_error_mean,pos_error_std,pos_error_median,pos_error_iqr,"
         "model_rmse_mean,model_rmse_std,odometry_drift_mean\n";
  for (const auto& s : rows) {
    out << s.label << ',' << scenario_name(s.scenario) << ','
        << feature_set_name(s.feature_set) << ',' << s.n_hidden << ',' << s.n_trials
        << ',' << s.n_diverged << ',' << format_double(s.mean_pos_error_mean) << ','
        << format_double(s.mean_pos_error_std) << ','
        << format_double(s.mean_pos_error_median) << ','
        << format_double(s.mean_pos_error_iqr) << ','
        << format_double(s.model_rmse_mean) << ',' << format_double(s.model_rmse_std)
        << ',' << format_double(s.odometry_drift_mean) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Subcommand bodies. Each returns the process exit code.

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool record_jacobians = false;
};

AppConfig resolve_config(const CommonOpts& opts) {
  AppConfig cfg = opts.config_path.empty() ? AppConfig{.truth = default_truth()}
                                           : parse_config(load_config_file(opts.config_path));
  if (opts.seed) {
    cfg.sim.seed = *opts.seed;
    for (auto& g : cfg.grid) g.sim.seed = *opts.seed;
    cfg.hybrid.seed = *opts.seed;
  }
  if (opts.record_jacobians) cfg.sim.record_jacobians = true;
  return cfg;
}

int cmd_simulate(const CommonOpts& opts) {
  AppConfig cfg = resolve_config(opts);
  const AnomalyMap2D map = cfg.make_map();

  Manifest manifest;
  manifest.config = config_snapshot(cfg);
  manifest.seed = cfg.sim.seed;

  const RunResult run = run_trial(cfg.sim, cfg.plan, map, cfg.truth);

  fs::create_directories(opts.out_dir);
  const fs::path dir(opts.out_dir);
  write_trial_csv(dir / "trial.csv", run);
  manifest.add(dir / "trial.csv");
  if (cfg.sim.record_jacobians) {
    write_jacobians_csv(dir / "jacobians.csv", run);
    manifest.add(dir / "jacobians.csv");
  }
  manifest.write(dir);

  std::cout << "simulate: " << run.t.size() << " steps, mean position error "
            << format_double(run.mean_position_error) << " m, model RMSE "
            << format_double(run.model_rmse) << " nT, drift "
            << format_double(run.final_odometry_drift) << " m"
            << (run.diverged ? " [DIVERGED]" : "") << "\n";
  return 0;
}

int cmd_montecarlo(const CommonOpts& opts, int trials_override) {
  AppConfig cfg = resolve_config(opts);
  if (trials_override > 0) cfg.trials = trials_override;
  const AnomalyMap2D map = cfg.make_map();

  Manifest manifest;
  manifest.config = config_snapshot(cfg);
  manifest.seed = cfg.sim.seed;

  const auto rows =
      monte_carlo(cfg.grid, cfg.plan, map, cfg.truth, cfg.trials, cfg.sim.seed,
                  opts.jobs);

  fs::create_directories(opts.out_dir);
  const fs::path dir(opts.out_dir);
  write_summary_csv(dir / "summary.csv", rows);
  manifest.add(dir / "summary.csv");
  manifest.write(dir);

  for (const auto& s : rows)
    std::cout << "montecarlo: " << s.label << " pos_error "
              << format_double(s.mean_pos_error_mean) << " +- "
              << format_double(s.mean_pos_error_std) << " m over " << s.n_trials
              << " trials (" << s.n_diverged << " diverged)\n";
  return 0;
}

std::vector<std::string> required_columns(const std::vector<std::string>& header,
                                          const std::vector<std::string>& wanted) {
  for (const auto& w : wanted)
    if (std::find(header.begin(), header.end(), w) == header.end())
      throw ConfigError("input CSV missing required column: " + w);
  return header;
}

int column_index(const std::vector<std::string>& header, const std::string& name) {
  return static_cast<int>(std::find(header.begin(), header.end(), name) -
                          header.begin());
}

// Shared reader for calibrate inputs. Columns: t,mx,my,mz,bt always; be for
// --method map; bex,bey,bez for --method vector. m_dot by finite differences.
struct CalibrationInput {
  std::vector<MagSample> samples;
  std::vector<double> be;
  std::vector<Eigen::Vector3d> be_vec;
  double sample_rate = 1.0;
};

CalibrationInput read_calibration_csv(const std::string& path, bool need_be,
                                      bool need_be_vec) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open input CSV: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty input CSV: " + path);
  auto header = split_csv_line(line);
  std::vector<std::string> wanted = {"t", "mx", "my", "mz", "bt"};
  if (need_be) wanted.push_back("be");
  if (need_be_vec) {
    wanted.push_back("bex");
    wanted.push_back("bey");
    wanted.push_back("bez");
  }
  required_columns(header, wanted);
  const int it = column_index(header, "t");
  const int imx = column_index(header, "mx"), imy = column_index(header, "my"),
            imz = column_index(header, "mz"), ibt = column_index(header, "bt");
  const int ibe = need_be ? column_index(header, "be") : -1;
  const int ibex = need_be_vec ? column_index(header, "bex") : -1;
  const int ibey = need_be_vec ? column_index(header, "bey") : -1;
  const int ibez = need_be_vec ? column_index(header, "bez") : -1;

  CalibrationInput out;
  std::vector<double> t;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ConfigError("malformed input CSV at " + path + ":" +
                        std::to_string(lineno));
    auto num = [&](int idx) {
      try {
        std::size_t pos = 0;
        double v = std::stod(cells[idx], &pos);
        if (pos != cells[idx].size()) throw std::invalid_argument("trailing");
        return v;
      } catch (const std::exception&) {
        throw ConfigError("malformed number in " + path + ":" +
                          std::to_string(lineno) + " column " + header[idx]);
      }
    };
    MagSample s;
    s.m_vec = {num(imx), num(imy), num(imz)};
    s.m_scalar = num(ibt);
    t.push_back(num(it));
    if (need_be) out.be.push_back(num(ibe));
    if (need_be_vec) out.be_vec.emplace_back(num(ibex), num(ibey), num(ibez));
    out.samples.push_back(s);
  }
  if (out.samples.size() < 2) throw ConfigError("input CSV needs >= 2 rows");
  const double dt = t[1] - t[0];
  if (dt <= 0) throw ConfigError("input CSV t column must be increasing");
  out.sample_rate = 1.0 / dt;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i].dt = dt;
    out.samples[i].m_dot =
        i == 0 ? Eigen::Vector3d::Zero()
               : finite_diff_mdot(out.samples[i].m_vec, out.samples[i - 1].m_vec, dt);
  }
  return out;
}

struct CalibrateOpts {
  std::string input_csv;
  std::string method = "map";
  double ridge = 0.0;
  double f_low = 0.002, f_high = 1.0;
  std::string warm_start;  // hybrid only
};

int cmd_calibrate(const CommonOpts& opts, const CalibrateOpts& cal) {
  fs::create_directories(opts.out_dir);
  const fs::path dir(opts.out_dir);
  Manifest manifest;
  manifest.config = {{"method", cal.method}, {"ridge", cal.ridge},
                     {"f_low", cal.f_low},   {"f_high", cal.f_high},
                     {"input", cal.input_csv}};

  if (cal.method == "hybrid") {
    AppConfig cfg = resolve_config(opts);
    manifest.config["hybrid_seed"] = cfg.hybrid.seed;
    manifest.seed = cfg.hybrid.seed;
    StartMode start;
    if (!cal.warm_start.empty()) {
      start.kind = StartKind::Warm;
      start.warm = load_warm_payload(cal.warm_start);
    }
    const HybridRunResult run = run_hybrid_calibration(cfg.hybrid, start);
    save_warm_payload(run.as_warm_payload(), (dir / "calib-state.txt").string());
    std::ofstream out(dir / "hybrid_rmse.csv");
    out << "t,platform_truth,platform_model,tl,nn,bias,rmse_window\n";
    for (std::size_t i = 0; i < run.t.size(); ++i)
      out << format_double(run.t[i]) << ',' << format_double(run.platform_truth[i])
          << ',' << format_double(run.platform_model[i]) << ','
          << format_double(run.tl_output[i]) << ',' << format_double(run.nn_output[i])
          << ',' << format_double(run.bias_output[i]) << ','
          << format_double(run.calib_rmse_window[i]) << '\n';
    out.close();
    manifest.add(dir / "calib-state.txt");
    manifest.add(dir / "hybrid_rmse.csv");
    manifest.write(dir);
    std::cout << "calibrate(hybrid): final RMSE " << format_double(run.final_rmse)
              << " nT" << (run.diverged ? " [DIVERGED]" : "") << "\n";
    return run.diverged ? 1 : 0;
  }

  TLCoefficients coeffs;
  if (cal.method == "map") {
    auto input = read_calibration_csv(cal.input_csv, true, false);
    coeffs = calibrate_map_based(input.samples, input.be, cal.ridge);
  } else if (cal.method == "bandpass") {
    auto input = read_calibration_csv(cal.input_csv, false, false);
    coeffs = calibrate_bandpass(input.samples, cal.f_low, cal.f_high,
                                input.sample_rate, cal.ridge);
  } else if (cal.method == "vector") {
    auto input = read_calibration_csv(cal.input_csv, false, true);
    coeffs = calibrate_vector(input.samples, input.be_vec, cal.ridge).symmetrized;
  } else {
    throw ConfigError("unknown --method: " + cal.method +
                      " (expected map|bandpass|vector|hybrid)");
  }
  save_tl_coefficients(coeffs, (dir / "tl_coefficients.txt").string());
  manifest.add(dir / "tl_coefficients.txt");
  manifest.write(dir);
  std::cout << "calibrate(" << cal.method << "): residual RMS "
            << format_double(coeffs.residual_rms) << " nT\n";
  return 0;
}

int cmd_crlb(const std::string& run_dir, const std::string& out_dir) {
  const fs::path jac_path = fs::path(run_dir) / "jacobians.csv";
  if (!fs::exists(jac_path))
    throw ConfigError(jac_path.string() +
                      " not found; rerun `simulate` with --record-jacobians");

  std::ifstream in(jac_path);
  std::string line;
  std::getline(in, line);  // scalar header
  if (!std::getline(in, line)) throw ConfigError("truncated jacobians.csv");
  auto scalars = split_csv_line(line);
  if (scalars.size() != 7) throw ConfigError("malformed jacobians.csv scalar row");
  const int n_params = std::stoi(scalars[0]);
  const double dt = std::stod(scalars[1]);
  const double q_state = std::stod(scalars[2]);
  const double q_params = std::stod(scalars[3]);
  const double r = std::stod(scalars[4]);
  const double p0_state = std::stod(scalars[5]);
  const double p0_params = std::stod(scalars[6]);
  std::getline(in, line);  // "h_rows"

  const int n = 2 + n_params;
  std::vector<Eigen::RowVectorXd> h_rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != n)
      throw ConfigError("jacobians.csv row width does not match n_params");
    Eigen::RowVectorXd h(n);
    for (int i = 0; i < n; ++i) h(i) = std::stod(cells[i]);
    h_rows.push_back(std::move(h));
  }
  if (h_rows.empty()) throw ConfigError("jacobians.csv contains no rows");

  Eigen::MatrixXd F = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  Q.topLeftCorner(2, 2) = q_state * dt * Eigen::Matrix2d::Identity();
  Q.bottomRightCorner(n_params, n_params) =
      q_params * dt * Eigen::MatrixXd::Identity(n_params, n_params);
  Eigen::MatrixXd j0 = Eigen::MatrixXd::Zero(n, n);
  j0.topLeftCorner(2, 2) = (1.0 / p0_state) * Eigen::Matrix2d::Identity();
  j0.bottomRightCorner(n_params, n_params) =
      (1.0 / p0_params) * Eigen::MatrixXd::Identity(n_params, n_params);

  const CrlbSeries series = crlb_trace(h_rows, F, Q, r, j0);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  {
    std::ofstream out(dir / "crlb.csv");
    out << "step,position_bound,jittered\n";
    for (std::size_t i = 0; i < series.position_bound.size(); ++i)
      out << i << ',' << format_double(series.position_bound[i]) << ','
          << (series.jittered[i] ? 1 : 0) << '\n';
  }
  Manifest manifest;
  manifest.config = {{"run_dir", run_dir},
                     {"n_params", n_params},
                     {"dt", dt},
                     {"q_state", q_state},
                     {"q_params", q_params},
                     {"r", r}};
  manifest.add(dir / "crlb.csv");
  manifest.write(dir);
  std::cout << "crlb: " << series.position_bound.size() << " steps, final bound "
            << format_double(series.position_bound.back()) << " m\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"magnav: anomaly-aided odometry simulation and compensation suite"};
  app.require_subcommand(1);
  app.footer(
      "Common flags may also be set via environment variables with the MAGNAV_ "
      "prefix (MAGNAV_CONFIG, MAGNAV_SEED, MAGNAV_OUT, MAGNAV_JOBS).");

  CommonOpts common;
  std::uint64_t seed_flag = 0;
  bool seed_set = false;
  auto add_common = [&](CLI::App* sub, bool with_jacobians = true) {
    sub->add_option("--config", common.config_path, "JSON config file")
        ->envname("MAGNAV_CONFIG");
    sub->add_option("--seed", seed_flag, "override the config seed")
        ->envname("MAGNAV_SEED")
        ->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--out", common.out_dir, "output directory")
        ->envname("MAGNAV_OUT");
    sub->add_option("--jobs", common.jobs, "parallel trial workers")
        ->envname("MAGNAV_JOBS")
        ->check(CLI::PositiveNumber);
    if (with_jacobians)
      sub->add_flag("--record-jacobians", common.record_jacobians,
                    "write the measurement-Jacobian side-file");
  };

  auto* sim = app.add_subcommand("simulate", "run one aided-odometry trial");
  add_common(sim);

  int trials = 0;
  auto* mc = app.add_subcommand("montecarlo", "run the Monte-Carlo grid");
  add_common(mc);
  mc->add_option("--trials", trials, "trials per grid point");

  CalibrateOpts cal;
  auto* cb = app.add_subcommand("calibrate", "fit a compensation model");
  add_common(cb, false);
  cb->add_option("--input", cal.input_csv, "sample CSV (t,mx,my,mz,bt[,be|bex..])");
  cb->add_option("--method", cal.method, "map|bandpass|vector|hybrid");
  cb->add_option("--ridge", cal.ridge, "ridge regularization weight");
  cb->add_option("--f-low", cal.f_low, "band-pass low cutoff, Hz");
  cb->add_option("--f-high", cal.f_high, "band-pass high cutoff, Hz");
  cb->add_option("--warm-start", cal.warm_start, "calib-state file (hybrid)");

  std::string run_dir;
  auto* cr = app.add_subcommand("crlb", "position bound along a recorded run");
  add_common(cr, false);
  cr->add_option("--run", run_dir, "directory produced by simulate")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (seed_set) common.seed = seed_flag;

  try {
    if (sim->parsed()) return cmd_simulate(common);
    if (mc->parsed()) return cmd_montecarlo(common, trials);
    if (cb->parsed()) return cmd_calibrate(common, cal);
    if (cr->parsed()) return cmd_crlb(run_dir, common.out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

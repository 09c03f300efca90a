// Command-line front end: synth, partition, loss, optimize, sweep.
//
// Exit codes: 0 success, 2 input or config error, 3 numerical failure.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "surfcon/io/bundle.hpp"
#include "surfcon/io/pnm.hpp"
#include "surfcon/io/serialize.hpp"
#include "surfcon/surfcon.hpp"

namespace fs = std::filesystem;
using surfcon::io::json;

namespace {

struct Overrides {
  std::string config;
  int threads = 1;
  std::optional<std::uint64_t> seed;
  std::optional<double> percentile;
  std::optional<double> theta;
  std::optional<int> samples;
  std::optional<int> iterations;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON config (or a previous run manifest)");
  cmd->add_option("--threads", o.threads, "worker threads (1 = reproducible default)")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "64-bit seed");
  cmd->add_option("--percentile", o.percentile, "texture percentile in (0,100)");
  cmd->add_option("--theta", o.theta, "trust threshold in [0,1]");
  cmd->add_option("--s", o.samples, "number of sampled patches S (0 disables the cross-view term)");
  cmd->add_option("--iterations", o.iterations, "optimizer iterations");
}

/// Config file first, then flags.
surfcon::io::RunConfig resolve(const Overrides& o, CLI::App* cmd) {
  surfcon::io::RunConfig rc;
  if (!o.config.empty()) rc = surfcon::io::run_config_from_json(surfcon::io::read_json_file(o.config));
  if (cmd->count("--threads")) rc.optim.threads = o.threads;
  if (o.seed) rc.seed = *o.seed;
  if (o.percentile) rc.optim.sv.percentile = *o.percentile;
  if (o.theta) rc.optim.sv.theta = *o.theta;
  if (o.samples) rc.optim.mv.samples = *o.samples;
  if (o.iterations) rc.optim.iterations = *o.iterations;
  rc.optim.validate();
  return rc;
}

json base_manifest(const std::string& command, const json& config, const json& inputs) {
  json m;
  m["command"] = command;
  m["tool_version"] = surfcon::io::tool_version;
  m["config"] = config;
  m["inputs"] = inputs;
  return m;
}

void finish_manifest(json& m, const fs::path& path, const json& outputs,
                     std::chrono::steady_clock::time_point t0) {
  m["outputs"] = outputs;
  m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  surfcon::io::write_json_file(path, m);
}

std::string spec_hash_of(const surfcon::io::BundleSet& b) {
  return b.manifest.contains("spec_hash") ? b.manifest["spec_hash"].get<std::string>() : std::string();
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void write_history_csv(const fs::path& path, const std::vector<surfcon::LossTerms>& h) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw surfcon::InputError("cannot write " + path.string());
  out << "iteration,total,data,svn,cross,tv,mvgeo\n";
  for (std::size_t k = 0; k < h.size(); ++k) {
    const auto& t = h[k];
    out << (k + 1) << "," << fmt(t.total) << "," << fmt(t.data) << "," << fmt(t.svn) << "," << fmt(t.cross) << ","
        << fmt(t.tv) << "," << fmt(t.mvgeo) << "\n";
  }
}

int cmd_synth(const std::string& spec_path, const fs::path& out, const std::optional<std::uint64_t>& seed) {
  const auto t0 = std::chrono::steady_clock::now();
  surfcon::SceneSpec spec = surfcon::io::scene_from_json(surfcon::io::read_json_file(spec_path));
  if (seed) spec.seed = *seed;
  const auto clean = surfcon::render_scene(spec);
  const bool noisy = spec.noise.depth_sigma > 0 || spec.noise.normal_sigma_deg > 0;
  const auto observed = noisy ? surfcon::render_observed(spec) : clean;
  json m = surfcon::io::write_bundle(out, observed, spec, noisy ? &clean : nullptr);
  m["inputs"] = {{"spec", spec_path}};
  m["config"] = json::object();
  m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  surfcon::io::write_json_file(out / surfcon::io::manifest_name, m);
  std::cout << "wrote " << observed.size() << " views to " << out.string() << "\n";
  return 0;
}

int cmd_partition(const std::string& image_path, double percentile, const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const surfcon::Image img = surfcon::io::read_ppm(image_path);
  const auto g = surfcon::sobel_gradients(img);
  const surfcon::ScalarField mag = surfcon::gradient_magnitude(g.gx, g.gy);
  const double tau = surfcon::percentile_threshold(mag, percentile);
  const auto part = surfcon::texture_partition(mag, tau);
  surfcon::io::ensure_writable_dir(out);
  surfcon::io::write_pgm(out / "rich.pgm", part.rich);
  surfcon::io::write_pgm(out / "less.pgm", part.less);
  surfcon::io::write_pfm(out / "gradient.pfm", mag);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : mag.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const json stats = {{"percentile", percentile},
                      {"tau", tau},
                      {"rich_fraction", static_cast<double>(part.rich.count()) / static_cast<double>(mag.size())},
                      {"n_rich", part.rich.count()},
                      {"n_less", part.less.count()},
                      {"n_pixels", mag.size()},
                      {"all_tied", lo == hi}};
  surfcon::io::write_json_file(out / "stats.json", stats);
  json m = base_manifest("partition", {{"sv", {{"percentile", percentile}}}}, {{"image", image_path}});
  finish_manifest(m, out / surfcon::io::manifest_name, {"rich.pgm", "less.pgm", "gradient.pfm", "stats.json"}, t0);
  std::cout << stats.dump(2) << "\n";
  return 0;
}

json loss_report(const surfcon::BundleLoss& l) {
  json sv = json::array(), mv = json::array();
  for (const auto& r : l.sv) sv.push_back(surfcon::io::to_json(r));
  for (const auto& r : l.mv) mv.push_back(surfcon::io::to_json(r));
  return {{"sv", sv}, {"mv", mv}};
}

int cmd_loss(const fs::path& bundle_dir, const surfcon::io::RunConfig& rc, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto bundles = surfcon::io::read_bundle(bundle_dir);
  const auto l = surfcon::bundle_loss(bundles.views, rc.optim.sv, rc.optim.mv);
  json report = loss_report(l);
  report["spec_hash"] = spec_hash_of(bundles);
  std::cout << report.dump(2) << "\n";
  if (!out.empty()) {
    const fs::path dir(out);
    surfcon::io::ensure_writable_dir(dir);
    surfcon::io::write_json_file(dir / "loss.json", report);
    json m = base_manifest("loss", surfcon::io::to_json(rc), {{"bundle", bundle_dir.string()}});
    m["spec_hash"] = spec_hash_of(bundles);
    finish_manifest(m, dir / surfcon::io::manifest_name, {"loss.json"}, t0);
  }
  return 0;
}

int cmd_optimize(const fs::path& bundle_dir, const surfcon::io::RunConfig& rc, const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto bundles = surfcon::io::read_bundle(bundle_dir);
  surfcon::io::ensure_writable_dir(out);
  const surfcon::Problem problem(bundles.views, rc.optim);
  surfcon::OptimState state = surfcon::initial_state(bundles.views);
  const surfcon::LossTerms initial = problem.loss(state);
  json summary;
  summary["initial"] = surfcon::io::to_json(initial);
  const auto* truth = bundles.truth ? &*bundles.truth : nullptr;
  if (truth) {
    summary["normal_rms_deg_initial"] = surfcon::normal_rms_deg(state, *truth);
    summary["depth_rms_initial"] = surfcon::depth_rms(state, *truth);
  }
  int exit_code = 0;
  try {
    for (int it = 0; it < rc.optim.iterations; ++it) state = surfcon::step(state, problem);
  } catch (const surfcon::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    summary["diverged"] = true;
    summary["last_good_iteration"] = state.iteration;
    exit_code = 3;
  }
  write_history_csv(out / "loss_history.csv", state.history);
  json files = json::array({"loss_history.csv"});
  for (std::size_t v = 0; v < state.views.size(); ++v) {
    const std::string d = "view" + std::to_string(v) + "_depth.pfm", n = "view" + std::to_string(v) + "_normal.pfm";
    surfcon::io::write_pfm(out / d, state.views[v].depth());
    surfcon::io::write_pfm(out / n, state.views[v].normals);
    files.push_back(d);
    files.push_back(n);
  }
  summary["iterations"] = state.iteration;
  if (!state.history.empty()) summary["final"] = surfcon::io::to_json(state.history.back());
  if (truth) {
    const double n0 = summary["normal_rms_deg_initial"].get<double>();
    const double n1 = surfcon::normal_rms_deg(state, *truth);
    summary["normal_rms_deg_final"] = n1;
    summary["normal_rms_reduction"] = n0 > 0 ? 1.0 - n1 / n0 : 0.0;
    summary["depth_rms_final"] = surfcon::depth_rms(state, *truth);
  }
  surfcon::io::write_json_file(out / "summary.json", summary);
  files.push_back("summary.json");
  json m = base_manifest("optimize", surfcon::io::to_json(rc), {{"bundle", bundle_dir.string()}});
  m["spec_hash"] = spec_hash_of(bundles);
  finish_manifest(m, out / surfcon::io::manifest_name, files, t0);
  std::cout << summary.dump(2) << "\n";
  return exit_code;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto b = tok.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    tok = tok.substr(b, tok.find_last_not_of(" \t") - b + 1);
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      vals.push_back(v);
    } catch (const std::logic_error&) {
      throw surfcon::InputError("bad sweep value '" + tok + "'");
    }
  }
  if (vals.empty()) throw surfcon::InputError("--values is empty");
  return vals;
}

int cmd_sweep(const fs::path& bundle_dir, const surfcon::io::RunConfig& rc, const std::string& param,
              const std::string& values, const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const surfcon::SweepParam p = surfcon::sweep_param_from_string(param);
  const auto vals = parse_values(values);
  for (double v : vals) surfcon::with_param(rc.optim, p, v);
  const auto bundles = surfcon::io::read_bundle(bundle_dir);
  fs::path csv = out, dir = out;
  if (out.extension() == ".csv") {
    dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
  } else {
    csv = out / "sweep.csv";
  }
  surfcon::io::ensure_writable_dir(dir);
  std::ofstream os(csv, std::ios::trunc);
  if (!os) throw surfcon::InputError("cannot write " + csv.string());
  os << "param,value,total,data,svn,cross,tv,mvgeo,n_trust,n_sampled,normal_rms_deg,depth_rms,wall_time_s\n";
  const auto* truth = bundles.truth ? &*bundles.truth : nullptr;
  for (double v : vals) {
    const auto row = surfcon::sweep_point(bundles.views, truth, rc.optim, p, v);
    const auto& t = row.losses;
    os << row.param << "," << fmt(row.value) << "," << fmt(t.total) << "," << fmt(t.data) << "," << fmt(t.svn) << ","
       << fmt(t.cross) << "," << fmt(t.tv) << "," << fmt(t.mvgeo) << "," << row.n_trust << "," << row.n_sampled << ","
       << (row.normal_rms_deg ? fmt(*row.normal_rms_deg) : "") << "," << (row.depth_rms ? fmt(*row.depth_rms) : "")
       << "," << fmt(row.wall_time_s) << "\n";
    os.flush();
  }
  json m = base_manifest("sweep", surfcon::io::to_json(rc),
                         {{"bundle", bundle_dir.string()}, {"param", param}, {"values", vals}});
  m["spec_hash"] = spec_hash_of(bundles);
  const fs::path mpath = out.extension() == ".csv" ? dir / (out.stem().string() + "_manifest.json")
                                                   : dir / surfcon::io::manifest_name;
  finish_manifest(m, mpath, {csv.filename().string()}, t0);
  std::cout << "wrote " << vals.size() << " rows to " << csv.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Texture-aware geometric consistency losses on synthetic two-view scenes"};
  app.require_subcommand(1);

  std::string spec_path, synth_out;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "render a scene spec into a bundle directory");
  synth->add_option("spec", spec_path, "scene spec JSON")->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "override the spec seed");

  std::string image_path, part_out;
  double percentile = 75.0;
  auto* part = app.add_subcommand("partition", "texture-rich / texture-less split of a PPM image");
  part->add_option("image", image_path, "binary PPM")->required();
  part->add_option("--percentile", percentile, "gradient percentile in (0,100)");
  part->add_option("--out", part_out, "output directory")->required();

  Overrides loss_o, opt_o, sweep_o;
  std::string loss_dir, loss_out;
  auto* loss = app.add_subcommand("loss", "evaluate every loss term on a bundle");
  loss->add_option("bundle", loss_dir, "bundle directory")->required();
  loss->add_option("--out", loss_out, "directory for loss.json and a manifest");
  add_common(loss, loss_o);

  std::string opt_dir, opt_out;
  auto* opt = app.add_subcommand("optimize", "denoise a bundle's depth and normals");
  opt->add_option("bundle", opt_dir, "bundle directory")->required();
  opt->add_option("--out", opt_out, "output directory")->required();
  add_common(opt, opt_o);

  std::string sweep_dir, sweep_out, sweep_param, sweep_values;
  auto* sweep = app.add_subcommand("sweep", "optimize once per parameter value");
  sweep->add_option("bundle", sweep_dir, "bundle directory")->required();
  sweep->add_option("--param", sweep_param, "theta, percentile, S or lambda3")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")->required();
  sweep->add_option("--out", sweep_out, "output CSV path or directory")->required();
  add_common(sweep, sweep_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return cmd_synth(spec_path, synth_out, synth_seed);
    if (*part) return cmd_partition(image_path, percentile, part_out);
    if (*loss) return cmd_loss(loss_dir, resolve(loss_o, loss), loss_out);
    if (*opt) return cmd_optimize(opt_dir, resolve(opt_o, opt), opt_out);
    if (*sweep) return cmd_sweep(sweep_dir, resolve(sweep_o, sweep), sweep_param, sweep_values, sweep_out);
  } catch (const surfcon::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const surfcon::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

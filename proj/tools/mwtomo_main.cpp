#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "experiments.hpp"
#include "mwtomo/landweber.hpp"

namespace {

struct Overrides {
  std::string out_dir;
  std::int64_t seed = -1;
  int threads = 0;
};

void add_overrides(CLI::App* sub, std::string& config_path, Overrides& ov) {
  sub->add_option("config", config_path, "experiment configuration (JSON)")->required();
  sub->add_option("--out", ov.out_dir, "override the output directory");
  sub->add_option("--seed", ov.seed, "override the noise seed");
  sub->add_option("--threads", ov.threads, "override the worker thread count");
}

mwt::ExperimentConfig load_with_overrides(const std::string& path, const Overrides& ov) {
  mwt::ExperimentConfig cfg = mwt::load_config(path);
  if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
  if (ov.seed >= 0) cfg.seed = static_cast<std::uint64_t>(ov.seed);
  if (ov.threads > 0) cfg.threads = ov.threads;
  return cfg;
}

int report(const mwt::RunSummary& sum) {
  std::printf("manifest: %s\n", sum.manifest_path.string().c_str());
  if (sum.manifest.contains("cells"))
    for (const auto& cell : sum.manifest.at("cells")) {
      const double err = cell.at("final_rel_error").is_number()
                             ? cell.at("final_rel_error").get<double>()
                             : std::numeric_limits<double>::quiet_NaN();
      std::printf("  %s%s: %s, final rel_error %.6g\n",
                  cell.at("method").get<std::string>().c_str(),
                  cell.contains("gamma")
                      ? (" gamma=" + std::to_string(cell.at("gamma").get<double>())).c_str()
                      : "",
                  cell.at("status").get<std::string>().c_str(), err);
    }
  if (sum.manifest.contains("spectrum")) {
    const auto& sp = sum.manifest.at("spectrum");
    std::printf("  spectrum: dim %lld, lambda in [%.6g, %.6g], near-zero %lld\n",
                sp.at("dimension").get<long long>(), sp.at("lambda_min").get<double>(),
                sp.at("lambda_max").get<double>(), sp.at("near_zero_count").get<long long>());
  }
  if (sum.any_diverged) {
    std::fprintf(stderr, "warning: at least one cell diverged, artifacts were kept\n");
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multiwave tomography experiments: forward simulation, Landweber and averaged"
               " time-reversal inversion, desk-scale spectra"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;

  CLI::App* cmd_phantom = app.add_subcommand("phantom", "render the phantom and speed images");
  add_overrides(cmd_phantom, config_path, ov);
  CLI::App* cmd_forward = app.add_subcommand("forward", "simulate and write the boundary data");
  add_overrides(cmd_forward, config_path, ov);
  CLI::App* cmd_recon =
      app.add_subcommand("reconstruct", "invert with the first configured step size");
  add_overrides(cmd_recon, config_path, ov);
  CLI::App* cmd_sweep =
      app.add_subcommand("sweep-gamma", "invert once per configured step size");
  add_overrides(cmd_sweep, config_path, ov);
  CLI::App* cmd_run = app.add_subcommand("run", "full pipeline for the configured method");
  add_overrides(cmd_run, config_path, ov);
  CLI::App* cmd_spectrum =
      app.add_subcommand("spectrum", "assemble and decompose the desk-scale operator");
  add_overrides(cmd_spectrum, config_path, ov);

  CLI::App* cmd_gn = app.add_subcommand("gn-curve", "tabulate the divergence-rate curve maxima");
  double gn_gamma = 1.0;
  std::vector<int> gn_steps{25, 100, 400, 1600};
  int gn_samples = 0;
  std::string gn_out = "out";
  cmd_gn->add_option("--gamma", gn_gamma, "step size")->check(CLI::PositiveNumber);
  cmd_gn->add_option("--N", gn_steps, "iteration counts to tabulate");
  cmd_gn->add_option("--samples", gn_samples, "sample the full curves with this many points");
  cmd_gn->add_option("--out", gn_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_gn->parsed()) {
      std::error_code ec;
      std::filesystem::create_directories(gn_out, ec);
      if (ec) throw mwt::IoError("cannot create output directory " + gn_out + ": " + ec.message());
      char tag[32];
      std::snprintf(tag, sizeof(tag), "%.6g", gn_gamma);
      const std::filesystem::path base = std::filesystem::path(gn_out) / ("gn-gamma" + std::string(tag));
      const std::filesystem::path curve = base.string() + "-curve.csv";
      mwt::write_gn_csv(base.string() + ".csv", gn_gamma, gn_steps,
                        gn_samples > 0 ? &curve : nullptr, gn_samples);
      for (int N : gn_steps) {
        const auto [lam, val] = mwt::gn_max(gn_gamma, N);
        std::printf("N %6d  max %.10g  at lambda %.10g\n", N, val, lam);
      }
      std::printf("wrote %s\n", (base.string() + ".csv").c_str());
      return 0;
    }

    const mwt::ExperimentConfig cfg = load_with_overrides(config_path, ov);
    if (cmd_phantom->parsed()) return report(mwt::run_phantom(cfg));
    if (cmd_forward->parsed()) return report(mwt::run_forward(cfg));
    if (cmd_spectrum->parsed()) return report(mwt::run_spectrum(cfg));
    if (cmd_recon->parsed()) {
      mwt::ExperimentConfig one = cfg;
      if (one.method == mwt::MethodKind::Landweber && one.gammas.size() > 1)
        one.gammas.resize(1);
      return report(mwt::run_experiment(one));
    }
    return report(mwt::run_experiment(cfg));
  } catch (const mwt::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const mwt::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const mwt::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

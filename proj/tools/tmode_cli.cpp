#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "tmode/experiment.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumerical = 3 };

struct Options {
  std::string config;
  std::string preset;
  std::string out;
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;
};

tmode::ExperimentConfig resolve(const Options& o) {
  if (o.config.empty() == o.preset.empty()) throw tmode::config_error("give exactly one of --config or --preset");
  tmode::ExperimentConfig c = tmode::load_config(o.config.empty() ? tmode::preset_path(o.preset) : std::filesystem::path(o.config));
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.seed) c.measurement.rng_seed = *o.seed;
  return c;
}

void report_decompose(const tmode::DecomposeSummary& s) {
  std::printf("retained modes: %zu\n", s.retained_modes);
  for (std::size_t k = 0; k < std::min<std::size_t>(s.r.size(), 8); ++k) std::printf("  r_%zu = %.6f\n", k + 1, s.r[k]);
  std::printf("islands: %zu (after window: %zu, discarded %.3g)\n", s.islands_full, s.islands_filtered,
              s.discarded_fraction);
}

int report_iterate(const tmode::IterateSummary& s) {
  for (const auto& p : s.points) {
    std::printf("G = %.4f\n", p.G);
    for (std::size_t k = 0; k < p.modes.size(); ++k) {
      const auto& m = p.modes[k];
      std::printf("  mode %zu: %-15s iterations %3d  power gain %.6g (exact %.6g)  overlap %.6f\n", k + 1,
                  tmode::to_string(m.status), m.iterations_used, m.power_gain, p.oracle_power_gain[k],
                  p.oracle_overlap[k]);
    }
  }
  if (s.leading_mode_failed) {
    std::fprintf(stderr, "error: leading mode did not converge\n");
    return kNumerical;
  }
  return kOk;
}

void report_measure(const tmode::MeasureSummary& s) {
  for (std::size_t k = 0; k < s.duan.size(); ++k) {
    std::printf("mode %zu: I = %.4f  (%.2f dB)\n", k + 1, s.duan[k].I, s.duan[k].dB);
  }
  if (s.correction_efficiency) std::printf("efficiency for correction: %.6f\n", *s.correction_efficiency);
  for (std::size_t k = 0; k < s.corrected_dB.size(); ++k) {
    std::printf("  corrected mode %zu: %.3f dB\n", k + 1, s.corrected_dB[k]);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal-mode decomposition, feedback-iteration extraction and quadrature statistics"};
  app.set_version_flag("--version", tmode::kVersion);
  app.require_subcommand(1);

  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--preset", o.preset, "named preset (fig2_chirped_gaussian, fig2_flat_phase_intensity, supp_nli_fiber, paper_gains_measurement)");
    sub->add_option("--out", o.out, "output directory (overrides output_dir)");
    sub->add_option("--threads", o.threads, "worker threads for G sweeps")->check(CLI::Range(1u, 256u));
    sub->add_option("--seed", o.seed, "Monte Carlo RNG seed (overrides measurement.rng_seed)");
  };
  auto* dec = app.add_subcommand("decompose", "exact Schmidt modes of the configured kernel");
  auto* it = app.add_subcommand("iterate", "feedback-iteration mode extraction");
  auto* me = app.add_subcommand("measure", "covariance matrices and Duan entanglement values");
  auto* all = app.add_subcommand("all", "decompose, iterate and measure on one kernel");
  for (auto* s : {dec, it, me, all}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    const tmode::ExperimentConfig c = resolve(o);
    const std::filesystem::path out = c.output_dir;
    if (dec->parsed()) {
      report_decompose(tmode::run_decompose(c, out));
    } else if (it->parsed()) {
      return report_iterate(tmode::run_iterate(c, out, o.threads));
    } else if (me->parsed()) {
      report_measure(tmode::run_measure(c, out));
    } else {
      const auto s = tmode::run_all(c, out, o.threads);
      report_decompose(s.decompose);
      const int rc = report_iterate(s.iterate);
      report_measure(s.measure);
      return rc;
    }
    return kOk;
  } catch (const tmode::config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kNumerical;
  }
}

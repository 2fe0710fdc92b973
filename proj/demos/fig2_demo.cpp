// Chirped double-Gaussian kernel at G=2.5: exact modes vs feedback iteration.
#include <cstdio>
#include <numbers>

#include "tmode/tmode.hpp"

int main() {
  using namespace tmode;
  const auto grid = FrequencyGrid::symmetric(8.0, 256);
  const PumpSpec pump{0.0, 1.0, 1.0};
  const auto kernel = build_gaussian_jsf(pump, std::numbers::pi / 4, 0.2, 2.5, grid, grid);
  const SchmidtAmplifier amp(decompose(kernel));
  const auto& dec = amp.decomposition();

  IterationConfig cfg;
  cfg.max_iterations = 50;
  const auto seed = SpectralField::gaussian(grid, 0.4, 1.5).normalized();
  const auto modes = extract_all_modes(amp, 3, seed, cfg);

  std::printf("%-4s %-10s %-12s %-12s %-10s %s\n", "k", "r_k", "gain", "exact", "overlap", "steps");
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const auto& m = modes[k];
    std::printf("%-4zu %-10.6f %-12.6f %-12.6f %-10.7f %d\n", k + 1, dec.r[k], m.power_gain, dec.power_gain(k),
                std::abs(inner_product(dec.psi[k], m.mode)), m.iterations_used);
  }
}

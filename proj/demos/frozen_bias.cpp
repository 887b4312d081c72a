// A frozen bias moves the limit: the recursion settles on the biased mixture,
// not on the clean target.
#include <cstdio>

#include "crtlab/recursion.hpp"

int main() {
    using namespace crtlab;
    const auto target = default_target();

    BiasSchedule bias;
    bias.frozen = true;
    bias.amplitude = 0.2;
    const auto grid = build_grid(target, 200, 6.0, bias.bias_component);
    const auto biased_cdf = mixture_cdf_on_grid(biased_spec_at(target, bias, 1), grid);
    const auto clean_cdf = mixture_cdf_on_grid(target, grid);

    RecursionConfig cfg;
    cfg.alpha = 0.5;
    cfg.T = 2000;
    cfg.seed = 1;
    cfg.bias = bias;
    const auto run = run_recursion(cfg, target, grid);
    const auto est = cdf_on_grid(run.final_state, grid);

    std::printf("W1(biased mixture, target)   %.4f\n", w1_grid(biased_cdf, clean_cdf, grid));
    std::printf("W1(estimate, target)         %.4f\n", w1_grid(est, clean_cdf, grid));
    std::printf("W1(estimate, biased mixture) %.4f\n", w1_grid(est, biased_cdf, grid));
}

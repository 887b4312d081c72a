// Fitted W1 decay rate of the ECDF recursion across a few contamination levels,
// next to the predicted rate.
#include <cstdio>

#include "crtlab/rates.hpp"
#include "crtlab/recursion.hpp"
#include "crtlab/theory.hpp"

int main() {
    using namespace crtlab;
    const auto target = default_target();
    const auto grid = build_grid(target, 200, 6.0);

    std::printf("%6s %10s %10s\n", "alpha", "fitted", "predicted");
    for (double alpha : {0.1, 0.3, 0.5, 0.8, 1.0}) {
        RecursionConfig cfg;
        cfg.alpha = alpha;
        cfg.T = 1000;
        cfg.seed = 7;
        const auto run = run_recursion(cfg, target, grid);
        const auto pred = predicted_rate(0.5, cfg.effective_alpha());
        const auto fit = fit_rate(run.trajectory, 0.1, pred.log_factor);
        std::printf("%6.2f %10.3f %10.3f\n", alpha, fit.rate, pred.exponent);
    }
}

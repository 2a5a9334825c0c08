#include "rispos/search.hpp"

#include <algorithm>
#include <cmath>

namespace rispos {

SearchResult maximize_1d(const std::function<double(double)>& f, double lo, double hi, double start,
                         const SearchSettings& settings) {
    SearchResult best{start, f(start)};
    if (!(hi > lo))
        return best;

    const int n = std::max(settings.grid_points, 3);
    const double step = (hi - lo) / (n - 1);
    int best_i = -1;
    double grid_best = -INFINITY;
    for (int i = 0; i < n; ++i) {
        const double v = f(lo + i * step);
        if (v > grid_best) {
            grid_best = v;
            best_i = i;
        }
    }

    double a = lo + std::max(best_i - 1, 0) * step;
    double b = lo + std::min(best_i + 1, n - 1) * step;
    double x_best = lo + best_i * step;
    double v_best = grid_best;

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c);
    double fd = f(d);
    const double tol = settings.tolerance * (hi - lo);
    for (int iter = 0; iter < 400 && b - a > tol; ++iter) {
        if (fc > v_best) {
            v_best = fc;
            x_best = c;
        }
        if (fd > v_best) {
            v_best = fd;
            x_best = d;
        }
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if (fc > v_best) {
        v_best = fc;
        x_best = c;
    }
    if (fd > v_best) {
        v_best = fd;
        x_best = d;
    }
    if (v_best > best.value)
        best = {x_best, v_best};
    return best;
}

} // namespace rispos

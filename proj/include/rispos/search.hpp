#pragma once

#include <functional>

namespace rispos {

/// Settings of the bracketed one-dimensional maximizer.
struct SearchSettings {
    int grid_points = 201;
    double tolerance = 1e-10;  // relative to the bracket width
};

struct SearchResult {
    double x = 0.0;
    double value = 0.0;
};

/// Maximizes f over [lo, hi]: uniform grid scan, then golden-section refinement
/// between the neighbours of the best grid point. The start point is kept when
/// nothing better is found, so the result never scores below f(start).
SearchResult maximize_1d(const std::function<double(double)>& f, double lo, double hi, double start,
                         const SearchSettings& settings = {});

} // namespace rispos

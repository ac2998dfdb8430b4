#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "xdiff/grid.hpp"

namespace testing {

// Cell averages of the uniform law on [a, b].
inline xdiff::Field uniform(const xdiff::Grid1D& g, double a, double b) {
    xdiff::Field f(static_cast<std::size_t>(g.n), 0.0);
    const double dx = g.dx();
    for (int i = 0; i < g.n; ++i) {
        const double lo = std::max(a, -g.L + i * dx), hi = std::min(b, -g.L + (i + 1) * dx);
        if (hi > lo) f[static_cast<std::size_t>(i)] = (hi - lo) / dx / (b - a);
    }
    return f;
}

template <class Fn>
xdiff::Field sample_cells(const xdiff::Grid1D& g, Fn f) {
    xdiff::Field out(static_cast<std::size_t>(g.n));
    for (int i = 0; i < g.n; ++i) out[static_cast<std::size_t>(i)] = f(g.x(i));
    return out;
}

inline void normalize(xdiff::Field& f, const xdiff::Grid1D& g) {
    const double m = xdiff::mass(f, g);
    for (double& v : f) v /= m;
}

// Smooth compactly supported bump sum; `spread` scales the support width.
inline xdiff::Field random_density(const xdiff::Grid1D& g, std::mt19937_64& rng, double spread) {
    std::uniform_real_distribution<double> U(0, 1);
    xdiff::Field f(static_cast<std::size_t>(g.n), 0.0);
    const int bumps = 1 + static_cast<int>(U(rng) * 3);
    for (int b = 0; b < bumps; ++b) {
        const double c = (U(rng) - 0.5) * spread * g.L;
        const double w = (0.15 + 0.35 * U(rng)) * spread * g.L;
        const double h = 0.3 + U(rng);
        for (int i = 0; i < g.n; ++i) {
            const double z = (g.x(i) - c) / w;
            if (std::abs(z) < 1) f[static_cast<std::size_t>(i)] += h * (1 - z * z) * (1 - z * z);
        }
    }
    normalize(f, g);
    return f;
}

inline xdiff::DensityPair random_pair(const xdiff::Grid1D& g, std::mt19937_64& rng, double spread) {
    return xdiff::DensityPair(g, random_density(g, rng, spread), random_density(g, rng, spread));
}

}  // namespace testing

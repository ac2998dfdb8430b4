#pragma once

// 1D cell-centred grid, midpoint quadrature, kernel convolution, and the
// quantile (Lagrangian) representation used for Wasserstein distances.

#include <iosfwd>
#include <string>
#include <vector>

#include "xdiff/model.hpp"

namespace xdiff {

using Field = std::vector<double>;

struct Grid1D {
    double L = 4.0;
    int n = 512;

    Grid1D() = default;
    Grid1D(double half_width, int cells);

    double dx() const { return 2.0 * L / n; }
    double x(int i) const { return -L + (i + 0.5) * dx(); }
    Field centers() const;
    bool operator==(const Grid1D& o) const { return L == o.L && n == o.n; }
};

struct DensityPair {
    Grid1D grid;
    Field rho1;
    Field rho2;

    DensityPair() = default;
    DensityPair(Grid1D g, Field r1, Field r2);

    const Field& rho(int j) const { return j == 1 ? rho1 : rho2; }
    Field& rho(int j) { return j == 1 ? rho1 : rho2; }
};

struct Moments {
    double mass1, mass2;
    double m1_1, m1_2;
    double m2_1, m2_2;
    double combined_m1() const { return m1_1 + m1_2; }
};

double integrate(const Field& f, const Grid1D& g);
double mass(const Field& rho, const Grid1D& g);
double first_moment(const Field& rho, const Grid1D& g);
double second_moment(const Field& rho, const Grid1D& g);
Moments moments(const DensityPair& p);

/// Translates a density by v using linear interpolation of cell values and
/// renormalizes to the original mass.
Field shift_density(const Field& rho, const Grid1D& g, double v);

/// Shifts both components by -(m1[rho1] + m1[rho2]) / 2.
DensityPair recenter(const DensityPair& p);

/// (K * rho)(x_i) = sum_k K(x_i - x_k) rho_k dx.
Field convolve(const Kernel& K, const Field& rho, const Grid1D& g);

/// Cached kernel samples for repeated convolutions on one grid. The quadratic
/// kernel is evaluated through three moments, which is algebraically the same
/// sum.
class Convolver {
public:
    Convolver(const Kernel& K, const Grid1D& g);
    Field apply(const Field& rho) const;
    const Grid1D& grid() const { return grid_; }

private:
    Kernel K_;
    Grid1D grid_;
    Field samples_;  // K(d dx), d = 0..n-1
};

/// int rho1 K * rho2 dx.
double interaction_energy(const Kernel& K, const Field& rho1, const Field& rho2, const Grid1D& g);

/// Quantile positions at mass levels (k + 1/2) / m of the piecewise-linear CDF.
Field to_quantiles(const Field& rho, const Grid1D& g, int m);

/// Density of the quantile sample X: mass 1/m spread uniformly between
/// neighbouring positions, with half a cell of mass on each side of the end
/// points. Deposited conservatively onto the grid.
Field from_quantiles(const Field& X, const Grid1D& g);

struct QuantilePair {
    Field X1;
    Field X2;

    int m() const { return static_cast<int>(X1.size()); }
    const Field& X(int j) const { return j == 1 ? X1 : X2; }
    Field& X(int j) { return j == 1 ? X1 : X2; }
};

QuantilePair to_quantiles(const DensityPair& p, int m);
DensityPair from_quantiles(const QuantilePair& q, const Grid1D& g);

double w2_quantiles(const Field& X, const Field& Y);
double w2_distance(const Field& p, const Field& q, const Grid1D& g, int m);
/// Product distance d(p, q)^2 = W2(p1, q1)^2 + W2(p2, q2)^2.
double pair_distance(const DensityPair& p, const DensityPair& q, int m);
double pair_distance(const QuantilePair& p, const QuantilePair& q);

void write_density_csv(std::ostream& os, const DensityPair& p, const std::string& meta = "");
void write_density_csv(const std::string& path, const DensityPair& p, const std::string& meta = "");

}  // namespace xdiff

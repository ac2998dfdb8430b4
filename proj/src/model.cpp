#include "xdiff/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

#include "xdiff/errors.hpp"

namespace xdiff {

namespace {

void require_nonnegative(double r, const char* what) {
    if (!(r >= 0.0)) {
        throw DomainError(std::string(what) + ": argument must be >= 0, got " +
                          std::to_string(r));
    }
}

std::size_t part_index(CouplingPart p) { return static_cast<std::size_t>(p); }

}  // namespace

// ---------------------------------------------------------------------------

double PowerNonlinearity::value(double r) const { return r <= 0.0 ? 0.0 : std::pow(r, a) / a; }

double PowerNonlinearity::d1(double r) const { return r <= 0.0 ? 0.0 : std::pow(r, a - 1.0); }

double PowerNonlinearity::d2(double r) const {
    if (a == 2.0) return 1.0;
    return r <= 0.0 ? 0.0 : (a - 1.0) * std::pow(r, a - 2.0);
}

double PowerNonlinearity::d1_inverse(double u) const {
    if (u <= 0.0) return 0.0;
    if (a == 2.0) return u;
    return std::pow(u, 1.0 / (a - 1.0));
}

// ---------------------------------------------------------------------------

Coupling::Coupling(double b1, double b2, double gamma) : b1_(b1), b2_(b2), gamma_(gamma) {
    parts_[part_index(CouplingPart::h)] = {QTerm{1.0, b1, b2, gamma}};
    parts_[part_index(CouplingPart::d1)] = differentiate(parts_[part_index(CouplingPart::h)], 1);
    parts_[part_index(CouplingPart::d2)] = differentiate(parts_[part_index(CouplingPart::h)], 2);
    parts_[part_index(CouplingPart::d11)] = differentiate(parts_[part_index(CouplingPart::d1)], 1);
    parts_[part_index(CouplingPart::d12)] = differentiate(parts_[part_index(CouplingPart::d1)], 2);
    parts_[part_index(CouplingPart::d22)] = differentiate(parts_[part_index(CouplingPart::d2)], 2);
}

std::vector<QTerm> Coupling::differentiate(const std::vector<QTerm>& terms, int axis) {
    // d_{r1} Q_{p1,p2,g} = p1 Q_{p1-1,p2,g} - g Q_{p1,p2,g+1}, likewise for r2.
    std::map<std::tuple<double, double, double>, double> acc;
    for (const auto& t : terms) {
        const double p = axis == 1 ? t.p1 : t.p2;
        if (p != 0.0) {
            const auto key = axis == 1 ? std::make_tuple(t.p1 - 1.0, t.p2, t.g)
                                       : std::make_tuple(t.p1, t.p2 - 1.0, t.g);
            acc[key] += t.coef * p;
        }
        if (t.g != 0.0) acc[std::make_tuple(t.p1, t.p2, t.g + 1.0)] -= t.coef * t.g;
    }
    std::vector<QTerm> out;
    for (const auto& [key, coef] : acc) {
        if (coef == 0.0) continue;
        out.push_back(QTerm{coef, std::get<0>(key), std::get<1>(key), std::get<2>(key)});
    }
    return out;
}

double Coupling::evaluate(const std::vector<QTerm>& terms, double r1, double r2) {
    const double s = 1.0 + r1 + r2;
    double sum = 0.0;
    for (const auto& t : terms) {
        double v = t.coef;
        if (t.p1 != 0.0) v *= std::pow(r1, t.p1);
        if (t.p2 != 0.0) v *= std::pow(r2, t.p2);
        if (t.g != 0.0) v /= std::pow(s, t.g);
        sum += v;
    }
    return sum;
}

const std::vector<QTerm>& Coupling::expansion(CouplingPart part) const {
    return parts_[part_index(part)];
}

double Coupling::eval(CouplingPart part, double r1, double r2) const {
    return evaluate(parts_[part_index(part)], r1, r2);
}

double Coupling::first(int j, double r1, double r2) const {
    return eval(j == 1 ? CouplingPart::d1 : CouplingPart::d2, r1, r2);
}

double Coupling::second(int j, int i, double r1, double r2) const {
    if (i == 1 && j == 1) return eval(CouplingPart::d11, r1, r2);
    if (i == 2 && j == 2) return eval(CouplingPart::d22, r1, r2);
    return eval(CouplingPart::d12, r1, r2);
}

// ---------------------------------------------------------------------------

Kernel Kernel::quadratic(double lambda) {
    if (!(lambda > 0.0)) throw ConfigError("kernel: lambda must be > 0");
    return Kernel(Type::quadratic, lambda, 0.0);
}

Kernel Kernel::regularized(double lambda, double mu) {
    if (!(lambda > 0.0)) throw ConfigError("kernel: lambda must be > 0");
    if (!(mu >= 0.0)) throw ConfigError("kernel: mu must be >= 0");
    return Kernel(Type::regularized_quadratic, lambda, mu);
}

double Kernel::value(double z) const {
    double k = 0.5 * lambda_ * z * z;
    if (type_ == Type::regularized_quadratic) k += mu_ * (std::sqrt(1.0 + z * z) - 1.0);
    return k;
}

double Kernel::d1(double z) const {
    double k = lambda_ * z;
    if (type_ == Type::regularized_quadratic) k += mu_ * z / std::sqrt(1.0 + z * z);
    return k;
}

double Kernel::d2(double z) const {
    double k = lambda_;
    if (type_ == Type::regularized_quadratic) k += mu_ / std::pow(1.0 + z * z, 1.5);
    return k;
}

double Kernel::bound_second() const {
    return type_ == Type::quadratic ? lambda_ : lambda_ + mu_;
}

// ---------------------------------------------------------------------------

ModelSpec ModelSpec::example(double a1, double a2, double b1, double b2, double gamma,
                             double eps, Kernel K) {
    ModelSpec m;
    m.F1 = PowerNonlinearity{a1};
    m.F2 = PowerNonlinearity{a2};
    m.h = Coupling(b1, b2, gamma);
    m.K = K;
    m.eps = eps;
    return m;
}

double ModelSpec::local_energy(double r1, double r2) const {
    double e = F1.value(r1) + F2.value(r2);
    if (eps != 0.0 && r1 > 0.0 && r2 > 0.0) e += eps * h.eval(CouplingPart::h, r1, r2);
    return e;
}

// ---------------------------------------------------------------------------

const AdmissibilityCondition& AdmissibilityReport::condition(const std::string& name) const {
    for (const auto& c : conditions)
        if (c.name == name) return c;
    throw std::out_of_range("no admissibility condition named " + name);
}

AdmissibilityReport validate_example_params(double a1, double a2, double b1, double b2,
                                            double gamma) {
    for (double v : {a1, a2, b1, b2, gamma}) {
        if (!std::isfinite(v)) throw ConfigError("validate_example_params: non-finite parameter");
        if (!(v > 0.0)) throw ConfigError("validate_example_params: parameters must be positive");
    }
    AdmissibilityReport rep;
    auto at_least = [&](std::string name, double lhs, double rhs) {
        rep.conditions.push_back({std::move(name), lhs, rhs, lhs - rhs, lhs >= rhs});
    };
    auto at_most = [&](std::string name, double lhs, double rhs) {
        rep.conditions.push_back({std::move(name), lhs, rhs, rhs - lhs, lhs <= rhs});
    };
    at_least("a1>=2", a1, 2.0);
    at_least("a2>=2", a2, 2.0);
    at_least("b1>=2a1-1", b1, 2.0 * a1 - 1.0);
    at_least("b2>=2a2-1", b2, 2.0 * a2 - 1.0);
    at_most("b1+b2<=gamma+min(a1,a2)", b1 + b2, gamma + std::min(a1, a2));
    rep.valid = std::all_of(rep.conditions.begin(), rep.conditions.end(),
                            [](const auto& c) { return c.pass; });
    return rep;
}

double coupling_eval(const Coupling& c, CouplingPart which, double r1, double r2) {
    require_nonnegative(r1, "coupling_eval");
    require_nonnegative(r2, "coupling_eval");
    return c.eval(which, r1, r2);
}

// ---------------------------------------------------------------------------

double theta(const ModelSpec& m, int j, double u1, double u2) {
    if (u1 <= 0.0 || u2 <= 0.0) return 0.0;
    return m.h.first(j, m.F1.d1_inverse(u1), m.F2.d1_inverse(u2));
}

double theta_d(const ModelSpec& m, int j, int i, double u1, double u2) {
    // theta_{j,i} vanishes on the boundary of the quadrant; the explicit branch
    // keeps F_i''(0) = 0 out of the denominator.
    if (u1 <= 0.0 || u2 <= 0.0) return 0.0;
    const double r1 = m.F1.d1_inverse(u1);
    const double r2 = m.F2.d1_inverse(u2);
    return m.h.second(j, i, r1, r2) / m.F(i).d2(i == 1 ? r1 : r2);
}

double theta_eval(const ModelSpec& m, ThetaPart which, double u1, double u2) {
    require_nonnegative(u1, "theta_eval");
    require_nonnegative(u2, "theta_eval");
    switch (which) {
        case ThetaPart::t1: return theta(m, 1, u1, u2);
        case ThetaPart::t2: return theta(m, 2, u1, u2);
        case ThetaPart::t11: return theta_d(m, 1, 1, u1, u2);
        case ThetaPart::t12: return theta_d(m, 1, 2, u1, u2);
        case ThetaPart::t21: return theta_d(m, 2, 1, u1, u2);
        case ThetaPart::t22: return theta_d(m, 2, 2, u1, u2);
    }
    return 0.0;
}

std::vector<double> SampleSpec::points() const {
    if (count < 1 || !(u_min > 0.0) || !(u_max >= u_min))
        throw ConfigError("SampleSpec: need count >= 1 and 0 < u_min <= u_max");
    std::vector<double> pts(static_cast<std::size_t>(count));
    if (count == 1) {
        pts[0] = u_min;
        return pts;
    }
    const double l0 = std::log(u_min), l1 = std::log(u_max);
    for (int k = 0; k < count; ++k)
        pts[static_cast<std::size_t>(k)] = std::exp(l0 + (l1 - l0) * k / (count - 1));
    return pts;
}

namespace {

double kappa_ratio(const ModelSpec& m, int j, int i, double u1, double u2) {
    const double r1 = m.F1.d1_inverse(u1);
    const double r2 = m.F2.d1_inverse(u2);
    const double ri = i == 1 ? r1 : r2;
    const double rj = j == 1 ? r1 : r2;
    const double w = std::min({1.0, u1, u2, std::sqrt(ri / rj)});
    return std::abs(theta_d(m, j, i, u1, u2)) / w;
}

}  // namespace

Matrix2 estimate_kappa(const ModelSpec& m, const SampleSpec& sample) {
    const auto pts = sample.points();
    if (pts.empty()) throw ConfigError("estimate_kappa: empty sample");
    const double lo = std::log(sample.u_min), hi = std::log(sample.u_max);
    const double spacing = pts.size() > 1 ? (hi - lo) / static_cast<double>(pts.size() - 1) : 1.0;

    Matrix2 kappa{};
    for (int j = 1; j <= 2; ++j) {
        for (int i = 1; i <= 2; ++i) {
            double best = 0.0, bu1 = pts[0], bu2 = pts[0];
            for (double u1 : pts) {
                for (double u2 : pts) {
                    const double v = kappa_ratio(m, j, i, u1, u2);
                    if (v > best || !std::isfinite(v)) {
                        best = v;
                        bu1 = u1;
                        bu2 = u2;
                    }
                    if (!std::isfinite(best)) break;
                }
            }
            // Pattern search in log coordinates, confined to the sample box.
            if (std::isfinite(best) && best > 0.0) {
                double x = std::log(bu1), y = std::log(bu2), step = spacing;
                while (step > 1e-7) {
                    bool moved = false;
                    for (int dx = -1; dx <= 1; ++dx) {
                        for (int dy = -1; dy <= 1; ++dy) {
                            if (dx == 0 && dy == 0) continue;
                            const double nx = std::clamp(x + dx * step, lo, hi);
                            const double ny = std::clamp(y + dy * step, lo, hi);
                            const double v = kappa_ratio(m, j, i, std::exp(nx), std::exp(ny));
                            if (v > best) {
                                best = v;
                                x = nx;
                                y = ny;
                                moved = true;
                            }
                        }
                    }
                    if (!moved) step *= 0.5;
                }
            }
            kappa[j - 1][i - 1] = best;
        }
    }
    return kappa;
}

// ---------------------------------------------------------------------------

Vec2 gamma_map(const ModelSpec& m, double u1, double u2) {
    require_nonnegative(u1, "gamma_map");
    require_nonnegative(u2, "gamma_map");
    if (m.eps == 0.0) return {u1, u2};
    return {u1 + m.eps * theta(m, 1, u1, u2), u2 + m.eps * theta(m, 2, u1, u2)};
}

double gamma_jacobian_bound(const ModelSpec& m) {
    const auto& k = m.kappa;
    return 1.0 - m.eps * (k[0][0] + k[1][1]) -
           m.eps * m.eps * (k[0][0] * k[1][1] + k[0][1] * k[1][0]);
}

Vec2 gamma_inverse(const ModelSpec& m, double v1, double v2, GammaInverseOptions opt) {
    require_nonnegative(v1, "gamma_inverse");
    require_nonnegative(v2, "gamma_inverse");
    if (m.eps == 0.0 || v1 == 0.0 || v2 == 0.0) return {v1, v2};
    if (!(gamma_jacobian_bound(m) > 0.1)) {
        throw ConfigError("gamma_inverse: Jacobian lower bound " +
                          std::to_string(gamma_jacobian_bound(m)) + " <= 0.1 for eps = " +
                          std::to_string(m.eps));
    }

    const double eps = m.eps;
    auto residual = [&](double u1, double u2) {
        const Vec2 g = gamma_map(m, u1, u2);
        return Vec2{g.v1 - v1, g.v2 - v2};
    };
    auto norm = [](Vec2 r) { return std::max(std::abs(r.v1), std::abs(r.v2)); };

    double u1 = v1, u2 = v2;
    Vec2 res = residual(u1, u2);
    double rn = norm(res);
    for (int it = 0; it < opt.max_iters; ++it) {
        if (rn <= opt.tol) return {u1, u2};
        const double j11 = 1.0 + eps * theta_d(m, 1, 1, u1, u2);
        const double j12 = eps * theta_d(m, 1, 2, u1, u2);
        const double j21 = eps * theta_d(m, 2, 1, u1, u2);
        const double j22 = 1.0 + eps * theta_d(m, 2, 2, u1, u2);
        const double det = j11 * j22 - j12 * j21;
        const double s1 = (j22 * res.v1 - j12 * res.v2) / det;
        const double s2 = (-j21 * res.v1 + j11 * res.v2) / det;

        double alpha = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls, alpha *= 0.5) {
            const double n1 = std::max(0.0, u1 - alpha * s1);
            const double n2 = std::max(0.0, u2 - alpha * s2);
            const Vec2 nres = residual(n1, n2);
            const double nrn = norm(nres);
            if (nrn < rn) {
                u1 = n1;
                u2 = n2;
                res = nres;
                rn = nrn;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    if (rn <= opt.tol) return {u1, u2};
    throw NumericError("gamma_inverse: Newton did not converge", rn);
}

double bregman(const PowerNonlinearity& F, double r, double rbar) {
    require_nonnegative(r, "bregman");
    require_nonnegative(rbar, "bregman");
    return std::max(0.0, F.value(r) - F.value(rbar) - F.d1(rbar) * (r - rbar));
}

// ---------------------------------------------------------------------------

namespace {

// Smallest eigenvalue of the symmetric matrix [[a, b], [b, c]].
double min_eig(double a, double b, double c) {
    const double mean = 0.5 * (a + c);
    const double rad = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    return mean - rad;
}

// Hessian of h normalized by sqrt(F_i'' F_j''), whose eigenvalues decide
// positivity of Hess(F1 + F2 + 2 eps h) = D (I + 2 eps A) D.
struct NormalizedHessian {
    double a11, a12, a22;
};

NormalizedHessian normalized_hessian(const ModelSpec& m, double r1, double r2) {
    const double f1 = m.F1.d2(r1), f2 = m.F2.d2(r2);
    return {m.h.second(1, 1, r1, r2) / f1, m.h.second(1, 2, r1, r2) / std::sqrt(f1 * f2),
            m.h.second(2, 2, r1, r2) / f2};
}

}  // namespace

AuditReport hypothesis_numeric_audit(const ModelSpec& m, const AuditOptions& opt) {
    AuditReport rep;
    const auto pts = opt.sample.points();

    // (i) PSD of the Hessian of F_{2 eps}; eps0 is the largest eps for which
    // I + 2 eps A stays PSD at every sample, i.e. 1 / (2 max(-lambda_min(A))).
    double worst_negative = 0.0;
    double min_ratio = std::numeric_limits<double>::infinity();
    for (double r1 : pts) {
        for (double r2 : pts) {
            const auto A = normalized_hessian(m, r1, r2);
            const double e = min_eig(A.a11, A.a12, A.a22);
            worst_negative = std::max(worst_negative, -e);
            min_ratio = std::min(
                min_ratio, min_eig(1.0 + 2.0 * m.eps * A.a11, 2.0 * m.eps * A.a12,
                                   1.0 + 2.0 * m.eps * A.a22));
        }
    }
    rep.hessian_min_eig_ratio = min_ratio;
    rep.hessian_psd = min_ratio >= -1e-12;
    rep.eps0_estimate =
        worst_negative > 0.0 ? std::min(opt.eps0_cap, 0.5 / worst_negative) : opt.eps0_cap;

    // (ii) McCann condition, normalized by r^a.
    double mc = std::numeric_limits<double>::infinity();
    for (int j = 1; j <= 2; ++j) {
        const auto& F = m.F(j);
        for (double r : pts) {
            const double v = F.value(r) - r * F.d1(r) + r * r * F.d2(r);
            mc = std::min(mc, v / std::pow(r, F.a));
        }
    }
    rep.mccann_min = mc;
    rep.mccann = mc >= -1e-12;

    // (iii) sandwich estimate for F_eps, relative to F1 + F2.
    Matrix2 kappa = m.kappa;
    if (kappa[0][0] == 0.0 && kappa[1][1] == 0.0) kappa = estimate_kappa(m, opt.sample);
    double lower = std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    for (double r1 : pts) {
        for (double r2 : pts) {
            const double f1 = m.F1.value(r1), f2 = m.F2.value(r2);
            const double fe = m.local_energy(r1, r2);
            const double scale = f1 + f2;
            lower = std::min(lower, (fe - 0.5 * scale) / scale);
            const double up = (1.0 + 0.5 * m.eps * kappa[0][0]) * f1 +
                              (1.0 + 0.5 * m.eps * kappa[1][1]) * f2;
            upper = std::min(upper, (up - fe) / scale);
        }
    }
    rep.sandwich_lower_slack = lower;
    rep.sandwich_upper_slack = upper;
    rep.sandwich = lower >= -1e-12 && upper >= -1e-12;

    // (iv) Bregman control of theta differences for rbar <= H.
    rep.bregman_H = opt.bregman_H;
    const auto rbar_pts = SampleSpec{1e-3, opt.bregman_H, opt.bregman_count}.points();
    const auto r_pts = SampleSpec{opt.sample.u_min, opt.sample.u_max, 2 * opt.bregman_count}.points();
    double beta = 0.0;
    for (double rb1 : rbar_pts) {
        for (double rb2 : rbar_pts) {
            const double ub1 = m.F1.d1(rb1), ub2 = m.F2.d1(rb2);
            for (double r1 : r_pts) {
                for (double r2 : r_pts) {
                    const double den = bregman(m.F1, r1, rb1) + bregman(m.F2, r2, rb2);
                    if (!(den > 0.0)) continue;
                    const double u1 = m.F1.d1(r1), u2 = m.F2.d1(r2);
                    for (int j = 1; j <= 2; ++j) {
                        for (int i = 1; i <= 2; ++i) {
                            const double d = theta_d(m, j, i, u1, u2) - theta_d(m, j, i, ub1, ub2);
                            beta = std::max(beta, std::max(r1, r2) * d * d / den);
                        }
                    }
                }
            }
        }
    }
    rep.beta_H = beta;
    rep.bregman_bound = std::isfinite(beta);
    return rep;
}

void calibrate_model(ModelSpec& m, const SampleSpec& sample) {
    m.kappa = estimate_kappa(m, sample);
    AuditOptions opt;
    opt.sample = sample;
    // eps0 only needs part (i); keep the Bregman sweep minimal.
    opt.bregman_count = 1;
    m.eps0_estimate = hypothesis_numeric_audit(m, opt).eps0_estimate;
}

}  // namespace xdiff

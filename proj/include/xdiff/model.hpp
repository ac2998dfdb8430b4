#pragma once

// Closed-form model family: power-law self-diffusion F_j(r) = r^a / a, the
// monomial-quotient coupling h(r1, r2) = r1^b1 r2^b2 / (1 + r1 + r2)^gamma and
// convex interaction kernels, together with the theta / Gamma calculus that
// the steady-state solver is built on.

#include <array>
#include <limits>
#include <string>
#include <vector>

namespace xdiff {

struct PowerNonlinearity {
    double a = 2.0;

    double value(double r) const;       // F(r)
    double d1(double r) const;          // F'(r)
    double d2(double r) const;          // F''(r)
    double d1_inverse(double u) const;  // (F')^{-1}(u)
    /// Exponent of the small-r power behaviour of F'' (F'' ~ r^beta).
    double beta() const { return a - 2.0; }
};

/// One term `coef * r1^p1 * r2^p2 / (1 + r1 + r2)^g` of a Q-expansion.
struct QTerm {
    double coef;
    double p1;
    double p2;
    double g;
};

enum class CouplingPart { h, d1, d2, d11, d12, d22 };

/// h(r1, r2) = r1^b1 r2^b2 / (1 + r1 + r2)^gamma with all derivatives up to
/// second order stored as finite Q-expansions.
class Coupling {
public:
    Coupling() : Coupling(3.0, 3.0, 4.0) {}
    Coupling(double b1, double b2, double gamma);

    double b1() const { return b1_; }
    double b2() const { return b2_; }
    double gamma() const { return gamma_; }

    double eval(CouplingPart part, double r1, double r2) const;
    /// d_{r_j} h for j in {1, 2}.
    double first(int j, double r1, double r2) const;
    /// d_{r_i} d_{r_j} h for i, j in {1, 2}.
    double second(int j, int i, double r1, double r2) const;

    const std::vector<QTerm>& expansion(CouplingPart part) const;

    /// d/dr_axis of a Q-expansion; zero coefficients are dropped.
    static std::vector<QTerm> differentiate(const std::vector<QTerm>& terms, int axis);
    static double evaluate(const std::vector<QTerm>& terms, double r1, double r2);

private:
    double b1_, b2_, gamma_;
    std::array<std::vector<QTerm>, 6> parts_;
};

class Kernel {
public:
    enum class Type { quadratic, regularized_quadratic };

    static Kernel quadratic(double lambda);
    static Kernel regularized(double lambda, double mu);

    Type type() const { return type_; }
    double lambda() const { return lambda_; }
    double mu() const { return mu_; }

    double value(double z) const;
    double d1(double z) const;
    double d2(double z) const;
    /// Global bound on |K''|.
    double bound_second() const;

private:
    Kernel(Type t, double lambda, double mu) : type_(t), lambda_(lambda), mu_(mu) {}
    Type type_ = Type::quadratic;
    double lambda_ = 1.0;
    double mu_ = 0.0;
};

using Matrix2 = std::array<std::array<double, 2>, 2>;

struct ModelSpec {
    PowerNonlinearity F1{2.0};
    PowerNonlinearity F2{2.0};
    Coupling h{};
    Kernel K = Kernel::quadratic(1.0);
    double eps = 0.0;

    /// Sampled bounds kappa[j-1][i-1] on |theta_{j,i}|; zero until estimated.
    Matrix2 kappa{};
    double eps0_estimate = std::numeric_limits<double>::quiet_NaN();
    /// lambda - eps * K0; NaN until a steady state has been computed.
    double lambda_eps = std::numeric_limits<double>::quiet_NaN();

    static ModelSpec example(double a1, double a2, double b1, double b2, double gamma,
                             double eps, Kernel K);

    const PowerNonlinearity& F(int j) const { return j == 1 ? F1 : F2; }
    double a(int j) const { return F(j).a; }
    /// Integrand F1(r1) + F2(r2) + eps h(r1, r2).
    double local_energy(double r1, double r2) const;
};

// ---------------------------------------------------------------------------
// Admissibility of the example family.

struct AdmissibilityCondition {
    std::string name;
    double lhs;
    double rhs;
    double slack;  // lhs - rhs for ">=" conditions, rhs - lhs for "<="
    bool pass;
};

struct AdmissibilityReport {
    std::vector<AdmissibilityCondition> conditions;
    bool valid = false;

    const AdmissibilityCondition& condition(const std::string& name) const;
};

AdmissibilityReport validate_example_params(double a1, double a2, double b1, double b2,
                                            double gamma);

double coupling_eval(const Coupling& c, CouplingPart which, double r1, double r2);

// ---------------------------------------------------------------------------
// theta calculus: theta_j(F1'(r1), F2'(r2)) = d_{r_j} h(r), theta_{j,i} = d_{u_i} theta_j.

enum class ThetaPart { t1, t2, t11, t12, t21, t22 };

double theta_eval(const ModelSpec& m, ThetaPart which, double u1, double u2);
double theta(const ModelSpec& m, int j, double u1, double u2);
double theta_d(const ModelSpec& m, int j, int i, double u1, double u2);

struct SampleSpec {
    double u_min = 1e-6;
    double u_max = 1e4;
    int count = 64;

    std::vector<double> points() const;
};

/// Sampled supremum of |theta_{j,i}(u)| / min{1, u1, u2, sqrt(r_i / r_j)}
/// over a log-spaced grid, polished by a local search around the grid maximum.
Matrix2 estimate_kappa(const ModelSpec& m, const SampleSpec& sample = {});

struct Vec2 {
    double v1;
    double v2;
};

Vec2 gamma_map(const ModelSpec& m, double u1, double u2);

/// Lower bound 1 - eps (k11 + k22) - eps^2 (k11 k22 + k12 k21) on det DGamma.
double gamma_jacobian_bound(const ModelSpec& m);

struct GammaInverseOptions {
    double tol = 1e-12;
    int max_iters = 50;
};

Vec2 gamma_inverse(const ModelSpec& m, double v1, double v2, GammaInverseOptions opt = {});

double bregman(const PowerNonlinearity& F, double r, double rbar);

// ---------------------------------------------------------------------------
// Numerical audit of the structural hypotheses.

struct AuditReport {
    // Hessian of F1 + F2 + 2 eps h positive semidefinite on all samples.
    bool hessian_psd = false;
    double hessian_min_eig_ratio = 0.0;
    double eps0_estimate = 0.0;
    // F - r F' + r^2 F'' >= 0.
    bool mccann = false;
    double mccann_min = 0.0;
    // 1/2 (F1 + F2) <= F_eps <= (1 + eps k11 / 2) F1 + (1 + eps k22 / 2) F2.
    bool sandwich = false;
    double sandwich_lower_slack = 0.0;
    double sandwich_upper_slack = 0.0;
    // max{r1, r2} |theta_ji(u) - theta_ji(ubar)|^2 <= beta_H (d_F1 + d_F2).
    bool bregman_bound = false;
    double beta_H = 0.0;
    double bregman_H = 0.0;

    bool all_pass() const { return hessian_psd && mccann && sandwich && bregman_bound; }
};

struct AuditOptions {
    SampleSpec sample{};
    double bregman_H = 2.0;
    int bregman_count = 14;
    double eps0_cap = 1e3;
};

AuditReport hypothesis_numeric_audit(const ModelSpec& m, const AuditOptions& opt = {});

/// Estimates kappa and eps0 and stores them in the model.
void calibrate_model(ModelSpec& m, const SampleSpec& sample = {});

}  // namespace xdiff

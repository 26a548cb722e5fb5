#include "meristem/asymptotics.hpp"
#include "meristem/errors.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <numeric>
#include <random>

namespace meristem {

Eigen::VectorXd HomogeneousState::replicate(int n) const {
    const int m = static_cast<int>(y_star.size());
    Eigen::VectorXd y(static_cast<Eigen::Index>(m) * n);
    for (int i = 0; i < n; ++i) y.segment(i * m, m) = y_star;
    return y;
}

Eigen::VectorXd AsymptoticSolution::evaluate(double T) const {
    const int m = static_cast<int>(base.y_star.size());
    const int n = static_cast<int>(eta.size()) / m;
    return base.replicate(n) + T * eta;
}

HomogeneousState homogeneous_state(const ModelDefinition& model) {
    const auto& p = model.params;
    const double disc_a = 1.0 + 4.0 * p.kappa_IAA * p.rho_IAA / p.mu_IAA;
    if (disc_a <= 0.0) throw NumericalError("homogeneous state: nonpositive discriminant for a*");
    const double a_star = (-1.0 + std::sqrt(disc_a)) / (2.0 * p.kappa_IAA);

    HomogeneousState h;
    h.y_star.resize(model.m);
    h.y_star[0] = a_star;
    if (model.m == 2) {
        const double disc_p = 1.0 + 4.0 * p.kappa_PIN * (p.rho_PIN0 + p.rho_PIN * a_star) / p.mu_PIN;
        if (disc_p <= 0.0) throw NumericalError("homogeneous state: nonpositive discriminant for p*");
        h.y_star[1] = (-1.0 + std::sqrt(disc_p)) / (2.0 * p.kappa_PIN);
    }

    const Eigen::VectorXd bal = model.production(h.y_star) - model.decay(h.y_star);
    if (bal.cwiseAbs().maxCoeff() > 1e-12 * (1.0 + h.y_star.cwiseAbs().maxCoeff()))
        throw NumericalError("homogeneous state failed the production/decay balance check");
    return h;
}

GeometricCoefficients geometric_coefficients(const TissueGraph& g) {
    GeometricCoefficients out;
    out.xi.resize(g.n);
    long long tot_num = 0, tot_den = 1;
    auto add_frac = [](long long& an, long long& ad, long long bn, long long bd) {
        an = an * bd + bn * ad;
        ad *= bd;
        const long long gg = std::gcd(std::llabs(an), ad);
        if (gg > 1) { an /= gg; ad /= gg; }
    };
    // xi_i = 1 - sum_j 1/|N_j| over effective degrees; exact rational sums
    for (int i = 0; i < g.n; ++i) {
        long long num = 1, den = 1;
        auto sub = [&](long long d) {
            // num/den -= 1/d
            num = num * d - den;
            den *= d;
            const long long gcd = std::gcd(std::llabs(num), den);
            if (gcd > 1) { num /= gcd; den /= gcd; }
        };
        for (int j : g.neighbors[i]) sub(g.effective_degree(j));
        for (int k = 0; k < g.ghost_count(i); ++k) sub(g.effective_degree(i));
        out.xi[i] = static_cast<double>(num) / static_cast<double>(den);
        if (num == 0) out.interior_set.push_back(i);
        else out.boundary_set.push_back(i);
        add_frac(tot_num, tot_den, num, den);
    }
    out.xi_sum_num = tot_num;
    out.xi_sum_den = tot_den;
    return out;
}

namespace {

// The small-transport expansion applies to regular arrays only.
void require_regular(const TissueGraph& g, const char* op) {
    if (!g.is_regular())
        throw InvalidGeometryError(std::string(op) +
            ": tissue is irregular (unequal volumes or contacts); the first-order "
            "expansion is defined for regular arrays only");
}

} // namespace

AsymptoticSolution first_order_no_diffusion(const ModelDefinition& model, const TissueGraph& g) {
    require_regular(g, "first_order_no_diffusion");
    const HomogeneousState h = homogeneous_state(model);
    const int m = model.m;
    const Eigen::MatrixXd M = model.production_jacobian(h.y_star) - model.decay_jacobian(h.y_star);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (!lu.isInvertible())
        throw SingularError("first_order_no_diffusion: pi'(y*) - delta'(y*) is singular");

    const Eigen::VectorXd psi_star = model.psi(h.y_star, h.y_star, g.volumes[0]);
    const Eigen::VectorXd eta_unit = lu.solve(psi_star);
    const GeometricCoefficients gc = geometric_coefficients(g);

    AsymptoticSolution sol;
    sol.base = h;
    sol.eta.resize(static_cast<Eigen::Index>(m) * g.n);
    for (int i = 0; i < g.n; ++i) sol.eta.segment(i * m, m) = gc.xi[i] * eta_unit;
    sol.validity_note = "O(T) correction without diffusion; valid for T << 1";
    return sol;
}

AsymptoticSolution first_order_with_diffusion(const ModelDefinition& model, const TissueGraph& g) {
    require_regular(g, "first_order_with_diffusion");
    const HomogeneousState h = homogeneous_state(model);
    const int m = model.m;

    // J(y*) + L (x) D is exactly the system Jacobian at the homogeneous state
    // with the transport switched off.
    ModelParams p0 = model.params;
    p0.T = 0.0;
    const ModelDefinition frozen_T = model.with_params(p0);
    const Eigen::VectorXd y0 = h.replicate(g.n);
    Eigen::SparseMatrix<double> A = assemble_jacobian(frozen_T, g, y0);

    const Eigen::VectorXd psi_star = model.psi(h.y_star, h.y_star, g.volumes[0]);
    const GeometricCoefficients gc = geometric_coefficients(g);
    Eigen::VectorXd b(static_cast<Eigen::Index>(m) * g.n);
    for (int i = 0; i < g.n; ++i) b.segment(i * m, m) = gc.xi[i] * psi_star;

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success)
        throw SingularError("first_order_with_diffusion: J(y*) + L(x)D is singular");
    const Eigen::VectorXd eta = lu.solve(b);

    AsymptoticSolution sol;
    sol.base = h;
    sol.eta = eta;
    sol.validity_note = "O(T) correction with diffusion; valid for T << 1";

    // crude 1-norm condition estimate, enough to flag a near-singular solve
    {
        std::mt19937_64 rng(12345);
        double inv_norm = 0.0;
        for (int trial = 0; trial < 3; ++trial) {
            Eigen::VectorXd v(b.size());
            for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = (rng() & 1) ? 1.0 : -1.0;
            inv_norm = std::max(inv_norm, lu.solve(v).cwiseAbs().maxCoeff());
        }
        double a_norm = 0.0;
        for (int k = 0; k < A.outerSize(); ++k) {
            double col = 0.0;
            for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) col += std::abs(it.value());
            a_norm = std::max(a_norm, col);
        }
        if (inv_norm * a_norm > 1e12)
            sol.validity_note += "; warning: operator condition estimate > 1e12";
    }
    return sol;
}

} // namespace meristem

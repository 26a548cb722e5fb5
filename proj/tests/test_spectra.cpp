#include "doctest.h"

#include "meristem/asymptotics.hpp"
#include "meristem/continuation.hpp"
#include "meristem/spectra.hpp"
#include "test_helpers.hpp"

#include <cmath>
#include <complex>

using namespace meristem;

namespace {

ModelParams paper_smith(double T = 0.0, double D = 0.0) {
    ModelParams p = ModelParams::smith_defaults();
    p.T = T;
    p.D = D;
    return p;
}

} // namespace

TEST_CASE("T=0, D=0 spectrum is the closed-form reaction pair replicated n times") {
    const auto g = build_hex_grid(4, 4, 1.0);
    const auto model = smith_model(paper_smith(0.0, 0.0));
    const auto y = homogeneous_state(model).replicate(g.n);
    const auto rep = spectrum(model, g, y);
    REQUIRE(rep.eigenvalues.size() == 2 * g.n);
    // mpmath-frozen: -rho k/(1+k a*)^2 - mu and -(rho0+rho a*) k/(1+k p*)^2 - mu
    const double lam_a = -0.171081883628826;
    const double lam_p = -0.181761845914511;
    int count_a = 0, count_p = 0;
    for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i) {
        const auto l = rep.eigenvalues[i];
        CHECK(std::abs(l.imag()) < 1e-10);
        if (std::abs(l.real() - lam_a) < 1e-10) ++count_a;
        else if (std::abs(l.real() - lam_p) < 1e-10) ++count_p;
    }
    CHECK(count_a == g.n);
    CHECK(count_p == g.n);
    CHECK(rep.stable());
    CHECK(rep.classification() == "stable");
}

TEST_CASE("pure Neumann diffusion operator: real nonpositive spectrum with one zero") {
    // weighted graph Laplacian of the 1D line (mirror ghost at the left)
    const int n = 12;
    const auto g = build_line(n, 1.0, 1.0, BoundaryKind::NeumannGhost, BoundaryKind::Free);
    Eigen::SparseMatrix<double> L(n, n);
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < n; ++i) {
        double diag = 0.0;
        for (std::size_t k = 0; k < g.neighbors[i].size(); ++k) {
            trip.emplace_back(i, g.neighbors[i][k], g.contact[i][k]);
            diag -= g.contact[i][k];
        }
        trip.emplace_back(i, i, diag);
    }
    L.setFromTriplets(trip.begin(), trip.end());
    const auto rep = spectrum_of_matrix(L, SpectrumMode::Full);
    int zeros = 0;
    for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i) {
        CHECK(std::abs(rep.eigenvalues[i].imag()) < 1e-10);
        CHECK(rep.eigenvalues[i].real() < 1e-10);
        if (std::abs(rep.eigenvalues[i].real()) < 1e-10) ++zeros;
    }
    CHECK(zeros == 1);
}

TEST_CASE("conjugate pairing and eigenpair residuals on a patterned state") {
    const auto g = build_line(40, 1.0, 1.0, BoundaryKind::NeumannGhost, BoundaryKind::Free);
    auto params = paper_smith(1.5, 1.0);
    const auto model = smith_model(params);
    const auto sol = first_order_with_diffusion(smith_model(paper_smith(0.0, 1.0)), g);
    const auto nr = newton_solve(model, g, sol.evaluate(1.5));
    REQUIRE(nr.converged);

    SpectrumSettings st;
    st.vector_window = 1e9; // keep all eigenvectors for the residual check
    const auto rep = spectrum(model, g, nr.state, SpectrumMode::Full, st);

    // conjugate-pair symmetry
    for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i) {
        const auto l = rep.eigenvalues[i];
        if (std::abs(l.imag()) <= 1e-8) continue;
        bool found = false;
        for (Eigen::Index j = 0; j < rep.eigenvalues.size(); ++j)
            if (std::abs(rep.eigenvalues[j] - std::conj(l)) < 1e-8) { found = true; break; }
        CHECK(found);
    }

    // residual of every reported eigenpair
    const Eigen::SparseMatrix<double> J = assemble_jacobian(model, g, nr.state);
    const auto Jc = J.cast<std::complex<double>>();
    REQUIRE(!rep.eigenvectors.empty());
    for (std::size_t k = 0; k < rep.eigenvectors.size(); ++k) {
        const auto lam = rep.eigenvalues[rep.vector_index[k]];
        const auto& v = rep.eigenvectors[k];
        CHECK((Jc * v - lam * v).norm() / v.norm() < 1e-7);
    }
}

TEST_CASE("rightmost-k agrees with the dense solver on a small system") {
    const auto g = build_line(30, 1.0, 1.0, BoundaryKind::NeumannGhost, BoundaryKind::Free);
    const auto sol = first_order_with_diffusion(smith_model(paper_smith(0.0, 1.0)), g);
    // walk up in T: the O(T) predictor is only valid for small T
    const auto mid = newton_solve(smith_model(paper_smith(1.0, 1.0)), g, sol.evaluate(1.0));
    REQUIRE(mid.converged);
    const auto model = smith_model(paper_smith(2.0, 1.0));
    const auto nr = newton_solve(model, g, mid.state);
    REQUIRE(nr.converged);

    const auto dense = spectrum(model, g, nr.state, SpectrumMode::Full);
    SpectrumSettings st;
    st.k = 10;
    const auto sparse = spectrum(model, g, nr.state, SpectrumMode::RightmostK, st);
    CHECK(sparse.converged);
    REQUIRE(sparse.eigenvalues.size() >= 8);
    for (Eigen::Index i = 0; i < 8; ++i)
        CHECK(std::abs(sparse.eigenvalues[i] - dense.eigenvalues[i]) < 1e-7);
    CHECK(sparse.n_unstable_real == dense.n_unstable_real);
    CHECK(sparse.n_unstable_pairs == dense.n_unstable_pairs);
}

TEST_CASE("spectrum warns on an unconverged state") {
    const auto g = build_line(10, 1.0, 1.0, BoundaryKind::NeumannGhost, BoundaryKind::Free);
    const auto model = smith_model(paper_smith(1.0, 1.0));
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(20, 1.0);
    const auto rep = spectrum(model, g, y);
    CHECK(rep.warning.find("not a converged steady state") != std::string::npos);
}

TEST_CASE("uniform system: eigenfunction profile is flat") {
    HopfEvent ev;
    ev.eigenfunction = Eigen::VectorXcd::Constant(12, std::complex<double>(0.3, -0.4));
    const Eigen::VectorXd prof = hopf_eigenfunction_profile(ev, 2);
    REQUIRE(prof.size() == 6);
    for (int i = 0; i < 6; ++i) CHECK(prof[i] == doctest::Approx(1.0).epsilon(1e-14));
}

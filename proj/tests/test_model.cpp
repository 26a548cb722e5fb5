#include "doctest.h"

#include "meristem/asymptotics.hpp"
#include "meristem/errors.hpp"
#include "meristem/model.hpp"
#include "oracle_models.hpp"
#include "test_helpers.hpp"

#include <cmath>

using namespace meristem;

namespace {

ModelParams paper_smith(double T = 0.0, double D = 0.0) {
    ModelParams p = ModelParams::smith_defaults();
    p.T = T;
    p.D = D;
    return p;
}

ModelParams paper_chitwood(double T = 0.0, double D = 0.0) {
    ModelParams p = ModelParams::chitwood_defaults();
    p.T = T;
    p.D = D;
    return p;
}

} // namespace

TEST_CASE("homogeneous state is an exact root at T=0 on any graph") {
    std::mt19937_64 rng(42);
    const auto line = build_line(10, 1.0, 1.0, BoundaryKind::NeumannGhost, BoundaryKind::Free);
    const auto hex = build_hex_grid(4, 4, 1.0);
    const auto rnd = testutil::random_regular_graph(rng, 17);
    for (const TissueGraph* g : {&line, &hex, &rnd}) {
        for (double D : {0.0, 1.0}) {
            const auto model = smith_model(paper_smith(0.0, D));
            const auto y = homogeneous_state(model).replicate(g->n);
            CHECK(assemble_residual(model, *g, y).lpNorm<Eigen::Infinity>() < 1e-13);
        }
    }
}

TEST_CASE("periodic ring keeps the homogeneous state for any T (Turing exclusion)") {
    const auto ring = build_ring(20, 1.0, 1.0);
    for (double T : {0.0, 1.0, 10.0}) {
        for (const ModelKind kind : {ModelKind::Smith, ModelKind::Chitwood}) {
            const auto params = kind == ModelKind::Smith ? paper_smith(T, 1.0) : paper_chitwood(T, 1.0);
            const auto model = make_model(kind, params);
            const auto y = homogeneous_state(model).replicate(ring.n);
            CHECK(assemble_residual(model, ring, y).lpNorm<Eigen::Infinity>() < 1e-12);
        }
    }
}

TEST_CASE("bounded line: transport at y* is supported exactly on the boundary set") {
    const int n = 20;
    const auto g = build_line(n, 1.0, 1.0, BoundaryKind::NeumannGhost, BoundaryKind::Free);
    const auto model = smith_model(paper_smith(1.0, 0.0));
    const auto y = homogeneous_state(model).replicate(n);
    const Eigen::VectorXd t = assemble_transport(model, g, y);
    for (int i = 0; i < n - 2; ++i) CHECK(t[2 * i] == 0.0); // interior incl. the Neumann end
    CHECK(t[2 * (n - 2)] > 0.0);  // xi = -1/2 cell: source
    CHECK(t[2 * (n - 1)] < 0.0);  // xi = +1/2 cell: sink
    CHECK(t[2 * (n - 2)] == doctest::Approx(-t[2 * (n - 1)]).epsilon(1e-14));
}

TEST_CASE("Smith rhs matches an independent transcription on random 5-cell states") {
    std::mt19937_64 rng(7);
    for (BoundaryKind left : {BoundaryKind::Free, BoundaryKind::NeumannGhost}) {
        const auto g = build_line(5, 1.3, 0.8, left, BoundaryKind::Free);
        const auto params = [] {
            ModelParams p = ModelParams::smith_defaults();
            p.T = 0.7;
            p.D = 0.4;
            p.rho_IAA = 1.1;
            return p;
        }();
        const auto model = smith_model(params);
        for (int trial = 0; trial < 40; ++trial) {
            const Eigen::VectorXd y = testutil::random_state(rng, 10);
            std::vector<double> a(5), p(5);
            for (int i = 0; i < 5; ++i) { a[i] = y[2 * i]; p[i] = y[2 * i + 1]; }
            const auto want = oracle::smith_rhs(g, params, a, p);
            const Eigen::VectorXd got = assemble_residual(model, g, y);
            for (int k = 0; k < 10; ++k)
                CHECK(std::abs(got[k] - want[k]) <= 1e-12 * (1.0 + std::abs(want[k])));
        }
    }
}

TEST_CASE("Chitwood rhs matches an independent transcription on random 5-cell states") {
    std::mt19937_64 rng(8);
    const auto g = build_line(5, 0.9, 1.2, BoundaryKind::NeumannGhost, BoundaryKind::Free);
    auto params = ModelParams::chitwood_defaults();
    params.T = 1.3;
    params.D = 0.2;
    const auto model = chitwood_model(params);
    for (int trial = 0; trial < 40; ++trial) {
        const Eigen::VectorXd y = testutil::random_state(rng, 10);
        std::vector<double> a(5), p(5);
        for (int i = 0; i < 5; ++i) { a[i] = y[2 * i]; p[i] = y[2 * i + 1]; }
        const auto want = oracle::chitwood_rhs(g, params, a, p);
        const Eigen::VectorXd got = assemble_residual(model, g, y);
        for (int k = 0; k < 10; ++k)
            CHECK(std::abs(got[k] - want[k]) <= 1e-12 * (1.0 + std::abs(want[k])));
    }
}

TEST_CASE("Chitwood transport vanishes in the c2 -> 0 limit") {
    const auto g = build_line(6, 1.0, 1.0, BoundaryKind::Free, BoundaryKind::Free);
    auto params = paper_chitwood(2.0, 0.0);
    params.c2 = 0.0;
    const auto model = chitwood_model(params);
    std::mt19937_64 rng(4);
    const Eigen::VectorXd y = testutil::random_state(rng, 12);
    CHECK(assemble_transport(model, g, y).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("factorised transport equals the carrier-allocated route on regular tissues") {
    std::mt19937_64 rng(99);
    int checked = 0;
    for (int gi = 0; gi < 50; ++gi) {
        const auto g = testutil::random_regular_graph(rng, 6 + static_cast<int>(rng() % 10));
        for (const ModelKind kind : {ModelKind::Smith, ModelKind::Chitwood}) {
            const auto params = kind == ModelKind::Smith ? paper_smith(1.0) : paper_chitwood(1.0);
            const auto model = make_model(kind, params);
            for (int s = 0; s < 10; ++s) {
                const Eigen::VectorXd y = testutil::random_state(rng, 2 * g.n);
                const Eigen::VectorXd direct = assemble_transport(model, g, y);
                const Eigen::VectorXd fact = assemble_transport_factored(model, g, y);
                for (Eigen::Index k = 0; k < direct.size(); ++k)
                    CHECK(std::abs(direct[k] - fact[k]) <= 1e-12 * (1.0 + std::abs(direct[k])));
                ++checked;
            }
        }
    }
    CHECK(checked == 1000);
}

TEST_CASE("analytic Jacobian matches central finite differences") {
    std::mt19937_64 rng(5);
    const auto line = build_line(6, 1.0, 1.0, BoundaryKind::NeumannGhost, BoundaryKind::Free);
    const auto hex = build_hex_grid(3, 4, 1.0);
    const auto vor = build_voronoi_disc(14, 6.0, 2);
    for (const TissueGraph* g : {&line, &hex, &vor}) {
        for (const ModelKind kind : {ModelKind::Smith, ModelKind::Chitwood}) {
            const auto params = kind == ModelKind::Smith ? paper_smith(0.9, 0.6) : paper_chitwood(0.9, 0.6);
            const auto model = make_model(kind, params);
            for (int s = 0; s < 4; ++s) {
                const Eigen::VectorXd y = testutil::random_state(rng, 2 * g->n);
                const Eigen::MatrixXd A(assemble_jacobian(model, *g, y));
                const Eigen::MatrixXd F = testutil::fd_jacobian(model, *g, y);
                const double denom = std::max(1.0, F.cwiseAbs().maxCoeff());
                CHECK((A - F).cwiseAbs().maxCoeff() / denom < 1e-6);
            }
        }
    }
}

TEST_CASE("directional derivative converges at order >= 1.9") {
    const auto g = build_line(8, 1.0, 1.0, BoundaryKind::NeumannGhost, BoundaryKind::Free);
    const auto model = smith_model(paper_smith(1.2, 0.8));
    std::mt19937_64 rng(11);
    const Eigen::VectorXd y = testutil::random_state(rng, 16);
    Eigen::VectorXd d = testutil::random_state(rng, 16, -1.0, 1.0);
    d.normalize();
    const Eigen::VectorXd Jd = assemble_jacobian(model, g, y) * d;
    const Eigen::VectorXd F0 = assemble_residual(model, g, y);
    double prev_err = -1.0;
    double order_min = 10.0;
    for (int k = 0; k < 4; ++k) {
        const double h = 1e-2 / std::pow(2.0, k);
        const double err = ((assemble_residual(model, g, y + h * d) - F0) / h - Jd).norm();
        if (prev_err > 0.0) order_min = std::min(order_min, std::log2(prev_err / err));
        prev_err = err;
    }
    CHECK(order_min >= 0.9); // one-sided difference: first order in h, slope ~1 per halving
    // the defect (F(y+h d) - F(y) - h J d) itself must shrink at second order
    double prev_defect = -1.0;
    double defect_order = 10.0;
    for (int k = 0; k < 4; ++k) {
        const double h = 1e-2 / std::pow(2.0, k);
        const double defect = (assemble_residual(model, g, y + h * d) - F0 - h * Jd).norm();
        if (prev_defect > 0.0) defect_order = std::min(defect_order, std::log2(prev_defect / defect));
        prev_defect = defect;
    }
    CHECK(defect_order >= 1.9);
}

TEST_CASE("T=0, D=0 Jacobian is block diagonal") {
    const auto g = build_hex_grid(3, 3, 1.0);
    const auto model = smith_model(paper_smith(0.0, 0.0));
    std::mt19937_64 rng(13);
    const Eigen::VectorXd y = testutil::random_state(rng, 2 * g.n);
    const Eigen::MatrixXd A(assemble_jacobian(model, g, y));
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
            if (i != j) CHECK(A.block(2 * i, 2 * j, 2, 2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("transport couples second neighbours but not third") {
    const auto g = build_line(5, 1.0, 1.0, BoundaryKind::Free, BoundaryKind::Free);
    const auto model = smith_model(paper_smith(1.0, 0.0));
    std::mt19937_64 rng(17);
    const Eigen::VectorXd y = testutil::random_state(rng, 10);
    const Eigen::MatrixXd A(assemble_jacobian(model, g, y));
    // d(rhs a_0)/d a_2 != 0: the allocation sum of cell 1 sees cell 2
    CHECK(std::abs(A(0, 4)) > 1e-12);
    // beyond two hops everything is structurally zero
    CHECK(A(0, 6) == 0.0);
    CHECK(A(0, 8) == 0.0);
}

TEST_CASE("residual is invariant under (V,T,D) -> (2V,2T,2D)") {
    std::mt19937_64 rng(23);
    auto g = build_line(7, 1.0, 1.0, BoundaryKind::NeumannGhost, BoundaryKind::Free);
    const Eigen::VectorXd y = testutil::random_state(rng, 14);
    const auto m1 = smith_model(paper_smith(1.1, 0.7));
    const Eigen::VectorXd r1 = assemble_residual(m1, g, y);
    for (auto& v : g.volumes) v *= 2.0;
    g.finalize();
    auto params = paper_smith(2.2, 1.4);
    const auto m2 = smith_model(params);
    const Eigen::VectorXd r2 = assemble_residual(m2, g, y);
    CHECK((r1 - r2).lpNorm<Eigen::Infinity>() < 1e-14 * (1.0 + r1.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("frozen-PIN variant reduces to the Smith auxin equation with constant p") {
    const auto g = build_line(6, 1.0, 1.0, BoundaryKind::NeumannGhost, BoundaryKind::Free);
    auto params = paper_smith(0.8, 0.3);
    params.pin_const = 4.0;
    const auto frozen = frozen_pin_smith_model(params);
    const auto full = smith_model(params);
    std::mt19937_64 rng(29);
    const Eigen::VectorXd a = testutil::random_state(rng, 6);
    Eigen::VectorXd y2(12);
    for (int i = 0; i < 6; ++i) { y2[2 * i] = a[i]; y2[2 * i + 1] = 4.0; }
    const Eigen::VectorXd r1 = assemble_residual(frozen, g, a);
    const Eigen::VectorXd r2 = assemble_residual(full, g, y2);
    for (int i = 0; i < 6; ++i) CHECK(r1[i] == doctest::Approx(r2[2 * i]).epsilon(1e-14));
    // frozen Jacobian against finite differences
    const Eigen::MatrixXd A(assemble_jacobian(frozen, g, a));
    const Eigen::MatrixXd F = testutil::fd_jacobian(frozen, g, a);
    CHECK((A - F).cwiseAbs().maxCoeff() / std::max(1.0, F.cwiseAbs().maxCoeff()) < 1e-6);
}

TEST_CASE("model configuration errors") {
    auto no_kt = ModelParams::chitwood_defaults(); // kappa_T unset
    CHECK_THROWS_AS(smith_model(no_kt), ConfigError);
    auto no_c2 = ModelParams::smith_defaults();
    CHECK_THROWS_AS(chitwood_model(no_c2), ConfigError);
    CHECK_THROWS_AS(frozen_pin_smith_model(ModelParams::smith_defaults()), ConfigError);

    const ModelParams base = ModelParams::smith_defaults();
    CHECK_THROWS_AS(params_from_kv_text("bogus_key = 1.0", base), ConfigError);
    CHECK_THROWS_AS(params_from_kv_text("rho_IAA = not_a_number", base), ConfigError);
    const ModelParams ok = params_from_kv_text("rho_IAA = 1.5 # production\nD=1\nT = 0.25", base);
    CHECK(ok.rho_IAA == 1.5);
    CHECK(ok.D == 1.0);
    CHECK(ok.T == 0.25);
}

TEST_CASE("non-finite states raise an evaluation error") {
    const auto g = build_line(4, 1.0, 1.0, BoundaryKind::Free, BoundaryKind::Free);
    const auto model = smith_model(paper_smith(1.0, 0.0));
    Eigen::VectorXd y = Eigen::VectorXd::Constant(8, 1.0);
    y[2] = 1e4; // exp(c1 * 1e4) overflows the allocation sum
    CHECK_THROWS_AS(assemble_residual(model, g, y), NumericalError);
}

TEST_CASE("shape mismatch raises ShapeError") {
    const auto g = build_line(4, 1.0, 1.0, BoundaryKind::Free, BoundaryKind::Free);
    const auto model = smith_model(paper_smith());
    CHECK_THROWS_AS(assemble_residual(model, g, Eigen::VectorXd::Ones(7)), ShapeError);
}

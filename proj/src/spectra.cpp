#include "meristem/spectra.hpp"
#include "meristem/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <random>

namespace meristem {

std::string SpectrumReport::classification() const {
    if (stable()) return "stable";
    return "unstable(" + std::to_string(n_unstable_real) + "," + std::to_string(n_unstable_pairs) + ")";
}

namespace {

void sort_by_real_desc(Eigen::VectorXcd& vals, std::vector<Eigen::VectorXcd>* vecs) {
    std::vector<int> idx(vals.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (vals[a].real() != vals[b].real()) return vals[a].real() > vals[b].real();
        return vals[a].imag() > vals[b].imag();
    });
    Eigen::VectorXcd sv(vals.size());
    std::vector<Eigen::VectorXcd> svec;
    if (vecs) svec.resize(vecs->size() ? vals.size() : 0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        sv[static_cast<Eigen::Index>(i)] = vals[idx[i]];
        if (vecs && !vecs->empty()) svec[i] = (*vecs)[idx[i]];
    }
    vals = std::move(sv);
    if (vecs && !vecs->empty()) *vecs = std::move(svec);
}

void classify(SpectrumReport& rep, double thr) {
    rep.n_unstable_real = 0;
    rep.n_unstable_pairs = 0;
    for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i) {
        const auto& l = rep.eigenvalues[i];
        if (l.real() <= thr) continue;
        if (std::abs(l.imag()) <= thr) ++rep.n_unstable_real;
        else if (l.imag() > thr) ++rep.n_unstable_pairs; // count each conjugate pair once
    }
}

SpectrumReport dense_spectrum(const Eigen::SparseMatrix<double>& J, const SpectrumSettings& st) {
    const Eigen::MatrixXd A(J);
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, st.want_vectors);
    if (es.info() != Eigen::Success)
        throw NumericalError("dense eigenvalue solver failed to converge");
    SpectrumReport rep;
    rep.full = true;
    rep.eigenvalues = es.eigenvalues();
    std::vector<Eigen::VectorXcd> vecs;
    if (st.want_vectors) {
        vecs.resize(rep.eigenvalues.size());
        for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i)
            vecs[static_cast<std::size_t>(i)] = es.eigenvectors().col(i);
    }
    sort_by_real_desc(rep.eigenvalues, st.want_vectors ? &vecs : nullptr);
    if (st.want_vectors) {
        for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i) {
            if (std::abs(rep.eigenvalues[i].real()) < st.vector_window) {
                rep.vector_index.push_back(static_cast<int>(i));
                rep.eigenvectors.push_back(std::move(vecs[static_cast<std::size_t>(i)]));
            }
        }
    }
    classify(rep, st.zero_threshold);
    return rep;
}

// Shift-invert Arnoldi for the k rightmost eigenvalues, reusing one sparse
// factorisation of (J - shift I).
SpectrumReport arnoldi_rightmost_once(const Eigen::SparseMatrix<double>& J,
                                      const SpectrumSettings& st, int mdim) {
    const Eigen::Index N = J.rows();
    const int k = std::min<Eigen::Index>(st.k, N);

    Eigen::SparseMatrix<double> A = J;
    for (Eigen::Index i = 0; i < N; ++i) A.coeffRef(i, i) -= st.shift;
    A.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success)
        throw SingularError("shift-invert factorisation failed (shift hits an eigenvalue?)");

    std::mt19937_64 rng(20240917ull);
    Eigen::VectorXd b(N);
    for (Eigen::Index i = 0; i < N; ++i) b[i] = ((rng() >> 16) & 1) ? 1.0 : -1.0;
    b.normalize();

    Eigen::MatrixXd V(N, mdim + 1);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(mdim + 1, mdim);
    V.col(0) = b;
    int built = 0;
    for (int j = 0; j < mdim; ++j) {
        Eigen::VectorXd w = lu.solve(V.col(j));
        for (int pass = 0; pass < 2; ++pass) { // two-pass reorthogonalisation
            for (int i = 0; i <= j; ++i) {
                const double h = V.col(i).dot(w);
                H(i, j) += h;
                w -= h * V.col(i);
            }
        }
        const double beta = w.norm();
        H(j + 1, j) = beta;
        built = j + 1;
        if (beta < 1e-14) break; // lucky breakdown: exact invariant subspace
        V.col(j + 1) = w / beta;
    }

    Eigen::EigenSolver<Eigen::MatrixXd> es(H.topLeftCorner(built, built), true);
    if (es.info() != Eigen::Success)
        throw NumericalError("Arnoldi Hessenberg eigensolve failed");

    struct Ritz {
        std::complex<double> lambda;
        Eigen::VectorXcd y;
    };
    std::vector<Ritz> ritz;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const std::complex<double> theta = es.eigenvalues()[i];
        if (std::abs(theta) < 1e-300) continue;
        ritz.push_back({st.shift + 1.0 / theta, es.eigenvectors().col(i)});
    }
    std::sort(ritz.begin(), ritz.end(), [](const Ritz& a, const Ritz& b) {
        if (a.lambda.real() != b.lambda.real()) return a.lambda.real() > b.lambda.real();
        return a.lambda.imag() > b.lambda.imag();
    });
    if (static_cast<int>(ritz.size()) > k) ritz.resize(k);

    SpectrumReport rep;
    rep.full = false;
    rep.eigenvalues.resize(static_cast<Eigen::Index>(ritz.size()));
    const Eigen::MatrixXd Vb = V.leftCols(built);
    bool all_ok = true;
    for (std::size_t i = 0; i < ritz.size(); ++i) {
        rep.eigenvalues[static_cast<Eigen::Index>(i)] = ritz[i].lambda;
        Eigen::VectorXcd x = Vb * ritz[i].y;
        const double xn = x.norm();
        if (xn > 0) x /= xn;
        const Eigen::VectorXcd r = J.cast<std::complex<double>>() * x - ritz[i].lambda * x;
        if (r.norm() > 1e-7) all_ok = false;
        if (st.want_vectors) {
            rep.vector_index.push_back(static_cast<int>(i));
            rep.eigenvectors.push_back(std::move(x));
        }
    }
    rep.converged = all_ok;
    if (!all_ok) rep.warning = "rightmost-k iteration returned unconverged Ritz pairs";
    classify(rep, st.zero_threshold);
    return rep;
}

SpectrumReport arnoldi_rightmost(const Eigen::SparseMatrix<double>& J, const SpectrumSettings& st) {
    const Eigen::Index N = J.rows();
    int mdim = static_cast<int>(std::min<Eigen::Index>(N, std::max(40, 4 * st.k)));
    SpectrumReport rep = arnoldi_rightmost_once(J, st, mdim);
    // one retry with a doubled subspace; at mdim = N the Krylov space is exact
    if (!rep.converged && mdim < N) {
        mdim = static_cast<int>(std::min<Eigen::Index>(N, 2 * mdim));
        rep = arnoldi_rightmost_once(J, st, mdim);
    }
    return rep;
}

} // namespace

SpectrumReport spectrum_of_matrix(const Eigen::SparseMatrix<double>& J, SpectrumMode mode,
                                  const SpectrumSettings& settings) {
    if (J.rows() != J.cols()) throw ShapeError("spectrum: matrix is not square");
    if (mode == SpectrumMode::Full && J.rows() <= settings.dense_cap) return dense_spectrum(J, settings);
    return arnoldi_rightmost(J, settings);
}

SpectrumReport spectrum(const ModelDefinition& model, const TissueGraph& tissue,
                        const Eigen::VectorXd& state, SpectrumMode mode,
                        const SpectrumSettings& settings) {
    SpectrumReport rep = spectrum_of_matrix(assemble_jacobian(model, tissue, state), mode, settings);
    const double r = assemble_residual(model, tissue, state).lpNorm<Eigen::Infinity>();
    if (r > 1e-8) {
        if (!rep.warning.empty()) rep.warning += "; ";
        rep.warning += "state is not a converged steady state (residual " + std::to_string(r) + ")";
    }
    return rep;
}

StabilityCount count_unstable(const Eigen::SparseMatrix<double>& J, int dense_cap, int k,
                              double zero_threshold) {
    StabilityCount out;
    try {
        SpectrumSettings st;
        st.dense_cap = dense_cap;
        st.k = k;
        st.zero_threshold = zero_threshold;
        st.want_vectors = false;
        const SpectrumReport rep = spectrum_of_matrix(
            J, J.rows() <= dense_cap ? SpectrumMode::Full : SpectrumMode::RightmostK, st);
        out.n_real = rep.n_unstable_real;
        out.n_pairs = rep.n_unstable_pairs;
        out.ok = rep.full || rep.converged;
    } catch (const std::exception&) {
        out.ok = false;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hopf detection along a branch
// ---------------------------------------------------------------------------

namespace {

int pair_count(const ContinuableSystem& sys, const Eigen::VectorXd& y, double p,
               const SpectrumSettings& st) {
    SpectrumSettings s = st;
    s.want_vectors = false;
    const SpectrumReport rep = spectrum_of_matrix(
        sys.jacobian(y, p), sys.size() <= st.dense_cap ? SpectrumMode::Full : SpectrumMode::RightmostK, s);
    return rep.n_unstable_pairs;
}

} // namespace

std::vector<HopfEvent> detect_hopf(const Branch& branch, const ContinuableSystem& sys,
                                   const ContinuationSettings& csettings,
                                   const SpectrumSettings& ssettings) {
    std::vector<HopfEvent> events;
    if (branch.points.size() < 2) return events;

    // unstable complex-pair counts along the branch
    std::vector<int> pairs(branch.points.size());
    for (std::size_t i = 0; i < branch.points.size(); ++i) {
        const BranchPoint& pt = branch.points[i];
        if (pt.stability != Stability::Unknown) pairs[i] = pt.n_unstable_pairs;
        else pairs[i] = pair_count(sys, pt.state, pt.param, ssettings);
    }

    const Eigen::Index N = sys.size();
    const double w = 1.0 / static_cast<double>(N);

    for (std::size_t k = 0; k + 1 < branch.points.size(); ++k) {
        if (pairs[k] == pairs[k + 1]) continue;

        const BranchPoint& a = branch.points[k];
        const BranchPoint& b = branch.points[k + 1];
        const double span = std::sqrt(w * (b.state - a.state).squaredNorm() +
                                      (b.param - a.param) * (b.param - a.param));

        // bisection in arclength, re-solving steady states on the branch
        double lo = 0.0, hi = span;
        double T_lo = a.param, T_hi = b.param;
        int c_lo = pairs[k];
        Eigen::VectorXd y_hi = b.state;
        double p_hi = b.param;
        for (int it = 0; it < 60 && std::abs(T_hi - T_lo) >= 1e-3; ++it) {
            const double mid = 0.5 * (lo + hi);
            auto pt = continuation_step(sys, a, mid, csettings);
            if (!pt) break;
            const int c_mid = pair_count(sys, pt->state, pt->param, ssettings);
            if (c_mid == c_lo) {
                lo = mid;
                T_lo = pt->param;
            } else {
                hi = mid;
                T_hi = pt->param;
                y_hi = pt->state;
                p_hi = pt->param;
            }
        }

        HopfEvent ev;
        ev.at_index = static_cast<int>(k);
        ev.T_c = 0.5 * (T_lo + T_hi);
        ev.pair_delta = pairs[k + 1] - pairs[k];

        // frequency and eigenfunction from the destabilised side of the bracket
        SpectrumSettings sv = ssettings;
        sv.want_vectors = true;
        sv.vector_window = 1e30; // keep everything, we select below
        const SpectrumReport rep = spectrum_of_matrix(
            sys.jacobian(y_hi, p_hi), N <= ssettings.dense_cap ? SpectrumMode::Full : SpectrumMode::RightmostK, sv);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t vi = 0; vi < rep.vector_index.size(); ++vi) {
            const auto lam = rep.eigenvalues[rep.vector_index[vi]];
            if (lam.imag() <= ssettings.zero_threshold) continue; // fold-related real crossing
            if (std::abs(lam.real()) < best) {
                best = std::abs(lam.real());
                ev.omega = std::abs(lam.imag());
                ev.eigenfunction = rep.eigenvectors[vi];
            }
        }
        events.push_back(std::move(ev));
    }
    return events;
}

std::vector<HopfEvent> detect_hopf(const Branch& branch, const ModelDefinition& model,
                                   const TissueGraph& tissue,
                                   const ContinuationSettings& csettings,
                                   const SpectrumSettings& ssettings) {
    const ModelSystem sys(model, tissue, branch.param_name.empty() ? "T" : branch.param_name);
    return detect_hopf(branch, sys, csettings, ssettings);
}

Eigen::VectorXd hopf_eigenfunction_profile(const HopfEvent& event, int m) {
    if (event.eigenfunction.size() == 0) return Eigen::VectorXd();
    const Eigen::Index n = event.eigenfunction.size() / m;
    Eigen::VectorXd mag(n);
    for (Eigen::Index i = 0; i < n; ++i) mag[i] = std::abs(event.eigenfunction[i * m]);
    const double mx = mag.maxCoeff();
    if (mx > 0) mag /= mx;
    return mag;
}

} // namespace meristem

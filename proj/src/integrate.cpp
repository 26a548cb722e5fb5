#include "meristem/integrate.hpp"
#include "meristem/errors.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace meristem {

namespace {

constexpr double kGamma = 2.0 - 1.4142135623730951; // 2 - sqrt(2)

// quadrature weights on nodes {0, gamma, 1} with degree-2 precision; the
// difference to the TR-BDF2 update is an asymptotically correct local error
// estimate
struct ErrWeights {
    double b1, b2, b3;
    ErrWeights() {
        b2 = (1.0 / 6.0) / (kGamma * (1.0 - kGamma));
        b3 = 0.5 - kGamma * b2;
        b1 = 1.0 - b2 - b3;
    }
};

struct StageSolver {
    const ModelDefinition& model;
    const TissueGraph& tissue;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    Eigen::SparseMatrix<double> identity;
    double factored_coeff = -1.0;

    StageSolver(const ModelDefinition& m, const TissueGraph& g, Eigen::Index n)
        : model(m), tissue(g) {
        identity.resize(n, n);
        identity.setIdentity();
    }

    // factor I - c*J(y)
    bool factor(const Eigen::VectorXd& y, double c) try {
        Eigen::SparseMatrix<double> A = identity - c * assemble_jacobian(model, tissue, y);
        A.makeCompressed();
        lu.compute(A);
        factored_coeff = c;
        return lu.info() == Eigen::Success;
    } catch (const NumericalError&) {
        return false;
    }

    // solve u - c*F(u) = rhs by modified Newton with the current factorisation
    bool solve_stage(Eigen::VectorXd& u, const Eigen::VectorXd& rhs, double c, double scale_tol,
                     int max_iters) try {
        for (int it = 0; it < max_iters; ++it) {
            const Eigen::VectorXd F = assemble_residual(model, tissue, u);
            if (!F.allFinite()) return false;
            const Eigen::VectorXd G = u - c * F - rhs;
            const Eigen::VectorXd du = lu.solve(-G);
            if (!du.allFinite()) return false;
            u += du;
            if (du.lpNorm<Eigen::Infinity>() < scale_tol) return true;
        }
        return false;
    } catch (const NumericalError&) {
        return false;
    }
};

} // namespace

Trajectory integrate(const ModelDefinition& model, const TissueGraph& tissue,
                     const Eigen::VectorXd& y0, double t0, double t1,
                     const IntegratorSettings& st) {
    if (!(t1 > t0)) throw ConfigError("integrate: need t1 > t0");
    if (!y0.allFinite()) throw ConfigError("integrate: initial state is not finite");
    const Eigen::Index N = y0.size();
    if (N != static_cast<Eigen::Index>(model.m) * tissue.n)
        throw ShapeError("integrate: state length mismatch");

    const ErrWeights W;
    Trajectory traj;
    traj.min_component = y0.minCoeff();

    double t = t0;
    Eigen::VectorXd y = y0;
    Eigen::VectorXd f = assemble_residual(model, tissue, y);
    double h = st.fixed_step ? st.h_fixed : std::min(st.h0, t1 - t0);

    traj.samples.push_back({t, y});
    StageSolver solver(model, tissue, N);
    long since_stored = 0;

    while (t < t1 && traj.steps + traj.rejected < st.max_steps) {
        h = std::min(h, t1 - t);
        const double c = kGamma * h / 2.0; // both stages share this coefficient

        bool ok = solver.factor(y, c);
        Eigen::VectorXd u = y, v = y;
        Eigen::VectorXd fu(N), fv(N);
        if (ok) {
            // TR stage to t + gamma*h
            const Eigen::VectorXd rhs_tr = y + c * f;
            const double newton_tol = 0.05 * (st.atol + st.rtol * y.lpNorm<Eigen::Infinity>());
            u = y + kGamma * h * f; // explicit predictor
            ok = solver.solve_stage(u, rhs_tr, c, newton_tol, st.newton_max_iters);
            if (ok) {
                // BDF2 stage across [t, t+h]
                const double a_u = 1.0 / (kGamma * (2.0 - kGamma));
                const double a_y = -(1.0 - kGamma) * (1.0 - kGamma) / (kGamma * (2.0 - kGamma));
                const Eigen::VectorXd rhs_bdf = a_u * u + a_y * y;
                v = u;
                ok = solver.solve_stage(v, rhs_bdf, c, newton_tol, st.newton_max_iters);
            }
        }

        double err = 0.0;
        if (ok) {
            try {
                fu = assemble_residual(model, tissue, u);
                fv = assemble_residual(model, tissue, v);
            } catch (const NumericalError&) {
                ok = false;
            }
            ok = ok && fu.allFinite() && fv.allFinite() && v.allFinite();
            if (ok) {
                Eigen::VectorXd est = h * (W.b1 * f + W.b2 * fu + W.b3 * fv) - (v - y);
                est = solver.lu.solve(est); // stiffness-damped estimate
                double acc = 0.0;
                for (Eigen::Index i = 0; i < N; ++i) {
                    const double sc = st.atol + st.rtol * std::max(std::abs(y[i]), std::abs(v[i]));
                    const double e = est[i] / sc;
                    acc += e * e;
                }
                err = std::sqrt(acc / static_cast<double>(N));
            }
        }

        if (st.fixed_step ? ok : (ok && err <= 1.0)) {
            t += h;
            y = v;
            f = fv;
            ++traj.steps;
            traj.min_component = std::min(traj.min_component, y.minCoeff());
            if (++since_stored >= st.store_every || t >= t1) {
                traj.samples.push_back({t, y});
                since_stored = 0;
            }
            if (!st.fixed_step) {
                const double fac = std::clamp(0.9 * std::pow(std::max(err, 1e-10), -1.0 / 3.0), 0.2, 5.0);
                h = std::min(h * fac, st.h_max);
            }
        } else {
            ++traj.rejected;
            if (!ok) {
                if (!v.allFinite() || (fu.size() && !fu.allFinite()))
                    traj.nonfinite_event_times.push_back(t);
                h *= 0.25;
            } else {
                const double fac = std::clamp(0.9 * std::pow(err, -1.0 / 3.0), 0.1, 0.5);
                h *= fac;
            }
            if (st.fixed_step || h < st.h_min) {
                traj.abort_reason = st.fixed_step ? "stage solve failed in fixed-step mode"
                                                  : "step-size underflow";
                traj.negativity_flagged = traj.min_component < st.negativity_threshold;
                return traj; // last valid state is in samples.back()
            }
        }
    }

    if (t < t1) {
        traj.abort_reason = "max step count reached";
    } else {
        traj.completed = true;
    }
    traj.negativity_flagged = traj.min_component < st.negativity_threshold;
    return traj;
}

// ---------------------------------------------------------------------------
// Periodic state extraction
// ---------------------------------------------------------------------------

namespace {

// vertex of the parabola through three (t, s) samples (nonuniform spacing)
double parabola_peak_time(double t0, double s0, double t1, double s1, double t2, double s2) {
    const double d1 = t1 - t0, d2 = t2 - t1;
    const double num = d1 * d1 * (s1 - s2) - d2 * d2 * (s1 - s0);
    const double den = d1 * (s1 - s2) + d2 * (s1 - s0);
    if (den == 0.0) return t1;
    return t1 + 0.5 * num / den;
}

} // namespace

PeriodicStateResult find_periodic_state(const ModelDefinition& model, const TissueGraph& tissue,
                                        const Eigen::VectorXd& init, const PeriodicSettings& ps) {
    PeriodicStateResult res;
    const int m = model.m;
    const int obs_cell = ps.observe_cell >= 0 ? ps.observe_cell : tissue.n - 1;
    res.period.observable = "a[" + std::to_string(obs_cell) + "]";

    // burn in (discard the transient)
    IntegratorSettings burn = ps.integrator;
    burn.store_every = 1 << 20; // keep endpoints only
    Trajectory pre = integrate(model, tissue, init, 0.0, ps.burn_in, burn);
    if (!pre.completed) {
        res.message = "burn-in integration failed: " + pre.abort_reason;
        return res;
    }

    // measurement window with dense output
    IntegratorSettings meas = ps.integrator;
    meas.store_every = 1;
    meas.h_max = std::min(meas.h_max, 5.0); // resolve the oscillation shape
    double window = ps.window;
    Trajectory win = integrate(model, tissue, pre.final_state(), ps.burn_in, ps.burn_in + window, meas);
    if (!win.completed) {
        res.message = "window integration failed: " + win.abort_reason;
        return res;
    }

    auto observable = [&](const Eigen::VectorXd& y) { return y[obs_cell * m]; };

    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto& S = win.samples;
        std::vector<double> tt(S.size()), ss(S.size());
        for (std::size_t i = 0; i < S.size(); ++i) {
            tt[i] = S[i].t;
            ss[i] = observable(S[i].state);
        }
        const double smax = *std::max_element(ss.begin(), ss.end());
        const double smin = *std::min_element(ss.begin(), ss.end());
        const double mid = 0.5 * (smax + smin);
        if (smax - smin < ps.min_relative_amplitude * std::max(1e-30, std::abs(mid))) {
            res.message = "no oscillation detected (observable variance below threshold)";
            return res;
        }

        // interior maxima above the midline
        std::vector<double> peaks;
        for (std::size_t i = 1; i + 1 < ss.size(); ++i) {
            if (ss[i] >= ss[i - 1] && ss[i] > ss[i + 1] && ss[i] > mid)
                peaks.push_back(parabola_peak_time(tt[i - 1], ss[i - 1], tt[i], ss[i], tt[i + 1], ss[i + 1]));
        }

        if (peaks.size() >= 3) {
            std::vector<double> gaps;
            for (std::size_t i = 1; i < peaks.size(); ++i) gaps.push_back(peaks[i] - peaks[i - 1]);
            const double mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / gaps.size();
            const double gmax = *std::max_element(gaps.begin(), gaps.end());
            const double gmin = *std::min_element(gaps.begin(), gaps.end());
            res.found = true;
            res.period.period = mean;
            res.period.spread = (gmax - gmin) / mean;
            res.period.cycles = static_cast<int>(gaps.size());

            // one cycle anchored just before the last observable peak
            const double t_hi = peaks.back();
            const double t_lo = t_hi - mean;
            const double lead = 0.02 * mean;
            std::vector<TrajectorySample> cycle;
            for (const auto& s : S)
                if (s.t >= t_lo - lead && s.t <= t_hi + lead) cycle.push_back(s);
            res.cycle.samples = cycle;
            res.cycle.completed = true;

            // per-cell peak times and amplitudes within the cycle
            res.peak_times.assign(tissue.n, 0.0);
            res.amplitudes.assign(tissue.n, 0.0);
            for (int cell = 0; cell < tissue.n; ++cell) {
                double best = -std::numeric_limits<double>::infinity();
                double worst = std::numeric_limits<double>::infinity();
                std::size_t bi = 0;
                for (std::size_t i = 0; i < cycle.size(); ++i) {
                    const double val = cycle[i].state[cell * m];
                    if (val > best) { best = val; bi = i; }
                    worst = std::min(worst, val);
                }
                res.amplitudes[cell] = best - worst;
                if (bi > 0 && bi + 1 < cycle.size())
                    res.peak_times[cell] = parabola_peak_time(
                        cycle[bi - 1].t, cycle[bi - 1].state[cell * m], cycle[bi].t,
                        cycle[bi].state[cell * m], cycle[bi + 1].t, cycle[bi + 1].state[cell * m]);
                else
                    res.peak_times[cell] = cycle.empty() ? 0.0 : cycle[bi].t;
            }
            return res;
        }

        // too few cycles seen: extend the window once
        if (attempt == 0) {
            Trajectory more = integrate(model, tissue, win.final_state(), win.final_time(),
                                        win.final_time() + 2.0 * window, meas);
            if (!more.completed) {
                res.message = "window extension failed: " + more.abort_reason;
                return res;
            }
            win.samples.insert(win.samples.end(), more.samples.begin() + 1, more.samples.end());
            window *= 3.0;
        }
    }

    res.message = "fewer than 3 oscillation maxima in the measurement window";
    return res;
}

} // namespace meristem

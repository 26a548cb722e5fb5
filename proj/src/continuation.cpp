#include "meristem/continuation.hpp"
#include "meristem/asymptotics.hpp"
#include "meristem/errors.hpp"
#include "meristem/spectra.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <future>
#include <sstream>

namespace meristem {

std::string to_string(Stability s) {
    switch (s) {
        case Stability::Stable: return "stable";
        case Stability::Unstable: return "unstable";
        case Stability::Unknown: return "unknown";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// ModelSystem
// ---------------------------------------------------------------------------

ModelSystem::ModelSystem(ModelDefinition model, const TissueGraph& tissue, std::string param_name)
    : model_(std::move(model)), tissue_(&tissue), param_name_(std::move(param_name)) {
    model_.params.get(param_name_); // validate the name early
}

Eigen::Index ModelSystem::size() const {
    return static_cast<Eigen::Index>(model_.m) * tissue_->n;
}

ModelDefinition ModelSystem::at(double p) const {
    ModelParams mp = model_.params;
    mp.set(param_name_, p);
    return model_.with_params(mp);
}

Eigen::VectorXd ModelSystem::residual(const Eigen::VectorXd& y, double p) const {
    return assemble_residual(at(p), *tissue_, y);
}

Eigen::SparseMatrix<double> ModelSystem::jacobian(const Eigen::VectorXd& y, double p) const {
    return assemble_jacobian(at(p), *tissue_, y);
}

Eigen::VectorXd ModelSystem::dresidual_dparam(const Eigen::VectorXd& y, double p) const {
    if (param_name_ == "T") return assemble_transport(at(p), *tissue_, y); // exact
    const double h = 1e-6 * (1.0 + std::abs(p));
    return (residual(y, p + h) - residual(y, p - h)) / (2.0 * h);
}

double ModelSystem::measure(const Eigen::VectorXd& y) const {
    return auxin_norm(model_, y);
}

// ---------------------------------------------------------------------------
// Newton
// ---------------------------------------------------------------------------

NewtonResult newton_solve(const ContinuableSystem& sys, const Eigen::VectorXd& initial, double p,
                          const NewtonSettings& settings) {
    NewtonResult res;
    res.state = initial;
    if (!initial.allFinite()) {
        res.message = "initial state is not finite";
        return res;
    }
    Eigen::VectorXd F = sys.residual(res.state, p);
    double fnorm = F.lpNorm<Eigen::Infinity>();
    Eigen::VectorXd best = res.state;
    double best_norm = fnorm;

    for (int it = 0; it < settings.max_iters; ++it) {
        if (fnorm < settings.tol_residual) {
            res.converged = true;
            res.iterations = it;
            res.residual_norm = fnorm;
            return res;
        }
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(sys.jacobian(res.state, p));
        if (lu.info() != Eigen::Success)
            throw SingularError("newton_solve: singular Jacobian at iteration " + std::to_string(it));
        const Eigen::VectorXd d = lu.solve(-F);

        double lambda = 1.0;
        Eigen::VectorXd y_try;
        Eigen::VectorXd F_try;
        double fn_try = 0.0;
        for (int h = 0; h <= settings.max_damping; ++h) {
            y_try = res.state + lambda * d;
            try {
                F_try = sys.residual(y_try, p);
                fn_try = F_try.allFinite() ? F_try.lpNorm<Eigen::Infinity>()
                                           : std::numeric_limits<double>::infinity();
            } catch (const NumericalError&) {
                fn_try = std::numeric_limits<double>::infinity();
            }
            if (fn_try < fnorm || fn_try < settings.tol_residual) break;
            lambda *= 0.5;
        }
        if (!std::isfinite(fn_try)) {
            res.state = best;
            res.residual_norm = best_norm;
            res.message = "iterates left the admissible region (non-finite evaluation)";
            return res;
        }
        const double step = (lambda * d).lpNorm<Eigen::Infinity>();
        res.state = y_try;
        F = F_try;
        fnorm = fn_try;
        res.iterations = it + 1;
        if (fnorm < best_norm) { best = res.state; best_norm = fnorm; }
        if (step < settings.tol_step * (1.0 + res.state.lpNorm<Eigen::Infinity>()) &&
            fnorm >= settings.tol_residual)
            break; // stalled
    }
    if (fnorm < settings.tol_residual) {
        res.converged = true;
        res.residual_norm = fnorm;
        return res;
    }
    res.state = best;
    res.residual_norm = best_norm;
    std::ostringstream os;
    os << "no convergence after " << res.iterations << " iterations (residual " << best_norm << ")";
    res.message = os.str();
    return res;
}

NewtonResult newton_solve(const ModelDefinition& model, const TissueGraph& tissue,
                          const Eigen::VectorXd& initial, const NewtonSettings& settings) {
    const ModelSystem sys(model, tissue, "T");
    return newton_solve(sys, initial, model.params.T, settings);
}

// ---------------------------------------------------------------------------
// Pseudo-arclength machinery. The extended metric scales state components by
// 1/sqrt(N) so that measure growth does not starve the parameter component.
// ---------------------------------------------------------------------------

namespace {

struct Extended {
    double w; // state weight 1/N

    double inner(const Eigen::VectorXd& ay, double ap, const Eigen::VectorXd& by, double bp) const {
        return w * ay.dot(by) + ap * bp;
    }
    double norm(const Eigen::VectorXd& y, double p) const {
        return std::sqrt(std::max(0.0, inner(y, p, y, p)));
    }
};

// Unit tangent at (y, p) oriented along prev = (prev_y, prev_p).
std::optional<Eigen::VectorXd> tangent_at(const ContinuableSystem& sys, const Eigen::VectorXd& y,
                                          double p, const Eigen::VectorXd& prev, const Extended& ext) try {
    const Eigen::Index N = sys.size();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(sys.jacobian(y, p));
    if (lu.info() != Eigen::Success) return std::nullopt;
    const Eigen::VectorXd v = lu.solve(-sys.dresidual_dparam(y, p)); // dy/dp direction
    const double denom = ext.inner(prev.head(N), prev[N], v, 1.0);
    if (!std::isfinite(denom) || std::abs(denom) < 1e-14) return std::nullopt; // orientation ambiguity
    const double tp = 1.0 / denom;
    Eigen::VectorXd t(N + 1);
    t.head(N) = tp * v;
    t[N] = tp;
    const double nrm = ext.norm(t.head(N), t[N]);
    if (!(nrm > 0.0) || !std::isfinite(nrm)) return std::nullopt;
    t /= nrm;
    return t;
} catch (const NumericalError&) {
    return std::nullopt;
}

struct CorrectorResult {
    Eigen::VectorXd y;
    double p = 0.0;
    int iterations = 0;
    double residual_norm = 0.0;
};

// Newton on the bordered system {F(y,p) = 0, <t, (y,p)-(y0,p0)> - ds = 0},
// solved by block elimination reusing one sparse factorisation per iteration.
std::optional<CorrectorResult> correct(const ContinuableSystem& sys, const Eigen::VectorXd& y0,
                                       double p0, const Eigen::VectorXd& tangent, double ds,
                                       const ContinuationSettings& cs, const Extended& ext) try {
    const Eigen::Index N = sys.size();
    const Eigen::VectorXd ty = tangent.head(N);
    const double tp = tangent[N];

    CorrectorResult out;
    out.y = y0 + ds * ty;
    out.p = p0 + ds * tp;

    for (int it = 0; it < cs.corrector_max_iters; ++it) {
        const Eigen::VectorXd F = sys.residual(out.y, out.p);
        if (!F.allFinite()) return std::nullopt;
        const double fnorm = F.lpNorm<Eigen::Infinity>();
        const double c = ext.inner(ty, tp, out.y - y0, out.p - p0) - ds;
        if (fnorm < cs.newton.tol_residual && std::abs(c) < cs.newton.tol_step + 1e-14) {
            out.iterations = it;
            out.residual_norm = fnorm;
            return out;
        }
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(sys.jacobian(out.y, out.p));
        if (lu.info() != Eigen::Success) return std::nullopt;
        const Eigen::VectorXd z1 = lu.solve(-F);
        const Eigen::VectorXd z2 = lu.solve(-sys.dresidual_dparam(out.y, out.p));
        const double denom = ext.w * ty.dot(z2) + tp;
        if (!std::isfinite(denom) || std::abs(denom) < 1e-14) return std::nullopt;
        const double dp = -(c + ext.w * ty.dot(z1)) / denom;
        out.y += z1 + dp * z2;
        out.p += dp;
        if (!out.y.allFinite() || !std::isfinite(out.p)) return std::nullopt;
    }
    // final check after the loop
    const Eigen::VectorXd F = sys.residual(out.y, out.p);
    const double fnorm = F.lpNorm<Eigen::Infinity>();
    const double c = ext.inner(ty, tp, out.y - y0, out.p - p0) - ds;
    if (fnorm < cs.newton.tol_residual && std::abs(c) < cs.newton.tol_step + 1e-14) {
        out.iterations = cs.corrector_max_iters;
        out.residual_norm = fnorm;
        return out;
    }
    return std::nullopt;
} catch (const NumericalError&) {
    return std::nullopt; // iterate left the admissible region; caller halves ds
}

void classify_point(const ContinuableSystem& sys, BranchPoint& pt, const ContinuationSettings& cs) {
    const StabilityCount sc = count_unstable(sys.jacobian(pt.state, pt.param),
                                             cs.dense_spectrum_cap, cs.rightmost_k);
    if (!sc.ok) {
        pt.stability = Stability::Unknown;
        return;
    }
    pt.n_unstable_real = sc.n_real;
    pt.n_unstable_pairs = sc.n_pairs;
    pt.stability = (sc.n_real == 0 && sc.n_pairs == 0) ? Stability::Stable : Stability::Unstable;
}

} // namespace

std::optional<BranchPoint> continuation_step(const ContinuableSystem& sys, const BranchPoint& from,
                                             double ds, const ContinuationSettings& settings) {
    const Extended ext{1.0 / static_cast<double>(sys.size())};
    auto cr = correct(sys, from.state, from.param, from.tangent, ds, settings, ext);
    if (!cr) return std::nullopt;
    auto t = tangent_at(sys, cr->y, cr->p, from.tangent, ext);
    if (!t) return std::nullopt;
    BranchPoint pt;
    pt.param = cr->p;
    pt.state = std::move(cr->y);
    pt.measure = sys.measure(pt.state);
    pt.tangent = std::move(*t);
    pt.corrector_iterations = cr->iterations;
    return pt;
}

Branch continue_branch(const ContinuableSystem& sys, const Eigen::VectorXd& start,
                       const ContinuationSettings& settings) {
    const Eigen::Index N = sys.size();
    if (start.size() != N) throw ShapeError("continue_branch: start state has wrong length");
    const Extended ext{1.0 / static_cast<double>(N)};

    Branch br;
    br.param_name = settings.param_name;

    // precondition: converged start
    {
        const double r0 = sys.residual(start, settings.param_lo).lpNorm<Eigen::Infinity>();
        if (!(r0 < settings.newton.tol_residual))
            throw NumericalError("continue_branch: start state is not a converged steady state at "
                                 "the lower parameter bound (residual " + std::to_string(r0) + ")");
    }

    BranchPoint first;
    first.param = settings.param_lo;
    first.state = start;
    first.measure = sys.measure(start);
    Eigen::VectorXd e_param = Eigen::VectorXd::Zero(N + 1);
    e_param[N] = 1.0;
    first.tangent = e_param;
    if (auto t = tangent_at(sys, first.state, first.param, e_param, ext)) first.tangent = *t;
    if (settings.compute_stability) classify_point(sys, first, settings);
    br.points.push_back(std::move(first));

    double ds = settings.ds0;
    int failures_in_a_row = 0;

    while (static_cast<int>(br.points.size()) < settings.max_points) {
        const BranchPoint& cur = br.points.back();
        auto next = continuation_step(sys, cur, ds, settings);

        double cosang = 1.0;
        bool ok = next.has_value();
        if (ok) {
            // branch-continuity guard: no jumps between disconnected branches
            const double dist = ext.norm(next->state - cur.state, next->param - cur.param);
            if (dist > settings.jump_factor * ds) ok = false;
            // curvature guard: resolve folds instead of cutting across sheets
            cosang = ext.inner(cur.tangent.head(N), cur.tangent[N], next->tangent.head(N),
                               next->tangent[N]);
            if (cosang < settings.min_tangent_cos) ok = false;
        }
        if (!ok) {
            ds *= 0.5;
            ++failures_in_a_row;
            if (ds < settings.ds_min || failures_in_a_row > 60) {
                br.termination = "step-failure";
                return br;
            }
            continue;
        }
        failures_in_a_row = 0;

        BranchPoint pt = std::move(*next);
        if (settings.compute_stability &&
            (static_cast<int>(br.points.size()) % std::max(1, settings.stability_stride)) == 0)
            classify_point(sys, pt, settings);
        const double p = pt.param;
        const int iters = pt.corrector_iterations;
        br.points.push_back(std::move(pt));

        if (p > settings.param_hi || p < settings.param_lo - 1e-12) {
            br.termination = "param-bound";
            return br;
        }
        if (iters <= settings.fast_iters && cosang >= settings.grow_tangent_cos)
            ds = std::min(ds * settings.grow, settings.ds_max);
    }
    br.termination = "max-points";
    return br;
}

Branch continue_branch(const ModelDefinition& model, const TissueGraph& tissue,
                       const Eigen::VectorXd& start, const ContinuationSettings& settings) {
    const ModelSystem sys(model, tissue, settings.param_name);
    Branch br = continue_branch(sys, start, settings);
    br.model_name = to_string(model.kind);
    br.tissue_fingerprint = tissue.fingerprint();
    br.events = settings.refine_folds ? detect_folds(br, sys, settings) : detect_folds(br);
    return br;
}

// ---------------------------------------------------------------------------
// Fold detection
// ---------------------------------------------------------------------------

namespace {

double arc_distance(const BranchPoint& a, const BranchPoint& b, const Extended& ext) {
    return ext.norm(b.state - a.state, b.param - a.param);
}

// quadratic estimate of the parameter extremum between two points whose
// tangent parameter components bracket zero
double coarse_fold_param(const BranchPoint& a, const BranchPoint& b, const Extended& ext) {
    const Eigen::Index N = a.state.size();
    const double ta = a.tangent[N], tb = b.tangent[N];
    const double s = arc_distance(a, b, ext);
    if (ta == tb || s == 0.0) return 0.5 * (a.param + b.param);
    const double sstar = s * ta / (ta - tb);
    return a.param + ta * sstar + 0.5 * (tb - ta) / s * sstar * sstar;
}

} // namespace

std::vector<BranchEvent> detect_folds(const Branch& branch) {
    std::vector<BranchEvent> out;
    if (branch.points.size() < 3) return out;
    const Eigen::Index N = branch.points.front().state.size();
    const Extended ext{1.0 / static_cast<double>(N)};
    for (std::size_t k = 0; k + 1 < branch.points.size(); ++k) {
        const double ta = branch.points[k].tangent[N];
        const double tb = branch.points[k + 1].tangent[N];
        if (ta == 0.0 || !(ta * tb < 0.0)) continue;
        BranchEvent ev;
        ev.kind = BranchEvent::Kind::Fold;
        ev.at_index = static_cast<int>(k);
        ev.param = coarse_fold_param(branch.points[k], branch.points[k + 1], ext);
        out.push_back(std::move(ev));
    }
    return out;
}

std::vector<BranchEvent> detect_folds(const Branch& branch, const ContinuableSystem& sys,
                                      const ContinuationSettings& settings) {
    std::vector<BranchEvent> out = detect_folds(branch);
    if (out.empty()) return out;
    const Eigen::Index N = sys.size();
    const Extended ext{1.0 / static_cast<double>(N)};

    for (BranchEvent& ev : out) {
        const BranchPoint& a = branch.points[ev.at_index];
        const BranchPoint& b = branch.points[ev.at_index + 1];
        const double s = arc_distance(a, b, ext);
        // secant iteration on g(d) = tangent parameter component at arc d
        double d0 = 0.0, g0 = a.tangent[N];
        double d1 = s, g1 = b.tangent[N];
        double param_prev = ev.param;
        bool refined = false;
        BranchPoint probe;
        for (int it = 0; it < 30; ++it) {
            if (g1 == g0) break;
            double d2 = d1 - g1 * (d1 - d0) / (g1 - g0);
            if (!(d2 > 0.0) || !(d2 < s)) d2 = 0.5 * (d0 + d1);
            auto pt = continuation_step(sys, a, d2, settings);
            if (!pt) break;
            probe = std::move(*pt);
            const double g2 = probe.tangent[N];
            d0 = d1; g0 = g1;
            d1 = d2; g1 = g2;
            if (std::abs(probe.param - param_prev) < 1e-4) {
                ev.param = probe.param;
                refined = true;
                break;
            }
            param_prev = probe.param;
            ev.param = probe.param;
        }
        ev.refined = refined;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

namespace {

SweepEntry run_sweep_value(const ModelDefinition& model, const TissueGraph& tissue,
                           const std::string& sweep_param, double value,
                           const ContinuationSettings& inner) {
    SweepEntry entry;
    entry.value = value;
    try {
        ModelParams mp = model.params;
        mp.set(sweep_param, value);
        mp.set(inner.param_name, inner.param_lo);
        const ModelDefinition m = model.with_params(mp);
        Eigen::VectorXd y0 = homogeneous_state(m).replicate(tissue.n);
        if (m.params.get(inner.param_name) != 0.0 ||
            assemble_residual(m, tissue, y0).lpNorm<Eigen::Infinity>() >= inner.newton.tol_residual) {
            const NewtonResult nr = newton_solve(m, tissue, y0, inner.newton);
            if (!nr.converged)
                throw NumericalError("sweep: no converged start at " + sweep_param + " = " +
                                     std::to_string(value) + ": " + nr.message);
            y0 = nr.state;
        }
        entry.branch = continue_branch(m, tissue, y0, inner);
        entry.ok = true;
    } catch (const std::exception& e) {
        entry.error = e.what();
    }
    return entry;
}

} // namespace

std::vector<SweepEntry> sweep(const ModelDefinition& model, const TissueGraph& tissue,
                              const std::string& sweep_param, const std::vector<double>& values,
                              const ContinuationSettings& inner, bool concurrent) {
    for (double v : values)
        if (!std::isfinite(v)) throw ConfigError("sweep: non-finite sweep value");

    std::vector<SweepEntry> out(values.size());
    if (concurrent && values.size() > 1) {
        std::vector<std::future<SweepEntry>> futs;
        futs.reserve(values.size());
        for (double v : values)
            futs.push_back(std::async(std::launch::async, run_sweep_value, std::cref(model),
                                      std::cref(tissue), sweep_param, v, std::cref(inner)));
        for (std::size_t i = 0; i < futs.size(); ++i) out[i] = futs[i].get();
    } else {
        for (std::size_t i = 0; i < values.size(); ++i)
            out[i] = run_sweep_value(model, tissue, sweep_param, values[i], inner);
    }
    return out;
}

} // namespace meristem

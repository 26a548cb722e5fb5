#pragma once

#include "meristem/model.hpp"
#include "meristem/tissue.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace meristem {

struct IntegratorSettings {
    double rtol = 1e-6;
    double atol = 1e-9;
    double h0 = 1e-2;       // initial step (h)
    double h_min = 1e-10;
    double h_max = 200.0;
    long max_steps = 4000000;
    int newton_max_iters = 12;
    bool fixed_step = false;
    double h_fixed = 1e-2;
    int store_every = 1;    // keep every k-th accepted sample (last always kept)
    double negativity_threshold = -1e-8; // flag (not clamp) below this
};

struct TrajectorySample {
    double t = 0.0;
    Eigen::VectorXd state;
};

struct Trajectory {
    std::vector<TrajectorySample> samples; // strictly increasing t
    bool completed = false;
    std::string abort_reason;
    long steps = 0;
    long rejected = 0;
    bool negativity_flagged = false;
    double min_component = 0.0;
    std::vector<double> nonfinite_event_times; // rejected steps that went non-finite

    const Eigen::VectorXd& final_state() const { return samples.back().state; }
    double final_time() const { return samples.back().t; }
};

// Stiff implicit integration of y' = F(y) (TR-BDF2: trapezium to an internal
// stage, BDF2 across the step, both stages sharing one factorisation of
// I - gamma*h/2 * J with the analytic Jacobian; embedded third-order error
// estimate drives the step size).
Trajectory integrate(const ModelDefinition& model, const TissueGraph& tissue,
                     const Eigen::VectorXd& y0, double t0, double t1,
                     const IntegratorSettings& settings = {});

struct PeriodEstimate {
    double period = 0.0;
    double spread = 0.0; // (max - min)/mean over successive cycle lengths
    int cycles = 0;
    std::string observable;
};

struct PeriodicSettings {
    double burn_in = 5000.0; // transient skipped before measuring, hours
    double window = 2500.0;  // measurement window
    int observe_cell = -1;   // cell index for the scalar observable; -1 = last cell
    double min_relative_amplitude = 1e-4; // below this: no oscillation
    IntegratorSettings integrator;
};

struct PeriodicStateResult {
    bool found = false;
    std::string message;
    PeriodEstimate period;
    Trajectory cycle;               // one full cycle, dense samples
    std::vector<double> peak_times; // per-cell time of maximum within the cycle
    std::vector<double> amplitudes; // per-cell max-min over the window
};

// Burn in past the transient, then estimate the oscillation period from
// successive maxima of the boundary-cell auxin observable (quadratic
// interpolation of peak times). The model should carry T slightly above the
// Hopf point; init is a nearby steady state.
PeriodicStateResult find_periodic_state(const ModelDefinition& model, const TissueGraph& tissue,
                                        const Eigen::VectorXd& init,
                                        const PeriodicSettings& settings = {});

} // namespace meristem

#pragma once

#include "meristem/model.hpp"
#include "meristem/tissue.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace meristem {

struct NewtonSettings {
    double tol_residual = 1e-10; // infinity norm of the residual
    double tol_step = 1e-12;     // scaled update below this counts as stalled-converged
    int max_iters = 25;
    int max_damping = 4;         // halvings per iteration when the residual grows
};

struct NewtonResult {
    Eigen::VectorXd state;
    bool converged = false;
    int iterations = 0;
    double residual_norm = 0.0;
    std::string message;
};

// Parameter-dependent root problem F(y, p) = 0. Branch continuation, fold and
// Hopf machinery run on this interface; the model adapter below is the
// production implementation, tests plug in normal-form systems.
class ContinuableSystem {
public:
    virtual ~ContinuableSystem() = default;
    virtual Eigen::Index size() const = 0;
    virtual Eigen::VectorXd residual(const Eigen::VectorXd& y, double p) const = 0;
    virtual Eigen::SparseMatrix<double> jacobian(const Eigen::VectorXd& y, double p) const = 0;
    virtual Eigen::VectorXd dresidual_dparam(const Eigen::VectorXd& y, double p) const = 0;
    virtual double measure(const Eigen::VectorXd& y) const = 0;
};

// (model, tissue) as a continuable system in the named scalar parameter.
// dF/dT is exact (the transport term); other parameters use central
// differences.
class ModelSystem : public ContinuableSystem {
public:
    ModelSystem(ModelDefinition model, const TissueGraph& tissue, std::string param_name = "T");
    Eigen::Index size() const override;
    Eigen::VectorXd residual(const Eigen::VectorXd& y, double p) const override;
    Eigen::SparseMatrix<double> jacobian(const Eigen::VectorXd& y, double p) const override;
    Eigen::VectorXd dresidual_dparam(const Eigen::VectorXd& y, double p) const override;
    double measure(const Eigen::VectorXd& y) const override;
    ModelDefinition at(double p) const; // model with the parameter substituted
    const TissueGraph& tissue() const { return *tissue_; }
    const std::string& param_name() const { return param_name_; }

private:
    ModelDefinition model_;
    const TissueGraph* tissue_;
    std::string param_name_;
};

NewtonResult newton_solve(const ContinuableSystem& sys, const Eigen::VectorXd& initial, double p,
                          const NewtonSettings& settings = {});
NewtonResult newton_solve(const ModelDefinition& model, const TissueGraph& tissue,
                          const Eigen::VectorXd& initial, const NewtonSettings& settings = {});

enum class Stability { Stable, Unstable, Unknown };
std::string to_string(Stability s);

struct BranchPoint {
    double param = 0.0;
    Eigen::VectorXd state;
    double measure = 0.0; // ||a||_2 for model systems
    Stability stability = Stability::Unknown;
    int n_unstable_real = 0;
    int n_unstable_pairs = 0;
    Eigen::VectorXd tangent; // extended (state, param), unit in the scaled metric
    int corrector_iterations = 0;
};

struct BranchEvent {
    enum class Kind { Fold, Hopf };
    Kind kind = Kind::Fold;
    double param = 0.0;            // localised parameter value
    double omega = 0.0;            // Hopf frequency |Im lambda|
    int at_index = 0;              // branch point preceding the event
    bool refined = false;
    Eigen::VectorXcd eigenvector;  // Hopf eigenfunction (empty for folds)
};

struct ContinuationSettings {
    NewtonSettings newton;         // corrector tolerances
    std::string param_name = "T";
    double param_lo = 0.0;
    double param_hi = 6.0;
    double ds0 = 1e-3;             // first step off the start point
    double ds_min = 1e-5;
    double ds_max = 5e-2;
    double grow = 1.3;
    int fast_iters = 3;            // corrector iterations considered "fast"
    int corrector_max_iters = 8;
    int max_points = 4000;
    double jump_factor = 10.0;     // branch-continuity guard: ||jump|| <= C*ds
    double min_tangent_cos = 0.75; // reject steps that turn the tangent harder than this
    double grow_tangent_cos = 0.95; // only grow ds while the branch is this straight
    bool compute_stability = true;
    int stability_stride = 1;      // spectra every k-th point
    bool refine_folds = true;
    int dense_spectrum_cap = 6000; // unknowns above which rightmost-k is used
    int rightmost_k = 20;
};

struct Branch {
    std::vector<BranchPoint> points;
    std::vector<BranchEvent> events;
    std::string model_name;
    std::uint64_t tissue_fingerprint = 0;
    std::string param_name = "T";
    std::string termination;

    const BranchPoint& back() const { return points.back(); }
};

// Pseudo-arclength continuation with a secant/tangent predictor and a
// bordered Newton corrector (block elimination, one sparse factorisation per
// corrector iteration). The start state must satisfy F(start, param_lo) = 0.
Branch continue_branch(const ContinuableSystem& sys, const Eigen::VectorXd& start,
                       const ContinuationSettings& settings);
Branch continue_branch(const ModelDefinition& model, const TissueGraph& tissue,
                       const Eigen::VectorXd& start, const ContinuationSettings& settings);

// One predictor-corrector step of length ds from `from` along its stored
// tangent; nullopt when the corrector fails. Used by step control and by the
// fold/Hopf refinement loops.
std::optional<BranchPoint> continuation_step(const ContinuableSystem& sys, const BranchPoint& from,
                                             double ds, const ContinuationSettings& settings);

// Folds: sign changes of the parameter component of the unit tangent.
// The coarse variant interpolates stored tangents; the refining variant runs
// a secant iteration on that component with fresh corrector solves until the
// fold parameter moves by less than 1e-4.
std::vector<BranchEvent> detect_folds(const Branch& branch);
std::vector<BranchEvent> detect_folds(const Branch& branch, const ContinuableSystem& sys,
                                      const ContinuationSettings& settings);

struct SweepEntry {
    double value = 0.0;
    bool ok = false;
    std::string error;
    Branch branch;
};

// Independent continuations for each value of the swept parameter (branch
// parameter settings in `inner`); per-value failures are isolated. Runs
// concurrently when asked; collation is order-preserving either way.
std::vector<SweepEntry> sweep(const ModelDefinition& model, const TissueGraph& tissue,
                              const std::string& sweep_param, const std::vector<double>& values,
                              const ContinuationSettings& inner, bool concurrent = true);

} // namespace meristem

#pragma once

#include "meristem/tissue.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <limits>
#include <map>
#include <string>

namespace meristem {

// Control parameters in the units of the source models (uM, um, h).
// All rates are nonnegative; rho_PIN0 may be zero.
struct ModelParams {
    double rho_IAA = 0.85;   // IAA production, uM/h
    double kappa_IAA = 1.0;  // IAA saturation, 1/uM
    double mu_IAA = 0.1;     // IAA decay, 1/h
    double rho_PIN0 = 0.0;   // PIN base production, uM/h
    double rho_PIN = 1.0;    // PIN production, 1/h
    double mu_PIN = 0.1;     // PIN decay, 1/h
    double kappa_PIN = 1.0;  // PIN saturation, 1/uM
    double c1 = 1.099;       // carrier-allocation exponent, 1/uM
    double kappa_T = std::numeric_limits<double>::quiet_NaN(); // transport saturation (Smith)
    double c2 = std::numeric_limits<double>::quiet_NaN();      // exponential transport (Chitwood), 1/uM
    double D = 0.0;          // IAA diffusion, um^2/h
    double T = 0.0;          // active transport coefficient, um^3/h
    double pin_const = std::numeric_limits<double>::quiet_NaN(); // frozen-PIN carrier amount

    double get(const std::string& name) const;       // ConfigError on unknown name
    void set(const std::string& name, double value); // ConfigError on unknown name

    static ModelParams smith_defaults();
    static ModelParams chitwood_defaults();
};

enum class ModelKind { Smith, Chitwood, FrozenPinSmith };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

// A concentration-based transport model: per-cell production pi and decay
// delta (decay stored positive, applied with a minus sign), a diagonal
// diffusion matrix, and active transport in carrier-allocated form
//   nu_ij = carrier(y_i) * [ l_ij phi(a_j) / sum_k l_ik phi(a_k) ] * tau(a_i, a_j),
// which factorises as psi/phi on regular tissues (Hypothesis-2 form).
class ModelDefinition {
public:
    ModelKind kind = ModelKind::Smith;
    ModelParams params;
    int m = 2;                  // state components per cell: (a, p) or (a) frozen
    Eigen::VectorXd diffusion;  // diagonal of D, length m

    using VecM = Eigen::VectorXd;
    using MatM = Eigen::MatrixXd;

    VecM production(const VecM& y) const;
    VecM decay(const VecM& y) const;
    MatM production_jacobian(const VecM& y) const;
    MatM decay_jacobian(const VecM& y) const;

    // transport channel (auxin component only)
    double phi(double a) const;
    double dphi(double a) const;
    double tau(double ai, double aj) const;
    double dtau_dai(double ai, double aj) const;
    double dtau_daj(double ai, double aj) const;
    double carrier(const VecM& yi) const;      // p_i, or the frozen constant
    double dcarrier_dp() const;                // 1 for the 2-component models, 0 frozen

    // psi(y_i, y_j) of the factorised form; V is the common cell volume of a
    // regular tissue (psi carries the 1/V of the transport prefactor).
    VecM psi(const VecM& yi, const VecM& yj, double V) const;

    // copy with a replaced parameter set (diffusion diagonal refreshed)
    ModelDefinition with_params(const ModelParams& p) const;
};

// Factories; each validates the parameters it needs and throws ConfigError.
ModelDefinition smith_model(const ModelParams& params);
ModelDefinition chitwood_model(const ModelParams& params);
ModelDefinition frozen_pin_smith_model(const ModelParams& params);
ModelDefinition make_model(ModelKind kind, const ModelParams& params);

// Right-hand side of the coupled ODE system, cell-major state layout
// (a_0, p_0, a_1, p_1, ...). Component (i,l):
//   pi_l - delta_l + (D_l/V_i) sum_j l_ij (y_jl - y_il) + (T/V_i) sum_j (nu_ji - nu_ij)_l
Eigen::VectorXd assemble_residual(const ModelDefinition& model, const TissueGraph& g,
                                  const Eigen::VectorXd& y);

// Exact analytic Jacobian of assemble_residual; sparsity within the 2-hop
// graph pattern (the carrier-allocation denominators couple neighbours of
// neighbours).
Eigen::SparseMatrix<double> assemble_jacobian(const ModelDefinition& model, const TissueGraph& g,
                                              const Eigen::VectorXd& y);

// (1/V_i) sum_j (nu_ji - nu_ij): the transport term without its T factor,
// i.e. the exact dF/dT.
Eigen::VectorXd assemble_transport(const ModelDefinition& model, const TissueGraph& g,
                                   const Eigen::VectorXd& y);

// Unweighted Hypothesis-2 route: sum_j psi(y_j,y_i) phi(a_i)/sum_{k in N_j} phi(a_k)
//   - psi(y_i,y_j) phi(a_j)/sum_{k in N_i} phi(a_k).
// Coincides with assemble_transport on regular tissues (times 1/V).
Eigen::VectorXd assemble_transport_factored(const ModelDefinition& model, const TissueGraph& g,
                                            const Eigen::VectorXd& y);

// 2-norm of the auxin sub-vector.
double auxin_norm(const ModelDefinition& model, const Eigen::VectorXd& y);

// Parse "key = value" lines (comments with #) into ModelParams on top of the
// given base; unknown keys raise ConfigError.
ModelParams params_from_kv_text(const std::string& text, ModelParams base);

} // namespace meristem

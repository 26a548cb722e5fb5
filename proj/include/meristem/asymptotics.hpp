#pragma once

#include "meristem/model.hpp"
#include "meristem/tissue.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace meristem {

// Spatially uniform equilibrium balancing production and decay.
struct HomogeneousState {
    Eigen::VectorXd y_star; // length m: (a*, p*) or (a*)
    double a_star() const { return y_star[0]; }
    Eigen::VectorXd replicate(int n) const; // flat state of length m*n
};

// Geometric pre-factors xi_i = 1 - sum_{j in N_i} 1/|N_j| over effective
// neighbour counts (mirror ghosts included; a ghost of cell i counts as a
// neighbour of effective degree |N_i|).
struct GeometricCoefficients {
    Eigen::VectorXd xi;
    std::vector<int> interior_set; // cells with xi exactly 0
    std::vector<int> boundary_set; // the complement
    // exact rational total of the xi (antisymmetry makes it 0 on any graph)
    long long xi_sum_num = 0;
    long long xi_sum_den = 1;
};

// First-order small-T correction: y_i = y* + T eta_i + O(T^2).
struct AsymptoticSolution {
    HomogeneousState base;
    Eigen::VectorXd eta;   // flat, length m*n
    double T_ref = 0.0;    // T at which base + T*eta is meant to be evaluated
    std::string validity_note;
    Eigen::VectorXd evaluate(double T) const; // y* + T*eta
};

// Closed form for both models: a* = (-1+sqrt(1+4 kappa rho/mu))/(2 kappa),
// p* analogous with rho_PIN0 + rho_PIN a*.
HomogeneousState homogeneous_state(const ModelDefinition& model);

// Exact rational evaluation (effective degrees are small integers); the
// interior set is decided by exact zero tests and sum(xi) = 0 by construction.
GeometricCoefficients geometric_coefficients(const TissueGraph& g);

// Lemma-1 correction eta_i = xi_i [pi'(y*) - delta'(y*)]^{-1} psi(y*,y*).
// Regular tissues only; throws InvalidGeometryError otherwise and
// SingularError if the linearisation is singular.
AsymptoticSolution first_order_no_diffusion(const ModelDefinition& model, const TissueGraph& g);

// Diffusion-corrected correction: solves [J(y*) + L (x) D] eta = (xi_i psi)_i
// with L the l_ij-weighted, volume-scaled graph Laplacian (sparse direct
// solve). Reduces to the Lemma-1 form at D = 0. A near-singular operator
// (condition estimate > 1e12) is recorded in validity_note.
AsymptoticSolution first_order_with_diffusion(const ModelDefinition& model, const TissueGraph& g);

} // namespace meristem

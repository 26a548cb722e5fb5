#pragma once

#include "meristem/continuation.hpp"
#include "meristem/model.hpp"
#include "meristem/tissue.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <complex>
#include <string>
#include <vector>

namespace meristem {

enum class SpectrumMode { Full, RightmostK };

struct SpectrumSettings {
    double zero_threshold = 1e-8; // separates fold-type real crossings from Hopf pairs
    double vector_window = 0.1;   // keep eigenvectors with |Re lambda| below this
    int k = 20;                   // rightmost-k count
    double shift = 0.5;           // shift-invert target (right of the spectrum)
    int dense_cap = 6000;         // unknowns; beyond this Full falls back to RightmostK
    bool want_vectors = true;
};

struct SpectrumReport {
    Eigen::VectorXcd eigenvalues; // sorted by descending real part
    // eigenvectors for eigenvalues within the window (or all Ritz vectors in
    // rightmost-k mode); vector_index[i] points into `eigenvalues`
    std::vector<int> vector_index;
    std::vector<Eigen::VectorXcd> eigenvectors;
    bool full = false;
    bool converged = true; // false flags a partial rightmost-k report
    int n_unstable_real = 0;
    int n_unstable_pairs = 0;
    std::string warning;

    bool stable() const { return n_unstable_real == 0 && n_unstable_pairs == 0; }
    std::string classification() const;
    std::complex<double> rightmost() const { return eigenvalues.size() ? eigenvalues[0] : 0.0; }
};

// Spectrum of an arbitrary real sparse matrix (dense solver up to
// settings.dense_cap unknowns, shift-invert Arnoldi beyond or on request).
SpectrumReport spectrum_of_matrix(const Eigen::SparseMatrix<double>& J, SpectrumMode mode,
                                  const SpectrumSettings& settings = {});

// Spectrum of the steady-state Jacobian; warns (in the report) when the state
// is not converged.
SpectrumReport spectrum(const ModelDefinition& model, const TissueGraph& tissue,
                        const Eigen::VectorXd& state, SpectrumMode mode = SpectrumMode::Full,
                        const SpectrumSettings& settings = {});

struct StabilityCount {
    int n_real = 0;
    int n_pairs = 0;
    bool ok = false;
};
StabilityCount count_unstable(const Eigen::SparseMatrix<double>& J, int dense_cap, int k,
                              double zero_threshold = 1e-8);

struct HopfEvent {
    double T_c = 0.0;   // parameter at the crossing
    double omega = 0.0; // |Im lambda| at the crossing
    Eigen::VectorXcd eigenfunction;
    int at_index = 0;   // branch point preceding the crossing
    int pair_delta = 0; // change in unstable complex pair count (+1 destabilising)
};

// Monitor the number of unstable complex pairs between consecutive branch
// points; bisect in arclength (re-solving steady states) until the crossing
// parameter is localised to 1e-3. Real-axis crossings are fold business and
// are ignored here.
std::vector<HopfEvent> detect_hopf(const Branch& branch, const ContinuableSystem& sys,
                                   const ContinuationSettings& csettings = {},
                                   const SpectrumSettings& ssettings = {});
std::vector<HopfEvent> detect_hopf(const Branch& branch, const ModelDefinition& model,
                                   const TissueGraph& tissue,
                                   const ContinuationSettings& csettings = {},
                                   const SpectrumSettings& ssettings = {});

// Per-cell |a|-component magnitudes of the Hopf eigenfunction, normalised to
// a maximum of 1.
Eigen::VectorXd hopf_eigenfunction_profile(const HopfEvent& event, int m);

} // namespace meristem

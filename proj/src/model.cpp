#include "meristem/model.hpp"
#include "meristem/errors.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace meristem {

namespace {

void require_nonnegative(double v, const char* name) {
    if (std::isnan(v) || v < 0.0)
        throw ConfigError(std::string("parameter ") + name + " must be set and nonnegative");
}

void require_positive(double v, const char* name) {
    if (std::isnan(v) || v <= 0.0)
        throw ConfigError(std::string("parameter ") + name + " must be set and positive");
}

void validate_common(const ModelParams& p) {
    require_positive(p.rho_IAA, "rho_IAA");
    require_positive(p.kappa_IAA, "kappa_IAA");
    require_positive(p.mu_IAA, "mu_IAA");
    require_nonnegative(p.rho_PIN0, "rho_PIN0");
    require_positive(p.c1, "c1");
    require_nonnegative(p.D, "D");
    if (std::isnan(p.T)) throw ConfigError("parameter T must be set");
}

void validate_pin(const ModelParams& p) {
    require_positive(p.rho_PIN, "rho_PIN");
    require_positive(p.mu_PIN, "mu_PIN");
    require_positive(p.kappa_PIN, "kappa_PIN");
}

} // namespace

double ModelParams::get(const std::string& name) const {
    if (name == "rho_IAA") return rho_IAA;
    if (name == "kappa_IAA") return kappa_IAA;
    if (name == "mu_IAA") return mu_IAA;
    if (name == "rho_PIN0") return rho_PIN0;
    if (name == "rho_PIN") return rho_PIN;
    if (name == "mu_PIN") return mu_PIN;
    if (name == "kappa_PIN") return kappa_PIN;
    if (name == "c1") return c1;
    if (name == "kappa_T") return kappa_T;
    if (name == "c2") return c2;
    if (name == "D") return D;
    if (name == "T") return T;
    if (name == "p_const") return pin_const;
    throw ConfigError("unknown model parameter '" + name + "'");
}

void ModelParams::set(const std::string& name, double value) {
    if (name == "rho_IAA") rho_IAA = value;
    else if (name == "kappa_IAA") kappa_IAA = value;
    else if (name == "mu_IAA") mu_IAA = value;
    else if (name == "rho_PIN0") rho_PIN0 = value;
    else if (name == "rho_PIN") rho_PIN = value;
    else if (name == "mu_PIN") mu_PIN = value;
    else if (name == "kappa_PIN") kappa_PIN = value;
    else if (name == "c1") c1 = value;
    else if (name == "kappa_T") kappa_T = value;
    else if (name == "c2") c2 = value;
    else if (name == "D") D = value;
    else if (name == "T") T = value;
    else if (name == "p_const") pin_const = value;
    else throw ConfigError("unknown model parameter '" + name + "'");
}

ModelParams ModelParams::smith_defaults() {
    ModelParams p;
    p.kappa_T = 1.0;
    return p;
}

ModelParams ModelParams::chitwood_defaults() {
    ModelParams p;
    p.c2 = 0.588; // 2D regular value; 0.405 on irregular tissues
    return p;
}

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Smith: return "smith";
        case ModelKind::Chitwood: return "chitwood";
        case ModelKind::FrozenPinSmith: return "frozen-pin-smith";
    }
    return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "smith") return ModelKind::Smith;
    if (s == "chitwood") return ModelKind::Chitwood;
    if (s == "frozen-pin-smith" || s == "frozen") return ModelKind::FrozenPinSmith;
    throw ConfigError("unknown model '" + s + "' (expected smith|chitwood|frozen-pin-smith)");
}

ModelDefinition::VecM ModelDefinition::production(const VecM& y) const {
    const auto& p = params;
    VecM out(m);
    out[0] = p.rho_IAA / (1.0 + p.kappa_IAA * y[0]);
    if (m == 2) out[1] = (p.rho_PIN0 + p.rho_PIN * y[0]) / (1.0 + p.kappa_PIN * y[1]);
    return out;
}

ModelDefinition::VecM ModelDefinition::decay(const VecM& y) const {
    const auto& p = params;
    VecM out(m);
    out[0] = p.mu_IAA * y[0];
    if (m == 2) out[1] = p.mu_PIN * y[1];
    return out;
}

ModelDefinition::MatM ModelDefinition::production_jacobian(const VecM& y) const {
    const auto& p = params;
    MatM out = MatM::Zero(m, m);
    const double da = 1.0 + p.kappa_IAA * y[0];
    out(0, 0) = -p.rho_IAA * p.kappa_IAA / (da * da);
    if (m == 2) {
        const double dp = 1.0 + p.kappa_PIN * y[1];
        out(1, 0) = p.rho_PIN / dp;
        out(1, 1) = -(p.rho_PIN0 + p.rho_PIN * y[0]) * p.kappa_PIN / (dp * dp);
    }
    return out;
}

ModelDefinition::MatM ModelDefinition::decay_jacobian(const VecM&) const {
    MatM out = MatM::Zero(m, m);
    out(0, 0) = params.mu_IAA;
    if (m == 2) out(1, 1) = params.mu_PIN;
    return out;
}

double ModelDefinition::phi(double a) const { return std::exp(params.c1 * a); }
double ModelDefinition::dphi(double a) const { return params.c1 * std::exp(params.c1 * a); }

double ModelDefinition::tau(double ai, double aj) const {
    if (kind == ModelKind::Chitwood)
        return (std::exp(params.c2 * ai) - 1.0) / std::exp(params.c2 * aj);
    return ai * ai / (1.0 + params.kappa_T * aj * aj);
}

double ModelDefinition::dtau_dai(double ai, double aj) const {
    if (kind == ModelKind::Chitwood)
        return params.c2 * std::exp(params.c2 * (ai - aj));
    return 2.0 * ai / (1.0 + params.kappa_T * aj * aj);
}

double ModelDefinition::dtau_daj(double ai, double aj) const {
    if (kind == ModelKind::Chitwood)
        return -params.c2 * (std::exp(params.c2 * ai) - 1.0) / std::exp(params.c2 * aj);
    const double den = 1.0 + params.kappa_T * aj * aj;
    return -ai * ai * 2.0 * params.kappa_T * aj / (den * den);
}

double ModelDefinition::carrier(const VecM& yi) const {
    return kind == ModelKind::FrozenPinSmith ? params.pin_const : yi[1];
}

double ModelDefinition::dcarrier_dp() const {
    return kind == ModelKind::FrozenPinSmith ? 0.0 : 1.0;
}

ModelDefinition::VecM ModelDefinition::psi(const VecM& yi, const VecM& yj, double V) const {
    VecM out = VecM::Zero(m);
    out[0] = carrier(yi) / V * tau(yi[0], yj[0]);
    return out;
}

ModelDefinition ModelDefinition::with_params(const ModelParams& p) const {
    return make_model(kind, p);
}

ModelDefinition smith_model(const ModelParams& params) {
    validate_common(params);
    validate_pin(params);
    if (std::isnan(params.kappa_T) || params.kappa_T <= 0.0)
        throw ConfigError("smith model requires kappa_T > 0");
    ModelDefinition md;
    md.kind = ModelKind::Smith;
    md.params = params;
    md.m = 2;
    md.diffusion = Eigen::Vector2d(params.D, 0.0);
    return md;
}

ModelDefinition chitwood_model(const ModelParams& params) {
    validate_common(params);
    validate_pin(params);
    if (std::isnan(params.c2) || params.c2 < 0.0)
        throw ConfigError("chitwood model requires c2 >= 0");
    ModelDefinition md;
    md.kind = ModelKind::Chitwood;
    md.params = params;
    md.m = 2;
    md.diffusion = Eigen::Vector2d(params.D, 0.0);
    return md;
}

ModelDefinition frozen_pin_smith_model(const ModelParams& params) {
    validate_common(params);
    if (std::isnan(params.kappa_T) || params.kappa_T <= 0.0)
        throw ConfigError("frozen-pin-smith model requires kappa_T > 0");
    if (std::isnan(params.pin_const) || params.pin_const <= 0.0)
        throw ConfigError("frozen-pin-smith model requires p_const > 0");
    ModelDefinition md;
    md.kind = ModelKind::FrozenPinSmith;
    md.params = params;
    md.m = 1;
    md.diffusion = Eigen::VectorXd::Constant(1, params.D);
    return md;
}

ModelDefinition make_model(ModelKind kind, const ModelParams& params) {
    switch (kind) {
        case ModelKind::Smith: return smith_model(params);
        case ModelKind::Chitwood: return chitwood_model(params);
        case ModelKind::FrozenPinSmith: return frozen_pin_smith_model(params);
    }
    throw ConfigError("unknown model kind");
}

namespace {

// Carrier-allocation denominators S_i = sum_{k in N_i} l_ik phi(a_k), with
// mirror-ghost terms l_g phi(a_i).
std::vector<double> allocation_sums(const ModelDefinition& md, const TissueGraph& g,
                                    const Eigen::VectorXd& y) {
    const int m = md.m;
    std::vector<double> S(g.n, 0.0);
    for (int i = 0; i < g.n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < g.neighbors[i].size(); ++k)
            s += g.contact[i][k] * md.phi(y[g.neighbors[i][k] * m]);
        s += g.ghost_contact_sum(i) * md.phi(y[i * m]);
        if (!std::isfinite(s) || s <= 0.0)
            throw NumericalError("carrier-allocation denominator non-finite or nonpositive at cell " +
                                 std::to_string(i));
        S[i] = s;
    }
    return S;
}

void check_shape(const ModelDefinition& md, const TissueGraph& g, const Eigen::VectorXd& y) {
    if (y.size() != static_cast<Eigen::Index>(md.m) * g.n)
        throw ShapeError("state length " + std::to_string(y.size()) + " != m*n = " +
                         std::to_string(md.m * g.n));
}

} // namespace

Eigen::VectorXd assemble_transport(const ModelDefinition& md, const TissueGraph& g,
                                   const Eigen::VectorXd& y) {
    check_shape(md, g, y);
    const int m = md.m;
    Eigen::VectorXd t = Eigen::VectorXd::Zero(y.size());
    const std::vector<double> S = allocation_sums(md, g, y);
    for (int i = 0; i < g.n; ++i) {
        const auto yi = y.segment(i * m, m);
        const double pf = md.carrier(yi);
        for (std::size_t k = 0; k < g.neighbors[i].size(); ++k) {
            const int j = g.neighbors[i][k];
            const double lij = g.contact[i][k];
            const double nu = pf * lij * md.phi(y[j * m]) / S[i] * md.tau(y[i * m], y[j * m]);
            t[i * m] -= nu / g.volumes[i];
            t[j * m] += nu / g.volumes[j];
        }
    }
    return t;
}

Eigen::VectorXd assemble_transport_factored(const ModelDefinition& md, const TissueGraph& g,
                                            const Eigen::VectorXd& y) {
    check_shape(md, g, y);
    const int m = md.m;
    const double V = g.volumes[0];
    Eigen::VectorXd t = Eigen::VectorXd::Zero(y.size());
    // unweighted denominators sum_{k in N_i} phi(a_k), ghosts mirroring a_i
    std::vector<double> S(g.n, 0.0);
    for (int i = 0; i < g.n; ++i) {
        for (int j : g.neighbors[i]) S[i] += md.phi(y[j * m]);
        S[i] += g.ghost_count(i) * md.phi(y[i * m]);
    }
    for (int i = 0; i < g.n; ++i) {
        const auto yi = y.segment(i * m, m);
        for (int j : g.neighbors[i]) {
            const auto yj = y.segment(j * m, m);
            const double nu = md.psi(yi, yj, V)[0] * md.phi(y[j * m]) / S[i];
            t[i * m] -= nu;
            t[j * m] += nu;
        }
    }
    return t;
}

Eigen::VectorXd assemble_residual(const ModelDefinition& md, const TissueGraph& g,
                                  const Eigen::VectorXd& y) {
    check_shape(md, g, y);
    const int m = md.m;
    Eigen::VectorXd r(y.size());
    for (int i = 0; i < g.n; ++i) {
        const auto yi = y.segment(i * m, m);
        r.segment(i * m, m) = md.production(yi) - md.decay(yi);
        for (int l = 0; l < m; ++l) {
            if (md.diffusion[l] == 0.0) continue;
            double acc = 0.0;
            for (std::size_t k = 0; k < g.neighbors[i].size(); ++k) {
                const int j = g.neighbors[i][k];
                acc += g.contact[i][k] * (y[j * m + l] - y[i * m + l]);
            }
            r[i * m + l] += md.diffusion[l] / g.volumes[i] * acc;
        }
    }
    if (md.params.T != 0.0)
        r += md.params.T * assemble_transport(md, g, y);
    return r;
}

Eigen::SparseMatrix<double> assemble_jacobian(const ModelDefinition& md, const TissueGraph& g,
                                              const Eigen::VectorXd& y) {
    check_shape(md, g, y);
    const int m = md.m;
    const int N = static_cast<int>(y.size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(N) * (m + 10));

    // reaction blocks
    for (int i = 0; i < g.n; ++i) {
        const auto yi = y.segment(i * m, m);
        const Eigen::MatrixXd B = md.production_jacobian(yi) - md.decay_jacobian(yi);
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c)
                if (B(r, c) != 0.0) trip.emplace_back(i * m + r, i * m + c, B(r, c));
    }

    // diffusion
    for (int i = 0; i < g.n; ++i) {
        for (int l = 0; l < m; ++l) {
            if (md.diffusion[l] == 0.0) continue;
            const double s = md.diffusion[l] / g.volumes[i];
            double diag = 0.0;
            for (std::size_t k = 0; k < g.neighbors[i].size(); ++k) {
                const int j = g.neighbors[i][k];
                trip.emplace_back(i * m + l, j * m + l, s * g.contact[i][k]);
                diag -= s * g.contact[i][k];
            }
            trip.emplace_back(i * m + l, i * m + l, diag);
        }
    }

    // transport
    const double T = md.params.T;
    if (T != 0.0) {
        const std::vector<double> S = allocation_sums(md, g, y);
        for (int i = 0; i < g.n; ++i) {
            const auto yi = y.segment(i * m, m);
            const double pf = md.carrier(yi);
            const double ai = y[i * m];
            const double ghost_dS = g.ghost_contact_sum(i) * md.dphi(ai); // dS_i/da_i
            const double ci = -T / g.volumes[i];
            for (std::size_t k = 0; k < g.neighbors[i].size(); ++k) {
                const int j = g.neighbors[i][k];
                const double lij = g.contact[i][k];
                const double aj = y[j * m];
                const double phij = md.phi(aj);
                const double W = lij * phij / S[i];
                const double tv = md.tau(ai, aj);
                const double cj = T / g.volumes[j];
                const double nu_row_i = ci; // coefficient of d(nu)/dx in row i
                const double nu_row_j = cj;

                auto scatter = [&](int col, double dnu) {
                    if (dnu == 0.0) return;
                    trip.emplace_back(i * m, col, nu_row_i * dnu);
                    trip.emplace_back(j * m, col, nu_row_j * dnu);
                };

                // d/dp_i
                if (m == 2 && md.dcarrier_dp() != 0.0)
                    scatter(i * m + 1, md.dcarrier_dp() * W * tv);

                // d/da_i: allocation (through ghosts) and kernel
                {
                    const double dW = -lij * phij * ghost_dS / (S[i] * S[i]);
                    scatter(i * m, pf * (dW * tv + W * md.dtau_dai(ai, aj)));
                }
                // d/da_j: numerator, allocation and kernel
                {
                    const double dS_daj = lij * md.dphi(aj);
                    const double dW = (lij * md.dphi(aj) * S[i] - lij * phij * dS_daj) / (S[i] * S[i]);
                    scatter(j * m, pf * (dW * tv + W * md.dtau_daj(ai, aj)));
                }
                // d/da_x for the other members of N_i (allocation only)
                for (std::size_t kk = 0; kk < g.neighbors[i].size(); ++kk) {
                    const int x = g.neighbors[i][kk];
                    if (x == j) continue;
                    const double dS_dax = g.contact[i][kk] * md.dphi(y[x * m]);
                    const double dW = -lij * phij * dS_dax / (S[i] * S[i]);
                    scatter(x * m, pf * dW * tv);
                }
            }
        }
    }

    Eigen::SparseMatrix<double> J(N, N);
    J.setFromTriplets(trip.begin(), trip.end());
    J.makeCompressed();
    return J;
}

double auxin_norm(const ModelDefinition& md, const Eigen::VectorXd& y) {
    const int m = md.m;
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); i += m) s += y[i] * y[i];
    return std::sqrt(s);
}

ModelParams params_from_kv_text(const std::string& text, ModelParams base) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r\n");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r\n");
            return s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("parameter file line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        try {
            std::size_t used = 0;
            const double x = std::stod(val, &used);
            if (used != val.size()) throw std::invalid_argument(val);
            base.set(key, x); // throws ConfigError on unknown key
        } catch (const std::invalid_argument&) {
            throw ConfigError("parameter file line " + std::to_string(lineno) + ": bad number '" + val + "'");
        } catch (const std::out_of_range&) {
            throw ConfigError("parameter file line " + std::to_string(lineno) + ": bad number '" + val + "'");
        }
    }
    return base;
}

} // namespace meristem

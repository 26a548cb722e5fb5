#include "meristem/tissue.hpp"
#include "meristem/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>
#include <sstream>

namespace meristem {

using nlohmann::json;

std::string to_string(BoundaryKind k) {
    return k == BoundaryKind::NeumannGhost ? "neumann-ghost" : "free";
}

BoundaryKind boundary_kind_from_string(const std::string& s) {
    if (s == "neumann-ghost" || s == "neumann") return BoundaryKind::NeumannGhost;
    if (s == "free") return BoundaryKind::Free;
    throw ConfigError("unknown boundary kind '" + s + "' (expected neumann-ghost|free)");
}

double TissueGraph::ghost_contact_sum(int i) const {
    double s = 0.0;
    for (double l : ghosts[i]) s += l;
    return s;
}

int TissueGraph::edge_count() const {
    int twice = 0;
    for (int i = 0; i < n; ++i) twice += degree(i);
    return twice / 2;
}

bool TissueGraph::is_regular() const {
    if (n == 0) return true;
    const double V0 = volumes[0];
    double l0 = 0.0;
    bool have_l = false;
    for (int i = 0; i < n; ++i) {
        if (volumes[i] != V0) return false;
        for (double l : contact[i]) {
            if (!have_l) { l0 = l; have_l = true; }
            else if (l != l0) return false;
        }
        for (double l : ghosts[i]) {
            if (!have_l) { l0 = l; have_l = true; }
            else if (l != l0) return false;
        }
    }
    return true;
}

void TissueGraph::finalize() {
    double vsum = 0.0;
    for (int i = 0; i < n; ++i) vsum += volumes[i];
    mean_volume = n > 0 ? vsum / n : 0.0;

    double lsum = 0.0;
    long cnt = 0;
    for (int i = 0; i < n; ++i)
        for (double l : contact[i]) { lsum += l; ++cnt; }
    mean_contact = cnt > 0 ? lsum / static_cast<double>(cnt) : 0.0;
}

void TissueGraph::validate() const {
    if (n <= 0) throw InvalidGeometryError("tissue has no cells");
    if (static_cast<int>(neighbors.size()) != n || static_cast<int>(contact.size()) != n ||
        static_cast<int>(volumes.size()) != n || static_cast<int>(labels.size()) != n ||
        static_cast<int>(ghosts.size()) != n)
        throw InvalidGeometryError("per-cell arrays have inconsistent lengths");
    if (has_centroids() && static_cast<int>(centroids.size()) != n)
        throw InvalidGeometryError("centroid array length mismatch");

    for (int i = 0; i < n; ++i) {
        if (!(volumes[i] > 0.0))
            throw InvalidGeometryError("cell " + std::to_string(i) + " has nonpositive volume");
        if (neighbors[i].size() != contact[i].size())
            throw InvalidGeometryError("cell " + std::to_string(i) + ": neighbour/contact length mismatch");
        if (neighbors[i].empty())
            throw InvalidGeometryError("cell " + std::to_string(i) + " has no neighbours");
        for (std::size_t k = 0; k < neighbors[i].size(); ++k) {
            const int j = neighbors[i][k];
            if (j < 0 || j >= n)
                throw InvalidGeometryError("cell " + std::to_string(i) + " references invalid neighbour " + std::to_string(j));
            if (j == i)
                throw InvalidGeometryError("cell " + std::to_string(i) + " has a self-loop");
            if (!(contact[i][k] > 0.0))
                throw InvalidGeometryError("edge (" + std::to_string(i) + "," + std::to_string(j) + ") has nonpositive contact");
            // symmetry: j must list i with the identical contact value
            const auto& nj = neighbors[j];
            auto it = std::find(nj.begin(), nj.end(), i);
            if (it == nj.end())
                throw InvalidGeometryError("asymmetric adjacency: edge (" + std::to_string(i) + "," + std::to_string(j) + ") has no reverse entry");
            const std::size_t kj = static_cast<std::size_t>(it - nj.begin());
            if (contact[j][kj] != contact[i][k])
                throw InvalidGeometryError("contact asymmetry on edge (" + std::to_string(i) + "," + std::to_string(j) + "): l_ij != l_ji");
        }
        for (double l : ghosts[i])
            if (!(l > 0.0))
                throw InvalidGeometryError("cell " + std::to_string(i) + " has nonpositive ghost contact");
    }

    // connectivity (BFS from cell 0)
    std::vector<char> seen(n, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int reached = 1;
    while (!q.empty()) {
        const int i = q.front();
        q.pop();
        for (int j : neighbors[i])
            if (!seen[j]) { seen[j] = 1; ++reached; q.push(j); }
    }
    if (reached != n)
        throw InvalidGeometryError("graph is disconnected (" + std::to_string(reached) + " of " + std::to_string(n) + " cells reachable)");

    // stored means must equal the arithmetic means of stored values
    TissueGraph tmp;
    tmp.n = n;
    tmp.volumes = volumes;
    tmp.contact = contact;
    tmp.neighbors = neighbors;
    tmp.finalize();
    if (tmp.mean_volume != mean_volume || tmp.mean_contact != mean_contact)
        throw InvalidGeometryError("stored means do not match the arithmetic means of stored values");
}

namespace {

inline void fnv_bytes(std::uint64_t& h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
}

template <typename T>
inline void fnv_value(std::uint64_t& h, const T& v) {
    fnv_bytes(h, &v, sizeof(v));
}

} // namespace

std::uint64_t TissueGraph::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    fnv_value(h, n);
    for (int i = 0; i < n; ++i) {
        fnv_value(h, volumes[i]);
        for (std::size_t k = 0; k < neighbors[i].size(); ++k) {
            fnv_value(h, neighbors[i][k]);
            fnv_value(h, contact[i][k]);
        }
        for (double l : ghosts[i]) fnv_value(h, l);
    }
    return h;
}

TissueGraph build_line(int n, double V, double l, BoundaryKind left, BoundaryKind right) {
    if (n < 3) throw InvalidGeometryError("build_line: need at least 3 cells, got " + std::to_string(n));
    if (!(V > 0.0) || !(l > 0.0)) throw InvalidGeometryError("build_line: V and l must be positive");

    TissueGraph g;
    g.n = n;
    g.neighbors.resize(n);
    g.contact.resize(n);
    g.ghosts.resize(n);
    g.volumes.assign(n, V);
    g.labels.assign(n, "interior");
    g.centroids.resize(n);
    for (int i = 0; i < n; ++i) {
        if (i > 0) { g.neighbors[i].push_back(i - 1); g.contact[i].push_back(l); }
        if (i < n - 1) { g.neighbors[i].push_back(i + 1); g.contact[i].push_back(l); }
        g.centroids[i] = {static_cast<double>(i), 0.0};
    }
    if (left == BoundaryKind::NeumannGhost) g.ghosts[0].push_back(l);
    if (right == BoundaryKind::NeumannGhost) g.ghosts[n - 1].push_back(l);
    g.labels[0] = g.labels[n - 1] = "edge";
    g.bc_note = "line:" + to_string(left) + "," + to_string(right);
    g.finalize();
    g.validate();
    return g;
}

TissueGraph build_ring(int n, double V, double l) {
    if (n < 3) throw InvalidGeometryError("build_ring: need at least 3 cells, got " + std::to_string(n));
    if (!(V > 0.0) || !(l > 0.0)) throw InvalidGeometryError("build_ring: V and l must be positive");

    TissueGraph g;
    g.n = n;
    g.neighbors.resize(n);
    g.contact.resize(n);
    g.ghosts.resize(n);
    g.volumes.assign(n, V);
    g.labels.assign(n, "interior");
    for (int i = 0; i < n; ++i) {
        g.neighbors[i] = {(i + n - 1) % n, (i + 1) % n};
        g.contact[i] = {l, l};
    }
    g.bc_note = "ring";
    g.finalize();
    g.validate();
    return g;
}

TissueGraph build_hex_grid(int rows, int cols, double l) {
    if (rows < 3 || cols < 3)
        throw InvalidGeometryError("build_hex_grid: need rows >= 3 and cols >= 3");
    if (!(l > 0.0)) throw InvalidGeometryError("build_hex_grid: l must be positive");

    const int n = rows * cols;
    const double V = 1.5 * std::sqrt(3.0) * l * l; // 3*sqrt(3)/2 * l^2
    TissueGraph g;
    g.n = n;
    g.neighbors.resize(n);
    g.contact.resize(n);
    g.ghosts.resize(n);
    g.volumes.assign(n, V);
    g.labels.assign(n, "interior");
    g.centroids.resize(n);

    auto id = [cols](int r, int c) { return r * cols + c; };
    auto in = [rows, cols](int r, int c) { return r >= 0 && r < rows && c >= 0 && c < cols; };

    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const bool odd = (r % 2) != 0;
            // pointy-top hexagons, odd rows shifted left by half a cell; this
            // orientation puts the strongest geometric pre-factors at the
            // top-left and bottom-right corners
            const std::array<std::array<int, 2>, 6> off = odd
                ? std::array<std::array<int, 2>, 6>{{{0, -1}, {0, 1}, {-1, -1}, {-1, 0}, {1, -1}, {1, 0}}}
                : std::array<std::array<int, 2>, 6>{{{0, -1}, {0, 1}, {-1, 0}, {-1, 1}, {1, 0}, {1, 1}}};
            for (const auto& d : off) {
                const int rr = r + d[0], cc = c + d[1];
                if (in(rr, cc)) {
                    g.neighbors[id(r, c)].push_back(id(rr, cc));
                    g.contact[id(r, c)].push_back(l);
                }
            }
            g.centroids[id(r, c)] = {std::sqrt(3.0) * l * (c - (odd ? 0.5 : 0.0)), 1.5 * l * r};
        }
    }
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const bool br = (r == 0 || r == rows - 1), bc = (c == 0 || c == cols - 1);
            if (br && bc) g.labels[id(r, c)] = "corner";
            else if (br || bc) g.labels[id(r, c)] = "edge";
        }
    g.bc_note = "free";
    g.finalize();
    g.validate();
    return g;
}

// ---------------------------------------------------------------------------
// JSON schema:
// { "n": int,
//   "cells": [{ "id": int, "volume": float, "neighbors": [int],
//               "contact": [float], "label": string,
//               "centroid": [x, y]?, "ghosts": [float]? }, ...],
//   "meta": { "mean_contact": float, "mean_volume": float, "bc": {...} } }
// ---------------------------------------------------------------------------

std::string tissue_to_json(const TissueGraph& g) {
    json j;
    j["n"] = g.n;
    json cells = json::array();
    for (int i = 0; i < g.n; ++i) {
        json c;
        c["id"] = i;
        c["volume"] = g.volumes[i];
        c["neighbors"] = g.neighbors[i];
        c["contact"] = g.contact[i];
        c["label"] = g.labels[i];
        if (!g.ghosts[i].empty()) c["ghosts"] = g.ghosts[i];
        if (g.has_centroids()) c["centroid"] = {g.centroids[i][0], g.centroids[i][1]};
        cells.push_back(std::move(c));
    }
    j["cells"] = std::move(cells);
    j["meta"] = {{"mean_contact", g.mean_contact},
                 {"mean_volume", g.mean_volume},
                 {"bc", {{"note", g.bc_note}}}};
    return j.dump(2);
}

TissueGraph tissue_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("tissue JSON: ") + e.what());
    }

    TissueGraph g;
    try {
        g.n = j.at("n").get<int>();
        if (g.n <= 0) throw ParseError("tissue JSON: n must be positive");
        const auto& cells = j.at("cells");
        if (!cells.is_array() || static_cast<int>(cells.size()) != g.n)
            throw ParseError("tissue JSON: 'cells' must be an array of length n");
        g.neighbors.resize(g.n);
        g.contact.resize(g.n);
        g.ghosts.resize(g.n);
        g.volumes.assign(g.n, 0.0);
        g.labels.assign(g.n, "");
        bool any_centroid = false;
        std::vector<std::array<double, 2>> cents(g.n, {0.0, 0.0});
        for (const auto& c : cells) {
            const int i = c.at("id").get<int>();
            if (i < 0 || i >= g.n) throw ParseError("tissue JSON: cell id " + std::to_string(i) + " out of range");
            g.volumes[i] = c.at("volume").get<double>();
            if (!(g.volumes[i] > 0.0))
                throw ParseError("tissue JSON: cell " + std::to_string(i) + " has nonpositive volume");
            g.neighbors[i] = c.at("neighbors").get<std::vector<int>>();
            g.contact[i] = c.at("contact").get<std::vector<double>>();
            if (g.neighbors[i].size() != g.contact[i].size())
                throw ParseError("tissue JSON: cell " + std::to_string(i) + ": neighbors/contact length mismatch");
            g.labels[i] = c.value("label", std::string("custom"));
            if (c.contains("ghosts")) g.ghosts[i] = c.at("ghosts").get<std::vector<double>>();
            if (c.contains("centroid")) {
                const auto& ct = c.at("centroid");
                cents[i] = {ct.at(0).get<double>(), ct.at(1).get<double>()};
                any_centroid = true;
            }
        }
        if (any_centroid) g.centroids = std::move(cents);
        if (j.contains("meta") && j["meta"].contains("bc") && j["meta"]["bc"].contains("note"))
            g.bc_note = j["meta"]["bc"]["note"].get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("tissue JSON: ") + e.what());
    }

    // explicit symmetry check with edge naming, before the generic validate
    for (int i = 0; i < g.n; ++i) {
        for (std::size_t k = 0; k < g.neighbors[i].size(); ++k) {
            const int jn = g.neighbors[i][k];
            if (jn < 0 || jn >= g.n)
                throw ParseError("tissue JSON: cell " + std::to_string(i) + " references invalid neighbour " + std::to_string(jn));
            const auto& back = g.neighbors[jn];
            auto it = std::find(back.begin(), back.end(), i);
            if (it == back.end())
                throw ParseError("tissue JSON: asymmetric adjacency on edge (" + std::to_string(i) + "," + std::to_string(jn) + ")");
            const std::size_t kj = static_cast<std::size_t>(it - back.begin());
            if (g.contact[jn][kj] != g.contact[i][k])
                throw ParseError("tissue JSON: l_ij != l_ji on edge (" + std::to_string(i) + "," + std::to_string(jn) + ")");
        }
    }

    g.finalize();
    if (j.contains("meta")) {
        const auto& meta = j["meta"];
        auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * (1.0 + std::abs(b)); };
        if (meta.contains("mean_contact") && !close(meta["mean_contact"].get<double>(), g.mean_contact))
            throw ParseError("tissue JSON: meta.mean_contact does not match stored contacts");
        if (meta.contains("mean_volume") && !close(meta["mean_volume"].get<double>(), g.mean_volume))
            throw ParseError("tissue JSON: meta.mean_volume does not match stored volumes");
    }
    try {
        g.validate();
    } catch (const InvalidGeometryError& e) {
        throw ParseError(std::string("tissue JSON: ") + e.what());
    }
    return g;
}

void save_tissue(const TissueGraph& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out << tissue_to_json(g) << '\n';
}

TissueGraph load_tissue(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return tissue_from_json(ss.str());
}

} // namespace meristem

#include "meristem/tissue.hpp"
#include "meristem/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

namespace meristem {

namespace {

struct Vec2 {
    double x = 0, y = 0;
};

inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double dist2(Vec2 a, Vec2 b) { return dot(a - b, a - b); }

// Convex cell polygon; owner[k] identifies what produced the edge from
// vertex k to vertex k+1: a bisector with point j (owner = j) or the disc
// boundary (owner = -1).
struct CellPoly {
    std::vector<Vec2> v;
    std::vector<int> owner;
};

// Clip polygon by the half-plane dot(nrm, x) <= c, tagging the cut edge.
void clip(CellPoly& poly, Vec2 nrm, double c, int cut_owner) {
    const std::size_t k = poly.v.size();
    if (k == 0) return;
    std::vector<Vec2> nv;
    std::vector<int> no;
    nv.reserve(k + 2);
    no.reserve(k + 2);
    for (std::size_t a = 0; a < k; ++a) {
        const std::size_t b = (a + 1) % k;
        const Vec2 A = poly.v[a], B = poly.v[b];
        const double da = dot(nrm, A) - c, db = dot(nrm, B) - c;
        const bool ain = da <= 0.0, bin = db <= 0.0;
        if (ain) {
            nv.push_back(A);
            no.push_back(poly.owner[a]);
            if (!bin) {
                const double t = da / (da - db);
                nv.push_back(A + t * (B - A));
                no.push_back(cut_owner);
            }
        } else if (bin) {
            const double t = da / (da - db);
            nv.push_back(A + t * (B - A));
            no.push_back(poly.owner[a]);
        }
    }
    poly.v = std::move(nv);
    poly.owner = std::move(no);
}

double polygon_area(const CellPoly& p) {
    double a = 0.0;
    const std::size_t k = p.v.size();
    for (std::size_t i = 0; i < k; ++i) {
        const Vec2& u = p.v[i];
        const Vec2& w = p.v[(i + 1) % k];
        a += u.x * w.y - w.x * u.y;
    }
    return 0.5 * a;
}

Vec2 polygon_centroid(const CellPoly& p) {
    double a = 0.0, cx = 0.0, cy = 0.0;
    const std::size_t k = p.v.size();
    for (std::size_t i = 0; i < k; ++i) {
        const Vec2& u = p.v[i];
        const Vec2& w = p.v[(i + 1) % k];
        const double cross = u.x * w.y - w.x * u.y;
        a += cross;
        cx += (u.x + w.x) * cross;
        cy += (u.y + w.y) * cross;
    }
    if (std::abs(a) < 1e-300) return p.v.empty() ? Vec2{} : p.v[0];
    return {cx / (3.0 * a), cy / (3.0 * a)};
}

// Portable uniform double in [0,1) from the raw engine stream.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Voronoi cell of point i, clipped to the disc polygon.
CellPoly voronoi_cell(int i, const std::vector<Vec2>& pts, const CellPoly& disc,
                      std::vector<int>& order, std::vector<double>& d2) {
    const int n = static_cast<int>(pts.size());
    const Vec2 pi = pts[i];
    for (int j = 0; j < n; ++j) d2[j] = dist2(pi, pts[j]);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return d2[a] < d2[b]; });

    CellPoly poly = disc;
    double max_r2 = 0.0;
    for (const Vec2& v : poly.v) max_r2 = std::max(max_r2, dist2(pi, v));
    for (int idx = 0; idx < n; ++idx) {
        const int j = order[idx];
        if (j == i) continue;
        // points beyond twice the farthest vertex cannot cut the cell
        if (d2[j] > 4.0 * max_r2) break;
        if (d2[j] < 1e-24) continue; // coincident seed; leave for the retry logic
        const Vec2 nrm = pts[j] - pi;
        const double c = dot(nrm, 0.5 * (pi + pts[j]));
        const std::size_t before = poly.v.size();
        clip(poly, nrm, c, j);
        if (poly.v.size() != before || poly.v.empty()) {
            if (poly.v.empty()) break;
            max_r2 = 0.0;
            for (const Vec2& v : poly.v) max_r2 = std::max(max_r2, dist2(pi, v));
        }
    }
    return poly;
}

TissueGraph try_build(int n, double radius, std::uint64_t seed, const VoronoiOptions& opts) {
    std::mt19937_64 rng(seed);

    // seed points uniformly in the disc
    std::vector<Vec2> pts(n);
    for (auto& p : pts) {
        const double r = radius * std::sqrt(uniform01(rng));
        const double th = 2.0 * std::numbers::pi * uniform01(rng);
        p = {r * std::cos(th), r * std::sin(th)};
    }

    // disc approximated by a regular polygon
    CellPoly disc;
    for (int k = 0; k < opts.boundary_segments; ++k) {
        const double th = 2.0 * std::numbers::pi * k / opts.boundary_segments;
        disc.v.push_back({radius * std::cos(th), radius * std::sin(th)});
        disc.owner.push_back(-1);
    }

    std::vector<int> order(n);
    std::vector<double> d2(n);

    // Lloyd relaxation
    for (int it = 0; it < opts.lloyd_iterations; ++it) {
        std::vector<Vec2> next(n);
        for (int i = 0; i < n; ++i) {
            CellPoly poly = voronoi_cell(i, pts, disc, order, d2);
            next[i] = poly.v.size() >= 3 ? polygon_centroid(poly) : pts[i];
        }
        pts = std::move(next);
    }

    // final tessellation
    const double eps_len = 1e-7 * radius;
    std::map<std::pair<int, int>, double> shared; // (i<j) -> edge length
    std::vector<double> areas(n, 0.0);
    std::vector<bool> touches_boundary(n, false);
    std::vector<Vec2> cents(n);
    for (int i = 0; i < n; ++i) {
        CellPoly poly = voronoi_cell(i, pts, disc, order, d2);
        if (poly.v.size() < 3) throw InvalidGeometryError("degenerate Voronoi cell " + std::to_string(i));
        areas[i] = polygon_area(poly);
        cents[i] = polygon_centroid(poly);
        const std::size_t k = poly.v.size();
        for (std::size_t e = 0; e < k; ++e) {
            const int o = poly.owner[e];
            const double len = std::sqrt(dist2(poly.v[e], poly.v[(e + 1) % k]));
            if (o < 0) {
                if (len > eps_len) touches_boundary[i] = true;
                continue;
            }
            if (len <= eps_len) continue;
            const auto key = std::minmax(i, o);
            // keep the value computed from the lower-index cell so l_ij = l_ji exactly
            if (i == key.first) shared[{key.first, key.second}] = std::max(shared[{key.first, key.second}], len);
            else shared.emplace(std::pair<int, int>{key.first, key.second}, len);
        }
    }

    TissueGraph g;
    g.n = n;
    g.neighbors.resize(n);
    g.contact.resize(n);
    g.ghosts.resize(n);
    g.volumes = areas; // prismatic cells of unit depth
    g.labels.resize(n);
    g.centroids.resize(n);
    const double inv2w = 1.0 / (2.0 * opts.wall_thickness);
    for (const auto& [key, len] : shared) {
        const auto [i, j] = key;
        const double l = len * inv2w;
        g.neighbors[i].push_back(j);
        g.contact[i].push_back(l);
        g.neighbors[j].push_back(i);
        g.contact[j].push_back(l);
    }
    for (int i = 0; i < n; ++i) {
        if (!(areas[i] > 1e-9 * radius * radius))
            throw InvalidGeometryError("degenerate Voronoi cell " + std::to_string(i) + " (zero area)");
        g.labels[i] = touches_boundary[i] ? "edge" : "interior";
        g.centroids[i] = {cents[i].x, cents[i].y};
    }
    g.bc_note = "free";
    g.finalize();
    g.validate();
    return g;
}

} // namespace

TissueGraph build_voronoi_disc(int n_target, double radius, std::uint64_t seed,
                               const VoronoiOptions& opts) {
    if (n_target < 10) throw InvalidGeometryError("build_voronoi_disc: need n_target >= 10");
    if (!(radius > 0.0)) throw InvalidGeometryError("build_voronoi_disc: radius must be positive");

    std::string last;
    for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
        try {
            return try_build(n_target, radius, seed + 0x9e3779b97f4a7c15ull * attempt, opts);
        } catch (const InvalidGeometryError& e) {
            last = e.what();
        }
    }
    throw InvalidGeometryError("build_voronoi_disc: persistent degenerate tessellation after " +
                               std::to_string(opts.max_attempts) + " attempts (" + last + ")");
}

} // namespace meristem

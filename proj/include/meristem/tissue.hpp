#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace meristem {

// Boundary treatment for tissue builders. A Neumann side is realised with a
// mirror ghost cell: the ghost copies the boundary cell's state, contributes
// to the effective neighbour count and to the carrier-allocation denominator,
// exchanges zero net flux (diffusive and active) with its host.
// A free side simply has no outer neighbour.
enum class BoundaryKind { NeumannGhost, Free };

std::string to_string(BoundaryKind k);
BoundaryKind boundary_kind_from_string(const std::string& s);

// Static cell adjacency with per-cell volumes V_i (um^3) and per-edge contact
// ratios l_ij (um). Immutable after construction; all fields are plain data so
// the graph can be shared freely across threads.
struct TissueGraph {
    int n = 0;
    std::vector<std::vector<int>> neighbors;    // ordered neighbour lists N_i
    std::vector<std::vector<double>> contact;   // l_ij aligned with neighbors[i]
    std::vector<double> volumes;                // V_i
    std::vector<std::string> labels;            // interior / edge / corner / custom
    std::vector<std::vector<double>> ghosts;    // mirror-ghost contacts per cell
    std::vector<std::array<double, 2>> centroids; // optional (empty if unknown)
    double mean_contact = 0.0;                  // <l_ij> over physical edges
    double mean_volume = 0.0;                   // <V_i>
    std::string bc_note = "free";

    int degree(int i) const { return static_cast<int>(neighbors[i].size()); }
    int ghost_count(int i) const { return static_cast<int>(ghosts[i].size()); }
    // Neighbour count including mirror ghosts; this is the |N_i| entering the
    // geometric coefficients and the carrier-allocation denominators.
    int effective_degree(int i) const { return degree(i) + ghost_count(i); }
    double ghost_contact_sum(int i) const;

    int edge_count() const; // undirected physical edges

    // All volumes equal and all contacts equal (bitwise); the regime in which
    // the small-transport expansion applies.
    bool is_regular() const;

    bool has_centroids() const { return !centroids.empty(); }

    // Recompute mean_contact / mean_volume from stored values.
    void finalize();
    // Check every structural invariant; throws InvalidGeometryError.
    void validate() const;

    // Structural fingerprint (FNV-1a over adjacency, volumes and contacts).
    std::uint64_t fingerprint() const;
};

// A row of n identical cells of volume V and contact l. With a Neumann ghost
// on the left and a free right end, every cell effectively has 2 neighbours
// except the last, which has 1.
TissueGraph build_line(int n, double V, double l, BoundaryKind left, BoundaryKind right);

// Periodic ring of n identical cells (every cell has exactly 2 neighbours);
// used for regression tests of the homogeneous branch.
TissueGraph build_ring(int n, double V, double l);

// rows x cols hexagonal cells in offset rows (odd rows shifted right), free
// boundaries. Interior degree 6, top/bottom edges 4, left/right edges carry
// the degree-3 cells; with an even row count the two degree-2 corners sit at
// top-left and bottom-right. V_i = 3*sqrt(3)/2 * l^2.
TissueGraph build_hex_grid(int rows, int cols, double l);

struct VoronoiOptions {
    int lloyd_iterations = 30;
    double wall_thickness = 0.4;   // W in l_ij = S_ij / (2 W)
    int boundary_segments = 64;    // disc approximated by a regular polygon
    int max_attempts = 5;          // reseeds on degenerate tessellations
};

// Irregular tissue: Lloyd-relaxed Voronoi cells of seeded random points in a
// disc. Prismatic cells of unit depth: V_i = polygon area, l_ij = shared edge
// length / (2 * wall thickness). Deterministic for a fixed seed.
TissueGraph build_voronoi_disc(int n_target, double radius, std::uint64_t seed,
                               const VoronoiOptions& opts = {});

// JSON (de)serialisation; load(save(g)) reproduces g bit-exactly.
void save_tissue(const TissueGraph& g, const std::string& path);
TissueGraph load_tissue(const std::string& path);

std::string tissue_to_json(const TissueGraph& g);
TissueGraph tissue_from_json(const std::string& text);

} // namespace meristem

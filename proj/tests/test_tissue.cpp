#include "doctest.h"

#include "meristem/errors.hpp"
#include "meristem/tissue.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>

using namespace meristem;

namespace {

std::multiset<int> degree_multiset(const TissueGraph& g) {
    std::multiset<int> out;
    for (int i = 0; i < g.n; ++i) out.insert(g.degree(i));
    return out;
}

} // namespace

TEST_CASE("line: paper boundary structure (Neumann left, free right)") {
    const auto g = build_line(150, 1.0, 1.0, BoundaryKind::NeumannGhost, BoundaryKind::Free);
    CHECK(g.n == 150);
    CHECK(g.degree(149) == 1);
    CHECK(g.effective_degree(149) == 1);
    for (int i = 0; i < 149; ++i) CHECK(g.effective_degree(i) == 2);
    CHECK(g.ghost_count(0) == 1);
    CHECK(g.mean_contact == 1.0);
    CHECK(g.mean_volume == 1.0);
}

TEST_CASE("line: smallest free/free path") {
    const auto g = build_line(3, 1.0, 1.0, BoundaryKind::Free, BoundaryKind::Free);
    CHECK(g.degree(0) == 1);
    CHECK(g.degree(1) == 2);
    CHECK(g.degree(2) == 1);
}

TEST_CASE("line: P5 degree sequence") {
    // hand enumeration of the path graph on 5 vertices: degrees 1,2,2,2,1
    const auto g = build_line(5, 2.0, 0.5, BoundaryKind::Free, BoundaryKind::Free);
    const std::multiset<int> expect{1, 2, 2, 2, 1};
    CHECK(degree_multiset(g) == expect);
    const auto gn = build_line(5, 2.0, 0.5, BoundaryKind::NeumannGhost, BoundaryKind::Free);
    CHECK(gn.effective_degree(0) == 2);
    CHECK(gn.degree(0) == 1);
}

TEST_CASE("line: rejects n < 3") {
    CHECK_THROWS_AS(build_line(2, 1.0, 1.0, BoundaryKind::Free, BoundaryKind::Free),
                    InvalidGeometryError);
}

TEST_CASE("hex 3x3 adjacency matches hand enumeration") {
    // offset rows, odd row shifted left; ids r*3+c
    const auto g = build_hex_grid(3, 3, 1.0);
    const std::map<int, std::set<int>> expect = {
        {0, {1, 3, 4}},       {1, {0, 2, 4, 5}},       {2, {1, 5}},
        {3, {4, 0, 6}},       {4, {3, 5, 0, 1, 6, 7}}, {5, {4, 1, 2, 7, 8}},
        {6, {7, 3, 4}},       {7, {6, 8, 4, 5}},       {8, {7, 5}},
    };
    REQUIRE(g.n == 9);
    for (const auto& [cell, nbrs] : expect) {
        std::set<int> got(g.neighbors[cell].begin(), g.neighbors[cell].end());
        CHECK(got == nbrs);
    }
    CHECK(g.volumes[0] == doctest::Approx(1.5 * std::sqrt(3.0)).epsilon(1e-15));
}

TEST_CASE("hex grids: degree census closed forms (even row count)") {
    for (int rows : {4, 6, 14}) {
        for (int cols : {3, 5, 14}) {
            const auto g = build_hex_grid(rows, cols, 1.0);
            std::map<int, int> census;
            for (int i = 0; i < g.n; ++i) ++census[g.degree(i)];
            CHECK(census[2] == 2);                       // top-left and bottom-right corners
            CHECK(census[3] == 2 + (rows - 2));          // two corners + left/right edge cells
            CHECK(census[4] == 2 * (cols - 2));          // top and bottom edges
            CHECK(census[5] == rows - 2);                // protruding left/right edge cells
            CHECK(census[6] == (rows - 2) * (cols - 2)); // interior
        }
    }
}

TEST_CASE("hex grids: handshake lemma") {
    for (int rows : {3, 4, 7}) {
        for (int cols : {3, 6, 9}) {
            const auto g = build_hex_grid(rows, cols, 1.0);
            int total = 0;
            for (int i = 0; i < g.n; ++i) total += g.degree(i);
            CHECK(total % 2 == 0);
        }
    }
}

TEST_CASE("hex 50x50: paper Fig-8 structure") {
    const auto g = build_hex_grid(50, 50, 1.0);
    CHECK(g.n == 2500);
    // interior cells have 6 neighbours; the left edge carries the degree-3 cells
    CHECK(g.degree(25 * 50 + 25) == 6);
    int deg3_left = 0;
    for (int r = 0; r < 50; ++r)
        if (g.degree(r * 50) == 3) ++deg3_left;
    CHECK(deg3_left > 0);
    // asymmetric corners: top-left degree 3, top-right degree 2
    CHECK(g.degree(0) == 3);
    CHECK(g.degree(49) == 2);
    CHECK(g.degree(49 * 50) == 2);
    CHECK(g.degree(49 * 50 + 49) == 3);
}

TEST_CASE("voronoi: determinism for a fixed seed") {
    const auto a = build_voronoi_disc(40, 10.0, 7);
    const auto b = build_voronoi_disc(40, 10.0, 7);
    CHECK(a.fingerprint() == b.fingerprint());
    const auto c = build_voronoi_disc(40, 10.0, 8);
    CHECK(a.fingerprint() != c.fingerprint());
}

TEST_CASE("voronoi: small instance is symmetric and connected") {
    const auto g = build_voronoi_disc(12, 5.0, 3);
    CHECK(g.n == 12);
    CHECK_NOTHROW(g.validate()); // symmetry, connectivity, positivity
    for (int i = 0; i < g.n; ++i) CHECK(g.labels[i].size() > 0);
}

TEST_CASE("voronoi: 742-cell disc calibrated to the paper's mean contact") {
    // radius chosen so that <V_i> ~ 294 um^3
    const double radius = std::sqrt(742.0 * 294.0 / std::numbers::pi);
    const auto g = build_voronoi_disc(742, radius, 11);
    CHECK(g.n == 742);
    CHECK(std::abs(g.mean_contact - 13.26) / 13.26 < 0.20);
    CHECK(std::abs(g.mean_volume - 294.0) / 294.0 < 0.10);
}

TEST_CASE("tissue JSON round-trip is bit-exact") {
    const auto g = build_hex_grid(3, 3, 0.75);
    const auto h = tissue_from_json(tissue_to_json(g));
    CHECK(h.n == g.n);
    CHECK(h.neighbors == g.neighbors);
    CHECK(h.contact == g.contact);
    CHECK(h.volumes == g.volumes);
    CHECK(h.labels == g.labels);
    CHECK(h.ghosts == g.ghosts);
    CHECK(h.centroids == g.centroids);
    CHECK(h.mean_contact == g.mean_contact);
    CHECK(h.mean_volume == g.mean_volume);
    CHECK(h.bc_note == g.bc_note);
    CHECK(h.fingerprint() == g.fingerprint());

    // and through the filesystem
    const auto path = std::filesystem::temp_directory_path() / "meristem_tissue_rt.json";
    save_tissue(g, path.string());
    const auto k = load_tissue(path.string());
    CHECK(k.fingerprint() == g.fingerprint());
    std::filesystem::remove(path);
}

TEST_CASE("tissue JSON: asymmetric contact is rejected with the edge named") {
    const char* bad = R"({
      "n": 2,
      "cells": [
        {"id": 0, "volume": 1.0, "neighbors": [1], "contact": [1.0], "label": "a"},
        {"id": 1, "volume": 1.0, "neighbors": [0], "contact": [2.0], "label": "b"}
      ]})";
    try {
        tissue_from_json(bad);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("l_ij != l_ji") != std::string::npos);
        CHECK(msg.find("(0,1)") != std::string::npos);
    }
}

TEST_CASE("tissue JSON: nonpositive volume is rejected with the cell named") {
    const char* bad = R"({
      "n": 2,
      "cells": [
        {"id": 0, "volume": -1.0, "neighbors": [1], "contact": [1.0], "label": "a"},
        {"id": 1, "volume": 1.0, "neighbors": [0], "contact": [1.0], "label": "b"}
      ]})";
    try {
        tissue_from_json(bad);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("cell 0") != std::string::npos);
    }
}

TEST_CASE("tissue JSON: hand-written 4-cell square graph loads with degrees 2,2,2,2") {
    const char* square = R"({
      "n": 4,
      "cells": [
        {"id": 0, "volume": 1.0, "neighbors": [1, 3], "contact": [1.0, 1.0], "label": "c"},
        {"id": 1, "volume": 1.0, "neighbors": [0, 2], "contact": [1.0, 1.0], "label": "c"},
        {"id": 2, "volume": 1.0, "neighbors": [1, 3], "contact": [1.0, 1.0], "label": "c"},
        {"id": 3, "volume": 1.0, "neighbors": [2, 0], "contact": [1.0, 1.0], "label": "c"}
      ]})";
    const auto g = tissue_from_json(square);
    for (int i = 0; i < 4; ++i) CHECK(g.degree(i) == 2);
}

TEST_CASE("builders validate their outputs") {
    for (const auto& g : {build_line(10, 1.0, 1.0, BoundaryKind::NeumannGhost, BoundaryKind::Free),
                          build_ring(8, 1.0, 1.0), build_hex_grid(4, 5, 1.0),
                          build_voronoi_disc(25, 6.0, 1)}) {
        CHECK_NOTHROW(g.validate());
        for (int i = 0; i < g.n; ++i) {
            CHECK(g.volumes[i] > 0.0);
            for (double l : g.contact[i]) CHECK(l > 0.0);
        }
    }
}

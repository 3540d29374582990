#pragma once

// Lane-piece fixtures shared by the preprocess unit tests and the
// acceptance run, with their hand-enumerated merge results.

#include <set>
#include <utility>
#include <vector>

#include "laneseg/preprocess.hpp"
#include "test_util.hpp"

namespace fixture {

using namespace laneseg;

inline constexpr auto S = LineType::Solid;
inline constexpr auto D = LineType::Dashed;

inline LanePiece piece(int id, double x0, double x1, double y, std::vector<int> succ, LineType l = S, LineType r = D,
                       bool inter = false) {
    LanePiece p;
    p.segment = testutil::straight_lane(id, x0, x1, y, 1.75, 4, l, r);
    p.successors = std::move(succ);
    p.in_intersection = inter;
    return p;
}

inline std::vector<std::vector<LanePiece>> fixtures() {
    return {
        // chain
        {piece(1, 0, 10, 0, {2}), piece(2, 10, 20, 0, {3}), piece(3, 20, 30, 0, {})},
        // diverge: 1 -> 2 -> {3, 4}, 3 -> 5
        {piece(1, 0, 10, 0, {2}), piece(2, 10, 20, 0, {3, 4}), piece(3, 20, 30, 0, {5}), piece(4, 20, 30, -3.5, {}),
         piece(5, 30, 40, 0, {})},
        // merge: {1, 2} -> 3 -> 4
        {piece(1, 0, 10, 0, {3}), piece(2, 0, 10, -3.5, {3}), piece(3, 10, 20, 0, {4}), piece(4, 20, 30, 0, {})},
        // type change: 1 (S/D) -> 2 (D/D) -> 3 (D/D)
        {piece(1, 0, 10, 0, {2}, S, D), piece(2, 10, 20, 0, {3}, D, D), piece(3, 20, 30, 0, {}, D, D)},
        // intersection border: 1 -> 2 (inside) -> 3 (inside) -> 4 (outside)
        {piece(1, 0, 10, 0, {2}), piece(2, 10, 20, 0, {3}, S, D, true), piece(3, 20, 30, 0, {4}, S, D, true),
         piece(4, 30, 40, 0, {})},
    };
}

struct ExpectedGraph {
    std::set<int> ids;
    std::set<std::pair<int, int>> edges;
};

/// Merge results for fixtures(), worked out by hand from the stop rules.
inline std::vector<ExpectedGraph> expected_merges() {
    return {
        {{1}, {}},
        {{1, 3, 4}, {{1, 3}, {1, 4}}},
        {{1, 2, 3}, {{1, 3}, {2, 3}}},
        {{1, 2}, {{1, 2}}},
        {{1, 2, 4}, {{1, 2}, {2, 4}}},
    };
}

}  // namespace fixture

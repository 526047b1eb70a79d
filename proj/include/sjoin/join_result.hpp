#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

namespace sjoin {

using IdPair = std::pair<std::uint32_t, std::uint32_t>;

// Qualifying (id_r, id_s) pairs. Every join algorithm emits each pair exactly
// once, so `pairs` is duplicate-free by construction; equality is on the set,
// not the emission order.
struct JoinResult {
    std::vector<IdPair> pairs;

    std::size_t size() const { return pairs.size(); }

    std::vector<IdPair> sorted_pairs() const {
        std::vector<IdPair> out = pairs;
        std::sort(out.begin(), out.end());
        return out;
    }
};

inline bool same_pairs(const JoinResult& a, const JoinResult& b) {
    return a.sorted_pairs() == b.sorted_pairs();
}

struct JoinStats {
    // Candidate-pair evaluations: all n_r*n_s pairs in a nested loop, the
    // y-overlap tests in a plane sweep, entry-pair tests during traversal.
    std::uint64_t predicate_evals = 0;
    // Node pairs visited per tree depth (synchronous traversal only).
    std::vector<std::uint64_t> tasks_per_level;
};

enum class SchedulePolicy { kStatic, kDynamic };

}  // namespace sjoin

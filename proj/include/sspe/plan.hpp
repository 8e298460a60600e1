#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "sspe/rng.hpp"

namespace sspe {

// Token indices are 1-based (#1..#P, raster order) throughout, matching the
// grid numbering used by the plans and the exchange strategy.
struct KeySet {
    std::vector<int> indices;  // sorted, unique

    KeySet() = default;
    explicit KeySet(std::vector<int> idx) : indices(std::move(idx)) {
        std::sort(indices.begin(), indices.end());
        indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    }

    bool contains(int k) const {
        return std::binary_search(indices.begin(), indices.end(), k);
    }

    std::size_t size() const { return indices.size(); }

    void validate(int num_patches) const {
        for (int k : indices)
            if (k < 1 || k > num_patches)
                throw std::invalid_argument("key index " + std::to_string(k) +
                                            " out of range 1.." + std::to_string(num_patches));
    }
};

// assignment[k-1] is the PE row handed to token #k (rows 1..P; row 0 belongs
// to the class token). Entry kNoPe marks a dropped position embedding.
// `fixed` records which slots were pinned when the plan was drawn.
struct PositionPlan {
    static constexpr int kNoPe = 0;

    std::vector<int> assignment;
    std::vector<int> fixed;

    static PositionPlan identity(int num_patches) {
        PositionPlan p;
        p.assignment.resize(static_cast<std::size_t>(num_patches));
        for (int k = 1; k <= num_patches; ++k) p.assignment[static_cast<std::size_t>(k) - 1] = k;
        return p;
    }

    int num_patches() const { return static_cast<int>(assignment.size()); }

    int row_for_token(int k) const { return assignment[static_cast<std::size_t>(k) - 1]; }

    bool is_permutation() const {
        std::vector<bool> seen(assignment.size(), false);
        for (int v : assignment) {
            if (v < 1 || v > num_patches()) return false;
            if (seen[static_cast<std::size_t>(v) - 1]) return false;
            seen[static_cast<std::size_t>(v) - 1] = true;
        }
        return true;
    }

    bool has_holes() const {
        return std::find(assignment.begin(), assignment.end(), kNoPe) != assignment.end();
    }
};

// Key slots keep their own PE row; the remaining rows are uniformly permuted
// over the remaining slots. An empty key set shuffles every patch.
inline PositionPlan make_sspe_plan(int num_patches, const KeySet& key_set, Rng& rng) {
    key_set.validate(num_patches);
    PositionPlan plan = PositionPlan::identity(num_patches);
    plan.fixed = key_set.indices;
    std::vector<int> free_slots;
    for (int k = 1; k <= num_patches; ++k)
        if (!key_set.contains(k)) free_slots.push_back(k);
    std::vector<int> rows = free_slots;
    rng.shuffle(rows);
    for (std::size_t i = 0; i < free_slots.size(); ++i)
        plan.assignment[static_cast<std::size_t>(free_slots[i]) - 1] = rows[i];
    return plan;
}

// Independently drops each non-key assignment with probability `rate`.
inline PositionPlan pe_dropout_plan(const PositionPlan& plan, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("pe_dropout_plan: rate must lie in [0, 1)");
    PositionPlan out = plan;
    for (int k = 1; k <= plan.num_patches(); ++k) {
        const bool is_key = std::binary_search(plan.fixed.begin(), plan.fixed.end(), k);
        if (is_key) continue;
        if (rng.uniform() < rate) out.assignment[static_cast<std::size_t>(k) - 1] = PositionPlan::kNoPe;
    }
    return out;
}

}  // namespace sspe

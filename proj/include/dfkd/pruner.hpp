#pragma once

#include <limits>
#include <string>
#include <vector>

#include "dfkd/model.hpp"

namespace dfkd {

// Binary keep-mask per prunable tensor (1 = keep, 0 = pruned), in the model's
// layer order, plus the global magnitude threshold that produced it.
struct MaskSet {
    struct Entry {
        std::string name;
        std::vector<std::uint8_t> keep;
    };
    std::vector<Entry> entries;
    float threshold = -std::numeric_limits<float>::infinity();

    const Entry* find(const std::string& name) const;
    std::int64_t total_elements() const;
    std::int64_t pruned_elements() const;
};

// The k-th smallest |w| over all conv/linear weights pooled, k = floor(p * N).
// p = 0 returns -inf (prune nothing). Ties at the threshold are broken by
// stable global index order, lowest indices pruned first.
float global_l1_threshold(const Model& model, float amount);

MaskSet compute_mask(const Model& model, float amount);

// Writes exact 0.0f at pruned positions; kept values are untouched. Idempotent.
void apply_mask(Model& model, const MaskSet& mask);

struct SparsityRow {
    std::string layer;  // tensor name, or "global" for the pooled row
    std::int64_t total = 0;
    std::int64_t zeros = 0;
    double fraction = 0.0;
};

// Per-layer rows plus a final "global" row. With mask == nullptr, counts
// weights that are exactly 0.0 in the model itself.
std::vector<SparsityRow> sparsity_report(const Model& model, const MaskSet* mask);

std::string sparsity_csv(const std::vector<SparsityRow>& rows);

}  // namespace dfkd

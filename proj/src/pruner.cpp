#include "dfkd/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dfkd/error.hpp"

namespace dfkd {

const MaskSet::Entry* MaskSet::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

std::int64_t MaskSet::total_elements() const {
    std::int64_t n = 0;
    for (const auto& e : entries) n += static_cast<std::int64_t>(e.keep.size());
    return n;
}

std::int64_t MaskSet::pruned_elements() const {
    std::int64_t n = 0;
    for (const auto& e : entries)
        for (auto k : e.keep) n += (k == 0);
    return n;
}

namespace {

struct PoolEntry {
    float magnitude;
    std::int64_t global_index;
};

void check_amount(float amount) {
    if (!(amount >= 0.0f && amount < 1.0f))
        throw ConfigError("prune amount must be in [0,1), got " + std::to_string(amount));
}

// Global indices of the floor(p*N) smallest magnitudes, ties broken by index.
std::vector<std::int64_t> pruned_indices(const Model& model, float amount, float* threshold_out) {
    check_amount(amount);
    const auto weights = model.prunable_weights();
    if (weights.empty()) throw ContractError("model has no prunable tensors");

    std::vector<PoolEntry> pool;
    for (const auto& [name, w] : weights) {
        const float* v = w.data();
        for (std::int64_t i = 0; i < w.numel(); ++i)
            pool.push_back({std::fabs(v[i]), static_cast<std::int64_t>(pool.size())});
    }
    const auto total = static_cast<std::int64_t>(pool.size());
    const auto k = static_cast<std::int64_t>(
        std::floor(static_cast<double>(amount) * static_cast<double>(total)));
    if (k == 0) {
        if (threshold_out) *threshold_out = -std::numeric_limits<float>::infinity();
        return {};
    }
    std::sort(pool.begin(), pool.end(), [](const PoolEntry& a, const PoolEntry& b) {
        if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
        return a.global_index < b.global_index;
    });
    if (threshold_out) *threshold_out = pool[static_cast<std::size_t>(k - 1)].magnitude;
    std::vector<std::int64_t> out(static_cast<std::size_t>(k));
    for (std::int64_t i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(i)].global_index;
    return out;
}

}  // namespace

float global_l1_threshold(const Model& model, float amount) {
    float threshold = -std::numeric_limits<float>::infinity();
    pruned_indices(model, amount, &threshold);
    return threshold;
}

MaskSet compute_mask(const Model& model, float amount) {
    MaskSet mask;
    const auto pruned = pruned_indices(model, amount, &mask.threshold);
    const auto weights = model.prunable_weights();
    for (const auto& [name, w] : weights)
        mask.entries.push_back({name, std::vector<std::uint8_t>(
                                          static_cast<std::size_t>(w.numel()), 1)});
    // map global indices back onto per-tensor offsets (entries are in the
    // same layer order the pool was built in)
    std::vector<std::int64_t> starts(weights.size() + 1, 0);
    for (std::size_t i = 0; i < weights.size(); ++i)
        starts[i + 1] = starts[i] + weights[i].second.numel();
    for (const auto g : pruned) {
        const auto it = std::upper_bound(starts.begin(), starts.end(), g) - starts.begin() - 1;
        mask.entries[static_cast<std::size_t>(it)]
            .keep[static_cast<std::size_t>(g - starts[static_cast<std::size_t>(it)])] = 0;
    }
    return mask;
}

void apply_mask(Model& model, const MaskSet& mask) {
    const auto weights = model.prunable_weights();
    if (weights.size() != mask.entries.size())
        throw ContractError("mask entry count does not match model's prunable tensors");
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const auto& entry = mask.entries[i];
        const auto& [name, w] = weights[i];
        if (entry.name != name)
            throw ContractError("mask entry '" + entry.name + "' does not match tensor '" +
                                name + "'");
        if (static_cast<std::int64_t>(entry.keep.size()) != w.numel())
            throw ContractError("mask shape mismatch for '" + name + "'");
        Tensor t = w;
        float* v = t.data();
        for (std::size_t j = 0; j < entry.keep.size(); ++j)
            if (entry.keep[j] == 0) v[j] = 0.0f;
    }
}

std::vector<SparsityRow> sparsity_report(const Model& model, const MaskSet* mask) {
    std::vector<SparsityRow> rows;
    std::int64_t total = 0, zeros = 0;
    const auto weights = model.prunable_weights();
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const auto& [name, w] = weights[i];
        SparsityRow row;
        row.layer = name;
        row.total = w.numel();
        if (mask) {
            if (i >= mask->entries.size() ||
                static_cast<std::int64_t>(mask->entries[i].keep.size()) != w.numel())
                throw ContractError("mask does not align with model for sparsity report");
            for (auto k : mask->entries[i].keep) row.zeros += (k == 0);
        } else {
            const float* v = w.data();
            for (std::int64_t j = 0; j < w.numel(); ++j) row.zeros += (v[j] == 0.0f);
        }
        row.fraction = row.total ? static_cast<double>(row.zeros) / static_cast<double>(row.total)
                                 : 0.0;
        total += row.total;
        zeros += row.zeros;
        rows.push_back(std::move(row));
    }
    SparsityRow global;
    global.layer = "global";
    global.total = total;
    global.zeros = zeros;
    global.fraction = total ? static_cast<double>(zeros) / static_cast<double>(total) : 0.0;
    rows.push_back(std::move(global));
    return rows;
}

std::string sparsity_csv(const std::vector<SparsityRow>& rows) {
    std::ostringstream os;
    os << "layer,total,zeros,fraction\n";
    for (const auto& row : rows) {
        char frac[32];
        std::snprintf(frac, sizeof(frac), "%.6f", row.fraction);
        os << row.layer << "," << row.total << "," << row.zeros << "," << frac << "\n";
    }
    return os.str();
}

}  // namespace dfkd

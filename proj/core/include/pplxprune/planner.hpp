#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pplxprune/selector.hpp"

namespace pplxprune {

struct EpochEntry {
    uint64_t epoch = 0;
    uint64_t shuffle_seed = 0;
    uint64_t tokens = 0; // tokens consumed this epoch (final epoch is partial)
};

// Token-budget arithmetic: how many passes over the available data a budget
// implies, before and after pruning shrinks the pool by the selection rate.
struct BudgetPlan {
    uint64_t param_count = 0; // 0 when the budget was given explicitly
    double overtrain_factor = 1.0;
    uint64_t budget_tokens = 0;    // T
    uint64_t available_tokens = 0; // A
    double selection_rate = 1.0;   // r_s
    double repeats_raw = 0.0;       // T / A
    double repeats_effective = 0.0; // T / (A * r_s)
    // Advisory echo of the observation that returns diminish beyond four
    // repetitions over the pruned pool; never enforced.
    bool exceeds_repeat_threshold = false;
    std::vector<EpochEntry> epoch_schedule;

    void save(const std::filesystem::path& path) const;
};

struct PlanInputs {
    // Either param_count (budget = 20 * params * overtrain_factor) or an
    // explicit budget_tokens; setting both is an error.
    uint64_t param_count = 0;
    uint64_t budget_tokens = 0;
    double overtrain_factor = 1.0;
    uint64_t available_tokens = 0;
    double selection_rate = 1.0;
    uint64_t seed = 0;
};

BudgetPlan plan(const PlanInputs& inputs);

// Deterministic per-epoch shuffle of the selected ids: sort by
// (hash64(epoch_seed, id), id), where epoch_seed comes from the plan's
// schedule. Same (seed, epoch) always yields the same permutation.
std::vector<std::string> epoch_order(const PruneManifest& prune,
                                     uint64_t epoch, uint64_t seed);

uint64_t epoch_shuffle_seed(uint64_t seed, uint64_t epoch);

} // namespace pplxprune

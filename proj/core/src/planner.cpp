#include "pplxprune/planner.hpp"

#include <algorithm>
#include <cmath>

#include "pplxprune/errors.hpp"
#include "pplxprune/hashing.hpp"
#include "pplxprune/io.hpp"

namespace pplxprune {

namespace {

// Keeps plan.json bounded; a schedule past this is a misconfigured budget,
// not a training plan anyone will execute.
constexpr uint64_t kMaxEpochs = 1'000'000;

} // namespace

BudgetPlan plan(const PlanInputs& inputs) {
    if ((inputs.param_count == 0) == (inputs.budget_tokens == 0)) {
        throw ConfigError("set exactly one of param count and budget tokens");
    }
    if (inputs.available_tokens == 0) {
        throw ConfigError("available token count must be positive");
    }
    if (!(inputs.selection_rate > 0.0 && inputs.selection_rate <= 1.0)) {
        throw ConfigError("selection rate must lie in (0, 1]");
    }
    if (!(inputs.overtrain_factor >= 1.0)) {
        throw ConfigError("overtrain factor must be at least 1");
    }

    BudgetPlan out;
    out.param_count = inputs.param_count;
    out.overtrain_factor = inputs.overtrain_factor;
    out.available_tokens = inputs.available_tokens;
    out.selection_rate = inputs.selection_rate;
    if (inputs.param_count > 0) {
        // Compute-optimal budget: twenty tokens per parameter, scaled by the
        // over-training multiplier.
        out.budget_tokens = static_cast<uint64_t>(
            std::llround(20.0 * static_cast<double>(inputs.param_count) *
                         inputs.overtrain_factor));
    } else {
        out.budget_tokens = inputs.budget_tokens;
    }

    double t = static_cast<double>(out.budget_tokens);
    double a = static_cast<double>(out.available_tokens);
    out.repeats_raw = t / a;
    out.repeats_effective = t / (a * out.selection_rate);
    out.exceeds_repeat_threshold = out.repeats_effective > 4.0;

    uint64_t pool = static_cast<uint64_t>(std::llround(a * out.selection_rate));
    if (pool == 0) {
        throw ConfigError("selection rate leaves no tokens in the pruned pool");
    }
    uint64_t epochs = (out.budget_tokens + pool - 1) / pool;
    if (epochs > kMaxEpochs) {
        throw ConfigError("budget implies " + std::to_string(epochs) +
                          " epochs over the pruned pool; limit is " +
                          std::to_string(kMaxEpochs));
    }
    out.epoch_schedule.reserve(epochs);
    uint64_t remaining = out.budget_tokens;
    for (uint64_t i = 0; i < epochs; ++i) {
        EpochEntry entry;
        entry.epoch = i;
        entry.shuffle_seed = epoch_shuffle_seed(inputs.seed, i);
        entry.tokens = std::min(pool, remaining);
        remaining -= entry.tokens;
        out.epoch_schedule.push_back(entry);
    }
    return out;
}

uint64_t epoch_shuffle_seed(uint64_t seed, uint64_t epoch) {
    return hash64(seed, "epoch:" + std::to_string(epoch));
}

std::vector<std::string> epoch_order(const PruneManifest& prune,
                                     uint64_t epoch, uint64_t seed) {
    uint64_t epoch_seed = epoch_shuffle_seed(seed, epoch);
    std::vector<std::pair<uint64_t, const std::string*>> keyed;
    keyed.reserve(prune.selected_ids.size());
    for (const std::string& id : prune.selected_ids) {
        keyed.emplace_back(hash64(epoch_seed, id), &id);
    }
    std::sort(keyed.begin(), keyed.end(),
              [](const auto& lhs, const auto& rhs) {
                  if (lhs.first != rhs.first) return lhs.first < rhs.first;
                  return *lhs.second < *rhs.second;
              });
    std::vector<std::string> order;
    order.reserve(keyed.size());
    for (const auto& [key, id] : keyed) order.push_back(*id);
    return order;
}

void BudgetPlan::save(const std::filesystem::path& path) const {
    std::string out;
    out.reserve(256 + epoch_schedule.size() * 64);
    out += "{\"param_count\":";
    append_uint(out, param_count);
    out += ",\"overtrain_factor\":";
    append_double(out, overtrain_factor);
    out += ",\"budget_tokens\":";
    append_uint(out, budget_tokens);
    out += ",\"available_tokens\":";
    append_uint(out, available_tokens);
    out += ",\"selection_rate\":";
    append_double(out, selection_rate);
    out += ",\"repeats_raw\":";
    append_double(out, repeats_raw);
    out += ",\"repeats_effective\":";
    append_double(out, repeats_effective);
    out += ",\"exceeds_repeat_threshold\":";
    out += exceeds_repeat_threshold ? "true" : "false";
    out += ",\"epoch_schedule\":[";
    for (size_t i = 0; i < epoch_schedule.size(); ++i) {
        if (i) out += ',';
        out += "{\"epoch\":";
        append_uint(out, epoch_schedule[i].epoch);
        out += ",\"shuffle_seed\":";
        append_uint(out, epoch_schedule[i].shuffle_seed);
        out += ",\"tokens\":";
        append_uint(out, epoch_schedule[i].tokens);
        out += '}';
    }
    out += "]}\n";
    atomic_write_file(path, out);
}

} // namespace pplxprune

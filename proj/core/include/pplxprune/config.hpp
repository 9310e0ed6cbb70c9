#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pplxprune {

// Everything a pipeline run needs, loadable from a JSON config file and
// overridable by CLI flags. Loading is strict: unknown keys anywhere in the
// tree are rejected so typos fail loudly instead of silently using defaults.
struct PipelineConfig {
    // Paths.
    std::string corpus_dir; // directory containing an ingested corpus
    std::string workdir;

    // Global seed; every random decision (split membership, analysis
    // subsampling, epoch shuffles) is derived from it by purpose.
    uint64_t seed = 0;
    int workers = 1;

    // split
    double ref_fraction = 0.1;

    // model
    int order = 2;
    double add_k = 1.0;
    std::vector<double> weights; // interpolation weights, empty = uniform

    // selection
    std::string criteria = "high";
    double rate = 0.5;

    // analysis
    double subsample_rate = 0.1;

    // plan
    uint64_t param_count = 0;
    uint64_t budget_tokens = 0;
    double overtrain_factor = 1.0;

    // score
    uint64_t max_score_samples = 0; // 0 = score the full training partition

    static PipelineConfig load(const std::filesystem::path& path);
    void validate() const;
    // Echo of the fully resolved configuration (defaults + file + flags),
    // written into the work dir as the experiment record.
    void save(const std::filesystem::path& path) const;

    uint64_t split_seed() const;
    uint64_t subsample_seed() const;
    uint64_t epoch_seed() const;
};

} // namespace pplxprune

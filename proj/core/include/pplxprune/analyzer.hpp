#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pplxprune/corpus.hpp"
#include "pplxprune/selector.hpp"

namespace pplxprune {

// Domain composition before and after pruning, counted both ways: share of
// samples and share of tokens. With no prune manifest the post columns just
// repeat the pre columns.
struct DomainRow {
    std::string domain;
    uint64_t pre_samples = 0;
    uint64_t pre_tokens = 0;
    double pre_sample_share = 0.0;
    double pre_token_share = 0.0;
    uint64_t post_samples = 0;
    uint64_t post_tokens = 0;
    double post_sample_share = 0.0;
    double post_token_share = 0.0;
};

struct DomainReport {
    std::vector<DomainRow> rows; // sorted by domain name

    void save_csv(const std::filesystem::path& path) const;
};

DomainReport domain_composition(const CorpusManifest& corpus,
                                const PruneManifest* prune = nullptr);

// Histogram with Freedman-Diaconis bin width plus a Gaussian KDE with
// Silverman's bandwidth, both over log2-perplexity. `degenerate` marks a
// zero-variance subsample (single bin, KDE suppressed); `kde_suppressed` is
// also set when the subsample is too small (< 30 points) for a meaningful
// density estimate.
struct DistributionReport {
    double subsample_rate = 1.0;
    uint64_t subsample_seed = 0;
    uint64_t subsample_size = 0;
    bool degenerate = false;
    bool kde_suppressed = false;
    std::vector<double> histogram_edges;     // size = bins + 1
    std::vector<double> histogram_densities; // size = bins
    double bandwidth = 0.0;
    std::vector<double> kde_grid;
    std::vector<double> kde_density;

    void save(const std::filesystem::path& path) const;
};

// Estimator knobs; zero means "use the standard rule" (Silverman bandwidth,
// Freedman-Diaconis bin width).
struct DistributionOptions {
    double bandwidth_override = 0.0;
    double bin_width_override = 0.0;
};

// Estimates the log2-perplexity distribution from a complete score cache,
// subsampling ids with the same hash rule as the corpus splitter. When a
// prune manifest is given only selected ids enter.
DistributionReport pplx_distribution(const std::filesystem::path& scores_path,
                                     double subsample_rate, uint64_t seed,
                                     const PruneManifest* prune = nullptr,
                                     const DistributionOptions& options = {});

// Building blocks, exposed for testing.
struct Histogram {
    std::vector<double> edges;
    std::vector<double> densities;
    bool degenerate = false;
};

Histogram freedman_diaconis_histogram(std::vector<double> values,
                                      double bin_width_override = 0.0);

struct KdeResult {
    double bandwidth = 0.0;
    std::vector<double> grid;
    std::vector<double> density;
};

KdeResult gaussian_kde(const std::vector<double>& values,
                       double bandwidth_override = 0.0);

} // namespace pplxprune

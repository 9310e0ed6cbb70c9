#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pplxprune/corpus.hpp"
#include "pplxprune/reflm.hpp"

namespace pplxprune {

// Which band of the perplexity distribution to keep.
enum class SelectionCriteria { low, medium, high };

SelectionCriteria parse_criteria(const std::string& name);
std::string criteria_name(SelectionCriteria c);

// Percentile window selected by a criteria at rate r:
//   low    -> [0, r]
//   medium -> [0.5 - r/2, 0.5 + r/2]
//   high   -> [1 - r, 1]
struct PercentileWindow {
    double min_percentile = 0.0;
    double max_percentile = 0.0;
};

PercentileWindow window_for(SelectionCriteria criteria, double rate);

// Whether ascending rank k of n (1-based, ordered by (perplexity, id)) falls
// in the window. Ranks map to mid-bucket quantiles q = (k - 0.5) / n; low and
// medium take min <= q < max, high takes min < q <= max so the largest
// perplexity is always selectable. Either way exactly floor(r*n) or
// ceil(r*n) ranks qualify, for every n >= 2 and r in (0,1).
bool rank_selected(uint64_t k, uint64_t n, const PercentileWindow& window,
                   SelectionCriteria criteria);

struct PruneManifest {
    std::string corpus_name;
    std::string criteria;
    double rate = 0.0; // requested r_s
    PercentileWindow window;
    uint64_t n_candidates = 0;     // scored samples ranked
    double achieved_rate = 0.0;    // |selected| / n_candidates
    uint64_t pre_tokens = 0;       // tokens over all candidates
    uint64_t post_tokens = 0;      // tokens over the selection
    std::vector<std::string> selected_ids; // sorted

    void save(const std::filesystem::path& path) const;
    static PruneManifest load(const std::filesystem::path& path);
};

enum class SortMode { in_memory, external };

struct SelectOptions {
    SortMode sort = SortMode::in_memory;
    // Spill threshold for the external path; records beyond it go to run
    // files on disk. Only meaningful with SortMode::external.
    size_t external_buffer_records = 1 << 20;
    std::filesystem::path tmp_dir; // defaults to the scores file's directory
};

// Core of the algorithm, exposed for oracle tests: rank records by
// (perplexity, sample_id) and keep the window. Requires >= 2 records.
PruneManifest select_from_records(std::vector<ScoreRecord> records,
                                  SelectionCriteria criteria, double rate);

// Ranks a complete score cache (scores.jsonl + sidecar meta in the same
// directory) and selects the window. The two sort modes produce identical
// manifests; incomplete caches are refused.
PruneManifest select_samples(const std::filesystem::path& scores_path,
                             SelectionCriteria criteria, double rate,
                             const SelectOptions& options = {});

struct MaterializeStats {
    uint64_t samples = 0;
    uint64_t tokens = 0;
};

// Writes the selected samples as a new corpus under `out_dir`, preserving
// shard count and order (output shard i holds the selected subset of source
// shard i). A selected id missing from the corpus is a hard error.
CorpusManifest materialize_pruned(const CorpusManifest& corpus,
                                  const PruneManifest& prune,
                                  const std::filesystem::path& out_dir,
                                  const std::string& pruned_name = "",
                                  MaterializeStats* stats = nullptr);

} // namespace pplxprune

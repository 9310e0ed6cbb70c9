#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "pplxprune/corpus.hpp"
#include "pplxprune/reflm.hpp"
#include "pplxprune/splitter.hpp"

namespace pplxprune {

// Sidecar describing a score cache. `scorer_descriptor` identifies the exact
// model that produced the scores ("ngram:" + hex digest of the model file);
// resuming with a different descriptor is an error rather than a silent mix
// of incompatible scores.
struct ScoreCacheMeta {
    std::string corpus_name;
    std::string scorer_descriptor;
    bool complete = false;
    uint64_t n_scored = 0;
    uint64_t n_expected = 0;

    void save(const std::filesystem::path& path) const;
    static ScoreCacheMeta load(const std::filesystem::path& path);
};

struct ScoreOptions {
    int workers = 1;
    // 0 = score everything outstanding; otherwise stop after this many new
    // samples (the cache is then left valid but incomplete).
    uint64_t max_samples = 0;
    // Lines handed to a worker at a time. Large enough to amortize queue
    // traffic, small enough to keep workers busy near the end of a shard.
    size_t batch_lines = 256;
};

// Scores every sample in the training partition with the reference model and
// writes `scores.jsonl` (one record per line, sorted by sample id) plus
// `scores.meta.json` into `out_dir`. An existing cache written by the same
// descriptor is reused: already-scored ids are skipped, so an interrupted run
// resumes where it stopped. The output is byte-identical for any worker
// count.
ScoreCacheMeta score_corpus(const CorpusManifest& corpus,
                            const SplitManifest& split, const NGramModel& model,
                            const std::string& scorer_descriptor,
                            const std::filesystem::path& out_dir,
                            const ScoreOptions& options = {});

// Loads the sidecar meta next to a scores file and insists the cache is
// complete; consumers of the full distribution (selection, analytics) must
// not operate on partial caches.
ScoreCacheMeta load_complete_cache_meta(const std::filesystem::path& scores_path);

// Streams score records from a scores.jsonl file in stored order.
class ScoreReader {
public:
    explicit ScoreReader(const std::filesystem::path& path);

    std::optional<ScoreRecord> next();
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ifstream in_;
    uint64_t line_no_ = 0;
};

} // namespace pplxprune

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pplxprune/corpus.hpp"
#include "pplxprune/hashing.hpp"

namespace pplxprune {

// Parameters of the reference/train partition.
struct SplitSpec {
    uint64_t seed = 0;
    double ref_fraction = 0.1; // must lie in (0, 1)
};

struct SplitCounts {
    uint64_t samples = 0;
    uint64_t tokens = 0;
};

// The realized partition: disjoint id sets covering the whole corpus.
struct SplitManifest {
    uint64_t seed = 0;
    double ref_fraction = 0.0;
    std::vector<std::string> ref_ids;   // sorted
    std::vector<std::string> train_ids; // sorted
    SplitCounts ref;
    SplitCounts train;

    void save(const std::filesystem::path& path) const;
    static SplitManifest load(const std::filesystem::path& path);
};

// A sample joins the reference split iff hash64(seed, id)/2^64 < ref_fraction.
// Pure function of (seed, id): independent of sample order, shard layout and
// worker count.
inline bool assigned_to_ref(const SplitSpec& spec, std::string_view id) {
    return hash_below(spec.seed, id, spec.ref_fraction);
}

// Partitions the corpus; streams once to gather ids and token counts.
SplitManifest split_corpus(const CorpusManifest& corpus, const SplitSpec& spec);

} // namespace pplxprune

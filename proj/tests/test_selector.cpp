#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "pplxprune/corpus.hpp"
#include "pplxprune/errors.hpp"
#include "pplxprune/io.hpp"
#include "pplxprune/rng.hpp"
#include "pplxprune/scorer.hpp"
#include "pplxprune/selector.hpp"
#include "test_util.hpp"

using namespace pplxprune;
using testutil::TempDir;

namespace {

// Reference implementation of the window rule, kept deliberately naive: sort
// by (perplexity, id), walk the ranks, apply the quantile comparison per
// criteria. The product code must agree with this on any input.
std::vector<std::string> brute_force_select(std::vector<ScoreRecord> records,
                                            SelectionCriteria criteria, double rate) {
    std::sort(records.begin(), records.end(), [](const ScoreRecord& a, const ScoreRecord& b) {
        if (a.perplexity != b.perplexity) return a.perplexity < b.perplexity;
        return a.sample_id < b.sample_id;
    });
    PercentileWindow w = window_for(criteria, rate);
    std::vector<std::string> out;
    for (size_t k = 1; k <= records.size(); ++k) {
        double q = (static_cast<double>(k) - 0.5) / static_cast<double>(records.size());
        bool in = criteria == SelectionCriteria::high
                      ? (q > w.min_percentile && q <= w.max_percentile)
                      : (q >= w.min_percentile && q < w.max_percentile);
        if (in) out.push_back(records[k - 1].sample_id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

ScoreRecord rec(std::string id, double pplx, uint64_t n_tokens = 1) {
    ScoreRecord r;
    r.sample_id = std::move(id);
    r.perplexity = pplx;
    r.nll_bits = std::log2(pplx);
    r.n_tokens = n_tokens;
    return r;
}

std::vector<ScoreRecord> random_records(SplitMix64& rng, size_t n, bool heavy_ties) {
    std::vector<ScoreRecord> records;
    records.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "r%05zu", i);
        // Heavy-tie sets draw from a handful of values so long runs of equal
        // perplexity straddle the window edges.
        double pplx = heavy_ties ? 1.0 + static_cast<double>(rng.next_below(4))
                                 : 1.0 + 99.0 * rng.next_unit();
        records.push_back(rec(id, pplx, 1 + rng.next_below(50)));
    }
    return records;
}

// Writes records (any order) as a complete score cache under dir.
void write_cache(const std::filesystem::path& dir, std::vector<ScoreRecord> records,
                 const std::string& corpus_name = "c") {
    std::filesystem::create_directories(dir);
    std::sort(records.begin(), records.end(), [](const ScoreRecord& a, const ScoreRecord& b) {
        return a.sample_id < b.sample_id;
    });
    std::string out;
    for (const ScoreRecord& r : records) append_score_line(out, r);
    atomic_write_file(dir / std::string(artifact::scores), out);
    ScoreCacheMeta meta;
    meta.corpus_name = corpus_name;
    meta.scorer_descriptor = "ngram:test";
    meta.complete = true;
    meta.n_scored = records.size();
    meta.n_expected = records.size();
    meta.save(dir / std::string(artifact::scores_meta));
}

} // namespace

TEST_CASE("percentile windows for the three criteria") {
    PercentileWindow w = window_for(SelectionCriteria::low, 0.25);
    CHECK(w.min_percentile == 0.0);
    CHECK(w.max_percentile == 0.25);
    w = window_for(SelectionCriteria::medium, 0.25);
    CHECK(w.min_percentile == 0.375);
    CHECK(w.max_percentile == 0.625);
    w = window_for(SelectionCriteria::high, 0.25);
    CHECK(w.min_percentile == 0.75);
    CHECK(w.max_percentile == 1.0);

    w = window_for(SelectionCriteria::medium, 0.5);
    CHECK(w.min_percentile == 0.25);
    CHECK(w.max_percentile == 0.75);
    w = window_for(SelectionCriteria::high, 0.75);
    CHECK(w.min_percentile == 0.25);
    CHECK(w.max_percentile == 1.0);
    w = window_for(SelectionCriteria::low, 0.75);
    CHECK(w.min_percentile == 0.0);
    CHECK(w.max_percentile == 0.75);

    CHECK_THROWS_AS(window_for(SelectionCriteria::low, 0.0), ConfigError);
    CHECK_THROWS_AS(window_for(SelectionCriteria::low, 1.5), ConfigError);
}

TEST_CASE("criteria names round-trip and reject unknowns") {
    for (auto c : {SelectionCriteria::low, SelectionCriteria::medium, SelectionCriteria::high}) {
        CHECK(parse_criteria(criteria_name(c)) == c);
    }
    CHECK_THROWS_WITH_AS(parse_criteria("extreme"), doctest::Contains("extreme"), ConfigError);
}

TEST_CASE("every window keeps floor(r*n) or ceil(r*n) ranks") {
    for (auto criteria :
         {SelectionCriteria::low, SelectionCriteria::medium, SelectionCriteria::high}) {
        for (double rate : {0.1, 0.25, 1.0 / 3.0, 0.5, 0.625, 0.75, 0.9}) {
            PercentileWindow w = window_for(criteria, rate);
            for (uint64_t n : {2ull, 3ull, 7ull, 10ull, 101ull, 1000ull}) {
                uint64_t kept = 0;
                for (uint64_t k = 1; k <= n; ++k) kept += rank_selected(k, n, w, criteria);
                double exact = rate * static_cast<double>(n);
                bool ok = kept == static_cast<uint64_t>(std::floor(exact)) ||
                          kept == static_cast<uint64_t>(std::ceil(exact));
                if (!ok) {
                    CAPTURE(criteria_name(criteria));
                    CAPTURE(rate);
                    CAPTURE(n);
                    CAPTURE(kept);
                }
                CHECK(ok);
            }
        }
    }
}

TEST_CASE("selected ranks form one contiguous run in the expected band") {
    PercentileWindow w = window_for(SelectionCriteria::medium, 0.5);
    const uint64_t n = 1000;
    std::vector<uint64_t> kept;
    for (uint64_t k = 1; k <= n; ++k) {
        if (rank_selected(k, n, w, SelectionCriteria::medium)) kept.push_back(k);
    }
    REQUIRE(kept.size() == 500);
    CHECK(kept.front() == 251);
    CHECK(kept.back() == 750);

    w = window_for(SelectionCriteria::high, 0.5);
    kept.clear();
    for (uint64_t k = 1; k <= n; ++k) {
        if (rank_selected(k, n, w, SelectionCriteria::high)) kept.push_back(k);
    }
    REQUIRE(kept.size() == 500);
    CHECK(kept.front() == 501);
    CHECK(kept.back() == 1000); // the max-perplexity sample is always reachable

    w = window_for(SelectionCriteria::low, 0.5);
    kept.clear();
    for (uint64_t k = 1; k <= n; ++k) {
        if (rank_selected(k, n, w, SelectionCriteria::low)) kept.push_back(k);
    }
    REQUIRE(kept.size() == 500);
    CHECK(kept.front() == 1);
    CHECK(kept.back() == 500);
}

TEST_CASE("selection agrees with the brute-force oracle on random sets") {
    SplitMix64 rng(2024);
    int trials = 0;
    for (int trial = 0; trial < 400; ++trial) {
        size_t n = 2 + rng.next_below(999);
        bool heavy_ties = trial % 3 == 1;
        std::vector<ScoreRecord> records = random_records(rng, n, heavy_ties);
        if (trial % 3 == 2) {
            // All-ties: every perplexity identical, order decided by id alone.
            for (ScoreRecord& r : records) r.perplexity = 7.0;
        }
        double rate = 0.05 + 0.9 * rng.next_unit();
        auto criteria = static_cast<SelectionCriteria>(rng.next_below(3));

        PruneManifest manifest = select_from_records(records, criteria, rate);
        std::vector<std::string> expect = brute_force_select(records, criteria, rate);
        CHECK(manifest.selected_ids == expect);
        CHECK(manifest.n_candidates == n);
        CHECK(manifest.achieved_rate ==
              static_cast<double>(expect.size()) / static_cast<double>(n));
        double exact = rate * static_cast<double>(n);
        CHECK((expect.size() == std::floor(exact) || expect.size() == std::ceil(exact)));
        ++trials;
    }
    CHECK(trials == 400);
}

TEST_CASE("token totals in the manifest are exact") {
    std::vector<ScoreRecord> records{rec("a", 2.0, 10), rec("b", 4.0, 20), rec("c", 8.0, 30),
                                     rec("d", 16.0, 40)};
    PruneManifest manifest = select_from_records(records, SelectionCriteria::high, 0.5);
    CHECK(manifest.pre_tokens == 100);
    CHECK(manifest.post_tokens == 70); // c and d
    CHECK(manifest.selected_ids == std::vector<std::string>{"c", "d"});
    CHECK(manifest.window.min_percentile == 0.5);
    CHECK(manifest.window.max_percentile == 1.0);

    std::vector<ScoreRecord> one{rec("a", 2.0, 1)};
    CHECK_THROWS_AS(select_from_records(one, SelectionCriteria::low, 0.5), DataError);
}

TEST_CASE("prune manifest round-trips byte-identically") {
    TempDir tmp;
    std::vector<ScoreRecord> records = [] {
        SplitMix64 rng(7);
        return random_records(rng, 200, false);
    }();
    PruneManifest manifest = select_from_records(records, SelectionCriteria::medium, 0.3);
    manifest.corpus_name = "roundtrip";
    manifest.save(tmp / "prune.json");
    PruneManifest back = PruneManifest::load(tmp / "prune.json");
    CHECK(back.corpus_name == manifest.corpus_name);
    CHECK(back.criteria == manifest.criteria);
    CHECK(back.rate == manifest.rate);
    CHECK(back.window.min_percentile == manifest.window.min_percentile);
    CHECK(back.window.max_percentile == manifest.window.max_percentile);
    CHECK(back.n_candidates == manifest.n_candidates);
    CHECK(back.achieved_rate == manifest.achieved_rate);
    CHECK(back.pre_tokens == manifest.pre_tokens);
    CHECK(back.post_tokens == manifest.post_tokens);
    CHECK(back.selected_ids == manifest.selected_ids);
    back.save(tmp / "prune2.json");
    CHECK(testutil::same_bytes(tmp / "prune.json", tmp / "prune2.json"));
}

TEST_CASE("cache-backed selection matches the in-memory record path") {
    TempDir tmp;
    SplitMix64 rng(31);
    std::vector<ScoreRecord> records = random_records(rng, 500, true);
    write_cache(tmp / "wd", records);

    PruneManifest from_cache =
        select_samples(tmp / "wd" / artifact::scores, SelectionCriteria::medium, 0.4);
    PruneManifest from_records = select_from_records(records, SelectionCriteria::medium, 0.4);
    from_records.corpus_name = "c"; // cache path stamps the meta's corpus name
    CHECK(from_cache.selected_ids == from_records.selected_ids);
    CHECK(from_cache.corpus_name == "c");
    CHECK(from_cache.pre_tokens == from_records.pre_tokens);
    CHECK(from_cache.post_tokens == from_records.post_tokens);
}

TEST_CASE("external sort selection is bit-identical to in-memory") {
    TempDir tmp;
    SplitMix64 rng(77);
    std::vector<ScoreRecord> records = random_records(rng, 2000, false);
    // Mix in tie runs so the merge has equal keys crossing run boundaries.
    for (size_t i = 0; i < records.size(); i += 5) {
        records[i].perplexity = 42.0;
        records[i].nll_bits = std::log2(42.0);
    }
    write_cache(tmp / "wd", records);

    SelectOptions ext;
    ext.sort = SortMode::external;
    ext.external_buffer_records = 128; // force many spill runs
    PruneManifest a = select_samples(tmp / "wd" / artifact::scores, SelectionCriteria::high, 0.25);
    PruneManifest b =
        select_samples(tmp / "wd" / artifact::scores, SelectionCriteria::high, 0.25, ext);
    a.save(tmp / "a.json");
    b.save(tmp / "b.json");
    CHECK(testutil::same_bytes(tmp / "a.json", tmp / "b.json"));
    CHECK_FALSE(std::filesystem::exists(tmp / "wd" / "select.tmp"));
}

TEST_CASE("incomplete caches are refused by selection") {
    TempDir tmp;
    SplitMix64 rng(5);
    write_cache(tmp / "wd", random_records(rng, 10, false));
    ScoreCacheMeta meta = ScoreCacheMeta::load(tmp / "wd" / artifact::scores_meta);
    meta.complete = false;
    meta.n_expected = 20;
    meta.save(tmp / "wd" / artifact::scores_meta);
    CHECK_THROWS_WITH_AS(
        select_samples(tmp / "wd" / artifact::scores, SelectionCriteria::low, 0.5),
        doctest::Contains("incomplete"), DataError);
}

TEST_CASE("materialized corpus preserves sample bytes and shard structure") {
    TempDir tmp;
    std::string raw;
    for (int i = 0; i < 20; ++i) {
        raw += "{\"id\":\"m" + std::to_string(i) + "\",\"domain\":\"d" + std::to_string(i % 2) +
               "\",\"tokens\":[" + std::to_string(i % 5) + "]}\n";
    }
    {
        std::ofstream out(tmp / "raw.jsonl", std::ios::binary);
        out << raw;
    }
    IngestOptions opts;
    opts.shard_max_samples = 6;
    CorpusManifest corpus = ingest(tmp / "raw.jsonl", Tokenizer::passthrough(5), tmp / "c", opts);

    PruneManifest prune;
    prune.corpus_name = corpus.name;
    prune.criteria = "low";
    prune.rate = 0.5;
    prune.selected_ids = {"m1", "m10", "m15", "m3"};
    prune.n_candidates = 20;
    prune.achieved_rate = 0.2;

    MaterializeStats stats;
    CorpusManifest pruned = materialize_pruned(corpus, prune, tmp / "out", "", &stats);
    CHECK(stats.samples == 4);
    CHECK(pruned.total_samples == 4);
    CHECK(pruned.vocab_size == corpus.vocab_size);
    CHECK(pruned.shard_paths.size() == corpus.shard_paths.size());
    CHECK(pruned.domains == std::vector<std::string>{"d0", "d1"});

    // Output lines are verbatim copies of the source shard lines.
    std::unordered_map<std::string, std::string> source_lines;
    {
        SampleReader reader(corpus);
        std::string line;
        while (reader.next_line(line)) {
            Sample s = parse_sample_line(line, "src", 0);
            source_lines.emplace(s.id, line);
        }
    }
    SampleReader reader(pruned);
    std::string line;
    std::vector<std::string> seen;
    while (reader.next_line(line)) {
        Sample s = parse_sample_line(line, "out", 0);
        CHECK(source_lines.at(s.id) == line);
        seen.push_back(s.id);
    }
    // Shard order then line order: m1/m3 precede m10/m15 (different shards).
    CHECK(seen == std::vector<std::string>{"m1", "m3", "m10", "m15"});

    // Selected ids missing from the corpus are a hard error.
    prune.selected_ids.push_back("mX");
    CHECK_THROWS_WITH_AS(materialize_pruned(corpus, prune, tmp / "out2", "", nullptr),
                         doctest::Contains("mX"), DataError);

    // An empty selection cannot produce a corpus.
    prune.selected_ids.clear();
    CHECK_THROWS_AS(materialize_pruned(corpus, prune, tmp / "out3", "", nullptr), DataError);
}

TEST_CASE("materialize names the pruned corpus") {
    TempDir tmp;
    std::ofstream(tmp / "raw.jsonl") << R"({"id":"a","domain":"d","tokens":[0]})" << "\n"
                                     << R"({"id":"b","domain":"d","tokens":[1]})" << "\n";
    CorpusManifest corpus = ingest(tmp / "raw.jsonl", Tokenizer::passthrough(2), tmp / "c", {});
    PruneManifest prune;
    prune.corpus_name = corpus.name;
    prune.criteria = "low";
    prune.rate = 0.5;
    prune.selected_ids = {"a"};

    CorpusManifest d1 = materialize_pruned(corpus, prune, tmp / "o1");
    CHECK(d1.name == corpus.name + "-pruned");
    CorpusManifest d2 = materialize_pruned(corpus, prune, tmp / "o2", "slim");
    CHECK(d2.name == "slim");
}

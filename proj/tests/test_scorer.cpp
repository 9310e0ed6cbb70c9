#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pplxprune/corpus.hpp"
#include "pplxprune/errors.hpp"
#include "pplxprune/hashing.hpp"
#include "pplxprune/io.hpp"
#include "pplxprune/reflm.hpp"
#include "pplxprune/rng.hpp"
#include "pplxprune/scorer.hpp"
#include "pplxprune/splitter.hpp"
#include "test_util.hpp"

using namespace pplxprune;
using testutil::TempDir;

namespace {

// Small random corpus + split + trained model, shared by the cache tests.
struct ScoreFixture {
    TempDir tmp;
    CorpusManifest corpus;
    SplitManifest split;
    NGramModel model{NGramConfig{}, 7};
    std::string descriptor;

    explicit ScoreFixture(int n_samples = 200, uint64_t seed = 5) {
        std::string raw;
        SplitMix64 rng(seed);
        for (int i = 0; i < n_samples; ++i) {
            char id[32];
            std::snprintf(id, sizeof id, "doc-%04d", i);
            std::string tokens;
            size_t len = 1 + rng.next_below(24);
            for (size_t j = 0; j < len; ++j) {
                if (j) tokens += ',';
                tokens += std::to_string(rng.next_below(7));
            }
            raw += std::string("{\"id\":\"") + id + "\",\"domain\":\"" +
                   (i % 3 ? "web" : "news") + "\",\"tokens\":[" + tokens + "]}\n";
        }
        write_file_raw(tmp / "raw.jsonl", raw);
        IngestOptions opts;
        opts.shard_max_samples = 64; // several shards, so readers cross boundaries
        corpus = ingest(tmp / "raw.jsonl", Tokenizer::passthrough(7), tmp / "corpus", opts);
        split = split_corpus(corpus, SplitSpec{split_seed(), 0.2});

        std::unordered_set<std::string> ref_ids(split.ref_ids.begin(), split.ref_ids.end());
        SampleReader ref(corpus, &ref_ids);
        NGramConfig config;
        config.order = 2;
        model = train_reference_model(ref, config, corpus.vocab_size);
        model.save(tmp / "model.ngram");
        descriptor = "ngram:" + hash_file_hex(tmp / "model.ngram");
    }

    static uint64_t split_seed() { return derive_seed(42, "split"); }

    static void write_file_raw(const std::filesystem::path& path, const std::string& content) {
        std::ofstream out(path, std::ios::binary);
        out << content;
    }

    ScoreCacheMeta score(const std::filesystem::path& out_dir, const ScoreOptions& options = {}) {
        return score_corpus(corpus, split, model, descriptor, out_dir, options);
    }
};

} // namespace

TEST_CASE("score cache covers exactly the training partition, sorted by id") {
    ScoreFixture fx;
    ScoreCacheMeta meta = fx.score(fx.tmp / "wd");
    CHECK(meta.complete);
    CHECK(meta.n_scored == meta.n_expected);
    CHECK(meta.n_expected == fx.split.train_ids.size());
    CHECK(meta.corpus_name == fx.corpus.name);
    CHECK(meta.scorer_descriptor == fx.descriptor);

    std::vector<std::string> ids;
    ScoreReader reader(fx.tmp / "wd" / artifact::scores);
    while (auto r = reader.next()) {
        ids.push_back(r->sample_id);
        CHECK(r->perplexity == std::exp2(r->nll_bits));
    }
    std::vector<std::string> expect = fx.split.train_ids;
    std::sort(expect.begin(), expect.end());
    CHECK(ids == expect);
}

TEST_CASE("cache records match direct single-sample scoring") {
    ScoreFixture fx(60);
    fx.score(fx.tmp / "wd");
    std::unordered_map<std::string, ScoreRecord> by_id;
    ScoreReader reader(fx.tmp / "wd" / artifact::scores);
    while (auto r = reader.next()) by_id.emplace(r->sample_id, *r);

    std::unordered_set<std::string> train(fx.split.train_ids.begin(), fx.split.train_ids.end());
    SampleReader samples(fx.corpus, &train);
    size_t checked = 0;
    while (auto s = samples.next()) {
        ScoreRecord direct = score_sample(fx.model, *s);
        const ScoreRecord& cached = by_id.at(s->id);
        CHECK(cached.nll_bits == direct.nll_bits);
        CHECK(cached.perplexity == direct.perplexity);
        CHECK(cached.n_tokens == direct.n_tokens);
        ++checked;
    }
    CHECK(checked == by_id.size());
}

TEST_CASE("worker count does not change the cache bytes") {
    ScoreFixture fx(300, 9);
    fx.score(fx.tmp / "w1", ScoreOptions{1, 0, 32});
    fx.score(fx.tmp / "w4", ScoreOptions{4, 0, 32});
    fx.score(fx.tmp / "w8", ScoreOptions{8, 0, 7}); // awkward batch size on purpose
    CHECK(testutil::same_bytes(fx.tmp / "w1" / artifact::scores,
                               fx.tmp / "w4" / artifact::scores));
    CHECK(testutil::same_bytes(fx.tmp / "w1" / artifact::scores,
                               fx.tmp / "w8" / artifact::scores));
    CHECK(testutil::same_bytes(fx.tmp / "w1" / artifact::scores_meta,
                               fx.tmp / "w4" / artifact::scores_meta));
}

TEST_CASE("an interrupted run resumes to the same bytes as a clean run") {
    ScoreFixture fx(150, 3);
    fx.score(fx.tmp / "clean");

    // Budgeted runs stop early but leave a valid partial cache.
    ScoreCacheMeta partial = fx.score(fx.tmp / "resumed", ScoreOptions{4, 50, 16});
    CHECK_FALSE(partial.complete);
    CHECK(partial.n_scored == 50);
    CHECK_THROWS_WITH_AS(load_complete_cache_meta(fx.tmp / "resumed" / artifact::scores),
                         doctest::Contains("incomplete"), DataError);

    ScoreCacheMeta more = fx.score(fx.tmp / "resumed", ScoreOptions{4, 30, 16});
    CHECK_FALSE(more.complete);
    CHECK(more.n_scored == 80);

    ScoreCacheMeta done = fx.score(fx.tmp / "resumed", ScoreOptions{4, 0, 16});
    CHECK(done.complete);
    CHECK(done.n_scored == done.n_expected);
    CHECK(testutil::same_bytes(fx.tmp / "clean" / artifact::scores,
                               fx.tmp / "resumed" / artifact::scores));
    CHECK(testutil::same_bytes(fx.tmp / "clean" / artifact::scores_meta,
                               fx.tmp / "resumed" / artifact::scores_meta));
}

TEST_CASE("a complete cache is reused without rescoring") {
    ScoreFixture fx(40);
    fx.score(fx.tmp / "wd");
    auto mtime = std::filesystem::last_write_time(fx.tmp / "wd" / artifact::scores);
    ScoreCacheMeta again = fx.score(fx.tmp / "wd");
    CHECK(again.complete);
    CHECK(std::filesystem::last_write_time(fx.tmp / "wd" / artifact::scores) == mtime);
}

TEST_CASE("resuming with a different scorer is rejected") {
    ScoreFixture fx(40);
    fx.score(fx.tmp / "wd");
    CHECK_THROWS_WITH_AS(
        score_corpus(fx.corpus, fx.split, fx.model, "ngram:feedfacefeedface", fx.tmp / "wd"),
        doctest::Contains("different scorer"), DataError);
}

TEST_CASE("resuming against a different corpus is rejected") {
    ScoreFixture fx(40);
    fx.score(fx.tmp / "wd");
    CorpusManifest other = fx.corpus;
    other.name = "different";
    CHECK_THROWS_WITH_AS(score_corpus(other, fx.split, fx.model, fx.descriptor, fx.tmp / "wd"),
                         doctest::Contains("different"), DataError);
}

TEST_CASE("score lines without the meta sidecar are not trusted") {
    ScoreFixture fx(40);
    fx.score(fx.tmp / "wd");
    std::filesystem::remove(fx.tmp / "wd" / artifact::scores_meta);
    CHECK_THROWS_AS(load_complete_cache_meta(fx.tmp / "wd" / artifact::scores), DataError);

    // The meta is the commit point, so rescoring ignores the orphaned lines
    // and rebuilds; the final bytes match a clean run.
    ScoreCacheMeta meta = fx.score(fx.tmp / "wd");
    CHECK(meta.complete);
    fx.score(fx.tmp / "clean");
    CHECK(testutil::same_bytes(fx.tmp / "clean" / artifact::scores,
                               fx.tmp / "wd" / artifact::scores));
}

TEST_CASE("meta sidecar round-trips") {
    TempDir tmp;
    ScoreCacheMeta meta;
    meta.corpus_name = "corpus-x";
    meta.scorer_descriptor = "ngram:0123456789abcdef";
    meta.complete = false;
    meta.n_scored = 12;
    meta.n_expected = 99;
    meta.save(tmp / "m.json");
    ScoreCacheMeta back = ScoreCacheMeta::load(tmp / "m.json");
    CHECK(back.corpus_name == meta.corpus_name);
    CHECK(back.scorer_descriptor == meta.scorer_descriptor);
    CHECK(back.complete == meta.complete);
    CHECK(back.n_scored == 12);
    CHECK(back.n_expected == 99);

    meta.complete = true;
    meta.n_scored = 99;
    meta.save(tmp / "m.json");
    CHECK(ScoreCacheMeta::load(tmp / "m.json").complete);
}

TEST_CASE("score reader reports malformed lines with location") {
    TempDir tmp;
    std::ofstream(tmp / "scores.jsonl")
        << R"({"sample_id":"a","nll_bits":1.0,"n_tokens":2})" << "\n"
        << "not json\n";
    ScoreReader reader(tmp / "scores.jsonl");
    CHECK(reader.next()->sample_id == "a");
    CHECK_THROWS_WITH_AS(reader.next(), doctest::Contains(":2"), DataError);
}

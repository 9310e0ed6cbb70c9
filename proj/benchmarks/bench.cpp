// Microbenchmarks for the paths that dominate a full corpus pass: id hashing,
// shard/score line codecs, reference-model scoring, window selection and the
// density estimators. Build with the default Release flags; none of these are
// registered with ctest.

#include <benchmark/benchmark.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pplxprune/analyzer.hpp"
#include "pplxprune/corpus.hpp"
#include "pplxprune/hashing.hpp"
#include "pplxprune/reflm.hpp"
#include "pplxprune/rng.hpp"
#include "pplxprune/selector.hpp"

using namespace pplxprune;

namespace {

std::vector<std::string> sample_ids(size_t n) {
    std::vector<std::string> ids(n);
    for (size_t i = 0; i < n; ++i) {
        char buf[24];
        std::snprintf(buf, sizeof buf, "doc-%08zu", i);
        ids[i] = buf;
    }
    return ids;
}

NGramModel trained_model(int order, uint64_t vocab, uint64_t train_tokens) {
    NGramConfig config;
    config.order = order;
    NGramModel model(config, vocab);
    SplitMix64 rng(1);
    std::vector<uint32_t> sample;
    for (uint64_t produced = 0; produced < train_tokens; produced += sample.size()) {
        sample.resize(32 + rng.next_below(96));
        for (uint32_t& t : sample) t = static_cast<uint32_t>(rng.next_below(vocab));
        model.add_sample(sample);
    }
    return model;
}

std::vector<ScoreRecord> random_records(size_t n) {
    SplitMix64 rng(2);
    std::vector<ScoreRecord> records(n);
    std::vector<std::string> ids = sample_ids(n);
    for (size_t i = 0; i < n; ++i) {
        records[i].sample_id = std::move(ids[i]);
        records[i].nll_bits = 8.0 * rng.next_unit();
        records[i].perplexity = std::exp2(records[i].nll_bits);
        records[i].n_tokens = 1 + rng.next_below(512);
    }
    return records;
}

void BM_Hash64(benchmark::State& state) {
    std::vector<std::string> ids = sample_ids(1024);
    size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(hash64(42, ids[i++ & 1023]));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Hash64);

void BM_TokenLogprob(benchmark::State& state) {
    NGramModel model = trained_model(3, 257, 1 << 20);
    SplitMix64 rng(3);
    std::vector<uint32_t> ctx{static_cast<uint32_t>(rng.next_below(257)),
                              static_cast<uint32_t>(rng.next_below(257))};
    uint32_t token = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.token_logprob(ctx, token));
        token = (token + 1) & 255;
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_TokenLogprob);

void BM_ScoreSample(benchmark::State& state) {
    NGramModel model = trained_model(static_cast<int>(state.range(0)), 257, 1 << 20);
    SplitMix64 rng(4);
    Sample sample;
    sample.id = "doc-0";
    sample.domain = "web";
    sample.tokens.resize(512);
    for (uint32_t& t : sample.tokens) t = static_cast<uint32_t>(rng.next_below(257));
    for (auto _ : state) {
        benchmark::DoNotOptimize(score_sample(model, sample));
    }
    state.SetItemsProcessed(state.iterations() * sample.tokens.size());
}
BENCHMARK(BM_ScoreSample)->Arg(2)->Arg(3);

void BM_ScoreLineAppend(benchmark::State& state) {
    std::vector<ScoreRecord> records = random_records(1024);
    std::string out;
    size_t i = 0;
    for (auto _ : state) {
        out.clear();
        append_score_line(out, records[i++ & 1023]);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ScoreLineAppend);

void BM_ScoreLineParse(benchmark::State& state) {
    std::vector<ScoreRecord> records = random_records(1024);
    std::vector<std::string> lines(records.size());
    for (size_t i = 0; i < records.size(); ++i) append_score_line(lines[i], records[i]);
    size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(parse_score_line(lines[i++ & 1023], "bench", 1));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ScoreLineParse);

void BM_SampleLineParse(benchmark::State& state) {
    SplitMix64 rng(5);
    Sample sample;
    sample.id = "doc-42";
    sample.domain = "web";
    sample.tokens.resize(256);
    for (uint32_t& t : sample.tokens) t = static_cast<uint32_t>(rng.next_below(257));
    std::string line;
    append_sample_line(line, sample);
    for (auto _ : state) {
        benchmark::DoNotOptimize(parse_sample_line(line, "bench", 1));
    }
    state.SetItemsProcessed(state.iterations() * sample.tokens.size());
}
BENCHMARK(BM_SampleLineParse);

void BM_SelectFromRecords(benchmark::State& state) {
    std::vector<ScoreRecord> records = random_records(static_cast<size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            select_from_records(records, SelectionCriteria::medium, 0.5));
    }
    state.SetItemsProcessed(state.iterations() * records.size());
}
BENCHMARK(BM_SelectFromRecords)->Arg(10000)->Arg(100000);

void BM_FreedmanDiaconis(benchmark::State& state) {
    SplitMix64 rng(6);
    std::vector<double> values(static_cast<size_t>(state.range(0)));
    for (double& v : values) v = 4.0 + rng.next_normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(freedman_diaconis_histogram(values));
    }
    state.SetItemsProcessed(state.iterations() * values.size());
}
BENCHMARK(BM_FreedmanDiaconis)->Arg(100000);

void BM_GaussianKde(benchmark::State& state) {
    SplitMix64 rng(7);
    std::vector<double> values(static_cast<size_t>(state.range(0)));
    for (double& v : values) v = 4.0 + rng.next_normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(gaussian_kde(values));
    }
    state.SetItemsProcessed(state.iterations() * values.size());
}
BENCHMARK(BM_GaussianKde)->Arg(10000);

} // namespace

BENCHMARK_MAIN();

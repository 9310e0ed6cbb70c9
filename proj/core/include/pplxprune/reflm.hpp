#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pplxprune/corpus.hpp"

namespace pplxprune {

struct NGramConfig {
    int order = 2;
    double add_k = 1.0;
    // One weight per order, low order first, summing to 1. Empty -> uniform.
    std::vector<double> interpolation_weights;
};

// Interpolated add-k n-gram model over token ids [0, vocab_size). The model
// mixes the add-k estimates of orders 1..n:
//
//   P(t | c) = sum_o w_o * (count(c_o + t) + k) / (count(c_o) + k*V)
//
// where c_o is the last o-1 context tokens (BOS-padded at sample start) and a
// context with zero observations contributes the uniform 1/V. Smoothing keeps
// every probability positive and each order's estimate normalized, so the
// mixture sums to 1 over the vocabulary.
//
// Counts are additive: models trained on disjoint shards can be merged.
class NGramModel {
public:
    NGramModel(NGramConfig config, uint64_t vocab_size);

    int order() const { return config_.order; }
    uint64_t vocab_size() const { return vocab_size_; }
    const NGramConfig& config() const { return config_; }
    uint64_t total_tokens() const { return total_tokens_; }

    // Reserved padding ids, one past the real vocabulary. eos_id is part of
    // the model header for format compatibility; scoring never predicts it.
    uint32_t bos_id() const { return static_cast<uint32_t>(vocab_size_); }
    uint32_t eos_id() const { return static_cast<uint32_t>(vocab_size_ + 1); }

    // Accumulates every n-gram of the sample once, BOS-padding the first
    // order-1 positions.
    void add_sample(std::span<const uint32_t> tokens);
    void merge(const NGramModel& other);

    // log2 P(token | context); only the last order-1 context tokens are used.
    double token_logprob(std::span<const uint32_t> context, uint32_t token) const;

    // Mean negative log2-likelihood per token over all positions (position 0
    // conditioned on BOS padding). Requires a non-empty sequence.
    double sequence_nll_bits(std::span<const uint32_t> tokens) const;

    void save(const std::filesystem::path& path) const;
    static NGramModel load(const std::filesystem::path& path);

private:
    double order_prob(uint64_t context_key, uint32_t token) const;

    NGramConfig config_;
    uint64_t vocab_size_;
    uint64_t key_base_;       // vocab + BOS + EOS + 1, the context digit base
    double log2_vocab_;
    uint64_t total_tokens_ = 0;
    std::unordered_map<uint64_t, uint64_t> ngram_counts_; // full n-gram key -> count
    std::unordered_map<uint64_t, uint64_t> context_totals_; // context key -> count
};

// Per-sample statistics from the reference model (or an external scorer).
// nll_bits is base-2, so perplexity == 2^nll_bits holds by construction.
struct ScoreRecord {
    std::string sample_id;
    double nll_bits = 0.0;
    double perplexity = 1.0;
    uint64_t n_tokens = 0;
};

// Trains on the reference split in a single counting pass.
NGramModel train_reference_model(SampleReader& ref_samples, const NGramConfig& config,
                                 uint64_t vocab_size);

ScoreRecord score_sample(const NGramModel& model, const Sample& sample);

// Reads line-delimited {sample_id, nll_bits?, perplexity?, n_tokens} records,
// deriving whichever of nll_bits/perplexity is missing. Duplicate ids are
// fatal (both line numbers reported); with `valid_ids`, unknown ids are fatal.
std::vector<ScoreRecord> load_external_scores(
    const std::filesystem::path& path,
    const std::unordered_set<std::string>* valid_ids = nullptr);

// Score-line codec shared by the scorer cache and external score files.
void append_score_line(std::string& out, const ScoreRecord& record);
ScoreRecord parse_score_line(std::string_view line, std::string_view where, uint64_t line_no);

} // namespace pplxprune

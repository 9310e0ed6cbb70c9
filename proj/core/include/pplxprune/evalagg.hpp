#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pplxprune {

// One externally produced benchmark result. Accuracies are fractions in
// [0, 1]; the random baseline is the task's chance accuracy.
struct EvalRecord {
    std::string task;
    std::string category;
    double accuracy = 0.0;
    double random_baseline = 0.0;
};

// a_n = (a_m - a_r) / (1 - a_r). Below-chance results stay negative; there
// is no clipping.
double normalize_accuracy(double accuracy, double random_baseline);

struct TaskResult {
    std::string task;
    std::string category;
    double normalized = 0.0; // percent
};

struct CategoryMean {
    std::string category;
    double mean = 0.0; // percent
    uint64_t n_tasks = 0;
};

// Tasks average into their category with equal weight; the overall score is
// the mean of category means (not of tasks). Everything is reported in
// percent. Categories keep first-appearance order from the input.
struct EvalSummary {
    std::vector<TaskResult> tasks;
    std::vector<CategoryMean> categories;
    double overall = 0.0; // percent
    // Upstream metric, filled in when a score stream accompanies the eval
    // records. The serialized report names the weighting convention because
    // token-weighted and sample-averaged perplexity differ.
    std::optional<double> corpus_pplx;

    void save(const std::filesystem::path& json_path) const;
    // Table layout: categories as columns, Average last, one data row.
    void save_csv(const std::filesystem::path& csv_path) const;
};

EvalSummary aggregate(const std::vector<EvalRecord>& records);

std::vector<EvalRecord> load_eval_records(const std::filesystem::path& path);

// Token-weighted corpus perplexity over a score stream:
// 2^(sum(nll_bits * n_tokens) / sum(n_tokens)).
double corpus_perplexity(const std::filesystem::path& scores_path);

} // namespace pplxprune

#include "pplxprune/evalagg.hpp"

#include <cmath>
#include <fstream>
#include <unordered_map>

#include <rapidjson/document.h>

#include "pplxprune/errors.hpp"
#include "pplxprune/io.hpp"
#include "pplxprune/scorer.hpp"

namespace pplxprune {

namespace {

void append_csv_field(std::string& out, const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) {
        out += field;
        return;
    }
    out += '"';
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
}

} // namespace

double normalize_accuracy(double accuracy, double random_baseline) {
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
        throw DataError("accuracy must lie in [0, 1]");
    }
    if (!(random_baseline >= 0.0 && random_baseline < 1.0)) {
        throw DataError("random baseline must lie in [0, 1)");
    }
    return (accuracy - random_baseline) / (1.0 - random_baseline);
}

EvalSummary aggregate(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw DataError("no evaluation records to aggregate");

    EvalSummary summary;
    summary.tasks.reserve(records.size());
    std::unordered_map<std::string, size_t> category_index;
    for (const EvalRecord& record : records) {
        if (record.task.empty()) throw DataError("evaluation record has an empty task name");
        if (record.category.empty()) {
            throw DataError("task '" + record.task + "' has an empty category");
        }
        TaskResult result;
        result.task = record.task;
        result.category = record.category;
        result.normalized =
            100.0 * normalize_accuracy(record.accuracy, record.random_baseline);
        summary.tasks.push_back(result);

        auto [it, inserted] =
            category_index.emplace(record.category, summary.categories.size());
        if (inserted) {
            summary.categories.push_back(CategoryMean{record.category, 0.0, 0});
        }
        CategoryMean& cat = summary.categories[it->second];
        cat.mean += result.normalized;
        cat.n_tasks += 1;
    }
    double total = 0.0;
    for (CategoryMean& cat : summary.categories) {
        cat.mean /= static_cast<double>(cat.n_tasks);
        total += cat.mean;
    }
    summary.overall = total / static_cast<double>(summary.categories.size());
    return summary;
}

std::vector<EvalRecord> load_eval_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open eval records " + path.string());

    std::vector<EvalRecord> records;
    std::string line;
    uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fail = [&](const std::string& why) -> DataError {
            return DataError(path.string() + ":" + std::to_string(line_no) + ": " + why);
        };
        rapidjson::Document doc;
        doc.Parse(line.c_str(), line.size());
        if (doc.HasParseError() || !doc.IsObject()) throw fail("invalid JSON object");

        EvalRecord record;
        auto str = [&](const char* key) {
            auto it = doc.FindMember(key);
            if (it == doc.MemberEnd() || !it->value.IsString() ||
                it->value.GetStringLength() == 0) {
                throw fail(std::string("missing or empty string field '") + key + "'");
            }
            return std::string(it->value.GetString(), it->value.GetStringLength());
        };
        auto num = [&](const char* key) {
            auto it = doc.FindMember(key);
            if (it == doc.MemberEnd() || !it->value.IsNumber()) {
                throw fail(std::string("missing numeric field '") + key + "'");
            }
            return it->value.GetDouble();
        };
        record.task = str("task");
        record.category = str("category");
        record.accuracy = num("accuracy");
        record.random_baseline = num("random_baseline");
        if (!(record.accuracy >= 0.0 && record.accuracy <= 1.0)) {
            throw fail("accuracy must lie in [0, 1]");
        }
        if (!(record.random_baseline >= 0.0 && record.random_baseline < 1.0)) {
            throw fail("random_baseline must lie in [0, 1)");
        }
        records.push_back(std::move(record));
    }
    if (records.empty()) throw DataError(path.string() + ": no evaluation records");
    return records;
}

double corpus_perplexity(const std::filesystem::path& scores_path) {
    ScoreReader reader(scores_path);
    double weighted_bits = 0.0;
    uint64_t total_tokens = 0;
    while (auto record = reader.next()) {
        weighted_bits += record->nll_bits * static_cast<double>(record->n_tokens);
        total_tokens += record->n_tokens;
    }
    if (total_tokens == 0) {
        throw DataError(scores_path.string() + ": no scored tokens");
    }
    return std::exp2(weighted_bits / static_cast<double>(total_tokens));
}

void EvalSummary::save(const std::filesystem::path& json_path) const {
    std::string out;
    out.reserve(256 + tasks.size() * 64);
    out += '{';
    if (corpus_pplx) {
        out += "\"perplexity_weighting\":\"token\",\"corpus_perplexity\":";
        append_double(out, *corpus_pplx);
        out += ',';
    }
    out += "\"overall\":";
    append_double(out, overall);
    out += ",\"categories\":[";
    for (size_t i = 0; i < categories.size(); ++i) {
        if (i) out += ',';
        out += "{\"category\":\"";
        append_json_escaped(out, categories[i].category);
        out += "\",\"mean\":";
        append_double(out, categories[i].mean);
        out += ",\"n_tasks\":";
        append_uint(out, categories[i].n_tasks);
        out += '}';
    }
    out += "],\"tasks\":[";
    for (size_t i = 0; i < tasks.size(); ++i) {
        if (i) out += ',';
        out += "{\"task\":\"";
        append_json_escaped(out, tasks[i].task);
        out += "\",\"category\":\"";
        append_json_escaped(out, tasks[i].category);
        out += "\",\"normalized\":";
        append_double(out, tasks[i].normalized);
        out += '}';
    }
    out += "]}\n";
    atomic_write_file(json_path, out);
}

void EvalSummary::save_csv(const std::filesystem::path& csv_path) const {
    std::string out;
    for (size_t i = 0; i < categories.size(); ++i) {
        if (i) out += ',';
        append_csv_field(out, categories[i].category);
    }
    out += ",Average\n";
    for (size_t i = 0; i < categories.size(); ++i) {
        if (i) out += ',';
        append_double(out, categories[i].mean);
    }
    out += ',';
    append_double(out, overall);
    out += '\n';
    atomic_write_file(csv_path, out);
}

} // namespace pplxprune

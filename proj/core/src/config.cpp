#include "pplxprune/config.hpp"

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "pplxprune/errors.hpp"
#include "pplxprune/hashing.hpp"
#include "pplxprune/io.hpp"
#include "pplxprune/selector.hpp"

namespace pplxprune {

namespace {

using nlohmann::json;

// Rejects keys outside `allowed`, naming the full path of the offender.
void check_keys(const json& node, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : node.items()) {
        if (!ok.count(key)) {
            throw ConfigError("unknown config key '" + prefix + key + "'");
        }
    }
}

const json* child(const json& node, const char* key) {
    auto it = node.find(key);
    return it == node.end() ? nullptr : &*it;
}

double get_number(const json& node, const std::string& path) {
    if (!node.is_number()) throw ConfigError("config key '" + path + "' must be a number");
    return node.get<double>();
}

uint64_t get_uint(const json& node, const std::string& path) {
    if (!node.is_number_unsigned()) {
        throw ConfigError("config key '" + path + "' must be a non-negative integer");
    }
    return node.get<uint64_t>();
}

std::string get_string(const json& node, const std::string& path) {
    if (!node.is_string()) throw ConfigError("config key '" + path + "' must be a string");
    return node.get<std::string>();
}

} // namespace

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw ConfigError(path.string() + ": config must be a JSON object");

    PipelineConfig cfg;
    check_keys(doc, "",
               {"corpus", "workdir", "seed", "workers", "split", "model",
                "selection", "analysis", "plan", "score"});

    if (const json* v = child(doc, "corpus")) cfg.corpus_dir = get_string(*v, "corpus");
    if (const json* v = child(doc, "workdir")) cfg.workdir = get_string(*v, "workdir");
    if (const json* v = child(doc, "seed")) cfg.seed = get_uint(*v, "seed");
    if (const json* v = child(doc, "workers")) {
        cfg.workers = static_cast<int>(get_uint(*v, "workers"));
    }
    if (const json* split = child(doc, "split")) {
        check_keys(*split, "split.", {"ref_fraction"});
        if (const json* v = child(*split, "ref_fraction")) {
            cfg.ref_fraction = get_number(*v, "split.ref_fraction");
        }
    }
    if (const json* model = child(doc, "model")) {
        check_keys(*model, "model.", {"order", "add_k", "weights"});
        if (const json* v = child(*model, "order")) {
            cfg.order = static_cast<int>(get_uint(*v, "model.order"));
        }
        if (const json* v = child(*model, "add_k")) {
            cfg.add_k = get_number(*v, "model.add_k");
        }
        if (const json* v = child(*model, "weights")) {
            if (!v->is_array()) {
                throw ConfigError("config key 'model.weights' must be an array of numbers");
            }
            for (const json& w : *v) {
                cfg.weights.push_back(get_number(w, "model.weights"));
            }
        }
    }
    if (const json* selection = child(doc, "selection")) {
        check_keys(*selection, "selection.", {"criteria", "rate"});
        if (const json* v = child(*selection, "criteria")) {
            cfg.criteria = get_string(*v, "selection.criteria");
        }
        if (const json* v = child(*selection, "rate")) {
            cfg.rate = get_number(*v, "selection.rate");
        }
    }
    if (const json* analysis = child(doc, "analysis")) {
        check_keys(*analysis, "analysis.", {"subsample_rate"});
        if (const json* v = child(*analysis, "subsample_rate")) {
            cfg.subsample_rate = get_number(*v, "analysis.subsample_rate");
        }
    }
    if (const json* plan = child(doc, "plan")) {
        check_keys(*plan, "plan.", {"param_count", "budget_tokens", "overtrain_factor"});
        if (const json* v = child(*plan, "param_count")) {
            cfg.param_count = get_uint(*v, "plan.param_count");
        }
        if (const json* v = child(*plan, "budget_tokens")) {
            cfg.budget_tokens = get_uint(*v, "plan.budget_tokens");
        }
        if (const json* v = child(*plan, "overtrain_factor")) {
            cfg.overtrain_factor = get_number(*v, "plan.overtrain_factor");
        }
    }
    if (const json* score = child(doc, "score")) {
        check_keys(*score, "score.", {"max_samples"});
        if (const json* v = child(*score, "max_samples")) {
            cfg.max_score_samples = get_uint(*v, "score.max_samples");
        }
    }
    return cfg;
}

void PipelineConfig::validate() const {
    if (workers < 1) throw ConfigError("workers must be at least 1");
    if (!(ref_fraction > 0.0 && ref_fraction < 1.0)) {
        throw ConfigError("split.ref_fraction must lie in (0, 1)");
    }
    if (order < 1) throw ConfigError("model.order must be at least 1");
    if (add_k < 0.0) throw ConfigError("model.add_k must be non-negative");
    if (!weights.empty() && weights.size() != static_cast<size_t>(order)) {
        throw ConfigError("model.weights must list one weight per order");
    }
    parse_criteria(criteria); // throws ConfigError on unknown names
    if (!(rate > 0.0 && rate < 1.0)) {
        throw ConfigError("selection.rate must lie in (0, 1)");
    }
    if (!(subsample_rate > 0.0 && subsample_rate <= 1.0)) {
        throw ConfigError("analysis.subsample_rate must lie in (0, 1]");
    }
    if (param_count > 0 && budget_tokens > 0) {
        throw ConfigError("set at most one of plan.param_count and plan.budget_tokens");
    }
    if (!(overtrain_factor >= 1.0)) {
        throw ConfigError("plan.overtrain_factor must be at least 1");
    }
}

void PipelineConfig::save(const std::filesystem::path& path) const {
    json doc;
    doc["corpus"] = corpus_dir;
    doc["workdir"] = workdir;
    doc["seed"] = seed;
    doc["workers"] = workers;
    doc["split"]["ref_fraction"] = ref_fraction;
    doc["model"]["order"] = order;
    doc["model"]["add_k"] = add_k;
    doc["model"]["weights"] = weights;
    doc["selection"]["criteria"] = criteria;
    doc["selection"]["rate"] = rate;
    doc["analysis"]["subsample_rate"] = subsample_rate;
    doc["plan"]["param_count"] = param_count;
    doc["plan"]["budget_tokens"] = budget_tokens;
    doc["plan"]["overtrain_factor"] = overtrain_factor;
    doc["score"]["max_samples"] = max_score_samples;
    atomic_write_file(path, doc.dump(2) + "\n");
}

uint64_t PipelineConfig::split_seed() const { return derive_seed(seed, "split"); }
uint64_t PipelineConfig::subsample_seed() const { return derive_seed(seed, "subsample"); }
uint64_t PipelineConfig::epoch_seed() const { return derive_seed(seed, "epochs"); }

} // namespace pplxprune

#include "pplxprune/selector.hpp"

#include <rapidjson/document.h>
#include <rapidjson/error/en.h>

#include <algorithm>
#include <fstream>

#include "pplxprune/errors.hpp"
#include "pplxprune/extsort.hpp"
#include "pplxprune/io.hpp"
#include "pplxprune/scorer.hpp"
#include "score_spill.hpp"

namespace pplxprune {

SelectionCriteria parse_criteria(const std::string& name) {
    if (name == "low") return SelectionCriteria::low;
    if (name == "medium") return SelectionCriteria::medium;
    if (name == "high") return SelectionCriteria::high;
    throw ConfigError("unknown selection criteria '" + name +
                      "' (expected low, medium or high)");
}

std::string criteria_name(SelectionCriteria c) {
    switch (c) {
    case SelectionCriteria::low: return "low";
    case SelectionCriteria::medium: return "medium";
    case SelectionCriteria::high: return "high";
    }
    throw ConfigError("invalid selection criteria value");
}

PercentileWindow window_for(SelectionCriteria criteria, double rate) {
    if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("selection rate must lie in (0, 1)");
    switch (criteria) {
    case SelectionCriteria::low: return {0.0, rate};
    case SelectionCriteria::medium: return {0.5 - rate / 2.0, 0.5 + rate / 2.0};
    case SelectionCriteria::high: return {1.0 - rate, 1.0};
    }
    throw ConfigError("invalid selection criteria value");
}

bool rank_selected(uint64_t k, uint64_t n, const PercentileWindow& window,
                   SelectionCriteria criteria) {
    double q = (static_cast<double>(k) - 0.5) / static_cast<double>(n);
    if (criteria == SelectionCriteria::high) {
        return window.min_percentile < q && q <= window.max_percentile;
    }
    return window.min_percentile <= q && q < window.max_percentile;
}

namespace {

void append_window(std::string& out, const PercentileWindow& w) {
    out += "{\"min_percentile\":";
    append_double(out, w.min_percentile);
    out += ",\"max_percentile\":";
    append_double(out, w.max_percentile);
    out += '}';
}

// Shared tail of both sort paths: walk records in rank order, keep the window.
struct SelectionAccumulator {
    PercentileWindow window;
    SelectionCriteria criteria;
    uint64_t n = 0;
    uint64_t rank = 0;
    uint64_t pre_tokens = 0;
    uint64_t post_tokens = 0;
    std::vector<std::string> selected;

    void take(ScoreRecord&& record) {
        ++rank;
        pre_tokens += record.n_tokens;
        if (rank_selected(rank, n, window, criteria)) {
            post_tokens += record.n_tokens;
            selected.push_back(std::move(record.sample_id));
        }
    }

    PruneManifest finish(SelectionCriteria c, double rate) {
        PruneManifest m;
        m.criteria = criteria_name(c);
        m.rate = rate;
        m.window = window;
        m.n_candidates = n;
        m.achieved_rate = static_cast<double>(selected.size()) / static_cast<double>(n);
        m.pre_tokens = pre_tokens;
        m.post_tokens = post_tokens;
        std::sort(selected.begin(), selected.end());
        m.selected_ids = std::move(selected);
        return m;
    }
};

} // namespace

PruneManifest select_from_records(std::vector<ScoreRecord> records, SelectionCriteria criteria,
                                  double rate) {
    PercentileWindow window = window_for(criteria, rate);
    if (records.size() < 2) {
        throw DataError("selection needs at least 2 scored samples, got " +
                        std::to_string(records.size()));
    }
    std::sort(records.begin(), records.end(), PplxIdLess{});

    SelectionAccumulator acc;
    acc.window = window;
    acc.criteria = criteria;
    acc.n = records.size();
    for (ScoreRecord& r : records) acc.take(std::move(r));
    return acc.finish(criteria, rate);
}

PruneManifest select_samples(const std::filesystem::path& scores_path, SelectionCriteria criteria,
                             double rate, const SelectOptions& options) {
    PercentileWindow window = window_for(criteria, rate);
    ScoreCacheMeta meta = load_complete_cache_meta(scores_path);

    PruneManifest manifest;
    if (options.sort == SortMode::in_memory) {
        std::vector<ScoreRecord> records;
        records.reserve(meta.n_scored);
        ScoreReader reader(scores_path);
        while (auto r = reader.next()) records.push_back(std::move(*r));
        if (records.size() != meta.n_scored) {
            throw DataError(scores_path.string() + ": expected " + std::to_string(meta.n_scored) +
                            " records, found " + std::to_string(records.size()));
        }
        manifest = select_from_records(std::move(records), criteria, rate);
    } else {
        std::filesystem::path tmp_dir = options.tmp_dir.empty()
                                            ? scores_path.parent_path() / "select.tmp"
                                            : options.tmp_dir;
        std::filesystem::remove_all(tmp_dir);

        ExternalSorter<ScoreRecord, ScoreSpillCodec, PplxIdLess> sorter(
            tmp_dir, options.external_buffer_records);
        {
            ScoreReader reader(scores_path);
            while (auto r = reader.next()) sorter.add(std::move(*r));
        }
        if (sorter.size() != meta.n_scored) {
            throw DataError(scores_path.string() + ": expected " + std::to_string(meta.n_scored) +
                            " records, found " + std::to_string(sorter.size()));
        }
        if (sorter.size() < 2) {
            throw DataError("selection needs at least 2 scored samples, got " +
                            std::to_string(sorter.size()));
        }

        SelectionAccumulator acc;
        acc.window = window;
        acc.criteria = criteria;
        acc.n = sorter.size();
        auto merger = sorter.finish();
        while (auto r = merger.next()) acc.take(std::move(*r));
        manifest = acc.finish(criteria, rate);
        std::filesystem::remove_all(tmp_dir);
    }
    manifest.corpus_name = meta.corpus_name;
    return manifest;
}

void PruneManifest::save(const std::filesystem::path& path) const {
    std::string out;
    out.reserve(128 + selected_ids.size() * 16);
    out += "{\"corpus\":\"";
    append_json_escaped(out, corpus_name);
    out += "\",\"criteria\":\"";
    append_json_escaped(out, criteria);
    out += "\",\"rate\":";
    append_double(out, rate);
    out += ",\"window\":";
    append_window(out, window);
    out += ",\"n_candidates\":";
    append_uint(out, n_candidates);
    out += ",\"achieved_rate\":";
    append_double(out, achieved_rate);
    out += ",\"pre_tokens\":";
    append_uint(out, pre_tokens);
    out += ",\"post_tokens\":";
    append_uint(out, post_tokens);
    out += ",\"selected_ids\":[";
    for (size_t i = 0; i < selected_ids.size(); ++i) {
        if (i) out += ',';
        out += '"';
        append_json_escaped(out, selected_ids[i]);
        out += '"';
    }
    out += "]}\n";
    atomic_write_file(path, out);
}

PruneManifest PruneManifest::load(const std::filesystem::path& path) {
    std::string where = path.string();
    std::string content = read_file(path);
    rapidjson::Document doc;
    doc.Parse<rapidjson::kParseFullPrecisionFlag>(content.data(), content.size());
    if (doc.HasParseError()) {
        throw DataError(where + ": " + rapidjson::GetParseError_En(doc.GetParseError()));
    }
    if (!doc.IsObject()) throw DataError(where + ": not a JSON object");

    auto str = [&](const char* key) {
        auto it = doc.FindMember(key);
        if (it == doc.MemberEnd() || !it->value.IsString()) {
            throw DataError(where + ": missing or invalid '" + std::string(key) + "'");
        }
        return std::string(it->value.GetString(), it->value.GetStringLength());
    };
    auto num = [&](const char* key) {
        auto it = doc.FindMember(key);
        if (it == doc.MemberEnd() || !it->value.IsNumber()) {
            throw DataError(where + ": missing or invalid '" + std::string(key) + "'");
        }
        return it->value.GetDouble();
    };
    auto uint = [&](const char* key) {
        auto it = doc.FindMember(key);
        if (it == doc.MemberEnd() || !it->value.IsUint64()) {
            throw DataError(where + ": missing or invalid '" + std::string(key) + "'");
        }
        return it->value.GetUint64();
    };

    PruneManifest m;
    m.corpus_name = str("corpus");
    m.criteria = str("criteria");
    parse_criteria(m.criteria);
    m.rate = num("rate");
    auto w_it = doc.FindMember("window");
    if (w_it == doc.MemberEnd() || !w_it->value.IsObject()) {
        throw DataError(where + ": missing or invalid 'window'");
    }
    auto wmin = w_it->value.FindMember("min_percentile");
    auto wmax = w_it->value.FindMember("max_percentile");
    if (wmin == w_it->value.MemberEnd() || !wmin->value.IsNumber() ||
        wmax == w_it->value.MemberEnd() || !wmax->value.IsNumber()) {
        throw DataError(where + ": invalid 'window' bounds");
    }
    m.window.min_percentile = wmin->value.GetDouble();
    m.window.max_percentile = wmax->value.GetDouble();
    m.n_candidates = uint("n_candidates");
    m.achieved_rate = num("achieved_rate");
    m.pre_tokens = uint("pre_tokens");
    m.post_tokens = uint("post_tokens");

    auto ids_it = doc.FindMember("selected_ids");
    if (ids_it == doc.MemberEnd() || !ids_it->value.IsArray()) {
        throw DataError(where + ": missing or invalid 'selected_ids'");
    }
    m.selected_ids.reserve(ids_it->value.Size());
    for (const auto& v : ids_it->value.GetArray()) {
        if (!v.IsString()) throw DataError(where + ": non-string entry in 'selected_ids'");
        m.selected_ids.emplace_back(v.GetString(), v.GetStringLength());
    }
    return m;
}

CorpusManifest materialize_pruned(const CorpusManifest& corpus, const PruneManifest& prune,
                                  const std::filesystem::path& out_dir,
                                  const std::string& pruned_name, MaterializeStats* stats) {
    if (prune.selected_ids.empty()) {
        throw DataError("refusing to materialize an empty selection");
    }
    std::unordered_set<std::string> wanted(prune.selected_ids.begin(), prune.selected_ids.end());
    std::filesystem::create_directories(out_dir);

    CorpusManifest pruned;
    pruned.name = pruned_name.empty() ? corpus.name + "-pruned" : pruned_name;
    pruned.vocab_size = corpus.vocab_size;
    pruned.domains = corpus.domains; // label set is unchanged by selection
    pruned.shard_paths = corpus.shard_paths;
    pruned.dir = out_dir;

    for (size_t i = 0; i < corpus.shard_paths.size(); ++i) {
        std::filesystem::path src = corpus.shard_path(i);
        std::ifstream in(src, std::ios::binary);
        if (!in) throw DataError("missing shard file " + src.string());

        std::filesystem::path dst = out_dir / corpus.shard_paths[i];
        if (dst.has_parent_path()) std::filesystem::create_directories(dst.parent_path());
        std::ofstream out(dst, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot create shard file " + dst.string());

        std::string line;
        std::string buf;
        buf.reserve(1 << 20);
        uint64_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            Sample s = parse_sample_line(line, corpus.shard_paths[i], line_no);
            if (!wanted.erase(s.id)) continue;
            buf += line; // verbatim: keeps shard bytes stable across rebuilds
            buf += '\n';
            pruned.total_samples += 1;
            pruned.total_tokens += s.n_tokens();
            if (buf.size() >= (1 << 20)) {
                out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
                buf.clear();
            }
        }
        if (in.bad()) throw DataError("failed reading " + src.string());
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        out.flush();
        if (!out) throw DataError("failed writing " + dst.string());
    }

    if (!wanted.empty()) {
        // Report deterministically: the lexicographically first missing id.
        for (const std::string& id : prune.selected_ids) {
            if (wanted.count(id)) {
                throw DataError("selected id '" + id + "' is not present in corpus '" +
                                corpus.name + "'");
            }
        }
    }

    if (stats) {
        stats->samples = pruned.total_samples;
        stats->tokens = pruned.total_tokens;
    }
    pruned.save(out_dir / std::string(artifact::corpus_manifest));
    return pruned;
}

} // namespace pplxprune

#include "pplxprune/splitter.hpp"

#include <rapidjson/document.h>
#include <rapidjson/error/en.h>

#include <algorithm>

#include "pplxprune/errors.hpp"
#include "pplxprune/io.hpp"

namespace pplxprune {

namespace {

void append_id_array(std::string& out, const std::vector<std::string>& ids) {
    out += '[';
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ',';
        out += '"';
        append_json_escaped(out, ids[i]);
        out += '"';
    }
    out += ']';
}

void append_counts(std::string& out, const SplitCounts& counts) {
    out += "{\"samples\":";
    append_uint(out, counts.samples);
    out += ",\"tokens\":";
    append_uint(out, counts.tokens);
    out += '}';
}

std::vector<std::string> read_id_array(const rapidjson::Value& doc, const char* key,
                                       const std::string& where) {
    auto it = doc.FindMember(key);
    if (it == doc.MemberEnd() || !it->value.IsArray()) {
        throw DataError(where + ": missing or invalid '" + std::string(key) + "'");
    }
    std::vector<std::string> out;
    out.reserve(it->value.Size());
    for (const auto& v : it->value.GetArray()) {
        if (!v.IsString()) throw DataError(where + ": non-string id in '" + std::string(key) + "'");
        out.emplace_back(v.GetString(), v.GetStringLength());
    }
    return out;
}

SplitCounts read_counts(const rapidjson::Value& doc, const char* key, const std::string& where) {
    auto it = doc.FindMember(key);
    if (it == doc.MemberEnd() || !it->value.IsObject()) {
        throw DataError(where + ": missing or invalid '" + std::string(key) + "'");
    }
    SplitCounts c;
    auto s = it->value.FindMember("samples");
    auto t = it->value.FindMember("tokens");
    if (s == it->value.MemberEnd() || !s->value.IsUint64() || t == it->value.MemberEnd() ||
        !t->value.IsUint64()) {
        throw DataError(where + ": invalid counts under '" + std::string(key) + "'");
    }
    c.samples = s->value.GetUint64();
    c.tokens = t->value.GetUint64();
    return c;
}

} // namespace

void SplitManifest::save(const std::filesystem::path& path) const {
    std::string out;
    out.reserve(64 + (ref_ids.size() + train_ids.size()) * 16);
    out += "{\"seed\":";
    append_uint(out, seed);
    out += ",\"ref_fraction\":";
    append_double(out, ref_fraction);
    out += ",\"ref\":";
    append_counts(out, ref);
    out += ",\"train\":";
    append_counts(out, train);
    out += ",\"ref_ids\":";
    append_id_array(out, ref_ids);
    out += ",\"train_ids\":";
    append_id_array(out, train_ids);
    out += "}\n";
    atomic_write_file(path, out);
}

SplitManifest SplitManifest::load(const std::filesystem::path& path) {
    std::string where = path.string();
    std::string content = read_file(path);
    rapidjson::Document doc;
    doc.Parse(content.data(), content.size());
    if (doc.HasParseError()) {
        throw DataError(where + ": " + rapidjson::GetParseError_En(doc.GetParseError()));
    }
    if (!doc.IsObject()) throw DataError(where + ": not a JSON object");

    SplitManifest m;
    auto seed_it = doc.FindMember("seed");
    auto frac_it = doc.FindMember("ref_fraction");
    if (seed_it == doc.MemberEnd() || !seed_it->value.IsUint64() || frac_it == doc.MemberEnd() ||
        !frac_it->value.IsNumber()) {
        throw DataError(where + ": missing or invalid 'seed'/'ref_fraction'");
    }
    m.seed = seed_it->value.GetUint64();
    m.ref_fraction = frac_it->value.GetDouble();
    m.ref = read_counts(doc, "ref", where);
    m.train = read_counts(doc, "train", where);
    m.ref_ids = read_id_array(doc, "ref_ids", where);
    m.train_ids = read_id_array(doc, "train_ids", where);
    return m;
}

SplitManifest split_corpus(const CorpusManifest& corpus, const SplitSpec& spec) {
    if (!(spec.ref_fraction > 0.0 && spec.ref_fraction < 1.0)) {
        throw ConfigError("ref_fraction must lie in (0, 1)");
    }
    if (corpus.total_samples == 0) throw DataError("cannot split an empty corpus");

    SplitManifest m;
    m.seed = spec.seed;
    m.ref_fraction = spec.ref_fraction;
    SampleReader reader(corpus);
    while (auto s = reader.next()) {
        if (assigned_to_ref(spec, s->id)) {
            m.ref_ids.push_back(std::move(s->id));
            m.ref.samples += 1;
            m.ref.tokens += s->n_tokens();
        } else {
            m.train_ids.push_back(std::move(s->id));
            m.train.samples += 1;
            m.train.tokens += s->n_tokens();
        }
    }
    std::sort(m.ref_ids.begin(), m.ref_ids.end());
    std::sort(m.train_ids.begin(), m.train_ids.end());
    return m;
}

} // namespace pplxprune

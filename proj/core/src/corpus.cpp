#include "pplxprune/corpus.hpp"

#include <nlohmann/json.hpp>
#include <rapidjson/document.h>
#include <rapidjson/error/en.h>

#include <algorithm>
#include <set>
#include <unordered_map>

#include "pplxprune/errors.hpp"
#include "pplxprune/io.hpp"

namespace pplxprune {

namespace {

std::string location(std::string_view where, uint64_t line_no) {
    std::string s(where);
    s += ":";
    s += std::to_string(line_no);
    return s;
}

// Shared by the shard-line codec and raw-record ingest. Returns an error
// message instead of throwing so ingest can downgrade problems to rejects.
struct ParsedRecord {
    Sample sample;
    std::string error; // empty on success
};

ParsedRecord parse_record(std::string_view line, const Tokenizer* tokenizer,
                          std::string_view domain_field) {
    ParsedRecord out;
    rapidjson::Document doc;
    doc.Parse(line.data(), line.size());
    if (doc.HasParseError()) {
        out.error = std::string("invalid JSON: ") + rapidjson::GetParseError_En(doc.GetParseError());
        return out;
    }
    if (!doc.IsObject()) {
        out.error = "record is not a JSON object";
        return out;
    }

    auto id_it = doc.FindMember("id");
    if (id_it == doc.MemberEnd() || !id_it->value.IsString()) {
        out.error = "missing or non-string 'id'";
        return out;
    }
    out.sample.id.assign(id_it->value.GetString(), id_it->value.GetStringLength());
    if (out.sample.id.empty()) {
        out.error = "empty 'id'";
        return out;
    }

    rapidjson::Value domain_key(rapidjson::StringRef(
        domain_field.data(), static_cast<rapidjson::SizeType>(domain_field.size())));
    auto dom_it = doc.FindMember(domain_key);
    if (dom_it == doc.MemberEnd() || !dom_it->value.IsString()) {
        out.error = "missing or non-string '" + std::string(domain_field) + "'";
        return out;
    }
    out.sample.domain.assign(dom_it->value.GetString(), dom_it->value.GetStringLength());
    if (out.sample.domain.empty()) {
        out.error = "empty '" + std::string(domain_field) + "'";
        return out;
    }

    uint64_t vocab = tokenizer->vocab_size();
    auto tok_it = doc.FindMember("tokens");
    if (tok_it != doc.MemberEnd()) {
        if (!tok_it->value.IsArray()) {
            out.error = "'tokens' is not an array";
            return out;
        }
        const auto& arr = tok_it->value;
        out.sample.tokens.reserve(arr.Size());
        for (const auto& v : arr.GetArray()) {
            if (!v.IsUint() || v.GetUint() >= vocab) {
                out.error = "token id out of range for vocab_size " + std::to_string(vocab);
                return out;
            }
            out.sample.tokens.push_back(v.GetUint());
        }
    } else {
        auto text_it = doc.FindMember("text");
        if (text_it == doc.MemberEnd() || !text_it->value.IsString()) {
            out.error = "record has neither 'tokens' nor 'text'";
            return out;
        }
        if (tokenizer->kind() != Tokenizer::Kind::byte_level) {
            out.error = "'text' requires the byte-level tokenizer";
            return out;
        }
        out.sample.tokens = tokenizer->tokenize(
            std::string_view(text_it->value.GetString(), text_it->value.GetStringLength()));
    }

    if (out.sample.tokens.empty()) {
        out.error = "empty sample (n_tokens must be >= 1)";
        return out;
    }
    return out;
}

uint64_t require_uint(const nlohmann::json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_unsigned()) {
        throw DataError(where + ": missing or invalid '" + key + "'");
    }
    return it->get<uint64_t>();
}

std::string require_string(const nlohmann::json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
        throw DataError(where + ": missing or invalid '" + key + "'");
    }
    return it->get<std::string>();
}

std::vector<std::string> require_string_array(const nlohmann::json& j, const char* key,
                                              const std::string& where) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_array()) {
        throw DataError(where + ": missing or invalid '" + key + "'");
    }
    std::vector<std::string> out;
    out.reserve(it->size());
    for (const auto& v : *it) {
        if (!v.is_string()) throw DataError(where + ": non-string entry in '" + key + "'");
        out.push_back(v.get<std::string>());
    }
    return out;
}

} // namespace

void CorpusManifest::save(const std::filesystem::path& path) const {
    std::string out;
    out.reserve(256 + shard_paths.size() * 24);
    out += "{\"name\":\"";
    append_json_escaped(out, name);
    out += "\",\"vocab_size\":";
    append_uint(out, vocab_size);
    out += ",\"domains\":[";
    for (size_t i = 0; i < domains.size(); ++i) {
        if (i) out += ',';
        out += '"';
        append_json_escaped(out, domains[i]);
        out += '"';
    }
    out += "],\"shard_paths\":[";
    for (size_t i = 0; i < shard_paths.size(); ++i) {
        if (i) out += ',';
        out += '"';
        append_json_escaped(out, shard_paths[i]);
        out += '"';
    }
    out += "],\"total_samples\":";
    append_uint(out, total_samples);
    out += ",\"total_tokens\":";
    append_uint(out, total_tokens);
    out += "}\n";
    atomic_write_file(path, out);
}

CorpusManifest CorpusManifest::load(const std::filesystem::path& path) {
    std::string where = path.string();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(where + ": " + e.what());
    }
    if (!j.is_object()) throw DataError(where + ": manifest is not a JSON object");

    CorpusManifest m;
    m.name = require_string(j, "name", where);
    m.vocab_size = require_uint(j, "vocab_size", where);
    m.domains = require_string_array(j, "domains", where);
    m.shard_paths = require_string_array(j, "shard_paths", where);
    m.total_samples = require_uint(j, "total_samples", where);
    m.total_tokens = require_uint(j, "total_tokens", where);
    m.dir = path.parent_path();
    if (m.vocab_size == 0) throw DataError(where + ": vocab_size must be positive");
    return m;
}

Tokenizer Tokenizer::passthrough(uint64_t vocab_size) {
    if (vocab_size == 0) throw ConfigError("passthrough tokenizer needs a positive vocab_size");
    if (vocab_size > (1ull << 32)) {
        throw ConfigError("vocab_size exceeds the 32-bit token id range");
    }
    return Tokenizer(Kind::passthrough, vocab_size);
}

Tokenizer Tokenizer::byte_level() { return Tokenizer(Kind::byte_level, 257); }

Tokenizer Tokenizer::from_name(std::string_view name, std::optional<uint64_t> vocab_size) {
    if (name == "bytes" || name == "byte-level") {
        if (vocab_size && *vocab_size != 257) {
            throw ConfigError("byte-level tokenizer has a fixed vocab_size of 257");
        }
        return byte_level();
    }
    if (name == "passthrough") {
        if (!vocab_size) throw ConfigError("passthrough tokenizer requires --vocab-size");
        return passthrough(*vocab_size);
    }
    throw ConfigError("unknown tokenizer '" + std::string(name) +
                      "' (expected 'bytes' or 'passthrough')");
}

std::vector<uint32_t> Tokenizer::tokenize(std::string_view text) const {
    if (kind_ != Kind::byte_level) {
        throw ConfigError("passthrough tokenizer cannot tokenize text");
    }
    std::vector<uint32_t> tokens;
    tokens.reserve(text.size());
    for (char c : text) tokens.push_back(static_cast<unsigned char>(c));
    return tokens;
}

std::string Tokenizer::detokenize(const std::vector<uint32_t>& tokens) const {
    if (kind_ != Kind::byte_level) {
        throw ConfigError("passthrough tokenizer cannot detokenize");
    }
    std::string text;
    text.reserve(tokens.size());
    for (uint32_t t : tokens) {
        if (t == byte_eot_id) continue; // end-of-text carries no bytes
        if (t > byte_eot_id) throw DataError("token id " + std::to_string(t) + " is not byte-level");
        text += static_cast<char>(static_cast<unsigned char>(t));
    }
    return text;
}

CorpusManifest ingest(const std::filesystem::path& raw_path, const Tokenizer& tokenizer,
                      const std::filesystem::path& out_dir, const IngestOptions& options,
                      IngestStats* stats) {
    std::ifstream in(raw_path);
    if (!in) throw DataError("cannot open input " + raw_path.string());
    if (options.shard_max_samples == 0) throw ConfigError("shard_max_samples must be positive");
    std::filesystem::create_directories(out_dir);

    CorpusManifest manifest;
    manifest.name = options.name.empty() ? raw_path.stem().string() : options.name;
    manifest.vocab_size = tokenizer.vocab_size();
    manifest.dir = out_dir;

    IngestStats local;
    IngestStats& st = stats ? *stats : local;
    st = IngestStats{};

    std::unordered_map<std::string, uint64_t> seen_ids; // id -> first line number
    std::set<std::string> domains;
    std::ofstream rejects;
    std::filesystem::remove(out_dir / std::string(artifact::rejects_log));

    std::ofstream shard;
    uint64_t shard_samples = 0;
    std::string write_buf;
    write_buf.reserve(1 << 20);

    auto flush_buf = [&]() {
        if (!write_buf.empty()) {
            shard.write(write_buf.data(), static_cast<std::streamsize>(write_buf.size()));
            write_buf.clear();
        }
    };
    auto close_shard = [&]() {
        if (shard.is_open()) {
            flush_buf();
            shard.flush();
            if (!shard) {
                throw DataError("failed writing shard " +
                                manifest.shard_paths.back() + " under " + out_dir.string());
            }
            shard.close();
        }
    };
    auto open_next_shard = [&]() {
        close_shard();
        char name[32];
        std::snprintf(name, sizeof name, "shard-%05zu.jsonl", manifest.shard_paths.size());
        manifest.shard_paths.emplace_back(name);
        shard.open(out_dir / name, std::ios::binary | std::ios::trunc);
        if (!shard) throw DataError("cannot create shard file " + (out_dir / name).string());
        shard_samples = 0;
    };

    std::string line;
    uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        ++st.lines;
        ParsedRecord rec = parse_record(line, &tokenizer, options.domain_field);
        if (!rec.error.empty()) {
            ++st.rejected;
            if (!rejects.is_open()) {
                rejects.open(out_dir / std::string(artifact::rejects_log),
                             std::ios::binary | std::ios::trunc);
            }
            rejects << "line " << line_no << ": " << rec.error << "\n";
            continue;
        }
        auto [it, inserted] = seen_ids.emplace(rec.sample.id, line_no);
        if (!inserted) {
            throw DataError("duplicate sample id '" + rec.sample.id + "' at " +
                            location(raw_path.string(), it->second) + " and " +
                            location(raw_path.string(), line_no));
        }
        if (!shard.is_open() || shard_samples >= options.shard_max_samples) open_next_shard();
        append_sample_line(write_buf, rec.sample);
        if (write_buf.size() >= (1 << 20)) flush_buf();
        ++shard_samples;
        ++st.accepted;
        manifest.total_samples += 1;
        manifest.total_tokens += rec.sample.n_tokens();
        domains.insert(std::move(rec.sample.domain));
    }
    if (in.bad()) throw DataError("failed reading " + raw_path.string());
    close_shard();

    if (st.accepted == 0) {
        throw DataError("no valid samples in " + raw_path.string() + " (" +
                        std::to_string(st.rejected) + " rejected)");
    }

    manifest.domains.assign(domains.begin(), domains.end());
    // The manifest is the commit point: readers treat its presence as "ingest
    // finished", so it goes last.
    manifest.save(out_dir / std::string(artifact::corpus_manifest));
    return manifest;
}

SampleReader::SampleReader(const CorpusManifest& manifest,
                           const std::unordered_set<std::string>* id_filter)
    : manifest_(&manifest), filter_(id_filter) {}

bool SampleReader::open_next_shard() {
    if (shard_index_ >= manifest_->shard_paths.size()) return false;
    std::filesystem::path path = manifest_->shard_path(shard_index_);
    in_.close();
    in_.clear();
    in_.open(path, std::ios::binary);
    if (!in_) throw DataError("missing shard file " + path.string());
    ++shard_index_;
    line_no_ = 0;
    return true;
}

bool SampleReader::next_line(std::string& line) {
    while (true) {
        if (!in_.is_open()) {
            if (!open_next_shard()) return false;
        }
        if (std::getline(in_, line)) {
            ++line_no_;
            return true;
        }
        if (in_.bad()) {
            throw DataError("failed reading shard " +
                            manifest_->shard_paths[shard_index_ - 1]);
        }
        in_.close();
        in_.clear();
    }
}

std::optional<Sample> SampleReader::next() {
    std::string line;
    while (next_line(line)) {
        Sample s = parse_sample_line(line, manifest_->shard_paths[shard_index_ - 1], line_no_);
        if (filter_ && !filter_->count(s.id)) continue;
        return s;
    }
    return std::nullopt;
}

void SampleReader::rewind() {
    in_.close();
    in_.clear();
    shard_index_ = 0;
    line_no_ = 0;
}

Sample parse_sample_line(std::string_view line, std::string_view where, uint64_t line_no) {
    // Shard files are written by ingest/materialize, so every field is
    // mandatory here; a parse failure means a corrupt artifact.
    Tokenizer passthrough_any = Tokenizer::passthrough(1ull << 32);
    ParsedRecord rec = parse_record(line, &passthrough_any, "domain");
    if (!rec.error.empty()) {
        throw DataError(location(where, line_no) + ": " + rec.error);
    }
    return std::move(rec.sample);
}

void append_sample_line(std::string& out, const Sample& sample) {
    out += "{\"id\":\"";
    append_json_escaped(out, sample.id);
    out += "\",\"domain\":\"";
    append_json_escaped(out, sample.domain);
    out += "\",\"tokens\":[";
    for (size_t i = 0; i < sample.tokens.size(); ++i) {
        if (i) out += ',';
        append_uint(out, sample.tokens[i]);
    }
    out += "]}\n";
}

} // namespace pplxprune

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace pplxprune {

// One tokenized document. Ids are unique within a corpus; token ids are
// validated against the manifest vocab_size at ingest.
struct Sample {
    std::string id;
    std::string domain;
    std::vector<uint32_t> tokens;

    uint64_t n_tokens() const { return tokens.size(); }
};

// Top-level description of an on-disk corpus: manifest.json next to the
// shard files. Totals are exact and verified at ingest.
struct CorpusManifest {
    std::string name;
    uint64_t vocab_size = 0;
    std::vector<std::string> domains;     // sorted, unique, covers every sample
    std::vector<std::string> shard_paths; // relative to the manifest's directory
    uint64_t total_samples = 0;
    uint64_t total_tokens = 0;

    // Directory the manifest was loaded from (not serialized).
    std::filesystem::path dir;

    std::filesystem::path shard_path(size_t index) const {
        return dir / shard_paths[index];
    }

    void save(const std::filesystem::path& path) const;
    static CorpusManifest load(const std::filesystem::path& path);
};

// Pluggable tokenization for ingest. `passthrough` accepts pre-tokenized
// records and validates ids against the vocabulary; `byte_level` maps text
// bytes to ids 0..255 with id 256 reserved as end-of-text.
class Tokenizer {
public:
    enum class Kind { passthrough, byte_level };
    static constexpr uint32_t byte_eot_id = 256;

    static Tokenizer passthrough(uint64_t vocab_size);
    static Tokenizer byte_level();
    static Tokenizer from_name(std::string_view name, std::optional<uint64_t> vocab_size);

    Kind kind() const { return kind_; }
    uint64_t vocab_size() const { return vocab_size_; }

    // byte_level only; passthrough records carry tokens already.
    std::vector<uint32_t> tokenize(std::string_view text) const;
    // Inverse of tokenize; the end-of-text id produces no bytes.
    std::string detokenize(const std::vector<uint32_t>& tokens) const;

private:
    Tokenizer(Kind kind, uint64_t vocab_size) : kind_(kind), vocab_size_(vocab_size) {}
    Kind kind_;
    uint64_t vocab_size_;
};

struct IngestOptions {
    std::string name;                   // defaults to the input file stem
    std::string domain_field = "domain";
    uint64_t shard_max_samples = 100000;
};

struct IngestStats {
    uint64_t lines = 0;
    uint64_t accepted = 0;
    uint64_t rejected = 0;
};

// Converts line-delimited raw records {id, domain, text|tokens} into shard
// files plus manifest.json under out_dir. Malformed records are appended to
// <out_dir>/rejects.log with their line numbers and skipped; a duplicate id
// aborts, naming both occurrences. The manifest is written last and acts as
// the commit point of the ingest.
CorpusManifest ingest(const std::filesystem::path& raw_path, const Tokenizer& tokenizer,
                      const std::filesystem::path& out_dir, const IngestOptions& options,
                      IngestStats* stats = nullptr);

// Streams samples in shard order, then line order within each shard; the
// order is deterministic across runs. With a filter, yields exactly the
// filtered subset in the same order (empty set -> nothing; null -> all).
class SampleReader {
public:
    explicit SampleReader(const CorpusManifest& manifest,
                          const std::unordered_set<std::string>* id_filter = nullptr);

    std::optional<Sample> next();

    // Raw line access for callers that parse in worker threads.
    bool next_line(std::string& line);
    void rewind();

    // Position of the line most recently returned, for error messages.
    size_t current_shard() const { return shard_index_ == 0 ? 0 : shard_index_ - 1; }
    uint64_t current_line() const { return line_no_; }

private:
    bool open_next_shard();

    const CorpusManifest* manifest_;
    const std::unordered_set<std::string>* filter_;
    size_t shard_index_ = 0;
    uint64_t line_no_ = 0; // within the current shard
    std::ifstream in_;
};

// Shard-line codec ({"id":...,"domain":...,"tokens":[...]}): the hot path for
// every full-corpus pass. `where` names the source in error messages.
Sample parse_sample_line(std::string_view line, std::string_view where, uint64_t line_no);
void append_sample_line(std::string& out, const Sample& sample);

} // namespace pplxprune

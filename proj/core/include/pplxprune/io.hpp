#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace pplxprune {

// Canonical artifact names inside a work directory.
namespace artifact {
inline constexpr std::string_view corpus_manifest = "manifest.json";
inline constexpr std::string_view split_manifest = "split.json";
inline constexpr std::string_view ref_model = "ref_model.ngram";
inline constexpr std::string_view scores = "scores.jsonl";
inline constexpr std::string_view scores_meta = "scores.meta.json";
inline constexpr std::string_view prune_manifest = "prune.json";
inline constexpr std::string_view pruned_dir = "pruned";
inline constexpr std::string_view domains_csv = "domains.csv";
inline constexpr std::string_view pplx_dist = "pplx_dist.json";
inline constexpr std::string_view pplx_dist_pruned = "pplx_dist.pruned.json";
inline constexpr std::string_view plan = "plan.json";
inline constexpr std::string_view eval_summary = "summary.json";
inline constexpr std::string_view eval_csv = "summary.csv";
inline constexpr std::string_view resolved_config = "config.resolved.json";
inline constexpr std::string_view rejects_log = "rejects.log";
} // namespace artifact

// Writes `content` to `path` atomically: write to a sibling temp file, then
// rename over the target. Readers never observe a torn artifact.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

// Streaming variant for large artifacts; `producer` writes to the temp file's
// stream, which is renamed onto `path` afterwards.
void atomic_write_stream(const std::filesystem::path& path,
                         const std::function<void(std::ostream&)>& producer);

std::string read_file(const std::filesystem::path& path);

// 64-bit content hash of a file (streaming), used for scorer descriptors and
// artifact comparison. Same construction as hash64.
uint64_t hash_file(const std::filesystem::path& path);
std::string hash_file_hex(const std::filesystem::path& path);

// Exclusive advisory lock on <dir>/.lock via flock(2); released on destruction
// or process death. Acquisition failure means another subcommand holds the
// work directory.
class DirLock {
public:
    explicit DirLock(const std::filesystem::path& dir);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    int fd_ = -1;
};

// Shortest round-trip decimal formatting (std::to_chars) so artifacts are
// byte-identical across runs and worker counts.
void append_double(std::string& out, double value);
void append_uint(std::string& out, uint64_t value);

// Append `text` JSON-escaped (without surrounding quotes).
void append_json_escaped(std::string& out, std::string_view text);

} // namespace pplxprune

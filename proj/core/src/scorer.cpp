#include "pplxprune/scorer.hpp"

#include <rapidjson/document.h>
#include <rapidjson/error/en.h>

#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <thread>

#include "pplxprune/errors.hpp"
#include "pplxprune/extsort.hpp"
#include "pplxprune/io.hpp"

#include "score_spill.hpp"

namespace pplxprune {

namespace {

using ScoreSorter = ExternalSorter<ScoreRecord, ScoreSpillCodec, ScoreIdLess>;

// Raw shard line plus provenance for error messages.
struct TaggedLine {
    uint32_t shard = 0;
    uint32_t line_no = 0;
    std::string text;
};

// Bounded hand-off of raw shard lines from the reader to the workers.
class BatchQueue {
public:
    explicit BatchQueue(size_t capacity) : capacity_(capacity) {}

    bool push(std::vector<TaggedLine>&& batch) {
        std::unique_lock lock(mutex_);
        not_full_.wait(lock, [&] { return queue_.size() < capacity_ || aborted_; });
        if (aborted_) return false;
        queue_.push_back(std::move(batch));
        not_empty_.notify_one();
        return true;
    }

    bool pop(std::vector<TaggedLine>& batch) {
        std::unique_lock lock(mutex_);
        not_empty_.wait(lock, [&] { return !queue_.empty() || closed_ || aborted_; });
        if (aborted_ || queue_.empty()) return false;
        batch = std::move(queue_.front());
        queue_.pop_front();
        not_full_.notify_one();
        return true;
    }

    void close() {
        std::lock_guard lock(mutex_);
        closed_ = true;
        not_empty_.notify_all();
    }

    void abort() {
        std::lock_guard lock(mutex_);
        aborted_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

private:
    std::mutex mutex_;
    std::condition_variable not_full_;
    std::condition_variable not_empty_;
    std::deque<std::vector<TaggedLine>> queue_;
    size_t capacity_;
    bool closed_ = false;
    bool aborted_ = false;
};

uint64_t require_meta_uint(const rapidjson::Value& doc, const char* key, const std::string& where) {
    auto it = doc.FindMember(key);
    if (it == doc.MemberEnd() || !it->value.IsUint64()) {
        throw DataError(where + ": missing or invalid '" + std::string(key) + "'");
    }
    return it->value.GetUint64();
}

std::string require_meta_string(const rapidjson::Value& doc, const char* key,
                                const std::string& where) {
    auto it = doc.FindMember(key);
    if (it == doc.MemberEnd() || !it->value.IsString()) {
        throw DataError(where + ": missing or invalid '" + std::string(key) + "'");
    }
    return std::string(it->value.GetString(), it->value.GetStringLength());
}

// Streams the previous cache during the merge, preserving its lines verbatim
// so resumed runs stay byte-identical with from-scratch runs.
class RawCacheStream {
public:
    RawCacheStream(const std::filesystem::path& path, bool enabled) {
        if (enabled) {
            in_.open(path, std::ios::binary);
            if (!in_) throw DataError("cannot reopen score cache " + path.string());
        }
        advance();
    }

    bool alive() const { return alive_; }
    const std::string& id() const { return id_; }
    const std::string& line() const { return line_; }

    void advance() {
        alive_ = in_.is_open() && static_cast<bool>(std::getline(in_, line_));
        if (alive_) {
            ++line_no_;
            // Lines were validated when the skip set was built; this parse
            // only recovers the id for merge ordering.
            id_ = parse_score_line(line_, "scores.jsonl", line_no_).sample_id;
        }
    }

private:
    std::ifstream in_;
    std::string line_;
    std::string id_;
    uint64_t line_no_ = 0;
    bool alive_ = false;
};

} // namespace

void ScoreCacheMeta::save(const std::filesystem::path& path) const {
    std::string out;
    out += "{\"corpus\":\"";
    append_json_escaped(out, corpus_name);
    out += "\",\"scorer\":\"";
    append_json_escaped(out, scorer_descriptor);
    out += "\",\"complete\":";
    out += complete ? "true" : "false";
    out += ",\"n_scored\":";
    append_uint(out, n_scored);
    out += ",\"n_expected\":";
    append_uint(out, n_expected);
    out += "}\n";
    atomic_write_file(path, out);
}

ScoreCacheMeta ScoreCacheMeta::load(const std::filesystem::path& path) {
    std::string where = path.string();
    std::string content = read_file(path);
    rapidjson::Document doc;
    doc.Parse(content.data(), content.size());
    if (doc.HasParseError()) {
        throw DataError(where + ": " + rapidjson::GetParseError_En(doc.GetParseError()));
    }
    if (!doc.IsObject()) throw DataError(where + ": not a JSON object");

    ScoreCacheMeta meta;
    meta.corpus_name = require_meta_string(doc, "corpus", where);
    meta.scorer_descriptor = require_meta_string(doc, "scorer", where);
    auto c_it = doc.FindMember("complete");
    if (c_it == doc.MemberEnd() || !c_it->value.IsBool()) {
        throw DataError(where + ": missing or invalid 'complete'");
    }
    meta.complete = c_it->value.GetBool();
    meta.n_scored = require_meta_uint(doc, "n_scored", where);
    meta.n_expected = require_meta_uint(doc, "n_expected", where);
    return meta;
}

ScoreCacheMeta score_corpus(const CorpusManifest& corpus, const SplitManifest& split,
                            const NGramModel& model, const std::string& scorer_descriptor,
                            const std::filesystem::path& out_dir, const ScoreOptions& options) {
    if (options.workers < 1) throw ConfigError("workers must be >= 1");
    std::filesystem::create_directories(out_dir);
    std::filesystem::path scores_path = out_dir / std::string(artifact::scores);
    std::filesystem::path meta_path = out_dir / std::string(artifact::scores_meta);

    std::unordered_set<std::string> train_ids(split.train_ids.begin(), split.train_ids.end());
    uint64_t n_expected = train_ids.size();

    // Resume bookkeeping. The meta file is the commit point: score lines
    // without one are leftovers of an interrupted finalize and are rebuilt.
    std::unordered_set<std::string> already;
    bool have_cache = false;
    if (std::filesystem::exists(meta_path)) {
        ScoreCacheMeta meta = ScoreCacheMeta::load(meta_path);
        if (meta.scorer_descriptor != scorer_descriptor) {
            throw DataError("score cache was produced by a different scorer (" +
                            meta.scorer_descriptor + " vs " + scorer_descriptor +
                            "); delete " + scores_path.string() + " to rescore");
        }
        if (meta.corpus_name != corpus.name) {
            throw DataError("score cache belongs to corpus '" + meta.corpus_name + "', not '" +
                            corpus.name + "'");
        }
        if (meta.n_expected != n_expected) {
            throw DataError("training split changed since the score cache was created (" +
                            std::to_string(meta.n_expected) + " vs " +
                            std::to_string(n_expected) + " samples)");
        }
        if (meta.complete) {
            if (meta.n_scored != n_expected) {
                throw DataError(meta_path.string() + ": complete cache with n_scored " +
                                std::to_string(meta.n_scored) + " != n_expected " +
                                std::to_string(n_expected));
            }
            return meta; // idempotent rerun: nothing to do
        }
        if (std::filesystem::exists(scores_path)) {
            std::ifstream in(scores_path, std::ios::binary);
            if (!in) throw DataError("cannot open " + scores_path.string());
            std::string line;
            uint64_t line_no = 0;
            std::string prev_id;
            while (std::getline(in, line)) {
                ++line_no;
                ScoreRecord r = parse_score_line(line, scores_path.string(), line_no);
                if (!prev_id.empty() && !(prev_id < r.sample_id)) {
                    throw DataError(scores_path.string() + ": records not sorted by sample_id");
                }
                if (!train_ids.count(r.sample_id)) {
                    throw DataError(scores_path.string() + ":" + std::to_string(line_no) +
                                    ": cached sample_id '" + r.sample_id +
                                    "' is not in the training split");
                }
                prev_id = r.sample_id;
                already.insert(std::move(r.sample_id));
            }
            have_cache = !already.empty();
        }
    }

    std::filesystem::path spill_dir = out_dir / "scores.tmp";
    std::filesystem::remove_all(spill_dir);

    // A sample budget caps how many *new* samples this invocation scores, in
    // corpus order; that is only well-defined single-threaded.
    int workers = options.max_samples > 0 ? 1 : options.workers;
    size_t spill_buffer = 128 * 1024;

    std::vector<std::unique_ptr<ScoreSorter>> sorters;
    sorters.reserve(static_cast<size_t>(workers));
    for (int i = 0; i < workers; ++i) {
        sorters.push_back(std::make_unique<ScoreSorter>(
            spill_dir / ("w" + std::to_string(i)), spill_buffer));
    }

    auto score_line = [&](const TaggedLine& line, ScoreSorter& sorter) -> bool {
        Sample s = parse_sample_line(line.text, corpus.shard_paths[line.shard], line.line_no);
        if (!train_ids.count(s.id) || already.count(s.id)) return false;
        sorter.add(score_sample(model, s));
        return true;
    };

    if (options.max_samples > 0) {
        SampleReader reader(corpus);
        TaggedLine line;
        uint64_t scored = 0;
        while (scored < options.max_samples && reader.next_line(line.text)) {
            line.shard = static_cast<uint32_t>(reader.current_shard());
            line.line_no = static_cast<uint32_t>(reader.current_line());
            if (score_line(line, *sorters[0])) ++scored;
        }
    } else {
        BatchQueue queue(static_cast<size_t>(workers) * 4);
        std::mutex error_mutex;
        std::exception_ptr first_error;

        auto record_error = [&](std::exception_ptr e) {
            std::lock_guard lock(error_mutex);
            if (!first_error) first_error = e;
            queue.abort();
        };

        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int i = 0; i < workers; ++i) {
            pool.emplace_back([&, i] {
                try {
                    std::vector<TaggedLine> batch;
                    while (queue.pop(batch)) {
                        for (const TaggedLine& line : batch) {
                            score_line(line, *sorters[static_cast<size_t>(i)]);
                        }
                    }
                } catch (...) {
                    record_error(std::current_exception());
                }
            });
        }

        try {
            SampleReader reader(corpus);
            std::vector<TaggedLine> batch;
            batch.reserve(options.batch_lines);
            std::string text;
            while (reader.next_line(text)) {
                batch.push_back(TaggedLine{static_cast<uint32_t>(reader.current_shard()),
                                           static_cast<uint32_t>(reader.current_line()),
                                           std::move(text)});
                if (batch.size() >= options.batch_lines) {
                    if (!queue.push(std::move(batch))) break; // a worker failed
                    batch = {};
                    batch.reserve(options.batch_lines);
                }
            }
            if (!batch.empty()) queue.push(std::move(batch));
        } catch (...) {
            record_error(std::current_exception());
        }
        queue.close();
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    // Deterministic finalize: k-way merge of the id-sorted worker runs plus
    // the previous cache, written atomically. Output is a pure function of
    // the scored set, so any worker count produces identical bytes.
    uint64_t n_records = 0;
    {
        std::vector<ScoreSorter::Merger> mergers;
        mergers.reserve(sorters.size());
        for (auto& sorter : sorters) mergers.push_back(sorter->finish());
        std::vector<std::optional<ScoreRecord>> heads(mergers.size());
        for (size_t i = 0; i < mergers.size(); ++i) heads[i] = mergers[i].next();
        RawCacheStream old_cache(scores_path, have_cache);

        atomic_write_stream(scores_path, [&](std::ostream& out) {
            std::string buf;
            buf.reserve(1 << 20);
            while (true) {
                size_t best = heads.size();
                for (size_t i = 0; i < heads.size(); ++i) {
                    if (heads[i] &&
                        (best == heads.size() || heads[i]->sample_id < heads[best]->sample_id)) {
                        best = i;
                    }
                }
                bool take_old = old_cache.alive() &&
                                (best == heads.size() || old_cache.id() < heads[best]->sample_id);
                if (!take_old && best == heads.size()) break;
                if (!take_old && old_cache.alive() && old_cache.id() == heads[best]->sample_id) {
                    throw DataError("duplicate sample_id '" + old_cache.id() +
                                    "' between cache and new scores");
                }
                if (take_old) {
                    buf += old_cache.line();
                    buf += '\n';
                    old_cache.advance();
                } else {
                    append_score_line(buf, *heads[best]);
                    heads[best] = mergers[best].next();
                }
                ++n_records;
                if (buf.size() >= (1 << 20)) {
                    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
                    buf.clear();
                }
            }
            out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        });
    }
    sorters.clear();
    std::filesystem::remove_all(spill_dir);

    ScoreCacheMeta meta;
    meta.corpus_name = corpus.name;
    meta.scorer_descriptor = scorer_descriptor;
    meta.n_scored = n_records;
    meta.n_expected = n_expected;
    meta.complete = n_records == n_expected;
    meta.save(meta_path);
    return meta;
}

ScoreCacheMeta load_complete_cache_meta(const std::filesystem::path& scores_path) {
    std::filesystem::path meta_path =
        scores_path.parent_path() / std::string(artifact::scores_meta);
    if (!std::filesystem::exists(meta_path)) {
        throw DataError("no score cache metadata at " + meta_path.string() +
                        "; run scoring first");
    }
    ScoreCacheMeta meta = ScoreCacheMeta::load(meta_path);
    if (!meta.complete) {
        throw DataError("score cache is incomplete (" + std::to_string(meta.n_scored) + " of " +
                        std::to_string(meta.n_expected) + " samples); finish scoring first");
    }
    return meta;
}

ScoreReader::ScoreReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open score file " + path.string());
}

std::optional<ScoreRecord> ScoreReader::next() {
    std::string line;
    if (!std::getline(in_, line)) {
        if (in_.bad()) throw DataError("failed reading " + path_.string());
        return std::nullopt;
    }
    ++line_no_;
    return parse_score_line(line, path_.string(), line_no_);
}

} // namespace pplxprune

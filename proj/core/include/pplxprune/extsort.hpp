#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "pplxprune/errors.hpp"

namespace pplxprune {

// Run-generating external merge sort. Records are buffered up to
// `max_buffer_records`, sorted, and spilled as binary run files under
// `tmp_dir`; finish() returns a k-way merge iterator over all runs. The codec
// provides `void write(std::ostream&, const Record&)` and
// `bool read(std::istream&, Record&)` (false on clean EOF).
//
// With a strict total order (ours break ties on unique ids) the merged
// sequence is identical to an in-memory sort of the same records.
template <typename Record, typename Codec, typename Less>
class ExternalSorter {
public:
    ExternalSorter(std::filesystem::path tmp_dir, size_t max_buffer_records,
                   Less less = Less(), Codec codec = Codec())
        : tmp_dir_(std::move(tmp_dir)), max_buffer_(max_buffer_records),
          less_(less), codec_(codec) {
        if (max_buffer_ == 0) max_buffer_ = 1;
        std::filesystem::create_directories(tmp_dir_);
    }

    ~ExternalSorter() { cleanup(); }

    ExternalSorter(const ExternalSorter&) = delete;
    ExternalSorter& operator=(const ExternalSorter&) = delete;

    void add(Record record) {
        buffer_.push_back(std::move(record));
        ++added_;
        if (buffer_.size() >= max_buffer_) spill();
    }

    uint64_t size() const { return added_; }

    // Borrows the sorter's run streams; the sorter must outlive the merger.
    class Merger {
    public:
        std::optional<Record> next() {
            if (heap_.empty()) return std::nullopt;
            Entry top = heap_.top();
            heap_.pop();
            Record out = std::move(top.record);
            Record following;
            if (owner_->codec_.read(*owner_->streams_[top.run], following)) {
                heap_.push(Entry{std::move(following), top.run, owner_});
            }
            return out;
        }

    private:
        friend class ExternalSorter;
        struct Entry {
            Record record;
            size_t run;
            ExternalSorter* owner;
            // priority_queue is a max-heap; invert to pop the least record.
            bool operator<(const Entry& other) const {
                if (owner->less_(record, other.record)) return false;
                if (owner->less_(other.record, record)) return true;
                return run > other.run;
            }
        };

        explicit Merger(ExternalSorter* owner) : owner_(owner) {
            for (size_t i = 0; i < owner_->streams_.size(); ++i) {
                Record record;
                if (owner_->codec_.read(*owner_->streams_[i], record)) {
                    heap_.push(Entry{std::move(record), i, owner_});
                }
            }
        }

        ExternalSorter* owner_;
        std::priority_queue<Entry> heap_;
    };

    Merger finish() {
        spill();
        streams_.clear();
        for (const auto& path : runs_) {
            auto in = std::make_unique<std::ifstream>(path, std::ios::binary);
            if (!*in) throw DataError("external sort: cannot reopen run file " + path.string());
            streams_.push_back(std::move(in));
        }
        return Merger(this);
    }

private:
    void spill() {
        if (buffer_.empty()) return;
        std::sort(buffer_.begin(), buffer_.end(), less_);
        std::filesystem::path path =
            tmp_dir_ / ("run-" + std::to_string(runs_.size()) + ".bin");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("external sort: cannot create run file " + path.string());
        for (const Record& r : buffer_) codec_.write(out, r);
        out.flush();
        if (!out) throw DataError("external sort: failed writing run file " + path.string());
        runs_.push_back(path);
        buffer_.clear();
    }

    void cleanup() {
        streams_.clear();
        std::error_code ec;
        for (const auto& path : runs_) std::filesystem::remove(path, ec);
    }

    std::filesystem::path tmp_dir_;
    size_t max_buffer_;
    Less less_;
    Codec codec_;
    std::vector<Record> buffer_;
    std::vector<std::filesystem::path> runs_;
    std::vector<std::unique_ptr<std::ifstream>> streams_;
    uint64_t added_ = 0;
};

} // namespace pplxprune

#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pplxprune/extsort.hpp"
#include "pplxprune/rng.hpp"
#include "test_util.hpp"

using namespace pplxprune;
using testutil::TempDir;

namespace {

// Minimal variable-length record: enough structure to catch codec framing
// bugs, small enough to generate by the hundred thousand.
struct KV {
    uint64_t key = 0;
    std::string payload;

    bool operator==(const KV& other) const {
        return key == other.key && payload == other.payload;
    }
};

struct KVCodec {
    void write(std::ostream& out, const KV& r) const {
        out.write(reinterpret_cast<const char*>(&r.key), sizeof r.key);
        uint32_t len = static_cast<uint32_t>(r.payload.size());
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(r.payload.data(), len);
    }
    bool read(std::istream& in, KV& r) const {
        if (!in.read(reinterpret_cast<char*>(&r.key), sizeof r.key)) return false;
        uint32_t len = 0;
        if (!in.read(reinterpret_cast<char*>(&len), sizeof len)) {
            throw DataError("truncated run");
        }
        r.payload.resize(len);
        if (len && !in.read(r.payload.data(), len)) throw DataError("truncated run");
        return true;
    }
};

// Key then payload: a strict total order as long as (key, payload) pairs are
// unique, which the generators below guarantee via the payload counter.
struct KVLess {
    bool operator()(const KV& a, const KV& b) const {
        if (a.key != b.key) return a.key < b.key;
        return a.payload < b.payload;
    }
};

using Sorter = ExternalSorter<KV, KVCodec, KVLess>;

std::vector<KV> random_records(size_t n, uint64_t seed, uint64_t key_space) {
    // A small key space forces duplicate keys across spill runs, so the merge
    // exercises its tie handling.
    std::vector<KV> records;
    records.reserve(n);
    SplitMix64 rng(seed);
    for (size_t i = 0; i < n; ++i) {
        KV r;
        r.key = rng.next_below(key_space);
        r.payload = "p" + std::to_string(i);
        r.payload.append(rng.next_below(20), 'x');
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<KV> drain(Sorter& sorter) {
    std::vector<KV> out;
    auto merger = sorter.finish();
    while (auto r = merger.next()) out.push_back(std::move(*r));
    return out;
}

} // namespace

TEST_CASE("merged output equals an in-memory sort across many spill runs") {
    TempDir tmp;
    for (size_t buffer : {1ul, 7ul, 100ul, 1000000ul}) {
        std::vector<KV> records = random_records(5000, 13, 50);
        std::vector<KV> expect = records;
        std::stable_sort(expect.begin(), expect.end(), KVLess{});

        Sorter sorter(tmp / ("runs-" + std::to_string(buffer)), buffer);
        for (KV& r : records) sorter.add(std::move(r));
        CHECK(sorter.size() == 5000);
        std::vector<KV> got = drain(sorter);
        CHECK(got == expect);
    }
}

TEST_CASE("size counts records whether or not anything spilled") {
    TempDir tmp;
    Sorter small(tmp / "small", 1000); // never spills
    for (int i = 0; i < 10; ++i) small.add(KV{static_cast<uint64_t>(i), "a"});
    CHECK(small.size() == 10);
    CHECK(drain(small).size() == 10);
    CHECK(small.size() == 10); // finish() does not reset the count

    Sorter big(tmp / "big", 3); // spills every 3 records
    for (int i = 0; i < 10; ++i) big.add(KV{static_cast<uint64_t>(i), "a"});
    CHECK(big.size() == 10);
    CHECK(drain(big).size() == 10);
}

TEST_CASE("an empty sorter merges to nothing") {
    TempDir tmp;
    Sorter sorter(tmp / "runs", 4);
    CHECK(sorter.size() == 0);
    auto merger = sorter.finish();
    CHECK_FALSE(merger.next().has_value());
}

TEST_CASE("run files are removed when the sorter goes out of scope") {
    TempDir tmp;
    {
        Sorter sorter(tmp / "runs", 2);
        std::vector<KV> records = random_records(20, 4, 5);
        for (KV& r : records) sorter.add(std::move(r));
        drain(sorter);
        CHECK_FALSE(std::filesystem::is_empty(tmp / "runs")); // runs exist while borrowed
    }
    CHECK(std::filesystem::is_empty(tmp / "runs"));
}

TEST_CASE("all-equal keys come back in payload order") {
    TempDir tmp;
    Sorter sorter(tmp / "runs", 3);
    for (int i = 9; i >= 0; --i) sorter.add(KV{7, "p" + std::to_string(i)});
    std::vector<KV> got = drain(sorter);
    REQUIRE(got.size() == 10);
    for (size_t i = 1; i < got.size(); ++i) {
        CHECK(got[i - 1].payload < got[i].payload);
    }
}

TEST_CASE("zero buffer capacity is coerced to one record") {
    TempDir tmp;
    Sorter sorter(tmp / "runs", 0);
    sorter.add(KV{2, "b"});
    sorter.add(KV{1, "a"});
    std::vector<KV> got = drain(sorter);
    REQUIRE(got.size() == 2);
    CHECK(got[0].key == 1);
}

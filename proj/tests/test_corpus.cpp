#include <doctest.h>

#include <fstream>
#include <set>
#include <string>

#include "pplxprune/corpus.hpp"
#include "pplxprune/errors.hpp"
#include "pplxprune/io.hpp"
#include "test_util.hpp"

using namespace pplxprune;
using testutil::TempDir;

namespace {

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

} // namespace

TEST_CASE("byte tokenizer round-trips text and reserves the eot id") {
    Tokenizer bytes = Tokenizer::byte_level();
    CHECK(bytes.vocab_size() == 257);
    auto tokens = bytes.tokenize("Hi!");
    CHECK(tokens == std::vector<uint32_t>{'H', 'i', '!'});
    CHECK(bytes.detokenize(tokens) == "Hi!");
    CHECK(bytes.detokenize({'H', Tokenizer::byte_eot_id, 'i'}) == "Hi");
}

TEST_CASE("tokenizer names resolve and passthrough requires a vocab") {
    CHECK(Tokenizer::from_name("bytes", {}).kind() == Tokenizer::Kind::byte_level);
    CHECK(Tokenizer::from_name("byte-level", {}).kind() == Tokenizer::Kind::byte_level);
    CHECK(Tokenizer::from_name("passthrough", 50000).vocab_size() == 50000);
    CHECK_THROWS_AS(Tokenizer::from_name("passthrough", {}), ConfigError);
    CHECK_THROWS_AS(Tokenizer::from_name("gpt2", {}), ConfigError);
}

TEST_CASE("ingest shards, counts and rejects") {
    TempDir tmp;
    auto raw = tmp / "raw.jsonl";
    write_text(raw,
               R"({"id":"a","domain":"web","text":"hello"})" "\n"
               R"(not json)" "\n"
               R"({"id":"b","domain":"web","text":"worlds"})" "\n"
               R"({"id":"","domain":"web","text":"x"})" "\n"
               R"({"id":"c","domain":"news","text":"!"})" "\n"
               R"({"id":"d","text":"missing domain"})" "\n");

    IngestOptions options;
    options.name = "mini";
    options.shard_max_samples = 2;
    IngestStats stats;
    CorpusManifest manifest = ingest(raw, Tokenizer::byte_level(), tmp / "corpus", options, &stats);

    CHECK(stats.lines == 6);
    CHECK(stats.accepted == 3);
    CHECK(stats.rejected == 3);
    CHECK(manifest.name == "mini");
    CHECK(manifest.vocab_size == 257);
    CHECK(manifest.total_samples == 3);
    CHECK(manifest.total_tokens == 12);
    CHECK(manifest.domains == std::vector<std::string>{"news", "web"});
    CHECK(manifest.shard_paths.size() == 2); // shard size 2 -> 2+1 samples

    // Rejects name the offending line.
    std::string rejects = read_file(tmp / "corpus" / artifact::rejects_log);
    CHECK(rejects.find("line 2") != std::string::npos);
    CHECK(rejects.find("line 4") != std::string::npos);
    CHECK(rejects.find("line 6") != std::string::npos);

    // The manifest on disk round-trips.
    CorpusManifest loaded = CorpusManifest::load(tmp / "corpus" / artifact::corpus_manifest);
    CHECK(loaded.name == manifest.name);
    CHECK(loaded.total_tokens == manifest.total_tokens);
    CHECK(loaded.shard_paths == manifest.shard_paths);
}

TEST_CASE("ingest rejects duplicate ids naming both locations") {
    TempDir tmp;
    auto raw = tmp / "raw.jsonl";
    write_text(raw,
               R"({"id":"dup","domain":"web","text":"one"})" "\n"
               R"({"id":"dup","domain":"web","text":"two"})" "\n");
    CHECK_THROWS_WITH_AS(ingest(raw, Tokenizer::byte_level(), tmp / "corpus", {}),
                         doctest::Contains("dup"), DataError);
}

TEST_CASE("ingest with zero accepted samples fails") {
    TempDir tmp;
    auto raw = tmp / "raw.jsonl";
    write_text(raw, "garbage\n");
    CHECK_THROWS_AS(ingest(raw, Tokenizer::byte_level(), tmp / "corpus", {}), DataError);
}

TEST_CASE("ingest accepts pre-tokenized records under passthrough") {
    TempDir tmp;
    auto raw = tmp / "raw.jsonl";
    write_text(raw,
               R"({"id":"a","domain":"d","tokens":[0,5,9]})" "\n"
               R"({"id":"b","domain":"d","tokens":[10]})" "\n"
               R"({"id":"c","domain":"d","tokens":[]})" "\n");
    IngestStats stats;
    CorpusManifest manifest =
        ingest(raw, Tokenizer::passthrough(10), tmp / "corpus", {}, &stats);
    // token id 10 is out of vocab, empty token list rejected.
    CHECK(stats.accepted == 1);
    CHECK(stats.rejected == 2);
    CHECK(manifest.total_tokens == 3);
}

TEST_CASE("SampleReader yields shard order and honors filters") {
    TempDir tmp;
    auto raw = tmp / "raw.jsonl";
    std::string content;
    for (int i = 0; i < 10; ++i) {
        content += R"({"id":"s)" + std::to_string(i) + R"(","domain":"d","text":"t)" +
                   std::to_string(i) + "\"}\n";
    }
    write_text(raw, content);
    IngestOptions options;
    options.shard_max_samples = 3;
    CorpusManifest manifest = ingest(raw, Tokenizer::byte_level(), tmp / "corpus", options);
    CHECK(manifest.shard_paths.size() == 4);

    SampleReader all(manifest);
    std::vector<std::string> ids;
    while (auto s = all.next()) ids.push_back(s->id);
    CHECK(ids.size() == 10);
    CHECK(ids.front() == "s0");
    CHECK(ids.back() == "s9");

    std::unordered_set<std::string> want{"s3", "s7"};
    SampleReader filtered(manifest, &want);
    std::vector<std::string> got;
    while (auto s = filtered.next()) got.push_back(s->id);
    CHECK(got == std::vector<std::string>{"s3", "s7"});

    std::unordered_set<std::string> none;
    SampleReader empty(manifest, &none);
    CHECK_FALSE(empty.next().has_value());

    // rewind restarts the stream.
    filtered.rewind();
    got.clear();
    while (auto s = filtered.next()) got.push_back(s->id);
    CHECK(got == std::vector<std::string>{"s3", "s7"});
}

TEST_CASE("sample line codec round-trips") {
    Sample sample;
    sample.id = "weird \"id\" \\ with escapes";
    sample.domain = "do\nmain";
    sample.tokens = {0, 1, 255, 4294967295u};

    std::string line;
    append_sample_line(line, sample);
    REQUIRE(line.back() == '\n');
    Sample back = parse_sample_line(std::string_view(line.data(), line.size() - 1), "test", 1);
    CHECK(back.id == sample.id);
    CHECK(back.domain == sample.domain);
    CHECK(back.tokens == sample.tokens);
}

TEST_CASE("parse_sample_line errors name the location") {
    CHECK_THROWS_WITH_AS(parse_sample_line("{}", "shard-00000.jsonl", 17),
                         doctest::Contains("shard-00000.jsonl"), DataError);
    CHECK_THROWS_WITH_AS(parse_sample_line("{}", "shard-00000.jsonl", 17),
                         doctest::Contains("17"), DataError);
}

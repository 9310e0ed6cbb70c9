// pplxprune-synth: deterministic synthetic corpora for pipeline exercises.
//
// Emits raw jsonl records {id, domain, text} with three domains of very
// different per-byte entropy, so a byte-level reference model separates them
// cleanly:
//
//   web          uniform printable ASCII           (~6.5 bits/byte)
//   prose        sparse first-order Markov letters (~2 bits/byte)
//   boilerplate  rotations of one fixed motif      (-> 0 bits/byte)
//
// Every byte derives from (seed, sample id), so any subset of samples is
// reproducible independently of generation order.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pplxprune/hashing.hpp"
#include "pplxprune/io.hpp"
#include "pplxprune/rng.hpp"

using namespace pplxprune;

namespace {

constexpr char kLetters[] = "abcdefghijklmnopqrstuvwxyz ";
constexpr size_t kNumLetters = sizeof(kLetters) - 1;
constexpr std::string_view kMotif =
    "all work and no play makes a dull corpus; ";

struct Generator {
    uint64_t seed = 0;
    uint64_t min_len = 80;
    uint64_t max_len = 120;
    // prose transition table: each letter gets four plausible successors.
    uint8_t successors[kNumLetters][4];

    explicit Generator(uint64_t s, uint64_t lo, uint64_t hi)
        : seed(s), min_len(lo), max_len(hi) {
        for (size_t p = 0; p < kNumLetters; ++p) {
            for (size_t c = 0; c < 4; ++c) {
                uint64_t h = hash64(seed, "succ:" + std::to_string(p) + ":" + std::to_string(c));
                successors[p][c] = static_cast<uint8_t>(h % kNumLetters);
            }
        }
    }

    uint64_t pick_length(SplitMix64& rng) const {
        return min_len + rng.next_below(max_len - min_len + 1);
    }

    std::string web(SplitMix64& rng) const {
        uint64_t len = pick_length(rng);
        std::string text(len, ' ');
        for (auto& c : text) c = static_cast<char>(0x20 + rng.next_below(95));
        return text;
    }

    std::string prose(SplitMix64& rng) const {
        uint64_t len = pick_length(rng);
        std::string text(len, ' ');
        size_t prev = rng.next_below(kNumLetters);
        for (auto& c : text) {
            prev = successors[prev][rng.next_below(4)];
            c = kLetters[prev];
        }
        return text;
    }

    std::string boilerplate(SplitMix64& rng) const {
        uint64_t len = pick_length(rng);
        uint64_t offset = rng.next_below(kMotif.size());
        std::string text(len, ' ');
        for (uint64_t i = 0; i < len; ++i) {
            text[i] = kMotif[(offset + i) % kMotif.size()];
        }
        return text;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic corpus generator"};

    std::string out_path;
    std::string profile = "mixed";
    uint64_t samples = 1000;
    uint64_t seed = 0;
    uint64_t min_len = 80;
    uint64_t max_len = 120;

    app.add_option("--out", out_path, "output jsonl path")->required();
    app.add_option("--samples", samples, "number of samples (default 1000)");
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--profile", profile, "mixed|web|prose|boilerplate")
        ->check(CLI::IsMember({"mixed", "web", "prose", "boilerplate"}));
    app.add_option("--min-len", min_len, "min text bytes per sample");
    app.add_option("--max-len", max_len, "max text bytes per sample");
    CLI11_PARSE(app, argc, argv);

    if (samples == 0 || min_len == 0 || min_len > max_len) {
        std::cerr << "error: need samples > 0 and 0 < min-len <= max-len\n";
        return 1;
    }

    Generator gen(seed, min_len, max_len);
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) {
        std::cerr << "error: cannot open " << out_path << " for writing\n";
        return 1;
    }
    std::string buffer;
    buffer.reserve(1 << 20);

    char id[32];
    for (uint64_t i = 0; i < samples; ++i) {
        std::snprintf(id, sizeof id, "s%07llu", static_cast<unsigned long long>(i));
        SplitMix64 rng(hash64(seed, id));

        std::string domain = profile;
        if (profile == "mixed") {
            // 40% web, 40% prose, 20% boilerplate.
            uint64_t roll = rng.next_below(5);
            domain = roll < 2 ? "web" : roll < 4 ? "prose" : "boilerplate";
        }
        std::string text = domain == "web"     ? gen.web(rng)
                           : domain == "prose" ? gen.prose(rng)
                                               : gen.boilerplate(rng);

        buffer += "{\"id\":\"";
        buffer += id;
        buffer += "\",\"domain\":\"";
        buffer += domain;
        buffer += "\",\"text\":\"";
        append_json_escaped(buffer, text);
        buffer += "\"}\n";
        if (buffer.size() > (1 << 20) - (1 << 10)) {
            out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
            buffer.clear();
        }
    }
    out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    out.flush();
    if (!out) {
        std::cerr << "error: writing " << out_path << " failed\n";
        return 1;
    }
    std::cout << samples << " samples -> " << out_path << "\n";
    return 0;
}

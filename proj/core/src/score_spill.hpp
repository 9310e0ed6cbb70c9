#pragma once

// Internal binary codec for ScoreRecord spill runs, shared by the scorer's
// per-worker runs (sorted by id) and the selector's external sort (sorted by
// (perplexity, id)). Native layout: run files never leave the process.

#include <cstdint>
#include <istream>
#include <ostream>

#include "pplxprune/errors.hpp"
#include "pplxprune/reflm.hpp"

namespace pplxprune {

struct ScoreSpillCodec {
    void write(std::ostream& out, const ScoreRecord& r) const {
        uint32_t len = static_cast<uint32_t>(r.sample_id.size());
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(r.sample_id.data(), len);
        out.write(reinterpret_cast<const char*>(&r.nll_bits), sizeof r.nll_bits);
        out.write(reinterpret_cast<const char*>(&r.perplexity), sizeof r.perplexity);
        out.write(reinterpret_cast<const char*>(&r.n_tokens), sizeof r.n_tokens);
    }
    bool read(std::istream& in, ScoreRecord& r) const {
        uint32_t len = 0;
        if (!in.read(reinterpret_cast<char*>(&len), sizeof len)) return false;
        r.sample_id.resize(len);
        if (!in.read(r.sample_id.data(), len) ||
            !in.read(reinterpret_cast<char*>(&r.nll_bits), sizeof r.nll_bits) ||
            !in.read(reinterpret_cast<char*>(&r.perplexity), sizeof r.perplexity) ||
            !in.read(reinterpret_cast<char*>(&r.n_tokens), sizeof r.n_tokens)) {
            throw DataError("truncated score spill run");
        }
        return true;
    }
};

struct ScoreIdLess {
    bool operator()(const ScoreRecord& a, const ScoreRecord& b) const {
        return a.sample_id < b.sample_id;
    }
};

// Ranking order of the selection: perplexity ascending, id as the
// deterministic tie-breaker. Both selector code paths must use exactly this
// comparison (on the perplexity field, never nll_bits) to stay bit-identical.
struct PplxIdLess {
    bool operator()(const ScoreRecord& a, const ScoreRecord& b) const {
        if (a.perplexity != b.perplexity) return a.perplexity < b.perplexity;
        return a.sample_id < b.sample_id;
    }
};

} // namespace pplxprune

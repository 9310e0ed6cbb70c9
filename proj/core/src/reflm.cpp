#include "pplxprune/reflm.hpp"

#include <rapidjson/document.h>
#include <rapidjson/error/en.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "pplxprune/errors.hpp"
#include "pplxprune/io.hpp"

namespace pplxprune {

namespace {

constexpr char kModelMagic[8] = {'P', 'P', 'X', 'N', 'G', 'M', '1', '\n'};
constexpr uint32_t kModelVersion = 1;
constexpr double kWeightSumTolerance = 1e-9;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

// Bounds-checked little-endian cursor over a loaded model file.
struct ByteReader {
    const char* p;
    const char* end;
    std::string where;

    void need(size_t n) const {
        if (static_cast<size_t>(end - p) < n) throw DataError(where + ": truncated model file");
    }
    uint32_t get_u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
        p += 4;
        return v;
    }
    uint64_t get_u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
        p += 8;
        return v;
    }
    double get_f64() { return std::bit_cast<double>(get_u64()); }
};

void append_sorted_counts(std::string& out, const std::unordered_map<uint64_t, uint64_t>& map) {
    std::vector<std::pair<uint64_t, uint64_t>> entries(map.begin(), map.end());
    std::sort(entries.begin(), entries.end());
    put_u64(out, entries.size());
    for (const auto& [key, cnt] : entries) {
        put_u64(out, key);
        put_u64(out, cnt);
    }
}

void read_counts(ByteReader& r, std::unordered_map<uint64_t, uint64_t>& map) {
    uint64_t n = r.get_u64();
    map.reserve(static_cast<size_t>(n) * 2);
    for (uint64_t i = 0; i < n; ++i) {
        uint64_t key = r.get_u64();
        uint64_t cnt = r.get_u64();
        map.emplace(key, cnt);
    }
}

} // namespace

NGramModel::NGramModel(NGramConfig config, uint64_t vocab_size)
    : config_(std::move(config)), vocab_size_(vocab_size) {
    if (config_.order < 1) throw ConfigError("n-gram order must be >= 1");
    if (vocab_size_ == 0) throw ConfigError("vocab_size must be positive");
    if (vocab_size_ > (1ull << 32) - 2) {
        throw ConfigError("vocab_size leaves no room for the reserved padding ids");
    }
    if (config_.add_k < 0.0) throw ConfigError("add_k must be non-negative");
    if (config_.add_k == 0.0) config_.add_k = 1e-9; // smoothing limit, keeps support positive

    if (config_.interpolation_weights.empty()) {
        config_.interpolation_weights.assign(config_.order, 1.0 / config_.order);
    }
    if (config_.interpolation_weights.size() != static_cast<size_t>(config_.order)) {
        throw ConfigError("expected one interpolation weight per order, got " +
                          std::to_string(config_.interpolation_weights.size()));
    }
    double sum = 0.0;
    for (double w : config_.interpolation_weights) {
        if (w < 0.0) throw ConfigError("interpolation weights must be non-negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > kWeightSumTolerance) {
        throw ConfigError("interpolation weights must sum to 1");
    }
    for (double& w : config_.interpolation_weights) w /= sum;

    // Context keys are base-B digit strings (digit = symbol + 1, so leading
    // zeros cannot occur and different-length contexts never collide); a full
    // n-gram key must fit in 64 bits.
    key_base_ = vocab_size_ + 3; // symbols, BOS, EOS, plus the reserved 0 digit
    unsigned __int128 span = 1;
    for (int i = 0; i < config_.order; ++i) {
        span *= key_base_;
        if (span > (static_cast<unsigned __int128>(1) << 64)) {
            throw ConfigError("order " + std::to_string(config_.order) + " with vocab_size " +
                              std::to_string(vocab_size_) +
                              " overflows the 64-bit n-gram key space; reduce the order");
        }
    }
    log2_vocab_ = std::log2(static_cast<double>(vocab_size_));
}

void NGramModel::add_sample(std::span<const uint32_t> tokens) {
    const uint64_t bos_digit = static_cast<uint64_t>(bos_id()) + 1;
    const int max_ctx = config_.order - 1;
    for (size_t j = 0; j < tokens.size(); ++j) {
        uint32_t token = tokens[j];
        if (token >= vocab_size_) {
            throw DataError("token id " + std::to_string(token) + " out of range for vocab_size " +
                            std::to_string(vocab_size_));
        }
        uint64_t ctx_key = 0;
        uint64_t place = 1;
        // Order o uses the last o-1 tokens; each loop step extends the
        // context one token further back (BOS once past the sample start).
        uint64_t full_key = static_cast<uint64_t>(token) + 1;
        ngram_counts_[full_key + key_base_ * ctx_key] += 1;
        context_totals_[ctx_key] += 1;
        for (int m = 1; m <= max_ctx; ++m) {
            uint64_t digit =
                j >= static_cast<size_t>(m) ? static_cast<uint64_t>(tokens[j - m]) + 1 : bos_digit;
            ctx_key += digit * place;
            place *= key_base_;
            ngram_counts_[full_key + key_base_ * ctx_key] += 1;
            context_totals_[ctx_key] += 1;
        }
    }
    total_tokens_ += tokens.size();
}

void NGramModel::merge(const NGramModel& other) {
    if (other.config_.order != config_.order || other.vocab_size_ != vocab_size_ ||
        other.config_.add_k != config_.add_k ||
        other.config_.interpolation_weights != config_.interpolation_weights) {
        throw ConfigError("cannot merge models trained with different hyperparameters");
    }
    for (const auto& [key, cnt] : other.ngram_counts_) ngram_counts_[key] += cnt;
    for (const auto& [key, cnt] : other.context_totals_) context_totals_[key] += cnt;
    total_tokens_ += other.total_tokens_;
}

double NGramModel::order_prob(uint64_t context_key, uint32_t token) const {
    auto total_it = context_totals_.find(context_key);
    if (total_it == context_totals_.end() || total_it->second == 0) {
        // Unobserved context: the add-k estimate degenerates to uniform.
        return 1.0 / static_cast<double>(vocab_size_);
    }
    uint64_t full_key = static_cast<uint64_t>(token) + 1 + key_base_ * context_key;
    auto cnt_it = ngram_counts_.find(full_key);
    double count = cnt_it == ngram_counts_.end() ? 0.0 : static_cast<double>(cnt_it->second);
    double k = config_.add_k;
    return (count + k) /
           (static_cast<double>(total_it->second) + k * static_cast<double>(vocab_size_));
}

double NGramModel::token_logprob(std::span<const uint32_t> context, uint32_t token) const {
    if (token >= vocab_size_) {
        throw DataError("token id " + std::to_string(token) + " out of range for vocab_size " +
                        std::to_string(vocab_size_));
    }
    if (total_tokens_ == 0) return -log2_vocab_; // untrained: exactly uniform

    const uint64_t bos_digit = static_cast<uint64_t>(bos_id()) + 1;
    const int max_ctx = config_.order - 1;
    uint64_t ctx_key = 0;
    uint64_t place = 1;
    double p = config_.interpolation_weights[0] * order_prob(0, token);
    for (int m = 1; m <= max_ctx; ++m) {
        uint64_t digit = bos_digit;
        if (context.size() >= static_cast<size_t>(m)) {
            uint32_t sym = context[context.size() - static_cast<size_t>(m)];
            if (sym >= vocab_size_ && sym != bos_id()) {
                throw DataError("context token id " + std::to_string(sym) +
                                " out of range for vocab_size " + std::to_string(vocab_size_));
            }
            digit = static_cast<uint64_t>(sym) + 1;
        }
        ctx_key += digit * place;
        place *= key_base_;
        p += config_.interpolation_weights[static_cast<size_t>(m)] * order_prob(ctx_key, token);
    }
    if (p > 1.0) p = 1.0; // interpolation rounding guard; keeps nll_bits >= 0
    return std::log2(p);
}

double NGramModel::sequence_nll_bits(std::span<const uint32_t> tokens) const {
    if (tokens.empty()) throw DataError("cannot score an empty sample");
    if (total_tokens_ == 0) return log2_vocab_; // mean of identical uniform terms

    double sum = 0.0;
    for (size_t j = 0; j < tokens.size(); ++j) {
        size_t ctx_len = std::min(j, static_cast<size_t>(config_.order - 1));
        sum -= token_logprob(tokens.subspan(j - ctx_len, ctx_len), tokens[j]);
    }
    return sum / static_cast<double>(tokens.size());
}

void NGramModel::save(const std::filesystem::path& path) const {
    std::string out;
    out.reserve(64 + (ngram_counts_.size() + context_totals_.size()) * 16);
    out.append(kModelMagic, sizeof kModelMagic);
    put_u32(out, kModelVersion);
    put_u32(out, static_cast<uint32_t>(config_.order));
    put_u64(out, vocab_size_);
    put_f64(out, config_.add_k);
    put_u32(out, static_cast<uint32_t>(config_.interpolation_weights.size()));
    for (double w : config_.interpolation_weights) put_f64(out, w);
    put_u64(out, total_tokens_);
    append_sorted_counts(out, ngram_counts_);
    append_sorted_counts(out, context_totals_);
    atomic_write_file(path, out);
}

NGramModel NGramModel::load(const std::filesystem::path& path) {
    std::string content = read_file(path);
    ByteReader r{content.data(), content.data() + content.size(), path.string()};

    r.need(sizeof kModelMagic);
    if (std::memcmp(r.p, kModelMagic, sizeof kModelMagic) != 0) {
        throw DataError(path.string() + ": not a model file (bad magic)");
    }
    r.p += sizeof kModelMagic;
    uint32_t version = r.get_u32();
    if (version != kModelVersion) {
        throw DataError(path.string() + ": unsupported model version " + std::to_string(version));
    }

    NGramConfig config;
    config.order = static_cast<int>(r.get_u32());
    uint64_t vocab_size = r.get_u64();
    config.add_k = r.get_f64();
    uint32_t n_weights = r.get_u32();
    std::vector<double> weights(n_weights);
    for (uint32_t i = 0; i < n_weights; ++i) weights[i] = r.get_f64();
    if (n_weights != static_cast<uint32_t>(std::max(config.order, 0))) {
        throw DataError(path.string() + ": weight count does not match the model order");
    }

    NGramModel model(config, vocab_size);
    // Stored weights were normalized at training time; adopt them verbatim so
    // a save/load round trip reproduces token_logprob bit-for-bit.
    model.config_.interpolation_weights = std::move(weights);
    model.total_tokens_ = r.get_u64();
    read_counts(r, model.ngram_counts_);
    read_counts(r, model.context_totals_);
    if (r.p != r.end) throw DataError(path.string() + ": trailing bytes after model data");
    return model;
}

NGramModel train_reference_model(SampleReader& ref_samples, const NGramConfig& config,
                                 uint64_t vocab_size) {
    NGramModel model(config, vocab_size);
    uint64_t samples = 0;
    while (auto s = ref_samples.next()) {
        model.add_sample(s->tokens);
        ++samples;
    }
    if (samples == 0) throw DataError("reference split is empty; nothing to train on");
    return model;
}

ScoreRecord score_sample(const NGramModel& model, const Sample& sample) {
    ScoreRecord r;
    r.sample_id = sample.id;
    r.nll_bits = model.sequence_nll_bits(sample.tokens);
    r.perplexity = std::exp2(r.nll_bits);
    r.n_tokens = sample.n_tokens();
    return r;
}

void append_score_line(std::string& out, const ScoreRecord& record) {
    out += "{\"sample_id\":\"";
    append_json_escaped(out, record.sample_id);
    out += "\",\"nll_bits\":";
    append_double(out, record.nll_bits);
    out += ",\"perplexity\":";
    append_double(out, record.perplexity);
    out += ",\"n_tokens\":";
    append_uint(out, record.n_tokens);
    out += "}\n";
}

ScoreRecord parse_score_line(std::string_view line, std::string_view where, uint64_t line_no) {
    auto fail = [&](const std::string& what) -> DataError {
        return DataError(std::string(where) + ":" + std::to_string(line_no) + ": " + what);
    };

    rapidjson::Document doc;
    // Full precision so parsed doubles round-trip the written shortest form
    // exactly; selection compares these values bit-for-bit.
    doc.Parse<rapidjson::kParseFullPrecisionFlag>(line.data(), line.size());
    if (doc.HasParseError()) {
        throw fail(std::string("invalid JSON: ") +
                   rapidjson::GetParseError_En(doc.GetParseError()));
    }
    if (!doc.IsObject()) throw fail("record is not a JSON object");

    ScoreRecord r;
    auto id_it = doc.FindMember("sample_id");
    if (id_it == doc.MemberEnd() || !id_it->value.IsString()) {
        throw fail("missing or non-string 'sample_id'");
    }
    r.sample_id.assign(id_it->value.GetString(), id_it->value.GetStringLength());
    if (r.sample_id.empty()) throw fail("empty 'sample_id'");

    auto n_it = doc.FindMember("n_tokens");
    if (n_it == doc.MemberEnd() || !n_it->value.IsUint64()) {
        throw fail("missing or invalid 'n_tokens'");
    }
    r.n_tokens = n_it->value.GetUint64();
    if (r.n_tokens == 0) throw fail("'n_tokens' must be >= 1");

    auto nll_it = doc.FindMember("nll_bits");
    auto ppl_it = doc.FindMember("perplexity");
    bool has_nll = nll_it != doc.MemberEnd();
    bool has_ppl = ppl_it != doc.MemberEnd();
    if (has_nll && !nll_it->value.IsNumber()) throw fail("'nll_bits' is not a number");
    if (has_ppl && !ppl_it->value.IsNumber()) throw fail("'perplexity' is not a number");
    if (!has_nll && !has_ppl) throw fail("record has neither 'nll_bits' nor 'perplexity'");

    if (has_nll) {
        r.nll_bits = nll_it->value.GetDouble();
        if (r.nll_bits < 0.0) throw fail("'nll_bits' must be >= 0");
    }
    if (has_ppl) {
        r.perplexity = ppl_it->value.GetDouble();
        if (r.perplexity < 1.0) throw fail("'perplexity' must be >= 1");
    }
    if (has_nll && !has_ppl) r.perplexity = std::exp2(r.nll_bits);
    if (has_ppl && !has_nll) r.nll_bits = std::log2(r.perplexity);
    if (has_nll && has_ppl) {
        double expected = std::exp2(r.nll_bits);
        if (std::abs(r.perplexity - expected) > 1e-9 * expected) {
            throw fail("'perplexity' does not equal 2^nll_bits");
        }
    }
    return r;
}

std::vector<ScoreRecord> load_external_scores(
    const std::filesystem::path& path, const std::unordered_set<std::string>* valid_ids) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open score file " + path.string());

    std::vector<ScoreRecord> records;
    std::unordered_map<std::string, uint64_t> seen; // id -> line number
    std::string line;
    uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        ScoreRecord r = parse_score_line(line, path.string(), line_no);
        auto [it, inserted] = seen.emplace(r.sample_id, line_no);
        if (!inserted) {
            throw DataError(path.string() + ": duplicate sample_id '" + r.sample_id +
                            "' at lines " + std::to_string(it->second) + " and " +
                            std::to_string(line_no));
        }
        if (valid_ids && !valid_ids->count(r.sample_id)) {
            throw DataError(path.string() + ":" + std::to_string(line_no) +
                            ": unknown sample_id '" + r.sample_id + "'");
        }
        records.push_back(std::move(r));
    }
    if (in.bad()) throw DataError("failed reading " + path.string());
    return records;
}

} // namespace pplxprune

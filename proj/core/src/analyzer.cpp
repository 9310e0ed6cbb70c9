#include "pplxprune/analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "pplxprune/errors.hpp"
#include "pplxprune/hashing.hpp"
#include "pplxprune/io.hpp"
#include "pplxprune/scorer.hpp"

namespace pplxprune {

namespace {

void append_csv_field(std::string& out, const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) {
        out += field;
        return;
    }
    out += '"';
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
}

double share(uint64_t count, uint64_t total) {
    return total == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(total);
}

// R-7 linear-interpolation quantile over sorted values.
double quantile(const std::vector<double>& sorted, double p) {
    double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    size_t lo = static_cast<size_t>(h);
    if (lo + 1 >= sorted.size()) return sorted.back();
    double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

void append_double_array(std::string& out, const std::vector<double>& values) {
    out += '[';
    for (size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        append_double(out, values[i]);
    }
    out += ']';
}

} // namespace

DomainReport domain_composition(const CorpusManifest& corpus, const PruneManifest* prune) {
    std::map<std::string, size_t> index;
    DomainReport report;
    report.rows.reserve(corpus.domains.size());
    {
        std::vector<std::string> sorted_domains = corpus.domains;
        std::sort(sorted_domains.begin(), sorted_domains.end());
        for (const std::string& d : sorted_domains) {
            if (index.count(d)) throw DataError("duplicate domain '" + d + "' in manifest");
            index.emplace(d, report.rows.size());
            report.rows.push_back(DomainRow{d});
        }
    }

    std::unordered_set<std::string> selected;
    if (prune) selected.insert(prune->selected_ids.begin(), prune->selected_ids.end());
    uint64_t matched = 0;
    uint64_t pre_samples = 0, pre_tokens = 0, post_samples = 0, post_tokens = 0;

    SampleReader reader(corpus);
    while (auto s = reader.next()) {
        auto it = index.find(s->domain);
        if (it == index.end()) {
            throw DataError("sample '" + s->id + "' has domain '" + s->domain +
                            "' which the manifest does not list");
        }
        DomainRow& row = report.rows[it->second];
        row.pre_samples += 1;
        row.pre_tokens += s->n_tokens();
        pre_samples += 1;
        pre_tokens += s->n_tokens();
        if (!prune || selected.count(s->id)) {
            if (prune) ++matched;
            row.post_samples += 1;
            row.post_tokens += s->n_tokens();
            post_samples += 1;
            post_tokens += s->n_tokens();
        }
    }
    if (prune && matched != selected.size()) {
        throw DataError("prune manifest selects " + std::to_string(selected.size()) +
                        " ids but only " + std::to_string(matched) + " exist in corpus '" +
                        corpus.name + "'");
    }

    for (DomainRow& row : report.rows) {
        row.pre_sample_share = share(row.pre_samples, pre_samples);
        row.pre_token_share = share(row.pre_tokens, pre_tokens);
        row.post_sample_share = share(row.post_samples, post_samples);
        row.post_token_share = share(row.post_tokens, post_tokens);
    }
    return report;
}

void DomainReport::save_csv(const std::filesystem::path& path) const {
    std::string out;
    out += "domain,pre_samples,pre_tokens,pre_sample_share,pre_token_share,"
           "post_samples,post_tokens,post_sample_share,post_token_share\n";
    for (const DomainRow& row : rows) {
        append_csv_field(out, row.domain);
        out += ',';
        append_uint(out, row.pre_samples);
        out += ',';
        append_uint(out, row.pre_tokens);
        out += ',';
        append_double(out, row.pre_sample_share);
        out += ',';
        append_double(out, row.pre_token_share);
        out += ',';
        append_uint(out, row.post_samples);
        out += ',';
        append_uint(out, row.post_tokens);
        out += ',';
        append_double(out, row.post_sample_share);
        out += ',';
        append_double(out, row.post_token_share);
        out += '\n';
    }
    atomic_write_file(path, out);
}

Histogram freedman_diaconis_histogram(std::vector<double> values,
                                      double bin_width_override) {
    if (values.empty()) throw DataError("cannot build a histogram from zero values");
    if (bin_width_override < 0.0) throw ConfigError("histogram bin width must be positive");
    std::sort(values.begin(), values.end());
    double lo = values.front();
    double hi = values.back();
    size_t m = values.size();

    Histogram hist;
    if (lo == hi) {
        // Zero variance: one unit-width bin centered on the value.
        hist.edges = {lo - 0.5, lo + 0.5};
        hist.densities = {1.0};
        hist.degenerate = true;
        return hist;
    }

    double width = bin_width_override;
    if (width == 0.0) {
        double iqr = quantile(values, 0.75) - quantile(values, 0.25);
        width = 2.0 * iqr * std::pow(static_cast<double>(m), -1.0 / 3.0);
        if (width <= 0.0) {
            // Duplicate-heavy data can zero the IQR; fall back to a log2 bin count.
            width = (hi - lo) / (1.0 + std::ceil(std::log2(static_cast<double>(m))));
        }
    }
    size_t bins = static_cast<size_t>(std::ceil((hi - lo) / width));
    bins = std::clamp<size_t>(bins, 1, 4096);

    hist.edges.resize(bins + 1);
    for (size_t i = 0; i <= bins; ++i) {
        hist.edges[i] = lo + (hi - lo) * (static_cast<double>(i) / static_cast<double>(bins));
    }
    std::vector<uint64_t> counts(bins, 0);
    double scale = static_cast<double>(bins) / (hi - lo);
    for (double v : values) {
        size_t idx = static_cast<size_t>((v - lo) * scale);
        counts[std::min(idx, bins - 1)] += 1;
    }
    hist.densities.resize(bins);
    for (size_t i = 0; i < bins; ++i) {
        double bin_width = hist.edges[i + 1] - hist.edges[i];
        hist.densities[i] = static_cast<double>(counts[i]) / (static_cast<double>(m) * bin_width);
    }
    return hist;
}

KdeResult gaussian_kde(const std::vector<double>& values, double bandwidth_override) {
    size_t m = values.size();
    if (m < 2) throw DataError("kernel density estimation needs at least 2 values");
    if (bandwidth_override < 0.0) throw ConfigError("kde bandwidth must be positive");

    KdeResult kde;
    if (bandwidth_override > 0.0) {
        kde.bandwidth = bandwidth_override;
    } else {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(m - 1);
        double sd = std::sqrt(var);
        if (sd <= 0.0) throw DataError("kernel density estimation needs non-constant values");
        kde.bandwidth = 1.06 * sd * std::pow(static_cast<double>(m), -0.2);
    }
    double h = kde.bandwidth;

    auto [min_it, max_it] = std::minmax_element(values.begin(), values.end());
    // Pad by 5 bandwidths so the grid captures essentially all kernel mass,
    // and keep the grid step at h/3 so the trapezoid integral stays tight.
    double lo = *min_it - 5.0 * h;
    double hi = *max_it + 5.0 * h;
    double span = hi - lo;
    size_t points = static_cast<size_t>(std::ceil(span / (h / 3.0))) + 1;
    points = std::clamp<size_t>(points, 512, 65536);
    double step = span / static_cast<double>(points - 1);

    kde.grid.resize(points);
    for (size_t i = 0; i < points; ++i) kde.grid[i] = lo + step * static_cast<double>(i);
    kde.density.assign(points, 0.0);

    // Accumulate per value over its kernel's support; beyond 8.5 bandwidths
    // the kernel is below 2^-52 and contributes nothing representable.
    double support = 8.5 * h;
    for (double v : values) {
        double first = (v - support - lo) / step;
        double last = (v + support - lo) / step;
        size_t i0 = first <= 0.0 ? 0 : static_cast<size_t>(std::ceil(first));
        size_t i1 = last < 0.0 ? 0 : std::min(points - 1, static_cast<size_t>(last));
        for (size_t i = i0; i <= i1 && i < points; ++i) {
            double z = (kde.grid[i] - v) / h;
            kde.density[i] += std::exp(-0.5 * z * z);
        }
    }
    double norm = 1.0 / (static_cast<double>(m) * h * std::sqrt(2.0 * 3.14159265358979323846));
    for (double& d : kde.density) d *= norm;
    return kde;
}

DistributionReport pplx_distribution(const std::filesystem::path& scores_path,
                                     double subsample_rate, uint64_t seed,
                                     const PruneManifest* prune,
                                     const DistributionOptions& options) {
    if (!(subsample_rate > 0.0 && subsample_rate <= 1.0)) {
        throw ConfigError("subsample rate must lie in (0, 1]");
    }
    load_complete_cache_meta(scores_path);

    std::unordered_set<std::string> selected;
    if (prune) selected.insert(prune->selected_ids.begin(), prune->selected_ids.end());

    std::vector<double> values;
    ScoreReader reader(scores_path);
    while (auto r = reader.next()) {
        if (prune && !selected.count(r->sample_id)) continue;
        if (!hash_below(seed, r->sample_id, subsample_rate)) continue;
        values.push_back(r->nll_bits);
    }
    if (values.empty()) {
        throw DataError("perplexity subsample is empty; raise the subsample rate");
    }

    DistributionReport report;
    report.subsample_rate = subsample_rate;
    report.subsample_seed = seed;
    report.subsample_size = values.size();

    Histogram hist = freedman_diaconis_histogram(values, options.bin_width_override);
    report.histogram_edges = std::move(hist.edges);
    report.histogram_densities = std::move(hist.densities);
    report.degenerate = hist.degenerate;
    report.kde_suppressed = hist.degenerate || values.size() < 30;
    if (!report.kde_suppressed) {
        KdeResult kde = gaussian_kde(values, options.bandwidth_override);
        report.bandwidth = kde.bandwidth;
        report.kde_grid = std::move(kde.grid);
        report.kde_density = std::move(kde.density);
    }
    return report;
}

void DistributionReport::save(const std::filesystem::path& path) const {
    std::string out;
    out.reserve(64 + (histogram_edges.size() + kde_grid.size() * 2) * 12);
    out += "{\"subsample_rate\":";
    append_double(out, subsample_rate);
    out += ",\"subsample_seed\":";
    append_uint(out, subsample_seed);
    out += ",\"subsample_size\":";
    append_uint(out, subsample_size);
    out += ",\"degenerate\":";
    out += degenerate ? "true" : "false";
    out += ",\"kde_suppressed\":";
    out += kde_suppressed ? "true" : "false";
    out += ",\"bandwidth\":";
    append_double(out, bandwidth);
    out += ",\"histogram\":{\"edges\":";
    append_double_array(out, histogram_edges);
    out += ",\"densities\":";
    append_double_array(out, histogram_densities);
    out += "},\"kde\":{\"grid\":";
    append_double_array(out, kde_grid);
    out += ",\"density\":";
    append_double_array(out, kde_density);
    out += "}}\n";
    atomic_write_file(path, out);
}

} // namespace pplxprune

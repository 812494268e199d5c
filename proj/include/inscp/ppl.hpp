#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "inscp/document.hpp"
#include "inscp/jsonio.hpp"
#include "inscp/model.hpp"

namespace inscp {

struct PerplexityReport {
    std::string doc_id;
    double nll_sum = 0.0;  // nats
    size_t token_count = 0;
    double ppl = 1.0;

    json to_json() const;
    static PerplexityReport from_json(const json& j);
};

enum class FilterMode { kKeepLow, kKeepHigh };

std::string filter_mode_name(FilterMode mode);
FilterMode parse_filter_mode(const std::string& name);

struct FilterPolicy {
    double max_ppl = 15.0;
    std::optional<double> min_ppl;
    FilterMode mode = FilterMode::kKeepLow;

    void validate() const;
    bool keeps(double ppl) const;
};

struct FilterSummary {
    size_t total = 0;
    size_t kept = 0;
    size_t dropped = 0;
    std::vector<double> bin_edges;
    std::vector<long> histogram;
    long underflow = 0;
    long overflow = 0;

    json to_json() const;
};

/// Teacher-forced perplexity of one document: exp of the mean per-token NLL,
/// long documents pooled over non-overlapping context windows.
PerplexityReport score_ppl(const Document& doc, const LMParams& model, const Vocab& vocab);

/// Counts per half-open bin [e_i, e_{i+1}); out-of-range values are excluded
/// (the filter summary tracks them as under/overflow).
std::vector<long> ppl_histogram(const std::vector<PerplexityReport>& reports,
                                const std::vector<double>& bin_edges);

/// Threshold filter preserving document order; every doc must have a report.
std::pair<std::vector<Document>, FilterSummary> filter_corpus(
    const std::vector<Document>& docs, const std::vector<PerplexityReport>& reports,
    const FilterPolicy& policy);

extern const std::vector<double> kDefaultPplBinEdges;

}  // namespace inscp

#include "inscp/ppl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "inscp/error.hpp"

namespace inscp {

const std::vector<double> kDefaultPplBinEdges = {1, 2, 5, 10, 15, 20, 30, 50, 100, 1000};

json PerplexityReport::to_json() const {
    return json{{"doc_id", doc_id}, {"nll_sum", nll_sum}, {"token_count", token_count}, {"ppl", ppl}};
}

PerplexityReport PerplexityReport::from_json(const json& j) {
    PerplexityReport r;
    try {
        r.doc_id = j.at("doc_id").get<std::string>();
        r.nll_sum = j.at("nll_sum").get<double>();
        r.token_count = j.at("token_count").get<size_t>();
        r.ppl = j.at("ppl").get<double>();
    } catch (const json::exception& e) {
        throw DataError(std::string("perplexity report: ") + e.what());
    }
    return r;
}

std::string filter_mode_name(FilterMode mode) {
    return mode == FilterMode::kKeepLow ? "keep_low" : "keep_high";
}

FilterMode parse_filter_mode(const std::string& name) {
    if (name == "keep_low") return FilterMode::kKeepLow;
    if (name == "keep_high") return FilterMode::kKeepHigh;
    throw ArgError("unknown filter mode '" + name + "' (expected keep_low or keep_high)");
}

void FilterPolicy::validate() const {
    if (mode == FilterMode::kKeepLow) {
        if (!(max_ppl > 1.0)) throw ConfigError("filter: max_ppl must be > 1");
        if (min_ppl && !(*min_ppl < max_ppl))
            throw ConfigError("filter: min_ppl must be below max_ppl in keep_low mode");
    } else {
        if (!min_ppl) throw ConfigError("filter: keep_high mode requires min_ppl");
        if (!(*min_ppl > 1.0)) throw ConfigError("filter: min_ppl must be > 1");
    }
}

bool FilterPolicy::keeps(double ppl) const {
    if (mode == FilterMode::kKeepLow) return ppl <= max_ppl;
    return ppl >= *min_ppl;
}

PerplexityReport score_ppl(const Document& doc, const LMParams& model, const Vocab& vocab) {
    const std::vector<TokenId> tokens = encode(doc.text, vocab);
    if (tokens.empty()) throw DataError("score_ppl: document '" + doc.id + "' has no tokens");
    const std::vector<double> nll = per_token_nll(model, tokens);
    const double sum = std::accumulate(nll.begin(), nll.end(), 0.0);
    PerplexityReport r;
    r.doc_id = doc.id;
    r.nll_sum = sum;
    r.token_count = tokens.size();
    r.ppl = std::exp(sum / static_cast<double>(tokens.size()));
    return r;
}

std::vector<long> ppl_histogram(const std::vector<PerplexityReport>& reports,
                                const std::vector<double>& bin_edges) {
    if (bin_edges.size() < 2) throw ArgError("histogram: need at least two bin edges");
    for (size_t i = 1; i < bin_edges.size(); ++i)
        if (!(bin_edges[i - 1] < bin_edges[i]))
            throw ArgError("histogram: bin edges must be strictly increasing");

    std::vector<long> counts(bin_edges.size() - 1, 0);
    for (const PerplexityReport& r : reports) {
        if (r.ppl < bin_edges.front() || r.ppl >= bin_edges.back()) continue;
        const auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), r.ppl);
        counts[static_cast<size_t>(it - bin_edges.begin()) - 1] += 1;
    }
    return counts;
}

std::pair<std::vector<Document>, FilterSummary> filter_corpus(
    const std::vector<Document>& docs, const std::vector<PerplexityReport>& reports,
    const FilterPolicy& policy) {
    policy.validate();
    std::unordered_map<std::string, const PerplexityReport*> by_id;
    for (const PerplexityReport& r : reports) by_id[r.doc_id] = &r;

    std::vector<Document> kept;
    FilterSummary summary;
    summary.total = docs.size();
    summary.bin_edges = kDefaultPplBinEdges;

    std::vector<PerplexityReport> used;
    used.reserve(docs.size());
    for (const Document& doc : docs) {
        const auto it = by_id.find(doc.id);
        if (it == by_id.end())
            throw DataError("filter: no perplexity report for document '" + doc.id + "'");
        used.push_back(*it->second);
        if (policy.keeps(it->second->ppl)) kept.push_back(doc);
    }
    summary.kept = kept.size();
    summary.dropped = summary.total - summary.kept;
    summary.histogram = ppl_histogram(used, summary.bin_edges);
    for (const PerplexityReport& r : used) {
        if (r.ppl < summary.bin_edges.front()) ++summary.underflow;
        else if (r.ppl >= summary.bin_edges.back()) ++summary.overflow;
    }
    return {std::move(kept), std::move(summary)};
}

json FilterSummary::to_json() const {
    return json{{"total", total},         {"kept", kept},
                {"dropped", dropped},     {"bin_edges", bin_edges},
                {"histogram", histogram}, {"underflow", underflow},
                {"overflow", overflow}};
}

}  // namespace inscp

#include "inscp/langid.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <string_view>
#include <unordered_map>

#include "inscp/error.hpp"
#include "inscp/rng.hpp"

namespace inscp {

namespace {

bool is_blank(const std::string& text) {
    return std::all_of(text.begin(), text.end(),
                       [](unsigned char c) { return std::isspace(c) != 0; });
}

/// Hashed n-gram counts, L2-normalized; sparse bucket → count.
std::unordered_map<int, double> features(const std::string& text, int nmin, int nmax,
                                         int buckets) {
    std::unordered_map<int, double> f;
    for (int n = nmin; n <= nmax; ++n) {
        if (text.size() < static_cast<size_t>(n)) break;
        for (size_t i = 0; i + static_cast<size_t>(n) <= text.size(); ++i) {
            const uint64_t h = fnv1a64(std::string_view(text).substr(i, static_cast<size_t>(n)));
            f[static_cast<int>(h % static_cast<uint64_t>(buckets))] += 1.0;
        }
    }
    double sq = 0.0;
    for (const auto& [k, v] : f) sq += v * v;
    if (sq > 0.0) {
        const double inv = 1.0 / std::sqrt(sq);
        for (auto& [k, v] : f) v *= inv;
    }
    return f;
}

std::vector<double> scores_of(const LangIdModel& m, const std::unordered_map<int, double>& f) {
    std::vector<double> s(m.bias);
    const size_t L = m.labels.size();
    for (const auto& [bucket, value] : f) {
        const double* row = &m.weights[static_cast<size_t>(bucket) * L];
        for (size_t j = 0; j < L; ++j) s[j] += row[j] * value;
    }
    return s;
}

}  // namespace

LangIdModel train_langid(const LabeledCorpus& corpora, int ngram_min, int ngram_max, int buckets,
                         int iterations, double lr) {
    if (ngram_min < 1 || ngram_min > ngram_max)
        throw ArgError("langid: invalid n-gram range [" + std::to_string(ngram_min) + ", " +
                       std::to_string(ngram_max) + "]");
    if (corpora.size() < 2) throw ArgError("langid: need at least two labels");
    if (buckets < 1) throw ArgError("langid: buckets must be >= 1");

    LangIdModel m;
    m.ngram_min = ngram_min;
    m.ngram_max = ngram_max;
    m.buckets = buckets;
    for (const auto& [label, texts] : corpora) {
        if (std::find(m.labels.begin(), m.labels.end(), label) != m.labels.end())
            throw ArgError("langid: duplicate label '" + label + "'");
        m.labels.push_back(label);
    }
    const size_t L = m.labels.size();
    m.weights.assign(static_cast<size_t>(buckets) * L, 0.0);
    m.bias.assign(L, 0.0);

    std::vector<std::pair<std::unordered_map<int, double>, size_t>> data;
    for (size_t li = 0; li < corpora.size(); ++li) {
        size_t usable = 0;
        for (const std::string& text : corpora[li].second) {
            if (text.empty() || is_blank(text)) continue;
            data.emplace_back(features(text, ngram_min, ngram_max, buckets), li);
            ++usable;
        }
        if (usable == 0)
            throw ArgError("langid: label '" + corpora[li].first + "' has no non-empty examples");
    }

    const double scale = lr / static_cast<double>(data.size());
    std::vector<double> p(L);
    for (int it = 0; it < iterations; ++it) {
        std::vector<double> gw(m.weights.size(), 0.0), gb(L, 0.0);
        for (const auto& [f, target] : data) {
            std::vector<double> s = scores_of(m, f);
            const double mx = *std::max_element(s.begin(), s.end());
            double z = 0.0;
            for (size_t j = 0; j < L; ++j) z += (p[j] = std::exp(s[j] - mx));
            for (size_t j = 0; j < L; ++j) {
                const double g = p[j] / z - (j == target ? 1.0 : 0.0);
                gb[j] += g;
                for (const auto& [bucket, value] : f)
                    gw[static_cast<size_t>(bucket) * L + j] += g * value;
            }
        }
        for (size_t k = 0; k < m.weights.size(); ++k) m.weights[k] -= scale * gw[k];
        for (size_t j = 0; j < L; ++j) m.bias[j] -= scale * gb[j];
    }
    return m;
}

std::pair<std::string, double> classify(const LangIdModel& model, const std::string& text) {
    if (text.empty() || is_blank(text)) return {"other", 0.0};
    const auto f = features(text, model.ngram_min, model.ngram_max, model.buckets);
    const std::vector<double> s = scores_of(model, f);
    size_t best = 0;
    for (size_t j = 1; j < s.size(); ++j)
        if (s[j] > s[best]) best = j;
    const double mx = s[best];
    double z = 0.0;
    for (double v : s) z += std::exp(v - mx);
    return {model.labels[best], 1.0 / z};
}

json LangIdModel::to_json() const {
    json w = json::object();
    const size_t L = labels.size();
    for (int b = 0; b < buckets; ++b) {
        const double* row = &weights[static_cast<size_t>(b) * L];
        if (std::all_of(row, row + L, [](double v) { return v == 0.0; })) continue;
        w[std::to_string(b)] = std::vector<double>(row, row + L);
    }
    return json{{"labels", labels}, {"ngram_min", ngram_min}, {"ngram_max", ngram_max},
                {"buckets", buckets}, {"bias", bias}, {"weights", w}};
}

LangIdModel LangIdModel::from_json(const json& j) {
    LangIdModel m;
    try {
        m.labels = j.at("labels").get<std::vector<std::string>>();
        m.ngram_min = j.at("ngram_min").get<int>();
        m.ngram_max = j.at("ngram_max").get<int>();
        m.buckets = j.at("buckets").get<int>();
        m.bias = j.at("bias").get<std::vector<double>>();
        if (m.labels.size() < 2 || m.bias.size() != m.labels.size() || m.buckets < 1)
            throw DataError("langid model: inconsistent dimensions");
        m.weights.assign(static_cast<size_t>(m.buckets) * m.labels.size(), 0.0);
        for (const auto& [key, row] : j.at("weights").items()) {
            const int b = std::stoi(key);
            if (b < 0 || b >= m.buckets) throw DataError("langid model: bucket out of range");
            const auto vals = row.get<std::vector<double>>();
            if (vals.size() != m.labels.size())
                throw DataError("langid model: weight row size mismatch");
            std::copy(vals.begin(), vals.end(),
                      m.weights.begin() + static_cast<size_t>(b) * m.labels.size());
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("langid model: ") + e.what());
    }
    return m;
}

void LangIdModel::save(const std::filesystem::path& path) const {
    write_file_atomic(path, to_json().dump(2) + "\n");
}

LangIdModel LangIdModel::load(const std::filesystem::path& path) {
    return from_json(parse_strict(read_file(path), path.string()));
}

std::vector<Transcript> read_transcripts(const std::filesystem::path& path) {
    std::vector<Transcript> out;
    for_each_jsonl(path, [&](const json& j, size_t lineno) {
        Transcript t;
        try {
            t.prompt_lang = j.at("prompt_lang").get<std::string>();
            t.prompt = j.at("prompt").get<std::string>();
            t.response = j.at("response").get<std::string>();
        } catch (const json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(std::move(t));
    });
    return out;
}

void write_transcripts(const std::filesystem::path& path, const std::vector<Transcript>& ts,
                       const json& meta) {
    std::vector<json> lines;
    lines.reserve(ts.size());
    for (const Transcript& t : ts)
        lines.push_back(json{{"prompt_lang", t.prompt_lang}, {"prompt", t.prompt},
                             {"response", t.response}});
    write_jsonl(path, lines, meta);
}

std::vector<std::string> split_sentences(const std::string& text) {
    static const std::vector<std::string> kDelims = {"\xE3\x80\x82", "\xEF\xBC\x8E", ".", "!",
                                                     "?", "\n"};
    std::vector<std::string> out;
    std::string cur;
    size_t i = 0;
    while (i < text.size()) {
        bool hit = false;
        for (const std::string& d : kDelims) {
            if (text.compare(i, d.size(), d) == 0) {
                cur += d;
                if (!is_blank(cur)) out.push_back(cur);
                cur.clear();
                i += d.size();
                hit = true;
                break;
            }
        }
        if (!hit) cur += text[i++];
    }
    if (!cur.empty() && !is_blank(cur)) out.push_back(cur);
    return out;
}

namespace {

AlignmentReport build_report(const std::vector<Transcript>& transcripts,
                             const std::function<std::vector<std::string>(size_t)>& unit_labels) {
    if (transcripts.empty()) throw ArgError("alignment report: no transcripts");
    AlignmentReport report;
    report.n_prompts = static_cast<long>(transcripts.size());
    std::unordered_map<std::string, size_t> index;
    for (size_t i = 0; i < transcripts.size(); ++i) {
        const std::string& lang = transcripts[i].prompt_lang;
        auto [it, fresh] = index.try_emplace(lang, report.buckets.size());
        if (fresh) report.buckets.push_back(AlignmentBucket{lang, 0, {}, {}});
        AlignmentBucket& bucket = report.buckets[it->second];
        for (const std::string& label : unit_labels(i)) {
            bucket.counts[label] += 1;
            bucket.n += 1;
        }
    }
    for (AlignmentBucket& bucket : report.buckets)
        for (const auto& [label, count] : bucket.counts)
            bucket.fractions[label] = static_cast<double>(count) / static_cast<double>(bucket.n);
    return report;
}

}  // namespace

AlignmentReport alignment_report(const std::vector<Transcript>& transcripts,
                                 const LangIdModel& model, bool split) {
    return build_report(transcripts, [&](size_t i) {
        std::vector<std::string> labels;
        if (split) {
            for (const std::string& s : split_sentences(transcripts[i].response))
                labels.push_back(classify(model, s).first);
        }
        if (labels.empty()) labels.push_back(classify(model, transcripts[i].response).first);
        return labels;
    });
}

AlignmentReport alignment_report_from_labels(const std::vector<Transcript>& transcripts,
                                             const std::vector<std::string>& labels) {
    if (labels.size() != transcripts.size())
        throw ArgError("alignment report: " + std::to_string(labels.size()) +
                       " predictions for " + std::to_string(transcripts.size()) + " transcripts");
    return build_report(transcripts,
                        [&](size_t i) { return std::vector<std::string>{labels[i]}; });
}

double AlignmentReport::fraction(const std::string& prompt_lang, const std::string& label) const {
    for (const AlignmentBucket& b : buckets) {
        if (b.prompt_lang != prompt_lang) continue;
        const auto it = b.fractions.find(label);
        return it == b.fractions.end() ? 0.0 : it->second;
    }
    throw ArgError("alignment report: no bucket for prompt language '" + prompt_lang + "'");
}

json AlignmentReport::to_json() const {
    json rows = json::array();
    for (const AlignmentBucket& b : buckets)
        rows.push_back(json{{"prompt_lang", b.prompt_lang}, {"n", b.n}, {"counts", b.counts},
                            {"fractions", b.fractions}});
    return json{{"n_prompts", n_prompts}, {"buckets", rows}};
}

}  // namespace inscp

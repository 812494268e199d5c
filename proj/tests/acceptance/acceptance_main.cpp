// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure.  Tolerances are pinned here, next to each check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "inscp/document.hpp"
#include "inscp/error.hpp"
#include "inscp/eval.hpp"
#include "inscp/langid.hpp"
#include "inscp/model.hpp"
#include "inscp/pipeline.hpp"
#include "inscp/ppl.hpp"
#include "inscp/rng.hpp"
#include "inscp/synth.hpp"
#include "inscp/template_engine.hpp"
#include "inscp/tokenizer.hpp"
#include "inscp/trainer.hpp"

using namespace inscp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

int g_failures = 0;
double g_demo_seconds_a = 0.0;

void run_criterion(int index, const char* name, double time_limit_s,
                   const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out.ok = false;
        out.detail = std::string("exception: ") + e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (elapsed > time_limit_s) {
        out.ok = false;
        out.detail += (out.detail.empty() ? "" : "; ");
        out.detail += "over time limit";
    }
    if (!out.ok) ++g_failures;
    std::printf("[%2d] %-26s %s  (%.2fs, limit %.0fs)%s%s\n", index, name,
                out.ok ? "PASS" : "FAIL", elapsed, time_limit_s,
                out.detail.empty() ? "" : "  ", out.detail.c_str());
    std::fflush(stdout);
}

const TemplateProfile& profile() {
    static const TemplateProfile p = load_template_profile("builtin:llama3");
    return p;
}

ModelDims dims_of(int d_model, int n_layers, int n_heads, int context_len) {
    ModelDims d;
    d.vocab_size = profile().vocab.size();
    d.d_model = d_model;
    d.n_layers = n_layers;
    d.n_heads = n_heads;
    d.context_len = context_len;
    return d;
}

std::string random_text(Rng& rng, int min_chars, int max_chars) {
    const int n = min_chars + static_cast<int>(rng.below(
                                  static_cast<uint64_t>(max_chars - min_chars + 1)));
    std::string out;
    for (int i = 0; i < n; ++i) {
        switch (rng.below(4)) {
            case 0:
                out += static_cast<char>('a' + rng.below(26));
                break;
            case 1:
                out += static_cast<char>('A' + rng.below(26));
                break;
            case 2: {
                const uint32_t cp = 0x4E00 + static_cast<uint32_t>(rng.below(0x800));
                out += static_cast<char>(0xE0 | (cp >> 12));
                out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
                out += static_cast<char>(0x80 | (cp & 0x3F));
                break;
            }
            default:
                out += ' ';
                break;
        }
    }
    return out;
}

bool params_bitwise_equal(const LMParams& a, const LMParams& b) {
    auto at = a.tensors();
    auto bt = b.tensors();
    if (at.size() != bt.size()) return false;
    for (size_t i = 0; i < at.size(); ++i) {
        if (at[i].size != bt[i].size) return false;
        for (size_t k = 0; k < at[i].size; ++k)
            if (at[i].data[k] != bt[i].data[k]) return false;
    }
    return true;
}

Outcome criterion_template() {
    const WrappedExample ex =
        wrap_inscp({"d", "InsCP_data", {}}, profile().tpl, profile().vocab);
    const std::string expected =
        "<|begin_of_text|><|start_header_id|>user<|end_header_id|><|eot_id|>"
        "<|start_header_id|>assistant<|end_header_id|> InsCP_data<|eot_id|>";
    Outcome out;
    out.ok = ex.text == expected && ex.tokens == encode(expected, profile().vocab);
    out.detail = out.ok ? "byte-exact" : "serialized text differs";
    return out;
}

Outcome criterion_ppl_oracle() {
    const Vocab& vocab = profile().vocab;
    const double v = static_cast<double>(vocab.size());
    Outcome out;
    if (vocab.size() != 264) return {false, "vocab is not 264"};

    const LMParams uniform = LMParams::zeros(dims_of(16, 1, 2, 64));
    const std::vector<std::string> texts{"hello world", "你好,世界。",
                                         std::string(300, 'x')};  // spans windows
    for (const auto& text : texts) {
        const double ppl = score_ppl({"d", text, {}}, uniform, vocab).ppl;
        if (std::abs(ppl - v) / v > 1e-6)
            return {false, "uniform ppl " + std::to_string(ppl)};
    }

    LMParams memo = LMParams::zeros(dims_of(16, 1, 2, 64));
    const std::vector<TokenId> a_id = encode("a", vocab);
    memo.b_out[a_id[0]] = 60.0;
    const double memo_ppl = score_ppl({"d", std::string(20, 'a'), {}}, memo, vocab).ppl;
    if (std::abs(memo_ppl - 1.0) > 1e-6)
        return {false, "memorization ppl " + std::to_string(memo_ppl)};

    out.ok = true;
    out.detail = "uniform=264, memorization=1";
    return out;
}

Outcome criterion_loss_equivalence() {
    Rng rng(301);
    const LMParams model = LMParams::init(dims_of(8, 1, 2, 128), rng);
    const Vocab& vocab = profile().vocab;
    double max_diff = 0.0;
    for (int i = 0; i < 100; ++i) {
        const Document doc{"d" + std::to_string(i), random_text(rng, 5, 30), {}};
        const WrappedExample cp = wrap_cp(doc, vocab);
        const WrappedExample in = wrap_inscp(doc, profile().tpl, vocab);

        // the content span of the wrapped example must carry the same ids the
        // plain wrapping sees
        const std::vector<TokenId> content(in.tokens.begin() + in.content_begin,
                                           in.tokens.begin() + in.content_end);
        if (content != cp.tokens) return {false, "content span ids differ at doc " + doc.id};

        // control run: with the scaffold excluded from conditioning, the
        // per-token NLLs agree
        const std::vector<double> nll_cp = per_token_nll(model, cp.tokens);
        const std::vector<double> nll_ctl = per_token_nll(model, content);
        for (size_t k = 0; k < nll_cp.size(); ++k)
            max_diff = std::max(max_diff, std::abs(nll_cp[k] - nll_ctl[k]));

        // all-true mask equals the plain-CP loss exactly
        const std::vector<double> per = per_token_nll(model, cp.tokens);
        double mean = 0.0;
        for (double x : per) mean += x;
        mean /= static_cast<double>(per.size());
        if (masked_nll(model, cp) != mean) return {false, "masked_nll != cp loss"};
    }
    if (max_diff > 1e-6) return {false, "nll diff " + std::to_string(max_diff)};
    return {true, "100 docs, max nll diff " + std::to_string(max_diff)};
}

Outcome criterion_grad_check() {
    Rng rng(302);
    LMParams p = LMParams::init(dims_of(8, 1, 2, 32), rng);
    if (p.num_params() > 10000)
        return {false, "model too large: " + std::to_string(p.num_params())};
    const WrappedExample ex =
        wrap_inscp({"d", "check me", {}}, profile().tpl, profile().vocab);
    const double max_rel = grad_check(p, ex, 1e-4, 25, 303);
    Outcome out;
    out.ok = max_rel < 1e-3;
    out.detail = std::to_string(p.num_params()) + " params, max rel err " +
                 std::to_string(max_rel);
    return out;
}

Outcome criterion_training_sanity() {
    const ModelDims dims = dims_of(128, 4, 4, 512);  // library defaults
    Rng rng(304);
    LMParams p = LMParams::init(dims, rng);
    const std::vector<WrappedExample> data{
        wrap_inscp({"d", "the quick brown fox.", {}}, profile().tpl, profile().vocab)};

    const double initial = masked_nll(p, data[0]);
    TrainConfig cfg;
    cfg.lr = 3e-3;
    cfg.epochs = 200;
    train(p, data, cfg);
    const double final_loss = masked_nll(p, data[0]);
    if (!(final_loss <= 0.1 * initial))
        return {false, "loss " + std::to_string(initial) + " -> " +
                           std::to_string(final_loss)};

    Rng rng2(304);
    LMParams q = LMParams::init(dims, rng2);
    const LMParams before = q;
    TrainConfig frozen;
    frozen.lr = 0.0;
    frozen.epochs = 5;
    train(q, data, frozen);
    if (!params_bitwise_equal(q, before)) return {false, "lr=0 changed parameters"};

    return {true, "loss " + std::to_string(initial) + " -> " + std::to_string(final_loss) +
                      ", lr=0 bitwise stable"};
}

Outcome criterion_filter_thresholds() {
    std::vector<Document> docs;
    std::vector<PerplexityReport> reports;
    const std::vector<std::pair<std::string, double>> planted{
        {"d1", 3.0},    {"d2", 14.999}, {"d3", 15.0},
        {"d4", 15.001}, {"d5", 20.0},   {"d6", 29.999},
        {"d7", 30.0},   {"d8", 30.5},   {"d9", 100.0}};
    for (const auto& [id, ppl] : planted) {
        docs.push_back({id, "text " + id, {}});
        PerplexityReport r;
        r.doc_id = id;
        r.ppl = ppl;
        r.token_count = 10;
        r.nll_sum = 10.0 * std::log(ppl);
        reports.push_back(r);
    }

    FilterPolicy low;
    low.mode = FilterMode::kKeepLow;
    low.max_ppl = 15.0;
    std::set<std::string> low_ids;
    for (const auto& d : filter_corpus(docs, reports, low).first) low_ids.insert(d.id);
    if (low_ids != std::set<std::string>{"d1", "d2", "d3"})
        return {false, "keep_low/15 selected the wrong set"};

    FilterPolicy high;
    high.mode = FilterMode::kKeepHigh;
    high.min_ppl = 30.0;
    std::set<std::string> high_ids;
    for (const auto& d : filter_corpus(docs, reports, high).first) high_ids.insert(d.id);
    if (high_ids != std::set<std::string>{"d7", "d8", "d9"})
        return {false, "keep_high/30 selected the wrong set"};

    return {true, "boundary-inclusive exact sets"};
}

Outcome criterion_langid() {
    Rng rng(305);
    const SynthLanguage lat = make_latin_language(48, rng, "lat");
    const SynthLanguage cjk = make_cjk_language(48, rng, "cjk");
    auto draw = [&](const SynthLanguage& lang, int n) {
        std::vector<std::string> out;
        for (int i = 0; i < n; ++i) out.push_back(synth_sentence(lang, rng));
        return out;
    };
    const LangIdModel model =
        train_langid({{"lat", draw(lat, 200)}, {"cjk", draw(cjk, 200)}});
    long correct = 0;
    for (const auto& s : draw(lat, 200)) correct += classify(model, s).first == "lat";
    for (const auto& s : draw(cjk, 200)) correct += classify(model, s).first == "cjk";
    const double acc = static_cast<double>(correct) / 400.0;
    Outcome out;
    out.ok = acc >= 0.99;
    out.detail = "held-out accuracy " + std::to_string(acc);
    return out;
}

PipelineConfig demo_config(const fs::path& out_dir) {
    PipelineConfig cfg;
    cfg.out_dir = out_dir;
    cfg.seed = 7;
    return cfg;
}

Outcome criterion_alignment_analog() {
    const fs::path out_dir = fs::temp_directory_path() / "inscp_acceptance_a";
    fs::remove_all(out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    std::ostringstream log;
    const ReportBundle bundle = run_pipeline(demo_config(out_dir), log);
    g_demo_seconds_a =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const json& align = bundle.report.at("alignment");
    const double rate_in = align.at("target_rate_inscp").get<double>();
    const double rate_cp = align.at("target_rate_cp").get<double>();
    const int n_prompts = demo_config(out_dir).n_prompts;
    Outcome out;
    out.ok = n_prompts == 200 && rate_in >= 0.90 && rate_in > rate_cp;
    out.detail = "target-language rate: wrapped " + std::to_string(rate_in) + ", plain " +
                 std::to_string(rate_cp) + " over " + std::to_string(n_prompts) + " prompts";
    return out;
}

Outcome criterion_metric_oracles() {
    MCItem item;
    item.task = "t";
    item.question = "q";
    item.options = {{"t1", std::log(0.2), true},
                    {"t2", std::log(0.3), true},
                    {"f1", std::log(0.5), false}};
    const double mc2 = mc2_score(item);
    if (std::abs(mc2 - 0.5) > 1e-9) return {false, "mc2 " + std::to_string(mc2)};

    SentimentLexicon lex;
    lex.entries = {{"good", 1.9}};
    const double compound = sentiment_score("good", lex);
    if (std::abs(compound - 0.44043) > 1e-4)
        return {false, "compound " + std::to_string(compound)};

    const JudgePacket packet = build_judge_packet(
        {{"user", "こんにちは"}, {"assistant", "やあ"}}, std::string("ja"));
    if (packet.rubric_text.find("other than Japanese, please give it a score of 0") ==
        std::string::npos)
        return {false, "judge packet lacks the language rule"};

    return {true, "mc2=0.5, compound=0.44043, language rule verbatim"};
}

Outcome criterion_reproducibility() {
    const fs::path dir_a = fs::temp_directory_path() / "inscp_acceptance_a";
    const fs::path dir_b = fs::temp_directory_path() / "inscp_acceptance_b";
    if (!fs::exists(dir_a / "report.json"))
        return {false, "first run output missing (criterion 8 must run first)"};
    fs::remove_all(dir_b);

    const auto t0 = std::chrono::steady_clock::now();
    std::ostringstream log;
    run_pipeline(demo_config(dir_b), log);
    const double seconds_b =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::string report_a = read_file(dir_a / "report.json");
    const std::string report_b = read_file(dir_b / "report.json");
    Outcome out;
    const double total = g_demo_seconds_a + seconds_b;
    out.ok = !report_a.empty() && report_a == report_b && total < 1200.0;
    out.detail = report_a == report_b ? "byte-identical reports" : "reports differ";
    out.detail += ", both runs " + std::to_string(total) + "s";
    return out;
}

}  // namespace

int main() {
    std::printf("acceptance gate\n");
    run_criterion(1, "template serialization", 1, criterion_template);
    run_criterion(2, "perplexity oracle", 10, criterion_ppl_oracle);
    run_criterion(3, "loss equivalence", 60, criterion_loss_equivalence);
    run_criterion(4, "gradient check", 120, criterion_grad_check);
    run_criterion(5, "training sanity", 120, criterion_training_sanity);
    run_criterion(6, "filter thresholds", 10, criterion_filter_thresholds);
    run_criterion(7, "language id", 30, criterion_langid);
    run_criterion(8, "alignment analog", 900, criterion_alignment_analog);
    run_criterion(9, "metric oracles", 10, criterion_metric_oracles);
    run_criterion(10, "reproducibility", 1200, criterion_reproducibility);
    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}

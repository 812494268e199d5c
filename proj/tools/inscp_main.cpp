#include <algorithm>
#include <filesystem>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "inscp/error.hpp"
#include "inscp/eval.hpp"
#include "inscp/langid.hpp"
#include "inscp/pipeline.hpp"
#include "inscp/ppl.hpp"
#include "inscp/synth.hpp"

namespace fs = std::filesystem;
using namespace inscp;

namespace {

struct CommonMeta {
    json meta() const { return json{{"tool", "inscp"}, {"version", kToolkitVersion}}; }
};

ModelDims dims_from_json(const json& j, int vocab_size) {
    ModelDims dims;
    dims.vocab_size = vocab_size;
    for (const auto& [key, value] : j.items()) {
        if (key == "d_model") dims.d_model = value.get<int>();
        else if (key == "n_layers") dims.n_layers = value.get<int>();
        else if (key == "n_heads") dims.n_heads = value.get<int>();
        else if (key == "context_len") dims.context_len = value.get<int>();
        else throw ConfigError("model config: unknown key '" + key + "'");
    }
    dims.validate();
    return dims;
}

int run(int argc, char** argv) {
    CLI::App app{"Instruction continual pre-training toolkit"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker threads (1 = bitwise-reference mode)")
        ->check(CLI::PositiveNumber);

    // ---- ingest ----
    auto* ingest_cmd = app.add_subcommand("ingest", "normalize raw JSONL corpora to documents");
    std::vector<std::string> ingest_inputs;
    std::string ingest_output;
    bool qa_split = false;
    ingest_cmd->add_option("--input", ingest_inputs, "input JSONL file(s)")
        ->required()
        ->check(CLI::ExistingFile);
    ingest_cmd->add_option("--output", ingest_output, "output documents JSONL")->required();
    ingest_cmd->add_flag("--qa-split", qa_split,
                         "split question/answer records into two documents");
    ingest_cmd->callback([&] {
        std::vector<Document> all;
        std::set<std::string> ids;
        for (const std::string& in : ingest_inputs) {
            for (Document& d : ingest(in, qa_split)) {
                if (!ids.insert(d.id).second)
                    throw DataError("ingest: duplicate id \"" + d.id + "\" across inputs");
                all.push_back(std::move(d));
            }
        }
        write_documents(ingest_output, all, CommonMeta{}.meta());
        std::cout << "ingested " << all.size() << " documents -> " << ingest_output << "\n";
    });

    // ---- score-ppl ----
    auto* score_cmd = app.add_subcommand("score-ppl", "score documents under a checkpoint");
    std::string score_corpus, score_model, score_template = "builtin:llama3", score_output;
    score_cmd->add_option("--corpus", score_corpus, "documents JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    score_cmd->add_option("--model", score_model, "scoring checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    score_cmd->add_option("--template", score_template, "template profile (builtin:llama3 or path)");
    score_cmd->add_option("--output", score_output, "perplexity reports JSONL")->required();
    score_cmd->callback([&] {
        const TemplateProfile profile = load_template_profile(score_template);
        const LMParams model = load_checkpoint(score_model, checkpoint_vocab_hash(profile.vocab));
        std::vector<json> lines;
        for (const Document& doc : read_documents(score_corpus))
            lines.push_back(score_ppl(doc, model, profile.vocab).to_json());
        write_jsonl(score_output, lines, CommonMeta{}.meta());
        std::cout << "scored " << lines.size() << " documents -> " << score_output << "\n";
    });

    // ---- filter ----
    auto* filter_cmd = app.add_subcommand("filter", "threshold documents by perplexity");
    std::string filter_corpus_path, filter_reports, filter_output, filter_summary;
    FilterPolicy policy;
    std::string filter_mode = "keep_low";
    double min_ppl_flag = -1.0;
    filter_cmd->add_option("--corpus", filter_corpus_path, "documents JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    filter_cmd->add_option("--reports", filter_reports, "perplexity reports JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    filter_cmd->add_option("--output", filter_output, "kept documents JSONL")->required();
    filter_cmd->add_option("--summary", filter_summary, "filter summary JSON");
    filter_cmd->add_option("--max-ppl", policy.max_ppl, "keep_low threshold")
        ->capture_default_str();
    filter_cmd->add_option("--min-ppl", min_ppl_flag, "keep_high threshold");
    filter_cmd->add_option("--mode", filter_mode, "keep_low or keep_high")
        ->capture_default_str();
    filter_cmd->callback([&] {
        policy.mode = parse_filter_mode(filter_mode);
        if (min_ppl_flag >= 0.0) policy.min_ppl = min_ppl_flag;
        std::vector<PerplexityReport> reports;
        for_each_jsonl(filter_reports, [&](const json& j, size_t) {
            reports.push_back(PerplexityReport::from_json(j));
        });
        auto [kept, summary] =
            filter_corpus(read_documents(filter_corpus_path), reports, policy);
        write_documents(filter_output, kept, CommonMeta{}.meta());
        if (!filter_summary.empty()) {
            json sj = summary.to_json();
            sj["meta"] = CommonMeta{}.meta();
            write_file_atomic(filter_summary, sj.dump(2) + "\n");
        }
        std::cout << "kept " << summary.kept << "/" << summary.total << " -> " << filter_output
                  << "\n";
    });

    // ---- wrap ----
    auto* wrap_cmd = app.add_subcommand("wrap", "wrap documents for cp or inscp training");
    std::string wrap_corpus, wrap_template = "builtin:llama3", wrap_output, wrap_mode = "inscp";
    size_t wrap_max_tokens = 512;
    wrap_cmd->add_option("--corpus", wrap_corpus, "documents JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    wrap_cmd->add_option("--mode", wrap_mode, "cp or inscp")->capture_default_str();
    wrap_cmd->add_option("--template", wrap_template, "template profile");
    wrap_cmd->add_option("--max-tokens", wrap_max_tokens, "max tokens per example")
        ->capture_default_str();
    wrap_cmd->add_option("--output", wrap_output, "wrapped examples JSONL")->required();
    wrap_cmd->callback([&] {
        const TemplateProfile profile = load_template_profile(wrap_template);
        const std::vector<WrappedExample> wrapped =
            wrap_documents(read_documents(wrap_corpus), parse_wrap_mode(wrap_mode), profile.tpl,
                           profile.vocab, wrap_max_tokens);
        write_wrapped(wrap_output, wrapped, CommonMeta{}.meta());
        size_t warned = 0;
        for (const WrappedExample& ex : wrapped) warned += ex.warnings.empty() ? 0 : 1;
        std::cout << "wrapped " << wrapped.size() << " examples (" << warned
                  << " with sentinel warnings) -> " << wrap_output << "\n";
    });

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train a model on wrapped examples");
    std::string train_data, train_config_path, train_template = "builtin:llama3", train_out,
                train_init;
    train_cmd->add_option("--data", train_data, "wrapped examples JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--config", train_config_path,
                          "JSON config {model: {...}, train: {...}}")
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--template", train_template, "template profile");
    train_cmd->add_option("--init", train_init, "checkpoint to continue from")
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--out", train_out, "output checkpoint")->required();
    train_cmd->callback([&] {
        const TemplateProfile profile = load_template_profile(train_template);
        json cfg_json = json::object();
        if (!train_config_path.empty())
            cfg_json = parse_strict(read_file(train_config_path), train_config_path);
        TrainConfig tc;
        json model_json = json::object();
        for (const auto& [key, value] : cfg_json.items()) {
            if (key == "train") tc = parse_train_config(value);
            else if (key == "model") model_json = value;
            else throw ConfigError("train config: unknown key '" + key + "'");
        }
        LMParams model = [&] {
            if (!train_init.empty())
                return load_checkpoint(train_init, checkpoint_vocab_hash(profile.vocab));
            ModelDims dims = dims_from_json(model_json, static_cast<int>(profile.vocab.size()));
            Rng rng = Rng::substream(tc.seed, "init");
            return LMParams::init(dims, rng);
        }();
        const std::vector<WrappedExample> data = read_wrapped(train_data);
        train(model, data, tc, [&](const StepLog& s) {
            if (s.step % 100 == 0)
                std::cout << "step " << s.step << " epoch " << s.epoch << " loss " << s.loss
                          << "\n";
        });
        save_checkpoint(train_out, model, checkpoint_vocab_hash(profile.vocab),
                        CommonMeta{}.meta().dump());
        std::cout << "trained on " << data.size() << " examples -> " << train_out << "\n";
    });

    // ---- generate ----
    auto* gen_cmd = app.add_subcommand("generate", "sample responses for a prompt file");
    std::string gen_model, gen_prompts, gen_template = "builtin:llama3", gen_output;
    GenConfig gen_cfg;
    gen_cmd->add_option("--model", gen_model, "checkpoint")->required()->check(CLI::ExistingFile);
    gen_cmd->add_option("--prompt-file", gen_prompts, "prompts JSONL {id, text, lang?}")
        ->required()
        ->check(CLI::ExistingFile);
    gen_cmd->add_option("--template", gen_template, "template profile");
    gen_cmd->add_option("--output", gen_output, "transcripts JSONL")->required();
    gen_cmd->add_option("--max-tokens", gen_cfg.max_tokens)->capture_default_str();
    gen_cmd->add_option("--temperature", gen_cfg.temperature)->capture_default_str();
    gen_cmd->add_option("--top-p", gen_cfg.top_p)->capture_default_str();
    gen_cmd->add_option("--seed", gen_cfg.seed)->capture_default_str();
    gen_cmd->callback([&] {
        const TemplateProfile profile = load_template_profile(gen_template);
        const LMParams model = load_checkpoint(gen_model, checkpoint_vocab_hash(profile.vocab));
        const std::vector<Document> prompts = read_documents(gen_prompts);
        std::vector<Transcript> ts;
        for (size_t i = 0; i < prompts.size(); ++i) {
            GenConfig g = gen_cfg;
            g.seed = Rng::substream_seed(gen_cfg.seed, "generate/" + std::to_string(i));
            ts.push_back(Transcript{prompts[i].lang.value_or("?"), prompts[i].text,
                                    generate(model, prompts[i].text, profile.tpl, profile.vocab,
                                             g)});
        }
        write_transcripts(gen_output, ts, CommonMeta{}.meta());
        std::cout << "generated " << ts.size() << " responses -> " << gen_output << "\n";
    });

    // ---- eval-align ----
    auto* align_cmd = app.add_subcommand("eval-align", "language-alignment report");
    std::string align_transcripts, align_model, align_output, align_predictions;
    bool align_split = false;
    align_cmd->add_option("--transcripts", align_transcripts, "transcripts JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    align_cmd->add_option("--langid", align_model, "langid model JSON")->check(CLI::ExistingFile);
    align_cmd->add_option("--predictions", align_predictions,
                          "external label predictions JSONL {label}, one per transcript")
        ->check(CLI::ExistingFile);
    align_cmd->add_flag("--split-sentences", align_split, "classify per sentence");
    align_cmd->add_option("--output", align_output, "report JSON")->required();
    align_cmd->callback([&] {
        const std::vector<Transcript> ts = read_transcripts(align_transcripts);
        AlignmentReport report;
        if (!align_predictions.empty()) {
            std::vector<std::string> labels;
            for_each_jsonl(align_predictions, [&](const json& j, size_t lineno) {
                if (!j.is_object() || !j.contains("label"))
                    throw DataError(align_predictions + ":" + std::to_string(lineno) +
                                    ": expected {label}");
                labels.push_back(j.at("label").get<std::string>());
            });
            report = alignment_report_from_labels(ts, labels);
        } else {
            if (align_model.empty())
                throw ArgError("eval-align: need --langid model or --predictions");
            report = alignment_report(ts, LangIdModel::load(align_model), align_split);
        }
        json rj = report.to_json();
        rj["meta"] = CommonMeta{}.meta();
        write_file_atomic(align_output, rj.dump(2) + "\n");
        std::cout << "alignment report -> " << align_output << "\n";
    });

    // ---- eval-mc ----
    auto* mc_cmd = app.add_subcommand("eval-mc", "multiple-choice metrics");
    std::string mc_items_path, mc_output, mc_norm = "chars", mc_template = "builtin:llama3";
    mc_cmd->add_option("--items", mc_items_path, "MC items JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    mc_cmd->add_option("--norm", mc_norm, "length normalization: chars or tokens")
        ->capture_default_str();
    mc_cmd->add_option("--template", mc_template, "template profile (token norm)");
    mc_cmd->add_option("--output", mc_output, "metrics JSON")->required();
    mc_cmd->callback([&] {
        const std::vector<MCItem> items = read_mc_items(mc_items_path);
        if (items.empty()) throw DataError("eval-mc: no items");
        double mc2_sum = 0.0;
        for (const MCItem& item : items) mc2_sum += mc2_score(item);
        double lennorm;
        if (mc_norm == "chars") {
            lennorm = lennorm_accuracy(items, LenNorm::kChars);
        } else if (mc_norm == "tokens") {
            const TemplateProfile profile = load_template_profile(mc_template);
            lennorm = lennorm_accuracy(items, LenNorm::kTokens, &profile.vocab);
        } else {
            throw ArgError("eval-mc: --norm must be chars or tokens");
        }
        json out{{"meta", CommonMeta{}.meta()},
                 {"mc2", mc2_sum / static_cast<double>(items.size())},
                 {"accuracy", plain_accuracy(items).to_json()},
                 {"lennorm_accuracy", lennorm}};
        write_file_atomic(mc_output, out.dump(2) + "\n");
        std::cout << "mc metrics -> " << mc_output << "\n";
    });

    // ---- eval-sentiment ----
    auto* sent_cmd = app.add_subcommand("eval-sentiment", "lexicon sentiment report");
    std::string sent_texts, sent_lexicon, sent_output;
    sent_cmd->add_option("--texts", sent_texts, "texts JSONL {text, subgroup?}")
        ->required()
        ->check(CLI::ExistingFile);
    sent_cmd->add_option("--lexicon", sent_lexicon, "TSV token<TAB>valence")
        ->required()
        ->check(CLI::ExistingFile);
    sent_cmd->add_option("--output", sent_output, "report JSON")->required();
    sent_cmd->callback([&] {
        std::vector<std::pair<std::string, std::vector<std::string>>> groups;
        for_each_jsonl(sent_texts, [&](const json& j, size_t lineno) {
            if (!j.is_object() || !j.contains("text"))
                throw DataError(sent_texts + ":" + std::to_string(lineno) + ": expected {text}");
            const std::string group = j.value("subgroup", std::string("all"));
            auto it = std::find_if(groups.begin(), groups.end(),
                                   [&](const auto& g) { return g.first == group; });
            if (it == groups.end()) {
                groups.push_back({group, {}});
                it = std::prev(groups.end());
            }
            it->second.push_back(j.at("text").get<std::string>());
        });
        const SentimentReport report =
            sentiment_report(groups, SentimentLexicon::load_tsv(sent_lexicon));
        json rj = report.to_json();
        rj["meta"] = CommonMeta{}.meta();
        write_file_atomic(sent_output, rj.dump(2) + "\n");
        std::cout << "sentiment report -> " << sent_output << "\n";
    });

    // ---- eval-toxicity ----
    auto* tox_cmd = app.add_subcommand("eval-toxicity", "toxicity score");
    std::string tox_texts, tox_scores, tox_output;
    tox_cmd->add_option("--texts", tox_texts, "texts JSONL {text}")->check(CLI::ExistingFile);
    tox_cmd->add_option("--scores", tox_scores, "externally computed scores JSONL {score}")
        ->check(CLI::ExistingFile);
    tox_cmd->add_option("--output", tox_output, "result JSON")->required();
    tox_cmd->callback([&] {
        double mean;
        if (!tox_scores.empty()) {
            mean = toxicity_mean_from_file(tox_scores);
        } else if (!tox_texts.empty()) {
            std::vector<std::string> texts;
            for_each_jsonl(tox_texts, [&](const json& j, size_t lineno) {
                if (!j.is_object() || !j.contains("text"))
                    throw DataError(tox_texts + ":" + std::to_string(lineno) +
                                    ": expected {text}");
                texts.push_back(j.at("text").get<std::string>());
            });
            mean = toxicity_score(texts, KeywordToxicity());
        } else {
            throw ArgError("eval-toxicity: need --texts or --scores");
        }
        json out{{"meta", CommonMeta{}.meta()}, {"toxicity", mean}};
        write_file_atomic(tox_output, out.dump(2) + "\n");
        std::cout << "toxicity " << mean << " -> " << tox_output << "\n";
    });

    // ---- judge-pack ----
    auto* judge_cmd = app.add_subcommand("judge-pack", "emit judge packets / aggregate verdicts");
    std::string judge_transcripts, judge_target, judge_output, judge_verdicts, judge_agg_out;
    judge_cmd->add_option("--transcripts", judge_transcripts, "transcripts JSONL")
        ->check(CLI::ExistingFile);
    judge_cmd->add_option("--target-lang", judge_target, "language code for the zero-score rule");
    judge_cmd->add_option("--output", judge_output, "packets JSONL");
    judge_cmd->add_option("--verdicts", judge_verdicts, "verdicts JSONL {item_id, score}")
        ->check(CLI::ExistingFile);
    judge_cmd->add_option("--aggregate-out", judge_agg_out, "aggregated score JSON");
    judge_cmd->callback([&] {
        bool did = false;
        if (!judge_transcripts.empty()) {
            if (judge_output.empty()) throw ArgError("judge-pack: --transcripts needs --output");
            const std::vector<Transcript> ts = read_transcripts(judge_transcripts);
            std::vector<json> packets;
            for (size_t i = 0; i < ts.size(); ++i) {
                const JudgePacket packet = build_judge_packet(
                    {{"user", ts[i].prompt}, {"assistant", ts[i].response}},
                    judge_target.empty() ? std::optional<std::string>()
                                         : std::optional<std::string>(judge_target));
                json pj = packet.to_json();
                pj["item_id"] = "item-" + std::to_string(i);
                packets.push_back(pj);
            }
            write_jsonl(judge_output, packets, CommonMeta{}.meta());
            std::cout << "wrote " << packets.size() << " packets -> " << judge_output << "\n";
            did = true;
        }
        if (!judge_verdicts.empty()) {
            if (judge_agg_out.empty())
                throw ArgError("judge-pack: --verdicts needs --aggregate-out");
            std::vector<double> scores;
            for_each_jsonl(judge_verdicts, [&](const json& j, size_t lineno) {
                if (!j.is_object() || !j.contains("score"))
                    throw DataError(judge_verdicts + ":" + std::to_string(lineno) +
                                    ": expected {item_id, score}");
                scores.push_back(j.at("score").get<double>());
            });
            const double mean = aggregate_judge_scores(scores);
            json out{{"meta", CommonMeta{}.meta()},
                     {"mean", mean},
                     {"formatted", format_score_1dp(mean)},
                     {"n", scores.size()}};
            write_file_atomic(judge_agg_out, out.dump(2) + "\n");
            std::cout << "judge mean " << format_score_1dp(mean) << " -> " << judge_agg_out
                      << "\n";
            did = true;
        }
        if (!did) throw ArgError("judge-pack: nothing to do (need --transcripts or --verdicts)");
    });

    // ---- report / demo ----
    auto add_pipeline_cmd = [&](const char* name, const char* desc) {
        auto* cmd = app.add_subcommand(name, desc);
        auto opts = std::make_shared<std::pair<std::string, PipelineConfig>>();
        cmd->add_option("--config", opts->first, "pipeline config JSON")
            ->check(CLI::ExistingFile);
        cmd->add_option("--out-dir", opts->second.out_dir, "artifact directory")
            ->capture_default_str();
        cmd->add_option("--seed", opts->second.seed, "root seed")->capture_default_str();
        return std::pair{cmd, opts};
    };
    auto [report_cmd, report_opts] =
        add_pipeline_cmd("report", "build (or resume to) the final report");
    auto [demo_cmd, demo_opts] =
        add_pipeline_cmd("demo", "run the bundled synthetic pipeline end to end");
    auto run_pipe = [&](std::pair<std::string, PipelineConfig>& opts, bool print_report) {
        PipelineConfig cfg = opts.second;
        if (!opts.first.empty()) {
            PipelineConfig loaded = load_pipeline_config(opts.first);
            // command line wins over the file for out_dir/seed
            if (opts.second.out_dir != PipelineConfig().out_dir) loaded.out_dir = opts.second.out_dir;
            if (opts.second.seed != PipelineConfig().seed) loaded.seed = opts.second.seed;
            cfg = loaded;
        }
        const ReportBundle bundle = run_pipeline(cfg, std::cout);
        std::cout << "report -> " << bundle.report_path.string() << "\n";
        if (print_report)
            std::cout << bundle.report["alignment"].dump(2) << "\n";
    };
    report_cmd->callback([&, report_opts] { run_pipe(*report_opts, false); });
    demo_cmd->callback([&, demo_opts] { run_pipe(*demo_opts, true); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
    } catch (const ArgError& e) {
        std::cerr << "argument error: " << e.what() << "\n";
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
    } catch (const RuntimeError& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

#include "inscp/pipeline.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <functional>
#include <ostream>

#include "inscp/error.hpp"
#include "inscp/eval.hpp"
#include "inscp/langid.hpp"
#include "inscp/synth.hpp"

namespace inscp {

namespace fs = std::filesystem;

PipelineConfig::PipelineConfig() {
    filter.mode = FilterMode::kKeepHigh;
    filter.min_ppl = 30.0;
    gen.temperature = 0.3;
    gen.max_tokens = 48;
}

void PipelineConfig::validate() const {
    ModelDims dims{0, d_model, n_layers, n_heads, context_len};
    dims.vocab_size = 264;  // checked against the template profile at run time
    dims.validate();
    if (n_words < 4) throw ConfigError("pipeline: n_words must be >= 4");
    if (n_docs < 1) throw ConfigError("pipeline: n_docs must be >= 1");
    if (n_base_docs < 1) throw ConfigError("pipeline: n_base_docs must be >= 1");
    if (sentences_per_doc < 1) throw ConfigError("pipeline: sentences_per_doc must be >= 1");
    if (n_prompts < 1) throw ConfigError("pipeline: n_prompts must be >= 1");
    if (base_epochs < 0) throw ConfigError("pipeline: base_epochs must be >= 0");
    if (!(base_lr >= 0.0)) throw ConfigError("pipeline: base_lr must be >= 0");
    if (out_dir.empty()) throw ConfigError("pipeline: out_dir must be set");
    branch_train.validate();
    gen.validate();
    filter.validate();
    if (template_ref.rfind("builtin:", 0) != 0 && !fs::exists(template_ref))
        throw ConfigError("pipeline: template file '" + template_ref + "' does not exist");
}

json PipelineConfig::to_json() const {
    json train{{"lr", branch_train.lr},
               {"beta1", branch_train.beta1},
               {"beta2", branch_train.beta2},
               {"eps", branch_train.eps},
               {"weight_decay", branch_train.weight_decay},
               {"batch_size", branch_train.batch_size},
               {"epochs", branch_train.epochs},
               {"shuffle", branch_train.shuffle}};
    if (branch_train.grad_clip) train["grad_clip"] = *branch_train.grad_clip;
    json filter_j{{"mode", filter_mode_name(filter.mode)}, {"max_ppl", filter.max_ppl}};
    if (filter.min_ppl) filter_j["min_ppl"] = *filter.min_ppl;
    return json{{"out_dir", out_dir.string()},
                {"template", template_ref},
                {"seed", seed},
                {"model", json{{"d_model", d_model},
                               {"n_layers", n_layers},
                               {"n_heads", n_heads},
                               {"context_len", context_len}}},
                {"corpus", json{{"n_words", n_words},
                                {"n_docs", n_docs},
                                {"n_base_docs", n_base_docs},
                                {"sentences_per_doc", sentences_per_doc},
                                {"n_prompts", n_prompts}}},
                {"base", json{{"epochs", base_epochs}, {"lr", base_lr}}},
                {"train", train},
                {"generate", json{{"max_tokens", gen.max_tokens},
                                  {"temperature", gen.temperature},
                                  {"top_p", gen.top_p},
                                  {"seed", gen.seed}}},
                {"filter", filter_j}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("pipeline config must be a JSON object");
    PipelineConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "out_dir") cfg.out_dir = value.get<std::string>();
        else if (key == "template") cfg.template_ref = value.get<std::string>();
        else if (key == "seed") cfg.seed = value.get<uint64_t>();
        else if (key == "model") {
            for (const auto& [mk, mv] : value.items()) {
                if (mk == "d_model") cfg.d_model = mv.get<int>();
                else if (mk == "n_layers") cfg.n_layers = mv.get<int>();
                else if (mk == "n_heads") cfg.n_heads = mv.get<int>();
                else if (mk == "context_len") cfg.context_len = mv.get<int>();
                else throw ConfigError("pipeline config: unknown model key '" + mk + "'");
            }
        } else if (key == "corpus") {
            for (const auto& [ck, cv] : value.items()) {
                if (ck == "n_words") cfg.n_words = cv.get<int>();
                else if (ck == "n_docs") cfg.n_docs = cv.get<int>();
                else if (ck == "n_base_docs") cfg.n_base_docs = cv.get<int>();
                else if (ck == "sentences_per_doc") cfg.sentences_per_doc = cv.get<int>();
                else if (ck == "n_prompts") cfg.n_prompts = cv.get<int>();
                else throw ConfigError("pipeline config: unknown corpus key '" + ck + "'");
            }
        } else if (key == "base") {
            for (const auto& [bk, bv] : value.items()) {
                if (bk == "epochs") cfg.base_epochs = bv.get<int>();
                else if (bk == "lr") cfg.base_lr = bv.get<double>();
                else throw ConfigError("pipeline config: unknown base key '" + bk + "'");
            }
        } else if (key == "train") {
            cfg.branch_train = parse_train_config(value);
        } else if (key == "generate") {
            cfg.gen = parse_gen_config(value);
        } else if (key == "filter") {
            FilterPolicy p;
            for (const auto& [fk, fv] : value.items()) {
                if (fk == "mode") p.mode = parse_filter_mode(fv.get<std::string>());
                else if (fk == "max_ppl") p.max_ppl = fv.get<double>();
                else if (fk == "min_ppl") p.min_ppl = fv.get<double>();
                else throw ConfigError("pipeline config: unknown filter key '" + fk + "'");
            }
            cfg.filter = p;
        } else {
            throw ConfigError("pipeline config: unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

std::string PipelineConfig::hash() const {
    json j = to_json();
    j.erase("out_dir");  // the output location is not part of the experiment identity
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a64(j.dump()));
    return buf;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    return PipelineConfig::from_json(parse_strict(read_file(path), path.string()));
}

json artifact_meta(const PipelineConfig& cfg) {
    return json{{"config_hash", cfg.hash()}, {"version", kToolkitVersion}, {"seed", cfg.seed}};
}

namespace {

json lang_to_json(const SynthLanguage& lang) {
    return json{{"code", lang.code},
                {"words", lang.words},
                {"separator", lang.separator},
                {"terminator", lang.terminator}};
}

SynthLanguage lang_from_json(const json& j) {
    SynthLanguage lang;
    try {
        lang.code = j.at("code").get<std::string>();
        lang.words = j.at("words").get<std::vector<std::string>>();
        lang.separator = j.at("separator").get<std::string>();
        lang.terminator = j.at("terminator").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError(std::string("language file: ") + e.what());
    }
    return lang;
}

struct PipelineRun {
    const PipelineConfig& cfg;
    std::ostream& log;
    TemplateProfile profile;
    json meta;

    fs::path path(const char* name) const { return cfg.out_dir / name; }

    ModelDims dims() const {
        return ModelDims{static_cast<int>(profile.vocab.size()), cfg.d_model, cfg.n_layers,
                         cfg.n_heads, cfg.context_len};
    }

    std::pair<SynthLanguage, SynthLanguage> load_langs() const {
        const json j = parse_strict(read_file(path("langs.json")), "langs.json");
        return {lang_from_json(j.at("base")), lang_from_json(j.at("target"))};
    }

    LMParams load_model(const char* name) const {
        return load_checkpoint(path(name), checkpoint_vocab_hash(profile.vocab));
    }

    void save_model(const char* name, const LMParams& p) const {
        save_checkpoint(path(name), p, checkpoint_vocab_hash(profile.vocab), meta.dump());
    }

    void stage_synth() {
        Rng lat_rng = Rng::substream(cfg.seed, "synth/lat");
        Rng cjk_rng = Rng::substream(cfg.seed, "synth/cjk");
        const SynthLanguage lat = make_latin_language(cfg.n_words, lat_rng);
        const SynthLanguage cjk = make_cjk_language(cfg.n_words, cjk_rng);
        write_file_atomic(path("langs.json"),
                          json{{"base", lang_to_json(lat)}, {"target", lang_to_json(cjk)},
                               {"meta", meta}}
                                  .dump(2) +
                              "\n");

        std::vector<Document> base_docs;
        for (const Document& d :
             synth_corpus(lat, lat_rng, cfg.n_base_docs, cfg.sentences_per_doc, "base")) {
            base_docs.push_back(Document{d.id + "#q", synth_sentence(lat, lat_rng, 2, 4), d.lang});
            base_docs.push_back(Document{d.id + "#a", d.text, d.lang});
        }
        write_documents(path("corpus_base.jsonl"), base_docs, meta);
        write_documents(path("corpus_target.jsonl"),
                        synth_corpus(cjk, cjk_rng, cfg.n_docs, cfg.sentences_per_doc, "tgt"),
                        meta);

        Rng prompt_rng = Rng::substream(cfg.seed, "synth/prompts");
        std::vector<Document> prompts;
        for (int i = 0; i < cfg.n_prompts; ++i) {
            char id[32];
            std::snprintf(id, sizeof id, "prompt-%04d", i);
            prompts.push_back(Document{id, synth_sentence(cjk, prompt_rng, 2, 4), cjk.code});
        }
        write_documents(path("prompts.jsonl"), prompts, meta);

        Rng lex_rng = Rng::substream(cfg.seed, "synth/lexicon");
        std::string tsv;
        for (size_t i = 0; i < std::min<size_t>(16, lat.words.size()); ++i) {
            const double valence = (i % 2 == 0 ? 1.0 : -1.0) * (1.0 + lex_rng.uniform());
            char val[32];
            std::snprintf(val, sizeof val, "%.2f", valence);
            tsv += lat.words[i] + "\t" + val + "\n";
        }
        write_file_atomic(path("lexicon.tsv"), tsv);

        Rng mc_rng = Rng::substream(cfg.seed, "synth/mc");
        std::vector<json> mc_lines;
        for (int i = 0; i < 40; ++i) {
            const size_t truth = mc_rng.below(4);
            json options = json::array();
            for (size_t o = 0; o < 4; ++o) {
                const bool is_true = o == truth;
                const double logprob = is_true ? -0.5 - mc_rng.uniform()
                                               : -1.5 - 2.0 * mc_rng.uniform();
                options.push_back(json{{"text", lat.words[mc_rng.below(lat.words.size())]},
                                       {"logprob", logprob},
                                       {"is_true", is_true}});
            }
            mc_lines.push_back(json{{"task", i % 2 == 0 ? "task_a" : "task_b"},
                                    {"question", synth_sentence(lat, mc_rng, 3, 6)},
                                    {"options", options}});
        }
        write_jsonl(path("mc_items.jsonl"), mc_lines, meta);
    }

    std::vector<WrappedExample> wrap_file(const char* corpus, WrapMode mode) const {
        const std::vector<Document> docs = read_documents(path(corpus));
        return wrap_documents(docs, mode, profile.tpl, profile.vocab,
                              static_cast<size_t>(cfg.context_len));
    }

    void train_into(LMParams& model, const std::vector<WrappedExample>& data, int epochs,
                    double lr, const std::string& stream) const {
        TrainConfig tc = cfg.branch_train;
        tc.epochs = epochs;
        tc.lr = lr;
        tc.seed = Rng::substream_seed(cfg.seed, stream);
        long logged = 0;
        train(model, data, tc, [&](const StepLog& s) {
            if (++logged % 200 == 0)
                log << "    step " << s.step << " epoch " << s.epoch << " loss " << s.loss
                    << "\n";
        });
    }

    // The base corpus holds question/answer pairs; each pair becomes one chat
    // turn with the question in the user slot, so the base model learns to
    // answer prompts rather than continue bare scaffolds.
    std::vector<WrappedExample> wrap_base_chat() const {
        const std::vector<Document> docs = read_documents(path("corpus_base.jsonl"));
        if (docs.size() % 2 != 0)
            throw DataError("corpus_base.jsonl: expected question/answer pairs");
        std::vector<WrappedExample> out;
        for (size_t i = 0; i + 1 < docs.size(); i += 2) {
            const Document& q = docs[i];
            const Document& a = docs[i + 1];
            const std::string stem = q.id.substr(0, q.id.find('#'));
            if (q.id != stem + "#q" || a.id != stem + "#a")
                throw DataError("corpus_base.jsonl: unpaired ids " + q.id + " / " + a.id);
            ChatTemplate turn = profile.tpl;
            turn.user_slot = q.text;
            const std::vector<WrappedExample> wrapped =
                wrap_documents({Document{stem, a.text, a.lang}}, WrapMode::kInsCp, turn,
                               profile.vocab, static_cast<size_t>(cfg.context_len));
            out.insert(out.end(), wrapped.begin(), wrapped.end());
        }
        return out;
    }

    void stage_base() {
        const std::vector<WrappedExample> data = wrap_base_chat();
        Rng init_rng = Rng::substream(cfg.seed, "init");
        LMParams model = LMParams::init(dims(), init_rng);
        train_into(model, data, cfg.base_epochs, cfg.base_lr, "train/base");
        save_model("base.ckpt", model);
    }

    void stage_score() {
        const LMParams base = load_model("base.ckpt");
        std::vector<json> lines;
        for (const Document& doc : read_documents(path("corpus_target.jsonl")))
            lines.push_back(score_ppl(doc, base, profile.vocab).to_json());
        write_jsonl(path("ppl.jsonl"), lines, meta);
    }

    void stage_filter() {
        const std::vector<Document> docs = read_documents(path("corpus_target.jsonl"));
        std::vector<PerplexityReport> reports;
        for_each_jsonl(path("ppl.jsonl"),
                       [&](const json& j, size_t) { reports.push_back(PerplexityReport::from_json(j)); });
        auto [kept, summary] = filter_corpus(docs, reports, cfg.filter);
        write_documents(path("filtered.jsonl"), kept, meta);
        json sj = summary.to_json();
        sj["meta"] = meta;
        write_file_atomic(path("filter_summary.json"), sj.dump(2) + "\n");
        log << "  filter kept " << summary.kept << "/" << summary.total << "\n";
    }

    // The inscp wrap fills the user slot with a short target-language cue,
    // one per document, so branch training covers filled-slot contexts like
    // the ones render_chat_prompt produces at generation time.
    void stage_wrap() {
        write_wrapped(path("wrapped_cp.jsonl"), wrap_file("filtered.jsonl", WrapMode::kCp), meta);
        const SynthLanguage cjk = load_langs().second;
        Rng cue_rng = Rng::substream(cfg.seed, "wrap/cues");
        std::vector<WrappedExample> wrapped;
        for (const Document& doc : read_documents(path("filtered.jsonl"))) {
            ChatTemplate turn = profile.tpl;
            turn.user_slot = synth_sentence(cjk, cue_rng, 2, 4);
            const std::vector<WrappedExample> one =
                wrap_documents({doc}, WrapMode::kInsCp, turn, profile.vocab,
                               static_cast<size_t>(cfg.context_len));
            wrapped.insert(wrapped.end(), one.begin(), one.end());
        }
        write_wrapped(path("wrapped_inscp.jsonl"), wrapped, meta);
    }

    void stage_train() {
        for (const char* branch : {"cp", "inscp"}) {
            const std::vector<WrappedExample> data = read_wrapped(
                path(branch == std::string("cp") ? "wrapped_cp.jsonl" : "wrapped_inscp.jsonl"));
            LMParams model = load_model("base.ckpt");
            train_into(model, data, cfg.branch_train.epochs, cfg.branch_train.lr,
                       std::string("train/") + branch);
            save_model(branch == std::string("cp") ? "model_cp.ckpt" : "model_inscp.ckpt", model);
            log << "  trained " << branch << " branch on " << data.size() << " examples\n";
        }
    }

    void stage_langid() {
        auto [lat, cjk] = load_langs();
        Rng lat_rng = Rng::substream(cfg.seed, "langid/base");
        Rng cjk_rng = Rng::substream(cfg.seed, "langid/target");
        LabeledCorpus corpora{{lat.code, synth_sentences(lat, lat_rng, 200)},
                              {cjk.code, synth_sentences(cjk, cjk_rng, 200)}};
        train_langid(corpora).save(path("langid.json"));
    }

    void stage_generate() {
        const std::vector<Document> prompts = read_documents(path("prompts.jsonl"));
        for (const char* branch : {"cp", "inscp"}) {
            const LMParams model =
                load_model(branch == std::string("cp") ? "model_cp.ckpt" : "model_inscp.ckpt");
            std::vector<Transcript> ts;
            for (size_t i = 0; i < prompts.size(); ++i) {
                GenConfig g = cfg.gen;
                g.seed = Rng::substream_seed(
                    cfg.seed, std::string("generate/") + branch + "/" + std::to_string(i));
                ts.push_back(Transcript{prompts[i].lang.value_or("?"), prompts[i].text,
                                        generate(model, prompts[i].text, profile.tpl,
                                                 profile.vocab, g)});
            }
            write_transcripts(
                path(branch == std::string("cp") ? "transcripts_cp.jsonl"
                                                 : "transcripts_inscp.jsonl"),
                ts, meta);
            log << "  generated " << ts.size() << " " << branch << " responses\n";
        }
    }

    void stage_report() {
        auto [lat, cjk] = load_langs();
        const LangIdModel lid = LangIdModel::load(path("langid.json"));
        const std::vector<Transcript> cp_ts = read_transcripts(path("transcripts_cp.jsonl"));
        const std::vector<Transcript> in_ts = read_transcripts(path("transcripts_inscp.jsonl"));

        const AlignmentReport cp_align = alignment_report(cp_ts, lid);
        const AlignmentReport in_align = alignment_report(in_ts, lid);
        const double cp_rate = cp_align.fraction(cjk.code, cjk.code);
        const double in_rate = in_align.fraction(cjk.code, cjk.code);

        const SentimentLexicon lex = SentimentLexicon::load_tsv(path("lexicon.tsv"));
        auto responses = [](const std::vector<Transcript>& ts) {
            std::vector<std::string> out;
            for (const Transcript& t : ts) out.push_back(t.response);
            return out;
        };
        const SentimentReport sentiment =
            sentiment_report({{"cp", responses(cp_ts)}, {"inscp", responses(in_ts)}}, lex);

        const KeywordToxicity tox;
        const double tox_cp = toxicity_score(responses(cp_ts), tox);
        const double tox_in = toxicity_score(responses(in_ts), tox);

        const std::vector<MCItem> mc_items = read_mc_items(path("mc_items.jsonl"));
        double mc2_sum = 0.0;
        for (const MCItem& item : mc_items) mc2_sum += mc2_score(item);
        const double mc2_mean = mc2_sum / static_cast<double>(mc_items.size());
        const AccuracyReport acc = plain_accuracy(mc_items);
        const double lennorm = lennorm_accuracy(mc_items, LenNorm::kChars);

        std::vector<json> packets;
        json mt_bench = json::object();
        const std::pair<const char*, const std::vector<Transcript>*> branches[] = {
            {"cp", &cp_ts}, {"inscp", &in_ts}};
        for (const auto& [branch, ts] : branches) {
            std::vector<double> verdicts;
            for (size_t i = 0; i < std::min<size_t>(8, ts->size()); ++i) {
                const Transcript& t = (*ts)[i];
                const JudgePacket packet = build_judge_packet(
                    {{"user", t.prompt}, {"assistant", t.response}}, cjk.code);
                json pj = packet.to_json();
                pj["item_id"] = std::string(branch) + "-" + std::to_string(i);
                packets.push_back(pj);
                verdicts.push_back(classify(lid, t.response).first == cjk.code ? 7.0 : 0.0);
            }
            const double mean = aggregate_judge_scores(verdicts);
            mt_bench[branch] = json{{"mean", mean}, {"formatted", format_score_1dp(mean)}};
        }
        write_jsonl(path("judge_packets.jsonl"), packets, meta);

        json report{
            {"meta", meta},
            {"alignment", json{{"target_lang", cjk.code},
                               {"cp", cp_align.to_json()},
                               {"inscp", in_align.to_json()},
                               {"target_rate_cp", cp_rate},
                               {"target_rate_inscp", in_rate}}},
            {"reliability", json{{"sentiment", sentiment.to_json()},
                                 {"toxicity", json{{"cp", tox_cp}, {"inscp", tox_in}}}}},
            {"knowledge", json{{"mc2", mc2_mean},
                               {"accuracy", acc.to_json()},
                               {"lennorm_accuracy", lennorm}}},
            {"mt_bench", mt_bench}};
        write_file_atomic(path("report.json"), report.dump(2) + "\n");
        log << "  alignment target-rate cp " << cp_rate << " inscp " << in_rate << "\n";
    }
};

struct Stage {
    const char* name;
    std::vector<const char*> outputs;
    std::function<void(PipelineRun&)> run;
};

}  // namespace

ReportBundle run_pipeline(const PipelineConfig& cfg, std::ostream& log) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);

    PipelineRun run{cfg, log, load_template_profile(cfg.template_ref), artifact_meta(cfg)};

    const std::vector<Stage> stages = {
        {"synth",
         {"langs.json", "corpus_base.jsonl", "corpus_target.jsonl", "prompts.jsonl",
          "lexicon.tsv", "mc_items.jsonl"},
         [](PipelineRun& r) { r.stage_synth(); }},
        {"base", {"base.ckpt"}, [](PipelineRun& r) { r.stage_base(); }},
        {"score", {"ppl.jsonl"}, [](PipelineRun& r) { r.stage_score(); }},
        {"filter",
         {"filtered.jsonl", "filter_summary.json"},
         [](PipelineRun& r) { r.stage_filter(); }},
        {"wrap",
         {"wrapped_cp.jsonl", "wrapped_inscp.jsonl"},
         [](PipelineRun& r) { r.stage_wrap(); }},
        {"train",
         {"model_cp.ckpt", "model_inscp.ckpt"},
         [](PipelineRun& r) { r.stage_train(); }},
        {"langid", {"langid.json"}, [](PipelineRun& r) { r.stage_langid(); }},
        {"generate",
         {"transcripts_cp.jsonl", "transcripts_inscp.jsonl"},
         [](PipelineRun& r) { r.stage_generate(); }},
        {"report",
         {"judge_packets.jsonl", "report.json"},
         [](PipelineRun& r) { r.stage_report(); }},
    };

    // A changed config invalidates everything in out_dir.
    const fs::path manifest = cfg.out_dir / "manifest.json";
    const std::string config_hash = cfg.hash();
    bool wipe = false;
    if (fs::exists(manifest)) {
        const json m = parse_strict(read_file(manifest), manifest.string());
        wipe = m.value("config_hash", std::string()) != config_hash;
    }
    size_t first = stages.size();
    for (size_t i = 0; i < stages.size(); ++i) {
        const bool complete =
            !wipe && std::all_of(stages[i].outputs.begin(), stages[i].outputs.end(),
                                 [&](const char* out) { return fs::exists(run.path(out)); });
        if (!complete) {
            first = i;
            break;
        }
    }
    write_file_atomic(manifest, json{{"config_hash", config_hash},
                                     {"version", kToolkitVersion},
                                     {"config", cfg.to_json()}}
                                        .dump(2) +
                                    "\n");

    std::string last_good = "(none)";
    for (size_t i = 0; i < stages.size(); ++i) {
        if (i < first) {
            log << "stage " << stages[i].name << ": up to date\n";
            last_good = run.path(stages[i].outputs.back()).string();
            continue;
        }
        log << "stage " << stages[i].name << ":\n";
        try {
            stages[i].run(run);
        } catch (...) {
            log << "stage " << stages[i].name << " failed; last good artifact: " << last_good
                << "\n";
            throw;
        }
        last_good = run.path(stages[i].outputs.back()).string();
    }

    ReportBundle bundle;
    bundle.report_path = run.path("report.json");
    bundle.report = parse_strict(read_file(bundle.report_path), "report.json");
    return bundle;
}

}  // namespace inscp

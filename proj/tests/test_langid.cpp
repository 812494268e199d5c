#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "inscp/error.hpp"
#include "inscp/langid.hpp"
#include "inscp/rng.hpp"
#include "inscp/synth.hpp"

using namespace inscp;

namespace {

struct TwoLangs {
    SynthLanguage lat;
    SynthLanguage cjk;
};

TwoLangs make_langs(uint64_t seed) {
    Rng rng(seed);
    TwoLangs t;
    t.lat = make_latin_language(40, rng, "lat");
    t.cjk = make_cjk_language(40, rng, "cjk");
    return t;
}

std::vector<std::string> sentences(const SynthLanguage& lang, uint64_t seed, int n) {
    Rng rng(seed);
    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(synth_sentence(lang, rng));
    return out;
}

}  // namespace

TEST_CASE("disjoint alphabets separate almost perfectly on held-out text") {
    const TwoLangs langs = make_langs(21);
    const LabeledCorpus train_set{{"lat", sentences(langs.lat, 1, 200)},
                                  {"cjk", sentences(langs.cjk, 2, 200)}};
    const LangIdModel model = train_langid(train_set);

    const std::vector<std::string> held_lat = sentences(langs.lat, 3, 200);
    const std::vector<std::string> held_cjk = sentences(langs.cjk, 4, 200);
    long correct = 0, total = 0;
    for (const auto& s : held_lat) {
        correct += classify(model, s).first == "lat";
        ++total;
    }
    for (const auto& s : held_cjk) {
        correct += classify(model, s).first == "cjk";
        ++total;
    }
    CHECK(total == 400);
    CHECK(static_cast<double>(correct) / static_cast<double>(total) >= 0.99);
}

TEST_CASE("empty and whitespace-only text classify as other") {
    const TwoLangs langs = make_langs(22);
    const LangIdModel model = train_langid({{"lat", sentences(langs.lat, 5, 20)},
                                            {"cjk", sentences(langs.cjk, 6, 20)}});
    for (const char* s : {"", " ", "\t\n  "}) {
        const auto [label, score] = classify(model, s);
        CHECK(label == "other");
        CHECK(score == 0.0);
    }
}

TEST_CASE("exact ties resolve to the earlier declared label") {
    // zero-iteration training keeps all weights at zero, so every class has
    // identical score and argmax must fall to the first declared label
    const LangIdModel model =
        train_langid({{"aa", {"x"}}, {"bb", {"y"}}}, 1, 1, 64, 0, 1.0);
    const auto [label, score] = classify(model, "zz");
    CHECK(label == "aa");
    CHECK(score == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("training validates its inputs") {
    CHECK_THROWS_AS(train_langid({{"only", {"x"}}}), ArgError);
    CHECK_THROWS_AS(train_langid({{"a", {"x"}}, {"a", {"y"}}}), ArgError);
    CHECK_THROWS_AS(train_langid({{"a", {"x"}}, {"b", {}}}), ArgError);
    CHECK_THROWS_AS(train_langid({{"a", {"x"}}, {"b", {"", "  "}}}), ArgError);
    CHECK_THROWS_AS(train_langid({{"a", {"x"}}, {"b", {"y"}}}, 3, 1), ArgError);
    CHECK_THROWS_AS(train_langid({{"a", {"x"}}, {"b", {"y"}}}, 0, 3), ArgError);
    CHECK_THROWS_AS(train_langid({{"a", {"x"}}, {"b", {"y"}}}, 1, 3, 0), ArgError);
}

TEST_CASE("model json round trip preserves behavior") {
    const TwoLangs langs = make_langs(23);
    const LangIdModel model = train_langid({{"lat", sentences(langs.lat, 7, 50)},
                                            {"cjk", sentences(langs.cjk, 8, 50)}},
                                           1, 2, 1 << 10, 100);
    const LangIdModel back = LangIdModel::from_json(model.to_json());
    CHECK(back.labels == model.labels);
    CHECK(back.buckets == model.buckets);
    CHECK(back.weights == model.weights);
    CHECK(back.bias == model.bias);
    const std::string probe = sentences(langs.lat, 9, 1)[0];
    const auto a = classify(model, probe);
    const auto b = classify(back, probe);
    CHECK(a.first == b.first);
    CHECK(a.second == doctest::Approx(b.second).epsilon(1e-12));
}

TEST_CASE("model file round trip") {
    const TwoLangs langs = make_langs(24);
    const LangIdModel model = train_langid({{"lat", sentences(langs.lat, 10, 30)},
                                            {"cjk", sentences(langs.cjk, 11, 30)}},
                                           1, 2, 1 << 10, 50);
    const auto path = std::filesystem::temp_directory_path() / "inscp_test_langid.json";
    model.save(path);
    const LangIdModel back = LangIdModel::load(path);
    CHECK(back.labels == model.labels);
    CHECK(back.weights == model.weights);
    std::filesystem::remove(path);
}

TEST_CASE("training is deterministic") {
    const TwoLangs langs = make_langs(25);
    const LabeledCorpus corpus{{"lat", sentences(langs.lat, 12, 40)},
                               {"cjk", sentences(langs.cjk, 13, 40)}};
    const LangIdModel a = train_langid(corpus, 1, 3, 1 << 12, 80);
    const LangIdModel b = train_langid(corpus, 1, 3, 1 << 12, 80);
    CHECK(a.weights == b.weights);
    CHECK(a.bias == b.bias);
}

TEST_CASE("split_sentences keeps terminators and drops blanks") {
    const std::vector<std::string> parts = split_sentences("Hello there. How?\nFine!");
    REQUIRE(parts.size() == 3);
    CHECK(parts[0] == "Hello there.");
    CHECK(parts[1] == " How?");
    CHECK(parts[2] == "Fine!");

    const std::vector<std::string> cjk = split_sentences("你好。再见。");
    REQUIRE(cjk.size() == 2);
    CHECK(cjk[0] == "你好。");
    CHECK(cjk[1] == "再见。");

    CHECK(split_sentences("").empty());
    CHECK(split_sentences(" \n ").empty());
    const std::vector<std::string> tail = split_sentences("no terminator");
    REQUIRE(tail.size() == 1);
    CHECK(tail[0] == "no terminator");
}

TEST_CASE("alignment report conserves counts and fractions") {
    const TwoLangs langs = make_langs(26);
    const LangIdModel model = train_langid({{"lat", sentences(langs.lat, 14, 100)},
                                            {"cjk", sentences(langs.cjk, 15, 100)}});
    std::vector<Transcript> ts;
    for (const auto& s : sentences(langs.lat, 16, 10)) ts.push_back({"lat", "p", s});
    for (const auto& s : sentences(langs.cjk, 17, 6)) ts.push_back({"cjk", "p", s});
    const AlignmentReport report = alignment_report(ts, model);
    CHECK(report.n_prompts == 16);
    REQUIRE(report.buckets.size() == 2);
    CHECK(report.buckets[0].prompt_lang == "lat");  // first-seen order
    CHECK(report.buckets[1].prompt_lang == "cjk");
    for (const auto& bucket : report.buckets) {
        long count_sum = 0;
        double frac_sum = 0.0;
        for (const auto& [label, c] : bucket.counts) count_sum += c;
        for (const auto& [label, f] : bucket.fractions) frac_sum += f;
        CHECK(count_sum == bucket.n);
        CHECK(frac_sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(report.fraction("lat", "lat") >= 0.99);
    CHECK(report.fraction("cjk", "cjk") >= 0.99);
    CHECK(report.fraction("cjk", "nope") == 0.0);
    CHECK_THROWS_AS(report.fraction("zz", "lat"), ArgError);
}

TEST_CASE("alignment report from labels checks sizes") {
    const std::vector<Transcript> ts{{"lat", "p", "r1"}, {"lat", "p", "r2"}};
    const AlignmentReport report = alignment_report_from_labels(ts, {"lat", "other"});
    CHECK(report.n_prompts == 2);
    CHECK(report.fraction("lat", "lat") == doctest::Approx(0.5));
    CHECK_THROWS_AS(alignment_report_from_labels(ts, {"lat"}), ArgError);
    CHECK_THROWS_AS(alignment_report(std::vector<Transcript>{},
                                     train_langid({{"a", {"x"}}, {"b", {"y"}}}, 1, 1, 64, 1)),
                    ArgError);
}

TEST_CASE("split mode scores sentences instead of whole responses") {
    const TwoLangs langs = make_langs(27);
    const LangIdModel model = train_langid({{"lat", sentences(langs.lat, 18, 100)},
                                            {"cjk", sentences(langs.cjk, 19, 100)}});
    // one response that is half one language, half the other
    const std::string mixed = sentences(langs.lat, 20, 1)[0] + sentences(langs.cjk, 21, 1)[0];
    const std::vector<Transcript> ts{{"lat", "p", mixed}};
    const AlignmentReport whole = alignment_report(ts, model, false);
    CHECK(whole.buckets[0].n == 1);
    const AlignmentReport split = alignment_report(ts, model, true);
    CHECK(split.buckets[0].n == 2);
    CHECK(split.fraction("lat", "lat") == doctest::Approx(0.5));
}

TEST_CASE("transcript file round trip") {
    const std::vector<Transcript> ts{{"lat", "q1", "r1"}, {"cjk", "q2", "回答。"}};
    const auto path = std::filesystem::temp_directory_path() / "inscp_test_transcripts.jsonl";
    write_transcripts(path, ts, json{{"config_hash", "x"}});
    const std::vector<Transcript> back = read_transcripts(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].prompt_lang == "lat");
    CHECK(back[0].prompt == "q1");
    CHECK(back[1].response == "回答。");
    std::filesystem::remove(path);
}

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "inscp/jsonio.hpp"
#include "inscp/tokenizer.hpp"

namespace inscp {

struct MCOption {
    std::string text;
    double logprob = 0.0;
    bool is_true = false;
};

struct MCItem {
    std::string task;
    std::string question;
    std::vector<MCOption> options;
};

std::vector<MCItem> read_mc_items(const std::filesystem::path& path);

/// Probability mass on the true options, normalized by all options.
double mc2_score(const MCItem& item);

enum class LenNorm { kChars, kTokens };

/// Accuracy under logprob / option-length argmax; chars counts Unicode code
/// points, tokens requires a vocab.  Ties go to the earlier option.
double lennorm_accuracy(const std::vector<MCItem>& items, LenNorm norm,
                        const Vocab* vocab = nullptr);

struct AccuracyReport {
    double micro = 0.0;
    double macro = 0.0;
    std::vector<std::pair<std::string, double>> per_task;

    json to_json() const;
};

/// Plain argmax accuracy; macro averages the per-task accuracies.
AccuracyReport plain_accuracy(const std::vector<MCItem>& items);

struct SentimentLexicon {
    std::map<std::string, double> entries;
    double alpha = 15.0;

    static SentimentLexicon load_tsv(const std::filesystem::path& path);
};

/// Sum of matched token valences mapped through s / sqrt(s^2 + alpha).
double sentiment_score(const std::string& text, const SentimentLexicon& lex);

struct SentimentReport {
    std::vector<std::pair<std::string, double>> subgroup_means;
    double mean = 0.0;
    double stddev = 0.0;  // population, across subgroup means

    json to_json() const;
};

SentimentReport sentiment_report(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& groups,
    const SentimentLexicon& lex);

/// Port for an external toxicity model; returns a probability in [0, 1].
class ToxicityClassifier {
 public:
    virtual ~ToxicityClassifier() = default;
    virtual double score(const std::string& text) const = 0;
};

/// Test baseline: 1 when any listed keyword occurs (case-insensitive), else 0.
class KeywordToxicity : public ToxicityClassifier {
 public:
    explicit KeywordToxicity(std::vector<std::string> keywords = default_keywords());
    double score(const std::string& text) const override;
    static std::vector<std::string> default_keywords();

 private:
    std::vector<std::string> keywords_;
};

/// Mean classifier probability over the texts; rejects out-of-range scores
/// and reports every failing index at once.
double toxicity_score(const std::vector<std::string>& texts, const ToxicityClassifier& clf);

/// Adapter for externally computed scores: JSONL of {score} (optionally with
/// id), validated to [0, 1], averaged.
double toxicity_mean_from_file(const std::filesystem::path& path);

struct JudgeTurn {
    std::string role;
    std::string content;
};

struct JudgePacket {
    std::vector<JudgeTurn> conversation;
    std::string rubric_text;
    std::optional<std::string> language_rule;
    double score_min = 0.0;
    double score_max = 10.0;

    json to_json() const;
};

/// Human-readable name for a language code ("zh-tw" -> "Traditional
/// Chinese"); unrecognized codes pass through unchanged.
std::string language_name(const std::string& code);

JudgePacket build_judge_packet(const std::vector<JudgeTurn>& conversation,
                               const std::optional<std::string>& target_lang);

/// Arithmetic mean of judge scores, each validated to [0, 10].
double aggregate_judge_scores(const std::vector<double>& scores);

/// One-decimal formatting with round-half-up (6.66 -> "6.7").
std::string format_score_1dp(double value);

/// First option letter found in free text: A-D or full-width variants.
std::optional<char> extract_choice(const std::string& text);

}  // namespace inscp

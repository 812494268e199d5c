#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "inscp/jsonio.hpp"

namespace inscp {

/// Multinomial linear classifier over hashed byte n-gram counts.
struct LangIdModel {
    std::vector<std::string> labels;
    int ngram_min = 1;
    int ngram_max = 3;
    int buckets = 1 << 14;
    std::vector<double> weights;  // [buckets][labels], row-major
    std::vector<double> bias;     // [labels]

    json to_json() const;
    static LangIdModel from_json(const json& j);
    void save(const std::filesystem::path& path) const;
    static LangIdModel load(const std::filesystem::path& path);
};

using LabeledCorpus = std::vector<std::pair<std::string, std::vector<std::string>>>;

/// Softmax regression on hashed n-gram features, full-batch gradient descent.
/// Label order follows the corpus declaration order and breaks ties.
LangIdModel train_langid(const LabeledCorpus& corpora, int ngram_min = 1, int ngram_max = 3,
                         int buckets = 1 << 14, int iterations = 200, double lr = 2.0);

/// Argmax label plus its softmax probability.  Empty or whitespace-only text
/// is "other" with score 0 without consulting the model.
std::pair<std::string, double> classify(const LangIdModel& model, const std::string& text);

struct Transcript {
    std::string prompt_lang;
    std::string prompt;
    std::string response;
};

std::vector<Transcript> read_transcripts(const std::filesystem::path& path);
void write_transcripts(const std::filesystem::path& path, const std::vector<Transcript>& ts,
                       const json& meta);

struct AlignmentBucket {
    std::string prompt_lang;
    long n = 0;  // classified units (responses, or sentences when split)
    std::map<std::string, long> counts;
    std::map<std::string, double> fractions;
};

struct AlignmentReport {
    std::vector<AlignmentBucket> buckets;
    long n_prompts = 0;

    json to_json() const;
    /// Fraction of prompts in `prompt_lang`'s bucket answered in `label`.
    double fraction(const std::string& prompt_lang, const std::string& label) const;
};

/// Groups transcripts by prompt language and classifies each response (or
/// each sentence when split_sentences, splitting on 。．.!?\n).
AlignmentReport alignment_report(const std::vector<Transcript>& transcripts,
                                 const LangIdModel& model, bool split_sentences = false);

/// Same report built from externally supplied labels, one per transcript.
AlignmentReport alignment_report_from_labels(const std::vector<Transcript>& transcripts,
                                             const std::vector<std::string>& labels);

std::vector<std::string> split_sentences(const std::string& text);

}  // namespace inscp

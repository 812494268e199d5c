#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "inscp/jsonio.hpp"
#include "inscp/ppl.hpp"
#include "inscp/trainer.hpp"

namespace inscp {

inline constexpr const char* kToolkitVersion = "0.1.0";

/// One config drives the whole demo pipeline; every stochastic stage draws
/// its seed from `seed` via a named substream.
struct PipelineConfig {
    std::filesystem::path out_dir = "out";
    std::string template_ref = "builtin:llama3";
    uint64_t seed = 0;

    // demo model scale
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 2;
    int context_len = 256;

    // synthetic corpus scale
    int n_words = 48;
    int n_docs = 300;
    int n_base_docs = 320;
    int sentences_per_doc = 6;
    int n_prompts = 200;

    // pretraining budget for the chat-following base model
    int base_epochs = 20;
    double base_lr = 3e-4;

    TrainConfig branch_train;  // shared CP / InsCP budget
    GenConfig gen;
    FilterPolicy filter;

    PipelineConfig();
    void validate() const;
    json to_json() const;
    static PipelineConfig from_json(const json& j);
    std::string hash() const;  // 16 hex digits over the canonical dump
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Meta object embedded in every artifact this pipeline writes.
json artifact_meta(const PipelineConfig& cfg);

struct ReportBundle {
    json report;
    std::filesystem::path report_path;
};

/// Runs synth -> base -> score -> filter -> wrap -> train -> langid ->
/// generate -> report, resuming from the earliest stage whose outputs are
/// missing.  A config change invalidates all existing artifacts.
ReportBundle run_pipeline(const PipelineConfig& cfg, std::ostream& log);

}  // namespace inscp

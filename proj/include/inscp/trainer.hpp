#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "inscp/jsonio.hpp"
#include "inscp/model.hpp"
#include "inscp/rng.hpp"
#include "inscp/template_engine.hpp"

namespace inscp {

struct TrainConfig {
    double lr = 3e-5;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.1;
    int batch_size = 1;
    int epochs = 10;
    uint64_t seed = 0;
    std::optional<double> grad_clip;
    bool shuffle = true;
    bool loss_mean = true;  // per-token mean; false restores the plain sum

    void validate() const;
};

struct GenConfig {
    int max_tokens = 1024;
    double temperature = 0.8;
    double top_p = 0.9;
    uint64_t seed = 42;

    void validate() const;
};

struct StepLog {
    long step = 0;
    int epoch = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
};

using StepCallback = std::function<void(const StepLog&)>;

/// Decoupled-weight-decay adaptive-moment optimizer over the model's tensor
/// list.  Decay applies to matrices only.
class AdamW {
 public:
    AdamW(const ModelDims& dims, const TrainConfig& cfg);
    void step(LMParams& params, LMParams& grads);
    long steps_taken() const { return t_; }

 private:
    TrainConfig cfg_;
    LMParams m_, v_;
    long t_ = 0;
};

/// In-place training over the wrapped corpus: masked next-token objective,
/// one optimizer step per batch, epochs passes over the (shuffled) data.
/// Aborts with diagnostics when the loss goes non-finite.
void train(LMParams& model, const std::vector<WrappedExample>& data, const TrainConfig& cfg,
           const StepCallback& on_step = nullptr);

/// Nucleus candidate set: descending-probability tokens whose inclusive
/// cumulative mass stays within top_p, never empty.  Returned ids are in
/// descending probability order (ties by id).
std::vector<TokenId> nucleus_candidates(const std::vector<double>& probs, double top_p);

/// Temperature + nucleus sampling of one token id from a logits row.
/// Temperature zero is greedy argmax.
TokenId sample_token(const RowVec& logits, double temperature, double top_p, Rng& rng);

/// Render the prompt through the chat template, decode until eot or the
/// token budget, return the assistant content with scaffold stripped.
std::string generate(const LMParams& model, const std::string& prompt, const ChatTemplate& tpl,
                     const Vocab& vocab, const GenConfig& cfg);

TrainConfig parse_train_config(const json& j);
GenConfig parse_gen_config(const json& j);

}  // namespace inscp

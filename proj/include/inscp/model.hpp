#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "inscp/rng.hpp"
#include "inscp/template_engine.hpp"
#include "inscp/tokenizer.hpp"

namespace inscp {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

// Token id that conditions the first prediction of a sequence.  Id 0 is the
// profile's begin-of-text sentinel by construction.
inline constexpr TokenId kScoringBos = 0;

struct ModelDims {
    int vocab_size = 0;
    int d_model = 128;
    int n_layers = 4;
    int n_heads = 4;
    int context_len = 512;

    void validate() const;
    bool operator==(const ModelDims&) const = default;
};

struct LayerParams {
    Vec ln1_g, ln1_b;
    Mat wq, wk, wv, wo;
    Vec bq, bk, bv, bo;
    Vec ln2_g, ln2_b;
    Mat w_fc;
    Vec b_fc;
    Mat w_proj;
    Vec b_proj;
};

/// Dense parameters of the decoder-only LM: pre-norm transformer blocks with
/// learned positional embeddings and an untied output head.
struct LMParams {
    ModelDims dims;
    Mat tok_emb;  // [V, d]
    Mat pos_emb;  // [ctx, d]
    std::vector<LayerParams> layers;
    Vec lnf_g, lnf_b;
    Mat w_out;  // [d, V]
    Vec b_out;  // [V]  (hand-settable logits when all weights are zero)

    static LMParams init(const ModelDims& dims, Rng& rng, double init_std = 0.02);
    /// All-zero parameters: logits are exactly zero, the next-token
    /// distribution exactly uniform.
    static LMParams zeros(const ModelDims& dims);

    struct TensorRef {
        std::string name;
        double* data;
        size_t size;
        bool decay;  // participates in weight decay
    };
    /// Flat view over every tensor, in checkpoint payload order.
    std::vector<TensorRef> tensors();
    std::vector<TensorRef> tensors() const;
    size_t num_params() const;
};

/// Activations of one transformer block, kept for the backward pass.
struct LayerCache {
    Mat x_in;
    Mat xhat1;
    Vec istd1;
    Mat a;
    Mat q, k, v;
    std::vector<Mat> att;  // per head, rows are softmax over the causal prefix
    Mat att_cat;
    Mat x_mid;
    Mat xhat2;
    Vec istd2;
    Mat b;
    Mat fc_pre;
    Mat fc_act;
};

/// Activations of one forward pass.
struct ForwardCache {
    std::vector<TokenId> input;
    Mat x0;
    std::vector<LayerCache> layers;
    Mat xf_in;
    Mat xhatf;
    Vec istdf;
    Mat logits;
};

/// Logits [S, V] for input ids (positions 0..S-1); S must not exceed the
/// context length.
const Mat& forward(const LMParams& p, std::span<const TokenId> input, ForwardCache& cache);

/// Negative log p(tokens[i] | bos, tokens[0..i-1]) for every i, in nats.
std::vector<double> per_token_nll(const LMParams& p, std::span<const TokenId> tokens);

/// Mean NLL over the mask-true positions of the example (sum reduction when
/// mean=false).  All-false masks are rejected.
double masked_nll(const LMParams& p, const WrappedExample& ex, bool mean = true);

/// masked_nll plus parameter gradients (accumulated into grads, which must
/// share dims with p).  Returns the loss.
double loss_and_grad(const LMParams& p, const WrappedExample& ex, LMParams& grads,
                     bool mean = true);

/// Central-difference verification of loss_and_grad over sampled
/// coordinates; returns the max relative error.
double grad_check(LMParams p, const WrappedExample& ex, double eps, int samples_per_tensor,
                  uint64_t seed);

/// Incremental decoding with per-layer KV caches.
class DecodeState {
 public:
    explicit DecodeState(const LMParams& p);

    /// Consume one token at the next position; returns the logits row.
    /// Throws when the context is exhausted.
    const RowVec& feed(TokenId id);

    int pos() const { return pos_; }
    int capacity() const { return model_->dims.context_len; }

 private:
    const LMParams* model_;
    int pos_ = 0;
    std::vector<Mat> k_cache_, v_cache_;  // per layer [ctx, d], rows 0..pos-1 valid
    RowVec logits_;
};

uint64_t checkpoint_vocab_hash(const Vocab& vocab);

/// Single-file checkpoint: magic, JSON header (dims, vocab hash, config),
/// little-endian float32 payload in tensors() order.
void save_checkpoint(const std::filesystem::path& path, const LMParams& p, uint64_t vocab_hash,
                     const std::string& extra_json = "{}");

LMParams load_checkpoint(const std::filesystem::path& path, uint64_t expected_vocab_hash);

}  // namespace inscp

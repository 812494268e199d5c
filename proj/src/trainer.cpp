#include "inscp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "inscp/error.hpp"

namespace inscp {

void TrainConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be finite and >= 0");
    if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("train: beta1 must be in [0, 1)");
    if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("train: beta2 must be in [0, 1)");
    if (eps <= 0.0) throw ConfigError("train: eps must be > 0");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (grad_clip && *grad_clip <= 0.0) throw ConfigError("train: grad_clip must be > 0");
}

void GenConfig::validate() const {
    if (max_tokens < 1) throw ConfigError("generate: max_tokens must be >= 1");
    if (temperature < 0.0) throw ConfigError("generate: temperature must be >= 0");
    if (!(top_p > 0.0) || top_p > 1.0) throw ConfigError("generate: top_p must be in (0, 1]");
}

AdamW::AdamW(const ModelDims& dims, const TrainConfig& cfg)
    : cfg_(cfg), m_(LMParams::zeros(dims)), v_(LMParams::zeros(dims)) {}

void AdamW::step(LMParams& params, LMParams& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    auto pt = params.tensors();
    auto mt = m_.tensors();
    auto vt = v_.tensors();
    auto gt = grads.tensors();
    for (size_t i = 0; i < pt.size(); ++i) {
        double* p = pt[i].data;
        double* m = mt[i].data;
        double* v = vt[i].data;
        const double* g = gt[i].data;
        const bool decay = pt[i].decay;
        for (size_t k = 0; k < pt[i].size; ++k) {
            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p[k] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps));
            if (decay) p[k] -= cfg_.lr * cfg_.weight_decay * p[k];
        }
    }
}

namespace {

double global_grad_norm(LMParams& grads) {
    double sq = 0.0;
    for (const auto& t : grads.tensors())
        for (size_t k = 0; k < t.size; ++k) sq += t.data[k] * t.data[k];
    return std::sqrt(sq);
}

void scale_grads(LMParams& grads, double s) {
    for (auto& t : grads.tensors())
        for (size_t k = 0; k < t.size; ++k) t.data[k] *= s;
}

void accumulate(LMParams& acc, const LMParams& g) {
    auto at = acc.tensors();
    auto gt = const_cast<LMParams&>(g).tensors();
    for (size_t i = 0; i < at.size(); ++i)
        for (size_t k = 0; k < at[i].size; ++k) at[i].data[k] += gt[i].data[k];
}

}  // namespace

void train(LMParams& model, const std::vector<WrappedExample>& data, const TrainConfig& cfg,
           const StepCallback& on_step) {
    cfg.validate();
    if (data.empty()) throw DataError("train: no training examples");

    AdamW opt(model.dims, cfg);
    Rng rng(cfg.seed);
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), size_t{0});

    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            LMParams grads = LMParams::zeros(model.dims);
            double batch_loss = 0.0;
            for (size_t b = start; b < stop; ++b) {
                const WrappedExample& ex = data[order[b]];
                LMParams g = LMParams::zeros(model.dims);
                const double loss = loss_and_grad(model, ex, g, cfg.loss_mean);
                if (!std::isfinite(loss))
                    throw RuntimeError("train: non-finite loss at step " + std::to_string(step) +
                                       " (doc " + ex.doc_id + ")");
                accumulate(grads, g);
                batch_loss += loss;
            }
            const double inv = 1.0 / static_cast<double>(stop - start);
            scale_grads(grads, inv);
            batch_loss *= inv;

            double gnorm = global_grad_norm(grads);
            if (cfg.grad_clip && gnorm > *cfg.grad_clip) {
                scale_grads(grads, *cfg.grad_clip / gnorm);
                gnorm = *cfg.grad_clip;
            }
            opt.step(model, grads);
            ++step;
            if (on_step) on_step(StepLog{step, epoch, batch_loss, gnorm});
        }
    }
}

std::vector<TokenId> nucleus_candidates(const std::vector<double>& probs, double top_p) {
    std::vector<TokenId> order(probs.size());
    std::iota(order.begin(), order.end(), TokenId{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](TokenId a, TokenId b) { return probs[a] > probs[b]; });
    std::vector<TokenId> keep;
    double cum = 0.0;
    for (TokenId id : order) {
        if (probs[id] <= 0.0) break;  // zero-mass suffix never qualifies
        if (!keep.empty() && cum + probs[id] > top_p) break;
        keep.push_back(id);
        cum += probs[id];
    }
    if (keep.empty()) keep.push_back(order.front());
    return keep;
}

TokenId sample_token(const RowVec& logits, double temperature, double top_p, Rng& rng) {
    const auto n = logits.size();
    if (temperature == 0.0) {
        Eigen::Index best = 0;
        logits.maxCoeff(&best);
        return static_cast<TokenId>(best);
    }
    RowVec scaled = logits / temperature;
    const double mx = scaled.maxCoeff();
    std::vector<double> probs(static_cast<size_t>(n));
    double z = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        probs[static_cast<size_t>(i)] = std::exp(scaled[i] - mx);
        z += probs[static_cast<size_t>(i)];
    }
    for (double& p : probs) p /= z;

    std::vector<TokenId> keep = nucleus_candidates(probs, top_p);
    double mass = 0.0;
    for (TokenId id : keep) mass += probs[static_cast<size_t>(id)];
    double r = rng.uniform() * mass;
    for (TokenId id : keep) {
        r -= probs[static_cast<size_t>(id)];
        if (r <= 0.0) return id;
    }
    return keep.back();
}

std::string generate(const LMParams& model, const std::string& prompt, const ChatTemplate& tpl,
                     const Vocab& vocab, const GenConfig& cfg) {
    cfg.validate();
    const std::string rendered = render_chat_prompt(prompt, tpl);
    const std::vector<TokenId> prompt_ids = encode(rendered, vocab);
    if (static_cast<int>(prompt_ids.size()) + 1 >= model.dims.context_len)
        throw DataError("generate: prompt does not fit in the context window");

    const TokenId eot = vocab.special_id(tpl.eot);
    DecodeState state(model);
    RowVec logits = state.feed(kScoringBos);
    for (TokenId id : prompt_ids) logits = state.feed(id);

    Rng rng(cfg.seed);
    std::vector<TokenId> out;
    for (int i = 0; i < cfg.max_tokens; ++i) {
        const TokenId next = sample_token(logits, cfg.temperature, cfg.top_p, rng);
        if (next == eot) break;
        out.push_back(next);
        if (state.pos() >= state.capacity()) break;
        logits = state.feed(next);
    }
    return decode(out, vocab);
}

TrainConfig parse_train_config(const json& j) {
    TrainConfig cfg;
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "lr") cfg.lr = value.get<double>();
        else if (key == "beta1") cfg.beta1 = value.get<double>();
        else if (key == "beta2") cfg.beta2 = value.get<double>();
        else if (key == "eps") cfg.eps = value.get<double>();
        else if (key == "weight_decay") cfg.weight_decay = value.get<double>();
        else if (key == "batch_size") cfg.batch_size = value.get<int>();
        else if (key == "epochs") cfg.epochs = value.get<int>();
        else if (key == "seed") cfg.seed = value.get<uint64_t>();
        else if (key == "grad_clip") cfg.grad_clip = value.get<double>();
        else if (key == "shuffle") cfg.shuffle = value.get<bool>();
        else if (key == "loss_mean") cfg.loss_mean = value.get<bool>();
        else throw ConfigError("train config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

GenConfig parse_gen_config(const json& j) {
    GenConfig cfg;
    if (!j.is_object()) throw ConfigError("generate config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "max_tokens") cfg.max_tokens = value.get<int>();
        else if (key == "temperature") cfg.temperature = value.get<double>();
        else if (key == "top_p") cfg.top_p = value.get<double>();
        else if (key == "seed") cfg.seed = value.get<uint64_t>();
        else throw ConfigError("generate config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

}  // namespace inscp

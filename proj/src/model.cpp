#include "inscp/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "inscp/error.hpp"
#include "inscp/jsonio.hpp"

namespace inscp {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;

double gelu(double x) { return x * 0.5 * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

}  // namespace

void ModelDims::validate() const {
    if (vocab_size < 2) {
        throw ConfigError("vocab_size must be >= 2");
    }
    if (d_model < 1 || n_layers < 1 || n_heads < 1 || context_len < 2) {
        throw ConfigError("model dims must be positive (context_len >= 2)");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("d_model must be divisible by n_heads");
    }
}

LMParams LMParams::zeros(const ModelDims& dims) {
    dims.validate();
    LMParams p;
    p.dims = dims;
    const int d = dims.d_model;
    const int f = 4 * d;
    p.tok_emb = Mat::Zero(dims.vocab_size, d);
    p.pos_emb = Mat::Zero(dims.context_len, d);
    p.layers.resize(dims.n_layers);
    for (auto& l : p.layers) {
        l.ln1_g = Vec::Zero(d);
        l.ln1_b = Vec::Zero(d);
        l.wq = Mat::Zero(d, d);
        l.wk = Mat::Zero(d, d);
        l.wv = Mat::Zero(d, d);
        l.wo = Mat::Zero(d, d);
        l.bq = Vec::Zero(d);
        l.bk = Vec::Zero(d);
        l.bv = Vec::Zero(d);
        l.bo = Vec::Zero(d);
        l.ln2_g = Vec::Zero(d);
        l.ln2_b = Vec::Zero(d);
        l.w_fc = Mat::Zero(d, f);
        l.b_fc = Vec::Zero(f);
        l.w_proj = Mat::Zero(f, d);
        l.b_proj = Vec::Zero(d);
    }
    p.lnf_g = Vec::Zero(d);
    p.lnf_b = Vec::Zero(d);
    p.w_out = Mat::Zero(d, dims.vocab_size);
    p.b_out = Vec::Zero(dims.vocab_size);
    return p;
}

LMParams LMParams::init(const ModelDims& dims, Rng& rng, double init_std) {
    LMParams p = zeros(dims);
    auto fill = [&](Mat& m, double std) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                m(i, j) = rng.normal(0.0, std);
            }
        }
    };
    fill(p.tok_emb, init_std);
    fill(p.pos_emb, init_std);
    // residual-branch projections get the depth-scaled init
    const double resid_std = init_std / std::sqrt(2.0 * dims.n_layers);
    for (auto& l : p.layers) {
        l.ln1_g.setOnes();
        l.ln2_g.setOnes();
        fill(l.wq, init_std);
        fill(l.wk, init_std);
        fill(l.wv, init_std);
        fill(l.wo, resid_std);
        fill(l.w_fc, init_std);
        fill(l.w_proj, resid_std);
    }
    p.lnf_g.setOnes();
    fill(p.w_out, init_std);
    return p;
}

std::vector<LMParams::TensorRef> LMParams::tensors() {
    std::vector<TensorRef> out;
    auto mat = [&](const std::string& name, Mat& m) {
        out.push_back({name, m.data(), static_cast<size_t>(m.size()), true});
    };
    auto vec = [&](const std::string& name, Vec& v) {
        out.push_back({name, v.data(), static_cast<size_t>(v.size()), false});
    };
    mat("tok_emb", tok_emb);
    mat("pos_emb", pos_emb);
    for (size_t i = 0; i < layers.size(); ++i) {
        auto& l = layers[i];
        std::string pre = "layer." + std::to_string(i) + ".";
        vec(pre + "ln1_g", l.ln1_g);
        vec(pre + "ln1_b", l.ln1_b);
        mat(pre + "wq", l.wq);
        vec(pre + "bq", l.bq);
        mat(pre + "wk", l.wk);
        vec(pre + "bk", l.bk);
        mat(pre + "wv", l.wv);
        vec(pre + "bv", l.bv);
        mat(pre + "wo", l.wo);
        vec(pre + "bo", l.bo);
        vec(pre + "ln2_g", l.ln2_g);
        vec(pre + "ln2_b", l.ln2_b);
        mat(pre + "w_fc", l.w_fc);
        vec(pre + "b_fc", l.b_fc);
        mat(pre + "w_proj", l.w_proj);
        vec(pre + "b_proj", l.b_proj);
    }
    vec("lnf_g", lnf_g);
    vec("lnf_b", lnf_b);
    mat("w_out", w_out);
    vec("b_out", b_out);
    return out;
}

std::vector<LMParams::TensorRef> LMParams::tensors() const {
    return const_cast<LMParams*>(this)->tensors();
}

size_t LMParams::num_params() const {
    size_t n = 0;
    for (const auto& t : tensors()) {
        n += t.size;
    }
    return n;
}

namespace {

// y = LN(x) with per-row statistics; xhat and inv-std cached
void layer_norm(const Mat& x, const Vec& g, const Vec& b, Mat& xhat, Vec& istd, Mat& y) {
    const Eigen::Index s = x.rows();
    const Eigen::Index d = x.cols();
    xhat.resize(s, d);
    istd.resize(s);
    y.resize(s, d);
    for (Eigen::Index i = 0; i < s; ++i) {
        double mean = x.row(i).mean();
        double var = (x.row(i).array() - mean).square().mean();
        double is = 1.0 / std::sqrt(var + kLnEps);
        istd(i) = is;
        xhat.row(i) = ((x.row(i).array() - mean) * is).matrix();
        y.row(i) = (xhat.row(i).array() * g.transpose().array() + b.transpose().array()).matrix();
    }
}

// dy -> dx, accumulating dg/db; consumes the cached xhat/istd
void layer_norm_backward(const Mat& dy, const Mat& xhat, const Vec& istd, const Vec& g, Vec& dg,
                         Vec& db, Mat& dx) {
    const Eigen::Index s = dy.rows();
    const Eigen::Index d = dy.cols();
    dx.resize(s, d);
    for (Eigen::Index i = 0; i < s; ++i) {
        dg.array() += (dy.row(i).array() * xhat.row(i).array()).transpose();
        db.array() += dy.row(i).array().transpose();
        Eigen::ArrayXd dxhat = dy.row(i).array().transpose() * g.array();
        double m1 = dxhat.mean();
        double m2 = (dxhat * xhat.row(i).array().transpose()).mean();
        dx.row(i) =
            (istd(i) * (dxhat - m1 - xhat.row(i).array().transpose() * m2)).matrix().transpose();
    }
    (void)d;
}

}  // namespace

const Mat& forward(const LMParams& p, std::span<const TokenId> input, ForwardCache& cache) {
    const auto& dims = p.dims;
    const Eigen::Index s = static_cast<Eigen::Index>(input.size());
    if (s < 1) {
        throw ArgError("forward over an empty input");
    }
    if (s > dims.context_len) {
        throw DataError("input of " + std::to_string(s) + " tokens exceeds context " +
                        std::to_string(dims.context_len));
    }
    const int d = dims.d_model;
    const int heads = dims.n_heads;
    const int hd = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    cache.input.assign(input.begin(), input.end());
    cache.x0.resize(s, d);
    for (Eigen::Index i = 0; i < s; ++i) {
        TokenId id = input[i];
        if (id < 0 || id >= dims.vocab_size) {
            throw DataError("token id " + std::to_string(id) + " out of range");
        }
        cache.x0.row(i) = p.tok_emb.row(id) + p.pos_emb.row(i);
    }

    cache.layers.resize(dims.n_layers);
    Mat x = cache.x0;
    for (int li = 0; li < dims.n_layers; ++li) {
        const LayerParams& lp = p.layers[li];
        LayerCache& lc = cache.layers[li];
        lc.x_in = x;
        layer_norm(lc.x_in, lp.ln1_g, lp.ln1_b, lc.xhat1, lc.istd1, lc.a);
        lc.q.noalias() = lc.a * lp.wq;
        lc.q.rowwise() += lp.bq.transpose();
        lc.k.noalias() = lc.a * lp.wk;
        lc.k.rowwise() += lp.bk.transpose();
        lc.v.noalias() = lc.a * lp.wv;
        lc.v.rowwise() += lp.bv.transpose();

        lc.att.assign(heads, Mat());
        lc.att_cat.resize(s, d);
        for (int h = 0; h < heads; ++h) {
            auto qh = lc.q.middleCols(h * hd, hd);
            auto kh = lc.k.middleCols(h * hd, hd);
            auto vh = lc.v.middleCols(h * hd, hd);
            Mat& ph = lc.att[h];
            ph = Mat::Zero(s, s);
            for (Eigen::Index i = 0; i < s; ++i) {
                Eigen::ArrayXd scores =
                    (kh.topRows(i + 1) * qh.row(i).transpose()).array() * scale;
                double mx = scores.maxCoeff();
                Eigen::ArrayXd e = (scores - mx).exp();
                ph.row(i).head(i + 1) = (e / e.sum()).matrix().transpose();
            }
            lc.att_cat.middleCols(h * hd, hd).noalias() = ph * vh;
        }
        Mat att_proj;
        att_proj.noalias() = lc.att_cat * lp.wo;
        att_proj.rowwise() += lp.bo.transpose();
        lc.x_mid = lc.x_in + att_proj;

        layer_norm(lc.x_mid, lp.ln2_g, lp.ln2_b, lc.xhat2, lc.istd2, lc.b);
        lc.fc_pre.noalias() = lc.b * lp.w_fc;
        lc.fc_pre.rowwise() += lp.b_fc.transpose();
        lc.fc_act = lc.fc_pre.unaryExpr([](double v) { return gelu(v); });
        Mat mlp_out;
        mlp_out.noalias() = lc.fc_act * lp.w_proj;
        mlp_out.rowwise() += lp.b_proj.transpose();
        x = lc.x_mid + mlp_out;
    }

    cache.xf_in = x;
    Mat lnf_out;
    layer_norm(cache.xf_in, p.lnf_g, p.lnf_b, cache.xhatf, cache.istdf, lnf_out);
    cache.logits.noalias() = lnf_out * p.w_out;
    cache.logits.rowwise() += p.b_out.transpose();
    return cache.logits;
}

namespace {

std::vector<TokenId> scoring_input(std::span<const TokenId> tokens) {
    std::vector<TokenId> input;
    input.reserve(tokens.size());
    input.push_back(kScoringBos);
    // last token is never conditioned on
    input.insert(input.end(), tokens.begin(), tokens.end() - 1);
    return input;
}

double row_nll(const Mat& logits, Eigen::Index row, TokenId target) {
    double mx = logits.row(row).maxCoeff();
    double lse = mx + std::log((logits.row(row).array() - mx).exp().sum());
    return lse - logits(row, target);
}

}  // namespace

std::vector<double> per_token_nll(const LMParams& p, std::span<const TokenId> tokens) {
    if (tokens.empty()) {
        throw DataError("cannot score an empty token sequence");
    }
    const size_t window = static_cast<size_t>(p.dims.context_len);
    std::vector<double> nll;
    nll.reserve(tokens.size());
    ForwardCache cache;
    for (size_t off = 0; off < tokens.size(); off += window) {
        size_t len = std::min(window, tokens.size() - off);
        auto chunk = tokens.subspan(off, len);
        const Mat& logits = forward(p, scoring_input(chunk), cache);
        for (size_t i = 0; i < len; ++i) {
            nll.push_back(row_nll(logits, static_cast<Eigen::Index>(i), chunk[i]));
        }
    }
    return nll;
}

double masked_nll(const LMParams& p, const WrappedExample& ex, bool mean) {
    if (ex.tokens.empty()) {
        throw DataError("example " + ex.doc_id + " has no tokens");
    }
    if (static_cast<int>(ex.tokens.size()) > p.dims.context_len) {
        throw DataError("example " + ex.doc_id + " exceeds the model context");
    }
    size_t n_true = ex.mask_true_count();
    if (n_true == 0) {
        throw DataError("example " + ex.doc_id + " has an all-false loss mask");
    }
    ForwardCache cache;
    const Mat& logits = forward(p, scoring_input(ex.tokens), cache);
    double sum = 0.0;
    for (size_t i = 0; i < ex.tokens.size(); ++i) {
        if (ex.loss_mask[i]) {
            sum += row_nll(logits, static_cast<Eigen::Index>(i), ex.tokens[i]);
        }
    }
    return mean ? sum / static_cast<double>(n_true) : sum;
}

double loss_and_grad(const LMParams& p, const WrappedExample& ex, LMParams& grads, bool mean) {
    if (!(grads.dims == p.dims)) {
        throw ArgError("gradient holder dims mismatch");
    }
    if (static_cast<int>(ex.tokens.size()) > p.dims.context_len) {
        throw DataError("example " + ex.doc_id + " exceeds the model context");
    }
    size_t n_true = ex.mask_true_count();
    if (n_true == 0) {
        throw DataError("example " + ex.doc_id + " has an all-false loss mask");
    }

    ForwardCache cache;
    const Mat& logits = forward(p, scoring_input(ex.tokens), cache);
    const Eigen::Index s = logits.rows();
    const int d = p.dims.d_model;
    const int heads = p.dims.n_heads;
    const int hd = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const double inv_n = mean ? 1.0 / static_cast<double>(n_true) : 1.0;

    double loss_sum = 0.0;
    Mat dlogits = Mat::Zero(s, p.dims.vocab_size);
    for (Eigen::Index i = 0; i < s; ++i) {
        if (!ex.loss_mask[static_cast<size_t>(i)]) {
            continue;
        }
        TokenId target = ex.tokens[static_cast<size_t>(i)];
        double mx = logits.row(i).maxCoeff();
        Eigen::ArrayXd e = (logits.row(i).array() - mx).exp().transpose();
        double z = e.sum();
        loss_sum += mx + std::log(z) - logits(i, target);
        dlogits.row(i) = (e / z).matrix().transpose() * inv_n;
        dlogits(i, target) -= inv_n;
    }

    // output head
    Mat lnf_out(s, d);
    for (Eigen::Index i = 0; i < s; ++i) {
        lnf_out.row(i) = (cache.xhatf.row(i).array() * p.lnf_g.transpose().array() +
                          p.lnf_b.transpose().array()).matrix();
    }
    grads.w_out.noalias() += lnf_out.transpose() * dlogits;
    grads.b_out += dlogits.colwise().sum().transpose();
    Mat d_lnf_out;
    d_lnf_out.noalias() = dlogits * p.w_out.transpose();

    Mat dx;
    layer_norm_backward(d_lnf_out, cache.xhatf, cache.istdf, p.lnf_g, grads.lnf_g, grads.lnf_b,
                        dx);

    for (int li = p.dims.n_layers - 1; li >= 0; --li) {
        const LayerParams& lp = p.layers[li];
        LayerCache& lc = cache.layers[li];
        LayerParams& lg = grads.layers[li];

        // mlp branch
        Mat d_fc_act;
        d_fc_act.noalias() = dx * lp.w_proj.transpose();
        lg.w_proj.noalias() += lc.fc_act.transpose() * dx;
        lg.b_proj += dx.colwise().sum().transpose();
        Mat d_fc_pre =
            (d_fc_act.array() *
             lc.fc_pre.unaryExpr([](double v) { return gelu_grad(v); }).array()).matrix();
        lg.w_fc.noalias() += lc.b.transpose() * d_fc_pre;
        lg.b_fc += d_fc_pre.colwise().sum().transpose();
        Mat db;
        db.noalias() = d_fc_pre * lp.w_fc.transpose();
        Mat dx_mid;
        layer_norm_backward(db, lc.xhat2, lc.istd2, lp.ln2_g, lg.ln2_g, lg.ln2_b, dx_mid);
        dx_mid += dx;  // residual

        // attention branch
        Mat d_att_cat;
        d_att_cat.noalias() = dx_mid * lp.wo.transpose();
        lg.wo.noalias() += lc.att_cat.transpose() * dx_mid;
        lg.bo += dx_mid.colwise().sum().transpose();

        Mat dq = Mat::Zero(s, d), dk = Mat::Zero(s, d), dv = Mat::Zero(s, d);
        for (int h = 0; h < heads; ++h) {
            auto qh = lc.q.middleCols(h * hd, hd);
            auto kh = lc.k.middleCols(h * hd, hd);
            auto vh = lc.v.middleCols(h * hd, hd);
            const Mat& ph = lc.att[h];
            auto d_oh = d_att_cat.middleCols(h * hd, hd);
            Mat dp;
            dp.noalias() = d_oh * vh.transpose();
            dv.middleCols(h * hd, hd).noalias() += ph.transpose() * d_oh;
            // softmax jacobian, rows independent; causal zeros stay zero
            Mat ds(s, s);
            for (Eigen::Index i = 0; i < s; ++i) {
                auto pr = ph.row(i).head(i + 1).array();
                auto dpr = dp.row(i).head(i + 1).array();
                double dot = (pr * dpr).sum();
                ds.row(i).setZero();
                ds.row(i).head(i + 1) = (pr * (dpr - dot)).matrix().transpose() * scale;
            }
            dq.middleCols(h * hd, hd).noalias() += ds * kh;
            dk.middleCols(h * hd, hd).noalias() += ds.transpose() * qh;
        }

        lg.wq.noalias() += lc.a.transpose() * dq;
        lg.bq += dq.colwise().sum().transpose();
        lg.wk.noalias() += lc.a.transpose() * dk;
        lg.bk += dk.colwise().sum().transpose();
        lg.wv.noalias() += lc.a.transpose() * dv;
        lg.bv += dv.colwise().sum().transpose();

        Mat da;
        da.noalias() = dq * lp.wq.transpose();
        da.noalias() += dk * lp.wk.transpose();
        da.noalias() += dv * lp.wv.transpose();

        Mat dx_in;
        layer_norm_backward(da, lc.xhat1, lc.istd1, lp.ln1_g, lg.ln1_g, lg.ln1_b, dx_in);
        dx = dx_in + dx_mid;  // residual into the block input
    }

    for (Eigen::Index i = 0; i < s; ++i) {
        grads.tok_emb.row(cache.input[static_cast<size_t>(i)]) += dx.row(i);
        grads.pos_emb.row(i) += dx.row(i);
    }

    return mean ? loss_sum / static_cast<double>(n_true) : loss_sum;
}

double grad_check(LMParams p, const WrappedExample& ex, double eps, int samples_per_tensor,
                  uint64_t seed) {
    LMParams grads = LMParams::zeros(p.dims);
    loss_and_grad(p, ex, grads);

    auto pt = p.tensors();
    auto gt = grads.tensors();
    Rng rng(seed);
    double max_rel = 0.0;
    for (size_t t = 0; t < pt.size(); ++t) {
        size_t n = pt[t].size;
        for (int k = 0; k < samples_per_tensor; ++k) {
            size_t idx = n <= static_cast<size_t>(samples_per_tensor)
                             ? static_cast<size_t>(k)
                             : static_cast<size_t>(rng.below(n));
            if (idx >= n) {
                break;
            }
            double* slot = pt[t].data + idx;
            double orig = *slot;
            *slot = orig + eps;
            double up = masked_nll(p, ex);
            *slot = orig - eps;
            double down = masked_nll(p, ex);
            *slot = orig;
            double numeric = (up - down) / (2.0 * eps);
            double analytic = gt[t].data[idx];
            double rel = std::abs(numeric - analytic) /
                         std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

DecodeState::DecodeState(const LMParams& p) : model_(&p) {
    const int d = p.dims.d_model;
    k_cache_.assign(p.dims.n_layers, Mat(p.dims.context_len, d));
    v_cache_.assign(p.dims.n_layers, Mat(p.dims.context_len, d));
}

const RowVec& DecodeState::feed(TokenId id) {
    const LMParams& p = *model_;
    const int d = p.dims.d_model;
    const int heads = p.dims.n_heads;
    const int hd = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    if (pos_ >= p.dims.context_len) {
        throw DataError("decode past the model context");
    }
    if (id < 0 || id >= p.dims.vocab_size) {
        throw DataError("token id " + std::to_string(id) + " out of range");
    }

    auto ln_row = [](const RowVec& x, const Vec& g, const Vec& b) {
        double mean = x.mean();
        double var = (x.array() - mean).square().mean();
        double is = 1.0 / std::sqrt(var + kLnEps);
        return RowVec((((x.array() - mean) * is) * g.transpose().array() +
                       b.transpose().array()).matrix());
    };

    RowVec x = p.tok_emb.row(id) + p.pos_emb.row(pos_);
    for (int li = 0; li < p.dims.n_layers; ++li) {
        const LayerParams& lp = p.layers[li];
        RowVec a = ln_row(x, lp.ln1_g, lp.ln1_b);
        RowVec q = a * lp.wq + lp.bq.transpose();
        k_cache_[li].row(pos_) = a * lp.wk + lp.bk.transpose();
        v_cache_[li].row(pos_) = a * lp.wv + lp.bv.transpose();

        RowVec att_cat(d);
        for (int h = 0; h < heads; ++h) {
            auto kh = k_cache_[li].topRows(pos_ + 1).middleCols(h * hd, hd);
            auto vh = v_cache_[li].topRows(pos_ + 1).middleCols(h * hd, hd);
            Eigen::ArrayXd scores = (kh * q.middleCols(h * hd, hd).transpose()).array() * scale;
            double mx = scores.maxCoeff();
            Eigen::ArrayXd e = (scores - mx).exp();
            Eigen::VectorXd w = (e / e.sum()).matrix();
            att_cat.middleCols(h * hd, hd) = w.transpose() * vh;
        }
        x += att_cat * lp.wo + lp.bo.transpose();

        RowVec b = ln_row(x, lp.ln2_g, lp.ln2_b);
        RowVec fc = b * lp.w_fc + lp.b_fc.transpose();
        fc = fc.unaryExpr([](double v) { return gelu(v); });
        x += fc * lp.w_proj + lp.b_proj.transpose();
    }
    RowVec xf = ln_row(x, p.lnf_g, p.lnf_b);
    logits_ = xf * p.w_out + p.b_out.transpose();
    ++pos_;
    return logits_;
}

uint64_t checkpoint_vocab_hash(const Vocab& vocab) { return vocab.hash(); }

namespace {

constexpr char kMagic[9] = "INSCP001";

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const LMParams& p, uint64_t vocab_hash,
                     const std::string& extra_json) {
    json header;
    header["format"] = 1;
    header["dims"] = {{"vocab_size", p.dims.vocab_size},   {"d_model", p.dims.d_model},
                      {"n_layers", p.dims.n_layers},       {"n_heads", p.dims.n_heads},
                      {"context_len", p.dims.context_len}};
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(vocab_hash));
    header["vocab_hash"] = hex;
    header["config"] = parse_strict(extra_json, "checkpoint extra");

    std::string head = header.dump();
    std::string payload;
    for (const auto& t : p.tensors()) {
        for (size_t i = 0; i < t.size; ++i) {
            float f = static_cast<float>(t.data[i]);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            char le[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                          static_cast<char>((bits >> 16) & 0xff),
                          static_cast<char>((bits >> 24) & 0xff)};
            payload.append(le, 4);
        }
    }
    std::string blob;
    blob.reserve(8 + 4 + head.size() + payload.size());
    blob.append(kMagic, 8);
    uint32_t hlen = static_cast<uint32_t>(head.size());
    char hl[4] = {static_cast<char>(hlen & 0xff), static_cast<char>((hlen >> 8) & 0xff),
                  static_cast<char>((hlen >> 16) & 0xff), static_cast<char>((hlen >> 24) & 0xff)};
    blob.append(hl, 4);
    blob += head;
    blob += payload;
    write_file_atomic(path, blob);
}

LMParams load_checkpoint(const std::filesystem::path& path, uint64_t expected_vocab_hash) {
    std::string blob = read_file(path);
    if (blob.size() < 12 || blob.compare(0, 8, kMagic, 8) != 0) {
        throw DataError(path.string() + ": not a checkpoint file");
    }
    uint32_t hlen = static_cast<uint8_t>(blob[8]) | (static_cast<uint8_t>(blob[9]) << 8) |
                    (static_cast<uint8_t>(blob[10]) << 16) |
                    (static_cast<uint8_t>(blob[11]) << 24);
    if (blob.size() < 12 + hlen) {
        throw DataError(path.string() + ": truncated checkpoint header");
    }
    json header = json::parse(blob.substr(12, hlen));
    ModelDims dims;
    dims.vocab_size = header.at("dims").at("vocab_size").get<int>();
    dims.d_model = header.at("dims").at("d_model").get<int>();
    dims.n_layers = header.at("dims").at("n_layers").get<int>();
    dims.n_heads = header.at("dims").at("n_heads").get<int>();
    dims.context_len = header.at("dims").at("context_len").get<int>();

    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(expected_vocab_hash));
    if (expected_vocab_hash != 0 && header.at("vocab_hash").get<std::string>() != hex) {
        throw DataError(path.string() + ": checkpoint vocab hash " +
                        header.at("vocab_hash").get<std::string>() +
                        " does not match the active vocab " + hex);
    }

    LMParams p = LMParams::zeros(dims);
    size_t off = 12 + hlen;
    for (auto& t : p.tensors()) {
        size_t bytes = t.size * 4;
        if (blob.size() < off + bytes) {
            throw DataError(path.string() + ": truncated checkpoint payload at " + t.name);
        }
        for (size_t i = 0; i < t.size; ++i) {
            uint32_t bits = static_cast<uint8_t>(blob[off + 4 * i]) |
                            (static_cast<uint8_t>(blob[off + 4 * i + 1]) << 8) |
                            (static_cast<uint8_t>(blob[off + 4 * i + 2]) << 16) |
                            (static_cast<uint8_t>(blob[off + 4 * i + 3]) << 24);
            float f;
            std::memcpy(&f, &bits, 4);
            t.data[i] = static_cast<double>(f);
        }
        off += bytes;
    }
    if (off != blob.size()) {
        throw DataError(path.string() + ": trailing bytes in checkpoint payload");
    }
    return p;
}

}  // namespace inscp

#pragma once

// Template implementation for encoder.hpp; include that header instead.

#include <algorithm>
#include <numeric>

namespace cids::encoder {

namespace detail {

constexpr double kLayerNormEps = 1e-5;

template <typename S>
S gelu(S x) {
    return S(0.5) * x * (S(1) + std::erf(x * S(M_SQRT1_2)));
}

template <typename S>
S gelu_grad(S x) {
    const S cdf = S(0.5) * (S(1) + std::erf(x * S(M_SQRT1_2)));
    const S pdf = std::exp(S(-0.5) * x * x) * S(0.3989422804014327);  // 1/sqrt(2*pi)
    return cdf + x * pdf;
}

// y = x * W^T + b, applied row-wise.
template <typename S>
void affine(const Mat<S>& x, const Mat<S>& W, const Vec<S>& b, Mat<S>& y) {
    y.noalias() = x * W.transpose();
    y.rowwise() += b.transpose();
}

template <typename S>
void layer_norm_forward(const Mat<S>& x, const Vec<S>& g, const Vec<S>& b, Mat<S>& xhat, Vec<S>& inv_std,
                        Mat<S>& y) {
    const Eigen::Index rows = x.rows(), d = x.cols();
    xhat.resize(rows, d);
    y.resize(rows, d);
    inv_std.resize(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const S mean = x.row(r).mean();
        const S var = (x.row(r).array() - mean).square().mean();
        const S s = S(1) / std::sqrt(var + S(kLayerNormEps));
        inv_std(r) = s;
        xhat.row(r) = (x.row(r).array() - mean) * s;
        y.row(r) = xhat.row(r).array() * g.transpose().array() + b.transpose().array();
    }
}

template <typename S>
void layer_norm_backward(const Mat<S>& dy, const Mat<S>& xhat, const Vec<S>& inv_std, const Vec<S>& g,
                         Vec<S>& dg, Vec<S>& db, Mat<S>& dx) {
    const Eigen::Index rows = dy.rows(), d = dy.cols();
    dx.resize(rows, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
        dg.array() += dy.row(r).transpose().array() * xhat.row(r).transpose().array();
        db += dy.row(r).transpose();
        Eigen::Array<S, 1, Eigen::Dynamic> dxhat = dy.row(r).array() * g.transpose().array();
        const S m1 = dxhat.mean();
        const S m2 = (dxhat * xhat.row(r).array()).mean();
        dx.row(r) = inv_std(r) * (dxhat - m1 - xhat.row(r).array() * m2);
    }
}

// Inverted dropout mask; entries are 0 or 1/(1-p).
template <typename S>
void fill_dropout(Mat<S>& mask, Eigen::Index rows, Eigen::Index cols, double p, std::mt19937_64& rng) {
    mask.resize(rows, cols);
    std::bernoulli_distribution keep(1.0 - p);
    const S scale = S(1.0 / (1.0 - p));
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) mask(r, c) = keep(rng) ? scale : S(0);
}

}  // namespace detail

inline void EncoderConfig::validate() const {
    if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
    if (d_model < 1 || n_heads < 1 || d_ff < 1) throw ConfigError("model dimensions must be positive");
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
    if (max_len < 2) throw ConfigError("max_len must be >= 2");
    if (vocab_size < 1) throw ConfigError("vocab_size must be set");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

inline void TrainConfig::validate() const {
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("moment coefficients must be in [0, 1)");
    if (encoder_lr_scale < 0.0) throw ConfigError("encoder_lr_scale must be >= 0");
}

template <typename S>
int ClassifierHeadT<S>::label_index(const std::string& label) const {
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return static_cast<int>(i);
    throw ConfigError("label '" + label + "' is not in the head registry");
}

inline Batch make_batch(const std::vector<textenc::EncodedFlow>& flows, size_t begin, size_t count) {
    Batch b;
    if (count == 0 || begin + count > flows.size()) throw ConfigError("bad batch bounds");
    b.B = static_cast<int>(count);
    b.L = static_cast<int>(flows[begin].token_ids.size());
    b.ids.reserve(count * static_cast<size_t>(b.L));
    b.mask.reserve(count * static_cast<size_t>(b.L));
    for (size_t i = begin; i < begin + count; ++i) {
        const auto& f = flows[i];
        if (static_cast<int>(f.token_ids.size()) != b.L)
            throw Error(errc::data, "flows in a batch must share max_len");
        b.ids.insert(b.ids.end(), f.token_ids.begin(), f.token_ids.end());
        b.mask.insert(b.mask.end(), f.attention_mask.begin(), f.attention_mask.end());
    }
    return b;
}

template <typename S>
EncoderModelT<S> init_encoder(const EncoderConfig& cfg, uint64_t seed) {
    cfg.validate();
    EncoderModelT<S> m;
    m.cfg = cfg;
    auto rng = make_rng(seed, "encoder-init");
    std::normal_distribution<double> emb_dist(0.0, 0.02);
    auto fill_normal = [&](Mat<S>& t, Eigen::Index r, Eigen::Index c) {
        t.resize(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) t(i, j) = S(emb_dist(rng));
    };
    // scaled-uniform init, gain from layer width
    auto fill_xavier = [&](Mat<S>& t, Eigen::Index out, Eigen::Index in) {
        const double a = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-a, a);
        t.resize(out, in);
        for (Eigen::Index i = 0; i < out; ++i)
            for (Eigen::Index j = 0; j < in; ++j) t(i, j) = S(dist(rng));
    };

    fill_normal(m.tok_emb, cfg.vocab_size, cfg.d_model);
    fill_normal(m.pos_emb, cfg.max_len, cfg.d_model);
    m.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& L : m.layers) {
        fill_xavier(L.Wq, cfg.d_model, cfg.d_model);
        fill_xavier(L.Wk, cfg.d_model, cfg.d_model);
        fill_xavier(L.Wv, cfg.d_model, cfg.d_model);
        fill_xavier(L.Wo, cfg.d_model, cfg.d_model);
        fill_xavier(L.W1, cfg.d_ff, cfg.d_model);
        fill_xavier(L.W2, cfg.d_model, cfg.d_ff);
        L.bq = Vec<S>::Zero(cfg.d_model);
        L.bk = Vec<S>::Zero(cfg.d_model);
        L.bv = Vec<S>::Zero(cfg.d_model);
        L.bo = Vec<S>::Zero(cfg.d_model);
        L.b1 = Vec<S>::Zero(cfg.d_ff);
        L.b2 = Vec<S>::Zero(cfg.d_model);
        L.ln1_g = Vec<S>::Ones(cfg.d_model);
        L.ln1_b = Vec<S>::Zero(cfg.d_model);
        L.ln2_g = Vec<S>::Ones(cfg.d_model);
        L.ln2_b = Vec<S>::Zero(cfg.d_model);
    }
    return m;
}

template <typename S>
ClassifierHeadT<S> init_head(const std::vector<std::string>& labels, int d_model, uint64_t seed) {
    if (labels.empty()) throw ConfigError("head needs at least one label");
    for (size_t i = 0; i < labels.size(); ++i)
        for (size_t j = i + 1; j < labels.size(); ++j)
            if (labels[i] == labels[j]) throw ConfigError("duplicate label '" + labels[i] + "'");
    ClassifierHeadT<S> h;
    h.labels = labels;
    const Eigen::Index C = static_cast<Eigen::Index>(labels.size());
    auto rng = make_rng(seed, "head-init");
    const double a = std::sqrt(6.0 / static_cast<double>(d_model + C));
    std::uniform_real_distribution<double> dist(-a, a);
    h.W.resize(C, d_model);
    for (Eigen::Index i = 0; i < C; ++i)
        for (Eigen::Index j = 0; j < d_model; ++j) h.W(i, j) = S(dist(rng));
    h.b = Vec<S>::Zero(C);
    return h;
}

template <typename To, typename From>
EncoderModelT<To> cast_model(const EncoderModelT<From>& m) {
    EncoderModelT<To> out;
    out.cfg = m.cfg;
    out.tok_emb = m.tok_emb.template cast<To>();
    out.pos_emb = m.pos_emb.template cast<To>();
    out.layers.resize(m.layers.size());
    for (size_t l = 0; l < m.layers.size(); ++l) {
        const auto& a = m.layers[l];
        auto& b = out.layers[l];
        b.Wq = a.Wq.template cast<To>(); b.bq = a.bq.template cast<To>();
        b.Wk = a.Wk.template cast<To>(); b.bk = a.bk.template cast<To>();
        b.Wv = a.Wv.template cast<To>(); b.bv = a.bv.template cast<To>();
        b.Wo = a.Wo.template cast<To>(); b.bo = a.bo.template cast<To>();
        b.W1 = a.W1.template cast<To>(); b.b1 = a.b1.template cast<To>();
        b.W2 = a.W2.template cast<To>(); b.b2 = a.b2.template cast<To>();
        b.ln1_g = a.ln1_g.template cast<To>(); b.ln1_b = a.ln1_b.template cast<To>();
        b.ln2_g = a.ln2_g.template cast<To>(); b.ln2_b = a.ln2_b.template cast<To>();
    }
    return out;
}

template <typename To, typename From>
ClassifierHeadT<To> cast_head(const ClassifierHeadT<From>& h) {
    ClassifierHeadT<To> out;
    out.labels = h.labels;
    out.W = h.W.template cast<To>();
    out.b = h.b.template cast<To>();
    return out;
}

template <typename S>
EncoderModelT<S> zeros_like(const EncoderModelT<S>& m) {
    EncoderModelT<S> z = m;
    visit_params(z, static_cast<ClassifierHeadT<S>*>(nullptr),
                 [](const std::string&, S* p, size_t n) { std::fill(p, p + n, S(0)); });
    return z;
}

template <typename S>
ClassifierHeadT<S> zeros_like(const ClassifierHeadT<S>& h) {
    ClassifierHeadT<S> z = h;
    z.W.setZero();
    z.b.setZero();
    return z;
}

// Encoder stack up to the final hidden states; fills everything in `cache`
// except logits.
template <typename S>
void forward_encoder(const EncoderModelT<S>& model, const Batch& batch, std::mt19937_64* dropout_rng,
                     ForwardCache<S>& cache) {
    const auto& cfg = model.cfg;
    const int B = batch.B, L = batch.L;
    if (L > cfg.max_len) throw Error(errc::data, "sequence length exceeds max_len");
    const int d = cfg.d_model, H = cfg.n_heads, dh = d / H;
    const S inv_sqrt_dh = S(1) / std::sqrt(S(dh));
    const bool training = dropout_rng != nullptr && cfg.dropout > 0.0;
    const S neg_inf = -std::numeric_limits<S>::infinity();

    cache.B = B;
    cache.L = L;
    cache.ids = batch.ids;
    cache.mask = batch.mask;
    const Eigen::Index rows = static_cast<Eigen::Index>(B) * L;

    Mat<S>& x0 = cache.x0;
    x0.resize(rows, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const int32_t id = batch.ids[static_cast<size_t>(r)];
        if (id < 0 || id >= cfg.vocab_size)
            throw Error(errc::data, "token id " + std::to_string(id) + " out of vocab range");
        x0.row(r) = model.tok_emb.row(id) + model.pos_emb.row(r % L);
    }
    if (training) {
        detail::fill_dropout(cache.emb_drop, rows, d, cfg.dropout, *dropout_rng);
        x0.array() *= cache.emb_drop.array();
    } else {
        cache.emb_drop.resize(0, 0);
    }

    cache.layers.resize(model.layers.size());
    const Mat<S>* x = &x0;
    for (size_t l = 0; l < model.layers.size(); ++l) {
        const auto& P = model.layers[l];
        auto& C = cache.layers[l];
        C.x_in = *x;

        detail::affine(C.x_in, P.Wq, P.bq, C.Q);
        detail::affine(C.x_in, P.Wk, P.bk, C.K);
        detail::affine(C.x_in, P.Wv, P.bv, C.V);

        C.ctx.resize(rows, d);
        C.attn.assign(static_cast<size_t>(B) * H, Mat<S>());
        for (int b = 0; b < B; ++b) {
            for (int h = 0; h < H; ++h) {
                auto Qh = C.Q.block(static_cast<Eigen::Index>(b) * L, static_cast<Eigen::Index>(h) * dh, L, dh);
                auto Kh = C.K.block(static_cast<Eigen::Index>(b) * L, static_cast<Eigen::Index>(h) * dh, L, dh);
                auto Vh = C.V.block(static_cast<Eigen::Index>(b) * L, static_cast<Eigen::Index>(h) * dh, L, dh);
                Mat<S> scores = (Qh * Kh.transpose()) * inv_sqrt_dh;
                for (int j = 0; j < L; ++j) {
                    if (!batch.mask[static_cast<size_t>(b) * L + j]) scores.col(j).setConstant(neg_inf);
                }
                Mat<S>& probs = C.attn[static_cast<size_t>(b) * H + h];
                probs.resize(L, L);
                for (int i = 0; i < L; ++i) {
                    const S m = scores.row(i).maxCoeff();
                    probs.row(i) = (scores.row(i).array() - m).exp();
                    probs.row(i) /= probs.row(i).sum();
                }
                C.ctx.block(static_cast<Eigen::Index>(b) * L, static_cast<Eigen::Index>(h) * dh, L, dh)
                    .noalias() = probs * Vh;
            }
        }

        Mat<S> attn_out;
        detail::affine(C.ctx, P.Wo, P.bo, attn_out);
        if (training) {
            detail::fill_dropout(C.drop1, rows, d, cfg.dropout, *dropout_rng);
            attn_out.array() *= C.drop1.array();
        } else {
            C.drop1.resize(0, 0);
        }
        Mat<S> s1 = C.x_in + attn_out;
        detail::layer_norm_forward(s1, P.ln1_g, P.ln1_b, C.x1hat, C.inv_std1, C.x1);

        detail::affine(C.x1, P.W1, P.b1, C.z1);
        C.h = C.z1.unaryExpr([](S v) { return detail::gelu(v); });
        Mat<S> ffn_out;
        detail::affine(C.h, P.W2, P.b2, ffn_out);
        if (training) {
            detail::fill_dropout(C.drop2, rows, d, cfg.dropout, *dropout_rng);
            ffn_out.array() *= C.drop2.array();
        } else {
            C.drop2.resize(0, 0);
        }
        Mat<S> s2 = C.x1 + ffn_out;
        detail::layer_norm_forward(s2, P.ln2_g, P.ln2_b, C.x2hat, C.inv_std2, C.x_out);
        x = &C.x_out;
    }

    cache.emb.resize(B, d);
    for (int b = 0; b < B; ++b) cache.emb.row(b) = x->row(static_cast<Eigen::Index>(b) * L);
}

template <typename S>
void forward(const EncoderModelT<S>& model, const ClassifierHeadT<S>& head, const Batch& batch,
             std::mt19937_64* dropout_rng, ForwardCache<S>& cache) {
    forward_encoder(model, batch, dropout_rng, cache);
    detail::affine(cache.emb, head.W, head.b, cache.logits);
}

template <typename S>
Vec<S> softmax(const Vec<S>& logits) {
    if (logits.size() == 0) throw ConfigError("softmax of empty vector");
    const S m = logits.maxCoeff();
    Vec<S> p = (logits.array() - m).exp();
    p /= p.sum();
    return p;
}

template <typename S>
S cross_entropy(const Mat<S>& logits, const std::vector<int>& targets, const std::vector<S>& sample_weights,
                Mat<S>* dlogits) {
    const Eigen::Index B = logits.rows(), C = logits.cols();
    if (static_cast<Eigen::Index>(targets.size()) != B) throw ConfigError("targets size mismatch");
    S total = 0, wsum = 0;
    if (dlogits) dlogits->resize(B, C);
    for (Eigen::Index i = 0; i < B; ++i) {
        const S w = sample_weights.empty() ? S(1) : sample_weights[static_cast<size_t>(i)];
        const S m = logits.row(i).maxCoeff();
        Eigen::Array<S, 1, Eigen::Dynamic> e = (logits.row(i).array() - m).exp();
        const S z = e.sum();
        const int y = targets[static_cast<size_t>(i)];
        if (y < 0 || y >= C) throw ConfigError("target index out of range");
        total += w * (std::log(z) + m - logits(i, y));
        wsum += w;
        if (dlogits) {
            dlogits->row(i) = (e / z) * w;
            (*dlogits)(i, y) -= w;
        }
    }
    if (wsum <= S(0)) throw ConfigError("sample weights sum to zero");
    if (dlogits) *dlogits /= wsum;
    return total / wsum;
}

template <typename S>
void backward(const EncoderModelT<S>& model, const ClassifierHeadT<S>& head, const ForwardCache<S>& cache,
              const Mat<S>& dlogits, EncoderModelT<S>& grads, ClassifierHeadT<S>& head_grads) {
    const auto& cfg = model.cfg;
    const int B = cache.B, L = cache.L;
    const int d = cfg.d_model, H = cfg.n_heads, dh = d / H;
    const S inv_sqrt_dh = S(1) / std::sqrt(S(dh));
    const Eigen::Index rows = static_cast<Eigen::Index>(B) * L;

    head_grads.W.noalias() += dlogits.transpose() * cache.emb;
    head_grads.b += dlogits.colwise().sum().transpose();
    Mat<S> demb = dlogits * head.W;  // B x d

    Mat<S> dcur = Mat<S>::Zero(rows, d);
    for (int b = 0; b < B; ++b) dcur.row(static_cast<Eigen::Index>(b) * L) = demb.row(b);

    for (int l = static_cast<int>(model.layers.size()) - 1; l >= 0; --l) {
        const auto& P = model.layers[static_cast<size_t>(l)];
        const auto& C = cache.layers[static_cast<size_t>(l)];
        auto& G = grads.layers[static_cast<size_t>(l)];

        Mat<S> ds2;
        detail::layer_norm_backward(dcur, C.x2hat, C.inv_std2, P.ln2_g, G.ln2_g, G.ln2_b, ds2);

        Mat<S> dx1 = ds2;
        Mat<S> df = ds2;
        if (C.drop2.size() > 0) df.array() *= C.drop2.array();

        G.W2.noalias() += df.transpose() * C.h;
        G.b2 += df.colwise().sum().transpose();
        Mat<S> dhdn = df * P.W2;
        Mat<S> dz1 = dhdn.array() * C.z1.unaryExpr([](S v) { return detail::gelu_grad(v); }).array();
        G.W1.noalias() += dz1.transpose() * C.x1;
        G.b1 += dz1.colwise().sum().transpose();
        dx1.noalias() += dz1 * P.W1;

        Mat<S> ds1;
        detail::layer_norm_backward(dx1, C.x1hat, C.inv_std1, P.ln1_g, G.ln1_g, G.ln1_b, ds1);

        Mat<S> dxin = ds1;
        Mat<S> dproj = ds1;
        if (C.drop1.size() > 0) dproj.array() *= C.drop1.array();

        G.Wo.noalias() += dproj.transpose() * C.ctx;
        G.bo += dproj.colwise().sum().transpose();
        Mat<S> dctx = dproj * P.Wo;

        Mat<S> dQ = Mat<S>::Zero(rows, d), dK = Mat<S>::Zero(rows, d), dV = Mat<S>::Zero(rows, d);
        for (int b = 0; b < B; ++b) {
            for (int h = 0; h < H; ++h) {
                const Eigen::Index r0 = static_cast<Eigen::Index>(b) * L;
                const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
                const Mat<S>& Pm = C.attn[static_cast<size_t>(b) * H + h];
                auto Qh = C.Q.block(r0, c0, L, dh);
                auto Kh = C.K.block(r0, c0, L, dh);
                auto Vh = C.V.block(r0, c0, L, dh);
                Mat<S> dctx_h = dctx.block(r0, c0, L, dh);
                Mat<S> dP = dctx_h * Vh.transpose();
                dV.block(r0, c0, L, dh).noalias() += Pm.transpose() * dctx_h;
                Vec<S> rowdot = (dP.array() * Pm.array()).rowwise().sum();
                Mat<S> dS = Pm.array() * (dP.colwise() - rowdot).array();
                dQ.block(r0, c0, L, dh).noalias() += (dS * Kh) * inv_sqrt_dh;
                dK.block(r0, c0, L, dh).noalias() += (dS.transpose() * Qh) * inv_sqrt_dh;
            }
        }

        G.Wq.noalias() += dQ.transpose() * C.x_in;
        G.bq += dQ.colwise().sum().transpose();
        G.Wk.noalias() += dK.transpose() * C.x_in;
        G.bk += dK.colwise().sum().transpose();
        G.Wv.noalias() += dV.transpose() * C.x_in;
        G.bv += dV.colwise().sum().transpose();
        dxin.noalias() += dQ * P.Wq;
        dxin.noalias() += dK * P.Wk;
        dxin.noalias() += dV * P.Wv;
        dcur = std::move(dxin);
    }

    if (cache.emb_drop.size() > 0) dcur.array() *= cache.emb_drop.array();
    for (Eigen::Index r = 0; r < rows; ++r) {
        grads.tok_emb.row(cache.ids[static_cast<size_t>(r)]) += dcur.row(r);
        grads.pos_emb.row(r % L) += dcur.row(r);
    }
}

template <typename S>
void adam_step(EncoderModelT<S>& model, ClassifierHeadT<S>& head, EncoderModelT<S>& grads,
               ClassifierHeadT<S>& head_grads, AdamState<S>& state, const TrainConfig& cfg) {
    // global-norm clip over all gradients
    double sq = 0.0;
    visit_params(grads, &head_grads, [&sq](const std::string&, S* p, size_t n) {
        for (size_t i = 0; i < n; ++i) sq += static_cast<double>(p[i]) * static_cast<double>(p[i]);
    });
    const double norm = std::sqrt(sq);
    S scale = S(1);
    if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) scale = S(cfg.clip_norm / norm);

    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

    // parameter and gradient visitation orders are identical by construction
    std::vector<std::pair<std::string, std::pair<S*, size_t>>> gslots;
    visit_params(grads, &head_grads, [&gslots](const std::string& name, S* p, size_t n) {
        gslots.emplace_back(name, std::make_pair(p, n));
    });
    size_t slot = 0;
    visit_params(model, &head, [&](const std::string& name, S* p, size_t n) {
        auto& [gname, g] = gslots[slot++];
        if (gname != name || g.second != n) throw Error(errc::runtime, "gradient layout mismatch");
        auto& [m, v] = state.moments[name];
        if (m.size() != n) {
            m.assign(n, S(0));
            v.assign(n, S(0));
        }
        const double lr = cfg.learning_rate * (name.rfind("head.", 0) == 0 ? 1.0 : cfg.encoder_lr_scale);
        for (size_t i = 0; i < n; ++i) {
            const S gi = g.first[i] * scale;
            m[i] = S(cfg.beta1) * m[i] + S(1.0 - cfg.beta1) * gi;
            v[i] = S(cfg.beta2) * v[i] + S(1.0 - cfg.beta2) * gi * gi;
            const double mhat = static_cast<double>(m[i]) / bc1;
            const double vhat = static_cast<double>(v[i]) / bc2;
            p[i] -= S(lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
            if (!std::isfinite(static_cast<double>(p[i])))
                throw TrainError("non-finite parameter in '" + name + "' after optimizer step " +
                                 std::to_string(state.t));
        }
    });
}

template <typename S>
TrainReport train(EncoderModelT<S>& model, ClassifierHeadT<S>& head,
                  const std::vector<textenc::EncodedFlow>& flows, const std::vector<int>& labels,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (flows.empty()) throw ConfigError("empty training set");
    if (flows.size() != labels.size()) throw ConfigError("flows/labels size mismatch");
    const int C = head.n_classes();
    std::vector<S> class_w(static_cast<size_t>(C), S(1));
    for (const auto& [label, w] : cfg.class_weights) class_w[static_cast<size_t>(head.label_index(label))] = S(w);
    for (int y : labels)
        if (y < 0 || y >= C) throw ConfigError("training label index out of head range");

    EncoderModelT<S> grads = zeros_like(model);
    ClassifierHeadT<S> head_grads = zeros_like(head);
    AdamState<S> adam;
    ForwardCache<S> cache;
    TrainReport report;

    std::vector<size_t> order(flows.size());
    std::iota(order.begin(), order.end(), size_t{0});
    long long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) {
            auto rng = std::mt19937_64(derive_seed(cfg.seed, "shuffle", static_cast<uint64_t>(epoch)));
            std::shuffle(order.begin(), order.end(), rng);
        }
        double loss_sum = 0.0, weight_sum = 0.0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t count = std::min<size_t>(cfg.batch_size, order.size() - start);
            std::vector<textenc::EncodedFlow> bf(count);
            std::vector<int> by(count);
            std::vector<S> bw(count);
            for (size_t i = 0; i < count; ++i) {
                const size_t src = order[start + i];
                bf[i] = flows[src];
                by[i] = labels[src];
                bw[i] = class_w[static_cast<size_t>(labels[src])];
            }
            Batch batch = make_batch(bf, 0, count);
            auto drop_rng = std::mt19937_64(derive_seed(cfg.seed, "dropout", static_cast<uint64_t>(step)));
            forward(model, head, batch, model.cfg.dropout > 0.0 ? &drop_rng : nullptr, cache);
            Mat<S> dlogits;
            const S loss = cross_entropy(cache.logits, by, bw, &dlogits);
            if (!std::isfinite(static_cast<double>(loss)))
                throw TrainError("non-finite training loss at epoch " + std::to_string(epoch) + " step " +
                                 std::to_string(step));
            const double wsum = std::accumulate(bw.begin(), bw.end(), 0.0,
                                                [](double a, S b) { return a + static_cast<double>(b); });
            loss_sum += static_cast<double>(loss) * wsum;
            weight_sum += wsum;

            visit_params(grads, &head_grads, [](const std::string&, S* p, size_t n) { std::fill(p, p + n, S(0)); });
            backward(model, head, cache, dlogits, grads, head_grads);
            adam_step(model, head, grads, head_grads, adam, cfg);
            ++step;
        }
        report.epoch_loss.push_back(loss_sum / weight_sum);
    }
    return report;
}

template <typename S>
Predictions<S> predict(const EncoderModelT<S>& model, const ClassifierHeadT<S>& head,
                       const std::vector<textenc::EncodedFlow>& flows, int batch_size) {
    Predictions<S> out;
    const size_t N = flows.size();
    out.probs.resize(static_cast<Eigen::Index>(N), head.n_classes());
    out.embeddings.resize(static_cast<Eigen::Index>(N), model.cfg.d_model);
    out.argmax.resize(N);
    ForwardCache<S> cache;
    for (size_t start = 0; start < N; start += static_cast<size_t>(batch_size)) {
        const size_t count = std::min<size_t>(batch_size, N - start);
        Batch batch = make_batch(flows, start, count);
        forward(model, head, batch, nullptr, cache);
        for (size_t i = 0; i < count; ++i) {
            const Eigen::Index r = static_cast<Eigen::Index>(start + i);
            Vec<S> p = softmax<S>(cache.logits.row(static_cast<Eigen::Index>(i)).transpose());
            out.probs.row(r) = p.transpose();
            Eigen::Index best;
            p.maxCoeff(&best);
            out.argmax[start + i] = static_cast<int>(best);
            out.embeddings.row(r) = cache.emb.row(static_cast<Eigen::Index>(i));
        }
    }
    return out;
}

template <typename S>
Mat<S> embed(const EncoderModelT<S>& model, const std::vector<textenc::EncodedFlow>& flows, int batch_size) {
    const size_t N = flows.size();
    Mat<S> out(static_cast<Eigen::Index>(N), model.cfg.d_model);
    ForwardCache<S> cache;
    for (size_t start = 0; start < N; start += static_cast<size_t>(batch_size)) {
        const size_t count = std::min<size_t>(batch_size, N - start);
        Batch batch = make_batch(flows, start, count);
        forward_encoder(model, batch, nullptr, cache);
        for (size_t i = 0; i < count; ++i)
            out.row(static_cast<Eigen::Index>(start + i)) = cache.emb.row(static_cast<Eigen::Index>(i));
    }
    return out;
}

template <typename S>
double grad_check(const EncoderModelT<S>& model, const ClassifierHeadT<S>& head, const Batch& batch,
                  const std::vector<int>& labels, const GradCheckOptions& opts) {
    // analytic gradients in the model's own precision
    EncoderModelT<S> grads = zeros_like(model);
    ClassifierHeadT<S> head_grads = zeros_like(head);
    {
        ForwardCache<S> cache;
        forward(model, head, batch, nullptr, cache);
        Mat<S> dlogits;
        cross_entropy(cache.logits, labels, {}, &dlogits);
        backward(model, head, cache, dlogits, grads, head_grads);
    }
    std::map<std::string, std::pair<const S*, size_t>> analytic;
    visit_params(grads, &head_grads, [&analytic](const std::string& name, S* p, size_t n) {
        analytic[name] = {p, n};
    });

    // finite differences on a double copy; rounding in the loss evaluation
    // would otherwise drown the comparison for narrower scalar types
    EncoderModelT<double> md = cast_model<double>(model);
    ClassifierHeadT<double> hd = cast_head<double>(head);
    ForwardCache<double> cache;
    auto loss_at = [&]() {
        forward(md, hd, batch, nullptr, cache);
        return cross_entropy<double>(cache.logits, labels, {}, nullptr);
    };

    auto rng = std::mt19937_64(derive_seed(opts.seed, "grad-check"));
    double max_rel = 0.0;
    visit_params(md, &hd, [&](const std::string& name, double* p, size_t n) {
        const auto& [ap, an] = analytic.at(name);
        if (an != n) throw Error(errc::runtime, "grad layout mismatch in '" + name + "'");
        std::vector<size_t> coords;
        if (n <= static_cast<size_t>(opts.samples_per_tensor)) {
            coords.resize(n);
            std::iota(coords.begin(), coords.end(), size_t{0});
        } else {
            std::uniform_int_distribution<size_t> pick(0, n - 1);
            for (int s = 0; s < opts.samples_per_tensor; ++s) coords.push_back(pick(rng));
        }
        for (size_t i : coords) {
            const double orig = p[i];
            const double h = opts.epsilon * std::max(1.0, std::abs(orig));
            p[i] = orig + h;
            const double lp = loss_at();
            p[i] = orig - h;
            const double lm = loss_at();
            p[i] = orig;
            const double numeric = (lp - lm) / (2.0 * h);
            const double a = static_cast<double>(ap[i]);
            const double denom = std::max({std::abs(a), std::abs(numeric), opts.rel_floor});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    });
    return max_rel;
}

}  // namespace cids::encoder

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "cids/common.hpp"
#include "cids/textenc.hpp"

namespace cids::encoder {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct EncoderConfig {
    int n_layers = 4;
    int d_model = 64;
    int n_heads = 4;
    int d_ff = 128;
    int max_len = 64;
    int vocab_size = 0;
    double dropout = 0.1;

    void validate() const;
    bool operator==(const EncoderConfig&) const = default;
};

template <typename S>
struct LayerParamsT {
    Mat<S> Wq, Wk, Wv, Wo;        // d x d, y = x * W^T + b
    Vec<S> bq, bk, bv, bo;        // d
    Mat<S> W1, W2;                // d_ff x d, d x d_ff
    Vec<S> b1, b2;
    Vec<S> ln1_g, ln1_b, ln2_g, ln2_b;
};

template <typename S>
struct EncoderModelT {
    EncoderConfig cfg;
    Mat<S> tok_emb;  // vocab_size x d_model
    Mat<S> pos_emb;  // max_len x d_model
    std::vector<LayerParamsT<S>> layers;
};

template <typename S>
struct ClassifierHeadT {
    Mat<S> W;  // C x d_model
    Vec<S> b;  // C
    std::vector<std::string> labels;

    int n_classes() const { return static_cast<int>(labels.size()); }
    int label_index(const std::string& label) const;
};

using EncoderModel = EncoderModelT<double>;
using ClassifierHead = ClassifierHeadT<double>;

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 32;
    int epochs = 1;
    uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;                       // <= 0 disables clipping
    std::map<std::string, double> class_weights;  // label -> weight, default 1
    bool shuffle = true;
    double encoder_lr_scale = 1.0;  // lr multiplier for non-head tensors

    void validate() const;
};

struct TrainReport {
    std::vector<double> epoch_loss;
};

// Token-id batch, row r = b * L + t.
struct Batch {
    int B = 0;
    int L = 0;
    std::vector<int32_t> ids;
    std::vector<uint8_t> mask;
};

Batch make_batch(const std::vector<textenc::EncodedFlow>& flows, size_t begin, size_t count);

template <typename S>
EncoderModelT<S> init_encoder(const EncoderConfig& cfg, uint64_t seed);

template <typename S>
ClassifierHeadT<S> init_head(const std::vector<std::string>& labels, int d_model, uint64_t seed);

template <typename To, typename From>
EncoderModelT<To> cast_model(const EncoderModelT<From>& m);
template <typename To, typename From>
ClassifierHeadT<To> cast_head(const ClassifierHeadT<From>& h);

// Enumerates every parameter tensor as a flat array; head tensors carry the
// "head." prefix. The visitation order is fixed and shared by gradients,
// optimizer state and checkpoints.
template <typename S, typename F>
void visit_params(EncoderModelT<S>& model, ClassifierHeadT<S>* head, F&& fn) {
    auto mat = [&fn](const std::string& name, Mat<S>& m) { fn(name, m.data(), static_cast<size_t>(m.size())); };
    auto vec = [&fn](const std::string& name, Vec<S>& v) { fn(name, v.data(), static_cast<size_t>(v.size())); };
    mat("tok_emb", model.tok_emb);
    mat("pos_emb", model.pos_emb);
    for (size_t l = 0; l < model.layers.size(); ++l) {
        auto& L = model.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        mat(p + "Wq", L.Wq); vec(p + "bq", L.bq);
        mat(p + "Wk", L.Wk); vec(p + "bk", L.bk);
        mat(p + "Wv", L.Wv); vec(p + "bv", L.bv);
        mat(p + "Wo", L.Wo); vec(p + "bo", L.bo);
        mat(p + "W1", L.W1); vec(p + "b1", L.b1);
        mat(p + "W2", L.W2); vec(p + "b2", L.b2);
        vec(p + "ln1_g", L.ln1_g); vec(p + "ln1_b", L.ln1_b);
        vec(p + "ln2_g", L.ln2_g); vec(p + "ln2_b", L.ln2_b);
    }
    if (head) {
        mat("head.W", head->W);
        vec("head.b", head->b);
    }
}

// Per-layer activation cache kept for the backward pass.
template <typename S>
struct LayerCache {
    Mat<S> x_in;
    Mat<S> Q, K, V;
    std::vector<Mat<S>> attn;  // B * n_heads entries, each L x L
    Mat<S> ctx;
    Mat<S> drop1;
    Mat<S> x1hat, x1;
    Vec<S> inv_std1;
    Mat<S> z1, h;
    Mat<S> drop2;
    Mat<S> x2hat, x_out;
    Vec<S> inv_std2;
};

template <typename S>
struct ForwardCache {
    int B = 0, L = 0;
    std::vector<int32_t> ids;
    std::vector<uint8_t> mask;
    Mat<S> emb_drop;
    Mat<S> x0;
    std::vector<LayerCache<S>> layers;
    Mat<S> emb;     // B x d, CLS rows of the final layer
    Mat<S> logits;  // B x C
};

// Forward pass. `dropout_rng` non-null enables training-mode dropout.
template <typename S>
void forward(const EncoderModelT<S>& model, const ClassifierHeadT<S>& head, const Batch& batch,
             std::mt19937_64* dropout_rng, ForwardCache<S>& cache);

// Numerically stabilized softmax (max subtraction).
template <typename S>
Vec<S> softmax(const Vec<S>& logits);

// Mean (optionally weighted) cross entropy; writes dL/dlogits for backward.
template <typename S>
S cross_entropy(const Mat<S>& logits, const std::vector<int>& targets, const std::vector<S>& sample_weights,
                Mat<S>* dlogits);

// Reverse-mode pass; accumulates into `grads`/`head_grads` (same shapes as
// the model, zero-initialized by the caller).
template <typename S>
void backward(const EncoderModelT<S>& model, const ClassifierHeadT<S>& head, const ForwardCache<S>& cache,
              const Mat<S>& dlogits, EncoderModelT<S>& grads, ClassifierHeadT<S>& head_grads);

template <typename S>
EncoderModelT<S> zeros_like(const EncoderModelT<S>& m);
template <typename S>
ClassifierHeadT<S> zeros_like(const ClassifierHeadT<S>& h);

template <typename S>
struct AdamState {
    std::map<std::string, std::pair<std::vector<S>, std::vector<S>>> moments;
    long long t = 0;
};

// One optimizer step: global-norm clip, then bias-corrected moment update.
// Tensors outside "head." use learning_rate * encoder_lr_scale.
template <typename S>
void adam_step(EncoderModelT<S>& model, ClassifierHeadT<S>& head, EncoderModelT<S>& grads,
               ClassifierHeadT<S>& head_grads, AdamState<S>& state, const TrainConfig& cfg);

// Mini-batch training of encoder + head with mean cross-entropy. Labels are
// head-class indices aligned with `flows`. Deterministic per cfg.seed.
template <typename S>
TrainReport train(EncoderModelT<S>& model, ClassifierHeadT<S>& head,
                  const std::vector<textenc::EncodedFlow>& flows, const std::vector<int>& labels,
                  const TrainConfig& cfg);

template <typename S>
struct Predictions {
    Mat<S> probs;       // N x C
    std::vector<int> argmax;
    Mat<S> embeddings;  // N x d
};

template <typename S>
Predictions<S> predict(const EncoderModelT<S>& model, const ClassifierHeadT<S>& head,
                       const std::vector<textenc::EncodedFlow>& flows, int batch_size = 64);

// CLS embeddings with dropout disabled.
template <typename S>
Mat<S> embed(const EncoderModelT<S>& model, const std::vector<textenc::EncodedFlow>& flows,
             int batch_size = 64);

struct GradCheckOptions {
    double epsilon = 1e-5;      // finite-difference step (applied in double)
    int samples_per_tensor = 50;
    uint64_t seed = 7;
    // Coordinates where both gradients are below this floor are compared at
    // the floor scale; beneath it central differences are dominated by
    // rounding rather than by the gradient being checked.
    double rel_floor = 1e-2;
};

// Compares analytic gradients against central finite differences computed
// on a double-precision copy of the model; returns the max relative error.
template <typename S>
double grad_check(const EncoderModelT<S>& model, const ClassifierHeadT<S>& head, const Batch& batch,
                  const std::vector<int>& labels, const GradCheckOptions& opts = {});

}  // namespace cids::encoder

#include "cids/encoder_impl.hpp"

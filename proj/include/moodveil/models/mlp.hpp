#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "moodveil/common.hpp"
#include "moodveil/data_model.hpp"
#include "moodveil/rng.hpp"

namespace moodveil::models {

struct MlpHyper {
    int h1 = 128;
    int h2 = 64;
    double dropout = 0.0;  // drop probability on both hidden activations
    double lr = 0.001;
    int batch = 100;
    int epochs = 200;

    std::string name() const {
        return "mlp(h1=" + std::to_string(h1) + ",h2=" + std::to_string(h2) +
               ",dropout=" + fmt_double(dropout) + ")";
    }
};

// input -> h1 -> h2 -> 3 with rectified hidden layers; the h2 activation is
// the representation handed to downstream consumers.
struct MlpModel {
    MlpHyper hyper;
    uint64_t seed = 0;
    Eigen::MatrixXd W1, W2, W3;  // h1 x d, h2 x h1, 3 x h2
    Eigen::VectorXd b1, b2, b3;
    double final_loss = 0.0;
    std::vector<uint64_t> fit_keys;

    Eigen::Index in_dim() const { return W1.cols(); }
};

struct MlpGrads {
    Eigen::MatrixXd W1, W2, W3;
    Eigen::VectorXd b1, b2, b3;
};

// Inverted-dropout masks: entries are 0 or 1/keep, drawn per batch.
struct DropoutMasks {
    Eigen::MatrixXd m1, m2;  // h1 x B, h2 x B
};

inline MlpModel mlp_init(Eigen::Index in_dim, const MlpHyper& hyper, uint64_t seed) {
    if (in_dim <= 0) fail("mlp_init: non-positive input dimension");
    if (hyper.h1 <= 0 || hyper.h2 <= 0) fail("mlp_init: non-positive hidden width");
    if (hyper.dropout < 0.0 || hyper.dropout >= 1.0) fail("mlp_init: dropout must be in [0,1)");
    MlpModel m;
    m.hyper = hyper;
    m.seed = seed;
    Rng rng(substream(seed, "mlp_init"));
    auto fill = [&](Eigen::MatrixXd& W, Eigen::Index rows, Eigen::Index cols) {
        double limit = std::sqrt(6.0 / static_cast<double>(cols));  // fan-in scaled uniform
        W.resize(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) W(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
    };
    fill(m.W1, hyper.h1, in_dim);
    fill(m.W2, hyper.h2, hyper.h1);
    fill(m.W3, data_model::kNumClasses, hyper.h2);
    m.b1 = Eigen::VectorXd::Zero(hyper.h1);
    m.b2 = Eigen::VectorXd::Zero(hyper.h2);
    m.b3 = Eigen::VectorXd::Zero(data_model::kNumClasses);
    return m;
}

inline DropoutMasks draw_dropout_masks(const MlpModel& m, Eigen::Index batch, Rng& rng) {
    DropoutMasks masks;
    double p = m.hyper.dropout;
    double keep = 1.0 - p;
    auto draw = [&](Eigen::MatrixXd& M, Eigen::Index rows) {
        M.resize(rows, batch);
        for (Eigen::Index j = 0; j < batch; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) M(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
    };
    draw(masks.m1, m.hyper.h1);
    draw(masks.m2, m.hyper.h2);
    return masks;
}

namespace detail {

struct MlpActivations {
    Eigen::MatrixXd xb;       // d x B
    Eigen::MatrixXd pre1, a1; // h1 x B (a1 post-relu, post-dropout)
    Eigen::MatrixXd pre2, a2; // h2 x B
    Eigen::MatrixXd probs;    // 3 x B
};

// X has samples as rows; masks == nullptr means no dropout (inference path).
inline MlpActivations mlp_apply(const MlpModel& m, const Eigen::MatrixXd& X,
                                const DropoutMasks* masks) {
    if (X.cols() != m.in_dim()) fail("mlp_apply: dimension mismatch");
    MlpActivations act;
    act.xb = X.transpose();
    const Eigen::Index B = act.xb.cols();
    act.pre1 = (m.W1 * act.xb).colwise() + m.b1;
    act.a1 = act.pre1.cwiseMax(0.0);
    if (masks) act.a1 = act.a1.cwiseProduct(masks->m1);
    act.pre2 = (m.W2 * act.a1).colwise() + m.b2;
    act.a2 = act.pre2.cwiseMax(0.0);
    if (masks) act.a2 = act.a2.cwiseProduct(masks->m2);
    Eigen::MatrixXd logits = (m.W3 * act.a2).colwise() + m.b3;
    // stabilized softmax, columnwise
    act.probs.resize(logits.rows(), B);
    for (Eigen::Index j = 0; j < B; ++j) {
        Eigen::VectorXd col = logits.col(j);
        double mx = col.maxCoeff();
        Eigen::VectorXd e = (col.array() - mx).exp();
        act.probs.col(j) = e / e.sum();
    }
    return act;
}

}  // namespace detail

struct MlpForward {
    Eigen::MatrixXd probs;   // n x 3 (rows aligned with input rows)
    Eigen::MatrixXd z_feat;  // n x h2, post-rectifier penultimate activation
};

enum class MlpMode { Infer, Train };

// Train mode applies fresh inverted-dropout masks from rng; infer mode (or
// dropout 0) is deterministic and mask-free.
inline MlpForward mlp_forward(const MlpModel& m, const Eigen::MatrixXd& X,
                              MlpMode mode = MlpMode::Infer, Rng* rng = nullptr) {
    DropoutMasks masks;
    const DropoutMasks* mp = nullptr;
    if (mode == MlpMode::Train && m.hyper.dropout > 0.0) {
        if (!rng) fail("mlp_forward: train mode with dropout needs an rng");
        masks = draw_dropout_masks(m, X.rows(), *rng);
        mp = &masks;
    }
    auto act = detail::mlp_apply(m, X, mp);
    MlpForward out;
    out.probs = act.probs.transpose();
    out.z_feat = act.a2.transpose();
    return out;
}

inline Eigen::MatrixXd mlp_z_feat(const MlpModel& m, const Eigen::MatrixXd& X) {
    return mlp_forward(m, X).z_feat;
}

inline std::vector<int> mlp_predict(const MlpModel& m, const Eigen::MatrixXd& X) {
    auto fwd = mlp_forward(m, X);
    std::vector<int> out;
    out.reserve(static_cast<size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        Eigen::Index best = 0;
        fwd.probs.row(i).maxCoeff(&best);
        out.push_back(static_cast<int>(best));
    }
    return out;
}

// Mean softmax cross-entropy and parameter gradients for one batch; masks
// select the dropout realization (nullptr = none).
inline double mlp_loss_and_grads(const MlpModel& m, const Eigen::MatrixXd& X,
                                 const std::vector<int>& y, MlpGrads& g,
                                 const DropoutMasks* masks = nullptr) {
    if (static_cast<size_t>(X.rows()) != y.size()) fail("mlp_loss_and_grads: rows/labels mismatch");
    if (X.rows() == 0) fail("mlp_loss_and_grads: empty batch");
    auto act = detail::mlp_apply(m, X, masks);
    const Eigen::Index B = X.rows();

    double loss = 0.0;
    Eigen::MatrixXd dlogits = act.probs;  // 3 x B
    for (Eigen::Index j = 0; j < B; ++j) {
        int label = y[static_cast<size_t>(j)];
        if (label < 0 || label >= data_model::kNumClasses) fail("mlp_loss_and_grads: label outside {0,1,2}");
        loss -= std::log(std::max(act.probs(label, j), 1e-300));
        dlogits(label, j) -= 1.0;
    }
    loss /= static_cast<double>(B);
    dlogits /= static_cast<double>(B);

    g.W3 = dlogits * act.a2.transpose();
    g.b3 = dlogits.rowwise().sum();
    Eigen::MatrixXd da2 = m.W3.transpose() * dlogits;
    if (masks) da2 = da2.cwiseProduct(masks->m2);
    Eigen::MatrixXd dpre2 = da2.cwiseProduct((act.pre2.array() > 0.0).cast<double>().matrix());
    g.W2 = dpre2 * act.a1.transpose();
    g.b2 = dpre2.rowwise().sum();
    Eigen::MatrixXd da1 = m.W2.transpose() * dpre2;
    if (masks) da1 = da1.cwiseProduct(masks->m1);
    Eigen::MatrixXd dpre1 = da1.cwiseProduct((act.pre1.array() > 0.0).cast<double>().matrix());
    g.W1 = dpre1 * act.xb.transpose();
    g.b1 = dpre1.rowwise().sum();
    return loss;
}

inline double mlp_loss(const MlpModel& m, const Eigen::MatrixXd& X, const std::vector<int>& y) {
    auto act = detail::mlp_apply(m, X, nullptr);
    double loss = 0.0;
    for (Eigen::Index j = 0; j < X.rows(); ++j)
        loss -= std::log(std::max(act.probs(y[static_cast<size_t>(j)], j), 1e-300));
    return loss / static_cast<double>(X.rows());
}

// Flat parameter vector in the fixed order W1,b1,W2,b2,W3,b3 (column-major
// within each block); used by gradient checks and serialization.
inline Eigen::VectorXd mlp_pack(const MlpModel& m) {
    Eigen::Index total = m.W1.size() + m.b1.size() + m.W2.size() + m.b2.size() + m.W3.size() + m.b3.size();
    Eigen::VectorXd v(total);
    Eigen::Index at = 0;
    auto put = [&](const auto& block) {
        v.segment(at, block.size()) = Eigen::Map<const Eigen::VectorXd>(block.data(), block.size());
        at += block.size();
    };
    put(m.W1);
    put(m.b1);
    put(m.W2);
    put(m.b2);
    put(m.W3);
    put(m.b3);
    return v;
}

inline void mlp_unpack(MlpModel& m, const Eigen::VectorXd& v) {
    Eigen::Index at = 0;
    auto take = [&](auto& block) {
        if (at + block.size() > v.size()) fail("mlp_unpack: vector too short");
        Eigen::Map<Eigen::VectorXd>(block.data(), block.size()) = v.segment(at, block.size());
        at += block.size();
    };
    take(m.W1);
    take(m.b1);
    take(m.W2);
    take(m.b2);
    take(m.W3);
    take(m.b3);
    if (at != v.size()) fail("mlp_unpack: vector length mismatch");
}

inline Eigen::VectorXd mlp_pack_grads(const MlpGrads& g) {
    Eigen::Index total = g.W1.size() + g.b1.size() + g.W2.size() + g.b2.size() + g.W3.size() + g.b3.size();
    Eigen::VectorXd v(total);
    Eigen::Index at = 0;
    auto put = [&](const auto& block) {
        v.segment(at, block.size()) = Eigen::Map<const Eigen::VectorXd>(block.data(), block.size());
        at += block.size();
    };
    put(g.W1);
    put(g.b1);
    put(g.W2);
    put(g.b2);
    put(g.W3);
    put(g.b3);
    return v;
}

// Adaptive-moment mini-batch training. Deterministic for a given
// (data, hyper, seed): shuffling, initialization, and dropout each consume
// their own named substream.
inline MlpModel train_mlp(const Eigen::MatrixXd& X, const std::vector<int>& y, const MlpHyper& hyper,
                          uint64_t seed, std::vector<uint64_t> fit_keys = {}) {
    if (X.rows() == 0) fail("train_mlp: empty training set");
    if (static_cast<size_t>(X.rows()) != y.size()) fail("train_mlp: rows/labels mismatch");
    if (hyper.batch <= 0) fail("train_mlp: batch size must be positive");
    if (hyper.epochs < 0) fail("train_mlp: negative epoch count");

    MlpModel m = mlp_init(X.cols(), hyper, seed);
    m.fit_keys = std::move(fit_keys);
    const Eigen::Index n = X.rows();
    const Eigen::Index batch = std::min<Eigen::Index>(hyper.batch, n);
    const Eigen::Index num_batches = (n + batch - 1) / batch;

    // first/second moment accumulators, flat
    Eigen::VectorXd theta = mlp_pack(m);
    Eigen::VectorXd mom1 = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd mom2 = Eigen::VectorXd::Zero(theta.size());
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t step = 0;

    std::vector<size_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), size_t{0});
    MlpGrads g;

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        Rng shuffle_rng(substream(seed, "mlp_shuffle", static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        for (Eigen::Index bstart = 0, bi = 0; bstart < n; bstart += batch, ++bi) {
            Eigen::Index bsize = std::min(batch, n - bstart);
            Eigen::MatrixXd Xb(bsize, X.cols());
            std::vector<int> yb(static_cast<size_t>(bsize));
            for (Eigen::Index r = 0; r < bsize; ++r) {
                size_t src = order[static_cast<size_t>(bstart + r)];
                Xb.row(r) = X.row(static_cast<Eigen::Index>(src));
                yb[static_cast<size_t>(r)] = y[src];
            }
            DropoutMasks masks;
            const DropoutMasks* mp = nullptr;
            if (hyper.dropout > 0.0) {
                Rng drop_rng(substream(seed, "mlp_dropout",
                                       static_cast<uint64_t>(epoch) * static_cast<uint64_t>(num_batches) +
                                           static_cast<uint64_t>(bi)));
                masks = draw_dropout_masks(m, bsize, drop_rng);
                mp = &masks;
            }
            double loss = mlp_loss_and_grads(m, Xb, yb, g, mp);
            if (!std::isfinite(loss))
                fail("train_mlp: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                     std::to_string(bi) + " (" + hyper.name() + ", lr=" + fmt_double(hyper.lr) + ")");

            Eigen::VectorXd grad = mlp_pack_grads(g);
            ++step;
            mom1 = beta1 * mom1 + (1.0 - beta1) * grad;
            mom2 = beta2 * mom2 + (1.0 - beta2) * grad.cwiseProduct(grad);
            double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            theta -= (hyper.lr / c1) *
                     (mom1.array() / ((mom2.array() / c2).sqrt() + eps)).matrix();
            mlp_unpack(m, theta);
        }
    }
    m.final_loss = mlp_loss(m, X, y);
    if (!std::isfinite(m.final_loss)) fail("train_mlp: non-finite final loss");
    return m;
}

}  // namespace moodveil::models

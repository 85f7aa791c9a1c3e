#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "moodveil/common.hpp"
#include "moodveil/eval.hpp"
#include "moodveil/models/mlp.hpp"
#include "moodveil/models/serialize.hpp"
#include "moodveil/privacy_audit.hpp"
#include "moodveil/rng.hpp"

namespace moodveil::nimlp {

// The procedure has two phases. Selection: learn a sparse per-user vector
// z_id(u) describing where in representation space user u sits (an L1-penalized
// least-squares fit of per-user offsets). Addition: freeze the feature
// extractor, then retrain only the classification head on inputs
// z_feat + eps (.) z_id(u) with fresh gaussian eps per sample per batch, so the
// head is rewarded for ignoring exactly the identity-dependent dimensions.

// --- selection phase -----------------------------------------------------------

struct IdentityEncoder {
    Eigen::MatrixXd theta;  // U x d; row u is z_id for user u
    double lambda = 0.0;
    double sparsity = 0.0;  // fraction of exact zeros
    std::vector<uint64_t> fit_keys;

    Eigen::Index num_users() const { return theta.rows(); }
    Eigen::Index dim() const { return theta.cols(); }
};

struct EncoderFitOptions {
    double tol = 1e-12;      // stop when no coordinate moves more than this
    int max_iters = 500000;  // iterations are O(U*d), so this is cheap
};

// Proximal-gradient (ISTA) minimization of
//   sum_i ||z_i - theta[user(i)]||^2 + lambda * ||theta||_1
// with a single global step 1/L, L = 2 * max_u n_u. The problem separates per
// (user, dimension) and has an exact soft-threshold solution, which tests use
// as an independent oracle; the iteration here must land on it.
inline IdentityEncoder fit_identity_encoder(const Eigen::MatrixXd& zfeats,
                                            const std::vector<int>& user_of, int num_users,
                                            double lambda, const EncoderFitOptions& opt = {},
                                            std::vector<uint64_t> fit_keys = {}) {
    if (zfeats.rows() == 0) fail("fit_identity_encoder: empty representation matrix");
    if (static_cast<size_t>(zfeats.rows()) != user_of.size())
        fail("fit_identity_encoder: rows/users mismatch");
    if (num_users <= 0) fail("fit_identity_encoder: non-positive user count");
    if (lambda < 0.0) fail("fit_identity_encoder: negative lambda");

    const Eigen::Index U = num_users, d = zfeats.cols();
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(U);
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(U, d);
    for (Eigen::Index i = 0; i < zfeats.rows(); ++i) {
        int u = user_of[static_cast<size_t>(i)];
        if (u < 0 || u >= num_users) fail("fit_identity_encoder: user code out of range");
        counts[u] += 1.0;
        sums.row(u) += zfeats.row(i);
    }

    const double L = 2.0 * counts.maxCoeff();
    const double shrink = lambda / L;
    auto soft = [&](double v) {
        if (v > shrink) return v - shrink;
        if (v < -shrink) return v + shrink;
        return 0.0;
    };

    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(U, d);
    double residual = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opt.max_iters && residual > opt.tol; ++it) {
        residual = 0.0;
        for (Eigen::Index u = 0; u < U; ++u)
            for (Eigen::Index j = 0; j < d; ++j) {
                double grad = 2.0 * (counts[u] * theta(u, j) - sums(u, j));
                double next = soft(theta(u, j) - grad / L);
                residual = std::max(residual, std::abs(next - theta(u, j)));
                theta(u, j) = next;
            }
    }
    if (residual > opt.tol)
        warn("fit_identity_encoder: stopped at residual " + fmt_double(residual) + " after " +
             std::to_string(opt.max_iters) + " iterations (lambda=" + fmt_double(lambda) + ")");

    IdentityEncoder enc;
    enc.theta = std::move(theta);
    enc.lambda = lambda;
    enc.fit_keys = std::move(fit_keys);
    Eigen::Index zeros = 0;
    for (Eigen::Index u = 0; u < U; ++u)
        for (Eigen::Index j = 0; j < d; ++j)
            if (enc.theta(u, j) == 0.0) ++zeros;
    enc.sparsity = static_cast<double>(zeros) / static_cast<double>(U * d);
    return enc;
}

// --- addition phase --------------------------------------------------------------

struct HeadHyper {
    double lr = 0.001;
    int batch = 100;
    int epochs = 200;
};

struct NoisyHead {
    Eigen::MatrixXd W;  // 3 x dim(z_feat)
    Eigen::VectorXd b;
    double sigma = 0.0;
    uint64_t seed = 0;
    double final_loss = 0.0;  // cross-entropy on noise-free inputs after training
    std::vector<uint64_t> fit_keys;
};

namespace detail {

inline NoisyHead head_init(Eigen::Index dim, uint64_t seed) {
    NoisyHead h;
    h.seed = seed;
    Rng rng(substream(seed, "head_init"));
    double limit = std::sqrt(6.0 / static_cast<double>(dim));
    h.W.resize(data_model::kNumClasses, dim);
    for (Eigen::Index j = 0; j < dim; ++j)
        for (Eigen::Index i = 0; i < data_model::kNumClasses; ++i)
            h.W(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
    h.b = Eigen::VectorXd::Zero(data_model::kNumClasses);
    return h;
}

// Mean softmax cross-entropy of the linear head on the given inputs (rows),
// with gradients; shared by both head trainers.
inline double head_loss_and_grads(const NoisyHead& h, const Eigen::MatrixXd& inputs,
                                  const std::vector<int>& y, Eigen::MatrixXd& gW,
                                  Eigen::VectorXd& gb) {
    const Eigen::Index B = inputs.rows();
    Eigen::MatrixXd logits = (h.W * inputs.transpose()).colwise() + h.b;
    double loss = 0.0;
    Eigen::MatrixXd dlogits(logits.rows(), B);
    for (Eigen::Index j = 0; j < B; ++j) {
        Eigen::VectorXd col = logits.col(j);
        double mx = col.maxCoeff();
        Eigen::VectorXd e = (col.array() - mx).exp();
        double s = e.sum();
        int label = y[static_cast<size_t>(j)];
        if (label < 0 || label >= data_model::kNumClasses)
            fail("noisy head: label outside {0,1,2}");
        loss -= (col[label] - mx) - std::log(s);
        dlogits.col(j) = e / s;
        dlogits(label, j) -= 1.0;
    }
    loss /= static_cast<double>(B);
    gW = dlogits * inputs / static_cast<double>(B);
    gb = dlogits.rowwise().sum() / static_cast<double>(B);
    return loss;
}

struct HeadAdam {
    Eigen::MatrixXd mW, vW;
    Eigen::VectorXd mb, vb;
    int64_t step = 0;
    double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    HeadAdam(Eigen::Index rows, Eigen::Index cols, double lr_) : lr(lr_) {
        mW = Eigen::MatrixXd::Zero(rows, cols);
        vW = mW;
        mb = Eigen::VectorXd::Zero(rows);
        vb = mb;
    }
    void update(NoisyHead& h, const Eigen::MatrixXd& gW, const Eigen::VectorXd& gb) {
        ++step;
        mW = beta1 * mW + (1.0 - beta1) * gW;
        vW = beta2 * vW + (1.0 - beta2) * gW.cwiseProduct(gW);
        mb = beta1 * mb + (1.0 - beta1) * gb;
        vb = beta2 * vb + (1.0 - beta2) * gb.cwiseProduct(gb);
        double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        h.W -= (lr / c1) * (mW.array() / ((vW.array() / c2).sqrt() + eps)).matrix();
        h.b -= (lr / c1) * (mb.array() / ((vb.array() / c2).sqrt() + eps)).matrix();
    }
};

}  // namespace detail

// Retrains only the head on z_feat + eps (.) z_id(u), eps ~ N(0, sigma^2) drawn
// fresh for every sample entry in every batch. The base network and the
// encoder are read-only; initialization, shuffling, and noise each consume
// their own named substream, so sigma=0 is bit-identical to retrain_head with
// the same seed.
inline NoisyHead train_noisy_head(const models::MlpModel& base, const IdentityEncoder& encoder,
                                  const Eigen::MatrixXd& X, const std::vector<int>& y,
                                  const std::vector<int>& user_of, double sigma, uint64_t seed,
                                  const HeadHyper& hyper = {},
                                  std::vector<uint64_t> fit_keys = {}) {
    if (X.rows() == 0) fail("train_noisy_head: empty training set");
    if (static_cast<size_t>(X.rows()) != y.size() || y.size() != user_of.size())
        fail("train_noisy_head: rows/labels/users mismatch");
    if (sigma < 0.0) fail("train_noisy_head: negative sigma");
    if (encoder.dim() != base.hyper.h2)
        fail("train_noisy_head: encoder dimension " + std::to_string(encoder.dim()) +
             " does not match the base representation width " + std::to_string(base.hyper.h2));
    for (int u : user_of)
        if (u < 0 || u >= encoder.num_users()) fail("train_noisy_head: user code out of range");
    if (hyper.batch <= 0) fail("train_noisy_head: batch size must be positive");

    const Eigen::MatrixXd z = models::mlp_z_feat(base, X);
    const Eigen::Index n = z.rows(), d = z.cols();
    const Eigen::Index batch = std::min<Eigen::Index>(hyper.batch, n);
    const Eigen::Index num_batches = (n + batch - 1) / batch;

    NoisyHead h = detail::head_init(d, seed);
    h.sigma = sigma;
    h.fit_keys = std::move(fit_keys);
    detail::HeadAdam adam(h.W.rows(), d, hyper.lr);

    std::vector<size_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), size_t{0});
    Eigen::MatrixXd inputs, gW;
    Eigen::VectorXd gb;
    std::vector<int> yb;

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        Rng shuffle_rng(substream(seed, "head_shuffle", static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        for (Eigen::Index bstart = 0, bi = 0; bstart < n; bstart += batch, ++bi) {
            Eigen::Index bsize = std::min(batch, n - bstart);
            inputs.resize(bsize, d);
            yb.resize(static_cast<size_t>(bsize));
            Rng noise_rng(substream(seed, "head_noise",
                                    static_cast<uint64_t>(epoch) * static_cast<uint64_t>(num_batches) +
                                        static_cast<uint64_t>(bi)));
            for (Eigen::Index r = 0; r < bsize; ++r) {
                size_t src = order[static_cast<size_t>(bstart + r)];
                inputs.row(r) = z.row(static_cast<Eigen::Index>(src));
                if (sigma > 0.0) {
                    const auto zid = encoder.theta.row(user_of[src]);
                    for (Eigen::Index j = 0; j < d; ++j)
                        inputs(r, j) += noise_rng.normal() * sigma * zid[j];
                }
                yb[static_cast<size_t>(r)] = y[src];
            }
            double loss = detail::head_loss_and_grads(h, inputs, yb, gW, gb);
            if (!std::isfinite(loss))
                fail("train_noisy_head: non-finite loss at epoch " + std::to_string(epoch) +
                     " batch " + std::to_string(bi) + " (sigma=" + fmt_double(sigma) + ")");
            adam.update(h, gW, gb);
        }
    }
    h.final_loss = detail::head_loss_and_grads(h, z, y, gW, gb);
    if (!std::isfinite(h.final_loss)) fail("train_noisy_head: non-finite final loss");
    return h;
}

// Noise-free reference: the same head trained on plain z_feat. Kept as an
// independent loop with no noise machinery at all, so the sigma=0 reduction
// can be checked against genuinely separate code.
inline NoisyHead retrain_head(const models::MlpModel& base, const Eigen::MatrixXd& X,
                              const std::vector<int>& y, uint64_t seed,
                              const HeadHyper& hyper = {}, std::vector<uint64_t> fit_keys = {}) {
    if (X.rows() == 0) fail("retrain_head: empty training set");
    if (static_cast<size_t>(X.rows()) != y.size()) fail("retrain_head: rows/labels mismatch");
    if (hyper.batch <= 0) fail("retrain_head: batch size must be positive");

    const Eigen::MatrixXd z = models::mlp_z_feat(base, X);
    const Eigen::Index n = z.rows(), d = z.cols();
    const Eigen::Index batch = std::min<Eigen::Index>(hyper.batch, n);

    NoisyHead h = detail::head_init(d, seed);
    h.fit_keys = std::move(fit_keys);
    detail::HeadAdam adam(h.W.rows(), d, hyper.lr);

    std::vector<size_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), size_t{0});
    Eigen::MatrixXd inputs, gW;
    Eigen::VectorXd gb;
    std::vector<int> yb;

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        Rng shuffle_rng(substream(seed, "head_shuffle", static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        for (Eigen::Index bstart = 0; bstart < n; bstart += batch) {
            Eigen::Index bsize = std::min(batch, n - bstart);
            inputs.resize(bsize, d);
            yb.resize(static_cast<size_t>(bsize));
            for (Eigen::Index r = 0; r < bsize; ++r) {
                size_t src = order[static_cast<size_t>(bstart + r)];
                inputs.row(r) = z.row(static_cast<Eigen::Index>(src));
                yb[static_cast<size_t>(r)] = y[src];
            }
            double loss = detail::head_loss_and_grads(h, inputs, yb, gW, gb);
            if (!std::isfinite(loss)) fail("retrain_head: non-finite loss");
            adam.update(h, gW, gb);
        }
    }
    h.final_loss = detail::head_loss_and_grads(h, z, y, gW, gb);
    if (!std::isfinite(h.final_loss)) fail("retrain_head: non-finite final loss");
    return h;
}

// --- inference -------------------------------------------------------------------

// Inference uses the mean of the training-time noise (zero), so predictions are
// deterministic and need no identity input.
inline std::vector<int> nimlp_predict_batch(const models::MlpModel& base, const NoisyHead& head,
                                            const Eigen::MatrixXd& X) {
    Eigen::MatrixXd z = models::mlp_z_feat(base, X);
    if (z.cols() != head.W.cols()) fail("nimlp_predict: head/base dimension mismatch");
    Eigen::MatrixXd logits = (head.W * z.transpose()).colwise() + head.b;
    std::vector<int> out;
    out.reserve(static_cast<size_t>(X.rows()));
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        Eigen::Index best = 0;
        logits.col(j).maxCoeff(&best);
        out.push_back(static_cast<int>(best));
    }
    return out;
}

inline int nimlp_predict(const models::MlpModel& base, const NoisyHead& head,
                         const Eigen::VectorXd& x) {
    return nimlp_predict_batch(base, head, x.transpose())[0];
}

// --- performance/privacy tradeoff ------------------------------------------------

struct TradeoffRatio {
    double value = 0.0;
    bool dominant = false;  // privacy gained with no performance lost
};

// R = (s_base - s_ni) / (t_base - t_ni): probe-accuracy points bought per point
// of mood F1 paid. A non-positive denominator means nothing was paid; if
// privacy still improved the point dominates every finite-R candidate (value
// +inf), otherwise it bought nothing (value 0).
inline TradeoffRatio compute_tradeoff_ratio(double s_base, double s_ni, double t_base,
                                            double t_ni) {
    TradeoffRatio r;
    double gained = s_base - s_ni;
    double paid = t_base - t_ni;
    if (paid > 0.0) {
        r.value = gained / paid;
    } else if (gained > 0.0) {
        r.dominant = true;
        r.value = std::numeric_limits<double>::infinity();
    }
    return r;
}

struct TradeoffPoint {
    double sigma = 0.0;
    double lambda = 0.0;
    double mood_f1 = 0.0;    // t, on the validation fold
    double probe_acc = 0.0;  // s, on validation-fold head inputs
    double ratio = 0.0;
    bool dominant = false;
};

struct ParetoCurve {
    std::vector<TradeoffPoint> points;  // lambda-major grid order
    std::vector<int> pareto;            // indices of non-dominated points
    int selected = -1;                  // highest-ratio point (dominant first)
    double t_base = 0.0, s_base = 0.0;  // plain-model reference values
};

namespace detail {

// Ordering used to pick the sweep winner: dominant points first (lower probe
// accuracy breaking ties), then higher ratio, then lower probe accuracy; grid
// order settles exact ties because the scan keeps the first maximum.
inline bool better_point(const TradeoffPoint& a, const TradeoffPoint& b) {
    if (a.dominant != b.dominant) return a.dominant;
    if (a.dominant) return a.probe_acc < b.probe_acc;
    if (a.ratio != b.ratio) return a.ratio > b.ratio;
    return a.probe_acc < b.probe_acc;
}

// Non-dominated subset under (minimize probe_acc, maximize mood_f1).
inline std::vector<int> pareto_indices(const std::vector<TradeoffPoint>& pts) {
    std::vector<int> out;
    for (size_t i = 0; i < pts.size(); ++i) {
        bool dominated = false;
        for (size_t j = 0; j < pts.size() && !dominated; ++j) {
            if (i == j) continue;
            bool no_worse = pts[j].probe_acc <= pts[i].probe_acc && pts[j].mood_f1 >= pts[i].mood_f1;
            bool strictly = pts[j].probe_acc < pts[i].probe_acc || pts[j].mood_f1 > pts[i].mood_f1;
            if (no_worse && strictly) dominated = true;
        }
        if (!dominated) out.push_back(static_cast<int>(i));
    }
    return out;
}

}  // namespace detail

struct SweepOptions {
    HeadHyper head;
    EncoderFitOptions encoder;
    int probe_folds = 5;
    int jobs = 1;
};

// Train encoder+head for every (lambda, sigma) pair, score each on the
// validation fold — t as mood macro-F1 of the noise-free predictions, s as
// identity-probe accuracy on the head inputs the trained model would see
// (z_feat + eps (.) z_id with fresh audit noise; sigma=0 therefore audits
// plain z_feat) — and rank by the tradeoff ratio against the frozen base.
inline ParetoCurve sigma_sweep(const models::MlpModel& base, const Eigen::MatrixXd& Xtrain,
                               const std::vector<int>& ytrain, const std::vector<int>& utrain,
                               const Eigen::MatrixXd& Xval, const std::vector<int>& yval,
                               const std::vector<int>& uval, int num_users,
                               const std::vector<double>& lambdas,
                               const std::vector<double>& sigmas, uint64_t seed,
                               const SweepOptions& opt = {}) {
    if (lambdas.empty() || sigmas.empty()) fail("sigma_sweep: empty hyperparameter grid");
    if (Xval.rows() == 0) fail("sigma_sweep: empty validation fold");

    const Eigen::MatrixXd ztrain = models::mlp_z_feat(base, Xtrain);
    const Eigen::MatrixXd zval = models::mlp_z_feat(base, Xval);

    ParetoCurve curve;
    curve.t_base = eval::macro_f1(models::mlp_predict(base, Xval), yval);
    curve.s_base =
        audit::train_identity_probe(zval, uval, opt.probe_folds, substream(seed, "sweep_probe_base"))
            .accuracy;

    // encoders depend on lambda only; fit each once
    std::vector<IdentityEncoder> encoders(lambdas.size());
    std::vector<std::exception_ptr> enc_errors(lambdas.size());
    parallel_for(lambdas.size(), opt.jobs, [&](size_t li) {
        try {
            encoders[li] =
                fit_identity_encoder(ztrain, utrain, num_users, lambdas[li], opt.encoder);
        } catch (...) {
            enc_errors[li] = std::current_exception();
        }
    });
    for (auto& e : enc_errors)
        if (e) std::rethrow_exception(e);

    const size_t total = lambdas.size() * sigmas.size();
    curve.points.assign(total, {});
    std::vector<std::exception_ptr> errors(total);
    parallel_for(total, opt.jobs, [&](size_t k) {
        try {
            size_t li = k / sigmas.size(), si = k % sigmas.size();
            double lambda = lambdas[li], sigma = sigmas[si];
            const IdentityEncoder& enc = encoders[li];

            NoisyHead head = train_noisy_head(base, enc, Xtrain, ytrain, utrain, sigma,
                                              substream(seed, "sweep_head", k), opt.head);

            TradeoffPoint pt;
            pt.sigma = sigma;
            pt.lambda = lambda;
            pt.mood_f1 = eval::macro_f1(nimlp_predict_batch(base, head, Xval), yval);

            Eigen::MatrixXd rep = zval;
            if (sigma > 0.0) {
                Rng noise(substream(seed, "audit_noise", k));
                for (Eigen::Index i = 0; i < rep.rows(); ++i) {
                    const auto zid = enc.theta.row(uval[static_cast<size_t>(i)]);
                    for (Eigen::Index j = 0; j < rep.cols(); ++j)
                        rep(i, j) += noise.normal() * sigma * zid[j];
                }
            }
            pt.probe_acc =
                audit::train_identity_probe(rep, uval, opt.probe_folds,
                                            substream(seed, "sweep_probe", k))
                    .accuracy;

            auto r = compute_tradeoff_ratio(curve.s_base, pt.probe_acc, curve.t_base, pt.mood_f1);
            pt.ratio = r.value;
            pt.dominant = r.dominant;
            curve.points[k] = pt;
        } catch (...) {
            errors[k] = std::current_exception();
        }
    });
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    curve.selected = 0;
    for (size_t k = 1; k < total; ++k)
        if (detail::better_point(curve.points[k], curve.points[static_cast<size_t>(curve.selected)]))
            curve.selected = static_cast<int>(k);
    curve.pareto = detail::pareto_indices(curve.points);
    return curve;
}

inline std::string render_sweep_csv(const ParetoCurve& curve) {
    std::string out = "sigma,lambda,mood_f1,probe_acc,ratio,dominant\n";
    for (const auto& p : curve.points)
        out += fmt_double(p.sigma) + "," + fmt_double(p.lambda) + "," + fmt_double(p.mood_f1) +
               "," + fmt_double(p.probe_acc) + "," + fmt_double(p.ratio) + "," +
               (p.dominant ? "1" : "0") + "\n";
    return out;
}

// --- bundled model ---------------------------------------------------------------

struct NimlpBundle {
    models::MlpModel base;
    IdentityEncoder encoder;
    NoisyHead head;
};

inline void save_nimlp(const std::string& path, const NimlpBundle& m) {
    nlohmann::json meta;
    meta["base"] = {{"hyper",
                     {{"h1", m.base.hyper.h1},
                      {"h2", m.base.hyper.h2},
                      {"dropout", m.base.hyper.dropout},
                      {"lr", m.base.hyper.lr},
                      {"batch", m.base.hyper.batch},
                      {"epochs", m.base.hyper.epochs}}},
                    {"seed", hex64(m.base.seed)},
                    {"in_dim", m.base.in_dim()},
                    {"final_loss", m.base.final_loss},
                    {"fit_keys", models::container::keys_to_json(m.base.fit_keys)}};
    meta["encoder"] = {{"users", m.encoder.num_users()},
                       {"dim", m.encoder.dim()},
                       {"lambda", m.encoder.lambda},
                       {"sparsity", m.encoder.sparsity},
                       {"fit_keys", models::container::keys_to_json(m.encoder.fit_keys)}};
    meta["head"] = {{"dim", m.head.W.cols()},
                    {"sigma", m.head.sigma},
                    {"seed", hex64(m.head.seed)},
                    {"final_loss", m.head.final_loss},
                    {"fit_keys", models::container::keys_to_json(m.head.fit_keys)}};

    std::vector<double> values;
    Eigen::VectorXd packed = models::mlp_pack(m.base);
    values.insert(values.end(), packed.data(), packed.data() + packed.size());
    for (Eigen::Index i = 0; i < m.encoder.theta.rows(); ++i)
        for (Eigen::Index j = 0; j < m.encoder.theta.cols(); ++j)
            values.push_back(m.encoder.theta(i, j));
    for (Eigen::Index i = 0; i < m.head.W.rows(); ++i)
        for (Eigen::Index j = 0; j < m.head.W.cols(); ++j) values.push_back(m.head.W(i, j));
    for (Eigen::Index i = 0; i < m.head.b.size(); ++i) values.push_back(m.head.b[i]);
    write_file(path, models::container::assemble(models::ArtifactKind::NimlpBundle, meta, values));
}

inline NimlpBundle load_nimlp(const std::string& path) {
    auto p = models::container::load(path, models::ArtifactKind::NimlpBundle);
    NimlpBundle m;

    auto bj = p.meta.at("base");
    models::MlpHyper h;
    auto hj = bj.at("hyper");
    h.h1 = hj.at("h1").get<int>();
    h.h2 = hj.at("h2").get<int>();
    h.dropout = hj.at("dropout").get<double>();
    h.lr = hj.at("lr").get<double>();
    h.batch = hj.at("batch").get<int>();
    h.epochs = hj.at("epochs").get<int>();
    m.base = models::mlp_init(bj.at("in_dim").get<Eigen::Index>(), h, 0);
    m.base.seed = std::stoull(bj.at("seed").get<std::string>(), nullptr, 16);
    m.base.final_loss = bj.at("final_loss").get<double>();
    m.base.fit_keys = models::container::keys_from_json(bj.at("fit_keys"));

    auto ej = p.meta.at("encoder");
    m.encoder.lambda = ej.at("lambda").get<double>();
    m.encoder.sparsity = ej.at("sparsity").get<double>();
    m.encoder.fit_keys = models::container::keys_from_json(ej.at("fit_keys"));
    Eigen::Index users = ej.at("users").get<Eigen::Index>();
    Eigen::Index edim = ej.at("dim").get<Eigen::Index>();

    auto hj2 = p.meta.at("head");
    m.head.sigma = hj2.at("sigma").get<double>();
    m.head.seed = std::stoull(hj2.at("seed").get<std::string>(), nullptr, 16);
    m.head.final_loss = hj2.at("final_loss").get<double>();
    m.head.fit_keys = models::container::keys_from_json(hj2.at("fit_keys"));
    Eigen::Index hdim = hj2.at("dim").get<Eigen::Index>();

    size_t at = 0;
    auto take = [&]() {
        if (at >= p.values.size()) fail("model container " + path + ": payload too short");
        return p.values[at++];
    };
    Eigen::VectorXd packed(models::mlp_pack(m.base).size());
    for (Eigen::Index i = 0; i < packed.size(); ++i) packed[i] = take();
    models::mlp_unpack(m.base, packed);
    m.encoder.theta.resize(users, edim);
    for (Eigen::Index i = 0; i < users; ++i)
        for (Eigen::Index j = 0; j < edim; ++j) m.encoder.theta(i, j) = take();
    m.head.W.resize(data_model::kNumClasses, hdim);
    m.head.b.resize(data_model::kNumClasses);
    for (Eigen::Index i = 0; i < m.head.W.rows(); ++i)
        for (Eigen::Index j = 0; j < hdim; ++j) m.head.W(i, j) = take();
    for (Eigen::Index i = 0; i < m.head.b.size(); ++i) m.head.b[i] = take();
    if (at != p.values.size()) fail("model container " + path + ": payload too long");
    return m;
}

}  // namespace moodveil::nimlp

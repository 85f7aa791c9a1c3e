#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "moodveil/common.hpp"
#include "moodveil/rng.hpp"

namespace moodveil::audit {

// Leakage is measured as held-out accuracy of a linear identity probe: if a
// representation lets a ridge-regularized multinomial classifier recover who
// produced each row, the representation leaks identity.

struct ProbeResult {
    std::string representation;
    double accuracy = 0.0;   // stratified k-fold cross-validated, pooled
    Eigen::MatrixXi confusion;  // rows = true user, cols = predicted user
    double chance = 0.0;        // 1/U
    int num_users = 0;
    int folds = 0;
};

namespace detail {

// Loss and gradient of the multinomial probe at flat parameters
// theta = [vec(W); b], W is U x d. Ridge penalty on weights only.
inline double probe_loss_and_grad(const Eigen::VectorXd& theta, const Eigen::MatrixXd& X,
                                  const std::vector<int>& ids, int num_users, double l2,
                                  Eigen::VectorXd& grad) {
    const Eigen::Index n = X.rows(), d = X.cols(), U = num_users;
    Eigen::Map<const Eigen::MatrixXd> W(theta.data(), U, d);
    Eigen::Map<const Eigen::VectorXd> b(theta.data() + U * d, U);

    Eigen::MatrixXd logits = (W * X.transpose()).colwise() + b;  // U x n
    double loss = 0.0;
    Eigen::MatrixXd dlogits(U, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::VectorXd col = logits.col(j);
        double mx = col.maxCoeff();
        Eigen::VectorXd e = (col.array() - mx).exp();
        double s = e.sum();
        int u = ids[static_cast<size_t>(j)];
        loss -= (col[u] - mx) - std::log(s);
        dlogits.col(j) = e / s;
        dlogits(u, j) -= 1.0;
    }
    loss /= static_cast<double>(n);
    loss += 0.5 * l2 * W.squaredNorm();

    grad.resize(theta.size());
    Eigen::Map<Eigen::MatrixXd> gW(grad.data(), U, d);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + U * d, U);
    gW = dlogits * X / static_cast<double>(n) + l2 * W;
    gb = dlogits.rowwise().sum() / static_cast<double>(n);
    return loss;
}

// Full-batch gradient descent with Barzilai-Borwein step sizes, globalised the
// way Raydan does it: a step is accepted only when its loss beats the worst of
// the last few accepted losses by an Armijo margin, and is halved otherwise.
// The raw BB iteration is non-monotone and can overshoot by orders of
// magnitude on ill-conditioned near-separable data, after which it spends tens
// of thousands of iterations crawling back; the safeguard removes that mode.
// The objective is smooth and convex, so the stationary point reached is the
// global minimum. On near-separable data the minimiser can have a norm so
// large that the gradient tolerance is unreachable in any useful time, while
// the decision boundary — all a probe measurement cares about — settles much
// earlier, so the fit also stops once the loss has stopped improving.
inline Eigen::VectorXd probe_fit(const Eigen::MatrixXd& X, const std::vector<int>& ids,
                                 int num_users, double l2 = 1e-4, double tol = 1e-6,
                                 int max_iters = 20000) {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(num_users * (X.cols() + 1));
    Eigen::VectorXd grad, cand, cand_grad;
    double loss = probe_loss_and_grad(theta, X, ids, num_users, l2, grad);
    double step = 1.0 / (1.0 + X.squaredNorm() / std::max<double>(1, X.rows()));

    constexpr int kWindow = 10;       // non-monotone acceptance window
    constexpr double kArmijo = 1e-4;  // sufficient-decrease fraction
    constexpr int kCheckEvery = 250;  // plateau checkpoint spacing
    std::array<double, kWindow> recent;
    recent.fill(loss);
    Eigen::VectorXd best_theta = theta;
    double best_loss = loss;
    double plateau_loss = loss;  // best loss at the previous checkpoint

    for (int it = 0; it < max_iters; ++it) {
        if (grad.norm() < tol) return theta;
        if (it > 0 && it % kCheckEvery == 0) {
            if (plateau_loss - best_loss <= 1e-10 * (1.0 + std::abs(plateau_loss)))
                return best_theta;
            plateau_loss = best_loss;
        }

        double reference = *std::max_element(recent.begin(), recent.end());
        double g2 = grad.squaredNorm();
        double cand_loss = 0.0;
        for (int halvings = 0;; ++halvings) {
            cand = theta - step * grad;
            cand_loss = probe_loss_and_grad(cand, X, ids, num_users, l2, cand_grad);
            if (cand_loss <= reference - kArmijo * step * g2) break;
            if (halvings >= 40) return best_loss < loss ? best_theta : theta;  // step underflow
            step *= 0.5;
        }

        Eigen::VectorXd dt = cand - theta;
        Eigen::VectorXd dg = cand_grad - grad;
        theta.swap(cand);
        grad.swap(cand_grad);
        loss = cand_loss;
        recent[static_cast<size_t>(it) % kWindow] = loss;
        if (loss < best_loss) {
            best_loss = loss;
            best_theta = theta;
        }
        double denom = dt.dot(dg);
        if (denom > 0.0 && std::isfinite(denom)) {
            step = std::clamp(dt.squaredNorm() / denom, 1e-12, 1e6);
        } else {
            step = std::clamp(step * 2.0, 1e-12, 1e6);
        }
    }
    warn("identity probe: gradient norm " + fmt_double(grad.norm()) + " after " +
         std::to_string(max_iters) + " iterations, using best iterate");
    return best_theta;
}

struct Standardizer {
    Eigen::RowVectorXd mean, scale;  // scale = 1/std, 0 for constant columns

    static Standardizer fit(const Eigen::MatrixXd& X) {
        Standardizer s;
        s.mean = X.colwise().mean();
        Eigen::RowVectorXd var =
            (X.rowwise() - s.mean).array().square().colwise().sum() / static_cast<double>(X.rows());
        s.scale.resize(var.size());
        for (Eigen::Index j = 0; j < var.size(); ++j)
            s.scale[j] = var[j] > 0.0 ? 1.0 / std::sqrt(var[j]) : 0.0;
        return s;
    }
    Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
        return ((X.rowwise() - mean).array().rowwise() * scale.array()).matrix();
    }
};

}  // namespace detail

// Stratified k-fold cross-validated probe accuracy. Each user's rows are
// shuffled (seeded) and dealt round-robin across folds, so every fold sees
// close to the population's user mix. Features are standardized with
// training-fold statistics only.
inline ProbeResult train_identity_probe(const Eigen::MatrixXd& reps, const std::vector<int>& ids,
                                        int folds = 5, uint64_t seed = 0) {
    const Eigen::Index n = reps.rows();
    if (static_cast<size_t>(n) != ids.size()) fail("train_identity_probe: rows/ids mismatch");
    if (folds < 2) fail("train_identity_probe: need at least 2 folds");
    int num_users = 0;
    for (int u : ids) {
        if (u < 0) fail("train_identity_probe: negative user code");
        num_users = std::max(num_users, u + 1);
    }
    std::vector<int64_t> count(static_cast<size_t>(num_users), 0);
    for (int u : ids) ++count[static_cast<size_t>(u)];
    int64_t present = std::count_if(count.begin(), count.end(), [](int64_t c) { return c > 0; });
    if (present < 2) fail("train_identity_probe: need at least 2 distinct users");
    if (n < num_users) fail("train_identity_probe: fewer rows than users");

    // per-user shuffle, then deal round-robin into folds
    std::vector<int> fold_of(static_cast<size_t>(n), -1);
    Rng rng(substream(seed, "probe_folds"));
    for (int u = 0; u < num_users; ++u) {
        std::vector<size_t> rows;
        for (size_t i = 0; i < ids.size(); ++i)
            if (ids[i] == u) rows.push_back(i);
        rng.shuffle(rows);
        for (size_t i = 0; i < rows.size(); ++i) fold_of[rows[i]] = static_cast<int>(i % folds);
    }

    ProbeResult out;
    out.num_users = num_users;
    out.folds = folds;
    out.chance = 1.0 / static_cast<double>(num_users);
    out.confusion = Eigen::MatrixXi::Zero(num_users, num_users);
    int64_t correct = 0, total = 0;

    for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> train_rows, test_rows;
        for (Eigen::Index i = 0; i < n; ++i)
            (fold_of[static_cast<size_t>(i)] == f ? test_rows : train_rows).push_back(i);
        if (test_rows.empty()) continue;
        if (train_rows.empty()) fail("train_identity_probe: empty training fold");

        Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(train_rows.size()), reps.cols());
        std::vector<int> ytr(train_rows.size());
        for (size_t i = 0; i < train_rows.size(); ++i) {
            Xtr.row(static_cast<Eigen::Index>(i)) = reps.row(train_rows[i]);
            ytr[i] = ids[static_cast<size_t>(train_rows[i])];
        }
        auto std_ = detail::Standardizer::fit(Xtr);
        Eigen::VectorXd theta = detail::probe_fit(std_.apply(Xtr), ytr, num_users);

        Eigen::Map<const Eigen::MatrixXd> W(theta.data(), num_users, reps.cols());
        Eigen::Map<const Eigen::VectorXd> b(theta.data() + num_users * reps.cols(), num_users);
        for (Eigen::Index row : test_rows) {
            Eigen::MatrixXd x = std_.apply(reps.row(row));
            Eigen::VectorXd logits = W * x.transpose() + b;
            Eigen::Index pred = 0;
            logits.maxCoeff(&pred);
            int truth = ids[static_cast<size_t>(row)];
            out.confusion(truth, static_cast<Eigen::Index>(pred)) += 1;
            if (static_cast<int>(pred) == truth) ++correct;
            ++total;
        }
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(total);
    return out;
}

// --- 2-D projections ---------------------------------------------------------

enum class ProjectionMethod { Tsne, Pca };

struct Projection2D {
    Eigen::MatrixXd coords;  // N x 2
    std::string method;      // "tsne" or "pca"
    double perplexity = 0.0;
    uint64_t seed = 0;
    double kl_divergence = 0.0;  // tsne only
};

namespace detail {

struct Affinities {
    Eigen::MatrixXd pcond;  // row i = conditional distribution over j != i
    Eigen::VectorXd beta;   // precision reached by the bandwidth search
};

// Per-point bandwidth search: bisect beta until the conditional distribution's
// entropy hits log(perplexity) within 1e-5 nats. Entropy is monotone
// decreasing in beta, so plain bisection with bracket expansion suffices.
inline Affinities tsne_affinities(const Eigen::MatrixXd& sqdist, double perplexity) {
    const Eigen::Index n = sqdist.rows();
    const double target = std::log(perplexity);
    Affinities out;
    out.pcond = Eigen::MatrixXd::Zero(n, n);
    out.beta = Eigen::VectorXd::Ones(n);
    bool degenerate = false;

    Eigen::VectorXd d2(n - 1), p(n - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index at = 0;
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) d2[at++] = sqdist(i, j);
        double shift = d2.minCoeff();

        auto entropy_at = [&](double beta) {
            p = (-beta * (d2.array() - shift)).exp();
            double s = p.sum();
            double weighted = (p.array() * (d2.array() - shift)).sum();
            p /= s;
            return std::log(s) + beta * weighted / s;
        };

        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        double h = entropy_at(beta);
        for (int it = 0; it < 200 && std::abs(h - target) > 1e-5; ++it) {
            if (h > target) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
            h = entropy_at(beta);
        }
        if (std::abs(h - target) > 1e-5) degenerate = true;
        entropy_at(beta);  // leave p at the accepted beta
        out.beta[i] = beta;
        at = 0;
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) out.pcond(i, j) = p[at++];
    }
    if (degenerate)
        warn("project_2d: bandwidth search could not hit the target entropy for some points "
             "(degenerate neighbourhoods, e.g. duplicated rows); affinities are best-effort");
    return out;
}

inline Projection2D tsne(const Eigen::MatrixXd& X, double perplexity, uint64_t seed) {
    const Eigen::Index n = X.rows();
    // squared pairwise distances via the Gram expansion
    Eigen::VectorXd sq = X.rowwise().squaredNorm();
    Eigen::MatrixXd D2 = (-2.0 * X * X.transpose()).rowwise() + sq.transpose();
    D2.colwise() += sq;
    D2 = D2.cwiseMax(0.0);

    auto aff = tsne_affinities(D2, perplexity);
    Eigen::MatrixXd P = (aff.pcond + aff.pcond.transpose()) / (2.0 * static_cast<double>(n));
    P = P.cwiseMax(1e-12);
    P.diagonal().setZero();

    Rng rng(substream(seed, "tsne_init"));
    Eigen::MatrixXd Y(n, 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < 2; ++j) Y(i, j) = rng.normal() * 1e-2;

    Eigen::MatrixXd inc = Eigen::MatrixXd::Zero(n, 2);
    Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
    // During exaggeration each point is pulled to its neighbourhood mean with
    // coefficient ~ 4*12/N, so steps beyond N/48 overshoot and tear clusters
    // apart; scale the rate with N accordingly.
    const double lr = std::max(2.0, static_cast<double>(n) / 48.0);
    const int iters = 1000, exaggerate_until = 250;
    Eigen::MatrixXd Q, Wt, M, grad;

    for (int it = 0; it < iters; ++it) {
        // student-t weights in the embedding
        Eigen::VectorXd ysq = Y.rowwise().squaredNorm();
        Wt = (-2.0 * Y * Y.transpose()).rowwise() + ysq.transpose();
        Wt.colwise() += ysq;
        Wt = (1.0 + Wt.cwiseMax(0.0).array()).inverse().matrix();
        Wt.diagonal().setZero();
        double z = Wt.sum();
        Q = (Wt / z).cwiseMax(1e-12);
        Q.diagonal().setZero();

        double ex = it < exaggerate_until ? 12.0 : 1.0;
        M = ((ex * P - Q).array() * Wt.array()).matrix();
        Eigen::VectorXd rowsum = M.rowwise().sum();
        grad = 4.0 * (rowsum.asDiagonal() * Y - M * Y);

        // adaptive per-coordinate gains, sign-change heuristic
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < 2; ++j) {
                bool same = (grad(i, j) > 0.0) == (inc(i, j) > 0.0);
                gains(i, j) = same ? std::max(gains(i, j) * 0.8, 0.01) : gains(i, j) + 0.2;
            }
        double momentum = it < exaggerate_until ? 0.5 : 0.8;
        inc = momentum * inc - lr * (gains.array() * grad.array()).matrix();
        Y += inc;
        Eigen::RowVector2d center = Y.colwise().mean();
        Y.rowwise() -= center;
    }

    Projection2D out;
    out.coords = Y;
    out.method = "tsne";
    out.perplexity = perplexity;
    out.seed = seed;
    double kl = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) kl += P(i, j) * std::log(P(i, j) / Q(i, j));
    out.kl_divergence = kl;
    if (!Y.allFinite()) fail("project_2d: tsne produced non-finite coordinates");
    return out;
}

inline Projection2D pca(const Eigen::MatrixXd& X) {
    Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
    Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(std::max<Eigen::Index>(1, X.rows() - 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) fail("project_2d: eigendecomposition failed");
    // eigenvalues ascend; take the top two directions
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(X.cols(), 2);
    V.col(0) = eig.eigenvectors().col(X.cols() - 1);
    if (X.cols() >= 2) V.col(1) = eig.eigenvectors().col(X.cols() - 2);
    // fix the sign convention so output is reproducible across platforms
    for (int j = 0; j < 2; ++j) {
        Eigen::Index mx = 0;
        V.col(j).cwiseAbs().maxCoeff(&mx);
        if (V(mx, j) < 0.0) V.col(j) = -V.col(j);
    }
    Projection2D out;
    out.coords = centered * V;
    out.method = "pca";
    return out;
}

}  // namespace detail

// Exact O(N^2) t-SNE (desk scale) or a PCA fallback. t-SNE follows the
// classic recipe: entropy-calibrated Gaussian affinities, student-t embedding,
// 1000 gradient steps with x12 early exaggeration for the first 250 and
// momentum 0.5 -> 0.8, learning rate 200 with per-coordinate gains.
inline Projection2D project_2d(const Eigen::MatrixXd& reps, ProjectionMethod method,
                               double perplexity = 30.0, uint64_t seed = 0) {
    if (reps.rows() < 2) fail("project_2d: need at least 2 rows");
    if (method == ProjectionMethod::Pca) return detail::pca(reps);
    if (reps.rows() > 5000)
        fail("project_2d: " + std::to_string(reps.rows()) +
             " rows exceeds the exact-tsne limit of 5000; use pca");
    if (!(perplexity >= 2.0 && perplexity < static_cast<double>(reps.rows()) / 3.0))
        fail("project_2d: perplexity must lie in [2, N/3); got " + fmt_double(perplexity) +
             " with N=" + std::to_string(reps.rows()));
    return detail::tsne(reps, perplexity, seed);
}

// --- audit table ---------------------------------------------------------------

struct AuditInput {
    std::string representation;  // e.g. "raw", "mlp_zfeat", "nimlp_head_inputs"
    std::string modality;        // e.g. "text", "apps", "both"
    Eigen::MatrixXd reps;
};

struct AuditEntry {
    std::string representation;
    std::string modality;
    double probe_acc = 0.0;
};

// Probe every representation/modality cell with the same protocol. Rows keep
// the input order; probes are independent and may run in parallel.
inline std::vector<AuditEntry> audit_suite(const std::vector<AuditInput>& inputs,
                                           const std::vector<int>& ids, int folds = 5,
                                           uint64_t seed = 0, int jobs = 1) {
    std::vector<AuditEntry> out(inputs.size());
    std::vector<std::exception_ptr> errors(inputs.size());
    parallel_for(inputs.size(), jobs, [&](size_t i) {
        try {
            auto probe = train_identity_probe(inputs[i].reps, ids, folds,
                                              substream(seed, "audit_probe", i));
            out[i] = {inputs[i].representation, inputs[i].modality, probe.accuracy};
        } catch (...) {
            errors[i] = std::current_exception();
        }
    });
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

inline std::string render_audit_csv(const std::vector<AuditEntry>& entries) {
    std::string out = "representation,modality,probe_acc\n";
    for (const auto& e : entries)
        out += e.representation + "," + e.modality + "," + fmt_double(e.probe_acc) + "\n";
    return out;
}

inline std::string render_projection_csv(const Projection2D& proj, const std::vector<int>& ids) {
    if (static_cast<size_t>(proj.coords.rows()) != ids.size())
        fail("render_projection_csv: rows/ids mismatch");
    std::string out = "x,y,user_id\n";
    for (Eigen::Index i = 0; i < proj.coords.rows(); ++i)
        out += fmt_double(proj.coords(i, 0)) + "," + fmt_double(proj.coords(i, 1)) + "," +
               std::to_string(ids[static_cast<size_t>(i)]) + "\n";
    return out;
}

}  // namespace moodveil::audit

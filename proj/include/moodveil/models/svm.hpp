#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "moodveil/common.hpp"
#include "moodveil/data_model.hpp"
#include "moodveil/models/kernel.hpp"

namespace moodveil::models {

// One binary max-margin subproblem of the one-vs-one scheme, stored in dual
// form: decision(x) = sum_i coef_i K(sv_i, x) + bias with coef_i = alpha_i y_i.
struct BinarySvm {
    int class_pos = 0;  // mapped to y=+1
    int class_neg = 0;  // mapped to y=-1
    Eigen::MatrixXd support;   // rows are support vectors
    Eigen::VectorXd coef;      // alpha_i * y_i, aligned with support rows
    double bias = 0.0;

    // training diagnostics
    int64_t iterations = 0;
    double final_gap = 0.0;        // m(alpha) - M(alpha) at stop
    double dual_objective = 0.0;   // sum(a) - 0.5 a'Qa

    double decision(const Eigen::VectorXd& x, const KernelSpec& k) const {
        double s = bias;
        for (Eigen::Index i = 0; i < support.rows(); ++i)
            s += coef[i] * kernel_eval(k, support.row(i).transpose(), x);
        return s;
    }
};

struct SvmModel {
    KernelSpec kernel;
    double C = 1.0;
    Eigen::Index dim = 0;
    std::vector<BinarySvm> pairs;    // empty when degenerate
    int sole_class = -1;             // >= 0 when training saw a single class
    std::vector<uint64_t> fit_keys;  // sorted provenance (may be empty)
};

struct SmoOptions {
    double tol = 1e-3;        // stop when m(alpha) - M(alpha) <= tol
    int64_t max_iter = 0;     // 0 -> 100000 + 100 n
};

namespace detail {

// Sequential minimal optimization with second-order working-set selection:
// i maximizes the violating gradient over I_up, j minimizes the quadratic
// gain among I_low points below i's value. Stops at m - M <= tol.
struct SmoResult {
    Eigen::VectorXd alpha;
    double bias = 0.0;
    int64_t iterations = 0;
    double gap = 0.0;
    double objective = 0.0;
};

inline SmoResult smo_solve(const Eigen::MatrixXd& K, const std::vector<int>& y, double C,
                           const SmoOptions& opt) {
    const auto n = static_cast<Eigen::Index>(y.size());
    int64_t max_iter = opt.max_iter > 0 ? opt.max_iter : 100000 + 100 * n;
    const double tau = 1e-12;

    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    // grad of (0.5 a'Qa - sum a): starts at -1
    Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);
    auto Q = [&](Eigen::Index a, Eigen::Index b) {
        return y[static_cast<size_t>(a)] * y[static_cast<size_t>(b)] * K(a, b);
    };

    SmoResult r;
    int64_t it = 0;
    double m = 0.0, M = 0.0;
    for (; it < max_iter; ++it) {
        // violating pair
        Eigen::Index i = -1;
        m = -std::numeric_limits<double>::infinity();
        M = std::numeric_limits<double>::infinity();
        for (Eigen::Index t = 0; t < n; ++t) {
            double v = -y[static_cast<size_t>(t)] * grad[t];
            bool in_up = (y[static_cast<size_t>(t)] > 0 && alpha[t] < C) ||
                         (y[static_cast<size_t>(t)] < 0 && alpha[t] > 0);
            bool in_low = (y[static_cast<size_t>(t)] > 0 && alpha[t] > 0) ||
                          (y[static_cast<size_t>(t)] < 0 && alpha[t] < C);
            if (in_up && v > m) {
                m = v;
                i = t;
            }
            if (in_low && v < M) M = v;
        }
        if (i < 0 || m - M <= opt.tol) break;

        // second-order j: minimize -b^2/a among eligible
        Eigen::Index j = -1;
        double best_gain = 0.0;
        double vi = -y[static_cast<size_t>(i)] * grad[i];
        for (Eigen::Index t = 0; t < n; ++t) {
            bool in_low = (y[static_cast<size_t>(t)] > 0 && alpha[t] > 0) ||
                          (y[static_cast<size_t>(t)] < 0 && alpha[t] < C);
            if (!in_low) continue;
            double vt = -y[static_cast<size_t>(t)] * grad[t];
            double b = vi - vt;
            if (b <= 0.0) continue;
            double a = K(i, i) + K(t, t) - 2.0 * y[static_cast<size_t>(i)] * y[static_cast<size_t>(t)] * K(i, t);
            if (a <= 0.0) a = tau;
            double gain = -(b * b) / a;
            if (gain < best_gain) {
                best_gain = gain;
                j = t;
            }
        }
        if (j < 0) break;  // numerical stall: no productive pair remains

        double a = K(i, i) + K(j, j) - 2.0 * y[static_cast<size_t>(i)] * y[static_cast<size_t>(j)] * K(i, j);
        if (a <= 0.0) a = tau;
        double b = vi - (-y[static_cast<size_t>(j)] * grad[j]);
        double step = b / a;
        double di = y[static_cast<size_t>(i)] * step;
        double dj = -y[static_cast<size_t>(j)] * step;
        // largest t in [0,1] keeping both coordinates inside the box
        double tmax = 1.0;
        auto limit = [&](double cur, double dir) {
            if (dir > 0.0) return (C - cur) / dir;
            if (dir < 0.0) return -cur / dir;
            return std::numeric_limits<double>::infinity();
        };
        tmax = std::min({tmax, limit(alpha[i], di), limit(alpha[j], dj)});
        if (!(tmax > 0.0)) break;  // boundary stall
        di *= tmax;
        dj *= tmax;
        alpha[i] = std::clamp(alpha[i] + di, 0.0, C);
        alpha[j] = std::clamp(alpha[j] + dj, 0.0, C);
        for (Eigen::Index t = 0; t < n; ++t) grad[t] += Q(t, i) * di + Q(t, j) * dj;
    }
    if (it >= max_iter)
        fail("smo_solve: no convergence after " + std::to_string(max_iter) +
             " iterations (gap=" + fmt_double(m - M) + ", tol=" + fmt_double(opt.tol) +
             ", n=" + std::to_string(n) + ")");

    r.alpha = alpha;
    r.iterations = it;
    r.gap = (m > M) ? m - M : 0.0;
    // objective of the maximization form
    double quad = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
        if (alpha[p] == 0.0) continue;
        for (Eigen::Index q = 0; q < n; ++q) quad += alpha[p] * alpha[q] * Q(p, q);
    }
    r.objective = alpha.sum() - 0.5 * quad;

    // bias: average of y_t - u_t over free SVs, else the midpoint of [M, m]
    double sum = 0.0;
    int free_count = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        if (alpha[t] > 0.0 && alpha[t] < C) {
            // y_t - u_t = -y_t * grad_t
            sum += -y[static_cast<size_t>(t)] * grad[t];
            ++free_count;
        }
    }
    if (free_count > 0)
        r.bias = sum / free_count;
    else
        r.bias = (std::isfinite(m) && std::isfinite(M)) ? 0.5 * (m + M) : 0.0;
    return r;
}

}  // namespace detail

// One-vs-one training over all class pairs present in the labels. A kernel
// with gamma <= 0 has the scale heuristic resolved against this train matrix.
inline SvmModel train_svm(const Eigen::MatrixXd& X, const std::vector<int>& y, double C,
                          KernelSpec kernel, const SmoOptions& opt = {},
                          std::vector<uint64_t> fit_keys = {}) {
    if (X.rows() == 0) fail("train_svm: empty training set");
    if (static_cast<size_t>(X.rows()) != y.size()) fail("train_svm: rows/labels mismatch");
    if (C <= 0.0) fail("train_svm: C must be positive");
    if (kernel.kind == KernelKind::Rbf && kernel.gamma <= 0.0) kernel.gamma = rbf_gamma_heuristic(X);

    SvmModel model;
    model.kernel = kernel;
    model.C = C;
    model.dim = X.cols();
    model.fit_keys = std::move(fit_keys);

    std::array<std::vector<Eigen::Index>, 3> members;
    for (size_t i = 0; i < y.size(); ++i) {
        if (y[i] < 0 || y[i] >= data_model::kNumClasses) fail("train_svm: label outside {0,1,2}");
        members[static_cast<size_t>(y[i])].push_back(static_cast<Eigen::Index>(i));
    }
    std::vector<int> present;
    for (int c = 0; c < data_model::kNumClasses; ++c)
        if (!members[static_cast<size_t>(c)].empty()) present.push_back(c);
    if (present.size() == 1) {
        model.sole_class = present[0];
        return model;
    }

    for (size_t a = 0; a < present.size(); ++a) {
        for (size_t b = a + 1; b < present.size(); ++b) {
            int ca = present[a], cb = present[b];
            std::vector<Eigen::Index> rows;
            std::vector<int> sign;
            for (Eigen::Index i : members[static_cast<size_t>(ca)]) {
                rows.push_back(i);
                sign.push_back(+1);
            }
            for (Eigen::Index i : members[static_cast<size_t>(cb)]) {
                rows.push_back(i);
                sign.push_back(-1);
            }
            Eigen::MatrixXd Xp(static_cast<Eigen::Index>(rows.size()), X.cols());
            for (size_t r = 0; r < rows.size(); ++r) Xp.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);

            auto K = kernel_matrix(kernel, Xp);
            auto sol = detail::smo_solve(K, sign, C, opt);

            BinarySvm pair;
            pair.class_pos = ca;
            pair.class_neg = cb;
            pair.iterations = sol.iterations;
            pair.final_gap = sol.gap;
            pair.dual_objective = sol.objective;
            pair.bias = sol.bias;
            std::vector<Eigen::Index> sv;
            for (Eigen::Index i = 0; i < sol.alpha.size(); ++i)
                if (sol.alpha[i] > 0.0) sv.push_back(i);
            pair.support.resize(static_cast<Eigen::Index>(sv.size()), X.cols());
            pair.coef.resize(static_cast<Eigen::Index>(sv.size()));
            for (size_t r = 0; r < sv.size(); ++r) {
                pair.support.row(static_cast<Eigen::Index>(r)) = Xp.row(sv[r]);
                pair.coef[static_cast<Eigen::Index>(r)] =
                    sol.alpha[sv[r]] * sign[static_cast<size_t>(sv[r])];
            }
            model.pairs.push_back(std::move(pair));
        }
    }
    return model;
}

// Majority vote over pairwise decisions; ties resolved to the lowest class code.
inline int svm_predict(const SvmModel& model, const Eigen::VectorXd& x) {
    if (model.sole_class >= 0) return model.sole_class;
    if (x.size() != model.dim) fail("svm_predict: dimension mismatch");
    std::array<int, 3> votes{};
    for (const auto& pair : model.pairs) {
        double d = pair.decision(x, model.kernel);
        votes[static_cast<size_t>(d >= 0.0 ? pair.class_pos : pair.class_neg)]++;
    }
    int best = 0;
    for (int c = 1; c < data_model::kNumClasses; ++c)
        if (votes[static_cast<size_t>(c)] > votes[static_cast<size_t>(best)]) best = c;
    return best;
}

inline std::vector<int> svm_predict_batch(const SvmModel& model, const Eigen::MatrixXd& X) {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(X.rows()));
    if (model.sole_class >= 0) {
        out.assign(static_cast<size_t>(X.rows()), model.sole_class);
        return out;
    }
    if (X.cols() != model.dim) fail("svm_predict_batch: dimension mismatch");
    // one cross-Gram per pair, reused across all query rows
    std::vector<Eigen::VectorXd> decisions;
    decisions.reserve(model.pairs.size());
    for (const auto& pair : model.pairs) {
        Eigen::MatrixXd G = kernel_cross(model.kernel, X, pair.support);
        decisions.push_back((G * pair.coef).array() + pair.bias);
    }
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        std::array<int, 3> votes{};
        for (size_t p = 0; p < model.pairs.size(); ++p) {
            const auto& pair = model.pairs[p];
            votes[static_cast<size_t>(decisions[p][r] >= 0.0 ? pair.class_pos : pair.class_neg)]++;
        }
        int best = 0;
        for (int c = 1; c < data_model::kNumClasses; ++c)
            if (votes[static_cast<size_t>(c)] > votes[static_cast<size_t>(best)]) best = c;
        out.push_back(best);
    }
    return out;
}

}  // namespace moodveil::models

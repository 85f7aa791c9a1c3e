#pragma once

// Independent reference computations used only by tests. Each oracle takes a
// route deliberately different from the library implementation so agreement
// is evidence rather than tautology.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace oracles {

// --- Wilcoxon signed-rank, two-sided exact p -------------------------------
//
// Dynamic-programming convolution over doubled ranks (the library enumerates
// sign masks instead). Zero differences dropped, ties get average ranks.
inline double wilcoxon_exact_p(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("wilcoxon oracle: length mismatch");
    std::vector<double> d;
    for (size_t i = 0; i < a.size(); ++i) {
        double diff = a[i] - b[i];
        if (diff != 0.0) d.push_back(diff);
    }
    const size_t n = d.size();
    if (n == 0) return 1.0;

    // average ranks of |d|, doubled to stay integral under ties
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t i, size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
    std::vector<int64_t> rank2(n, 0);
    for (size_t i = 0; i < n;) {
        size_t j = i;
        while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
        // ranks i+1 .. j averaged; doubled average = (i+1) + j
        int64_t doubled = static_cast<int64_t>(i + 1 + j);
        for (size_t k = i; k < j; ++k) rank2[order[k]] = doubled;
        i = j;
    }

    int64_t total2 = 0;
    int64_t w2 = 0;
    for (size_t i = 0; i < n; ++i) {
        total2 += rank2[i];
        if (d[i] > 0) w2 += rank2[i];
    }
    const int64_t mu2 = total2 / 2;  // total2 = n(n+1), always even
    const int64_t dev = std::abs(w2 - mu2);

    // count[s] = number of sign subsets whose positive doubled-rank sum is s
    std::vector<double> count(static_cast<size_t>(total2) + 1, 0.0);
    count[0] = 1.0;
    for (size_t i = 0; i < n; ++i) {
        auto r = static_cast<size_t>(rank2[i]);
        for (size_t s = count.size(); s-- > r;) count[s] += count[s - r];
    }
    double hits = 0.0, all = 0.0;
    for (size_t s = 0; s < count.size(); ++s) {
        all += count[s];
        if (std::abs(static_cast<int64_t>(s) - mu2) >= dev) hits += count[s];
    }
    return std::min(1.0, hits / all);
}

// --- central-difference gradients -------------------------------------------
//
// g_i = (f(x + h e_i) - f(x - h e_i)) / 2h for a scalar function of a flat
// parameter vector.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, double h = 1e-5) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
}

inline double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

// --- soft threshold ----------------------------------------------------------
inline double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

// --- brute-force SVM dual ----------------------------------------------------
//
// Global maximizer of the binary SVM dual
//   max  sum(a) - 0.5 a' Q a,  Q_ij = y_i y_j K_ij
//   s.t. 0 <= a <= C,  y'a = 0
// for <= 6 points: enumerate all 3^n active-set patterns (each coordinate at
// its lower bound, upper bound, or free), solve the KKT system for the free
// block, then polish the winner with projected gradient ascent. The library
// solves the same problem with sequential minimal optimization.

struct SvmDualSolution {
    Eigen::VectorXd alpha;
    double objective = 0.0;
};

inline double svm_dual_objective(const Eigen::MatrixXd& Q, const Eigen::VectorXd& a) {
    return a.sum() - 0.5 * a.dot(Q * a);
}

// Euclidean projection onto {a : 0 <= a <= C, y'a = 0} by bisection on the
// hyperplane multiplier.
inline Eigen::VectorXd project_box_hyperplane(const Eigen::VectorXd& v, const std::vector<int>& y,
                                              double C) {
    const auto n = v.size();
    auto value = [&](double t) {
        Eigen::VectorXd a(n);
        for (Eigen::Index i = 0; i < n; ++i)
            a[i] = std::clamp(v[i] - t * y[static_cast<size_t>(i)], 0.0, C);
        return a;
    };
    auto residual = [&](double t) {
        auto a = value(t);
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) s += y[static_cast<size_t>(i)] * a[i];
        return s;  // nonincreasing in t
    };
    double span = v.cwiseAbs().maxCoeff() + C + 1.0;
    double lo = -span, hi = span;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (residual(mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return value(0.5 * (lo + hi));
}

inline SvmDualSolution svm_dual_brute(const Eigen::MatrixXd& K, const std::vector<int>& y, double C) {
    const auto n = static_cast<Eigen::Index>(y.size());
    if (n > 12) throw std::invalid_argument("svm_dual_brute: too many points");
    Eigen::MatrixXd Q(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            Q(i, j) = y[static_cast<size_t>(i)] * y[static_cast<size_t>(j)] * K(i, j);

    SvmDualSolution best;
    best.alpha = Eigen::VectorXd::Zero(n);
    best.objective = 0.0;  // alpha = 0 is always feasible

    int64_t patterns = 1;
    for (Eigen::Index i = 0; i < n; ++i) patterns *= 3;
    for (int64_t p = 0; p < patterns; ++p) {
        int64_t code = p;
        std::vector<int> state(static_cast<size_t>(n));  // 0=at 0, 1=at C, 2=free
        std::vector<Eigen::Index> free_idx;
        for (Eigen::Index i = 0; i < n; ++i) {
            state[static_cast<size_t>(i)] = static_cast<int>(code % 3);
            code /= 3;
            if (state[static_cast<size_t>(i)] == 2) free_idx.push_back(i);
        }
        Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i)
            if (state[static_cast<size_t>(i)] == 1) a[i] = C;

        const auto nf = static_cast<Eigen::Index>(free_idx.size());
        if (nf > 0) {
            // KKT for free block: Q_FF a_F + mu y_F = 1 - Q_FB a_B ; y_F' a_F = -y_B' a_B
            Eigen::MatrixXd M(nf + 1, nf + 1);
            Eigen::VectorXd rhs(nf + 1);
            M.setZero();
            for (Eigen::Index r = 0; r < nf; ++r) {
                for (Eigen::Index c = 0; c < nf; ++c) M(r, c) = Q(free_idx[static_cast<size_t>(r)], free_idx[static_cast<size_t>(c)]);
                M(r, nf) = y[static_cast<size_t>(free_idx[static_cast<size_t>(r)])];
                M(nf, r) = y[static_cast<size_t>(free_idx[static_cast<size_t>(r)])];
                double dot = 0.0;
                for (Eigen::Index i = 0; i < n; ++i)
                    if (state[static_cast<size_t>(i)] == 1) dot += Q(free_idx[static_cast<size_t>(r)], i) * C;
                rhs[r] = 1.0 - dot;
            }
            double fixed = 0.0;
            for (Eigen::Index i = 0; i < n; ++i)
                if (state[static_cast<size_t>(i)] == 1) fixed += y[static_cast<size_t>(i)] * C;
            rhs[nf] = -fixed;
            Eigen::VectorXd sol = M.completeOrthogonalDecomposition().solve(rhs);
            if (!sol.allFinite()) continue;
            if ((M * sol - rhs).norm() > 1e-8 * (1.0 + rhs.norm())) continue;  // inconsistent pattern
            bool ok = true;
            for (Eigen::Index r = 0; r < nf; ++r) {
                if (sol[r] < -1e-9 || sol[r] > C + 1e-9) {
                    ok = false;
                    break;
                }
                a[free_idx[static_cast<size_t>(r)]] = std::clamp(sol[r], 0.0, C);
            }
            if (!ok) continue;
        } else {
            double s = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) s += y[static_cast<size_t>(i)] * a[i];
            if (std::abs(s) > 1e-9) continue;  // vertex violates the equality constraint
        }
        double obj = svm_dual_objective(Q, a);
        if (obj > best.objective) {
            best.objective = obj;
            best.alpha = a;
        }
    }

    // projected-gradient polish (handles singular KKT blocks)
    double L = Q.norm() + 1.0;
    Eigen::VectorXd a = best.alpha;
    for (int it = 0; it < 50000; ++it) {
        Eigen::VectorXd grad = Eigen::VectorXd::Ones(n) - Q * a;
        a = project_box_hyperplane(a + grad / L, y, C);
    }
    double obj = svm_dual_objective(Q, a);
    if (obj > best.objective) {
        best.objective = obj;
        best.alpha = a;
    }
    return best;
}

// --- information-theoretic helpers ------------------------------------------

// Shannon entropy in nats of a (not necessarily normalized) weight vector,
// computed directly from the definition after normalizing.
inline double shannon_entropy(const std::vector<double>& w) {
    double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (total <= 0.0) throw std::invalid_argument("shannon_entropy: non-positive mass");
    double h = 0.0;
    for (double x : w) {
        if (x <= 0.0) continue;
        double p = x / total;
        h -= p * std::log(p);
    }
    return h;
}

// Sum of squared pairwise distances between the rows of a matrix, accumulated
// pair by pair (the library reasons about projected variance instead).
inline double sum_pairwise_sqdist(const Eigen::MatrixXd& X) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = i + 1; j < X.rows(); ++j) s += (X.row(i) - X.row(j)).squaredNorm();
    return s;
}

}  // namespace oracles

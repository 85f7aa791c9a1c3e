#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "moodveil/common.hpp"

namespace moodveil::models {

enum class KernelKind { Rbf, Poly };

// RBF: exp(-gamma ||x - x'||^2). Polynomial: (x . x' + 1)^degree, unscaled.
struct KernelSpec {
    KernelKind kind = KernelKind::Rbf;
    double gamma = 0.0;  // resolved at training time when <= 0 (scale heuristic)
    int degree = 0;

    std::string name() const {
        if (kind == KernelKind::Rbf) return "rbf(gamma=" + fmt_double(gamma) + ")";
        return "poly(degree=" + std::to_string(degree) + ")";
    }
};

inline KernelSpec rbf_kernel(double gamma = 0.0) { return {KernelKind::Rbf, gamma, 0}; }

inline KernelSpec poly_kernel(int degree) {
    if (degree < 1) fail("poly_kernel: degree must be positive");
    return {KernelKind::Poly, 0.0, degree};
}

// gamma = 1 / (d * Var) with Var the pooled variance of all feature entries
// in the training matrix; 1/d when the matrix is constant.
inline double rbf_gamma_heuristic(const Eigen::MatrixXd& X) {
    if (X.size() == 0) fail("rbf_gamma_heuristic: empty matrix");
    double mean = X.mean();
    double var = (X.array() - mean).square().sum() / static_cast<double>(X.size());
    double d = static_cast<double>(X.cols());
    if (var <= 0.0) return 1.0 / d;
    return 1.0 / (d * var);
}

inline double kernel_eval(const KernelSpec& k, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) fail("kernel_eval: dimension mismatch");
    switch (k.kind) {
        case KernelKind::Rbf: return std::exp(-k.gamma * (a - b).squaredNorm());
        case KernelKind::Poly: return std::pow(a.dot(b) + 1.0, k.degree);
    }
    fail("kernel_eval: unknown kernel");
}

// Full Gram matrix over the rows of X.
inline Eigen::MatrixXd kernel_matrix(const KernelSpec& k, const Eigen::MatrixXd& X) {
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd G(n, n);
    if (k.kind == KernelKind::Poly) {
        G = ((X * X.transpose()).array() + 1.0).pow(k.degree);
    } else {
        Eigen::VectorXd sq = X.rowwise().squaredNorm();
        G = -2.0 * (X * X.transpose());
        G.colwise() += sq;
        G.rowwise() += sq.transpose();
        G = (-k.gamma * G.array()).exp();
    }
    return G;
}

// Cross Gram matrix: K(rows of A, rows of B).
inline Eigen::MatrixXd kernel_cross(const KernelSpec& k, const Eigen::MatrixXd& A,
                                    const Eigen::MatrixXd& B) {
    if (A.cols() != B.cols()) fail("kernel_cross: dimension mismatch");
    if (k.kind == KernelKind::Poly) return ((A * B.transpose()).array() + 1.0).pow(k.degree);
    Eigen::MatrixXd G = -2.0 * (A * B.transpose());
    G.colwise() += A.rowwise().squaredNorm();
    G.rowwise() += B.rowwise().squaredNorm().transpose();
    return (-k.gamma * G.array()).exp();
}

}  // namespace moodveil::models

#pragma once

#include <string>
#include <vector>

#include "moodveil/common.hpp"
#include "moodveil/config.hpp"
#include "moodveil/models/kernel.hpp"
#include "moodveil/models/mlp.hpp"

namespace moodveil::models {

enum class ModelKind { Majority, Svm, Mlp, NiMlp };

inline const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::Majority: return "majority";
        case ModelKind::Svm: return "svm";
        case ModelKind::Mlp: return "mlp";
        case ModelKind::NiMlp: return "nimlp";
    }
    return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "majority") return ModelKind::Majority;
    if (s == "svm") return ModelKind::Svm;
    if (s == "mlp") return ModelKind::Mlp;
    if (s == "nimlp") return ModelKind::NiMlp;
    fail("unknown model kind: " + s + " (expected majority|svm|mlp|nimlp)");
}

struct SvmSetting {
    double C = 1.0;
    KernelSpec kernel;

    std::string name() const { return "svm(C=" + fmt_double(C) + "," + kernel.name() + ")"; }
};

struct NimlpSetting {
    double lambda = 1.0;
    double sigma = 1.0;

    std::string name() const {
        return "nimlp(lambda=" + fmt_double(lambda) + ",sigma=" + fmt_double(sigma) + ")";
    }
};

// Candidate lists for grid search. Defaults give 35 SVM settings (7 C x 5
// kernels), 18 MLP settings (3 x 2 x 3), and 36 (lambda, sigma) pairs.
struct HyperGrid {
    std::vector<double> svm_c = {0.1, 0.5, 1, 2, 3, 5, 10};
    std::vector<std::string> svm_kernels = {"rbf", "poly2", "poly3", "poly5", "poly10"};
    std::vector<int> mlp_h1 = {1024, 512, 128};
    std::vector<int> mlp_h2 = {128, 64};
    std::vector<double> mlp_dropout = {0.0, 0.2, 0.5};
    double mlp_lr = 0.001;
    int mlp_batch = 100;
    int mlp_epochs = 200;
    std::vector<double> nimlp_lambda = {0.1, 1, 2, 3, 5, 10};
    std::vector<double> nimlp_sigma = {1, 5, 10, 25, 50, 100};

    static HyperGrid from_config(const Config& cfg) {
        HyperGrid g;
        g.svm_c = cfg.get_double_list("grid.svm_c", g.svm_c);
        g.svm_kernels = cfg.get_string_list("grid.svm_kernels", g.svm_kernels);
        auto ints = [&](const char* key, std::vector<int> dflt) {
            std::vector<double> dd(dflt.begin(), dflt.end());
            std::vector<int> out;
            for (double v : cfg.get_double_list(key, dd)) out.push_back(static_cast<int>(v));
            return out;
        };
        g.mlp_h1 = ints("grid.mlp_h1", g.mlp_h1);
        g.mlp_h2 = ints("grid.mlp_h2", g.mlp_h2);
        g.mlp_dropout = cfg.get_double_list("grid.mlp_dropout", g.mlp_dropout);
        g.mlp_lr = cfg.get_double("mlp.lr", g.mlp_lr);
        g.mlp_batch = static_cast<int>(cfg.get_int("mlp.batch", g.mlp_batch));
        g.mlp_epochs = static_cast<int>(cfg.get_int("mlp.epochs", g.mlp_epochs));
        g.nimlp_lambda = cfg.get_double_list("grid.nimlp_lambda", g.nimlp_lambda);
        g.nimlp_sigma = cfg.get_double_list("grid.nimlp_sigma", g.nimlp_sigma);
        return g;
    }
};

inline KernelSpec parse_kernel(const std::string& s) {
    if (s == "rbf") return rbf_kernel();  // gamma resolved per train fold
    if (s.rfind("poly", 0) == 0) {
        int degree = 0;
        try {
            degree = std::stoi(s.substr(4));
        } catch (...) {
            fail("unknown kernel: " + s);
        }
        return poly_kernel(degree);
    }
    fail("unknown kernel: " + s + " (expected rbf or polyN)");
}

inline std::vector<SvmSetting> svm_candidates(const HyperGrid& g) {
    if (g.svm_c.empty() || g.svm_kernels.empty()) fail("svm grid: empty axis");
    std::vector<SvmSetting> out;
    for (double c : g.svm_c)
        for (const auto& k : g.svm_kernels) out.push_back({c, parse_kernel(k)});
    return out;
}

inline std::vector<MlpHyper> mlp_candidates(const HyperGrid& g) {
    if (g.mlp_h1.empty() || g.mlp_h2.empty() || g.mlp_dropout.empty()) fail("mlp grid: empty axis");
    std::vector<MlpHyper> out;
    for (int h1 : g.mlp_h1)
        for (int h2 : g.mlp_h2)
            for (double d : g.mlp_dropout) {
                MlpHyper h;
                h.h1 = h1;
                h.h2 = h2;
                h.dropout = d;
                h.lr = g.mlp_lr;
                h.batch = g.mlp_batch;
                h.epochs = g.mlp_epochs;
                out.push_back(h);
            }
    return out;
}

inline std::vector<NimlpSetting> nimlp_candidates(const HyperGrid& g) {
    if (g.nimlp_lambda.empty() || g.nimlp_sigma.empty()) fail("nimlp grid: empty axis");
    std::vector<NimlpSetting> out;
    for (double l : g.nimlp_lambda)
        for (double s : g.nimlp_sigma) out.push_back({l, s});
    return out;
}

inline size_t grid_size(const HyperGrid& g, ModelKind kind) {
    switch (kind) {
        case ModelKind::Majority: return 1;
        case ModelKind::Svm: return svm_candidates(g).size();
        case ModelKind::Mlp: return mlp_candidates(g).size();
        case ModelKind::NiMlp: return nimlp_candidates(g).size();
    }
    return 0;
}

}  // namespace moodveil::models

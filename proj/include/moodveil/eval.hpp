#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "moodveil/common.hpp"
#include "moodveil/data_model.hpp"
#include "moodveil/rng.hpp"

namespace moodveil::eval {

using data_model::DailySample;
using data_model::kNumClasses;

// ---------------------------------------------------------------------------
// Fold construction
// ---------------------------------------------------------------------------

// Assignment of every sample to one of k test folds. Within a user the
// membership is contiguous in time: fold i holds the i-th chronological block
// of each user's reports.
struct FoldPlan {
    int k = 10;
    std::vector<int> fold_of;                 // sample index -> fold
    std::vector<std::vector<size_t>> folds;   // fold -> sample indices (ascending)

    std::vector<size_t> complement(int fold) const {
        std::vector<size_t> out;
        for (size_t i = 0; i < fold_of.size(); ++i)
            if (fold_of[i] != fold) out.push_back(i);
        return out;
    }
};

inline FoldPlan chrono_partition(const std::vector<DailySample>& samples, int k = 10) {
    if (k < 2) fail("chrono_partition: k must be at least 2");
    if (samples.empty()) fail("chrono_partition: empty dataset");

    std::map<std::string, std::vector<size_t>> by_user;
    for (size_t i = 0; i < samples.size(); ++i) by_user[samples[i].user_id].push_back(i);

    FoldPlan plan;
    plan.k = k;
    plan.fold_of.assign(samples.size(), -1);
    plan.folds.assign(static_cast<size_t>(k), {});

    for (auto& [user, idx] : by_user) {
        if (idx.size() < static_cast<size_t>(k))
            fail("chrono_partition: user " + user + " has " + std::to_string(idx.size()) +
                 " samples, fewer than k=" + std::to_string(k));
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
            if (!(samples[a].date == samples[b].date)) return samples[a].date < samples[b].date;
            return a < b;
        });
        // earliest blocks absorb the remainder
        size_t n = idx.size(), base = n / static_cast<size_t>(k), rem = n % static_cast<size_t>(k);
        size_t pos = 0;
        for (int f = 0; f < k; ++f) {
            size_t len = base + (static_cast<size_t>(f) < rem ? 1 : 0);
            for (size_t j = 0; j < len; ++j, ++pos) {
                plan.fold_of[idx[pos]] = f;
                plan.folds[static_cast<size_t>(f)].push_back(idx[pos]);
            }
        }
    }
    for (auto& f : plan.folds) std::sort(f.begin(), f.end());
    return plan;
}

// Route samples by user membership into train/validation/test index sets.
struct UserSplit {
    std::vector<size_t> train, val, test;
};

inline UserSplit user_split(const std::vector<DailySample>& samples,
                            const std::vector<std::string>& train_users,
                            const std::vector<std::string>& val_users,
                            const std::vector<std::string>& test_users) {
    if (train_users.empty() || val_users.empty() || test_users.empty())
        fail("user_split: all three user lists must be non-empty");
    std::unordered_map<std::string, int> where;  // 0=train 1=val 2=test
    auto claim = [&](const std::vector<std::string>& users, int group) {
        for (const auto& u : users) {
            auto [it, inserted] = where.emplace(u, group);
            (void)it;
            if (!inserted) fail("user_split: user " + u + " appears in two groups");
        }
    };
    claim(train_users, 0);
    claim(val_users, 1);
    claim(test_users, 2);

    UserSplit s;
    for (size_t i = 0; i < samples.size(); ++i) {
        auto it = where.find(samples[i].user_id);
        if (it == where.end()) fail("user_split: user " + samples[i].user_id + " not assigned to any group");
        (it->second == 0 ? s.train : it->second == 1 ? s.val : s.test).push_back(i);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    if (preds.empty()) fail("accuracy: empty input");
    if (preds.size() != labels.size()) fail("accuracy: length mismatch");
    size_t hits = 0;
    for (size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

using Confusion = std::array<std::array<int64_t, 3>, 3>;  // [label][pred]

inline Confusion confusion_matrix(const std::vector<int>& preds, const std::vector<int>& labels) {
    if (preds.empty()) fail("confusion_matrix: empty input");
    if (preds.size() != labels.size()) fail("confusion_matrix: length mismatch");
    Confusion c{};
    for (size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= kNumClasses || preds[i] < 0 || preds[i] >= kNumClasses)
            fail("confusion_matrix: class code outside {0,1,2}");
        c[static_cast<size_t>(labels[i])][static_cast<size_t>(preds[i])]++;
    }
    return c;
}

struct ClassStats {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// A class absent from both predictions and labels contributes F1 = 0; the
// macro average always divides by the full class count.
inline std::array<ClassStats, 3> per_class_stats(const Confusion& c) {
    std::array<ClassStats, 3> out{};
    for (size_t k = 0; k < 3; ++k) {
        int64_t tp = c[k][k], fp = 0, fn = 0;
        for (size_t j = 0; j < 3; ++j) {
            if (j == k) continue;
            fp += c[j][k];
            fn += c[k][j];
        }
        auto& s = out[k];
        s.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        s.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    }
    return out;
}

inline double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels) {
    auto stats = per_class_stats(confusion_matrix(preds, labels));
    return (stats[0].f1 + stats[1].f1 + stats[2].f1) / 3.0;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank test (exact, two-sided)
// ---------------------------------------------------------------------------

struct WilcoxonResult {
    double w = 0.0;        // sum of positive ranks
    double p = 1.0;        // exact two-sided
    bool significant = false;
    size_t n = 0;          // pairs retained after dropping zero differences
};

// Exact two-sided p by enumerating all 2^n sign assignments over the average
// ranks of |differences| (Gray-code walk, so each step is one rank update).
// Zero differences are dropped before ranking.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                           double alpha = 0.05) {
    if (a.size() != b.size()) fail("wilcoxon_signed_rank: length mismatch");
    if (a.empty()) fail("wilcoxon_signed_rank: empty input");

    std::vector<double> d;
    for (size_t i = 0; i < a.size(); ++i) {
        double diff = a[i] - b[i];
        if (diff != 0.0) d.push_back(diff);
    }
    WilcoxonResult r;
    r.n = d.size();
    if (d.empty()) {
        warn("wilcoxon_signed_rank: all differences are zero; p = 1");
        r.w = 0.0;
        r.p = 1.0;
        r.significant = false;
        return r;
    }
    if (d.size() < 5)
        fail("wilcoxon_signed_rank: only " + std::to_string(d.size()) +
             " non-zero differences; need at least 5");
    if (d.size() > 25)
        fail("wilcoxon_signed_rank: exact enumeration supports at most 25 pairs, got " +
             std::to_string(d.size()));

    const size_t n = d.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t i, size_t j) { return std::abs(d[i]) < std::abs(d[j]); });

    // doubled average ranks keep tie handling in integer arithmetic
    std::vector<int64_t> rank2(n, 0);
    for (size_t i = 0; i < n;) {
        size_t j = i;
        while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
        int64_t doubled = static_cast<int64_t>(i + 1 + j);  // 2 * mean of ranks i+1..j
        for (size_t t = i; t < j; ++t) rank2[order[t]] = doubled;
        i = j;
    }

    int64_t w2 = 0, total2 = 0;
    for (size_t i = 0; i < n; ++i) {
        total2 += rank2[i];
        if (d[i] > 0) w2 += rank2[i];
    }
    const int64_t mu2 = total2 / 2;  // total2 = n(n+1)
    const int64_t dev = std::abs(w2 - mu2);

    // Gray-code walk over all masks: flip one element per step
    uint64_t hits = 0;
    int64_t t2 = 0;  // current subset sum (mask 0)
    uint64_t count = uint64_t{1} << n;
    if (std::abs(t2 - mu2) >= dev) ++hits;
    uint64_t gray = 0;
    for (uint64_t m = 1; m < count; ++m) {
        uint64_t g = m ^ (m >> 1);
        uint64_t changed = g ^ gray;
        int bit = std::countr_zero(changed);
        if (g & changed)
            t2 += rank2[static_cast<size_t>(bit)];
        else
            t2 -= rank2[static_cast<size_t>(bit)];
        gray = g;
        if (std::abs(t2 - mu2) >= dev) ++hits;
    }

    r.w = static_cast<double>(w2) / 2.0;
    r.p = std::min(1.0, static_cast<double>(hits) / static_cast<double>(count));
    r.significant = r.p < alpha;
    return r;
}

// ---------------------------------------------------------------------------
// Nested cross-validation
// ---------------------------------------------------------------------------

// What a fit produces: a predictor over sample indices plus the sorted key
// hashes of every sample the fit observed (leakage tripwire).
struct FittedPredictor {
    std::function<std::vector<int>(const std::vector<size_t>&)> predict;
    std::vector<uint64_t> fit_keys;  // sorted
};

// Everything a fold-aware fit may depend on. val_fold is -1 for the final
// retrain on all non-test data.
struct FitContext {
    size_t candidate = 0;
    std::vector<size_t> train;
    uint64_t seed = 0;
    int test_fold = 0;
    int val_fold = -1;
};

// Callback contract for nested_cv. fit() must be a pure function of
// (candidate, train indices, seed): nested_cv may invoke it from worker
// threads in any order. Protocols that fix per-test-fold context (e.g. a
// frozen base model shared by every candidate of that fold) can set fit_ctx
// instead, which additionally receives the fold coordinates; exactly one of
// the two must be set.
struct CvSpec {
    size_t num_candidates = 0;
    std::function<FittedPredictor(size_t candidate, const std::vector<size_t>& train, uint64_t seed)> fit;
    std::function<FittedPredictor(const FitContext&)> fit_ctx;
    uint64_t seed = 0;
    double alpha = 0.05;  // reserved for significance summaries downstream
};

struct FoldResult {
    int fold = 0;
    size_t selected = 0;                  // winning candidate
    double test_accuracy = 0.0;
    double test_macro_f1 = 0.0;
    std::vector<double> candidate_mean_f1;  // inner validation means, per candidate
    Confusion confusion{};                  // test-fold confusion
    std::vector<int> predictions;           // aligned with plan.folds[fold]
};

struct EvalReport {
    std::vector<FoldResult> folds;
    double mean_accuracy = 0.0;
    double mean_macro_f1 = 0.0;
    std::array<ClassStats, 3> pooled_class_stats{};  // from summed confusions

    std::vector<double> fold_f1() const {
        std::vector<double> v;
        for (const auto& f : folds) v.push_back(f.test_macro_f1);
        return v;
    }
    std::vector<double> fold_accuracy() const {
        std::vector<double> v;
        for (const auto& f : folds) v.push_back(f.test_accuracy);
        return v;
    }
};

namespace detail {

inline void assert_no_leakage(const std::vector<DailySample>& samples,
                              const std::vector<uint64_t>& fit_keys,
                              const std::vector<size_t>& eval_indices, const char* stage) {
    if (fit_keys.empty()) return;  // fit declared no provenance; nothing to check
    for (size_t i : eval_indices) {
        uint64_t k = samples[i].key_hash();
        if (std::binary_search(fit_keys.begin(), fit_keys.end(), k))
            fail(std::string("nested_cv: ") + stage + " fit observed evaluation sample " +
                 samples[i].key());
    }
}

inline std::vector<int> labels_of(const std::vector<DailySample>& samples,
                                  const std::vector<size_t>& idx) {
    std::vector<int> y;
    y.reserve(idx.size());
    for (size_t i : idx) y.push_back(static_cast<int>(samples[i].label));
    return y;
}

}  // namespace detail

// Grid search by mean validation macro-F1 over the k-1 inner folds of each
// test fold; the winner (lowest index on ties) is retrained on all non-test
// data and scored once on the held-out fold.
inline EvalReport nested_cv(const std::vector<DailySample>& samples, const FoldPlan& plan,
                            const CvSpec& spec, int jobs = 1) {
    if (spec.num_candidates == 0) fail("nested_cv: empty candidate grid");
    if (!spec.fit && !spec.fit_ctx) fail("nested_cv: missing fit callback");
    if (spec.fit && spec.fit_ctx) fail("nested_cv: set exactly one of fit / fit_ctx");
    auto run_fit = [&](FitContext ctx) {
        return spec.fit_ctx ? spec.fit_ctx(ctx) : spec.fit(ctx.candidate, ctx.train, ctx.seed);
    };
    const int k = plan.k;

    EvalReport report;
    report.folds.resize(static_cast<size_t>(k));

    for (int test_fold = 0; test_fold < k; ++test_fold) {
        std::vector<int> inner_folds;
        for (int f = 0; f < k; ++f)
            if (f != test_fold) inner_folds.push_back(f);

        auto& fr = report.folds[static_cast<size_t>(test_fold)];
        fr.fold = test_fold;
        if (spec.num_candidates == 1) {
            // Nothing to select: skip the inner loop entirely so a singleton
            // grid costs exactly one fit per fold (plain k-fold CV).
            fr.candidate_mean_f1.clear();
            fr.selected = 0;
        } else {
            // inner units: candidate x validation fold
            const size_t units = spec.num_candidates * inner_folds.size();
            std::vector<double> unit_f1(units, 0.0);
            parallel_for(units, jobs, [&](size_t u) {
                size_t cand = u / inner_folds.size();
                int val_fold = inner_folds[u % inner_folds.size()];
                FitContext ctx;
                ctx.candidate = cand;
                ctx.test_fold = test_fold;
                ctx.val_fold = val_fold;
                for (size_t i = 0; i < samples.size(); ++i)
                    if (plan.fold_of[i] != test_fold && plan.fold_of[i] != val_fold)
                        ctx.train.push_back(i);
                const auto& val = plan.folds[static_cast<size_t>(val_fold)];
                ctx.seed = substream(spec.seed, "cv_inner",
                                     (static_cast<uint64_t>(test_fold) << 32) ^
                                         (static_cast<uint64_t>(val_fold) << 16) ^ cand);
                auto fitted = run_fit(std::move(ctx));
                detail::assert_no_leakage(samples, fitted.fit_keys, val, "inner");
                // test-fold isolation: the inner loop may never observe it either
                detail::assert_no_leakage(samples, fitted.fit_keys,
                                          plan.folds[static_cast<size_t>(test_fold)], "inner");
                auto preds = fitted.predict(val);
                unit_f1[u] = macro_f1(preds, detail::labels_of(samples, val));
            });

            fr.candidate_mean_f1.assign(spec.num_candidates, 0.0);
            for (size_t cand = 0; cand < spec.num_candidates; ++cand) {
                double sum = 0.0;
                for (size_t v = 0; v < inner_folds.size(); ++v)
                    sum += unit_f1[cand * inner_folds.size() + v];
                fr.candidate_mean_f1[cand] = sum / static_cast<double>(inner_folds.size());
            }
            fr.selected = static_cast<size_t>(
                std::max_element(fr.candidate_mean_f1.begin(), fr.candidate_mean_f1.end()) -
                fr.candidate_mean_f1.begin());  // first max wins ties
        }

        FitContext outer;
        outer.candidate = fr.selected;
        outer.train = plan.complement(test_fold);
        outer.test_fold = test_fold;
        outer.val_fold = -1;
        outer.seed = substream(spec.seed, "cv_outer", static_cast<uint64_t>(test_fold));
        const auto& test = plan.folds[static_cast<size_t>(test_fold)];
        auto fitted = run_fit(std::move(outer));
        detail::assert_no_leakage(samples, fitted.fit_keys, test, "outer");
        fr.predictions = fitted.predict(test);
        auto y = detail::labels_of(samples, test);
        fr.test_accuracy = accuracy(fr.predictions, y);
        fr.test_macro_f1 = macro_f1(fr.predictions, y);
        fr.confusion = confusion_matrix(fr.predictions, y);
    }

    Confusion pooled{};
    for (const auto& fr : report.folds) {
        report.mean_accuracy += fr.test_accuracy;
        report.mean_macro_f1 += fr.test_macro_f1;
        for (size_t i = 0; i < 3; ++i)
            for (size_t j = 0; j < 3; ++j) pooled[i][j] += fr.confusion[i][j];
    }
    report.mean_accuracy /= static_cast<double>(k);
    report.mean_macro_f1 /= static_cast<double>(k);
    report.pooled_class_stats = per_class_stats(pooled);
    return report;
}

}  // namespace moodveil::eval

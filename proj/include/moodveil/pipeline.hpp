#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "moodveil/common.hpp"
#include "moodveil/config.hpp"
#include "moodveil/data_model.hpp"
#include "moodveil/eval.hpp"
#include "moodveil/featurizer.hpp"
#include "moodveil/io.hpp"
#include "moodveil/models/grid.hpp"
#include "moodveil/models/majority.hpp"
#include "moodveil/models/mlp.hpp"
#include "moodveil/models/serialize.hpp"
#include "moodveil/models/svm.hpp"
#include "moodveil/nimlp.hpp"
#include "moodveil/privacy_audit.hpp"
#include "moodveil/rng.hpp"
#include "moodveil/synthgen.hpp"

// Orchestration layer behind the command-line surface: load-or-generate a
// dataset, run cross-validated models per modality, sweep the noise/sparsity
// grid, probe representations, and write every table into a run directory
// that carries enough (resolved config + root seed) to reproduce itself
// byte-identically.
namespace moodveil::pipeline {

using data_model::DailySample;
using featurizer::Modality;
using models::ModelKind;

// ---------------------------------------------------------------------------
// Option parsing
// ---------------------------------------------------------------------------

enum class SplitMode { Nested, User };

inline const char* split_name(SplitMode s) { return s == SplitMode::Nested ? "nested" : "user"; }

inline SplitMode parse_split(const std::string& s) {
    if (s == "nested") return SplitMode::Nested;
    if (s == "user") return SplitMode::User;
    fail("unknown split mode: " + s + " (expected nested|user)");
}

// "text" | "apps" | "both" | "all" | comma list of the first three.
inline std::vector<Modality> parse_modalities(const std::string& s) {
    std::vector<Modality> out;
    for (const auto& tok : split(s, ',')) {
        std::string t = trim(tok);
        if (t.empty()) continue;
        if (t == "all") {
            out = {Modality::Fused, Modality::Text, Modality::App};
            return out;
        }
        if (t == "text") out.push_back(Modality::Text);
        else if (t == "apps") out.push_back(Modality::App);
        else if (t == "both") out.push_back(Modality::Fused);
        else fail("unknown modality: " + t + " (expected text|apps|both|all)");
    }
    if (out.empty()) fail("empty modality list");
    return out;
}

// "majority" | "svm" | "mlp" | "nimlp" | "all" | comma list.
inline std::vector<ModelKind> parse_models(const std::string& s) {
    std::vector<ModelKind> out;
    for (const auto& tok : split(s, ',')) {
        std::string t = trim(tok);
        if (t.empty()) continue;
        if (t == "all") {
            out = {ModelKind::Majority, ModelKind::Svm, ModelKind::Mlp, ModelKind::NiMlp};
            return out;
        }
        out.push_back(models::parse_model_kind(t));
    }
    if (out.empty()) fail("empty model list");
    return out;
}

inline std::string modalities_to_string(const std::vector<Modality>& ms) {
    std::string s;
    for (const auto& m : ms) s += (s.empty() ? "" : ",") + std::string(featurizer::modality_name(m));
    return s;
}

inline std::string models_to_string(const std::vector<ModelKind>& ms) {
    std::string s;
    for (const auto& m : ms) s += (s.empty() ? "" : ",") + std::string(models::model_kind_name(m));
    return s;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

// Dataset source plus everything a cross-validated run needs. When `events`
// is empty the dataset is synthesized in-run from the synth settings (same
// key=value file) and written under <out>/data/ so the run remains
// inspectable; explicit paths take precedence.
struct RunConfig {
    std::string events;  // events JSONL path ("" -> synthesize)
    std::string labels;  // labels CSV path

    synthgen::SynthConfig synth;

    int tz_offset_min = 0;
    size_t min_reports = 50;
    int folds = 10;
    SplitMode split = SplitMode::Nested;
    // user-split roster prefix sizes (train/val/test); explicit lists override
    std::vector<size_t> user_counts = {10, 3, 4};
    std::vector<std::string> train_users, val_users, test_users;

    std::vector<Modality> modalities = {Modality::Fused, Modality::Text, Modality::App};
    std::vector<ModelKind> models_run = {ModelKind::Majority, ModelKind::Svm, ModelKind::Mlp,
                                         ModelKind::NiMlp};

    int64_t text_top_k = 1000;
    double app_min_user_frac = 0.10;
    featurizer::NormScheme norm = featurizer::NormScheme::L1;

    models::HyperGrid grid;
    nimlp::HeadHyper head;  // noisy-head training; defaults mirror the MLP meta
    int probe_folds = 5;
    double alpha = 0.05;

    uint64_t seed = 0;
    int jobs = 1;
    std::string out_dir = "out/run";
    bool force = false;

    bool synthetic() const { return events.empty(); }

    void validate() const {
        if (synthetic()) {
            if (!labels.empty()) fail("run config: labels path given without events path");
            synth.validate();
        } else if (labels.empty()) {
            fail("run config: events path given without labels path");
        }
        if (folds < 2) fail("run config: folds must be >= 2");
        if (modalities.empty()) fail("run config: no modalities selected");
        if (models_run.empty()) fail("run config: no models selected");
        if (text_top_k < 1) fail("run config: text_top_k must be >= 1");
        if (!(app_min_user_frac >= 0.0 && app_min_user_frac <= 1.0))
            fail("run config: app_min_user_frac must lie in [0,1]");
        if (probe_folds < 2) fail("run config: probe_folds must be >= 2");
        if (!(alpha > 0.0 && alpha < 1.0)) fail("run config: alpha must lie in (0,1)");
        if (jobs < 1) fail("run config: jobs must be >= 1");
        if (split == SplitMode::User && train_users.empty() && user_counts.size() != 3)
            fail("run config: user_counts must have exactly 3 entries");
        if (out_dir.empty()) fail("run config: empty output directory");
    }

    static RunConfig from_config(const Config& c) {
        RunConfig r;
        r.events = c.get("events", "");
        r.labels = c.get("labels", "");
        if (r.events.empty()) r.synth = synthgen::SynthConfig::from_config(c);
        r.tz_offset_min = static_cast<int>(c.get_int("tz_offset_min", r.tz_offset_min));
        r.min_reports = static_cast<size_t>(c.get_int("min_reports", static_cast<int64_t>(r.min_reports)));
        r.folds = static_cast<int>(c.get_int("folds", r.folds));
        r.split = parse_split(c.get("split", split_name(r.split)));
        {
            std::vector<double> dflt(r.user_counts.begin(), r.user_counts.end());
            r.user_counts.clear();
            for (double v : c.get_double_list("user_counts", dflt))
                r.user_counts.push_back(static_cast<size_t>(v));
        }
        r.train_users = c.get_string_list("user_train", {});
        r.val_users = c.get_string_list("user_val", {});
        r.test_users = c.get_string_list("user_test", {});
        r.modalities = parse_modalities(c.get("modality", modalities_to_string(r.modalities)));
        r.models_run = parse_models(c.get("model", models_to_string(r.models_run)));
        r.text_top_k = c.get_int("text_top_k", r.text_top_k);
        r.app_min_user_frac = c.get_double("app_min_user_frac", r.app_min_user_frac);
        r.norm = featurizer::parse_norm(c.get("norm", featurizer::norm_name(r.norm)));
        r.grid = models::HyperGrid::from_config(c);
        r.head.lr = c.get_double("head.lr", r.grid.mlp_lr);
        r.head.batch = static_cast<int>(c.get_int("head.batch", r.grid.mlp_batch));
        r.head.epochs = static_cast<int>(c.get_int("head.epochs", r.grid.mlp_epochs));
        r.probe_folds = static_cast<int>(c.get_int("probe_folds", r.probe_folds));
        r.alpha = c.get_double("alpha", r.alpha);
        r.seed = static_cast<uint64_t>(c.get_int("seed", static_cast<int64_t>(r.seed)));
        r.jobs = static_cast<int>(c.get_int("jobs", r.jobs));
        r.out_dir = c.get("out", r.out_dir);
        r.force = c.get_bool("force", r.force);
        r.validate();
        return r;
    }

    // Fully resolved key=value view; parsing it back yields the same config.
    Config to_config() const {
        Config c;
        if (synthetic()) {
            c = synth.to_config();
        } else {
            c.set("events", events);
            c.set("labels", labels);
        }
        c.set("tz_offset_min", std::to_string(tz_offset_min));
        c.set("min_reports", std::to_string(min_reports));
        c.set("folds", std::to_string(folds));
        c.set("split", split_name(split));
        {
            std::string s;
            for (size_t v : user_counts) s += (s.empty() ? "" : ",") + std::to_string(v);
            c.set("user_counts", s);
        }
        auto join = [](const std::vector<std::string>& v) {
            std::string s;
            for (const auto& u : v) s += (s.empty() ? "" : ",") + u;
            return s;
        };
        if (!train_users.empty()) c.set("user_train", join(train_users));
        if (!val_users.empty()) c.set("user_val", join(val_users));
        if (!test_users.empty()) c.set("user_test", join(test_users));
        c.set("modality", modalities_to_string(modalities));
        c.set("model", models_to_string(models_run));
        c.set("text_top_k", std::to_string(text_top_k));
        c.set("app_min_user_frac", fmt_double(app_min_user_frac));
        c.set("norm", featurizer::norm_name(norm));
        auto doubles = [](const std::vector<double>& v) {
            std::string s;
            for (double d : v) s += (s.empty() ? "" : ",") + fmt_double(d);
            return s;
        };
        auto ints = [](const std::vector<int>& v) {
            std::string s;
            for (int d : v) s += (s.empty() ? "" : ",") + std::to_string(d);
            return s;
        };
        c.set("grid.svm_c", doubles(grid.svm_c));
        c.set("grid.svm_kernels", join(grid.svm_kernels));
        c.set("grid.mlp_h1", ints(grid.mlp_h1));
        c.set("grid.mlp_h2", ints(grid.mlp_h2));
        c.set("grid.mlp_dropout", doubles(grid.mlp_dropout));
        c.set("mlp.lr", fmt_double(grid.mlp_lr));
        c.set("mlp.batch", std::to_string(grid.mlp_batch));
        c.set("mlp.epochs", std::to_string(grid.mlp_epochs));
        c.set("grid.nimlp_lambda", doubles(grid.nimlp_lambda));
        c.set("grid.nimlp_sigma", doubles(grid.nimlp_sigma));
        c.set("head.lr", fmt_double(head.lr));
        c.set("head.batch", std::to_string(head.batch));
        c.set("head.epochs", std::to_string(head.epochs));
        c.set("probe_folds", std::to_string(probe_folds));
        c.set("alpha", fmt_double(alpha));
        c.set("seed", std::to_string(seed));
        c.set("jobs", std::to_string(jobs));
        c.set("out", out_dir);
        return c;
    }
};

// ---------------------------------------------------------------------------
// Dataset resolution
// ---------------------------------------------------------------------------

struct Dataset {
    std::vector<DailySample> samples;
    data_model::Roster roster;
    std::vector<int> user_ids;  // roster index per sample
    std::vector<int> labels;    // class per sample
};

namespace detail {

inline void refuse_existing(const std::filesystem::path& dir, bool force) {
    if (!force && std::filesystem::exists(dir))
        fail("output directory exists: " + dir.string() + " (pass --force to overwrite)");
    std::filesystem::create_directories(dir);
}

// Load (or synthesize, write, and load back through the same parsers) the
// daily samples; filter, then index users and labels.
inline Dataset resolve_dataset(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    std::string events_path = cfg.events;
    std::string labels_path = cfg.labels;
    if (cfg.synthetic()) {
        auto ds = synthgen::generate(cfg.synth);
        std::filesystem::create_directories(out_dir / "data");
        events_path = (out_dir / "data" / "events.jsonl").string();
        labels_path = (out_dir / "data" / "labels.csv").string();
        synthgen::write_dataset(ds, events_path, labels_path);
    }
    auto events = data_model::load_events(events_path);
    auto labels = data_model::load_labels(labels_path);
    data_model::WindowOptions wopt;
    wopt.tz_offset_min = cfg.tz_offset_min;
    auto samples = data_model::window_events(events, labels, wopt);
    samples = data_model::filter_participants(samples, cfg.min_reports);

    Dataset d;
    d.samples = std::move(samples);
    d.roster = data_model::Roster::from_samples(d.samples);
    d.user_ids = d.roster.indices(d.samples);
    for (const auto& s : d.samples) d.labels.push_back(static_cast<int>(s.label));
    return d;
}

// ---------------------------------------------------------------------------
// Per-train-subset feature transforms, shared across models and candidates
// ---------------------------------------------------------------------------

struct FoldFeatures {
    Eigen::MatrixXd rows;            // all samples x d, vocab fit on the train subset
    std::vector<uint64_t> fit_keys;  // the train subset's sample keys (sorted)
    uint64_t text_provenance = 0;
    uint64_t app_provenance = 0;
};

class FeatureCache {
public:
    FeatureCache(const std::vector<DailySample>& samples, const RunConfig& cfg)
        : samples_(samples), counts_(featurizer::count_samples(samples)), cfg_(cfg) {}

    std::shared_ptr<const FoldFeatures> get(Modality modality, const std::vector<size_t>& train) {
        uint64_t key = fnv1a64_bytes(train.data(), train.size() * sizeof(size_t));
        key ^= fnv1a64(featurizer::modality_name(modality));
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        auto built = std::make_shared<FoldFeatures>(build(modality, train));
        std::lock_guard<std::mutex> lock(mu_);
        return cache_.emplace(key, std::move(built)).first->second;
    }

    const std::vector<featurizer::TokenCounts>& counts() const { return counts_; }

private:
    FoldFeatures build(Modality modality, const std::vector<size_t>& train) const {
        std::vector<DailySample> subset;
        std::vector<featurizer::TokenCounts> subset_counts;
        subset.reserve(train.size());
        subset_counts.reserve(train.size());
        for (size_t i : train) {
            subset.push_back(samples_[i]);
            subset_counts.push_back(counts_[i]);
        }
        bool want_text = modality == Modality::Text || modality == Modality::Fused;
        bool want_app = modality == Modality::App || modality == Modality::Fused;
        featurizer::Vocab text_vocab, app_vocab;
        if (want_text)
            text_vocab = featurizer::build_text_vocab(subset, cfg_.text_top_k,
                                                      featurizer::default_stopwords(), &subset_counts);
        if (want_app)
            app_vocab = featurizer::build_app_vocab(subset, cfg_.app_min_user_frac, &subset_counts);
        auto m = featurizer::featurize(samples_, counts_, want_text ? &text_vocab : nullptr,
                                       want_app ? &app_vocab : nullptr, modality, cfg_.norm);
        FoldFeatures f;
        f.rows = std::move(m.rows);
        f.fit_keys = std::move(m.fit_keys);
        f.text_provenance = m.text_provenance;
        f.app_provenance = m.app_provenance;
        return f;
    }

    const std::vector<DailySample>& samples_;
    std::vector<featurizer::TokenCounts> counts_;
    const RunConfig& cfg_;
    mutable std::mutex mu_;
    std::unordered_map<uint64_t, std::shared_ptr<const FoldFeatures>> cache_;
};

inline std::vector<uint64_t> keys_of(const std::vector<DailySample>& samples,
                                     const std::vector<size_t>& idx) {
    std::vector<uint64_t> keys;
    keys.reserve(idx.size());
    for (size_t i : idx) keys.push_back(samples[i].key_hash());
    std::sort(keys.begin(), keys.end());
    return keys;
}

inline std::vector<uint64_t> merge_keys(std::vector<uint64_t> a, const std::vector<uint64_t>& b) {
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    return a;
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& all, const std::vector<size_t>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), all.cols());
    for (size_t r = 0; r < idx.size(); ++r)
        out.row(static_cast<Eigen::Index>(r)) = all.row(static_cast<Eigen::Index>(idx[r]));
    return out;
}

template <typename T>
inline std::vector<T> take(const std::vector<T>& all, const std::vector<size_t>& idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (size_t i : idx) out.push_back(all[i]);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Cross-validated model runs
// ---------------------------------------------------------------------------

struct RunEntry {
    Modality modality = Modality::Fused;
    ModelKind kind = ModelKind::Majority;
    eval::EvalReport report;
    std::vector<std::string> candidate_names;  // aligned with grid indices
};

struct VocabRow {
    std::string modality;
    int fold = 0;  // outer test fold the vocab excludes
    uint64_t text_provenance = 0;
    uint64_t app_provenance = 0;
};

struct RunOutput {
    std::filesystem::path dir;
    std::vector<RunEntry> entries;
    std::vector<VocabRow> vocab_rows;
    size_t num_samples = 0;
    size_t num_users = 0;

    const RunEntry* find(Modality m, ModelKind k) const {
        for (const auto& e : entries)
            if (e.modality == m && e.kind == k) return &e;
        return nullptr;
    }
};

namespace detail {

// Shared state for one (modality, model) cross-validated pass.
struct PassContext {
    const Dataset& data;
    FeatureCache& cache;
    const RunConfig& cfg;
    Modality modality;
    uint64_t spec_seed = 0;           // this pass's CvSpec seed
    std::filesystem::path artifact;   // where to save the fold-0 outer model ("" = skip)
    std::vector<VocabRow>* vocab_rows = nullptr;
    std::mutex* vocab_mu = nullptr;

    // NI-MLP only: the MLP pass this fold's frozen base is rebuilt from.
    const eval::EvalReport* mlp_report = nullptr;
    uint64_t mlp_spec_seed = 0;
};

inline void record_vocab(const PassContext& ctx, const eval::FitContext& fit,
                         const FoldFeatures& feats) {
    if (!ctx.vocab_rows || fit.val_fold != -1) return;  // outer fits only
    std::lock_guard<std::mutex> lock(*ctx.vocab_mu);
    for (const auto& row : *ctx.vocab_rows)
        if (row.modality == featurizer::modality_name(ctx.modality) && row.fold == fit.test_fold)
            return;  // another model already recorded this fold's vocab
    ctx.vocab_rows->push_back({featurizer::modality_name(ctx.modality), fit.test_fold,
                               feats.text_provenance, feats.app_provenance});
}

inline eval::CvSpec majority_spec(std::shared_ptr<PassContext> ctx) {
    eval::CvSpec spec;
    spec.num_candidates = 1;
    spec.seed = ctx->spec_seed;
    spec.fit_ctx = [ctx](const eval::FitContext& fit) {
        const auto& samples = ctx->data.samples;
        auto keys = keys_of(samples, fit.train);
        auto model = models::train_majority(take(ctx->data.labels, fit.train), keys);
        if (!ctx->artifact.empty() && fit.val_fold == -1 && fit.test_fold == 0)
            models::save_majority(ctx->artifact.string(), model);
        eval::FittedPredictor fp;
        fp.fit_keys = std::move(keys);
        fp.predict = [model](const std::vector<size_t>& idx) {
            return std::vector<int>(idx.size(), models::majority_predict(model));
        };
        return fp;
    };
    return spec;
}

inline eval::CvSpec svm_spec(std::shared_ptr<PassContext> ctx) {
    auto candidates = std::make_shared<std::vector<models::SvmSetting>>(
        models::svm_candidates(ctx->cfg.grid));
    eval::CvSpec spec;
    spec.num_candidates = candidates->size();
    spec.seed = ctx->spec_seed;
    spec.fit_ctx = [ctx, candidates](const eval::FitContext& fit) {
        auto feats = ctx->cache.get(ctx->modality, fit.train);
        record_vocab(*ctx, fit, *feats);
        const auto& setting = (*candidates)[fit.candidate];
        auto keys = merge_keys(keys_of(ctx->data.samples, fit.train), feats->fit_keys);
        auto model = models::train_svm(take_rows(feats->rows, fit.train),
                                       take(ctx->data.labels, fit.train), setting.C,
                                       setting.kernel, {}, keys);
        if (!ctx->artifact.empty() && fit.val_fold == -1 && fit.test_fold == 0)
            models::save_svm(ctx->artifact.string(), model);
        eval::FittedPredictor fp;
        fp.fit_keys = std::move(keys);
        fp.predict = [model, feats](const std::vector<size_t>& idx) {
            return models::svm_predict_batch(model, take_rows(feats->rows, idx));
        };
        return fp;
    };
    return spec;
}

inline eval::CvSpec mlp_spec(std::shared_ptr<PassContext> ctx) {
    auto candidates =
        std::make_shared<std::vector<models::MlpHyper>>(models::mlp_candidates(ctx->cfg.grid));
    eval::CvSpec spec;
    spec.num_candidates = candidates->size();
    spec.seed = ctx->spec_seed;
    spec.fit_ctx = [ctx, candidates](const eval::FitContext& fit) {
        auto feats = ctx->cache.get(ctx->modality, fit.train);
        record_vocab(*ctx, fit, *feats);
        auto keys = merge_keys(keys_of(ctx->data.samples, fit.train), feats->fit_keys);
        auto model = std::make_shared<models::MlpModel>(
            models::train_mlp(take_rows(feats->rows, fit.train),
                              take(ctx->data.labels, fit.train), (*candidates)[fit.candidate],
                              fit.seed, keys));
        if (!ctx->artifact.empty() && fit.val_fold == -1 && fit.test_fold == 0)
            models::save_mlp(ctx->artifact.string(), *model);
        eval::FittedPredictor fp;
        fp.fit_keys = std::move(keys);
        fp.predict = [model, feats](const std::vector<size_t>& idx) {
            return models::mlp_predict(*model, take_rows(feats->rows, idx));
        };
        return fp;
    };
    return spec;
}

// Frozen per-test-fold base for the NI-MLP pass: the MLP candidate that won
// this fold, retrained deterministically on all non-test data (identical
// substreams reproduce the exact weights the MLP pass evaluated).
struct NimlpBase {
    std::shared_ptr<models::MlpModel> model;
    std::shared_ptr<const FoldFeatures> feats;
    std::vector<uint64_t> fit_keys;  // base training keys (vocab + model)
};

inline eval::CvSpec nimlp_spec(std::shared_ptr<PassContext> ctx, const eval::FoldPlan& plan) {
    if (!ctx->mlp_report) fail("nimlp pass: missing MLP report for base selection");
    auto candidates = std::make_shared<std::vector<models::NimlpSetting>>(
        models::nimlp_candidates(ctx->cfg.grid));
    auto mlp_cands =
        std::make_shared<std::vector<models::MlpHyper>>(models::mlp_candidates(ctx->cfg.grid));
    auto bases = std::make_shared<std::map<int, NimlpBase>>();
    auto bases_mu = std::make_shared<std::mutex>();
    auto planp = std::make_shared<eval::FoldPlan>(plan);

    eval::CvSpec spec;
    spec.num_candidates = candidates->size();
    spec.seed = ctx->spec_seed;
    spec.fit_ctx = [ctx, candidates, mlp_cands, bases, bases_mu, planp](const eval::FitContext& fit) {
        // Rebuild (once per fold) the best MLP of this test fold.
        NimlpBase base;
        {
            std::lock_guard<std::mutex> lock(*bases_mu);
            auto it = bases->find(fit.test_fold);
            if (it != bases->end()) base = it->second;
        }
        if (!base.model) {
            auto outer_train = planp->complement(fit.test_fold);
            auto feats = ctx->cache.get(ctx->modality, outer_train);
            size_t selected = ctx->mlp_report->folds[static_cast<size_t>(fit.test_fold)].selected;
            uint64_t outer_seed =
                substream(ctx->mlp_spec_seed, "cv_outer", static_cast<uint64_t>(fit.test_fold));
            auto keys = merge_keys(keys_of(ctx->data.samples, outer_train), feats->fit_keys);
            base.model = std::make_shared<models::MlpModel>(
                models::train_mlp(take_rows(feats->rows, outer_train),
                                  take(ctx->data.labels, outer_train), (*mlp_cands)[selected],
                                  outer_seed, keys));
            base.feats = feats;
            base.fit_keys = std::move(keys);
            std::lock_guard<std::mutex> lock(*bases_mu);
            bases->emplace(fit.test_fold, base);
        }
        record_vocab(*ctx, fit, *base.feats);

        const auto& setting = (*candidates)[fit.candidate];
        auto Xtr = take_rows(base.feats->rows, fit.train);
        auto ytr = take(ctx->data.labels, fit.train);
        auto utr = take(ctx->data.user_ids, fit.train);
        auto ztr = models::mlp_z_feat(*base.model, Xtr);
        auto head_keys = keys_of(ctx->data.samples, fit.train);
        auto encoder = std::make_shared<nimlp::IdentityEncoder>(nimlp::fit_identity_encoder(
            ztr, utr, static_cast<int>(ctx->data.roster.size()), setting.lambda, {}, head_keys));
        auto head = std::make_shared<nimlp::NoisyHead>(
            nimlp::train_noisy_head(*base.model, *encoder, Xtr, ytr, utr, setting.sigma, fit.seed,
                                    ctx->cfg.head, head_keys));
        if (!ctx->artifact.empty() && fit.val_fold == -1 && fit.test_fold == 0)
            nimlp::save_nimlp(ctx->artifact.string(), {*base.model, *encoder, *head});

        eval::FittedPredictor fp;
        // Inner fits train the encoder/head strictly inside the inner-train
        // split; the frozen base (trained on all non-test data, mirroring the
        // published protocol of reusing each fold's best MLP) joins the
        // provenance of final fold fits, where the test fold must stay clean.
        fp.fit_keys = fit.val_fold == -1 ? merge_keys(std::move(head_keys), base.fit_keys)
                                         : std::move(head_keys);
        auto basep = base.model;
        auto feats = base.feats;
        fp.predict = [basep, feats, head](const std::vector<size_t>& idx) {
            return nimlp::nimlp_predict_batch(*basep, *head, take_rows(feats->rows, idx));
        };
        return fp;
    };
    return spec;
}

inline std::vector<std::string> candidate_names(const RunConfig& cfg, ModelKind kind) {
    switch (kind) {
        case ModelKind::Majority: return {"majority"};
        case ModelKind::Svm: {
            std::vector<std::string> out;
            for (const auto& s : models::svm_candidates(cfg.grid)) out.push_back(s.name());
            return out;
        }
        case ModelKind::Mlp: {
            std::vector<std::string> out;
            for (const auto& h : models::mlp_candidates(cfg.grid)) out.push_back(h.name());
            return out;
        }
        case ModelKind::NiMlp: {
            std::vector<std::string> out;
            for (const auto& s : models::nimlp_candidates(cfg.grid)) out.push_back(s.name());
            return out;
        }
    }
    fail("unknown model kind");
}

// Single train/val/test user split: select by validation macro-F1, evaluate
// the winner on the test users. Reported as a one-fold EvalReport.
inline eval::EvalReport user_split_eval(const Dataset& data, const eval::UserSplit& split,
                                        const eval::CvSpec& spec, int jobs) {
    eval::FoldResult fr;
    fr.fold = 0;
    auto val_labels = eval::detail::labels_of(data.samples, split.val);
    fr.candidate_mean_f1.assign(spec.num_candidates, 0.0);
    parallel_for(spec.num_candidates, jobs, [&](size_t cand) {
        eval::FitContext ctx;
        ctx.candidate = cand;
        ctx.train = split.train;
        ctx.test_fold = 0;
        ctx.val_fold = 1;  // "the" validation block
        ctx.seed = substream(spec.seed, "user_inner", cand);
        auto fitted = spec.fit_ctx ? spec.fit_ctx(ctx) : spec.fit(cand, split.train, ctx.seed);
        eval::detail::assert_no_leakage(data.samples, fitted.fit_keys, split.val, "inner");
        eval::detail::assert_no_leakage(data.samples, fitted.fit_keys, split.test, "inner");
        fr.candidate_mean_f1[cand] = eval::macro_f1(fitted.predict(split.val), val_labels);
    });
    fr.selected = static_cast<size_t>(
        std::max_element(fr.candidate_mean_f1.begin(), fr.candidate_mean_f1.end()) -
        fr.candidate_mean_f1.begin());

    eval::FitContext ctx;
    ctx.candidate = fr.selected;
    ctx.train = split.train;
    ctx.test_fold = 0;
    ctx.val_fold = -1;
    ctx.seed = substream(spec.seed, "user_outer");
    auto fitted = spec.fit_ctx ? spec.fit_ctx(ctx) : spec.fit(fr.selected, split.train, ctx.seed);
    eval::detail::assert_no_leakage(data.samples, fitted.fit_keys, split.test, "outer");
    fr.predictions = fitted.predict(split.test);
    auto y = eval::detail::labels_of(data.samples, split.test);
    fr.test_accuracy = eval::accuracy(fr.predictions, y);
    fr.test_macro_f1 = eval::macro_f1(fr.predictions, y);
    fr.confusion = eval::confusion_matrix(fr.predictions, y);

    eval::EvalReport report;
    report.folds = {fr};
    report.mean_accuracy = fr.test_accuracy;
    report.mean_macro_f1 = fr.test_macro_f1;
    report.pooled_class_stats = eval::per_class_stats(fr.confusion);
    return report;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Table rendering
// ---------------------------------------------------------------------------

namespace detail {

inline std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
    return buf;
}

inline const char* modality_row_label(Modality m) {
    switch (m) {
        case Modality::Fused: return "Text+Apps";
        case Modality::Text: return "Text";
        case Modality::App: return "Apps";
    }
    return "?";
}

inline const char* model_col_label(ModelKind k) {
    switch (k) {
        case ModelKind::Majority: return "Baseline";
        case ModelKind::Svm: return "SVM";
        case ModelKind::Mlp: return "MLP";
        case ModelKind::NiMlp: return "NI-MLP";
    }
    return "?";
}

}  // namespace detail

// Two fixed-layout blocks (macro-F1, accuracy): rows Text+Apps / Text / Apps,
// columns Baseline / SVM / MLP / NI-MLP, means over folds scaled to 0-100.
// Cells not requested in this run render as "-".
inline std::string render_report_text(const RunOutput& run) {
    const std::vector<Modality> rows = {Modality::Fused, Modality::Text, Modality::App};
    const std::vector<ModelKind> cols = {ModelKind::Majority, ModelKind::Svm, ModelKind::Mlp,
                                         ModelKind::NiMlp};
    std::ostringstream os;
    auto block = [&](const char* title, auto value) {
        os << title << "\n";
        os << "  " << std::left;
        os.width(12);
        os << "";
        for (auto k : cols) {
            os.width(10);
            os << detail::model_col_label(k);
        }
        os << "\n";
        for (auto m : rows) {
            os << "  ";
            os.width(12);
            os << detail::modality_row_label(m);
            for (auto k : cols) {
                os.width(10);
                const RunEntry* e = run.find(m, k);
                os << (e ? detail::pct(value(e->report)) : std::string("-"));
            }
            os << "\n";
        }
    };
    block("macro-F1 (mean over folds, x100)",
          [](const eval::EvalReport& r) { return r.mean_macro_f1; });
    os << "\n";
    block("accuracy (mean over folds, x100)",
          [](const eval::EvalReport& r) { return r.mean_accuracy; });
    return os.str();
}

inline std::string render_report_csv(const RunOutput& run) {
    std::string out = "modality,model,folds,mean_macro_f1,mean_accuracy\n";
    for (const auto& e : run.entries)
        out += std::string(featurizer::modality_name(e.modality)) + "," +
               models::model_kind_name(e.kind) + "," + std::to_string(e.report.folds.size()) +
               "," + fmt_double(e.report.mean_macro_f1) + "," +
               fmt_double(e.report.mean_accuracy) + "\n";
    return out;
}

inline std::string render_metrics_csv(const RunOutput& run) {
    std::string out = "modality,model,fold,selected,candidate,test_macro_f1,test_accuracy\n";
    for (const auto& e : run.entries)
        for (const auto& fr : e.report.folds) {
            std::string candidate = e.candidate_names[fr.selected];
            std::replace(candidate.begin(), candidate.end(), ',', ';');  // keep the CSV flat
            out += std::string(featurizer::modality_name(e.modality)) + "," +
                   models::model_kind_name(e.kind) + "," + std::to_string(fr.fold) + "," +
                   std::to_string(fr.selected) + "," + candidate + "," +
                   fmt_double(fr.test_macro_f1) + "," + fmt_double(fr.test_accuracy) + "\n";
        }
    return out;
}

inline std::string render_vocab_csv(const RunOutput& run) {
    std::string out = "modality,fold,text_provenance,app_provenance\n";
    for (const auto& row : run.vocab_rows)
        out += row.modality + "," + std::to_string(row.fold) + "," + hex64(row.text_provenance) +
               "," + hex64(row.app_provenance) + "\n";
    return out;
}

// Paired Wilcoxon tests over per-fold metrics: every model against the
// baseline within each modality, and the fused modality against each
// unimodal run within each model.
inline std::string render_significance_csv(const RunOutput& run, double alpha) {
    std::string out = "modality,comparison,metric,n,w,p,significant\n";
    auto add = [&](const std::string& modality, const std::string& comparison, const char* metric,
                   const std::vector<double>& a, const std::vector<double>& b) {
        if (a.size() != b.size()) return;
        size_t nonzero = 0;  // the exact test is defined for >= 5 non-tied pairs
        for (size_t i = 0; i < a.size(); ++i)
            if (a[i] != b[i]) nonzero++;
        if (nonzero < 5) return;
        auto r = eval::wilcoxon_signed_rank(a, b, alpha);
        out += modality + "," + comparison + "," + metric + "," + std::to_string(r.n) + "," +
               fmt_double(r.w) + "," + fmt_double(r.p) + "," + (r.significant ? "1" : "0") + "\n";
    };
    for (const auto& e : run.entries) {
        if (e.kind == ModelKind::Majority) continue;
        const RunEntry* base = run.find(e.modality, ModelKind::Majority);
        if (!base) continue;
        std::string modality = featurizer::modality_name(e.modality);
        std::string cmp = std::string(models::model_kind_name(e.kind)) + "_vs_majority";
        add(modality, cmp, "macro_f1", e.report.fold_f1(), base->report.fold_f1());
        add(modality, cmp, "accuracy", e.report.fold_accuracy(), base->report.fold_accuracy());
    }
    for (const auto& e : run.entries) {
        if (e.modality != Modality::Fused || e.kind == ModelKind::Majority) continue;
        for (auto uni : {Modality::Text, Modality::App}) {
            const RunEntry* u = run.find(uni, e.kind);
            if (!u) continue;
            std::string cmp = std::string(models::model_kind_name(e.kind)) + "_both_vs_" +
                              featurizer::modality_name(uni);
            add("both", cmp, "macro_f1", e.report.fold_f1(), u->report.fold_f1());
            add("both", cmp, "accuracy", e.report.fold_accuracy(), u->report.fold_accuracy());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

// Cross-validated evaluation of every requested (modality, model) cell, with
// all tables and artifacts written under cfg.out_dir.
inline RunOutput cmd_run(const RunConfig& cfg) {
    cfg.validate();
    std::filesystem::path dir(cfg.out_dir);
    detail::refuse_existing(dir, cfg.force);
    write_file((dir / "config.resolved").string(), cfg.to_config().render());

    Dataset data = detail::resolve_dataset(cfg, dir);
    detail::FeatureCache cache(data.samples, cfg);

    // A frozen base MLP is the NI-MLP's starting point, so an MLP pass must
    // exist; append one when only nimlp was requested.
    std::vector<ModelKind> kinds = cfg.models_run;
    bool wants_nimlp = std::count(kinds.begin(), kinds.end(), ModelKind::NiMlp) > 0;
    bool has_mlp = std::count(kinds.begin(), kinds.end(), ModelKind::Mlp) > 0;
    if (wants_nimlp && !has_mlp) kinds.push_back(ModelKind::Mlp);
    // fixed execution order: majority, svm, mlp, nimlp
    std::sort(kinds.begin(), kinds.end(),
              [](ModelKind a, ModelKind b) { return static_cast<int>(a) < static_cast<int>(b); });
    kinds.erase(std::unique(kinds.begin(), kinds.end()), kinds.end());

    eval::FoldPlan plan;
    eval::UserSplit usplit;
    if (cfg.split == SplitMode::Nested) {
        plan = eval::chrono_partition(data.samples, cfg.folds);
    } else {
        std::vector<std::string> train_users = cfg.train_users;
        std::vector<std::string> val_users = cfg.val_users;
        std::vector<std::string> test_users = cfg.test_users;
        if (train_users.empty()) {
            const auto& users = data.roster.users();
            size_t want = cfg.user_counts[0] + cfg.user_counts[1] + cfg.user_counts[2];
            if (users.size() != want)
                fail("user split: roster has " + std::to_string(users.size()) +
                     " users but user_counts sums to " + std::to_string(want));
            size_t a = cfg.user_counts[0], b = cfg.user_counts[1];
            train_users.assign(users.begin(), users.begin() + static_cast<long>(a));
            val_users.assign(users.begin() + static_cast<long>(a),
                             users.begin() + static_cast<long>(a + b));
            test_users.assign(users.begin() + static_cast<long>(a + b), users.end());
        }
        usplit = eval::user_split(data.samples, train_users, val_users, test_users);
    }

    std::filesystem::create_directories(dir / "artifacts");
    RunOutput run;
    run.dir = dir;
    run.entries.reserve(cfg.modalities.size() * kinds.size());  // stable &entry.report
    run.num_samples = data.samples.size();
    run.num_users = data.roster.size();
    std::mutex vocab_mu;

    const eval::EvalReport* mlp_report = nullptr;
    uint64_t mlp_spec_seed = 0;
    for (Modality modality : cfg.modalities) {
        mlp_report = nullptr;
        for (ModelKind kind : kinds) {
            auto ctx = std::make_shared<detail::PassContext>(detail::PassContext{
                data, cache, cfg, modality, 0, {}, &run.vocab_rows, &vocab_mu, nullptr, 0});
            ctx->spec_seed = substream(cfg.seed, std::string("cv:") +
                                                     featurizer::modality_name(modality) + ":" +
                                                     models::model_kind_name(kind));
            ctx->artifact = dir / "artifacts" /
                            (std::string(featurizer::modality_name(modality)) + "_" +
                             models::model_kind_name(kind) + ".mvml");
            eval::CvSpec spec;
            switch (kind) {
                case ModelKind::Majority: spec = detail::majority_spec(ctx); break;
                case ModelKind::Svm: spec = detail::svm_spec(ctx); break;
                case ModelKind::Mlp: spec = detail::mlp_spec(ctx); break;
                case ModelKind::NiMlp:
                    ctx->mlp_report = mlp_report;
                    ctx->mlp_spec_seed = mlp_spec_seed;
                    spec = detail::nimlp_spec(ctx, plan);
                    break;
            }
            spec.alpha = cfg.alpha;

            RunEntry entry;
            entry.modality = modality;
            entry.kind = kind;
            entry.candidate_names = detail::candidate_names(cfg, kind);
            entry.report = cfg.split == SplitMode::Nested
                               ? eval::nested_cv(data.samples, plan, spec, cfg.jobs)
                               : detail::user_split_eval(data, usplit, spec, cfg.jobs);
            run.entries.push_back(std::move(entry));
            if (kind == ModelKind::Mlp) {
                mlp_report = &run.entries.back().report;
                mlp_spec_seed = ctx->spec_seed;
            }
        }
    }

    write_file((dir / "metrics.csv").string(), render_metrics_csv(run));
    write_file((dir / "report.csv").string(), render_report_csv(run));
    write_file((dir / "report.txt").string(), render_report_text(run));
    write_file((dir / "significance.csv").string(), render_significance_csv(run, cfg.alpha));
    write_file((dir / "vocab.csv").string(), render_vocab_csv(run));
    return run;
}

// NI-MLP fold-context caveat: in nested mode the frozen base of each test
// fold is that fold's best MLP retrained on all non-test data (the published
// protocol), so inner validation scores for (lambda, sigma) selection are
// computed against a base that saw the validation block. The leakage
// tripwires still enforce that nothing fit inside a fold ever observed its
// *test* data. In user-split mode the same structure holds with the single
// validation block.

struct GenerateOutput {
    std::filesystem::path events;
    std::filesystem::path labels;
    std::string summary;  // non-empty when describe was requested
};

// Synthesize a dataset into out_dir (events.jsonl, labels.csv, synth.config).
inline GenerateOutput cmd_generate(const synthgen::SynthConfig& synth, const std::string& out_dir,
                                   bool force, bool describe) {
    synth.validate();
    if (out_dir.empty()) fail("generate: empty output directory");
    std::filesystem::path dir(out_dir);
    detail::refuse_existing(dir, force);

    auto ds = synthgen::generate(synth);
    GenerateOutput out;
    out.events = dir / "events.jsonl";
    out.labels = dir / "labels.csv";
    synthgen::write_dataset(ds, out.events.string(), out.labels.string());
    write_file((dir / "synth.config").string(), synth.to_config().render());

    if (describe) {
        auto events = data_model::load_events(out.events.string());
        auto labels = data_model::load_labels(out.labels.string());
        auto samples = data_model::window_events(events, labels);
        auto summary = synthgen::describe(samples);
        auto marginal = synthgen::analytic_class_marginal(synth);
        std::ostringstream os;
        os << synthgen::render_summary(summary);
        os << "analytic class marginal: negative=" << fmt_double(marginal[0])
           << " neutral=" << fmt_double(marginal[1]) << " positive=" << fmt_double(marginal[2])
           << "\n";
        out.summary = os.str();
        write_file((dir / "summary.txt").string(), out.summary);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

// Noise/sparsity sweep on a chronological holdout: train folds 0..k-2, score
// each (lambda, sigma) on the final (latest) fold.
struct SweepConfig {
    std::string events, labels;
    synthgen::SynthConfig synth;
    int tz_offset_min = 0;
    size_t min_reports = 50;
    int folds = 10;  // the last chronological fold is the holdout
    Modality modality = Modality::Fused;
    int64_t text_top_k = 1000;
    double app_min_user_frac = 0.10;
    featurizer::NormScheme norm = featurizer::NormScheme::L1;
    models::MlpHyper base;  // single base-model setting
    std::vector<double> lambdas = {0.1, 1, 2, 3, 5, 10};
    std::vector<double> sigmas = {1, 5, 10, 25, 50, 100};
    nimlp::HeadHyper head;
    int probe_folds = 5;
    uint64_t seed = 0;
    int jobs = 1;
    std::string out_dir = "out/sweep";
    bool force = false;

    bool synthetic() const { return events.empty(); }

    static SweepConfig from_config(const Config& c) {
        SweepConfig s;
        s.events = c.get("events", "");
        s.labels = c.get("labels", "");
        if (s.events.empty()) s.synth = synthgen::SynthConfig::from_config(c);
        else if (s.labels.empty()) fail("sweep config: events path given without labels path");
        s.tz_offset_min = static_cast<int>(c.get_int("tz_offset_min", s.tz_offset_min));
        s.min_reports = static_cast<size_t>(c.get_int("min_reports", static_cast<int64_t>(s.min_reports)));
        s.folds = static_cast<int>(c.get_int("folds", s.folds));
        auto ms = parse_modalities(c.get("modality", "both"));
        if (ms.size() != 1) fail("sweep config: exactly one modality");
        s.modality = ms[0];
        s.text_top_k = c.get_int("text_top_k", s.text_top_k);
        s.app_min_user_frac = c.get_double("app_min_user_frac", s.app_min_user_frac);
        s.norm = featurizer::parse_norm(c.get("norm", featurizer::norm_name(s.norm)));
        s.base.h1 = static_cast<int>(c.get_int("base.h1", 128));
        s.base.h2 = static_cast<int>(c.get_int("base.h2", 64));
        s.base.dropout = c.get_double("base.dropout", 0.0);
        s.base.lr = c.get_double("mlp.lr", s.base.lr);
        s.base.batch = static_cast<int>(c.get_int("mlp.batch", s.base.batch));
        s.base.epochs = static_cast<int>(c.get_int("mlp.epochs", s.base.epochs));
        s.lambdas = c.get_double_list("grid.nimlp_lambda", s.lambdas);
        s.sigmas = c.get_double_list("grid.nimlp_sigma", s.sigmas);
        s.head.lr = c.get_double("head.lr", s.base.lr);
        s.head.batch = static_cast<int>(c.get_int("head.batch", s.base.batch));
        s.head.epochs = static_cast<int>(c.get_int("head.epochs", s.base.epochs));
        s.probe_folds = static_cast<int>(c.get_int("probe_folds", s.probe_folds));
        s.seed = static_cast<uint64_t>(c.get_int("seed", static_cast<int64_t>(s.seed)));
        s.jobs = static_cast<int>(c.get_int("jobs", s.jobs));
        s.out_dir = c.get("out", s.out_dir);
        s.force = c.get_bool("force", s.force);
        return s;
    }

    Config to_config() const {
        Config c;
        if (synthetic()) c = synth.to_config();
        else {
            c.set("events", events);
            c.set("labels", labels);
        }
        c.set("tz_offset_min", std::to_string(tz_offset_min));
        c.set("min_reports", std::to_string(min_reports));
        c.set("folds", std::to_string(folds));
        c.set("modality", featurizer::modality_name(modality));
        c.set("text_top_k", std::to_string(text_top_k));
        c.set("app_min_user_frac", fmt_double(app_min_user_frac));
        c.set("norm", featurizer::norm_name(norm));
        c.set("base.h1", std::to_string(base.h1));
        c.set("base.h2", std::to_string(base.h2));
        c.set("base.dropout", fmt_double(base.dropout));
        c.set("mlp.lr", fmt_double(base.lr));
        c.set("mlp.batch", std::to_string(base.batch));
        c.set("mlp.epochs", std::to_string(base.epochs));
        auto doubles = [](const std::vector<double>& v) {
            std::string s;
            for (double d : v) s += (s.empty() ? "" : ",") + fmt_double(d);
            return s;
        };
        c.set("grid.nimlp_lambda", doubles(lambdas));
        c.set("grid.nimlp_sigma", doubles(sigmas));
        c.set("head.lr", fmt_double(head.lr));
        c.set("head.batch", std::to_string(head.batch));
        c.set("head.epochs", std::to_string(head.epochs));
        c.set("probe_folds", std::to_string(probe_folds));
        c.set("seed", std::to_string(seed));
        c.set("jobs", std::to_string(jobs));
        c.set("out", out_dir);
        return c;
    }
};

struct SweepOutput {
    std::filesystem::path dir;
    nimlp::ParetoCurve curve;
    nimlp::NimlpBundle selected;
};

inline SweepOutput cmd_sweep(const SweepConfig& cfg) {
    std::filesystem::path dir(cfg.out_dir);
    detail::refuse_existing(dir, cfg.force);
    write_file((dir / "config.resolved").string(), cfg.to_config().render());

    RunConfig shim;  // reuse the dataset/feature plumbing
    shim.events = cfg.events;
    shim.labels = cfg.labels;
    shim.synth = cfg.synth;
    shim.tz_offset_min = cfg.tz_offset_min;
    shim.min_reports = cfg.min_reports;
    shim.text_top_k = cfg.text_top_k;
    shim.app_min_user_frac = cfg.app_min_user_frac;
    shim.norm = cfg.norm;
    Dataset data = detail::resolve_dataset(shim, dir);

    auto plan = eval::chrono_partition(data.samples, cfg.folds);
    const int holdout = cfg.folds - 1;
    auto train_idx = plan.complement(holdout);
    const auto& val_idx = plan.folds[static_cast<size_t>(holdout)];

    detail::FeatureCache cache(data.samples, shim);
    auto feats = cache.get(cfg.modality, train_idx);

    auto Xtr = detail::take_rows(feats->rows, train_idx);
    auto ytr = detail::take(data.labels, train_idx);
    auto utr = detail::take(data.user_ids, train_idx);
    auto Xval = detail::take_rows(feats->rows, val_idx);
    auto yval = detail::take(data.labels, val_idx);
    auto uval = detail::take(data.user_ids, val_idx);

    auto base_keys = detail::merge_keys(detail::keys_of(data.samples, train_idx), feats->fit_keys);
    auto base = models::train_mlp(Xtr, ytr, cfg.base, substream(cfg.seed, "sweep_base"), base_keys);
    models::save_mlp((dir / "base_mlp.mvml").string(), base);

    nimlp::SweepOptions opt;
    opt.head = cfg.head;
    opt.probe_folds = cfg.probe_folds;
    opt.jobs = cfg.jobs;
    SweepOutput out;
    out.dir = dir;
    out.curve = nimlp::sigma_sweep(base, Xtr, ytr, utr, Xval, yval, uval,
                                   static_cast<int>(data.roster.size()), cfg.lambdas, cfg.sigmas,
                                   cfg.seed, opt);

    write_file((dir / "sweep.csv").string(), nimlp::render_sweep_csv(out.curve));
    {
        nimlp::ParetoCurve front;  // non-dominated rows only, original order
        front.t_base = out.curve.t_base;
        front.s_base = out.curve.s_base;
        for (int i : out.curve.pareto) front.points.push_back(out.curve.points[static_cast<size_t>(i)]);
        write_file((dir / "pareto.csv").string(), nimlp::render_sweep_csv(front));
    }

    // Rebuild the winning model with the exact substreams the sweep used.
    const auto k = static_cast<size_t>(out.curve.selected);
    const auto& best = out.curve.points[k];
    auto encoder = nimlp::fit_identity_encoder(models::mlp_z_feat(base, Xtr), utr,
                                               static_cast<int>(data.roster.size()), best.lambda,
                                               {}, base_keys);
    auto head = nimlp::train_noisy_head(base, encoder, Xtr, ytr, utr, best.sigma,
                                        substream(cfg.seed, "sweep_head", k), cfg.head, base_keys);
    out.selected = {base, encoder, head};
    nimlp::save_nimlp((dir / "nimlp_selected.mvml").string(), out.selected);

    std::ostringstream sel;
    sel << "selected: lambda=" << fmt_double(best.lambda) << " sigma=" << fmt_double(best.sigma)
        << "\n";
    sel << "mood_f1: " << fmt_double(best.mood_f1) << " (base " << fmt_double(out.curve.t_base)
        << ")\n";
    sel << "probe_acc: " << fmt_double(best.probe_acc) << " (base " << fmt_double(out.curve.s_base)
        << ")\n";
    sel << "ratio: " << fmt_double(best.ratio) << (best.dominant ? " (dominant)" : "") << "\n";
    sel << "pareto points: " << out.curve.pareto.size() << " of " << out.curve.points.size()
        << "\n";
    write_file((dir / "selected.txt").string(), sel.str());
    return out;
}

// ---------------------------------------------------------------------------
// Audit
// ---------------------------------------------------------------------------

// Identity-probe table plus 2-D projections over raw features, the base
// MLP's learned representation, and the NI-MLP's noisy head inputs, all on
// the same chronological holdout protocol as the sweep.
struct AuditConfig {
    std::string events, labels;
    synthgen::SynthConfig synth;
    int tz_offset_min = 0;
    size_t min_reports = 50;
    int folds = 10;
    std::vector<Modality> raw_modalities = {Modality::Fused, Modality::Text, Modality::App};
    Modality modality = Modality::Fused;  // representation-bearing modality
    int64_t text_top_k = 1000;
    double app_min_user_frac = 0.10;
    featurizer::NormScheme norm = featurizer::NormScheme::L1;
    models::MlpHyper base;
    double lambda = 1.0;
    double sigma = 10.0;
    nimlp::HeadHyper head;
    int probe_folds = 5;
    audit::ProjectionMethod method = audit::ProjectionMethod::Tsne;
    double perplexity = 30.0;
    uint64_t seed = 0;
    int jobs = 1;
    std::string out_dir = "out/audit";
    bool force = false;

    bool synthetic() const { return events.empty(); }

    static AuditConfig from_config(const Config& c) {
        AuditConfig a;
        a.events = c.get("events", "");
        a.labels = c.get("labels", "");
        if (a.events.empty()) a.synth = synthgen::SynthConfig::from_config(c);
        else if (a.labels.empty()) fail("audit config: events path given without labels path");
        a.tz_offset_min = static_cast<int>(c.get_int("tz_offset_min", a.tz_offset_min));
        a.min_reports = static_cast<size_t>(c.get_int("min_reports", static_cast<int64_t>(a.min_reports)));
        a.folds = static_cast<int>(c.get_int("folds", a.folds));
        a.raw_modalities = parse_modalities(c.get("modality", "all"));
        a.modality = a.raw_modalities.front();
        a.text_top_k = c.get_int("text_top_k", a.text_top_k);
        a.app_min_user_frac = c.get_double("app_min_user_frac", a.app_min_user_frac);
        a.norm = featurizer::parse_norm(c.get("norm", featurizer::norm_name(a.norm)));
        a.base.h1 = static_cast<int>(c.get_int("base.h1", 128));
        a.base.h2 = static_cast<int>(c.get_int("base.h2", 64));
        a.base.dropout = c.get_double("base.dropout", 0.0);
        a.base.lr = c.get_double("mlp.lr", a.base.lr);
        a.base.batch = static_cast<int>(c.get_int("mlp.batch", a.base.batch));
        a.base.epochs = static_cast<int>(c.get_int("mlp.epochs", a.base.epochs));
        a.lambda = c.get_double("audit.lambda", a.lambda);
        a.sigma = c.get_double("audit.sigma", a.sigma);
        a.head.lr = c.get_double("head.lr", a.base.lr);
        a.head.batch = static_cast<int>(c.get_int("head.batch", a.base.batch));
        a.head.epochs = static_cast<int>(c.get_int("head.epochs", a.base.epochs));
        a.probe_folds = static_cast<int>(c.get_int("probe_folds", a.probe_folds));
        std::string m = c.get("audit.method", "tsne");
        if (m == "tsne") a.method = audit::ProjectionMethod::Tsne;
        else if (m == "pca") a.method = audit::ProjectionMethod::Pca;
        else fail("audit config: unknown method " + m + " (expected tsne|pca)");
        a.perplexity = c.get_double("audit.perplexity", a.perplexity);
        a.seed = static_cast<uint64_t>(c.get_int("seed", static_cast<int64_t>(a.seed)));
        a.jobs = static_cast<int>(c.get_int("jobs", a.jobs));
        a.out_dir = c.get("out", a.out_dir);
        a.force = c.get_bool("force", a.force);
        return a;
    }

    Config to_config() const {
        Config c;
        if (synthetic()) c = synth.to_config();
        else {
            c.set("events", events);
            c.set("labels", labels);
        }
        c.set("tz_offset_min", std::to_string(tz_offset_min));
        c.set("min_reports", std::to_string(min_reports));
        c.set("folds", std::to_string(folds));
        c.set("modality", modalities_to_string(raw_modalities));
        c.set("text_top_k", std::to_string(text_top_k));
        c.set("app_min_user_frac", fmt_double(app_min_user_frac));
        c.set("norm", featurizer::norm_name(norm));
        c.set("base.h1", std::to_string(base.h1));
        c.set("base.h2", std::to_string(base.h2));
        c.set("base.dropout", fmt_double(base.dropout));
        c.set("mlp.lr", fmt_double(base.lr));
        c.set("mlp.batch", std::to_string(base.batch));
        c.set("mlp.epochs", std::to_string(base.epochs));
        c.set("audit.lambda", fmt_double(lambda));
        c.set("audit.sigma", fmt_double(sigma));
        c.set("head.lr", fmt_double(head.lr));
        c.set("head.batch", std::to_string(head.batch));
        c.set("head.epochs", std::to_string(head.epochs));
        c.set("probe_folds", std::to_string(probe_folds));
        c.set("audit.method", method == audit::ProjectionMethod::Tsne ? "tsne" : "pca");
        c.set("audit.perplexity", fmt_double(perplexity));
        c.set("seed", std::to_string(seed));
        c.set("jobs", std::to_string(jobs));
        c.set("out", out_dir);
        return c;
    }
};

struct AuditOutput {
    std::filesystem::path dir;
    std::vector<audit::AuditEntry> table;
};

inline AuditOutput cmd_audit(const AuditConfig& cfg) {
    std::filesystem::path dir(cfg.out_dir);
    detail::refuse_existing(dir, cfg.force);
    write_file((dir / "config.resolved").string(), cfg.to_config().render());

    RunConfig shim;
    shim.events = cfg.events;
    shim.labels = cfg.labels;
    shim.synth = cfg.synth;
    shim.tz_offset_min = cfg.tz_offset_min;
    shim.min_reports = cfg.min_reports;
    shim.text_top_k = cfg.text_top_k;
    shim.app_min_user_frac = cfg.app_min_user_frac;
    shim.norm = cfg.norm;
    Dataset data = detail::resolve_dataset(shim, dir);

    auto plan = eval::chrono_partition(data.samples, cfg.folds);
    auto train_idx = plan.complement(cfg.folds - 1);
    detail::FeatureCache cache(data.samples, shim);

    std::vector<audit::AuditInput> inputs;
    std::shared_ptr<const detail::FoldFeatures> rep_feats;  // cfg.modality's raw features
    for (Modality m : cfg.raw_modalities) {
        auto f = cache.get(m, train_idx);
        if (m == cfg.modality) rep_feats = f;
        inputs.push_back({"raw", featurizer::modality_name(m), f->rows});
    }
    if (!rep_feats) rep_feats = cache.get(cfg.modality, train_idx);

    auto Xtr = detail::take_rows(rep_feats->rows, train_idx);
    auto ytr = detail::take(data.labels, train_idx);
    auto utr = detail::take(data.user_ids, train_idx);
    auto base = models::train_mlp(Xtr, ytr, cfg.base, substream(cfg.seed, "audit_base"));
    models::save_mlp((dir / "base_mlp.mvml").string(), base);

    Eigen::MatrixXd zall = models::mlp_z_feat(base, rep_feats->rows);
    inputs.push_back({"mlp_zfeat", featurizer::modality_name(cfg.modality), zall});

    auto encoder = nimlp::fit_identity_encoder(models::mlp_z_feat(base, Xtr), utr,
                                               static_cast<int>(data.roster.size()), cfg.lambda);
    Eigen::MatrixXd noisy = zall;
    if (cfg.sigma > 0.0) {
        Rng noise(substream(cfg.seed, "audit_noise"));
        for (Eigen::Index i = 0; i < noisy.rows(); ++i) {
            const auto zid = encoder.theta.row(data.user_ids[static_cast<size_t>(i)]);
            for (Eigen::Index j = 0; j < noisy.cols(); ++j)
                noisy(i, j) += noise.normal() * cfg.sigma * zid[j];
        }
    }
    inputs.push_back({"nimlp_head_inputs", featurizer::modality_name(cfg.modality), noisy});

    AuditOutput out;
    out.dir = dir;
    out.table = audit::audit_suite(inputs, data.user_ids, cfg.probe_folds,
                                   substream(cfg.seed, "audit_probes"), cfg.jobs);
    write_file((dir / "audit.csv").string(), audit::render_audit_csv(out.table));

    for (const auto& input : inputs) {
        std::string tag = input.representation == "raw" ? "raw_" + input.modality
                                                        : input.representation;
        auto proj = audit::project_2d(input.reps, cfg.method, cfg.perplexity,
                                      substream(cfg.seed, "projection:" + tag));
        write_file((dir / ("projection_" + tag + ".csv")).string(),
                   audit::render_projection_csv(proj, data.user_ids));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report regeneration
// ---------------------------------------------------------------------------

// Rebuild report.txt / report.csv from an existing run's metrics.csv without
// re-running anything; returns the rendered text table.
inline std::string cmd_report(const std::string& run_dir) {
    std::filesystem::path dir(run_dir);
    auto metrics_path = dir / "metrics.csv";
    if (!std::filesystem::exists(metrics_path))
        fail("report: " + metrics_path.string() + " not found");
    std::istringstream in(read_file(metrics_path.string()));
    std::string line;
    if (!std::getline(in, line) ||
        line != "modality,model,fold,selected,candidate,test_macro_f1,test_accuracy")
        fail("report: unrecognized metrics.csv header");

    RunOutput run;
    run.dir = dir;
    auto entry_of = [&](Modality m, ModelKind k) -> RunEntry& {
        for (auto& e : run.entries)
            if (e.modality == m && e.kind == k) return e;
        run.entries.push_back({m, k, {}, {}});
        return run.entries.back();
    };
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto parts = split(line, ',');
        if (parts.size() != 7) fail("report: malformed metrics row: " + line);
        Modality m = parse_modalities(parts[0]).front();
        ModelKind k = models::parse_model_kind(parts[1]);
        eval::FoldResult fr;
        fr.fold = std::stoi(parts[2]);
        fr.selected = static_cast<size_t>(std::stoul(parts[3]));
        fr.test_macro_f1 = std::stod(parts[5]);
        fr.test_accuracy = std::stod(parts[6]);
        entry_of(m, k).report.folds.push_back(std::move(fr));
    }
    if (run.entries.empty()) fail("report: metrics.csv has no rows");
    for (auto& e : run.entries) {
        e.report.mean_accuracy = 0.0;
        e.report.mean_macro_f1 = 0.0;
        for (const auto& fr : e.report.folds) {
            e.report.mean_accuracy += fr.test_accuracy;
            e.report.mean_macro_f1 += fr.test_macro_f1;
        }
        auto n = static_cast<double>(e.report.folds.size());
        e.report.mean_accuracy /= n;
        e.report.mean_macro_f1 /= n;
    }
    auto text = render_report_text(run);
    write_file((dir / "report.txt").string(), text);
    write_file((dir / "report.csv").string(), render_report_csv(run));
    return text;
}

}  // namespace moodveil::pipeline

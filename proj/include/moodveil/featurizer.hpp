#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "moodveil/common.hpp"
#include "moodveil/data_model.hpp"
#include "moodveil/io.hpp"
#include "moodveil/stopwords.hpp"

namespace moodveil::featurizer {

using data_model::DailySample;

enum class VocabKind { Text, App };
enum class Modality { Text, App, Fused };
enum class NormScheme { L1, L2, Max };

inline NormScheme parse_norm(const std::string& s) {
    if (s == "l1") return NormScheme::L1;
    if (s == "l2") return NormScheme::L2;
    if (s == "max") return NormScheme::Max;
    fail("unknown norm scheme: " + s + " (expected l1|l2|max)");
}

inline const char* norm_name(NormScheme n) {
    switch (n) {
        case NormScheme::L1: return "l1";
        case NormScheme::L2: return "l2";
        case NormScheme::Max: return "max";
    }
    return "?";
}

// Ordered token list (words or app ids), unique, sorted by descending
// frequency with lexicographic tie-break. Carries the thresholds it was built
// with and a provenance hash over the samples it was fitted on.
struct Vocab {
    VocabKind kind = VocabKind::Text;
    std::vector<std::string> tokens;
    std::vector<int64_t> frequencies;  // aligned with tokens
    int64_t top_k = 0;                 // text threshold (0 when kind=App)
    double min_user_frac = 0.0;        // app threshold (0 when kind=Text)
    size_t app_user_threshold = 0;     // resolved ceil(min_user_frac * U)
    std::string stopword_version;      // text only
    uint64_t provenance = 0;           // hash over fit-sample keys
    std::vector<uint64_t> fit_keys;    // sorted sample key hashes (leakage checks)

    size_t size() const { return tokens.size(); }

    std::unordered_map<std::string, size_t> index() const {
        std::unordered_map<std::string, size_t> m;
        m.reserve(tokens.size());
        for (size_t i = 0; i < tokens.size(); ++i) m[tokens[i]] = i;
        return m;
    }
};

// Lowercased alphanumeric runs; every other byte separates tokens.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline uint64_t keystroke_count(const data_model::KeystrokeEvent& e) {
    return e.text.size();
}

// Per-sample counts computed once so repeated featurization (one vocabulary
// per CV fold) does not re-tokenize the corpus.
struct TokenCounts {
    std::unordered_map<std::string, int64_t> words;           // word -> occurrences
    std::unordered_map<std::string, int64_t> app_keystrokes;  // app -> keystrokes
};

inline TokenCounts count_sample(const DailySample& sample) {
    TokenCounts tc;
    for (const auto& e : sample.events) {
        for (auto& w : tokenize(e.text)) ++tc.words[w];
        tc.app_keystrokes[e.app] += static_cast<int64_t>(keystroke_count(e));
    }
    return tc;
}

inline std::vector<TokenCounts> count_samples(const std::vector<DailySample>& samples) {
    std::vector<TokenCounts> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(count_sample(s));
    return out;
}

namespace detail {

inline std::pair<uint64_t, std::vector<uint64_t>> provenance_of(const std::vector<DailySample>& samples) {
    std::vector<uint64_t> keys;
    keys.reserve(samples.size());
    for (const auto& s : samples) keys.push_back(s.key_hash());
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    uint64_t h = fnv1a64_bytes(keys.data(), keys.size() * sizeof(uint64_t));
    return {h, std::move(keys)};
}

inline void sort_by_freq_then_token(std::vector<std::pair<std::string, int64_t>>& items) {
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
}

}  // namespace detail

// Top-k most frequent non-stopword tokens across all given samples.
inline Vocab build_text_vocab(const std::vector<DailySample>& samples, int64_t top_k = 1000,
                              const std::unordered_set<std::string>& stopwords = default_stopwords(),
                              const std::vector<TokenCounts>* counts = nullptr) {
    if (samples.empty()) fail("build_text_vocab: empty corpus");
    if (top_k <= 0) fail("build_text_vocab: top_k must be positive");

    std::unordered_map<std::string, int64_t> freq;
    if (counts) {
        if (counts->size() != samples.size()) fail("build_text_vocab: counts/samples size mismatch");
        for (const auto& tc : *counts)
            for (const auto& [w, n] : tc.words)
                if (!stopwords.count(w)) freq[w] += n;
    } else {
        for (const auto& s : samples)
            for (const auto& e : s.events)
                for (auto& w : tokenize(e.text))
                    if (!stopwords.count(w)) ++freq[w];
    }

    std::vector<std::pair<std::string, int64_t>> items(freq.begin(), freq.end());
    detail::sort_by_freq_then_token(items);
    if (items.size() > static_cast<size_t>(top_k)) items.resize(static_cast<size_t>(top_k));
    if (items.empty()) warn("text vocabulary is empty (all tokens are stopwords or corpus has no text)");

    Vocab v;
    v.kind = VocabKind::Text;
    v.top_k = top_k;
    v.stopword_version = kStopwordListVersion;
    for (auto& [tok, n] : items) {
        v.tokens.push_back(tok);
        v.frequencies.push_back(n);
    }
    auto [h, keys] = detail::provenance_of(samples);
    v.provenance = h;
    v.fit_keys = std::move(keys);
    return v;
}

// Apps kept iff used (>=1 keystroke on >=1 day) by at least
// ceil(min_user_frac * U) distinct users of the sample roster.
inline Vocab build_app_vocab(const std::vector<DailySample>& samples, double min_user_frac = 0.10,
                             const std::vector<TokenCounts>* counts = nullptr) {
    if (samples.empty()) fail("build_app_vocab: empty corpus");
    if (min_user_frac < 0.0 || min_user_frac > 1.0) fail("build_app_vocab: min_user_frac must be in [0,1]");

    std::unordered_set<std::string> users;
    for (const auto& s : samples) users.insert(s.user_id);
    size_t num_users = users.size();
    // ceil with a nudge so exact products (0.1 * 20) do not round up twice
    auto threshold = static_cast<size_t>(std::ceil(min_user_frac * static_cast<double>(num_users) - 1e-9));

    std::unordered_map<std::string, std::unordered_set<std::string>> app_users;
    std::unordered_map<std::string, int64_t> app_freq;
    auto add = [&](const std::string& user, const std::string& app, int64_t keystrokes) {
        if (keystrokes > 0) app_users[app].insert(user);
        app_freq[app] += keystrokes;
    };
    if (counts) {
        if (counts->size() != samples.size()) fail("build_app_vocab: counts/samples size mismatch");
        for (size_t i = 0; i < samples.size(); ++i)
            for (const auto& [app, n] : (*counts)[i].app_keystrokes) add(samples[i].user_id, app, n);
    } else {
        for (const auto& s : samples)
            for (const auto& e : s.events) add(s.user_id, e.app, static_cast<int64_t>(keystroke_count(e)));
    }

    std::vector<std::pair<std::string, int64_t>> items;
    for (const auto& [app, n] : app_freq)
        if (app_users[app].size() >= threshold) items.emplace_back(app, n);
    detail::sort_by_freq_then_token(items);

    Vocab v;
    v.kind = VocabKind::App;
    v.min_user_frac = min_user_frac;
    v.app_user_threshold = threshold;
    for (auto& [tok, n] : items) {
        v.tokens.push_back(tok);
        v.frequencies.push_back(n);
    }
    auto [h, keys] = detail::provenance_of(samples);
    v.provenance = h;
    v.fit_keys = std::move(keys);
    return v;
}

// counts[i] = occurrences of vocab token i inside the sample's window
// (word occurrences for text vocabularies, keystrokes for app vocabularies);
// out-of-vocabulary tokens are ignored.
inline std::vector<int64_t> bag_counts(const TokenCounts& tc, const Vocab& vocab,
                                       const std::unordered_map<std::string, size_t>& index) {
    std::vector<int64_t> counts(vocab.size(), 0);
    const auto& src = vocab.kind == VocabKind::Text ? tc.words : tc.app_keystrokes;
    for (const auto& [tok, n] : src) {
        if (auto it = index.find(tok); it != index.end()) counts[it->second] += n;
    }
    return counts;
}

inline std::vector<int64_t> bag_counts(const DailySample& sample, const Vocab& vocab) {
    auto index = vocab.index();
    return bag_counts(count_sample(sample), vocab, index);
}

// Dense vector of length 2|V|: normalized counts followed by a {0,1}
// indicator of the same counts.
struct FeatureVector {
    Eigen::VectorXd values;
    Modality modality = Modality::Text;

    Eigen::Index size() const { return values.size(); }
};

using FusedVector = FeatureVector;  // modality == Modality::Fused

inline FeatureVector normalize_binarize(const std::vector<int64_t>& counts,
                                        Modality modality = Modality::Text,
                                        NormScheme scheme = NormScheme::L1) {
    const auto n = static_cast<Eigen::Index>(counts.size());
    FeatureVector f;
    f.modality = modality;
    f.values = Eigen::VectorXd::Zero(2 * n);
    double denom = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (counts[i] < 0) fail("normalize_binarize: negative count");
        double c = static_cast<double>(counts[i]);
        switch (scheme) {
            case NormScheme::L1: denom += c; break;
            case NormScheme::L2: denom += c * c; break;
            case NormScheme::Max: denom = std::max(denom, c); break;
        }
    }
    if (scheme == NormScheme::L2) denom = std::sqrt(denom);
    for (Eigen::Index i = 0; i < n; ++i) {
        double c = static_cast<double>(counts[i]);
        f.values[i] = denom > 0.0 ? c / denom : 0.0;
        f.values[n + i] = counts[i] > 0 ? 1.0 : 0.0;
    }
    return f;
}

// x_multi = x_text (+) x_app, text first.
inline FusedVector fuse(const FeatureVector& text, const FeatureVector& app) {
    if (text.modality != Modality::Text) fail("fuse: first argument must be a text feature vector");
    if (app.modality != Modality::App) fail("fuse: second argument must be an app feature vector");
    FusedVector out;
    out.modality = Modality::Fused;
    out.values.resize(text.values.size() + app.values.size());
    out.values << text.values, app.values;
    return out;
}

// Row-per-sample feature matrix for one modality choice.
struct FeatureMatrix {
    Eigen::MatrixXd rows;            // N x d
    Modality modality = Modality::Fused;
    uint64_t text_provenance = 0;    // 0 when the modality has no text half
    uint64_t app_provenance = 0;
    std::vector<uint64_t> fit_keys;  // union of vocab fit keys
};

inline FeatureMatrix featurize(const std::vector<DailySample>& samples,
                               const std::vector<TokenCounts>& counts, const Vocab* text_vocab,
                               const Vocab* app_vocab, Modality modality,
                               NormScheme scheme = NormScheme::L1) {
    if (counts.size() != samples.size()) fail("featurize: counts/samples size mismatch");
    bool want_text = modality == Modality::Text || modality == Modality::Fused;
    bool want_app = modality == Modality::App || modality == Modality::Fused;
    if (want_text && !text_vocab) fail("featurize: text vocabulary required");
    if (want_app && !app_vocab) fail("featurize: app vocabulary required");

    std::unordered_map<std::string, size_t> text_index, app_index;
    Eigen::Index d_text = 0, d_app = 0;
    if (want_text) {
        text_index = text_vocab->index();
        d_text = 2 * static_cast<Eigen::Index>(text_vocab->size());
    }
    if (want_app) {
        app_index = app_vocab->index();
        d_app = 2 * static_cast<Eigen::Index>(app_vocab->size());
    }

    FeatureMatrix m;
    m.modality = modality;
    m.rows.resize(static_cast<Eigen::Index>(samples.size()), d_text + d_app);
    for (size_t i = 0; i < samples.size(); ++i) {
        auto r = static_cast<Eigen::Index>(i);
        if (want_text) {
            auto f = normalize_binarize(bag_counts(counts[i], *text_vocab, text_index), Modality::Text, scheme);
            m.rows.row(r).head(d_text) = f.values.transpose();
        }
        if (want_app) {
            auto f = normalize_binarize(bag_counts(counts[i], *app_vocab, app_index), Modality::App, scheme);
            m.rows.row(r).tail(d_app) = f.values.transpose();
        }
    }
    if (want_text) {
        m.text_provenance = text_vocab->provenance;
        m.fit_keys.insert(m.fit_keys.end(), text_vocab->fit_keys.begin(), text_vocab->fit_keys.end());
    }
    if (want_app) {
        m.app_provenance = app_vocab->provenance;
        m.fit_keys.insert(m.fit_keys.end(), app_vocab->fit_keys.begin(), app_vocab->fit_keys.end());
    }
    std::sort(m.fit_keys.begin(), m.fit_keys.end());
    m.fit_keys.erase(std::unique(m.fit_keys.begin(), m.fit_keys.end()), m.fit_keys.end());
    return m;
}

inline const char* modality_name(Modality m) {
    switch (m) {
        case Modality::Text: return "text";
        case Modality::App: return "apps";
        case Modality::Fused: return "both";
    }
    return "?";
}

// One token per line with its frequency, preceded by a header comment
// recording the thresholds and provenance.
inline std::string render_vocab(const Vocab& v) {
    std::string out = "# kind=";
    out += v.kind == VocabKind::Text ? "text" : "app";
    if (v.kind == VocabKind::Text) {
        out += " top_k=" + std::to_string(v.top_k);
        out += " stopwords=" + v.stopword_version;
    } else {
        out += " min_user_frac=" + fmt_double(v.min_user_frac);
        out += " user_threshold=" + std::to_string(v.app_user_threshold);
    }
    out += " provenance=" + hex64(v.provenance) + "\n";
    for (size_t i = 0; i < v.tokens.size(); ++i)
        out += v.tokens[i] + "\t" + std::to_string(v.frequencies[i]) + "\n";
    return out;
}

inline void export_vocab(const std::string& path, const Vocab& v) { write_file(path, render_vocab(v)); }

// Comma-delimited matrix export: user_id,date,label,f_0..f_{d-1}; the header
// comment carries the vocabulary provenance hashes.
inline void export_feature_matrix(const std::string& path, const std::vector<DailySample>& samples,
                                  const FeatureMatrix& m) {
    if (static_cast<size_t>(m.rows.rows()) != samples.size())
        fail("export_feature_matrix: row/sample mismatch");
    CsvWriter w;
    w.raw_line("# modality=" + std::string(modality_name(m.modality)) +
               " text_vocab=" + hex64(m.text_provenance) + " app_vocab=" + hex64(m.app_provenance));
    std::vector<std::string> header = {"user_id", "date", "label"};
    for (Eigen::Index j = 0; j < m.rows.cols(); ++j) header.push_back("f_" + std::to_string(j));
    w.row(header);
    for (size_t i = 0; i < samples.size(); ++i) {
        std::vector<std::string> row = {samples[i].user_id, to_iso(samples[i].date),
                                        std::to_string(static_cast<int>(samples[i].label))};
        for (Eigen::Index j = 0; j < m.rows.cols(); ++j)
            row.push_back(fmt_double(m.rows(static_cast<Eigen::Index>(i), j)));
        w.row(row);
    }
    w.save(path);
}

}  // namespace moodveil::featurizer

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "moodveil/common.hpp"
#include "moodveil/config.hpp"
#include "moodveil/data_model.hpp"
#include "moodveil/dates.hpp"
#include "moodveil/io.hpp"
#include "moodveil/rng.hpp"

// Synthetic keystroke/label generator with controllable identity confounding
// and mood signal. Three independently tunable mechanisms shape the corpus:
//
//   identity_confound   per-user multiplicative fingerprints on word and app
//                       usage frequencies (who is typing leaks into counts),
//   mood_signal         a signal lexicon whose emission rate tracks the
//                       latent mood directly (text alone suffices),
//   interaction_signal  the same lexicon emitted mood-positively inside one
//                       app and mood-negatively inside another, with the
//                       day's dominant app chosen by a mood-independent coin
//                       (only the text x app co-occurrence reveals the mood's
//                       sign; neither modality alone recovers it).
//
// Latent mood follows a per-user AR(1) chain with unit stationary variance,
// mapped to a 0-100 score through a logistic squash, so the class marginal
// has a closed form against which empirical frequencies can be audited.
namespace moodveil::synthgen {

// Slope of the latent-to-score logistic map; with a standard-normal latent
// this yields roughly 28/44/28 class mass at zero bias.
inline constexpr double kMoodSlope = 1.2;
// Scale of the per-user log-normal usage fingerprints at identity_confound=1.
inline constexpr double kIdentitySharpness = 2.5;
// Log-rate swing of the signal lexicon per unit latent mood at mood_signal=1.
inline constexpr double kLexiconRate = 1.8;
// Log-rate swing of the lexicon inside the two interaction apps at
// interaction_signal=1 (positive in the first app, negative in the second).
inline constexpr double kInteractionRate = 2.2;
// Fraction of a day's events routed to the day-type app at
// interaction_signal=1; the remainder follows the user's preferences.
inline constexpr double kDayTypeShare = 0.6;
// Signal lexicon: the first kNumSignalWords vocabulary ranks, alternating
// mood-positive / mood-negative for the direct lexicon mechanism.
inline constexpr int64_t kNumSignalWords = 16;
// Tokens per event: kTokensBase + Poisson(kTokensExtraMean).
inline constexpr int64_t kTokensBase = 4;
inline constexpr double kTokensExtraMean = 4.0;
// Zipf-style base popularity of rank r is 1 / (kZipfShift + r).
inline constexpr double kZipfShift = 5.0;
// Events are placed uniformly inside [07:00, 23:00) of the day being typed,
// i.e. strictly inside the [05:00, 05:00) ingestion window of the next
// calendar day's label.
inline constexpr int64_t kEventStartMs = 7 * 3600 * 1000;
inline constexpr int64_t kEventSpanMs = 16 * 3600 * 1000;

struct SynthConfig {
    int64_t num_users = 17;
    int64_t days_per_user = 120;
    int64_t vocab_size_words = 160;
    int64_t vocab_size_apps = 12;
    double identity_confound = 1.0;    // [0,1] fingerprint sharpness
    double mood_signal = 1.0;          // [0,1] direct lexicon strength
    double interaction_signal = 0.0;   // [0,1] text x app interaction strength
    double mood_autocorr = 0.3;        // [0,1) AR(1) coefficient
    double events_per_day = 18.0;      // Poisson mean
    double mood_bias = 0.0;            // shifts the latent-to-score map
    std::string start_date = "2023-02-01";
    uint64_t seed = 0;

    void validate() const {
        if (num_users < 2) fail("synthgen: num_users must be >= 2");
        if (days_per_user < 1) fail("synthgen: days_per_user must be >= 1");
        if (vocab_size_words < 2 * kNumSignalWords)
            fail("synthgen: vocab_size_words must be >= " + std::to_string(2 * kNumSignalWords));
        if (vocab_size_apps < 2) fail("synthgen: vocab_size_apps must be >= 2");
        auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!in01(identity_confound)) fail("synthgen: identity_confound must lie in [0,1]");
        if (!in01(mood_signal)) fail("synthgen: mood_signal must lie in [0,1]");
        if (!in01(interaction_signal)) fail("synthgen: interaction_signal must lie in [0,1]");
        if (!(mood_autocorr >= 0.0 && mood_autocorr < 1.0))
            fail("synthgen: mood_autocorr must lie in [0,1)");
        if (!(events_per_day > 0.0 && events_per_day <= 1000.0))
            fail("synthgen: events_per_day must lie in (0,1000]");
        if (!std::isfinite(mood_bias)) fail("synthgen: mood_bias must be finite");
        parse_iso_date(start_date);  // fails on malformed dates
    }

    static SynthConfig from_config(const Config& c) {
        SynthConfig s;
        s.num_users = c.get_int("num_users", s.num_users);
        s.days_per_user = c.get_int("days_per_user", s.days_per_user);
        s.vocab_size_words = c.get_int("vocab_size_words", s.vocab_size_words);
        s.vocab_size_apps = c.get_int("vocab_size_apps", s.vocab_size_apps);
        s.identity_confound = c.get_double("identity_confound", s.identity_confound);
        s.mood_signal = c.get_double("mood_signal", s.mood_signal);
        s.interaction_signal = c.get_double("interaction_signal", s.interaction_signal);
        s.mood_autocorr = c.get_double("mood_autocorr", s.mood_autocorr);
        s.events_per_day = c.get_double("events_per_day", s.events_per_day);
        s.mood_bias = c.get_double("mood_bias", s.mood_bias);
        s.start_date = c.get("start_date", s.start_date);
        int64_t sd = c.get_int("seed", static_cast<int64_t>(s.seed));
        s.seed = static_cast<uint64_t>(sd);
        s.validate();
        return s;
    }

    Config to_config() const {
        Config c;
        c.set("num_users", std::to_string(num_users));
        c.set("days_per_user", std::to_string(days_per_user));
        c.set("vocab_size_words", std::to_string(vocab_size_words));
        c.set("vocab_size_apps", std::to_string(vocab_size_apps));
        c.set("identity_confound", fmt_double(identity_confound));
        c.set("mood_signal", fmt_double(mood_signal));
        c.set("interaction_signal", fmt_double(interaction_signal));
        c.set("mood_autocorr", fmt_double(mood_autocorr));
        c.set("events_per_day", fmt_double(events_per_day));
        c.set("mood_bias", fmt_double(mood_bias));
        c.set("start_date", start_date);
        c.set("seed", std::to_string(seed));
        return c;
    }
};

namespace detail {

// Knuth's product-of-uniforms sampler; adequate for the small means used
// here (events per day, extra tokens per event).
inline int64_t poisson(Rng& rng, double mean) {
    if (!(mean >= 0.0)) fail("poisson: mean must be non-negative");
    if (mean == 0.0) return 0;
    const double limit = std::exp(-mean);
    int64_t k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= rng.uniform();
    } while (p > limit);
    return k - 1;
}

inline std::string zero_pad(int64_t value, int width) {
    std::string s = std::to_string(value);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

inline int digits_for(int64_t max_value) {
    int d = 1;
    while (max_value >= 10) {
        max_value /= 10;
        ++d;
    }
    return d;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Score s in 0..100 comes from lround(100 * logistic(slope*m + bias)); the
// class cut points 33/66 therefore correspond to logistic values 0.335 and
// 0.665 (lround rounds halves away from zero, so 33.5 maps up).
inline constexpr double kLowCut = 0.335;
inline constexpr double kHighCut = 0.665;

}  // namespace detail

// Stationary class probabilities (Negative, Neutral, Positive) implied by the
// score map: the latent mood is standard normal regardless of mood_autocorr,
// so each threshold is a normal CDF evaluation.
inline std::array<double, 3> analytic_class_marginal(const SynthConfig& config) {
    config.validate();
    double lo = (detail::logit(detail::kLowCut) - config.mood_bias) / kMoodSlope;
    double hi = (detail::logit(detail::kHighCut) - config.mood_bias) / kMoodSlope;
    double p0 = detail::normal_cdf(lo);
    double p2 = 1.0 - detail::normal_cdf(hi);
    return {p0, 1.0 - p0 - p2, p2};
}

struct SynthDataset {
    std::string events_jsonl;  // data_model events file (one JSON object per line)
    std::string labels_csv;    // data_model labels file (user_id,date,score)
};

inline SynthDataset generate(const SynthConfig& config) {
    config.validate();
    const int64_t U = config.num_users;
    const int64_t D = config.days_per_user;
    const int64_t W = config.vocab_size_words;
    const int64_t A = config.vocab_size_apps;

    const int uid_width = std::max(2, detail::digits_for(U));
    const int word_width = std::max(3, detail::digits_for(W - 1));
    const int app_width = std::max(2, detail::digits_for(A - 1));
    std::vector<std::string> word_names(static_cast<size_t>(W));
    for (int64_t w = 0; w < W; ++w)
        word_names[static_cast<size_t>(w)] = "w" + detail::zero_pad(w, word_width);
    std::vector<std::string> app_names(static_cast<size_t>(A));
    for (int64_t a = 0; a < A; ++a)
        app_names[static_cast<size_t>(a)] = "app" + detail::zero_pad(a, app_width);

    const int64_t start_day = days_from_civil(parse_iso_date(config.start_date));

    std::ostringstream events;
    std::ostringstream labels;
    labels << "user_id,date,score\n";

    std::vector<double> word_base(static_cast<size_t>(W));
    std::vector<double> app_weights(static_cast<size_t>(A));
    std::vector<double> event_weights(static_cast<size_t>(W));

    for (int64_t u = 0; u < U; ++u) {
        const std::string uid = "u" + detail::zero_pad(u + 1, uid_width);

        // Per-user usage fingerprints: log-normal multipliers on the shared
        // Zipf popularity. Drawn unconditionally so the stream layout does
        // not depend on the strength knobs.
        Rng prefs = Rng(substream(config.seed, "prefs", static_cast<uint64_t>(u)));
        for (int64_t w = 0; w < W; ++w) {
            double zipf = 1.0 / (kZipfShift + static_cast<double>(w));
            word_base[static_cast<size_t>(w)] =
                zipf * std::exp(kIdentitySharpness * config.identity_confound * prefs.normal());
        }
        for (int64_t a = 0; a < A; ++a) {
            double zipf = 1.0 / (kZipfShift + static_cast<double>(a));
            app_weights[static_cast<size_t>(a)] =
                zipf * std::exp(kIdentitySharpness * config.identity_confound * prefs.normal());
        }

        // AR(1) latent mood with unit stationary variance.
        Rng moods = Rng(substream(config.seed, "mood", static_cast<uint64_t>(u)));
        std::vector<double> mood(static_cast<size_t>(D));
        mood[0] = moods.normal();
        const double innovation = std::sqrt(1.0 - config.mood_autocorr * config.mood_autocorr);
        for (int64_t t = 1; t < D; ++t)
            mood[static_cast<size_t>(t)] =
                config.mood_autocorr * mood[static_cast<size_t>(t - 1)] + innovation * moods.normal();

        // Mood-independent coin for the day's dominant interaction app.
        Rng daytype = Rng(substream(config.seed, "daytype", static_cast<uint64_t>(u)));
        Rng ev = Rng(substream(config.seed, "events", static_cast<uint64_t>(u)));

        for (int64_t t = 0; t < D; ++t) {
            const double m = mood[static_cast<size_t>(t)];
            const CivilDate label_date = civil_from_days(start_day + t);
            const int score = static_cast<int>(std::clamp<long>(
                std::lround(100.0 * detail::logistic(kMoodSlope * m + config.mood_bias)), 0L, 100L));
            labels << uid << "," << to_iso(label_date) << "," << score << "\n";

            const bool day_a = daytype.uniform() < 0.5;
            // Events land on the day before the label date, inside its
            // [05:00, 05:00) ingestion window.
            const int64_t typing_day_ms = (start_day + t - 1) * 86400000LL;

            const int64_t count = detail::poisson(ev, config.events_per_day);
            std::vector<data_model::KeystrokeEvent> day_events;
            day_events.reserve(static_cast<size_t>(count));
            for (int64_t e = 0; e < count; ++e) {
                data_model::KeystrokeEvent rec;
                rec.user_id = uid;
                rec.ts_ms = typing_day_ms + kEventStartMs +
                            static_cast<int64_t>(ev.uniform() * static_cast<double>(kEventSpanMs));

                int64_t app_idx;
                if (ev.uniform() < kDayTypeShare * config.interaction_signal) {
                    app_idx = day_a ? 0 : 1;
                } else {
                    app_idx = static_cast<int64_t>(ev.categorical(app_weights));
                }
                rec.app = app_names[static_cast<size_t>(app_idx)];

                // Per-event token distribution: user fingerprint times the
                // mood multipliers on the signal lexicon. The direct lexicon
                // term carries the word's own polarity; the interaction term
                // flips with the app, so its sign is unreadable without the
                // app context.
                double interaction = 0.0;
                if (app_idx == 0) interaction = kInteractionRate * config.interaction_signal * m;
                if (app_idx == 1) interaction = -kInteractionRate * config.interaction_signal * m;
                event_weights.assign(word_base.begin(), word_base.end());
                for (int64_t w = 0; w < kNumSignalWords; ++w) {
                    double polarity = (w % 2 == 0) ? 1.0 : -1.0;
                    event_weights[static_cast<size_t>(w)] *=
                        std::exp(kLexiconRate * config.mood_signal * m * polarity + interaction);
                }

                const int64_t tokens = kTokensBase + detail::poisson(ev, kTokensExtraMean);
                std::string text;
                for (int64_t tok = 0; tok < tokens; ++tok) {
                    if (tok > 0) text += ' ';
                    text += word_names[ev.categorical(event_weights)];
                }
                rec.text = std::move(text);
                day_events.push_back(std::move(rec));
            }
            std::stable_sort(day_events.begin(), day_events.end(),
                             [](const auto& a, const auto& b) { return a.ts_ms < b.ts_ms; });
            for (const auto& rec : day_events) events << data_model::event_to_json_line(rec) << "\n";
        }
    }

    SynthDataset out;
    out.events_jsonl = events.str();
    out.labels_csv = labels.str();
    return out;
}

inline void write_dataset(const SynthDataset& ds, const std::string& events_path,
                          const std::string& labels_path) {
    write_file(events_path, ds.events_jsonl);
    write_file(labels_path, ds.labels_csv);
}

// Summary of a loaded daily-sample dataset: class balance, per-user counts
// against the participation filter, and corpus-level vocabulary stats.
struct DatasetSummary {
    size_t num_samples = 0;
    size_t num_users = 0;
    std::array<int64_t, 3> class_counts{};          // Negative, Neutral, Positive
    std::vector<std::pair<std::string, int64_t>> per_user;  // sorted by user id
    int64_t min_user_count = 0;
    int64_t max_user_count = 0;
    size_t min_reports = 0;                         // participation threshold used
    size_t users_passing_filter = 0;                // users with >= min_reports samples
    int64_t total_events = 0;
    size_t distinct_words = 0;
    size_t distinct_apps = 0;
};

inline DatasetSummary describe(const std::vector<data_model::DailySample>& samples,
                               size_t min_reports = 50) {
    if (samples.empty()) fail("describe: empty dataset");
    DatasetSummary s;
    s.num_samples = samples.size();
    s.min_reports = min_reports;
    std::map<std::string, int64_t> per_user;
    std::unordered_set<std::string> words, apps;
    for (const auto& sample : samples) {
        ++per_user[sample.user_id];
        ++s.class_counts[static_cast<size_t>(sample.label)];
        s.total_events += static_cast<int64_t>(sample.events.size());
        for (const auto& e : sample.events) {
            apps.insert(e.app);
            std::istringstream toks(e.text);
            std::string tok;
            while (toks >> tok) words.insert(tok);
        }
    }
    s.num_users = per_user.size();
    s.per_user.assign(per_user.begin(), per_user.end());
    s.min_user_count = s.per_user.front().second;
    s.max_user_count = s.per_user.front().second;
    for (const auto& [_, n] : s.per_user) {
        s.min_user_count = std::min(s.min_user_count, n);
        s.max_user_count = std::max(s.max_user_count, n);
        if (n >= static_cast<int64_t>(min_reports)) ++s.users_passing_filter;
    }
    s.distinct_words = words.size();
    s.distinct_apps = apps.size();
    return s;
}

inline std::string render_summary(const DatasetSummary& s) {
    std::ostringstream os;
    os << "samples: " << s.num_samples << "\n";
    os << "users: " << s.num_users << " (" << s.users_passing_filter << " with >= "
       << s.min_reports << " reports)\n";
    double n = static_cast<double>(s.num_samples);
    os << "class counts: negative=" << s.class_counts[0] << " neutral=" << s.class_counts[1]
       << " positive=" << s.class_counts[2] << "\n";
    os << "class fractions: negative=" << fmt_double(static_cast<double>(s.class_counts[0]) / n)
       << " neutral=" << fmt_double(static_cast<double>(s.class_counts[1]) / n)
       << " positive=" << fmt_double(static_cast<double>(s.class_counts[2]) / n) << "\n";
    os << "events: " << s.total_events << " total, "
       << fmt_double(static_cast<double>(s.total_events) / n) << " per sample\n";
    os << "vocabulary: " << s.distinct_words << " words, " << s.distinct_apps << " apps\n";
    os << "reports per user: min=" << s.min_user_count << " max=" << s.max_user_count << "\n";
    for (const auto& [uid, count] : s.per_user) {
        os << "  " << uid << ": " << count
           << (count >= static_cast<int64_t>(s.min_reports) ? "" : "  [below filter]") << "\n";
    }
    return os.str();
}

}  // namespace moodveil::synthgen

#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "moodveil/data_model.hpp"
#include "moodveil/featurizer.hpp"
#include "moodveil/privacy_audit.hpp"
#include "moodveil/rng.hpp"
#include "moodveil/synthgen.hpp"

using namespace moodveil;
using namespace moodveil::synthgen;

namespace {

std::string temp_file(const std::string& tag) {
    static int counter = 0;
    auto dir = std::filesystem::temp_directory_path();
    return (dir / ("synthgen_" + tag + "_" + std::to_string(counter++) + ".tmp")).string();
}

struct Loaded {
    std::vector<data_model::DailySample> samples;
    size_t total_events = 0;
    std::vector<data_model::LabelRecord> labels;
};

Loaded load_dataset(const SynthDataset& ds, const std::string& tag) {
    std::string events_path = temp_file(tag + "_events");
    std::string labels_path = temp_file(tag + "_labels");
    write_dataset(ds, events_path, labels_path);
    data_model::LoadStats estats, lstats;
    auto events = data_model::load_events(events_path, &estats);
    auto labels = data_model::load_labels(labels_path, &lstats);
    REQUIRE(estats.malformed == 0);
    REQUIRE(lstats.malformed == 0);
    Loaded out;
    out.total_events = events.size();
    out.labels = labels;
    out.samples = data_model::window_events(events, labels);
    std::filesystem::remove(events_path);
    std::filesystem::remove(labels_path);
    return out;
}

// Test-side closed form for the class marginal: the latent mood is standard
// normal and the score map is lround(100 / (1 + exp(-(1.2 m + bias)))), so
// class boundaries sit at logistic values 0.335 and 0.665.
std::array<double, 3> marginal_oracle(double bias) {
    auto phi = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    double lo = (std::log(0.335 / 0.665) - bias) / 1.2;
    double hi = (std::log(0.665 / 0.335) - bias) / 1.2;
    double p0 = phi(lo);
    double p2 = 1.0 - phi(hi);
    return {p0, 1.0 - p0 - p2, p2};
}

// Fraction of tokens drawn from the given word set, pooled over all events of
// the sample (optionally restricted to one app).
std::pair<int64_t, int64_t> lexicon_tokens(const data_model::DailySample& s,
                                           const std::vector<std::string>& lexicon,
                                           const std::string& app_filter = "") {
    int64_t hits = 0, total = 0;
    for (const auto& e : s.events) {
        if (!app_filter.empty() && e.app != app_filter) continue;
        for (const auto& tok : featurizer::tokenize(e.text)) {
            ++total;
            for (const auto& w : lexicon)
                if (tok == w) {
                    ++hits;
                    break;
                }
        }
    }
    return {hits, total};
}

std::vector<std::string> signal_words(bool positive_only, bool negative_only) {
    std::vector<std::string> out;
    for (int w = 0; w < 16; ++w) {
        bool pos = w % 2 == 0;
        if (positive_only && !pos) continue;
        if (negative_only && pos) continue;
        char buf[8];
        std::snprintf(buf, sizeof(buf), "w%03d", w);
        out.emplace_back(buf);
    }
    return out;
}

}  // namespace

TEST_CASE("synth config validates ranges and round-trips through key=value text") {
    SynthConfig c;
    c.num_users = 7;
    c.days_per_user = 42;
    c.identity_confound = 0.25;
    c.mood_signal = 0.5;
    c.interaction_signal = 0.75;
    c.mood_autocorr = 0.6;
    c.events_per_day = 9.5;
    c.mood_bias = -0.3;
    c.start_date = "2022-11-05";
    c.seed = 99;
    c.validate();

    auto parsed = SynthConfig::from_config(Config::parse(c.to_config().render()));
    CHECK(parsed.num_users == c.num_users);
    CHECK(parsed.days_per_user == c.days_per_user);
    CHECK(parsed.vocab_size_words == c.vocab_size_words);
    CHECK(parsed.vocab_size_apps == c.vocab_size_apps);
    CHECK(parsed.identity_confound == c.identity_confound);
    CHECK(parsed.mood_signal == c.mood_signal);
    CHECK(parsed.interaction_signal == c.interaction_signal);
    CHECK(parsed.mood_autocorr == c.mood_autocorr);
    CHECK(parsed.events_per_day == c.events_per_day);
    CHECK(parsed.mood_bias == c.mood_bias);
    CHECK(parsed.start_date == c.start_date);
    CHECK(parsed.seed == c.seed);

    auto reject = [](auto mutate) {
        SynthConfig bad;
        mutate(bad);
        CHECK_THROWS(bad.validate());
    };
    reject([](SynthConfig& s) { s.num_users = 1; });
    reject([](SynthConfig& s) { s.days_per_user = 0; });
    reject([](SynthConfig& s) { s.vocab_size_words = 16; });
    reject([](SynthConfig& s) { s.vocab_size_apps = 1; });
    reject([](SynthConfig& s) { s.identity_confound = 1.5; });
    reject([](SynthConfig& s) { s.mood_signal = -0.1; });
    reject([](SynthConfig& s) { s.interaction_signal = 2.0; });
    reject([](SynthConfig& s) { s.mood_autocorr = 1.0; });
    reject([](SynthConfig& s) { s.events_per_day = 0.0; });
    reject([](SynthConfig& s) { s.start_date = "2022-13-05"; });
}

TEST_CASE("poisson sampler matches the distribution's moments") {
    Rng rng{substream(31337, "poisson_check")};
    const int n = 20000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        auto v = static_cast<double>(synthgen::detail::poisson(rng, 18.0));
        sum += v;
        sumsq += v * v;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean - 18.0) < 0.3);
    CHECK(std::abs(var - 18.0) < 1.5);

    int zeros = 0;
    for (int i = 0; i < n; ++i)
        if (synthgen::detail::poisson(rng, 1.0) == 0) ++zeros;
    CHECK(std::abs(static_cast<double>(zeros) / n - std::exp(-1.0)) < 0.02);

    CHECK(synthgen::detail::poisson(rng, 0.0) == 0);
}

TEST_CASE("generation is byte-identical for identical configs") {
    SynthConfig c;
    c.num_users = 3;
    c.days_per_user = 12;
    c.seed = 4242;
    auto a = generate(c);
    auto b = generate(c);
    CHECK(a.events_jsonl == b.events_jsonl);
    CHECK(a.labels_csv == b.labels_csv);
    CHECK(!a.events_jsonl.empty());

    c.seed = 4243;
    auto d = generate(c);
    CHECK(a.events_jsonl != d.events_jsonl);
    CHECK(a.labels_csv != d.labels_csv);
}

TEST_CASE("generated files round-trip through the data loaders") {
    SynthConfig c;
    c.num_users = 4;
    c.days_per_user = 30;
    c.seed = 11;
    auto loaded = load_dataset(generate(c), "roundtrip");

    CHECK(loaded.labels.size() == static_cast<size_t>(c.num_users * c.days_per_user));
    CHECK(loaded.samples.size() == loaded.labels.size());

    // Every generated event lands inside the ingestion window of exactly one
    // labeled day (events are typed 07:00-23:00 on the day before the label).
    size_t attached = 0;
    double token_sum = 0.0;
    size_t token_events = 0;
    for (const auto& s : loaded.samples) {
        auto [lo, hi] = data_model::sample_window_ms(s.date, 0);
        for (const auto& e : s.events) {
            CHECK(e.ts_ms >= lo);
            CHECK(e.ts_ms < hi);
            CHECK(e.ts_ms > 0);
            auto toks = featurizer::tokenize(e.text);
            CHECK(toks.size() >= 4);
            token_sum += static_cast<double>(toks.size());
            ++token_events;
        }
        attached += s.events.size();
        CHECK(s.label == data_model::discretize_score(s.raw_score));
    }
    CHECK(attached == loaded.total_events);
    CHECK(token_events > 1000);
    CHECK(std::abs(token_sum / static_cast<double>(token_events) - 8.0) < 0.3);
}

TEST_CASE("empirical class marginal matches the closed-form target at D=1000") {
    for (double bias : {0.0, -0.8}) {
        SynthConfig c;
        c.num_users = 5;
        c.days_per_user = 1000;
        c.events_per_day = 2.0;  // marginal depends only on the label stream
        c.mood_bias = bias;
        c.seed = 71;
        auto analytic = analytic_class_marginal(c);
        auto oracle = marginal_oracle(bias);
        for (int k = 0; k < 3; ++k) CHECK(std::abs(analytic[static_cast<size_t>(k)] - oracle[static_cast<size_t>(k)]) < 1e-12);

        auto ds = generate(c);
        std::array<int64_t, 3> counts{};
        std::istringstream in(ds.labels_csv);
        std::string line;
        std::getline(in, line);  // header
        int64_t n = 0;
        while (std::getline(in, line)) {
            auto pos = line.rfind(',');
            int score = std::stoi(line.substr(pos + 1));
            ++counts[static_cast<size_t>(data_model::discretize_score(score))];
            ++n;
        }
        REQUIRE(n == c.num_users * c.days_per_user);
        for (int k = 0; k < 3; ++k) {
            double freq = static_cast<double>(counts[static_cast<size_t>(k)]) / static_cast<double>(n);
            CHECK(std::abs(freq - oracle[static_cast<size_t>(k)]) < 0.03);
        }
    }
    // A negative bias shifts mass toward the negative class.
    SynthConfig flat;
    SynthConfig skew;
    skew.mood_bias = -0.8;
    CHECK(analytic_class_marginal(skew)[0] > analytic_class_marginal(flat)[0] + 0.1);
}

TEST_CASE("mood autocorrelation knob controls day-to-day label dependence") {
    auto mean_lag1 = [](double rho, uint64_t seed) {
        SynthConfig c;
        c.num_users = 4;
        c.days_per_user = 300;
        c.events_per_day = 1.0;
        c.mood_autocorr = rho;
        c.seed = seed;
        auto ds = generate(c);
        std::map<std::string, std::vector<double>> series;
        std::istringstream in(ds.labels_csv);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            auto first = line.find(',');
            auto last = line.rfind(',');
            series[line.substr(0, first)].push_back(std::stod(line.substr(last + 1)));
        }
        double total = 0.0;
        for (const auto& [_, xs] : series) {
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            auto n = static_cast<double>(xs.size() - 1);
            for (size_t i = 0; i + 1 < xs.size(); ++i) {
                double x = xs[i], y = xs[i + 1];
                sx += x; sy += y; sxx += x * x; syy += y * y; sxy += x * y;
            }
            double cov = sxy / n - (sx / n) * (sy / n);
            double vx = sxx / n - (sx / n) * (sx / n);
            double vy = syy / n - (sy / n) * (sy / n);
            total += cov / std::sqrt(vx * vy);
        }
        return total / static_cast<double>(series.size());
    };
    CHECK(mean_lag1(0.8, 5) > 0.45);
    CHECK(std::abs(mean_lag1(0.0, 5)) < 0.15);
}

TEST_CASE("identity confound drives a user probe on raw fused features") {
    auto probe_accuracy = [](double beta_id) {
        SynthConfig c;
        c.num_users = 6;
        c.days_per_user = 50;
        c.identity_confound = beta_id;
        c.mood_signal = 0.0;
        c.interaction_signal = 0.0;
        c.seed = 3;
        auto loaded = load_dataset(generate(c), "probe");
        auto counts = featurizer::count_samples(loaded.samples);
        auto text_vocab = featurizer::build_text_vocab(loaded.samples, 1000, featurizer::default_stopwords(), &counts);
        auto app_vocab = featurizer::build_app_vocab(loaded.samples, 0.10, &counts);
        auto feats = featurizer::featurize(loaded.samples, counts, &text_vocab, &app_vocab,
                                           featurizer::Modality::Fused);
        auto roster = data_model::Roster::from_samples(loaded.samples);
        auto result = audit::train_identity_probe(feats.rows, roster.indices(loaded.samples), 5, 17);
        return result.accuracy;
    };
    CHECK(probe_accuracy(1.0) >= 0.95);
    CHECK(probe_accuracy(0.0) <= 1.0 / 6.0 + 0.12);
}

TEST_CASE("signal lexicon rate tracks mood polarity when mood_signal is on") {
    SynthConfig c;
    c.num_users = 4;
    c.days_per_user = 100;
    c.identity_confound = 0.0;
    c.mood_signal = 1.0;
    c.interaction_signal = 0.0;
    c.seed = 29;
    auto loaded = load_dataset(generate(c), "lexicon");

    auto pos = signal_words(true, false);
    auto neg = signal_words(false, true);
    std::array<double, 3> pos_share{}, neg_share{};
    std::array<int64_t, 3> tokens{};
    for (const auto& s : loaded.samples) {
        auto k = static_cast<size_t>(s.label);
        auto [ph, pt] = lexicon_tokens(s, pos);
        auto [nh, nt] = lexicon_tokens(s, neg);
        REQUIRE(pt == nt);
        pos_share[k] += static_cast<double>(ph);
        neg_share[k] += static_cast<double>(nh);
        tokens[k] += pt;
    }
    for (int k = 0; k < 3; ++k) {
        REQUIRE(tokens[static_cast<size_t>(k)] > 0);
        pos_share[static_cast<size_t>(k)] /= static_cast<double>(tokens[static_cast<size_t>(k)]);
        neg_share[static_cast<size_t>(k)] /= static_cast<double>(tokens[static_cast<size_t>(k)]);
    }
    CHECK(pos_share[2] > pos_share[1] + 0.08);
    CHECK(pos_share[1] > pos_share[0] + 0.08);
    CHECK(neg_share[0] > neg_share[1] + 0.08);
    CHECK(neg_share[1] > neg_share[2] + 0.08);
}

TEST_CASE("interaction signal is sign-blind in text alone but signed with app context") {
    SynthConfig c;
    c.num_users = 4;
    c.days_per_user = 150;
    c.identity_confound = 0.0;
    c.mood_signal = 0.0;
    c.interaction_signal = 1.0;
    c.seed = 13;
    auto loaded = load_dataset(generate(c), "interaction");

    auto lexicon = signal_words(false, false);  // all 16 signal words
    std::array<double, 3> pooled_share{}, contrast{};
    std::array<int64_t, 3> pooled_tokens{};
    std::array<int64_t, 3> contrast_n{};
    for (const auto& s : loaded.samples) {
        auto k = static_cast<size_t>(s.label);
        auto [hits, total] = lexicon_tokens(s, lexicon);
        pooled_share[k] += static_cast<double>(hits);
        pooled_tokens[k] += total;
        auto [h0, t0] = lexicon_tokens(s, lexicon, "app00");
        auto [h1, t1] = lexicon_tokens(s, lexicon, "app01");
        if (t0 > 0 && t1 > 0) {
            contrast[k] += static_cast<double>(h0) / static_cast<double>(t0) -
                           static_cast<double>(h1) / static_cast<double>(t1);
            ++contrast_n[k];
        }
    }
    for (int k = 0; k < 3; ++k) {
        REQUIRE(pooled_tokens[static_cast<size_t>(k)] > 0);
        REQUIRE(contrast_n[static_cast<size_t>(k)] > 20);
        pooled_share[static_cast<size_t>(k)] /= static_cast<double>(pooled_tokens[static_cast<size_t>(k)]);
        contrast[static_cast<size_t>(k)] /= static_cast<double>(contrast_n[static_cast<size_t>(k)]);
    }
    // Pooled text frequencies cannot tell negative from positive days...
    CHECK(std::abs(pooled_share[0] - pooled_share[2]) < 0.06);
    // ...but the within-app contrast recovers the sign immediately.
    CHECK(contrast[2] > contrast[0] + 0.3);
    CHECK(contrast[2] > contrast[1] + 0.15);
    CHECK(contrast[0] < contrast[1] - 0.15);
}

TEST_CASE("describe reports participation, class balance, and vocab stats") {
    SynthConfig c;
    c.num_users = 17;
    c.days_per_user = 55;
    c.seed = 8;
    auto loaded = load_dataset(generate(c), "describe");
    auto summary = describe(loaded.samples);

    CHECK(summary.num_samples == static_cast<size_t>(17 * 55));
    CHECK(summary.num_users == 17);
    CHECK(summary.users_passing_filter == 17);
    CHECK(summary.min_user_count == 55);
    CHECK(summary.max_user_count == 55);
    CHECK(summary.class_counts[0] + summary.class_counts[1] + summary.class_counts[2] ==
          static_cast<int64_t>(summary.num_samples));
    CHECK(summary.distinct_apps <= 12);
    CHECK(summary.distinct_words <= 160);
    CHECK(summary.total_events > 0);

    // Consistent with the participation filter itself.
    CHECK(data_model::filter_participants(loaded.samples, 50).size() == loaded.samples.size());

    auto text = render_summary(summary);
    CHECK(text.find("samples: 935") != std::string::npos);
    CHECK(text.find("17 with >= 50 reports") != std::string::npos);
    CHECK(text.find("[below filter]") == std::string::npos);

    auto strict = describe(loaded.samples, 60);
    CHECK(strict.users_passing_filter == 0);
    CHECK(render_summary(strict).find("[below filter]") != std::string::npos);

    CHECK_THROWS(describe({}));
}

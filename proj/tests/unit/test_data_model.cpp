#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "moodveil/data_model.hpp"
#include "moodveil/io.hpp"
#include "moodveil/rng.hpp"

using namespace moodveil;
using namespace moodveil::data_model;

namespace {

std::string temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "moodveil_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

int64_t local_ms(const CivilDate& d, int hour, int minute, int tz_offset_min = 0) {
    return days_from_civil(d) * 86400000LL + (hour * 60LL + minute) * 60000LL -
           static_cast<int64_t>(tz_offset_min) * 60000LL;
}

}  // namespace

TEST_CASE("load_events parses, sorts, and counts malformed lines") {
    auto path = temp_path("events_basic.jsonl");
    write_file(path,
               R"({"user_id":"u2","ts_ms":500,"app":"mail","text":"hello"})"
               "\n"
               R"({"user_id":"u1","ts_ms":900,"app":"chat","text":"later"})"
               "\n"
               R"({"user_id":"u1","ts_ms":100,"app":"chat","text":"first"})"
               "\n");
    LoadStats stats;
    auto events = load_events(path, &stats);
    REQUIRE(events.size() == 3);
    CHECK(stats.malformed == 0);
    CHECK(events[0].user_id == "u1");
    CHECK(events[0].ts_ms == 100);
    CHECK(events[1].ts_ms == 900);
    CHECK(events[2].user_id == "u2");
}

TEST_CASE("load_events on empty file returns empty list") {
    auto path = temp_path("events_empty.jsonl");
    write_file(path, "");
    auto events = load_events(path);
    CHECK(events.empty());
}

TEST_CASE("load_events skips malformed lines and errors past 10%") {
    auto path = temp_path("events_malformed.jsonl");
    // 1 valid + 1 malformed -> skip count 1, but >10% malformed is fatal
    write_file(path,
               R"({"user_id":"u1","ts_ms":100,"app":"chat","text":"x"})"
               "\n"
               "not json at all\n");
    CHECK_THROWS_AS(load_events(path), Error);

    // 1 malformed out of 20 lines stays a warning
    std::string content;
    for (int i = 0; i < 19; ++i)
        content += R"({"user_id":"u1","ts_ms":)" + std::to_string(i + 1) +
                   R"(,"app":"chat","text":"x"})" "\n";
    content += R"({"user_id":"u1","ts_ms":-5,"app":"chat","text":"x"})" "\n";  // ts must be positive
    write_file(path, content);
    LoadStats stats;
    auto events = load_events(path, &stats);
    CHECK(events.size() == 19);
    CHECK(stats.malformed == 1);
}

TEST_CASE("load_events rejects empty app and non-positive timestamps") {
    auto path = temp_path("events_invariants.jsonl");
    std::string content;
    for (int i = 0; i < 30; ++i)
        content += R"({"user_id":"u1","ts_ms":)" + std::to_string(i + 1) +
                   R"(,"app":"ok","text":""})" "\n";
    content += R"({"user_id":"u1","ts_ms":31,"app":"","text":"x"})" "\n";
    content += R"({"user_id":"u1","ts_ms":0,"app":"a","text":"x"})" "\n";
    write_file(path, content);
    LoadStats stats;
    auto events = load_events(path, &stats);
    CHECK(events.size() == 30);
    CHECK(stats.malformed == 2);
}

TEST_CASE("load_labels parses rows and rejects bad scores") {
    auto path = temp_path("labels_basic.csv");
    write_file(path,
               "user_id,date,score\n"
               "u1,2024-01-02,70\n"
               "u1,2024-01-03,101\n"
               "u2,2024-01-02,0\n");
    LoadStats stats;
    auto labels = load_labels(path, &stats);
    REQUIRE(labels.size() == 2);
    CHECK(labels[0].user_id == "u1");
    CHECK(labels[0].score == 70);
    CHECK(labels[0].date == CivilDate{2024, 1, 2});
    CHECK(stats.malformed == 1);
}

TEST_CASE("load_labels rejects duplicate (user, date) rows") {
    auto path = temp_path("labels_dup.csv");
    write_file(path,
               "user_id,date,score\n"
               "u1,2024-01-02,70\n"
               "u1,2024-01-02,71\n");
    CHECK_THROWS_AS(load_labels(path), Error);
}

TEST_CASE("discretize_score bins match the 0-33/34-66/67-100 rule") {
    CHECK(discretize_score(0) == MoodClass::Negative);
    CHECK(discretize_score(33) == MoodClass::Negative);
    CHECK(discretize_score(34) == MoodClass::Neutral);
    CHECK(discretize_score(66) == MoodClass::Neutral);
    CHECK(discretize_score(67) == MoodClass::Positive);
    CHECK(discretize_score(100) == MoodClass::Positive);
    CHECK_THROWS_AS(discretize_score(101), Error);
    CHECK_THROWS_AS(discretize_score(-1), Error);
}

TEST_CASE("discretize_score is monotone nondecreasing over 0..100") {
    int prev = 0;
    for (int s = 0; s <= 100; ++s) {
        int code = static_cast<int>(discretize_score(s));
        CHECK(code >= prev);
        prev = code;
    }
}

TEST_CASE("window_events honors the half-open 5AM boundary") {
    CivilDate d{2024, 3, 10};
    std::vector<KeystrokeEvent> events = {
        {"u1", local_ms(d, 4, 59), "chat", "before five"},
        {"u1", local_ms(d, 5, 0), "chat", "at five"},
    };
    std::vector<LabelRecord> labels = {
        {"u1", d, 50},
        {"u1", add_days(d, 1), 80},
    };
    auto samples = window_events(events, labels);
    REQUIRE(samples.size() == 2);
    REQUIRE(samples[0].events.size() == 1);
    CHECK(samples[0].events[0].text == "before five");
    REQUIRE(samples[1].events.size() == 1);
    CHECK(samples[1].events[0].text == "at five");
}

TEST_CASE("window_events respects the timezone offset") {
    CivilDate d{2024, 3, 10};
    // +120 min offset: local 04:59 is UTC 02:59
    int tz = 120;
    std::vector<KeystrokeEvent> events = {
        {"u1", local_ms(d, 4, 59, tz), "chat", "in window"},
        {"u1", local_ms(d, 5, 0, tz), "chat", "next window"},
    };
    std::vector<LabelRecord> labels = {{"u1", d, 50}};
    WindowOptions opt;
    opt.tz_offset_min = tz;
    auto samples = window_events(events, labels, opt);
    REQUIRE(samples.size() == 1);
    REQUIRE(samples[0].events.size() == 1);
    CHECK(samples[0].events[0].text == "in window");
}

TEST_CASE("labels with no events still yield samples unless dropped") {
    CivilDate d{2024, 3, 10};
    std::vector<KeystrokeEvent> events;
    std::vector<LabelRecord> labels = {{"u1", d, 10}};
    auto samples = window_events(events, labels);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].events.empty());
    CHECK(samples[0].label == MoodClass::Negative);

    WindowOptions opt;
    opt.drop_empty_days = true;
    CHECK(window_events(events, labels, opt).empty());
}

TEST_CASE("windowing partitions events over consecutive labeled days") {
    // property: with labels covering consecutive days, every event in the
    // covered range lands in exactly one sample of its user
    Rng rng(substream(20240310, "window_partition"));
    CivilDate base{2024, 5, 1};
    int days = 7;
    std::vector<LabelRecord> labels;
    for (int d = 0; d < days; ++d) {
        labels.push_back({"u1", add_days(base, d), 50});
        labels.push_back({"u2", add_days(base, d), 60});
    }
    auto [range_lo, ignored] = sample_window_ms(base, 0);
    auto [ignored2, range_hi] = sample_window_ms(add_days(base, days - 1), 0);
    std::vector<KeystrokeEvent> events;
    for (int i = 0; i < 500; ++i) {
        int64_t ts = range_lo + static_cast<int64_t>(rng.uniform() * static_cast<double>(range_hi - range_lo));
        events.push_back({rng.uniform() < 0.5 ? "u1" : "u2", ts, "app", "x"});
    }
    auto samples = window_events(events, labels);
    size_t assigned = 0;
    for (const auto& s : samples) assigned += s.events.size();
    CHECK(assigned == events.size());
    // no duplication: (user, ts) pairs unique across samples
    std::set<std::pair<std::string, int64_t>> seen;
    for (const auto& s : samples)
        for (const auto& e : s.events) {
            auto [it, inserted] = seen.insert({e.user_id, e.ts_ms});
            (void)it;
            CHECK(inserted);
        }
}

TEST_CASE("filter_participants applies the min-reports threshold") {
    std::vector<DailySample> samples;
    CivilDate base{2024, 1, 1};
    for (int i = 0; i < 49; ++i) samples.push_back({"u_low", add_days(base, i), {}, MoodClass::Neutral, 50});
    for (int i = 0; i < 50; ++i) samples.push_back({"u_ok", add_days(base, i), {}, MoodClass::Neutral, 50});

    auto kept = filter_participants(samples, 50);
    CHECK(kept.size() == 50);
    for (const auto& s : kept) CHECK(s.user_id == "u_ok");

    std::vector<DailySample> all_low(samples.begin(), samples.begin() + 49);
    CHECK_THROWS_AS(filter_participants(all_low, 50), Error);
}

TEST_CASE("roster re-indexing is a deterministic bijection") {
    std::vector<DailySample> samples;
    CivilDate base{2024, 1, 1};
    for (const char* u : {"zeta", "alpha", "mid", "alpha"}) samples.push_back({u, base, {}, MoodClass::Neutral, 50});
    auto roster = Roster::from_samples(samples);
    REQUIRE(roster.size() == 3);
    CHECK(roster.users() == std::vector<std::string>{"alpha", "mid", "zeta"});
    std::set<size_t> indices;
    for (const auto& u : roster.users()) indices.insert(roster.index(u));
    CHECK(indices == std::set<size_t>{0, 1, 2});
    CHECK_THROWS_AS(roster.index("unknown"), Error);
}

TEST_CASE("event JSON round-trips through the line format") {
    KeystrokeEvent e{"u1", 1234, "chat", "hi there"};
    auto line = event_to_json_line(e);
    auto path = temp_path("events_roundtrip.jsonl");
    write_file(path, line + "\n");
    auto events = load_events(path);
    REQUIRE(events.size() == 1);
    CHECK(events[0].user_id == e.user_id);
    CHECK(events[0].ts_ms == e.ts_ms);
    CHECK(events[0].app == e.app);
    CHECK(events[0].text == e.text);
}

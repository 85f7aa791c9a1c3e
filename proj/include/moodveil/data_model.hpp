#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "moodveil/common.hpp"
#include "moodveil/dates.hpp"
#include "moodveil/io.hpp"

namespace moodveil::data_model {

struct KeystrokeEvent {
    std::string user_id;
    int64_t ts_ms = 0;  // UTC epoch milliseconds, strictly positive
    std::string app;    // non-empty
    std::string text;   // may be empty
};

struct LabelRecord {
    std::string user_id;
    CivilDate date;  // local calendar date
    int score = 0;   // 0..100
};

enum class MoodClass : int { Negative = 0, Neutral = 1, Positive = 2 };
inline constexpr int kNumClasses = 3;

inline const char* mood_name(MoodClass c) {
    switch (c) {
        case MoodClass::Negative: return "negative";
        case MoodClass::Neutral: return "neutral";
        case MoodClass::Positive: return "positive";
    }
    return "?";
}

// One (user, day) unit: the user's events between 5AM the previous day and
// 5AM the labeled day, plus the discretized mood label.
struct DailySample {
    std::string user_id;
    CivilDate date;
    std::vector<KeystrokeEvent> events;  // sorted ascending by ts_ms
    MoodClass label = MoodClass::Neutral;
    int raw_score = 0;

    std::string key() const { return user_id + "\x1f" + to_iso(date); }
    uint64_t key_hash() const { return fnv1a64(key()); }
};

// Deterministic participant roster: users sorted lexicographically, indexed
// 0..U-1. The one-hot identity x_id of a sample is its user's index.
class Roster {
public:
    Roster() = default;

    explicit Roster(std::vector<std::string> users) : users_(std::move(users)) {
        std::sort(users_.begin(), users_.end());
        users_.erase(std::unique(users_.begin(), users_.end()), users_.end());
        for (size_t i = 0; i < users_.size(); ++i) index_[users_[i]] = i;
    }

    static Roster from_samples(const std::vector<DailySample>& samples) {
        std::vector<std::string> users;
        users.reserve(samples.size());
        for (const auto& s : samples) users.push_back(s.user_id);
        return Roster(std::move(users));
    }

    size_t size() const { return users_.size(); }
    const std::vector<std::string>& users() const { return users_; }

    size_t index(const std::string& user) const {
        auto it = index_.find(user);
        if (it == index_.end()) fail("user not in roster: " + user);
        return it->second;
    }

    std::vector<int> indices(const std::vector<DailySample>& samples) const {
        std::vector<int> out;
        out.reserve(samples.size());
        for (const auto& s : samples) out.push_back(static_cast<int>(index(s.user_id)));
        return out;
    }

private:
    std::vector<std::string> users_;
    std::unordered_map<std::string, size_t> index_;
};

struct LoadStats {
    size_t parsed = 0;
    size_t malformed = 0;
};

// Events file: one JSON object per line with fields user_id, ts_ms, app, text.
// Malformed lines are skipped with a warning; more than 10% malformed is an error.
inline std::vector<KeystrokeEvent> load_events(const std::string& path, LoadStats* stats = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open events file: " + path);

    std::vector<KeystrokeEvent> events;
    size_t malformed = 0, total = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++total;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        bool ok = j.is_object() && j.contains("user_id") && j["user_id"].is_string() &&
                  j.contains("ts_ms") && j["ts_ms"].is_number_integer() && j.contains("app") &&
                  j["app"].is_string() && j.contains("text") && j["text"].is_string();
        if (ok) {
            KeystrokeEvent e{j["user_id"].get<std::string>(), j["ts_ms"].get<int64_t>(),
                             j["app"].get<std::string>(), j["text"].get<std::string>()};
            if (e.ts_ms <= 0 || e.app.empty()) ok = false;
            if (ok) events.push_back(std::move(e));
        }
        if (!ok) ++malformed;
    }
    if (total == 0) warn("events file is empty: " + path);
    if (malformed > 0) {
        warn(std::to_string(malformed) + " malformed event line(s) skipped in " + path);
        if (10 * malformed > total)
            fail("more than 10% of event lines are malformed in " + path + " (" +
                 std::to_string(malformed) + "/" + std::to_string(total) + ")");
    }
    std::stable_sort(events.begin(), events.end(), [](const KeystrokeEvent& a, const KeystrokeEvent& b) {
        if (a.user_id != b.user_id) return a.user_id < b.user_id;
        return a.ts_ms < b.ts_ms;
    });
    if (stats) *stats = LoadStats{total - malformed, malformed};
    return events;
}

// Labels file: CSV with header user_id,date,score. Rows with out-of-range
// scores are rejected with a warning; duplicate (user, date) keys are fatal.
inline std::vector<LabelRecord> load_labels(const std::string& path, LoadStats* stats = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open labels file: " + path);

    std::string header;
    if (!std::getline(in, header)) fail("labels file is empty: " + path);
    auto cols = csv_parse_line(trim(header));
    if (cols.size() != 3 || cols[0] != "user_id" || cols[1] != "date" || cols[2] != "score")
        fail("labels file " + path + ": expected header user_id,date,score");

    std::vector<LabelRecord> records;
    std::map<std::pair<std::string, std::string>, int> seen;
    size_t rejected = 0, total = 0;
    std::string line;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        ++total;
        auto fields = csv_parse_line(line);
        if (fields.size() != 3) {
            warn(path + ":" + std::to_string(lineno) + ": expected 3 fields, row rejected");
            ++rejected;
            continue;
        }
        LabelRecord r;
        r.user_id = fields[0];
        try {
            r.date = parse_iso_date(trim(fields[1]));
            size_t pos = 0;
            r.score = std::stoi(trim(fields[2]), &pos);
        } catch (const std::exception& e) {
            warn(path + ":" + std::to_string(lineno) + ": " + e.what() + ", row rejected");
            ++rejected;
            continue;
        }
        if (r.score < 0 || r.score > 100) {
            warn(path + ":" + std::to_string(lineno) + ": score " + std::to_string(r.score) +
                 " outside 0-100, row rejected");
            ++rejected;
            continue;
        }
        auto key = std::make_pair(r.user_id, to_iso(r.date));
        if (auto it = seen.find(key); it != seen.end())
            fail(path + ":" + std::to_string(lineno) + ": duplicate label for (" + r.user_id + ", " +
                 key.second + "), first seen at line " + std::to_string(it->second));
        seen.emplace(key, lineno);
        records.push_back(std::move(r));
    }
    if (stats) *stats = LoadStats{total - rejected, rejected};
    return records;
}

// negative 0-33, neutral 34-66, positive 67-100
inline MoodClass discretize_score(int score) {
    if (score < 0 || score > 100) fail("score out of range: " + std::to_string(score));
    if (score <= 33) return MoodClass::Negative;
    if (score <= 66) return MoodClass::Neutral;
    return MoodClass::Positive;
}

struct WindowOptions {
    int tz_offset_min = 0;      // local time = UTC + offset
    bool drop_empty_days = false;
};

// Half-open feature window for the sample labeled `date`:
// [05:00 local on date-1, 05:00 local on date).
inline std::pair<int64_t, int64_t> sample_window_ms(const CivilDate& date, int tz_offset_min) {
    int64_t day = days_from_civil(date);
    int64_t five_am = 5LL * 3600 * 1000;
    int64_t offset = static_cast<int64_t>(tz_offset_min) * 60 * 1000;
    int64_t end = day * 86400000LL + five_am - offset;
    return {end - 86400000LL, end};
}

// One DailySample per label record; events routed into their window and kept
// timestamp-sorted. Labels with no events still yield (empty) samples unless
// drop_empty_days is set.
inline std::vector<DailySample> window_events(const std::vector<KeystrokeEvent>& events,
                                              const std::vector<LabelRecord>& labels,
                                              const WindowOptions& opt = {}) {
    // per-user time-sorted event index
    std::unordered_map<std::string, std::vector<const KeystrokeEvent*>> by_user;
    for (const auto& e : events) by_user[e.user_id].push_back(&e);
    for (auto& [user, evs] : by_user)
        std::stable_sort(evs.begin(), evs.end(),
                         [](const KeystrokeEvent* a, const KeystrokeEvent* b) { return a->ts_ms < b->ts_ms; });

    std::vector<DailySample> samples;
    samples.reserve(labels.size());
    for (const auto& label : labels) {
        DailySample s;
        s.user_id = label.user_id;
        s.date = label.date;
        s.raw_score = label.score;
        s.label = discretize_score(label.score);
        auto [lo, hi] = sample_window_ms(label.date, opt.tz_offset_min);
        if (auto it = by_user.find(label.user_id); it != by_user.end()) {
            const auto& evs = it->second;
            auto first = std::lower_bound(evs.begin(), evs.end(), lo,
                                          [](const KeystrokeEvent* e, int64_t t) { return e->ts_ms < t; });
            for (auto p = first; p != evs.end() && (*p)->ts_ms < hi; ++p) s.events.push_back(**p);
        }
        if (opt.drop_empty_days && s.events.empty()) continue;
        samples.push_back(std::move(s));
    }
    return samples;
}

// Drops every sample of users with fewer than min_reports samples.
inline std::vector<DailySample> filter_participants(const std::vector<DailySample>& samples,
                                                    size_t min_reports = 50) {
    std::unordered_map<std::string, size_t> counts;
    for (const auto& s : samples) ++counts[s.user_id];
    std::vector<DailySample> kept;
    for (const auto& s : samples)
        if (counts[s.user_id] >= min_reports) kept.push_back(s);
    if (kept.empty())
        fail("no participants left after the min-" + std::to_string(min_reports) + "-reports filter");
    return kept;
}

inline std::string event_to_json_line(const KeystrokeEvent& e) {
    nlohmann::json j;
    j["user_id"] = e.user_id;
    j["ts_ms"] = e.ts_ms;
    j["app"] = e.app;
    j["text"] = e.text;
    return j.dump();
}

}  // namespace moodveil::data_model

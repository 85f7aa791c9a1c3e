#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "moodveil/common.hpp"
#include "moodveil/data_model.hpp"

namespace moodveil::models {

// Constant predictor: the modal class of the training labels, ties to the
// lowest class code.
struct MajorityModel {
    int modal_class = 0;
    std::array<int64_t, 3> class_counts{};
    std::vector<uint64_t> fit_keys;
};

inline MajorityModel train_majority(const std::vector<int>& labels, std::vector<uint64_t> fit_keys = {}) {
    if (labels.empty()) fail("train_majority: empty training set");
    MajorityModel m;
    for (int y : labels) {
        if (y < 0 || y >= data_model::kNumClasses) fail("train_majority: label outside {0,1,2}");
        m.class_counts[static_cast<size_t>(y)]++;
    }
    for (int c = 1; c < data_model::kNumClasses; ++c)
        if (m.class_counts[static_cast<size_t>(c)] > m.class_counts[static_cast<size_t>(m.modal_class)])
            m.modal_class = c;
    m.fit_keys = std::move(fit_keys);
    return m;
}

inline int majority_predict(const MajorityModel& m) { return m.modal_class; }

}  // namespace moodveil::models

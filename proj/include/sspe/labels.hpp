#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "sspe/matrix.hpp"

namespace sspe {

// The two grades this toolkit models. Class index 0 is KL-0, index 1 is KL-2.
enum class Grade { kl0 = 0, kl2 = 1 };

inline const char* to_string(Grade g) { return g == Grade::kl0 ? "KL-0" : "KL-2"; }

inline Grade grade_from_string(const std::string& s) {
    if (s == "KL-0" || s == "0") return Grade::kl0;
    if (s == "KL-2" || s == "2") return Grade::kl2;
    throw std::invalid_argument("unknown grade: " + s);
}

inline Matrix one_hot(Grade g) {
    Matrix m(1, 2);
    m.data[g == Grade::kl0 ? 0 : 1] = 1.0;
    return m;
}

// Partition tag for exchanged sequences: full-KL when every key patch carries
// the same grade, mixed-KL otherwise.
enum class SetTag { full_kl, mixed_kl };

inline const char* to_string(SetTag t) { return t == SetTag::full_kl ? "full-KL" : "mixed-KL"; }

// Label of a composed sequence: KL-0 iff every key patch is KL-0.
inline Grade assign_label(const std::vector<Grade>& key_labels) {
    if (key_labels.empty()) throw std::invalid_argument("assign_label: empty label list");
    for (Grade g : key_labels)
        if (g != Grade::kl0) return Grade::kl2;
    return Grade::kl0;
}

}  // namespace sspe

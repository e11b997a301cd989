#pragma once

// Seeded generator for Adult-like binary classification data with a sensitive
// attribute that is both under-represented and correlated with the label.

#include "drfermi/dataset.hpp"

#include <cstdint>

namespace drfermi {

struct SyntheticSpec {
    long n = 2000;
    double p_minority = 0.3307;         ///< P(s = minority)
    double p_positive = 0.24;           ///< P(y = 1)
    double p_minority_given_pos = 0.1503;  ///< P(s = minority | y = 1)
    long dim = 4;
    double label_signal = 1.0;      ///< separation of the label in the feature means
    double sensitive_signal = 1.0;  ///< separation of the sensitive level in the feature means
    double noise = 1.0;
    std::uint64_t seed = 0;
};

/// Labels are "<=50K" / ">50K" (y = 1 is ">50K"), the sensitive column is
/// "sex" with levels "Man" / "Woman" ("Woman" is the minority, index 1).
/// Feature 0 tracks the label, feature 1 tracks the sensitive level and the
/// rest mix both with fixed random loadings.
Dataset make_adult_like(const SyntheticSpec& spec);

/// Index of the minority level in datasets from `make_adult_like`.
inline constexpr int kMinorityLevel = 1;

}  // namespace drfermi

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace drfermi {

/// One model input column. A categorical source column expands to one
/// indicator column per category.
struct FeatureColumn {
    std::string source;
    std::optional<std::string> category;
    bool standardize = true;

    std::string name() const { return category ? source + "=" + *category : source; }
};

/// Everything needed to re-encode a CSV file the same way as the training file.
struct Encoding {
    std::string label_name = "label";
    std::string sensitive_name = "sensitive";
    std::vector<std::string> label_levels;
    std::vector<std::string> sensitive_levels;
    std::vector<FeatureColumn> features;
};

/// Column roles for `load_csv`. An empty `feature_cols` means "every column
/// that is neither the label nor the sensitive attribute".
struct Schema {
    std::string label_col;
    std::string sensitive_col;
    std::vector<std::string> categorical_cols;
    std::vector<std::string> feature_cols;
};

/// Immutable tabular sample set: n feature rows, labels in {0..m-1},
/// sensitive levels in {0..k-1}. Every sensitive level is present.
class Dataset {
public:
    Dataset(Eigen::MatrixXd features, Eigen::VectorXi labels, Eigen::VectorXi sensitive,
            int num_labels, int num_sensitive, Encoding encoding = {});

    const Eigen::MatrixXd& features() const noexcept { return features_; }
    const Eigen::VectorXi& labels() const noexcept { return labels_; }
    const Eigen::VectorXi& sensitive() const noexcept { return sensitive_; }
    int num_labels() const noexcept { return num_labels_; }
    int num_sensitive() const noexcept { return num_sensitive_; }
    long size() const noexcept { return features_.rows(); }
    long dim() const noexcept { return features_.cols(); }
    const Encoding& encoding() const noexcept { return encoding_; }

    /// Rows may repeat; the result is validated like any other Dataset.
    Dataset subset(std::span<const long> rows) const;

    /// Dataset with the same labels and encoding but new feature values.
    Dataset with_features(Eigen::MatrixXd features) const;

    /// Empirical P(s = l), the frozen pi_l of the fairness estimators.
    Eigen::VectorXd sensitive_marginal() const;

    /// Row counts per (label, sensitive) cell, m x k.
    Eigen::MatrixXi cell_counts() const;

    /// Empirical P(s = sens | y = label). Throws if no row has y = label.
    double conditional_rate(int label, int sens) const;

private:
    Eigen::MatrixXd features_;
    Eigen::VectorXi labels_;
    Eigen::VectorXi sensitive_;
    int num_labels_;
    int num_sensitive_;
    Encoding encoding_;
};

/// Parse a CSV file with a header row. Label and sensitive values are
/// re-encoded to dense 0-based integers (levels sorted). When `reuse` is given,
/// its levels and feature columns are used instead of being inferred, so a
/// test file lines up with a training file.
Dataset load_csv(const std::string& path, const Schema& schema, const Encoding* reuse = nullptr);

/// Same as `load_csv` on in-memory CSV text.
Dataset parse_csv(const std::string& text, const Schema& schema, const Encoding* reuse = nullptr);

/// Writes features under their encoded names, label and sensitive as their
/// level strings. Doubles are printed in shortest round-trip form.
void write_csv(const Dataset& data, const std::string& path);
std::string to_csv(const Dataset& data);

/// Schema that reads back a file produced by `write_csv`.
Schema schema_for(const Encoding& encoding);

/// Zero-mean / unit-variance scaling of the continuous columns, fitted on
/// one split and applied to others.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Standardizer fit(const Dataset& data);
    Dataset apply(const Dataset& data) const;
};

enum class ShiftMode { undersample, oversample };

struct ShiftRequest {
    int target_label = 1;
    int target_sensitive = 0;
    double target_conditional = 0.1;  ///< desired P(s = target_sensitive | y = target_label)
    ShiftMode mode = ShiftMode::undersample;
    std::uint64_t seed = 0;
};

inline constexpr double kShiftTolerance = 0.005;

/// Moves P(s = target_sensitive | y = target_label) to the requested rate by
/// removing rows from (undersample) or duplicating rows of (oversample) the
/// target cell. Other cells are untouched.
Dataset apply_shift(const Dataset& data, const ShiftRequest& req);

/// Disjoint row partition; the first part holds round(fraction * n) rows
/// (per (label, sensitive) cell when `stratify`).
std::pair<Dataset, Dataset> split(const Dataset& data, double fraction, bool stratify,
                                  std::uint64_t seed);

/// Duplicates rows of the smaller sensitive groups (with replacement) until
/// every sensitive level has the count of the largest one.
Dataset oversample_balance(const Dataset& data, std::uint64_t seed);

}  // namespace drfermi

#pragma once

// Grid training over (lambda, eps), validation-based model selection and the
// model x test-shift evaluation matrix.

#include "drfermi/classifier.hpp"
#include "drfermi/dataset.hpp"
#include "drfermi/fairness.hpp"
#include "drfermi/solvers.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace drfermi {

enum class Selection { target_validation, stratified_oversample_validation };

std::string to_string(Selection s);
Selection selection_from_string(const std::string& name);

struct SweepGrid {
    std::vector<double> lambdas{0.1, 0.5, 1, 2, 5, 10, 20, 50};
    std::vector<double> epsilons{0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1, 2, 5, 10};
    Selection selection = Selection::target_validation;

    void validate() const;
};

struct SweepRun {
    double lambda = 0.0;
    double epsilon = 0.0;
    std::optional<TrainResult> result;  // empty when training failed
    std::string error;
    double val_accuracy = 0.0;
    FairnessReport val_report;
};

/// Trains one model per grid point on `train` and scores it on `validation`.
/// At most `jobs` runs execute at once; runs share only immutable inputs.
/// Results come back in grid order (lambda-major).
std::vector<SweepRun> run_sweep(const Dataset& train, const ModelParams& init, const TrainConfig& base,
                                const SweepGrid& grid, const Dataset& validation, int jobs);

struct Candidate {
    double accuracy = 0.0;
    double dpv = 0.0;
    bool ok = true;
};

/// Index of the candidate with the smallest validation DPV among those with
/// accuracy >= best accuracy - slack. Ties go to higher accuracy, then to the
/// earlier index. Throws ValidationError when no candidate is ok.
std::size_t select_model(std::span<const Candidate> candidates, double slack = 0.02);

struct EvalCell {
    std::string model;
    std::string shift;
    double accuracy = 0.0;
    FairnessReport report;
};

struct EvalAggregate {
    std::string model;
    double accuracy_p25 = 0.0, accuracy_p75 = 0.0;
    double dpv_p25 = 0.0, dpv_p75 = 0.0;
    std::optional<double> eov_p25, eov_p75;  // over the shifts where EOV is defined
    double worst_dpv = 0.0;
    double worst_accuracy = 0.0;
};

struct EvalMatrix {
    std::vector<EvalCell> cells;
    std::vector<EvalAggregate> aggregates;  // one per model, in first-seen order
};

/// Linear-interpolation percentile (q in [0, 100]) of a non-empty sample.
double percentile(std::vector<double> values, double q);

EvalCell evaluate(const ModelParams& params, const Dataset& data, std::string model, std::string shift);
EvalMatrix build_eval_matrix(std::vector<EvalCell> cells);

/// Wide form: one row per cell, then p25 / p75 / worst rows per model.
std::string eval_matrix_csv(const EvalMatrix& matrix);
/// Long form: model,shift,metric,value.
std::string eval_long_csv(const EvalMatrix& matrix);

}  // namespace drfermi

#pragma once

// On-disk formats: model checkpoints (JSON), training traces (CSV) and run
// summaries (JSON). The formats are described in docs/formats.md.

#include "drfermi/classifier.hpp"
#include "drfermi/dataset.hpp"
#include "drfermi/fairness.hpp"
#include "drfermi/solvers.hpp"

#include <optional>
#include <string>
#include <vector>

namespace drfermi {

inline constexpr int kCheckpointVersion = 1;

/// A trained model plus what is needed to encode new data the same way.
struct Checkpoint {
    ModelParams params;
    Encoding encoding;
    std::optional<Standardizer> standardizer;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// One row per logged iteration. Columns depend on the solver: alpha and
/// w_norm always, threshold for cvar, q_<level> for group_dro.
std::string trace_to_csv(const TrainTrace& trace, SolverKind solver, const Encoding& encoding);

/// Final state of a training run. Contains no timestamps or host data so the
/// same seed and inputs give a byte-identical file.
struct RunSummary {
    TrainConfig config;
    ModelKind model = ModelKind::logistic;
    long hidden = 0;
    std::string data;
    long rows = 0;
    double loss = 0.0;
    double accuracy = 0.0;
    double objective = 0.0;
    FairnessReport report;
    double alpha = 1.0;
    double threshold = 0.0;
    std::vector<double> group_weights;
    TrainTrace counters;  ///< only the counters and warnings are written
};

std::string config_to_json(const TrainConfig& cfg);
std::string report_to_json(const FairnessReport& report);
std::string summary_to_json(const RunSummary& summary);

/// Reads a whole file; throws DataError if it cannot be opened.
std::string read_file(const std::string& path);
/// Writes a whole file; throws DataError on failure.
void write_file(const std::string& path, const std::string& content);

}  // namespace drfermi

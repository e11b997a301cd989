#include "drfermi/sweep.hpp"

#include "drfermi/errors.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <sstream>
#include <thread>

namespace drfermi {

std::string to_string(Selection s) {
    return s == Selection::target_validation ? "target_validation" : "stratified_oversample_validation";
}

Selection selection_from_string(const std::string& name) {
    if (name == "target_validation" || name == "target") return Selection::target_validation;
    if (name == "stratified_oversample_validation" || name == "oversample")
        return Selection::stratified_oversample_validation;
    throw ConfigError("unknown selection '" + name + "'");
}

void SweepGrid::validate() const {
    if (lambdas.empty() || epsilons.empty()) throw ConfigError("sweep grid lists must be non-empty");
    for (double l : lambdas)
        if (!(l >= 0.0)) throw ConfigError("grid lambda must be >= 0");
    for (double e : epsilons)
        if (!(e >= 0.0)) throw ConfigError("grid eps must be >= 0");
}

std::vector<SweepRun> run_sweep(const Dataset& train, const ModelParams& init, const TrainConfig& base,
                                const SweepGrid& grid, const Dataset& validation, int jobs) {
    grid.validate();
    std::vector<SweepRun> runs;
    for (double l : grid.lambdas)
        for (double e : grid.epsilons) {
            SweepRun r;
            r.lambda = l;
            r.epsilon = e;
            runs.push_back(std::move(r));
        }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < runs.size(); i = next++) {
            SweepRun& run = runs[i];
            TrainConfig cfg = base;
            cfg.lambda = run.lambda;
            cfg.robust.epsilon = run.epsilon;
            try {
                run.result = drfermi::train(train, init, cfg);
                const PredictionBatch pred = forward(run.result->params, validation);
                run.val_accuracy = accuracy(pred, validation.labels());
                run.val_report = metrics(pred, validation);
            } catch (const std::exception& e) {
                run.result.reset();
                run.error = e.what();
            }
        }
    };
    const auto workers = static_cast<std::size_t>(std::clamp<long>(jobs, 1, static_cast<long>(runs.size())));
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
        worker();
    }
    return runs;
}

std::size_t select_model(std::span<const Candidate> candidates, double slack) {
    double best_acc = -1.0;
    for (const auto& c : candidates)
        if (c.ok) best_acc = std::max(best_acc, c.accuracy);
    if (best_acc < 0.0) throw ValidationError("every sweep run failed; nothing to select");
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& c = candidates[i];
        if (!c.ok || c.accuracy < best_acc - slack) continue;
        if (!pick || c.dpv < candidates[*pick].dpv ||
            (c.dpv == candidates[*pick].dpv && c.accuracy > candidates[*pick].accuracy))
            pick = i;
    }
    return *pick;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw ValidationError("percentile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

EvalCell evaluate(const ModelParams& params, const Dataset& data, std::string model, std::string shift) {
    const PredictionBatch pred = forward(params, data);
    return {std::move(model), std::move(shift), accuracy(pred, data.labels()), metrics(pred, data)};
}

EvalMatrix build_eval_matrix(std::vector<EvalCell> cells) {
    EvalMatrix m;
    m.cells = std::move(cells);
    std::vector<std::string> models;
    for (const auto& c : m.cells)
        if (std::find(models.begin(), models.end(), c.model) == models.end()) models.push_back(c.model);
    for (const auto& name : models) {
        std::vector<double> acc, dpv, eov;
        for (const auto& c : m.cells) {
            if (c.model != name) continue;
            acc.push_back(c.accuracy);
            dpv.push_back(c.report.dpv);
            if (c.report.eov) eov.push_back(*c.report.eov);
        }
        EvalAggregate a;
        a.model = name;
        a.accuracy_p25 = percentile(acc, 25);
        a.accuracy_p75 = percentile(acc, 75);
        a.dpv_p25 = percentile(dpv, 25);
        a.dpv_p75 = percentile(dpv, 75);
        if (!eov.empty()) {
            a.eov_p25 = percentile(eov, 25);
            a.eov_p75 = percentile(eov, 75);
        }
        a.worst_dpv = *std::max_element(dpv.begin(), dpv.end());
        a.worst_accuracy = *std::min_element(acc.begin(), acc.end());
        m.aggregates.push_back(std::move(a));
    }
    return m;
}

namespace {

std::string fmt(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return {buf, res.ptr};
}

std::string fmt(const std::optional<double>& x) { return x ? fmt(*x) : ""; }

}  // namespace

std::string eval_matrix_csv(const EvalMatrix& matrix) {
    std::ostringstream out;
    out << "model,shift,accuracy,dpv,eov,ermi,hgr\n";
    for (const auto& c : matrix.cells)
        out << c.model << ',' << c.shift << ',' << fmt(c.accuracy) << ',' << fmt(c.report.dpv) << ','
            << fmt(c.report.eov) << ',' << fmt(c.report.ermi) << ',' << fmt(c.report.hgr) << '\n';
    for (const auto& a : matrix.aggregates) {
        out << a.model << ",p25," << fmt(a.accuracy_p25) << ',' << fmt(a.dpv_p25) << ',' << fmt(a.eov_p25) << ",,\n";
        out << a.model << ",p75," << fmt(a.accuracy_p75) << ',' << fmt(a.dpv_p75) << ',' << fmt(a.eov_p75) << ",,\n";
        out << a.model << ",worst," << fmt(a.worst_accuracy) << ',' << fmt(a.worst_dpv) << ",,,\n";
    }
    return out.str();
}

std::string eval_long_csv(const EvalMatrix& matrix) {
    std::ostringstream out;
    out << "model,shift,metric,value\n";
    const auto row = [&](const std::string& model, const std::string& shift, const char* metric,
                         const std::optional<double>& v) {
        if (v) out << model << ',' << shift << ',' << metric << ',' << fmt(*v) << '\n';
    };
    for (const auto& c : matrix.cells) {
        row(c.model, c.shift, "accuracy", c.accuracy);
        row(c.model, c.shift, "dpv", c.report.dpv);
        row(c.model, c.shift, "eov", c.report.eov);
        row(c.model, c.shift, "ermi", c.report.ermi);
        row(c.model, c.shift, "hgr", c.report.hgr);
    }
    for (const auto& a : matrix.aggregates) {
        row(a.model, "p25", "accuracy", a.accuracy_p25);
        row(a.model, "p75", "accuracy", a.accuracy_p75);
        row(a.model, "p25", "dpv", a.dpv_p25);
        row(a.model, "p75", "dpv", a.dpv_p75);
        row(a.model, "p25", "eov", a.eov_p25);
        row(a.model, "p75", "eov", a.eov_p75);
    }
    return out.str();
}

}  // namespace drfermi

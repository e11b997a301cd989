// drfermi command-line front end.

#include "drfermi/classifier.hpp"
#include "drfermi/dataset.hpp"
#include "drfermi/errors.hpp"
#include "drfermi/fairness.hpp"
#include "drfermi/self_check.hpp"
#include "drfermi/serialization.hpp"
#include "drfermi/solvers.hpp"
#include "drfermi/sweep.hpp"
#include "drfermi/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace drfermi;

namespace {

struct DataOpts {
    std::string path;
    std::string label_col = "label";
    std::string sensitive_col = "sensitive";
    std::vector<std::string> categorical;
    std::vector<std::string> features;

    Schema schema() const { return {label_col, sensitive_col, categorical, features}; }
};

void add_data_opts(CLI::App* app, DataOpts& d, bool required = true) {
    auto* opt = app->add_option("--data", d.path, "Input CSV file");
    if (required) opt->required();
    app->add_option("--label-col", d.label_col, "Label column")->capture_default_str();
    app->add_option("--sensitive-col", d.sensitive_col, "Sensitive attribute column")->capture_default_str();
    app->add_option("--categorical-cols", d.categorical, "Columns to one-hot encode")->delimiter(',');
    app->add_option("--feature-cols", d.features, "Feature columns (default: all others)")->delimiter(',');
}

struct TrainOpts {
    TrainConfig cfg;
    std::string solver = "det_l2";
    std::string ball = "l2";
    std::string model = "logistic";
    long hidden = 8;
    bool no_standardize = false;
};

void add_train_opts(CLI::App* app, TrainOpts& t) {
    app->add_option("--solver", t.solver, "det_l1 | det_l2 | det_linf | sgda_l2 | cvar | group_dro")
        ->capture_default_str();
    app->add_option("--lambda", t.cfg.lambda, "Fairness weight")->capture_default_str();
    app->add_option("--eps", t.cfg.robust.epsilon, "Uncertainty-ball radius")->capture_default_str();
    app->add_option("--ball", t.ball, "Ball norm for cvar / group_dro: l1 | l2 | linf")->capture_default_str();
    app->add_option("--step", t.cfg.step_size, "Step size")->capture_default_str();
    app->add_option("--iterations", t.cfg.iterations, "Iterations")->capture_default_str();
    app->add_option("--batch-size", t.cfg.batch_size, "Mini-batch size (sgda_l2)")->capture_default_str();
    app->add_option("--ascent-step", t.cfg.ascent_step, "W ascent step (sgda_l2, 0 = --step)")->capture_default_str();
    app->add_option("--alpha-min", t.cfg.alpha_min, "Lower clamp for alpha (sgda_l2)")->capture_default_str();
    app->add_option("--cvar-level", t.cfg.cvar_level, "CVaR level in (0, 1]")->capture_default_str();
    app->add_option("--group-step", t.cfg.group_step, "Group weight step (group_dro)")->capture_default_str();
    app->add_option("--seed", t.cfg.seed, "Seed")->capture_default_str();
    app->add_option("--log-every", t.cfg.log_every, "Trace cadence (0 = iterations / 200)")->capture_default_str();
    app->add_flag("--safeguard", t.cfg.safeguard, "Halve the step whenever the objective would increase");
    app->add_option("--model", t.model, "logistic | mlp1")->capture_default_str();
    app->add_option("--hidden", t.hidden, "Hidden width for mlp1")->capture_default_str();
    app->add_flag("--no-standardize", t.no_standardize, "Skip feature standardization");
}

TrainConfig resolve(const TrainOpts& t) {
    TrainConfig cfg = t.cfg;
    cfg.solver = solver_kind_from_string(t.solver);
    cfg.robust.norm = ball_norm_from_string(t.ball);
    cfg.robust = cfg.effective_robust();
    return cfg;
}

ModelParams initial_model(const TrainOpts& t, const Dataset& data) {
    const ModelKind kind = model_kind_from_string(t.model);
    if (kind == ModelKind::mlp1) {
        if (t.hidden < 1) throw ConfigError("--hidden must be >= 1");
        return ModelParams::mlp1(data.dim(), data.num_labels(), t.hidden, t.cfg.seed);
    }
    return ModelParams::logistic(data.dim(), data.num_labels());
}

struct Prepared {
    Dataset data;
    std::optional<Standardizer> standardizer;
};

Prepared prepare(const Dataset& raw, bool standardize) {
    if (!standardize) return {raw, std::nullopt};
    Standardizer st = Standardizer::fit(raw);
    return {st.apply(raw), st};
}

Dataset load_like(const std::string& path, const Checkpoint& ck) {
    Dataset raw = load_csv(path, schema_for(ck.encoding), &ck.encoding);
    return ck.standardizer ? ck.standardizer->apply(raw) : raw;
}

RunSummary summarize(const TrainOpts& t, const TrainConfig& cfg, const std::string& data_path,
                     const Dataset& data, const TrainResult& res) {
    RunSummary s;
    s.config = cfg;
    s.model = res.params.kind();
    s.hidden = s.model == ModelKind::mlp1 ? t.hidden : 0;
    s.data = fs::path(data_path).filename().string();
    s.rows = data.size();
    const PredictionBatch pred = forward(res.params, data);
    s.loss = loss_and_grad(res.params, data).loss;
    s.accuracy = accuracy(pred, data.labels());
    s.objective = s.loss + cfg.lambda * robust_value(fairness_state(res.params, data).q, cfg.effective_robust());
    s.report = metrics(pred, data);
    s.alpha = res.alpha;
    s.threshold = res.threshold;
    s.group_weights.assign(res.group_weights.data(), res.group_weights.data() + res.group_weights.size());
    s.counters.objective_increases = res.trace.objective_increases;
    s.counters.degenerate_steps = res.trace.degenerate_steps;
    s.counters.alpha_clamped = res.trace.alpha_clamped;
    s.counters.warnings = res.trace.warnings;
    return s;
}

std::string fmt(double x) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return {buf, r.ptr};
}

// "y=1,s=0": each value is a level string, or a 0-based index when it is not a level.
std::pair<int, int> parse_cell(const std::string& spec, const Encoding& enc) {
    int label = -1, sens = -1;
    std::stringstream ss(spec);
    std::string part;
    const auto resolve_level = [](const std::string& v, const std::vector<std::string>& levels) {
        for (std::size_t i = 0; i < levels.size(); ++i)
            if (levels[i] == v) return static_cast<int>(i);
        int idx = -1;
        const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), idx);
        if (ec != std::errc{} || p != v.data() + v.size() || idx < 0 || idx >= static_cast<int>(levels.size()))
            throw ConfigError("unknown level '" + v + "' in --shift-cell");
        return idx;
    };
    while (std::getline(ss, part, ',')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw ConfigError("--shift-cell expects y=<level>,s=<level>");
        const std::string key = part.substr(0, eq), value = part.substr(eq + 1);
        if (key == "y")
            label = resolve_level(value, enc.label_levels);
        else if (key == "s")
            sens = resolve_level(value, enc.sensitive_levels);
        else
            throw ConfigError("--shift-cell keys are y and s");
    }
    if (label < 0 || sens < 0) throw ConfigError("--shift-cell needs both y and s");
    return {label, sens};
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory '" + dir + "': " + ec.message());
}

std::string grid_name(double lambda, double eps) { return "lambda=" + fmt(lambda) + ";eps=" + fmt(eps); }

// -- subcommands ------------------------------------------------------------

struct TrainCmd {
    DataOpts data;
    TrainOpts train;
    std::string out_dir = ".";
};

int run_train(const TrainCmd& c) {
    const TrainConfig cfg = resolve(c.train);
    const Dataset raw = load_csv(c.data.path, c.data.schema());
    const Prepared prep = prepare(raw, !c.train.no_standardize);
    const TrainResult res = train(prep.data, initial_model(c.train, prep.data), cfg);

    ensure_dir(c.out_dir);
    const fs::path out(c.out_dir);
    save_checkpoint({res.params, raw.encoding(), prep.standardizer}, (out / "checkpoint.json").string());
    write_file((out / "trace.csv").string(), trace_to_csv(res.trace, cfg.solver, raw.encoding()));
    const std::string summary = summary_to_json(summarize(c.train, cfg, c.data.path, prep.data, res));
    write_file((out / "summary.json").string(), summary);
    for (const auto& w : res.trace.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << summary;
    return 0;
}

struct SweepCmd {
    DataOpts data;
    TrainOpts train;
    std::vector<double> lambdas{0.1, 0.5, 1, 2, 5, 10, 20, 50};
    std::vector<double> epsilons{0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1, 2, 5, 10};
    std::string validation;
    std::string selection = "target_validation";
    double val_fraction = 0.2;
    double slack = 0.02;
    int jobs = 1;
    std::vector<std::string> tests;
    std::string out_dir = "sweep";
};

std::pair<std::string, std::string> named_path(const std::string& arg) {
    const auto eq = arg.find('=');
    if (eq != std::string::npos && eq > 0) return {arg.substr(0, eq), arg.substr(eq + 1)};
    return {fs::path(arg).stem().string(), arg};
}

int run_sweep_cmd(const SweepCmd& c) {
    SweepGrid grid{c.lambdas, c.epsilons, selection_from_string(c.selection)};
    grid.validate();
    const TrainConfig base = resolve(c.train);
    const Dataset raw = load_csv(c.data.path, c.data.schema());

    Dataset train_raw = raw;
    std::optional<Dataset> val_raw;
    std::string provenance;
    if (grid.selection == Selection::target_validation) {
        if (c.validation.empty()) throw ConfigError("target_validation selection needs --validation");
        val_raw = load_csv(c.validation, schema_for(raw.encoding()), &raw.encoding());
        provenance = "file:" + fs::path(c.validation).filename().string();
    } else {
        auto [tr, va] = split(raw, 1.0 - c.val_fraction, true, base.seed);
        train_raw = std::move(tr);
        val_raw = oversample_balance(va, base.seed);
        provenance = "stratified split of train (fraction " + fmt(c.val_fraction) + "), minority oversampled";
    }
    const Prepared prep = prepare(train_raw, !c.train.no_standardize);
    const Dataset val = prep.standardizer ? prep.standardizer->apply(*val_raw) : *val_raw;

    const auto runs = run_sweep(prep.data, initial_model(c.train, prep.data), base, grid, val, c.jobs);
    std::vector<Candidate> cands;
    for (const auto& r : runs) cands.push_back({r.val_accuracy, r.val_report.dpv, r.result.has_value()});

    ensure_dir(c.out_dir);
    const fs::path out(c.out_dir);
    ensure_dir((out / "runs").string());
    nlohmann::json failures = nlohmann::json::array();
    std::vector<EvalCell> cells;
    std::vector<std::pair<std::string, Dataset>> tests;
    for (const auto& t : c.tests) {
        auto [name, path] = named_path(t);
        Dataset d = load_csv(path, schema_for(raw.encoding()), &raw.encoding());
        tests.emplace_back(name, prep.standardizer ? prep.standardizer->apply(d) : d);
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i];
        const std::string name = grid_name(r.lambda, r.epsilon);
        if (!r.result) {
            failures.push_back({{"lambda", r.lambda}, {"eps", r.epsilon}, {"error", r.error}});
            continue;
        }
        TrainConfig cfg = base;
        cfg.lambda = r.lambda;
        cfg.robust.epsilon = r.epsilon;
        write_file((out / "runs" / ("run_" + std::to_string(i) + ".json")).string(),
                   summary_to_json(summarize(c.train, cfg, c.data.path, prep.data, *r.result)));
        cells.push_back({name, "validation", r.val_accuracy, r.val_report});
        for (const auto& [tname, tdata] : tests) cells.push_back(evaluate(r.result->params, tdata, name, tname));
    }

    std::size_t pick = 0;
    try {
        pick = select_model(cands, c.slack);
    } catch (const ValidationError&) {
        nlohmann::json rep{{"error", "all_runs_failed"}, {"failures", failures}};
        write_file((out / "failures.json").string(), rep.dump(2) + "\n");
        throw;
    }
    const EvalMatrix matrix = build_eval_matrix(std::move(cells));
    write_file((out / "eval_matrix.csv").string(), eval_matrix_csv(matrix));
    write_file((out / "eval_long.csv").string(), eval_long_csv(matrix));

    const auto& chosen = runs[pick];
    TrainConfig chosen_cfg = base;
    chosen_cfg.lambda = chosen.lambda;
    chosen_cfg.robust.epsilon = chosen.epsilon;
    save_checkpoint({chosen.result->params, raw.encoding(), prep.standardizer}, (out / "checkpoint.json").string());
    nlohmann::json sel;
    sel["lambda"] = chosen.lambda;
    sel["eps"] = chosen.epsilon;
    sel["run"] = pick;
    sel["validation_accuracy"] = chosen.val_accuracy;
    sel["validation_dpv"] = chosen.val_report.dpv;
    sel["slack"] = c.slack;
    sel["selection"] = to_string(grid.selection);
    sel["validation_source"] = provenance;
    sel["validation_rows"] = val.size();
    sel["runs"] = runs.size();
    sel["failed_runs"] = failures;
    sel["config"] = nlohmann::json::parse(config_to_json(chosen_cfg));
    write_file((out / "selection.json").string(), sel.dump(2) + "\n");
    std::cout << sel.dump(2) << '\n';
    return 0;
}

struct EvalCmd {
    std::string checkpoint;
    std::vector<std::string> tests;
    std::string out = "eval_matrix.csv";
    std::string long_out;
    std::string name = "model";
};

int run_eval(const EvalCmd& c) {
    if (c.tests.empty()) throw ConfigError("eval needs at least one --test file");
    const Checkpoint ck = load_checkpoint(c.checkpoint);
    std::vector<EvalCell> cells;
    for (const auto& t : c.tests) {
        auto [name, path] = named_path(t);
        const Dataset data = load_like(path, ck);
        if (data.dim() != ck.params.input_dim())
            throw SchemaError("test data has " + std::to_string(data.dim()) + " features, checkpoint expects " +
                              std::to_string(ck.params.input_dim()));
        cells.push_back(evaluate(ck.params, data, c.name, name));
    }
    const EvalMatrix m = build_eval_matrix(std::move(cells));
    write_file(c.out, eval_matrix_csv(m));
    if (!c.long_out.empty()) write_file(c.long_out, eval_long_csv(m));
    std::cout << eval_matrix_csv(m);
    return 0;
}

struct ShiftCmd {
    DataOpts data;
    std::string cell;
    double rate = 0.1;
    std::string mode = "undersample";
    std::uint64_t seed = 0;
    std::string out;
};

int run_shift(const ShiftCmd& c) {
    const Dataset raw = load_csv(c.data.path, c.data.schema());
    const auto [label, sens] = parse_cell(c.cell, raw.encoding());
    ShiftMode mode;
    if (c.mode == "undersample")
        mode = ShiftMode::undersample;
    else if (c.mode == "oversample")
        mode = ShiftMode::oversample;
    else
        throw ConfigError("--shift-mode is undersample or oversample");
    const Dataset shifted = apply_shift(raw, {label, sens, c.rate, mode, c.seed});
    write_csv(shifted, c.out);
    nlohmann::json j{{"rows", shifted.size()},
                     {"before", raw.conditional_rate(label, sens)},
                     {"after", shifted.conditional_rate(label, sens)}};
    std::cout << j.dump() << '\n';
    return 0;
}

struct SplitCmd {
    DataOpts data;
    double fraction = 0.8;
    bool stratify = false;
    bool balance = false;
    std::uint64_t seed = 0;
    std::string out_first, out_second;
};

int run_split(const SplitCmd& c) {
    const Dataset raw = load_csv(c.data.path, c.data.schema());
    auto [first, second] = split(raw, c.fraction, c.stratify, c.seed);
    if (c.balance) second = oversample_balance(second, c.seed);
    write_csv(first, c.out_first);
    write_csv(second, c.out_second);
    std::cout << nlohmann::json{{"first", first.size()}, {"second", second.size()}}.dump() << '\n';
    return 0;
}

struct CheckCmd {
    SelfCheckOptions opts;
    std::string fault = "none";
};

int run_check(CheckCmd c) {
    c.opts.fault = fault_from_string(c.fault);
    const auto start = std::chrono::steady_clock::now();
    const auto results = run_self_check(c.opts);
    bool ok = true;
    for (const auto& r : results) {
        ok = ok && r.passed;
        std::cout << (r.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(42) << r.name
                  << " residual=" << std::setprecision(3) << std::scientific << r.residual
                  << " tol=" << r.tolerance << " cases=" << std::defaultfloat << r.cases << '\n';
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (ok ? "all checks passed" : "some checks FAILED") << " (" << std::setprecision(3) << secs
              << " s)\n";
    return ok ? 0 : 1;
}

struct SynthCmd {
    SyntheticSpec spec;
    std::string out;
};

int run_synth(const SynthCmd& c) {
    write_csv(make_adult_like(c.spec), c.out);
    return 0;
}

void report_error(const std::string& kind, const std::string& message) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributionally robust fair classification"};
    app.require_subcommand(1);
    // one file, with [train] / [sweep] sections; flags on the command line win
    app.set_config("--config", "", "Config file with [train] / [sweep] sections");
    app.allow_config_extras(CLI::config_extras_mode::error);

    TrainCmd train_cmd;
    auto* train_app = app.add_subcommand("train", "Train one model");
    train_app->fallthrough();
    add_data_opts(train_app, train_cmd.data);
    add_train_opts(train_app, train_cmd.train);
    train_app->add_option("--out-dir", train_cmd.out_dir, "Output directory")->capture_default_str();

    SweepCmd sweep_cmd;
    auto* sweep_app = app.add_subcommand("sweep", "Grid over lambda and eps with validation-based selection");
    sweep_app->fallthrough();
    add_data_opts(sweep_app, sweep_cmd.data);
    add_train_opts(sweep_app, sweep_cmd.train);
    sweep_app->add_option("--lambdas", sweep_cmd.lambdas, "Lambda grid")->delimiter(',');
    sweep_app->add_option("--epsilons", sweep_cmd.epsilons, "Eps grid")->delimiter(',');
    sweep_app->add_option("--validation", sweep_cmd.validation, "Validation CSV (target_validation)");
    sweep_app->add_option("--selection", sweep_cmd.selection, "target_validation | stratified_oversample_validation")
        ->capture_default_str();
    sweep_app->add_option("--val-fraction", sweep_cmd.val_fraction, "Held-out fraction for oversampled validation")
        ->capture_default_str();
    sweep_app->add_option("--slack", sweep_cmd.slack, "Accuracy slack for selection")->capture_default_str();
    sweep_app->add_option("--jobs", sweep_cmd.jobs, "Concurrent training runs")->capture_default_str();
    sweep_app->add_option("--test", sweep_cmd.tests, "Extra evaluation files, name=path or path");
    sweep_app->add_option("--out-dir", sweep_cmd.out_dir, "Output directory")->capture_default_str();

    EvalCmd eval_cmd;
    auto* eval_app = app.add_subcommand("eval", "Evaluate a checkpoint on test files");
    eval_app->add_option("--checkpoint", eval_cmd.checkpoint, "Checkpoint JSON")->required();
    eval_app->add_option("--test", eval_cmd.tests, "Test files, name=path or path");
    eval_app->add_option("--out", eval_cmd.out, "EvalMatrix CSV")->capture_default_str();
    eval_app->add_option("--long-out", eval_cmd.long_out, "Long-format CSV");
    eval_app->add_option("--name", eval_cmd.name, "Model name in the output")->capture_default_str();

    ShiftCmd shift_cmd;
    auto* shift_app = app.add_subcommand("shift-gen", "Resample one (label, sensitive) cell to a target rate");
    add_data_opts(shift_app, shift_cmd.data);
    shift_app->add_option("--shift-cell", shift_cmd.cell, "y=<level>,s=<level>")->required();
    shift_app->add_option("--shift-rate", shift_cmd.rate, "Target P(s | y)")->required();
    shift_app->add_option("--shift-mode", shift_cmd.mode, "undersample | oversample")->capture_default_str();
    shift_app->add_option("--seed", shift_cmd.seed, "Seed")->capture_default_str();
    shift_app->add_option("--out", shift_cmd.out, "Output CSV")->required();

    SplitCmd split_cmd;
    auto* split_app = app.add_subcommand("split", "Split a CSV into two disjoint parts");
    add_data_opts(split_app, split_cmd.data);
    split_app->add_option("--fraction", split_cmd.fraction, "Fraction in the first part")->capture_default_str();
    split_app->add_flag("--stratify", split_cmd.stratify, "Preserve (label, sensitive) cell proportions");
    split_app->add_flag("--balance-second", split_cmd.balance,
                        "Oversample minority sensitive groups in the second part");
    split_app->add_option("--seed", split_cmd.seed, "Seed")->capture_default_str();
    split_app->add_option("--out-first", split_cmd.out_first, "First part CSV")->required();
    split_app->add_option("--out-second", split_cmd.out_second, "Second part CSV")->required();

    CheckCmd check_cmd;
    auto* check_app = app.add_subcommand("check", "Run the oracle battery");
    check_app->add_option("--seed", check_cmd.opts.seed, "Seed")->capture_default_str();
    check_app->add_option("--ball-trials", check_cmd.opts.ball_trials, "Random Q matrices")->capture_default_str();
    check_app->add_option("--gradient-points", check_cmd.opts.gradient_points, "Points per gradient check")
        ->capture_default_str();
    check_app->add_option("--inject-fault", check_cmd.fault, "none | ermi-sign")->capture_default_str();

    SynthCmd synth_cmd;
    auto* synth_app = app.add_subcommand("synth", "Write an Adult-like synthetic CSV");
    synth_app->add_option("--rows", synth_cmd.spec.n, "Rows")->capture_default_str();
    synth_app->add_option("--dim", synth_cmd.spec.dim, "Features")->capture_default_str();
    synth_app->add_option("--seed", synth_cmd.spec.seed, "Seed")->capture_default_str();
    synth_app->add_option("--out", synth_cmd.out, "Output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        report_error("config", e.what());
        return 2;
    }

    try {
        if (*train_app) return run_train(train_cmd);
        if (*sweep_app) return run_sweep_cmd(sweep_cmd);
        if (*eval_app) return run_eval(eval_cmd);
        if (*shift_app) return run_shift(shift_cmd);
        if (*split_app) return run_split(split_cmd);
        if (*check_app) return run_check(check_cmd);
        if (*synth_app) return run_synth(synth_cmd);
    } catch (const Error& e) {
        report_error(e.kind(), e.what());
        return 2;
    } catch (const std::exception& e) {
        report_error("internal", e.what());
        return 3;
    }
    return 1;
}

#include "drfermi/serialization.hpp"

#include "drfermi/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>

namespace drfermi {

using nlohmann::json;

namespace {

json report_json(const FairnessReport& r) {
    json j;
    j["dpv"] = r.dpv;
    j["eov"] = r.eov ? json(*r.eov) : json(nullptr);
    j["ermi"] = r.ermi;
    j["hgr"] = r.hgr;
    return j;
}

json config_json(const TrainConfig& c) {
    json j;
    j["solver"] = to_string(c.solver);
    j["lambda"] = c.lambda;
    j["ball"] = to_string(c.effective_norm());
    j["eps"] = c.robust.epsilon;
    j["step_size"] = c.step_size;
    j["iterations"] = c.iterations;
    j["seed"] = c.seed;
    j["log_every"] = c.effective_log_every();
    j["safeguard"] = c.safeguard;
    switch (c.solver) {
        case SolverKind::sgda_l2:
            j["batch_size"] = c.batch_size;
            j["ascent_step"] = c.ascent_step > 0.0 ? c.ascent_step : c.step_size;
            j["alpha_min"] = c.alpha_min;
            break;
        case SolverKind::cvar: j["cvar_level"] = c.cvar_level; break;
        case SolverKind::group_dro: j["group_step"] = c.group_step; break;
        default: break;
    }
    return j;
}

json encoding_json(const Encoding& e) {
    json feats = json::array();
    for (const auto& f : e.features) {
        json c;
        c["source"] = f.source;
        c["category"] = f.category ? json(*f.category) : json(nullptr);
        c["standardize"] = f.standardize;
        feats.push_back(c);
    }
    return {{"label", e.label_name},
            {"sensitive", e.sensitive_name},
            {"label_levels", e.label_levels},
            {"sensitive_levels", e.sensitive_levels},
            {"features", feats}};
}

Encoding encoding_from(const json& j) {
    Encoding e;
    e.label_name = j.at("label").get<std::string>();
    e.sensitive_name = j.at("sensitive").get<std::string>();
    e.label_levels = j.at("label_levels").get<std::vector<std::string>>();
    e.sensitive_levels = j.at("sensitive_levels").get<std::vector<std::string>>();
    for (const auto& c : j.at("features")) {
        FeatureColumn f;
        f.source = c.at("source").get<std::string>();
        if (!c.at("category").is_null()) f.category = c.at("category").get<std::string>();
        f.standardize = c.at("standardize").get<bool>();
        e.features.push_back(std::move(f));
    }
    return e;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
}

std::string fmt(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return {buf, res.ptr};
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
    json layout = json::array();
    for (const auto& b : ckpt.params.layout()) layout.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
    json j;
    j["format"] = "drfermi-checkpoint";
    j["version"] = kCheckpointVersion;
    j["kind"] = to_string(ckpt.params.kind());
    j["layout"] = layout;
    j["params"] = to_vec(ckpt.params.flat());
    j["encoding"] = encoding_json(ckpt.encoding);
    if (ckpt.standardizer)
        j["standardizer"] = {{"mean", to_vec(ckpt.standardizer->mean)}, {"scale", to_vec(ckpt.standardizer->scale)}};
    else
        j["standardizer"] = nullptr;
    return j.dump(2) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.at("format") != "drfermi-checkpoint") throw SchemaError("not a drfermi checkpoint");
        if (j.at("version").get<int>() != kCheckpointVersion)
            throw SchemaError("unsupported checkpoint version " + j.at("version").dump());
        std::vector<ParamBlock> layout;
        for (const auto& b : j.at("layout"))
            layout.push_back({b.at("name").get<std::string>(), b.at("rows").get<long>(), b.at("cols").get<long>()});
        ModelParams params(model_kind_from_string(j.at("kind").get<std::string>()), std::move(layout),
                           from_vec(j.at("params").get<std::vector<double>>()));
        Checkpoint ck{std::move(params), encoding_from(j.at("encoding")), std::nullopt};
        if (!j.at("standardizer").is_null())
            ck.standardizer = Standardizer{from_vec(j["standardizer"].at("mean").get<std::vector<double>>()),
                                           from_vec(j["standardizer"].at("scale").get<std::vector<double>>())};
        return ck;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed checkpoint: ") + e.what());
    } catch (const DimensionError& e) {
        throw SchemaError(std::string("malformed checkpoint: ") + e.what());
    } catch (const ConfigError& e) {
        throw SchemaError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    write_file(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(read_file(path)); }

std::string trace_to_csv(const TrainTrace& trace, SolverKind solver, const Encoding& encoding) {
    std::ostringstream out;
    out << "iteration,objective,loss,fairness,robust,dpv,eov,ermi_hard,grad_norm,step,alpha,w_norm";
    if (solver == SolverKind::cvar) out << ",threshold";
    if (solver == SolverKind::group_dro)
        for (const auto& level : encoding.sensitive_levels) out << ",q_" << level;
    out << '\n';
    for (const auto& r : trace.records) {
        out << r.iteration << ',' << fmt(r.objective) << ',' << fmt(r.loss) << ',' << fmt(r.fairness) << ','
            << fmt(r.robust) << ',' << fmt(r.dpv) << ',' << (r.eov ? fmt(*r.eov) : "") << ','
            << fmt(r.ermi_hard) << ',' << fmt(r.grad_norm) << ',' << fmt(r.step) << ',' << fmt(r.alpha) << ','
            << fmt(r.w_norm);
        if (solver == SolverKind::cvar) out << ',' << fmt(r.threshold);
        if (solver == SolverKind::group_dro)
            for (double q : r.group_weights) out << ',' << fmt(q);
        out << '\n';
    }
    return out.str();
}

std::string config_to_json(const TrainConfig& cfg) { return config_json(cfg).dump(2) + "\n"; }

std::string report_to_json(const FairnessReport& report) { return report_json(report).dump(2) + "\n"; }

std::string summary_to_json(const RunSummary& s) {
    json j;
    j["config"] = config_json(s.config);
    j["model"] = {{"kind", to_string(s.model)}};
    if (s.model == ModelKind::mlp1) j["model"]["hidden"] = s.hidden;
    j["data"] = s.data;
    j["rows"] = s.rows;
    j["loss"] = s.loss;
    j["accuracy"] = s.accuracy;
    j["objective"] = s.objective;
    const json rep = report_json(s.report);
    for (const auto& [key, value] : rep.items()) j[key] = value;
    if (s.config.solver == SolverKind::sgda_l2) j["alpha"] = s.alpha;
    if (s.config.solver == SolverKind::cvar) j["threshold"] = s.threshold;
    if (s.config.solver == SolverKind::group_dro) j["group_weights"] = s.group_weights;
    j["objective_increases"] = s.counters.objective_increases;
    j["degenerate_steps"] = s.counters.degenerate_steps;
    j["alpha_clamped"] = s.counters.alpha_clamped;
    j["warnings"] = s.counters.warnings;
    return j.dump(2) + "\n";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << content;
    if (!out) throw DataError("write to '" + path + "' failed");
}

}  // namespace drfermi

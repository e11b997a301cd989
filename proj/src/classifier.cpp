#include "drfermi/classifier.hpp"

#include "drfermi/errors.hpp"
#include "drfermi/rng.hpp"

#include <cmath>

namespace drfermi {

namespace {

struct ForwardCache {
    Eigen::MatrixXd hidden;  // mlp1 only: tanh activations
    Eigen::MatrixXd logits;
    Eigen::MatrixXd probs;
};

void softmax_rows(const Eigen::MatrixXd& logits, Eigen::MatrixXd& probs) {
    probs.resize(logits.rows(), logits.cols());
    for (long i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        probs.row(i) = (logits.row(i).array() - mx).exp();
        probs.row(i) /= probs.row(i).sum();
    }
}

ForwardCache run_forward(const ModelParams& p, const Eigen::MatrixXd& x) {
    if (x.cols() != p.input_dim()) {
        throw DimensionError("feature dimension " + std::to_string(x.cols()) +
                             " does not match model input dimension " +
                             std::to_string(p.input_dim()));
    }
    ForwardCache c;
    if (p.kind() == ModelKind::logistic) {
        c.logits = (x * p.block(0)).rowwise() + p.block(1).row(0);
    } else {
        c.hidden = ((x * p.block(0)).rowwise() + p.block(1).row(0)).array().tanh();
        c.logits = (c.hidden * p.block(2)).rowwise() + p.block(3).row(0);
    }
    softmax_rows(c.logits, c.probs);
    return c;
}

// Gradient w.r.t. the flat parameters given d(objective)/d(logits).
Eigen::VectorXd backward(const ModelParams& p, const Eigen::MatrixXd& x, const ForwardCache& c,
                         const Eigen::MatrixXd& dlogits) {
    Eigen::VectorXd g(p.size());
    long off = 0;
    const auto put = [&](const Eigen::MatrixXd& m) {
        Eigen::Map<Eigen::MatrixXd>(g.data() + off, m.rows(), m.cols()) = m;
        off += m.size();
    };
    if (p.kind() == ModelKind::logistic) {
        put(x.transpose() * dlogits);
        put(dlogits.colwise().sum());
    } else {
        const Eigen::MatrixXd dhidden =
            ((dlogits * p.block(2).transpose()).array() * (1.0 - c.hidden.array().square())).matrix();
        put(x.transpose() * dhidden);
        put(dhidden.colwise().sum());
        put(c.hidden.transpose() * dlogits);
        put(dlogits.colwise().sum());
    }
    return g;
}

Eigen::VectorXi argmax_rows(const Eigen::MatrixXd& probs) {
    Eigen::VectorXi hard(probs.rows());
    for (long i = 0; i < probs.rows(); ++i) {
        int best = 0;
        for (int j = 1; j < probs.cols(); ++j)
            if (probs(i, j) > probs(i, best)) best = j;
        hard(i) = best;
    }
    return hard;
}

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& z) {
    const double mx = z.maxCoeff();
    return mx + std::log((z.array() - mx).exp().sum());
}

}  // namespace

std::string to_string(ModelKind kind) {
    return kind == ModelKind::logistic ? "logistic" : "mlp1";
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "logistic") return ModelKind::logistic;
    if (name == "mlp1") return ModelKind::mlp1;
    throw ConfigError("unknown model kind '" + name + "'");
}

ModelParams::ModelParams(ModelKind kind, std::vector<ParamBlock> layout, Eigen::VectorXd flat)
    : kind_(kind), layout_(std::move(layout)), flat_(std::move(flat)) {
    const std::size_t expected = kind_ == ModelKind::logistic ? 2 : 4;
    if (layout_.size() != expected) throw DimensionError("layout block count does not match model kind");
    long total = 0;
    for (const auto& b : layout_) total += b.size();
    if (total != flat_.size())
        throw DimensionError("flat parameter length " + std::to_string(flat_.size()) +
                             " != layout size " + std::to_string(total));
    if (!flat_.allFinite()) throw DataError("model parameters contain non-finite values");
}

ModelParams ModelParams::logistic(long input_dim, int num_classes) {
    std::vector<ParamBlock> layout{{"W", input_dim, num_classes}, {"b", 1, num_classes}};
    return ModelParams(ModelKind::logistic, std::move(layout),
                       Eigen::VectorXd::Zero(input_dim * num_classes + num_classes));
}

ModelParams ModelParams::mlp1(long input_dim, int num_classes, long hidden, std::uint64_t seed) {
    if (hidden < 1) throw ConfigError("hidden width must be >= 1");
    std::vector<ParamBlock> layout{{"W1", input_dim, hidden},
                                   {"b1", 1, hidden},
                                   {"W2", hidden, num_classes},
                                   {"b2", 1, num_classes}};
    long total = 0;
    for (const auto& b : layout) total += b.size();
    Eigen::VectorXd flat = Eigen::VectorXd::Zero(total);
    CounterRng rng(seed, 0x4D4C5031ULL);
    const double r1 = 1.0 / std::sqrt(static_cast<double>(std::max<long>(input_dim, 1)));
    const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    long off = 0;
    for (long i = 0; i < layout[0].size(); ++i) flat(off + i) = rng.uniform(-r1, r1);
    off += layout[0].size() + layout[1].size();
    for (long i = 0; i < layout[2].size(); ++i) flat(off + i) = rng.uniform(-r2, r2);
    return ModelParams(ModelKind::mlp1, std::move(layout), std::move(flat));
}

Eigen::Map<const Eigen::MatrixXd> ModelParams::block(std::size_t i) const {
    long off = 0;
    for (std::size_t b = 0; b < i; ++b) off += layout_[b].size();
    return {flat_.data() + off, layout_[i].rows, layout_[i].cols};
}

ModelParams ModelParams::with_flat(Eigen::VectorXd flat) const {
    return ModelParams(kind_, layout_, std::move(flat));
}

void ModelParams::axpy(double step, const Eigen::VectorXd& direction) {
    flat_.noalias() += step * direction;
}

PredictionBatch forward(const ModelParams& params, const Eigen::MatrixXd& x) {
    ForwardCache c = run_forward(params, x);
    PredictionBatch out;
    out.hard = argmax_rows(c.probs);
    out.probs = std::move(c.probs);
    return out;
}

PredictionBatch forward(const ModelParams& params, const Dataset& data) {
    return forward(params, data.features());
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, std::span<const long> rows) {
    Eigen::MatrixXd out(static_cast<long>(rows.size()), x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<long>(r)) = x.row(rows[r]);
    return out;
}

namespace {

LossGrad weighted_ce(const ModelParams& params, const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                     const Eigen::VectorXd& w) {
    const ForwardCache c = run_forward(params, x);
    LossGrad out;
    Eigen::MatrixXd dlogits = c.probs;
    for (long i = 0; i < x.rows(); ++i) {
        out.loss += w(i) * (log_sum_exp(c.logits.row(i)) - c.logits(i, y(i)));
        dlogits(i, y(i)) -= 1.0;
        dlogits.row(i) *= w(i);
    }
    out.grad = backward(params, x, c, dlogits);
    return out;
}

}  // namespace

LossGrad loss_and_grad(const ModelParams& params, const Dataset& data, std::span<const long> rows) {
    if (rows.empty()) throw ValidationError("loss_and_grad needs at least one row");
    const Eigen::MatrixXd x = gather_rows(data.features(), rows);
    Eigen::VectorXi y(static_cast<long>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) y(static_cast<long>(r)) = data.labels()(rows[r]);
    const auto n = static_cast<long>(rows.size());
    return weighted_ce(params, x, y, Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
}

LossGrad loss_and_grad(const ModelParams& params, const Dataset& data) {
    const long n = data.size();
    return weighted_ce(params, data.features(), data.labels(),
                       Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
}

LossGrad weighted_loss_and_grad(const ModelParams& params, const Dataset& data,
                                const Eigen::VectorXd& weights) {
    if (weights.size() != data.size()) throw DimensionError("one weight per row expected");
    return weighted_ce(params, data.features(), data.labels(), weights);
}

Eigen::VectorXd per_sample_loss(const ModelParams& params, const Dataset& data) {
    const ForwardCache c = run_forward(params, data.features());
    Eigen::VectorXd l(data.size());
    for (long i = 0; i < data.size(); ++i)
        l(i) = log_sum_exp(c.logits.row(i)) - c.logits(i, data.labels()(i));
    return l;
}

Eigen::VectorXd prob_vjp(const ModelParams& params, const Eigen::MatrixXd& x,
                         const Eigen::MatrixXd& coeff) {
    const ForwardCache c = run_forward(params, x);
    if (coeff.rows() != x.rows() || coeff.cols() != c.probs.cols())
        throw DimensionError("coefficient matrix must be n x m");
    // d/dz_l sum_j g_j F_j = F_l (g_l - sum_j g_j F_j)
    const Eigen::VectorXd centre = (coeff.array() * c.probs.array()).rowwise().sum();
    const Eigen::MatrixXd dlogits =
        (c.probs.array() * (coeff.colwise() - centre).array()).matrix();
    return backward(params, x, c, dlogits);
}

Eigen::MatrixXd prob_jacobian(const ModelParams& params, const Dataset& data,
                              std::span<const long> rows) {
    if (rows.empty()) throw ValidationError("prob_jacobian needs at least one row");
    const int m = params.num_classes();
    Eigen::MatrixXd jac(static_cast<long>(rows.size()) * m, params.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Eigen::MatrixXd x = data.features().row(rows[r]);
        for (int j = 0; j < m; ++j) {
            Eigen::MatrixXd e = Eigen::MatrixXd::Zero(1, m);
            e(0, j) = 1.0;
            jac.row(static_cast<long>(r) * m + j) = prob_vjp(params, x, e).transpose();
        }
    }
    return jac;
}

double accuracy(const PredictionBatch& pred, const Eigen::VectorXi& labels) {
    if (pred.hard.size() != labels.size()) throw DimensionError("prediction/label length mismatch");
    return static_cast<double>((pred.hard.array() == labels.array()).count()) /
           static_cast<double>(labels.size());
}

}  // namespace drfermi

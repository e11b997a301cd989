#include "drfermi/dataset.hpp"

#include "drfermi/errors.hpp"
#include "drfermi/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace drfermi {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// RFC-4180-ish: double quotes delimit fields, "" is an escaped quote.
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    out.push_back(trim(field));
    return out;
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q.push_back('"');
        q.push_back(c);
    }
    q.push_back('"');
    return q;
}

std::optional<double> parse_double(const std::string& s) {
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    long column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<long>(it - header.begin());
    }
};

Table read_table(std::istream& in) {
    Table t;
    std::string line;
    bool have_header = false;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw DataError("row " + std::to_string(t.rows.size()) + " (line " +
                            std::to_string(line_no) + ") has " + std::to_string(fields.size()) +
                            " fields, header has " + std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    if (!have_header) throw DataError("CSV input is empty");
    return t;
}

std::vector<std::string> sorted_levels(const Table& t, long col) {
    std::set<std::string> levels;
    for (const auto& r : t.rows) levels.insert(r[static_cast<std::size_t>(col)]);
    return {levels.begin(), levels.end()};
}

int level_index(const std::vector<std::string>& levels, const std::string& v, const char* what,
                std::size_t row) {
    const auto it = std::find(levels.begin(), levels.end(), v);
    if (it == levels.end()) {
        throw DataError(std::string("unknown ") + what + " level '" + v + "' at row " +
                        std::to_string(row));
    }
    return static_cast<int>(it - levels.begin());
}

Dataset table_to_dataset(const Table& t, const Schema& schema, const Encoding* reuse) {
    const long label_col = t.column(schema.label_col);
    const long sens_col = t.column(schema.sensitive_col);
    if (schema.label_col.empty() || label_col < 0)
        throw SchemaError("label column '" + schema.label_col + "' not found");
    if (schema.sensitive_col.empty() || sens_col < 0)
        throw SchemaError("sensitive column '" + schema.sensitive_col + "' not found");
    if (label_col == sens_col) throw SchemaError("label and sensitive column must differ");
    if (t.rows.empty()) throw ValidationError("dataset has no rows");

    Encoding enc;
    enc.label_name = schema.label_col;
    enc.sensitive_name = schema.sensitive_col;
    if (reuse) {
        enc.label_levels = reuse->label_levels;
        enc.sensitive_levels = reuse->sensitive_levels;
        enc.features = reuse->features;
    } else {
        enc.label_levels = sorted_levels(t, label_col);
        enc.sensitive_levels = sorted_levels(t, sens_col);

        std::vector<std::string> feature_names = schema.feature_cols;
        if (feature_names.empty()) {
            for (const auto& h : t.header)
                if (h != schema.label_col && h != schema.sensitive_col) feature_names.push_back(h);
        }
        for (const auto& c : schema.categorical_cols) {
            if (std::find(feature_names.begin(), feature_names.end(), c) == feature_names.end())
                throw SchemaError("categorical column '" + c + "' is not a feature column");
        }
        for (const auto& name : feature_names) {
            const long col = t.column(name);
            if (col < 0) throw SchemaError("feature column '" + name + "' not found");
            if (name == schema.label_col || name == schema.sensitive_col)
                throw SchemaError("column '" + name + "' cannot be both a feature and a role column");
            const bool categorical = std::find(schema.categorical_cols.begin(),
                                               schema.categorical_cols.end(),
                                               name) != schema.categorical_cols.end();
            if (categorical) {
                for (const auto& cat : sorted_levels(t, col))
                    enc.features.push_back({name, cat, false});
            } else {
                enc.features.push_back({name, std::nullopt, true});
            }
        }
        if (enc.features.empty()) throw SchemaError("schema names no feature columns");
    }

    // Resolve each encoded feature against this file: a plain source column,
    // a categorical source column, or an already-expanded indicator column.
    struct Resolved {
        long col;
        bool indicator;
    };
    std::vector<Resolved> resolved;
    for (const auto& f : enc.features) {
        const long src = t.column(f.source);
        if (src >= 0) {
            resolved.push_back({src, f.category.has_value()});
            continue;
        }
        const long expanded = t.column(f.name());
        if (expanded >= 0) {
            resolved.push_back({expanded, false});
            continue;
        }
        throw SchemaError("feature column '" + f.name() + "' not found");
    }

    const auto n = static_cast<long>(t.rows.size());
    const auto d = static_cast<long>(enc.features.size());
    Eigen::MatrixXd x(n, d);
    Eigen::VectorXi y(n), s(n);
    for (long i = 0; i < n; ++i) {
        const auto& row = t.rows[static_cast<std::size_t>(i)];
        y(i) = level_index(enc.label_levels, row[static_cast<std::size_t>(label_col)], "label",
                           static_cast<std::size_t>(i));
        s(i) = level_index(enc.sensitive_levels, row[static_cast<std::size_t>(sens_col)],
                           "sensitive", static_cast<std::size_t>(i));
        for (long j = 0; j < d; ++j) {
            const auto& f = enc.features[static_cast<std::size_t>(j)];
            const auto& cell = row[static_cast<std::size_t>(resolved[static_cast<std::size_t>(j)].col)];
            if (resolved[static_cast<std::size_t>(j)].indicator) {
                x(i, j) = cell == *f.category ? 1.0 : 0.0;
                continue;
            }
            const auto v = parse_double(cell);
            if (!v) {
                throw DataError("non-finite or unparseable value '" + cell + "' in column '" +
                                f.name() + "' at row " + std::to_string(i));
            }
            x(i, j) = *v;
        }
    }
    const int m = static_cast<int>(enc.label_levels.size());
    const int k = static_cast<int>(enc.sensitive_levels.size());
    return Dataset(std::move(x), std::move(y), std::move(s), m, k, std::move(enc));
}

}  // namespace

Dataset::Dataset(Eigen::MatrixXd features, Eigen::VectorXi labels, Eigen::VectorXi sensitive,
                 int num_labels, int num_sensitive, Encoding encoding)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      sensitive_(std::move(sensitive)),
      num_labels_(num_labels),
      num_sensitive_(num_sensitive),
      encoding_(std::move(encoding)) {
    const long n = features_.rows();
    if (n < 1) throw ValidationError("dataset has no rows");
    if (labels_.size() != n || sensitive_.size() != n)
        throw DimensionError("label/sensitive length differs from feature row count");
    if (num_labels_ < 1) throw ValidationError("label cardinality must be >= 1");
    if (num_sensitive_ < 2)
        throw ValidationError("sensitive attribute needs at least two levels (k = " +
                              std::to_string(num_sensitive_) + ")");
    if (!features_.allFinite()) throw DataError("features contain non-finite values");
    std::vector<long> seen(static_cast<std::size_t>(num_sensitive_), 0);
    for (long i = 0; i < n; ++i) {
        if (labels_(i) < 0 || labels_(i) >= num_labels_)
            throw ValidationError("label out of range at row " + std::to_string(i));
        if (sensitive_(i) < 0 || sensitive_(i) >= num_sensitive_)
            throw ValidationError("sensitive level out of range at row " + std::to_string(i));
        ++seen[static_cast<std::size_t>(sensitive_(i))];
    }
    for (int l = 0; l < num_sensitive_; ++l) {
        if (seen[static_cast<std::size_t>(l)] == 0)
            throw ValidationError("sensitive level " + std::to_string(l) + " has no rows");
    }

    if (encoding_.label_levels.empty())
        for (int j = 0; j < num_labels_; ++j) encoding_.label_levels.push_back(std::to_string(j));
    if (encoding_.sensitive_levels.empty())
        for (int l = 0; l < num_sensitive_; ++l)
            encoding_.sensitive_levels.push_back(std::to_string(l));
    if (encoding_.features.empty())
        for (long j = 0; j < features_.cols(); ++j)
            encoding_.features.push_back({"x" + std::to_string(j), std::nullopt, true});
    if (static_cast<long>(encoding_.features.size()) != features_.cols())
        throw DimensionError("encoding lists a different number of feature columns");
    if (static_cast<int>(encoding_.label_levels.size()) != num_labels_ ||
        static_cast<int>(encoding_.sensitive_levels.size()) != num_sensitive_)
        throw DimensionError("encoding level count differs from cardinality");
}

Dataset Dataset::subset(std::span<const long> rows) const {
    const auto n = static_cast<long>(rows.size());
    Eigen::MatrixXd x(n, dim());
    Eigen::VectorXi y(n), s(n);
    for (long i = 0; i < n; ++i) {
        const long r = rows[static_cast<std::size_t>(i)];
        x.row(i) = features_.row(r);
        y(i) = labels_(r);
        s(i) = sensitive_(r);
    }
    return Dataset(std::move(x), std::move(y), std::move(s), num_labels_, num_sensitive_, encoding_);
}

Dataset Dataset::with_features(Eigen::MatrixXd features) const {
    return Dataset(std::move(features), labels_, sensitive_, num_labels_, num_sensitive_, encoding_);
}

Eigen::VectorXd Dataset::sensitive_marginal() const {
    Eigen::VectorXd pi = Eigen::VectorXd::Zero(num_sensitive_);
    for (long i = 0; i < size(); ++i) pi(sensitive_(i)) += 1.0;
    return pi / static_cast<double>(size());
}

Eigen::MatrixXi Dataset::cell_counts() const {
    Eigen::MatrixXi c = Eigen::MatrixXi::Zero(num_labels_, num_sensitive_);
    for (long i = 0; i < size(); ++i) ++c(labels_(i), sensitive_(i));
    return c;
}

double Dataset::conditional_rate(int label, int sens) const {
    const Eigen::MatrixXi c = cell_counts();
    const int total = c.row(label).sum();
    if (total == 0) throw ValidationError("no rows with label " + std::to_string(label));
    return static_cast<double>(c(label, sens)) / total;
}

Dataset parse_csv(const std::string& text, const Schema& schema, const Encoding* reuse) {
    std::istringstream in(text);
    return table_to_dataset(read_table(in), schema, reuse);
}

Dataset load_csv(const std::string& path, const Schema& schema, const Encoding* reuse) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return table_to_dataset(read_table(in), schema, reuse);
}

std::string to_csv(const Dataset& data) {
    const auto& enc = data.encoding();
    std::ostringstream out;
    for (const auto& f : enc.features) out << quote_if_needed(f.name()) << ',';
    out << quote_if_needed(enc.label_name) << ',' << quote_if_needed(enc.sensitive_name) << '\n';
    for (long i = 0; i < data.size(); ++i) {
        for (long j = 0; j < data.dim(); ++j) out << format_double(data.features()(i, j)) << ',';
        out << quote_if_needed(enc.label_levels[static_cast<std::size_t>(data.labels()(i))]) << ','
            << quote_if_needed(enc.sensitive_levels[static_cast<std::size_t>(data.sensitive()(i))])
            << '\n';
    }
    return out.str();
}

void write_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << to_csv(data);
    if (!out) throw DataError("write to '" + path + "' failed");
}

Schema schema_for(const Encoding& encoding) {
    Schema s;
    s.label_col = encoding.label_name;
    s.sensitive_col = encoding.sensitive_name;
    for (const auto& f : encoding.features) s.feature_cols.push_back(f.name());
    return s;
}

Standardizer Standardizer::fit(const Dataset& data) {
    const long d = data.dim();
    Standardizer st;
    st.mean = Eigen::VectorXd::Zero(d);
    st.scale = Eigen::VectorXd::Ones(d);
    const auto n = static_cast<double>(data.size());
    for (long j = 0; j < d; ++j) {
        if (!data.encoding().features[static_cast<std::size_t>(j)].standardize) continue;
        const auto col = data.features().col(j);
        const double mu = col.mean();
        const double var = (col.array() - mu).square().sum() / n;
        st.mean(j) = mu;
        st.scale(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    return st;
}

Dataset Standardizer::apply(const Dataset& data) const {
    if (mean.size() != data.dim()) throw DimensionError("standardizer fitted on another width");
    Eigen::MatrixXd x = (data.features().rowwise() - mean.transpose()).array().rowwise() /
                        scale.transpose().array();
    return data.with_features(std::move(x));
}

Dataset apply_shift(const Dataset& data, const ShiftRequest& req) {
    if (!(req.target_conditional > 0.0 && req.target_conditional < 1.0))
        throw ValidationError("target conditional rate must lie strictly in (0, 1)");
    if (req.target_label < 0 || req.target_label >= data.num_labels() || req.target_sensitive < 0 ||
        req.target_sensitive >= data.num_sensitive())
        throw ValidationError("shift cell outside the label/sensitive range");

    std::vector<long> cell;
    long others = 0;
    for (long i = 0; i < data.size(); ++i) {
        if (data.labels()(i) != req.target_label) continue;
        if (data.sensitive()(i) == req.target_sensitive)
            cell.push_back(i);
        else
            ++others;
    }
    const auto have = static_cast<long>(cell.size());
    if (have == 0) throw InfeasibleShiftError("target cell is empty");
    if (others == 0)
        throw InfeasibleShiftError("every row with the target label is in the target cell");

    const double c = req.target_conditional;
    const auto rate = [others](long a) { return static_cast<double>(a) / static_cast<double>(a + others); };
    const double current = rate(have);
    if (std::abs(current - c) < 1e-12) return data;

    // Integer cell size whose rate is closest to the target.
    const long ideal = std::lround(c * static_cast<double>(others) / (1.0 - c));
    long want = ideal;
    for (long cand : {ideal - 1, ideal + 1})
        if (cand >= 0 && std::abs(rate(cand) - c) < std::abs(rate(want) - c)) want = cand;
    if (want == have) return data;

    if (req.mode == ShiftMode::undersample && want > have)
        throw InfeasibleShiftError("undersampling cannot raise the conditional rate");
    if (req.mode == ShiftMode::oversample && want < have)
        throw InfeasibleShiftError("oversampling cannot lower the conditional rate");
    if (std::abs(rate(want) - c) > kShiftTolerance)
        throw InfeasibleShiftError("target rate not reachable within tolerance at this sample size");

    CounterRng rng(req.seed, 0x5348494654ULL);
    std::vector<long> rows;
    if (req.mode == ShiftMode::undersample) {
        const auto drop_pos = sample_without_replacement(have, have - want, rng);
        std::vector<char> drop(static_cast<std::size_t>(data.size()), 0);
        for (long p : drop_pos) drop[static_cast<std::size_t>(cell[static_cast<std::size_t>(p)])] = 1;
        for (long i = 0; i < data.size(); ++i)
            if (!drop[static_cast<std::size_t>(i)]) rows.push_back(i);
    } else {
        rows.resize(static_cast<std::size_t>(data.size()));
        for (long i = 0; i < data.size(); ++i) rows[static_cast<std::size_t>(i)] = i;
        for (long r = 0; r < want - have; ++r)
            rows.push_back(cell[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(have)))]);
    }
    return data.subset(rows);
}

std::pair<Dataset, Dataset> split(const Dataset& data, double fraction, bool stratify,
                                  std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ValidationError("split fraction must lie strictly in (0, 1)");
    CounterRng rng(seed, 0x53504C4954ULL);
    std::vector<long> first, second;
    const auto take = [&](std::vector<long> idx) {
        shuffle(idx, rng);
        const auto cut = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size())));
        first.insert(first.end(), idx.begin(), idx.begin() + static_cast<long>(cut));
        second.insert(second.end(), idx.begin() + static_cast<long>(cut), idx.end());
    };
    if (stratify) {
        for (int y = 0; y < data.num_labels(); ++y) {
            for (int s = 0; s < data.num_sensitive(); ++s) {
                std::vector<long> idx;
                for (long i = 0; i < data.size(); ++i)
                    if (data.labels()(i) == y && data.sensitive()(i) == s) idx.push_back(i);
                take(std::move(idx));
            }
        }
    } else {
        std::vector<long> idx(static_cast<std::size_t>(data.size()));
        for (long i = 0; i < data.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
        take(std::move(idx));
    }
    if (first.empty() || second.empty())
        throw ValidationError("split fraction leaves one side empty");
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    return {data.subset(first), data.subset(second)};
}

Dataset oversample_balance(const Dataset& data, std::uint64_t seed) {
    const int k = data.num_sensitive();
    std::vector<std::vector<long>> groups(static_cast<std::size_t>(k));
    for (long i = 0; i < data.size(); ++i)
        groups[static_cast<std::size_t>(data.sensitive()(i))].push_back(i);
    std::size_t target = 0;
    for (const auto& g : groups) target = std::max(target, g.size());

    CounterRng rng(seed, 0x42414C414E4345ULL);
    std::vector<long> rows(static_cast<std::size_t>(data.size()));
    for (long i = 0; i < data.size(); ++i) rows[static_cast<std::size_t>(i)] = i;
    for (const auto& g : groups)
        for (std::size_t r = g.size(); r < target; ++r)
            rows.push_back(g[static_cast<std::size_t>(rng.below(g.size()))]);
    return data.subset(rows);
}

}  // namespace drfermi

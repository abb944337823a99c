#include "netlim/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>

#include "netlim/errors.hpp"

namespace netlim {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const json& require(const json& j, const char* field, const char* ctx) {
    const auto it = j.find(field);
    if (it == j.end())
        throw ConfigError(std::string(ctx) + ": missing config field '" + field + "'");
    return *it;
}

template <typename T>
T field_as(const json& j, const char* field, const char* ctx) {
    try {
        return require(j, field, ctx).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string(ctx) + ": field '" + field + "' has the wrong type (" +
                          e.what() + ")");
    }
}

template <typename T>
T field_or(const json& j, const char* field, T fallback, const char* ctx) {
    if (j.find(field) == j.end()) return fallback;
    return field_as<T>(j, field, ctx);
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* ctx) {
    if (!j.is_object()) throw ConfigError(std::string(ctx) + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError(std::string(ctx) + ": unknown field '" + it.key() + "'");
    }
}

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

json mat_to_json(const Eigen::MatrixXd& m, int T) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(T) * static_cast<std::size_t>(T));
    for (int r = 1; r <= T; ++r)
        for (int s = 1; s <= T; ++s) flat.push_back(m(r, s));
    return json(flat);
}

Eigen::MatrixXd mat_from_json(const json& arr, int T, const std::string& ctx) {
    std::vector<double> flat;
    try {
        flat = arr.get<std::vector<double>>();
    } catch (const json::exception&) {
        throw ConfigError(ctx + ": matrix is not a flat numeric array");
    }
    if (flat.size() != static_cast<std::size_t>(T) * static_cast<std::size_t>(T))
        throw ConfigError(ctx + ": matrix has " + std::to_string(flat.size()) +
                          " entries, expected " + std::to_string(T * T));
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(T + 1, T + 1);
    for (int r = 1; r <= T; ++r)
        for (int s = 1; s <= T; ++s)
            m(r, s) = flat[static_cast<std::size_t>(r - 1) * T + static_cast<std::size_t>(s - 1)];
    return m;
}

json lag_records(const std::vector<Eigen::MatrixXd>& mats, int T) {
    json arr = json::array();
    for (std::size_t l = 0; l < mats.size(); ++l)
        arr.push_back(json{{"lag", l}, {"matrix", mat_to_json(mats[l], T)}});
    return arr;
}

std::vector<Eigen::MatrixXd> lag_records_from(const json& arr, int max_lag, int T,
                                              const std::string& ctx) {
    if (!arr.is_array())
        throw ConfigError(ctx + ": expected an array of {lag, matrix} records");
    if (arr.size() != static_cast<std::size_t>(max_lag) + 1)
        throw ConfigError(ctx + ": got " + std::to_string(arr.size()) + " records, expected " +
                          std::to_string(max_lag + 1));
    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(max_lag) + 1);
    std::vector<bool> seen(out.size(), false);
    for (const json& rec : arr) {
        check_keys(rec, {"lag", "matrix"}, ctx.c_str());
        const int lag = field_as<int>(rec, "lag", ctx.c_str());
        if (lag < 0 || lag > max_lag)
            throw ConfigError(ctx + ": lag " + std::to_string(lag) + " outside 0.." +
                              std::to_string(max_lag));
        if (seen[static_cast<std::size_t>(lag)])
            throw ConfigError(ctx + ": duplicate lag " + std::to_string(lag));
        seen[static_cast<std::size_t>(lag)] = true;
        out[static_cast<std::size_t>(lag)] =
            mat_from_json(require(rec, "matrix", ctx.c_str()), T, ctx);
    }
    return out;
}

std::uint64_t parse_env_u64(const char* text, const char* name) {
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(text, &end, 10);
    if (end == text || *end != '\0' || errno != 0)
        throw ConfigError(std::string(name) + ": '" + text + "' is not an unsigned integer");
    return static_cast<std::uint64_t>(v);
}

void append_u32(std::string& buf, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    buf.append(b, 4);
}

std::uint32_t take_u32(const std::string& buf, std::size_t offset) {
    std::uint32_t v = 0;
    std::memcpy(&v, buf.data() + offset, 4);
    return v;
}

void csv_row(std::ostringstream& os, int n, int trial, const std::string& metric, double value) {
    os << n << ',' << trial << ',' << metric << ',' << fmt_double(value) << '\n';
}

void record_rows(std::ostringstream& os, const TrialDistance& r) {
    csv_row(os, r.n, r.trial, "mean_err", r.mean_err);
    for (std::size_t k = 0; k < r.cov_err.size(); ++k)
        csv_row(os, r.n, r.trial, "cov_err_lag" + std::to_string(k), r.cov_err[k]);
    for (std::size_t s = 0; s < r.ks_stat.size(); ++s) {
        csv_row(os, r.n, r.trial, "ks_stat_t" + std::to_string(s + 1), r.ks_stat[s]);
        csv_row(os, r.n, r.trial, "ks_p_t" + std::to_string(s + 1), r.ks_p[s]);
    }
}

json record_to_json(const TrialDistance& r) {
    return json{{"n", r.n},           {"trial", r.trial},     {"mean_err", r.mean_err},
                {"cov_err", r.cov_err}, {"ks_stat", r.ks_stat}, {"ks_p", r.ks_p}};
}

} // namespace

// --- model parameters -------------------------------------------------------

json params_to_json(const ModelParams& p) {
    const int d = p.lambda.d();
    std::vector<double> table;
    table.reserve(static_cast<std::size_t>(2 * d + 1) * static_cast<std::size_t>(2 * d + 1));
    for (int k = -d; k <= d; ++k)
        for (int l = -d; l <= d; ++l) table.push_back(p.lambda(k, l));

    json mu;
    switch (p.mu_init.kind()) {
        case InitialLaw::Kind::PointMass:
            mu = json{{"variant", "point_mass"}, {"u0", p.mu_init.point_value()}};
            break;
        case InitialLaw::Kind::Gaussian:
            mu = json{{"variant", "gaussian"},
                      {"m0", p.mu_init.gaussian_mean()},
                      {"s02", p.mu_init.gaussian_var()}};
            break;
        case InitialLaw::Kind::Discrete: {
            json atoms = json::array();
            for (const auto& [a, w] : p.mu_init.atoms()) atoms.push_back(json::array({a, w}));
            mu = json{{"variant", "discrete"}, {"atoms", atoms}};
            break;
        }
    }

    return json{{"gamma", p.gamma},
                {"sigma2", p.sigma2},
                {"theta_bar", p.theta_bar},
                {"theta2", p.theta2},
                {"j_bar", p.j_bar},
                {"lambda", json{{"d", d}, {"values", table}}},
                {"f", json{{"family", "logistic"}, {"g", p.f.g}}},
                {"mu_init", mu},
                {"horizon_T", p.horizon_T}};
}

ModelParams params_from_json(const json& j) {
    const char* ctx = "model params";
    check_keys(j,
               {"gamma", "sigma2", "theta_bar", "theta2", "j_bar", "lambda", "f", "mu_init",
                "horizon_T"},
               ctx);
    ModelParams p;
    p.gamma = field_as<double>(j, "gamma", ctx);
    p.sigma2 = field_as<double>(j, "sigma2", ctx);
    p.theta_bar = field_as<double>(j, "theta_bar", ctx);
    p.theta2 = field_as<double>(j, "theta2", ctx);
    p.j_bar = field_as<double>(j, "j_bar", ctx);
    p.horizon_T = field_as<int>(j, "horizon_T", ctx);

    const json& lam = require(j, "lambda", ctx);
    check_keys(lam, {"d", "values"}, "lambda");
    const int d = field_as<int>(lam, "d", "lambda");
    if (d < 0) throw ConfigError("lambda: d negative");
    const auto values = field_as<std::vector<double>>(lam, "values", "lambda");
    const std::size_t want =
        static_cast<std::size_t>(2 * d + 1) * static_cast<std::size_t>(2 * d + 1);
    if (values.size() != want)
        throw ConfigError("lambda: values has " + std::to_string(values.size()) +
                          " entries, expected " + std::to_string(want));
    p.lambda = CovFunction(d, values);

    const json& f = require(j, "f", ctx);
    check_keys(f, {"family", "g"}, "f");
    const auto family = field_or<std::string>(f, "family", "logistic", "f");
    if (family != "logistic") throw ConfigError("f: unknown family '" + family + "'");
    p.f = SigmoidSpec{field_as<double>(f, "g", "f")};

    const json& mu = require(j, "mu_init", ctx);
    const auto variant = field_as<std::string>(mu, "variant", "mu_init");
    if (variant == "point_mass") {
        check_keys(mu, {"variant", "u0"}, "mu_init");
        p.mu_init = InitialLaw::point_mass(field_as<double>(mu, "u0", "mu_init"));
    } else if (variant == "gaussian") {
        check_keys(mu, {"variant", "m0", "s02"}, "mu_init");
        p.mu_init = InitialLaw::gaussian(field_as<double>(mu, "m0", "mu_init"),
                                         field_as<double>(mu, "s02", "mu_init"));
    } else if (variant == "discrete") {
        check_keys(mu, {"variant", "atoms"}, "mu_init");
        const auto atoms =
            field_as<std::vector<std::vector<double>>>(mu, "atoms", "mu_init");
        std::vector<std::pair<double, double>> pairs;
        for (const auto& a : atoms) {
            if (a.size() != 2)
                throw ConfigError("mu_init: each atom must be a [value, weight] pair");
            pairs.emplace_back(a[0], a[1]);
        }
        p.mu_init = InitialLaw::discrete(std::move(pairs));
    } else {
        throw ConfigError("mu_init: unknown variant '" + variant + "'");
    }
    return p;
}

// --- limit law --------------------------------------------------------------

json law_to_json(const LimitLaw& law) {
    std::vector<double> c(static_cast<std::size_t>(law.T));
    for (int s = 1; s <= law.T; ++s) c[static_cast<std::size_t>(s - 1)] = law.c(s);
    return json{{"version", "limitlaw-v1"}, {"params", params_to_json(law.params)},
                {"T", law.T},               {"d", law.d},
                {"LM", law.LM},             {"c", c},
                {"K", lag_records(law.K, law.T)}, {"M", lag_records(law.M, law.T)}};
}

LimitLaw law_from_json(const json& j) {
    const char* ctx = "limit-law document";
    check_keys(j, {"version", "params", "T", "d", "LM", "c", "K", "M"}, ctx);
    const auto version = field_as<std::string>(j, "version", ctx);
    if (version != "limitlaw-v1")
        throw ConfigError(std::string(ctx) + ": unsupported version '" + version + "'");
    LimitLaw law;
    law.params = validate_params(params_from_json(require(j, "params", ctx)));
    law.T = field_as<int>(j, "T", ctx);
    law.d = field_as<int>(j, "d", ctx);
    law.LM = field_as<int>(j, "LM", ctx);
    if (law.T != law.params.horizon_T)
        throw ConfigError(std::string(ctx) + ": T does not match params.horizon_T");
    if (law.d != law.params.lambda.d())
        throw ConfigError(std::string(ctx) + ": d does not match the covariance range");
    if (law.LM != law.params.lambda.moment_lag_extent())
        throw ConfigError(std::string(ctx) + ": LM does not match the covariance lag extent");
    const auto c = field_as<std::vector<double>>(j, "c", ctx);
    if (c.size() != static_cast<std::size_t>(law.T))
        throw ConfigError(std::string(ctx) + ": c has " + std::to_string(c.size()) +
                          " entries, expected " + std::to_string(law.T));
    law.c = Eigen::VectorXd::Zero(law.T + 1);
    for (int s = 1; s <= law.T; ++s) law.c(s) = c[static_cast<std::size_t>(s - 1)];
    law.K = lag_records_from(require(j, "K", ctx), law.d, law.T, "limit-law K");
    law.M = lag_records_from(require(j, "M", ctx), law.LM, law.T, "limit-law M");
    return law;
}

// --- empirical statistics ---------------------------------------------------

json stats_to_json(const EmpiricalStats& st) {
    std::vector<double> c(static_cast<std::size_t>(st.T));
    for (int s = 1; s <= st.T; ++s) c[static_cast<std::size_t>(s - 1)] = st.c_hat(s);
    return json{{"version", "empirical-stats-v1"},
                {"n", st.n},
                {"T", st.T},
                {"c", c},
                {"K", lag_records(st.K_hat, st.T)},
                {"marginal_pool", st.marginal_pool}};
}

EmpiricalStats stats_from_json(const json& j) {
    const char* ctx = "empirical-stats document";
    check_keys(j, {"version", "n", "T", "c", "K", "marginal_pool"}, ctx);
    const auto version = field_as<std::string>(j, "version", ctx);
    if (version != "empirical-stats-v1")
        throw ConfigError(std::string(ctx) + ": unsupported version '" + version + "'");
    EmpiricalStats st;
    st.n = field_as<int>(j, "n", ctx);
    st.T = field_as<int>(j, "T", ctx);
    if (st.T < 1) throw ConfigError(std::string(ctx) + ": T below 1");
    const auto c = field_as<std::vector<double>>(j, "c", ctx);
    if (c.size() != static_cast<std::size_t>(st.T))
        throw ConfigError(std::string(ctx) + ": c has " + std::to_string(c.size()) +
                          " entries, expected " + std::to_string(st.T));
    st.c_hat = Eigen::VectorXd::Zero(st.T + 1);
    for (int s = 1; s <= st.T; ++s) st.c_hat(s) = c[static_cast<std::size_t>(s - 1)];
    const json& K = require(j, "K", ctx);
    if (!K.is_array() || K.empty())
        throw ConfigError(std::string(ctx) + ": K must be a nonempty record array");
    st.K_hat =
        lag_records_from(K, static_cast<int>(K.size()) - 1, st.T, "empirical-stats K");
    try {
        st.marginal_pool =
            field_as<std::vector<std::vector<double>>>(j, "marginal_pool", ctx);
    } catch (const ConfigError&) {
        throw;
    }
    if (st.marginal_pool.size() != static_cast<std::size_t>(st.T) + 1)
        throw ConfigError(std::string(ctx) + ": marginal_pool needs one entry per time 0..T");
    return st;
}

// --- distance reports -------------------------------------------------------

json report_to_json(const DistanceReport& rep) {
    json sums = json::array();
    for (const SizeSummary& s : rep.summaries)
        sums.push_back(json{{"n", s.n},
                            {"median_mean_err", s.median_mean_err},
                            {"iqr_mean_err", s.iqr_mean_err},
                            {"median_cov_err", s.median_cov_err},
                            {"median_ks_stat", s.median_ks_stat},
                            {"median_min_ks_p", s.median_min_ks_p},
                            {"aggregate", record_to_json(s.aggregate)}});
    json out{{"experiment", rep.experiment},
             {"n_records", rep.records.size()},
             {"summaries", sums}};
    if (!rep.exceedance.empty()) {
        json ex = json::array();
        for (const ExceedancePoint& pt : rep.exceedance)
            ex.push_back(json{{"n", pt.n},
                              {"eps", pt.eps},
                              {"fraction", pt.fraction},
                              {"draws", pt.draws}});
        out["exceedance"] = ex;
    }
    if (!rep.ergodic.empty()) {
        json er = json::array();
        for (const ErgodicPoint& pt : rep.ergodic)
            er.push_back(json{{"n", pt.n},
                              {"path_value", pt.path_value},
                              {"path_se", pt.path_se},
                              {"gap", pt.gap},
                              {"combined_se", pt.combined_se}});
        out["ergodic"] = er;
        out["ref_value"] = rep.ref_value;
        out["ref_se"] = rep.ref_se;
    }
    return out;
}

std::string report_to_csv(const DistanceReport& rep) {
    std::ostringstream os;
    os << "n,trial,metric,value\n";
    for (const TrialDistance& r : rep.records) record_rows(os, r);
    for (const SizeSummary& s : rep.summaries) {
        csv_row(os, s.n, -1, "median_mean_err", s.median_mean_err);
        csv_row(os, s.n, -1, "iqr_mean_err", s.iqr_mean_err);
        for (std::size_t k = 0; k < s.median_cov_err.size(); ++k)
            csv_row(os, s.n, -1, "median_cov_err_lag" + std::to_string(k),
                    s.median_cov_err[k]);
        csv_row(os, s.n, -1, "median_ks_stat", s.median_ks_stat);
        csv_row(os, s.n, -1, "median_min_ks_p", s.median_min_ks_p);
        record_rows(os, s.aggregate);
    }
    for (const ExceedancePoint& pt : rep.exceedance) {
        for (std::size_t i = 0; i < pt.errors.size(); ++i)
            csv_row(os, pt.n, static_cast<int>(i), "exceed_err", pt.errors[i]);
        csv_row(os, pt.n, -1, "exceed_eps", pt.eps);
        csv_row(os, pt.n, -1, "exceed_fraction", pt.fraction);
    }
    for (const ErgodicPoint& pt : rep.ergodic) {
        csv_row(os, pt.n, 0, "h_path", pt.path_value);
        csv_row(os, pt.n, 0, "h_path_se", pt.path_se);
        csv_row(os, pt.n, 0, "h_gap", pt.gap);
        csv_row(os, pt.n, 0, "h_combined_se", pt.combined_se);
        csv_row(os, pt.n, 0, "h_ref", rep.ref_value);
        csv_row(os, pt.n, 0, "h_ref_se", rep.ref_se);
    }
    return os.str();
}

std::vector<std::string> write_plot_files(const std::string& dir, const std::string& stem,
                                          const DistanceReport& rep) {
    fs::create_directories(dir);
    std::vector<std::string> written;
    const auto emit = [&](const std::string& metric,
                          const std::vector<std::pair<double, double>>& xy) {
        if (xy.empty()) return;
        std::ostringstream os;
        for (const auto& [x, y] : xy) os << fmt_double(x) << ' ' << fmt_double(y) << '\n';
        const std::string path = (fs::path(dir) / (stem + "_" + metric + ".dat")).string();
        atomic_write(path, os.str());
        written.push_back(path);
    };

    std::vector<std::pair<double, double>> mean_err, ks_stat;
    for (const SizeSummary& s : rep.summaries) {
        mean_err.emplace_back(2.0 * s.n + 1.0, s.median_mean_err);
        ks_stat.emplace_back(2.0 * s.n + 1.0, s.median_ks_stat);
    }
    emit("median_mean_err", mean_err);
    emit("median_ks_stat", ks_stat);
    if (!rep.summaries.empty()) {
        const std::size_t lags = rep.summaries.front().median_cov_err.size();
        for (std::size_t k = 0; k < lags; ++k) {
            std::vector<std::pair<double, double>> cov;
            for (const SizeSummary& s : rep.summaries)
                cov.emplace_back(2.0 * s.n + 1.0, s.median_cov_err[k]);
            emit("median_cov_err_lag" + std::to_string(k), cov);
        }
    }
    std::vector<std::pair<double, double>> frac;
    for (const ExceedancePoint& pt : rep.exceedance)
        frac.emplace_back(2.0 * pt.n + 1.0, pt.fraction);
    emit("exceed_fraction", frac);
    std::vector<std::pair<double, double>> gap, cse;
    for (const ErgodicPoint& pt : rep.ergodic) {
        gap.emplace_back(2.0 * pt.n + 1.0, pt.gap);
        cse.emplace_back(2.0 * pt.n + 1.0, pt.combined_se);
    }
    emit("ergodic_gap", gap);
    emit("ergodic_combined_se", cse);
    return written;
}

// --- ensembles --------------------------------------------------------------

void write_ensemble_csv(const std::string& path, const std::vector<TrajectoryEnsemble>& trials,
                        int n) {
    const int N = 2 * n + 1;
    std::ostringstream os;
    os << "trial,neuron,time,u\n";
    for (std::size_t ti = 0; ti < trials.size(); ++ti) {
        const Eigen::MatrixXd& u = trials[ti].u;
        if (u.rows() != N)
            throw ConfigError("ensemble trial " + std::to_string(ti) +
                              " does not match the declared population");
        for (int j = 0; j < N; ++j)
            for (int t = 0; t < u.cols(); ++t)
                os << ti << ',' << (j - n) << ',' << t << ',' << fmt_double(u(j, t)) << '\n';
    }
    atomic_write(path, os.str());
}

std::vector<TrajectoryEnsemble> read_ensemble_csv(const std::string& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != "trial,neuron,time,u")
        throw ConfigError("'" + path + "': not an ensemble CSV (bad header)");
    struct Row {
        int trial, neuron, time;
        double u;
    };
    std::vector<Row> rows;
    int max_trial = -1, max_neuron = 0, min_neuron = 0, max_time = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        Row r;
        if (std::sscanf(line.c_str(), "%d,%d,%d,%lf", &r.trial, &r.neuron, &r.time, &r.u) != 4)
            throw ConfigError("'" + path + "': malformed row at line " + std::to_string(lineno));
        if (r.trial < 0 || r.time < 0)
            throw ConfigError("'" + path + "': negative index at line " + std::to_string(lineno));
        max_trial = std::max(max_trial, r.trial);
        max_neuron = std::max(max_neuron, r.neuron);
        min_neuron = std::min(min_neuron, r.neuron);
        max_time = std::max(max_time, r.time);
        rows.push_back(r);
    }
    if (max_trial < 0) throw ConfigError("'" + path + "': no data rows");
    if (min_neuron != -max_neuron)
        throw ConfigError("'" + path + "': neuron indices are not symmetric around 0");
    const int n = max_neuron;
    const int N = 2 * n + 1;
    std::vector<TrajectoryEnsemble> out(static_cast<std::size_t>(max_trial) + 1);
    for (auto& ens : out)
        ens.u = Eigen::MatrixXd::Constant(N, max_time + 1,
                                          std::numeric_limits<double>::quiet_NaN());
    for (const Row& r : rows) out[static_cast<std::size_t>(r.trial)].u(r.neuron + n, r.time) = r.u;
    for (const auto& ens : out)
        if (ens.u.hasNaN())
            throw ConfigError("'" + path + "': incomplete ensemble (missing rows)");
    return out;
}

void write_ensemble_binary(const std::string& path,
                           const std::vector<TrajectoryEnsemble>& trials, int n) {
    if (trials.empty()) throw ConfigError("ensemble write: no trials");
    const int N = 2 * n + 1;
    const int T = static_cast<int>(trials.front().u.cols()) - 1;
    std::string buf;
    buf.reserve(16 + trials.size() * static_cast<std::size_t>(N) * (T + 1) * 8);
    buf.append("NSIM", 4);
    append_u32(buf, 1);
    append_u32(buf, static_cast<std::uint32_t>(n));
    append_u32(buf, static_cast<std::uint32_t>(T));
    for (const TrajectoryEnsemble& ens : trials) {
        if (ens.u.rows() != N || ens.u.cols() != T + 1)
            throw ConfigError("ensemble write: trial shape mismatch");
        for (int j = 0; j < N; ++j)
            for (int t = 0; t <= T; ++t) {
                const double v = ens.u(j, t);
                char b[8];
                std::memcpy(b, &v, 8);
                buf.append(b, 8);
            }
    }
    atomic_write(path, buf);
}

std::vector<TrajectoryEnsemble> read_ensemble_binary(const std::string& path) {
    const std::string buf = read_file(path);
    if (buf.size() < 16 || buf.compare(0, 4, "NSIM") != 0)
        throw ConfigError("'" + path + "': not an NSIM ensemble file");
    const std::uint32_t version = take_u32(buf, 4);
    if (version != 1)
        throw ConfigError("'" + path + "': unsupported NSIM version " + std::to_string(version));
    const int n = static_cast<int>(take_u32(buf, 8));
    const int T = static_cast<int>(take_u32(buf, 12));
    const int N = 2 * n + 1;
    const std::size_t trial_bytes =
        static_cast<std::size_t>(N) * static_cast<std::size_t>(T + 1) * 8;
    const std::size_t payload = buf.size() - 16;
    if (trial_bytes == 0 || payload % trial_bytes != 0)
        throw ConfigError("'" + path + "': truncated NSIM payload");
    std::vector<TrajectoryEnsemble> out(payload / trial_bytes);
    std::size_t off = 16;
    for (auto& ens : out) {
        ens.u.resize(N, T + 1);
        for (int j = 0; j < N; ++j)
            for (int t = 0; t <= T; ++t) {
                double v = 0.0;
                std::memcpy(&v, buf.data() + off, 8);
                off += 8;
                ens.u(j, t) = v;
            }
    }
    return out;
}

// --- run configuration ------------------------------------------------------

RunConfig run_config_from_json(const json& j) {
    const char* ctx = "run config";
    check_keys(j,
               {"params", "quadrature", "seed", "threads", "out_dir", "simulate", "converge",
                "oracle"},
               ctx);
    RunConfig rc;
    rc.params = params_from_json(require(j, "params", ctx));
    if (j.contains("quadrature")) {
        const json& q = j["quadrature"];
        check_keys(q, {"gauss_nodes", "init_nodes", "degenerate_eps"}, "quadrature");
        rc.quad.gauss_nodes = field_or<int>(q, "gauss_nodes", rc.quad.gauss_nodes, "quadrature");
        rc.quad.init_nodes = field_or<int>(q, "init_nodes", rc.quad.init_nodes, "quadrature");
        rc.quad.degenerate_eps =
            field_or<double>(q, "degenerate_eps", rc.quad.degenerate_eps, "quadrature");
    }
    rc.seed = field_or<std::uint64_t>(j, "seed", 0, ctx);
    rc.threads = field_or<int>(j, "threads", 1, ctx);
    rc.out_dir = field_or<std::string>(j, "out_dir", ".", ctx);

    if (j.contains("simulate")) {
        const json& s = j["simulate"];
        const char* sc = "simulate";
        check_keys(s, {"n", "trials", "k_max", "weight_method", "format"}, sc);
        rc.simulate.n = field_or<int>(s, "n", rc.simulate.n, sc);
        rc.simulate.trials = field_or<int>(s, "trials", rc.simulate.trials, sc);
        rc.simulate.k_max = field_or<int>(s, "k_max", rc.simulate.k_max, sc);
        const auto method = field_or<std::string>(s, "weight_method", "fft", sc);
        if (method == "fft")
            rc.simulate.method = WeightMethod::FftTorus;
        else if (method == "direct")
            rc.simulate.method = WeightMethod::DirectFactorization;
        else
            throw ConfigError("simulate: unknown weight_method '" + method + "'");
        rc.simulate.format = field_or<std::string>(s, "format", "csv", sc);
        if (rc.simulate.format != "csv" && rc.simulate.format != "binary")
            throw ConfigError("simulate: unknown format '" + rc.simulate.format + "'");
    }

    if (j.contains("converge")) {
        const json& c = j["converge"];
        const char* cc = "converge";
        check_keys(c,
                   {"experiment", "n_list", "trials_per_n", "k_max", "exceed_n_list",
                    "exceed_draws", "exceed_eps_mult", "functional", "window_m", "law_samples",
                    "law_file", "plots"},
                   cc);
        rc.converge.experiment = field_or<std::string>(c, "experiment", "averaged", cc);
        if (rc.converge.experiment != "averaged" && rc.converge.experiment != "quenched" &&
            rc.converge.experiment != "ergodic")
            throw ConfigError("converge: unknown experiment '" + rc.converge.experiment + "'");
        ExperimentPlan& pl = rc.converge.plan;
        pl.n_list = field_or<std::vector<int>>(c, "n_list", {}, cc);
        pl.trials_per_n = field_or<int>(c, "trials_per_n", pl.trials_per_n, cc);
        pl.k_max = field_or<int>(c, "k_max", pl.k_max, cc);
        pl.exceed_n_list = field_or<std::vector<int>>(c, "exceed_n_list", {}, cc);
        pl.exceed_draws = field_or<int>(c, "exceed_draws", pl.exceed_draws, cc);
        pl.exceed_eps_mult = field_or<double>(c, "exceed_eps_mult", pl.exceed_eps_mult, cc);
        pl.functional = field_or<std::string>(c, "functional", pl.functional, cc);
        pl.window_m = field_or<int>(c, "window_m", pl.window_m, cc);
        pl.law_samples = field_or<std::int64_t>(c, "law_samples", pl.law_samples, cc);
        rc.converge.law_file = field_or<std::string>(c, "law_file", "", cc);
        rc.converge.plots = field_or<bool>(c, "plots", false, cc);
    }

    if (j.contains("oracle")) {
        const json& o = j["oracle"];
        check_keys(o, {"samples", "law_file"}, "oracle");
        rc.oracle.samples = field_or<std::int64_t>(o, "samples", rc.oracle.samples, "oracle");
        rc.oracle.law_file = field_or<std::string>(o, "law_file", "", "oracle");
    }
    return rc;
}

json run_config_to_json(const RunConfig& rc) {
    json c{{"experiment", rc.converge.experiment},
           {"n_list", rc.converge.plan.n_list},
           {"trials_per_n", rc.converge.plan.trials_per_n},
           {"k_max", rc.converge.plan.k_max},
           {"exceed_n_list", rc.converge.plan.exceed_n_list},
           {"exceed_draws", rc.converge.plan.exceed_draws},
           {"exceed_eps_mult", rc.converge.plan.exceed_eps_mult},
           {"functional", rc.converge.plan.functional},
           {"window_m", rc.converge.plan.window_m},
           {"law_samples", rc.converge.plan.law_samples},
           {"law_file", rc.converge.law_file},
           {"plots", rc.converge.plots}};
    return json{{"params", params_to_json(rc.params)},
                {"quadrature", json{{"gauss_nodes", rc.quad.gauss_nodes},
                                    {"init_nodes", rc.quad.init_nodes},
                                    {"degenerate_eps", rc.quad.degenerate_eps}}},
                {"seed", rc.seed},
                {"threads", rc.threads},
                {"out_dir", rc.out_dir},
                {"simulate",
                 json{{"n", rc.simulate.n},
                      {"trials", rc.simulate.trials},
                      {"k_max", rc.simulate.k_max},
                      {"weight_method",
                       rc.simulate.method == WeightMethod::FftTorus ? "fft" : "direct"},
                      {"format", rc.simulate.format}}},
                {"converge", c},
                {"oracle",
                 json{{"samples", rc.oracle.samples}, {"law_file", rc.oracle.law_file}}}};
}

RunConfig load_run_config(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("'" + path + "': JSON parse error: " + e.what());
    }
    RunConfig rc = run_config_from_json(doc);
    if (const char* s = std::getenv("NETLIM_SEED")) rc.seed = parse_env_u64(s, "NETLIM_SEED");
    if (const char* s = std::getenv("NETLIM_THREADS")) {
        const std::uint64_t t = parse_env_u64(s, "NETLIM_THREADS");
        if (t < 1 || t > 4096) throw ConfigError("NETLIM_THREADS: out of range");
        rc.threads = static_cast<int>(t);
    }
    for (const std::string& ref : {rc.converge.law_file, rc.oracle.law_file})
        if (!ref.empty() && !fs::exists(ref))
            throw ConfigError("referenced law file '" + ref + "' does not exist");
    return rc;
}

// --- file helpers -----------------------------------------------------------

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "' for reading");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void atomic_write(const std::string& path, const std::string& contents) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open '" + tmp.string() + "' for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw ConfigError("short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw ConfigError("cannot move '" + tmp.string() + "' into place: " + ec.message());
    }
}

} // namespace netlim

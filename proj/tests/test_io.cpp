#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "fixtures.hpp"
#include "netlim/convergence.hpp"
#include "netlim/errors.hpp"
#include "netlim/io.hpp"
#include "netlim/limit_law.hpp"
#include "netlim/network.hpp"

using namespace netlim;
using namespace fixtures;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    static const fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "netlim_io_scratch";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

void check_params_equal(const ModelParams& a, const ModelParams& b) {
    CHECK(a.gamma == b.gamma);
    CHECK(a.sigma2 == b.sigma2);
    CHECK(a.theta_bar == b.theta_bar);
    CHECK(a.theta2 == b.theta2);
    CHECK(a.j_bar == b.j_bar);
    CHECK(a.horizon_T == b.horizon_T);
    CHECK(a.f.g == b.f.g);
    REQUIRE(a.lambda.d() == b.lambda.d());
    for (int k = -a.lambda.d(); k <= a.lambda.d(); ++k)
        for (int l = -a.lambda.d(); l <= a.lambda.d(); ++l)
            CHECK(a.lambda(k, l) == b.lambda(k, l));
    REQUIRE(a.mu_init.kind() == b.mu_init.kind());
    CHECK(a.mu_init.mean() == b.mu_init.mean());
    CHECK(a.mu_init.variance() == b.mu_init.variance());
}

} // namespace

TEST_CASE("model params survive a JSON round trip for every initial-law variant") {
    ModelParams p = config_c1(4);
    check_params_equal(p, params_from_json(params_to_json(p)));

    p.mu_init = InitialLaw::gaussian(-0.3, 0.7);
    check_params_equal(p, params_from_json(params_to_json(p)));

    p.mu_init = InitialLaw::discrete({{-1.0, 0.25}, {0.5, 0.75}});
    check_params_equal(p, params_from_json(params_to_json(p)));
    const auto atoms = params_from_json(params_to_json(p)).mu_init.atoms();
    REQUIRE(atoms.size() == 2);
    CHECK(atoms[0].first == -1.0);
    CHECK(atoms[1].second == 0.75);

    // serialize -> parse -> serialize is the identity on the document
    const nlohmann::json doc = params_to_json(p);
    CHECK(params_to_json(params_from_json(doc)) == doc);
}

TEST_CASE("model params reader names the missing field") {
    nlohmann::json doc = params_to_json(config_c1(2));
    doc.erase("gamma");
    CHECK_THROWS_WITH_AS(params_from_json(doc),
                         doctest::Contains("missing config field 'gamma'"), ConfigError);

    nlohmann::json doc2 = params_to_json(config_c1(2));
    doc2["typo_field"] = 1.0;
    CHECK_THROWS_WITH_AS(params_from_json(doc2), doctest::Contains("unknown field 'typo_field'"),
                         ConfigError);

    nlohmann::json doc3 = params_to_json(config_c1(2));
    doc3["lambda"].erase("values");
    CHECK_THROWS_WITH_AS(params_from_json(doc3),
                         doctest::Contains("missing config field 'values'"), ConfigError);
}

TEST_CASE("limit law serializes to limitlaw-v1 and round-trips bitwise") {
    const ModelParams p = config_c1(3);
    const LimitLaw law = solve_limit_law(p, QuadratureConfig{});
    const nlohmann::json doc = law_to_json(law);
    CHECK(doc.at("version") == "limitlaw-v1");
    CHECK(doc.at("T") == 3);
    CHECK(doc.at("d") == 1);

    // matrices are stored row-major over the meaningful index range
    const nlohmann::json& k0 = doc.at("K").at(0);
    CHECK(k0.at("lag") == 0);
    for (int r = 1; r <= 3; ++r)
        for (int s = 1; s <= 3; ++s)
            CHECK(k0.at("matrix").at((r - 1) * 3 + (s - 1)).get<double>() == law.K[0](r, s));

    const LimitLaw back = law_from_json(doc);
    CHECK(back.T == law.T);
    CHECK(back.d == law.d);
    CHECK(back.LM == law.LM);
    for (int s = 1; s <= law.T; ++s) CHECK(back.c(s) == law.c(s));
    for (std::size_t l = 0; l < law.K.size(); ++l)
        CHECK((back.K[l] - law.K[l]).cwiseAbs().maxCoeff() == 0.0);
    for (std::size_t l = 0; l < law.M.size(); ++l)
        CHECK((back.M[l] - law.M[l]).cwiseAbs().maxCoeff() == 0.0);
    check_params_equal(back.params, law.params);

    // document-level identity
    CHECK(law_to_json(back) == doc);
}

TEST_CASE("limit law reader rejects tampered documents") {
    const LimitLaw law = solve_limit_law(config_c1(2), QuadratureConfig{});
    nlohmann::json doc = law_to_json(law);
    doc["version"] = "limitlaw-v0";
    CHECK_THROWS_AS(law_from_json(doc), ConfigError);

    doc = law_to_json(law);
    doc["d"] = 2;
    CHECK_THROWS_AS(law_from_json(doc), ConfigError);

    doc = law_to_json(law);
    doc.erase("c");
    CHECK_THROWS_WITH_AS(law_from_json(doc), doctest::Contains("missing config field 'c'"),
                         ConfigError);

    doc = law_to_json(law);
    doc["K"][0]["matrix"].erase(0);
    CHECK_THROWS_AS(law_from_json(doc), ConfigError);
}

TEST_CASE("empirical stats round-trip through JSON including marginal pools") {
    const ModelParams p = config_c1(3);
    SimConfig sim;
    sim.n = 3;
    sim.seed = 424242;
    const WeightField w = sample_weights(p, sim);
    const TrajectoryEnsemble ens = simulate(p, sim, w);
    const EmpiricalStats st = empirical_stats(ens, p, 1);

    const nlohmann::json doc = stats_to_json(st);
    CHECK(doc.at("version") == "empirical-stats-v1");
    const EmpiricalStats back = stats_from_json(doc);
    CHECK(back.n == st.n);
    CHECK(back.T == st.T);
    CHECK((back.c_hat - st.c_hat).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(back.K_hat.size() == st.K_hat.size());
    for (std::size_t k = 0; k < st.K_hat.size(); ++k)
        CHECK((back.K_hat[k] - st.K_hat[k]).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(back.marginal_pool.size() == st.marginal_pool.size());
    for (std::size_t s = 0; s < st.marginal_pool.size(); ++s)
        CHECK(back.marginal_pool[s] == st.marginal_pool[s]);
    CHECK(stats_to_json(back) == doc);
}

TEST_CASE("distance reports export CSV rows per (n, trial, metric)") {
    ExperimentPlan plan;
    plan.n_list = {3, 5};
    plan.trials_per_n = 2;
    plan.seed = 99;
    plan.k_max = 0;
    const ModelParams p = config_decoupled(2);
    const DistanceReport rep = run_averaged_convergence(plan, p, QuadratureConfig{});

    const std::string csv = report_to_csv(rep);
    std::istringstream in(csv);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "n,trial,metric,value");

    int rows = 0, mean_rows = 0, median_rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        if (line.find(",mean_err,") != std::string::npos) ++mean_rows;
        if (line.find(",median_mean_err,") != std::string::npos) ++median_rows;
    }
    // per record: mean_err + 1 cov lag + 2 KS metrics x T
    const int per_record = 1 + 1 + 2 * 2;
    // per summary: 4 scalar medians + 1 cov median + the aggregate record
    const int per_summary = 4 + 1 + per_record;
    CHECK(rows == 4 * per_record + 2 * per_summary);
    CHECK(mean_rows == 4 + 2); // four trials plus two aggregates
    CHECK(median_rows == 2);

    const nlohmann::json doc = report_to_json(rep);
    CHECK(doc.at("experiment") == "averaged");
    CHECK(doc.at("n_records") == 4);
    REQUIRE(doc.at("summaries").size() == 2);
    CHECK(doc.at("summaries").at(0).at("n") == 3);
    CHECK(doc.at("summaries").at(0).at("aggregate").at("trial") == -1);
}

TEST_CASE("plot files carry two numeric columns with population size on x") {
    ExperimentPlan plan;
    plan.n_list = {2, 4};
    plan.trials_per_n = 2;
    plan.seed = 7;
    plan.k_max = 0;
    const DistanceReport rep =
        run_averaged_convergence(plan, config_decoupled(1), QuadratureConfig{});

    const fs::path dir = scratch_dir() / "plots";
    const auto files = write_plot_files(dir.string(), "averaged", rep);
    REQUIRE(!files.empty());
    bool saw_mean = false;
    for (const std::string& f : files) {
        if (f.find("median_mean_err") == std::string::npos) continue;
        saw_mean = true;
        std::istringstream in(read_file(f));
        double x = 0, y = 0;
        REQUIRE(static_cast<bool>(in >> x >> y));
        CHECK(x == 5.0);
        CHECK(y == rep.summaries[0].median_mean_err);
        REQUIRE(static_cast<bool>(in >> x >> y));
        CHECK(x == 9.0);
    }
    CHECK(saw_mean);
}

TEST_CASE("ensemble CSV round-trips trajectories exactly") {
    const ModelParams p = config_c1(2);
    SimConfig sim;
    sim.n = 2;
    std::vector<TrajectoryEnsemble> trials;
    for (int t = 0; t < 3; ++t) {
        sim.seed = 1000 + static_cast<std::uint64_t>(t);
        trials.push_back(simulate(p, sim, sample_weights(p, sim)));
    }
    const fs::path path = scratch_dir() / "ens.csv";
    write_ensemble_csv(path.string(), trials, sim.n);

    std::istringstream in(read_file(path.string()));
    std::string header;
    REQUIRE(std::getline(in, header));
    CHECK(header == "trial,neuron,time,u");

    const auto back = read_ensemble_csv(path.string());
    REQUIRE(back.size() == trials.size());
    for (std::size_t t = 0; t < trials.size(); ++t)
        CHECK((back[t].u - trials[t].u).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ensemble CSV reader rejects malformed files") {
    const fs::path bad = scratch_dir() / "bad.csv";
    atomic_write(bad.string(), "neuron,time,u\n0,0,1.0\n");
    CHECK_THROWS_AS(read_ensemble_csv(bad.string()), ConfigError);

    // drop one data row -> incomplete grid
    const ModelParams p = config_c1(1);
    SimConfig sim;
    sim.n = 1;
    sim.seed = 5;
    const std::vector<TrajectoryEnsemble> one = {simulate(p, sim, sample_weights(p, sim))};
    const fs::path path = scratch_dir() / "trunc.csv";
    write_ensemble_csv(path.string(), one, sim.n);
    std::istringstream in(read_file(path.string()));
    std::string line, kept;
    int row = 0;
    while (std::getline(in, line))
        if (row++ != 3) kept += line + "\n";
    atomic_write(path.string(), kept);
    CHECK_THROWS_AS(read_ensemble_csv(path.string()), ConfigError);
}

TEST_CASE("ensemble binary uses a 16-byte NSIM header and round-trips bitwise") {
    const ModelParams p = config_c1(3);
    SimConfig sim;
    sim.n = 2;
    std::vector<TrajectoryEnsemble> trials;
    for (int t = 0; t < 2; ++t) {
        sim.seed = 2000 + static_cast<std::uint64_t>(t);
        trials.push_back(simulate(p, sim, sample_weights(p, sim)));
    }
    const fs::path path = scratch_dir() / "ens.nsim";
    write_ensemble_binary(path.string(), trials, sim.n);

    const std::string raw = read_file(path.string());
    const int N = 2 * sim.n + 1;
    REQUIRE(raw.size() == 16 + 2u * N * (p.horizon_T + 1) * 8);
    CHECK(raw.compare(0, 4, "NSIM") == 0);
    std::uint32_t version = 0, n = 0, T = 0;
    std::memcpy(&version, raw.data() + 4, 4);
    std::memcpy(&n, raw.data() + 8, 4);
    std::memcpy(&T, raw.data() + 12, 4);
    CHECK(version == 1);
    CHECK(n == 2);
    CHECK(T == 3);

    const auto back = read_ensemble_binary(path.string());
    REQUIRE(back.size() == trials.size());
    for (std::size_t t = 0; t < trials.size(); ++t)
        CHECK((back[t].u - trials[t].u).cwiseAbs().maxCoeff() == 0.0);

    // corrupt the magic
    std::string bad = raw;
    bad[0] = 'X';
    const fs::path badp = scratch_dir() / "bad.nsim";
    atomic_write(badp.string(), bad);
    CHECK_THROWS_AS(read_ensemble_binary(badp.string()), ConfigError);

    // truncate the payload
    const fs::path shortp = scratch_dir() / "short.nsim";
    atomic_write(shortp.string(), raw.substr(0, raw.size() - 5));
    CHECK_THROWS_AS(read_ensemble_binary(shortp.string()), ConfigError);
}

TEST_CASE("run config round-trips losslessly and honours env overrides") {
    RunConfig rc;
    rc.params = config_c1(4);
    rc.seed = 31337;
    rc.threads = 2;
    rc.out_dir = "out";
    rc.simulate.n = 6;
    rc.simulate.trials = 3;
    rc.simulate.format = "binary";
    rc.converge.experiment = "quenched";
    rc.converge.plan.n_list = {10, 20};
    rc.converge.plan.trials_per_n = 5;
    rc.oracle.samples = 12345;

    const nlohmann::json doc = run_config_to_json(rc);
    const RunConfig back = run_config_from_json(doc);
    CHECK(run_config_to_json(back) == doc);
    CHECK(back.seed == 31337);
    CHECK(back.simulate.format == "binary");
    const std::vector<int> want_n{10, 20};
    CHECK(back.converge.plan.n_list == want_n);
    CHECK(back.oracle.samples == 12345);

    const fs::path cfg = scratch_dir() / "config.json";
    atomic_write(cfg.string(), doc.dump(2) + "\n");
    ::unsetenv("NETLIM_SEED");
    ::unsetenv("NETLIM_THREADS");
    const RunConfig loaded = load_run_config(cfg.string());
    CHECK(run_config_to_json(loaded) == doc);

    ::setenv("NETLIM_SEED", "9001", 1);
    ::setenv("NETLIM_THREADS", "3", 1);
    const RunConfig overridden = load_run_config(cfg.string());
    CHECK(overridden.seed == 9001);
    CHECK(overridden.threads == 3);
    ::setenv("NETLIM_SEED", "not_a_number", 1);
    CHECK_THROWS_AS(load_run_config(cfg.string()), ConfigError);
    ::unsetenv("NETLIM_SEED");
    ::unsetenv("NETLIM_THREADS");
}

TEST_CASE("run config reader reports missing and unknown fields by name") {
    RunConfig rc;
    rc.params = config_c1(2);
    nlohmann::json doc = run_config_to_json(rc);
    doc.erase("params");
    CHECK_THROWS_WITH_AS(run_config_from_json(doc),
                         doctest::Contains("missing config field 'params'"), ConfigError);

    doc = run_config_to_json(rc);
    doc["params"].erase("sigma2");
    CHECK_THROWS_WITH_AS(run_config_from_json(doc),
                         doctest::Contains("missing config field 'sigma2'"), ConfigError);

    doc = run_config_to_json(rc);
    doc["converge"]["experiment"] = "annealed";
    CHECK_THROWS_AS(run_config_from_json(doc), ConfigError);

    doc = run_config_to_json(rc);
    doc["simulate"]["weight_method"] = "cholesky";
    CHECK_THROWS_AS(run_config_from_json(doc), ConfigError);

    doc = run_config_to_json(rc);
    doc["extra"] = 1;
    CHECK_THROWS_WITH_AS(run_config_from_json(doc),
                         doctest::Contains("unknown field 'extra'"), ConfigError);
}

TEST_CASE("run config referencing a nonexistent law file is rejected at load") {
    RunConfig rc;
    rc.params = config_c1(2);
    rc.converge.law_file = (scratch_dir() / "no_such_law.json").string();
    const fs::path cfg = scratch_dir() / "config_ref.json";
    atomic_write(cfg.string(), run_config_to_json(rc).dump(2) + "\n");
    ::unsetenv("NETLIM_SEED");
    ::unsetenv("NETLIM_THREADS");
    CHECK_THROWS_WITH_AS(load_run_config(cfg.string()), doctest::Contains("does not exist"),
                         ConfigError);

    // once the file exists the config loads
    const LimitLaw law = solve_limit_law(rc.params, QuadratureConfig{});
    atomic_write(rc.converge.law_file, law_to_json(law).dump(2) + "\n");
    CHECK_NOTHROW(load_run_config(cfg.string()));
}

TEST_CASE("atomic_write installs complete content and overwrites in place") {
    const fs::path path = scratch_dir() / "atomic.bin";
    std::string payload = "header";
    payload.push_back('\0');
    payload += "tail";
    atomic_write(path.string(), payload);
    CHECK(read_file(path.string()) == payload);
    atomic_write(path.string(), "second");
    CHECK(read_file(path.string()) == "second");
    CHECK(!fs::exists(path.string() + ".tmp"));
    CHECK_THROWS_AS(read_file((scratch_dir() / "missing.txt").string()), ConfigError);
}

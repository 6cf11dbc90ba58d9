#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mfcm/config.hpp"
#include "mfcm/errors.hpp"
#include "mfcm/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli() {
    const char* p = std::getenv("MFCM_CLI");
    REQUIRE_MESSAGE(p != nullptr, "MFCM_CLI must point at the mfcm executable");
    return p;
}

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("mfcm_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

fs::path write_config(const fs::path& dir, const json& j) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

struct Run {
    int code = -1;
    std::string out, err;
};

// Runs the CLI with stdout and stderr captured to files in `dir`.
Run run(const fs::path& dir, const std::string& args, const std::string& env = "") {
    const fs::path o = dir / "stdout.txt", e = dir / "stderr.txt";
    const std::string cmd = env + " \"" + cli() + "\" " + args + " >\"" + o.string() + "\" 2>\"" + e.string() + "\"";
    const int st = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
}

std::string first_line(const fs::path& p) {
    std::ifstream in(p);
    std::string l;
    std::getline(in, l);
    return l;
}

void check_meta(const fs::path& dir, const std::string& hash) {
    for (const auto& ent : fs::directory_iterator(dir)) {
        const auto ext = ent.path().extension();
        if (ent.path().filename() == "config.json") continue;
        if (ext == ".csv") {
            CHECK(first_line(ent.path()) == "# mfcm_version=" + mfcm::toolkit_version() + " config_hash=" + hash);
        } else if (ext == ".json") {
            const json j = read_json(ent.path());
            CHECK(j.at("config_hash") == hash);
            CHECK(j.at("version") == mfcm::toolkit_version());
        }
    }
}

std::string hash_of(const json& j) { return mfcm::config_hash(mfcm::parse_config(j.dump())); }

} // namespace

TEST_CASE("config parsing") {
    const auto c = mfcm::parse_config(R"({"model": {"mu": 0.02}, "seed": 5})");
    CHECK(c.model.mu == 0.02);
    CHECK(c.seed == 5);
    try {
        mfcm::parse_config(R"({"model": {"mu": 0.02, "muu": 1}})");
        FAIL("expected UnknownKey");
    } catch (const mfcm::ConfigError& e) {
        CHECK(e.code() == "UnknownKey");
        CHECK(std::string(e.what()).find("model.muu") != std::string::npos);
    }
    CHECK_THROWS_AS(mfcm::parse_config("{"), mfcm::ConfigError);
    CHECK_THROWS_AS(mfcm::parse_config(R"({"numerics": {"newton_tol": 0}})"), mfcm::ConfigError);
    CHECK_THROWS_AS(mfcm::parse_config(R"({"threads": 0})"), mfcm::ConfigError);
}

TEST_CASE("config hash") {
    const std::string h = hash_of(json::object());
    CHECK(h.size() == 16);
    CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
    // key order, output directory and thread count do not change the hash
    CHECK(hash_of({{"seed", 1}, {"model", {{"mu", 0.03}}}}) == hash_of({{"model", {{"mu", 0.03}}}, {"seed", 1}}));
    CHECK(hash_of({{"out", "a"}, {"threads", 3}}) == h);
    CHECK(hash_of({{"seed", 1}}) != h);
    CHECK(hash_of({{"model", {{"mu", 0.051}}}}) != h);
}

TEST_CASE("number formatting") {
    CHECK(mfcm::fmt_double(0.0) == "0");
    CHECK(mfcm::fmt_double(-0.0) == "0");
    CHECK(mfcm::fmt_double(0.1) == "0.1");
    CHECK(std::stod(mfcm::fmt_double(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(mfcm::fmt_double(std::nan("")) == "nan");
}

TEST_CASE("trace reports arcs that enter from above") {
    const auto dir = scratch("arcs");
    const json cfg = {{"model", {{"mu", 0.1}}}, {"trace", {{"nu_hi", 100.0}, {"count_points", 41}}},
                      {"out", (dir / "o").string()}};
    const auto r = run(dir, "trace --config " + write_config(dir, cfg).string());
    REQUIRE(r.code == 0);
    const auto j = read_json(dir / "o" / "branch.json");
    REQUIRE(j.at("residual_components").size() == 1);
    const auto& arc = j.at("residual_components")[0];
    CHECK(arc.at("start_nu").get<double>() == 100.0);
    CHECK(arc.at("folds").size() == 1);
    CHECK(j.at("unmatched_roots").empty());
}

TEST_CASE("trace through the folds") {
    const auto dir = scratch("trace");
    const json cfg = {{"trace", {{"nu_hi", 50.0}, {"count_points", 51}}}, {"out", (dir / "o").string()}};
    const auto r = run(dir, "trace --config " + write_config(dir, cfg).string());
    REQUIRE(r.code == 0);
    const auto j = read_json(dir / "o" / "branch.json");
    REQUIRE(j.at("folds").size() >= 2);
    CHECK(j.at("folds").size() == 4);
    CHECK(j.at("max_run_contraction").get<double>() <= 0.5);
    CHECK(j.at("residual_components").empty());
    CHECK(j.at("unmatched_roots").empty());
    // stability column alternates across each fold
    std::ifstream in(dir / "o" / "branch.csv");
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    CHECK(line == "tau,nu,omega,gamma,xi1_re,xi1_im,leading_eig_re,leading_eig_im,fold_flag,stability");
    std::vector<std::string> stab;
    std::vector<int> fold;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        REQUIRE(cells.size() == 10);
        fold.push_back(std::stoi(cells[8]));
        stab.push_back(cells[9]);
    }
    int seen = 0;
    for (std::size_t i = 1; i + 1 < stab.size(); ++i) {
        if (!fold[i]) continue;
        ++seen;
        CHECK(stab[i] == "marginal");
        CHECK(stab[i - 1] != stab[i + 1]);
    }
    CHECK(seen == 4);
    check_meta(dir / "o", hash_of(cfg));
}

TEST_CASE("trace without coupling strength") {
    const auto dir = scratch("flat");
    const json cfg = {{"model", {{"mu", 0.0}, {"nu_max", 60.0}}}, {"out", (dir / "o").string()}};
    REQUIRE(run(dir, "trace --config " + write_config(dir, cfg).string()).code == 0);
    const auto j = read_json(dir / "o" / "branch.json");
    CHECK(j.at("folds").empty());
    for (const auto& c : j.at("solution_counts")) CHECK(c.at("count") == 1);
}

TEST_CASE("config errors exit with code 2") {
    const auto dir = scratch("bad");
    auto r = run(dir, "trace --config " + write_config(dir, {{"trace", {{"nu_hii", 3}}}}).string());
    CHECK(r.code == 2);
    CHECK(r.err.find("UnknownKey") != std::string::npos);
    CHECK(r.err.find("trace.nu_hii") != std::string::npos);
    CHECK(run(dir, "trace --config " + (dir / "missing.json").string()).code == 2);
    CHECK(run(dir, "frobnicate").code == 2);
    CHECK(run(dir, "trace --threads 0").code == 2);
    r = run(dir, "trace --config " + write_config(dir, {{"model", {{"mu", 1.2}}}}).string() + " --out " +
                     (dir / "o").string());
    CHECK(r.code == 2);
    CHECK(read_json(dir / "o" / "error.json").at("error") == "RhoNotDiffeo");
}

TEST_CASE("numerical failures exit with code 1") {
    const auto dir = scratch("num");
    // the trace cannot start where the fixed point is not unique
    const json cfg = {{"trace", {{"nu_lo", 61.26}, {"nu_hi", 62.0}}}, {"out", (dir / "o").string()}};
    const auto r = run(dir, "trace --config " + write_config(dir, cfg).string());
    CHECK(r.code == 1);
    const auto e = read_json(dir / "o" / "error.json");
    CHECK(e.at("error") == "NotUnique");
    CHECK(e.at("config_hash") == hash_of(cfg));
}

TEST_CASE("validate passes") {
    const auto dir = scratch("validate");
    const auto r = run(dir, "validate --out " + (dir / "o").string());
    CHECK(r.code == 0);
    CHECK(r.out.find("FAIL") == std::string::npos);
    CHECK(read_json(dir / "o" / "validate.json").at("all_pass") == true);
}

TEST_CASE("simulate is reproducible and thread independent") {
    const auto dir = scratch("simulate");
    const json cfg = {{"simulate", {{"particles", 70000}, {"steps", 60}}}, {"seed", 7}};
    const auto c = write_config(dir, cfg).string();
    REQUIRE(run(dir, "simulate --config " + c + " --out " + (dir / "a").string()).code == 0);
    REQUIRE(run(dir, "simulate --config " + c + " --out " + (dir / "b").string()).code == 0);
    REQUIRE(run(dir, "simulate --config " + c + " --out " + (dir / "t").string(), "MFCM_THREADS=3").code == 0);
    REQUIRE(run(dir, "simulate --config " + c + " --out " + (dir / "u").string() + " --threads 2", "MFCM_THREADS=3")
                .code == 0);
    CHECK(slurp(dir / "a" / "trajectory.csv") == slurp(dir / "b" / "trajectory.csv"));
    CHECK(slurp(dir / "a" / "residence.json") == slurp(dir / "b" / "residence.json"));
    CHECK(slurp(dir / "a" / "trajectory.csv") == slurp(dir / "t" / "trajectory.csv"));
    CHECK(read_json(dir / "a" / "residence.json").at("threads") == 1);
    CHECK(read_json(dir / "t" / "residence.json").at("threads") == 3);
    CHECK(read_json(dir / "u" / "residence.json").at("threads") == 2);
    const auto j = read_json(dir / "a" / "residence.json");
    CHECK(j.at("seed") == 7);
    CHECK(j.at("stable_omegas").size() == 2);
    check_meta(dir / "a", hash_of(cfg));
    // a different seed changes the trajectory
    REQUIRE(run(dir, "simulate --config " + c + " --seed 8 --out " + (dir / "s").string()).code == 0);
    CHECK(slurp(dir / "a" / "trajectory.csv") != slurp(dir / "s" / "trajectory.csv"));
}

TEST_CASE("ift-certify") {
    const auto dir = scratch("certify");
    const json cfg = {{"certify", {{"nu", 20.0}}}, {"out", (dir / "o").string()}};
    REQUIRE(run(dir, "ift-certify --config " + write_config(dir, cfg).string()).code == 0);
    const auto j = read_json(dir / "o" / "certificate.json");
    CHECK(j.at("certificate").at("contraction").get<double>() <= 0.5);
    CHECK(j.at("corrector").at("contraction").get<double>() <= 0.5);
    CHECK(j.at("corrector").at("residual").get<double>() <= 1e-13);
    check_meta(dir / "o", hash_of(cfg));
}

TEST_CASE("sweep and stability outputs") {
    const auto dir = scratch("sweep");
    const json cfg = {{"sweep", {{"nu_lo", 40.0}, {"nu_hi", 62.0}, {"count", 12}}},
                      {"stability", {{"nus", {10.0, 61.26}}}},
                      {"out", (dir / "o").string()}};
    const auto c = write_config(dir, cfg).string();
    REQUIRE(run(dir, "sweep --config " + c).code == 0);
    REQUIRE(run(dir, "stability --config " + c).code == 0);
    CHECK(read_json(dir / "o" / "sweep.json").at("solution_counts").size() == 12);
    const auto st = read_json(dir / "o" / "stability.json");
    CHECK(st.at("reports").size() == 4);  // one root at nu = 10, three at 61.26
    CHECK(st.at("reports")[3].at("density_file") == "density_3.csv");

    // density rows: k1 ascending, then k2 ascending, mass 1 in the (0, 0) mode
    std::ifstream in(dir / "o" / "density_3.csv");
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    CHECK(line == "k1,k2,re,im");
    std::vector<std::array<long, 2>> ks;
    double c00 = 0.0;
    while (std::getline(in, line)) {
        long k1 = 0, k2 = 0;
        double re = 0.0, im = 0.0;
        REQUIRE(std::sscanf(line.c_str(), "%ld,%ld,%lf,%lf", &k1, &k2, &re, &im) == 4);
        if (k1 == 0 && k2 == 0) c00 = re;
        ks.push_back({k1, k2});
    }
    REQUIRE(!ks.empty());
    const long K = -ks.front()[0];
    CHECK(ks.size() == std::size_t((2 * K + 1) * (2 * K + 1)));
    CHECK(std::is_sorted(ks.begin(), ks.end()));
    CHECK(ks.back() == std::array<long, 2>{K, K});
    CHECK(std::abs(c00 * 4.0 * M_PI * M_PI - 1.0) <= 1e-12);
    check_meta(dir / "o", hash_of(cfg));
}

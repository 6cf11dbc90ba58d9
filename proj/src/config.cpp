#include "mfcm/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mfcm/errors.hpp"

namespace mfcm {

using nlohmann::json;

namespace {

class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("InvalidKey", "'" + name() + "' must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw ConfigError("InvalidValue", "bad value for key '" + qualified(key) + "'");
        }
    }

    template <class F>
    void section(const char* key, F body) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        Section s(*it, qualified(key));
        body(s);
        s.finish();
    }

    void positive(const char* key, double v) const {
        if (!(v > 0)) throw ConfigError("InvalidValue", "key '" + qualified(key) + "' must be positive");
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("UnknownKey", "unknown config key '" + qualified(it.key()) + "'");
    }

    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string name() const { return path_.empty() ? "<root>" : path_; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_model(Section& s, ModelConfig& m) {
    s.get("dim", m.dim);
    std::vector<std::vector<std::int64_t>> A;
    s.get("A", A);
    if (!A.empty()) {
        if (A.size() != 2 || A[0].size() != 2 || A[1].size() != 2)
            throw ConfigError("InvalidValue", "key '" + s.qualified("A") + "' must be a 2x2 integer matrix");
        m.A = {A[0][0], A[0][1], A[1][0], A[1][1]};
    }
    s.get("expansion", m.expansion);
    s.get("n_star", m.n_star);
    s.get("mu", m.mu);
    std::vector<std::int64_t> k;
    s.get("k", k);
    if (!k.empty()) {
        if (k.size() != std::size_t(m.dim == 1 ? 1 : 2) && k.size() != 2)
            throw ConfigError("InvalidValue", "key '" + s.qualified("k") + "' has the wrong length");
        m.k = {k[0], k.size() > 1 ? k[1] : 0};
    }
    s.get("nu_max", m.nu_max);
    std::string beta = m.beta == BetaMode::Lattice ? "lattice" : "eigenvector";
    s.get("beta", beta);
    if (beta == "lattice") m.beta = BetaMode::Lattice;
    else if (beta == "eigenvector") m.beta = BetaMode::Eigenvector;
    else throw ConfigError("InvalidValue", "key '" + s.qualified("beta") + "' must be lattice or eigenvector");
}

void read_numerics(Section& s, RunConfig& c) {
    s.get("cutoff", c.transfer.cutoff);
    s.get("mollifier_fraction", c.transfer.mollifier_fraction);
    s.get("newton_tol", c.transfer.newton_tol);
    s.get("max_mass_drift", c.transfer.max_mass_drift);
    s.get("structural_shortcut", c.transfer.structural_shortcut);
    s.get("srb_tol", c.meanfield.srb_tol);
    s.get("resolvent_tol", c.meanfield.resolvent_tol);
    s.get("max_srb_iter", c.meanfield.max_srb_iter);
    s.get("stability_tol", c.classify.tol);
    s.get("circle_points", c.classify.circle_points);
    s.get("eigenvector", c.classify.eigenvector);
    s.get("contour_inner_radius", c.classify.secular.inner_radius);
    s.get("contour_max_points", c.classify.secular.max_points);
    if (c.transfer.cutoff < 0) throw ConfigError("InvalidValue", "key 'numerics.cutoff' must be nonnegative");
    if (c.transfer.mollifier_fraction < 0 || c.transfer.mollifier_fraction >= 1)
        throw ConfigError("InvalidValue", "key 'numerics.mollifier_fraction' must lie in [0, 1)");
    s.positive("newton_tol", c.transfer.newton_tol);
    s.positive("max_mass_drift", c.transfer.max_mass_drift);
    s.positive("srb_tol", c.meanfield.srb_tol);
    s.positive("resolvent_tol", c.meanfield.resolvent_tol);
    s.positive("stability_tol", c.classify.tol);
    s.positive("max_srb_iter", c.meanfield.max_srb_iter);
    s.positive("circle_points", c.classify.circle_points);
    s.positive("contour_inner_radius", c.classify.secular.inner_radius);
}

void read_trace(Section& s, TraceConfig& t) {
    s.get("nu_lo", t.nu_lo);
    s.get("nu_hi", t.nu_hi);
    s.get("count_points", t.count_points);
    s.get("classify", t.classify);
    s.get("max_step", t.settings.max_step);
    s.get("min_step", t.settings.min_step);
    s.get("max_omega_step", t.settings.max_omega_step);
    s.get("corrector_tol", t.settings.corrector_tol);
    s.get("fold_tol", t.settings.fold_tol);
    s.get("fit_scale", t.settings.fit_scale);
    s.get("fold_curvature", t.settings.fold_curvature);
    s.positive("max_step", t.settings.max_step);
    s.positive("min_step", t.settings.min_step);
    s.positive("max_omega_step", t.settings.max_omega_step);
    s.positive("corrector_tol", t.settings.corrector_tol);
    s.positive("fold_tol", t.settings.fold_tol);
    s.positive("fit_scale", t.settings.fit_scale);
    if (t.count_points < 2) throw ConfigError("InvalidValue", "key 'trace.count_points' must be at least 2");
    if (t.nu_lo < 0) throw ConfigError("InvalidValue", "key 'trace.nu_lo' must be nonnegative");
}

void read_residence(Section& s, ResidenceSettings& r) {
    s.get("open_band", r.open_band);
    s.get("close_band", r.close_band);
    s.get("hold", r.hold);
    s.get("capture", r.capture);
    if (r.hold < 1) throw ConfigError("InvalidValue", "key 'simulate.residence.hold' must be at least 1");
}

} // namespace

RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("ParseError", std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    Section root(j, "");
    root.section("model", [&](Section& s) { read_model(s, c.model); });
    root.section("numerics", [&](Section& s) { read_numerics(s, c); });
    root.section("trace", [&](Section& s) { read_trace(s, c.trace); });
    root.section("sweep", [&](Section& s) {
        s.get("nu_lo", c.sweep.nu_lo);
        s.get("nu_hi", c.sweep.nu_hi);
        s.get("count", c.sweep.count);
        if (c.sweep.count < 1 || c.sweep.nu_hi < c.sweep.nu_lo || c.sweep.nu_lo < 0)
            throw ConfigError("InvalidValue", "key 'sweep' needs 0 <= nu_lo <= nu_hi and count >= 1");
    });
    root.section("stability", [&](Section& s) {
        s.get("nus", c.stability.nus);
        for (double v : c.stability.nus)
            if (!(v >= 0)) throw ConfigError("InvalidValue", "key 'stability.nus' must hold nonnegative values");
    });
    root.section("simulate", [&](Section& s) {
        s.get("nu", c.simulate.nu);
        s.get("particles", c.simulate.particles);
        s.get("steps", c.simulate.steps);
        s.get("init", c.simulate.init);
        s.get("omega0", c.simulate.omega0);
        s.get("sampling_grid", c.simulate.sampling_grid);
        s.section("residence", [&](Section& r) { read_residence(r, c.simulate.residence); });
        s.positive("particles", double(c.simulate.particles));
        if (c.simulate.steps < 0) throw ConfigError("InvalidValue", "key 'simulate.steps' must be nonnegative");
        if (c.simulate.init != "uniform" && c.simulate.init != "perturbative" && c.simulate.init != "fixed_point")
            throw ConfigError("InvalidValue", "key 'simulate.init' must be uniform, perturbative or fixed_point");
    });
    root.section("certify", [&](Section& s) {
        s.get("nu", c.certify.nu);
        s.get("omega", c.certify.omega);
        s.get("delta_max", c.certify.delta_max);
        s.get("delta_min", c.certify.delta_min);
        s.positive("delta_max", c.certify.delta_max);
        s.positive("delta_min", c.certify.delta_min);
    });
    root.get("out", c.out);
    root.get("seed", c.seed);
    root.get("threads", c.threads);
    root.finish();
    if (c.threads < 1) throw ConfigError("InvalidValue", "key 'threads' must be at least 1");
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("ConfigNotFound", "cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string canonical_config(const RunConfig& c) {
    const auto& m = c.model;
    json j;
    j["model"] = {{"dim", m.dim},
                  {"A", m.A},
                  {"expansion", m.expansion},
                  {"n_star", m.n_star},
                  {"mu", m.mu},
                  {"k", m.k},
                  {"nu_max", m.nu_max},
                  {"beta", m.beta == BetaMode::Lattice ? "lattice" : "eigenvector"}};
    j["numerics"] = {{"cutoff", c.transfer.cutoff},
                     {"mollifier_fraction", c.transfer.mollifier_fraction},
                     {"newton_tol", c.transfer.newton_tol},
                     {"max_mass_drift", c.transfer.max_mass_drift},
                     {"structural_shortcut", c.transfer.structural_shortcut},
                     {"srb_tol", c.meanfield.srb_tol},
                     {"resolvent_tol", c.meanfield.resolvent_tol},
                     {"max_srb_iter", c.meanfield.max_srb_iter},
                     {"stability_tol", c.classify.tol},
                     {"circle_points", c.classify.circle_points},
                     {"eigenvector", c.classify.eigenvector},
                     {"contour_inner_radius", c.classify.secular.inner_radius},
                     {"contour_max_points", c.classify.secular.max_points}};
    const auto& t = c.trace;
    j["trace"] = {{"nu_lo", t.nu_lo},
                  {"nu_hi", t.nu_hi},
                  {"count_points", t.count_points},
                  {"classify", t.classify},
                  {"max_step", t.settings.max_step},
                  {"min_step", t.settings.min_step},
                  {"max_omega_step", t.settings.max_omega_step},
                  {"corrector_tol", t.settings.corrector_tol},
                  {"fold_tol", t.settings.fold_tol},
                  {"fit_scale", t.settings.fit_scale},
                  {"fold_curvature", t.settings.fold_curvature}};
    j["sweep"] = {{"nu_lo", c.sweep.nu_lo}, {"nu_hi", c.sweep.nu_hi}, {"count", c.sweep.count}};
    j["stability"] = {{"nus", c.stability.nus}};
    const auto& r = c.simulate.residence;
    j["simulate"] = {{"nu", c.simulate.nu},
                     {"particles", c.simulate.particles},
                     {"steps", c.simulate.steps},
                     {"init", c.simulate.init},
                     {"omega0", c.simulate.omega0},
                     {"sampling_grid", c.simulate.sampling_grid},
                     {"residence",
                      {{"open_band", r.open_band}, {"close_band", r.close_band}, {"hold", r.hold}, {"capture", r.capture}}}};
    j["certify"] = {{"nu", c.certify.nu},
                    {"omega", c.certify.omega},
                    {"delta_max", c.certify.delta_max},
                    {"delta_min", c.certify.delta_min}};
    j["seed"] = c.seed;
    return j.dump();
}

std::string config_hash(const RunConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical_config(c)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

int threads_from_env(int fallback) {
    const char* v = std::getenv("MFCM_THREADS");
    if (!v || !*v) return fallback;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1 || n > 1024) throw ConfigError("InvalidValue", "MFCM_THREADS must be a positive integer");
    return int(n);
}

std::string toolkit_version() { return MFCM_VERSION; }

} // namespace mfcm

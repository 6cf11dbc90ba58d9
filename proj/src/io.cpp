#include "mfcm/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mfcm/errors.hpp"

namespace mfcm {

using nlohmann::json;

std::string meta_line(const OutputMeta& meta) {
    return "mfcm_version=" + meta.version + " config_hash=" + meta.config_hash;
}

json stamp(json j, const OutputMeta& meta) {
    j["version"] = meta.version;
    j["config_hash"] = meta.config_hash;
    return j;
}

std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

void header(std::ostream& os, const OutputMeta& meta, const char* columns) {
    os << "# " << meta_line(meta) << '\n' << columns << '\n';
}

void fixed_point_cells(std::ostream& os, const FixedPointRecord& r) {
    os << fmt_double(r.nu) << ',' << fmt_double(r.omega) << ',' << fmt_double(r.residual) << ','
       << fmt_double(r.gamma) << ',' << fmt_double(r.xi1.real()) << ',' << fmt_double(r.xi1.imag());
}

json number(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

} // namespace

void write_branch_csv(std::ostream& os, const Branch& b, const OutputMeta& meta) {
    header(os, meta, "tau,nu,omega,gamma,xi1_re,xi1_im,leading_eig_re,leading_eig_im,fold_flag,stability");
    for (const auto& p : b.points) {
        os << fmt_double(p.tau) << ',' << fmt_double(p.rec.nu) << ',' << fmt_double(p.rec.omega) << ','
           << fmt_double(p.rec.gamma) << ',' << fmt_double(p.rec.xi1.real()) << ',' << fmt_double(p.rec.xi1.imag())
           << ',' << fmt_double(p.leading_eig.real()) << ',' << fmt_double(p.leading_eig.imag()) << ','
           << (p.fold ? 1 : 0) << ',' << to_string(p.stability) << '\n';
    }
}

void write_fixed_point_csv(std::ostream& os, const std::vector<FixedPointRecord>& recs, const OutputMeta& meta) {
    header(os, meta, "nu,omega,residual,gamma,xi1_re,xi1_im");
    for (const auto& r : recs) {
        fixed_point_cells(os, r);
        os << '\n';
    }
}

void write_sweep_csv(std::ostream& os, const std::vector<FixedPointRecord>& recs,
                     const std::vector<StabilityReport>& reports, const OutputMeta& meta) {
    header(os, meta, "nu,omega,residual,gamma,xi1_re,xi1_im,stability,leading_eig_re,leading_eig_im");
    for (std::size_t i = 0; i < recs.size(); ++i) {
        fixed_point_cells(os, recs[i]);
        const auto& rep = reports.at(i);
        os << ',' << to_string(rep.classification) << ',' << fmt_double(rep.leading_eig.real()) << ','
           << fmt_double(rep.leading_eig.imag()) << '\n';
    }
}

void write_density_csv(std::ostream& os, const Density& h, const OutputMeta& meta) {
    header(os, meta, "k1,k2,re,im");
    const int K = h.cutoff();
    const int k2max = h.dim() == 1 ? 0 : K;
    for (int k1 = -K; k1 <= K; ++k1)
        for (int k2 = -k2max; k2 <= k2max; ++k2) {
            const cplx v = h.at(k1, k2);
            os << k1 << ',' << k2 << ',' << fmt_double(v.real()) << ',' << fmt_double(v.imag()) << '\n';
        }
}

void write_trajectory_csv(std::ostream& os, const std::vector<double>& omegas, const OutputMeta& meta) {
    header(os, meta, "step,omega");
    for (std::size_t n = 0; n < omegas.size(); ++n) os << n << ',' << fmt_double(omegas[n]) << '\n';
}

json fold_json(const FoldRecord& f) {
    return {{"tau", f.tau},           {"nu", f.nu},         {"omega", f.omega},
            {"gamma", f.gamma},       {"kind", f.kind > 0 ? "max" : "min"},
            {"nu2_formula", number(f.nu2_formula)},      {"nu2_fit", number(f.nu2_fit)},
            {"nu1_fit", number(f.nu1_fit)},              {"index", f.index}};
}

json residence_json(const RunResult& r) {
    json list = json::array();
    for (const auto& res : r.residences)
        list.push_back({{"start", res.start},
                        {"end", res.end},
                        {"plateau_mean", res.plateau_mean},
                        {"matched_branch_omega", res.matched_omega}});
    return {{"residences", list},
            {"switches", r.switches},
            {"switch_steps", r.switch_steps},
            {"mean_omega", r.mean_omega},
            {"max_deviation", r.max_deviation}};
}

json stability_json(const FixedPointRecord& fp, const StabilityReport& rep) {
    json roots = json::array();
    for (const auto& r : rep.secular_roots)
        roots.push_back({{"re", r.z.real()}, {"im", r.z.imag()}, {"residual", r.residual}});
    json j = {{"nu", fp.nu},
              {"omega", fp.omega},
              {"gamma", fp.gamma},
              {"classification", to_string(rep.classification)},
              {"undecidable", rep.undecidable},
              {"circle_sup", rep.circle_sup},
              {"roots", roots},
              {"leading_eig", {{"re", rep.leading_eig.real()}, {"im", rep.leading_eig.imag()}}},
              {"xi1", {{"re", rep.xi1.real()}, {"im", rep.xi1.imag()}}},
              {"xi1_gamma_defect", rep.xi1_gamma_defect},
              {"gap", rep.gap},
              {"kappa", rep.kappa},
              {"inner_radius", rep.inner_radius},
              {"outer_radius", rep.outer_radius},
              {"eigvec_residual", rep.eigvec_residual}};
    if (!rep.note.empty()) j["note"] = rep.note;
    return j;
}

json certificate_json(const IFTCertificate& c) {
    return {{"x0", c.x0},
            {"lambda0", c.lambda0},
            {"a0", c.a0},
            {"delta", c.delta},
            {"delta1", c.delta1},
            {"upsilon", c.upsilon},
            {"contraction", c.contraction},
            {"cbar", c.cbar},
            {"formula_delta", number(c.formula_delta)},
            {"formula_delta1", number(c.formula_delta1)},
            {"valid", c.valid()}};
}

json error_json(const std::string& code, const std::string& message, double residual) {
    json j = {{"error", code}, {"message", message}};
    if (std::isfinite(residual)) j["residual"] = residual;
    return j;
}

void write_file(const std::string& path, const std::string& text) {
    namespace fs = std::filesystem;
    const fs::path p(path);
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("OutputNotWritable", "cannot write '" + path + "'");
        out << text;
        if (!out) throw ConfigError("OutputNotWritable", "cannot write '" + path + "'");
    }
    fs::rename(tmp, p, ec);
    if (ec) throw ConfigError("OutputNotWritable", "cannot write '" + path + "'");
}

void write_json_file(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

} // namespace mfcm

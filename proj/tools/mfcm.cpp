#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mfcm/commands.hpp"
#include "mfcm/errors.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Mean-field coupled map toolkit"};
    app.set_version_flag("--version", mfcm::toolkit_version());
    std::string config_path;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    app.add_option("--config", config_path, "JSON config file (defaults apply when omitted)");
    app.add_option("--out", out, "output directory");
    app.add_option("--seed", seed, "PRNG seed");
    app.add_option("--threads", threads, "worker threads (else MFCM_THREADS)")->check(CLI::PositiveNumber);
    app.require_subcommand(1);
    app.fallthrough();
    for (const char* name : {"trace", "sweep", "stability", "simulate", "validate", "ift-certify"})
        app.add_subcommand(name)->fallthrough();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : mfcm::kExitConfig;
    }

    mfcm::RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = mfcm::load_config(config_path);
        if (out) cfg.out = *out;
        if (seed) cfg.seed = *seed;
        cfg.threads = threads ? *threads : mfcm::threads_from_env(cfg.threads);
    } catch (const mfcm::ConfigError& e) {
        std::cerr << mfcm::error_json(e.code(), e.what(), NAN).dump() << "\n";
        return mfcm::kExitConfig;
    }
    const std::string name = app.get_subcommands().front()->get_name();
    return mfcm::run_command(name, cfg, std::cout, std::cerr);
}

#include "runner.hpp"

#include "lagrangian/errors.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

using namespace lagrangian;
using namespace lagrangian::runner;

namespace {

json load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
}

int cmd_run(const std::string& path, const std::string& out_dir, int workers, bool sequential)
{
    const json resolved = resolve_config(load_config(path));
    if (sequential) workers = 1;
    if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const Bundle b = run(resolved, workers);
    const std::string dir = out_dir.empty() ? resolved["output"].get<std::string>() : out_dir;
    write_bundle(b, dir);

    std::cout << b.config["experiment"].get<std::string>() << "  " << b.wall_time << " s  workers " << b.workers
              << "  results " << b.results_hash << "\n";
    for (const auto& a : b.output.assertions)
        std::cout << "  " << (a.pass ? "ok  " : "FAIL") << "  " << a.name << " = " << cell(a.value) << " " << a.op
                  << " " << cell(a.threshold) << "\n";
    std::cout << "bundle written to " << dir << "\n";
    return b.output.passed() ? 0 : 1;
}

int cmd_list()
{
    for (const auto& e : registry()) std::cout << e.name << "  [" << e.tag << "]  " << e.description << "\n";
    return 0;
}

int cmd_verify(const std::string& dir, bool rerun)
{
    const VerifyReport r = verify_bundle(dir, rerun);
    for (const auto& m : r.messages) std::cout << m << "\n";
    std::cout << "hash " << (r.hash_ok ? "ok" : "mismatch") << ", assertions " << (r.assertions_ok ? "ok" : "failed");
    if (rerun) std::cout << ", rerun " << (r.rerun_ok ? "identical" : "differs");
    std::cout << "\n";
    return r.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Lagrangian analyticity experiments"};
    app.require_subcommand(1);

    std::string config, out_dir, bundle_dir;
    int workers = 0;
    bool sequential = false, rerun = false;

    auto* run_cmd = app.add_subcommand("run", "run an experiment from a JSON config and write a result bundle");
    run_cmd->add_option("config", config, "config file")->required();
    run_cmd->add_option("--out", out_dir, "bundle directory (overrides the config's output)");
    run_cmd->add_option("--workers", workers, "worker threads, 0 for all cores");
    run_cmd->add_flag("--sequential", sequential, "single worker");

    auto* list_cmd = app.add_subcommand("list", "list the registered experiments");

    auto* verify_cmd = app.add_subcommand("verify", "check a bundle's hash and assertions");
    verify_cmd->add_option("dir", bundle_dir, "bundle directory")->required();
    verify_cmd->add_flag("--rerun", rerun, "rerun sequentially and compare the results hash");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return cmd_run(config, out_dir, workers, sequential);
        if (list_cmd->parsed()) return cmd_list();
        if (verify_cmd->parsed()) return cmd_verify(bundle_dir, rerun);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

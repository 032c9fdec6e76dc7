#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace lagrangian::runner {

using json = nlohmann::ordered_json;

// Rows of preformatted cells; doubles are written with 17 significant digits.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row);
    std::string csv() const;
};

std::string cell(double v);
std::string cell(long long v);
std::string cell(int v);
std::string cell(const std::string& s);

struct Assertion {
    std::string name;
    double value = 0.0;
    std::string op;   // "<=", ">=", "==", "!="
    double threshold = 0.0;
    bool pass = false;

    static Assertion check(std::string name, double value, std::string op, double threshold);
    bool evaluate() const;
};

struct RunContext {
    int workers = 1;
    std::uint64_t seed = 1;
};

struct ExperimentOutput {
    Table table;
    json metrics = json::object();
    std::vector<Assertion> assertions;

    bool passed() const;
};

struct ExperimentInfo {
    std::string name;
    std::string tag;           // topic: kernels, vortex-patch, euler-poisson, vlasov, compressible
    std::string description;
    json defaults;             // every accepted parameter with its default
    std::function<ExperimentOutput(const json& params, const RunContext&)> run;
};

const std::vector<ExperimentInfo>& registry();
const ExperimentInfo& find_experiment(const std::string& name);

// {"experiment", "params", "output", "seed"}; unknown keys or mistyped values
// raise ConfigError. Missing params take their defaults.
json resolve_config(const json& raw);

struct Bundle {
    json config;
    ExperimentOutput output;
    std::string results_csv;
    std::string results_hash;   // FNV-1a 64 of results.csv
    std::string config_hash;    // FNV-1a 64 of the resolved config dump
    double wall_time = 0.0;
    int workers = 1;
};

std::string fnv1a_hex(const std::string& bytes);

Bundle run(const json& resolved, int workers);
void write_bundle(const Bundle& bundle, const std::filesystem::path& dir);

struct VerifyReport {
    bool hash_ok = false;
    bool assertions_ok = false;
    bool rerun_ok = true;       // only checked when a rerun is requested
    std::vector<std::string> messages;
    bool ok() const { return hash_ok && assertions_ok && rerun_ok; }
};

// Re-checks results.csv against its recorded hash and every recorded assertion;
// with rerun, runs the stored config sequentially and compares the results hash.
VerifyReport verify_bundle(const std::filesystem::path& dir, bool rerun);

std::string code_version();

}  // namespace lagrangian::runner

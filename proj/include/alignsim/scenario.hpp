#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "alignsim/kernels.hpp"

namespace alignsim {

// Builds a catalogue kernel from {"name": str, "params": {...}, "dim": int}.
Kernel kernel_from_json(const nlohmann::json& spec);

// Fills defaults and validates types/ranges; errors carry the JSON pointer of
// the offending field. Idempotent: resolve(resolve(c)) == resolve(c).
nlohmann::json resolve_config(const nlohmann::json& config);

// Parses JSON with line:column positions in the error message.
nlohmann::json parse_json_text(const std::string& text, const std::string& origin);

struct RunResult {
    nlohmann::json manifest;
    std::vector<std::string> files;  // emitted file names, manifest.json last
};

// Executes one scenario config into out_dir. Modes: particles, grid,
// vanishing_viscosity, stability, metrics. Outputs are written atomically;
// manifest.json lists the SHA-256 of every other emitted file plus the
// resolved config (output location excluded: it is environment, not
// experiment), so identical config + seed reproduces identical bytes.
RunResult run_scenario(const nlohmann::json& config, const std::filesystem::path& out_dir);

struct ScenarioEntry {
    std::string name;
    std::string description;
    std::string text;  // config JSON
};

// Scenarios compiled into the binary; `sim run <name>` resolves these.
const std::vector<ScenarioEntry>& shipped_scenarios();

struct ListEntry {
    std::string name;
    std::string description;
    bool parse_error = false;
};

// Catalogue listing. With a directory override, scans *.json there (malformed
// files are listed with a parse-error marker); otherwise lists the shipped
// catalogue. Empty directory gives an empty list.
std::vector<ListEntry> list_scenarios(const std::filesystem::path* dir_override);

// Full CLI: sim run|metrics|list|validate-kernel. Returns the process exit
// code (0 ok, 1 config error, 2 numerical error, 3 I/O error).
int cli_main(int argc, char** argv);

// SIM_THREADS cap (>= 1); the per-N solves of the viscosity study use it.
int thread_cap();

}  // namespace alignsim

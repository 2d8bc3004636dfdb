#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "coalflow/report.hpp"

namespace coalflow::cli {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

enum ExitCode { kExitPass = 0, kExitFailure = 1, kExitUsage = 2 };

struct KeySpec {
    std::string key;
    std::string default_value;
    std::string help;
};

/// Keys accepted by `command` with their defaults. InputError for an unknown command.
const std::vector<KeySpec>& config_keys(const std::string& command);

/// key = value lines; '#' starts a comment. InputError on a line without '='
/// or a repeated key.
std::map<std::string, std::string> parse_config_text(std::string_view text);

/// Fully resolved configuration of one command run.
class ExperimentConfig {
public:
    /// Defaults, then the config file, then flags. Unknown keys are rejected.
    static ExperimentConfig resolve(const std::string& command, const std::map<std::string, std::string>& file,
                                    const std::map<std::string, std::string>& flags);

    const std::string& command() const noexcept { return command_; }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    const std::string& str(const std::string& key) const;
    double num(const std::string& key) const;
    std::uint64_t count(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<double> list(const std::string& key) const;
    DriftSpec drift() const;

    /// The resolved config in the file format, keys sorted.
    std::string echo() const;
    Json to_json() const;

private:
    std::string command_;
    std::map<std::string, std::string> values_;
};

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Writes files into the output directory and lists them in the manifest.
class RunWriter {
public:
    explicit RunWriter(std::filesystem::path dir);

    void write(const std::string& name, const std::string& content);
    const std::filesystem::path& dir() const noexcept { return dir_; }

    /// Writes manifest.json: config snapshot, version, wall clock, verdicts
    /// and every file written so far with its SHA-256.
    void write_manifest(const ExperimentConfig& config, const Json& verdicts, double wall_seconds);

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::string>> files_;  // name, sha256
    std::vector<std::size_t> sizes_;
};

/// Runs one command; returns the process exit code. Progress lines go to `log`.
int run_command(const ExperimentConfig& config, std::ostream& log);

}  // namespace coalflow::cli

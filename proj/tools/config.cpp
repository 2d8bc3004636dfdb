#include <algorithm>
#include <charconv>
#include <sstream>

#include "cli.hpp"
#include "coalflow/errors.hpp"
#include "coalflow/verify.hpp"

namespace coalflow::cli {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<KeySpec> common(std::string replicates, std::string dt, std::string window, std::string seed = "1") {
    return {
        {"drift", "linear:-1", "drift expression: zero | linear:<slope> | linsin:<slope>:<eps> | table:<x>:<y>,..."},
        {"seed", std::move(seed), "master seed"},
        {"replicates", std::move(replicates), "independent realizations"},
        {"out", "out", "output directory"},
        {"dt", std::move(dt), "time step"},
        {"window", std::move(window), "time window (command specific)"},
    };
}

std::vector<KeySpec> with(std::vector<KeySpec> base, std::vector<KeySpec> extra) {
    base.insert(base.end(), extra.begin(), extra.end());
    std::sort(base.begin(), base.end(), [](const KeySpec& a, const KeySpec& b) { return a.key < b.key; });
    return base;
}

const std::map<std::string, std::vector<KeySpec>>& table() {
    static const std::map<std::string, std::vector<KeySpec>> t{
        {"simulate", with(common("1", "0.01", "10"),
                          {{"starts", "0,1", "sorted start positions"},
                           {"bridge", "true", "bridge-crossing correction"}})},
        {"pullback", with(common("100", "0.01", "20"),
                          {{"c", "5", "probe interval [-c, c]"},
                           {"h", "1", "stationarity shift"},
                           {"H", "1", "window end after time 0"},
                           {"min_plateau", "0.55", "share of the window the agreeing plateau must cover"},
                           {"fan_starts", "-20,-15,-10,-5", "start times of the trajectory fan"},
                           {"fan_stride", "10", "grid steps between fan samples"},
                           {"growth_times", "1,4,16", "variance-growth times (zero drift)"}})},
        {"dual", with(common("10", "0.01", "50"),
                      {{"macro_steps", "100", "macro steps n over [0, 1]"},
                       {"lattice_steps", "200", "lattice steps per macro step"},
                       {"starts", "20", "starts per family, spread over [-spread, spread]"},
                       {"spread", "3", "start range half-width"},
                       {"a", "-1", "lower level of the trapping demonstration"},
                       {"b", "1", "upper level of the trapping demonstration"},
                       {"csv_stride", "20", "lattice steps between exported samples"}})},
        {"meeting", with(common("10000", "0.001", "10"),
                         {{"gap", "1", "initial distance"}, {"bridge", "true", "bridge-crossing correction"}})},
        // verify defaults to the acceptance seed so both routes report the same numbers.
        {"verify", with(common("1", "0.01", "0", std::to_string(VerifyOptions{}.seed)),
                        {{"scale", "1", "replicate multiplier; below 1 statistical criteria are underpowered"},
                         {"fault_no_bridge", "false", "fault hook: no bridge correction in criterion 2"},
                         {"criteria", "1,2,3,4,5,6,7,8,9", "criteria to run"}})},
    };
    return t;
}

}  // namespace

const std::vector<KeySpec>& config_keys(const std::string& command) {
    const auto it = table().find(command);
    if (it == table().end()) throw InputError("unknown command '" + command + "'");
    return it->second;
}

std::map<std::string, std::string> parse_config_text(std::string_view text) {
    std::map<std::string, std::string> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto content = trim(line);
        if (content.empty()) continue;
        const auto eq = content.find('=');
        if (eq == std::string::npos) throw InputError("config line " + std::to_string(lineno) + ": expected key = value");
        const auto key = trim(std::string_view(content).substr(0, eq));
        const auto value = trim(std::string_view(content).substr(eq + 1));
        if (key.empty()) throw InputError("config line " + std::to_string(lineno) + ": empty key");
        if (!out.emplace(key, value).second) throw InputError("config key '" + key + "' given twice");
    }
    return out;
}

ExperimentConfig ExperimentConfig::resolve(const std::string& command, const std::map<std::string, std::string>& file,
                                           const std::map<std::string, std::string>& flags) {
    ExperimentConfig c;
    c.command_ = command;
    const auto& keys = config_keys(command);
    for (const auto& k : keys) c.values_[k.key] = k.default_value;
    auto apply = [&](const std::map<std::string, std::string>& src, const char* where) {
        for (const auto& [k, v] : src) {
            if (!c.values_.count(k)) {
                std::string known;
                for (const auto& s : keys) known += (known.empty() ? "" : ", ") + s.key;
                throw InputError(std::string("unknown ") + where + " key '" + k + "' for " + command + " (known: " + known + ")");
            }
            c.values_[k] = v;
        }
    };
    apply(file, "config");
    apply(flags, "flag");
    // Parse every typed value now so mistakes surface before any work starts.
    c.drift();
    for (const auto& k : {"seed", "replicates"}) c.count(k);
    for (const auto& k : {"dt", "window"}) c.num(k);
    return c;
}

const std::string& ExperimentConfig::str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw LogicError("config key '" + key + "' not defined for " + command_);
    return it->second;
}

double ExperimentConfig::num(const std::string& key) const {
    const auto& s = str(key);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw InputError("config key '" + key + "': '" + s + "' is not a number");
    return v;
}

std::uint64_t ExperimentConfig::count(const std::string& key) const {
    const auto& s = str(key);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        throw InputError("config key '" + key + "': '" + s + "' is not a non-negative integer");
    }
    return v;
}

bool ExperimentConfig::flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw InputError("config key '" + key + "': '" + s + "' is not a boolean");
}

std::vector<double> ExperimentConfig::list(const std::string& key) const {
    std::vector<double> out;
    const auto& s = str(key);
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto comma = std::min(s.find(',', pos), s.size());
        const auto item = trim(std::string_view(s).substr(pos, comma - pos));
        double v = 0.0;
        const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc{} || p != item.data() + item.size()) {
            throw InputError("config key '" + key + "': '" + s + "' is not a comma-separated list of numbers");
        }
        out.push_back(v);
        pos = comma + 1;
    }
    return out;
}

DriftSpec ExperimentConfig::drift() const { return DriftSpec::parse(str("drift")); }

std::string ExperimentConfig::echo() const {
    std::string out = "# resolved configuration for '" + command_ + "'\n";
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

Json ExperimentConfig::to_json() const {
    Json j = values_;
    j["command"] = command_;
    return j;
}

}  // namespace coalflow::cli

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "cli.hpp"
#include "coalflow/errors.hpp"

namespace coalflow::cli {

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    std::string hex;
    char buf[3];
    for (unsigned i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

RunWriter::RunWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error("cannot create output directory " + dir_.string() + ": " + ec.message());
}

void RunWriter::write(const std::string& name, const std::string& content) {
    const auto path = dir_ / name;
    std::ofstream os(path, std::ios::binary);
    os << content;
    os.close();
    if (!os) throw Error("cannot write " + path.string());
    files_.emplace_back(name, sha256_hex(content));
    sizes_.push_back(content.size());
}

void RunWriter::write_manifest(const ExperimentConfig& config, const Json& verdicts, double wall_seconds) {
    Json files = Json::array();
    for (std::size_t i = 0; i < files_.size(); ++i) {
        files.push_back({{"name", files_[i].first}, {"sha256", files_[i].second}, {"bytes", sizes_[i]}});
    }
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);

    Json m;
    m["artifact"] = "coalflow";
    m["version"] = kArtifactVersion;
    m["schema_version"] = kSchemaVersion;
    m["config"] = config.to_json();
    m["verdicts"] = verdicts;
    m["files"] = files;
    m["wall_clock"] = {{"finished_utc", stamp}, {"seconds", wall_seconds}};
    const auto text = dump(m);
    std::ofstream os(dir_ / "manifest.json", std::ios::binary);
    os << text;
    if (!os) throw Error("cannot write manifest in " + dir_.string());
}

}  // namespace coalflow::cli

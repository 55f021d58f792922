#include "masa/manifest.hpp"

#include <cstdio>
#include <fstream>

#include "masa/binio.hpp"

#ifndef MASA_BUILD_ID
#define MASA_BUILD_ID "unknown"
#endif

namespace masa {

namespace binio {
std::uint64_t file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestionError("cannot hash missing file '" + path + "'");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0)
        h = fnv1a(buf, static_cast<std::size_t>(is.gcount()), h);
    return h;
}
}  // namespace binio

std::string build_id() { return MASA_BUILD_ID; }

std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

nlohmann::json RunManifest::to_json() const {
    return {{"command", command},
            {"config", config},
            {"seed", seed},
            {"build_id", build_id},
            {"input_hashes", input_hashes},
            {"outputs", outputs},
            {"wall_clock_s", wall_clock_s}};
}

void write_run_manifest(const std::string& path, const RunManifest& m) {
    std::ofstream os(path);
    if (!os) throw IngestionError("cannot write run manifest '" + path + "'");
    os << m.to_json().dump(2) << "\n";
}

RunManifest load_run_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IngestionError("cannot open run manifest '" + path + "'");
    nlohmann::json j;
    is >> j;
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config = j.at("config");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.build_id = j.at("build_id").get<std::string>();
    m.input_hashes = j.at("input_hashes").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.wall_clock_s = j.at("wall_clock_s").get<double>();
    return m;
}

}  // namespace masa

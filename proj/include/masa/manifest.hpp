#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace masa {

// Reproducibility record written by every CLI command: full effective
// configuration, the seed, hashes of the inputs and the produced outputs.
struct RunManifest {
    std::string command;
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::string build_id;
    std::map<std::string, std::string> input_hashes;  // path -> fnv1a-64 hex
    std::vector<std::string> outputs;
    double wall_clock_s = 0.0;

    nlohmann::json to_json() const;
};

std::string build_id();
std::string hash_hex(std::uint64_t h);
void write_run_manifest(const std::string& path, const RunManifest& m);
RunManifest load_run_manifest(const std::string& path);

}  // namespace masa

#include "masa/serialize.hpp"

#include <fstream>

#include "masa/binio.hpp"

namespace masa {

namespace {
constexpr char kMagic[9] = "MASAWTS1";
constexpr int kSchemaVersion = 1;
}  // namespace

void save_weights(const std::string& path, const ModelConfig& cfg, const ModelParams& params) {
    nlohmann::json header;
    header["schema_version"] = kSchemaVersion;
    header["config"] = cfg.to_json();
    nlohmann::json plist = nlohmann::json::array();
    for (const std::string& name : params.order) {
        const Tensor& t = params.at(name);
        plist.push_back({{"name", name}, {"shape", t.shape}});
    }
    header["params"] = plist;
    const std::string hs = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IngestionError("cannot open '" + path + "' for writing");
    binio::write_magic(os, kMagic);
    binio::write_scalar<std::uint64_t>(os, hs.size());
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const std::string& name : params.order) {
        const Tensor& t = params.at(name);
        binio::write_array(os, t.values.data(), t.values.size());
    }
    if (!os) throw IngestionError("short write to '" + path + "'");
}

Checkpoint load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestionError("cannot open checkpoint '" + path + "'");
    binio::expect_magic(is, kMagic, "checkpoint " + path);
    const auto hlen = binio::read_scalar<std::uint64_t>(is, "checkpoint header length");
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw IngestionError("truncated checkpoint header in '" + path + "'");
    nlohmann::json header = nlohmann::json::parse(hs);
    if (header.at("schema_version").get<int>() != kSchemaVersion)
        throw IngestionError("unsupported checkpoint schema version in '" + path + "'");

    Checkpoint ck;
    ck.config = ModelConfig::from_json(header.at("config"));
    for (const auto& entry : header.at("params")) {
        const auto name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<Shape>();
        Tensor t = Tensor::zeros(shape);
        binio::read_array(is, t.values.data(), t.values.size(), "parameter " + name);
        t.requires_grad = true;
        ck.params.order.push_back(name);
        ck.params.tensors.emplace(name, std::move(t));
    }

    // The registry must match what the config prescribes.
    std::size_t idx = 0;
    for_each_param(ck.config, [&](const std::string& name, const Shape& shape, ParamKind) {
        if (idx >= ck.params.order.size() || ck.params.order[idx] != name ||
            ck.params.at(name).shape != shape)
            throw IngestionError("checkpoint '" + path + "' does not match its config at '" +
                                 name + "'");
        ++idx;
    });
    if (idx != ck.params.order.size())
        throw IngestionError("checkpoint '" + path + "' carries extra parameters");
    return ck;
}

}  // namespace masa

#include "cids/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace cids::checkpoint {

namespace {

constexpr char kMagic[8] = {'C', 'I', 'D', 'S', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

nlohmann::ordered_json config_json(const encoder::EncoderConfig& c) {
    return {{"n_layers", c.n_layers}, {"d_model", c.d_model},   {"n_heads", c.n_heads},
            {"d_ff", c.d_ff},         {"max_len", c.max_len},   {"vocab_size", c.vocab_size},
            {"dropout", c.dropout}};
}

encoder::EncoderConfig config_from_json(const nlohmann::json& j) {
    encoder::EncoderConfig c;
    c.n_layers = j.at("n_layers").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.dropout = j.at("dropout").get<double>();
    return c;
}

}  // namespace

void save(const Snapshot& snap, const std::string& path) {
    auto& model = const_cast<encoder::EncoderModel&>(snap.model);
    auto& head = const_cast<encoder::ClassifierHead&>(snap.head);

    nlohmann::ordered_json header;
    header["config"] = config_json(model.cfg);
    header["labels"] = head.labels;
    nlohmann::ordered_json prov;
    for (const auto& [label, p] : snap.label_provenance) prov[label] = p;
    header["provenance"] = prov;
    header["config_hash"] = snap.config_hash;
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    encoder::visit_params(model, &head, [&tensors](const std::string& name, double*, size_t n) {
        tensors.push_back({{"name", name}, {"size", n}});
    });
    header["tensors"] = tensors;
    const std::string htext = header.dump();

    if (auto parent = std::filesystem::path(path).parent_path(); !parent.empty())
        std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(errc::runtime, "cannot write checkpoint '" + path + "'");
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    const uint64_t hlen = htext.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    encoder::visit_params(model, &head, [&out](const std::string&, double* p, size_t n) {
        out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    });
    if (!out) throw Error(errc::runtime, "short write on checkpoint '" + path + "'");
}

Snapshot load(const std::string& path, const std::optional<encoder::EncoderConfig>& expected_cfg,
              const std::string& expected_config_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("checkpoint '" + path + "' not found");
    char magic[8];
    uint32_t version = 0;
    uint64_t hlen = 0;
    in.read(magic, sizeof(magic));
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw Error(errc::data, "'" + path + "' is not a checkpoint");
    if (version != kVersion)
        throw Error(errc::data, "unsupported checkpoint version " + std::to_string(version));
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    auto header = nlohmann::json::parse(htext);

    Snapshot snap;
    const auto cfg = config_from_json(header.at("config"));
    if (expected_cfg && !(cfg == *expected_cfg))
        throw Error(errc::data, "checkpoint '" + path + "' has a mismatched encoder config");
    snap.config_hash = header.value("config_hash", "");
    if (!expected_config_hash.empty() && !snap.config_hash.empty() &&
        snap.config_hash != expected_config_hash)
        throw Error(errc::data,
                    "checkpoint '" + path + "' was produced by a different configuration (stale artifact?)");

    const auto labels = header.at("labels").get<std::vector<std::string>>();
    for (const auto& [label, p] : header.at("provenance").items())
        snap.label_provenance[label] = p.get<std::string>();

    snap.model = encoder::init_encoder<double>(cfg, 0);
    snap.head = encoder::init_head<double>(labels, cfg.d_model, 0);
    size_t idx = 0;
    const auto& tensors = header.at("tensors");
    encoder::visit_params(snap.model, &snap.head, [&](const std::string& name, double* p, size_t n) {
        if (idx >= tensors.size()) throw Error(errc::data, "checkpoint tensor directory too short");
        const auto& spec = tensors[idx++];
        if (spec.at("name").get<std::string>() != name || spec.at("size").get<size_t>() != n)
            throw Error(errc::data, "checkpoint tensor '" + name + "' has unexpected shape");
        in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    });
    if (!in || idx != tensors.size()) throw Error(errc::data, "checkpoint '" + path + "' is truncated");
    return snap;
}

}  // namespace cids::checkpoint

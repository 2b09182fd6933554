#pragma once

#include <map>
#include <optional>
#include <string>

#include "cids/encoder.hpp"

namespace cids::checkpoint {

// Versioned binary checkpoint: magic, version, JSON header (config, label
// registry with provenance, tensor directory, metadata), then raw
// little-endian f64 tensor data in directory order.
struct Snapshot {
    encoder::EncoderModel model;
    encoder::ClassifierHead head;
    std::map<std::string, std::string> label_provenance;  // label -> "initial" | "chunk<N>"
    std::string config_hash;                              // upstream resolved-config fingerprint
};

void save(const Snapshot& snap, const std::string& path);

// `expected` checks guard stale or incompatible artifacts: a config
// mismatch is an error, as is a config-hash mismatch when both sides have one.
Snapshot load(const std::string& path, const std::optional<encoder::EncoderConfig>& expected_cfg = {},
              const std::string& expected_config_hash = {});

}  // namespace cids::checkpoint

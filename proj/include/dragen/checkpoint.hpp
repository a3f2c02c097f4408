#pragma once
// Parameter checkpoints: JSON manifest of tensor shapes plus a flat
// little-endian float64 blob holding every tensor in declaration order.

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "dragen/common.hpp"
#include "dragen/nn.hpp"

namespace dragen::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline void append_le(std::string& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>(bits & 0xff));
        bits >>= 8;
    }
}

inline double read_le(const char* p) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
    return std::bit_cast<double>(bits);
}

/// Writes `content` to `path` via a temporary sibling and rename, so readers
/// never observe a partial file.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ConfigError("cannot write " + tmp.string());
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!os) throw ConfigError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

using NamedMlp = std::pair<std::string, const nn::MlpParams*>;

/// Saves `<base>.json` and `<base>.bin`.
inline void save_checkpoint(const fs::path& base, const std::vector<NamedMlp>& nets, const std::string& config_hash) {
    json manifest;
    manifest["schema"] = "dragen-params/" + std::to_string(kSchemaVersion);
    manifest["tool_version"] = std::string(kToolVersion);
    manifest["config_hash"] = config_hash;
    manifest["byte_order"] = "little";
    manifest["dtype"] = "float64";
    fs::path blob_path = base;
    blob_path += ".bin";
    manifest["blob"] = blob_path.filename().string();
    std::string blob;
    json tensors = json::array();
    std::size_t offset = 0;
    for (const auto& [name, net] : nets) {
        json layers = json::array();
        for (std::size_t l = 0; l < net->layers(); ++l) {
            const auto& w = net->weights[l];
            const auto& b = net->biases[l];
            layers.push_back({{"rows", w.rows()},
                              {"cols", w.cols()},
                              {"activation", nn::to_string(net->activations[l])},
                              {"offset", offset}});
            for (Eigen::Index i = 0; i < w.size(); ++i) append_le(blob, w.data()[i]);
            for (Eigen::Index i = 0; i < b.size(); ++i) append_le(blob, b[i]);
            offset += static_cast<std::size_t>(w.size() + b.size());
        }
        tensors.push_back({{"name", name}, {"layers", layers}});
    }
    manifest["networks"] = tensors;
    manifest["count"] = offset;
    write_file_atomic(blob_path, blob);
    fs::path json_path = base;
    json_path += ".json";
    write_file_atomic(json_path, manifest.dump(2) + "\n");
}

/// Loads every network of a checkpoint, keyed by name in declaration order.
inline std::vector<std::pair<std::string, nn::MlpParams>> load_checkpoint(const fs::path& base) {
    fs::path json_path = base;
    json_path += ".json";
    fs::path blob_path = base;
    blob_path += ".bin";
    const json manifest = json::parse(read_file(json_path));
    const std::string blob = read_file(blob_path);
    const auto count = manifest.at("count").get<std::size_t>();
    if (blob.size() != count * 8) throw ConfigError("checkpoint blob size does not match manifest: " + blob_path.string());
    std::vector<std::pair<std::string, nn::MlpParams>> out;
    for (const auto& net : manifest.at("networks")) {
        nn::MlpParams p;
        for (const auto& layer : net.at("layers")) {
            const auto rows = layer.at("rows").get<Eigen::Index>();
            const auto cols = layer.at("cols").get<Eigen::Index>();
            auto off = layer.at("offset").get<std::size_t>();
            if ((off + static_cast<std::size_t>(rows * cols + rows)) > count)
                throw ConfigError("checkpoint layer exceeds blob");
            nn::Matrix w(rows, cols);
            for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = read_le(blob.data() + 8 * (off++));
            nn::Vector b(rows);
            for (Eigen::Index i = 0; i < rows; ++i) b[i] = read_le(blob.data() + 8 * (off++));
            p.weights.push_back(std::move(w));
            p.biases.push_back(std::move(b));
            p.activations.push_back(nn::activation_from_string(layer.at("activation").get<std::string>()));
        }
        out.emplace_back(net.at("name").get<std::string>(), std::move(p));
    }
    return out;
}

}  // namespace dragen::io

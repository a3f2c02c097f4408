#pragma once
// Environment sets with provenance, persisted as a JSON manifest plus a blob of
// little-endian float64 heightmaps in manifest order.

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "dragen/checkpoint.hpp"
#include "dragen/common.hpp"
#include "dragen/env.hpp"

namespace dragen::data {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct ManifestEntry {
    std::string id;
    std::string provenance;  // sampled | dragen-iter-<k> | dr | gaussian
    std::uint64_t seed = 0;
    int iteration = 0;
    std::string source_id;   // augmentation source, empty for sampled/dr
    bool below_threshold = false;  // decoded map has no occupied pixel
};

class Dataset {
public:
    Dataset() = default;
    explicit Dataset(int grid) : grid_(grid) {}

    int grid() const { return grid_; }
    std::size_t size() const { return maps_.size(); }
    bool empty() const { return maps_.empty(); }
    const env::Heightmap& map(std::size_t i) const { return maps_[i]; }
    const ManifestEntry& entry(std::size_t i) const { return entries_[i]; }
    const std::vector<env::Heightmap>& maps() const { return maps_; }
    const std::vector<ManifestEntry>& entries() const { return entries_; }

    std::string config_hash;

    void add(ManifestEntry e, env::Heightmap h) {
        if (h.size != grid_) throw ConfigError("dataset: heightmap grid size mismatch for " + e.id);
        if (!h.valid()) throw NumericError("dataset: heightmap out of range for " + e.id);
        if (e.provenance.empty()) throw ConfigError("dataset: missing provenance for " + e.id);
        if (!ids_.insert(e.id).second) throw ConfigError("dataset: duplicate id " + e.id);
        entries_.push_back(std::move(e));
        maps_.push_back(std::move(h));
    }

    /// Hash over ids and heightmap bytes; two runs share a test set iff equal.
    std::string content_hash() const {
        std::string buf;
        for (std::size_t i = 0; i < size(); ++i) {
            buf += entries_[i].id;
            buf.push_back('\0');
            for (double v : maps_[i].heights) io::append_le(buf, v);
        }
        return hex64(fnv1a64(buf));
    }

private:
    int grid_ = env::kDefaultGrid;
    std::vector<ManifestEntry> entries_;
    std::vector<env::Heightmap> maps_;
    std::unordered_set<std::string> ids_;
};

/// `count` shapes from `cfg`; entry i is drawn from its own derived seed.
inline Dataset generate_sampled(const env::DistributionConfig& cfg, std::size_t count, std::uint64_t seed, int grid) {
    cfg.validate();
    Dataset ds(grid);
    for (std::size_t i = 0; i < count; ++i) {
        const auto s = derive_seed(seed, cfg.label, i);
        Rng rng = make_rng(s);
        const env::ShapeParams shape = env::sample_shape(cfg, rng, grid);
        ManifestEntry e;
        e.id = cfg.label + "-" + std::to_string(i);
        e.provenance = "sampled";
        e.seed = s;
        ds.add(std::move(e), env::rasterize(shape, grid));
    }
    return ds;
}

inline json manifest_json(const Dataset& ds, const std::string& blob_name) {
    json m;
    m["schema"] = "dragen-dataset/" + std::to_string(kSchemaVersion);
    m["tool_version"] = std::string(kToolVersion);
    m["config_hash"] = ds.config_hash;
    m["grid_size"] = ds.grid();
    m["count"] = ds.size();
    m["blob"] = blob_name;
    m["content_hash"] = ds.content_hash();
    json entries = json::array();
    for (const auto& e : ds.entries()) {
        json j{{"id", e.id}, {"provenance", e.provenance}, {"seed", e.seed}, {"iteration", e.iteration}};
        if (!e.source_id.empty()) j["source_id"] = e.source_id;
        if (e.below_threshold) j["below_threshold"] = true;
        entries.push_back(std::move(j));
    }
    m["entries"] = std::move(entries);
    return m;
}

/// Writes `<base>.json` and `<base>.bin`.
inline void save_dataset(const fs::path& base, const Dataset& ds) {
    fs::path blob_path = base;
    blob_path += ".bin";
    fs::path json_path = base;
    json_path += ".json";
    std::string blob;
    blob.reserve(ds.size() * static_cast<std::size_t>(ds.grid() * ds.grid()) * 8);
    for (const auto& h : ds.maps())
        for (double v : h.heights) io::append_le(blob, v);
    io::write_file_atomic(blob_path, blob);
    io::write_file_atomic(json_path, manifest_json(ds, blob_path.filename().string()).dump(2) + "\n");
}

inline Dataset load_dataset(const fs::path& base) {
    fs::path json_path = base;
    json_path += ".json";
    fs::path blob_path = base;
    blob_path += ".bin";
    const json m = json::parse(io::read_file(json_path));
    const int g = m.at("grid_size").get<int>();
    const std::string blob = io::read_file(blob_path);
    const auto& entries = m.at("entries");
    const std::size_t per = static_cast<std::size_t>(g * g);
    if (blob.size() != entries.size() * per * 8) throw ConfigError("dataset blob size mismatch: " + blob_path.string());
    Dataset ds(g);
    ds.config_hash = m.value("config_hash", "");
    std::size_t off = 0;
    for (const auto& j : entries) {
        ManifestEntry e;
        e.id = j.at("id").get<std::string>();
        e.provenance = j.at("provenance").get<std::string>();
        e.seed = j.at("seed").get<std::uint64_t>();
        e.iteration = j.value("iteration", 0);
        e.source_id = j.value("source_id", "");
        e.below_threshold = j.value("below_threshold", false);
        env::Heightmap h(g);
        for (std::size_t k = 0; k < per; ++k) h.heights[k] = io::read_le(blob.data() + 8 * (off++));
        ds.add(std::move(e), std::move(h));
    }
    return ds;
}

}  // namespace dragen::data

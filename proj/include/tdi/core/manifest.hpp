#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdi/core/image.hpp"
#include "tdi/core/png_io.hpp"

namespace tdi {

enum class ManifestErrorKind { missing_file, malformed_record, dangling_reference };

class ManifestError : public std::runtime_error {
public:
    ManifestError(ManifestErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    ManifestErrorKind kind() const { return kind_; }

private:
    ManifestErrorKind kind_;
};

struct ManifestEntry {
    std::string id;
    std::string image_path; // relative to the manifest's directory
    std::string seg_path;
    std::string inst_path;
    std::optional<std::string> gt_path;
    std::string split;
    std::string source;
    std::map<uint16_t, uint16_t> instance_class; // instance id -> class id
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::map<uint16_t, std::string> class_table;
    std::string split;
    std::filesystem::path base_dir; // set on load; entry paths resolve against it

    std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }

    bool operator==(const DatasetManifest& o) const {
        if (entries.size() != o.entries.size() || class_table != o.class_table || split != o.split)
            return false;
        for (size_t i = 0; i < entries.size(); ++i) {
            const auto& a = entries[i];
            const auto& b = o.entries[i];
            if (a.id != b.id || a.image_path != b.image_path || a.seg_path != b.seg_path ||
                a.inst_path != b.inst_path || a.gt_path != b.gt_path || a.split != b.split ||
                a.source != b.source || a.instance_class != b.instance_class)
                return false;
        }
        return true;
    }
};

// Line-delimited JSON: a header record followed by one record per entry.
inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ManifestError(ManifestErrorKind::missing_file, "cannot write " + path.string());
    nlohmann::json header;
    header["type"] = "tdi-manifest";
    header["version"] = 1;
    header["split"] = m.split;
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [id, name] : m.class_table) classes[std::to_string(id)] = name;
    header["classes"] = classes;
    out << header.dump() << "\n";
    for (const auto& e : m.entries) {
        nlohmann::json j;
        j["id"] = e.id;
        j["image"] = e.image_path;
        j["seg"] = e.seg_path;
        j["inst"] = e.inst_path;
        if (e.gt_path) j["gt"] = *e.gt_path;
        j["split"] = e.split;
        j["source"] = e.source;
        nlohmann::json inst = nlohmann::json::object();
        for (const auto& [iid, cid] : e.instance_class) inst[std::to_string(iid)] = cid;
        j["instances"] = inst;
        out << j.dump() << "\n";
    }
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ManifestError(ManifestErrorKind::missing_file,
                            "manifest not found: " + path.string());
    DatasetManifest m;
    m.base_dir = path.parent_path();
    std::string line;
    bool have_header = false;
    std::set<std::string> seen_ids;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ManifestError(ManifestErrorKind::malformed_record,
                                path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!have_header) {
            if (!j.contains("type") || j["type"] != "tdi-manifest")
                throw ManifestError(ManifestErrorKind::malformed_record,
                                    path.string() + ": missing manifest header");
            m.split = j.value("split", "");
            for (auto it = j["classes"].begin(); it != j["classes"].end(); ++it)
                m.class_table[uint16_t(std::stoi(it.key()))] = it.value().get<std::string>();
            have_header = true;
            continue;
        }
        ManifestEntry e;
        try {
            e.id = j.at("id").get<std::string>();
            e.image_path = j.at("image").get<std::string>();
            e.seg_path = j.at("seg").get<std::string>();
            e.inst_path = j.at("inst").get<std::string>();
            if (j.contains("gt")) e.gt_path = j["gt"].get<std::string>();
            e.split = j.value("split", m.split);
            e.source = j.value("source", "");
            if (j.contains("instances"))
                for (auto it = j["instances"].begin(); it != j["instances"].end(); ++it)
                    e.instance_class[uint16_t(std::stoi(it.key()))] = it.value().get<uint16_t>();
        } catch (const nlohmann::json::exception& ex) {
            throw ManifestError(ManifestErrorKind::malformed_record,
                                path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
        if (!seen_ids.insert(e.id).second)
            throw ManifestError(ManifestErrorKind::malformed_record,
                                path.string() + ": duplicate entry id " + e.id);
        for (const std::string* p : {&e.image_path, &e.seg_path, &e.inst_path}) {
            if (!std::filesystem::exists(m.base_dir / *p))
                throw ManifestError(ManifestErrorKind::dangling_reference,
                                    "entry " + e.id + " references missing file " + *p);
        }
        if (e.gt_path && !std::filesystem::exists(m.base_dir / *e.gt_path))
            throw ManifestError(ManifestErrorKind::dangling_reference,
                                "entry " + e.id + " references missing file " + *e.gt_path);
        m.entries.push_back(std::move(e));
    }
    if (!have_header)
        throw ManifestError(ManifestErrorKind::malformed_record,
                            path.string() + ": empty manifest file (no header)");
    return m;
}

// Load the referenced pixel data for one entry.
inline SceneSample load_scene(const DatasetManifest& m, const ManifestEntry& e) {
    SceneSample s;
    s.id = e.id;
    s.source = e.source;
    s.image = load_image_png(m.resolve(e.image_path).string());
    s.seg = load_seg_png(m.resolve(e.seg_path).string());
    SegmentationMap raw_inst = load_seg_png(m.resolve(e.inst_path).string());
    s.inst.height = raw_inst.height;
    s.inst.width = raw_inst.width;
    s.inst.data = std::move(raw_inst.data);
    s.inst.instance_class = e.instance_class;
    if (e.gt_path) s.gt_removal = load_image_png(m.resolve(*e.gt_path).string());
    return s;
}

} // namespace tdi

// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/body_io.hpp"
#include "artinerf/camera.hpp"
#include "artinerf/image.hpp"
#include "artinerf/json_io.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace artinerf {

inline constexpr int kManifestFormatVersion = 1;

/// One manifest row. Paths are relative to the manifest's directory.
struct ManifestFrame {
    int index = 0;
    std::string split;
    std::string image;
    std::string mask;
    std::string camera;
    std::string pose_file;
    int pose_frame = 0;
};

struct Manifest {
    std::string body_model;
    std::string cameras;
    std::vector<ManifestFrame> frames;
};

inline void save_manifest(const std::filesystem::path &path, const Manifest &m) {
    Json doc;
    doc["format"] = "artinerf-manifest";
    doc["version"] = kManifestFormatVersion;
    doc["body_model"] = m.body_model;
    doc["cameras"] = m.cameras;
    Json frames = Json::array();
    for (const auto &f : m.frames) {
        frames.push_back({{"index", f.index},
                          {"split", f.split},
                          {"image", f.image},
                          {"mask", f.mask},
                          {"camera", f.camera},
                          {"pose_file", f.pose_file},
                          {"pose_frame", f.pose_frame}});
    }
    doc["frames"] = std::move(frames);
    write_text_file(path, doc.dump(1) + "\n");
}

inline Manifest load_manifest(const std::filesystem::path &path) {
    const Json doc = read_json_file(path);
    JsonReader r(doc, path.string());
    r.expect_format("artinerf-manifest", kManifestFormatVersion);
    Manifest m;
    m.body_model = r.get<std::string>("body_model");
    m.cameras = r.get<std::string>("cameras");
    const Json &frames = r.at("frames");
    if (!frames.is_array()) {
        throw DataError(path.string(), "frames", "expected an array");
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
        JsonReader fr(frames[i], path.string() + " frames[" + std::to_string(i) + "]");
        ManifestFrame f;
        f.index = fr.get<int>("index");
        f.split = fr.get<std::string>("split");
        f.image = fr.get<std::string>("image");
        f.mask = fr.get<std::string>("mask");
        f.camera = fr.get<std::string>("camera");
        f.pose_file = fr.get<std::string>("pose_file");
        f.pose_frame = fr.get<int>("pose_frame");
        m.frames.push_back(std::move(f));
    }
    return m;
}

/// A loaded frame: image, binary mask, camera and pose.
struct FrameRecord {
    int index = 0;
    std::string split;
    Image image;
    Image mask; // single channel, values 0 or 1
    Camera camera;
    Pose pose;
};

struct Dataset {
    BodyModel body;
    std::vector<FrameRecord> frames;

    std::vector<const FrameRecord *> split(const std::string &name) const {
        std::vector<const FrameRecord *> out;
        for (const auto &f : frames) {
            if (f.split == name) {
                out.push_back(&f);
            }
        }
        return out;
    }
};

/// Loads the frames of `split` (all frames when empty) with their images.
inline Dataset load_dataset(const std::filesystem::path &manifest_path, const std::string &split = "") {
    const Manifest m = load_manifest(manifest_path);
    const auto root = manifest_path.parent_path();
    Dataset ds;
    ds.body = load_body_model(root / m.body_model);
    const auto cameras = load_cameras(root / m.cameras);
    std::map<std::string, std::vector<PoseFrame>> pose_files;
    for (const auto &f : m.frames) {
        if (!split.empty() && f.split != split) {
            continue;
        }
        const std::string where = manifest_path.string() + " frame " + std::to_string(f.index);
        FrameRecord rec;
        rec.index = f.index;
        rec.split = f.split;
        const auto cam = cameras.find(f.camera);
        if (cam == cameras.end()) {
            throw DataError(where, "camera", "unknown camera '" + f.camera + "'");
        }
        rec.camera = cam->second;
        auto pf = pose_files.find(f.pose_file);
        if (pf == pose_files.end()) {
            pf = pose_files.emplace(f.pose_file, load_poses(root / f.pose_file)).first;
        }
        bool found = false;
        for (const auto &p : pf->second) {
            if (p.frame == f.pose_frame) {
                rec.pose = p.pose;
                found = true;
                break;
            }
        }
        if (!found) {
            throw DataError(where, "pose_frame", "frame " + std::to_string(f.pose_frame) + " not in " + f.pose_file);
        }
        if (static_cast<int>(rec.pose.joint_rotations.size()) != ds.body.num_joints()) {
            throw DataError(where, "pose_frame", "pose joint count does not match the body model");
        }
        rec.image = read_png(root / f.image, 3);
        rec.mask = read_png(root / f.mask, 1);
        if (rec.image.width != rec.camera.width || rec.image.height != rec.camera.height) {
            throw DataError((root / f.image).string(), "", "image size does not match camera '" + f.camera + "'");
        }
        if (rec.mask.width != rec.image.width || rec.mask.height != rec.image.height) {
            throw DataError((root / f.mask).string(), "", "mask size does not match the image");
        }
        for (const float v : rec.mask.data) {
            if (v != 0.0f && v != 1.0f) {
                throw DataError((root / f.mask).string(), "", "mask is not binary");
            }
        }
        ds.frames.push_back(std::move(rec));
    }
    return ds;
}

/// Uniform-stride choice of `target` indices out of `count` (all when target
/// is 0 or not smaller than count).
inline std::vector<std::size_t> few_shot_indices(std::size_t count, std::size_t target) {
    std::vector<std::size_t> out;
    if (target == 0 || target >= count) {
        for (std::size_t i = 0; i < count; ++i) {
            out.push_back(i);
        }
        return out;
    }
    for (std::size_t i = 0; i < target; ++i) {
        out.push_back(i * count / target);
    }
    return out;
}

} // namespace artinerf

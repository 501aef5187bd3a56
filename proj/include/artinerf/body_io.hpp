// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/body_model.hpp"
#include "artinerf/json_io.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace artinerf {

inline constexpr int kBodyFormatVersion = 1;
inline constexpr int kPoseFormatVersion = 1;

struct PoseFrame {
    int frame = 0;
    Pose pose;
};

inline Json body_to_json(const BodyModel &model) {
    Json doc;
    doc["format"] = "artinerf-body";
    doc["version"] = kBodyFormatVersion;
    doc["num_joints"] = model.num_joints();
    doc["parents"] = model.parents;
    Json joints = Json::array();
    for (const auto &j : model.rest_joints) {
        joints.push_back(to_json(j));
    }
    doc["rest_joints"] = std::move(joints);
    Json verts = Json::array();
    for (const auto &v : model.rest_vertices) {
        verts.push_back(to_json(v));
    }
    doc["rest_vertices"] = std::move(verts);
    Json weights = Json::array();
    for (int v = 0; v < model.num_vertices(); ++v) {
        Json row = Json::array();
        for (int k = 0; k < model.num_joints(); ++k) {
            row.push_back(model.skin_weights(v, k));
        }
        weights.push_back(std::move(row));
    }
    doc["skin_weights"] = std::move(weights);
    return doc;
}

inline BodyModel body_from_json(const Json &doc, const std::string &origin) {
    JsonReader r(doc, origin);
    r.expect_format("artinerf-body", kBodyFormatVersion);
    BodyModel m;
    const int j = r.get<int>("num_joints");
    m.parents = r.get<std::vector<int>>("parents");
    if (static_cast<int>(m.parents.size()) != j) {
        throw DataError(origin, "parents", "expected num_joints entries");
    }
    m.rest_joints = r.vec3_list("rest_joints");
    m.rest_vertices = r.vec3_list("rest_vertices");
    const Json &w = r.at("skin_weights");
    if (!w.is_array() || w.size() != m.rest_vertices.size()) {
        throw DataError(origin, "skin_weights", "expected one row per vertex");
    }
    m.skin_weights.resize(static_cast<Eigen::Index>(w.size()), j);
    for (std::size_t v = 0; v < w.size(); ++v) {
        if (!w[v].is_array() || static_cast<int>(w[v].size()) != j) {
            throw DataError(origin, "skin_weights[" + std::to_string(v) + "]", "expected num_joints weights");
        }
        for (int k = 0; k < j; ++k) {
            if (!w[v][k].is_number()) {
                throw DataError(origin, "skin_weights[" + std::to_string(v) + "]", "expected numbers");
            }
            m.skin_weights(static_cast<Eigen::Index>(v), k) = w[v][k].get<double>();
        }
    }
    try {
        m.validate();
    } catch (const ParameterError &e) {
        throw DataError(origin, "", e.what());
    }
    return m;
}

inline BodyModel load_body_model(const std::filesystem::path &path) {
    return body_from_json(read_json_file(path), path.string());
}

inline void save_body_model(const std::filesystem::path &path, const BodyModel &model) {
    write_text_file(path, body_to_json(model).dump(1) + "\n");
}

inline Json poses_to_json(const std::vector<PoseFrame> &frames, int num_joints) {
    Json doc;
    doc["format"] = "artinerf-poses";
    doc["version"] = kPoseFormatVersion;
    doc["num_joints"] = num_joints;
    Json arr = Json::array();
    for (const auto &f : frames) {
        Json rec;
        rec["frame"] = f.frame;
        Json rot = Json::array();
        for (const auto &w : f.pose.joint_rotations) {
            rot.push_back(to_json(w));
        }
        rec["joint_rotations"] = std::move(rot);
        rec["root_translation"] = to_json(f.pose.root_translation);
        arr.push_back(std::move(rec));
    }
    doc["frames"] = std::move(arr);
    return doc;
}

/// Loads a pose sequence. Rotation angles of 2*pi or more are wrapped.
inline std::vector<PoseFrame> poses_from_json(const Json &doc, const std::string &origin) {
    JsonReader r(doc, origin);
    r.expect_format("artinerf-poses", kPoseFormatVersion);
    const int j = r.get<int>("num_joints");
    const Json &frames = r.at("frames");
    if (!frames.is_array()) {
        throw DataError(origin, "frames", "expected an array");
    }
    std::vector<PoseFrame> out;
    out.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const std::string where = origin + " frames[" + std::to_string(i) + "]";
        JsonReader fr(frames[i], where);
        PoseFrame pf;
        pf.frame = fr.get<int>("frame");
        pf.pose.joint_rotations = fr.vec3_list("joint_rotations");
        if (static_cast<int>(pf.pose.joint_rotations.size()) != j) {
            throw DataError(where, "joint_rotations", "expected num_joints entries");
        }
        for (auto &w : pf.pose.joint_rotations) {
            if (!w.allFinite()) {
                throw DataError(where, "joint_rotations", "non-finite rotation");
            }
            w = normalize_axis_angle(w);
        }
        pf.pose.root_translation = fr.vec3("root_translation");
        if (!pf.pose.root_translation.allFinite()) {
            throw DataError(where, "root_translation", "non-finite translation");
        }
        out.push_back(std::move(pf));
    }
    return out;
}

inline std::vector<PoseFrame> load_poses(const std::filesystem::path &path) {
    return poses_from_json(read_json_file(path), path.string());
}

inline void save_poses(const std::filesystem::path &path, const std::vector<PoseFrame> &frames, int num_joints) {
    write_text_file(path, poses_to_json(frames, num_joints).dump(1) + "\n");
}

} // namespace artinerf

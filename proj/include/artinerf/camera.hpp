// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/error.hpp"
#include "artinerf/json_io.hpp"
#include "artinerf/types.hpp"

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace artinerf {

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ(); // unit length
};

struct Pixel {
    int x = 0;
    int y = 0;
};

/// Pinhole camera, OpenCV axes: +x right, +y down, +z forward. Pixel (x, y)
/// covers [x, x+1) x [y, y+1); rays pass through pixel centres.
struct Camera {
    Mat3 intrinsics = Mat3::Identity();
    Mat4 extrinsics = Mat4::Identity(); // world -> camera
    int width = 0;
    int height = 0;

    double fx() const { return intrinsics(0, 0); }
    double fy() const { return intrinsics(1, 1); }
    double cx() const { return intrinsics(0, 2); }
    double cy() const { return intrinsics(1, 2); }

    Mat3 rotation() const { return extrinsics.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return extrinsics.topRightCorner<3, 1>(); }
    Vec3 center() const { return -(rotation().transpose() * translation()); }

    void validate() const {
        if (!(fx() > 0.0) || !(fy() > 0.0)) {
            throw ParameterError("focal lengths must be positive");
        }
        if (width < 1 || height < 1) {
            throw ParameterError("image size must be positive");
        }
        const Mat3 r = rotation();
        if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-5 || std::abs(r.determinant() - 1.0) > 1e-5) {
            throw ParameterError("extrinsic rotation must be orthonormal with determinant +1");
        }
    }

    Ray pixel_ray(int x, int y) const {
        const Vec3 d_cam((x + 0.5 - cx()) / fx(), (y + 0.5 - cy()) / fy(), 1.0);
        Ray r;
        r.origin = center();
        r.direction = (rotation().transpose() * d_cam).normalized();
        return r;
    }

    /// Continuous pixel coordinates of a world point (pixel centres at +0.5).
    Eigen::Vector2d project(const Vec3 &world) const {
        const Vec3 c = rotation() * world + translation();
        return {fx() * c.x() / c.z() + cx(), fy() * c.y() / c.z() + cy()};
    }

    static Camera look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, int width, int height, double focal) {
        const Vec3 forward = (target - eye).normalized();
        const Vec3 right = forward.cross(up).normalized();
        const Vec3 down = forward.cross(right);
        Camera cam;
        cam.width = width;
        cam.height = height;
        cam.intrinsics << focal, 0.0, width / 2.0, 0.0, focal, height / 2.0, 0.0, 0.0, 1.0;
        Mat3 r;
        r.row(0) = right.transpose();
        r.row(1) = down.transpose();
        r.row(2) = forward.transpose();
        cam.extrinsics.setIdentity();
        cam.extrinsics.topLeftCorner<3, 3>() = r;
        cam.extrinsics.topRightCorner<3, 1>() = -(r * eye);
        return cam;
    }
};

inline std::vector<Ray> generate_rays(const Camera &camera, std::span<const Pixel> pixels) {
    std::vector<Ray> rays;
    rays.reserve(pixels.size());
    for (const auto &p : pixels) {
        if (p.x < 0 || p.y < 0 || p.x >= camera.width || p.y >= camera.height) {
            throw ParameterError("pixel outside the image");
        }
        rays.push_back(camera.pixel_ray(p.x, p.y));
    }
    return rays;
}

inline std::vector<Pixel> all_pixels(const Camera &camera) {
    std::vector<Pixel> px;
    px.reserve(static_cast<std::size_t>(camera.width) * camera.height);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            px.push_back({x, y});
        }
    }
    return px;
}

inline Json camera_to_json(const Camera &c) {
    Json j;
    j["width"] = c.width;
    j["height"] = c.height;
    j["fx"] = c.fx();
    j["fy"] = c.fy();
    j["cx"] = c.cx();
    j["cy"] = c.cy();
    Json m = Json::array();
    for (int r = 0; r < 4; ++r) {
        for (int k = 0; k < 4; ++k) {
            m.push_back(c.extrinsics(r, k));
        }
    }
    j["world_to_camera"] = std::move(m);
    return j;
}

inline Camera camera_from_json(const Json &doc, const std::string &origin) {
    JsonReader r(doc, origin);
    Camera c;
    c.width = r.get<int>("width");
    c.height = r.get<int>("height");
    c.intrinsics << r.get<double>("fx"), 0.0, r.get<double>("cx"), 0.0, r.get<double>("fy"), r.get<double>("cy"), 0.0,
        0.0, 1.0;
    const auto m = r.get<std::vector<double>>("world_to_camera");
    if (m.size() != 16) {
        throw DataError(origin, "world_to_camera", "expected 16 numbers (row-major 4x4)");
    }
    for (int i = 0; i < 16; ++i) {
        c.extrinsics(i / 4, i % 4) = m[static_cast<std::size_t>(i)];
    }
    try {
        c.validate();
    } catch (const ParameterError &e) {
        throw DataError(origin, "", e.what());
    }
    return c;
}

inline constexpr int kCameraFormatVersion = 1;

/// Named cameras file.
inline void save_cameras(const std::filesystem::path &path, const std::map<std::string, Camera> &cams) {
    Json doc;
    doc["format"] = "artinerf-cameras";
    doc["version"] = kCameraFormatVersion;
    Json all = Json::object();
    for (const auto &[name, cam] : cams) {
        all[name] = camera_to_json(cam);
    }
    doc["cameras"] = std::move(all);
    write_text_file(path, doc.dump(1) + "\n");
}

inline std::map<std::string, Camera> load_cameras(const std::filesystem::path &path) {
    const Json doc = read_json_file(path);
    JsonReader r(doc, path.string());
    r.expect_format("artinerf-cameras", kCameraFormatVersion);
    const Json &all = r.at("cameras");
    if (!all.is_object() || all.empty()) {
        throw DataError(path.string(), "cameras", "expected a non-empty object");
    }
    std::map<std::string, Camera> out;
    for (auto it = all.begin(); it != all.end(); ++it) {
        out.emplace(it.key(), camera_from_json(it.value(), path.string() + " cameras." + it.key()));
    }
    return out;
}

} // namespace artinerf

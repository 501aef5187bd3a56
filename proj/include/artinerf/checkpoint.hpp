// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "artinerf/adam.hpp"
#include "artinerf/binary_io.hpp"
#include "artinerf/body_io.hpp"
#include "artinerf/config.hpp"
#include "artinerf/networks.hpp"
#include "artinerf/rng.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace artinerf {

inline constexpr char kCheckpointMagic[9] = "ANRFCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// splitmix64 finalizer; derives independent per-network seeds from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// The learnable networks plus what is needed to render with them.
struct Model {
    TrainConfig config;
    BodyModel body;
    MlpParams<float> refine;
    MlpParams<float> appearance;

    RenderConfig render_config(int threads) const { return config.render_config(threads); }
};

inline Model make_model(const BodyModel &body, const TrainConfig &config) {
    body.validate();
    config.validate();
    Model m;
    m.config = config;
    m.body = body;
    m.refine = init_refine<float>(refine_architecture(body.num_joints(), config.refine_width), mix_seed(config.seed, 1));
    m.appearance =
        init_appearance<float>(appearance_architecture(config.encoding(), config.appearance_width), mix_seed(config.seed, 2));
    return m;
}

/// Full optimisation state: model, optimiser moments, iteration and RNG.
struct TrainerState {
    Model model;
    AdamState<float> refine_opt;
    AdamState<float> appearance_opt;
    std::int64_t iteration = 0;
    Rng rng;
};

inline TrainerState make_trainer_state(const BodyModel &body, const TrainConfig &config) {
    TrainerState s;
    s.model = make_model(body, config);
    s.refine_opt = AdamState<float>::like(s.model.refine.arch);
    s.appearance_opt = AdamState<float>::like(s.model.appearance.arch);
    s.rng.seed(mix_seed(config.seed, 3));
    return s;
}

namespace detail {

inline void write_arch(BinaryWriter &w, const MlpArchitecture &a) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.input_dim));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.num_layers()));
    for (int l = 0; l < a.num_layers(); ++l) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(a.widths[l]));
        w.put<std::uint8_t>(static_cast<std::uint8_t>(a.activations[l]));
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.skip_layers.size()));
    for (int s : a.skip_layers) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(s));
    }
}

inline MlpArchitecture read_arch(BinaryReader &r) {
    MlpArchitecture a;
    a.input_dim = static_cast<int>(r.get<std::uint32_t>("input_dim"));
    const auto layers = r.get<std::uint32_t>("num_layers");
    if (layers == 0 || layers > 1024) {
        throw DataError(r.origin(), "num_layers", "implausible layer count");
    }
    for (std::uint32_t l = 0; l < layers; ++l) {
        a.widths.push_back(static_cast<int>(r.get<std::uint32_t>("width")));
        const auto act = r.get<std::uint8_t>("activation");
        if (act > 1) {
            throw DataError(r.origin(), "activation", "unknown activation code");
        }
        a.activations.push_back(static_cast<Activation>(act));
    }
    const auto skips = r.get<std::uint32_t>("skip_count");
    if (skips > layers) {
        throw DataError(r.origin(), "skip_count", "more skips than layers");
    }
    for (std::uint32_t s = 0; s < skips; ++s) {
        a.skip_layers.push_back(static_cast<int>(r.get<std::uint32_t>("skip_layer")));
    }
    try {
        a.validate();
    } catch (const ParameterError &e) {
        throw DataError(r.origin(), "architecture", e.what());
    }
    return a;
}

inline void write_stack(BinaryWriter &w, const LayerStack<float> &s) {
    for (std::size_t l = 0; l < s.weights.size(); ++l) {
        w.blob({s.weights[l].data(), static_cast<std::size_t>(s.weights[l].size())});
        w.blob({s.biases[l].data(), static_cast<std::size_t>(s.biases[l].size())});
    }
}

inline void read_stack(BinaryReader &r, LayerStack<float> &s) {
    for (std::size_t l = 0; l < s.weights.size(); ++l) {
        const auto wv = r.blob("weights", static_cast<std::uint64_t>(s.weights[l].size()));
        std::copy(wv.begin(), wv.end(), s.weights[l].data());
        const auto bv = r.blob("biases", static_cast<std::uint64_t>(s.biases[l].size()));
        std::copy(bv.begin(), bv.end(), s.biases[l].data());
    }
}

inline void write_network(BinaryWriter &w, const MlpParams<float> &p) {
    write_arch(w, p.arch);
    w.put<std::uint64_t>(p.init_seed);
    write_stack(w, p.layers);
}

inline MlpParams<float> read_network(BinaryReader &r) {
    auto p = MlpParams<float>::zeros(read_arch(r));
    p.init_seed = r.get<std::uint64_t>("init_seed");
    read_stack(r, p.layers);
    return p;
}

inline void write_adam(BinaryWriter &w, const AdamState<float> &a) {
    w.put<std::int64_t>(a.step);
    write_stack(w, a.first_moment);
    write_stack(w, a.second_moment);
}

inline AdamState<float> read_adam(BinaryReader &r, const MlpArchitecture &arch) {
    auto a = AdamState<float>::like(arch);
    a.step = r.get<std::int64_t>("adam_step");
    read_stack(r, a.first_moment);
    read_stack(r, a.second_moment);
    return a;
}

} // namespace detail

inline void save_checkpoint(const std::filesystem::path &path, const TrainerState &s) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError(path.string(), "", "cannot open file for writing");
    }
    BinaryWriter w(out);
    w.bytes(kCheckpointMagic, 8);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.string(config_to_json(s.model.config).dump());
    w.string(body_to_json(s.model.body).dump());
    w.put<std::int64_t>(s.iteration);
    w.string(serialize_rng(s.rng));
    detail::write_network(w, s.model.refine);
    detail::write_network(w, s.model.appearance);
    detail::write_adam(w, s.refine_opt);
    detail::write_adam(w, s.appearance_opt);
    if (!w.ok()) {
        throw DataError(path.string(), "", "write failed");
    }
}

inline TrainerState load_checkpoint(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(path.string(), "", "cannot open file for reading");
    }
    BinaryReader r(in, path.string());
    r.magic(kCheckpointMagic);
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw DataError(path.string(), "version", "unsupported checkpoint version " + std::to_string(version));
    }
    TrainerState s;
    s.model.config = config_from_json(parse_json(r.string("config"), path.string() + " config"), path.string() + " config");
    s.model.body = body_from_json(parse_json(r.string("body"), path.string() + " body"), path.string() + " body");
    s.iteration = r.get<std::int64_t>("iteration");
    try {
        deserialize_rng(r.string("rng"), s.rng);
    } catch (const Error &e) {
        throw DataError(path.string(), "rng", e.what());
    }
    s.model.refine = detail::read_network(r);
    s.model.appearance = detail::read_network(r);
    if (s.model.refine.arch.input_dim != s.model.body.num_joints() + 4 || s.model.refine.arch.output_dim() != 3) {
        throw DataError(path.string(), "refine", "refinement network does not match the body model");
    }
    if (s.model.appearance.arch.input_dim != s.model.config.encoding().output_dim() ||
        s.model.appearance.arch.output_dim() != 4) {
        throw DataError(path.string(), "appearance", "appearance network does not match the encoding");
    }
    s.refine_opt = detail::read_adam(r, s.model.refine.arch);
    s.appearance_opt = detail::read_adam(r, s.model.appearance.arch);
    return s;
}

} // namespace artinerf

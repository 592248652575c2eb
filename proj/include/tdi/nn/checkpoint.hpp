#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdi/nn/modules.hpp"

namespace tdi::nn {

// Versioned binary checkpoint container: magic, JSON header (configs, phase,
// step, seed, tensor directory), then raw little-endian tensor data.
// load(save(x)) reproduces forward outputs bit-exactly.

inline constexpr char kCheckpointMagic[8] = {'T', 'D', 'I', 'C', 'K', 'P', 'T', '1'};

struct CheckpointMeta {
    std::string phase;  // restorer | remover | baseline
    long step = 0;
    uint64_t seed = 0;
    GeneratorConfig gen_config;
    DiscriminatorConfig disc_config;
    nlohmann::json extra; // metric snapshot etc.
};

namespace detail {

inline nlohmann::json gen_config_json(const GeneratorConfig& c) {
    return {{"base_width", c.base_width},
            {"n_down", c.n_down},
            {"n_blocks", c.n_blocks},
            {"spectral_blocks", c.spectral_blocks}};
}

inline GeneratorConfig gen_config_from(const nlohmann::json& j) {
    GeneratorConfig c;
    c.base_width = j.at("base_width").get<int>();
    c.n_down = j.at("n_down").get<int>();
    c.n_blocks = j.at("n_blocks").get<int>();
    c.spectral_blocks = j.at("spectral_blocks").get<bool>();
    return c;
}

inline nlohmann::json disc_config_json(const DiscriminatorConfig& c) {
    return {{"base_width", c.base_width}, {"n_layers", c.n_layers}};
}

inline DiscriminatorConfig disc_config_from(const nlohmann::json& j) {
    DiscriminatorConfig c;
    c.base_width = j.at("base_width").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    return c;
}

} // namespace detail

template <class T>
void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                     const std::vector<NamedParam<T>>& gen_params,
                     const std::vector<NamedParam<T>>& disc_params) {
    nlohmann::json header;
    header["version"] = 1;
    header["scalar"] = sizeof(T) == 4 ? "f32" : "f64";
    header["phase"] = meta.phase;
    header["step"] = meta.step;
    header["seed"] = meta.seed;
    header["generator"] = detail::gen_config_json(meta.gen_config);
    header["discriminator"] = detail::disc_config_json(meta.disc_config);
    header["extra"] = meta.extra;

    std::vector<NamedParam<T>> all = gen_params;
    all.insert(all.end(), disc_params.begin(), disc_params.end());
    nlohmann::json dir = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& p : all) {
        const auto& t = p.var->val;
        dir.push_back({{"name", p.name},
                       {"n", t.n},
                       {"c", t.c},
                       {"h", t.h},
                       {"w", t.w},
                       {"offset", offset}});
        offset += uint64_t(t.size()) * sizeof(T);
    }
    header["tensors"] = dir;

    std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out.write(kCheckpointMagic, 8);
    uint32_t hlen = uint32_t(hs.size());
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(hs.data(), std::streamsize(hs.size()));
    for (const auto& p : all)
        out.write(reinterpret_cast<const char*>(p.var->val.v.data()),
                  std::streamsize(p.var->val.size() * sizeof(T)));
}

template <class T>
struct Checkpoint {
    CheckpointMeta meta;
    Generator<T> generator;
    Discriminator<T> discriminator;
};

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint not found: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path.string());
    uint32_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 4);
    std::string hs(hlen, '\0');
    in.read(hs.data(), hlen);
    nlohmann::json header = nlohmann::json::parse(hs);

    const std::string scalar = header.at("scalar").get<std::string>();
    if ((sizeof(T) == 4 && scalar != "f32") || (sizeof(T) == 8 && scalar != "f64"))
        throw std::runtime_error("checkpoint scalar type mismatch: " + scalar);

    Checkpoint<T> ckpt;
    ckpt.meta.phase = header.at("phase").get<std::string>();
    ckpt.meta.step = header.at("step").get<long>();
    ckpt.meta.seed = header.at("seed").get<uint64_t>();
    ckpt.meta.gen_config = detail::gen_config_from(header.at("generator"));
    ckpt.meta.disc_config = detail::disc_config_from(header.at("discriminator"));
    ckpt.meta.extra = header.value("extra", nlohmann::json());

    ckpt.generator = Generator<T>(ckpt.meta.gen_config, ckpt.meta.seed);
    ckpt.discriminator = Discriminator<T>(ckpt.meta.disc_config, ckpt.meta.seed);

    std::vector<NamedParam<T>> all = ckpt.generator.params();
    auto dp = ckpt.discriminator.params();
    all.insert(all.end(), dp.begin(), dp.end());

    const uint64_t data_start = 12 + hlen;
    size_t idx = 0;
    for (const auto& entry : header.at("tensors")) {
        if (idx >= all.size()) throw std::runtime_error("checkpoint has extra tensors");
        auto& p = all[idx++];
        if (entry.at("name").get<std::string>() != p.name)
            throw std::runtime_error("checkpoint tensor order mismatch at " + p.name);
        Tensor<T>& t = p.var->val;
        if (entry.at("n").get<int>() != t.n || entry.at("c").get<int>() != t.c ||
            entry.at("h").get<int>() != t.h || entry.at("w").get<int>() != t.w)
            throw std::runtime_error("checkpoint tensor shape mismatch at " + p.name);
        in.seekg(std::streamoff(data_start + entry.at("offset").get<uint64_t>()));
        in.read(reinterpret_cast<char*>(t.v.data()), std::streamsize(t.size() * sizeof(T)));
        if (!in) throw std::runtime_error("checkpoint truncated at " + p.name);
    }
    if (idx != all.size()) throw std::runtime_error("checkpoint is missing tensors");
    return ckpt;
}

} // namespace tdi::nn

#include "cosimgen/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cosimgen/common.hpp"

namespace cosimgen {

namespace {
constexpr char kMagic[8] = {'C', 'S', 'G', 'C', 'K', 'P', 'T', '\n'};
}

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json dir;
    dir["format_version"] = ckpt.format_version;
    dir["kind"] = ckpt.kind;
    dir["step"] = ckpt.step;
    dir["config"] = ckpt.config_text;
    dir["palette"] = ckpt.palette_json;
    nlohmann::json tensors = nlohmann::json::array();
    int64_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = t.shape();
        e["offset"] = offset;
        e["count"] = t.size();
        tensors.push_back(e);
        offset += t.size();
    }
    dir["tensors"] = tensors;
    const std::string header = dir.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), "cannot open checkpoint for writing: " + tmp);
        out.write(kMagic, sizeof(kMagic));
        const uint32_t version = ckpt.format_version;
        out.write(reinterpret_cast<const char*>(&version), sizeof(version));
        const uint64_t header_len = header.size();
        out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        for (const auto& [name, t] : ckpt.tensors)
            out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * 8));
        require(static_cast<bool>(out), "checkpoint write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    require(in.gcount() == sizeof(magic) && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
            "not a checkpoint file: " + path);
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    require(version == 1, "unsupported checkpoint version");
    uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    require(header_len > 0 && header_len < (1ull << 30), "corrupt checkpoint header length");
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    require(in.gcount() == static_cast<std::streamsize>(header_len), "truncated checkpoint header");

    nlohmann::json dir = nlohmann::json::parse(header);
    Checkpoint ckpt;
    ckpt.format_version = version;
    ckpt.kind = dir.at("kind").get<std::string>();
    ckpt.step = dir.at("step").get<int64_t>();
    ckpt.config_text = dir.at("config").get<std::string>();
    ckpt.palette_json = dir.at("palette").get<std::string>();
    for (const auto& e : dir.at("tensors")) {
        const std::string name = e.at("name").get<std::string>();
        const std::vector<int> shape = e.at("shape").get<std::vector<int>>();
        const int64_t count = e.at("count").get<int64_t>();
        Tensor t(shape);
        require(t.size() == count, "checkpoint tensor count mismatch: " + name);
        in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(count * 8));
        require(in.gcount() == static_cast<std::streamsize>(count * 8), "truncated checkpoint tensor: " + name);
        ckpt.tensors.emplace_back(name, std::move(t));
    }
    return ckpt;
}

void store_params(Checkpoint& ckpt, const nn::ParamRefs& params) {
    for (const nn::Parameter* p : params) {
        require(!p->name.empty(), "store_params: unnamed parameter");
        ckpt.tensors.emplace_back(p->name, p->value);
    }
}

void restore_params(const Checkpoint& ckpt, const nn::ParamRefs& params) {
    for (nn::Parameter* p : params) {
        const Tensor* t = ckpt.find(p->name);
        require(t != nullptr, "checkpoint missing parameter: " + p->name);
        require(t->same_shape(p->value), "checkpoint shape mismatch for: " + p->name);
        p->value = *t;
    }
}

} // namespace cosimgen

#include "cosimgen/encoders.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cosimgen/common.hpp"

namespace cosimgen {

Tensor hashed_bow_embedding(const std::string& text, int dim) {
    require(dim > 0, "hashed_bow_embedding: dim must be positive");
    Tensor v({dim});
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        const uint64_t h = fnv1a64(token);
        v[static_cast<int64_t>(h % static_cast<uint64_t>(dim))] += 1.0;
        token.clear();
    };
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch)))
            token += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        else
            flush();
    }
    flush();
    double norm = 0.0;
    for (int64_t i = 0; i < v.size(); ++i) norm += v[i] * v[i];
    if (norm > 0.0) v *= 1.0 / std::sqrt(norm);
    return v;
}

TextEncoder::TextEncoder(const EncoderConfig& cfg, Rng& rng)
    : cfg_(cfg),
      proj1_(cfg.text_backend_dim, cfg.embed_dim, rng, std::sqrt(2.0)),
      proj2_(cfg.embed_dim, cfg.embed_dim, rng) {
    require(cfg.embed_dim > 0 && cfg.text_backend_dim > 0, "TextEncoder: bad config");
    if (cfg_.text_backend.rfind("pretrained:", 0) == 0) {
        const char* cache = std::getenv("COSIMGEN_CACHE");
        if (!cache) throw ConfigError("text backend '" + cfg_.text_backend + "' needs COSIMGEN_CACHE set");
        const std::string name = cfg_.text_backend.substr(std::string("pretrained:").size());
        const std::string path = std::string(cache) + "/" + name + ".json";
        std::ifstream in(path);
        if (!in) throw ConfigError("pretrained embedding table not found: " + path);
        nlohmann::json j;
        in >> j;
        for (auto it = j.begin(); it != j.end(); ++it) {
            const auto vals = it.value().get<std::vector<double>>();
            require(static_cast<int>(vals.size()) == cfg_.text_backend_dim,
                    "pretrained table entry width mismatch: " + it.key());
            pretrained_[it.key()] = Tensor({cfg_.text_backend_dim}, vals);
        }
    } else if (cfg_.text_backend != "hashed") {
        throw ConfigError("unknown text backend: " + cfg_.text_backend);
    }
}

Tensor TextEncoder::backend_embed(const PromptText& prompt) const {
    require(!prompt.text.empty(), "encode_text: empty prompt");
    if (cfg_.text_backend == "hashed") return hashed_bow_embedding(prompt.text, cfg_.text_backend_dim);
    const auto it = pretrained_.find(prompt.text);
    if (it == pretrained_.end())
        throw ConfigError("prompt missing from pretrained embedding table: " + prompt.text);
    return it->second;
}

TextEmbedding TextEncoder::encode(const PromptText& prompt) const {
    Cache c;
    return encode(prompt, c);
}

TextEmbedding TextEncoder::encode(const PromptText& prompt, Cache& cache) const {
    cache.backend = backend_embed(prompt);
    cache.h1 = proj1_.forward(cache.backend);
    cache.a1 = nn::silu(cache.h1);
    return TextEmbedding{proj2_.forward(cache.a1)};
}

void TextEncoder::backward(const Cache& cache, const Tensor& g_emb, bool acc) {
    const Tensor ga1 = proj2_.backward(cache.a1, g_emb, acc);
    const Tensor gh1 = nn::silu_backward(cache.h1, ga1);
    proj1_.backward(cache.backend, gh1, acc); // backend is frozen, gx discarded
}

void TextEncoder::append_params(const std::string& prefix, nn::ParamRefs& out) {
    proj1_.append_params(prefix + ".proj1", out);
    proj2_.append_params(prefix + ".proj2", out);
}

ClassEncoder::ClassEncoder(const EncoderConfig& cfg, Rng& rng)
    : cfg_(cfg),
      proj1_(cfg.class_feat_dim, cfg.embed_dim, rng, std::sqrt(2.0)),
      proj2_(cfg.embed_dim, cfg.embed_dim, rng) {
    require(cfg.num_classes >= 1, "ClassEncoder: num_classes must be set");
    wc.init({cfg.num_classes, cfg.class_feat_dim});
    const double std = 1.0 / std::sqrt(static_cast<double>(cfg.class_feat_dim));
    for (int64_t i = 0; i < wc.value.size(); ++i) wc.value[i] = rng.normal() * std;
}

Tensor ClassEncoder::class_features(const ConditionVector& condition) const {
    require(static_cast<int>(condition.bits.size()) == cfg_.num_classes, "encode_class: condition length mismatch");
    Tensor f({cfg_.class_feat_dim});
    for (int k = 0; k < cfg_.num_classes; ++k) {
        const int bit = condition.bits[static_cast<size_t>(k)];
        require(bit == 0 || bit == 1, "encode_class: bits must be 0/1");
        if (!bit) continue;
        const double* row = wc.value.data() + static_cast<size_t>(k) * cfg_.class_feat_dim;
        for (int j = 0; j < cfg_.class_feat_dim; ++j) f[j] += row[j];
    }
    return f;
}

ClassEmbedding ClassEncoder::encode(const ConditionVector& condition) const {
    Cache c;
    return encode(condition, c);
}

ClassEmbedding ClassEncoder::encode(const ConditionVector& condition, Cache& cache) const {
    cache.condition = condition;
    cache.cfeat = class_features(condition);
    cache.h1 = proj1_.forward(cache.cfeat);
    cache.a1 = nn::silu(cache.h1);
    return ClassEmbedding{proj2_.forward(cache.a1)};
}

void ClassEncoder::backward(const Cache& cache, const Tensor& g_emb, bool acc) {
    const Tensor ga1 = proj2_.backward(cache.a1, g_emb, acc);
    const Tensor gh1 = nn::silu_backward(cache.h1, ga1);
    const Tensor gfeat = proj1_.backward(cache.cfeat, gh1, acc);
    if (!acc) return;
    for (int k = 0; k < cfg_.num_classes; ++k) {
        if (!cache.condition.bits[static_cast<size_t>(k)]) continue;
        double* row = wc.grad.data() + static_cast<size_t>(k) * cfg_.class_feat_dim;
        for (int j = 0; j < cfg_.class_feat_dim; ++j) row[j] += gfeat[j];
    }
}

void ClassEncoder::append_params(const std::string& prefix, nn::ParamRefs& out) {
    wc.name = prefix + ".wc";
    out.push_back(&wc);
    proj1_.append_params(prefix + ".proj1", out);
    proj2_.append_params(prefix + ".proj2", out);
}

TimestepEncoder::TimestepEncoder(const EncoderConfig& cfg, Rng& rng)
    : cfg_(cfg),
      proj1_(cfg.sinusoid_dim, cfg.embed_dim, rng, std::sqrt(2.0)),
      proj2_(cfg.embed_dim, cfg.embed_dim, rng) {
    require(cfg.sinusoid_dim > 0 && cfg.sinusoid_dim % 2 == 0, "TimestepEncoder: sinusoid_dim must be even");
    require(cfg.num_timesteps >= 1, "TimestepEncoder: num_timesteps must be set");
}

Tensor TimestepEncoder::sinusoid(int t) const {
    const int half = cfg_.sinusoid_dim / 2;
    Tensor v({cfg_.sinusoid_dim});
    for (int j = 0; j < half; ++j) {
        const double omega = std::pow(10000.0, -2.0 * j / static_cast<double>(cfg_.sinusoid_dim));
        v[j] = std::sin(t * omega);
        v[half + j] = std::cos(t * omega);
    }
    return v;
}

TimestepEmbedding TimestepEncoder::encode(int t) const {
    Cache c;
    return encode(t, c);
}

TimestepEmbedding TimestepEncoder::encode(int t, Cache& cache) const {
    require(t >= 0 && t < cfg_.num_timesteps, "encode_timestep: t out of range");
    cache.t = t;
    cache.sin_vec = sinusoid(t);
    cache.h1 = proj1_.forward(cache.sin_vec);
    cache.a1 = nn::silu(cache.h1);
    return TimestepEmbedding{proj2_.forward(cache.a1)};
}

void TimestepEncoder::backward(const Cache& cache, const Tensor& g_emb, bool acc) {
    const Tensor ga1 = proj2_.backward(cache.a1, g_emb, acc);
    const Tensor gh1 = nn::silu_backward(cache.h1, ga1);
    proj1_.backward(cache.sin_vec, gh1, acc); // sinusoid has no parameters
}

void TimestepEncoder::append_params(const std::string& prefix, nn::ParamRefs& out) {
    proj1_.append_params(prefix + ".proj1", out);
    proj2_.append_params(prefix + ".proj2", out);
}

} // namespace cosimgen

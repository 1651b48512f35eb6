#pragma once

#include <map>
#include <string>

#include "cosimgen/dataset.hpp"
#include "cosimgen/nn/layers.hpp"
#include "cosimgen/tensor.hpp"

namespace cosimgen {

struct TextEmbedding {
    Tensor vec; // {D}
};
struct ClassEmbedding {
    Tensor vec; // {D}
};
struct TimestepEmbedding {
    Tensor vec; // {D}
};

struct EncoderConfig {
    int embed_dim = 512;      // shared width D of all three embeddings
    int class_feat_dim = 256; // width d of the W_c rows
    int sinusoid_dim = 256;   // d_base, must be even
    int text_backend_dim = 384;
    int num_classes = 0;
    int num_timesteps = 1000;
    std::string text_backend = "hashed"; // or "pretrained:<name>"
};

// Deterministic offline sentence embedding: lowercase alnum tokens hashed into
// a fixed-width count vector, L2 normalized. Frozen by construction.
Tensor hashed_bow_embedding(const std::string& text, int dim);

// Z_emb: frozen backend followed by a trainable affine -> SiLU -> affine stack.
class TextEncoder {
public:
    TextEncoder(const EncoderConfig& cfg, Rng& rng);

    // Frozen backend output; "pretrained:<name>" backends resolve prompts via a
    // precomputed table at $COSIMGEN_CACHE/<name>.json and raise ConfigError
    // when the table or the prompt entry is missing.
    Tensor backend_embed(const PromptText& prompt) const;

    struct Cache {
        Tensor backend, h1, a1;
    };
    TextEmbedding encode(const PromptText& prompt) const;
    TextEmbedding encode(const PromptText& prompt, Cache& cache) const;
    void backward(const Cache& cache, const Tensor& g_emb, bool acc = true);

    void append_params(const std::string& prefix, nn::ParamRefs& out);

private:
    EncoderConfig cfg_;
    nn::Dense proj1_, proj2_;
    std::map<std::string, Tensor> pretrained_; // loaded once for pretrained:*
};

// C_emb: C_feat = sum of W_c rows selected by the condition bits, then the
// same two-affine projection stack.
class ClassEncoder {
public:
    ClassEncoder(const EncoderConfig& cfg, Rng& rng);

    Tensor class_features(const ConditionVector& condition) const; // {d}

    struct Cache {
        ConditionVector condition;
        Tensor cfeat, h1, a1;
    };
    ClassEmbedding encode(const ConditionVector& condition) const;
    ClassEmbedding encode(const ConditionVector& condition, Cache& cache) const;
    void backward(const Cache& cache, const Tensor& g_emb, bool acc = true);

    void append_params(const std::string& prefix, nn::ParamRefs& out);

    nn::Parameter wc; // {num_classes, d}

private:
    EncoderConfig cfg_;
    nn::Dense proj1_, proj2_;
};

// T_emb: sinusoidal features (first half sin, second half cos, frequencies
// 10000^(-2j/d_base)) through the projection stack.
class TimestepEncoder {
public:
    TimestepEncoder(const EncoderConfig& cfg, Rng& rng);

    Tensor sinusoid(int t) const; // {d_base}

    struct Cache {
        int t = 0;
        Tensor sin_vec, h1, a1;
    };
    TimestepEmbedding encode(int t) const; // validates 0 <= t < T
    TimestepEmbedding encode(int t, Cache& cache) const;
    void backward(const Cache& cache, const Tensor& g_emb, bool acc = true);

    void append_params(const std::string& prefix, nn::ParamRefs& out);

private:
    EncoderConfig cfg_;
    nn::Dense proj1_, proj2_;
};

} // namespace cosimgen

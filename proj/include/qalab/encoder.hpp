#pragma once

// Toy Transformer feature extractor: token + learned position embeddings
// followed by L blocks of multi-head scaled dot-product self-attention and a
// position-wise feed-forward sublayer, each wrapped in residual + layer norm.
// Every layer's hidden states are recorded for the analysis pipeline.

#include <random>
#include <vector>

#include "qalab/params.hpp"
#include "qalab/tensor.hpp"

namespace qalab {

struct EncoderConfig {
    int vocab_size{1024};
    int max_seq_len{128};
    int hidden_size{64};
    int num_layers{6};
    int num_heads{4};
    int ffn_size{256};
    double dropout_rate{0.1};
    std::uint64_t seed{42};

    void validate() const;
    int head_dim() const { return hidden_size / num_heads; }
};

struct EncodedSequence {
    // num_layers + 1 matrices of shape T x D; index 0 is the embedding output
    std::vector<Tensor> layer_states;
    std::vector<bool> attention_mask;
    std::vector<int> token_ids;

    const Tensor& last() const { return layer_states.back(); }
};

// softmax(Q K^T / sqrt(d_k) + mask_bias) V with -1e9 bias on masked key positions
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const std::vector<bool>& mask);

// row-stochastic attention weights for the same inputs (diagnostic path)
Tensor attention_weights(const Tensor& q, const Tensor& k,
                         const std::vector<bool>& mask);

class Encoder {
public:
    Encoder(const EncoderConfig& config, ParamRegistry& reg);

    // forward pass over one sequence; train enables dropout
    EncodedSequence encode(const std::vector<int>& token_ids,
                           const std::vector<bool>& mask, bool train,
                           std::mt19937_64& rng) const;

    // h parallel attention heads over projected Q/K/V, concatenated and
    // passed through the output projection
    Tensor multi_head(const Tensor& x, int layer,
                      const std::vector<bool>& mask) const;

    Tensor transformer_block(const Tensor& x, int layer,
                             const std::vector<bool>& mask, bool train,
                             std::mt19937_64& rng) const;

    const EncoderConfig& config() const { return config_; }

private:
    EncoderConfig config_;
    ParamRegistry* reg_;
};

}  // namespace qalab

#pragma once

// Optional shared post-encoder between the Transformer features and the task
// heads: a 2-layer bidirectional LSTM whose directions are summed, or a single
// Highway block with transform/carry gating. Both preserve the T x D shape so
// heads are indifferent to which (if any) is active.

#include <random>
#include <utility>
#include <vector>

#include "qalab/params.hpp"
#include "qalab/tensor.hpp"

namespace qalab {

enum class PostEncoderKind { identity, bilstm, highway };

struct LstmDirParams {
    Tensor w;  // D x 4D input weights, gate order [i, f, g, o]
    Tensor u;  // D x 4D recurrent weights
    Tensor b;  // 4D bias, forget block initialized to +1
};

// one LSTM step; returns (h_t, c_t), each 1 x D
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x_t, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmDirParams& p);

class BiLstmBlock {
public:
    static constexpr int kNumLayers = 2;
    static constexpr double kDropoutRate = 0.25;

    BiLstmBlock(int hidden_size, ParamRegistry& reg, std::uint64_t seed);

    // per layer: forward sweep t=0..T'-1 and backward sweep t=T'-1..0 over the
    // unmasked prefix, directions summed; inter-layer dropout at train time
    Tensor forward(const Tensor& states, const std::vector<bool>& mask,
                   bool train, std::mt19937_64& rng) const;

    const LstmDirParams& direction(int layer, bool backward) const;

private:
    int hidden_size_;
    std::vector<LstmDirParams> dirs_;  // [layer0 fwd, layer0 bwd, layer1 fwd, layer1 bwd]
};

class HighwayBlock {
public:
    HighwayBlock(int hidden_size, ParamRegistry& reg, std::uint64_t seed);

    // y = ReLU(z W_H + b_H) * T + z * (1 - T), T = sigmoid(z W_T + b_T)
    Tensor forward(const Tensor& z) const;

private:
    Tensor w_h_, b_h_, w_t_, b_t_;
};

// state at the final unmasked timestep, as a 1 x D tensor
Tensor last_step_representation(const Tensor& states, const std::vector<bool>& mask);

}  // namespace qalab

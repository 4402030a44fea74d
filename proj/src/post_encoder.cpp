#include "qalab/post_encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qalab {

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x_t, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmDirParams& p) {
    int d = x_t->cols();
    Tensor gates = add_row_broadcast(add(matmul(x_t, p.w), matmul(h_prev, p.u)), p.b);
    Tensor i = sigmoid(slice_cols(gates, 0, d));
    Tensor f = sigmoid(slice_cols(gates, d, 2 * d));
    Tensor g = tanh_op(slice_cols(gates, 2 * d, 3 * d));
    Tensor o = sigmoid(slice_cols(gates, 3 * d, 4 * d));
    Tensor c = add(mul(f, c_prev), mul(i, g));
    Tensor h = mul(o, tanh_op(c));
    return {h, c};
}

BiLstmBlock::BiLstmBlock(int hidden_size, ParamRegistry& reg, std::uint64_t seed)
    : hidden_size_(hidden_size) {
    std::mt19937_64 rng(seed);
    double lim = 1.0 / std::sqrt(static_cast<double>(hidden_size));
    for (int layer = 0; layer < kNumLayers; ++layer) {
        for (const char* dir : {"fwd", "bwd"}) {
            std::string base = "lstm.l" + std::to_string(layer) + "." + dir + ".";
            LstmDirParams p;
            p.w = reg.add(base + "w",
                          rand_uniform({hidden_size, 4 * hidden_size}, -lim, lim, rng));
            p.u = reg.add(base + "u",
                          rand_uniform({hidden_size, 4 * hidden_size}, -lim, lim, rng));
            // forget-gate bias +1
            auto bias = zeros({4 * hidden_size});
            for (int j = hidden_size; j < 2 * hidden_size; ++j) bias->data[j] = 1.0;
            p.b = reg.add(base + "b", bias, /*decay=*/false);
            dirs_.push_back(p);
        }
    }
}

const LstmDirParams& BiLstmBlock::direction(int layer, bool backward) const {
    return dirs_[static_cast<std::size_t>(layer) * 2 + (backward ? 1 : 0)];
}

Tensor BiLstmBlock::forward(const Tensor& states, const std::vector<bool>& mask,
                            bool train, std::mt19937_64& rng) const {
    int t_total = states->rows(), d = states->cols();
    if (d != hidden_size_)
        throw std::invalid_argument("bilstm: input width mismatch");
    if (static_cast<int>(mask.size()) != t_total)
        throw std::invalid_argument("bilstm: mask length mismatch");
    // backward direction starts at the last unmasked position, not the padded tail
    int t_used = 0;
    while (t_used < t_total && mask[t_used]) ++t_used;
    for (int i = t_used; i < t_total; ++i)
        if (mask[i]) throw std::invalid_argument("bilstm: mask must be a prefix");
    if (t_used == 0) throw std::invalid_argument("bilstm: fully masked sequence");

    Tensor x = states;
    Tensor pad_row = t_used < t_total ? zeros({1, d}) : nullptr;
    for (int layer = 0; layer < kNumLayers; ++layer) {
        const auto& pf = direction(layer, false);
        const auto& pb = direction(layer, true);
        std::vector<Tensor> fwd(t_used), bwd(t_used);
        Tensor h = zeros({1, d}), c = zeros({1, d});
        for (int t = 0; t < t_used; ++t) {
            std::tie(h, c) = lstm_cell(row(x, t), h, c, pf);
            fwd[t] = h;
        }
        h = zeros({1, d});
        c = zeros({1, d});
        for (int t = t_used - 1; t >= 0; --t) {
            std::tie(h, c) = lstm_cell(row(x, t), h, c, pb);
            bwd[t] = h;
        }
        std::vector<Tensor> summed(t_total);
        for (int t = 0; t < t_used; ++t) summed[t] = add(fwd[t], bwd[t]);
        for (int t = t_used; t < t_total; ++t) summed[t] = pad_row;
        x = concat_rows(summed);
        if (layer + 1 < kNumLayers) x = dropout(x, kDropoutRate, train, rng);
    }
    return x;
}

HighwayBlock::HighwayBlock(int hidden_size, ParamRegistry& reg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double lim = std::sqrt(6.0 / (2.0 * hidden_size));  // Xavier uniform
    w_h_ = reg.add("highway.wh", rand_uniform({hidden_size, hidden_size}, -lim, lim, rng));
    b_h_ = reg.add("highway.bh", zeros({hidden_size}), false);
    w_t_ = reg.add("highway.wt", rand_uniform({hidden_size, hidden_size}, -lim, lim, rng));
    // gate bias -1 starts the block near the carry behaviour
    b_t_ = reg.add("highway.bt", full({hidden_size}, -1.0), false);
}

Tensor HighwayBlock::forward(const Tensor& z) const {
    Tensor proj = relu(add_row_broadcast(matmul(z, w_h_), b_h_));
    Tensor gate = sigmoid(add_row_broadcast(matmul(z, w_t_), b_t_));
    Tensor carry = add_scalar(neg(gate), 1.0);  // C = 1 - T
    return add(mul(proj, gate), mul(z, carry));
}

Tensor last_step_representation(const Tensor& states, const std::vector<bool>& mask) {
    if (static_cast<int>(mask.size()) != states->rows())
        throw std::invalid_argument("last_step_representation: mask length mismatch");
    int last = -1;
    for (int i = 0; i < static_cast<int>(mask.size()); ++i)
        if (mask[i]) last = i;
    if (last < 0)
        throw std::invalid_argument("last_step_representation: fully masked sequence");
    return row(states, last);
}

}  // namespace qalab

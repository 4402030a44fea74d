#include "qalab/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qalab {

namespace {
constexpr double kMaskBias = -1e9;
constexpr double kInitStd = 0.02;

std::string pname(int layer, const char* suffix) {
    return "enc.l" + std::to_string(layer) + "." + suffix;
}
}  // namespace

void EncoderConfig::validate() const {
    if (hidden_size % num_heads != 0)
        throw std::invalid_argument("hidden_size must be divisible by num_heads");
    if (num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
    if (vocab_size < 5) throw std::invalid_argument("vocab_size too small");
    if (max_seq_len < 1) throw std::invalid_argument("max_seq_len must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw std::invalid_argument("dropout_rate must be in [0, 1)");
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const std::vector<bool>& mask) {
    if (q->cols() != k->cols())
        throw std::invalid_argument("attention: query/key dimension mismatch");
    if (k->rows() != v->rows())
        throw std::invalid_argument("attention: key/value length mismatch");
    Tensor w = attention_weights(q, k, mask);
    return matmul(w, v);
}

Tensor attention_weights(const Tensor& q, const Tensor& k,
                         const std::vector<bool>& mask) {
    int t = k->rows();
    if (static_cast<int>(mask.size()) != t)
        throw std::invalid_argument("attention: mask length mismatch");
    double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q->cols()));
    Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
    std::vector<double> bias(t, 0.0);
    for (int j = 0; j < t; ++j)
        if (!mask[j]) bias[j] = kMaskBias;
    scores = add_row_broadcast(scores, make_tensor({t}, bias));
    return softmax(scores);
}

Encoder::Encoder(const EncoderConfig& config, ParamRegistry& reg)
    : config_(config), reg_(&reg) {
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    int d = config_.hidden_size, f = config_.ffn_size;
    reg.add("enc.tok_emb", randn({config_.vocab_size, d}, kInitStd, rng));
    reg.add("enc.pos_emb", randn({config_.max_seq_len, d}, kInitStd, rng));
    for (int l = 0; l < config_.num_layers; ++l) {
        for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
            reg.add(pname(l, w), randn({d, d}, kInitStd, rng));
        for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
            reg.add(pname(l, b), zeros({d}), /*decay=*/false);
        reg.add(pname(l, "ln1.gain"), full({d}, 1.0), false);
        reg.add(pname(l, "ln1.bias"), zeros({d}), false);
        reg.add(pname(l, "ffn.w1"), randn({d, f}, kInitStd, rng));
        reg.add(pname(l, "ffn.b1"), zeros({f}), false);
        reg.add(pname(l, "ffn.w2"), randn({f, d}, kInitStd, rng));
        reg.add(pname(l, "ffn.b2"), zeros({d}), false);
        reg.add(pname(l, "ln2.gain"), full({d}, 1.0), false);
        reg.add(pname(l, "ln2.bias"), zeros({d}), false);
    }
}

Tensor Encoder::multi_head(const Tensor& x, int layer,
                           const std::vector<bool>& mask) const {
    int d = config_.hidden_size, h = config_.num_heads, dk = config_.head_dim();
    Tensor q = add_row_broadcast(matmul(x, reg_->get(pname(layer, "attn.wq"))),
                                 reg_->get(pname(layer, "attn.bq")));
    Tensor k = add_row_broadcast(matmul(x, reg_->get(pname(layer, "attn.wk"))),
                                 reg_->get(pname(layer, "attn.bk")));
    Tensor v = add_row_broadcast(matmul(x, reg_->get(pname(layer, "attn.wv"))),
                                 reg_->get(pname(layer, "attn.bv")));
    Tensor heads;
    for (int i = 0; i < h; ++i) {
        Tensor out = attention(slice_cols(q, i * dk, (i + 1) * dk),
                               slice_cols(k, i * dk, (i + 1) * dk),
                               slice_cols(v, i * dk, (i + 1) * dk), mask);
        heads = i == 0 ? out : concat_cols(heads, out);
    }
    (void)d;
    return add_row_broadcast(matmul(heads, reg_->get(pname(layer, "attn.wo"))),
                             reg_->get(pname(layer, "attn.bo")));
}

Tensor Encoder::transformer_block(const Tensor& x, int layer,
                                  const std::vector<bool>& mask, bool train,
                                  std::mt19937_64& rng) const {
    Tensor attn = dropout(multi_head(x, layer, mask), config_.dropout_rate, train, rng);
    Tensor y = layer_norm(add(x, attn), reg_->get(pname(layer, "ln1.gain")),
                          reg_->get(pname(layer, "ln1.bias")));
    Tensor hidden = relu(add_row_broadcast(matmul(y, reg_->get(pname(layer, "ffn.w1"))),
                                           reg_->get(pname(layer, "ffn.b1"))));
    Tensor ffn = add_row_broadcast(matmul(hidden, reg_->get(pname(layer, "ffn.w2"))),
                                   reg_->get(pname(layer, "ffn.b2")));
    ffn = dropout(ffn, config_.dropout_rate, train, rng);
    return layer_norm(add(y, ffn), reg_->get(pname(layer, "ln2.gain")),
                      reg_->get(pname(layer, "ln2.bias")));
}

EncodedSequence Encoder::encode(const std::vector<int>& token_ids,
                                const std::vector<bool>& mask, bool train,
                                std::mt19937_64& rng) const {
    int t = static_cast<int>(token_ids.size());
    if (t == 0) throw std::invalid_argument("encode: empty sequence");
    if (t > config_.max_seq_len)
        throw std::invalid_argument("encode: sequence longer than max_seq_len");
    if (static_cast<int>(mask.size()) != t)
        throw std::invalid_argument("encode: mask length mismatch");
    for (int id : token_ids)
        if (id < 0 || id >= config_.vocab_size)
            throw std::out_of_range("encode: token id " + std::to_string(id) +
                                    " outside vocabulary");
    std::vector<int> positions(t);
    for (int i = 0; i < t; ++i) positions[i] = i;
    Tensor x = add(gather_rows(reg_->get("enc.tok_emb"), token_ids),
                   gather_rows(reg_->get("enc.pos_emb"), positions));
    x = dropout(x, config_.dropout_rate, train, rng);

    EncodedSequence seq;
    seq.token_ids = token_ids;
    seq.attention_mask = mask;
    seq.layer_states.push_back(x);
    for (int l = 0; l < config_.num_layers; ++l) {
        x = transformer_block(x, l, mask, train, rng);
        seq.layer_states.push_back(x);
    }
    return seq;
}

}  // namespace qalab

#include "qalab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace qalab {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor extent must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a->shape != b->shape)
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Tensor node_like(const Tensor& a, std::vector<double> data) {
    auto t = std::make_shared<TensorNode>();
    t->shape = a->shape;
    t->data = std::move(data);
    return t;
}

}  // namespace

Tensor make_tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw std::invalid_argument("make_tensor: data length does not match shape");
    auto t = std::make_shared<TensorNode>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    t->requires_grad = requires_grad;
    return t;
}

Tensor scalar_tensor(double v, bool requires_grad) {
    return make_tensor({1}, {v}, requires_grad);
}

Tensor zeros(std::vector<int> shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return make_tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor full(std::vector<int> shape, double v, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return make_tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
}

Tensor randn(std::vector<int> shape, double stddev, std::mt19937_64& rng, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> data(n);
    for (auto& v : data) v = dist(rng);
    return make_tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor rand_uniform(std::vector<int> shape, double lo, double hi, std::mt19937_64& rng,
                    bool requires_grad) {
    std::size_t n = shape_numel(shape);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> data(n);
    for (auto& v : data) v = dist(rng);
    return make_tensor(std::move(shape), std::move(data), requires_grad);
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + b->data[i];
    Tensor t = node_like(a, std::move(out));
    t->parents = {a, b};
    t->backward_fn = [](TensorNode& n) {
        for (std::size_t i = 0; i < n.data.size(); ++i) {
            n.parents[0]->grad[i] += n.grad[i];
            n.parents[1]->grad[i] += n.grad[i];
        }
    };
    return t;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] - b->data[i];
    Tensor t = node_like(a, std::move(out));
    t->parents = {a, b};
    t->backward_fn = [](TensorNode& n) {
        for (std::size_t i = 0; i < n.data.size(); ++i) {
            n.parents[0]->grad[i] += n.grad[i];
            n.parents[1]->grad[i] -= n.grad[i];
        }
    };
    return t;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * b->data[i];
    Tensor t = node_like(a, std::move(out));
    t->parents = {a, b};
    t->backward_fn = [](TensorNode& n) {
        for (std::size_t i = 0; i < n.data.size(); ++i) {
            n.parents[0]->grad[i] += n.grad[i] * n.parents[1]->data[i];
            n.parents[1]->grad[i] += n.grad[i] * n.parents[0]->data[i];
        }
    };
    return t;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * c;
    Tensor t = node_like(a, std::move(out));
    t->parents = {a};
    t->backward_fn = [c](TensorNode& n) {
        for (std::size_t i = 0; i < n.data.size(); ++i)
            n.parents[0]->grad[i] += n.grad[i] * c;
    };
    return t;
}

Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + c;
    Tensor t = node_like(a, std::move(out));
    t->parents = {a};
    t->backward_fn = [](TensorNode& n) {
        for (std::size_t i = 0; i < n.data.size(); ++i)
            n.parents[0]->grad[i] += n.grad[i];
    };
    return t;
}

Tensor add_row_broadcast(const Tensor& m, const Tensor& rowv) {
    int r = m->rows(), c = m->cols();
    if (static_cast<int>(rowv->numel()) != c)
        throw std::invalid_argument("add_row_broadcast: row length mismatch");
    std::vector<double> out(m->numel());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            out[i * c + j] = m->data[i * c + j] + rowv->data[j];
    Tensor t = node_like(m, std::move(out));
    t->parents = {m, rowv};
    t->backward_fn = [r, c](TensorNode& n) {
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) {
                n.parents[0]->grad[i * c + j] += n.grad[i * c + j];
                n.parents[1]->grad[j] += n.grad[i * c + j];
            }
    };
    return t;
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] > 0.0 ? a->data[i] : 0.0;
    Tensor t = node_like(a, std::move(out));
    t->parents = {a};
    t->backward_fn = [](TensorNode& n) {
        // subgradient at 0 is 0
        for (std::size_t i = 0; i < n.data.size(); ++i)
            if (n.parents[0]->data[i] > 0.0) n.parents[0]->grad[i] += n.grad[i];
    };
    return t;
}

namespace {
double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(a->data[i]);
    Tensor t = node_like(a, std::move(out));
    t->parents = {a};
    t->backward_fn = [](TensorNode& n) {
        for (std::size_t i = 0; i < n.data.size(); ++i) {
            double s = n.data[i];
            n.parents[0]->grad[i] += n.grad[i] * s * (1.0 - s);
        }
    };
    return t;
}

Tensor tanh_op(const Tensor& a) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a->data[i]);
    Tensor t = node_like(a, std::move(out));
    t->parents = {a};
    t->backward_fn = [](TensorNode& n) {
        for (std::size_t i = 0; i < n.data.size(); ++i)
            n.parents[0]->grad[i] += n.grad[i] * (1.0 - n.data[i] * n.data[i]);
    };
    return t;
}

Tensor exp_op(const Tensor& a) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a->data[i]);
    Tensor t = node_like(a, std::move(out));
    t->parents = {a};
    t->backward_fn = [](TensorNode& n) {
        for (std::size_t i = 0; i < n.data.size(); ++i)
            n.parents[0]->grad[i] += n.grad[i] * n.data[i];
    };
    return t;
}

Tensor log_op(const Tensor& a) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a->data[i]);
    Tensor t = node_like(a, std::move(out));
    t->parents = {a};
    t->backward_fn = [](TensorNode& n) {
        for (std::size_t i = 0; i < n.data.size(); ++i)
            n.parents[0]->grad[i] += n.grad[i] / n.parents[0]->data[i];
    };
    return t;
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2)
        throw std::invalid_argument("matmul: expects rank-2 tensors");
    int m = a->shape[0], k = a->shape[1];
    int k2 = b->shape[0], n = b->shape[1];
    if (k != k2) throw std::invalid_argument("matmul: inner extents differ");
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            double av = a->data[i * k + p];
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j) out[i * n + j] += av * b->data[p * n + j];
        }
    auto t = std::make_shared<TensorNode>();
    t->shape = {m, n};
    t->data = std::move(out);
    t->parents = {a, b};
    t->backward_fn = [m, k, n](TensorNode& node) {
        const auto& A = node.parents[0]->data;
        const auto& B = node.parents[1]->data;
        auto& dA = node.parents[0]->grad;
        auto& dB = node.parents[1]->grad;
        // dA = dC * B^T
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                double s = 0.0;
                for (int j = 0; j < n; ++j) s += node.grad[i * n + j] * B[p * n + j];
                dA[i * k + p] += s;
            }
        // dB = A^T * dC
        for (int p = 0; p < k; ++p)
            for (int j = 0; j < n; ++j) {
                double s = 0.0;
                for (int i = 0; i < m; ++i) s += A[i * k + p] * node.grad[i * n + j];
                dB[p * n + j] += s;
            }
    };
    return t;
}

Tensor transpose(const Tensor& a) {
    if (a->shape.size() != 2) throw std::invalid_argument("transpose: expects rank-2");
    int m = a->shape[0], n = a->shape[1];
    std::vector<double> out(a->numel());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[j * m + i] = a->data[i * n + j];
    auto t = std::make_shared<TensorNode>();
    t->shape = {n, m};
    t->data = std::move(out);
    t->parents = {a};
    t->backward_fn = [m, n](TensorNode& node) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                node.parents[0]->grad[i * n + j] += node.grad[j * m + i];
    };
    return t;
}

Tensor sum(const Tensor& a) {
    double s = std::accumulate(a->data.begin(), a->data.end(), 0.0);
    auto t = make_tensor({1}, {s});
    t->parents = {a};
    t->backward_fn = [](TensorNode& n) {
        for (auto& g : n.parents[0]->grad) g += n.grad[0];
    };
    return t;
}

Tensor mean(const Tensor& a) {
    return scale(sum(a), 1.0 / static_cast<double>(a->numel()));
}

Tensor softmax(const Tensor& a) {
    if (a->shape.empty() || a->shape.back() < 1)
        throw std::invalid_argument("softmax: empty axis");
    int k = a->shape.back();
    int rows = static_cast<int>(a->numel()) / k;
    std::vector<double> out(a->numel());
    for (int r = 0; r < rows; ++r) {
        const double* in = a->data.data() + static_cast<std::size_t>(r) * k;
        double* o = out.data() + static_cast<std::size_t>(r) * k;
        double mx = *std::max_element(in, in + k);
        double z = 0.0;
        for (int j = 0; j < k; ++j) {
            o[j] = std::exp(in[j] - mx);
            z += o[j];
        }
        for (int j = 0; j < k; ++j) o[j] /= z;
    }
    Tensor t = node_like(a, std::move(out));
    t->parents = {a};
    t->backward_fn = [k, rows](TensorNode& n) {
        for (int r = 0; r < rows; ++r) {
            const double* s = n.data.data() + static_cast<std::size_t>(r) * k;
            const double* g = n.grad.data() + static_cast<std::size_t>(r) * k;
            double dot = 0.0;
            for (int j = 0; j < k; ++j) dot += s[j] * g[j];
            double* dz = n.parents[0]->grad.data() + static_cast<std::size_t>(r) * k;
            for (int j = 0; j < k; ++j) dz[j] += s[j] * (g[j] - dot);
        }
    };
    return t;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    int d = x->shape.back();
    if (d < 1) throw std::invalid_argument("layer_norm: feature dim must be >= 1");
    if (static_cast<int>(gain->numel()) != d || static_cast<int>(bias->numel()) != d)
        throw std::invalid_argument("layer_norm: gain/bias length mismatch");
    int rows = static_cast<int>(x->numel()) / d;
    std::vector<double> out(x->numel());
    // cache normalized values and inverse stddevs for the backward pass
    auto xhat = std::make_shared<std::vector<double>>(x->numel());
    auto istd = std::make_shared<std::vector<double>>(rows);
    for (int r = 0; r < rows; ++r) {
        const double* in = x->data.data() + static_cast<std::size_t>(r) * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += in[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= d;
        double is = 1.0 / std::sqrt(var + eps);
        (*istd)[r] = is;
        for (int j = 0; j < d; ++j) {
            double h = (in[j] - mu) * is;
            (*xhat)[r * d + j] = h;
            out[r * d + j] = gain->data[j] * h + bias->data[j];
        }
    }
    Tensor t = node_like(x, std::move(out));
    t->parents = {x, gain, bias};
    t->backward_fn = [d, rows, xhat, istd](TensorNode& n) {
        auto& dx = n.parents[0]->grad;
        auto& dgain = n.parents[1]->grad;
        auto& dbias = n.parents[2]->grad;
        const auto& g = n.parents[1]->data;
        for (int r = 0; r < rows; ++r) {
            const double* gr = n.grad.data() + static_cast<std::size_t>(r) * d;
            const double* h = xhat->data() + static_cast<std::size_t>(r) * d;
            double sum_dh = 0.0, sum_dh_h = 0.0;
            for (int j = 0; j < d; ++j) {
                double dh = gr[j] * g[j];
                sum_dh += dh;
                sum_dh_h += dh * h[j];
                dgain[j] += gr[j] * h[j];
                dbias[j] += gr[j];
            }
            double is = (*istd)[r];
            for (int j = 0; j < d; ++j) {
                double dh = gr[j] * g[j];
                dx[r * d + j] += is * (dh - sum_dh / d - h[j] * sum_dh_h / d);
            }
        }
    };
    return t;
}

// ---- slicing / concatenation ----

Tensor row(const Tensor& a, int i) { return slice_rows(a, i, i + 1); }

Tensor slice_rows(const Tensor& a, int r0, int r1) {
    int m = a->rows(), c = a->cols();
    if (r0 < 0 || r1 > m || r0 >= r1)
        throw std::out_of_range("slice_rows: range out of bounds");
    std::vector<double> out(a->data.begin() + static_cast<std::size_t>(r0) * c,
                            a->data.begin() + static_cast<std::size_t>(r1) * c);
    auto t = std::make_shared<TensorNode>();
    t->shape = {r1 - r0, c};
    t->data = std::move(out);
    t->parents = {a};
    t->backward_fn = [r0, c](TensorNode& n) {
        for (std::size_t i = 0; i < n.data.size(); ++i)
            n.parents[0]->grad[static_cast<std::size_t>(r0) * c + i] += n.grad[i];
    };
    return t;
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
    int m = a->rows(), c = a->cols();
    if (c0 < 0 || c1 > c || c0 >= c1)
        throw std::out_of_range("slice_cols: range out of bounds");
    int w = c1 - c0;
    std::vector<double> out(static_cast<std::size_t>(m) * w);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) out[i * w + j] = a->data[i * c + c0 + j];
    auto t = std::make_shared<TensorNode>();
    t->shape = {m, w};
    t->data = std::move(out);
    t->parents = {a};
    t->backward_fn = [m, c, c0, w](TensorNode& n) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
                n.parents[0]->grad[i * c + c0 + j] += n.grad[i * w + j];
    };
    return t;
}

Tensor concat_rows(const std::vector<Tensor>& rows_in) {
    if (rows_in.empty()) throw std::invalid_argument("concat_rows: empty input");
    int c = rows_in[0]->cols();
    int m = 0;
    for (const auto& r : rows_in) {
        if (r->cols() != c) throw std::invalid_argument("concat_rows: width mismatch");
        m += r->rows();
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m) * c);
    for (const auto& r : rows_in) out.insert(out.end(), r->data.begin(), r->data.end());
    auto t = std::make_shared<TensorNode>();
    t->shape = {m, c};
    t->data = std::move(out);
    t->parents = rows_in;
    t->backward_fn = [](TensorNode& n) {
        std::size_t off = 0;
        for (auto& p : n.parents) {
            for (std::size_t i = 0; i < p->data.size(); ++i) p->grad[i] += n.grad[off + i];
            off += p->data.size();
        }
    };
    return t;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    int m = a->rows();
    if (b->rows() != m) throw std::invalid_argument("concat_cols: row count mismatch");
    int ca = a->cols(), cb = b->cols();
    std::vector<double> out(static_cast<std::size_t>(m) * (ca + cb));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < ca; ++j) out[i * (ca + cb) + j] = a->data[i * ca + j];
        for (int j = 0; j < cb; ++j) out[i * (ca + cb) + ca + j] = b->data[i * cb + j];
    }
    auto t = std::make_shared<TensorNode>();
    t->shape = {m, ca + cb};
    t->data = std::move(out);
    t->parents = {a, b};
    t->backward_fn = [m, ca, cb](TensorNode& n) {
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < ca; ++j)
                n.parents[0]->grad[i * ca + j] += n.grad[i * (ca + cb) + j];
            for (int j = 0; j < cb; ++j)
                n.parents[1]->grad[i * cb + j] += n.grad[i * (ca + cb) + ca + j];
        }
    };
    return t;
}

Tensor concat_cols_broadcast(const Tensor& m, const Tensor& vec) {
    int r = m->rows(), d = m->cols();
    int k = static_cast<int>(vec->numel());
    std::vector<double> out(static_cast<std::size_t>(r) * (d + k));
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < d; ++j) out[i * (d + k) + j] = m->data[i * d + j];
        for (int j = 0; j < k; ++j) out[i * (d + k) + d + j] = vec->data[j];
    }
    auto t = std::make_shared<TensorNode>();
    t->shape = {r, d + k};
    t->data = std::move(out);
    t->parents = {m, vec};
    t->backward_fn = [r, d, k](TensorNode& n) {
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < d; ++j)
                n.parents[0]->grad[i * d + j] += n.grad[i * (d + k) + j];
            for (int j = 0; j < k; ++j)
                n.parents[1]->grad[j] += n.grad[i * (d + k) + d + j];
        }
    };
    return t;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    int v = table->rows(), d = table->cols();
    for (int id : ids)
        if (id < 0 || id >= v)
            throw std::out_of_range("gather_rows: id " + std::to_string(id) +
                                    " outside table of " + std::to_string(v) + " rows");
    int m = static_cast<int>(ids.size());
    std::vector<double> out(static_cast<std::size_t>(m) * d);
    for (int i = 0; i < m; ++i)
        std::copy_n(table->data.begin() + static_cast<std::size_t>(ids[i]) * d, d,
                    out.begin() + static_cast<std::size_t>(i) * d);
    auto t = std::make_shared<TensorNode>();
    t->shape = {m, d};
    t->data = std::move(out);
    t->parents = {table};
    auto ids_copy = ids;
    t->backward_fn = [d, ids_copy](TensorNode& n) {
        for (std::size_t i = 0; i < ids_copy.size(); ++i)
            for (int j = 0; j < d; ++j)
                n.parents[0]->grad[static_cast<std::size_t>(ids_copy[i]) * d + j] +=
                    n.grad[i * d + j];
    };
    return t;
}

Tensor dropout(const Tensor& a, double p, bool train, std::mt19937_64& rng) {
    if (!train || p <= 0.0) return a;
    if (p >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
    double keep = 1.0 - p;
    auto mask = std::make_shared<std::vector<double>>(a->numel());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        (*mask)[i] = u(rng) < p ? 0.0 : 1.0 / keep;
        out[i] = a->data[i] * (*mask)[i];
    }
    Tensor t = node_like(a, std::move(out));
    t->parents = {a};
    t->backward_fn = [mask](TensorNode& n) {
        for (std::size_t i = 0; i < n.data.size(); ++i)
            n.parents[0]->grad[i] += n.grad[i] * (*mask)[i];
    };
    return t;
}

Tensor grad_reverse(const Tensor& a, double lambda) {
    Tensor t = node_like(a, a->data);
    t->parents = {a};
    t->backward_fn = [lambda](TensorNode& n) {
        for (std::size_t i = 0; i < n.data.size(); ++i)
            n.parents[0]->grad[i] += -lambda * n.grad[i];
    };
    return t;
}

// ---- losses ----

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<double>& class_weights) {
    int n = logits->rows(), k = logits->cols();
    if (static_cast<int>(targets.size()) != n)
        throw std::invalid_argument("cross_entropy: target count mismatch");
    if (!class_weights.empty() && static_cast<int>(class_weights.size()) != k)
        throw std::invalid_argument("cross_entropy: class weight count mismatch");
    for (int y : targets)
        if (y < 0 || y >= k)
            throw std::out_of_range("cross_entropy: target class " + std::to_string(y) +
                                    " out of range [0," + std::to_string(k) + ")");
    // cache per-row softmax for the backward pass
    auto probs = std::make_shared<std::vector<double>>(logits->numel());
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* z = logits->data.data() + static_cast<std::size_t>(i) * k;
        double mx = *std::max_element(z, z + k);
        double lse = 0.0;
        for (int j = 0; j < k; ++j) lse += std::exp(z[j] - mx);
        lse = std::log(lse) + mx;
        for (int j = 0; j < k; ++j)
            (*probs)[i * k + j] = std::exp(z[j] - lse);
        double w = class_weights.empty() ? 1.0 : class_weights[targets[i]];
        loss += -w * (z[targets[i]] - lse);
    }
    loss /= n;
    auto t = make_tensor({1}, {loss});
    t->parents = {logits};
    auto tg = targets;
    auto cw = class_weights;
    t->backward_fn = [n, k, probs, tg, cw](TensorNode& node) {
        double g = node.grad[0] / n;
        for (int i = 0; i < n; ++i) {
            double w = cw.empty() ? 1.0 : cw[tg[i]];
            for (int j = 0; j < k; ++j) {
                double ind = j == tg[i] ? 1.0 : 0.0;
                node.parents[0]->grad[i * k + j] += g * w * ((*probs)[i * k + j] - ind);
            }
        }
    };
    return t;
}

Tensor binary_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                            double pos_weight) {
    int n = static_cast<int>(logits->numel());
    if (static_cast<int>(targets.size()) != n)
        throw std::invalid_argument("binary_cross_entropy: target count mismatch");
    for (int y : targets)
        if (y != 0 && y != 1)
            throw std::invalid_argument("binary_cross_entropy: targets must be 0/1");
    // loss_i = w*y*softplus(-z) + (1-y)*softplus(z), softplus computed stably
    auto softplus = [](double z) {
        return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    };
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = logits->data[i];
        double y = static_cast<double>(targets[i]);
        loss += pos_weight * y * softplus(-z) + (1.0 - y) * softplus(z);
    }
    loss /= n;
    auto t = make_tensor({1}, {loss});
    t->parents = {logits};
    auto tg = targets;
    t->backward_fn = [n, tg, pos_weight](TensorNode& node) {
        double g = node.grad[0] / n;
        for (int i = 0; i < n; ++i) {
            double s = stable_sigmoid(node.parents[0]->data[i]);
            double y = static_cast<double>(tg[i]);
            node.parents[0]->grad[i] += g * (pos_weight * y * (s - 1.0) + (1.0 - y) * s);
        }
    };
    return t;
}

// ---- backward ----

void backward(const Tensor& root) {
    if (!root->is_scalar())
        throw std::invalid_argument("backward: root must be a scalar");
    // topological order, leaves last
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<Tensor, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root.get());
    std::vector<Tensor> keep_alive;  // retains nodes during the sweep
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Tensor p = node->parents[idx++];
            if (visited.insert(p.get()).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node.get());
            keep_alive.push_back(node);
            stack.pop_back();
        }
    }
    // every sweep starts from zeroed gradients; accumulation happens only
    // within a sweep when a tensor feeds several consumers
    for (auto* n : order) n->grad.assign(n->data.size(), 0.0);
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

void check_finite(const Tensor& t, const std::string& what) {
    for (double v : t->data)
        if (!std::isfinite(v))
            throw std::runtime_error("non-finite value in " + what);
}

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  const std::vector<Tensor>& inputs, double eps) {
    Tensor out = f(inputs);
    if (!out->is_scalar())
        throw std::invalid_argument("grad_check: function must be scalar-valued");
    // inputs the function ignores are not reached by the sweep; their
    // analytic gradient is zero, not whatever a previous sweep left behind
    for (const auto& x : inputs) x->grad.assign(x->data.size(), 0.0);
    backward(out);
    double max_rel = 0.0;
    for (const auto& x : inputs) {
        if (!x->requires_grad) continue;
        for (std::size_t i = 0; i < x->data.size(); ++i) {
            double orig = x->data[i];
            x->data[i] = orig + eps;
            double fp = f(inputs)->data[0];
            x->data[i] = orig - eps;
            double fm = f(inputs)->data[0];
            x->data[i] = orig;
            double num = (fp - fm) / (2.0 * eps);
            double ana = x->grad[i];
            double denom = std::max({std::abs(num), std::abs(ana), 1e-8});
            max_rel = std::max(max_rel, std::abs(num - ana) / denom);
        }
    }
    return max_rel;
}

}  // namespace qalab

#include "hpac/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace hpac {

namespace {

std::size_t shape_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= std::size_t(d);
    return n;
}

TensorNode make_node(std::vector<int> shape, std::vector<double> data) {
    auto node = std::make_shared<TensorImpl>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    return node;
}

// Wires the result into the graph only when a parent tracks gradients.
Tensor make_op(std::vector<int> shape, std::vector<double> data,
               std::vector<TensorNode> parents,
               std::function<void(const TensorImpl&)> backprop) {
    auto node = make_node(std::move(shape), std::move(data));
    bool tracked = false;
    for (const auto& p : parents)
        if (p->requires_grad) tracked = true;
    if (tracked) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backprop = std::move(backprop);
    }
    return Tensor(std::move(node));
}

void accumulate(const TensorNode& target, const double* g, std::size_t n) {
    if (!target->requires_grad) return;
    target->ensure_grad();
    double* dst = target->grad.data();
    for (std::size_t i = 0; i < n; ++i) dst[i] += g[i];
}

[[noreturn]] void shape_fail(const char* op, const std::vector<int>& a,
                             const std::vector<int>& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void require_rank(const char* op, const Tensor& t, int rank) {
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + shape_str(t.shape()));
}

constexpr double kLogClamp = 1e-12;

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor Tensor::zeros(std::vector<int> shape) {
    auto n = shape_size(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    auto n = shape_size(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> values) {
    if (shape_size(shape) != values.size())
        throw ShapeError("from_data: " + std::to_string(values.size()) +
                         " values do not fill shape " + shape_str(shape));
    return Tensor(make_node(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

Tensor Tensor::leaf(std::vector<int> shape, std::vector<double> values) {
    Tensor t = from_data(std::move(shape), std::move(values));
    t.node()->requires_grad = true;
    return t;
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() requires a scalar, got " + shape_str(shape()));
    return impl_->data[0];
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_fail("add", a.shape(), b.shape());
    std::vector<double> out(a.size());
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
    auto an = a.node();
    auto bn = b.node();
    return make_op(a.shape(), std::move(out), {an, bn}, [an, bn](const TensorImpl& self) {
        accumulate(an, self.grad.data(), self.size());
        accumulate(bn, self.grad.data(), self.size());
    });
}

Tensor add_rowvec(const Tensor& matrix, const Tensor& row) {
    require_rank("add_rowvec", matrix, 2);
    require_rank("add_rowvec", row, 1);
    if (matrix.dim(1) != row.dim(0)) shape_fail("add_rowvec", matrix.shape(), row.shape());
    const int rows = matrix.dim(0), cols = matrix.dim(1);
    std::vector<double> out(matrix.size());
    const double* pm = matrix.values().data();
    const double* pv = row.values().data();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[std::size_t(r) * cols + c] = pm[std::size_t(r) * cols + c] + pv[c];
    auto mn = matrix.node();
    auto vn = row.node();
    return make_op(matrix.shape(), std::move(out), {mn, vn},
                   [mn, vn, rows, cols](const TensorImpl& self) {
                       accumulate(mn, self.grad.data(), self.size());
                       if (vn->requires_grad) {
                           vn->ensure_grad();
                           for (int r = 0; r < rows; ++r)
                               for (int c = 0; c < cols; ++c)
                                   vn->grad[std::size_t(c)] += self.grad[std::size_t(r) * cols + c];
                       }
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_fail("mul", a.shape(), b.shape());
    std::vector<double> out(a.size());
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
    auto an = a.node();
    auto bn = b.node();
    return make_op(a.shape(), std::move(out), {an, bn}, [an, bn](const TensorImpl& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.size(); ++i)
                an->grad[i] += self.grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.size(); ++i)
                bn->grad[i] += self.grad[i] * an->data[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.size());
    const double* pa = a.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * factor;
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {an}, [an, factor](const TensorImpl& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i] * factor;
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    if (a.dim(1) != b.dim(0)) shape_fail("matmul", a.shape(), b.shape());
    const int R = a.dim(0), K = a.dim(1), C = b.dim(1);
    std::vector<double> out(std::size_t(R) * C, 0.0);
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    for (int r = 0; r < R; ++r) {
        const double* arow = pa + std::size_t(r) * K;
        double* orow = out.data() + std::size_t(r) * C;
        for (int k = 0; k < K; ++k) {
            const double av = arow[k];
            const double* brow = pb + std::size_t(k) * C;
            for (int c = 0; c < C; ++c) orow[c] += av * brow[c];
        }
    }
    auto an = a.node();
    auto bn = b.node();
    return make_op({R, C}, std::move(out), {an, bn}, [an, bn, R, K, C](const TensorImpl& self) {
        const double* g = self.grad.data();
        if (an->requires_grad) {
            an->ensure_grad();
            for (int r = 0; r < R; ++r)
                for (int k = 0; k < K; ++k) {
                    const double* brow = bn->data.data() + std::size_t(k) * C;
                    const double* grow = g + std::size_t(r) * C;
                    double acc = 0.0;
                    for (int c = 0; c < C; ++c) acc += grow[c] * brow[c];
                    an->grad[std::size_t(r) * K + k] += acc;
                }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int r = 0; r < R; ++r) {
                const double* arow = an->data.data() + std::size_t(r) * K;
                const double* grow = g + std::size_t(r) * C;
                for (int k = 0; k < K; ++k) {
                    double* brow = bn->grad.data() + std::size_t(k) * C;
                    const double av = arow[k];
                    for (int c = 0; c < C; ++c) brow[c] += av * grow[c];
                }
            }
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_rank("transpose", a, 2);
    const int R = a.dim(0), C = a.dim(1);
    std::vector<double> out(a.size());
    const double* pa = a.values().data();
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) out[std::size_t(c) * R + r] = pa[std::size_t(r) * C + c];
    auto an = a.node();
    return make_op({C, R}, std::move(out), {an}, [an, R, C](const TensorImpl& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c)
                an->grad[std::size_t(r) * C + c] += self.grad[std::size_t(c) * R + r];
    });
}

Tensor conv1d_same(const Tensor& input, const Tensor& kernels) {
    require_rank("conv1d_same", input, 2);
    require_rank("conv1d_same", kernels, 3);
    const int L = input.dim(0), Cin = input.dim(1);
    const int w = kernels.dim(0), Cout = kernels.dim(2);
    if (kernels.dim(1) != Cin) shape_fail("conv1d_same", input.shape(), kernels.shape());
    if (w % 2 == 0)
        throw ShapeError("conv1d_same: kernel width must be odd, got " + std::to_string(w));
    const int pad = (w - 1) / 2;

    std::vector<double> out(std::size_t(L) * Cout, 0.0);
    const double* px = input.values().data();
    const double* pk = kernels.values().data();
    for (int i = 0; i < L; ++i) {
        double* orow = out.data() + std::size_t(i) * Cout;
        for (int t = 0; t < w; ++t) {
            const int j = i + t - pad;
            if (j < 0 || j >= L) continue;  // zero padding
            const double* xrow = px + std::size_t(j) * Cin;
            const double* ktab = pk + std::size_t(t) * Cin * Cout;
            for (int c = 0; c < Cin; ++c) {
                const double xv = xrow[c];
                const double* krow = ktab + std::size_t(c) * Cout;
                for (int o = 0; o < Cout; ++o) orow[o] += xv * krow[o];
            }
        }
    }
    auto xn = input.node();
    auto kn = kernels.node();
    return make_op({L, Cout}, std::move(out), {xn, kn},
                   [xn, kn, L, Cin, w, Cout, pad](const TensorImpl& self) {
                       const double* g = self.grad.data();
                       if (xn->requires_grad) {
                           xn->ensure_grad();
                           for (int i = 0; i < L; ++i) {
                               const double* grow = g + std::size_t(i) * Cout;
                               for (int t = 0; t < w; ++t) {
                                   const int j = i + t - pad;
                                   if (j < 0 || j >= L) continue;
                                   double* xgrow = xn->grad.data() + std::size_t(j) * Cin;
                                   const double* ktab =
                                       kn->data.data() + std::size_t(t) * Cin * Cout;
                                   for (int c = 0; c < Cin; ++c) {
                                       const double* krow = ktab + std::size_t(c) * Cout;
                                       double acc = 0.0;
                                       for (int o = 0; o < Cout; ++o) acc += grow[o] * krow[o];
                                       xgrow[c] += acc;
                                   }
                               }
                           }
                       }
                       if (kn->requires_grad) {
                           kn->ensure_grad();
                           for (int i = 0; i < L; ++i) {
                               const double* grow = g + std::size_t(i) * Cout;
                               for (int t = 0; t < w; ++t) {
                                   const int j = i + t - pad;
                                   if (j < 0 || j >= L) continue;
                                   const double* xrow = xn->data.data() + std::size_t(j) * Cin;
                                   double* ktab = kn->grad.data() + std::size_t(t) * Cin * Cout;
                                   for (int c = 0; c < Cin; ++c) {
                                       double* krow = ktab + std::size_t(c) * Cout;
                                       const double xv = xrow[c];
                                       for (int o = 0; o < Cout; ++o) krow[o] += xv * grow[o];
                                   }
                               }
                           }
                       }
                   });
}

Tensor softmax_lastdim_masked(const Tensor& logits, std::span<const uint8_t> mask) {
    if (logits.rank() < 1) throw ShapeError("softmax: rank-0 input");
    const int n = logits.dim(logits.rank() - 1);
    if (int(mask.size()) != n)
        throw ShapeError("softmax: mask length " + std::to_string(mask.size()) +
                         " does not match last dim of " + shape_str(logits.shape()));
    const std::size_t rows = logits.size() / std::size_t(n);
    std::vector<uint8_t> m(mask.begin(), mask.end());

    std::vector<double> out(logits.size(), 0.0);
    const double* px = logits.values().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xrow = px + r * std::size_t(n);
        double* orow = out.data() + r * std::size_t(n);
        double hi = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i)
            if (m[std::size_t(i)]) hi = std::max(hi, xrow[i]);
        if (hi == -std::numeric_limits<double>::infinity()) continue;  // fully masked row
        double denom = 0.0;
        for (int i = 0; i < n; ++i)
            if (m[std::size_t(i)]) denom += std::exp(xrow[i] - hi);
        for (int i = 0; i < n; ++i)
            if (m[std::size_t(i)]) orow[i] = std::exp(xrow[i] - hi) / denom;
    }
    auto xn = logits.node();
    return make_op(logits.shape(), std::move(out), {xn},
                   [xn, rows, n, m = std::move(m)](const TensorImpl& self) {
                       if (!xn->requires_grad) return;
                       xn->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                           const double* y = self.data.data() + r * std::size_t(n);
                           const double* g = self.grad.data() + r * std::size_t(n);
                           double dot = 0.0;
                           for (int i = 0; i < n; ++i)
                               if (m[std::size_t(i)]) dot += g[i] * y[i];
                           double* gx = xn->grad.data() + r * std::size_t(n);
                           for (int i = 0; i < n; ++i)
                               if (m[std::size_t(i)]) gx[i] += y[i] * (g[i] - dot);
                       }
                   });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    const double* pa = a.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] > 0.0 ? pa[i] : 0.0;
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {an}, [an](const TensorImpl& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i)
            if (self.data[i] > 0.0) an->grad[i] += self.grad[i];
    });
}

Tensor elu(const Tensor& a) {
    std::vector<double> out(a.size());
    const double* pa = a.values().data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = pa[i] > 0.0 ? pa[i] : std::expm1(pa[i]);
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {an}, [an](const TensorImpl& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i) {
            const double slope = an->data[i] > 0.0 ? 1.0 : self.data[i] + 1.0;
            an->grad[i] += self.grad[i] * slope;
        }
    });
}

Tensor tanh(const Tensor& a) {
    std::vector<double> out(a.size());
    const double* pa = a.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(pa[i]);
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {an}, [an](const TensorImpl& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i)
            an->grad[i] += self.grad[i] * (1.0 - self.data[i] * self.data[i]);
    });
}

Tensor log(const Tensor& a) {
    std::vector<double> out(a.size());
    const double* pa = a.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(pa[i], kLogClamp));
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {an}, [an](const TensorImpl& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i)
            if (an->data[i] > kLogClamp) an->grad[i] += self.grad[i] / an->data[i];
    });
}

Tensor pow_const(const Tensor& a, double exponent) {
    std::vector<double> out(a.size());
    const double* pa = a.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(pa[i], exponent);
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {an}, [an, exponent](const TensorImpl& self) {
        if (!an->requires_grad || exponent == 0.0) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i) {
            const double x = an->data[i];
            double slope;
            if (x != 0.0) slope = exponent * std::pow(x, exponent - 1.0);
            else slope = exponent > 1.0 ? 0.0 : (exponent == 1.0 ? 1.0 : 0.0);
            an->grad[i] += self.grad[i] * slope;
        }
    });
}

Tensor concat_lastdim(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_lastdim: no inputs");
    const auto& first = parts.front().shape();
    std::vector<int> lead(first.begin(), first.end() - 1);
    std::size_t lead_n = 1;
    for (int d : lead) lead_n *= std::size_t(d);
    int total = 0;
    std::vector<int> widths;
    for (const auto& p : parts) {
        std::vector<int> plead(p.shape().begin(), p.shape().end() - 1);
        if (plead != lead) shape_fail("concat_lastdim", first, p.shape());
        widths.push_back(p.dim(p.rank() - 1));
        total += widths.back();
    }
    std::vector<int> out_shape = lead;
    out_shape.push_back(total);

    std::vector<double> out(lead_n * std::size_t(total));
    int off = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const double* src = parts[pi].values().data();
        const int w = widths[pi];
        for (std::size_t r = 0; r < lead_n; ++r)
            std::copy_n(src + r * std::size_t(w), w,
                        out.data() + r * std::size_t(total) + off);
        off += w;
    }
    std::vector<TensorNode> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    auto parents = nodes;
    return make_op(std::move(out_shape), std::move(out), std::move(parents),
                   [nodes, widths, lead_n, total](const TensorImpl& self) {
                       int off = 0;
                       for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
                           const int w = widths[pi];
                           if (nodes[pi]->requires_grad) {
                               nodes[pi]->ensure_grad();
                               for (std::size_t r = 0; r < lead_n; ++r) {
                                   const double* g =
                                       self.grad.data() + r * std::size_t(total) + off;
                                   double* dst = nodes[pi]->grad.data() + r * std::size_t(w);
                                   for (int i = 0; i < w; ++i) dst[i] += g[i];
                               }
                           }
                           off += w;
                       }
                   });
}

Tensor slice_lastdim(const Tensor& a, int start, int length) {
    const int n = a.dim(a.rank() - 1);
    if (start < 0 || length < 1 || start + length > n)
        throw ShapeError("slice_lastdim: range [" + std::to_string(start) + "," +
                         std::to_string(start + length) + ") outside width " + std::to_string(n));
    const std::size_t rows = a.size() / std::size_t(n);
    std::vector<int> out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(length);
    std::vector<double> out(rows * std::size_t(length));
    const double* pa = a.values().data();
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(pa + r * std::size_t(n) + start, length, out.data() + r * std::size_t(length));
    auto an = a.node();
    return make_op(std::move(out_shape), std::move(out), {an},
                   [an, start, length, n, rows](const TensorImpl& self) {
                       if (!an->requires_grad) return;
                       an->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                           const double* g = self.grad.data() + r * std::size_t(length);
                           double* dst = an->grad.data() + r * std::size_t(n) + start;
                           for (int i = 0; i < length; ++i) dst[i] += g[i];
                       }
                   });
}

Tensor stack_rows(std::span<const Tensor> rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no inputs");
    const int cols = rows.front().dim(0);
    for (const auto& r : rows) {
        if (r.rank() != 1 || r.dim(0) != cols) shape_fail("stack_rows", rows.front().shape(), r.shape());
    }
    const int n = int(rows.size());
    std::vector<double> out(std::size_t(n) * cols);
    for (int r = 0; r < n; ++r)
        std::copy_n(rows[std::size_t(r)].values().data(), cols, out.data() + std::size_t(r) * cols);
    std::vector<TensorNode> nodes;
    for (const auto& r : rows) nodes.push_back(r.node());
    auto parents = nodes;
    return make_op({n, cols}, std::move(out), std::move(parents),
                   [nodes, cols](const TensorImpl& self) {
                       for (std::size_t r = 0; r < nodes.size(); ++r)
                           accumulate(nodes[r], self.grad.data() + r * std::size_t(cols),
                                      std::size_t(cols));
                   });
}

Tensor slice_rows(const Tensor& a, int start, int length) {
    require_rank("slice_rows", a, 2);
    const int R = a.dim(0), C = a.dim(1);
    if (start < 0 || length < 1 || start + length > R)
        throw ShapeError("slice_rows: range [" + std::to_string(start) + "," +
                         std::to_string(start + length) + ") outside " + shape_str(a.shape()));
    std::vector<double> out(std::size_t(length) * C);
    std::copy_n(a.values().data() + std::size_t(start) * C, out.size(), out.data());
    auto an = a.node();
    return make_op({length, C}, std::move(out), {an}, [an, start, C](const TensorImpl& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        double* dst = an->grad.data() + std::size_t(start) * C;
        for (std::size_t i = 0; i < self.size(); ++i) dst[i] += self.grad[i];
    });
}

Tensor mask_rows(const Tensor& a, std::span<const uint8_t> mask) {
    require_rank("mask_rows", a, 2);
    const int R = a.dim(0), C = a.dim(1);
    if (int(mask.size()) != R)
        throw ShapeError("mask_rows: mask length " + std::to_string(mask.size()) +
                         " does not match rows of " + shape_str(a.shape()));
    std::vector<uint8_t> m(mask.begin(), mask.end());
    std::vector<double> out(a.size(), 0.0);
    const double* pa = a.values().data();
    for (int r = 0; r < R; ++r)
        if (m[std::size_t(r)])
            std::copy_n(pa + std::size_t(r) * C, C, out.data() + std::size_t(r) * C);
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {an},
                   [an, R, C, m = std::move(m)](const TensorImpl& self) {
                       if (!an->requires_grad) return;
                       an->ensure_grad();
                       for (int r = 0; r < R; ++r) {
                           if (!m[std::size_t(r)]) continue;
                           const double* g = self.grad.data() + std::size_t(r) * C;
                           double* dst = an->grad.data() + std::size_t(r) * C;
                           for (int c = 0; c < C; ++c) dst[c] += g[c];
                       }
                   });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    auto an = a.node();
    return make_op({1}, {total}, {an}, [an](const TensorImpl& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double g = self.grad[0];
        for (auto& gv : an->grad) gv += g;
    });
}

Tensor mean(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    const double inv = 1.0 / double(a.size());
    auto an = a.node();
    return make_op({1}, {total * inv}, {an}, [an, inv](const TensorImpl& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double g = self.grad[0] * inv;
        for (auto& gv : an->grad) gv += g;
    });
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (shape_size(shape) != a.size())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
    std::vector<double> out(a.values().begin(), a.values().end());
    auto an = a.node();
    return make_op(std::move(shape), std::move(out), {an}, [an](const TensorImpl& self) {
        accumulate(an, self.grad.data(), self.size());
    });
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
    require_rank("embedding_lookup", table, 2);
    const int V = table.dim(0), d = table.dim(1);
    std::vector<int> idx(ids.begin(), ids.end());
    for (int id : idx)
        if (id < 0 || id >= V)
            throw DomainError("embedding_lookup: id " + std::to_string(id) +
                              " outside vocabulary [0," + std::to_string(V) + ")");
    const int count = int(idx.size());
    std::vector<double> out(idx.size() * std::size_t(d));
    const double* pt = table.values().data();
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(pt + std::size_t(idx[i]) * d, d, out.data() + i * std::size_t(d));
    auto tn = table.node();
    return make_op({count, d}, std::move(out), {tn},
                   [tn, d, idx = std::move(idx)](const TensorImpl& self) {
                       if (!tn->requires_grad) return;
                       tn->ensure_grad();
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                           const double* g = self.grad.data() + i * std::size_t(d);
                           double* dst = tn->grad.data() + std::size_t(idx[i]) * d;
                           for (int c = 0; c < d; ++c) dst[c] += g[c];
                       }
                   });
}

Tensor take_per_row(const Tensor& a, std::span<const int> indices) {
    require_rank("take_per_row", a, 2);
    const int R = a.dim(0), C = a.dim(1);
    if (int(indices.size()) != R)
        throw ShapeError("take_per_row: " + std::to_string(indices.size()) +
                         " indices for " + shape_str(a.shape()));
    std::vector<int> idx(indices.begin(), indices.end());
    for (int i : idx)
        if (i < 0 || i >= C)
            throw DomainError("take_per_row: column " + std::to_string(i) + " outside [0," +
                              std::to_string(C) + ")");
    std::vector<double> out(std::size_t(R), 0.0);
    const double* pa = a.values().data();
    for (int r = 0; r < R; ++r) out[std::size_t(r)] = pa[std::size_t(r) * C + idx[std::size_t(r)]];
    auto an = a.node();
    return make_op({R}, std::move(out), {an}, [an, C, idx = std::move(idx)](const TensorImpl& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t r = 0; r < idx.size(); ++r)
            an->grad[r * std::size_t(C) + std::size_t(idx[r])] += self.grad[r];
    });
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("backward requires a scalar loss tensor");

    // Post-order DFS, then propagate in reverse topological order.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorImpl* parent = node->parents[next++].get();
            if (seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior gradients are per-sweep scratch; leaf gradients accumulate
    // across sweeps until the caller resets them.
    for (TensorImpl* node : order) {
        if (node->backprop) node->grad.assign(node->data.size(), 0.0);
        else node->ensure_grad();
    }
    loss.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop(**it);
}

}  // namespace hpac

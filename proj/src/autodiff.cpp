#include "amt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "amt/errors.hpp"

namespace amt::ad {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<double>& Node::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Value Value::constant(Shape shape, std::vector<double> data) {
    if (numel(shape) != data.size())
        throw ShapeError("constant: shape " + to_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    return Value(std::move(node));
}

Value Value::constant(Shape shape, double fill) {
    std::vector<double> data(numel(shape), fill);
    return constant(std::move(shape), std::move(data));
}

Value Value::parameter(Shape shape, std::vector<double> data) {
    Value v = constant(std::move(shape), std::move(data));
    v.node_->requires_grad = true;
    return v;
}

double Value::item() const {
    if (size() != 1) throw ShapeError("item: value of shape " + to_string(shape()) + " is not scalar");
    return node_->data[0];
}

void Value::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

namespace {

void require_same_shape(const char* op, const Value& a, const Value& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " differ");
}

void require_rank(const char* op, const Value& x, std::size_t rank) {
    if (x.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(x.shape()));
}

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<std::size_t> strides_of(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

}  // namespace

Value Tape::record(Shape shape, std::vector<double> data, std::initializer_list<const Value*> inputs,
                   Backward backward) {
    Value out = Value::constant(std::move(shape), std::move(data));
    bool needs = false;
    for (const Value* v : inputs) needs = needs || (v->defined() && v->requires_grad());
    if (needs) {
        out.node_->requires_grad = true;
        entries_.push_back({out.node_, std::move(backward)});
    }
    return out;
}

Value Tape::record(Shape shape, std::vector<double> data, const std::vector<Value>& inputs,
                   Backward backward) {
    Value out = Value::constant(std::move(shape), std::move(data));
    bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Value& v) { return v.requires_grad(); });
    if (needs) {
        out.node_->requires_grad = true;
        entries_.push_back({out.node_, std::move(backward)});
    }
    return out;
}

void Tape::backward(const Value& loss) {
    if (loss.size() != 1)
        throw ShapeError("backward: loss of shape " + to_string(loss.shape()) + " is not scalar");
    if (!loss.requires_grad()) {
        entries_.clear();
        return;
    }
    loss.node_->ensure_grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->out->grad.empty()) continue;
        it->backward(it->out->grad);
    }
    entries_.clear();
}

Value Tape::matmul(const Value& a, const Value& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw ShapeError("matmul: inner dimensions of " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " differ");
    std::vector<double> out(m * n, 0.0);
    const double* A = a.data().data();
    const double* B = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            const double* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
        }
    }
    auto na = a.node(), nb = b.node();
    return record({m, n}, std::move(out), {&a, &b}, [na, nb, m, k, n](const std::vector<double>& g) {
        if (na->requires_grad) {
            auto& ga = na->ensure_grad();
            const double* B = nb->data.data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* grow = g.data() + i * n;
                    const double* brow = B + p * n;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    ga[i * k + p] += acc;
                }
        }
        if (nb->requires_grad) {
            auto& gb = nb->ensure_grad();
            const double* A = na->data.data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = A[i * k + p];
                    const double* grow = g.data() + i * n;
                    double* gbrow = gb.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                }
        }
    });
}

Value Tape::add(const Value& a, const Value& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
    auto na = a.node(), nb = b.node();
    return record(a.shape(), std::move(out), {&a, &b}, [na, nb](const std::vector<double>& g) {
        for (auto* n : {na.get(), nb.get()})
            if (n->requires_grad) {
                auto& gn = n->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gn[i] += g[i];
            }
    });
}

Value Tape::sub(const Value& a, const Value& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
    auto na = a.node(), nb = b.node();
    return record(a.shape(), std::move(out), {&a, &b}, [na, nb](const std::vector<double>& g) {
        if (na->requires_grad) {
            auto& ga = na->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (nb->requires_grad) {
            auto& gb = nb->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Value Tape::mul(const Value& a, const Value& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
    auto na = a.node(), nb = b.node();
    return record(a.shape(), std::move(out), {&a, &b}, [na, nb](const std::vector<double>& g) {
        if (na->requires_grad) {
            auto& ga = na->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * nb->data[i];
        }
        if (nb->requires_grad) {
            auto& gb = nb->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * na->data[i];
        }
    });
}

Value Tape::scale(const Value& a, double factor) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * factor;
    auto na = a.node();
    return record(a.shape(), std::move(out), {&a}, [na, factor](const std::vector<double>& g) {
        auto& ga = na->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
}

Value Tape::add_bias(const Value& x, const Value& bias) {
    require_rank("add_bias", bias, 1);
    if (x.rank() == 0 || x.shape().back() != bias.dim(0))
        throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " does not match " +
                         to_string(x.shape()));
    const std::size_t n = bias.dim(0), rows = x.size() / n;
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x.at(r * n + j) + bias.at(j);
    auto nx = x.node(), nb = bias.node();
    return record(x.shape(), std::move(out), {&x, &bias}, [nx, nb, n, rows](const std::vector<double>& g) {
        if (nx->requires_grad) {
            auto& gx = nx->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (nb->requires_grad) {
            auto& gb = nb->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
        }
    });
}

Value Tape::concat(const std::vector<Value>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = parts.front().shape();
    if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + to_string(first));
    Shape shape = first;
    shape[axis] = 0;
    for (const Value& p : parts) {
        if (p.rank() != first.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t d = 0; d < first.size(); ++d)
            if (d != axis && p.dim(d) != first[d])
                throw ShapeError("concat: shapes " + to_string(first) + " and " + to_string(p.shape()) +
                                 " differ off-axis");
        shape[axis] += p.dim(axis);
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
    const std::size_t out_block = shape[axis] * inner;

    std::vector<double> out(numel(shape));
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const Value& p : parts) {
        offsets.push_back(offset);
        const std::size_t block = p.dim(axis) * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(p.data().begin() + o * block, block, out.begin() + o * out_block + offset);
        offset += block;
    }
    std::vector<std::shared_ptr<Node>> nodes;
    for (const Value& p : parts) nodes.push_back(p.node());
    return record(shape, std::move(out), parts,
                  [nodes, offsets, outer, inner, out_block, axis](const std::vector<double>& g) {
                      for (std::size_t k = 0; k < nodes.size(); ++k) {
                          Node& n = *nodes[k];
                          if (!n.requires_grad) continue;
                          auto& gn = n.ensure_grad();
                          const std::size_t block = n.shape[axis] * inner;
                          for (std::size_t o = 0; o < outer; ++o)
                              for (std::size_t i = 0; i < block; ++i)
                                  gn[o * block + i] += g[o * out_block + offsets[k] + i];
                      }
                  });
}

Value Tape::slice(const Value& x, std::size_t axis, std::size_t start, std::size_t length) {
    if (axis >= x.rank() || start + length > x.dim(axis))
        throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") on axis " + std::to_string(axis) + " out of " + to_string(x.shape()));
    Shape shape = x.shape();
    shape[axis] = length;
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
    for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
    const std::size_t in_block = x.dim(axis) * inner, block = length * inner, skip = start * inner;
    std::vector<double> out(outer * block);
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(x.data().begin() + o * in_block + skip, block, out.begin() + o * block);
    auto nx = x.node();
    return record(shape, std::move(out), {&x}, [nx, outer, in_block, block, skip](const std::vector<double>& g) {
        auto& gx = nx->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < block; ++i) gx[o * in_block + skip + i] += g[o * block + i];
    });
}

Value Tape::reshape(const Value& x, Shape shape) {
    if (numel(shape) != x.size())
        throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    std::vector<double> out(x.data().begin(), x.data().end());
    auto nx = x.node();
    return record(std::move(shape), std::move(out), {&x}, [nx](const std::vector<double>& g) {
        auto& gx = nx->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Value Tape::transpose(const Value& x) {
    require_rank("transpose", x, 2);
    return permute(x, {1, 0});
}

Value Tape::permute(const Value& x, const std::vector<std::size_t>& order) {
    const std::size_t r = x.rank();
    if (order.size() != r) throw ShapeError("permute: order rank mismatch for " + to_string(x.shape()));
    std::vector<bool> seen(r, false);
    for (std::size_t d : order) {
        if (d >= r || seen[d]) throw ShapeError("permute: invalid axis order");
        seen[d] = true;
    }
    Shape shape(r);
    for (std::size_t d = 0; d < r; ++d) shape[d] = x.dim(order[d]);
    const auto in_strides = strides_of(x.shape());
    // source flat index for every destination flat index
    std::vector<std::size_t> src(x.size());
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t flat = 0; flat < src.size(); ++flat) {
        std::size_t s = 0;
        for (std::size_t d = 0; d < r; ++d) s += idx[d] * in_strides[order[d]];
        src[flat] = s;
        for (std::size_t d = r; d-- > 0;) {
            if (++idx[d] < shape[d]) break;
            idx[d] = 0;
        }
    }
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(src[i]);
    auto nx = x.node();
    return record(shape, std::move(out), {&x}, [nx, src = std::move(src)](const std::vector<double>& g) {
        auto& gx = nx->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[src[i]] += g[i];
    });
}

Value Tape::detach(const Value& x) {
    return Value::constant(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
}

Value Tape::sum(const Value& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    auto nx = x.node();
    return record({1}, {acc}, {&x}, [nx](const std::vector<double>& g) {
        auto& gx = nx->ensure_grad();
        for (double& v : gx) v += g[0];
    });
}

Value Tape::mean(const Value& x) {
    if (x.size() == 0) throw ShapeError("mean: empty value");
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    const double n = static_cast<double>(x.size());
    auto nx = x.node();
    return record({1}, {acc / n}, {&x}, [nx, n](const std::vector<double>& g) {
        auto& gx = nx->ensure_grad();
        const double share = g[0] / n;
        for (double& v : gx) v += share;
    });
}

Value Tape::relu(const Value& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) > 0.0 ? x.at(i) : 0.0;
    auto nx = x.node();
    return record(x.shape(), std::move(out), {&x}, [nx](const std::vector<double>& g) {
        auto& gx = nx->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (nx->data[i] > 0.0) gx[i] += g[i];
    });
}

Value Tape::sigmoid(const Value& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(x.at(i));
    auto nx = x.node();
    Value y = record(x.shape(), std::move(out), {&x}, {});
    if (y.requires_grad()) {
        std::weak_ptr<Node> wy = y.node();
        entries_.back().backward = [nx, wy](const std::vector<double>& g) {
            auto ny = wy.lock();
            auto& gx = nx->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double s = ny->data[i];
                gx[i] += g[i] * s * (1.0 - s);
            }
        };
    }
    return y;
}

Value Tape::tanh(const Value& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.at(i));
    auto nx = x.node();
    Value y = record(x.shape(), std::move(out), {&x}, {});
    if (y.requires_grad()) {
        std::weak_ptr<Node> wy = y.node();
        entries_.back().backward = [nx, wy](const std::vector<double>& g) {
            auto ny = wy.lock();
            auto& gx = nx->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double t = ny->data[i];
                gx[i] += g[i] * (1.0 - t * t);
            }
        };
    }
    return y;
}

Value Tape::softmax_rows(const Value& x) {
    require_rank("softmax_rows", x, 2);
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.data().data() + i * n;
        double* o = out.data() + i * n;
        const double mx = *std::max_element(row, row + n);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += (o[j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < n; ++j) o[j] /= total;
    }
    auto nx = x.node();
    Value y = record(x.shape(), std::move(out), {&x}, {});
    if (y.requires_grad()) {
        std::weak_ptr<Node> wy = y.node();
        entries_.back().backward = [nx, wy, m, n](const std::vector<double>& g) {
            auto ny = wy.lock();
            auto& gx = nx->ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                const double* s = ny->data.data() + i * n;
                const double* gi = g.data() + i * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += gi[j] * s[j];
                for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += s[j] * (gi[j] - dot);
            }
        };
    }
    return y;
}

namespace {

// Output positions `o` whose input coordinate o*stride + offset lies in [0, extent).
struct ValidRange {
    std::size_t lo = 0, hi = 0;
};

ValidRange valid_range(std::ptrdiff_t offset, std::size_t stride, std::size_t extent, std::size_t out_extent) {
    const auto s = static_cast<std::ptrdiff_t>(stride);
    std::ptrdiff_t lo = offset >= 0 ? 0 : (-offset + s - 1) / s;
    std::ptrdiff_t last = static_cast<std::ptrdiff_t>(extent) - 1 - offset;
    std::ptrdiff_t hi = last < 0 ? 0 : last / s + 1;
    hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out_extent));
    if (hi < lo) hi = lo;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

Value Tape::conv2d(const Value& x, const Value& weight, const Value& bias, const Conv2dOptions& opt) {
    require_rank("conv2d input", x, 3);
    require_rank("conv2d weight", weight, 4);
    if (opt.dilation_h < 1 || opt.dilation_w < 1 || opt.stride_h < 1 || opt.stride_w < 1)
        throw InvalidConfig("conv2d: stride and dilation must be >= 1");
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const std::size_t O = weight.dim(0), KH = weight.dim(2), KW = weight.dim(3);
    if (weight.dim(1) != C)
        throw ShapeError("conv2d: weight " + to_string(weight.shape()) + " expects " +
                         std::to_string(weight.dim(1)) + " channels, input " + to_string(x.shape()));
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != O))
        throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " does not match " + std::to_string(O));
    const std::size_t span_h = opt.dilation_h * (KH - 1) + 1, span_w = opt.dilation_w * (KW - 1) + 1;
    if (H + 2 * opt.pad_h < span_h || W + 2 * opt.pad_w < span_w)
        throw ShapeError("conv2d: input " + to_string(x.shape()) + " smaller than dilated kernel");
    const std::size_t HO = (H + 2 * opt.pad_h - span_h) / opt.stride_h + 1;
    const std::size_t WO = (W + 2 * opt.pad_w - span_w) / opt.stride_w + 1;

    struct Tap {
        std::size_t ho_lo, ho_hi, wo_lo, wo_hi;
        std::ptrdiff_t h_off, w_off;
    };
    std::vector<Tap> taps(KH * KW);
    for (std::size_t ki = 0; ki < KH; ++ki)
        for (std::size_t kj = 0; kj < KW; ++kj) {
            const auto h_off = static_cast<std::ptrdiff_t>(ki * opt.dilation_h) - static_cast<std::ptrdiff_t>(opt.pad_h);
            const auto w_off = static_cast<std::ptrdiff_t>(kj * opt.dilation_w) - static_cast<std::ptrdiff_t>(opt.pad_w);
            const auto hr = valid_range(h_off, opt.stride_h, H, HO);
            const auto wr = valid_range(w_off, opt.stride_w, W, WO);
            taps[ki * KW + kj] = {hr.lo, hr.hi, wr.lo, wr.hi, h_off, w_off};
        }
    const std::size_t sh = opt.stride_h, sw = opt.stride_w;

    std::vector<double> out(O * HO * WO, 0.0);
    const double* X = x.data().data();
    const double* Wt = weight.data().data();
    // Each output row accumulates over (c, kh, kw) in ascending order.
    for (std::size_t o = 0; o < O; ++o)
        for (std::size_t ho = 0; ho < HO; ++ho) {
            double* __restrict orow = out.data() + (o * HO + ho) * WO;
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t t = 0; t < KH * KW; ++t) {
                    const Tap& tp = taps[t];
                    if (ho < tp.ho_lo || ho >= tp.ho_hi) continue;
                    const double wv = Wt[(o * C + c) * KH * KW + t];
                    const std::size_t hi = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(ho * sh) + tp.h_off);
                    const double* irow = X + (c * H + hi) * W;
                    if (sw == 1) {
                        const double* __restrict src = irow + tp.w_off;
                        for (std::size_t wo = tp.wo_lo; wo < tp.wo_hi; ++wo) orow[wo] += wv * src[wo];
                    } else {
                        for (std::size_t wo = tp.wo_lo; wo < tp.wo_hi; ++wo)
                            orow[wo] += wv * irow[static_cast<std::ptrdiff_t>(wo * sw) + tp.w_off];
                    }
                }
        }
    if (bias.defined())
        for (std::size_t o = 0; o < O; ++o) {
            const double b = bias.at(o);
            for (std::size_t i = 0; i < HO * WO; ++i) out[o * HO * WO + i] += b;
        }

    auto nx = x.node(), nw = weight.node();
    std::shared_ptr<Node> nb = bias.defined() ? bias.node() : nullptr;
    Value y = record({O, HO, WO}, std::move(out), {&x, &weight, &bias}, {});
    if (!y.requires_grad()) return y;
    entries_.back().backward = [=, taps = std::move(taps)](const std::vector<double>& g) {
        if (nb && nb->requires_grad) {
            auto& gb = nb->ensure_grad();
            for (std::size_t o = 0; o < O; ++o)
                for (std::size_t i = 0; i < HO * WO; ++i) gb[o] += g[o * HO * WO + i];
        }
        const bool want_x = nx->requires_grad, want_w = nw->requires_grad;
        if (!want_x && !want_w) return;
        double* gx = want_x ? nx->ensure_grad().data() : nullptr;
        double* gw = want_w ? nw->ensure_grad().data() : nullptr;
        const double* X = nx->data.data();
        const double* Wt = nw->data.data();
        if (gx)
            for (std::size_t o = 0; o < O; ++o)
                for (std::size_t ho = 0; ho < HO; ++ho) {
                    const double* __restrict grow = g.data() + (o * HO + ho) * WO;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t t = 0; t < KH * KW; ++t) {
                            const Tap& tp = taps[t];
                            if (ho < tp.ho_lo || ho >= tp.ho_hi) continue;
                            const double wv = Wt[(o * C + c) * KH * KW + t];
                            const std::size_t hi = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(ho * sh) + tp.h_off);
                            double* grow_x = gx + (c * H + hi) * W;
                            if (sw == 1) {
                                double* __restrict dst = grow_x + tp.w_off;
                                for (std::size_t wo = tp.wo_lo; wo < tp.wo_hi; ++wo) dst[wo] += wv * grow[wo];
                            } else {
                                for (std::size_t wo = tp.wo_lo; wo < tp.wo_hi; ++wo)
                                    grow_x[static_cast<std::ptrdiff_t>(wo * sw) + tp.w_off] += wv * grow[wo];
                            }
                        }
                }
        if (!gw) return;
        const std::size_t T = KH * KW;
        std::vector<double> partial(T * WO);
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t c = 0; c < C; ++c) {
                std::fill(partial.begin(), partial.end(), 0.0);
                for (std::size_t ho = 0; ho < HO; ++ho) {
                    const double* __restrict grow = g.data() + (o * HO + ho) * WO;
                    for (std::size_t t = 0; t < T; ++t) {
                        const Tap& tp = taps[t];
                        if (ho < tp.ho_lo || ho >= tp.ho_hi) continue;
                        double* __restrict acc = partial.data() + t * WO;
                        const std::size_t hi = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(ho * sh) + tp.h_off);
                        const double* irow = X + (c * H + hi) * W;
                        if (sw == 1) {
                            const double* __restrict src = irow + tp.w_off;
                            for (std::size_t wo = tp.wo_lo; wo < tp.wo_hi; ++wo) acc[wo] += grow[wo] * src[wo];
                        } else {
                            for (std::size_t wo = tp.wo_lo; wo < tp.wo_hi; ++wo)
                                acc[wo] += grow[wo] * irow[static_cast<std::ptrdiff_t>(wo * sw) + tp.w_off];
                        }
                    }
                }
                for (std::size_t t = 0; t < T; ++t) {
                    const double* acc = partial.data() + t * WO;
                    double total = 0.0;
                    for (std::size_t wo = taps[t].wo_lo; wo < taps[t].wo_hi; ++wo) total += acc[wo];
                    gw[(o * C + c) * T + t] += total;
                }
            }
    };
    return y;
}

Value Tape::maxpool2d(const Value& x, std::size_t kernel_h, std::size_t kernel_w) {
    require_rank("maxpool2d", x, 3);
    if (kernel_h == 0 || kernel_w == 0) throw InvalidConfig("maxpool2d: kernel must be positive");
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const std::size_t HO = H / kernel_h, WO = W / kernel_w;
    if (HO == 0 || WO == 0) throw ShapeError("maxpool2d: input " + to_string(x.shape()) + " smaller than window");
    std::vector<double> out(C * HO * WO);
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t ho = 0; ho < HO; ++ho)
            for (std::size_t wo = 0; wo < WO; ++wo) {
                std::size_t best = (c * H + ho * kernel_h) * W + wo * kernel_w;
                for (std::size_t i = 0; i < kernel_h; ++i)
                    for (std::size_t j = 0; j < kernel_w; ++j) {
                        const std::size_t idx = (c * H + ho * kernel_h + i) * W + wo * kernel_w + j;
                        if (x.at(idx) > x.at(best)) best = idx;
                    }
                const std::size_t o = (c * HO + ho) * WO + wo;
                out[o] = x.at(best);
                argmax[o] = best;
            }
    auto nx = x.node();
    return record({C, HO, WO}, std::move(out), {&x}, [nx, argmax = std::move(argmax)](const std::vector<double>& g) {
        auto& gx = nx->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
    });
}

Value Tape::dropout(const Value& x, double rate, bool train, Rng* rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw InvalidConfig("dropout: rate must lie in [0, 1)");
    if (!train || rate == 0.0) return x;
    if (!rng) throw InvalidConfig("dropout: training mode requires a random generator");
    const double keep = 1.0 - rate;
    std::vector<double> mask(x.size());
    for (double& m : mask) m = uniform01(*rng) < rate ? 0.0 : 1.0 / keep;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) * mask[i];
    auto nx = x.node();
    return record(x.shape(), std::move(out), {&x}, [nx, mask = std::move(mask)](const std::vector<double>& g) {
        auto& gx = nx->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    });
}

Value Tape::bce_with_logits(const Value& logits, const Value& target) {
    require_same_shape("bce_with_logits", logits, target);
    if (logits.size() == 0) throw ShapeError("bce_with_logits: empty input");
    const double n = static_cast<double>(logits.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = logits.at(i), t = target.at(i);
        acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    auto nz = logits.node(), nt = target.node();
    return record({1}, {acc / n}, {&logits, &target}, [nz, nt, n](const std::vector<double>& g) {
        const double share = g[0] / n;
        if (nz->requires_grad) {
            auto& gz = nz->ensure_grad();
            for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += share * (stable_sigmoid(nz->data[i]) - nt->data[i]);
        }
        if (nt->requires_grad) {
            auto& gt = nt->ensure_grad();
            for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= share * nz->data[i];
        }
    });
}

Value Tape::mse(const Value& pred, const Value& target) {
    require_same_shape("mse", pred, target);
    if (pred.size() == 0) throw ShapeError("mse: empty input");
    const double n = static_cast<double>(pred.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.at(i) - target.at(i);
        acc += d * d;
    }
    auto np = pred.node(), nt = target.node();
    return record({1}, {acc / n}, {&pred, &target}, [np, nt, n](const std::vector<double>& g) {
        const double share = 2.0 * g[0] / n;
        for (std::size_t i = 0; i < np->data.size(); ++i) {
            const double d = np->data[i] - nt->data[i];
            if (np->requires_grad) np->ensure_grad()[i] += share * d;
            if (nt->requires_grad) nt->ensure_grad()[i] -= share * d;
        }
    });
}

GradCheckReport grad_check(const std::function<Value(Tape&)>& f, std::vector<Value> leaves, double eps) {
    if (!(eps > 0.0)) throw InvalidConfig("grad_check: eps must be positive");
    for (Value& leaf : leaves) {
        if (!leaf.requires_grad()) throw InvalidInput("grad_check: leaf does not require grad");
        leaf.zero_grad();
    }
    {
        Tape tape;
        Value y = f(tape);
        if (y.size() != 1) throw ShapeError("grad_check: function is not scalar-valued");
        tape.backward(y);
    }
    GradCheckReport report;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        Value& leaf = leaves[l];
        std::vector<double> analytic(leaf.size(), 0.0);
        if (!leaf.grad().empty()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
        auto data = leaf.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double original = data[i];
            data[i] = original + eps;
            double plus, minus;
            {
                Tape tape;
                plus = f(tape).item();
            }
            data[i] = original - eps;
            {
                Tape tape;
                minus = f(tape).item();
            }
            data[i] = original;
            const double cd = (plus - minus) / (2.0 * eps);
            const double denom = std::max({std::abs(analytic[i]), std::abs(cd), 1e-8});
            const double rel = std::abs(analytic[i] - cd) / denom;
            ++report.coordinates;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_leaf = l;
                report.worst_index = i;
            }
        }
    }
    return report;
}

double grad_check(const std::function<Value(Tape&, const Value&)>& f, const Value& x, double eps) {
    Value leaf = x.requires_grad() ? x : Value::parameter(x.shape(), {x.data().begin(), x.data().end()});
    return grad_check([&](Tape& tape) { return f(tape, leaf); }, {leaf}, eps).max_rel_error;
}

}  // namespace amt::ad

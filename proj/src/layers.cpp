#include "dendron/layers.hpp"

#include <cmath>
#include <string>

namespace dendron {

namespace {

// Residual block inner structure, derived from the descriptor.
struct BlockLayout {
    AffineDesc a1;
    FeatureNormDesc fn;
    NonlinearityDesc nl;
    AffineDesc a2;
};

BlockLayout block_layout(const ResidualBlockDesc& b) {
    return {AffineDesc{b.width, b.width}, FeatureNormDesc{b.width}, NonlinearityDesc{},
            AffineDesc{b.width, b.width}};
}

void append_affine_shapes(const AffineDesc& a, std::vector<std::vector<std::size_t>>& out) {
    out.push_back({a.in, a.out});
    out.push_back({a.out});
}

void append_norm_shapes(const FeatureNormDesc& f, std::vector<std::vector<std::size_t>>& out) {
    out.push_back({f.dim});
    out.push_back({f.dim});
}

} // namespace

std::size_t LayerStack::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
        if (std::holds_alternative<AffineDesc>(l)) n += 2;
        else if (std::holds_alternative<FeatureNormDesc>(l)) n += 2;
        else if (std::holds_alternative<ResidualBlockDesc>(l)) n += 6;
    }
    return n;
}

std::vector<std::vector<std::size_t>> LayerStack::param_shapes() const {
    std::vector<std::vector<std::size_t>> shapes;
    for (const auto& l : layers) {
        if (const auto* a = std::get_if<AffineDesc>(&l)) {
            append_affine_shapes(*a, shapes);
        } else if (const auto* f = std::get_if<FeatureNormDesc>(&l)) {
            append_norm_shapes(*f, shapes);
        } else if (const auto* b = std::get_if<ResidualBlockDesc>(&l)) {
            BlockLayout bl = block_layout(*b);
            append_affine_shapes(bl.a1, shapes);
            append_norm_shapes(bl.fn, shapes);
            append_affine_shapes(bl.a2, shapes);
        }
    }
    return shapes;
}

std::size_t LayerStack::input_width() const {
    for (const auto& l : layers) {
        if (const auto* a = std::get_if<AffineDesc>(&l)) return a->in;
        if (const auto* f = std::get_if<FeatureNormDesc>(&l)) return f->dim;
        if (const auto* b = std::get_if<ResidualBlockDesc>(&l)) return b->width;
    }
    return 0;
}

std::size_t LayerStack::output_width(std::size_t input) const {
    std::size_t w = input;
    for (const auto& l : layers) {
        if (const auto* a = std::get_if<AffineDesc>(&l)) w = a->out;
        else if (const auto* f = std::get_if<FeatureNormDesc>(&l)) w = f->dim;
        else if (const auto* b = std::get_if<ResidualBlockDesc>(&l)) w = b->width;
    }
    return w;
}

void LayerStack::validate() const {
    std::size_t w = 0; // 0 = not yet pinned
    int idx = 0;
    for (const auto& l : layers) {
        if (const auto* a = std::get_if<AffineDesc>(&l)) {
            if (a->in == 0 || a->out == 0)
                throw ValidationError("affine layer " + std::to_string(idx) + " has zero width");
            if (w != 0 && w != a->in)
                throw ValidationError("layer " + std::to_string(idx) + " expects width " +
                                      std::to_string(a->in) + " but gets " + std::to_string(w));
            w = a->out;
        } else if (const auto* f = std::get_if<FeatureNormDesc>(&l)) {
            if (w != 0 && w != f->dim)
                throw ValidationError("feature norm at layer " + std::to_string(idx) +
                                      " width mismatch");
            w = f->dim;
        } else if (const auto* b = std::get_if<ResidualBlockDesc>(&l)) {
            if (b->survival_prob <= 0.0 || b->survival_prob > 1.0)
                throw ValidationError("residual block survival_prob must be in (0, 1]");
            if (w != 0 && w != b->width)
                throw ValidationError("residual block at layer " + std::to_string(idx) +
                                      " width mismatch");
            w = b->width;
        }
        ++idx;
    }
}

void init_params(const LayerStack& stack, Rng& rng, std::vector<Param>& out) {
    for (const auto& l : stack.layers) {
        auto init_affine = [&](const AffineDesc& a) {
            Tensor w({a.in, a.out});
            const double std = std::sqrt(2.0 / static_cast<double>(a.in));
            for (double& v : w.values()) v = std * rng.normal();
            out.emplace_back(std::move(w));
            out.emplace_back(Tensor({a.out}));
        };
        auto init_norm = [&](const FeatureNormDesc& f) {
            Tensor gain({f.dim});
            gain.fill(1.0);
            out.emplace_back(std::move(gain));
            out.emplace_back(Tensor({f.dim}));
        };
        if (const auto* a = std::get_if<AffineDesc>(&l)) {
            init_affine(*a);
        } else if (const auto* f = std::get_if<FeatureNormDesc>(&l)) {
            init_norm(*f);
        } else if (const auto* b = std::get_if<ResidualBlockDesc>(&l)) {
            BlockLayout bl = block_layout(*b);
            init_affine(bl.a1);
            init_norm(bl.fn);
            init_affine(bl.a2);
        }
    }
}

namespace {

void check_width(std::size_t got, std::size_t want, int layer_idx) {
    if (want != 0 && got != want)
        throw DimensionError("layer " + std::to_string(layer_idx) + " expects input width " +
                                 std::to_string(want) + ", got " + std::to_string(got),
                             layer_idx);
}

Tensor affine_forward(const AffineDesc& a, const Param& w, const Param& b, const Tensor& x,
                      int layer_idx) {
    check_width(x.cols(), a.in, layer_idx);
    Tensor y({x.rows(), a.out});
    matmul(x, w.value, y);
    for (std::size_t r = 0; r < y.rows(); ++r) {
        double* yr = y.row(r);
        const double* bv = b.value.data();
        for (std::size_t c = 0; c < a.out; ++c) yr[c] += bv[c];
    }
    return y;
}

// dX = dY W^T; dW += X^T dY; db += column sums of dY.
Tensor affine_backward(const Param& w, Param& wp, Param& bp, const Tensor& x, const Tensor& dy) {
    Tensor dx({x.rows(), x.cols()});
    matmul_transposed(dy, w.value, dx);
    Tensor dw({x.cols(), dy.cols()});
    matmul_left_transposed(x, dy, dw);
    for (std::size_t i = 0; i < dw.size(); ++i) wp.grad[i] += dw[i];
    for (std::size_t r = 0; r < dy.rows(); ++r) {
        const double* dyr = dy.row(r);
        for (std::size_t c = 0; c < dy.cols(); ++c) bp.grad[c] += dyr[c];
    }
    return dx;
}

Tensor relu_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.values())
        if (v < 0.0) v = 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] <= 0.0) dx[i] = 0.0;
    return dx;
}

// Per-row normalization: xhat = (x - mean) / sqrt(var + eps), y = g*xhat + b.
// Saves xhat and the reciprocal stddev for backward.
Tensor norm_forward(const FeatureNormDesc& f, const Param& gain, const Param& bias,
                    const Tensor& x, int layer_idx, Tensor* save_xhat, Tensor* save_istd) {
    check_width(x.cols(), f.dim, layer_idx);
    const std::size_t n = x.rows(), d = x.cols();
    Tensor y({n, d});
    Tensor xhat({n, d});
    Tensor istd({n});
    for (std::size_t r = 0; r < n; ++r) {
        const double* xr = x.row(r);
        double mean = 0.0;
        for (std::size_t c = 0; c < d; ++c) mean += xr[c];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double dv = xr[c] - mean;
            var += dv * dv;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + FeatureNormDesc::kEpsilon);
        istd[r] = is;
        double* hr = xhat.row(r);
        double* yr = y.row(r);
        for (std::size_t c = 0; c < d; ++c) {
            hr[c] = (xr[c] - mean) * is;
            yr[c] = gain.value[c] * hr[c] + bias.value[c];
        }
    }
    if (save_xhat) *save_xhat = std::move(xhat);
    if (save_istd) *save_istd = std::move(istd);
    return y;
}

Tensor norm_backward(const Param& gain, Param& gp, Param& bp, const Tensor& xhat,
                     const Tensor& istd, const Tensor& dy) {
    const std::size_t n = dy.rows(), d = dy.cols();
    Tensor dx({n, d});
    for (std::size_t r = 0; r < n; ++r) {
        const double* dyr = dy.row(r);
        const double* hr = xhat.row(r);
        double* dxr = dx.row(r);
        double sum_dh = 0.0, sum_dh_h = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double dh = dyr[c] * gain.value[c];
            sum_dh += dh;
            sum_dh_h += dh * hr[c];
            dxr[c] = dh;
            gp.grad[c] += dyr[c] * hr[c];
            bp.grad[c] += dyr[c];
        }
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t c = 0; c < d; ++c)
            dxr[c] = (dxr[c] - sum_dh * inv_d - hr[c] * sum_dh_h * inv_d) * istd[r];
    }
    return dx;
}

} // namespace

Tensor forward(const LayerStack& stack, std::span<const Param> params, const Tensor& input,
               Mode mode, Rng* rng, ForwardTrace* trace) {
    if (mode == Mode::kTrain && rng == nullptr)
        throw ValidationError("train-mode forward requires an rng");
    if (params.size() != stack.param_count())
        throw ValidationError("forward: stack expects " + std::to_string(stack.param_count()) +
                              " params, got " + std::to_string(params.size()));

    Tensor x = input;
    std::size_t pi = 0;
    int layer_idx = 0;
    auto save = [&](Tensor t) {
        if (trace) trace->saved.push_back(std::move(t));
    };

    for (const auto& l : stack.layers) {
        if (const auto* a = std::get_if<AffineDesc>(&l)) {
            save(x);
            Tensor y = affine_forward(*a, params[pi], params[pi + 1], x, layer_idx);
            pi += 2;
            x = std::move(y);
        } else if (std::holds_alternative<NonlinearityDesc>(l)) {
            save(x);
            x = relu_forward(x);
        } else if (const auto* f = std::get_if<FeatureNormDesc>(&l)) {
            Tensor xhat, istd;
            Tensor y = norm_forward(*f, params[pi], params[pi + 1], x, layer_idx,
                                    trace ? &xhat : nullptr, trace ? &istd : nullptr);
            if (trace) {
                save(std::move(xhat));
                save(std::move(istd));
            }
            pi += 2;
            x = std::move(y);
        } else if (const auto* b = std::get_if<ResidualBlockDesc>(&l)) {
            check_width(x.cols(), b->width, layer_idx);
            bool keep = true;
            double scale = 1.0;
            if (mode == Mode::kTrain) {
                keep = rng->uniform() < b->survival_prob;
            } else {
                scale = b->survival_prob;
            }
            if (trace) trace->block_scale.push_back(keep ? scale : 0.0);
            if (mode == Mode::kTrain && !keep) {
                // branch dropped for this batch; params of the branch are
                // skipped, nothing saved beyond the decision
                pi += 6;
                ++layer_idx;
                continue;
            }
            BlockLayout bl = block_layout(*b);
            save(x);
            Tensor h1 = affine_forward(bl.a1, params[pi], params[pi + 1], x, layer_idx);
            Tensor xhat, istd;
            Tensor h2 = norm_forward(bl.fn, params[pi + 2], params[pi + 3], h1, layer_idx,
                                     trace ? &xhat : nullptr, trace ? &istd : nullptr);
            if (trace) {
                save(std::move(xhat));
                save(std::move(istd));
                save(h2);
            }
            Tensor h3 = relu_forward(h2);
            if (trace) save(h3);
            Tensor g = affine_forward(bl.a2, params[pi + 4], params[pi + 5], h3, layer_idx);
            pi += 6;
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += scale * g[i];
        }
        ++layer_idx;
    }
    return x;
}

Tensor backward(const LayerStack& stack, std::span<Param> params, const ForwardTrace& trace,
                const Tensor& grad_output) {
    if (params.size() != stack.param_count())
        throw ValidationError("backward: param count mismatch");

    // Walk layers in reverse, consuming saved tensors from the back.
    Tensor dy = grad_output;
    std::size_t si = trace.saved.size();
    std::size_t bi = trace.block_scale.size();
    std::size_t pi = params.size();
    auto take = [&]() -> const Tensor& { return trace.saved[--si]; };

    for (auto it = stack.layers.rbegin(); it != stack.layers.rend(); ++it) {
        const auto& l = *it;
        if (std::holds_alternative<AffineDesc>(l)) {
            pi -= 2;
            const Tensor& x = take();
            dy = affine_backward(params[pi], params[pi], params[pi + 1], x, dy);
        } else if (std::holds_alternative<NonlinearityDesc>(l)) {
            const Tensor& x = take();
            dy = relu_backward(x, dy);
        } else if (std::holds_alternative<FeatureNormDesc>(l)) {
            pi -= 2;
            const Tensor& istd = take();
            const Tensor& xhat = take();
            dy = norm_backward(params[pi], params[pi], params[pi + 1], xhat, istd, dy);
        } else if (std::holds_alternative<ResidualBlockDesc>(l)) {
            pi -= 6;
            const double scale = trace.block_scale.at(--bi);
            if (scale == 0.0) continue; // dropped branch: dy passes through unchanged
            // y = x + scale * g(x): branch gradient is scale * dy, skip path
            // adds dy at the end.
            const Tensor& h3 = take();
            const Tensor& h2 = take();
            const Tensor& istd = take();
            const Tensor& xhat = take();
            const Tensor& x = take();
            Tensor dg = dy;
            if (scale != 1.0)
                for (double& v : dg.values()) v *= scale;
            Tensor d3 = affine_backward(params[pi + 4], params[pi + 4], params[pi + 5], h3, dg);
            Tensor d2 = relu_backward(h2, d3);
            Tensor d1 = norm_backward(params[pi + 2], params[pi + 2], params[pi + 3], xhat, istd, d2);
            Tensor dinput = affine_backward(params[pi], params[pi], params[pi + 1], x, d1);
            for (std::size_t i = 0; i < dy.size(); ++i) dy[i] += dinput[i];
        }
    }
    return dy;
}

Tensor softmax(const Tensor& logits) {
    const std::size_t n = logits.rows(), c = logits.cols();
    Tensor p({n, c});
    for (std::size_t r = 0; r < n; ++r) {
        const double* zr = logits.row(r);
        double* pr = p.row(r);
        double mx = zr[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, zr[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            pr[j] = std::exp(zr[j] - mx);
            sum += pr[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < c; ++j) pr[j] *= inv;
    }
    return p;
}

double cross_entropy_loss(const Tensor& logits, std::span<const std::int32_t> labels,
                          Tensor* grad_logits) {
    const std::size_t n = logits.rows(), c = logits.cols();
    if (labels.size() != n)
        throw ValidationError("cross_entropy_loss: " + std::to_string(labels.size()) +
                              " labels for " + std::to_string(n) + " rows");
    for (std::size_t r = 0; r < n; ++r)
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= c)
            throw ValidationError("label " + std::to_string(labels[r]) + " out of range [0, " +
                                  std::to_string(c) + ") at row " + std::to_string(r));

    // loss_r = logsumexp(z_r) - z_r[y_r], averaged over rows.
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    if (grad_logits) *grad_logits = Tensor({n, c});
    for (std::size_t r = 0; r < n; ++r) {
        const double* zr = logits.row(r);
        double mx = zr[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, zr[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(zr[j] - mx);
        const double lse = mx + std::log(sum);
        total += lse - zr[labels[r]];
        if (grad_logits) {
            double* gr = grad_logits->row(r);
            const double inv_sum = 1.0 / sum;
            for (std::size_t j = 0; j < c; ++j)
                gr[j] = std::exp(zr[j] - mx) * inv_sum * inv_n;
            gr[labels[r]] -= inv_n;
        }
    }
    return total * inv_n;
}

} // namespace dendron

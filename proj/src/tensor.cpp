#include "dendron/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace dendron {

static std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw ValidationError("tensor shape has a zero dimension");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_product(shape_))
        throw ValidationError("tensor data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_str());
}

std::size_t Tensor::rows() const {
    if (shape_.size() == 1) return 1;
    if (shape_.size() == 2) return shape_[0];
    throw DimensionError("matrix view requires rank <= 2, got shape " + shape_str());
}

std::size_t Tensor::cols() const {
    if (shape_.size() == 1) return shape_[0];
    if (shape_.size() == 2) return shape_[1];
    throw DimensionError("matrix view requires rank <= 2, got shape " + shape_str());
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i)
        os << (i ? ", " : "") << shape_[i];
    os << "]";
    return os.str();
}

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k)
        throw DimensionError("matmul: " + a.shape_str() + " x " + b.shape_str());
    if (out.rows() != n || out.cols() != m)
        throw DimensionError("matmul: bad output shape " + out.shape_str());
    out.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b.row(p);
            for (std::size_t j = 0; j < m; ++j) oi[j] += av * bp[j];
        }
    }
}

void matmul_transposed(const Tensor& a, const Tensor& b, Tensor& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    if (b.cols() != k)
        throw DimensionError("matmul_transposed: " + a.shape_str() + " x " + b.shape_str() + "^T");
    if (out.rows() != n || out.cols() != m)
        throw DimensionError("matmul_transposed: bad output shape " + out.shape_str());
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = b.row(j);
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            oi[j] = acc;
        }
    }
}

void matmul_left_transposed(const Tensor& a, const Tensor& b, Tensor& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != n)
        throw DimensionError("matmul_left_transposed: " + a.shape_str() + "^T x " + b.shape_str());
    if (out.rows() != k || out.cols() != m)
        throw DimensionError("matmul_left_transposed: bad output shape " + out.shape_str());
    out.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.row(i);
        const double* bi = b.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            double* op = out.row(p);
            for (std::size_t j = 0; j < m; ++j) op[j] += av * bi[j];
        }
    }
}

double Rng::normal() {
    // Box-Muller, cosine branch only; consumes two uniforms every call so
    // the draw sequence stays aligned across uses.
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform(); // uniform() can return exactly 0
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) throw ValidationError("uniform_index: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return static_cast<std::size_t>(v % n);
}

Rng Rng::fork(std::uint64_t tag) const {
    return Rng(splitmix64(seed_ ^ splitmix64(tag + 0x9E3779B97F4A7C15ULL)));
}

void Rng::shuffle(std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_index(i);
        std::swap(v[i - 1], v[j]);
    }
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace dendron

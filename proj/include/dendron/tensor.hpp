#ifndef DENDRON_TENSOR_HPP
#define DENDRON_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dendron/errors.hpp"

namespace dendron {

// Dense row-major array of 64-bit floats. Rank is usually 1 or 2; the
// matrix helpers below treat shape [N, D] as N rows of D features.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor matrix(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }

    // Matrix view accessors; valid for rank-2 tensors (rank-1 counts as a
    // single row).
    std::size_t rows() const;
    std::size_t cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols(); }
    const double* row(std::size_t r) const { return data_.data() + r * cols(); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(double v);

    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// out = a [N x K] * b [K x M]; shapes checked.
void matmul(const Tensor& a, const Tensor& b, Tensor& out);
// out = a [N x K] * b^T where b is [M x K].
void matmul_transposed(const Tensor& a, const Tensor& b, Tensor& out);
// out = a^T [K x N] * b [N x M]  (used for weight gradients).
void matmul_left_transposed(const Tensor& a, const Tensor& b, Tensor& out);

// Deterministic random source. All randomness in the library flows through
// this type so that a seed plus a call sequence fully determines a run.
// Transforms (normal, index) are implemented by hand on top of the engine
// so draws do not depend on the standard library's distribution objects.
class Rng {
public:
    static constexpr const char* kAlgorithm = "mt19937_64/boxmuller-v1";

    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; draws exactly two uniforms per call.
    double normal();

    // Uniform integer in [0, n); rejection sampling, no modulo bias.
    std::size_t uniform_index(std::size_t n);

    // Independent substream derived from the original seed and a tag.
    // Forking with the same tag always yields the same stream regardless of
    // how much this instance has been consumed.
    Rng fork(std::uint64_t tag) const;

    // Fisher-Yates shuffle of an index vector.
    void shuffle(std::vector<std::size_t>& v);

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

std::uint64_t splitmix64(std::uint64_t x);

} // namespace dendron

#endif

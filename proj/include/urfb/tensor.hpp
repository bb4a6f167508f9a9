#pragma once

// Dense row-major double tensors plus the deterministic RNG used everywhere.
// All shape-changing operations validate their inputs and throw
// std::invalid_argument on mismatch; results of public operations are
// required to be finite (NaN/Inf -> std::runtime_error via check_finite).

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace urfb {

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::size_t> shape, double v);
    // 2-d convenience for tests: rows of equal length
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // unchecked 2-d access (hot paths); shape_[1] must be the row stride
    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    // bounds-checked element access
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    Tensor reshaped(std::vector<std::size_t> new_shape) const;  // element count must match

    void fill(double v);
    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// --- deterministic RNG -------------------------------------------------------
// Counter-based 64-bit generator (splitmix64). The constants below are the
// published ones, so any language can reproduce the stream exactly:
//   state += 0x9E3779B97F4A7C15
//   z = state; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
// uniform() maps the top 53 bits to [0,1); normal() is Box-Muller and consumes
// exactly two uniforms per call, so stream positions are easy to audit.
struct Rng {
    std::uint64_t state = 0;

    explicit Rng(std::uint64_t seed) : state(seed) {}

    std::uint64_t next_u64();
    double uniform();                      // [0, 1)
    double uniform(double a, double b);    // [a, b)
    double normal();                       // N(0, 1)
    double normal(double mean, double sd);

    // independent child stream: mixes the label through the same finalizer
    Rng fork(std::uint64_t label) const;

    // Fisher-Yates using next_u64() % (i+1); deterministic for a given state
    void shuffle(std::vector<int>& v);
};

// --- linear algebra ----------------------------------------------------------
// out = op(A) * op(B) [+ out if accumulate]; 2-d tensors only.
Tensor matmul(const Tensor& a, const Tensor& b);
void gemm_nn(Tensor& out, const Tensor& a, const Tensor& b, bool accumulate = false);
void gemm_nt(Tensor& out, const Tensor& a, const Tensor& b, bool accumulate = false);  // a * b^T
void gemm_tn(Tensor& out, const Tensor& a, const Tensor& b, bool accumulate = false);  // a^T * b
Tensor transpose(const Tensor& a);

// raw-pointer variants for batched per-sample slices (row-major, unchecked)
void gemm_nn_raw(double* C, const double* A, const double* B, int m, int k, int n,
                 bool accumulate);  // C[m,n] = A[m,k] * B[k,n]
void gemm_nt_raw(double* C, const double* A, const double* B, int m, int k, int n,
                 bool accumulate);  // C[m,n] = A[m,k] * B[n,k]^T
void gemm_tn_raw(double* C, const double* A, const double* B, int m, int k, int n,
                 bool accumulate);  // C[m,n] = A[k,m]^T * B[k,n]

// --- elementwise -------------------------------------------------------------
double saturate(double h);          // clamp to [-1, 1]
Tensor saturate(const Tensor& h);
double gate_open(double h);         // 1.0 iff |h| < 1 (strict), else 0.0
Tensor gate_mask(const Tensor& h);
Tensor hadamard(const Tensor& a, const Tensor& b);
void add_scaled(Tensor& dst, const Tensor& src, double s);  // dst += s * src
double frob2(const Tensor& a);      // sum of squares

// --- statistics --------------------------------------------------------------
// Pearson correlation over all elements; shapes must carry the same element
// count. Throws std::domain_error if either side has zero variance.
double pearson(const Tensor& a, const Tensor& b);
double pearson(const std::vector<double>& a, const std::vector<double>& b);

// --- initialization ----------------------------------------------------------
// Uniform on [-b, b] with b = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out,
                      std::vector<std::size_t> shape);

// throws std::runtime_error naming `what` if any element is NaN/Inf
void check_finite(const Tensor& t, const char* what);

}  // namespace urfb

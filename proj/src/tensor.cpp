#include "urfb/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace urfb {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

ECMap map2d(const Tensor& t, const char* what) {
    if (t.rank() != 2)
        throw std::invalid_argument(std::string(what) + ": expected a 2-d tensor, got shape " +
                                    t.shape_str());
    return ECMap(t.data(), static_cast<Eigen::Index>(t.dim(0)),
                 static_cast<Eigen::Index>(t.dim(1)));
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != shape_product(shape_))
        throw std::invalid_argument("Tensor: " + std::to_string(data_.size()) +
                                    " values do not fill shape " + shape_str());
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t nr = rows.size();
    std::size_t nc = nr ? rows.begin()->size() : 0;
    std::vector<double> vals;
    vals.reserve(nr * nc);
    for (const auto& row : rows) {
        if (row.size() != nc) throw std::invalid_argument("from_rows: ragged rows");
        vals.insert(vals.end(), row.begin(), row.end());
    }
    return Tensor({nr, nc}, std::move(vals));
}

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= shape_.size()) throw std::invalid_argument("Tensor::dim: axis out of range");
    return shape_[i];
}

double& Tensor::at(std::size_t r, std::size_t c) {
    if (rank() != 2 || r >= shape_[0] || c >= shape_[1])
        throw std::invalid_argument("Tensor::at(" + std::to_string(r) + "," + std::to_string(c) +
                                    ") out of range for shape " + shape_str());
    return data_[r * shape_[1] + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return const_cast<Tensor*>(this)->at(r, c);
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
    if (shape_product(new_shape) != size())
        throw std::invalid_argument("reshaped: element count mismatch (" + shape_str() + ")");
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ']';
    return os.str();
}

// --- Rng ---------------------------------------------------------------------

std::uint64_t Rng::next_u64() {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double a, double b) { return a + (b - a) * uniform(); }

double Rng::normal() {
    // Box-Muller; u1 shifted into (0,1] so log() is safe
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::normal(double mean, double sd) { return mean + sd * normal(); }

Rng Rng::fork(std::uint64_t label) const {
    // run the finalizer over (state, label) so child streams are decorrelated
    Rng child(state ^ (0x9E3779B97F4A7C15ULL * (label + 1)));
    child.next_u64();
    return Rng(child.next_u64());
}

void Rng::shuffle(std::vector<int>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(next_u64() % i);
        std::swap(v[i - 1], v[j]);
    }
}

// --- linear algebra ----------------------------------------------------------

namespace {

void gemm_check(const Tensor& out, std::size_t m, std::size_t n, const char* what) {
    if (out.rank() != 2 || out.dim(0) != m || out.dim(1) != n)
        throw std::invalid_argument(std::string(what) + ": output shape " + out.shape_str() +
                                    " does not match " + std::to_string(m) + "x" +
                                    std::to_string(n));
}

}  // namespace

void gemm_nn_raw(double* C, const double* A, const double* B, int m, int k, int n,
                 bool accumulate) {
    ECMap Am(A, m, k), Bm(B, k, n);
    EMap Cm(C, m, n);
    if (accumulate)
        Cm.noalias() += Am * Bm;
    else
        Cm.noalias() = Am * Bm;
}

void gemm_nt_raw(double* C, const double* A, const double* B, int m, int k, int n,
                 bool accumulate) {
    ECMap Am(A, m, k), Bm(B, n, k);
    EMap Cm(C, m, n);
    if (accumulate)
        Cm.noalias() += Am * Bm.transpose();
    else
        Cm.noalias() = Am * Bm.transpose();
}

void gemm_tn_raw(double* C, const double* A, const double* B, int m, int k, int n,
                 bool accumulate) {
    ECMap Am(A, k, m), Bm(B, k, n);
    EMap Cm(C, m, n);
    if (accumulate)
        Cm.noalias() += Am.transpose() * Bm;
    else
        Cm.noalias() = Am.transpose() * Bm;
}

void gemm_nn(Tensor& out, const Tensor& a, const Tensor& b, bool accumulate) {
    map2d(a, "gemm_nn");
    map2d(b, "gemm_nn");
    if (a.dim(1) != b.dim(0))
        throw std::invalid_argument("gemm_nn: inner dimensions disagree, " + a.shape_str() +
                                    " * " + b.shape_str());
    gemm_check(out, a.dim(0), b.dim(1), "gemm_nn");
    gemm_nn_raw(out.data(), a.data(), b.data(), static_cast<int>(a.dim(0)),
                static_cast<int>(a.dim(1)), static_cast<int>(b.dim(1)), accumulate);
}

void gemm_nt(Tensor& out, const Tensor& a, const Tensor& b, bool accumulate) {
    map2d(a, "gemm_nt");
    map2d(b, "gemm_nt");
    if (a.dim(1) != b.dim(1))
        throw std::invalid_argument("gemm_nt: inner dimensions disagree, " + a.shape_str() +
                                    " * " + b.shape_str() + "^T");
    gemm_check(out, a.dim(0), b.dim(0), "gemm_nt");
    gemm_nt_raw(out.data(), a.data(), b.data(), static_cast<int>(a.dim(0)),
                static_cast<int>(a.dim(1)), static_cast<int>(b.dim(0)), accumulate);
}

void gemm_tn(Tensor& out, const Tensor& a, const Tensor& b, bool accumulate) {
    map2d(a, "gemm_tn");
    map2d(b, "gemm_tn");
    if (a.dim(0) != b.dim(0))
        throw std::invalid_argument("gemm_tn: inner dimensions disagree, " + a.shape_str() +
                                    "^T * " + b.shape_str());
    gemm_check(out, a.dim(1), b.dim(1), "gemm_tn");
    gemm_tn_raw(out.data(), a.data(), b.data(), static_cast<int>(a.dim(1)),
                static_cast<int>(a.dim(0)), static_cast<int>(b.dim(1)), accumulate);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul: expected 2-d tensors, got " + a.shape_str() + " and " +
                                    b.shape_str());
    Tensor out({a.dim(0), b.dim(1)});
    gemm_nn(out, a, b);
    check_finite(out, "matmul");
    return out;
}

Tensor transpose(const Tensor& a) {
    auto A = map2d(a, "transpose");
    Tensor out({a.dim(1), a.dim(0)});
    EMap(out.data(), A.cols(), A.rows()) = A.transpose();
    return out;
}

// --- elementwise -------------------------------------------------------------

double saturate(double h) { return h < -1.0 ? -1.0 : (h > 1.0 ? 1.0 : h); }

Tensor saturate(const Tensor& h) {
    Tensor out = h;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = saturate(out[i]);
    return out;
}

double gate_open(double h) { return (h > -1.0 && h < 1.0) ? 1.0 : 0.0; }

Tensor gate_mask(const Tensor& h) {
    Tensor out = h;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = gate_open(out[i]);
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("hadamard: shapes differ, " + a.shape_str() + " vs " +
                                    b.shape_str());
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

void add_scaled(Tensor& dst, const Tensor& src, double s) {
    if (!dst.same_shape(src))
        throw std::invalid_argument("add_scaled: shapes differ, " + dst.shape_str() + " vs " +
                                    src.shape_str());
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

double frob2(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
    return s;
}

// --- statistics --------------------------------------------------------------

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("pearson: need two equally sized nonempty samples");
    const double n = static_cast<double>(a.size());
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw std::domain_error("pearson: zero variance sample");
    return sab / std::sqrt(saa * sbb);
}

double pearson(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("pearson: element counts differ, " + a.shape_str() + " vs " +
                                    b.shape_str());
    std::vector<double> va(a.data(), a.data() + a.size());
    std::vector<double> vb(b.data(), b.data() + b.size());
    return pearson(va, vb);
}

// --- initialization ----------------------------------------------------------

Tensor glorot_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out,
                      std::vector<std::size_t> shape) {
    if (fan_in + fan_out == 0)
        throw std::invalid_argument("glorot_uniform: fan_in + fan_out must be positive");
    double b = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-b, b);
    return t;
}

void check_finite(const Tensor& t, const char* what) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t[i]))
            throw std::runtime_error(std::string(what) +
                                     ": non-finite value at flat index " + std::to_string(i));
}

}  // namespace urfb

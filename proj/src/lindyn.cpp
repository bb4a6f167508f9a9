#include "urfb/lindyn.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

namespace urfb::lindyn {

namespace {

// pearson over flat arrays that reports NaN instead of throwing on a
// degenerate side (the zero-initialized weights at iteration 0)
double safe_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

void check_system(const MatrixSystem& s) {
    if (s.k < 1) throw std::invalid_argument("lindyn: system has no layers");
    if (s.dims.size() != static_cast<std::size_t>(s.k) + 1 ||
        s.W.size() != static_cast<std::size_t>(s.k) || s.R0.size() != static_cast<std::size_t>(s.k))
        throw std::invalid_argument("lindyn: dims/W/R0 sizes disagree with k");
}

Tensor gaussian(Rng& rng, std::size_t rows, std::size_t cols, double sd) {
    Tensor t({rows, cols});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, sd);
    return t;
}

}  // namespace

// --- matrix system ----------------------------------------------------------------

Tensor chain_product(const std::vector<Tensor>& W) {
    if (W.empty()) throw std::invalid_argument("chain_product: empty chain");
    Tensor p = W[0];
    for (std::size_t i = 1; i < W.size(); ++i) {
        Tensor next({W[i].dim(0), p.dim(1)});
        gemm_nn(next, W[i], p);
        p = std::move(next);
    }
    return p;
}

Tensor error_matrix(const MatrixSystem& s) {
    check_system(s);
    Tensor E = s.T;
    Tensor prod = chain_product(s.W);
    add_scaled(E, prod, -1.0);
    return E;
}

double error_sq(const MatrixSystem& s) { return frob2(error_matrix(s)); }

void euler_step(MatrixSystem& s, double dt) {
    check_system(s);
    const int k = s.k;
    const Tensor E = error_matrix(s);

    // effective feedback of layer j (1-based, j >= 2): R_j(0) + eps W_j^t
    auto feedback_of = [&s](int j) {
        Tensor f = s.R0[j - 1];
        Tensor wt = transpose(s.W[j - 1]);
        add_scaled(f, wt, s.eps);
        return f;
    };

    // BE[i-1] = B_i * E with B_i the suffix chain of effective feedbacks
    std::vector<Tensor> BE(k);
    BE[k - 1] = E;
    Tensor B;
    bool have_b = false;
    for (int i = k - 1; i >= 1; --i) {
        Tensor f = feedback_of(i + 1);
        if (!have_b) {
            B = std::move(f);
            have_b = true;
        } else {
            Tensor nb({f.dim(0), B.dim(1)});
            gemm_nn(nb, f, B);
            B = std::move(nb);
        }
        Tensor m({B.dim(0), E.dim(1)});
        gemm_nn(m, B, E);
        BE[i - 1] = std::move(m);
    }

    // dW_i = BE_i * A_i with A_i = W_1^t ... W_{i-1}^t built left to right;
    // all derivatives are taken at the current state before any is applied
    std::vector<Tensor> dW(k);
    dW[0] = std::move(BE[0]);
    Tensor A;
    bool have_a = false;
    for (int i = 2; i <= k; ++i) {
        if (!have_a) {
            A = transpose(s.W[0]);
            have_a = true;
        } else {
            Tensor na({A.dim(0), s.W[i - 2].dim(0)});
            gemm_nt(na, A, s.W[i - 2]);
            A = std::move(na);
        }
        Tensor d({BE[i - 1].dim(0), A.dim(1)});
        gemm_nn(d, BE[i - 1], A);
        dW[i - 1] = std::move(d);
    }

    for (int i = 0; i < k; ++i) {
        add_scaled(s.W[i], dW[i], dt);
        for (std::size_t e = 0; e < s.W[i].size(); ++e)
            if (!std::isfinite(s.W[i][e]))
                throw std::runtime_error("lindyn: Euler step diverged; reduce dt");
    }
}

std::vector<double> layer_correlations(const MatrixSystem& s) {
    check_system(s);
    std::vector<double> corr(s.k);
    for (int i = 0; i < s.k; ++i) {
        // R_i(t)^t = R_i(0)^t + eps W_i(t), compared entrywise with W_i
        Tensor rt = transpose(s.R0[i]);
        add_scaled(rt, s.W[i], s.eps);
        std::vector<double> a(s.W[i].data(), s.W[i].data() + s.W[i].size());
        std::vector<double> b(rt.data(), rt.data() + rt.size());
        corr[i] = safe_pearson(a, b);
    }
    return corr;
}

MatrixTrace run_matrix(MatrixSystem& s, double dt, int max_iters, double tol_frac,
                       int record_every, bool stop_at_passage) {
    check_system(s);
    if (record_every < 1) throw std::invalid_argument("run_matrix: record_every must be >= 1");
    MatrixTrace tr;
    tr.err2_0 = error_sq(s);
    const double target = tol_frac * tr.err2_0;
    auto record = [&tr, &s](int iter, double e2) {
        tr.iters.push_back(iter);
        tr.err2.push_back(e2);
        tr.corr.push_back(layer_correlations(s));
    };
    record(0, tr.err2_0);
    int iter = 0;
    while (iter < max_iters) {
        euler_step(s, dt);
        ++iter;
        const double e2 = error_sq(s);
        // squared-norm guard: ||E|| growing 10x over its start means Euler
        // has gone unstable
        if (e2 > 100.0 * tr.err2_0 || !std::isfinite(e2))
            throw std::runtime_error("lindyn: error grew 10x over its initial norm; reduce dt");
        const bool passed = tr.first_passage < 0 && e2 <= target;
        if (passed) tr.first_passage = iter;
        const bool last = iter == max_iters || (passed && stop_at_passage);
        if (iter % record_every == 0 || last) record(iter, e2);
        if (passed && stop_at_passage) break;
    }
    tr.total_iters = iter;
    return tr;
}

MatrixSystem make_replication_system(Rng& rng, double eps, int k) {
    if (k != 2 && k != 3)
        throw std::invalid_argument("make_replication_system: k must be 2 or 3");
    MatrixSystem s;
    s.k = k;
    s.dims = k == 3 ? std::vector<int>{40, 100, 100, 10} : std::vector<int>{40, 100, 10};
    s.eps = eps;
    // target realizable by the chain: product of k sd-0.2 draws
    std::vector<Tensor> stars;
    for (int i = 0; i < k; ++i)
        stars.push_back(gaussian(rng, static_cast<std::size_t>(s.dims[i + 1]),
                                 static_cast<std::size_t>(s.dims[i]), 0.2));
    s.T = chain_product(stars);
    for (int i = 0; i < s.k; ++i) {
        const auto ni = static_cast<std::size_t>(s.dims[i]);
        const auto no = static_cast<std::size_t>(s.dims[i + 1]);
        s.W.push_back(Tensor::zeros({no, ni}));
        s.R0.push_back(gaussian(rng, ni, no, 0.2));
    }
    return s;
}

MatrixSystem bp_variant(const MatrixSystem& base, Rng& rng) {
    MatrixSystem s = base;
    s.eps = 1.0;
    for (int i = 0; i < s.k; ++i) {
        const auto ni = static_cast<std::size_t>(s.dims[i]);
        const auto no = static_cast<std::size_t>(s.dims[i + 1]);
        s.W[i] = gaussian(rng, no, ni, 0.2);
        s.R0[i] = Tensor::zeros({ni, no});
    }
    return s;
}

std::vector<ReplicationRun> replicate_sim(const ReplicationConfig& cfg) {
    Rng rng(cfg.seed);
    MatrixSystem base = make_replication_system(rng, 0.0, cfg.k);
    std::vector<ReplicationRun> runs;
    if (cfg.include_bp) {
        ReplicationRun r;
        r.name = "bp";
        r.eps = 1.0;
        MatrixSystem s = bp_variant(base, rng);
        r.trace = run_matrix(s, cfg.dt, cfg.iters, cfg.tol_frac, cfg.record_every,
                             /*stop_at_passage=*/false);
        runs.push_back(std::move(r));
    }
    for (double eps : cfg.eps_list) {
        ReplicationRun r;
        r.eps = eps;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "eps=%g", eps);
        r.name = buf;
        MatrixSystem s = base;
        s.eps = eps;
        r.trace = run_matrix(s, cfg.dt, cfg.iters, cfg.tol_frac, cfg.record_every,
                             /*stop_at_passage=*/false);
        runs.push_back(std::move(r));
    }
    return runs;
}

// --- scalar system ----------------------------------------------------------------

double scalar_error(const ScalarSystem& s) {
    double p = 1.0;
    for (double l : s.lambda) p *= l;
    return s.lambda_T - p;
}

std::vector<double> scalar_derivs(const ScalarSystem& s) {
    const int k = s.k;
    if (static_cast<int>(s.lambda.size()) != k || static_cast<int>(s.lambda_R.size()) != k)
        throw std::invalid_argument("scalar_derivs: state sizes disagree with k");
    const double e = scalar_error(s);
    // suffix[i] = prod_{j>i+1, 1-based} (l_Rj + eps l_j); prefix[i] = prod_{j<i+1} l_j
    std::vector<double> d(k);
    double suffix = 1.0;
    std::vector<double> suf(k);
    for (int i = k - 1; i >= 0; --i) {
        suf[i] = suffix;
        suffix *= s.lambda_R[i] + s.eps * s.lambda[i];
    }
    double prefix = 1.0;
    for (int i = 0; i < k; ++i) {
        d[i] = suf[i] * e * prefix;
        prefix *= s.lambda[i];
    }
    return d;
}

void scalar_euler_step(ScalarSystem& s, double dt) {
    const std::vector<double> d = scalar_derivs(s);
    for (int i = 0; i < s.k; ++i) {
        s.lambda[i] += dt * d[i];
        if (!std::isfinite(s.lambda[i]))
            throw std::runtime_error("lindyn: scalar Euler step diverged; reduce dt");
    }
}

std::vector<double> conserved_residual(const ScalarSystem& s) {
    std::vector<double> q;
    q.reserve(s.k > 0 ? s.k - 1 : 0);
    for (int i = 1; i < s.k; ++i) {
        const double li = s.lambda[i], lp = s.lambda[i - 1];
        q.push_back(s.lambda_R[i] * li + 0.5 * s.eps * li * li - 0.5 * lp * lp);
    }
    return q;
}

double max_relative_residual(const ScalarSystem& s, double tiny) {
    double worst = 0.0;
    const std::vector<double> q = conserved_residual(s);
    for (int i = 1; i < s.k; ++i) {
        const double scale = 0.5 * s.lambda[i - 1] * s.lambda[i - 1] + tiny;
        worst = std::max(worst, std::abs(q[i - 1]) / scale);
    }
    return worst;
}

ScalarTrace run_scalar(ScalarSystem& s, double dt, int max_iters, double tol_frac,
                       bool stop_at_passage, double resid_floor) {
    ScalarTrace tr;
    const double e0 = scalar_error(s);
    tr.e2_0 = e0 * e0;
    const double target = tol_frac * tr.e2_0;
    int iter = 0;
    while (iter < max_iters) {
        scalar_euler_step(s, dt);
        ++iter;
        tr.max_rel_residual = std::max(tr.max_rel_residual, max_relative_residual(s, resid_floor));
        const double e = scalar_error(s);
        if (tr.first_passage < 0 && e * e <= target) {
            tr.first_passage = iter;
            if (stop_at_passage) break;
        }
    }
    const double ef = scalar_error(s);
    tr.e2_final = ef * ef;
    tr.total_iters = iter;
    return tr;
}

RateReport rate_monotonicity(const ScalarSystem& base, const std::vector<double>& eps_list,
                             double dt, int max_iters, double tol_frac) {
    RateReport rep;
    rep.eps = eps_list;
    for (double eps : eps_list) {
        ScalarSystem s = base;
        s.eps = eps;
        const ScalarTrace tr = run_scalar(s, dt, max_iters, tol_frac);
        rep.first_passage.push_back(tr.first_passage);
    }
    // -1 (never reached) compares as slower than any finite passage
    auto ordinal = [](int fp) { return fp < 0 ? std::numeric_limits<int>::max() : fp; };
    rep.never_slower = true;
    rep.strictly_faster = true;
    for (std::size_t i = 1; i < rep.first_passage.size(); ++i) {
        const int prev = ordinal(rep.first_passage[i - 1]);
        const int cur = ordinal(rep.first_passage[i]);
        if (cur > prev) rep.never_slower = false;
        if (cur >= prev) rep.strictly_faster = false;
    }
    return rep;
}

// --- SVD-aligned initialization -----------------------------------------------------

Tensor orthonormal_columns(Rng& rng, int rows, int cols) {
    if (rows < cols || cols < 1)
        throw std::invalid_argument("orthonormal_columns: need rows >= cols >= 1");
    Tensor m = gaussian(rng, static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), 1.0);
    // modified Gram-Schmidt down the columns
    for (int c = 0; c < cols; ++c) {
        for (int p = 0; p < c; ++p) {
            double dot = 0.0;
            for (int r = 0; r < rows; ++r) dot += m(r, c) * m(r, p);
            for (int r = 0; r < rows; ++r) m(r, c) -= dot * m(r, p);
        }
        double nrm = 0.0;
        for (int r = 0; r < rows; ++r) nrm += m(r, c) * m(r, c);
        nrm = std::sqrt(nrm);
        if (nrm < 1e-10)
            throw std::runtime_error("orthonormal_columns: degenerate draw, try another seed");
        for (int r = 0; r < rows; ++r) m(r, c) /= nrm;
    }
    return m;
}

AlignedSystem svd_aligned_init(Rng& rng, const std::vector<int>& dims, double eps) {
    if (dims.size() < 2) throw std::invalid_argument("svd_aligned_init: need at least one layer");
    const int k = static_cast<int>(dims.size()) - 1;
    const int nk = dims[k];
    for (int d : dims)
        if (d < nk)
            throw std::invalid_argument("svd_aligned_init: output dimension must be the smallest");

    AlignedSystem a;
    a.sys.k = k;
    a.sys.dims = dims;
    a.sys.eps = eps;

    // basis[i] = U_{i+1}: [n_i, n_k]; basis[0] plays V, basis[k] plays U
    for (int i = 0; i <= k; ++i)
        a.basis.push_back(orthonormal_columns(rng, dims[i], nk));

    a.lam_T.resize(nk);
    for (int d = 0; d < nk; ++d) a.lam_T[d] = rng.uniform(0.5, 1.0);
    for (int i = 0; i < k; ++i) {
        std::vector<double> lr(nk);
        for (int d = 0; d < nk; ++d) lr[d] = rng.uniform(0.01, 0.05);
        a.lam_R.push_back(std::move(lr));
    }

    auto sandwich = [nk](const Tensor& left, const std::vector<double>& diag,
                         const Tensor& right) {
        // left [rows, nk] * diag * right^t [nk, cols]
        Tensor scaled = left;
        for (std::size_t r = 0; r < scaled.dim(0); ++r)
            for (int d = 0; d < nk; ++d) scaled(r, static_cast<std::size_t>(d)) *= diag[d];
        Tensor out({scaled.dim(0), right.dim(0)});
        gemm_nt(out, scaled, right);
        return out;
    };

    a.sys.T = sandwich(a.basis[k], a.lam_T, a.basis[0]);
    for (int i = 0; i < k; ++i) {
        const auto ni = static_cast<std::size_t>(dims[i]);
        const auto no = static_cast<std::size_t>(dims[i + 1]);
        a.sys.W.push_back(Tensor::zeros({no, ni}));
        // R_{i+1}(0) = U_{i+1} Lambda_{R,i+1} U_{i+2}^t: [n_i, n_{i+1}]
        a.sys.R0.push_back(sandwich(a.basis[i], a.lam_R[i], a.basis[i + 1]));
    }
    return a;
}

std::vector<ScalarSystem> scalar_systems_of(const AlignedSystem& a) {
    const int nk = a.sys.dims[a.sys.k];
    std::vector<ScalarSystem> out;
    out.reserve(nk);
    for (int d = 0; d < nk; ++d) {
        ScalarSystem s;
        s.k = a.sys.k;
        s.eps = a.sys.eps;
        s.lambda_T = a.lam_T[d];
        s.lambda.assign(a.sys.k, 0.0);
        s.lambda_R.resize(a.sys.k);
        for (int i = 0; i < a.sys.k; ++i) s.lambda_R[i] = a.lam_R[i][d];
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Tensor> reconstruct_weights(const AlignedSystem& a,
                                        const std::vector<ScalarSystem>& scalars) {
    const int k = a.sys.k;
    const int nk = a.sys.dims[k];
    if (static_cast<int>(scalars.size()) != nk)
        throw std::invalid_argument("reconstruct_weights: need one scalar system per direction");
    std::vector<Tensor> W;
    W.reserve(k);
    for (int i = 0; i < k; ++i) {
        Tensor scaled = a.basis[i + 1];  // [n_{i+1}, nk]
        for (std::size_t r = 0; r < scaled.dim(0); ++r)
            for (int d = 0; d < nk; ++d)
                scaled(r, static_cast<std::size_t>(d)) *= scalars[d].lambda[i];
        Tensor w({scaled.dim(0), a.basis[i].dim(0)});
        gemm_nt(w, scaled, a.basis[i]);
        W.push_back(std::move(w));
    }
    return W;
}

}  // namespace urfb::lindyn

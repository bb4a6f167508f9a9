#pragma once

// Continuous-time dynamics of deep linear chains trained with asymmetric
// feedback, integrated with synchronous forward Euler.
//
// State: W_i in R^{n_i x n_{i-1}}, i = 1..k, target T in R^{n_k x n_0},
// error E = T - W_k ... W_1. With feedback matrices R_i(t) = R_i(0) + eps
// W_i(t)^t (the feedback weights receive eps times the transposed forward
// increment), the weight flow is
//
//   dW_i/dt = (R_{i+1}(0) + eps W_{i+1}^t) ... (R_k(0) + eps W_k^t)
//             * E * W_1^t ... W_{i-1}^t
//
// eps = 0 keeps the feedback frozen, eps = 1 is the fully updated rule, and
// R(0) = 0 with eps = 1 makes the flow exactly gradient descent.
//
// When T = U Lambda_T V^t and every matrix is expressed in a fixed chain of
// orthonormal-column bases (W_i = U_{i+1} Lambda_i U_i^t with U_1 = V,
// U_{k+1} = U, R_i(0) = U_i Lambda_{R,i} U_{i+1}^t, all Lambda diagonal),
// the matrix flow decouples into n_k independent scalar systems
//
//   dl_i/dt = (l_{R,k} + eps l_k) ... (l_{R,i+1} + eps l_{i+1})
//             * e * l_{i-1} ... l_1,      e = l_T - l_k ... l_1,
//
// and each pair of neighbours obeys the conservation law
//   l_{R,i} l_i + (eps/2) l_i^2 - (1/2) l_{i-1}^2 = const  (= 0 from l(0)=0),
// whose drift under Euler integration is first order in dt.

#include "urfb/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace urfb::lindyn {

// --- matrix system ----------------------------------------------------------------

struct MatrixSystem {
    int k = 0;                 // number of weight matrices
    std::vector<int> dims;     // n_0 .. n_k
    double eps = 1.0;
    Tensor T;                  // [n_k, n_0]
    std::vector<Tensor> W;     // W[i] = W_{i+1}: [n_{i+1}, n_i]
    std::vector<Tensor> R0;    // R0[i] = R_{i+1}(0): [n_i, n_{i+1}]
};

Tensor chain_product(const std::vector<Tensor>& W);  // W_k ... W_1
Tensor error_matrix(const MatrixSystem& s);          // T - W_k ... W_1
double error_sq(const MatrixSystem& s);              // squared Frobenius norm of E

// one synchronous Euler step; throws std::runtime_error with advice to
// reduce dt when the state stops being finite
void euler_step(MatrixSystem& s, double dt);

// Pearson correlation between W_i and R_i(t)^t per layer, R_i(t) = R_i(0) +
// eps W_i(t)^t. NaN where either side has zero variance (e.g. W = 0).
std::vector<double> layer_correlations(const MatrixSystem& s);

struct MatrixTrace {
    std::vector<int> iters;                 // iterations with a recorded row
    std::vector<double> err2;               // e^2 at those iterations
    std::vector<std::vector<double>> corr;  // [row][layer]
    double err2_0 = 0.0;
    int first_passage = -1;  // first iteration with e^2 <= tol_frac * e^2(0)
    int total_iters = 0;
};

// integrate until first passage below tol_frac * e^2(0) (or max_iters),
// recording every record_every iterations plus the first and last
MatrixTrace run_matrix(MatrixSystem& s, double dt, int max_iters, double tol_frac,
                       int record_every = 10, bool stop_at_passage = true);

// The replication setup: dims 40/100/100/10 (k = 3) or 40/100/10 (k = 2),
// T a product of k independent N(0, 0.2^2) matrices, W(0) = 0 and every
// R_i(0) drawn N(0, 0.2^2) (R_1(0) never enters the flow but is reported in
// the correlations). The same draw is shared across eps values by copying.
MatrixSystem make_replication_system(Rng& rng, double eps, int k = 3);

// gradient-descent baseline on the same target: R0 = 0, eps = 1, W(0) drawn
// N(0, 0.2^2)
MatrixSystem bp_variant(const MatrixSystem& base, Rng& rng);

// Full replication study: a gradient-descent baseline from a random start
// plus one frozen-init run per eps value, all sharing the same target and
// R(0) draw, each integrated for the same fixed iteration count with full
// curves recorded.
struct ReplicationConfig {
    int k = 3;
    std::vector<double> eps_list = {0.0, 0.25, 0.5, 1.0};
    double dt = 1e-3;
    int iters = 1000;
    double tol_frac = 1e-6;  // first-passage threshold on e^2 / e^2(0)
    int record_every = 10;
    std::uint64_t seed = 12345;
    bool include_bp = true;
};

struct ReplicationRun {
    std::string name;  // "bp" or "eps=<value>"
    double eps = 0.0;
    MatrixTrace trace;
};

std::vector<ReplicationRun> replicate_sim(const ReplicationConfig& cfg);

// --- scalar system ----------------------------------------------------------------

struct ScalarSystem {
    int k = 0;
    double eps = 1.0;
    double lambda_T = 0.0;
    std::vector<double> lambda;    // l_1 .. l_k
    std::vector<double> lambda_R;  // l_{R,1} .. l_{R,k} (l_{R,1} unused by the flow)
};

double scalar_error(const ScalarSystem& s);               // e = l_T - prod l_i
std::vector<double> scalar_derivs(const ScalarSystem& s);
void scalar_euler_step(ScalarSystem& s, double dt);       // synchronous

// conservation-law drift Q_i = l_{R,i} l_i + (eps/2) l_i^2 - (1/2) l_{i-1}^2
// for i = 2..k (k-1 entries; exactly 0 along the continuous flow)
std::vector<double> conserved_residual(const ScalarSystem& s);

// max_i |Q_i| / (l_{i-1}^2 / 2 + tiny); the additive tiny keeps early
// iterations (where everything is still near 0) from dividing by almost-zero
double max_relative_residual(const ScalarSystem& s, double tiny = 1e-4);

struct ScalarTrace {
    double e2_0 = 0.0;
    double e2_final = 0.0;
    int first_passage = -1;
    int total_iters = 0;
    double max_rel_residual = 0.0;  // max over all steps taken
};

ScalarTrace run_scalar(ScalarSystem& s, double dt, int max_iters, double tol_frac,
                       bool stop_at_passage = true, double resid_floor = 1e-4);

// Runs the same scalar initial data once per eps value and compares
// first-passage iterations of e^2 below tol_frac * e^2(0). The base system's
// lambda must be the initial state (zeros); its own eps field is ignored.
struct RateReport {
    std::vector<double> eps;
    std::vector<int> first_passage;  // -1 when never reached
    bool never_slower = false;       // passage non-increasing as eps grows
    bool strictly_faster = false;    // passage strictly decreasing
};

RateReport rate_monotonicity(const ScalarSystem& base, const std::vector<double>& eps_list,
                             double dt, int max_iters, double tol_frac);

// --- SVD-aligned initialization -----------------------------------------------------

// basis[i] is U_{i+1} of the construction above (basis[0] = V ... basis[k] =
// U); lam_R[i] is the diagonal of Lambda_{R,i+1}
struct AlignedSystem {
    MatrixSystem sys;
    std::vector<Tensor> basis;
    std::vector<double> lam_T;
    std::vector<std::vector<double>> lam_R;
};

// random orthonormal-column matrix via modified Gram-Schmidt on a Gaussian
Tensor orthonormal_columns(Rng& rng, int rows, int cols);

// dims must satisfy n_k <= n_i for all i; singular values drawn in
// [0.5, 1), feedback scales in [0.01, 0.05)
AlignedSystem svd_aligned_init(Rng& rng, const std::vector<int>& dims, double eps);

// the n_k decoupled scalar systems of an aligned init
std::vector<ScalarSystem> scalar_systems_of(const AlignedSystem& a);

// W_i = U_{i+1} diag(lambda_i) U_i^t reconstructed from scalar states
// lam[d][i] (direction d, layer i+1)
std::vector<Tensor> reconstruct_weights(const AlignedSystem& a,
                                        const std::vector<ScalarSystem>& scalars);

}  // namespace urfb::lindyn

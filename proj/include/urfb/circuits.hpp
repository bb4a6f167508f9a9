#pragma once

// Discrete-time simulators for two local error-signal networks.
//
// Output-error circuit: a class unit delta_c with drive h in [-M, M], a
// supervisory unit s in {+1, -1} and a control unit t. One step applies,
// synchronously in two phases,
//   delta <- sigma_delta(h + 2M s - 2M t),   then   t <- sigma_t(delta).
// With the piecewise transfer functions below the pair either settles at a
// fixed point (delta = 1 for a presented class that is not yet above the
// learning threshold S, delta = -mu for a wrong class above -S) or falls
// into a period-2 oscillation that visits delta values producing no net
// update; the oscillation's effective value is therefore 0.
//
// sigma_delta's plateau boundaries overlap in the source description; they
// are resolved so the fixed-point cases win at |x| = M (x >= M maps to 1,
// x <= -M maps to -mu, the open interval between maps to 0). With that
// choice the effective value matches the hinge delta rule (+1 when h <= S
// for the presented class, -mu when h >= -S for a wrong class, else 0) on
// the whole closed box, with the |h| = M corners settling into period-2
// cycles rather than fixed points. The eps_osc overshoot is what lets the
// control unit detect "too high": sigma_t only triggers above t_hi = 1, so
// delta = 1 leaves t at 0 while delta = 1 + eps_osc flips it.
//
// Shutdown circuit: control units u = 1[x >= 1] and v = -1[x <= -1] add
// -2Ku + 2Kv to an incoming feedback value delta bounded in [-K, K]; the
// thresholded sum sigma(z) = z for z >= -K, else 0, reproduces the
// saturation gate: delta passes iff |x| < 1. (At |delta| = K exactly the
// clamp passes -K through; the bound is treated as strict interior.)

#include <stdexcept>

namespace urfb {

struct OutputCircuit {
    // parameters
    double M = 10.0;      // drive bound, |h| <= M
    double S = 1.0;       // learning threshold
    double mu = 1.0;      // wrong-class balancing factor
    double eps_osc = 0.1; // overshoot that arms the control unit
    double t_hi = 1.0;    // sigma_t upper trigger (test hook; lower is -mu)
    // inputs
    double h = 0.0;
    int s = 1;
    // state
    double delta = 0.0;
    double t = 0.0;
};

double sigma_delta(double x, const OutputCircuit& p);
double sigma_t(double x, const OutputCircuit& p);

// one synchronous two-phase update; throws std::invalid_argument when
// |h| > M or s is not +-1
OutputCircuit output_circuit_step(OutputCircuit c);

// iterate from t = 0 until a fixed point (returns delta, 1 or -mu) or a
// detected cycle (returns 0). Throws std::runtime_error if the state has
// not settled within max_steps (unreachable for valid parameters).
double output_circuit_effective(OutputCircuit c, int max_steps = 16);

struct ShutdownCircuit {
    double K = 10.0;  // feedback bound, |delta| <= K
    double x = 0.0;   // feedforward activity held at the unit
    // state, set by the last step; at most one is ever active
    double u = 0.0;  // in {0, 1}
    double v = 0.0;  // in {0, -1}
};

// activates u/v from x, then passes delta through the thresholded sum;
// throws std::invalid_argument when |delta| > K
double shutdown_step(ShutdownCircuit& c, double delta);

}  // namespace urfb

#include "urfb/circuits.hpp"

#include <array>
#include <cmath>
#include <string>

namespace urfb {

double sigma_delta(double x, const OutputCircuit& p) {
    if (x > 2.0 * p.M + p.S) return 1.0 + p.eps_osc;
    if (x >= p.M) return 1.0;
    if (x > -p.M) return 0.0;
    if (x >= -2.0 * p.M - p.S) return -p.mu;
    return -p.mu - p.eps_osc;
}

double sigma_t(double x, const OutputCircuit& p) {
    if (x > p.t_hi) return 1.0;
    if (x < -p.mu) return -1.0;
    return 0.0;
}

OutputCircuit output_circuit_step(OutputCircuit c) {
    if (std::abs(c.h) > c.M)
        throw std::invalid_argument("output_circuit_step: |h| exceeds the drive bound M");
    if (c.s != 1 && c.s != -1)
        throw std::invalid_argument("output_circuit_step: supervisory signal must be +-1");
    c.delta = sigma_delta(c.h + 2.0 * c.M * c.s - 2.0 * c.M * c.t, c);
    c.t = sigma_t(c.delta, c);
    return c;
}

double output_circuit_effective(OutputCircuit c, int max_steps) {
    c.t = 0.0;
    // the map is deterministic, so revisiting any state proves a limit set:
    // period 1 is a fixed point, anything longer is an oscillation (period 2
    // here) whose visits produce no net update
    std::array<double, 2> hist_delta{};  // one and two steps back
    std::array<double, 2> hist_t{};
    for (int n = 0; n < max_steps; ++n) {
        const OutputCircuit next = output_circuit_step(c);
        if (next.delta == c.delta && next.t == c.t) return next.delta;
        if (n >= 1 && next.delta == hist_delta[0] && next.t == hist_t[0]) return 0.0;
        hist_delta = {c.delta, hist_delta[0]};
        hist_t = {c.t, hist_t[0]};
        c = next;
    }
    throw std::runtime_error("output_circuit_effective: no fixed point or cycle within " +
                             std::to_string(max_steps) + " steps");
}

double shutdown_step(ShutdownCircuit& c, double delta) {
    if (std::abs(delta) > c.K)
        throw std::invalid_argument("shutdown_step: |delta| exceeds the feedback bound K");
    c.u = c.x >= 1.0 ? 1.0 : 0.0;
    c.v = c.x <= -1.0 ? -1.0 : 0.0;
    const double z = delta - 2.0 * c.K * c.u + 2.0 * c.K * c.v;
    return z >= -c.K ? z : 0.0;
}

}  // namespace urfb

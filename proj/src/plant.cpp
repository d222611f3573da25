#include "ascsim/plant.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "ascsim/errors.hpp"

namespace ascsim {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Tiny grounding conductance on every active terminal node. Keeps
// fault-only subgraphs (e.g. a phase-phase short between two otherwise
// floating terminals) non-singular; the injected error is nanoamp scale.
constexpr double kGmin = 1e-12;

// Diode flip tolerances: a conducting diode may carry this much reverse
// current before it is switched off, a blocked diode needs this much excess
// forward bias before it is switched on.
constexpr double kCurrentTol = 1e-9;
constexpr double kVoltageTol = 1e-9;

constexpr int kMaxFixpoint = 16;
constexpr int kFlipAllPasses = 4;  // damp to one flip per pass after these
constexpr int kMaxSubsteps = 256;

/// Conduction topology for one operating point: switch states come from the
/// command plus fault forcing, diode states are the fixpoint variables.
struct Topo {
    std::array<bool, kPhases> sh{}, sl{}, dh{}, dl{};
    std::array<bool, kPhases> active{};             // terminal participates in the solve
    std::array<bool, kPhases> machine_connected{};  // phase current is a live dynamic
    std::array<bool, kPhases> floating{};
    std::array<bool, kPhases> machine_present{};
    std::array<bool, kPhases> fault_attached{};
    bool any_high = false;  // any high-side device conducting

    std::uint32_t bits() const {
        std::uint32_t v = 0;
        for (int k = 0; k < kPhases; ++k) {
            v = v << 6 | (sh[k] << 5) | (sl[k] << 4) | (dh[k] << 3) | (dl[k] << 2) |
                (active[k] << 1) | machine_connected[k];
        }
        return v;
    }
};

/// Affine branch law i = g*(v_from - v_to) + s for one device position.
struct DeviceBranch {
    double g = 0.0;
    double s = 0.0;
};

DeviceBranch high_branch(const Topo& t, int k, const DeviceParams& dev) {
    if (t.sh[k]) return {1.0 / dev.r_on_Ohm, 0.0};
    if (t.dh[k]) {
        const double gd = 1.0 / dev.diode_r_Ohm;
        return {gd, gd * dev.diode_drop_V};  // i_hi = gd*(v_rail - v_t + Vf)
    }
    return {};
}

DeviceBranch low_branch(const Topo& t, int k, const DeviceParams& dev) {
    if (t.sl[k]) return {1.0 / dev.r_on_Ohm, 0.0};
    if (t.dl[k]) {
        const double gd = 1.0 / dev.diode_r_Ohm;
        return {gd, -gd * dev.diode_drop_V};  // i_lo = gd*(-Vf - v_t)
    }
    return {};
}

/// Dense Gaussian elimination with partial pivoting on an augmented system,
/// sized for the at-most-8 unknowns this model ever produces.
constexpr int kMaxN = 8;

bool solve_dense(int n, double a[kMaxN][kMaxN + 1], double* x) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        double best = std::fabs(a[col][col]);
        for (int r = col + 1; r < n; ++r) {
            const double v = std::fabs(a[r][col]);
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (best < 1e-280) return false;
        if (piv != col) {
            for (int c = col; c <= kMaxN; ++c) std::swap(a[piv][c], a[col][c]);
        }
        const double inv = 1.0 / a[col][col];
        for (int r = col + 1; r < n; ++r) {
            const double f = a[r][col] * inv;
            if (f == 0.0) continue;
            a[r][col] = 0.0;
            for (int c = col + 1; c < n; ++c) a[r][c] -= f * a[col][c];
            a[r][kMaxN] -= f * a[col][kMaxN];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        double acc = a[r][kMaxN];
        for (int c = r + 1; c < n; ++c) acc -= a[r][c] * x[c];
        x[r] = acc / a[r][r];
    }
    return true;
}

struct Assembly {
    int n = 0;
    double a[kMaxN][kMaxN + 1] = {};
    double x[kMaxN] = {};

    void clear(int unknowns) {
        n = unknowns;
        // Only the first n rows and solution slots are ever read.
        if (n > 0) {
            std::memset(a, 0, static_cast<std::size_t>(n) * sizeof(a[0]));
            std::memset(x, 0, static_cast<std::size_t>(n) * sizeof(x[0]));
        }
    }
    void add(int row, int col, double v) { a[row][col] += v; }
    void rhs(int row, double v) { a[row][kMaxN] += v; }
};

void classify(Topo& t, const ElectricalState& state, const FaultOverlay& ov,
              double float_current_A) {
    t.any_high = false;
    for (int k = 0; k < kPhases; ++k) {
        t.machine_present[k] = !ov.open_phase[k];
        bool fa = ov.g_pg[k] > 0.0;
        for (int j = 0; j < kPhases; ++j) fa = fa || ov.g_pp[k][j] > 0.0;
        t.fault_attached[k] = fa;

        bool conducts = t.sh[k] || t.sl[k] || t.dh[k] || t.dl[k];
        if (!conducts && !fa && t.machine_present[k] &&
            std::fabs(state.i_phase_A[k]) > float_current_A) {
            // A path-less leg still carrying current freewheels through the
            // diode matching the current direction.
            if (state.i_phase_A[k] > 0.0)
                t.dl[k] = true;
            else
                t.dh[k] = true;
            conducts = true;
        }
        t.active[k] = conducts || fa;
        t.machine_connected[k] = t.machine_present[k] && t.active[k];
        t.floating[k] = !t.active[k];
        t.any_high = t.any_high || t.sh[k] || t.dh[k];
    }
}

struct InstSolve {
    PhaseArray v_t{};
    double v_rail = 0.0;
    double v_n = 0.0;
    PhaseArray i_hi{};
    PhaseArray i_lo{};
    double i_inv = 0.0;
};

/// Instantaneous nodal solve: v_dc fixed, connected phase currents injected
/// as sources. Unknowns: v_rail (when a high-side device conducts through a
/// non-zero ESR) and the active terminal voltages.
InstSolve solve_instantaneous(const Topo& t, const ElectricalState& state,
                              const FaultOverlay& ov, const PlantParams& p,
                              const PhaseArray& e, double t_s) {
    const double esr = p.dc.esr_Ohm;
    const bool rail_unknown = t.any_high && esr > 0.0;

    Assembly sys;
    int idx_t[kPhases];
    int n = 0;
    const int idx_rail = rail_unknown ? n++ : -1;
    for (int k = 0; k < kPhases; ++k) idx_t[k] = t.active[k] ? n++ : -1;
    sys.clear(n);

    InstSolve out;
    out.v_rail = state.v_dc_V;

    auto rail_col = [&](int row, double g) {
        // Coefficient of v_rail in some row; folds into RHS when the rail is
        // pinned at v_dc (esr == 0 or no high-side conduction).
        if (rail_unknown)
            sys.add(row, idx_rail, g);
        else
            sys.rhs(row, -g * state.v_dc_V);
    };

    if (rail_unknown) {
        const double g_esr = 1.0 / esr;
        sys.add(idx_rail, idx_rail, -g_esr);
        sys.rhs(idx_rail, -g_esr * state.v_dc_V);  // (v_dc - v_rail)*g_esr ...
    }

    for (int k = 0; k < kPhases; ++k) {
        if (!t.active[k]) continue;
        const int row = idx_t[k];
        const DeviceBranch hb = high_branch(t, k, p.device);
        const DeviceBranch lb = low_branch(t, k, p.device);

        // i_hi = hb.g*(v_rail - v_t) + hb.s ; i_lo = -lb.g*v_t + lb.s
        rail_col(row, hb.g);
        sys.add(row, idx_t[k], -hb.g - lb.g - kGmin);
        sys.rhs(row, -hb.s - lb.s);

        if (rail_unknown && hb.g != 0.0) {
            // Rail KCL: (v_dc - v_rail)*g_esr - sum_k i_hi = 0
            sys.add(idx_rail, idx_rail, -hb.g);
            sys.add(idx_rail, idx_t[k], hb.g);
            sys.rhs(idx_rail, hb.s);
        }

        sys.add(row, idx_t[k], -ov.g_pg[k]);
        for (int j = 0; j < kPhases; ++j) {
            const double g = ov.g_pp[k][j];
            if (g == 0.0) continue;
            sys.add(row, idx_t[k], -g);
            sys.add(row, idx_t[j], g);
        }

        if (t.machine_connected[k]) sys.rhs(row, state.i_phase_A[k]);
    }

    if (n > 0 && !solve_dense(n, sys.a, sys.x)) throw TopologyUnresolvable(t_s);

    if (rail_unknown) out.v_rail = sys.x[idx_rail];
    for (int k = 0; k < kPhases; ++k) {
        if (t.active[k]) out.v_t[k] = sys.x[idx_t[k]];
        const DeviceBranch hb = high_branch(t, k, p.device);
        const DeviceBranch lb = low_branch(t, k, p.device);
        out.i_hi[k] = t.active[k] ? hb.g * (out.v_rail - out.v_t[k]) + hb.s : 0.0;
        out.i_lo[k] = t.active[k] ? -lb.g * out.v_t[k] + lb.s : 0.0;
        out.i_inv += out.i_hi[k];
    }

    // Isolated neutral: v_n chosen so the connected di/dt sum to zero.
    int nc = 0;
    double acc = 0.0;
    for (int k = 0; k < kPhases; ++k) {
        if (!t.machine_connected[k]) continue;
        acc += out.v_t[k] - p.machine.resistance_Ohm * state.i_phase_A[k] - e[k];
        ++nc;
    }
    if (nc > 0) {
        out.v_n = acc / nc;
    } else {
        // Nothing conducts: any v_n inside the diode blocking window is
        // valid; take the window midpoint for determinism.
        double lo = -1e300, hi = 1e300;
        bool anyp = false;
        for (int k = 0; k < kPhases; ++k) {
            if (!t.machine_present[k] || t.active[k]) continue;
            lo = std::max(lo, -p.device.diode_drop_V - e[k]);
            hi = std::min(hi, out.v_rail + p.device.diode_drop_V - e[k]);
            anyp = true;
        }
        out.v_n = anyp ? 0.5 * (lo + hi) : 0.0;
    }
    for (int k = 0; k < kPhases; ++k)
        if (t.floating[k] && t.machine_present[k]) out.v_t[k] = e[k] + out.v_n;

    return out;
}

/// One fixpoint consistency pass; returns true when any diode flipped.
/// A conducting diode only turns off once its reverse current exceeds the
/// noise floor (off_hysteresis_A): a leg whose stale inductor current is
/// below that threshold may be pushed onto a diode by voltage alone, and
/// ousting the diode over a noise-level opposing current would livelock the
/// fixpoint. Flip-all converges in a couple of passes almost always, but
/// symmetric couplings (e.g. a milliohm fault tying two terminals at
/// rectification onset) can still oscillate; single_flip mode applies only
/// the first violated flip per pass, which breaks those limit cycles.
bool adjust_diodes(Topo& t, const InstSolve& s, const DeviceParams& dev, double off_hysteresis_A,
                   bool single_flip) {
    const double off_tol = std::max(kCurrentTol, off_hysteresis_A);
    bool changed = false;
    for (int k = 0; k < kPhases; ++k) {
        if (t.dh[k]) {
            const double fwd = -s.i_hi[k];  // terminal -> rail
            if (fwd < -off_tol) {
                t.dh[k] = false;
                changed = true;
            }
        } else if (!t.sh[k]) {
            if (s.v_t[k] - s.v_rail > dev.diode_drop_V + kVoltageTol) {
                t.dh[k] = true;
                changed = true;
            }
        }
        if (changed && single_flip) return true;
        if (t.dl[k]) {
            if (s.i_lo[k] < -off_tol) {  // ground -> terminal
                t.dl[k] = false;
                changed = true;
            }
        } else if (!t.sl[k]) {
            if (-s.v_t[k] > dev.diode_drop_V + kVoltageTol) {
                t.dl[k] = true;
                changed = true;
            }
        }
        if (changed && single_flip) return true;
    }
    return changed;
}

double overlay_fault_current(const Topo& t, const InstSolve& s, const ElectricalState& state,
                             const FaultOverlay& ov) {
    double total = 0.0;
    for (int a = 0; a < kPhases; ++a) {
        for (int b = a + 1; b < kPhases; ++b)
            if (ov.g_pp[a][b] > 0.0)
                total += std::fabs(ov.g_pp[a][b] * (s.v_t[a] - s.v_t[b]));
        if (ov.g_pg[a] > 0.0) total += std::fabs(ov.g_pg[a] * s.v_t[a]);
        if (ov.force_high[a])
            total += std::fabs(s.i_hi[a]);
        else if (ov.force_low[a])
            total += std::fabs(s.i_lo[a]);
        if (ov.open_phase[a]) total += std::fabs(state.i_phase_A[a]);
        (void)t;
    }
    return total;
}

Topo topo_from_solution(const TerminalSolution& sol, const FaultOverlay& ov) {
    Topo t;
    t.sh = sol.high_switch_on;
    t.sl = sol.low_switch_on;
    t.dh = sol.high_diode_on;
    t.dl = sol.low_diode_on;
    t.floating = sol.floating;
    t.machine_connected = sol.machine_connected;
    for (int k = 0; k < kPhases; ++k) {
        t.machine_present[k] = !ov.open_phase[k];
        t.active[k] = !sol.floating[k];
        t.any_high = t.any_high || t.sh[k] || t.dh[k];
    }
    return t;
}

/// Operating-point energy flows used by the per-step trapezoid bookkeeping.
struct Powers {
    double dissipated_W = 0.0;
    double source_in_W = 0.0;
    double emf_absorbed_W = 0.0;
};

Powers operating_powers(const Topo& t, const PlantParams& p, const FaultOverlay& ov,
                        double v_dc, double i_src, double i_inv, double i_dis,
                        const PhaseArray& v_t, const PhaseArray& i_hi, const PhaseArray& i_lo,
                        const PhaseArray& i_ph, const PhaseArray& e) {
    Powers out;
    out.dissipated_W = v_dc * v_dc / p.dc.bleed_resistance_Ohm + i_inv * i_inv * p.dc.esr_Ohm +
                       v_dc * i_dis;
    for (int k = 0; k < kPhases; ++k) {
        if (t.sh[k])
            out.dissipated_W += i_hi[k] * i_hi[k] * p.device.r_on_Ohm;
        else if (t.dh[k]) {
            const double fwd = std::max(-i_hi[k], 0.0);
            out.dissipated_W += fwd * p.device.diode_drop_V + fwd * fwd * p.device.diode_r_Ohm;
        }
        if (t.sl[k])
            out.dissipated_W += i_lo[k] * i_lo[k] * p.device.r_on_Ohm;
        else if (t.dl[k]) {
            const double fwd = std::max(i_lo[k], 0.0);
            out.dissipated_W += fwd * p.device.diode_drop_V + fwd * fwd * p.device.diode_r_Ohm;
        }
        if (t.machine_connected[k]) {
            out.dissipated_W += i_ph[k] * i_ph[k] * p.machine.resistance_Ohm;
            out.emf_absorbed_W += e[k] * i_ph[k];
        }
        if (ov.g_pg[k] > 0.0) out.dissipated_W += ov.g_pg[k] * v_t[k] * v_t[k];
        for (int j = k + 1; j < kPhases; ++j) {
            if (ov.g_pp[k][j] > 0.0) {
                const double dv = v_t[k] - v_t[j];
                out.dissipated_W += ov.g_pp[k][j] * dv * dv;
            }
        }
    }
    out.source_in_W = v_dc * i_src;
    return out;
}

}  // namespace

PhaseArray back_emf(double theta_rad, const MachineParams& machine) {
    // One step evaluates the same two angles several times over, and a
    // standstill run never changes the angle at all, so a two-entry memo
    // removes most of the trig from the hot path. Values are identical to a
    // direct evaluation; only the work is skipped.
    struct Memo {
        double theta = std::numeric_limits<double>::quiet_NaN();
        double amplitude = 0.0;
        PhaseArray e{};
    };
    thread_local Memo memo[2];
    thread_local int slot = 0;
    for (const Memo& m : memo)
        if (m.theta == theta_rad && m.amplitude == machine.bemf_amplitude_V) return m.e;
    PhaseArray e;
    for (int k = 0; k < kPhases; ++k)
        e[k] = machine.bemf_amplitude_V * std::cos(theta_rad - 2.0 * kPi * k / kPhases);
    memo[slot] = {theta_rad, machine.bemf_amplitude_V, e};
    slot = 1 - slot;
    return e;
}

TerminalSolution resolve_topology(const ElectricalState& state, const SwitchCommand& cmd,
                                  const FaultOverlay& overlay, const PlantParams& params,
                                  double float_current_A, const DiodeHint* hint, double t_s) {
    Topo t;
    for (int k = 0; k < kPhases; ++k) {
        if (cmd.high[k] && cmd.low[k] && !(overlay.force_high[k] && overlay.force_low[k]))
            throw ValidationError("leg " + std::to_string(k) +
                                  " commanded with both switches on without a shoot-through force");
        t.sh[k] = cmd.high[k] || overlay.force_high[k];
        t.sl[k] = cmd.low[k] || overlay.force_low[k];
        t.dh[k] = hint && !t.sh[k] ? hint->high[k] : false;
        t.dl[k] = hint && !t.sl[k] ? hint->low[k] : false;
    }

    const PhaseArray e = back_emf(state.theta_rad, params.machine);
    InstSolve s;
    int iter = 0;
    for (;; ++iter) {
        if (iter >= kMaxFixpoint) throw TopologyUnresolvable(t_s);
        classify(t, state, overlay, float_current_A);
        s = solve_instantaneous(t, state, overlay, params, e, t_s);
        if (!adjust_diodes(t, s, params.device, float_current_A, iter >= kFlipAllPasses)) break;
    }

    TerminalSolution sol;
    sol.v_terminal_V = s.v_t;
    sol.v_neutral_V = s.v_n;
    sol.v_rail_V = s.v_rail;
    sol.high_switch_on = t.sh;
    sol.low_switch_on = t.sl;
    sol.high_diode_on = t.dh;
    sol.low_diode_on = t.dl;
    sol.floating = t.floating;
    sol.machine_connected = t.machine_connected;
    sol.i_high_A = s.i_hi;
    sol.i_low_A = s.i_lo;
    sol.dc_link_branch_current_A = s.i_inv;
    sol.i_source_A = cmd.contactor_closed
                         ? (params.dc.source_voltage_V - state.v_dc_V) / params.dc.source_resistance_Ohm
                         : 0.0;
    sol.i_bleed_A = state.v_dc_V / params.dc.bleed_resistance_Ohm;
    sol.i_cap_A = sol.i_source_A - sol.i_bleed_A - cmd.active_discharge_current_A - s.i_inv;
    sol.fault_branch_current_A = overlay_fault_current(t, s, state, overlay);
    sol.fixpoint_iterations = iter + 1;
    for (int k = 0; k < kPhases; ++k)
        sol.snap_to_zero[k] = t.floating[k] && t.machine_present[k] && state.i_phase_A[k] != 0.0;
    return sol;
}

Derivative derivative(const ElectricalState& state, const TerminalSolution& sol,
                      const SwitchCommand& cmd, const PlantParams& params) {
    Derivative d;
    const PhaseArray e = back_emf(state.theta_rad, params.machine);
    for (int k = 0; k < kPhases; ++k) {
        d.di_phase[k] = sol.machine_connected[k]
                            ? (sol.v_terminal_V[k] - params.machine.resistance_Ohm * state.i_phase_A[k] -
                               e[k] - sol.v_neutral_V) /
                                  params.machine.inductance_H
                            : 0.0;
    }
    d.dv_dc = (sol.i_source_A - sol.dc_link_branch_current_A -
               state.v_dc_V / params.dc.bleed_resistance_Ohm - cmd.active_discharge_current_A) /
              params.dc.capacitance_F;
    d.dtheta = params.machine.electrical_speed_rad_s;
    return d;
}

DeviceLosses conduction_losses(const TerminalSolution& sol, const ElectricalState& state,
                               const SwitchCommand& cmd, const PlantParams& params) {
    DeviceLosses out;
    for (int k = 0; k < kPhases; ++k) {
        double ph = 0.0;
        if (sol.high_switch_on[k]) {
            ph = sol.i_high_A[k] * sol.i_high_A[k] * params.device.r_on_Ohm;
        } else if (sol.high_diode_on[k]) {
            const double fwd = std::max(-sol.i_high_A[k], 0.0);
            ph = fwd * params.device.diode_drop_V + fwd * fwd * params.device.diode_r_Ohm;
        }
        double pl = 0.0;
        if (sol.low_switch_on[k]) {
            pl = sol.i_low_A[k] * sol.i_low_A[k] * params.device.r_on_Ohm;
        } else if (sol.low_diode_on[k]) {
            const double fwd = std::max(sol.i_low_A[k], 0.0);
            pl = fwd * params.device.diode_drop_V + fwd * fwd * params.device.diode_r_Ohm;
        }
        out.power_W[high_device(k)] = ph;
        out.power_W[low_device(k)] = pl;
    }
    out.power_W[kDischargeDevice] = std::max(state.v_dc_V * cmd.active_discharge_current_A, 0.0);
    for (double p : out.power_W) out.total_W += p;
    return out;
}

double fault_branch_current(const TerminalSolution& sol, const ElectricalState& state,
                            const FaultOverlay& overlay, std::span<const FaultEvent>, double,
                            const PlantParams&) {
    const Topo t = topo_from_solution(sol, overlay);
    InstSolve s;
    s.v_t = sol.v_terminal_V;
    s.i_hi = sol.i_high_A;
    s.i_lo = sol.i_low_A;
    return overlay_fault_current(t, s, state, overlay);
}

// ---------------------------------------------------------------------------
// Integrator

PlantStepper::PlantStepper(const PlantParams& params, double dt_s, double dv_max_step_V)
    : params_(params), dt_(dt_s), dv_cap_(dv_max_step_V) {
    params_.validate();
    if (!(std::isfinite(dt_s) && dt_s > 0.0)) throw ValidationError("dt must be > 0");
    if (!(std::isfinite(dv_max_step_V) && dv_max_step_V > 0.0))
        throw ValidationError("dv_max_step must be > 0");
}

double PlantStepper::float_threshold(const ElectricalState& s) const {
    // Bound on the one-step current overshoot of a diode that blocked
    // between samples: dt * (largest voltage the branch can see) / L.
    const double v_scale = std::fabs(s.v_dc_V) + 2.0 * params_.machine.bemf_amplitude_V + 5.0;
    return 2.0 * dt_ * v_scale / params_.machine.inductance_H;
}

TerminalSolution PlantStepper::peek(const ElectricalState& state, const SwitchCommand& cmd,
                                    const FaultOverlay& overlay, double t_s) const {
    DiodeHint h = hint_;
    return resolve_topology(state, cmd, overlay, params_, float_threshold(state), &h, t_s);
}

namespace {

/// End-of-step solve with companion models, topology frozen. scheme_tr picks
/// trapezoidal companions (needs consistent start branch values); otherwise
/// backward Euler.
struct CompanionStep {
    ElectricalState next;
    PhaseArray v_t_end{};
    PhaseArray i_hi_end{};
    PhaseArray i_lo_end{};
    double v_rail_end = 0.0;
    double i_src_end = 0.0;
    double i_inv_end = 0.0;
};

CompanionStep companion_step(const Topo& t, const ElectricalState& s0, const InstSolve& start,
                             const SwitchCommand& cmd, const FaultOverlay& ov,
                             const PlantParams& p, double h, bool scheme_tr, double t_s) {
    const double esr = p.dc.esr_Ohm;
    const bool rail_unknown = t.any_high && esr > 0.0;
    const double L = p.machine.inductance_H;
    const double R = p.machine.resistance_Ohm;
    const double C = p.dc.capacitance_F;

    const double theta1 = s0.theta_rad + p.machine.electrical_speed_rad_s * h;
    const PhaseArray e0 = back_emf(s0.theta_rad, p.machine);
    const PhaseArray e1 = back_emf(theta1, p.machine);

    // Machine companions: i_k' = gm*(v_t' - v_n') + hk
    double gm[kPhases] = {};
    double hk[kPhases] = {};
    bool any_machine = false;
    for (int k = 0; k < kPhases; ++k) {
        if (!t.machine_connected[k]) continue;
        any_machine = true;
        if (scheme_tr) {
            const double vL0 = start.v_t[k] - R * s0.i_phase_A[k] - e0[k] - start.v_n;
            const double den = 1.0 + h * R / (2.0 * L);
            gm[k] = (h / (2.0 * L)) / den;
            hk[k] = (s0.i_phase_A[k] + (h / (2.0 * L)) * (vL0 - e1[k])) / den;
        } else {
            const double den = 1.0 + h * R / L;
            gm[k] = (h / L) / den;
            hk[k] = (s0.i_phase_A[k] - (h / L) * e1[k]) / den;
        }
    }

    Assembly sys;
    int idx_t[kPhases];
    int n = 0;
    const int idx_dc = n++;
    const int idx_rail = rail_unknown ? n++ : -1;
    for (int k = 0; k < kPhases; ++k) idx_t[k] = t.active[k] ? n++ : -1;
    const int idx_n = any_machine ? n++ : -1;
    sys.clear(n);

    auto rail_col = [&](int row, double g) {
        // v_rail aliases v_dc when no unknown rail node exists.
        sys.add(row, rail_unknown ? idx_rail : idx_dc, g);
    };

    // DC node: i_src' - i_bleed' - i_dis - i_esr' - i_c' = 0
    if (cmd.contactor_closed) {
        sys.add(idx_dc, idx_dc, -1.0 / p.dc.source_resistance_Ohm);
        sys.rhs(idx_dc, -p.dc.source_voltage_V / p.dc.source_resistance_Ohm);
    }
    sys.add(idx_dc, idx_dc, -1.0 / p.dc.bleed_resistance_Ohm);
    sys.rhs(idx_dc, cmd.active_discharge_current_A);
    if (scheme_tr) {
        // Start capacitor current from KCL at the start point; makes the
        // update the plain trapezoid rule on dv/dt = i_c/C.
        const double i_src0 = cmd.contactor_closed
                                  ? (p.dc.source_voltage_V - s0.v_dc_V) / p.dc.source_resistance_Ohm
                                  : 0.0;
        const double i_c0 = i_src0 - s0.v_dc_V / p.dc.bleed_resistance_Ohm -
                            cmd.active_discharge_current_A - start.i_inv;
        sys.add(idx_dc, idx_dc, -2.0 * C / h);
        sys.rhs(idx_dc, -(2.0 * C / h) * s0.v_dc_V - i_c0);
    } else {
        sys.add(idx_dc, idx_dc, -C / h);
        sys.rhs(idx_dc, -(C / h) * s0.v_dc_V);
    }

    if (rail_unknown) {
        const double g_esr = 1.0 / esr;
        // i_esr' = (v_dc' - v_rail')*g_esr leaves the dc node...
        sys.add(idx_dc, idx_dc, -g_esr);
        sys.add(idx_dc, idx_rail, g_esr);
        // ... and enters the rail node.
        sys.add(idx_rail, idx_dc, g_esr);
        sys.add(idx_rail, idx_rail, -g_esr);
    }

    for (int k = 0; k < kPhases; ++k) {
        if (!t.active[k]) continue;
        const int row = idx_t[k];
        const DeviceBranch hb = high_branch(t, k, p.device);
        const DeviceBranch lb = low_branch(t, k, p.device);

        rail_col(row, hb.g);
        sys.add(row, idx_t[k], -hb.g - lb.g - kGmin);
        sys.rhs(row, -hb.s - lb.s);

        if (hb.g != 0.0) {
            const int rrow = rail_unknown ? idx_rail : idx_dc;
            rail_col(rrow, -hb.g);
            sys.add(rrow, idx_t[k], hb.g);
            sys.rhs(rrow, hb.s);
        }

        sys.add(row, idx_t[k], -ov.g_pg[k]);
        for (int j = 0; j < kPhases; ++j) {
            const double g = ov.g_pp[k][j];
            if (g == 0.0) continue;
            sys.add(row, idx_t[k], -g);
            sys.add(row, idx_t[j], g);
        }

        if (t.machine_connected[k]) {
            sys.add(row, idx_t[k], -gm[k]);
            sys.add(row, idx_n, gm[k]);
            sys.rhs(row, hk[k]);
            sys.add(idx_n, idx_t[k], gm[k]);
            sys.add(idx_n, idx_n, -gm[k]);
            sys.rhs(idx_n, -hk[k]);
        }
    }

    if (!solve_dense(n, sys.a, sys.x)) throw TopologyUnresolvable(t_s);

    CompanionStep out;
    out.next = s0;
    out.next.v_dc_V = sys.x[idx_dc];
    out.next.theta_rad = theta1;
    out.v_rail_end = rail_unknown ? sys.x[idx_rail] : out.next.v_dc_V;
    const double v_n1 = any_machine ? sys.x[idx_n] : 0.0;
    for (int k = 0; k < kPhases; ++k) {
        if (t.active[k]) out.v_t_end[k] = sys.x[idx_t[k]];
        if (t.machine_connected[k])
            out.next.i_phase_A[k] = gm[k] * (out.v_t_end[k] - v_n1) + hk[k];
        else
            out.next.i_phase_A[k] = 0.0;
        const DeviceBranch hb = high_branch(t, k, p.device);
        const DeviceBranch lb = low_branch(t, k, p.device);
        out.i_hi_end[k] = t.active[k] ? hb.g * (out.v_rail_end - out.v_t_end[k]) + hb.s : 0.0;
        out.i_lo_end[k] = t.active[k] ? -lb.g * out.v_t_end[k] + lb.s : 0.0;
        out.i_inv_end += out.i_hi_end[k];
        if (t.floating[k] && t.machine_present[k]) out.v_t_end[k] = e1[k] + v_n1;
    }
    out.i_src_end = cmd.contactor_closed
                        ? (p.dc.source_voltage_V - out.next.v_dc_V) / p.dc.source_resistance_Ohm
                        : 0.0;
    return out;
}

}  // namespace

StepResult PlantStepper::step(ElectricalState& state, const SwitchCommand& cmd,
                              const FaultOverlay& overlay, double t_s) {
    StepResult res;
    res.start = resolve_topology(state, cmd, overlay, params_, float_threshold(state), &hint_, t_s);
    hint_.high = res.start.high_diode_on;
    hint_.low = res.start.low_diode_on;

    const Topo topo = topo_from_solution(res.start, overlay);

    // State surgery before integrating: snapped diode turn-offs and freshly
    // opened phases zero their currents; the remaining connected currents are
    // mean-projected so the phase sum stays exactly zero. The stored-energy
    // drop is booked as dissipation (turn-off loss / break arc).
    {
        const double L = params_.machine.inductance_H;
        double e_before = 0.0, e_after = 0.0;
        for (double i : state.i_phase_A) e_before += 0.5 * L * i * i;
        bool touched = false;
        for (int k = 0; k < kPhases; ++k) {
            if (res.start.snap_to_zero[k] || (overlay.open_phase[k] && state.i_phase_A[k] != 0.0)) {
                state.i_phase_A[k] = 0.0;
                touched = true;
            }
        }
        if (touched) {
            double sum = 0.0;
            int nc = 0;
            for (int k = 0; k < kPhases; ++k)
                if (topo.machine_connected[k]) {
                    sum += state.i_phase_A[k];
                    ++nc;
                }
            if (nc > 0) {
                const double mean = sum / nc;
                for (int k = 0; k < kPhases; ++k)
                    if (topo.machine_connected[k]) state.i_phase_A[k] -= mean;
            }
            for (double i : state.i_phase_A) e_after += 0.5 * L * i * i;
            res.energies.dissipated_J += std::max(e_before - e_after, 0.0);
        }
    }
    prev_open_ = overlay.open_phase;

    // Topology-stable steps integrate trapezoidally; any conduction change
    // takes one damped backward-Euler step instead.
    std::uint64_t sig = topo.bits();
    sig = sig * 1099511628211ull + cmd.contactor_closed;
    {
        // FNV over the overlay members (never raw struct bytes: padding is
        // indeterminate and would jitter the integrator-scheme choice).
        std::uint64_t hash = 1469598103934665603ull;
        auto mix = [&hash](std::uint64_t word) { hash = (hash ^ word) * 1099511628211ull; };
        auto mix_double = [&](double v) {
            std::uint64_t word;
            std::memcpy(&word, &v, 8);
            mix(word);
        };
        for (int a = 0; a < kPhases; ++a)
            for (int b = 0; b < kPhases; ++b) mix_double(overlay.g_pp[a][b]);
        std::uint64_t flags = 0;
        for (int k = 0; k < kPhases; ++k) {
            mix_double(overlay.g_pg[k]);
            flags = flags << 3 | (overlay.force_high[k] << 2) | (overlay.force_low[k] << 1) |
                    overlay.open_phase[k];
        }
        mix(flags);
        sig = sig * 1099511628211ull + hash;
    }
    const bool scheme_tr = sig == prev_signature_;
    prev_signature_ = sig;

    const InstSolve start{res.start.v_terminal_V, res.start.v_rail_V, res.start.v_neutral_V,
                          res.start.i_high_A, res.start.i_low_A,
                          res.start.dc_link_branch_current_A};

    const PhaseArray e0 = back_emf(state.theta_rad, params_.machine);
    const Powers p_start = operating_powers(
        topo, params_, overlay, state.v_dc_V, res.start.i_source_A,
        res.start.dc_link_branch_current_A, cmd.active_discharge_current_A,
        res.start.v_terminal_V, res.start.i_high_A, res.start.i_low_A, state.i_phase_A, e0);

    CompanionStep trial =
        companion_step(topo, state, start, cmd, overlay, params_, dt_, scheme_tr, t_s);
    res.backward_euler = !scheme_tr;

    int m = 1;
    const double dv = std::fabs(trial.next.v_dc_V - state.v_dc_V);
    if (dv > dv_cap_) m = std::min(kMaxSubsteps, static_cast<int>(std::ceil(dv / dv_cap_)));

    auto accumulate = [&](const Powers& a, const Powers& b, double h) {
        res.energies.dissipated_J += 0.5 * h * (a.dissipated_W + b.dissipated_W);
        res.energies.source_in_J += 0.5 * h * (a.source_in_W + b.source_in_W);
        res.energies.emf_absorbed_J += 0.5 * h * (a.emf_absorbed_W + b.emf_absorbed_W);
    };

    // Backward Euler satisfies dE_stored = h*p(end) - (C/2)dv^2 - sum (L/2)di^2
    // exactly, so those steps book end-point powers and charge the quadratic
    // smoothing loss to the dissipation ledger. Trapezoidal powers would leak
    // (h/2)*v0*di_C per step, first order in the current jump a conduction
    // change produces.
    auto book_be = [&](const ElectricalState& before, const CompanionStep& cs, const Powers& pe,
                       double h) {
        res.energies.source_in_J += h * pe.source_in_W;
        res.energies.emf_absorbed_J += h * pe.emf_absorbed_W;
        const double dv = cs.next.v_dc_V - before.v_dc_V;
        double smoothing = 0.5 * params_.dc.capacitance_F * dv * dv;
        for (int k = 0; k < kPhases; ++k) {
            const double di = cs.next.i_phase_A[k] - before.i_phase_A[k];
            smoothing += 0.5 * params_.machine.inductance_H * di * di;
        }
        res.energies.dissipated_J += h * pe.dissipated_W + smoothing;
    };

    auto end_powers = [&](const CompanionStep& cs) {
        const PhaseArray e1 = back_emf(cs.next.theta_rad, params_.machine);
        return operating_powers(topo, params_, overlay, cs.next.v_dc_V, cs.i_src_end,
                                cs.i_inv_end, cmd.active_discharge_current_A, cs.v_t_end,
                                cs.i_hi_end, cs.i_lo_end, cs.next.i_phase_A, e1);
    };

    if (m == 1) {
        if (scheme_tr)
            accumulate(p_start, end_powers(trial), dt_);
        else
            book_be(state, trial, end_powers(trial), dt_);
        state = trial.next;
    } else {
        // Large excursion: redo deterministically as m damped substeps.
        const double h = dt_ / m;
        ElectricalState cur = state;
        InstSolve sub = start;
        for (int j = 0; j < m; ++j) {
            CompanionStep cs =
                companion_step(topo, cur, sub, cmd, overlay, params_, h, false, t_s);
            book_be(cur, cs, end_powers(cs), h);
            cur = cs.next;
            sub = InstSolve{cs.v_t_end, cs.v_rail_end, 0.0, cs.i_hi_end, cs.i_lo_end,
                            cs.i_inv_end};
        }
        state = cur;
        res.backward_euler = true;
    }
    res.substeps = m;

    // Exact zero phase-current sum survives millions of steps only if the
    // roundoff is squeezed out after every update.
    {
        double sum = 0.0;
        int nc = 0;
        for (int k = 0; k < kPhases; ++k)
            if (topo.machine_connected[k]) {
                sum += state.i_phase_A[k];
                ++nc;
            }
        if (nc > 0) {
            const double mean = sum / nc;
            for (int k = 0; k < kPhases; ++k)
                if (topo.machine_connected[k]) state.i_phase_A[k] -= mean;
        }
    }

    if (!std::isfinite(state.v_dc_V)) throw NonFiniteState(t_s, "v_dc is not finite");
    for (int k = 0; k < kPhases; ++k) {
        if (!std::isfinite(state.i_phase_A[k]))
            throw NonFiniteState(t_s, "i_phase[" + std::to_string(k) + "] is not finite");
        if (std::fabs(state.i_phase_A[k]) > params_.current_sanity_bound_A)
            throw NonFiniteState(t_s, "i_phase[" + std::to_string(k) + "] exceeded the sanity bound");
    }
    return res;
}

}  // namespace ascsim

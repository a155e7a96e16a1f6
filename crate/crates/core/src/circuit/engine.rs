//! Transient solver for the charge pump + flyback network.
//!
//! Nodes: reservoir R (C_res ∥ R_load), variable capacitor A, storage S and
//! the switch/inductor junction X. Branches: D1 R→A, D2 A→S, switch S→X,
//! L_fly X→R and the freewheel diode ground→X.
//!
//! The state is `[q_var, q_store, q_res, i_fly]`; capacitor voltages are
//! `q/C`, which keeps the time-varying capacitor exact. X carries no
//! capacitance and is solved algebraically. Diodes and the switch are
//! piecewise linear, so each conduction pattern is a linear time-varying
//! system advanced with the L-stable TR-BDF2 scheme; pattern changes are
//! located by bisection.

use nalgebra::{Matrix4, Vector4};
use serde::Serialize;

use super::drive::CapacitanceDrive;
use super::ledger::EnergyLedger;
use super::params::CircuitParams;
use crate::error::{Error, Result};

type State = Vector4<f64>;

const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;
/// Quadrature weights of TR-BDF2 viewed as an ESDIRK tableau.
const W_EDGE: f64 = std::f64::consts::SQRT_2 / 4.0;
const W_LAST: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

/// Reverse current tolerated through a conducting diode before it is opened.
const CURRENT_TOL: f64 = 1e-10;
/// Forward overdrive tolerated across a blocking diode before it is closed.
const VOLTAGE_TOL: f64 = 1e-9;

const MAX_EVENTS_PER_INSTANT: usize = 64;

/// Conduction pattern of the switching elements.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Conduction {
    pub d1: bool,
    pub d2: bool,
    pub d_fly: bool,
    pub switch: bool,
}

impl Conduction {
    fn any(&self) -> bool {
        self.d1 || self.d2 || self.d_fly || self.switch
    }

    fn toggle(&mut self, other: &Conduction) {
        self.d1 ^= other.d1;
        self.d2 ^= other.d2;
        self.d_fly ^= other.d_fly;
        self.switch ^= other.switch;
    }

    /// Compact flag string, e.g. `D1|D2|SW`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.d1 {
            parts.push("D1");
        }
        if self.d2 {
            parts.push("D2");
        }
        if self.d_fly {
            parts.push("DF");
        }
        if self.switch {
            parts.push("SW");
        }
        parts.join("|")
    }
}

/// Dynamic circuit state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CircuitState {
    pub t: f64,
    pub q_var: f64,
    pub q_store: f64,
    pub q_res: f64,
    pub i_fly: f64,
    /// Variable capacitance at `t`.
    pub c_var: f64,
    pub conduction: Conduction,
}

impl CircuitState {
    /// Every capacitor at `v_initial`, no inductor current.
    pub fn precharged(params: &CircuitParams, drive: &CapacitanceDrive) -> Self {
        let c = drive.eval(0.0);
        let v = params.v_initial;
        Self {
            t: 0.0,
            q_var: c * v,
            q_store: params.c_store * v,
            q_res: params.c_res * v,
            i_fly: 0.0,
            c_var: c,
            conduction: Conduction::default(),
        }
    }

    pub fn v_var(&self) -> f64 {
        self.q_var / self.c_var
    }

    pub fn v_store(&self, params: &CircuitParams) -> f64 {
        self.q_store / params.c_store
    }

    pub fn v_res(&self, params: &CircuitParams) -> f64 {
        self.q_res / params.c_res
    }

    fn vector(&self) -> State {
        Vector4::new(self.q_var, self.q_store, self.q_res, self.i_fly)
    }
}

/// One recorded point of the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub c_var: f64,
    pub v_var: f64,
    pub v_store: f64,
    pub v_out: f64,
    pub i_fly: f64,
    pub conduction: Conduction,
}

/// One switch closure and the freewheel that follows it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlybackRecord {
    pub t_on: f64,
    pub v_store_before: f64,
    pub v_store_after: f64,
    pub v_out_before: f64,
    /// Energy the inductor delivered into the reservoir node.
    pub energy_to_res: f64,
    pub short_circuit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Multiplies every step limit; 0.5 halves all steps.
    pub step_scale: f64,
    /// Width of the bracket when locating a conduction change.
    pub event_tolerance: f64,
    /// Spacing of recorded samples; `None` records only the end points.
    pub sample_interval: Option<f64>,
    /// Trailing fraction of the run averaged for the output-voltage metric.
    pub metric_window: f64,
    /// End the run once a flyback has completed (switch open, freewheel over).
    pub stop_when_idle: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            step_scale: 1.0,
            event_tolerance: 1e-9,
            sample_interval: None,
            metric_window: 0.2,
            stop_when_idle: false,
        }
    }
}

impl SimOptions {
    pub fn halved(&self) -> Self {
        Self {
            step_scale: self.step_scale * 0.5,
            event_tolerance: self.event_tolerance * 0.5,
            ..*self
        }
    }

    pub fn sampled(mut self, interval: f64) -> Self {
        self.sample_interval = Some(interval);
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SimStats {
    pub steps: usize,
    pub events: usize,
    /// Largest |ΔQ_total − ∫(i_fly_diode − i_load)dt| seen over the run.
    pub max_charge_error: f64,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub samples: Vec<Sample>,
    pub ledger: EnergyLedger,
    pub flybacks: Vec<FlybackRecord>,
    pub final_state: CircuitState,
    /// Time average of V_OUT over the trailing metric window.
    pub mean_v_out: f64,
    pub short_circuit_regime: bool,
    pub stats: SimStats,
}

/// Branch quantities at one instant.
#[derive(Debug, Clone, Copy)]
struct Nodes {
    c: f64,
    v_a: f64,
    v_s: f64,
    v_r: f64,
    v_x: f64,
    i_d1: f64,
    i_d2: f64,
    i_sw: f64,
    i_df: f64,
    i_l: f64,
}

struct Network<'a> {
    p: &'a CircuitParams,
    drive: &'a CapacitanceDrive,
    g_load: f64,
}

struct Step {
    y_stage: State,
    y_end: State,
}

impl<'a> Network<'a> {
    fn new(p: &'a CircuitParams, drive: &'a CapacitanceDrive) -> Self {
        let g_load = if p.r_load.is_finite() { 1.0 / p.r_load } else { 0.0 };
        Self { p, drive, g_load }
    }

    fn nodes(&self, t: f64, y: &State, fl: &Conduction, sources: bool) -> Nodes {
        let p = self.p;
        let c = self.drive.eval(t);
        let v_a = y[0] / c;
        let v_s = y[1] / p.c_store;
        let v_r = y[2] / p.c_res;
        let i_l = y[3];
        let src = if sources { 1.0 } else { 0.0 };

        let (g1, j1) = p.d1.branch(fl.d1);
        let (g2, j2) = p.d2.branch(fl.d2);
        let (gf, jf) = p.d_fly.branch(fl.d_fly);
        let gs = if fl.switch {
            1.0 / p.switch.on_resistance
        } else {
            p.switch.off_conductance
        };
        let (j1, j2, jf) = (j1 * src, j2 * src, jf * src);

        let v_x = (gs * v_s + jf - i_l) / (gs + gf);
        Nodes {
            c,
            v_a,
            v_s,
            v_r,
            v_x,
            i_d1: g1 * (v_r - v_a) + j1,
            i_d2: g2 * (v_a - v_s) + j2,
            i_sw: gs * (v_s - v_x),
            i_df: gf * (-v_x) + jf,
            i_l,
        }
    }

    fn rate(&self, n: &Nodes) -> State {
        Vector4::new(
            n.i_d1 - n.i_d2,
            n.i_d2 - n.i_sw,
            n.i_l - self.g_load * n.v_r - n.i_d1,
            (n.v_x - n.v_r) / self.p.l_fly,
        )
    }

    fn deriv(&self, t: f64, y: &State, fl: &Conduction) -> State {
        self.rate(&self.nodes(t, y, fl, true))
    }

    /// `f(t, y) = A·y + b` for a fixed conduction pattern.
    fn affine(&self, t: f64, fl: &Conduction) -> (Matrix4<f64>, State) {
        let b = self.deriv(t, &State::zeros(), fl);
        let mut a = Matrix4::zeros();
        for j in 0..4 {
            let mut e = State::zeros();
            e[j] = 1.0;
            a.set_column(j, &self.rate(&self.nodes(t, &e, fl, false)));
        }
        (a, b)
    }

    fn implicit_solve(&self, t: f64, coef: f64, rhs: State, fl: &Conduction) -> Result<State> {
        let (a, b) = self.affine(t, fl);
        let m = Matrix4::identity() - a * coef;
        m.lu()
            .solve(&(rhs + b * coef))
            .ok_or_else(|| Error::Numerical(format!("singular circuit matrix at t = {t:e} s")))
    }

    fn trbdf2(&self, t: f64, h: f64, y0: &State, fl: &Conduction) -> Result<Step> {
        let f0 = self.deriv(t, y0, fl);
        let hg = 0.5 * GAMMA * h;
        let y_stage = self.implicit_solve(t + GAMMA * h, hg, y0 + f0 * hg, fl)?;
        let c1 = 1.0 / (GAMMA * (2.0 - GAMMA));
        let c0 = (1.0 - GAMMA) * (1.0 - GAMMA) / (GAMMA * (2.0 - GAMMA));
        let y_end = self.implicit_solve(t + h, W_LAST * h, y_stage * c1 - y0 * c0, fl)?;
        if !y_end.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!(
                "circuit integration diverged at t = {:e} s",
                t + h
            )));
        }
        Ok(Step { y_stage, y_end })
    }

    /// Elements whose conduction pattern disagrees with the state.
    fn violations(&self, t: f64, y: &State, fl: &Conduction) -> Conduction {
        let n = self.nodes(t, y, fl, true);
        let p = self.p;
        let check = |on: bool, v: f64, i: f64, vf: f64| {
            if on {
                i < -CURRENT_TOL
            } else {
                v - vf > VOLTAGE_TOL
            }
        };
        Conduction {
            d1: check(fl.d1, n.v_r - n.v_a, n.i_d1, p.d1.forward_drop),
            d2: check(fl.d2, n.v_a - n.v_s, n.i_d2, p.d2.forward_drop),
            d_fly: check(fl.d_fly, -n.v_x, n.i_df, p.d_fly.forward_drop),
            switch: false,
        }
    }

    /// With the switch and the flyback diode both blocking, only leakage
    /// holds the inductor, and its current relaxes to the leakage value
    /// with `τ = L·(g_sw + g_df)`. When `τ` is far below the step, jump
    /// there at once and return the state and the charge drawn from ground.
    fn collapse(&self, t: f64, y: &State, fl: &Conduction, h_fly: f64) -> Option<(State, f64)> {
        if fl.switch || fl.d_fly {
            return None;
        }
        let p = self.p;
        let g_sw = p.switch.off_conductance;
        let (g_df, j_df) = p.d_fly.branch(false);
        let g = g_sw + g_df;
        let tau = p.l_fly * g;
        if tau * 1e3 > h_fly {
            return None;
        }
        let n = self.nodes(t, y, fl, true);
        let i_rest = g_sw * n.v_s + j_df - g * n.v_r;
        let q = (y[3] - i_rest) * tau;
        let mut out = *y;
        out[1] -= q * g_sw / g;
        out[2] += q;
        out[3] = i_rest;
        Some((out, q * g_df / g))
    }

    /// Flip inconsistent diodes at a fixed instant until the pattern settles.
    fn settle(&self, t: f64, y: &State, fl: &mut Conduction) -> Result<usize> {
        for round in 0..MAX_EVENTS_PER_INSTANT {
            let v = self.violations(t, y, fl);
            if !v.any() {
                return Ok(round);
            }
            fl.toggle(&v);
        }
        Err(Error::Numerical(format!(
            "diode conduction pattern does not settle at t = {t:e} s"
        )))
    }

    /// Power terms at `t`; `t_ref` selects the smooth piece of C(t).
    fn powers(&self, t: f64, t_ref: f64, y: &State, fl: &Conduction) -> Powers {
        let n = self.nodes(t, y, fl, true);
        Powers {
            mech: -0.5 * n.v_a * n.v_a * self.drive.rate_on_piece(t, t_ref),
            load: self.g_load * n.v_r * n.v_r,
            fly_to_res: n.i_l * n.v_r,
            ground_current: n.i_df - self.g_load * n.v_r,
            v_out: n.v_r,
            i_l: n.i_l,
            i_load: self.g_load * n.v_r,
            v_branch: [n.v_r - n.v_a, n.v_a - n.v_s, n.v_s - n.v_x, -n.v_x],
        }
    }

    fn stored_energy(&self, t: f64, y: &State) -> f64 {
        let c = self.drive.eval(t);
        let p = self.p;
        0.5 * y[0] * y[0] / c
            + 0.5 * y[1] * y[1] / p.c_store
            + 0.5 * y[2] * y[2] / p.c_res
            + 0.5 * p.l_fly * y[3] * y[3]
    }

    fn sample(&self, t: f64, y: &State, fl: &Conduction) -> Sample {
        let n = self.nodes(t, y, fl, true);
        Sample {
            t,
            c_var: n.c,
            v_var: n.v_a,
            v_store: n.v_s,
            v_out: n.v_r,
            i_fly: n.i_l,
            conduction: *fl,
        }
    }

    fn short_circuit(&self, t: f64, y: &State, fl: &Conduction) -> bool {
        if !(fl.switch && fl.d1 && fl.d2) {
            return false;
        }
        let n = self.nodes(t, y, fl, true);
        n.v_x - n.v_r < 0.0
    }
}

#[derive(Debug, Clone, Copy)]
struct Powers {
    mech: f64,
    load: f64,
    fly_to_res: f64,
    ground_current: f64,
    v_out: f64,
    i_l: f64,
    i_load: f64,
    /// Branch voltages of D1, D2, switch and D_fly.
    v_branch: [f64; 4],
}

/// Energy and charge totals over one step.
struct StepTotals {
    mech: f64,
    load: f64,
    diss: f64,
    fly_to_res: f64,
    ground_charge: f64,
    v_out: f64,
}

impl Powers {
    /// Step integrals of the power terms.
    ///
    /// Branch charges come from KCL on the charge updates, which the scheme
    /// conserves exactly; currents recovered from voltage differences across
    /// a conducting diode are far less accurate. Smooth terms use the end
    /// points, since the trapezoidal stage reflects the fast diode modes
    /// about their slow manifold.
    fn integrate(a: &Self, b: &Self, c: &Self, h: f64, dq: &State) -> StepTotals {
        let trap = |f: fn(&Self) -> f64| 0.5 * h * (f(a) + f(c));
        let rk = |f: fn(&Self) -> f64| h * (W_EDGE * (f(a) + f(b)) + W_LAST * f(c));
        let q_l = rk(|p| p.i_l);
        let q_load = rk(|p| p.i_load);
        let q_d1 = q_l - q_load - dq[2];
        let q_d2 = q_d1 - dq[0];
        let q_sw = q_d2 - dq[1];
        let q_df = q_l - q_sw;
        let diss = [q_d1, q_d2, q_sw, q_df]
            .iter()
            .zip(a.v_branch.iter().zip(c.v_branch.iter()))
            .map(|(q, (va, vc))| q * 0.5 * (va + vc))
            .sum();
        StepTotals {
            mech: trap(|p| p.mech),
            load: trap(|p| p.load),
            diss,
            fly_to_res: trap(|p| p.fly_to_res),
            ground_charge: rk(|p| p.ground_current),
            v_out: trap(|p| p.v_out),
        }
    }
}

/// Index-based schedule of the instants every step must land on.
struct Schedule {
    metric_start: f64,
    metric_pending: bool,
    sample_dt: Option<f64>,
    next_sample: usize,
    clock_k: usize,
    clock_enabled: bool,
    period: f64,
    width: f64,
    offset: f64,
}

impl Schedule {
    fn rise(&self) -> f64 {
        self.offset + self.clock_k as f64 * self.period
    }

    fn fall(&self) -> f64 {
        self.rise() + self.width
    }

    fn next_clock(&self, switch_on: bool) -> f64 {
        if !self.clock_enabled {
            f64::INFINITY
        } else if switch_on {
            self.fall()
        } else {
            self.rise()
        }
    }

    fn next_sample_time(&self) -> f64 {
        self.sample_dt.map_or(f64::INFINITY, |dt| self.next_sample as f64 * dt)
    }
}

pub fn simulate(params: &CircuitParams, drive: &CapacitanceDrive, duration: f64) -> Result<SimResult> {
    simulate_with(params, drive, duration, &SimOptions::default())
}

pub fn simulate_with(
    params: &CircuitParams,
    drive: &CapacitanceDrive,
    duration: f64,
    opts: &SimOptions,
) -> Result<SimResult> {
    let init = CircuitState::precharged(params, drive);
    simulate_from(params, drive, init, duration, opts)
}

/// Integrate from an arbitrary state; `init.t` is the start time.
pub fn simulate_from(
    params: &CircuitParams,
    drive: &CapacitanceDrive,
    init: CircuitState,
    duration: f64,
    opts: &SimOptions,
) -> Result<SimResult> {
    params.validate()?;
    drive.validate()?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::Config(format!("duration must be positive, got {duration}")));
    }
    let t0 = init.t;
    let t_end = t0 + duration;
    if t_end > drive.span() * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "run ends at {t_end:e} s but the capacitance drive is only defined up to {:e} s",
            drive.span()
        )));
    }

    let net = Network::new(params, drive);
    let sw = &params.switch;
    let h_pump = opts.step_scale / (2000.0 * drive.mech_frequency());
    let h_fly = opts.step_scale * (sw.pulse_width / 20.0).min(params.flyback_time_scale() / 50.0);

    let mut sched = Schedule {
        metric_start: t_end - opts.metric_window * duration,
        metric_pending: opts.metric_window > 0.0,
        sample_dt: opts.sample_interval,
        next_sample: 0,
        clock_k: 0,
        clock_enabled: params.flyback_enabled,
        period: sw.clock_period,
        width: sw.pulse_width,
        offset: sw.clock_offset,
    };
    if let Some(dt) = sched.sample_dt {
        sched.next_sample = (t0 / dt).ceil() as usize;
    }
    if sched.clock_enabled {
        // skip pulses that ended before the start
        while sched.fall() <= t0 {
            sched.clock_k += 1;
        }
    }
    let mut next_kink = drive.next_kink(t0);

    let mut t = t0;
    let mut y = init.vector();
    let mut fl = init.conduction;
    fl.switch = sched.clock_enabled && sched.rise() <= t0 && t0 < sched.fall();
    net.settle(t, &y, &mut fl)?;

    let mut samples = Vec::new();
    let mut flybacks: Vec<FlybackRecord> = Vec::new();
    let mut open_fly: Option<(FlybackRecord, f64)> = None;
    let mut stats = SimStats::default();
    let mut short_circuit_regime = false;

    let e_start = net.stored_energy(t, &y);
    let q_start = y[0] + y[1] + y[2];
    let (mut e_mech, mut e_load, mut e_diss, mut e_fly) = (0.0, 0.0, 0.0, 0.0);
    let mut ground_charge = 0.0;
    let mut v_out_integral = 0.0;
    let mut metric_active = !sched.metric_pending;
    let mut metric_t0 = if metric_active { t0 } else { f64::NAN };
    let mut stall = 0usize;
    let mut freewheel_seen = false;

    let record = |samples: &mut Vec<Sample>, t: f64, y: &State, fl: &Conduction| {
        samples.push(net.sample(t, y, fl));
    };
    if sched.next_sample_time() <= t0 {
        record(&mut samples, t, &y, &fl);
        sched.next_sample += 1;
    }
    if fl.switch {
        open_fly = Some((
            FlybackRecord {
                t_on: t,
                v_store_before: y[1] / params.c_store,
                v_store_after: y[1] / params.c_store,
                v_out_before: y[2] / params.c_res,
                energy_to_res: 0.0,
                short_circuit: false,
            },
            e_fly,
        ));
    }

    while t < t_end {
        let metric_bp = if sched.metric_pending { sched.metric_start } else { f64::INFINITY };
        let bp = sched
            .next_clock(fl.switch)
            .min(next_kink)
            .min(sched.next_sample_time())
            .min(metric_bp)
            .min(t_end);
        let h_lim = if fl.switch || fl.d_fly { h_fly } else { h_pump };
        let to_bp = bp - t;
        let (mut h, mut lands) = if to_bp <= h_lim * (1.0 + 1e-9) {
            (to_bp, true)
        } else {
            (h_lim, false)
        };

        let mut step = net.trbdf2(t, h, &y, &fl)?;
        let mut flips = net.violations(t + h, &step.y_end, &fl);
        if flips.any() {
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > opts.event_tolerance {
                let mid = 0.5 * (lo + hi);
                let trial = net.trbdf2(t, mid, &y, &fl)?;
                let v = net.violations(t + mid, &trial.y_end, &fl);
                if v.any() {
                    hi = mid;
                    step = trial;
                    flips = v;
                } else {
                    lo = mid;
                }
            }
            if hi < h {
                h = hi;
                lands = false;
            }
            stats.events += 1;
        }

        let t_new = if lands { bp } else { t + h };
        let mid = 0.5 * (t + t_new);
        let a = net.powers(t, mid, &y, &fl);
        let b = net.powers(t + GAMMA * h, mid, &step.y_stage, &fl);
        let c = net.powers(t_new, mid, &step.y_end, &fl);
        let tot = Powers::integrate(&a, &b, &c, h, &(step.y_end - y));
        let (dm, dl, dd, dfr, dq, dv) =
            (tot.mech, tot.load, tot.diss, tot.fly_to_res, tot.ground_charge, tot.v_out);
        e_mech += dm;
        e_load += dl;
        e_diss += dd;
        e_fly += dfr;
        ground_charge += dq;
        if metric_active {
            v_out_integral += dv;
        }
        if net.short_circuit(t_new, &step.y_end, &fl) {
            short_circuit_regime = true;
            if let Some((rec, _)) = open_fly.as_mut() {
                rec.short_circuit = true;
            }
        }

        t = t_new;
        y = step.y_end;
        stats.steps += 1;
        let q_err = ((y[0] + y[1] + y[2]) - q_start - ground_charge).abs();
        stats.max_charge_error = stats.max_charge_error.max(q_err);

        if h < 2.0 * opts.event_tolerance {
            stall += 1;
            if stall > MAX_EVENTS_PER_INSTANT {
                return Err(Error::Numerical(format!(
                    "conduction pattern chatters near t = {t:e} s; reduce the step or event tolerance"
                )));
            }
        } else {
            stall = 0;
        }

        if flips.any() {
            fl.toggle(&flips);
        }
        if lands {
            if bp == sched.next_clock(fl.switch) {
                if fl.switch {
                    fl.switch = false;
                    if let Some((rec, _)) = open_fly.as_mut() {
                        rec.v_store_after = y[1] / params.c_store;
                    }
                    sched.clock_k += 1;
                } else {
                    fl.switch = true;
                    if let Some((mut rec, e0)) = open_fly.take() {
                        rec.energy_to_res = e_fly - e0;
                        flybacks.push(rec);
                    }
                    open_fly = Some((
                        FlybackRecord {
                            t_on: t,
                            v_store_before: y[1] / params.c_store,
                            v_store_after: y[1] / params.c_store,
                            v_out_before: y[2] / params.c_res,
                            energy_to_res: 0.0,
                            short_circuit: false,
                        },
                        e_fly,
                    ));
                }
            }
            if bp == next_kink {
                next_kink = drive.next_kink(t);
            }
            if sched.metric_pending && bp == sched.metric_start {
                sched.metric_pending = false;
                metric_active = true;
                metric_t0 = t;
            }
            if bp == sched.next_sample_time() {
                record(&mut samples, t, &y, &fl);
                sched.next_sample += 1;
            }
        }
        stats.events += net.settle(t, &y, &mut fl)?;
        if let Some((y_new, q_ground)) = net.collapse(t, &y, &fl, h_fly) {
            e_diss += net.stored_energy(t, &y) - net.stored_energy(t, &y_new);
            ground_charge += q_ground;
            y = y_new;
        }

        if fl.d_fly {
            freewheel_seen = true;
        }
        if opts.stop_when_idle && !fl.switch && !fl.d_fly && (freewheel_seen || sched.clock_k > 0) {
            break;
        }
    }

    if samples.last().is_none_or(|s| s.t < t) {
        record(&mut samples, t, &y, &fl);
    }
    if let Some((mut rec, e0)) = open_fly.take() {
        rec.energy_to_res = e_fly - e0;
        if fl.switch {
            rec.v_store_after = y[1] / params.c_store;
        }
        flybacks.push(rec);
    }

    let e_end = net.stored_energy(t, &y);
    let ledger = EnergyLedger::new(e_mech, 0.0, e_load, e_diss, e_end - e_start, e_fly);
    let window = t - metric_t0;
    let mean_v_out = if window > 0.0 {
        v_out_integral / window
    } else {
        y[2] / params.c_res
    };
    let final_state = CircuitState {
        t,
        q_var: y[0],
        q_store: y[1],
        q_res: y[2],
        i_fly: y[3],
        c_var: drive.eval(t),
        conduction: fl,
    };
    Ok(SimResult {
        samples,
        ledger,
        flybacks,
        final_state,
        mean_v_out,
        short_circuit_regime,
        stats,
    })
}

/// Outcome of an isolated switch closure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlybackOutcome {
    pub state: CircuitState,
    pub energy_to_res: f64,
    pub short_circuit_regime: bool,
}

/// Close the switch at `state.t` for one pulse width and let the inductor
/// freewheel until its current is back to zero. The variable capacitor is
/// frozen at `state.c_var` (the event lasts microseconds).
pub fn flyback_event(state: &CircuitState, params: &CircuitParams) -> Result<FlybackOutcome> {
    let c = state.c_var;
    let drive = CapacitanceDrive::DirectSine {
        c_max: c,
        c_min: c,
        frequency: 1.0,
    };
    let mut p = *params;
    p.flyback_enabled = true;
    p.switch.clock_offset = state.t;
    p.switch.clock_period = p.switch.clock_period.max(1.0);
    let ring = p.flyback_time_scale();
    let v_span = (state.v_store(params) - state.v_res(params)).abs() + 1.0;
    let v_floor = state.v_res(params).max(params.d_fly.forward_drop).max(1e-3);
    // generous bound on the freewheel duration
    let freewheel = 4.0 * ring * (1.0 + v_span / v_floor);
    let opts = SimOptions {
        metric_window: 0.0,
        stop_when_idle: true,
        ..SimOptions::default()
    };
    let mut start = *state;
    start.conduction.switch = false;
    let run = simulate_from(&p, &drive, start, p.switch.pulse_width + freewheel, &opts)?;
    Ok(FlybackOutcome {
        state: run.final_state,
        energy_to_res: run.ledger.e_flyback_to_res,
        short_circuit_regime: run.short_circuit_regime,
    })
}

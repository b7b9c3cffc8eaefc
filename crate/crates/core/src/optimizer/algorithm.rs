//! Outer iteration, integer rounding of the blocklength and post-hoc
//! verification against the original (non-convexified) constraints.
//!
//! The processor count `N_GPP` makes the energy objective a staircase in `L`.
//! Each outer run keeps `N_GPP` fixed and restricts `L` to the interval where
//! that many processors suffice, so the fixed objective is an upper bound of
//! the true one and the trace is monotone. Runs for different processor
//! counts are ordered by a lower bound and pruned once the bound exceeds the
//! best energy found.

use super::barrier::{self, SolveOptions};
use super::subproblem::{self, Constants};
use super::{IterateState, Mode};
use crate::detection::DetectorKind;
use crate::energy::{self, EnergyReport, OpsBreakdown};
use crate::metrics::{self, BlocklengthPlan};
use crate::moments::MomentStats;
use crate::scenario::Scenario;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct OptimizerOptions {
    /// Relative objective decrease below which the iteration stops.
    pub epsilon: f64,
    /// Slack value below which the sensing slack is removed.
    pub epsilon_chi: f64,
    /// Slack penalty weight (on the normalized objective).
    pub lambda: f64,
    pub max_iterations: usize,
    /// Required `|L̄(L − L_p) − 1|` before stopping.
    pub tightness_tol: f64,
    /// Detector whose processing cost enters the objective.
    pub detector: DetectorKind,
    pub solver: SolveOptions,
    /// Starting point instead of the default initialization.
    pub warm_start: Option<IterateState>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            epsilon_chi: 1e-6,
            lambda: 10.0,
            max_iterations: 30,
            tightness_tol: 1e-7,
            detector: DetectorKind::ClutterAware,
            solver: SolveOptions::default(),
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective plus slack penalty (J, without the constant `f1/B`).
    pub objective: f64,
    pub chi0: f64,
    /// Largest relative violation of the original constraints at the
    /// continuous iterate (negative when all hold with margin).
    pub max_violation: f64,
    pub blocklength: f64,
    pub tightness: f64,
    pub newton_steps: usize,
    pub n_gpp: u64,
}

/// Check of a power vector and integer blocklength against the original constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub sinr: Vec<f64>,
    pub dep_ub: Vec<f64>,
    pub sensing_sinr: Option<f64>,
    /// `max_k ‖F_k q‖` (√W).
    pub max_ap_amplitude: f64,
    pub reliability_ok: bool,
    pub sensing_ok: bool,
    pub power_ok: bool,
    pub blocklength_ok: bool,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.reliability_ok && self.sensing_ok && self.power_ok && self.blocklength_ok
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationResult {
    pub mode: Mode,
    pub detector: Option<DetectorKind>,
    /// Powers `ρ_j` (W), index 0 is the sensing stream.
    pub rho: Vec<f64>,
    pub blocklength: usize,
    /// Largest admissible blocklength.
    pub l_cap: usize,
    /// `E_total` per block (J).
    pub objective: f64,
    pub energy: EnergyReport,
    /// Transmit energy `Δ^tr L_d Σρ / B` (J).
    pub tx_energy: f64,
    pub feasible: bool,
    pub report: Option<FeasibilityReport>,
    pub trace: Vec<IterationRecord>,
    pub state: Option<IterateState>,
    /// Outer iterations of the selected run.
    pub iterations: usize,
    /// Subproblems solved over all runs.
    pub subproblems: usize,
    pub newton_steps: usize,
    pub message: Option<String>,
}

/// Verify `ρ` and `L` against reliability, sensing, per-AP power and blocklength bounds.
pub fn verify(s: &Scenario, stats: &MomentStats, mode: Mode, rho: &[f64], blocklength: usize, l_cap: usize) -> Result<FeasibilityReport> {
    let r = &s.radio;
    let plan = BlocklengthPlan::new(blocklength, r.pilot_length)?;
    let sinr = metrics::sinr_dl_lb(rho, &stats.b, &stats.a2(), r.noise_power);
    let dep_ub: Vec<f64> =
        sinr.iter().zip(&s.urllc).map(|(g, u)| metrics::dep_upper_bound(*g, &plan, u.packet_bits)).collect();
    let reliability_ok = dep_ub.iter().zip(&s.urllc).all(|(d, u)| *d <= u.dep_threshold * (1.0 + 1e-6));
    let sensing_sinr = mode.sensing().then(|| {
        let amp: Vec<f64> = rho.iter().map(|p| p.max(0.0).sqrt()).collect();
        metrics::avg_sensing_sinr(&amp, &stats.a_d, &stats.b_d, r.antennas_per_ap, r.num_rx_aps, r.noise_power)
    });
    let sensing_ok = sensing_sinr.map_or(true, |v| v >= s.sensing.sinr_threshold * (1.0 - 1e-4));
    let max_ap_amplitude = stats
        .f
        .iter()
        .map(|fk| fk.iter().zip(rho).map(|(f, p)| f * p).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    Ok(FeasibilityReport {
        sinr,
        dep_ub,
        sensing_sinr,
        max_ap_amplitude,
        reliability_ok,
        sensing_ok,
        power_ok: max_ap_amplitude <= r.max_tx_power.sqrt() + 1e-9,
        blocklength_ok: blocklength > r.pilot_length && blocklength <= l_cap,
    })
}

/// Fraction of drops with a feasible allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Availability {
    pub fraction: f64,
    pub per_drop: Vec<bool>,
}

/// Run `allocate` for drops `0..n_drops` and count feasible outcomes.
pub fn network_availability<F>(n_drops: usize, mut allocate: F) -> Result<Availability>
where
    F: FnMut(usize) -> Result<AllocationResult>,
{
    if n_drops == 0 {
        return Err(Error::NonPositive { what: "n_drops", value: 0.0 });
    }
    let per_drop = (0..n_drops).map(|d| allocate(d).map(|r| r.feasible)).collect::<Result<Vec<_>>>()?;
    let fraction = per_drop.iter().filter(|f| **f).count() as f64 / n_drops as f64;
    Ok(Availability { fraction, per_drop })
}

/// Relinearizations allowed while searching for a first feasible subproblem.
const MAX_PURSUIT_ROUNDS: usize = 25;

struct Ctx<'a> {
    s: &'a Scenario,
    stats: &'a MomentStats,
    mode: Mode,
    opts: &'a OptimizerOptions,
    ops: OpsBreakdown,
    l_cap: usize,
}

struct Run {
    state: IterateState,
    trace: Vec<IterationRecord>,
    newton_steps: usize,
    message: Option<String>,
}

struct Candidate {
    run: Run,
    rho: Vec<f64>,
    blocklength: usize,
    report: FeasibilityReport,
    energy: EnergyReport,
}

impl Candidate {
    fn better_than(&self, other: &Candidate) -> bool {
        match (self.report.feasible(), other.report.feasible()) {
            (true, false) => true,
            (false, true) => false,
            _ => self.energy.e_total < other.energy.e_total,
        }
    }
}

impl Ctx<'_> {
    fn sensing(&self) -> bool {
        self.mode.sensing()
    }

    fn pilot(&self) -> usize {
        self.s.radio.pilot_length
    }

    fn constants(&self, range: (f64, f64), n_gpp: u64) -> Result<Constants> {
        let terms = energy::objective_terms_with_gpp(self.s, &self.ops, n_gpp, self.sensing());
        Constants::new(self.s, self.stats, self.mode, range, terms.p_fixed + terms.f2, terms.f2, self.opts.lambda)
    }

    fn n_gpp_at(&self, l: f64) -> u64 {
        energy::objective_terms_real(self.s, l, &self.ops, self.sensing()).n_gpp
    }

    /// Blocklengths in `[lo, hi]` that `n` processors can serve.
    fn gpp_interval(&self, n: u64, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let fixed = (self.ops.comm_fixed() + self.ops.sensing_fixed()) as f64;
        let per = (self.ops.comm_per_symbol + self.ops.sensing_per_symbol) as f64;
        let alpha = n as f64 * self.s.power_model.gpp_capacity_gops * 1e9 / self.s.radio.bandwidth - per;
        let beta = fixed - per * self.pilot() as f64;
        let (mut a, mut b) = (lo, hi);
        if alpha > 0.0 {
            a = a.max(beta / alpha);
        } else if alpha < 0.0 {
            b = b.min(beta / alpha);
        } else if beta > 0.0 {
            return None;
        }
        (b - a > 1e-6).then_some((a, b))
    }

    /// Default starting point: tiny equal amplitudes and `L̄ = 1/(L_max − L_p)`.
    fn initial_state(&self, c: &Constants) -> IterateState {
        let r = &self.s.radio;
        let q_ue = 1e-3 * (r.max_tx_power / r.num_ues as f64).sqrt();
        let mut q = vec![q_ue; r.num_ues + 1];
        if !self.sensing() {
            q[0] = 0.0;
        }
        let mut st = IterateState {
            q,
            chi: vec![0.0; r.num_ues],
            r: vec![0.0; r.num_ues],
            l: c.l_hi,
            l_bar: 1.0 / (c.l_hi - c.pilot),
            chi0: 0.0,
        };
        self.refresh_auxiliaries(c, &mut st);
        st
    }

    /// Set `χ`, `r` and the slack to values consistent with the amplitudes.
    fn refresh_auxiliaries(&self, c: &Constants, st: &mut IterateState) {
        for (i, (sinr, interference)) in subproblem::sinr_terms(c, st).into_iter().enumerate() {
            st.chi[i] = sinr;
            st.r[i] = interference * c.noise_power * (1.0 + 1e-3);
        }
        st.chi0 = if self.sensing() { subproblem::sensing_residual(c, st).max(0.0) + 1.0 } else { 0.0 };
    }

    /// Largest relative violation of the original constraints at a continuous state.
    fn violation(&self, c: &Constants, st: &IterateState) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        let data = st.l - c.pilot;
        for (i, (sinr, _)) in subproblem::sinr_terms(c, st).into_iter().enumerate() {
            let u = &self.s.urllc[i];
            let dep = metrics::dep_upper_bound_real(sinr, data, u.packet_bits);
            worst = worst.max(dep / u.dep_threshold - 1.0);
        }
        if self.sensing() {
            let p = c.max_tx_power;
            let (num, den) = st.q.iter().enumerate().fold((0.0, 1.0), |(n, d), (j, q)| {
                let q2 = q * q / p;
                (n + c.a_d_hat[j] * q2, d + c.b_d_hat[j] * q2)
            });
            worst = worst.max(1.0 - num / den / c.gamma);
        }
        let sp = c.max_tx_power.sqrt();
        for fk in &c.f {
            let amp = fk.iter().zip(&st.q).map(|(f, q)| f * q * q).sum::<f64>().sqrt();
            worst = worst.max(amp / sp - 1.0);
        }
        worst
    }

    /// Outer iteration with a fixed objective. Errors only when the first
    /// subproblem has no feasible point.
    fn ccp(&self, c: &Constants, start: IterateState, n_gpp: u64) -> Result<Run> {
        let opts = self.opts;
        let mut state = start;
        let mut slack = self.sensing() && state.chi0 > 0.0;
        let mut trace = Vec::new();
        let mut newton_steps = 0;
        let mut message = None;
        let mut previous: Option<f64> = None;
        let mut pursued = false;
        for it in 1..=opts.max_iterations {
            let sub = subproblem::build(c, &state, slack)?;
            let mut z0 = sub.layout.pack(c, &state);
            sub.layout.interior(c, &mut z0);
            let sol = match barrier::solve(&sub.program, &z0, &opts.solver) {
                Ok(sol) => sol,
                Err(Error::Infeasible(_)) if it == 1 && !pursued => {
                    let (moved, steps) = self.pursue(c, &state, slack)?;
                    newton_steps += steps;
                    pursued = true;
                    state = moved;
                    let sub = subproblem::build(c, &state, slack)?;
                    let mut z0 = sub.layout.pack(c, &state);
                    sub.layout.interior(c, &mut z0);
                    barrier::solve(&sub.program, &z0, &opts.solver)?
                }
                Err(e) if it == 1 => return Err(e),
                Err(e) => {
                    message = Some(format!("stopped at iteration {it}: {e}"));
                    break;
                }
            };
            newton_steps += sol.newton_steps;
            let mut next = sub.layout.unpack(c, &sol.z);
            // exact minimization over L̄ given the other variables
            let tangent = 2.0 * state.l_bar - state.l_bar * state.l_bar * (next.l - c.pilot);
            if tangent > next.l_bar {
                next.l_bar = tangent;
            }
            if slack && next.chi0 < opts.epsilon_chi {
                slack = false;
                next.chi0 = 0.0;
            }
            // optimal fractional-programming auxiliaries for the new amplitudes
            for (i, (sinr, interference)) in subproblem::sinr_terms(c, &next).into_iter().enumerate() {
                next.chi[i] = sinr;
                next.r[i] = interference * c.noise_power * (1.0 + 1e-9);
            }
            let value = c.energy_value(&next) + c.penalty_value(&next);
            let tightness = next.tightness(self.pilot());
            trace.push(IterationRecord {
                iteration: it,
                objective: value,
                chi0: next.chi0,
                max_violation: self.violation(c, &next),
                blocklength: next.l,
                tightness,
                newton_steps: sol.newton_steps,
                n_gpp,
            });
            let small = previous.is_some_and(|p| p - value < opts.epsilon * value.abs());
            previous = Some(value);
            state = next;
            if small && !slack && tightness <= opts.tightness_tol {
                break;
            }
        }
        Ok(Run { state, trace, newton_steps, message })
    }

    /// Feasible-point pursuit for the first subproblem: move the
    /// linearization point to the phase-I minimizer until the convexified
    /// rows admit a strictly feasible point. Errors when the common shift
    /// stops improving.
    fn pursue(&self, c: &Constants, start: &IterateState, slack: bool) -> Result<(IterateState, usize)> {
        let mut state = start.clone();
        let mut steps = 0;
        let mut best = f64::INFINITY;
        for _ in 0..MAX_PURSUIT_ROUNDS {
            let sub = subproblem::build(c, &state, slack)?;
            let mut z0 = sub.layout.pack(c, &state);
            sub.layout.interior(c, &mut z0);
            let p1 = barrier::phase_one(&sub.program, &z0, &self.opts.solver)?;
            steps += p1.newton_steps;
            if p1.shift < 0.0 {
                return Ok((state, steps));
            }
            if p1.shift > best * (1.0 - 1e-3) {
                break;
            }
            best = p1.shift;
            let mut next = sub.layout.unpack(c, &p1.z);
            next.l_bar = next.l_bar.max(2.0 * state.l_bar - state.l_bar * state.l_bar * (next.l - c.pilot));
            for (i, (sinr, interference)) in subproblem::sinr_terms(c, &next).into_iter().enumerate() {
                next.chi[i] = sinr;
                next.r[i] = interference * c.noise_power * (1.0 + 1e-9);
            }
            state = next;
        }
        Err(Error::Infeasible(format!("feasible-point pursuit stalled at shift {best:.3e}")))
    }

    /// Round the blocklength down, then move up until reliability holds.
    fn finalize(&self, run: Run) -> Result<Candidate> {
        let l_p = self.pilot();
        let mut rho = run.state.powers();
        if !self.sensing() {
            rho[0] = 0.0;
        }
        let mut blocklength = ((run.state.l + 1e-9).floor() as usize).clamp(l_p + 1, self.l_cap);
        let mut report = verify(self.s, self.stats, self.mode, &rho, blocklength, self.l_cap)?;
        for _ in 0..64 {
            if report.reliability_ok || blocklength >= self.l_cap {
                break;
            }
            blocklength += 1;
            report = verify(self.s, self.stats, self.mode, &rho, blocklength, self.l_cap)?;
        }
        let plan = BlocklengthPlan::new(blocklength, l_p)?;
        let energy = energy::total_energy(rho.iter().sum(), &plan, self.s, &self.ops, self.sensing());
        Ok(Candidate { run, rho, blocklength, report, energy })
    }

    fn warm(&self, c: &Constants, from: &IterateState) -> IterateState {
        let mut st = from.clone();
        let pad = 1e-6 * (c.l_hi - c.l_lo);
        st.l = st.l.clamp(c.l_lo + pad, c.l_hi - pad);
        st.l_bar = st.l_bar.min((1.0 - 1e-6) / (st.l - c.pilot)).max(c.lbar_min * 2.0);
        if !self.sensing() {
            st.q[0] = 0.0;
        }
        st
    }
}

fn infeasible_result(ctx: &Ctx, l_cap: usize, message: String) -> Result<AllocationResult> {
    let s = ctx.s;
    let l_p = s.radio.pilot_length;
    let blocklength = l_cap.max(l_p + 1);
    let plan = BlocklengthPlan::new(blocklength, l_p)?;
    let rho = vec![0.0; s.radio.num_ues + 1];
    let energy = energy::total_energy(0.0, &plan, s, &ctx.ops, ctx.sensing());
    Ok(AllocationResult {
        mode: ctx.mode,
        detector: ctx.sensing().then_some(ctx.opts.detector),
        rho,
        blocklength,
        l_cap,
        objective: energy.e_total,
        energy,
        tx_energy: 0.0,
        feasible: false,
        report: None,
        trace: Vec::new(),
        state: None,
        iterations: 0,
        subproblems: 0,
        newton_steps: 0,
        message: Some(message),
    })
}

/// Energy-minimizing power and blocklength allocation. A warm-started run
/// that ends infeasible is repeated from the default initialization.
pub fn run_algorithm1(s: &Scenario, stats: &MomentStats, mode: Mode, opts: &OptimizerOptions) -> Result<AllocationResult> {
    let first = run_once(s, stats, mode, opts)?;
    if first.feasible || opts.warm_start.is_none() {
        return Ok(first);
    }
    let cold = OptimizerOptions { warm_start: None, ..opts.clone() };
    let mut second = run_once(s, stats, mode, &cold)?;
    second.subproblems += first.subproblems;
    second.newton_steps += first.newton_steps;
    Ok(second)
}

fn run_once(s: &Scenario, stats: &MomentStats, mode: Mode, opts: &OptimizerOptions) -> Result<AllocationResult> {
    let sensing = mode.sensing();
    let r = &s.radio;
    let l_p = r.pilot_length;
    let ops = energy::count_ops(s, sensing.then_some(opts.detector));
    let l_cap = match metrics::max_blocklength(&s.urllc, sensing.then_some(&s.sensing), r.bandwidth, l_p) {
        Ok(l) => l,
        Err(Error::InfeasibleBlocklength { l_max, .. }) => {
            let ctx = Ctx { s, stats, mode, opts, ops, l_cap: l_p + 1 };
            let cap = l_max.max(0.0).floor() as usize;
            let mut res = infeasible_result(&ctx, l_p + 1, format!("blocklength cap {l_max:.3} leaves no data symbols"))?;
            res.l_cap = cap;
            return Ok(res);
        }
        Err(e) => return Err(e),
    };
    let ctx = Ctx { s, stats, mode, opts, ops, l_cap };
    let full = ((l_p + 1) as f64, l_cap as f64);

    // processor counts to explore; the first covers the whole interval
    let counts: Vec<u64> = if mode == Mode::TxOnlyIsac {
        vec![ctx.n_gpp_at(l_cap as f64)]
    } else {
        let (a, b) = (ctx.n_gpp_at(full.0), ctx.n_gpp_at(full.1));
        let (lo, hi) = (a.min(b), a.max(b));
        (lo..=hi).rev().collect()
    };

    let mut best: Option<Candidate> = None;
    let mut subproblems = 0;
    let mut newton_steps = 0;
    let mut first_error = None;
    let mut explored = vec![false; counts.len()];
    loop {
        // pick the unexplored count with the smallest lower bound
        let mut pick: Option<(usize, (f64, f64), f64)> = None;
        for (idx, &n) in counts.iter().enumerate() {
            if explored[idx] {
                continue;
            }
            let range = if idx == 0 { Some(full) } else { ctx.gpp_interval(n, full.0, full.1) };
            let Some(range) = range else {
                explored[idx] = true;
                continue;
            };
            let terms = energy::objective_terms_with_gpp(s, &ctx.ops, n, sensing);
            let bound = if idx == 0 {
                f64::NEG_INFINITY
            } else {
                (range.0 * terms.p_fixed + (range.0 - l_p as f64) * terms.f2 + terms.f1) / r.bandwidth
            };
            if pick.is_none_or(|(_, _, b)| bound < b) {
                pick = Some((idx, range, bound));
            }
        }
        let Some((idx, range, bound)) = pick else { break };
        explored[idx] = true;
        if let Some(b) = &best {
            if b.report.feasible() && bound >= b.energy.e_total {
                break;
            }
        }
        let n = counts[idx];
        let c = ctx.constants(range, n)?;
        let starts: Vec<IterateState> = match (&best, &opts.warm_start) {
            (Some(b), _) => vec![ctx.warm(&c, &b.run.state)],
            (None, Some(w)) => {
                let mut st = ctx.warm(&c, w);
                ctx.refresh_auxiliaries(&c, &mut st);
                vec![st, ctx.initial_state(&c)]
            }
            (None, None) => vec![ctx.initial_state(&c)],
        };
        let mut outcome = None;
        for start in starts {
            match ctx.ccp(&c, start, n) {
                Ok(run) => {
                    outcome = Some(run);
                    break;
                }
                Err(e) => {
                    subproblems += 1;
                    first_error.get_or_insert(e.to_string());
                }
            }
        }
        let Some(run) = outcome else { continue };
        subproblems += run.trace.len();
        newton_steps += run.newton_steps;
        let cand = ctx.finalize(run)?;
        if best.as_ref().is_none_or(|b| cand.better_than(b)) {
            best = Some(cand);
        }
    }

    let Some(best) = best else {
        let msg = first_error.unwrap_or_else(|| "no admissible blocklength".into());
        let mut res = infeasible_result(&ctx, l_cap, msg)?;
        res.subproblems = subproblems;
        return Ok(res);
    };
    let feasible = best.report.feasible() && best.run.state.chi0 == 0.0;
    let data = (best.blocklength - l_p) as f64;
    let tx_energy = s.power_model.delta_tr * data * best.rho.iter().sum::<f64>() / r.bandwidth;
    Ok(AllocationResult {
        mode,
        detector: sensing.then_some(opts.detector),
        rho: best.rho,
        blocklength: best.blocklength,
        l_cap,
        objective: best.energy.e_total,
        energy: best.energy,
        tx_energy,
        feasible,
        report: Some(best.report),
        iterations: best.run.trace.len(),
        trace: best.run.trace,
        state: Some(best.run.state),
        subproblems,
        newton_steps,
        message: best.run.message,
    })
}

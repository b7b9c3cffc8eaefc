//! The convex subproblem solved at each outer iteration.
//!
//! Variables are normalized so that every row is O(1): amplitudes are
//! divided by `√P_tx`, the auxiliary interference variables by `σ²`, and the
//! sensing slack by the receiver noise floor `M N_rx σ²`.
//!
//! Layout of the decision vector: `[q (sensing first when present), χ, r, L, L̄, χ0?]`.

use super::barrier::{Constraint, Matrix, Program, Row, Smooth, Vector};
use super::{IterateState, Mode};
use crate::moments::MomentStats;
use crate::scenario::Scenario;
use crate::{metrics, Error, Result};

/// Iteration-independent data of the subproblem, in normalized units.
#[derive(Debug, Clone)]
pub struct Constants {
    pub mode: Mode,
    pub n_ue: usize,
    pub max_tx_power: f64,
    pub noise_power: f64,
    /// `√(P/σ²)·b_i`.
    pub b_hat: Vec<f64>,
    /// `√(P/σ²)·a_ij`, `[ue][j]` with `j = 0..=N_ue`.
    pub a_hat: Vec<Vec<f64>>,
    /// Per-AP power weights, `[tx_ap][j]`.
    pub f: Vec<Vec<f64>>,
    /// `P·A_D/(N_rx σ²)`.
    pub a_d_hat: Vec<f64>,
    /// `P·B_D/(M N_rx σ²)`.
    pub b_d_hat: Vec<f64>,
    pub gamma: f64,
    pub q_inv: Vec<f64>,
    /// `b_i ln 2`.
    pub bits_ln2: Vec<f64>,
    pub pilot: f64,
    pub l_lo: f64,
    pub l_hi: f64,
    pub lbar_min: f64,
    pub bandwidth: f64,
    /// `Δ^tr·P`.
    pub delta_p: f64,
    /// Per-symbol coefficient of `L` in the energy objective (`P_FIXED + f2`), zero for tx-only.
    pub per_symbol: f64,
    /// `f2` (only enters the reported value through `−L_p f2`).
    pub f2: f64,
    pub lambda: f64,
    /// Objective normalization (J).
    pub reference: f64,
}

impl Constants {
    pub fn new(
        s: &Scenario,
        stats: &MomentStats,
        mode: Mode,
        l_range: (f64, f64),
        per_symbol: f64,
        f2: f64,
        lambda: f64,
    ) -> Result<Self> {
        let r = &s.radio;
        let n_ue = r.num_ues;
        if stats.b.len() != n_ue || stats.a.len() != n_ue {
            return Err(Error::LengthMismatch { expected: n_ue, got: stats.b.len().min(stats.a.len()) });
        }
        if stats.f.len() != r.num_tx_aps {
            return Err(Error::LengthMismatch { expected: r.num_tx_aps, got: stats.f.len() });
        }
        let p = r.max_tx_power;
        let sigma2 = r.noise_power;
        let amp = (p / sigma2).sqrt();
        let m = r.antennas_per_ap as f64;
        let n_rx = r.num_rx_aps as f64;
        let q_inv = s.urllc.iter().map(|u| metrics::q_inv(u.dep_threshold)).collect::<Result<Vec<_>>>()?;
        let pilot = r.pilot_length as f64;
        let l_max = l_range.1;
        let delta_p = s.power_model.delta_tr * p;
        let reference = match mode {
            Mode::TxOnlyIsac => delta_p * r.num_tx_aps as f64 * (l_max - pilot) / r.bandwidth,
            _ => per_symbol * l_max / r.bandwidth,
        };
        if !(reference > 0.0) {
            return Err(Error::NonPositive { what: "objective reference", value: reference });
        }
        Ok(Self {
            mode,
            n_ue,
            max_tx_power: p,
            noise_power: sigma2,
            b_hat: stats.b.iter().map(|b| b * amp).collect(),
            a_hat: stats.a.iter().map(|row| row.iter().map(|a| a * amp).collect()).collect(),
            f: stats.f.clone(),
            a_d_hat: stats.a_d.iter().map(|a| p * a / (n_rx * sigma2)).collect(),
            b_d_hat: stats.b_d.iter().map(|b| p * b / (m * n_rx * sigma2)).collect(),
            gamma: s.sensing.sinr_threshold,
            q_inv,
            bits_ln2: s.urllc.iter().map(|u| u.packet_bits * std::f64::consts::LN_2).collect(),
            pilot,
            l_lo: l_range.0,
            l_hi: l_range.1,
            lbar_min: 1e-3 / (l_max - pilot),
            bandwidth: r.bandwidth,
            delta_p,
            per_symbol: if mode == Mode::TxOnlyIsac { 0.0 } else { per_symbol },
            f2: if mode == Mode::TxOnlyIsac { 0.0 } else { f2 },
            lambda,
            reference,
        })
    }

    pub fn sensing(&self) -> bool {
        self.mode.sensing()
    }

    /// Objective value in joules (without the constant `f1/B`), excluding the slack penalty.
    pub fn energy_value(&self, state: &IterateState) -> f64 {
        let q2: f64 = state.q_norm2() / self.max_tx_power;
        (self.per_symbol * state.l - self.f2 * self.pilot + self.delta_p * q2 / state.l_bar) / self.bandwidth
    }

    /// Slack penalty expressed in joules.
    pub fn penalty_value(&self, state: &IterateState) -> f64 {
        self.reference * self.lambda * state.chi0
    }
}

/// Index map of the decision vector.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub n_ue: usize,
    pub sensing: bool,
    pub slack: bool,
}

impl Layout {
    pub fn n_q(&self) -> usize {
        self.n_ue + usize::from(self.sensing)
    }

    /// Position of amplitude `j` (0 = sensing) if it is a variable.
    pub fn q(&self, j: usize) -> Option<usize> {
        if self.sensing {
            Some(j)
        } else if j == 0 {
            None
        } else {
            Some(j - 1)
        }
    }

    pub fn chi(&self, i: usize) -> usize {
        self.n_q() + i
    }

    pub fn r(&self, i: usize) -> usize {
        self.n_q() + self.n_ue + i
    }

    pub fn l(&self) -> usize {
        self.n_q() + 2 * self.n_ue
    }

    pub fn lbar(&self) -> usize {
        self.l() + 1
    }

    pub fn chi0(&self) -> Option<usize> {
        self.slack.then_some(self.l() + 2)
    }

    pub fn dim(&self) -> usize {
        self.l() + 2 + usize::from(self.slack)
    }

    fn amps(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let first = usize::from(!self.sensing);
        (first..=self.n_ue).map(move |j| (j, self.q(j).expect("listed amplitudes are variables")))
    }

    /// Pack a state (physical units) into a normalized vector.
    pub fn pack(&self, c: &Constants, st: &IterateState) -> Vector {
        let mut z = Vector::zeros(self.dim());
        let sp = c.max_tx_power.sqrt();
        for (j, k) in self.amps() {
            z[k] = st.q[j] / sp;
        }
        for i in 0..self.n_ue {
            z[self.chi(i)] = st.chi[i];
            z[self.r(i)] = st.r[i] / c.noise_power;
        }
        z[self.l()] = st.l;
        z[self.lbar()] = st.l_bar;
        if let Some(k) = self.chi0() {
            z[k] = st.chi0;
        }
        z
    }

    pub fn unpack(&self, c: &Constants, z: &Vector) -> IterateState {
        let sp = c.max_tx_power.sqrt();
        let mut q = vec![0.0; self.n_ue + 1];
        for (j, k) in self.amps() {
            q[j] = z[k].max(0.0) * sp;
        }
        IterateState {
            q,
            chi: (0..self.n_ue).map(|i| z[self.chi(i)]).collect(),
            r: (0..self.n_ue).map(|i| z[self.r(i)] * c.noise_power).collect(),
            l: z[self.l()],
            l_bar: z[self.lbar()],
            chi0: self.chi0().map_or(0.0, |k| z[k].max(0.0)),
        }
    }

    /// Move a packed point strictly inside the simple bounds.
    pub fn interior(&self, c: &Constants, z: &mut Vector) {
        for (_, k) in self.amps() {
            z[k] = z[k].max(1e-9);
        }
        for i in 0..self.n_ue {
            z[self.chi(i)] = z[self.chi(i)].max(1e-9);
        }
        let pad = 1e-6 * (c.l_hi - c.l_lo);
        z[self.l()] = z[self.l()].clamp(c.l_lo + pad, c.l_hi - pad);
        z[self.lbar()] = z[self.lbar()].max(c.lbar_min * (1.0 + 1e-6));
        if let Some(k) = self.chi0() {
            z[k] = z[k].max(1e-12);
        }
    }
}

/// `ε`-rate row: `−ln(1+χ) + χ − c1 q_i + c2 r_i + Q⁻¹(ε)/√(L−L_p) + b ln2/(L−L_p) ≤ 0`.
struct ReliabilityRow {
    n: usize,
    chi: usize,
    q: usize,
    r: usize,
    l: usize,
    c1: f64,
    c2: f64,
    q_inv: f64,
    bits_ln2: f64,
    pilot: f64,
}

impl Smooth for ReliabilityRow {
    fn value(&self, z: &Vector) -> Option<f64> {
        let chi = z[self.chi];
        let d = z[self.l] - self.pilot;
        if chi <= -1.0 || d <= 0.0 {
            return None;
        }
        Some(-chi.ln_1p() + chi - self.c1 * z[self.q] + self.c2 * z[self.r] + self.q_inv / d.sqrt() + self.bits_ln2 / d)
    }

    fn gradient(&self, z: &Vector) -> Vector {
        let mut g = Vector::zeros(self.n);
        let chi = z[self.chi];
        let d = z[self.l] - self.pilot;
        g[self.chi] = 1.0 - 1.0 / (1.0 + chi);
        g[self.q] = -self.c1;
        g[self.r] = self.c2;
        g[self.l] = -0.5 * self.q_inv * d.powf(-1.5) - self.bits_ln2 / (d * d);
        g
    }

    fn hessian(&self, z: &Vector) -> Matrix {
        let mut h = Matrix::zeros(self.n, self.n);
        let chi = z[self.chi];
        let d = z[self.l] - self.pilot;
        h[(self.chi, self.chi)] = 1.0 / ((1.0 + chi) * (1.0 + chi));
        h[(self.l, self.l)] = 0.75 * self.q_inv * d.powf(-2.5) + 2.0 * self.bits_ln2 / (d * d * d);
        h
    }
}

/// `scale·(κ L + w‖q‖²/L̄) + λ χ0`.
struct Objective {
    layout: Layout,
    scale: f64,
    kappa: f64,
    w: f64,
    lambda: f64,
}

impl Objective {
    fn q2(&self, z: &Vector) -> f64 {
        self.layout.amps().map(|(_, k)| z[k] * z[k]).sum()
    }
}

impl Smooth for Objective {
    fn value(&self, z: &Vector) -> Option<f64> {
        let lbar = z[self.layout.lbar()];
        if lbar <= 0.0 {
            return None;
        }
        let slack = self.layout.chi0().map_or(0.0, |k| self.lambda * z[k]);
        Some(self.scale * (self.kappa * z[self.layout.l()] + self.w * self.q2(z) / lbar) + slack)
    }

    fn gradient(&self, z: &Vector) -> Vector {
        let lay = self.layout;
        let mut g = Vector::zeros(lay.dim());
        let lbar = z[lay.lbar()];
        for (_, k) in lay.amps() {
            g[k] = self.scale * self.w * 2.0 * z[k] / lbar;
        }
        g[lay.l()] = self.scale * self.kappa;
        g[lay.lbar()] = -self.scale * self.w * self.q2(z) / (lbar * lbar);
        if let Some(k) = lay.chi0() {
            g[k] = self.lambda;
        }
        g
    }

    fn hessian(&self, z: &Vector) -> Matrix {
        let lay = self.layout;
        let mut h = Matrix::zeros(lay.dim(), lay.dim());
        let lbar = z[lay.lbar()];
        let sw = self.scale * self.w;
        let lb = lay.lbar();
        for (_, k) in lay.amps() {
            h[(k, k)] = 2.0 * sw / lbar;
            let cross = -2.0 * sw * z[k] / (lbar * lbar);
            h[(k, lb)] = cross;
            h[(lb, k)] = cross;
        }
        h[(lb, lb)] = 2.0 * sw * self.q2(z) / (lbar * lbar * lbar);
        h
    }
}

/// Convexified problem around the linearization point `lin` (physical units).
pub struct Subproblem {
    pub layout: Layout,
    pub program: Program,
}

pub fn build(c: &Constants, lin: &IterateState, slack: bool) -> Result<Subproblem> {
    let layout = Layout { n_ue: c.n_ue, sensing: c.sensing(), slack };
    let n = layout.dim();
    let zc = layout.pack(c, lin);
    let unit = |k: usize, v: f64| {
        let mut e = Vector::zeros(n);
        e[k] = v;
        e
    };
    let mut rows = Vec::new();

    // simple bounds
    for (j, k) in layout.amps() {
        rows.push(Row::hard(Constraint::Linear { a: unit(k, -1.0), b: 0.0 }, format!("q[{j}] >= 0")));
    }
    for i in 0..c.n_ue {
        rows.push(Row::hard(Constraint::Linear { a: unit(layout.chi(i), -1.0), b: 0.0 }, format!("chi[{i}] >= 0")));
    }
    rows.push(Row::hard(Constraint::Linear { a: unit(layout.l(), -1.0), b: c.l_lo }, "L lower bound"));
    rows.push(Row::hard(Constraint::Linear { a: unit(layout.l(), 1.0), b: -c.l_hi }, "L upper bound"));
    rows.push(Row::hard(Constraint::Linear { a: unit(layout.lbar(), -1.0), b: c.lbar_min }, "Lbar lower bound"));
    if let Some(k) = layout.chi0() {
        rows.push(Row::hard(Constraint::Linear { a: unit(k, -1.0), b: 0.0 }, "chi0 >= 0"));
    }

    // tangent of 1/L̄: L − L_p ≤ 2/L̄c − L̄/L̄c²
    let lbar_c = lin.l_bar;
    if !(lbar_c > 0.0) {
        return Err(Error::FrozenDenominator("blocklength tangent"));
    }
    let mut a = unit(layout.l(), 1.0);
    a[layout.lbar()] = 1.0 / (lbar_c * lbar_c);
    rows.push(Row::soft(Constraint::Linear { a, b: -c.pilot - 2.0 / lbar_c }, "blocklength tangent"));

    for i in 0..c.n_ue {
        let qi = layout.q(i + 1).expect("UE amplitudes are variables");
        let q_c = zc[qi];
        let r_c = zc[layout.r(i)];
        if !(r_c > 0.0) {
            return Err(Error::FrozenDenominator("rate linearization"));
        }
        let bh = c.b_hat[i];
        rows.push(Row::soft(
            Constraint::Smooth(Box::new(ReliabilityRow {
                n,
                chi: layout.chi(i),
                q: qi,
                r: layout.r(i),
                l: layout.l(),
                c1: 2.0 * q_c * bh * bh / r_c,
                c2: (q_c * bh / r_c).powi(2),
                q_inv: c.q_inv[i],
                bits_ln2: c.bits_ln2[i],
                pilot: c.pilot,
            })),
            format!("reliability[{i}]"),
        ));

        // ‖[√2 a_ij q_j; √2 b_i q_i; √2; 1+χ_i; r_i]‖ ≤ 1 + χ_i + r_i
        let rows_n = layout.n_q() + 4;
        let mut am = Matrix::zeros(rows_n, n);
        let mut bv = Vector::zeros(rows_n);
        let s2 = std::f64::consts::SQRT_2;
        for (row, (j, k)) in layout.amps().enumerate() {
            am[(row, k)] = s2 * c.a_hat[i][j];
        }
        let base = layout.n_q();
        am[(base, qi)] = s2 * bh;
        bv[base + 1] = s2;
        am[(base + 2, layout.chi(i))] = 1.0;
        bv[base + 2] = 1.0;
        am[(base + 3, layout.r(i))] = 1.0;
        let mut cv = Vector::zeros(n);
        cv[layout.chi(i)] = 1.0;
        cv[layout.r(i)] = 1.0;
        rows.push(Row::soft(Constraint::Soc { a: am, b: bv, c: cv, d: 1.0 }, format!("interference cone[{i}]")));
    }

    for (k, fk) in c.f.iter().enumerate() {
        let mut am = Matrix::zeros(layout.n_q(), n);
        for (row, (j, idx)) in layout.amps().enumerate() {
            am[(row, idx)] = fk[j].max(0.0).sqrt();
        }
        rows.push(Row::soft(
            Constraint::Soc { a: am, b: Vector::zeros(layout.n_q()), c: Vector::zeros(n), d: 1.0 },
            format!("per-AP power[{k}]"),
        ));
    }

    if layout.sensing {
        // γ qᵀB̂q − 2 q_cᵀÂ q + q_cᵀÂ q_c + γ − χ0 ≤ 0
        let mut p = Matrix::zeros(n, n);
        let mut lin_v = Vector::zeros(n);
        let mut konst = c.gamma;
        for (j, k) in layout.amps() {
            p[(k, k)] = c.gamma * c.b_d_hat[j];
            lin_v[k] = -2.0 * c.a_d_hat[j] * zc[k];
            konst += c.a_d_hat[j] * zc[k] * zc[k];
        }
        if let Some(k) = layout.chi0() {
            lin_v[k] = -1.0;
        }
        rows.push(Row::soft(Constraint::Quadratic { p, q: lin_v, r: konst }, "sensing SINR"));
    }

    let objective = Objective {
        layout,
        scale: 1.0 / c.reference,
        kappa: c.per_symbol / c.bandwidth,
        w: c.delta_p / c.bandwidth,
        lambda: c.lambda,
    };
    Ok(Subproblem { layout, program: Program { n, objective: Box::new(objective), rows } })
}

/// Left-hand side minus right-hand side of the exact (non-convexified)
/// sensing row in normalized units: `γ qᵀB̂q − qᵀÂq + γ`.
pub fn sensing_residual(c: &Constants, st: &IterateState) -> f64 {
    let p = c.max_tx_power;
    st.q
        .iter()
        .enumerate()
        .map(|(j, q)| {
            let q2 = q * q / p;
            c.gamma * c.b_d_hat[j] * q2 - c.a_d_hat[j] * q2
        })
        .sum::<f64>()
        + c.gamma
}

/// Normalized SINR lower bound per UE, its interference-plus-noise term,
/// both evaluated at a state.
pub fn sinr_terms(c: &Constants, st: &IterateState) -> Vec<(f64, f64)> {
    let p = c.max_tx_power;
    (0..c.n_ue)
        .map(|i| {
            let interference: f64 =
                st.q.iter().enumerate().map(|(j, q)| c.a_hat[i][j].powi(2) * q * q / p).sum::<f64>() + 1.0;
            let signal = c.b_hat[i].powi(2) * st.q[i + 1].powi(2) / p;
            (signal / interference, interference)
        })
        .collect()
}

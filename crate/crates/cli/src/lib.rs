//! Batch experiment runner.
//!
//! An experiment is a base config document, an optional one-parameter sweep,
//! a set of optimizer modes and detectors and a number of Monte Carlo drops.
//! Every drop gets its own master seed derived from the experiment seed, so
//! rows are reproducible one by one and the CSV files are byte-identical
//! across reruns (timings go to a separate file).
//!
//! Output files written by [`run_experiment`]:
//!
//! * `results.csv`: one row per (drop, sweep value, mode, detector).
//! * `energy_breakdown.csv`: per-row power and energy components.
//! * `availability.csv`: fraction of feasible drops per sweep point.
//! * `timings.csv`: wall time per row.

use anyhow::{bail, Context};
use cfisac::channel::{self, LargeScale};
use cfisac::detection::{self, DetectionSetup, DetectorKind};
use cfisac::energy::{self, EnergyBreakdown, PowerBreakdown};
use cfisac::metrics::BlocklengthPlan;
use cfisac::moments::{self, MomentStats};
use cfisac::optimizer::{run_algorithm1, AllocationResult, IterateState, Mode, OptimizerOptions};
use cfisac::scenario::{self, Scenario};
use serde_json::Value;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Commit the binary was built from, or `unknown`.
pub const GIT_HASH: &str = env!("CFISAC_GIT_HASH");

pub const RESULTS_COLUMNS: [&str; 25] = [
    "drop",
    "drop_seed",
    "sweep_parameter",
    "sweep_value",
    "mode",
    "detector",
    "feasible",
    "blocklength",
    "l_max",
    "e_total_j",
    "e_tx_j",
    "rho_norm2_w",
    "rho_w",
    "dep_ub",
    "sensing_sinr_db",
    "threshold",
    "p_d",
    "p_d_stderr",
    "gops_comm",
    "gops_sensing",
    "gops_cloud",
    "n_gpp",
    "iterations",
    "subproblems",
    "message",
];

pub const BREAKDOWN_COLUMNS: [&str; 16] = [
    "scenario_id",
    "mode",
    "detector",
    "feasible",
    "L",
    "rho_norm2",
    "P_tx_part",
    "P_ap_static",
    "P_cloud",
    "N_GPP",
    "E_tx_aps",
    "E_rx_aps",
    "E_comm_processing",
    "E_sensing_processing",
    "E_others",
    "E_total",
];

pub const AVAILABILITY_COLUMNS: [&str; 7] =
    ["sweep_parameter", "sweep_value", "mode", "detector", "drops", "feasible_drops", "availability"];

/// Everything except the sweep itself.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// User config document; missing fields come from the preset.
    pub document: Value,
    pub preset: String,
    /// Monte Carlo realizations per statistics estimate.
    pub moment_samples: usize,
    /// Trials for threshold calibration and for `P_d` each; 0 skips detection.
    pub detection_trials: usize,
    pub optimizer: OptimizerOptions,
    /// Warm-start each sweep point from the previous point of the same chain.
    pub warm_start: bool,
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            document: Value::Object(Default::default()),
            preset: scenario::PAPER_DEFAULT.to_string(),
            moment_samples: 300,
            detection_trials: 500,
            optimizer: OptimizerOptions::default(),
            warm_start: true,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

impl ExperimentConfig {
    /// Preset-merged document with the preset name filled in.
    pub fn resolved(&self) -> anyhow::Result<Value> {
        let mut user = self.document.clone();
        if let Some(obj) = user.as_object_mut() {
            obj.insert("preset".into(), Value::String(self.preset.clone()));
        } else {
            bail!("config document must be a JSON object");
        }
        Ok(scenario::resolve_document(&user)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Dotted config path, e.g. `sensing.sinr_threshold_db`.
    pub parameter: Option<String>,
    pub values: Vec<Value>,
    pub modes: Vec<Mode>,
    pub detectors: Vec<DetectorKind>,
    pub n_drops: usize,
    pub seed: u64,
}

impl SweepSpec {
    /// Single point, all modes, both detectors.
    pub fn single(n_drops: usize, seed: u64) -> Self {
        Self {
            parameter: None,
            values: Vec::new(),
            modes: Mode::ALL.to_vec(),
            detectors: DetectorKind::ALL.to_vec(),
            n_drops,
            seed,
        }
    }

    /// Sweep values, or one placeholder point for an empty sweep.
    fn points(&self) -> Vec<Option<&Value>> {
        if self.parameter.is_none() || self.values.is_empty() {
            vec![None]
        } else {
            self.values.iter().map(Some).collect()
        }
    }
}

/// Parse `path=v1,v2,...` or `path=start:step:end`. List items are read as
/// JSON, falling back to plain strings.
pub fn parse_sweep(text: &str) -> anyhow::Result<(String, Vec<Value>)> {
    let (path, list) = text.split_once('=').context("sweep must look like `path=v1,v2` or `path=start:step:end`")?;
    let path = path.trim();
    if path.is_empty() {
        bail!("empty sweep parameter");
    }
    let list = list.trim();
    let parts: Vec<&str> = list.split(':').collect();
    if parts.len() == 3 {
        let [start, step, end] = [parts[0], parts[1], parts[2]].map(|p| p.trim().parse::<f64>());
        let (start, step, end) = (start?, step?, end?);
        if !(step > 0.0) || end < start {
            bail!("range `{list}` needs a positive step and end >= start");
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        // integer-valued points stay integers in the CSV
        let values = (0..=n)
            .map(|i| {
                let v = start + step * i as f64;
                if v.fract() == 0.0 && v.abs() < 1e15 {
                    Value::from(v as i64)
                } else {
                    Value::from(v)
                }
            })
            .collect();
        return Ok((path.to_string(), values));
    }
    let values = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string())))
        .collect::<Vec<_>>();
    if values.is_empty() {
        bail!("sweep `{path}` has no values");
    }
    Ok((path.to_string(), values))
}

/// Parse a comma-separated list with `FromStr`.
pub fn parse_list<T: std::str::FromStr<Err = String>>(text: &str) -> anyhow::Result<Vec<T>> {
    let items = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(anyhow::Error::msg))
        .collect::<anyhow::Result<Vec<T>>>()?;
    if items.is_empty() {
        bail!("empty list");
    }
    Ok(items)
}

/// Outcome of one (drop, sweep value, mode, detector) run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub drop: usize,
    pub drop_seed: u64,
    pub value_index: usize,
    pub sweep_value: Option<Value>,
    pub mode: Mode,
    pub detector: Option<DetectorKind>,
    pub l_max: usize,
    pub result: AllocationResult,
    pub threshold: Option<f64>,
    /// Detection probability and its standard error.
    pub p_d: Option<(f64, f64)>,
    pub power: PowerBreakdown,
    pub breakdown: EnergyBreakdown,
    pub wall_time_s: f64,
}

impl RunRecord {
    fn sort_key(&self) -> (usize, usize, Mode, Option<DetectorKind>) {
        (self.drop, self.value_index, self.mode, self.detector)
    }

    pub fn scenario_id(&self) -> String {
        format!("d{}-v{}", self.drop, self.value_index)
    }
}

/// Rows of an experiment plus the sweep points where no row was feasible.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub records: Vec<RunRecord>,
    pub infeasible_points: Vec<usize>,
    pub files: Vec<PathBuf>,
}

/// Statistics are shared between sweep points whose channel-relevant inputs agree.
fn moments_key(s: &Scenario) -> String {
    serde_json::to_string(&(&s.radio, &s.geometry, &s.channel_model, s.master_seed)).expect("scenario serializes")
}

struct PointData {
    scenario: Scenario,
    large: LargeScale,
    stats: MomentStats,
}

fn run_drop(cfg: &ExperimentConfig, spec: &SweepSpec, base: &Value, drop: usize) -> anyhow::Result<Vec<RunRecord>> {
    let drop_seed = scenario::drop_seed(spec.seed, drop as u64);
    let mut cache: HashMap<String, (LargeScale, MomentStats)> = HashMap::new();
    let mut warm: HashMap<(Mode, Option<DetectorKind>), IterateState> = HashMap::new();
    let mut out = Vec::new();
    for (vi, value) in spec.points().into_iter().enumerate() {
        let mut doc = base.clone();
        doc["master_seed"] = Value::from(drop_seed);
        if let (Some(path), Some(v)) = (&spec.parameter, value) {
            scenario::set_path(&mut doc, path, v.clone())?;
        }
        let s = scenario::build_from_value(&doc).with_context(|| format!("drop {drop}, sweep point {vi}"))?;
        let key = moments_key(&s);
        if !cache.contains_key(&key) {
            let large = channel::build_large_scale(&s)?;
            let stats = moments::estimate_moments(&s, &large, cfg.moment_samples, drop_seed, true)?;
            cache.insert(key.clone(), (large, stats));
        }
        let (large, stats) = cache[&key].clone();
        let point = PointData { scenario: s, large, stats };
        let mut setup = None;
        for &mode in &spec.modes {
            let kinds: Vec<Option<DetectorKind>> =
                if mode.sensing() { spec.detectors.iter().copied().map(Some).collect() } else { vec![None] };
            for det in kinds {
                let start = Instant::now();
                let mut opts = cfg.optimizer.clone();
                if let Some(k) = det {
                    opts.detector = k;
                }
                opts.warm_start = if cfg.warm_start { warm.get(&(mode, det)).cloned() } else { None };
                let result = run_algorithm1(&point.scenario, &point.stats, mode, &opts)?;
                if result.feasible {
                    if let Some(st) = &result.state {
                        warm.insert((mode, det), st.clone());
                    }
                }
                let (threshold, p_d) = match det {
                    Some(kind) if result.feasible && cfg.detection_trials > 0 => {
                        if setup.is_none() {
                            setup = Some(DetectionSetup::new(&point.scenario, &point.large)?);
                        }
                        let setup = setup.as_ref().expect("just built");
                        let amp: Vec<f64> = result.rho.iter().map(|p| p.sqrt()).collect();
                        let data = result.blocklength - point.scenario.radio.pilot_length;
                        let pfa = point.scenario.sensing.false_alarm_prob;
                        let thr =
                            detection::calibrate_threshold(setup, &amp, data, kind, pfa, cfg.detection_trials, drop_seed)?;
                        let pd =
                            detection::detection_probability(setup, &amp, data, kind, thr, cfg.detection_trials, drop_seed)?;
                        (Some(thr), Some(pd))
                    }
                    _ => (None, None),
                };
                let s = &point.scenario;
                let ops = energy::count_ops(s, det);
                let plan = BlocklengthPlan::new(result.blocklength, s.radio.pilot_length)?;
                let rho_norm2: f64 = result.rho.iter().sum();
                let power = energy::total_power(rho_norm2, &plan, s, &ops, mode.sensing());
                let breakdown = energy::energy_breakdown(rho_norm2, &plan, s, &ops, mode.sensing());
                out.push(RunRecord {
                    drop,
                    drop_seed,
                    value_index: vi,
                    sweep_value: value.cloned(),
                    mode,
                    detector: det,
                    l_max: result.l_cap,
                    result,
                    threshold,
                    p_d,
                    power,
                    breakdown,
                    wall_time_s: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Ok(out)
}

/// Run every drop and return the records in deterministic order.
pub fn run_records(cfg: &ExperimentConfig, spec: &SweepSpec) -> anyhow::Result<Vec<RunRecord>> {
    if spec.n_drops == 0 {
        bail!("need at least one drop");
    }
    if spec.modes.is_empty() {
        bail!("need at least one mode");
    }
    if spec.detectors.is_empty() && spec.modes.iter().any(|m| m.sensing()) {
        bail!("sensing modes need at least one detector");
    }
    let base = cfg.resolved()?;
    // fail fast on a bad sweep path before spawning work
    if let Some(path) = &spec.parameter {
        let mut probe = base.clone();
        let v = spec.values.first().cloned().unwrap_or(Value::Null);
        scenario::set_path(&mut probe, path, v)?;
    }
    let threads = cfg.threads.clamp(1, spec.n_drops);
    let mut records: Vec<RunRecord> = if threads == 1 {
        let mut all = Vec::new();
        for d in 0..spec.n_drops {
            all.extend(run_drop(cfg, spec, &base, d)?);
        }
        all
    } else {
        let parts = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|tid| {
                    let base = &base;
                    scope.spawn(move || -> anyhow::Result<Vec<RunRecord>> {
                        let mut mine = Vec::new();
                        for d in (tid..spec.n_drops).step_by(threads) {
                            mine.extend(run_drop(cfg, spec, base, d)?);
                        }
                        Ok(mine)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect::<Vec<_>>()
        });
        let mut all = Vec::new();
        for part in parts {
            all.extend(part?);
        }
        all
    };
    records.sort_by_key(RunRecord::sort_key);
    Ok(records)
}

/// Shortest round-trip text; exponent form outside `[1e-3, 1e9)`.
fn num(x: f64) -> String {
    if !x.is_finite() {
        String::new()
    } else if x == 0.0 || (1e-3..1e9).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn joined(xs: &[f64]) -> String {
    xs.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

fn value_text(v: &Option<Value>) -> String {
    match v {
        None => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

fn detector_text(d: Option<DetectorKind>) -> &'static str {
    d.map_or("none", |k| k.as_str())
}

/// `results.csv` row in [`RESULTS_COLUMNS`] order.
pub fn results_row(spec: &SweepSpec, r: &RunRecord) -> Vec<String> {
    let res = &r.result;
    let report = res.report.as_ref();
    vec![
        r.drop.to_string(),
        r.drop_seed.to_string(),
        spec.parameter.clone().unwrap_or_default(),
        value_text(&r.sweep_value),
        r.mode.to_string(),
        detector_text(r.detector).to_string(),
        res.feasible.to_string(),
        res.blocklength.to_string(),
        r.l_max.to_string(),
        num(res.objective),
        num(res.tx_energy),
        num(res.rho.iter().sum()),
        joined(&res.rho),
        report.map(|rep| joined(&rep.dep_ub)).unwrap_or_default(),
        opt_num(report.and_then(|rep| rep.sensing_sinr).map(|g| 10.0 * g.log10())),
        opt_num(r.threshold),
        opt_num(r.p_d.map(|p| p.0)),
        opt_num(r.p_d.map(|p| p.1)),
        num(r.power.gops.comm),
        num(r.power.gops.sensing),
        num(r.power.gops.cloud),
        r.power.n_gpp.to_string(),
        res.iterations.to_string(),
        res.subproblems.to_string(),
        res.message.clone().unwrap_or_default(),
    ]
}

/// `energy_breakdown.csv` row in [`BREAKDOWN_COLUMNS`] order.
pub fn breakdown_row(r: &RunRecord) -> Vec<String> {
    let b = &r.breakdown;
    let p = &r.power;
    vec![
        r.scenario_id(),
        r.mode.to_string(),
        detector_text(r.detector).to_string(),
        r.result.feasible.to_string(),
        r.result.blocklength.to_string(),
        num(r.result.rho.iter().sum()),
        num(p.tx_part),
        num(p.ap_static()),
        num(p.cloud),
        p.n_gpp.to_string(),
        num(b.tx_aps),
        num(b.rx_aps),
        num(b.comm_processing),
        num(b.sensing_processing),
        num(b.others),
        num(b.total),
    ]
}

/// Feasible fraction per (sweep point, mode, detector).
#[derive(Debug, Clone, PartialEq)]
pub struct AvailabilityRow {
    pub value_index: usize,
    pub sweep_value: Option<Value>,
    pub mode: Mode,
    pub detector: Option<DetectorKind>,
    pub drops: usize,
    pub feasible_drops: usize,
}

impl AvailabilityRow {
    pub fn availability(&self) -> f64 {
        self.feasible_drops as f64 / self.drops as f64
    }
}

pub fn availability(records: &[RunRecord]) -> Vec<AvailabilityRow> {
    let mut map: std::collections::BTreeMap<(usize, Mode, Option<DetectorKind>), AvailabilityRow> = Default::default();
    for r in records {
        let row = map.entry((r.value_index, r.mode, r.detector)).or_insert_with(|| AvailabilityRow {
            value_index: r.value_index,
            sweep_value: r.sweep_value.clone(),
            mode: r.mode,
            detector: r.detector,
            drops: 0,
            feasible_drops: 0,
        });
        row.drops += 1;
        row.feasible_drops += usize::from(r.result.feasible);
    }
    map.into_values().collect()
}

/// Sweep points where every row is infeasible.
pub fn infeasible_points(records: &[RunRecord]) -> Vec<usize> {
    let mut any: std::collections::BTreeMap<usize, bool> = Default::default();
    for r in records {
        *any.entry(r.value_index).or_default() |= r.result.feasible;
    }
    any.into_iter().filter(|(_, f)| !f).map(|(i, _)| i).collect()
}

pub fn metadata_line(seed: u64, preset: &str) -> String {
    format!("# git={GIT_HASH} seed={seed} preset={preset}")
}

fn write_csv(path: &Path, meta: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<()> {
    let mut text = String::new();
    writeln!(text, "{meta}")?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    text.push_str(std::str::from_utf8(&w.into_inner()?)?);
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Write all CSV files for `records` into `out`.
pub fn write_outputs(
    out: &Path,
    cfg: &ExperimentConfig,
    spec: &SweepSpec,
    records: &[RunRecord],
) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let meta = metadata_line(spec.seed, &cfg.preset);
    let results = out.join("results.csv");
    write_csv(&results, &meta, &RESULTS_COLUMNS, records.iter().map(|r| results_row(spec, r)))?;
    let breakdown = out.join("energy_breakdown.csv");
    write_csv(&breakdown, &meta, &BREAKDOWN_COLUMNS, records.iter().map(breakdown_row))?;
    let avail = out.join("availability.csv");
    let param = spec.parameter.clone().unwrap_or_default();
    write_csv(
        &avail,
        &meta,
        &AVAILABILITY_COLUMNS,
        availability(records).into_iter().map(|a| {
            vec![
                param.clone(),
                value_text(&a.sweep_value),
                a.mode.to_string(),
                detector_text(a.detector).to_string(),
                a.drops.to_string(),
                a.feasible_drops.to_string(),
                num(a.availability()),
            ]
        }),
    )?;
    let timings = out.join("timings.csv");
    write_csv(
        &timings,
        &meta,
        &["scenario_id", "mode", "detector", "wall_time_s"],
        records.iter().map(|r| {
            vec![r.scenario_id(), r.mode.to_string(), detector_text(r.detector).to_string(), num(r.wall_time_s)]
        }),
    )?;
    Ok(vec![results, breakdown, avail, timings])
}

/// Run the experiment and write its CSV files into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, spec: &SweepSpec, out: &Path) -> anyhow::Result<ExperimentSummary> {
    let records = run_records(cfg, spec)?;
    let files = write_outputs(out, cfg, spec, &records)?;
    let infeasible_points = infeasible_points(&records);
    Ok(ExperimentSummary { records, infeasible_points, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0, 0.928239123, 1e-7, 2.5e-300, 6.02e23, -3.5] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::NAN), "");
        assert_eq!(num(1e-7), "1e-7");
        assert_eq!(num(142.0), "142");
    }
}

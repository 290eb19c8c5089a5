//! Seeded Monte-Carlo experiments: sweeps, outage, beampatterns and
//! convergence traces, plus their CSV and SVG exports.
//!
//! Every trial draws its channels from `(seed, value index, trial)`, so all
//! schemes in one sweep see the same realization and the output does not
//! depend on how trials are scheduled.

use std::fmt;
use std::io;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;

use crate::config::{watts_to_dbm, Scenario, SystemConfig};
use crate::error::{ConfigError, SolverError};
use crate::metrics::{feasibility_report, transmit_power, BeamformerSolution, Design};
use crate::penalty::{self, SolveReport};
use crate::rng::{trial_rng, Stream};
use crate::scene::{c64, generate_channels, random_phases, steering_vector, CVec, ChannelSet};
use crate::sdr::{self, AoOptions, AoReport, AoRow, Case2Outcome, RadarModel, SdrProblem};

/// Relative residual accepted when classifying a returned design as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Fresh phase initializations tried after a degenerate penalty run.
pub const PENALTY_RESTARTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    PenaltyCase1,
    PenaltyCase1CommOnly,
    SdrCase1,
    SdrCase2,
    SdrCase2CommOnly,
    SdrNoIrs,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::PenaltyCase1,
        Scheme::PenaltyCase1CommOnly,
        Scheme::SdrCase1,
        Scheme::SdrCase2,
        Scheme::SdrCase2CommOnly,
        Scheme::SdrNoIrs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::PenaltyCase1 => "penalty_case1",
            Scheme::PenaltyCase1CommOnly => "penalty_case1_comm_only",
            Scheme::SdrCase1 => "sdr_case1",
            Scheme::SdrCase2 => "sdr_case2",
            Scheme::SdrCase2CommOnly => "sdr_case2_comm_only",
            Scheme::SdrNoIrs => "sdr_no_irs",
        }
    }

    pub fn is_penalty(self) -> bool {
        matches!(self, Scheme::PenaltyCase1 | Scheme::PenaltyCase1CommOnly)
    }

    /// Whether the IRS loop interference reaches the radar receiver.
    pub fn radar_interference(self) -> bool {
        matches!(self, Scheme::SdrCase2 | Scheme::SdrCase2CommOnly)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown scheme `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVar {
    M,
    K,
    RadarSinrDb,
    Dx,
    EpsTh,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::M => "M",
            SweepVar::K => "K",
            SweepVar::RadarSinrDb => "r_r_th_db",
            SweepVar::Dx => "d_x",
            SweepVar::EpsTh => "eps_th",
        }
    }

    /// Configuration at one sweep point.
    pub fn apply(self, base: &SystemConfig, value: f64) -> Result<SystemConfig, ConfigError> {
        let count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 && v.is_finite() {
                Ok(v as usize)
            } else {
                Err(ConfigError::Invalid(format!("{} must be a positive integer, got {v}", self.name())))
            }
        };
        let mut cfg = base.clone();
        match self {
            SweepVar::M => cfg.n_irs = count(value)?,
            SweepVar::K => cfg.n_users = count(value)?,
            SweepVar::RadarSinrDb => cfg.sinr_radar_db = value,
            SweepVar::Dx => cfg.irs_x = value,
            SweepVar::EpsTh => cfg.cross_corr_limit = value,
        }
        Ok(cfg)
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVar {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [SweepVar::M, SweepVar::K, SweepVar::RadarSinrDb, SweepVar::Dx, SweepVar::EpsTh]
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ConfigError::Invalid(format!("unknown sweep variable `{s}`")))
    }
}

/// How independent trials are scheduled. Results are identical either way.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `threads = 0` uses every logical core.
    Parallel { threads: usize },
}

impl Execution {
    pub fn from_threads(threads: Option<usize>) -> Self {
        match threads {
            Some(1) => Execution::Sequential,
            Some(t) => Execution::Parallel { threads: t },
            None => Execution::Parallel { threads: 0 },
        }
    }
}

/// Maps `f` over `items`, keeping input order in the output.
pub fn map_ordered<T, R, F>(items: Vec<T>, exec: Execution, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => items.into_iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel { threads } => {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(pool) => pool.install(|| items.into_par_iter().map(f).collect()),
                Err(_) => items.into_iter().map(f).collect(),
            }
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel { .. } => items.into_iter().map(f).collect(),
    }
}

#[derive(Clone, Debug)]
pub struct SchemeOutcome {
    pub solution: Option<BeamformerSolution>,
    pub feasible: bool,
    pub iters: usize,
    pub error: Option<String>,
}

impl SchemeOutcome {
    fn failed(iters: usize, e: impl ToString) -> Self {
        SchemeOutcome { solution: None, feasible: false, iters, error: Some(e.to_string()) }
    }

    pub fn power(&self) -> Option<f64> {
        match (&self.solution, self.feasible) {
            (Some(s), true) => Some(transmit_power(s)),
            _ => None,
        }
    }
}

fn sdr_problem(scheme: Scheme, sc: &Scenario, cs: &ChannelSet) -> SdrProblem {
    let (radar, block) = match scheme {
        Scheme::SdrCase2 => (RadarModel::Surrogate, true),
        Scheme::SdrCase2CommOnly => (RadarModel::Surrogate, false),
        _ => (RadarModel::Exact, true),
    };
    let mut p = SdrProblem::new(sc, cs, radar, block);
    if matches!(scheme, Scheme::SdrCase1 | Scheme::PenaltyCase1 | Scheme::PenaltyCase1CommOnly) {
        p.xcorr_limit = f64::INFINITY;
    }
    p
}

fn classify(scheme: Scheme, sc: &Scenario, cs: &ChannelSet, sol: BeamformerSolution, iters: usize) -> SchemeOutcome {
    let mut sc_check = sc.clone();
    if !matches!(scheme, Scheme::SdrCase2 | Scheme::SdrCase2CommOnly | Scheme::SdrNoIrs) {
        sc_check.cfg.cross_corr_limit = f64::INFINITY;
    }
    let fr = feasibility_report(&sol, &sc_check, cs, scheme.radar_interference());
    SchemeOutcome { feasible: fr.is_feasible(FEASIBILITY_TOL), solution: Some(sol), iters, error: None }
}

fn ao_outcome(scheme: Scheme, sc: &Scenario, cs: &ChannelSet, res: Result<(Case2Outcome, AoReport), SolverError>) -> SchemeOutcome {
    match res {
        Ok((Case2Outcome::Solved(sol), rep)) => classify(scheme, sc, cs, sol, rep.iterations),
        Ok((Case2Outcome::Infeasible, rep)) => SchemeOutcome { solution: None, feasible: false, iters: rep.iterations, error: None },
        Err(e) => SchemeOutcome::failed(0, e),
    }
}

/// Runs one scheme on one channel realization. The solver and randomization
/// streams are keyed by the same `(seed, value index, trial)` as the channels.
pub fn run_scheme(scheme: Scheme, sc: &Scenario, cs: &ChannelSet, seed: u64, value_index: u64, trial: u64) -> SchemeOutcome {
    let mut solver_rng = trial_rng(seed, value_index, trial, Stream::Solver);
    let mut rand_rng = trial_rng(seed, value_index, trial, Stream::Randomization);
    let opts = AoOptions::new(sc.cfg.sdr.clone());
    match scheme {
        Scheme::PenaltyCase1 | Scheme::PenaltyCase1CommOnly => {
            let (sol, rep) = match penalty::solve_case1_with_restarts(sc, cs, &mut solver_rng, PENALTY_RESTARTS) {
                Ok(x) => x,
                Err(e) => return SchemeOutcome::failed(0, e),
            };
            if scheme == Scheme::PenaltyCase1CommOnly {
                return classify(scheme, sc, cs, sol, rep.iters_outer);
            }
            // joint waveforms at the penalty phases
            let mut o = opts;
            o.fixed_phases = true;
            let p = sdr_problem(scheme, sc, cs);
            let mut out = ao_outcome(scheme, sc, cs, sdr::solve_from(&p, sol.v.clone(), &o, &mut rand_rng));
            out.iters = rep.iters_outer;
            out
        }
        Scheme::SdrNoIrs => {
            let p = sdr_problem(scheme, sc, cs);
            ao_outcome(scheme, sc, cs, sdr::solve_no_irs(&p, &opts, &mut rand_rng))
        }
        Scheme::SdrCase1 | Scheme::SdrCase2 | Scheme::SdrCase2CommOnly => {
            let p = sdr_problem(scheme, sc, cs);
            ao_outcome(scheme, sc, cs, sdr::solve_case2(&p, &opts, &mut solver_rng, &mut rand_rng))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub sweep_var: SweepVar,
    pub values: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
}

impl SweepSpec {
    pub fn validate(&self, base: &SystemConfig) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.values.is_empty() {
            return bad("sweep needs at least one value".into());
        }
        if self.schemes.is_empty() {
            return bad("sweep needs at least one scheme".into());
        }
        for &v in &self.values {
            let cfg = self.sweep_var.apply(base, v)?;
            Scenario::new(cfg.clone())?;
            if cfg.cross_corr_limit.is_finite() {
                if let Some(s) = self.schemes.iter().find(|s| s.is_penalty()) {
                    return bad(format!("{s} requires eps_th = inf, got {}", cfg.cross_corr_limit));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRow {
    pub scheme: Scheme,
    pub sweep_var: SweepVar,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    /// Watts; `None` when the trial is infeasible.
    pub power_w: Option<f64>,
    pub feasible: bool,
    pub iters: usize,
    pub wall_ms: f64,
    pub error: Option<String>,
}

impl TrialRow {
    pub fn power_dbm(&self) -> Option<f64> {
        self.power_w.map(watts_to_dbm)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub trials: usize,
    pub feasible: usize,
    /// Mean and median over feasible trials, dBm; NaN when none is feasible.
    pub mean_dbm: f64,
    pub median_dbm: f64,
    /// 95% normal-approximation half-width of `mean_dbm`.
    pub ci_half_width_db: f64,
    pub mean_iters: f64,
}

impl Aggregate {
    pub fn feasibility_rate(&self) -> f64 {
        self.feasible as f64 / self.trials as f64
    }
}

/// Groups rows by `(scheme, value)` in order of first appearance.
pub fn aggregate(rows: &[TrialRow]) -> Vec<Aggregate> {
    let mut keys: Vec<(Scheme, f64)> = vec![];
    for r in rows {
        if !keys.iter().any(|k| k.0 == r.scheme && k.1.to_bits() == r.sweep_value.to_bits()) {
            keys.push((r.scheme, r.sweep_value));
        }
    }
    keys.into_iter()
        .map(|(scheme, value)| {
            let group: Vec<&TrialRow> =
                rows.iter().filter(|r| r.scheme == scheme && r.sweep_value.to_bits() == value.to_bits()).collect();
            let mut dbm: Vec<f64> = group.iter().filter_map(|r| r.power_dbm()).collect();
            dbm.sort_by(f64::total_cmp);
            let n = dbm.len();
            let mean = if n > 0 { dbm.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let median = match n {
                0 => f64::NAN,
                _ if n % 2 == 1 => dbm[n / 2],
                _ => 0.5 * (dbm[n / 2 - 1] + dbm[n / 2]),
            };
            let ci = if n > 1 {
                let var = dbm.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                1.96 * (var / n as f64).sqrt()
            } else {
                f64::NAN
            };
            Aggregate {
                scheme,
                sweep_value: value,
                trials: group.len(),
                feasible: n,
                mean_dbm: mean,
                median_dbm: median,
                ci_half_width_db: ci,
                mean_iters: group.iter().map(|r| r.iters as f64).sum::<f64>() / group.len() as f64,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<TrialRow>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepResult {
    pub fn all_infeasible(&self) -> bool {
        self.rows.iter().all(|r| !r.feasible)
    }

    pub fn get(&self, scheme: Scheme, value: f64) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.scheme == scheme && a.sweep_value == value)
    }
}

pub fn run_sweep(spec: &SweepSpec, base: &SystemConfig, seed: u64, exec: Execution) -> Result<SweepResult, ConfigError> {
    spec.validate(base)?;
    let mut tasks = vec![];
    for (vi, &value) in spec.values.iter().enumerate() {
        let sc = Scenario::new(spec.sweep_var.apply(base, value)?)?;
        for trial in 0..spec.trials {
            tasks.push((vi, value, trial, sc.clone()));
        }
    }
    let per_task = map_ordered(tasks, exec, |(vi, value, trial, sc)| {
        let cs = generate_channels(&sc, &mut trial_rng(seed, vi as u64, trial as u64, Stream::Channels));
        spec.schemes
            .iter()
            .map(|&scheme| {
                let start = Instant::now();
                let out = run_scheme(scheme, &sc, &cs, seed, vi as u64, trial as u64);
                TrialRow {
                    scheme,
                    sweep_var: spec.sweep_var,
                    sweep_value: value,
                    trial,
                    seed,
                    power_w: out.power(),
                    feasible: out.feasible,
                    iters: out.iters,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                    error: out.error,
                }
            })
            .collect::<Vec<_>>()
    });
    let rows: Vec<TrialRow> = per_task.into_iter().flatten().collect();
    let aggregates = aggregate(&rows);
    Ok(SweepResult { rows, aggregates })
}

/// Wilson score interval for `k` successes in `n` trials at 95%.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let (nf, p) = (n as f64, k as f64 / n as f64);
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutagePoint {
    pub scheme: Scheme,
    pub r_r_db: f64,
    pub trials: usize,
    pub outages: usize,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl OutagePoint {
    pub fn rate(&self) -> f64 {
        self.outages as f64 / self.trials as f64
    }
}

/// Whether a Case II design exists for this realization at the initial phases.
pub fn outage_trial(scheme: Scheme, sc: &Scenario, cs: &ChannelSet, v0: &CVec, rng: &mut impl Rng) -> bool {
    let p = sdr_problem(scheme, sc, cs);
    let mut o = AoOptions::new(sc.cfg.sdr.clone());
    o.fixed_phases = true;
    !ao_outcome(scheme, sc, cs, sdr::solve_from(&p, v0.clone(), &o, rng)).feasible
}

/// Outage probability of the joint and comm-only Case II schemes versus the
/// radar SINR threshold.
pub fn run_outage(
    base: &SystemConfig,
    r_r_values_db: &[f64],
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<OutagePoint>, ConfigError> {
    if !base.cross_corr_limit.is_finite() {
        return Err(ConfigError::Invalid("outage needs a finite eps_th".into()));
    }
    if trials == 0 || r_r_values_db.is_empty() {
        return Err(ConfigError::Invalid("outage needs trials and radar thresholds".into()));
    }
    let schemes = [Scheme::SdrCase2, Scheme::SdrCase2CommOnly];
    let mut tasks = vec![];
    for (vi, &r) in r_r_values_db.iter().enumerate() {
        let sc = Scenario::new(SweepVar::RadarSinrDb.apply(base, r)?)?;
        for trial in 0..trials {
            tasks.push((vi, trial, sc.clone()));
        }
    }
    let flags = map_ordered(tasks, exec, |(vi, trial, sc)| {
        let (vi, trial) = (vi as u64, trial as u64);
        let cs = generate_channels(&sc, &mut trial_rng(seed, vi, trial, Stream::Channels));
        let v0 = random_phases(cs.n_irs(), &mut trial_rng(seed, vi, trial, Stream::Solver));
        schemes.map(|s| outage_trial(s, &sc, &cs, &v0, &mut trial_rng(seed, vi, trial, Stream::Randomization)))
    });
    let mut points = vec![];
    for (vi, &r) in r_r_values_db.iter().enumerate() {
        for (si, &scheme) in schemes.iter().enumerate() {
            let outages = flags[vi * trials..(vi + 1) * trials].iter().filter(|f| f[si]).count();
            let (ci_low, ci_high) = wilson_interval(outages, trials);
            points.push(OutagePoint { scheme, r_r_db: r, trials, outages, ci_low, ci_high });
        }
    }
    Ok(points)
}

/// Transmit angles of the beampattern grid, degrees.
pub fn beampattern_grid_deg() -> Vec<f64> {
    (-89..=89).map(f64::from).collect()
}

/// `|a_lᴴ R a_j| / sqrt(a_lᴴ R a_l · a_jᴴ R a_j)` for every target pair `l < j`.
pub fn cross_correlation_coefficients(d: &impl Design, angles: &[f64], spacing: f64) -> Vec<(usize, usize, f64)> {
    let r = d.covariance();
    let a: Vec<CVec> = angles.iter().map(|&t| steering_vector(t, r.nrows(), spacing)).collect();
    let ra: Vec<CVec> = a.iter().map(|x| &r * x).collect();
    let mut out = vec![];
    for l in 0..a.len() {
        for j in l + 1..a.len() {
            let num = a[l].dotc(&ra[j]).norm();
            let den = (a[l].dotc(&ra[l]).re * a[j].dotc(&ra[j]).re).sqrt();
            out.push((l, j, if den > 0.0 { num / den } else { 0.0 }));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeampatternRun {
    pub eps_th: f64,
    /// `None` when no feasible design was found.
    pub design: Option<BeamformerSolution>,
    pub theta_deg: Vec<f64>,
    pub power: Vec<f64>,
    pub coefficients: Vec<(usize, usize, f64)>,
}

impl BeampatternRun {
    pub fn normalized_db(&self) -> Vec<f64> {
        let peak = self.power.iter().cloned().fold(0.0, f64::max);
        self.power.iter().map(|p| 10.0 * (p / peak).log10()).collect()
    }
}

/// Case II joint designs per `eps_th`, solved with every target gain set to `σ_β`.
pub fn run_beampattern(base: &SystemConfig, eps_values: &[f64], seed: u64, exec: Execution) -> Result<Vec<BeampatternRun>, ConfigError> {
    let mut scs = vec![];
    for &eps in eps_values {
        scs.push((eps, Scenario::new(SweepVar::EpsTh.apply(base, eps)?)?));
    }
    Ok(map_ordered(scs, exec, |(eps, sc)| {
        let cs = generate_channels(&sc, &mut trial_rng(seed, 0, 0, Stream::Channels));
        let beta = vec![c64(sc.rcs_power.sqrt(), 0.0); sc.cfg.n_targets];
        let cs = cs.with_beta(beta, &sc.cfg.target_angles, sc.cfg.antenna_spacing_ratio);
        let out = run_scheme(Scheme::SdrCase2, &sc, &cs, seed, 0, 0);
        let theta_deg = beampattern_grid_deg();
        let (design, power, coefficients) = match out.solution.filter(|_| out.feasible) {
            Some(sol) => {
                let grid: Vec<f64> = theta_deg.iter().map(|d| d.to_radians()).collect();
                let bp = crate::metrics::beampattern(&sol, &grid, sc.cfg.antenna_spacing_ratio);
                let co = cross_correlation_coefficients(&sol, &sc.cfg.target_angles, sc.cfg.antenna_spacing_ratio);
                (Some(sol), bp.power, co)
            }
            None => (None, vec![], vec![]),
        };
        BeampatternRun { eps_th: eps, design, theta_deg, power, coefficients }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Penalty,
    Ao,
}

impl FromStr for Algorithm {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "penalty" | "1" => Ok(Algorithm::Penalty),
            "ao" | "sdr" | "2" => Ok(Algorithm::Ao),
            _ => Err(ConfigError::Invalid(format!("unknown algorithm `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyRow {
    pub outer_iter: usize,
    pub rho: f64,
    pub objective: f64,
    pub violation_xi: f64,
    pub power_w: f64,
}

pub fn penalty_rows(rep: &SolveReport) -> Vec<PenaltyRow> {
    (0..rep.iters_outer)
        .map(|t| PenaltyRow {
            outer_iter: t + 1,
            rho: rep.rho_trace[t],
            objective: rep.objective_trace[t],
            violation_xi: rep.violation_trace[t],
            power_w: rep.power_trace[t],
        })
        .collect()
}

#[derive(Clone, Debug)]
pub enum ConvergenceTrace {
    Penalty(Vec<PenaltyRow>, SolveReport),
    Ao(Vec<AoRow>, AoReport),
}

/// Trace of one solve on trial 0 of `seed`. The AO trace uses the Case II
/// joint scheme.
pub fn run_convergence(sc: &Scenario, algorithm: Algorithm, seed: u64) -> Result<ConvergenceTrace, SolverError> {
    let cs = generate_channels(sc, &mut trial_rng(seed, 0, 0, Stream::Channels));
    let mut solver_rng = trial_rng(seed, 0, 0, Stream::Solver);
    match algorithm {
        Algorithm::Penalty => {
            let (_, rep) = penalty::solve_case1_with_restarts(sc, &cs, &mut solver_rng, PENALTY_RESTARTS)?;
            Ok(ConvergenceTrace::Penalty(penalty_rows(&rep), rep))
        }
        Algorithm::Ao => {
            let p = sdr_problem(Scheme::SdrCase2, sc, &cs);
            let opts = AoOptions::new(sc.cfg.sdr.clone());
            let (_, rep) = sdr::solve_case2(&p, &opts, &mut solver_rng, &mut trial_rng(seed, 0, 0, Stream::Randomization))?;
            Ok(ConvergenceTrace::Ao(rep.trace.clone(), rep))
        }
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn write_rows<W: io::Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header).map_err(csv_err)?;
    for r in rows {
        wr.write_record(&r).map_err(csv_err)?;
    }
    wr.flush()
}

/// `wall_ms` is left empty unless `wall_clock` is set, so repeated runs
/// produce identical files.
pub fn write_sweep_csv<W: io::Write>(w: W, rows: &[TrialRow], wall_clock: bool) -> io::Result<()> {
    write_rows(
        w,
        &["scheme", "sweep_var", "sweep_value", "trial", "seed", "power_dbm", "feasible", "iters", "wall_ms"],
        rows.iter().map(|r| {
            vec![
                r.scheme.to_string(),
                r.sweep_var.to_string(),
                num(r.sweep_value),
                r.trial.to_string(),
                r.seed.to_string(),
                opt(r.power_dbm()),
                u8::from(r.feasible).to_string(),
                r.iters.to_string(),
                if wall_clock { format!("{:.3}", r.wall_ms) } else { String::new() },
            ]
        }),
    )
}

pub fn write_aggregate_csv<W: io::Write>(w: W, aggs: &[Aggregate]) -> io::Result<()> {
    write_rows(
        w,
        &["scheme", "sweep_value", "trials", "feasible", "feasibility_rate", "mean_dbm", "median_dbm", "ci_half_width_db", "mean_iters"],
        aggs.iter().map(|a| {
            vec![
                a.scheme.to_string(),
                num(a.sweep_value),
                a.trials.to_string(),
                a.feasible.to_string(),
                num(a.feasibility_rate()),
                num(a.mean_dbm),
                num(a.median_dbm),
                num(a.ci_half_width_db),
                num(a.mean_iters),
            ]
        }),
    )
}

pub fn write_penalty_trace_csv<W: io::Write>(w: W, rows: &[PenaltyRow]) -> io::Result<()> {
    write_rows(
        w,
        &["outer_iter", "rho", "objective", "violation_xi", "power_w"],
        rows.iter().map(|r| vec![r.outer_iter.to_string(), num(r.rho), num(r.objective), num(r.violation_xi), num(r.power_w)]),
    )
}

pub fn write_ao_trace_csv<W: io::Write>(w: W, rows: &[AoRow]) -> io::Result<()> {
    write_rows(
        w,
        &["ao_iter", "power_w", "max_rank_ratio", "phase_modulus_min"],
        rows.iter().map(|r| vec![r.ao_iter.to_string(), num(r.power_w), num(r.max_rank_ratio), num(r.phase_modulus_min)]),
    )
}

pub fn write_beampattern_csv<W: io::Write>(w: W, run: &BeampatternRun) -> io::Result<()> {
    let db = run.normalized_db();
    write_rows(
        w,
        &["theta_deg", "power", "power_normalized_db"],
        run.power.iter().enumerate().map(|(i, p)| vec![num(run.theta_deg[i]), num(*p), num(db[i])]),
    )
}

pub fn write_coefficients_csv<W: io::Write>(w: W, runs: &[BeampatternRun], angles: &[f64]) -> io::Result<()> {
    let mut rows = vec![];
    for run in runs {
        if run.design.is_none() {
            rows.push(vec![num(run.eps_th), String::new(), String::new(), String::new(), String::new(), "infeasible".into()]);
        }
        for &(l, j, c) in &run.coefficients {
            rows.push(vec![
                num(run.eps_th),
                l.to_string(),
                j.to_string(),
                num(angles[l].to_degrees().round()),
                num(angles[j].to_degrees().round()),
                num(c),
            ]);
        }
    }
    write_rows(w, &["eps_th", "l", "j", "theta_l_deg", "theta_j_deg", "coefficient"], rows)
}

pub fn write_outage_csv<W: io::Write>(w: W, points: &[OutagePoint]) -> io::Result<()> {
    write_rows(
        w,
        &["scheme", "r_r_th_db", "trials", "outages", "outage", "ci_low", "ci_high"],
        points.iter().map(|p| {
            vec![
                p.scheme.to_string(),
                num(p.r_r_db),
                p.trials.to_string(),
                p.outages.to_string(),
                num(p.rate()),
                num(p.ci_low),
                num(p.ci_high),
            ]
        }),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Self-contained SVG line plot with linear axes.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const PAD: f64 = 60.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        W / 2.0,
        escape(title),
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD,
        W / 2.0,
        H - 16.0,
        escape(x_label),
        H / 2.0,
        H / 2.0,
        escape(y_label),
    );
    for (v, anchor) in [(x0, "start"), (x1, "end")] {
        out += &format!("<text x=\"{:.1}\" y=\"{}\" text-anchor=\"{anchor}\">{}</text>\n", sx(v), H - PAD + 16.0, fmt_tick(v));
    }
    for v in [y0, y1] {
        out += &format!("<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n", PAD - 4.0, sy(v) + 4.0, fmt_tick(v));
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        out += &format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n", path.join(" "));
        out += &format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>\n",
            W - PAD - 150.0,
            PAD + 14.0 * i as f64,
            escape(&s.name)
        );
    }
    out += "</svg>\n";
    out
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_cfg() -> SystemConfig {
        SystemConfig { n_users: 2, n_irs: 8, ..SystemConfig::default() }
    }

    #[test]
    fn scheme_and_var_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("nope".parse::<Scheme>().is_err());
        assert_eq!("m".parse::<SweepVar>().unwrap(), SweepVar::M);
        assert_eq!("r_r_th_db".parse::<SweepVar>().unwrap(), SweepVar::RadarSinrDb);
    }

    #[test]
    fn apply_rejects_fractional_counts() {
        let base = SystemConfig::default();
        assert_eq!(SweepVar::M.apply(&base, 75.0).unwrap().n_irs, 75);
        assert!(SweepVar::M.apply(&base, 7.5).is_err());
        assert!(SweepVar::K.apply(&base, 0.0).is_err());
        assert!(SweepVar::EpsTh.apply(&base, f64::INFINITY).unwrap().cross_corr_limit.is_infinite());
    }

    #[test]
    fn validation_catches_bad_specs() {
        let base = small_cfg();
        let ok = SweepSpec { sweep_var: SweepVar::M, values: vec![4.0], trials: 1, schemes: vec![Scheme::PenaltyCase1] };
        assert!(ok.validate(&base).is_ok());
        assert!(SweepSpec { trials: 0, ..ok.clone() }.validate(&base).is_err());
        assert!(SweepSpec { values: vec![], ..ok.clone() }.validate(&base).is_err());
        assert!(SweepSpec { schemes: vec![], ..ok.clone() }.validate(&base).is_err());
        let eps = SweepSpec { sweep_var: SweepVar::EpsTh, values: vec![1.0], ..ok.clone() };
        assert!(eps.validate(&base).is_err());
        let eps_sdr = SweepSpec { schemes: vec![Scheme::SdrCase2], ..eps };
        assert!(eps_sdr.validate(&base).is_ok());
    }

    #[test]
    fn single_trial_sweep_equals_direct_call() {
        let base = small_cfg();
        let spec = SweepSpec { sweep_var: SweepVar::M, values: vec![8.0], trials: 1, schemes: vec![Scheme::PenaltyCase1CommOnly] };
        let res = run_sweep(&spec, &base, 17, Execution::Sequential).unwrap();
        let sc = base.resolve().unwrap();
        let cs = generate_channels(&sc, &mut trial_rng(17, 0, 0, Stream::Channels));
        let (sol, rep) = penalty::solve_case1_with_restarts(&sc, &cs, &mut trial_rng(17, 0, 0, Stream::Solver), PENALTY_RESTARTS).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert_eq!(res.rows[0].power_w, Some(transmit_power(&sol)));
        assert_eq!(res.rows[0].iters, rep.iters_outer);
    }

    #[test]
    fn sweep_csv_is_independent_of_scheduling() {
        let base = small_cfg();
        let spec = SweepSpec {
            sweep_var: SweepVar::K,
            values: vec![1.0, 2.0],
            trials: 3,
            schemes: vec![Scheme::PenaltyCase1CommOnly, Scheme::SdrNoIrs],
        };
        let csv = |exec| {
            let r = run_sweep(&spec, &base, 5, exec).unwrap();
            let mut buf = vec![];
            write_sweep_csv(&mut buf, &r.rows, false).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let a = csv(Execution::Sequential);
        assert_eq!(a, csv(Execution::Parallel { threads: 3 }));
        assert!(a.starts_with("scheme,sweep_var,sweep_value,trial,seed,power_dbm,feasible,iters,wall_ms\n"));
        assert_eq!(a.lines().count(), 1 + 2 * 3 * 2);
    }

    #[test]
    fn aggregates_recompute_from_rows() {
        let mk = |s, v, t, p: Option<f64>| TrialRow {
            scheme: s,
            sweep_var: SweepVar::M,
            sweep_value: v,
            trial: t,
            seed: 0,
            power_w: p,
            feasible: p.is_some(),
            iters: 10 + t,
            wall_ms: 0.0,
            error: None,
        };
        let rows = vec![
            mk(Scheme::SdrCase1, 25.0, 0, Some(1.0)),
            mk(Scheme::SdrCase1, 25.0, 1, Some(0.1)),
            mk(Scheme::SdrCase1, 25.0, 2, None),
            mk(Scheme::SdrNoIrs, 25.0, 0, None),
        ];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].feasible, 2);
        assert!((agg[0].feasibility_rate() - 2.0 / 3.0).abs() < 1e-15);
        assert!((agg[0].mean_dbm - 25.0).abs() < 1e-12);
        assert!((agg[0].median_dbm - 25.0).abs() < 1e-12);
        assert!((agg[0].mean_iters - 11.0).abs() < 1e-12);
        assert!(agg[1].mean_dbm.is_nan());
        assert_eq!(agg[1].feasibility_rate(), 0.0);
    }

    #[test]
    fn wilson_interval_known_values() {
        let (lo, hi) = wilson_interval(0, 10);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.277_532).abs() < 1e-5);
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.403_831).abs() < 1e-5 && (hi - 0.596_169).abs() < 1e-5);
    }

    #[test]
    fn coefficients_match_closed_forms() {
        let n = 8;
        let (t0, t1) = (0.3f64, -0.5f64);
        let pack = |r: crate::scene::CMat| crate::metrics::CovariancePack {
            w_cov: vec![r],
            z_r: crate::scene::CMat::zeros(n, n),
            v: CVec::zeros(1),
        };
        // white covariance: |a_0ᴴ a_1| / n, the normalized Dirichlet kernel
        let co = cross_correlation_coefficients(&pack(crate::scene::CMat::identity(n, n)), &[t0, t1], 0.5);
        let psi = std::f64::consts::PI * (t0.sin() - t1.sin());
        let dirichlet = ((n as f64 * psi / 2.0).sin() / (psi / 2.0).sin()).abs() / n as f64;
        assert_eq!(co.len(), 1);
        assert!((co[0].2 - dirichlet).abs() < 1e-12, "{} {}", co[0].2, dirichlet);
        // single steering outer product: Cauchy–Schwarz holds with equality
        let a = steering_vector(0.1, n, 0.5);
        let co = cross_correlation_coefficients(&pack(&a * a.adjoint()), &[t0, t1], 0.5);
        assert!((co[0].2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn convergence_traces_have_rows() {
        let sc = small_cfg().resolve().unwrap();
        let ConvergenceTrace::Penalty(rows, rep) = run_convergence(&sc, Algorithm::Penalty, 3).unwrap() else { panic!() };
        assert_eq!(rows.len(), rep.iters_outer);
        assert!(rows.last().unwrap().violation_xi <= sc.cfg.penalty.eps_outer);
        let mut buf = vec![];
        write_penalty_trace_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("outer_iter,rho,objective,violation_xi,power_w\n"));
        let mut sc1 = sc.clone();
        sc1.cfg.sdr.max_ao_iters = 1;
        let ConvergenceTrace::Ao(rows, _) = run_convergence(&sc1, Algorithm::Ao, 3).unwrap() else { panic!() };
        assert_eq!(rows.len(), 1);
        let mut buf = vec![];
        write_ao_trace_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("ao_iter,power_w,max_rank_ratio,phase_modulus_min\n"));
    }

    #[test]
    fn outage_requires_finite_eps() {
        assert!(run_outage(&SystemConfig::default(), &[10.0], 1, 0, Execution::Sequential).is_err());
    }

    #[test]
    fn outage_vanishes_for_trivial_radar_threshold() {
        let base = SystemConfig { n_users: 2, n_irs: 8, ..SystemConfig::outage_preset() };
        let pts = run_outage(&base, &[-40.0], 5, 2, Execution::Sequential).unwrap();
        assert!(pts.iter().all(|p| p.outages == 0), "{pts:?}");
    }

    #[test]
    fn svg_contains_each_series() {
        let s = vec![
            Series { name: "a<b".into(), points: vec![(0.0, 1.0), (1.0, 2.0)] },
            Series { name: "c".into(), points: vec![(0.0, f64::NAN)] },
        ];
        let svg = line_plot_svg("t", "x", "y", &s);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
    }

    proptest! {
        #[test]
        fn wilson_interval_brackets_estimate(n in 1usize..500, frac in 0.0f64..=1.0) {
            let k = ((n as f64) * frac).floor() as usize;
            let (lo, hi) = wilson_interval(k, n);
            let p = k as f64 / n as f64;
            prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
        }
    }
}

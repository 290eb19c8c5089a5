use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use radcom::config::watts_to_dbm;
use radcom::harness::{self, Algorithm, ConvergenceTrace, Execution, Scheme, Series, SweepSpec};
use radcom::metrics::{feasibility_report, transmit_power};
use radcom::rng::{trial_rng, Stream};
use radcom::scene::{generate_channels, random_phases};
use radcom::sdr::{self, AoOptions};
use radcom::{ConfigError, Scenario, SystemConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "radcom", version, about = "IRS-aided radar-communication beamforming experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON system configuration; defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all logical cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Penalty method on one channel realization (no loop interference).
    SolveCase1 {
        /// Write the outer-iteration trace to this CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Alternating SDR optimization with loop interference.
    SolveCase2 {
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Drop the cross-correlation constraint.
        #[arg(long)]
        no_xcorr: bool,
        /// Communication beams only, with Gaussian randomization.
        #[arg(long)]
        comm_only: bool,
        /// Write the first covariance problem in conic standard form.
        #[arg(long)]
        dump_conic: Option<PathBuf>,
    },
    /// Monte-Carlo sweep over one system parameter.
    Sweep {
        /// One of M, K, r_r_th_db, d_x, eps_th.
        #[arg(long, default_value = "M")]
        var: String,
        #[arg(long, value_delimiter = ',', default_value = "25,50,75,100")]
        values: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, value_delimiter = ',', default_value = "penalty_case1,penalty_case1_comm_only,sdr_case1,sdr_no_irs")]
        schemes: Vec<String>,
        /// Record per-trial wall time (makes the CSV run-dependent).
        #[arg(long)]
        wall_clock: bool,
    },
    /// Outage probability versus the radar SINR threshold.
    Outage {
        /// Radar SINR thresholds, dB.
        #[arg(long, value_delimiter = ',', default_value = "0,5,10,15,20,25")]
        values: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
    /// Transmit beampatterns and cross-correlation coefficients per budget.
    Beampattern {
        /// Cross-correlation budgets in mW²; `inf` drops the constraint.
        #[arg(long, value_delimiter = ',', default_value = "inf,1,0.01")]
        eps: Vec<f64>,
    },
    /// Per-iteration trace of one solve.
    Convergence {
        /// `penalty` or `ao`.
        #[arg(long, default_value = "penalty")]
        algorithm: String,
    },
}

enum Failure {
    Config(String),
    Infeasible(String),
    Io(io::Error),
    Solver(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<radcom::SolverError> for Failure {
    fn from(e: radcom::SolverError) -> Self {
        Failure::Solver(e.to_string())
    }
}

fn load_config(g: &Global, default: SystemConfig) -> Result<SystemConfig, Failure> {
    let mut cfg = match &g.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?;
            SystemConfig::from_json(&text)?
        }
        None => default,
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> io::Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn create_at(path: &Path) -> io::Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_svg(dir: &Path, name: &str, svg: &str) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), svg)
}

fn solve_case1(g: &Global, trace: Option<PathBuf>) -> Result<(), Failure> {
    let sc = Scenario::new(load_config(g, SystemConfig::default())?)?;
    if sc.has_xcorr_limit() {
        return Err(Failure::Config("solve-case1 needs cross_corr_limit = inf".into()));
    }
    let seed = sc.cfg.seed;
    let cs = generate_channels(&sc, &mut trial_rng(seed, 0, 0, Stream::Channels));
    let (sol, rep) = radcom::penalty::solve_case1_with_restarts(&sc, &cs, &mut trial_rng(seed, 0, 0, Stream::Solver), harness::PENALTY_RESTARTS)?;
    let fr = feasibility_report(&sol, &sc, &cs, false);
    println!(
        "status {:?} outer {} inner {} power {:.4} dBm xi {:.3e} feasible {}",
        rep.status,
        rep.iters_outer,
        rep.iters_inner_total,
        watts_to_dbm(transmit_power(&sol)),
        rep.violation_trace.last().copied().unwrap_or(f64::NAN),
        fr.is_feasible(harness::FEASIBILITY_TOL)
    );
    if let Some(path) = trace {
        harness::write_penalty_trace_csv(create_at(&path)?, &harness::penalty_rows(&rep))?;
    }
    if !fr.is_feasible(harness::FEASIBILITY_TOL) {
        return Err(Failure::Infeasible("returned design violates the constraints".into()));
    }
    Ok(())
}

fn solve_case2(g: &Global, trace: Option<PathBuf>, no_xcorr: bool, comm_only: bool, dump: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = load_config(g, SystemConfig::default())?;
    if no_xcorr {
        cfg.cross_corr_limit = f64::INFINITY;
    }
    let sc = Scenario::new(cfg)?;
    let seed = sc.cfg.seed;
    let cs = generate_channels(&sc, &mut trial_rng(seed, 0, 0, Stream::Channels));
    let p = sdr::SdrProblem::new(&sc, &cs, sdr::RadarModel::Surrogate, !comm_only);
    let opts = AoOptions::new(sc.cfg.sdr.clone());
    if let Some(path) = dump {
        let v0 = random_phases(cs.n_irs(), &mut trial_rng(seed, 0, 0, Stream::Solver));
        let model = sdr::build_covariance_problem(&p, &v0);
        let lw = model.problem.lower(opts.conic.route).map_err(|e| Failure::Solver(e.to_string()))?;
        let mut f = create_at(&path)?;
        io::Write::write_all(&mut f, radcom_conic::dump_text(&lw).as_bytes())?;
    }
    let (out, rep) =
        sdr::solve_case2(&p, &opts, &mut trial_rng(seed, 0, 0, Stream::Solver), &mut trial_rng(seed, 0, 0, Stream::Randomization))?;
    if let Some(path) = trace {
        harness::write_ao_trace_csv(create_at(&path)?, &rep.trace)?;
    }
    match out {
        sdr::Case2Outcome::Infeasible => Err(Failure::Infeasible("covariance step certified infeasibility".into())),
        sdr::Case2Outcome::Solved(sol) => {
            let fr = feasibility_report(&sol, &sc, &cs, true);
            println!(
                "status {:?} ao_iters {} recovery {:?} power {:.4} dBm radar_beam_share {:.3e} feasible {}",
                rep.status,
                rep.iterations,
                rep.recovery,
                watts_to_dbm(transmit_power(&sol)),
                sol.w_r.norm_squared() / transmit_power(&sol),
                fr.is_feasible(harness::FEASIBILITY_TOL)
            );
            if fr.is_feasible(harness::FEASIBILITY_TOL) {
                Ok(())
            } else {
                Err(Failure::Infeasible("returned design violates the constraints".into()))
            }
        }
    }
}

fn sweep(g: &Global, var: &str, values: Vec<f64>, trials: usize, schemes: &[String], wall_clock: bool) -> Result<(), Failure> {
    let base = load_config(g, SystemConfig::default())?;
    let spec = SweepSpec {
        sweep_var: var.parse()?,
        values,
        trials,
        schemes: schemes.iter().map(|s| s.parse()).collect::<Result<Vec<Scheme>, _>>()?,
    };
    let res = harness::run_sweep(&spec, &base, base.seed, Execution::from_threads(g.threads))?;
    let tag = spec.sweep_var.name();
    harness::write_sweep_csv(create(&g.out_dir, &format!("sweep_{tag}.csv"))?, &res.rows, wall_clock)?;
    harness::write_aggregate_csv(create(&g.out_dir, &format!("sweep_{tag}_summary.csv"))?, &res.aggregates)?;
    let series: Vec<Series> = spec
        .schemes
        .iter()
        .map(|&s| Series {
            name: s.to_string(),
            points: res.aggregates.iter().filter(|a| a.scheme == s).map(|a| (a.sweep_value, a.mean_dbm)).collect(),
        })
        .collect();
    write_svg(&g.out_dir, &format!("sweep_{tag}.svg"), &harness::line_plot_svg("Transmit power", tag, "power (dBm)", &series))?;
    for a in &res.aggregates {
        println!(
            "{:<24} {}={:<8} mean {:>8.3} dBm ±{:.3}  feasible {:.2}  iters {:.1}",
            a.scheme.name(),
            tag,
            a.sweep_value,
            a.mean_dbm,
            a.ci_half_width_db,
            a.feasibility_rate(),
            a.mean_iters
        );
    }
    if res.all_infeasible() {
        return Err(Failure::Infeasible("every trial was infeasible".into()));
    }
    Ok(())
}

fn outage(g: &Global, values: Vec<f64>, trials: usize) -> Result<(), Failure> {
    let base = load_config(g, SystemConfig::outage_preset())?;
    let points = harness::run_outage(&base, &values, trials, base.seed, Execution::from_threads(g.threads))?;
    harness::write_outage_csv(create(&g.out_dir, "outage.csv")?, &points)?;
    let series: Vec<Series> = [Scheme::SdrCase2, Scheme::SdrCase2CommOnly]
        .iter()
        .map(|&s| Series {
            name: s.to_string(),
            points: points.iter().filter(|p| p.scheme == s).map(|p| (p.r_r_db, p.rate())).collect(),
        })
        .collect();
    write_svg(&g.out_dir, "outage.svg", &harness::line_plot_svg("Outage probability", "radar SINR (dB)", "outage", &series))?;
    for p in &points {
        println!("{:<22} r_r={:<6} outage {:.3} [{:.3}, {:.3}]", p.scheme.name(), p.r_r_db, p.rate(), p.ci_low, p.ci_high);
    }
    if points.iter().all(|p| p.outages == p.trials) {
        return Err(Failure::Infeasible("every trial was in outage".into()));
    }
    Ok(())
}

fn beampattern(g: &Global, eps: Vec<f64>) -> Result<(), Failure> {
    let base = load_config(g, SystemConfig::default())?;
    let runs = harness::run_beampattern(&base, &eps, base.seed, Execution::from_threads(g.threads))?;
    let mut series = vec![];
    for run in &runs {
        match &run.design {
            Some(_) => {
                harness::write_beampattern_csv(create(&g.out_dir, &format!("beampattern_eps_{}.csv", run.eps_th))?, run)?;
                let db = run.normalized_db();
                series.push(Series {
                    name: format!("eps_th = {}", run.eps_th),
                    points: run.theta_deg.iter().copied().zip(db).collect(),
                });
                let worst = run.coefficients.iter().map(|c| c.2).fold(0.0, f64::max);
                println!("eps_th {:<8} max coefficient {:.4e}", run.eps_th, worst);
            }
            None => println!("eps_th {:<8} infeasible", run.eps_th),
        }
    }
    harness::write_coefficients_csv(create(&g.out_dir, "cross_correlation.csv")?, &runs, &base.target_angles)?;
    write_svg(&g.out_dir, "beampattern.svg", &harness::line_plot_svg("Beampattern", "angle (deg)", "normalized (dB)", &series))?;
    if runs.iter().all(|r| r.design.is_none()) {
        return Err(Failure::Infeasible("no budget admitted a design".into()));
    }
    Ok(())
}

fn convergence(g: &Global, algorithm: &str) -> Result<(), Failure> {
    let algorithm: Algorithm = algorithm.parse()?;
    let sc = Scenario::new(load_config(g, SystemConfig::default())?)?;
    if algorithm == Algorithm::Penalty && sc.has_xcorr_limit() {
        return Err(Failure::Config("the penalty method needs cross_corr_limit = inf".into()));
    }
    match harness::run_convergence(&sc, algorithm, sc.cfg.seed)? {
        ConvergenceTrace::Penalty(rows, rep) => {
            harness::write_penalty_trace_csv(create(&g.out_dir, "convergence_penalty.csv")?, &rows)?;
            let pts = rows.iter().map(|r| (r.outer_iter as f64, r.violation_xi.log10())).collect();
            let s = [Series { name: "log10 xi".into(), points: pts }];
            write_svg(&g.out_dir, "convergence_penalty.svg", &harness::line_plot_svg("Penalty method", "outer iteration", "log10 violation", &s))?;
            println!("status {:?} outer {}", rep.status, rep.iters_outer);
        }
        ConvergenceTrace::Ao(rows, rep) => {
            harness::write_ao_trace_csv(create(&g.out_dir, "convergence_ao.csv")?, &rows)?;
            let pts = rows.iter().map(|r| (r.ao_iter as f64, watts_to_dbm(r.power_w))).collect();
            let s = [Series { name: "power".into(), points: pts }];
            write_svg(&g.out_dir, "convergence_ao.svg", &harness::line_plot_svg("Alternating optimization", "iteration", "power (dBm)", &s))?;
            println!("status {:?} iterations {}", rep.status, rep.iterations);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let res = match cli.cmd {
        Command::SolveCase1 { trace } => solve_case1(g, trace),
        Command::SolveCase2 { trace, no_xcorr, comm_only, dump_conic } => solve_case2(g, trace, no_xcorr, comm_only, dump_conic),
        Command::Sweep { var, values, trials, schemes, wall_clock } => sweep(g, &var, values, trials, &schemes, wall_clock),
        Command::Outage { values, trials } => outage(g, values, trials),
        Command::Beampattern { eps } => beampattern(g, eps),
        Command::Convergence { algorithm } => convergence(g, &algorithm),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Infeasible(m)) => {
            eprintln!("infeasible: {m}");
            ExitCode::from(EXIT_INFEASIBLE)
        }
        Err(Failure::Io(e)) => {
            eprintln!("i/o error: {e}");
            ExitCode::FAILURE
        }
        Err(Failure::Solver(m)) => {
            eprintln!("solver error: {m}");
            ExitCode::FAILURE
        }
    }
}

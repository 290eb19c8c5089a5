//! SDR-based alternating optimization for Case II, plus the constructive
//! rank-one and zero-radar transforms and the Gaussian-randomization utility
//! used by the communication-only comparison scheme.
//!
//! Channels are noise-normalized as in the penalty solver. Inside each
//! covariance SDP the matrix unknowns are further divided by a power scale
//! `p0` so that they are of order one.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use radcom_conic::{
    realify_factor, ConicProblem, FreeVar, LinExpr, PsdVar, Route, Sense, SolveOptions, SolveStatus,
};

use crate::config::{Scenario, SdrParams};
use crate::error::SolverError;
use crate::metrics::{
    cross_correlation_of, hermitian_part, is_psd, sorted_eigen, BeamformerSolution, CovariancePack, Design,
    XCORR_UNIT,
};
use crate::scene::{c64, cn, random_phases, steering_vector, CMat, CVec, ChannelSet};

/// Relative backoff on the cross-correlation budget inside the covariance
/// step. Rank-one extraction drops eigen-components of order the solver
/// tolerance, and the heavily cancelled cross terms can move by more than
/// that; the guard keeps the extracted beams within the true budget.
pub const XCORR_GUARD: f64 = 2e-3;
/// Relative SINR margin asked of the covariance SDP, absorbing readout error.
pub const SINR_GUARD: f64 = 1e-4;

/// How the radar SINR enters the covariance step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RadarModel {
    /// Loop interference canceled: `tr(A R A^H) ≥ r_r σ²`.
    Exact,
    /// Loop interference present: `tr(A R A^H) ≥ r_r (tr(B R B^H) + σ² N_r)`.
    Surrogate,
}

#[derive(Clone, Debug)]
pub struct SdrProblem {
    /// Noise-normalized channels.
    pub cs: ChannelSet,
    pub r_user: Vec<f64>,
    pub r_radar: f64,
    /// mW², `∞` when the constraint is dropped.
    pub xcorr_limit: f64,
    pub target_angles: Vec<f64>,
    pub spacing: f64,
    pub radar: RadarModel,
    /// `false` removes the dedicated radar covariance entirely.
    pub radar_block: bool,
}

impl SdrProblem {
    pub fn new(sc: &Scenario, cs: &ChannelSet, radar: RadarModel, radar_block: bool) -> Self {
        SdrProblem {
            cs: cs.scaled(1.0 / sc.noise_power.sqrt()),
            r_user: sc.sinr_user.clone(),
            r_radar: sc.sinr_radar,
            xcorr_limit: sc.cfg.cross_corr_limit,
            target_angles: sc.cfg.target_angles.clone(),
            spacing: sc.cfg.antenna_spacing_ratio,
            radar,
            radar_block,
        }
    }

    pub fn channels(&self, v: &CVec) -> Vec<CVec> {
        (0..self.cs.n_users()).map(|k| self.cs.effective_user_channel(v, k)).collect()
    }

    fn loop_gram(&self, v: &CVec) -> Option<CMat> {
        match self.radar {
            RadarModel::Exact => None,
            RadarModel::Surrogate => {
                let b = self.cs.irs_loop_matrix(v);
                Some(b.adjoint() * b)
            }
        }
    }

    /// `Ã^H Ã − r_r B̃^H B̃` (second term only with loop interference).
    fn radar_matrix(&self, v: &CVec) -> CMat {
        let mut c = self.cs.a_mat.adjoint() * &self.cs.a_mat;
        if let Some(bb) = self.loop_gram(v) {
            c -= bb * c64(self.r_radar, 0.0);
        }
        hermitian_part(&c)
    }

    fn radar_rhs(&self) -> f64 {
        match self.radar {
            RadarModel::Exact => self.r_radar,
            RadarModel::Surrogate => self.r_radar * self.cs.n_rx() as f64,
        }
    }

    pub fn has_xcorr(&self) -> bool {
        self.xcorr_limit.is_finite()
    }
}

/// A covariance SDP ready to solve, with the handles needed to read it back.
pub struct CovarianceModel {
    pub problem: ConicProblem,
    pub w: Vec<PsdVar>,
    pub z: Option<PsdVar>,
    pub scale: f64,
}

/// Scales a row so that its largest coefficient or constant is one.
fn normalized(e: LinExpr) -> LinExpr {
    let big = e.terms.iter().map(|t| t.1.abs()).fold(e.constant.abs(), f64::max);
    if big > 0.0 {
        e.scaled(1.0 / big)
    } else {
        e
    }
}

fn outer(a: &CVec, b: &CVec) -> CMat {
    a * b.adjoint()
}

pub fn build_covariance_problem(p: &SdrProblem, v: &CVec) -> CovarianceModel {
    let hs = p.channels(v);
    let nt = p.cs.n_tx();
    let k = hs.len();
    let c_radar = p.radar_matrix(v);
    let rhs = p.radar_rhs();
    let mut p0: f64 = 0.0;
    for (kk, h) in hs.iter().enumerate() {
        p0 = p0.max(p.r_user[kk] / h.norm_squared().max(f64::MIN_POSITIVE));
    }
    let amax = (p.cs.a_mat.adjoint() * &p.cs.a_mat).symmetric_eigenvalues().max();
    if amax > 0.0 {
        p0 = p0.max(rhs / amax);
    }
    if !(p0 > 0.0 && p0.is_finite()) {
        p0 = 1.0;
    }

    let mut prob = ConicProblem::new();
    let w: Vec<PsdVar> = (0..k).map(|_| prob.add_psd(nt)).collect();
    let z = if p.radar_block { Some(prob.add_psd(nt)) } else { None };
    let all: Vec<PsdVar> = w.iter().cloned().chain(z).collect();
    let eye = CMat::identity(nt, nt);
    let mut obj = LinExpr::new();
    for x in &all {
        obj = obj.add_trace(*x, &eye, 1.0);
    }
    prob.set_objective(Sense::Minimize, obj);

    for (kk, h) in hs.iter().enumerate() {
        let hh = outer(h, h) * c64(p0, 0.0);
        let mut e = LinExpr::constant(1.0).add_trace(w[kk], &hh, -1.0 / (p.r_user[kk] * (1.0 + SINR_GUARD)));
        for (i, x) in all.iter().enumerate() {
            if i != kk {
                e = e.add_trace(*x, &hh, 1.0);
            }
        }
        prob.add_le(normalized(e));
    }
    let c = &c_radar * c64(p0 / rhs, 0.0);
    let mut e = LinExpr::constant(1.0);
    for x in &all {
        e = e.add_trace(*x, &c, -1.0);
    }
    prob.add_le(normalized(e));
    if p.has_xcorr() && p.target_angles.len() > 1 {
        let a: Vec<CVec> = p.target_angles.iter().map(|&t| steering_vector(t, nt, p.spacing)).collect();
        let mut rows = vec![];
        for l in 0..a.len() {
            for j in l + 1..a.len() {
                // a_l^H R a_j = tr(R a_j a_l^H)
                let c = outer(&a[j], &a[l]);
                let re = hermitian_part(&c);
                let im = hermitian_part(&(c * c64(0.0, -1.0)));
                let (mut er, mut ei) = (LinExpr::new(), LinExpr::new());
                for x in &all {
                    er = er.add_trace(*x, &re, 1.0);
                    ei = ei.add_trace(*x, &im, 1.0);
                }
                rows.push(er);
                rows.push(ei);
            }
        }
        let t = (p.xcorr_limit * (1.0 - XCORR_GUARD)).sqrt() / (XCORR_UNIT.sqrt() * p0);
        prob.add_soc(LinExpr::constant(t), rows);
    }
    CovarianceModel { problem: prob, w, z, scale: p0 }
}

#[derive(Clone, Debug)]
pub enum CovOutcome {
    Solved(CovariancePack),
    Infeasible,
}

fn conic_failure(status: SolveStatus, what: &str) -> SolverError {
    SolverError::Conic(format!("{what}: solver returned {status:?}"))
}

/// Minimum-power covariances at fixed phases.
pub fn covariance_step(p: &SdrProblem, v: &CVec, opts: &SolveOptions) -> Result<CovOutcome, SolverError> {
    let model = build_covariance_problem(p, v);
    let first = covariance_solve(p, v, &model, opts);
    if opts.route == Route::Direct {
        return first.map(|x| x.0);
    }
    match first {
        Ok((out, true)) => Ok(out),
        // the dual readout failed or missed the SINR rows by more than rescaling absorbs
        _ => {
            let direct = SolveOptions { route: Route::Direct, ..opts.clone() };
            Ok(covariance_solve(p, v, &model, &direct)?.0)
        }
    }
}

/// Solves the model once; the flag reports whether the user SINRs hold exactly.
fn covariance_solve(p: &SdrProblem, v: &CVec, model: &CovarianceModel, opts: &SolveOptions) -> Result<(CovOutcome, bool), SolverError> {
    let sol = model.problem.solve(opts)?;
    match sol.status {
        SolveStatus::Optimal | SolveStatus::AlmostOptimal => {}
        SolveStatus::InfeasibleCertificate => return Ok((CovOutcome::Infeasible, true)),
        s => return Err(conic_failure(s, "covariance step")),
    }
    let nt = p.cs.n_tx();
    let k = c64(model.scale, 0.0);
    let w_cov = model.w.iter().map(|x| hermitian_part(sol.matrix(*x)) * k).collect();
    let z_r = match model.z {
        Some(x) => hermitian_part(sol.matrix(x)) * k,
        None => CMat::zeros(nt, nt),
    };
    let mut pack = CovariancePack { w_cov, z_r, v: v.clone() };
    let exact = restore_user_sinr(p, &mut pack);
    Ok((CovOutcome::Solved(pack), exact))
}

/// Relative SINR shortfall tolerated without rescaling.
const SINR_SLACK: f64 = 1e-9;
/// Relative loss of the radar row accepted while rescaling.
const RADAR_SLACK: f64 = 1e-7;

/// Closes any SINR shortfall left by the solver readout by scaling the user
/// covariances up. A uniform scale keeps the cross-correlation cancellation
/// intact and is tried first; otherwise per-user power control finds the
/// smallest `a_k ≥ 1` meeting every SINR row. Either is accepted only when
/// the radar row holds and the cross-correlation stays inside the guard band.
/// Returns whether every user now meets its threshold.
fn restore_user_sinr(p: &SdrProblem, pack: &mut CovariancePack) -> bool {
    let k = p.cs.n_users();
    let hs = p.channels(&pack.v);
    // g[i][j] = h_i^H W_j h_i, z[i] = h_i^H Z h_i
    let g: Vec<Vec<f64>> = hs.iter().map(|h| pack.w_cov.iter().map(|w| h.dotc(&(w * h)).re).collect()).collect();
    let z: Vec<f64> = hs.iter().map(|h| h.dotc(&(&pack.z_r * h)).re).collect();
    let need = |a: &[f64], zs: f64, i: usize| {
        let interf: f64 = (0..k).filter(|j| *j != i).map(|j| a[j] * g[i][j]).sum::<f64>() + zs * z[i];
        p.r_user[i] * (interf + 1.0) / g[i][i]
    };
    let ones = vec![1.0; k];
    if (0..k).all(|i| need(&ones, 1.0, i) <= 1.0 + SINR_SLACK) {
        return true;
    }
    let c = p.radar_matrix(&pack.v);
    let radar_row = |w: &[CMat], z_r: &CMat| (&c * w.iter().fold(z_r.clone(), |acc, x| acc + x)).trace().re;
    let radar_floor = radar_row(&pack.w_cov, &pack.z_r).min(p.radar_rhs()) * (1.0 - RADAR_SLACK);
    let xcorr_ok = |w: &[CMat], z_r: &CMat| {
        !p.has_xcorr() || {
            let r = w.iter().fold(z_r.clone(), |acc, x| acc + x);
            cross_correlation_of(&r, &p.target_angles, p.spacing) * XCORR_UNIT <= p.xcorr_limit * (1.0 - 0.25 * XCORR_GUARD)
        }
    };

    // uniform: SINR_i(a) = a s / (a i + 1), so a = r / (s − r i)
    let mut u: f64 = 1.0;
    for i in 0..k {
        let margin = g[i][i] - p.r_user[i] * (need(&ones, 1.0, i) * g[i][i] / p.r_user[i] - 1.0);
        u = if margin > 0.0 { u.max(p.r_user[i] / margin) } else { f64::INFINITY };
    }
    if u <= 1.01 {
        let s = c64(u * (1.0 + SINR_SLACK), 0.0);
        let w: Vec<CMat> = pack.w_cov.iter().map(|x| x * s).collect();
        let z_r = &pack.z_r * s;
        if radar_row(&w, &z_r) >= radar_floor && xcorr_ok(&w, &z_r) {
            pack.w_cov = w;
            pack.z_r = z_r;
            return true;
        }
    }

    // per-user: monotone fixed-point iteration of the standard interference function
    let mut a = ones;
    for _ in 0..20_000 {
        let next: Vec<f64> = (0..k).map(|i| need(&a, 1.0, i).max(1.0)).collect();
        let done = next.iter().zip(&a).all(|(x, y)| x - y <= 1e-15 * x);
        a = next;
        if done || a.iter().any(|x| !x.is_finite() || *x > 1.01) {
            break;
        }
    }
    if a.iter().any(|x| !x.is_finite() || *x > 1.01) || (0..k).any(|i| need(&a, 1.0, i) > a[i] * (1.0 + SINR_SLACK)) {
        return false;
    }
    let w: Vec<CMat> = pack.w_cov.iter().zip(&a).map(|(x, s)| x * c64(*s * (1.0 + SINR_SLACK), 0.0)).collect();
    if radar_row(&w, &pack.z_r) >= radar_floor && xcorr_ok(&w, &pack.z_r) {
        pack.w_cov = w;
        return true;
    }
    false
}

/// Pieces of the phase-step constraints in the variable `u = conj(v)`.
pub struct PhaseTerms {
    /// Per user: `(Q1, l, c0)` of `u^H Q1 u + Re(l^H u) + c0 + η_k ≤ 0`.
    pub users: Vec<(CMat, CVec, f64)>,
    /// Per user: `1 + c_k f2(u_t)` used to normalize each row.
    pub user_scale: Vec<f64>,
    /// `(r_r Q_u, r_r σ² N_r − tr(Ã R Ã^H))` when loop interference is modeled.
    pub radar: Option<(CMat, f64)>,
}

/// `(G_r^H G_r) ⊙ (G_t R G_t^H)^T`, so that `tr(B R B^H) = v^H Q v`.
pub fn loop_quadratic(cs: &ChannelSet, r: &CMat) -> CMat {
    let a = cs.g_r.adjoint() * &cs.g_r;
    let b = &cs.g_t * r * cs.g_t.adjoint();
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * b[(j, i)])
}

pub fn phase_terms(p: &SdrProblem, pack: &CovariancePack, taylor: &CVec) -> PhaseTerms {
    let r = pack.covariance();
    let ut = taylor.map(|x| x.conj());
    let mut users = vec![];
    let mut user_scale = vec![];
    for k in 0..p.cs.n_users() {
        let phi = p.cs.cascaded(k);
        let hd = &p.cs.h_d[k];
        let wk = &pack.w_cov[k];
        let ck = 1.0 / p.r_user[k] + 1.0;
        let q1 = hermitian_part(&(&phi * &r * phi.adjoint()));
        let q2 = hermitian_part(&(&phi * wk * phi.adjoint()));
        let q2ut = &q2 * &ut;
        let l = (&phi * &r * hd) * c64(2.0, 0.0) - (&phi * wk * hd) * c64(2.0 * ck, 0.0) - &q2ut * c64(2.0 * ck, 0.0);
        let hdw = hd.dotc(&(wk * hd)).re;
        let uq2u = ut.dotc(&q2ut).re;
        let c0 = hd.dotc(&(&r * hd)).re + 1.0 - ck * (hdw - uq2u);
        let f2t = p.cs.effective_user_channel(taylor, k);
        user_scale.push(1.0 + ck * f2t.dotc(&(wk * &f2t)).re);
        users.push((q1, l, c0));
    }
    let radar = match p.radar {
        RadarModel::Exact => None,
        RadarModel::Surrogate => {
            let q = loop_quadratic(&p.cs, &r).map(|x| x.conj()) * c64(p.r_radar, 0.0);
            let s = (&p.cs.a_mat * &r * p.cs.a_mat.adjoint()).trace().re;
            Some((hermitian_part(&q), p.r_radar * p.cs.n_rx() as f64 - s))
        }
    };
    PhaseTerms { users, user_scale, radar }
}

/// Low-rank factors `F` with `F Fᴴ` equal to the user and radar quadratics
/// of [`phase_terms`].
pub fn phase_factors(p: &SdrProblem, pack: &CovariancePack) -> (Vec<CMat>, Option<CMat>) {
    let rs = psd_sqrt(&pack.covariance());
    let users = (0..p.cs.n_users()).map(|k| p.cs.cascaded(k) * &rs).collect();
    let radar = match p.radar {
        RadarModel::Exact => None,
        RadarModel::Surrogate => {
            let ft = &p.cs.g_t * &rs;
            let (m, nt, nr) = (p.cs.n_irs(), ft.ncols(), p.cs.n_rx());
            let k = c64(p.r_radar.sqrt(), 0.0);
            Some(CMat::from_fn(m, nr * nt, |i, c| p.cs.g_r[(c / nt, i)] * ft[(i, c % nt)] * k))
        }
    };
    (users, radar)
}

fn quad_value(q: &CMat, l: &CVec, c: f64, u: &CVec) -> f64 {
    u.dotc(&(q * u)).re + l.dotc(u).re + c
}

/// Phase-step SOCP and the handles of the stacked `[Re u; Im u]` variables.
pub struct PhaseModel {
    pub problem: ConicProblem,
    pub u: Vec<FreeVar>,
}

pub fn build_phase_problem(p: &SdrProblem, pack: &CovariancePack, taylor: &CVec) -> Result<PhaseModel, SolverError> {
    let m = p.cs.n_irs();
    let terms = phase_terms(p, pack, taylor);
    let ut = taylor.map(|x| x.conj());
    let mut prob = ConicProblem::new();
    let xs: Vec<FreeVar> = prob.add_free_vec(2 * m);
    let mut obj = LinExpr::new();

    let (user_f, radar_f) = phase_factors(p, pack);

    let add_row = |prob: &mut ConicProblem, q: &CMat, f: &CMat, l: &CVec, c0: f64, scale: f64, obj: &mut LinExpr| -> Result<(), SolverError> {
        let eta = prob.add_free();
        *obj = std::mem::take(obj).add_var(eta, scale);
        let g = realify_factor(&(f * c64(scale.sqrt().recip(), 0.0)));
        let lin: Vec<f64> = l.iter().map(|z| z.re).chain(l.iter().map(|z| z.im)).map(|x| x / scale).collect();
        let mut aff = LinExpr::constant(c0 / scale).add_var(eta, 1.0);
        for (i, x) in xs.iter().enumerate() {
            if lin[i] != 0.0 {
                aff = aff.add_var(*x, lin[i]);
            }
        }
        prob.add_factored_quadratic_le(&xs, &g, aff);
        // the incumbent stays feasible even when it carries a tiny violation
        let incumbent = -quad_value(q, l, c0, &ut) / scale;
        let floor = incumbent.min(0.0) - 1e-9;
        prob.add_le(LinExpr::var(eta, -1.0).add_const(floor));
        Ok(())
    };
    for (k, (q, l, c0)) in terms.users.iter().enumerate() {
        add_row(&mut prob, q, &user_f[k], l, *c0, terms.user_scale[k], &mut obj)?;
    }
    if let Some((q, c0)) = &terms.radar {
        let scale = p.r_radar * p.cs.n_rx() as f64;
        add_row(&mut prob, q, radar_f.as_ref().expect("surrogate radar factor"), &CVec::zeros(m), *c0, scale, &mut obj)?;
    }
    for i in 0..m {
        prob.add_soc(LinExpr::constant(1.0), vec![LinExpr::var(xs[i], 1.0), LinExpr::var(xs[m + i], 1.0)]);
    }
    prob.set_objective(Sense::Maximize, obj);
    Ok(PhaseModel { problem: prob, u: xs })
}

/// Slack-maximizing phase update around `taylor`. Returns relaxed phases
/// (`|v_m| ≤ 1`).
pub fn phase_step(p: &SdrProblem, pack: &CovariancePack, taylor: &CVec, opts: &SolveOptions) -> Result<CVec, SolverError> {
    let m = p.cs.n_irs();
    let model = build_phase_problem(p, pack, taylor)?;
    let sol = model.problem.solve(opts)?;
    if !sol.status.is_solved() {
        return Err(conic_failure(sol.status, "phase step"));
    }
    let xs = &model.u;
    Ok(CVec::from_fn(m, |i, _| c64(sol.value(xs[i]), -sol.value(xs[m + i]))))
}

/// Projects every entry onto the unit circle; zeros map to `1`.
pub fn project_unit_modulus(v: &CVec) -> CVec {
    v.map(|x| if x.norm() > 0.0 { x / x.norm() } else { c64(1.0, 0.0) })
}

pub fn normalize_and_resolve(p: &SdrProblem, v: &CVec, opts: &SolveOptions) -> Result<(CVec, CovOutcome), SolverError> {
    let vp = project_unit_modulus(v);
    let out = covariance_step(p, &vp, opts)?;
    Ok((vp, out))
}

/// Beamformers whose outer products reproduce a pack exactly on the quadratic
/// forms `h_k^H W_k h_k` and on the aggregate covariance.
pub fn reconstruct_rank_one(pack: &CovariancePack, hs: &[CVec]) -> Result<(BeamformerSolution, CovariancePack), SolverError> {
    let nt = pack.z_r.nrows();
    let k = pack.w_cov.len();
    let mut w_c = CMat::zeros(nt, k);
    let mut w_hat = Vec::with_capacity(k);
    let mut total = pack.z_r.clone();
    for (kk, (w, h)) in pack.w_cov.iter().zip(hs).enumerate() {
        let wh = w * h;
        let g = h.dotc(&wh).re;
        if !(g > 0.0) {
            return Err(SolverError::Reconstruction(format!("user {kk}: h^H W h = {g:e}")));
        }
        let col = wh * c64(1.0 / g.sqrt(), 0.0);
        w_c.set_column(kk, &col);
        total += w;
        total -= &col * col.adjoint();
        w_hat.push(&col * col.adjoint());
    }
    let z = hermitian_part(&total);
    let w_r = psd_sqrt(&z);
    let sol = BeamformerSolution { w_c, w_r, v: pack.v.clone() };
    Ok((sol, CovariancePack { w_cov: w_hat, z_r: z, v: pack.v.clone() }))
}

/// `U diag(√λ₊) U^H`.
pub fn psd_sqrt(x: &CMat) -> CMat {
    let (vals, vecs) = sorted_eigen(x);
    let d = CMat::from_diagonal(&vals.map(|l| c64(l.max(0.0).sqrt(), 0.0)));
    &vecs * d * vecs.adjoint()
}

/// Folds the radar covariance into the user covariances with weights `alphas`.
pub fn zero_radar_transform(pack: &CovariancePack, alphas: &[f64]) -> Result<CovariancePack, SolverError> {
    if alphas.len() != pack.w_cov.len() || alphas.iter().any(|a| !(*a >= 0.0)) || (alphas.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(SolverError::Invalid("weights must be nonnegative and sum to one".into()));
    }
    let w_cov = pack.w_cov.iter().zip(alphas).map(|(w, a)| w + &pack.z_r * c64(*a, 0.0)).collect();
    let n = pack.z_r.nrows();
    Ok(CovariancePack { w_cov, z_r: CMat::zeros(n, n), v: pack.v.clone() })
}

/// `λ₂/λ₁` of a Hermitian PSD matrix (0 for the zero matrix).
pub fn rank_ratio(x: &CMat) -> f64 {
    let (vals, _) = sorted_eigen(x);
    if vals.len() < 2 || vals[0] <= 0.0 {
        return 0.0;
    }
    vals[1].max(0.0) / vals[0]
}

fn dominant_beam(x: &CMat) -> CVec {
    let (vals, vecs) = sorted_eigen(x);
    vecs.column(0) * c64(vals[0].max(0.0).sqrt(), 0.0)
}

/// Best feasible rank-one candidate from Gaussian draws `w_k ~ CN(0, W_k)`,
/// with per-user power control and a uniform scale-up for the radar constraint.
pub fn gaussian_randomization(p: &SdrProblem, pack: &CovariancePack, draws: usize, rng: &mut impl Rng) -> Option<BeamformerSolution> {
    let hs = p.channels(&pack.v);
    let k = hs.len();
    let nt = p.cs.n_tx();
    let roots: Vec<CMat> = pack.w_cov.iter().map(psd_sqrt).collect();
    let a_gram = p.cs.a_mat.adjoint() * &p.cs.a_mat;
    let loop_gram = p.loop_gram(&pack.v);
    let mut best: Option<(f64, CMat)> = None;
    for _ in 0..draws {
        let dirs: Vec<CVec> = roots.iter().map(|s| s * CVec::from_fn(nt, |_, _| cn(rng))).collect();
        let mut m = DMatrix::<f64>::zeros(k, k);
        for kk in 0..k {
            for i in 0..k {
                let g = hs[kk].dotc(&dirs[i]).norm_sqr();
                m[(kk, i)] = if i == kk { g / p.r_user[kk] } else { -g };
            }
        }
        let Some(pw) = m.lu().solve(&DVector::from_element(k, 1.0)) else { continue };
        if pw.iter().any(|x| !(*x > 0.0)) {
            continue;
        }
        let mut w = CMat::zeros(nt, k);
        for i in 0..k {
            w.set_column(i, &(&dirs[i] * c64(pw[i].sqrt(), 0.0)));
        }
        let r = &w * w.adjoint();
        let a = (&a_gram * &r).trace().re;
        let b = loop_gram.as_ref().map(|g| (g * &r).trace().re).unwrap_or(0.0);
        let (need, have) = match p.radar {
            RadarModel::Exact => (p.r_radar, a),
            RadarModel::Surrogate => (p.r_radar * p.cs.n_rx() as f64, a - p.r_radar * b),
        };
        if have <= 0.0 {
            continue;
        }
        let t2 = (need / have).max(1.0);
        let w = w * c64(t2.sqrt(), 0.0);
        let r = &r * c64(t2, 0.0);
        if p.has_xcorr() && cross_correlation_of(&r, &p.target_angles, p.spacing) * XCORR_UNIT > p.xcorr_limit {
            continue;
        }
        let power = w.norm_squared();
        if best.as_ref().map_or(true, |(b, _)| power < *b) {
            best = Some((power, w));
        }
    }
    best.map(|(_, w_c)| BeamformerSolution { w_c, w_r: CMat::zeros(nt, nt), v: pack.v.clone() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AoRow {
    pub ao_iter: usize,
    pub power_w: f64,
    pub max_rank_ratio: f64,
    pub phase_modulus_min: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AoStatus {
    Converged,
    MaxIters,
    /// A phase step did not lower the power; the incumbent was kept.
    Stalled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recovery {
    RankOne,
    Reconstructed,
    Randomized,
}

#[derive(Clone, Debug)]
pub struct AoReport {
    pub trace: Vec<AoRow>,
    pub status: AoStatus,
    pub iterations: usize,
    pub relaxed_power: f64,
    pub recovery: Option<Recovery>,
    pub wall_time: Duration,
}

#[derive(Clone, Debug)]
pub enum Case2Outcome {
    Solved(BeamformerSolution),
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct AoOptions {
    pub params: SdrParams,
    pub conic: SolveOptions,
    /// Skip the phase steps and solve once at the initial phases.
    pub fixed_phases: bool,
}

impl AoOptions {
    pub fn new(params: SdrParams) -> Self {
        AoOptions { params, conic: SolveOptions::default(), fixed_phases: false }
    }
}

fn trace_row(iter: usize, pack: &CovariancePack) -> AoRow {
    AoRow {
        ao_iter: iter,
        power_w: pack.power(),
        max_rank_ratio: pack.w_cov.iter().map(rank_ratio).fold(0.0, f64::max),
        phase_modulus_min: pack.v.iter().map(|x| x.norm()).fold(f64::INFINITY, f64::min),
    }
}

/// Alternating covariance / phase optimization from `v0`, followed by unit-modulus
/// projection and rank-one recovery.
pub fn solve_from(
    p: &SdrProblem,
    v0: CVec,
    opts: &AoOptions,
    rng: &mut impl Rng,
) -> Result<(Case2Outcome, AoReport), SolverError> {
    let start = Instant::now();
    let mut report = AoReport {
        trace: vec![],
        status: AoStatus::MaxIters,
        iterations: 0,
        relaxed_power: f64::NAN,
        recovery: None,
        wall_time: Duration::ZERO,
    };
    let finish = |mut r: AoReport, out: Case2Outcome| {
        r.wall_time = start.elapsed();
        Ok((out, r))
    };
    let mut pack = match covariance_step(p, &v0, &opts.conic)? {
        CovOutcome::Solved(x) => x,
        CovOutcome::Infeasible => return finish(report, Case2Outcome::Infeasible),
    };
    report.trace.push(trace_row(0, &pack));
    report.iterations = 1;
    if opts.fixed_phases {
        report.status = AoStatus::Converged;
    } else {
        for it in 1..opts.params.max_ao_iters {
            let v = match phase_step(p, &pack, &pack.v, &opts.conic) {
                Ok(v) => v,
                Err(SolverError::Conic(_)) => {
                    report.status = AoStatus::Stalled;
                    break;
                }
                Err(e) => return Err(e),
            };
            let next = match covariance_step(p, &v, &opts.conic) {
                Ok(CovOutcome::Solved(x)) => x,
                Ok(CovOutcome::Infeasible) | Err(SolverError::Conic(_)) => {
                    report.status = AoStatus::Stalled;
                    break;
                }
                Err(e) => return Err(e),
            };
            let prev = pack.power();
            let cur = next.power();
            if cur > prev * (1.0 + 1e-9) {
                report.status = AoStatus::Stalled;
                break;
            }
            pack = next;
            report.trace.push(trace_row(it, &pack));
            report.iterations = it + 1;
            if (prev - cur) / prev < opts.params.eps_converge {
                report.status = AoStatus::Converged;
                break;
            }
        }
    }
    report.relaxed_power = pack.power();

    let (vp, out) = normalize_and_resolve(p, &pack.v, &opts.conic)?;
    let pack = match out {
        CovOutcome::Solved(x) => x,
        CovOutcome::Infeasible => return finish(report, Case2Outcome::Infeasible),
    };
    debug_assert_eq!(pack.v, vp);
    let hs = p.channels(&pack.v);
    let ratios: Vec<f64> = pack.w_cov.iter().map(rank_ratio).collect();
    let all_rank_one = ratios.iter().all(|r| *r <= opts.params.rank_one_ratio_tol);
    let nt = p.cs.n_tx();
    let sol = if !p.radar_block {
        if all_rank_one {
            report.recovery = Some(Recovery::RankOne);
            let mut w_c = CMat::zeros(nt, hs.len());
            for (k, w) in pack.w_cov.iter().enumerate() {
                w_c.set_column(k, &dominant_beam(w));
            }
            BeamformerSolution { w_c, w_r: CMat::zeros(nt, nt), v: pack.v.clone() }
        } else {
            report.recovery = Some(Recovery::Randomized);
            match gaussian_randomization(p, &pack, opts.params.randomizations, rng) {
                Some(s) => s,
                None => return finish(report, Case2Outcome::Infeasible),
            }
        }
    } else if all_rank_one && pack.z_r.trace().re <= 0.0 {
        report.recovery = Some(Recovery::RankOne);
        let mut w_c = CMat::zeros(nt, hs.len());
        for (k, w) in pack.w_cov.iter().enumerate() {
            w_c.set_column(k, &dominant_beam(w));
        }
        BeamformerSolution { w_c, w_r: CMat::zeros(nt, nt), v: pack.v.clone() }
    } else {
        report.recovery = Some(if all_rank_one { Recovery::RankOne } else { Recovery::Reconstructed });
        reconstruct_rank_one(&pack, &hs)?.0
    };
    finish(report, Case2Outcome::Solved(sol))
}

/// Random unit-modulus start, then [`solve_from`].
pub fn solve_case2(
    p: &SdrProblem,
    opts: &AoOptions,
    init_rng: &mut impl Rng,
    rand_rng: &mut impl Rng,
) -> Result<(Case2Outcome, AoReport), SolverError> {
    let v0 = random_phases(p.cs.n_irs(), init_rng);
    solve_from(p, v0, opts, rand_rng)
}

/// Single covariance step without a surface.
pub fn solve_no_irs(p: &SdrProblem, opts: &AoOptions, rng: &mut impl Rng) -> Result<(Case2Outcome, AoReport), SolverError> {
    let mut o = opts.clone();
    o.fixed_phases = true;
    solve_from(p, CVec::zeros(p.cs.n_irs()), &o, rng)
}

/// Relative PSD check used on reconstructed radar covariances.
pub fn radar_covariance_is_psd(pack: &CovariancePack) -> bool {
    is_psd(&pack.z_r, 1e-8)
}

//! Two-layer penalty method for Case I: no IRS loop interference at the
//! radar receiver and no cross-correlation constraint.
//!
//! Everything inside runs on channels divided by `σ`, so the noise power is
//! one and the auxiliary variables are SINR-scale quantities. Beamformers keep
//! their physical units (watts).

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::Rng;

use crate::config::{PenaltyParams, Scenario};
use crate::error::SolverError;
use crate::metrics::BeamformerSolution;
use crate::scene::{c64, random_phases, CMat, CVec, ChannelSet, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Diverged,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub objective_trace: Vec<f64>,
    pub violation_trace: Vec<f64>,
    pub power_trace: Vec<f64>,
    pub rho_trace: Vec<f64>,
    pub status: SolveStatus,
    pub iters_outer: usize,
    pub iters_inner_total: usize,
    pub wall_time: Duration,
    /// Uniform amplitude factor applied after convergence to remove the
    /// residual constraint violation left by the finite penalty.
    pub final_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyState {
    /// Row `k`, column `i`: target value of `h_k^H w_{c,i}`.
    pub x_aux: CMat,
    pub y_aux: Vec<CVec>,
    pub w_c: CMat,
    pub v: CVec,
    pub rho: f64,
}

/// Noise-normalized problem data.
#[derive(Clone, Debug)]
pub struct PenaltyProblem {
    pub cs: ChannelSet,
    pub r_user: Vec<f64>,
    pub r_radar: f64,
}

impl PenaltyProblem {
    pub fn new(sc: &Scenario, cs: &ChannelSet) -> Self {
        PenaltyProblem {
            cs: cs.scaled(1.0 / sc.noise_power.sqrt()),
            r_user: sc.sinr_user.clone(),
            r_radar: sc.sinr_radar,
        }
    }

    pub fn channels(&self, v: &CVec) -> Vec<CVec> {
        (0..self.cs.n_users()).map(|k| self.cs.effective_user_channel(v, k)).collect()
    }
}

/// Closed-form minimizer of the penalized objective over `W_c`.
pub fn update_beamformers(state: &PenaltyState, hs: &[CVec], a: &CMat, rho: f64) -> CMat {
    let nt = a.ncols();
    let k = state.w_c.ncols();
    let inv2r = 1.0 / (2.0 * rho);
    let mut gram = a.adjoint() * a;
    for h in hs {
        gram += h * h.adjoint();
    }
    let m = CMat::identity(nt, nt) + gram * c64(inv2r, 0.0);
    let chol = m.cholesky().expect("identity plus PSD is positive definite");
    let mut rhs = CMat::zeros(nt, k);
    for i in 0..k {
        let mut col = a.adjoint() * &state.y_aux[i];
        for (kk, h) in hs.iter().enumerate() {
            col += h * state.x_aux[(kk, i)];
        }
        rhs.set_column(i, &col);
    }
    chol.solve(&rhs) * c64(inv2r, 0.0)
}

/// One ascending sweep of exact coordinate minimizations over `v_m`.
pub fn update_phase_elementwise(state: &PenaltyState, p: &PenaltyProblem) -> CVec {
    let cs = &p.cs;
    let (k, m) = (cs.n_users(), cs.n_irs());
    let nw = state.w_c.ncols();
    let gw = &cs.g_t * &state.w_c;
    let mut v = state.v.clone();
    // q[kk][i][m] = [diag(h_r^H) G_t w_i]_m, e = current residual h^H w − x
    let mut q = vec![vec![vec![c64(0.0, 0.0); m]; nw]; k];
    let mut e = vec![vec![c64(0.0, 0.0); nw]; k];
    for kk in 0..k {
        for i in 0..nw {
            let mut acc = cs.h_d[kk].dotc(&state.w_c.column(i)) - state.x_aux[(kk, i)];
            for j in 0..m {
                let qj = cs.h_r[kk][j].conj() * gw[(j, i)];
                q[kk][i][j] = qj;
                acc += v[j] * qj;
            }
            e[kk][i] = acc;
        }
    }
    for j in 0..m {
        let mut z = c64(0.0, 0.0);
        for kk in 0..k {
            for i in 0..nw {
                let qj = q[kk][i][j];
                z += qj * (e[kk][i] - v[j] * qj).conj();
            }
        }
        if z.norm() <= f64::MIN_POSITIVE {
            continue;
        }
        let new = -z.conj() / z.norm();
        let d = new - v[j];
        for kk in 0..k {
            for i in 0..nw {
                e[kk][i] += d * q[kk][i][j];
            }
        }
        v[j] = new;
    }
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuxX {
    pub row: DVector<C64>,
    pub lambda: f64,
}

/// Projection of `(h_k^H w_{c,i})_i` onto the SINR set of user `k`,
/// through the scalar dual variable.
pub fn update_aux_x(w_c: &CMat, h_k: &CVec, k: usize, r: f64, eps_bisect: f64) -> Result<AuxX, SolverError> {
    let b: Vec<C64> = w_c.column_iter().map(|w| h_k.dotc(&w)).collect();
    let interf: f64 = b.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, x)| x.norm_sqr()).sum();
    let sig = b[k].norm_sqr();
    let g = |l: f64| r * (interf / (1.0 + l * r).powi(2) + 1.0) - sig / (1.0 - l).powi(2);
    let lambda = if g(0.0) <= 0.0 {
        0.0
    } else {
        if sig == 0.0 {
            return Err(SolverError::DegenerateDirection(format!("user {k}: h^H w = 0 with the SINR constraint violated")));
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= eps_bisect && g(hi).abs() <= 1e-10 * r {
                break;
            }
        }
        hi
    };
    let row = DVector::from_fn(b.len(), |i, _| {
        if i == k {
            b[i] / (1.0 - lambda)
        } else {
            b[i] / (1.0 + lambda * r)
        }
    });
    Ok(AuxX { row, lambda })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuxY {
    pub y: Vec<CVec>,
    pub lambda: f64,
    pub lambda_analytic: f64,
}

pub fn update_aux_y(w_c: &CMat, a: &CMat, r_radar: f64, eps_bisect: f64) -> Result<AuxY, SolverError> {
    let aw: Vec<CVec> = w_c.column_iter().map(|w| a * w).collect();
    let s: f64 = aw.iter().map(|y| y.norm_squared()).sum();
    if s >= r_radar {
        return Ok(AuxY { y: aw, lambda: 0.0, lambda_analytic: 0.0 });
    }
    if s == 0.0 {
        return Err(SolverError::DegenerateDirection("A w = 0 with the radar constraint violated".into()));
    }
    let gamma = |l: f64| s / (1.0 - l).powi(2) - r_radar;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gamma(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= eps_bisect && gamma(hi).abs() <= 1e-10 * r_radar {
            break;
        }
    }
    let analytic = 1.0 - (s / r_radar).sqrt();
    let y = aw.into_iter().map(|y| y * c64(1.0 / (1.0 - hi), 0.0)).collect();
    Ok(AuxY { y, lambda: hi, lambda_analytic: analytic })
}

pub fn penalized_objective(state: &PenaltyState, hs: &[CVec], a: &CMat) -> f64 {
    let mut pen = 0.0;
    for (i, w) in state.w_c.column_iter().enumerate() {
        for (k, h) in hs.iter().enumerate() {
            pen += (h.dotc(&w) - state.x_aux[(k, i)]).norm_sqr();
        }
        pen += (a * w - &state.y_aux[i]).norm_squared();
    }
    state.w_c.norm_squared() + pen / (2.0 * state.rho)
}

/// Largest squared deviation among the coupling equalities.
pub fn violation_xi(state: &PenaltyState, hs: &[CVec], a: &CMat) -> f64 {
    let mut xi: f64 = 0.0;
    for (i, w) in state.w_c.column_iter().enumerate() {
        for (k, h) in hs.iter().enumerate() {
            xi = xi.max((h.dotc(&w) - state.x_aux[(k, i)]).norm_sqr());
        }
        let d = a * w - &state.y_aux[i];
        for x in d.iter() {
            xi = xi.max(x.norm_sqr());
        }
    }
    xi
}

/// Refreshes both auxiliary blocks from the current beamformers and phases.
pub fn update_aux(state: &mut PenaltyState, p: &PenaltyProblem, hs: &[CVec], eps: f64) -> Result<(), SolverError> {
    for (k, h) in hs.iter().enumerate() {
        let ax = update_aux_x(&state.w_c, h, k, p.r_user[k], eps)?;
        state.x_aux.set_row(k, &ax.row.transpose());
    }
    state.y_aux = update_aux_y(&state.w_c, &p.cs.a_mat, p.r_radar, eps)?.y;
    Ok(())
}

/// Maximum-ratio start meeting each SINR target when interference is ignored.
pub fn initial_state(p: &PenaltyProblem, v: CVec, params: &PenaltyParams) -> Result<PenaltyState, SolverError> {
    let hs = p.channels(&v);
    let (nt, k) = (p.cs.n_tx(), p.cs.n_users());
    let mut w_c = CMat::zeros(nt, k);
    for (kk, h) in hs.iter().enumerate() {
        let n2 = h.norm_squared();
        if n2 == 0.0 {
            return Err(SolverError::DegenerateDirection(format!("user {kk} has a zero channel")));
        }
        w_c.set_column(kk, &(h * c64((p.r_user[kk]).sqrt() / n2, 0.0)));
    }
    let mut st = PenaltyState { x_aux: CMat::zeros(k, k), y_aux: vec![CVec::zeros(p.cs.n_rx()); k], w_c, v, rho: params.rho0 };
    update_aux(&mut st, p, &hs, params.eps_bisect)?;
    Ok(st)
}

/// One inner iteration: beamformers, phases, auxiliaries.
pub fn inner_step(st: &mut PenaltyState, p: &PenaltyProblem, eps: f64) -> Result<(), SolverError> {
    let hs = p.channels(&st.v);
    st.w_c = update_beamformers(st, &hs, &p.cs.a_mat, st.rho);
    st.v = update_phase_elementwise(st, p);
    let hs = p.channels(&st.v);
    update_aux(st, p, &hs, eps)
}

/// Smallest `t ≥ 1` such that `t·W_c` meets every constraint, if one exists.
pub fn feasibility_scale(w_c: &CMat, hs: &[CVec], a: &CMat, r_user: &[f64], r_radar: f64) -> Option<f64> {
    let mut t2: f64 = 1.0;
    for (k, h) in hs.iter().enumerate() {
        let b: Vec<f64> = w_c.column_iter().map(|w| h.dotc(&w).norm_sqr()).collect();
        let interf: f64 = b.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, x)| x).sum();
        let margin = b[k] - r_user[k] * interf;
        if margin <= 0.0 {
            return None;
        }
        t2 = t2.max(r_user[k] / margin);
    }
    let s: f64 = w_c.column_iter().map(|w| (a * w).norm_squared()).sum();
    if s <= 0.0 {
        return None;
    }
    t2 = t2.max(r_radar / s);
    Some(t2.sqrt())
}

pub fn solve_case1(
    sc: &Scenario,
    cs: &ChannelSet,
    rng: &mut impl Rng,
) -> Result<(BeamformerSolution, SolveReport), SolverError> {
    let p = PenaltyProblem::new(sc, cs);
    let v0 = random_phases(cs.n_irs(), rng);
    solve_from(&p, v0, &sc.cfg.penalty)
}

/// Retries with fresh phases when a degenerate direction stops a run.
pub fn solve_case1_with_restarts(
    sc: &Scenario,
    cs: &ChannelSet,
    rng: &mut impl Rng,
    restarts: usize,
) -> Result<(BeamformerSolution, SolveReport), SolverError> {
    let mut last = None;
    for _ in 0..=restarts {
        match solve_case1(sc, cs, rng) {
            Err(e @ SolverError::DegenerateDirection(_)) => last = Some(e),
            other => return other,
        }
    }
    Err(last.expect("at least one attempt"))
}

pub fn solve_from(
    p: &PenaltyProblem,
    v0: CVec,
    params: &PenaltyParams,
) -> Result<(BeamformerSolution, SolveReport), SolverError> {
    let start = Instant::now();
    let a = &p.cs.a_mat;
    let mut st = initial_state(p, v0, params)?;
    let mut report = SolveReport {
        objective_trace: vec![],
        violation_trace: vec![],
        power_trace: vec![],
        rho_trace: vec![],
        status: SolveStatus::MaxIters,
        iters_outer: 0,
        iters_inner_total: 0,
        wall_time: Duration::ZERO,
        final_scale: 1.0,
    };
    for t in 0..params.max_outer {
        st.rho = params.rho0 * params.step_c.powi(t as i32);
        let mut prev = penalized_objective(&st, &p.channels(&st.v), a);
        for _ in 0..params.max_inner {
            inner_step(&mut st, p, params.eps_bisect)?;
            report.iters_inner_total += 1;
            let cur = penalized_objective(&st, &p.channels(&st.v), a);
            let dec = (prev - cur) / prev.abs().max(f64::MIN_POSITIVE);
            prev = cur;
            if dec < params.eps_inner {
                break;
            }
        }
        let hs = p.channels(&st.v);
        let xi = violation_xi(&st, &hs, a);
        report.objective_trace.push(prev);
        report.violation_trace.push(xi);
        report.power_trace.push(st.w_c.norm_squared());
        report.rho_trace.push(st.rho);
        report.iters_outer = t + 1;
        if xi <= params.eps_outer {
            report.status = SolveStatus::Converged;
            break;
        }
        if t >= 20 && xi > 10.0 * report.violation_trace[t - 20] {
            report.status = SolveStatus::Diverged;
            break;
        }
    }
    let hs = p.channels(&st.v);
    if let Some(scale) = feasibility_scale(&st.w_c, &hs, a, &p.r_user, p.r_radar) {
        st.w_c *= c64(scale, 0.0);
        report.final_scale = scale;
    }
    report.wall_time = start.elapsed();
    let nt = p.cs.n_tx();
    Ok((BeamformerSolution { w_c: st.w_c, w_r: CMat::zeros(nt, nt), v: st.v }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;
    use crate::metrics::{feasibility_report, transmit_power};
    use crate::rng::{trial_rng, Stream};
    use crate::scene::{cn, generate_channels};
    use proptest::prelude::*;
    use rand::Rng;

    fn problem(seed: u64, k: usize, m: usize) -> (Scenario, ChannelSet, PenaltyProblem) {
        let mut cfg = SystemConfig::default();
        cfg.n_users = k;
        cfg.n_irs = m;
        let sc = cfg.resolve().unwrap();
        let cs = generate_channels(&sc, &mut trial_rng(seed, 0, 0, Stream::Channels));
        let p = PenaltyProblem::new(&sc, &cs);
        (sc, cs, p)
    }

    fn random_state(p: &PenaltyProblem, seed: u64, rho: f64) -> PenaltyState {
        let mut rng = trial_rng(seed, 9, 0, Stream::Solver);
        let (nt, k, nr) = (p.cs.n_tx(), p.cs.n_users(), p.cs.n_rx());
        let w_c = CMat::from_fn(nt, k, |_, _| cn(&mut rng) * 0.05);
        let x_aux = CMat::from_fn(k, k, |_, _| cn(&mut rng) * 3.0);
        let y_aux = (0..k).map(|_| CVec::from_fn(nr, |_, _| cn(&mut rng))).collect();
        PenaltyState { x_aux, y_aux, w_c, v: random_phases(p.cs.n_irs(), &mut rng), rho }
    }

    #[test]
    fn beamformer_update_scalar_and_limit() {
        let st = PenaltyState {
            x_aux: CMat::from_element(1, 1, c64(1.0, 0.0)),
            y_aux: vec![CVec::zeros(1)],
            w_c: CMat::zeros(1, 1),
            v: CVec::zeros(1),
            rho: 3.0,
        };
        let hs = vec![CVec::from_element(1, c64(1.0, 0.0))];
        let a = CMat::zeros(1, 1);
        let w = update_beamformers(&st, &hs, &a, 3.0);
        let want = (1.0 / 6.0) / (1.0 + 1.0 / 6.0);
        assert!((w[(0, 0)] - c64(want, 0.0)).norm() < 1e-15);
        assert!(update_beamformers(&st, &hs, &a, 1e12)[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn beamformer_update_is_stationary() {
        let (_, _, p) = problem(1, 3, 8);
        let st = random_state(&p, 1, 0.7);
        let hs = p.channels(&st.v);
        let a = &p.cs.a_mat;
        let w = update_beamformers(&st, &hs, a, st.rho);
        let f = |w: &CMat| penalized_objective(&PenaltyState { w_c: w.clone(), ..st.clone() }, &hs, a);
        let scale = w.norm();
        let hstep = 1e-6 * scale;
        let mut g2 = 0.0;
        for idx in 0..w.len() {
            for dir in [c64(1.0, 0.0), c64(0.0, 1.0)] {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[idx] += dir * hstep;
                wm[idx] -= dir * hstep;
                let d = (f(&wp) - f(&wm)) / (2.0 * hstep);
                g2 += d * d;
            }
        }
        // relative to the objective's natural gradient scale
        let g = g2.sqrt() / (f(&w) / scale);
        assert!(g < 1e-6, "gradient {g}");
    }

    #[test]
    fn phase_rule_examples() {
        // single element, single user: z = q conj(a) with a = h_d^H w − x
        let mut cs = problem(1, 1, 1).2.cs;
        cs.g_t = CMat::from_element(1, 1, c64(1.0, 0.0)).insert_columns(1, 7, c64(0.0, 0.0));
        cs.h_r = vec![CVec::from_element(1, c64(1.0, 0.0))];
        cs.h_d = vec![CVec::zeros(8)];
        let p = PenaltyProblem { cs, r_user: vec![1.0], r_radar: 1.0 };
        let mut w = CMat::zeros(8, 1);
        w[(0, 0)] = c64(1.0, 0.0);
        // q = 1, a = −x; z = conj(−x)
        for (x, want) in [(c64(-1.0, 0.0), c64(-1.0, 0.0)), (c64(0.0, 1.0), c64(0.0, 1.0))] {
            // z = −conj(x): x = −1 gives z = 1 (real positive) so v = −1
            let st = PenaltyState { x_aux: CMat::from_element(1, 1, x), y_aux: vec![CVec::zeros(8)], w_c: w.clone(), v: CVec::from_element(1, c64(1.0, 0.0)), rho: 1.0 };
            let v = update_phase_elementwise(&st, &p);
            assert!((v[0] - want).norm() < 1e-15, "{:?}", v[0]);
        }
    }

    #[test]
    fn phase_sweep_beats_grid_search() {
        let (_, _, p) = problem(2, 3, 6);
        let st = random_state(&p, 2, 1.0);
        let a = &p.cs.a_mat;
        let v = update_phase_elementwise(&st, &p);
        // replay the sweep one coordinate at a time against a grid
        let mut cur = st.v.clone();
        let obj = |v: &CVec| penalized_objective(&PenaltyState { v: v.clone(), ..st.clone() }, &p.channels(v), a);
        for m in 0..6 {
            let mut best = f64::INFINITY;
            for g in 0..3600 {
                let mut t = cur.clone();
                t[m] = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * g as f64 / 3600.0);
                best = best.min(obj(&t));
            }
            cur[m] = v[m];
            let f = obj(&cur);
            assert!(f <= best + 1e-9 * best.abs(), "m={m}: {f} vs grid {best}");
            assert!((cur[m].norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn aux_x_inactive_and_single_user() {
        let h = CVec::from_element(1, c64(2.0, 0.0));
        let w = CMat::from_element(1, 1, c64(3.0, 0.0));
        let ax = update_aux_x(&w, &h, 0, 4.0, 1e-9).unwrap();
        assert_eq!(ax.lambda, 0.0);
        assert_eq!(ax.row[0], c64(6.0, 0.0));
        // |h^H w| = 6 < √r σ = 10 → λ = 1 − 0.6
        let ax = update_aux_x(&w, &h, 0, 100.0, 1e-9).unwrap();
        assert!((ax.lambda - 0.4).abs() < 1e-9);
        assert!((ax.row[0].norm() - 10.0).abs() < 1e-7);
        let zero = CMat::zeros(1, 1);
        assert!(matches!(update_aux_x(&zero, &h, 0, 1.0, 1e-9), Err(SolverError::DegenerateDirection(_))));
    }

    #[test]
    fn aux_y_cases() {
        let a = CMat::identity(2, 2);
        let w = CMat::from_column_slice(2, 1, &[c64(3.0, 0.0), c64(0.0, 0.0)]);
        let ay = update_aux_y(&w, &a, 4.0, 1e-9).unwrap();
        assert_eq!(ay.lambda, 0.0);
        assert_eq!(ay.y[0][0], c64(3.0, 0.0));
        let ay = update_aux_y(&w, &a, 36.0, 1e-9).unwrap();
        assert!((ay.lambda - 0.5).abs() < 1e-9);
        assert!((ay.y[0][0] - c64(6.0, 0.0)).norm() < 1e-7);
        assert!((ay.lambda - ay.lambda_analytic).abs() < 1e-8);
        assert!(update_aux_y(&CMat::zeros(2, 1), &a, 1.0, 1e-9).is_err());
    }

    #[test]
    fn violation_enumeration() {
        let (_, _, p) = problem(3, 2, 4);
        let mut st = random_state(&p, 3, 1.0);
        let hs = p.channels(&st.v);
        let a = &p.cs.a_mat;
        for (k, h) in hs.iter().enumerate() {
            for i in 0..2 {
                st.x_aux[(k, i)] = h.dotc(&st.w_c.column(i));
            }
        }
        for i in 0..2 {
            st.y_aux[i] = a * st.w_c.column(i);
        }
        assert!(violation_xi(&st, &hs, a) < 1e-24);
        st.x_aux[(1, 0)] += c64(0.0, 1e-3);
        assert!((violation_xi(&st, &hs, a) - 1e-6).abs() < 1e-15);
        st.y_aux[1][3] += c64(0.02, 0.0);
        assert!((violation_xi(&st, &hs, a) - 4e-4).abs() < 1e-12);
    }

    #[test]
    fn inner_blocks_never_increase_objective() {
        let (_, _, p) = problem(4, 3, 10);
        let mut st = initial_state(&p, random_phases(10, &mut trial_rng(4, 0, 0, Stream::Solver)), &PenaltyParams::default()).unwrap();
        st.rho = 5.0;
        let a = &p.cs.a_mat;
        let obj = |s: &PenaltyState| penalized_objective(s, &p.channels(&s.v), a);
        for _ in 0..10 {
            let f0 = obj(&st);
            let hs = p.channels(&st.v);
            st.w_c = update_beamformers(&st, &hs, a, st.rho);
            let f1 = obj(&st);
            st.v = update_phase_elementwise(&st, &p);
            let f2 = obj(&st);
            let hs = p.channels(&st.v);
            update_aux(&mut st, &p, &hs, 1e-9).unwrap();
            let f3 = obj(&st);
            let slack = 1e-10 * f0;
            assert!(f1 <= f0 + slack && f2 <= f1 + slack && f3 <= f2 + slack, "{f0} {f1} {f2} {f3}");
            assert!(st.v.iter().all(|x| (x.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn default_instance_converges_feasibly() {
        let (sc, cs, _) = problem(11, 5, 50);
        let (sol, rep) = solve_case1(&sc, &cs, &mut trial_rng(11, 0, 0, Stream::Solver)).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged, "{:?}", rep.violation_trace.last());
        assert!(*rep.violation_trace.last().unwrap() <= 1e-7);
        for (t, r) in rep.rho_trace.iter().enumerate() {
            assert_eq!(*r, 100.0 * 0.85f64.powi(t as i32));
        }
        let fr = feasibility_report(&sol, &sc, &cs, false);
        assert!(fr.is_feasible(1e-6), "{fr:?}");
        assert!(rep.final_scale >= 1.0 && rep.final_scale < 1.01);
        assert_eq!(sol.w_r.norm(), 0.0);
        assert!(transmit_power(&sol) > 0.0);
    }

    #[test]
    fn easy_single_user_beats_mrt_bound() {
        let mut cfg = SystemConfig::default();
        cfg.n_users = 1;
        cfg.n_irs = 8;
        cfg.sinr_user_db = vec![-10.0];
        cfg.sinr_radar_db = -30.0;
        cfg.irs_x = 5.0;
        let sc = cfg.resolve().unwrap();
        let cs = generate_channels(&sc, &mut trial_rng(5, 0, 0, Stream::Channels));
        let (sol, rep) = solve_case1(&sc, &cs, &mut trial_rng(5, 0, 0, Stream::Solver)).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged);
        // MRT at the returned phases meeting both constraints separately
        let p = PenaltyProblem::new(&sc, &cs);
        let h = p.cs.effective_user_channel(&sol.v, 0);
        let mrt_user = sc.sinr_user[0] / h.norm_squared();
        let mrt = CMat::from_column_slice(8, 1, (&h * c64(1.0 / h.norm(), 0.0)).as_slice());
        let s_unit = (&p.cs.a_mat * mrt.column(0)).norm_squared();
        let bound = mrt_user.max(sc.sinr_radar / s_unit);
        assert!(transmit_power(&sol) <= bound * (1.0 + 1e-6), "{} vs {}", transmit_power(&sol), bound);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn aux_y_matches_analytic(s_frac in 0.001f64..0.999, r in 0.1f64..1e3) {
            let a = CMat::identity(1, 1);
            let w = CMat::from_element(1, 1, c64((s_frac * r).sqrt(), 0.0));
            let ay = update_aux_y(&w, &a, r, 1e-9).unwrap();
            prop_assert!((ay.lambda - ay.lambda_analytic).abs() < 1e-8);
            prop_assert!(ay.y[0].norm_squared() >= r * (1.0 - 1e-10));
        }

        #[test]
        fn aux_x_complementary_slackness(seed in 0u64..500) {
            let mut rng = trial_rng(seed, 0, 0, Stream::Solver);
            let w = CMat::from_fn(4, 3, |_, _| cn(&mut rng));
            let h = CVec::from_fn(4, |_, _| cn(&mut rng));
            let r = 10f64.powf(rng.gen_range(-1.0..2.0));
            let ax = update_aux_x(&w, &h, 1, r, 1e-9).unwrap();
            let x = &ax.row;
            let g = r * (x[0].norm_sqr() + x[2].norm_sqr() + 1.0) - x[1].norm_sqr();
            prop_assert!(g <= 1e-8 * r);
            prop_assert!((ax.lambda * g).abs() <= 1e-8 * r);
        }
    }
}

//! Figures of merit and constraint residuals shared by both solvers.

use nalgebra::{DMatrix, DVector};

use crate::config::Scenario;
use crate::scene::{c64, steering_vector, CMat, CVec, ChannelSet, C64};

/// W² to mW²: cross-correlation limits are configured in mW².
pub const XCORR_UNIT: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerSolution {
    pub w_c: CMat,
    pub w_r: CMat,
    pub v: CVec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovariancePack {
    pub w_cov: Vec<CMat>,
    pub z_r: CMat,
    pub v: CVec,
}

pub fn hermitian_part(x: &CMat) -> CMat {
    (x + x.adjoint()) * c64(0.5, 0.0)
}

fn quad(h: &CVec, x: &CMat) -> f64 {
    (h.adjoint() * x * h)[(0, 0)].re
}

/// Anything that can be evaluated against the system constraints.
pub trait Design {
    fn n_users(&self) -> usize;
    fn reflection(&self) -> &CVec;
    /// `h^H W_{c,k} h`.
    fn user_gain(&self, h: &CVec, k: usize) -> f64;
    /// `h^H Z_r h`.
    fn radar_gain(&self, h: &CVec) -> f64;
    /// `R = Σ_k W_{c,k} + Z_r`.
    fn covariance(&self) -> CMat;
    fn power(&self) -> f64;
}

impl BeamformerSolution {
    pub fn to_pack(&self) -> CovariancePack {
        let w_cov = self.w_c.column_iter().map(|c| &c * c.adjoint()).collect();
        CovariancePack { w_cov, z_r: &self.w_r * self.w_r.adjoint(), v: self.v.clone() }
    }
}

impl Design for BeamformerSolution {
    fn n_users(&self) -> usize {
        self.w_c.ncols()
    }
    fn reflection(&self) -> &CVec {
        &self.v
    }
    fn user_gain(&self, h: &CVec, k: usize) -> f64 {
        h.dotc(&self.w_c.column(k)).norm_sqr()
    }
    fn radar_gain(&self, h: &CVec) -> f64 {
        self.w_r.column_iter().map(|c| h.dotc(&c).norm_sqr()).sum()
    }
    fn covariance(&self) -> CMat {
        &self.w_c * self.w_c.adjoint() + &self.w_r * self.w_r.adjoint()
    }
    fn power(&self) -> f64 {
        self.w_c.norm_squared() + self.w_r.norm_squared()
    }
}

impl Design for CovariancePack {
    fn n_users(&self) -> usize {
        self.w_cov.len()
    }
    fn reflection(&self) -> &CVec {
        &self.v
    }
    fn user_gain(&self, h: &CVec, k: usize) -> f64 {
        quad(h, &self.w_cov[k])
    }
    fn radar_gain(&self, h: &CVec) -> f64 {
        quad(h, &self.z_r)
    }
    fn covariance(&self) -> CMat {
        let mut r = self.z_r.clone();
        for w in &self.w_cov {
            r += w;
        }
        r
    }
    fn power(&self) -> f64 {
        self.w_cov.iter().map(|w| w.trace().re).sum::<f64>() + self.z_r.trace().re
    }
}

pub fn transmit_power(d: &impl Design) -> f64 {
    d.power()
}

/// Signal and interference-plus-noise seen by user `k`.
pub fn user_signal_interference(d: &impl Design, cs: &ChannelSet, k: usize, noise: f64) -> (f64, f64) {
    let h = cs.effective_user_channel(d.reflection(), k);
    let sig = d.user_gain(&h, k);
    let mut den = noise + d.radar_gain(&h);
    for i in 0..d.n_users() {
        if i != k {
            den += d.user_gain(&h, i);
        }
    }
    (sig, den)
}

pub fn user_sinr(d: &impl Design, cs: &ChannelSet, k: usize, noise: f64) -> f64 {
    let (s, i) = user_signal_interference(d, cs, k, noise);
    s / i
}

/// `tr(A R A^H (B R B^H + σ² I)^{-1})` through a Cholesky solve.
pub fn radar_sinr_full(d: &impl Design, cs: &ChannelSet, noise: f64) -> f64 {
    let r = d.covariance();
    let b = cs.irs_loop_matrix(d.reflection());
    let nr = cs.n_rx();
    let cov = hermitian_part(&(&b * &r * b.adjoint())) + CMat::identity(nr, nr) * c64(noise, 0.0);
    let num = hermitian_part(&(&cs.a_mat * &r * cs.a_mat.adjoint()));
    let chol = cov.cholesky().expect("noise keeps the covariance positive definite");
    chol.solve(&num).trace().re
}

/// `tr(A R A^H) / tr(B R B^H + σ² I)`.
pub fn radar_sinr_lower_bound(d: &impl Design, cs: &ChannelSet, noise: f64) -> f64 {
    let r = d.covariance();
    let b = cs.irs_loop_matrix(d.reflection());
    let num = (&cs.a_mat * &r * cs.a_mat.adjoint()).trace().re;
    let den = (&b * &r * b.adjoint()).trace().re + noise * cs.n_rx() as f64;
    num / den
}

/// `Σ_{l<j} |a_t^H(θ_l) R a_t(θ_j)|²`.
pub fn cross_correlation_of(r: &CMat, angles: &[f64], spacing: f64) -> f64 {
    let n = r.nrows();
    let a: Vec<CVec> = angles.iter().map(|&t| steering_vector(t, n, spacing)).collect();
    let mut s = 0.0;
    for l in 0..a.len() {
        let ra = r * &a[l];
        for j in l + 1..a.len() {
            // a_l^H R a_j = conj(a_j^H R a_l)
            s += a[j].dotc(&ra).norm_sqr();
        }
    }
    s
}

pub fn cross_correlation(d: &impl Design, angles: &[f64], spacing: f64) -> f64 {
    cross_correlation_of(&d.covariance(), angles, spacing)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Beampattern {
    pub angles: Vec<f64>,
    pub power: Vec<f64>,
    pub normalized: Vec<f64>,
}

pub fn beampattern_of(r: &CMat, grid: &[f64], spacing: f64) -> Beampattern {
    assert!(!grid.is_empty(), "beampattern grid must be nonempty");
    let n = r.nrows();
    let power: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let a = steering_vector(t, n, spacing);
            a.dotc(&(r * &a)).re.max(0.0)
        })
        .collect();
    let peak = power.iter().cloned().fold(0.0, f64::max);
    let normalized = power.iter().map(|p| if peak > 0.0 { p / peak } else { 0.0 }).collect();
    Beampattern { angles: grid.to_vec(), power, normalized }
}

pub fn beampattern(d: &impl Design, grid: &[f64], spacing: f64) -> Beampattern {
    beampattern_of(&d.covariance(), grid, spacing)
}

/// Signed residuals; a constraint holds when its residual is `≤ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    /// `r_k · (interference + σ²) − signal`, watts.
    pub user: Vec<f64>,
    /// Per-user required signal `r_k · (interference + σ²)`; the relative
    /// residual is then the fractional SINR shortfall.
    pub user_scale: Vec<f64>,
    /// `r_r − SINR_radar` with the exact SINR.
    pub radar: f64,
    /// `r_r − ` lower-bound SINR.
    pub radar_bound: f64,
    pub radar_threshold: f64,
    /// Cross-correlation minus the limit, mW².
    pub xcorr: f64,
    pub xcorr_limit: f64,
    pub modulus: f64,
}

impl FeasibilityReport {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.user.iter().zip(&self.user_scale).all(|(r, s)| *r <= tol * s)
            && self.radar <= tol * self.radar_threshold
            && (self.xcorr <= tol * self.xcorr_limit.max(1e-12) || self.xcorr_limit.is_infinite())
            && self.modulus <= tol.max(1e-9)
    }

    pub fn max_user_residual(&self) -> f64 {
        self.user.iter().zip(&self.user_scale).map(|(r, s)| r / s).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Residuals against the full constraint set. `radar_interference = false`
/// evaluates the radar SINR with the IRS loop removed.
pub fn feasibility_report(d: &impl Design, sc: &Scenario, cs: &ChannelSet, radar_interference: bool) -> FeasibilityReport {
    let noise = sc.noise_power;
    let mut user = Vec::with_capacity(d.n_users());
    let mut user_scale = Vec::with_capacity(d.n_users());
    for k in 0..d.n_users() {
        let (s, i) = user_signal_interference(d, cs, k, noise);
        user.push(sc.sinr_user[k] * i - s);
        user_scale.push(sc.sinr_user[k] * i);
    }
    let (full, bound) = if radar_interference {
        (radar_sinr_full(d, cs, noise), radar_sinr_lower_bound(d, cs, noise))
    } else {
        let r = d.covariance();
        let s = (&cs.a_mat * &r * cs.a_mat.adjoint()).trace().re / noise;
        (s, s / cs.n_rx() as f64)
    };
    let limit = sc.cfg.cross_corr_limit;
    let xcorr = if limit.is_infinite() {
        f64::NEG_INFINITY
    } else {
        cross_correlation(d, &sc.cfg.target_angles, sc.cfg.antenna_spacing_ratio) * XCORR_UNIT - limit
    };
    let modulus = d.reflection().iter().map(|x| (x.norm() - 1.0).abs()).fold(0.0, f64::max);
    FeasibilityReport {
        user,
        user_scale,
        radar: sc.sinr_radar - full,
        radar_bound: sc.sinr_radar - bound,
        radar_threshold: sc.sinr_radar,
        xcorr,
        xcorr_limit: limit,
        modulus,
    }
}

/// `min eig ≥ −tol · tr` after symmetrization.
pub fn is_psd(x: &CMat, tol: f64) -> bool {
    let h = hermitian_part(x);
    let tr = h.trace().re.abs();
    let eig = h.symmetric_eigenvalues();
    eig.iter().all(|&e| e >= -tol * tr.max(f64::MIN_POSITIVE))
}

/// Hermitian eigen-decomposition sorted by descending eigenvalue.
pub fn sorted_eigen(x: &CMat) -> (DVector<f64>, CMat) {
    let eig = hermitian_part(x).symmetric_eigen();
    let n = x.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = DVector::from_fn(n, |i, _| eig.eigenvalues[idx[i]]);
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

pub fn unit_phase(x: C64) -> C64 {
    if x.norm() > 0.0 {
        x / x.norm()
    } else {
        c64(1.0, 0.0)
    }
}

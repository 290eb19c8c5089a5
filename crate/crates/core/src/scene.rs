//! Geometry, channel realizations and steering vectors for one trial.
//!
//! All arrays are uniform linear arrays along the y-axis; an angle is measured
//! from broadside (the x–z plane), so `sin θ = Δy / ‖Δ‖` for a link with
//! displacement `Δ`. The BS and the IRS sit on the x-axis, hence the BS→IRS
//! link is broadside for both ends.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::Scenario;
use crate::error::SolverError;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Entry `i` is `exp(-j 2π d i sin θ)`.
pub fn steering_vector(theta: f64, n: usize, spacing_ratio: f64) -> CVec {
    let phase = -2.0 * std::f64::consts::PI * spacing_ratio * theta.sin();
    CVec::from_fn(n, |i, _| C64::from_polar(1.0, phase * i as f64))
}

pub fn path_loss(distance: f64, exponent: f64, ref_db: f64) -> Result<f64, SolverError> {
    if !(distance > 0.0) {
        return Err(SolverError::Invalid(format!("path loss distance {distance} must be positive")));
    }
    Ok(10f64.powf(ref_db / 10.0) * distance.powf(-exponent))
}

pub type Point = [f64; 3];

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Angle from broadside of a y-axis array at `from` toward `to`.
pub fn departure_angle(from: Point, to: Point) -> f64 {
    ((to[1] - from[1]) / dist(from, to)).clamp(-1.0, 1.0).asin()
}

pub fn cn(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn cn_matrix(r: usize, c: usize, rng: &mut impl Rng) -> CMat {
    // column-major fill keeps the draw order fixed
    let mut m = CMat::zeros(r, c);
    for j in 0..c {
        for i in 0..r {
            m[(i, j)] = cn(rng);
        }
    }
    m
}

fn rician(los: CMat, gain: f64, kappa: f64, rng: &mut impl Rng) -> CMat {
    let nlos = cn_matrix(los.nrows(), los.ncols(), rng);
    let (wl, wn) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    };
    (los * c64(wl, 0.0) + nlos * c64(wn, 0.0)) * c64(gain.sqrt(), 0.0)
}

/// `Σ_l β_l a_r(θ_l) a_t(θ_l)^H`.
pub fn target_matrix(beta: &[C64], angles: &[f64], n_rx: usize, n_tx: usize, spacing: f64) -> CMat {
    let mut a = CMat::zeros(n_rx, n_tx);
    for (b, &th) in beta.iter().zip(angles) {
        let ar = steering_vector(th, n_rx, spacing);
        let at = steering_vector(th, n_tx, spacing);
        a += &ar * at.adjoint() * *b;
    }
    a
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    /// BS→IRS, `M×N_t`.
    pub g_t: CMat,
    /// IRS→BS, `N_r×M`.
    pub g_r: CMat,
    pub h_d: Vec<CVec>,
    pub h_r: Vec<CVec>,
    pub beta: Vec<C64>,
    pub a_mat: CMat,
    pub users: Vec<Point>,
}

pub fn generate_channels(sc: &Scenario, rng: &mut impl Rng) -> ChannelSet {
    let cfg = &sc.cfg;
    let (nt, nr, m, k) = (cfg.n_tx, cfg.n_rx, cfg.n_irs, cfg.n_users);
    let d = cfg.antenna_spacing_ratio;
    let bs = [0.0, 0.0, cfg.bs_height];
    let irs = [cfg.irs_x, 0.0, cfg.irs_height];
    let users: Vec<Point> = (0..k)
        .map(|_| {
            let r = cfg.user_radius * rng.gen::<f64>().sqrt();
            let phi = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
            [cfg.irs_x + r * phi.cos(), r * phi.sin(), cfg.user_height]
        })
        .collect();
    let pl = |a: Point, b: Point, alpha: f64| {
        path_loss(dist(a, b), alpha, cfg.path_loss_ref_db).expect("nodes are distinct")
    };
    let kappa = sc.rician_factor;

    let los_t = steering_vector(departure_angle(irs, bs), m, d)
        * steering_vector(departure_angle(bs, irs), nt, d).adjoint();
    let g_t = rician(los_t, pl(bs, irs, cfg.alpha_bs_irs), kappa, rng);
    let los_r = steering_vector(departure_angle(bs, irs), nr, d)
        * steering_vector(departure_angle(irs, bs), m, d).adjoint();
    let g_r = rician(los_r, pl(irs, bs, cfg.alpha_bs_irs), kappa, rng);
    let h_d: Vec<CVec> = users
        .iter()
        .map(|&u| {
            let g = pl(bs, u, cfg.alpha_bs_user).sqrt();
            CVec::from_fn(nt, |_, _| cn(rng) * g)
        })
        .collect();
    let h_r: Vec<CVec> = users
        .iter()
        .map(|&u| {
            let los = CMat::from_column_slice(m, 1, steering_vector(departure_angle(irs, u), m, d).as_slice());
            let col = rician(los, pl(irs, u, cfg.alpha_irs_user), kappa, rng);
            CVec::from_column_slice(col.as_slice())
        })
        .collect();
    let beta: Vec<C64> = (0..cfg.n_targets).map(|_| cn(rng) * sc.rcs_power.sqrt()).collect();
    let a_mat = target_matrix(&beta, &cfg.target_angles, nr, nt, d);
    ChannelSet { g_t, g_r, h_d, h_r, beta, a_mat, users }
}

impl ChannelSet {
    pub fn n_users(&self) -> usize {
        self.h_d.len()
    }

    pub fn n_tx(&self) -> usize {
        self.g_t.ncols()
    }

    pub fn n_rx(&self) -> usize {
        self.g_r.nrows()
    }

    pub fn n_irs(&self) -> usize {
        self.g_t.nrows()
    }

    /// `Φ_k = diag(h_{r,k}^H) G_t`, so that `h_k^H = h_{d,k}^H + u^H Φ_k`
    /// with `u = conj(v)`.
    pub fn cascaded(&self, k: usize) -> CMat {
        let mut phi = self.g_t.clone();
        for (m, mut row) in phi.row_iter_mut().enumerate() {
            row *= self.h_r[k][m].conj();
        }
        phi
    }

    /// `h_k` with `h_k^H = h_{d,k}^H + h_{r,k}^H Θ G_t`, `Θ = diag(v)`.
    pub fn effective_user_channel(&self, v: &CVec, k: usize) -> CVec {
        assert!(k < self.n_users(), "user index {k} out of range");
        let theta = CMat::from_diagonal(v);
        let row = self.h_d[k].adjoint() + self.h_r[k].adjoint() * theta * &self.g_t;
        row.adjoint()
    }

    /// Same channel through the compact form `h_d^H + u^H Φ_k`, `u = conj(v)`.
    pub fn effective_user_channel_compact(&self, v: &CVec, k: usize) -> CVec {
        let u = v.map(|x| x.conj());
        &self.h_d[k] + self.cascaded(k).adjoint() * u
    }

    /// `B = G_r diag(v) G_t`.
    pub fn irs_loop_matrix(&self, v: &CVec) -> CMat {
        let mut gt = self.g_t.clone();
        for (m, mut row) in gt.row_iter_mut().enumerate() {
            row *= v[m];
        }
        &self.g_r * gt
    }

    /// All channels multiplied by `s` (used to normalize by the noise level).
    pub fn scaled(&self, s: f64) -> ChannelSet {
        let k = c64(s, 0.0);
        ChannelSet {
            g_t: self.g_t.clone(),
            g_r: &self.g_r * k,
            h_d: self.h_d.iter().map(|h| h * k).collect(),
            h_r: self.h_r.iter().map(|h| h * k).collect(),
            beta: self.beta.iter().map(|b| b * k).collect(),
            a_mat: &self.a_mat * k,
            users: self.users.clone(),
        }
    }

    /// Replaces the target reflection coefficients and rebuilds `A`.
    pub fn with_beta(&self, beta: Vec<C64>, angles: &[f64], spacing: f64) -> ChannelSet {
        let a_mat = target_matrix(&beta, angles, self.n_rx(), self.n_tx(), spacing);
        ChannelSet { beta, a_mat, ..self.clone() }
    }
}

/// Uniformly random unit-modulus phases.
pub fn random_phases(m: usize, rng: &mut impl Rng) -> CVec {
    CVec::from_fn(m, |_, _| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * rng.gen::<f64>()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;
    use crate::rng::{trial_rng, Stream};
    use proptest::prelude::*;

    #[test]
    fn steering_special_cases() {
        let a = steering_vector(0.0, 4, 0.5);
        assert!(a.iter().all(|x| (x - c64(1.0, 0.0)).norm() < 1e-15));
        let b = steering_vector(std::f64::consts::FRAC_PI_2, 2, 0.5);
        assert!((b[0] - c64(1.0, 0.0)).norm() < 1e-15);
        assert!((b[1] - c64(-1.0, 0.0)).norm() < 1e-15);
        let c = steering_vector(40f64.to_radians(), 8, 0.5);
        let ratio = c[1] / c[0];
        for i in 1..8 {
            assert!((c[i].norm() - 1.0).abs() < 1e-15);
            assert!((c[i] / c[i - 1] - ratio).norm() < 1e-13);
        }
    }

    #[test]
    fn path_loss_values() {
        assert!((path_loss(1.0, 3.7, -30.0).unwrap() - 1e-3).abs() < 1e-18);
        // 1e-3 · 10^-2.2 evaluated independently
        assert!((path_loss(10.0, 2.2, -30.0).unwrap() - 6.309_573_444_801_93e-6).abs() < 1e-17);
        assert_eq!(path_loss(1.0, 0.0, 0.0).unwrap(), 1.0);
        assert!(path_loss(0.0, 2.0, -30.0).is_err());
        assert!(path_loss(-1.0, 2.0, -30.0).is_err());
    }

    fn default_channels(seed: u64) -> (Scenario, ChannelSet) {
        let sc = SystemConfig::default().resolve().unwrap();
        let cs = generate_channels(&sc, &mut trial_rng(seed, 0, 0, Stream::Channels));
        (sc, cs)
    }

    #[test]
    fn generation_is_deterministic_and_consistent() {
        let (sc, a) = default_channels(5);
        let (_, b) = default_channels(5);
        assert_eq!(a, b);
        let (_, c) = default_channels(6);
        assert_ne!(a, c);
        assert_eq!(a.g_t.shape(), (50, 8));
        assert_eq!(a.g_r.shape(), (8, 50));
        assert_eq!(a.h_d.len(), 5);
        let re = target_matrix(&a.beta, &sc.cfg.target_angles, 8, 8, 0.5);
        assert!((&a.a_mat - re).norm() <= 1e-12 * a.a_mat.norm());
        for u in &a.users {
            let r = ((u[0] - 50.0).powi(2) + u[1].powi(2)).sqrt();
            assert!(r <= 2.0 && (u[2] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn infinite_rician_factor_gives_pure_los() {
        let mut cfg = SystemConfig::default();
        cfg.rician_factor_db = 400.0;
        let sc = cfg.resolve().unwrap();
        let cs = generate_channels(&sc, &mut trial_rng(1, 0, 0, Stream::Channels));
        let g = path_loss(50.0, 2.2, -30.0).unwrap().sqrt();
        // broadside link: every LoS entry equals one
        for x in cs.g_t.iter() {
            assert!((x - c64(g, 0.0)).norm() < 1e-12 * g);
        }
    }

    #[test]
    fn direct_channel_power_matches_path_loss() {
        let sc = SystemConfig::default().resolve().unwrap();
        let mut acc = 0.0;
        let mut want = 0.0;
        let trials = 10_000;
        for t in 0..trials {
            let cs = generate_channels(&sc, &mut trial_rng(3, 0, t, Stream::Channels));
            let u = cs.users[0];
            let d = (u[0].powi(2) + u[1].powi(2) + (u[2] - 3.5).powi(2)).sqrt();
            want += path_loss(d, 3.6, -30.0).unwrap();
            acc += cs.h_d[0].norm_squared() / 8.0;
        }
        assert!((acc / want - 1.0).abs() < 0.05, "{}", acc / want);
    }

    #[test]
    fn user_channel_forms_and_special_cases() {
        let (_, cs) = default_channels(2);
        let zero = CVec::zeros(50);
        assert_eq!(cs.effective_user_channel(&zero, 1), cs.h_d[1]);
        let mut rng = trial_rng(9, 0, 0, Stream::Solver);
        let v = random_phases(50, &mut rng);
        for k in 0..5 {
            let a = cs.effective_user_channel(&v, k);
            let b = cs.effective_user_channel_compact(&v, k);
            assert!((&a - &b).norm() <= 1e-13 * a.norm());
        }
        // scalar case
        let phi = 0.7;
        let one = CMat::from_element(1, 1, c64(1.0, 0.0));
        let tiny = ChannelSet {
            g_t: one.clone(),
            g_r: one.clone(),
            h_d: vec![CVec::from_element(1, c64(1.0, 0.0))],
            h_r: vec![CVec::from_element(1, c64(1.0, 0.0))],
            beta: vec![],
            a_mat: one.clone(),
            users: vec![[0.0; 3]],
        };
        let v1 = CVec::from_element(1, C64::from_polar(1.0, phi));
        let h = tiny.effective_user_channel(&v1, 0);
        // h^H = 1 + e^{jφ}
        assert!((h[0].conj() - (c64(1.0, 0.0) + C64::from_polar(1.0, phi))).norm() < 1e-15);
        let b = tiny.irs_loop_matrix(&v1);
        assert!((b[(0, 0)] - v1[0]).norm() < 1e-15);
    }

    #[test]
    fn loop_matrix_matches_triple_sum() {
        let (_, cs) = default_channels(4);
        let mut rng = trial_rng(1, 0, 0, Stream::Solver);
        let v = random_phases(50, &mut rng);
        let b = cs.irs_loop_matrix(&v);
        for i in 0..8 {
            for j in 0..8 {
                let mut s = c64(0.0, 0.0);
                for m in 0..50 {
                    s += cs.g_r[(i, m)] * v[m] * cs.g_t[(m, j)];
                }
                assert!((b[(i, j)] - s).norm() <= 1e-13 * (1.0 + s.norm()));
            }
        }
        assert_eq!(cs.irs_loop_matrix(&CVec::zeros(50)).norm(), 0.0);
    }

    proptest! {
        #[test]
        fn steering_unit_modulus(theta in -1.5f64..1.5, n in 1usize..20) {
            let a = steering_vector(theta, n, 0.5);
            prop_assert!(a.iter().all(|x| (x.norm() - 1.0).abs() < 1e-14));
        }

        #[test]
        fn user_channel_is_affine_in_v(s1 in 0u64..1000, s2 in 0u64..1000) {
            let (_, cs) = default_channels(7);
            let v1 = random_phases(50, &mut trial_rng(s1, 1, 0, Stream::Solver)) * c64(0.5, 0.0);
            let v2 = random_phases(50, &mut trial_rng(s2, 2, 0, Stream::Solver)) * c64(0.5, 0.0);
            let h0 = cs.effective_user_channel(&CVec::zeros(50), 0);
            let lhs = cs.effective_user_channel(&(&v1 + &v2), 0) - &h0;
            let rhs = (cs.effective_user_channel(&v1, 0) - &h0) + (cs.effective_user_channel(&v2, 0) - &h0);
            prop_assert!((&lhs - &rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
        }
    }
}

//! Homogeneous self-dual interior-point method for
//!
//! ```text
//! minimize  cᵀx   subject to  G x + s = h,  A x = b,  s ∈ K
//! ```
//!
//! with `K` a product of nonnegative, second-order and PSD cones. The search
//! direction uses Nesterov–Todd scaling and a Mehrotra predictor-corrector;
//! the embedding yields certificates when either side is infeasible.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::cone::{Apply, ConeSet, NtScaling};

#[derive(Clone, Debug)]
pub struct StandardForm {
    pub c: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub cones: ConeSet,
}

impl StandardForm {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    fn check(&self) {
        let n = self.n();
        assert_eq!(self.g.ncols(), n, "G columns");
        assert_eq!(self.g.nrows(), self.cones.dim(), "G rows vs cone dimension");
        assert_eq!(self.h.len(), self.cones.dim(), "h length");
        assert_eq!(self.a.ncols(), n, "A columns");
        assert_eq!(self.a.nrows(), self.b.len(), "A rows vs b");
    }
}

#[derive(Clone, Debug)]
pub struct IpmOptions {
    pub max_iters: usize,
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub step_fraction: f64,
    pub refine_steps: usize,
    /// Looser tolerance accepted when progress stalls before `feas_tol`.
    pub inaccurate_tol: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self { max_iters: 200, feas_tol: 1e-8, gap_tol: 1e-8, step_fraction: 0.99, refine_steps: 2, inaccurate_tol: 1e-5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    /// Stalled short of the tolerances but within `inaccurate_tol`.
    AlmostOptimal,
    /// `(y, z)` is a certificate: `Aᵀy + Gᵀz = 0`, `z ∈ K`, `hᵀz + bᵀy = -1`.
    PrimalInfeasible,
    /// `x` is a certificate: `Ax = 0`, `-Gx ∈ K`, `cᵀx = -1`.
    DualInfeasible,
    MaxIterations,
    NumericalFailure,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IterInfo {
    pub pcost: f64,
    pub dcost: f64,
    pub pres: f64,
    pub dres: f64,
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub struct IpmResult {
    pub status: IpmStatus,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub s: DVector<f64>,
    pub iterations: usize,
    pub info: IterInfo,
    pub history: Vec<IterInfo>,
}

/// Reduced KKT system `[0 Aᵀ Gᵀ; A 0 0; G 0 -WᵀW]`, eliminated to `[H Aᵀ; A 0]`
/// with `H = ĜᵀĜ`, `Ĝ = W⁻ᵀG`.
struct Kkt<'a> {
    sf: &'a StandardForm,
    ghat: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    schur: Option<Cholesky<f64, Dyn>>,
    hinv_at: DMatrix<f64>,
    refine: usize,
}

impl<'a> Kkt<'a> {
    fn new(
        sf: &'a StandardForm,
        supports: &[Vec<usize>],
        nt: Option<&NtScaling>,
        refine: usize,
    ) -> Option<Self> {
        let n = sf.n();
        let mut ghat = sf.g.clone();
        if let Some(nt) = nt {
            for (bi, (_, r)) in sf.cones.iter().enumerate() {
                for &j in &supports[bi] {
                    let col = &mut ghat.column_mut(j);
                    nt.apply_block(&sf.cones, bi, Apply::Wtinv, &mut col.as_mut_slice()[r.clone()]);
                }
            }
        }
        let mut hmat = DMatrix::zeros(n, n);
        for (bi, (_, r)) in sf.cones.iter().enumerate() {
            let sup = &supports[bi];
            if sup.is_empty() {
                continue;
            }
            let gb = ghat.rows(r.start, r.len());
            if sup.len() == n {
                hmat.gemm_tr(1.0, &gb, &gb, 1.0);
            } else {
                let sub = gb.select_columns(sup.iter());
                let hs = sub.tr_mul(&sub);
                for (a, &ja) in sup.iter().enumerate() {
                    for (b, &jb) in sup.iter().enumerate() {
                        hmat[(ja, jb)] += hs[(a, b)];
                    }
                }
            }
        }
        let mut hreg = hmat;
        if sf.a.nrows() > 0 {
            hreg.gemm_tr(1.0, &sf.a, &sf.a, 1.0);
        }
        let scale = (0..n).map(|i| hreg[(i, i)]).fold(0.0f64, f64::max).max(1e-300);
        let chol = [1e-13, 1e-11, 1e-9].iter().find_map(|reg| {
            let mut hr = hreg.clone();
            for i in 0..n {
                hr[(i, i)] += reg * scale;
            }
            hr.cholesky()
        })?;
        let (schur, hinv_at) = if sf.a.nrows() > 0 {
            let hinv_at = chol.solve(&sf.a.transpose());
            let s = &sf.a * &hinv_at;
            (Some(s.cholesky()?), hinv_at)
        } else {
            (None, DMatrix::zeros(n, 0))
        };
        Some(Self { sf, ghat, chol, schur, hinv_at, refine })
    }

    fn solve_reduced(&self, rhs1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let a = &self.sf.a;
        match &self.schur {
            None => (self.chol.solve(rhs1), DVector::zeros(0)),
            Some(schur) => {
                let t = rhs1 + a.tr_mul(r2);
                let ht = self.chol.solve(&t);
                let y = schur.solve(&(a * &ht - r2));
                let x = ht - &self.hinv_at * &y;
                (x, y)
            }
        }
    }

    /// Solves with right-hand side `(r1, r2, r3)` where `r3s = W⁻ᵀ r3`.
    /// Returns `(x, y, W z)`.
    fn solve(
        &self,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3s: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let rhs1 = r1 + self.ghat.tr_mul(r3s);
        let (mut x, mut y) = self.solve_reduced(&rhs1, r2);
        for _ in 0..self.refine {
            // residual through Ĝ rather than the formed product, which loses
            // the small directions to rounding
            let mut e1 = &rhs1 - self.ghat.tr_mul(&(&self.ghat * &x));
            if self.sf.a.nrows() > 0 {
                e1 -= self.sf.a.tr_mul(&y);
            }
            let e2 = r2 - &self.sf.a * &x;
            let (dx, dy) = self.solve_reduced(&e1, &e2);
            x += dx;
            y += dy;
        }
        let zt = &self.ghat * &x - r3s;
        (x, y, zt)
    }
}

type Best = (f64, DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>, IterInfo);

fn norm_or_one(v: &DVector<f64>) -> f64 {
    v.norm().max(1.0)
}

fn column_supports(sf: &StandardForm) -> Vec<Vec<usize>> {
    sf.cones
        .iter()
        .map(|(_, r)| {
            (0..sf.n())
                .filter(|&j| sf.g.column(j).as_slice()[r.clone()].iter().any(|v| *v != 0.0))
                .collect()
        })
        .collect()
}

pub fn solve(sf: &StandardForm, opts: &IpmOptions) -> IpmResult {
    sf.check();
    let cones = &sf.cones;
    let (n, p, m) = (sf.n(), sf.b.len(), cones.dim());
    let degree = cones.degree() as f64;
    let supports = column_supports(sf);
    let e = cones.identity();
    let (resx0, resy0, resz0) = (norm_or_one(&sf.c), norm_or_one(&sf.b), norm_or_one(&sf.h));

    // Best iterate so far, already divided by tau, keyed by its worst residual.
    let mut best: Option<Best> = None;
    let accept_best = |best: &Option<Best>, iters: usize, history: &[IterInfo]| {
        best.as_ref().filter(|b| b.0 <= opts.inaccurate_tol).map(|b| IpmResult {
            status: IpmStatus::AlmostOptimal,
            x: b.1.clone(),
            y: b.2.clone(),
            z: b.3.clone(),
            s: b.4.clone(),
            iterations: iters,
            info: b.5,
            history: history.to_vec(),
        })
    };
    let failed = |iters: usize, history: Vec<IterInfo>| IpmResult {
        status: IpmStatus::NumericalFailure,
        x: DVector::zeros(n),
        y: DVector::zeros(p),
        z: DVector::zeros(m),
        s: DVector::zeros(m),
        iterations: iters,
        info: IterInfo::default(),
        history,
    };

    // Starting point from two least-squares solves with W = I.
    let Some(kkt0) = Kkt::new(sf, &supports, None, opts.refine_steps) else {
        return failed(0, vec![]);
    };
    let (mut x, _, zt) = kkt0.solve(&DVector::zeros(n), &sf.b, &sf.h);
    let mut s = -zt;
    let (_, mut y, mut z) = kkt0.solve(&(-&sf.c), &DVector::zeros(p), &DVector::zeros(m));
    for v in [&mut s, &mut z] {
        let shift = cones.boundary_shift(v);
        if shift >= -1e-8 * v.norm().max(1.0) {
            *v += &e * (1.0 + shift);
        }
    }
    let (mut tau, mut kappa) = (1.0f64, 1.0f64);
    let mut history = Vec::new();

    for iter in 0..=opts.max_iters {
        let mut rx = sf.g.tr_mul(&z) + &sf.c * tau;
        if p > 0 {
            rx += sf.a.tr_mul(&y);
        }
        let ry = &sf.a * &x - &sf.b * tau;
        let rz = &s + &sf.g * &x - &sf.h * tau;
        let cx = sf.c.dot(&x);
        let by_hz = sf.b.dot(&y) + sf.h.dot(&z);
        let rt = kappa + cx + by_hz;
        let sz = s.dot(&z);
        let mu = (sz + tau * kappa) / (degree + 1.0);

        let pcost = cx / tau;
        let dcost = -by_hz / tau;
        let pres = (ry.norm() / resy0).max(rz.norm() / resz0) / tau;
        let dres = rx.norm() / resx0 / tau;
        let gap = (sz / (tau * tau)).max((pcost - dcost).abs()) / pcost.abs().max(1.0);
        let info = IterInfo { pcost, dcost, pres, dres, gap };
        history.push(info);

        if !(pres.is_finite() && dres.is_finite() && gap.is_finite()) {
            return accept_best(&best, iter, &history).unwrap_or_else(|| failed(iter, history));
        }
        let score = pres.max(dres).max(gap);
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, &x / tau, &y / tau, &z / tau, &s / tau, info));
        }
        if pres <= opts.feas_tol && dres <= opts.feas_tol && gap <= opts.gap_tol {
            return IpmResult {
                status: IpmStatus::Optimal,
                x: x / tau,
                y: y / tau,
                z: z / tau,
                s: s / tau,
                iterations: iter,
                info,
                history,
            };
        }
        if by_hz < 0.0 {
            let mut hrx = sf.g.tr_mul(&z);
            if p > 0 {
                hrx += sf.a.tr_mul(&y);
            }
            let pinf = hrx.norm() / resx0 / (-by_hz);
            if pinf <= opts.feas_tol {
                let k = -1.0 / by_hz;
                return IpmResult {
                    status: IpmStatus::PrimalInfeasible,
                    x: DVector::zeros(n),
                    y: y * k,
                    z: z * k,
                    s: DVector::zeros(m),
                    iterations: iter,
                    info,
                    history,
                };
            }
        }
        if cx < 0.0 {
            let dinf = ((&sf.a * &x).norm() / resy0).max((&sf.g * &x + &s).norm() / resz0) / (-cx);
            if dinf <= opts.feas_tol {
                let k = -1.0 / cx;
                return IpmResult {
                    status: IpmStatus::DualInfeasible,
                    x: x * k,
                    y: DVector::zeros(p),
                    z: DVector::zeros(m),
                    s: s * k,
                    iterations: iter,
                    info,
                    history,
                };
            }
        }
        if iter == opts.max_iters {
            if let Some(r) = accept_best(&best, iter, &history) {
                return r;
            }
            return IpmResult {
                status: IpmStatus::MaxIterations,
                x: x / tau,
                y: y / tau,
                z: z / tau,
                s: s / tau,
                iterations: iter,
                info,
                history,
            };
        }

        let Some(nt) = NtScaling::new(cones, &s, &z) else {
            return accept_best(&best, iter, &history).unwrap_or_else(|| failed(iter, history));
        };
        let Some(kkt) = Kkt::new(sf, &supports, Some(&nt), opts.refine_steps) else {
            return accept_best(&best, iter, &history).unwrap_or_else(|| failed(iter, history));
        };
        let lambda = &nt.lambda;
        let mut hs = sf.h.clone();
        nt.apply(cones, Apply::Wtinv, hs.as_mut_slice());
        let mut rzs = rz.clone();
        nt.apply(cones, Apply::Wtinv, rzs.as_mut_slice());

        let (x1, y1, z1) = kkt.solve(&(-&sf.c), &sf.b, &hs);
        let mut denom = sf.c.dot(&x1) + sf.b.dot(&y1) + hs.dot(&z1) - kappa / tau;
        if !(denom < 0.0) {
            denom = -z1.norm_squared() - kappa / tau;
        }
        let lam_sq = cones.jordan(lambda, lambda);

        // Solves the linearized system for complementarity targets (ds, dk)
        // and residual weight eta; returns scaled directions.
        let direction = |eta: f64, ds: &DVector<f64>, dk: f64| {
            let lds = cones.jordan_div(lambda, ds);
            let r3s = -&rzs * eta - &lds;
            let (x2, y2, z2) = kkt.solve(&(-&rx * eta), &(-&ry * eta), &r3s);
            let r4 = -rt * eta - dk / tau;
            let dtau = (r4 - sf.c.dot(&x2) - sf.b.dot(&y2) - hs.dot(&z2)) / denom;
            let dx = x2 + &x1 * dtau;
            let dy = y2 + &y1 * dtau;
            let dzt = z2 + &z1 * dtau;
            let dst = lds - &dzt;
            let dkappa = (dk - kappa * dtau) / tau;
            (dx, dy, dzt, dst, dtau, dkappa)
        };
        let step_to_boundary = |dst: &DVector<f64>, dzt: &DVector<f64>, dtau: f64, dkappa: f64| {
            let mut a = cones.max_step(lambda, dst).min(cones.max_step(lambda, dzt));
            if dtau < 0.0 {
                a = a.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-kappa / dkappa);
            }
            a
        };

        let (_, _, dzt_a, dst_a, dtau_a, dkappa_a) = direction(1.0, &(-&lam_sq), -tau * kappa);
        let alpha_aff = step_to_boundary(&dst_a, &dzt_a, dtau_a, dkappa_a).min(1.0);
        let sigma = (1.0 - alpha_aff).max(0.0).powi(3);

        let ds = -&lam_sq - cones.jordan(&dst_a, &dzt_a) + &e * (sigma * mu);
        let dk = -tau * kappa - dtau_a * dkappa_a + sigma * mu;
        let (dx, dy, dzt, dst, dtau, dkappa) = direction(1.0 - sigma, &ds, dk);
        let alpha = (opts.step_fraction * step_to_boundary(&dst, &dzt, dtau, dkappa)).min(1.0);
        if !(alpha > 1e-14) {
            if let Some(r) = accept_best(&best, iter, &history) {
                return r;
            }
            return IpmResult {
                status: IpmStatus::MaxIterations,
                x: x / tau,
                y: y / tau,
                z: z / tau,
                s: s / tau,
                iterations: iter,
                info,
                history,
            };
        }

        let mut dz = dzt;
        nt.apply(cones, Apply::Winv, dz.as_mut_slice());
        let mut dsv = dst;
        nt.apply(cones, Apply::Wt, dsv.as_mut_slice());
        x += dx * alpha;
        y += dy * alpha;
        z += dz * alpha;
        s += dsv * alpha;
        tau += alpha * dtau;
        kappa += alpha * dkappa;
    }
    unreachable!("loop returns at max_iters")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::Cone;
    use crate::svec::svec;

    fn lp(c: &[f64], g: &[f64], h: &[f64]) -> StandardForm {
        let n = c.len();
        let m = h.len();
        StandardForm {
            c: DVector::from_row_slice(c),
            g: DMatrix::from_row_slice(m, n, g),
            h: DVector::from_row_slice(h),
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            cones: ConeSet::new(vec![Cone::Nonneg(m)]),
        }
    }

    #[test]
    fn small_lp() {
        // min -x - y  s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0  → (1.6, 1.2)
        let sf = lp(&[-1.0, -1.0], &[1.0, 2.0, 3.0, 1.0, -1.0, 0.0, 0.0, -1.0], &[4.0, 6.0, 0.0, 0.0]);
        let r = solve(&sf, &IpmOptions::default());
        assert_eq!(r.status, IpmStatus::Optimal);
        assert!((r.x[0] - 1.6).abs() < 1e-7 && (r.x[1] - 1.2).abs() < 1e-7, "{}", r.x);
        assert!(r.info.pres <= 1e-8 && r.info.dres <= 1e-8 && r.info.gap <= 1e-8);
    }

    #[test]
    fn infeasible_lp_gives_certificate() {
        // x >= 1 and x <= 0
        let sf = lp(&[1.0], &[-1.0, 1.0], &[-1.0, 0.0]);
        let r = solve(&sf, &IpmOptions::default());
        assert_eq!(r.status, IpmStatus::PrimalInfeasible);
        assert!((sf.g.tr_mul(&r.z)).norm() < 1e-7);
        assert!((sf.h.dot(&r.z) + 1.0).abs() < 1e-9);
        assert!(r.z.iter().all(|v| *v >= -1e-12));
    }

    #[test]
    fn unbounded_lp_gives_ray() {
        // min -x s.t. -x <= 0
        let sf = lp(&[-1.0], &[-1.0], &[0.0]);
        let r = solve(&sf, &IpmOptions::default());
        assert_eq!(r.status, IpmStatus::DualInfeasible);
        assert!((sf.c.dot(&r.x) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn socp_with_equality() {
        // min t s.t. ||(x1, x2)|| <= t, x1 + x2 = 2  → t = √2
        let sf = StandardForm {
            c: DVector::from_row_slice(&[1.0, 0.0, 0.0]),
            g: -DMatrix::identity(3, 3),
            h: DVector::zeros(3),
            a: DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 1.0]),
            b: DVector::from_row_slice(&[2.0]),
            cones: ConeSet::new(vec![Cone::Soc(3)]),
        };
        let r = solve(&sf, &IpmOptions::default());
        assert_eq!(r.status, IpmStatus::Optimal);
        assert!((r.x[0] - 2f64.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn sdp_min_eigenvalue() {
        // max t s.t. C - t I ⪰ 0 → t = λmin(C)
        let cm = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let want = cm.clone().symmetric_eigenvalues().min();
        let sf = StandardForm {
            c: DVector::from_row_slice(&[-1.0]),
            g: DMatrix::from_column_slice(6, 1, &svec(&DMatrix::identity(3, 3))),
            h: DVector::from_vec(svec(&cm)),
            a: DMatrix::zeros(0, 1),
            b: DVector::zeros(0),
            cones: ConeSet::new(vec![Cone::Psd(3)]),
        };
        let r = solve(&sf, &IpmOptions::default());
        assert_eq!(r.status, IpmStatus::Optimal);
        assert!((r.x[0] - want).abs() < 1e-7, "{} vs {want}", r.x[0]);
    }
}

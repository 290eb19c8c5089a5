//! Product cones: nonnegative orthant, second-order cone, real PSD cone (svec).
//!
//! Jordan-algebra helpers and Nesterov–Todd scaling for each block.

use nalgebra::{DMatrix, DVector};

use crate::svec::{smat, svec, svec_len};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cone {
    Nonneg(usize),
    /// Dimension including the leading scalar.
    Soc(usize),
    /// Order of the symmetric matrix; the block has `n(n+1)/2` entries.
    Psd(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Nonneg(n) | Cone::Soc(n) => n,
            Cone::Psd(n) => svec_len(n),
        }
    }

    pub fn degree(&self) -> usize {
        match *self {
            Cone::Nonneg(n) | Cone::Psd(n) => n,
            Cone::Soc(_) => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConeSet {
    pub blocks: Vec<Cone>,
    offsets: Vec<usize>,
    dim: usize,
}

impl ConeSet {
    pub fn new(blocks: Vec<Cone>) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        for b in &blocks {
            offsets.push(dim);
            dim += b.dim();
        }
        Self { blocks, offsets, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.blocks.iter().map(Cone::degree).sum()
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i] + self.blocks[i].dim()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Cone, std::ops::Range<usize>)> + '_ {
        (0..self.blocks.len()).map(move |i| (self.blocks[i], self.range(i)))
    }

    pub fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim);
        for (cone, r) in self.iter() {
            match cone {
                Cone::Nonneg(_) => e.rows_mut(r.start, r.len()).fill(1.0),
                Cone::Soc(_) => e[r.start] = 1.0,
                Cone::Psd(n) => {
                    let v = svec(&DMatrix::identity(n, n));
                    e.rows_mut(r.start, r.len()).copy_from_slice(&v);
                }
            }
        }
        e
    }

    /// Jordan product `u ∘ v`.
    pub fn jordan(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (cone, r) in self.iter() {
            let (a, b) = (&u.as_slice()[r.clone()], &v.as_slice()[r.clone()]);
            let o = &mut out.as_mut_slice()[r.clone()];
            match cone {
                Cone::Nonneg(_) => {
                    for i in 0..a.len() {
                        o[i] = a[i] * b[i];
                    }
                }
                Cone::Soc(_) => {
                    o[0] = dot(a, b);
                    for i in 1..a.len() {
                        o[i] = a[0] * b[i] + b[0] * a[i];
                    }
                }
                Cone::Psd(n) => {
                    let (ma, mb) = (smat(a, n), smat(b, n));
                    let p = &ma * &mb;
                    let sym = (&p + p.transpose()) * 0.5;
                    o.copy_from_slice(&svec(&sym));
                }
            }
        }
        out
    }

    /// Solves `lambda ∘ u = d` for `u`. PSD blocks of `lambda` must be diagonal,
    /// which is always the case for a Nesterov–Todd scaled point.
    pub fn jordan_div(&self, lambda: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (cone, r) in self.iter() {
            let (l, b) = (&lambda.as_slice()[r.clone()], &d.as_slice()[r.clone()]);
            let o = &mut out.as_mut_slice()[r.clone()];
            match cone {
                Cone::Nonneg(_) => {
                    for i in 0..l.len() {
                        o[i] = b[i] / l[i];
                    }
                }
                Cone::Soc(_) => {
                    let l1b1 = dot(&l[1..], &b[1..]);
                    let det = l[0] * l[0] - dot(&l[1..], &l[1..]);
                    let u0 = (l[0] * b[0] - l1b1) / det;
                    o[0] = u0;
                    for i in 1..l.len() {
                        o[i] = (b[i] - l[i] * u0) / l[0];
                    }
                }
                Cone::Psd(n) => {
                    let lm = smat(l, n);
                    let dm = smat(b, n);
                    let mut u = DMatrix::zeros(n, n);
                    for j in 0..n {
                        for i in 0..n {
                            u[(i, j)] = 2.0 * dm[(i, j)] / (lm[(i, i)] + lm[(j, j)]);
                        }
                    }
                    o.copy_from_slice(&svec(&u));
                }
            }
        }
        out
    }

    /// Smallest `a` with `x + a·e` in the closed cone.
    pub fn boundary_shift(&self, x: &DVector<f64>) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (cone, r) in self.iter() {
            let a = &x.as_slice()[r];
            let s = match cone {
                Cone::Nonneg(_) => a.iter().fold(f64::NEG_INFINITY, |m, v| m.max(-v)),
                Cone::Soc(_) => dot(&a[1..], &a[1..]).sqrt() - a[0],
                Cone::Psd(n) => -smat(a, n).symmetric_eigenvalues().min(),
            };
            worst = worst.max(s);
        }
        worst
    }

    /// Largest `a ≥ 0` with `x + a·d` in the cone; `x` must be interior.
    pub fn max_step(&self, x: &DVector<f64>, d: &DVector<f64>) -> f64 {
        let mut alpha = f64::INFINITY;
        for (cone, r) in self.iter() {
            let (a, b) = (&x.as_slice()[r.clone()], &d.as_slice()[r.clone()]);
            let s = match cone {
                Cone::Nonneg(_) => {
                    let mut s = f64::INFINITY;
                    for i in 0..a.len() {
                        if b[i] < 0.0 {
                            s = s.min(-a[i] / b[i]);
                        }
                    }
                    s
                }
                Cone::Soc(_) => soc_max_step(a, b),
                Cone::Psd(n) => psd_max_step(&smat(a, n), &smat(b, n)),
            };
            alpha = alpha.min(s);
        }
        alpha
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn soc_max_step(x: &[f64], d: &[f64]) -> f64 {
    // (x0 + a d0)^2 - |x1 + a d1|^2 = qa a^2 + 2 qb a + qc
    let qa = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let qb = x[0] * d[0] - dot(&x[1..], &d[1..]);
    let qc = x[0] * x[0] - dot(&x[1..], &x[1..]);
    let mut best = f64::INFINITY;
    let mut consider = |t: f64| {
        if t > 0.0 && t < best {
            best = t;
        }
    };
    if qa.abs() < 1e-300 {
        if qb < 0.0 {
            consider(-qc / (2.0 * qb));
        }
    } else {
        let disc = qb * qb - qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let q = -(qb + qb.signum() * sq);
            if q != 0.0 {
                consider(q / qa);
                consider(qc / q);
            } else {
                consider(sq / qa);
                consider(-sq / qa);
            }
        }
    }
    // the leading entry must stay nonnegative as well
    if d[0] < 0.0 {
        best = best.min(-x[0] / d[0]);
    }
    best
}

fn psd_max_step(x: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    match x.clone().cholesky() {
        Some(ch) => {
            let l = ch.l();
            let linv = l
                .clone()
                .solve_lower_triangular(&DMatrix::identity(x.nrows(), x.nrows()))
                .unwrap_or_else(|| DMatrix::identity(x.nrows(), x.nrows()));
            let m = &linv * d * linv.transpose();
            let m = (&m + m.transpose()) * 0.5;
            let lmin = m.symmetric_eigenvalues().min();
            if lmin < 0.0 {
                -1.0 / lmin
            } else {
                f64::INFINITY
            }
        }
        None => 0.0,
    }
}

/// Per-block Nesterov–Todd scaling `W` with `W z = W^{-T} s = λ`.
#[derive(Clone, Debug)]
pub enum BlockScaling {
    Nonneg { w: Vec<f64> },
    Soc { beta: f64, wbar: Vec<f64> },
    Psd { r: DMatrix<f64>, rinv: DMatrix<f64> },
}

#[derive(Clone, Debug)]
pub struct NtScaling {
    pub blocks: Vec<BlockScaling>,
    pub lambda: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Apply {
    W,
    Wt,
    Winv,
    Wtinv,
}

impl NtScaling {
    /// `None` when `s` or `z` is not strictly interior.
    pub fn new(cones: &ConeSet, s: &DVector<f64>, z: &DVector<f64>) -> Option<Self> {
        let mut blocks = Vec::with_capacity(cones.blocks.len());
        for (cone, r) in cones.iter() {
            let (sb, zb) = (&s.as_slice()[r.clone()], &z.as_slice()[r.clone()]);
            let b = match cone {
                Cone::Nonneg(_) => {
                    let mut w = Vec::with_capacity(sb.len());
                    for i in 0..sb.len() {
                        if !(sb[i] > 0.0 && zb[i] > 0.0) {
                            return None;
                        }
                        w.push((sb[i] / zb[i]).sqrt());
                    }
                    BlockScaling::Nonneg { w }
                }
                Cone::Soc(_) => {
                    let sn = sb[0] * sb[0] - dot(&sb[1..], &sb[1..]);
                    let zn = zb[0] * zb[0] - dot(&zb[1..], &zb[1..]);
                    if !(sn > 0.0 && zn > 0.0 && sb[0] > 0.0 && zb[0] > 0.0) {
                        return None;
                    }
                    let (sq_s, sq_z) = (sn.sqrt(), zn.sqrt());
                    let beta = (sq_s / sq_z).sqrt();
                    let sbar: Vec<f64> = sb.iter().map(|v| v / sq_s).collect();
                    let zbar: Vec<f64> = zb.iter().map(|v| v / sq_z).collect();
                    let gamma = ((1.0 + dot(&sbar, &zbar)) * 0.5).sqrt();
                    let mut wbar = Vec::with_capacity(sb.len());
                    wbar.push((sbar[0] + zbar[0]) / (2.0 * gamma));
                    for i in 1..sb.len() {
                        wbar.push((sbar[i] - zbar[i]) / (2.0 * gamma));
                    }
                    BlockScaling::Soc { beta, wbar }
                }
                Cone::Psd(n) => {
                    let ls = smat(sb, n).cholesky()?.l();
                    let lz = smat(zb, n).cholesky()?.l();
                    let svd = (lz.transpose() * &ls).svd(true, true);
                    let u = svd.u?;
                    let v = svd.v_t?.transpose();
                    let sig = svd.singular_values;
                    if sig.iter().any(|&x| !(x > 0.0)) {
                        return None;
                    }
                    let isq = DMatrix::from_diagonal(&sig.map(|x| 1.0 / x.sqrt()));
                    let r = &ls * &v * &isq;
                    let rinv = &isq * u.transpose() * lz.transpose();
                    BlockScaling::Psd { r, rinv }
                }
            };
            blocks.push(b);
        }
        let mut out = Self { blocks, lambda: DVector::zeros(cones.dim()) };
        let mut lambda = z.clone();
        out.apply(cones, Apply::W, lambda.as_mut_slice());
        // PSD blocks of λ are diagonal in exact arithmetic; drop round-off
        for (cone, r) in cones.iter() {
            if let Cone::Psd(n) = cone {
                let m = smat(&lambda.as_slice()[r.clone()], n);
                let d = DMatrix::from_diagonal(&m.diagonal());
                lambda.as_mut_slice()[r].copy_from_slice(&svec(&d));
            }
        }
        out.lambda = lambda;
        Some(out)
    }

    /// Applies the chosen scaling operator in place on a full-length vector.
    pub fn apply(&self, cones: &ConeSet, op: Apply, x: &mut [f64]) {
        for (i, (cone, r)) in cones.iter().enumerate() {
            apply_block(&self.blocks[i], cone, op, &mut x[r]);
        }
    }

    pub fn apply_block(&self, cones: &ConeSet, block: usize, op: Apply, x: &mut [f64]) {
        apply_block(&self.blocks[block], cones.blocks[block], op, x);
    }
}

fn apply_block(b: &BlockScaling, cone: Cone, op: Apply, x: &mut [f64]) {
    match b {
        BlockScaling::Nonneg { w } => match op {
            Apply::W | Apply::Wt => x.iter_mut().zip(w).for_each(|(v, w)| *v *= w),
            Apply::Winv | Apply::Wtinv => x.iter_mut().zip(w).for_each(|(v, w)| *v /= w),
        },
        BlockScaling::Soc { beta, wbar } => {
            // W = β [w0, w1'; w1, I + w1 w1'/(1+w0)], symmetric
            let w0 = wbar[0];
            let zeta = dot(&wbar[1..], &x[1..]);
            let x0 = x[0];
            let (sgn, scale) = match op {
                Apply::W | Apply::Wt => (1.0, *beta),
                Apply::Winv | Apply::Wtinv => (-1.0, 1.0 / beta),
            };
            let coef = sgn * x0 + zeta / (1.0 + w0);
            x[0] = scale * (w0 * x0 + sgn * zeta);
            for i in 1..x.len() {
                x[i] = scale * (x[i] + coef * wbar[i]);
            }
        }
        BlockScaling::Psd { r, rinv } => {
            let Cone::Psd(n) = cone else { unreachable!() };
            let m = smat(x, n);
            let out = match op {
                Apply::W => r.transpose() * m * r,
                Apply::Wt => r * m * r.transpose(),
                Apply::Winv => rinv.transpose() * m * rinv,
                Apply::Wtinv => rinv * m * rinv.transpose(),
            };
            x.copy_from_slice(&svec(&out));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_cones() -> ConeSet {
        ConeSet::new(vec![Cone::Nonneg(3), Cone::Soc(4), Cone::Psd(3), Cone::Soc(2)])
    }

    fn interior(cones: &ConeSet, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let mut x = DVector::zeros(cones.dim());
        for (cone, r) in cones.iter() {
            let b = &mut x.as_mut_slice()[r.clone()];
            match cone {
                Cone::Nonneg(_) => b.iter_mut().for_each(|v| *v = rng.gen_range(0.1..3.0)),
                Cone::Soc(_) => {
                    let mut nrm = 0.0f64;
                    for v in b[1..].iter_mut() {
                        *v = rng.gen_range(-1.0..1.0);
                        nrm += *v * *v;
                    }
                    b[0] = nrm.sqrt() + rng.gen_range(0.05..1.0);
                }
                Cone::Psd(n) => {
                    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                    let m = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
                    b.copy_from_slice(&svec(&m));
                }
            }
        }
        x
    }

    #[test]
    fn nt_scaling_maps_both_points_to_lambda() {
        let cones = sample_cones();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let s = interior(&cones, &mut rng);
            let z = interior(&cones, &mut rng);
            let nt = NtScaling::new(&cones, &s, &z).unwrap();
            let mut wz = z.clone();
            nt.apply(&cones, Apply::W, wz.as_mut_slice());
            let mut ws = s.clone();
            nt.apply(&cones, Apply::Wtinv, ws.as_mut_slice());
            assert!((&wz - &ws).norm() < 1e-9 * (1.0 + wz.norm()), "{wz} {ws}");
            assert!((&nt.lambda - &wz).norm() < 1e-9 * (1.0 + wz.norm()));
            // inverse and transpose consistency
            let u = DVector::from_fn(cones.dim(), |_, _| rng.gen_range(-1.0..1.0));
            let mut a = u.clone();
            nt.apply(&cones, Apply::W, a.as_mut_slice());
            nt.apply(&cones, Apply::Winv, a.as_mut_slice());
            assert!((&a - &u).norm() < 1e-9);
            let v = DVector::from_fn(cones.dim(), |_, _| rng.gen_range(-1.0..1.0));
            let mut wu = u.clone();
            nt.apply(&cones, Apply::W, wu.as_mut_slice());
            let mut wtv = v.clone();
            nt.apply(&cones, Apply::Wt, wtv.as_mut_slice());
            assert!((wu.dot(&v) - u.dot(&wtv)).abs() < 1e-9);
        }
    }

    #[test]
    fn jordan_div_inverts_product_at_lambda() {
        let cones = sample_cones();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = interior(&cones, &mut rng);
        let z = interior(&cones, &mut rng);
        let nt = NtScaling::new(&cones, &s, &z).unwrap();
        let d = DVector::from_fn(cones.dim(), |_, _| rng.gen_range(-1.0..1.0));
        let u = cones.jordan_div(&nt.lambda, &d);
        let back = cones.jordan(&nt.lambda, &u);
        assert!((back - d).norm() < 1e-9);
    }

    #[test]
    fn max_step_lands_on_boundary() {
        let cones = sample_cones();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x = interior(&cones, &mut rng);
            let d = DVector::from_fn(cones.dim(), |_, _| rng.gen_range(-3.0..3.0));
            let a = cones.max_step(&x, &d);
            if a.is_finite() {
                let edge = &x + &d * a;
                assert!(cones.boundary_shift(&edge).abs() < 1e-7, "{}", cones.boundary_shift(&edge));
                assert!(cones.boundary_shift(&(&x + &d * (0.99 * a))) < 0.0);
            }
        }
    }

    #[test]
    fn identity_is_neutral() {
        let cones = sample_cones();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = interior(&cones, &mut rng);
        let e = cones.identity();
        assert!((cones.jordan(&e, &x) - &x).norm() < 1e-12);
        assert_eq!(cones.degree(), 3 + 1 + 3 + 1);
        assert!((cones.boundary_shift(&e) + 1.0).abs() < 1e-12);
    }
}

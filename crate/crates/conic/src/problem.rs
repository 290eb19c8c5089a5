//! Modeling layer: Hermitian PSD blocks, free real variables, and linear /
//! second-order-cone constraints, lowered to the standard form of [`crate::ipm`].
//!
//! Two lowerings exist. The *direct* one keeps the model variables as the
//! interior-point unknowns. The *dual* one treats PSD blocks and constraint
//! slacks as cone variables of a standard-form primal and solves its dual, so
//! the unknowns are the multipliers of the constraint rows. For a covariance
//! SDP with a handful of constraints and several PSD blocks the dual lowering
//! is much smaller; `Route::Auto` picks whichever has fewer unknowns.

use nalgebra::{Complex, DMatrix, DVector};

use crate::cone::{Cone, ConeSet};
use crate::ipm::{self, IpmOptions, IpmResult, IpmStatus, StandardForm};
use crate::svec::{
    embed_param_matrix, herm_from_params, herm_param_len, lift_functional, smat, svec_len,
    trace_functional, unembed,
};
use crate::ConicError;

pub type CMatrix = DMatrix<Complex<f64>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PsdVar {
    pub block: usize,
    pub dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FreeVar(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarKey {
    /// Parameter `param` of PSD block `block`.
    Psd(usize, usize),
    Free(usize),
}

/// Affine expression `Σ coef·var + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarKey, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: vec![], constant: c }
    }

    pub fn var(v: FreeVar, coef: f64) -> Self {
        Self { terms: vec![(VarKey::Free(v.0), coef)], constant: 0.0 }
    }

    pub fn add_var(mut self, v: FreeVar, coef: f64) -> Self {
        self.terms.push((VarKey::Free(v.0), coef));
        self
    }

    pub fn add_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    /// Adds `scale·Re tr(C X)` for Hermitian `C`.
    pub fn add_trace(mut self, x: PsdVar, c: &CMatrix, scale: f64) -> Self {
        for (p, g) in trace_functional(c).into_iter().enumerate() {
            if g != 0.0 {
                self.terms.push((VarKey::Psd(x.block, p), scale * g));
            }
        }
        self
    }

    pub fn scaled(mut self, k: f64) -> Self {
        self.terms.iter_mut().for_each(|t| t.1 *= k);
        self.constant *= k;
        self
    }

    pub fn plus(mut self, other: &LinExpr) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    /// `expr = 0`
    Eq(LinExpr),
    /// `expr ≤ 0`
    Le(LinExpr),
    /// `‖x‖ ≤ t`
    Soc { t: LinExpr, x: Vec<LinExpr> },
}

impl Constraint {
    fn rows(&self) -> usize {
        match self {
            Constraint::Eq(_) | Constraint::Le(_) => 1,
            Constraint::Soc { x, .. } => 1 + x.len(),
        }
    }
}

/// A convex quadratic `xᵀQx + lᵀx + c ≤ 0` written as
/// `‖(2Fx, 1 + lᵀx + c)‖ ≤ 1 − lᵀx − c` with `FᵀF = Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticSoc {
    pub factor: DMatrix<f64>,
    pub linear: Vec<f64>,
    pub constant: f64,
}

impl QuadraticSoc {
    /// Cone membership of the lowered form at `x`.
    pub fn contains(&self, x: &[f64]) -> bool {
        let xv = DVector::from_row_slice(x);
        let fx = &self.factor * &xv * 2.0;
        let aff: f64 = self.linear.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.constant;
        (fx.norm_squared() + (1.0 + aff).powi(2)).sqrt() <= 1.0 - aff
    }
}

/// Factorizes `gram = FᵀF` by a symmetric eigendecomposition, dropping
/// directions with negligible curvature.
pub fn lower_quadratic_to_soc(
    gram: &DMatrix<f64>,
    linear: &[f64],
    constant: f64,
) -> Result<QuadraticSoc, ConicError> {
    let d = gram.nrows();
    if gram.ncols() != d || linear.len() != d {
        return Err(ConicError::Dimension(format!(
            "gram {}x{} with linear term of length {}",
            gram.nrows(),
            gram.ncols(),
            linear.len()
        )));
    }
    let sym = (gram + gram.transpose()) * 0.5;
    let tr = sym.trace().abs().max(f64::MIN_POSITIVE);
    let eig = sym.symmetric_eigen();
    let lmin = eig.eigenvalues.min();
    if lmin < -1e-10 * tr {
        return Err(ConicError::IndefiniteGram { min_eigenvalue: lmin, trace: tr });
    }
    let lmax = eig.eigenvalues.max().max(0.0);
    let keep: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] > 1e-13 * lmax).collect();
    let mut factor = DMatrix::zeros(keep.len(), d);
    for (row, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        for j in 0..d {
            factor[(row, j)] = s * eig.eigenvectors[(j, i)];
        }
    }
    Ok(QuadraticSoc { factor, linear: linear.to_vec(), constant })
}

/// Real form of `x^H Q x + Re(l^H x)` in the stacked variable `[Re x; Im x]`.
/// Real factor of `u ↦ ‖Fᴴu‖²` over stacked `[Re u; Im u]`.
pub fn realify_factor(f: &CMatrix) -> DMatrix<f64> {
    let (n, r) = (f.nrows(), f.ncols());
    let mut out = DMatrix::zeros(2 * r, 2 * n);
    for c in 0..r {
        for i in 0..n {
            let z = f[(i, c)];
            out[(c, i)] = z.re;
            out[(c, i + n)] = z.im;
            out[(c + r, i)] = -z.im;
            out[(c + r, i + n)] = z.re;
        }
    }
    out
}

pub fn realify_quadratic(
    q: &CMatrix,
    l: &DVector<Complex<f64>>,
) -> (DMatrix<f64>, Vec<f64>) {
    let n = q.nrows();
    let qh = (q + q.adjoint()) * Complex::new(0.5, 0.0);
    let mut g = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let z = qh[(i, j)];
            g[(i, j)] = z.re;
            g[(i + n, j + n)] = z.re;
            g[(i + n, j)] = z.im;
            g[(i, j + n)] = -z.im;
        }
    }
    let mut lin = vec![0.0; 2 * n];
    for i in 0..n {
        lin[i] = l[i].re;
        lin[i + n] = l[i].im;
    }
    (g, lin)
}

#[derive(Clone, Debug, Default)]
pub struct ConicProblem {
    psd_dims: Vec<usize>,
    n_free: usize,
    sense: Option<Sense>,
    objective: LinExpr,
    constraints: Vec<Constraint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    Auto,
    Direct,
    Dual,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub ipm: IpmOptions,
    pub route: Route,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { ipm: IpmOptions::default(), route: Route::Auto }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Solver stalled with residuals within the loose tolerance.
    AlmostOptimal,
    InfeasibleCertificate,
    Unbounded,
    MaxIters,
    NumericalFailure,
}

impl SolveStatus {
    /// True when the returned point can be used as a solution.
    pub fn is_solved(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::AlmostOptimal)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub psd: Vec<CMatrix>,
    pub free: Vec<f64>,
    /// Multipliers per constraint, for the minimization form of the model.
    pub duals: Vec<Vec<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub route: Route,
}

impl ConicSolution {
    pub fn value(&self, v: FreeVar) -> f64 {
        self.free[v.0]
    }

    pub fn matrix(&self, x: PsdVar) -> &CMatrix {
        &self.psd[x.block]
    }
}

/// Replaceable solver for the lowered standard form.
pub trait ConicBackend: Sync {
    fn name(&self) -> &str;
    fn solve_standard(&self, sf: &StandardForm, opts: &IpmOptions) -> IpmResult;
}

/// The built-in interior-point engine.
#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorPoint;

impl ConicBackend for InteriorPoint {
    fn name(&self) -> &str {
        "interior-point"
    }

    fn solve_standard(&self, sf: &StandardForm, opts: &IpmOptions) -> IpmResult {
        ipm::solve(sf, opts)
    }
}

/// Standard form plus what is needed to map results back to the model.
#[derive(Clone, Debug)]
pub struct Lowered {
    pub route: Route,
    pub form: StandardForm,
    obj_sign: f64,
    obj_const: f64,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_psd(&mut self, n: usize) -> PsdVar {
        self.psd_dims.push(n);
        PsdVar { block: self.psd_dims.len() - 1, dim: n }
    }

    pub fn add_free(&mut self) -> FreeVar {
        self.n_free += 1;
        FreeVar(self.n_free - 1)
    }

    pub fn add_free_vec(&mut self, count: usize) -> Vec<FreeVar> {
        (0..count).map(|_| self.add_free()).collect()
    }

    pub fn set_objective(&mut self, sense: Sense, expr: LinExpr) {
        self.sense = Some(sense);
        self.objective = expr;
    }

    pub fn add_eq(&mut self, expr: LinExpr) -> usize {
        self.push(Constraint::Eq(expr))
    }

    /// `expr ≤ 0`
    pub fn add_le(&mut self, expr: LinExpr) -> usize {
        self.push(Constraint::Le(expr))
    }

    /// `‖x‖ ≤ t`
    pub fn add_soc(&mut self, t: LinExpr, x: Vec<LinExpr>) -> usize {
        self.push(Constraint::Soc { t, x })
    }

    /// `xᵀQx + affine ≤ 0` over the real variables `vars`.
    pub fn add_quadratic_le(
        &mut self,
        vars: &[FreeVar],
        gram: &DMatrix<f64>,
        affine: LinExpr,
    ) -> Result<usize, ConicError> {
        let q = lower_quadratic_to_soc(gram, &vec![0.0; vars.len()], 0.0)?;
        Ok(self.add_factored_quadratic_le(vars, &q.factor, affine))
    }

    /// `‖F x‖² + affine ≤ 0` with `F` given directly (rows of the factor).
    pub fn add_factored_quadratic_le(&mut self, vars: &[FreeVar], factor: &DMatrix<f64>, affine: LinExpr) -> usize {
        assert_eq!(factor.ncols(), vars.len(), "factor columns vs variables");
        let mut rows = Vec::with_capacity(factor.nrows() + 1);
        for r in 0..factor.nrows() {
            let mut e = LinExpr::new();
            for (j, v) in vars.iter().enumerate() {
                let f = factor[(r, j)];
                if f != 0.0 {
                    e = e.add_var(*v, 2.0 * f);
                }
            }
            rows.push(e);
        }
        rows.push(LinExpr::constant(1.0).plus(&affine));
        let t = LinExpr::constant(1.0).plus(&affine.clone().scaled(-1.0));
        self.add_soc(t, rows)
    }

    fn push(&mut self, c: Constraint) -> usize {
        self.constraints.push(c);
        self.constraints.len() - 1
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn psd_dims(&self) -> &[usize] {
        &self.psd_dims
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    fn offsets(&self) -> (Vec<usize>, usize) {
        let mut offs = Vec::with_capacity(self.psd_dims.len());
        let mut at = 0;
        for &n in &self.psd_dims {
            offs.push(at);
            at += herm_param_len(n);
        }
        (offs, at)
    }

    pub fn n_vars(&self) -> usize {
        self.offsets().1 + self.n_free
    }

    fn dense(&self, e: &LinExpr, offs: &[usize], free0: usize) -> Result<Vec<f64>, ConicError> {
        let mut row = vec![0.0; free0 + self.n_free];
        for &(k, coef) in &e.terms {
            let idx = match k {
                VarKey::Psd(b, p) => {
                    let n = *self
                        .psd_dims
                        .get(b)
                        .ok_or_else(|| ConicError::Dimension(format!("unknown PSD block {b}")))?;
                    if p >= herm_param_len(n) {
                        return Err(ConicError::Dimension(format!("parameter {p} outside block {b}")));
                    }
                    offs[b] + p
                }
                VarKey::Free(i) => {
                    if i >= self.n_free {
                        return Err(ConicError::Dimension(format!("unknown free variable {i}")));
                    }
                    free0 + i
                }
            };
            row[idx] += coef;
        }
        Ok(row)
    }

    fn dual_rows(&self) -> usize {
        self.constraints.iter().map(Constraint::rows).sum()
    }

    pub fn lower(&self, route: Route) -> Result<Lowered, ConicError> {
        let route = match route {
            Route::Auto => {
                if self.dual_rows() < self.n_vars() {
                    Route::Dual
                } else {
                    Route::Direct
                }
            }
            r => r,
        };
        match route {
            Route::Dual => self.lower_dual(),
            _ => self.lower_direct(),
        }
    }

    fn sign(&self) -> Result<f64, ConicError> {
        match self.sense {
            Some(Sense::Minimize) => Ok(1.0),
            Some(Sense::Maximize) => Ok(-1.0),
            None => Err(ConicError::Dimension("objective not set".into())),
        }
    }

    fn count_cones(&self) -> (usize, Vec<usize>) {
        let n_le = self.constraints.iter().filter(|c| matches!(c, Constraint::Le(_))).count();
        let socs = self
            .constraints
            .iter()
            .filter_map(|c| match c {
                Constraint::Soc { x, .. } => Some(1 + x.len()),
                _ => None,
            })
            .collect();
        (n_le, socs)
    }

    fn cone_set(&self) -> ConeSet {
        let (n_le, socs) = self.count_cones();
        let mut blocks = Vec::new();
        if n_le > 0 {
            blocks.push(Cone::Nonneg(n_le));
        }
        blocks.extend(socs.into_iter().map(Cone::Soc));
        blocks.extend(self.psd_dims.iter().map(|&n| Cone::Psd(2 * n)));
        ConeSet::new(blocks)
    }

    fn lower_direct(&self) -> Result<Lowered, ConicError> {
        let sign = self.sign()?;
        let (offs, free0) = self.offsets();
        let n = free0 + self.n_free;
        let cones = self.cone_set();
        let m = cones.dim();
        let n_eq = self.constraints.iter().filter(|c| matches!(c, Constraint::Eq(_))).count();
        let mut g = DMatrix::zeros(m, n);
        let mut h = DVector::zeros(m);
        let mut a = DMatrix::zeros(n_eq, n);
        let mut b = DVector::zeros(n_eq);
        let (n_le, _) = self.count_cones();
        let (mut le_row, mut soc_row, mut eq_row) = (0usize, n_le, 0usize);
        for c in &self.constraints {
            match c {
                Constraint::Eq(e) => {
                    let row = self.dense(e, &offs, free0)?;
                    a.row_mut(eq_row).copy_from_slice(&row);
                    b[eq_row] = -e.constant;
                    eq_row += 1;
                }
                Constraint::Le(e) => {
                    let row = self.dense(e, &offs, free0)?;
                    g.row_mut(le_row).copy_from_slice(&row);
                    h[le_row] = -e.constant;
                    le_row += 1;
                }
                Constraint::Soc { t, x } => {
                    for e in std::iter::once(t).chain(x.iter()) {
                        let row = self.dense(e, &offs, free0)?;
                        for (j, v) in row.into_iter().enumerate() {
                            g[(soc_row, j)] = -v;
                        }
                        h[soc_row] = e.constant;
                        soc_row += 1;
                    }
                }
            }
        }
        let mut row0 = soc_row;
        for (bi, &nb) in self.psd_dims.iter().enumerate() {
            let e = embed_param_matrix(nb);
            let len = svec_len(2 * nb);
            for j in 0..herm_param_len(nb) {
                for i in 0..len {
                    g[(row0 + i, offs[bi] + j)] = -e[(i, j)];
                }
            }
            row0 += len;
        }
        let c = DVector::from_vec(self.dense(&self.objective, &offs, free0)?) * sign;
        Ok(Lowered {
            route: Route::Direct,
            form: StandardForm { c, g, h, a, b, cones },
            obj_sign: sign,
            obj_const: self.objective.constant,
        })
    }

    /// Splits a dense model row into lifted PSD coefficients (per block, in
    /// svec coordinates of the embedding) and free-variable coefficients.
    fn lift_row(&self, row: &[f64], offs: &[usize], free0: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let psd = self
            .psd_dims
            .iter()
            .enumerate()
            .map(|(bi, &nb)| lift_functional(&row[offs[bi]..offs[bi] + herm_param_len(nb)], nb))
            .collect();
        (psd, row[free0..].to_vec())
    }

    fn lower_dual(&self) -> Result<Lowered, ConicError> {
        let sign = self.sign()?;
        let (offs, free0) = self.offsets();
        let cones = self.cone_set();
        let m_cone = cones.dim();
        let rows = self.dual_rows();
        let (n_le, _) = self.count_cones();
        let n_soc_dims: usize = cones
            .blocks
            .iter()
            .filter_map(|c| if let Cone::Soc(d) = c { Some(*d) } else { None })
            .sum();
        let psd_start = n_le + n_soc_dims;
        let mut psd_offs = Vec::with_capacity(self.psd_dims.len());
        let mut at = psd_start;
        for &nb in &self.psd_dims {
            psd_offs.push(at);
            at += svec_len(2 * nb);
        }

        // G = Ãzᵀ (cone dim × rows), A = Ãfᵀ (free × rows), c = −b̃
        let mut g = DMatrix::zeros(m_cone, rows);
        let mut a = DMatrix::zeros(self.n_free, rows);
        let mut c = DVector::zeros(rows);
        let put_row = |r: usize, row: &[f64], g: &mut DMatrix<f64>, a: &mut DMatrix<f64>| {
            let (psd, free) = self.lift_row(row, &offs, free0);
            for (bi, coefs) in psd.iter().enumerate() {
                for (i, v) in coefs.iter().enumerate() {
                    g[(psd_offs[bi] + i, r)] = *v;
                }
            }
            for (i, v) in free.iter().enumerate() {
                a[(i, r)] = *v;
            }
        };
        let (mut r, mut le_slot, mut soc_slot) = (0usize, 0usize, n_le);
        for con in &self.constraints {
            match con {
                Constraint::Eq(e) => {
                    put_row(r, &self.dense(e, &offs, free0)?, &mut g, &mut a);
                    c[r] = e.constant;
                    r += 1;
                }
                Constraint::Le(e) => {
                    put_row(r, &self.dense(e, &offs, free0)?, &mut g, &mut a);
                    g[(le_slot, r)] = 1.0;
                    c[r] = e.constant;
                    le_slot += 1;
                    r += 1;
                }
                Constraint::Soc { t, x } => {
                    for e in std::iter::once(t).chain(x.iter()) {
                        let row: Vec<f64> = self.dense(e, &offs, free0)?.iter().map(|v| -v).collect();
                        put_row(r, &row, &mut g, &mut a);
                        g[(soc_slot, r)] = 1.0;
                        c[r] = -e.constant;
                        soc_slot += 1;
                        r += 1;
                    }
                }
            }
        }
        let obj = self.dense(&self.objective, &offs, free0)?;
        let (psd_obj, free_obj) = self.lift_row(&obj, &offs, free0);
        let mut h = DVector::zeros(m_cone);
        for (bi, coefs) in psd_obj.iter().enumerate() {
            for (i, v) in coefs.iter().enumerate() {
                h[psd_offs[bi] + i] = sign * v;
            }
        }
        let b = DVector::from_vec(free_obj) * sign;
        Ok(Lowered {
            route: Route::Dual,
            form: StandardForm { c, g, h, a, b, cones },
            obj_sign: sign,
            obj_const: self.objective.constant,
        })
    }

    pub fn solve(&self, opts: &SolveOptions) -> Result<ConicSolution, ConicError> {
        self.solve_with(&InteriorPoint, opts)
    }

    pub fn solve_with(
        &self,
        backend: &dyn ConicBackend,
        opts: &SolveOptions,
    ) -> Result<ConicSolution, ConicError> {
        let lowered = self.lower(opts.route)?;
        let res = backend.solve_standard(&lowered.form, &opts.ipm);
        Ok(self.recover(&lowered, &res))
    }

    fn recover(&self, lw: &Lowered, res: &IpmResult) -> ConicSolution {
        let (offs, free0) = self.offsets();
        let status = match (lw.route, res.status) {
            (_, IpmStatus::Optimal) => SolveStatus::Optimal,
            (_, IpmStatus::AlmostOptimal) => SolveStatus::AlmostOptimal,
            (Route::Dual, IpmStatus::DualInfeasible) | (Route::Direct, IpmStatus::PrimalInfeasible) => {
                SolveStatus::InfeasibleCertificate
            }
            (Route::Dual, IpmStatus::PrimalInfeasible) | (Route::Direct, IpmStatus::DualInfeasible) => {
                SolveStatus::Unbounded
            }
            (_, IpmStatus::MaxIterations) => SolveStatus::MaxIters,
            _ => SolveStatus::NumericalFailure,
        };
        let mut psd = Vec::with_capacity(self.psd_dims.len());
        let mut free = vec![0.0; self.n_free];
        let mut duals = Vec::with_capacity(self.constraints.len());
        match lw.route {
            Route::Dual => {
                let mut at = lw.form.cones.dim() - self.psd_dims.iter().map(|&n| svec_len(2 * n)).sum::<usize>();
                for &nb in &self.psd_dims {
                    let len = svec_len(2 * nb);
                    psd.push(unembed(&smat(&res.z.as_slice()[at..at + len], 2 * nb)));
                    at += len;
                }
                free.copy_from_slice(res.y.as_slice());
                let mut r = 0;
                for con in &self.constraints {
                    let k = con.rows();
                    duals.push(res.x.as_slice()[r..r + k].iter().map(|v| -v).collect());
                    r += k;
                }
            }
            _ => {
                for (bi, &nb) in self.psd_dims.iter().enumerate() {
                    psd.push(herm_from_params(&res.x.as_slice()[offs[bi]..offs[bi] + herm_param_len(nb)], nb));
                }
                free.copy_from_slice(&res.x.as_slice()[free0..]);
                let (n_le, _) = self.count_cones();
                let (mut le, mut soc, mut eq) = (0usize, n_le, 0usize);
                for con in &self.constraints {
                    match con {
                        Constraint::Eq(_) => {
                            duals.push(vec![res.y[eq]]);
                            eq += 1;
                        }
                        Constraint::Le(_) => {
                            duals.push(vec![res.z[le]]);
                            le += 1;
                        }
                        Constraint::Soc { x, .. } => {
                            duals.push(res.z.as_slice()[soc..soc + 1 + x.len()].to_vec());
                            soc += 1 + x.len();
                        }
                    }
                }
            }
        }
        let (pobj, dobj) = match lw.route {
            Route::Dual => (-res.info.dcost, -res.info.pcost),
            _ => (res.info.pcost, res.info.dcost),
        };
        ConicSolution {
            status,
            psd,
            free,
            duals,
            primal_objective: lw.obj_sign * pobj + lw.obj_const,
            dual_objective: lw.obj_sign * dobj + lw.obj_const,
            kkt: KktResiduals { primal: res.info.pres, dual: res.info.dres, gap: res.info.gap },
            iterations: res.iterations,
            route: lw.route,
        }
    }

    /// Evaluates an expression at a solution.
    pub fn eval(&self, e: &LinExpr, sol: &ConicSolution) -> f64 {
        let mut v = e.constant;
        for &(k, coef) in &e.terms {
            v += coef
                * match k {
                    VarKey::Free(i) => sol.free[i],
                    VarKey::Psd(b, p) => {
                        let params = crate::svec::params_from_herm(&sol.psd[b]);
                        params[p]
                    }
                };
        }
        v
    }

    /// Largest constraint violation at a solution, each relative to
    /// `1 + |constant|` of its row; PSD blocks by most negative eigenvalue
    /// relative to `1 + trace`.
    pub fn max_violation(&self, sol: &ConicSolution) -> f64 {
        let (offs, free0) = self.offsets();
        let mut vars = vec![0.0; free0 + self.n_free];
        for (bi, x) in sol.psd.iter().enumerate() {
            let p = crate::svec::params_from_herm(x);
            vars[offs[bi]..offs[bi] + p.len()].copy_from_slice(&p);
        }
        vars[free0..].copy_from_slice(&sol.free);
        let ev = |e: &LinExpr| -> f64 {
            let row = self.dense(e, &offs, free0).expect("validated at lowering");
            row.iter().zip(&vars).map(|(a, b)| a * b).sum::<f64>() + e.constant
        };
        let mut worst = 0.0f64;
        for con in &self.constraints {
            let v = match con {
                Constraint::Eq(e) => ev(e).abs() / (1.0 + e.constant.abs()),
                Constraint::Le(e) => ev(e).max(0.0) / (1.0 + e.constant.abs()),
                Constraint::Soc { t, x } => {
                    let nx: f64 = x.iter().map(|e| ev(e).powi(2)).sum::<f64>().sqrt();
                    (nx - ev(t)).max(0.0) / (1.0 + t.constant.abs())
                }
            };
            worst = worst.max(v);
        }
        for x in &sol.psd {
            let eigs = x.clone().symmetric_eigenvalues();
            let tr = x.trace().re.abs();
            worst = worst.max((-eigs.min()).max(0.0) / (1.0 + tr));
        }
        worst
    }
}

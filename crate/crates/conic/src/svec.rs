//! Vectorization of symmetric matrices and the real embedding of Hermitian ones.
//!
//! `svec` stacks the lower triangle column by column with off-diagonal entries
//! scaled by √2, so that `svec(A)·svec(B) = tr(AB)`.
//!
//! A Hermitian `n×n` matrix `X = A + jB` is parametrized by `n²` reals: the
//! diagonal, then `(Re, Im)` of each strictly-lower entry in column order.
//! Its real embedding is `[[A, -B], [B, A]]`.

use nalgebra::{Complex, DMatrix};

const SQRT2: f64 = std::f64::consts::SQRT_2;

pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(svec_len(n));
    for j in 0..n {
        out.push(m[(j, j)]);
        for i in j + 1..n {
            out.push(SQRT2 * 0.5 * (m[(i, j)] + m[(j, i)]));
        }
    }
    out
}

pub fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), svec_len(n));
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        m[(j, j)] = v[k];
        k += 1;
        for i in j + 1..n {
            let x = v[k] / SQRT2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    m
}

/// Order of the symmetric matrix whose svec has length `len`.
pub fn svec_order(len: usize) -> usize {
    let n = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    debug_assert_eq!(svec_len(n), len);
    n
}

pub fn herm_param_len(n: usize) -> usize {
    n * n
}

/// Position of `(Re, Im)` of entry `(i, j)`, `i > j`, in the parameter vector.
pub fn herm_offdiag_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i > j && i < n);
    // strictly-lower entries preceding column j
    let before = j * n - j * (j + 1) / 2;
    n + 2 * (before + (i - j - 1))
}

pub fn herm_from_params(p: &[f64], n: usize) -> DMatrix<Complex<f64>> {
    let mut x = DMatrix::zeros(n, n);
    for i in 0..n {
        x[(i, i)] = Complex::new(p[i], 0.0);
    }
    for j in 0..n {
        for i in j + 1..n {
            let k = herm_offdiag_index(n, i, j);
            let z = Complex::new(p[k], p[k + 1]);
            x[(i, j)] = z;
            x[(j, i)] = z.conj();
        }
    }
    x
}

pub fn params_from_herm(x: &DMatrix<Complex<f64>>) -> Vec<f64> {
    let n = x.nrows();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        p[i] = x[(i, i)].re;
    }
    for j in 0..n {
        for i in j + 1..n {
            let k = herm_offdiag_index(n, i, j);
            let z = (x[(i, j)] + x[(j, i)].conj()) * 0.5;
            p[k] = z.re;
            p[k + 1] = z.im;
        }
    }
    p
}

pub fn embed(x: &DMatrix<Complex<f64>>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut y = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let z = x[(i, j)];
            y[(i, j)] = z.re;
            y[(i + n, j + n)] = z.re;
            y[(i + n, j)] = z.im;
            y[(i, j + n)] = -z.im;
        }
    }
    y
}

/// Hermitian matrix nearest to a real symmetric `2n×2n` matrix in embedded form.
pub fn unembed(y: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    let n = y.nrows() / 2;
    let mut x = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let re = 0.5 * (y[(i, j)] + y[(i + n, j + n)]);
            let im = 0.5 * (y[(i + n, j)] - y[(i, j + n)]);
            x[(i, j)] = Complex::new(re, im);
        }
    }
    let xh = x.adjoint();
    (x + xh) * Complex::new(0.5, 0.0)
}

/// Coefficients `g` over the parameters of an `n×n` Hermitian block such that
/// `g·params(X) = Re tr(C X)` for Hermitian `C`.
pub fn trace_functional(c: &DMatrix<Complex<f64>>) -> Vec<f64> {
    let n = c.nrows();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        g[i] = c[(i, i)].re;
    }
    for j in 0..n {
        for i in j + 1..n {
            let k = herm_offdiag_index(n, i, j);
            // Re(C_ji X_ij + C_ij X_ji) with X_ij = a + jb
            let cij = (c[(i, j)] + c[(j, i)].conj()) * 0.5;
            g[k] = 2.0 * cij.re;
            g[k + 1] = 2.0 * cij.im;
        }
    }
    g
}

/// Hermitian `C` with `Re tr(C X) = g·params(X)`; inverse of [`trace_functional`].
pub fn functional_matrix(g: &[f64], n: usize) -> DMatrix<Complex<f64>> {
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = Complex::new(g[i], 0.0);
    }
    for j in 0..n {
        for i in j + 1..n {
            let k = herm_offdiag_index(n, i, j);
            let z = Complex::new(0.5 * g[k], 0.5 * g[k + 1]);
            c[(i, j)] = z;
            c[(j, i)] = z.conj();
        }
    }
    c
}

/// Lifts a parameter functional to svec coordinates of the `2n×2n` embedding:
/// `lift(g)·svec(embed(X)) = g·params(X)`.
pub fn lift_functional(g: &[f64], n: usize) -> Vec<f64> {
    let c = functional_matrix(g, n);
    svec(&embed(&c)).into_iter().map(|x| 0.5 * x).collect()
}

/// Matrix of the linear map `params(X) ↦ svec(embed(X))`.
pub fn embed_param_matrix(n: usize) -> DMatrix<f64> {
    let np = herm_param_len(n);
    let m = svec_len(2 * n);
    let mut e = DMatrix::zeros(m, np);
    let mut p = vec![0.0; np];
    for col in 0..np {
        p[col] = 1.0;
        let s = svec(&embed(&herm_from_params(&p, n)));
        e.column_mut(col).copy_from_slice(&s);
        p[col] = 0.0;
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn herm_strategy(n: usize) -> impl Strategy<Value = DMatrix<Complex<f64>>> {
        proptest::collection::vec(-3.0f64..3.0, n * n).prop_map(move |p| herm_from_params(&p, n))
    }

    #[test]
    fn svec_inner_product_is_trace() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, -1.0, 1.0, 3.0, 0.5, -1.0, 0.5, 1.0]);
        let b = DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 0.0, -2.0, 0.0, 4.0, 0.0, 4.0, 2.0]);
        let lhs: f64 = svec(&a).iter().zip(svec(&b)).map(|(x, y)| x * y).sum();
        assert!((lhs - (&a * &b).trace()).abs() < 1e-12);
        assert_eq!(smat(&svec(&a), 3), a);
        assert_eq!(svec_order(svec_len(7)), 7);
    }

    #[test]
    fn offdiag_index_enumerates_tail() {
        let n = 4;
        let mut seen = vec![];
        for j in 0..n {
            for i in j + 1..n {
                seen.push(herm_offdiag_index(n, i, j));
            }
        }
        let want: Vec<usize> = (0..6).map(|k| n + 2 * k).collect();
        assert_eq!(seen, want);
    }

    proptest! {
        #[test]
        fn embedding_round_trip(x in herm_strategy(4)) {
            let y = embed(&x);
            prop_assert!((&y - y.transpose()).norm() < 1e-14);
            let back = unembed(&y);
            prop_assert!((&back - &x).norm() < 1e-12);
            // traces double under the embedding
            prop_assert!((y.trace() - 2.0 * x.trace().re).abs() < 1e-12);
            let p = params_from_herm(&x);
            prop_assert!((&herm_from_params(&p, 4) - &x).norm() < 1e-12);
        }

        #[test]
        fn functionals_agree_across_coordinates(x in herm_strategy(3), c in herm_strategy(3)) {
            let p = params_from_herm(&x);
            let g = trace_functional(&c);
            let direct = (&c * &x).trace().re;
            let via_params: f64 = g.iter().zip(&p).map(|(a, b)| a * b).sum();
            prop_assert!((direct - via_params).abs() < 1e-10);
            let lifted = lift_functional(&g, 3);
            let sy = svec(&embed(&x));
            let via_embed: f64 = lifted.iter().zip(&sy).map(|(a, b)| a * b).sum();
            prop_assert!((direct - via_embed).abs() < 1e-10);
            let e = embed_param_matrix(3);
            let sy2 = &e * nalgebra::DVector::from_vec(p.clone());
            prop_assert!((sy2 - nalgebra::DVector::from_vec(sy)).norm() < 1e-12);
            prop_assert!((functional_matrix(&g, 3) - &c).norm() < 1e-12);
        }
    }
}

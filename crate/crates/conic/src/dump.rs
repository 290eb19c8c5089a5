//! Plain-text dump of a lowered problem for offline cross-checking.
//!
//! Layout: a header, then `[c]`, `[A]`, `[b]`, and one `[G ...]`/`[h ...]`
//! pair per cone block. Matrix sections hold `row col value` triplets
//! (0-based, rows local to the block); vector sections hold `index value`.
//! Zeros are omitted.

use std::fmt::Write;

use nalgebra::{DMatrix, DVector};

use crate::cone::Cone;
use crate::problem::Lowered;

fn vec_section(out: &mut String, title: &str, v: &[f64]) {
    let _ = writeln!(out, "[{title}]");
    for (i, x) in v.iter().enumerate() {
        if *x != 0.0 {
            let _ = writeln!(out, "{i} {x:e}");
        }
    }
}

fn mat_section(out: &mut String, title: &str, m: &DMatrix<f64>, rows: std::ops::Range<usize>) {
    let _ = writeln!(out, "[{title}]");
    for (li, i) in rows.enumerate() {
        for j in 0..m.ncols() {
            let x = m[(i, j)];
            if x != 0.0 {
                let _ = writeln!(out, "{li} {j} {x:e}");
            }
        }
    }
}

pub fn dump_text(lw: &Lowered) -> String {
    let f = &lw.form;
    let mut out = String::new();
    let _ = writeln!(out, "# conic standard form: min c'x s.t. Gx + s = h, Ax = b, s in K");
    let _ = writeln!(out, "route {:?}", lw.route);
    let _ = writeln!(out, "n {} p {} m {}", f.c.len(), f.b.len(), f.cones.dim());
    let names: Vec<String> = f
        .cones
        .blocks
        .iter()
        .map(|c| match c {
            Cone::Nonneg(n) => format!("nonneg:{n}"),
            Cone::Soc(n) => format!("soc:{n}"),
            Cone::Psd(n) => format!("psd:{n}"),
        })
        .collect();
    let _ = writeln!(out, "cones {}", names.join(" "));
    vec_section(&mut out, "c", f.c.as_slice());
    mat_section(&mut out, "A", &f.a, 0..f.a.nrows());
    vec_section(&mut out, "b", f.b.as_slice());
    for (k, (cone, r)) in f.cones.iter().enumerate() {
        let tag = match cone {
            Cone::Nonneg(n) => format!("nonneg {n}"),
            Cone::Soc(n) => format!("soc {n}"),
            Cone::Psd(n) => format!("psd {n} svec"),
        };
        mat_section(&mut out, &format!("G {k} {tag}"), &f.g, r.clone());
        let h: DVector<f64> = f.h.rows(r.start, r.len()).into_owned();
        vec_section(&mut out, &format!("h {k}"), h.as_slice());
    }
    out
}

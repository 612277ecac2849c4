//! Dense linear-algebra helpers shared by the model, planner and filter.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance under which an eigenvalue's imaginary part is treated as zero.
const REAL_TOL: f64 = 1e-10;
/// Relative tolerance for grouping repeated eigenvalues.
const CLUSTER_TOL: f64 = 1e-8;
/// Relative tolerance used when comparing moduli for ordering.
const ORDER_TOL: f64 = 1e-12;

/// Singular values of `a`, sorted descending.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Right singular vectors of `a` as columns, ordered by descending singular value,
/// together with the singular values (padded with zeros up to `ncols`).
pub fn right_singular(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.ncols();
    if a.nrows() == 0 {
        return (vec![0.0; n], DMatrix::identity(n, n));
    }
    // Pad short matrices so that the SVD yields a full set of right vectors.
    let padded;
    let work = if a.nrows() < n {
        padded = {
            let mut p = DMatrix::zeros(n, n);
            p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
            p
        };
        &padded
    } else {
        a
    };
    let svd = work.clone().svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut v = DMatrix::zeros(n, order.len());
    let mut s = Vec::with_capacity(order.len());
    for (col, &i) in order.iter().enumerate() {
        s.push(svd.singular_values[i]);
        for r in 0..n {
            v[(r, col)] = vt[(i, r)];
        }
    }
    (s, v)
}

/// Numerical rank with a relative singular-value cutoff.
pub fn numerical_rank(s: &[f64], rel_tol: f64) -> usize {
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&x| x > rel_tol * smax).count(),
        _ => 0,
    }
}

/// Eigenvalues of a symmetric matrix, sorted descending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let sym = (a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&x| x.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Conjugate structure of one eigen-column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Unit {
    Real(usize),
    /// Index of the positive-imaginary member; its conjugate follows it.
    Pair(usize),
}

/// Eigenvalues of a real square matrix arranged in canonical order: descending
/// modulus, ties by descending argument, conjugate pairs adjacent with the
/// positive-imaginary member first. Near-real eigenvalues are snapped to the real axis.
pub(crate) fn canonical_eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    let raw: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let mut reals = Vec::new();
    let mut pos = Vec::new();
    for lam in raw {
        if lam.im.abs() <= REAL_TOL * scale.max(lam.norm()) {
            reals.push(Complex64::new(lam.re, 0.0));
        } else if lam.im > 0.0 {
            pos.push(lam);
        }
    }
    let mut units: Vec<Complex64> = reals.into_iter().chain(pos).collect();
    units.sort_by(canonical_cmp);
    let mut out = Vec::new();
    for lam in units {
        out.push(lam);
        if lam.im != 0.0 {
            out.push(lam.conj());
        }
    }
    out
}

/// Canonical ordering of eigenvalue "units" (real values or positive-imaginary pair leads).
pub(crate) fn canonical_cmp(a: &Complex64, b: &Complex64) -> Ordering {
    let (ma, mb) = (a.norm(), b.norm());
    if (ma - mb).abs() > ORDER_TOL * ma.max(mb) {
        return mb.total_cmp(&ma);
    }
    b.arg().total_cmp(&a.arg())
}

/// Split canonical eigenvalues into units.
pub(crate) fn units_of(values: &[Complex64]) -> Vec<Unit> {
    let mut units = Vec::new();
    let mut i = 0;
    while i < values.len() {
        if values[i].im == 0.0 {
            units.push(Unit::Real(i));
            i += 1;
        } else {
            units.push(Unit::Pair(i));
            i += 2;
        }
    }
    units
}

/// Eigenvectors for the given canonical eigenvalues of real matrix `a`.
///
/// Each eigenvalue cluster of multiplicity r receives the r right singular vectors
/// of `a - lambda I` with the smallest singular values. Conjugate partners receive
/// the exact conjugate of the lead vector. Columns are unit-norm and phase-normalized.
pub(crate) fn eigenvectors_for(
    a: &DMatrix<f64>,
    values: &[Complex64],
) -> Result<DMatrix<Complex64>> {
    let n = a.nrows();
    let m = values.len();
    let mut vecs = DMatrix::<Complex64>::zeros(n, m);
    let units = units_of(values);
    let mut done = vec![false; m];
    for (ui, unit) in units.iter().enumerate() {
        let lead = match *unit {
            Unit::Real(i) | Unit::Pair(i) => i,
        };
        if done[lead] {
            continue;
        }
        let lam = values[lead];
        let tol = CLUSTER_TOL * lam.norm().max(1.0);
        let cluster: Vec<usize> = units[ui..]
            .iter()
            .map(|u| match *u {
                Unit::Real(i) | Unit::Pair(i) => i,
            })
            .filter(|&i| !done[i] && (values[i] - lam).norm() <= tol)
            .collect();
        let r = cluster.len();
        let basis = null_vectors(a, lam, r);
        for (slot, &col) in cluster.iter().enumerate() {
            let v = normalize_phase(basis.column(slot).into_owned());
            vecs.set_column(col, &v);
            done[col] = true;
            if values[col].im != 0.0 {
                vecs.set_column(col + 1, &v.map(|c| c.conj()));
                done[col + 1] = true;
            }
        }
    }

    let ac = a.map(|x| Complex64::new(x, 0.0));
    let mut residual: f64 = 0.0;
    for j in 0..m {
        let v = vecs.column(j);
        let r = &ac * v - v * values[j];
        residual = residual.max(r.norm());
    }
    let residual = residual / a.norm().max(1.0);
    let condition = complex_condition(&vecs);
    if residual > 1e-8 || condition > 1e12 {
        return Err(Error::NotDiagonalizable {
            condition,
            residual,
        });
    }
    Ok(vecs)
}

/// The `count` right singular vectors of `a - lam I` with smallest singular values.
fn null_vectors(a: &DMatrix<f64>, lam: Complex64, count: usize) -> DMatrix<Complex64> {
    let n = a.nrows();
    if lam.im == 0.0 {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] -= lam.re;
        }
        let (_, v) = right_singular(&shifted);
        // Smallest singular value first.
        return DMatrix::from_fn(n, count, |r, j| Complex64::new(v[(r, n - 1 - j)], 0.0));
    }
    let mut shifted = a.map(|x| Complex64::new(x, 0.0));
    for i in 0..n {
        shifted[(i, i)] -= lam;
    }
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let mut out = DMatrix::zeros(n, count);
    for (col, &i) in order.iter().take(count).enumerate() {
        for r in 0..n {
            out[(r, col)] = vt[(i, r)].conj();
        }
    }
    out
}

/// Unit 2-norm with the first maximal-modulus entry rotated onto the positive real axis.
pub(crate) fn normalize_phase(mut v: DVector<Complex64>) -> DVector<Complex64> {
    let norm = v.norm();
    if norm == 0.0 {
        return v;
    }
    v /= Complex64::new(norm, 0.0);
    let max = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let pivot = v
        .iter()
        .find(|c| c.norm() >= (1.0 - 1e-9) * max)
        .copied()
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = pivot.conj() / pivot.norm();
    v.map(|c| c * phase)
}

/// 2-norm condition number of a complex matrix (columns as basis).
pub(crate) fn complex_condition(a: &DMatrix<Complex64>) -> f64 {
    if a.ncols() == 0 {
        return 1.0;
    }
    let s = a.clone().svd(false, false).singular_values;
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

//! Brute-force oracles for unit tests. These build doubled-space matrices
//! explicitly and are only usable for small dimensions.

use faer::{c64, Mat, MatRef};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::algebra::{kron, Bipartition};
use crate::linalg;

pub fn random_complex<R: Rng>(n: usize, m: usize, rng: &mut R) -> Mat<c64> {
    Mat::from_fn(n, m, |_, _| {
        c64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

pub fn random_hermitian<R: Rng>(n: usize, rng: &mut R) -> Mat<c64> {
    let a = random_complex(n, n, rng);
    Mat::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

pub fn swap_gate(n: usize) -> Mat<c64> {
    Mat::from_fn(n * n, n * n, |i, j| {
        let (a, b) = (j / n, j % n);
        if i == b * n + a { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) }
    })
}

pub fn cnot() -> Mat<c64> {
    let p = [0usize, 1, 3, 2];
    Mat::from_fn(4, 4, |i, j| if p[j] == i { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) })
}

/// Permutation matrix of `S_AA'` on the doubled space with layout `(a, b, a', b')`.
pub fn swap_aa(bip: Bipartition) -> Mat<c64> {
    let (da, db) = (bip.dim_a(), bip.dim_b());
    let d = da * db;
    let idx = |a: usize, b: usize, ap: usize, bp: usize| (a * db + b) * d + ap * db + bp;
    let mut s = Mat::<c64>::zeros(d * d, d * d);
    for a in 0..da {
        for b in 0..db {
            for ap in 0..da {
                for bp in 0..db {
                    s[(idx(ap, b, a, bp), idx(a, b, ap, bp))] = c64::new(1.0, 0.0);
                }
            }
        }
    }
    s
}

/// `Tr[S_AA' X^⊗2 S_AA' X†^⊗2]` with every matrix materialized.
pub fn explicit_swap_sandwich(x: MatRef<'_, c64>, bip: Bipartition) -> f64 {
    let s = swap_aa(bip);
    let xx = kron(x, x);
    let xd = x.adjoint().to_owned();
    let xxd = kron(xd.as_ref(), xd.as_ref());
    let m = linalg::mul(linalg::mul(linalg::mul(s.as_ref(), xx.as_ref()).as_ref(), s.as_ref()).as_ref(), xxd.as_ref());
    linalg::trace(m.as_ref()).re
}

/// Matrix exponential `exp(c H)` of a Hermitian `H` via its eigendecomposition.
pub fn hermitian_exp(h: MatRef<'_, c64>, c: c64) -> Mat<c64> {
    let eig = h.self_adjoint_eigen(faer::Side::Lower).unwrap();
    let s = eig.S().column_vector();
    let f: Vec<c64> = (0..h.nrows()).map(|j| (c * s[j]).exp()).collect();
    linalg::complex_basis_function(eig.U(), &f)
}

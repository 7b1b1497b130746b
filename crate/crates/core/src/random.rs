//! Seeds and random matrices.

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Generator used for every reproducible stream in the crate.
pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic child seed from a master seed and a list of labels.
pub fn child_seed(master: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix64(master), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

/// FNV-1a hash of a tag, used to turn model names into seed labels.
pub fn tag_label(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

pub fn stream(master: u64, labels: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(child_seed(master, labels))
}

/// Standard complex Gaussian with `E|z|² = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> c64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    c64::new(rng.sample::<f64, _>(StandardNormal) * s, rng.sample::<f64, _>(StandardNormal) * s)
}

/// Haar-random unitary from the QR factorization of a Ginibre matrix,
/// with the phases of `R`'s diagonal moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat<c64> {
    let z = Mat::from_fn(n, n, |_, _| complex_gaussian(rng));
    let qr = z.qr();
    let q = qr.compute_Q();
    let r = qr.R();
    let phases: Vec<c64> = (0..n)
        .map(|j| {
            let d = r[(j, j)];
            let m = d.norm();
            if m > 0.0 { d / m } else { c64::new(1.0, 0.0) }
        })
        .collect();
    Mat::from_fn(n, n, |i, j| q[(i, j)] * phases[j])
}

/// GUE matrix `(A + A†)/2` with `E|A_jk|² = 2/d`, so the spectrum fills `[-2, 2]`.
pub fn gue_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Mat<c64> {
    let scale = (2.0 / d as f64).sqrt();
    let a = Mat::from_fn(d, d, |_, _| complex_gaussian(rng) * scale);
    Mat::from_fn(d, d, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    #[test]
    fn child_seeds_differ_and_repeat() {
        let a = child_seed(7, &[tag_label("gue"), 8, 0]);
        let b = child_seed(7, &[tag_label("gue"), 8, 1]);
        let c = child_seed(7, &[tag_label("mbl"), 8, 0]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, child_seed(7, &[tag_label("gue"), 8, 0]));
    }

    #[test]
    fn haar_is_unitary() {
        let mut rng = stream(1, &[]);
        for n in [1, 2, 5, 8] {
            let u = haar_unitary(n, &mut rng);
            let g = linalg::mul(u.adjoint(), u.as_ref());
            let id = Mat::<c64>::identity(n, n);
            assert!(linalg::max_abs_diff(g.as_ref(), id.as_ref()) < 1e-12);
        }
    }

    #[test]
    fn haar_second_moment() {
        // E|U_00|² = 1/n and E|U_00|⁴ = 2/(n(n+1)).
        let mut rng = stream(3, &[]);
        let n = 3;
        let samples = 20000;
        let (mut m2, mut m4) = (0.0, 0.0);
        for _ in 0..samples {
            let u = haar_unitary(n, &mut rng);
            let p = u[(0, 0)].norm_sqr();
            m2 += p;
            m4 += p * p;
        }
        m2 /= samples as f64;
        m4 /= samples as f64;
        assert!((m2 - 1.0 / 3.0).abs() < 0.01, "{m2}");
        assert!((m4 - 2.0 / 12.0).abs() < 0.01, "{m4}");
    }

    #[test]
    fn gue_offdiagonal_variance() {
        let mut rng = stream(5, &[]);
        let d = 40;
        let h = gue_matrix(d, &mut rng);
        let mut acc = 0.0;
        let mut n = 0;
        for i in 0..d {
            for j in 0..i {
                acc += h[(i, j)].norm_sqr();
                n += 1;
            }
            assert_eq!(h[(i, i)].im, 0.0);
        }
        let var = acc / n as f64;
        assert!((var * d as f64 - 1.0).abs() < 0.1, "{}", var * d as f64);
    }
}

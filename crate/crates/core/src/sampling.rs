//! Random channel and error draws.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{ComplexVec, C64};

/// Entries i.i.d. `CN(0, 1/n_t)`, so that `E‖ĥ‖² = 1`.
pub fn sample_channel<R: Rng + ?Sized>(rng: &mut R, n_t: usize) -> ComplexVec {
    assert!(n_t >= 1, "n_t must be positive");
    let s = (0.5 / n_t as f64).sqrt();
    let v = DVector::from_fn(n_t, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(s * re, s * im)
    });
    ComplexVec::from_vector_unchecked(v)
}

/// Uniform draw from the complex ball of radius `epsilon`: a Gaussian
/// direction with radius `ε·V^{1/(2n_t)}`, `V ~ U(0, 1)`.
pub fn sample_error_ball<R: Rng + ?Sized>(rng: &mut R, n_t: usize, epsilon: f64) -> ComplexVec {
    assert!(epsilon >= 0.0, "epsilon must be nonnegative");
    if epsilon == 0.0 {
        return ComplexVec::zeros(n_t);
    }
    loop {
        let dir = sample_channel(rng, n_t);
        let norm = dir.norm();
        if norm <= 1e-300 {
            continue;
        }
        let v: f64 = rng.random();
        let r = epsilon * v.powf(1.0 / (2 * n_t) as f64);
        let e = dir.scale(C64::new(r / norm, 0.0));
        // guard against rounding past the boundary
        let en = e.norm();
        return if en > epsilon { e.scale(C64::new(epsilon / en, 0.0)) } else { e };
    }
}

/// Mixes a master seed with item coordinates into an independent seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

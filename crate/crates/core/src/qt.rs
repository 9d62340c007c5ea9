//! Quadratic transform of sums of ratios `Σ aᴴB⁻¹a` and its use on the
//! SINR expressions.
//!
//! For a fixed auxiliary vector `t`, `2Re(tᴴa) − tᴴBt ≤ aᴴB⁻¹a` with equality
//! at `t = B⁻¹a`.

use nalgebra::{Cholesky, DVector};

use crate::error::{Error, Result};
use crate::model::{
    check_shapes, sinr_parts, BeamformerSet, ChannelSet, ComplexVec, ErrorSet, HermitianMat, C64,
};

/// One ratio `aᴴ B⁻¹ a` with `B ≻ 0`.
#[derive(Debug, Clone)]
pub struct RatioTerm {
    numerator: ComplexVec,
    denominator: HermitianMat,
}

impl RatioTerm {
    pub fn new(numerator: ComplexVec, denominator: HermitianMat) -> Result<Self> {
        if numerator.dim() != denominator.dim() {
            return Err(Error::DimensionMismatch(format!(
                "numerator dim {} vs denominator {}",
                numerator.dim(),
                denominator.dim()
            )));
        }
        let eig = crate::sdp::hermitian_eig(&denominator);
        if !(eig.min_value() > 1e-12 * eig.max_value().abs().max(f64::MIN_POSITIVE)) {
            return Err(Error::NotPositiveDefinite("ratio denominator".into()));
        }
        Ok(RatioTerm {
            numerator,
            denominator,
        })
    }

    pub fn numerator(&self) -> &ComplexVec {
        &self.numerator
    }

    pub fn denominator(&self) -> &HermitianMat {
        &self.denominator
    }

    /// `aᴴ B⁻¹ a`.
    pub fn ratio(&self) -> Result<f64> {
        let t = self.optimal_scalar()?;
        Ok(self.numerator.inner(&t).re)
    }

    fn optimal_scalar(&self) -> Result<ComplexVec> {
        let chol = Cholesky::new(self.denominator.as_matrix().clone())
            .ok_or_else(|| Error::NotPositiveDefinite("ratio denominator".into()))?;
        Ok(ComplexVec::from_vector_unchecked(chol.solve(self.numerator.as_vector())))
    }
}

/// `Σ_m [2Re(t_mᴴ a_m) − t_mᴴ B_m t_m]`.
pub fn qt_value(terms: &[RatioTerm], t: &[ComplexVec]) -> Result<f64> {
    if terms.len() != t.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} terms but {} scalars",
            terms.len(),
            t.len()
        )));
    }
    let mut total = 0.0;
    for (term, tm) in terms.iter().zip(t) {
        if tm.dim() != term.numerator.dim() {
            return Err(Error::DimensionMismatch("scalar dimension".into()));
        }
        total += 2.0 * tm.inner(&term.numerator).re - term.denominator.quad_form(tm);
    }
    Ok(total)
}

/// `t_m = B_m⁻¹ a_m` for every term.
pub fn qt_optimal_scalars(terms: &[RatioTerm]) -> Result<Vec<ComplexVec>> {
    terms.iter().map(RatioTerm::optimal_scalar).collect()
}

/// Auxiliary scalars `t_{u,l}` for every pair `u <= l`, stored row-major
/// over the upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSet {
    users: usize,
    entries: Vec<C64>,
}

impl ScalingSet {
    pub fn zeros(users: usize) -> Self {
        ScalingSet {
            users,
            entries: vec![C64::new(0.0, 0.0); users * (users + 1) / 2],
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn get(&self, u: usize, l: usize) -> C64 {
        self.entries[offset(self.users, u, l)]
    }

    pub fn set(&mut self, u: usize, l: usize, value: C64) {
        let i = offset(self.users, u, l);
        self.entries[i] = value;
    }
}

fn offset(users: usize, u: usize, l: usize) -> usize {
    assert!(u <= l && l < users, "scaling index ({u}, {l}) out of range");
    // rows r < u contribute users - r entries each
    u * users - (u * u.saturating_sub(1)) / 2 + (l - u)
}

/// Optimal auxiliary scalars for the current beams and errors:
/// `t_{u,l} = (h_lᴴ w_u) / D_{u,l}` with `D_{u,l}` the interference-plus-
/// noise power of user `u` at receiver `l`.
pub fn update_t(channels: &ChannelSet, errors: &ErrorSet, beams: &BeamformerSet) -> Result<ScalingSet> {
    check_shapes(channels, errors, beams)?;
    let users = channels.users();
    let mut t = ScalingSet::zeros(users);
    for l in 0..users {
        let e = errors.error(l).as_vector();
        let h: DVector<C64> = channels.estimate(l).as_vector() + e;
        for u in 0..=l {
            let (signal, denom) = sinr_parts(u, &h, e, beams.beams(), channels.sigma2());
            t.set(u, l, signal / denom);
        }
    }
    Ok(t)
}

/// Quadratic-transform surrogate of `SINR_{u,l}` at the given scalars.
pub fn transformed_sinr(
    u: usize,
    l: usize,
    t: &ScalingSet,
    channels: &ChannelSet,
    errors: &ErrorSet,
    beams: &BeamformerSet,
) -> Result<f64> {
    check_shapes(channels, errors, beams)?;
    if u > l || l >= channels.users() || t.users() != channels.users() {
        return Err(Error::IndexOutOfRange(format!("pair ({u}, {l})")));
    }
    let e = errors.error(l).as_vector();
    let h: DVector<C64> = channels.estimate(l).as_vector() + e;
    let (signal, denom) = sinr_parts(u, &h, e, beams.beams(), channels.sigma2());
    let tul = t.get(u, l);
    Ok(2.0 * (tul.conj() * signal).re - tul.norm_sqr() * denom)
}

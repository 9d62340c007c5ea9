//! Domain types and analytic SINR / rate evaluation for the NOMA downlink.
//!
//! User indices are zero-based throughout the crate. After
//! [`ChannelSet::canonicalize_order`] user `0` is the weakest (smallest
//! estimated channel norm) and user `U-1` the strongest. User `u`'s signal
//! must be decoded by every receiver `l >= u`, each of which has already
//! cancelled the signals of users `m < u` up to a residual set by its own
//! CSI error `e_l`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative tolerance for the Hermitian check of [`HermitianMat::new`].
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Slack allowed on `‖e‖ <= ε` in [`ErrorSet::new`].
pub const ERROR_NORM_SLACK: f64 = 1e-9;

/// A finite complex column vector (channel, error or beam).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVec(DVector<C64>);

impl ComplexVec {
    pub fn new(entries: Vec<C64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(entries))
    }

    pub fn from_vector(v: DVector<C64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidInput("complex vector must be non-empty".into()));
        }
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("complex vector has non-finite entries".into()));
        }
        Ok(ComplexVec(v))
    }

    /// Builds from `(re, im)` pairs.
    pub fn from_parts(parts: &[(f64, f64)]) -> Result<Self> {
        Self::new(parts.iter().map(|&(re, im)| C64::new(re, im)).collect())
    }

    /// Real vector with zero imaginary parts.
    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        ComplexVec(DVector::zeros(dim))
    }

    pub(crate) fn from_vector_unchecked(v: DVector<C64>) -> Self {
        ComplexVec(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn entries(&self) -> &[C64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<C64> {
        self.0
    }

    /// Inner product `selfᴴ · other`.
    pub fn inner(&self, other: &ComplexVec) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn scale(&self, s: C64) -> ComplexVec {
        ComplexVec(&self.0 * s)
    }

    pub fn add(&self, other: &ComplexVec) -> ComplexVec {
        ComplexVec(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &ComplexVec) -> ComplexVec {
        ComplexVec(&self.0 - &other.0)
    }
}

/// A Hermitian complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMat(DMatrix<C64>);

impl HermitianMat {
    /// Validates squareness, finiteness and Hermitian symmetry within
    /// [`HERMITIAN_TOL`] relative to the largest entry.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let asym = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if asym > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotHermitian(asym));
        }
        Ok(HermitianMat(symmetrize(m)))
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        HermitianMat(symmetrize(m))
    }

    pub fn zeros(n: usize) -> Self {
        HermitianMat(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        HermitianMat(DMatrix::identity(n, n))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0)));
        HermitianMat(DMatrix::from_diagonal(&d))
    }

    /// Rank-one outer product `v vᴴ`.
    pub fn outer(v: &ComplexVec) -> Self {
        HermitianMat(v.as_vector() * v.as_vector().adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Quadratic form `xᴴ H x` (real for Hermitian `H`).
    pub fn quad_form(&self, x: &ComplexVec) -> f64 {
        x.as_vector().dotc(&(&self.0 * x.as_vector())).re
    }

    /// `tr(self · other)` for two Hermitian matrices.
    pub fn trace_product(&self, other: &HermitianMat) -> f64 {
        // tr(AB) = Σ_ij A_ij B_ji = Σ_ij A_ij conj(B_ij)
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a * b.conj()).re).sum()
    }
}

fn symmetrize(m: DMatrix<C64>) -> DMatrix<C64> {
    let adj = m.adjoint();
    (m + adj) * C64::new(0.5, 0.0)
}

/// Channel estimates `ĥ_l` with the error-ball radius and noise power.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    estimates: Vec<ComplexVec>,
    epsilon: f64,
    sigma2: f64,
}

impl ChannelSet {
    pub fn new(estimates: Vec<ComplexVec>, epsilon: f64, sigma2: f64) -> Result<Self> {
        if estimates.is_empty() {
            return Err(Error::InvalidInput("at least one user is required".into()));
        }
        let n_t = estimates[0].dim();
        if estimates.iter().any(|h| h.dim() != n_t) {
            return Err(Error::DimensionMismatch(
                "all channel estimates must share the antenna count".into(),
            ));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!("epsilon must be >= 0, got {epsilon}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma2 must be > 0, got {sigma2}")));
        }
        Ok(ChannelSet {
            estimates,
            epsilon,
            sigma2,
        })
    }

    pub fn estimates(&self) -> &[ComplexVec] {
        &self.estimates
    }

    pub fn estimate(&self, l: usize) -> &ComplexVec {
        &self.estimates[l]
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn users(&self) -> usize {
        self.estimates.len()
    }

    pub fn n_t(&self) -> usize {
        self.estimates[0].dim()
    }

    /// True when estimated norms are nondecreasing in user index.
    pub fn is_canonical(&self) -> bool {
        self.estimates.windows(2).all(|w| w[0].norm() <= w[1].norm())
    }

    /// Reorders users by nondecreasing estimated channel norm (stable on
    /// ties). The returned permutation maps an original user index to its
    /// NOMA (decoding-order) index.
    pub fn canonicalize_order(&self) -> (ChannelSet, Vec<usize>) {
        let mut order: Vec<usize> = (0..self.users()).collect();
        let norms: Vec<f64> = self.estimates.iter().map(ComplexVec::norm).collect();
        order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]));
        let mut perm = vec![0; order.len()];
        for (noma, &orig) in order.iter().enumerate() {
            perm[orig] = noma;
        }
        let estimates = order.iter().map(|&i| self.estimates[i].clone()).collect();
        (
            ChannelSet {
                estimates,
                epsilon: self.epsilon,
                sigma2: self.sigma2,
            },
            perm,
        )
    }

    /// Replaces the estimates with `ĥ + e`, keeping ε and σ².
    pub fn perturbed(&self, errors: &ErrorSet) -> Result<ChannelSet> {
        check_users(self.users(), errors.users(), "errors")?;
        let estimates = self
            .estimates
            .iter()
            .zip(errors.errors())
            .map(|(h, e)| h.add(e))
            .collect();
        ChannelSet::new(estimates, self.epsilon, self.sigma2)
    }

    /// Same estimates and noise with a different error radius.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<ChannelSet> {
        ChannelSet::new(self.estimates.clone(), epsilon, self.sigma2)
    }
}

/// Per-user transmit beamforming vectors `w_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    beams: Vec<ComplexVec>,
}

impl BeamformerSet {
    pub fn new(beams: Vec<ComplexVec>) -> Result<Self> {
        if beams.is_empty() {
            return Err(Error::InvalidInput("at least one beam is required".into()));
        }
        let n = beams[0].dim();
        if beams.iter().any(|w| w.dim() != n) {
            return Err(Error::DimensionMismatch("beams must share dimension".into()));
        }
        Ok(BeamformerSet { beams })
    }

    pub fn zeros(users: usize, n_t: usize) -> Self {
        BeamformerSet {
            beams: vec![ComplexVec::zeros(n_t); users],
        }
    }

    pub fn beams(&self) -> &[ComplexVec] {
        &self.beams
    }

    pub fn beam(&self, u: usize) -> &ComplexVec {
        &self.beams[u]
    }

    pub fn users(&self) -> usize {
        self.beams.len()
    }

    pub fn dim(&self) -> usize {
        self.beams[0].dim()
    }

    /// Total transmit power `Σ_u ‖w_u‖²`.
    pub fn total_power(&self) -> f64 {
        self.beams.iter().map(ComplexVec::norm_squared).sum()
    }

    pub fn scaled(&self, s: f64) -> BeamformerSet {
        BeamformerSet {
            beams: self.beams.iter().map(|w| w.scale(C64::new(s, 0.0))).collect(),
        }
    }
}

/// Per-receiver CSI error vectors `e_l` with `‖e_l‖ <= ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSet {
    errors: Vec<ComplexVec>,
}

impl ErrorSet {
    pub fn new(errors: Vec<ComplexVec>, epsilon: f64) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::InvalidInput("at least one error vector is required".into()));
        }
        let n = errors[0].dim();
        if errors.iter().any(|e| e.dim() != n) {
            return Err(Error::DimensionMismatch("error vectors must share dimension".into()));
        }
        if let Some(e) = errors.iter().find(|e| e.norm() > epsilon + ERROR_NORM_SLACK) {
            return Err(Error::InvalidInput(format!(
                "error norm {} exceeds epsilon {}",
                e.norm(),
                epsilon
            )));
        }
        Ok(ErrorSet { errors })
    }

    pub fn zeros(users: usize, n_t: usize) -> Self {
        ErrorSet {
            errors: vec![ComplexVec::zeros(n_t); users],
        }
    }

    pub fn errors(&self) -> &[ComplexVec] {
        &self.errors
    }

    pub fn error(&self, l: usize) -> &ComplexVec {
        &self.errors[l]
    }

    pub fn users(&self) -> usize {
        self.errors.len()
    }

    pub fn dim(&self) -> usize {
        self.errors[0].dim()
    }

    pub fn max_norm(&self) -> f64 {
        self.errors.iter().map(ComplexVec::norm).fold(0.0, f64::max)
    }
}

/// Target SINRs `Γ_u`, linear and in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct QosTargets {
    gamma: Vec<f64>,
    gamma_db: Vec<f64>,
}

impl QosTargets {
    pub fn from_db(gamma_db: Vec<f64>) -> Result<Self> {
        if gamma_db.is_empty() || gamma_db.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidInput("targets must be finite and non-empty".into()));
        }
        let gamma = gamma_db.iter().map(|&db| db_to_linear(db)).collect();
        Ok(QosTargets { gamma, gamma_db })
    }

    pub fn from_linear(gamma: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() || gamma.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidInput("linear targets must be positive".into()));
        }
        let gamma_db = gamma.iter().map(|&g| linear_to_db(g)).collect();
        Ok(QosTargets { gamma, gamma_db })
    }

    /// The same target for every user.
    pub fn uniform_db(db: f64, users: usize) -> Result<Self> {
        Self::from_db(vec![db; users])
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn gamma_db(&self) -> &[f64] {
        &self.gamma_db
    }

    pub fn users(&self) -> usize {
        self.gamma.len()
    }

    /// Multiplies every linear target by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_linear(self.gamma.iter().map(|g| g * factor).collect())
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub(crate) fn check_users(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch(format!(
            "{what}: expected {expected} users, got {got}"
        )));
    }
    Ok(())
}

pub(crate) fn check_shapes(
    channels: &ChannelSet,
    errors: &ErrorSet,
    beams: &BeamformerSet,
) -> Result<()> {
    check_users(channels.users(), errors.users(), "errors")?;
    check_users(channels.users(), beams.users(), "beams")?;
    if errors.dim() != channels.n_t() || beams.dim() != channels.n_t() {
        return Err(Error::DimensionMismatch(format!(
            "antenna count {} does not match errors ({}) or beams ({})",
            channels.n_t(),
            errors.dim(),
            beams.dim()
        )));
    }
    Ok(())
}

fn check_pair(u: usize, l: usize, users: usize) -> Result<()> {
    if u >= users || l >= users || l < u {
        return Err(Error::IndexOutOfRange(format!(
            "need u <= l < {users}, got u={u}, l={l}"
        )));
    }
    Ok(())
}

/// Signal amplitude `h_lᴴ w_u` and interference-plus-noise power at
/// receiver `l` for user `u`, where `h_l = ĥ_l + e_l`.
pub(crate) fn sinr_parts(
    u: usize,
    h: &DVector<C64>,
    e: &DVector<C64>,
    beams: &[ComplexVec],
    sigma2: f64,
) -> (C64, f64) {
    let signal = h.dotc(beams[u].as_vector());
    let residual: f64 = beams[..u].iter().map(|w| e.dotc(w.as_vector()).norm_sqr()).sum();
    let inter: f64 = beams[u + 1..].iter().map(|w| h.dotc(w.as_vector()).norm_sqr()).sum();
    (signal, residual + inter + sigma2)
}

/// SINR of user `u`'s signal at receiver `l` (`u <= l`).
pub fn compute_sinr(
    u: usize,
    l: usize,
    channels: &ChannelSet,
    errors: &ErrorSet,
    beams: &BeamformerSet,
) -> Result<f64> {
    check_shapes(channels, errors, beams)?;
    check_pair(u, l, channels.users())?;
    let e = errors.error(l).as_vector();
    let h = channels.estimate(l).as_vector() + e;
    let (signal, denom) = sinr_parts(u, &h, e, beams.beams(), channels.sigma2());
    Ok(signal.norm_sqr() / denom)
}

/// Minimum SINR of user `u` over every receiver that must decode it.
pub fn effective_sinr(
    u: usize,
    channels: &ChannelSet,
    errors: &ErrorSet,
    beams: &BeamformerSet,
) -> Result<f64> {
    check_shapes(channels, errors, beams)?;
    check_pair(u, u, channels.users())?;
    let mut best = f64::INFINITY;
    for l in u..channels.users() {
        best = best.min(compute_sinr(u, l, channels, errors, beams)?);
    }
    Ok(best)
}

/// Achievable rate of user `u` in bit/s/Hz.
pub fn achievable_rate(
    u: usize,
    channels: &ChannelSet,
    errors: &ErrorSet,
    beams: &BeamformerSet,
) -> Result<f64> {
    Ok((1.0 + effective_sinr(u, channels, errors, beams)?).log2())
}

/// Effective SINR of every user.
pub fn effective_sinrs(
    channels: &ChannelSet,
    errors: &ErrorSet,
    beams: &BeamformerSet,
) -> Result<Vec<f64>> {
    (0..channels.users())
        .map(|u| effective_sinr(u, channels, errors, beams))
        .collect()
}

/// `effective_sinr(u) - Γ_u` for every user; nonnegative means the QoS
/// target is met.
pub fn qos_margins(
    beams: &BeamformerSet,
    channels: &ChannelSet,
    errors: &ErrorSet,
    targets: &QosTargets,
) -> Result<Vec<f64>> {
    check_users(channels.users(), targets.users(), "targets")?;
    Ok(effective_sinrs(channels, errors, beams)?
        .into_iter()
        .zip(targets.gamma())
        .map(|(s, g)| s - g)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> ComplexVec {
        ComplexVec::new(
            (0..n)
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale)
                .collect(),
        )
        .unwrap()
    }

    fn random_instance(
        rng: &mut ChaCha8Rng,
        n: usize,
        users: usize,
        eps: f64,
    ) -> (ChannelSet, ErrorSet, BeamformerSet) {
        let h = (0..users).map(|_| random_vec(rng, n, 1.0)).collect();
        let ch = ChannelSet::new(h, eps, rng.random_range(0.01..1.0)).unwrap();
        let e = (0..users)
            .map(|_| {
                let v = random_vec(rng, n, 1.0);
                let norm = v.norm();
                v.scale(c(eps * rng.random_range(0.0..1.0) / norm, 0.0))
            })
            .collect();
        let errors = ErrorSet::new(e, eps).unwrap();
        let w = (0..users).map(|_| random_vec(rng, n, 1.0)).collect();
        (ch, errors, BeamformerSet::new(w).unwrap())
    }

    #[test]
    fn ordering_examples() {
        let mk = |norms: &[f64]| {
            let h = norms.iter().map(|&r| ComplexVec::from_real(&[r]).unwrap()).collect();
            ChannelSet::new(h, 0.0, 1.0).unwrap()
        };
        assert_eq!(mk(&[0.5, 1.0, 2.0]).canonicalize_order().1, vec![0, 1, 2]);
        let (sorted, perm) = mk(&[2.0, 1.0]).canonicalize_order();
        assert_eq!(perm, vec![1, 0]);
        assert!(sorted.is_canonical());
        assert_eq!(mk(&[1.0, 1.0]).canonicalize_order().1, vec![0, 1]);
    }

    #[test]
    fn ordering_ties_are_stable() {
        let h = vec![
            ComplexVec::from_real(&[1.0, 0.0]).unwrap(),
            ComplexVec::from_real(&[0.0, 1.0]).unwrap(),
            ComplexVec::from_real(&[0.5, 0.0]).unwrap(),
        ];
        let ch = ChannelSet::new(h, 0.0, 1.0).unwrap();
        let (sorted, perm) = ch.canonicalize_order();
        assert_eq!(perm, vec![1, 2, 0]);
        assert_eq!(sorted.estimate(1), ch.estimate(0));
        assert_eq!(sorted.estimate(2), ch.estimate(1));
    }

    #[test]
    fn single_user_unit_sinr() {
        let ch = ChannelSet::new(vec![ComplexVec::from_real(&[1.0]).unwrap()], 0.0, 1.0).unwrap();
        let e = ErrorSet::zeros(1, 1);
        let w = BeamformerSet::new(vec![ComplexVec::from_real(&[1.0]).unwrap()]).unwrap();
        assert_eq!(compute_sinr(0, 0, &ch, &e, &w).unwrap(), 1.0);
        assert_eq!(effective_sinr(0, &ch, &e, &w).unwrap(), 1.0);
        assert_eq!(achievable_rate(0, &ch, &e, &w).unwrap(), 1.0);
    }

    #[test]
    fn zero_beam_has_zero_sinr_and_negative_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (ch, e, _) = random_instance(&mut rng, 3, 3, 0.1);
        let w = BeamformerSet::zeros(3, 3);
        assert_eq!(compute_sinr(1, 2, &ch, &e, &w).unwrap(), 0.0);
        let targets = QosTargets::from_db(vec![0.0, 3.0, 10.0]).unwrap();
        let m = qos_margins(&w, &ch, &e, &targets).unwrap();
        for (mu, g) in m.iter().zip(targets.gamma()) {
            assert!((mu + g).abs() < 1e-15);
        }
    }

    #[test]
    fn rate_values() {
        // SINR 3 on a single user: |h w|^2 = 3, σ² = 1.
        let ch = ChannelSet::new(vec![ComplexVec::from_real(&[1.0]).unwrap()], 0.0, 1.0).unwrap();
        let w = BeamformerSet::new(vec![ComplexVec::from_real(&[3f64.sqrt()]).unwrap()]).unwrap();
        let r = achievable_rate(0, &ch, &ErrorSet::zeros(1, 1), &w).unwrap();
        assert!((r - 2.0).abs() < 1e-14);
        let zero = BeamformerSet::zeros(1, 1);
        assert_eq!(achievable_rate(0, &ch, &ErrorSet::zeros(1, 1), &zero).unwrap(), 0.0);
    }

    #[test]
    fn margin_zero_at_exact_target() {
        let ch = ChannelSet::new(vec![ComplexVec::from_real(&[1.0]).unwrap()], 0.0, 0.5).unwrap();
        let w = BeamformerSet::new(vec![ComplexVec::from_real(&[1.0]).unwrap()]).unwrap();
        let t = QosTargets::from_linear(vec![2.0]).unwrap();
        let m = qos_margins(&w, &ch, &ErrorSet::zeros(1, 1), &t).unwrap();
        assert!(m[0].abs() < 1e-15);
    }

    /// Explicit-loop evaluation of the SINR expression.
    fn sinr_by_loops(
        u: usize,
        l: usize,
        ch: &ChannelSet,
        e: &ErrorSet,
        w: &BeamformerSet,
    ) -> f64 {
        let n = ch.n_t();
        let hl: Vec<C64> = (0..n)
            .map(|i| ch.estimate(l).entries()[i] + e.error(l).entries()[i])
            .collect();
        let inner = |a: &[C64], b: &[C64]| -> C64 {
            let mut s = c(0.0, 0.0);
            for i in 0..n {
                s += a[i].conj() * b[i];
            }
            s
        };
        let num = inner(&hl, w.beam(u).entries()).norm_sqr();
        let mut den = ch.sigma2();
        for m in 0..u {
            den += inner(e.error(l).entries(), w.beam(m).entries()).norm_sqr();
        }
        for k in u + 1..ch.users() {
            den += inner(&hl, w.beam(k).entries()).norm_sqr();
        }
        num / den
    }

    #[test]
    fn sinr_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let (ch, e, w) = random_instance(&mut rng, 2, 2, 0.2);
            for u in 0..2 {
                for l in u..2 {
                    let a = compute_sinr(u, l, &ch, &e, &w).unwrap();
                    let b = sinr_by_loops(u, l, &ch, &e, &w);
                    assert!((a - b).abs() <= 1e-12 * b.max(1.0));
                }
            }
        }
    }

    #[test]
    fn effective_sinr_is_min_over_decoders() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let (ch, e, w) = random_instance(&mut rng, 3, 3, 0.1);
            for u in 0..3 {
                let brute = (u..3)
                    .map(|l| sinr_by_loops(u, l, &ch, &e, &w))
                    .fold(f64::INFINITY, f64::min);
                let eff = effective_sinr(u, &ch, &e, &w).unwrap();
                assert!((eff - brute).abs() <= 1e-12 * brute.max(1.0));
            }
        }
    }

    #[test]
    fn equal_decoders_give_common_value() {
        // Two identical receivers with no error: SINR of user 0 is the same at both.
        let h = ComplexVec::from_real(&[1.0, 0.5]).unwrap();
        let ch = ChannelSet::new(vec![h.clone(), h], 0.0, 0.1).unwrap();
        let w = BeamformerSet::new(vec![
            ComplexVec::from_real(&[1.0, 0.0]).unwrap(),
            ComplexVec::from_real(&[0.0, 0.3]).unwrap(),
        ])
        .unwrap();
        let e = ErrorSet::zeros(2, 2);
        let s00 = compute_sinr(0, 0, &ch, &e, &w).unwrap();
        assert_eq!(effective_sinr(0, &ch, &e, &w).unwrap(), s00);
        assert_eq!(compute_sinr(0, 1, &ch, &e, &w).unwrap(), s00);
    }

    #[test]
    fn index_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (ch, e, w) = random_instance(&mut rng, 2, 2, 0.1);
        assert!(matches!(compute_sinr(1, 0, &ch, &e, &w), Err(Error::IndexOutOfRange(_))));
        assert!(matches!(compute_sinr(0, 2, &ch, &e, &w), Err(Error::IndexOutOfRange(_))));
        let w3 = BeamformerSet::zeros(3, 2);
        assert!(matches!(compute_sinr(0, 0, &ch, &e, &w3), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ChannelSet::new(vec![], 0.0, 1.0).is_err());
        let h = ComplexVec::from_real(&[1.0]).unwrap();
        assert!(ChannelSet::new(vec![h.clone()], -1.0, 1.0).is_err());
        assert!(ChannelSet::new(vec![h.clone()], 0.0, 0.0).is_err());
        assert!(ErrorSet::new(vec![ComplexVec::from_real(&[0.2]).unwrap()], 0.1).is_err());
        assert!(ComplexVec::new(vec![c(f64::NAN, 0.0)]).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, 1.0), c(1.0, 0.0)]);
        assert!(matches!(HermitianMat::new(m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn db_conversion() {
        let t = QosTargets::from_db(vec![0.0, 10.0, 3.0]).unwrap();
        assert_eq!(t.gamma()[0], 1.0);
        assert!((t.gamma()[1] - 10.0).abs() < 1e-12);
        assert!((t.gamma()[2] - 10f64.powf(0.3)).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn global_phase_invariance(seed in any::<u64>(), theta in 0.0..std::f64::consts::TAU, which in 0usize..3) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (ch, e, w) = random_instance(&mut rng, 3, 3, 0.1);
                let mut beams = w.beams().to_vec();
                beams[which] = beams[which].scale(C64::from_polar(1.0, theta));
                let rotated = BeamformerSet::new(beams).unwrap();
                for u in 0..3 {
                    for l in u..3 {
                        let a = compute_sinr(u, l, &ch, &e, &w).unwrap();
                        let b = compute_sinr(u, l, &ch, &e, &rotated).unwrap();
                        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300));
                    }
                }
            }

            #[test]
            fn single_user_scaling(seed in any::<u64>(), s in 0.1f64..10.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (ch, _, w) = random_instance(&mut rng, 3, 1, 0.0);
                let e = ErrorSet::zeros(1, 3);
                let a = compute_sinr(0, 0, &ch, &e, &w).unwrap();
                let b = compute_sinr(0, 0, &ch, &e, &w.scaled(s.sqrt())).unwrap();
                prop_assert!((b - s * a).abs() <= 1e-10 * b);
            }

            #[test]
            fn noise_monotonicity(seed in any::<u64>(), bump in 1e-3f64..1.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (ch, e, w) = random_instance(&mut rng, 2, 3, 0.1);
                let louder = ChannelSet::new(ch.estimates().to_vec(), ch.epsilon(), ch.sigma2() + bump).unwrap();
                for u in 0..3 {
                    for l in u..3 {
                        let a = compute_sinr(u, l, &ch, &e, &w).unwrap();
                        let b = compute_sinr(u, l, &louder, &e, &w).unwrap();
                        if a > 0.0 {
                            prop_assert!(b < a);
                        }
                    }
                }
            }

            #[test]
            fn effective_is_lower_bound(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (ch, e, w) = random_instance(&mut rng, 3, 4, 0.1);
                for u in 0..4 {
                    let eff = effective_sinr(u, &ch, &e, &w).unwrap();
                    for l in u..4 {
                        prop_assert!(eff <= compute_sinr(u, l, &ch, &e, &w).unwrap());
                    }
                }
            }
        }
    }
}

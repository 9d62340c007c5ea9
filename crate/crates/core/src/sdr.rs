//! Semidefinite relaxation of the QoS-constrained power minimisation.
//!
//! With `W_u = w_u w_uᴴ` relaxed to `W_u ⪰ 0`, user `u` must reach its
//! target at every receiver `ℓ >= u` that decodes it:
//!
//! ```text
//! tr(H_ℓW_u) − Γ_u[Σ_{m<u} tr(E_ℓW_m) + Σ_{k>u} tr(H_ℓW_k)] >= Γ_u σ²
//! ```
//!
//! with `H_ℓ = h_ℓh_ℓᴴ`, `E_ℓ = e_ℓe_ℓᴴ` and `h_ℓ = ĥ_ℓ + e_ℓ`.
//!
//! Each Hermitian `W_u` is stored as `N_t²` reals: the diagonal, then
//! `(Re, Im)` of the strict upper triangle in row-major order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{check_users, BeamformerSet, ChannelSet, ComplexVec, ErrorSet, HermitianMat, QosTargets, C64};
use crate::sdp::{embed_hermitian, hermitian_eig, solve_sdp, SdpOptions, SdpProblem, SolveStatus};

pub const RANK_ONE_THRESHOLD: f64 = 1e-4;
pub const RANDOMIZATION_TRIALS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdrOptions {
    pub sdp: SdpOptions,
    pub rank_one_threshold: f64,
    pub randomization_trials: usize,
    pub seed: u64,
}

impl Default for SdrOptions {
    fn default() -> Self {
        SdrOptions {
            sdp: SdpOptions::default(),
            rank_one_threshold: RANK_ONE_THRESHOLD,
            randomization_trials: RANDOMIZATION_TRIALS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdrResult {
    pub w: Vec<HermitianMat>,
    pub beams: BeamformerSet,
    /// `Σ tr(W_u)`, the relaxation value.
    pub total_power: f64,
    pub rank_one: Vec<bool>,
    pub used_randomization: bool,
    pub status: SolveStatus,
}

impl SdrResult {
    pub fn rank_one_all(&self) -> bool {
        self.rank_one.iter().all(|&r| r)
    }
}

/// Number of real variables per `N_t × N_t` Hermitian block.
pub fn vars_per_block(n: usize) -> usize {
    n * n
}

/// Real coordinates of a Hermitian matrix in the layout described above.
pub fn pack_hermitian(w: &HermitianMat) -> Vec<f64> {
    let m = w.as_matrix();
    let n = m.nrows();
    let mut out: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    for i in 0..n {
        for j in i + 1..n {
            out.push(m[(i, j)].re);
            out.push(m[(i, j)].im);
        }
    }
    out
}

pub fn unpack_hermitian(x: &[f64], n: usize) -> HermitianMat {
    assert_eq!(x.len(), vars_per_block(n));
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = C64::new(x[i], 0.0);
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let z = C64::new(x[k], x[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    HermitianMat::from_matrix_unchecked(m)
}

/// Coefficients of `tr(MW)` in the packed coordinates of `W`.
fn trace_coeffs(m: &DMatrix<C64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    for i in 0..n {
        for j in i + 1..n {
            out.push(2.0 * m[(i, j)].re);
            out.push(2.0 * m[(i, j)].im);
        }
    }
    out
}

/// Embedded basis matrices: `W = Σ_k x_k B_k`.
fn basis(n: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(vars_per_block(n));
    let unit = |i: usize, j: usize, z: C64| {
        let mut m = DMatrix::<C64>::zeros(n, n);
        m[(i, j)] = z;
        m[(j, i)] = z.conj();
        embed_hermitian(&HermitianMat::from_matrix_unchecked(m))
    };
    for i in 0..n {
        out.push(unit(i, i, C64::new(1.0, 0.0)));
    }
    for i in 0..n {
        for j in i + 1..n {
            out.push(unit(i, j, C64::new(1.0, 0.0)));
            out.push(unit(i, j, C64::new(0.0, 1.0)));
        }
    }
    out
}

fn check_inputs(ch: &ChannelSet, errors: &ErrorSet, targets: &QosTargets) -> Result<()> {
    check_users(ch.users(), errors.users(), "errors")?;
    check_users(ch.users(), targets.users(), "targets")?;
    if errors.dim() != ch.n_t() {
        return Err(Error::DimensionMismatch(format!(
            "errors have dimension {}, channels {}",
            errors.dim(),
            ch.n_t()
        )));
    }
    Ok(())
}

/// Per-receiver matrices `(H_ℓ, E_ℓ)`.
fn receiver_matrices(ch: &ChannelSet, errors: &ErrorSet) -> Vec<(DMatrix<C64>, DMatrix<C64>)> {
    (0..ch.users())
        .map(|l| {
            let e = errors.error(l).as_vector();
            let h = ch.estimate(l).as_vector() + e;
            (&h * h.adjoint(), e * e.adjoint())
        })
        .collect()
}

/// The relaxed problem. Rows are added in order `(u, ℓ)` for `u` ascending
/// and `ℓ = u..U`, after the `U` PSD blocks.
pub fn assemble_sdr(ch: &ChannelSet, errors: &ErrorSet, targets: &QosTargets) -> Result<SdpProblem> {
    assemble_scaled(ch, errors, targets, 1.0)
}

/// Power scale `Σ_u Γ_u σ²/‖ĥ_u‖²`, the sum of interference-free powers.
fn power_scale(ch: &ChannelSet, targets: &QosTargets) -> f64 {
    let s: f64 = ch
        .estimates()
        .iter()
        .zip(targets.gamma())
        .map(|(h, g)| g * ch.sigma2() / h.norm_squared().max(f64::MIN_POSITIVE))
        .sum();
    if s.is_finite() && s > 0.0 { s } else { 1.0 }
}

/// Same problem in the variable `W/scale`.
fn assemble_scaled(ch: &ChannelSet, errors: &ErrorSet, targets: &QosTargets, scale: f64) -> Result<SdpProblem> {
    check_inputs(ch, errors, targets)?;
    let users = ch.users();
    let n = ch.n_t();
    let nv = vars_per_block(n);
    let mut objective = vec![0.0; users * nv];
    for u in 0..users {
        for i in 0..n {
            objective[u * nv + i] = 1.0;
        }
    }
    let mut p = SdpProblem::new(objective)?;
    let basis = basis(n);
    for u in 0..users {
        let terms = basis.iter().enumerate().map(|(k, b)| (u * nv + k, b.clone())).collect();
        p.add_block(DMatrix::zeros(2 * n, 2 * n), terms)?;
    }
    let mats = receiver_matrices(ch, errors);
    for u in 0..users {
        let g = targets.gamma()[u];
        for (h, e) in &mats[u..] {
            let th = trace_coeffs(h);
            let te = trace_coeffs(e);
            let mut coeffs = Vec::with_capacity(users * nv);
            for m in 0..users {
                let (src, f) = match m.cmp(&u) {
                    std::cmp::Ordering::Less => (&te, -g),
                    std::cmp::Ordering::Equal => (&th, 1.0),
                    std::cmp::Ordering::Greater => (&th, -g),
                };
                coeffs.extend(src.iter().enumerate().map(|(k, &a)| (m * nv + k, f * a)));
            }
            p.add_scalar_row(-g * ch.sigma2() / scale, &coeffs)?;
        }
    }
    Ok(p)
}

/// Rotates `w` so its largest-magnitude entry is real and nonnegative.
pub fn canonical_phase(w: &ComplexVec) -> ComplexVec {
    let mut best = 0;
    for (i, z) in w.entries().iter().enumerate() {
        if z.norm() > w.entries()[best].norm() {
            best = i;
        }
    }
    let z = w.entries().get(best).copied().unwrap_or_default();
    if z.norm() == 0.0 {
        return w.clone();
    }
    w.scale(z.conj() / z.norm())
}

/// Principal component `√λ₁·v₁` (phase canonical) and whether `W` is
/// numerically rank one.
pub fn extract_rank_one(w: &HermitianMat, ratio_threshold: f64) -> (ComplexVec, bool) {
    let eig = hermitian_eig(w);
    let n = eig.values.len();
    let l1 = eig.values[n - 1];
    let l2 = if n > 1 { eig.values[n - 2].max(0.0) } else { 0.0 };
    let beam = eig.vectors[n - 1].scale(C64::new(l1.max(0.0).sqrt(), 0.0));
    let rank_one = l1 <= 1e-12 || l2 / l1 <= ratio_threshold;
    (canonical_phase(&beam), rank_one)
}

/// QoS row values `q_r` at unit scaling, in the order of [`assemble_sdr`],
/// excluding the noise term: beams scaled by `s` give `s²q_r − Γσ²`.
fn row_margins(beams: &[ComplexVec], ch: &ChannelSet, errors: &ErrorSet, targets: &QosTargets) -> Vec<f64> {
    let users = ch.users();
    let mut out = Vec::with_capacity(users * (users + 1) / 2);
    for u in 0..users {
        for l in u..users {
            let e = errors.error(l);
            let h = ch.estimate(l).add(e);
            let mut interference = 0.0;
            for (m, w) in beams.iter().enumerate() {
                if m < u {
                    interference += e.inner(w).norm_sqr();
                } else if m > u {
                    interference += h.inner(w).norm_sqr();
                }
            }
            out.push(h.inner(&beams[u]).norm_sqr() - targets.gamma()[u] * interference);
        }
    }
    out
}

/// Gaussian randomisation with common power rescaling. Returns the
/// least-power feasible candidate, or the principal-component beams and
/// `false` when no trial can be made feasible.
pub fn randomize<R: Rng + ?Sized>(
    w: &[HermitianMat],
    ch: &ChannelSet,
    errors: &ErrorSet,
    targets: &QosTargets,
    n_trials: usize,
    rng: &mut R,
) -> Result<(BeamformerSet, bool)> {
    check_inputs(ch, errors, targets)?;
    check_users(ch.users(), w.len(), "W set")?;
    let extracted: Vec<(ComplexVec, bool)> =
        w.iter().map(|wu| extract_rank_one(wu, RANK_ONE_THRESHOLD)).collect();
    let principal = BeamformerSet::new(extracted.iter().map(|(b, _)| b.clone()).collect())?;
    if extracted.iter().all(|(_, r)| *r) {
        return Ok((principal, true));
    }
    let n = ch.n_t();
    let roots: Vec<DMatrix<C64>> = w
        .iter()
        .map(|wu| {
            let eig = hermitian_eig(wu);
            let mut r = DMatrix::<C64>::zeros(n, n);
            for (lam, v) in eig.values.iter().zip(&eig.vectors) {
                r += v.as_vector() * v.as_vector().adjoint() * C64::new(lam.max(0.0).sqrt(), 0.0);
            }
            r
        })
        .collect();
    let noise: Vec<f64> = (0..ch.users())
        .flat_map(|u| (u..ch.users()).map(move |_| u))
        .map(|u| targets.gamma()[u] * ch.sigma2())
        .collect();

    let mut best: Option<(f64, Vec<ComplexVec>)> = None;
    for _ in 0..n_trials {
        let cand: Vec<ComplexVec> = roots
            .iter()
            .map(|r| {
                let zeta = DVector::from_fn(n, |_, _| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                });
                ComplexVec::from_vector_unchecked(r * zeta)
            })
            .collect();
        let q = row_margins(&cand, ch, errors, targets);
        if q.iter().any(|&v| !(v > 0.0)) {
            continue;
        }
        let s2 = q.iter().zip(&noise).map(|(qi, ni)| ni / qi).fold(0.0, f64::max);
        let power = s2 * cand.iter().map(|c| c.norm_squared()).sum::<f64>();
        if best.as_ref().is_none_or(|(p, _)| power < *p) {
            let s = C64::new(s2.sqrt(), 0.0);
            best = Some((power, cand.iter().map(|c| canonical_phase(&c.scale(s))).collect()));
        }
    }
    match best {
        Some((_, beams)) => Ok((BeamformerSet::new(beams)?, true)),
        None => Ok((principal, false)),
    }
}

/// Solves the relaxation and extracts beams, randomising when some `W_u`
/// is not rank one. Non-optimal solver outcomes are returned as
/// [`Error::Solver`] carrying the status.
pub fn solve_power_min(
    ch: &ChannelSet,
    errors: &ErrorSet,
    targets: &QosTargets,
    opts: &SdrOptions,
) -> Result<SdrResult> {
    // keep the objective near unity so the relative gap is meaningful
    let scale = power_scale(ch, targets);
    let problem = assemble_scaled(ch, errors, targets, scale)?;
    let sol = solve_sdp(&problem, &opts.sdp);
    if !sol.status.is_optimal() {
        return Err(Error::solver(sol.status, "power minimisation relaxation"));
    }
    let n = ch.n_t();
    let nv = vars_per_block(n);
    let w: Vec<HermitianMat> = (0..ch.users())
        .map(|u| {
            let x: Vec<f64> = sol.y.as_slice()[u * nv..(u + 1) * nv].iter().map(|v| v * scale).collect();
            unpack_hermitian(&x, n)
        })
        .collect();
    let total_power = w.iter().map(|wu| wu.trace()).sum();
    let extracted: Vec<(ComplexVec, bool)> =
        w.iter().map(|wu| extract_rank_one(wu, opts.rank_one_threshold)).collect();
    let rank_one: Vec<bool> = extracted.iter().map(|(_, r)| *r).collect();
    let mut beams = BeamformerSet::new(extracted.into_iter().map(|(b, _)| b).collect())?;
    let mut used_randomization = false;
    if !rank_one.iter().all(|&r| r) && opts.randomization_trials > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let (rand_beams, ok) = randomize(&w, ch, errors, targets, opts.randomization_trials, &mut rng)?;
        if ok {
            beams = rand_beams;
            used_randomization = true;
        }
    }
    Ok(SdrResult {
        w,
        beams,
        total_power,
        rank_one,
        used_randomization,
        status: sol.status,
    })
}

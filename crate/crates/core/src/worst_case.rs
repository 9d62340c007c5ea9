//! Worst-case CSI error in the sum-SINR sense.
//!
//! For receiver `l` the quadratic-transform surrogate of `Σ_{j<=l} SINR_{j,l}`
//! is, as a function of the error `e = e_l`,
//!
//! ```text
//! f(e) = −eᴴAe + 2Re(eᴴb) + c,   ‖e‖ <= ε
//! ```
//!
//! Minimising this concave quadratic over the ball is a trust-region
//! problem with zero duality gap. Its dual
//! `max β s.t. [[λI − A, b], [bᴴ, c − λε² − β]] ⪰ 0, λ >= 0` is solved as an
//! SDP and the minimiser is recovered from the optimal multiplier.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{check_users, BeamformerSet, ChannelSet, ComplexVec, HermitianMat, C64};
use crate::qt::ScalingSet;
use crate::sdp::{
    embed_hermitian, hermitian_eig, solve_sdp, HermitianEig, SdpOptions, SdpProblem, SolveStatus,
};

/// Relative threshold under which an eigenvalue of `λI − A` counts as zero.
pub const SINGULAR_REL_TOL: f64 = 1e-8;
/// Relative tolerance of the range-membership test in [`dual_value`].
pub const RANGE_REL_TOL: f64 = 1e-8;
/// Largest overshoot of `‖e‖` past ε that is clipped back silently.
pub const CLIP_TOL: f64 = 1e-6;

/// `f(e) = −eᴴAe + 2Re(eᴴb) + c` with `A ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerQuadratic {
    a: HermitianMat,
    b: ComplexVec,
    c: f64,
}

impl InnerQuadratic {
    pub fn new(a: HermitianMat, b: ComplexVec, c: f64) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch("A and b dimensions differ".into()));
        }
        if !c.is_finite() {
            return Err(Error::InvalidInput("c must be finite".into()));
        }
        let eig = hermitian_eig(&a);
        let scale = eig.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if eig.min_value() < -1e-9 * scale {
            return Err(Error::NotPositiveDefinite(format!(
                "A has eigenvalue {:e}",
                eig.min_value()
            )));
        }
        Ok(InnerQuadratic { a, b, c })
    }

    pub fn a(&self) -> &HermitianMat {
        &self.a
    }

    pub fn b(&self) -> &ComplexVec {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.b.dim()
    }

    pub fn objective(&self, e: &ComplexVec) -> f64 {
        -self.a.quad_form(e) + 2.0 * e.inner(&self.b).re + self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSolution {
    pub lambda: f64,
    pub beta: f64,
    pub status: SolveStatus,
}

/// Coefficients of the sum-SINR surrogate at receiver `l` in terms of its
/// CSI error, given the scalars `t` and the channel estimate `ĥ_l`.
pub fn assemble_quadratic(
    l: usize,
    t: &ScalingSet,
    beams: &BeamformerSet,
    channels: &ChannelSet,
) -> Result<InnerQuadratic> {
    let users = channels.users();
    check_users(users, beams.users(), "beams")?;
    check_users(users, t.users(), "scalars")?;
    if l >= users {
        return Err(Error::IndexOutOfRange(format!("receiver {l} of {users}")));
    }
    let n = channels.n_t();
    let h = channels.estimate(l).as_vector();
    let w: Vec<_> = beams.beams().iter().map(|w| w.as_vector()).collect();
    let outer: Vec<DMatrix<C64>> = w.iter().map(|wi| *wi * wi.adjoint()).collect();
    let proj: Vec<C64> = w.iter().map(|wi| h.dotc(wi)).collect();

    let mut a = DMatrix::<C64>::zeros(n, n);
    let mut b = nalgebra::DVector::<C64>::zeros(n);
    let mut c = 0.0;
    for j in 0..=l {
        let tj = t.get(j, l);
        let tj2 = tj.norm_sqr();
        for (i, o) in outer.iter().enumerate() {
            if i != j {
                a += o * C64::new(tj2, 0.0);
            }
        }
        b += w[j] * tj.conj();
        let mut later_power = 0.0;
        for k in j + 1..users {
            // w_k w_kᴴ ĥ
            b -= w[k] * (proj[k].conj() * tj2);
            later_power += proj[k].norm_sqr();
        }
        c += 2.0 * (tj.conj() * proj[j]).re - tj2 * (later_power + channels.sigma2());
    }
    InnerQuadratic::new(
        HermitianMat::from_matrix_unchecked(a),
        ComplexVec::from_vector_unchecked(b),
        c,
    )
}

/// The dual problem as an LMI SDP over `y = (λ, β)`, minimising `−β`.
pub fn dual_sdp(q: &InnerQuadratic, epsilon: f64) -> Result<SdpProblem> {
    let n = q.dim();
    let mut f0 = DMatrix::<C64>::zeros(n + 1, n + 1);
    f0.view_mut((0, 0), (n, n)).copy_from(&(-q.a.as_matrix()));
    f0.view_mut((0, n), (n, 1)).copy_from(q.b.as_vector());
    f0.view_mut((n, 0), (1, n)).copy_from(&q.b.as_vector().adjoint());
    f0[(n, n)] = C64::new(q.c, 0.0);
    let mut diag = vec![1.0; n + 1];
    diag[n] = -epsilon * epsilon;
    let mut fb = vec![0.0; n + 1];
    fb[n] = -1.0;

    let mut p = SdpProblem::new(vec![0.0, -1.0])?;
    p.add_block(
        embed_hermitian(&HermitianMat::from_matrix_unchecked(f0)),
        vec![
            (0, embed_hermitian(&HermitianMat::from_real_diagonal(&diag))),
            (1, embed_hermitian(&HermitianMat::from_real_diagonal(&fb))),
        ],
    )?;
    p.add_nonneg(0)?;
    Ok(p)
}

/// Solves the dual for the optimal multiplier `λ*` and value `β*`.
///
/// The SDP multiplier is refined on the secular equation `‖(λI − A)⁻¹b‖ = ε`
/// and `β*` is reported as the dual function at the refined multiplier when
/// that is no worse than the SDP value.
pub fn solve_dual(q: &InnerQuadratic, epsilon: f64, opts: &SdpOptions) -> Result<DualSolution> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let eig = hermitian_eig(&q.a);
    if epsilon == 0.0 {
        return Ok(DualSolution {
            lambda: eig.max_value().max(0.0),
            beta: q.c,
            status: SolveStatus::Optimal,
        });
    }
    let sdp = solve_sdp(&dual_sdp(q, epsilon)?, opts);
    if !sdp.status.is_optimal() {
        return Ok(DualSolution {
            lambda: sdp.y[0],
            beta: sdp.y[1],
            status: sdp.status,
        });
    }
    let (lambda_sdp, beta_sdp) = (sdp.y[0].max(0.0), sdp.y[1]);
    let bt = rotate(&eig, &q.b);
    let lambda = secular_root(&eig.values, &bt, epsilon, lambda_sdp, q.a.norm());
    let refined = dual_value_eig(&eig.values, &bt, q.c, epsilon, lambda);
    let (lambda, beta) = if refined.is_finite() && refined >= beta_sdp - 1e-6 * (1.0 + beta_sdp.abs()) {
        (lambda, refined)
    } else {
        (lambda_sdp, beta_sdp)
    };
    Ok(DualSolution {
        lambda,
        beta,
        status: SolveStatus::Optimal,
    })
}

/// `b̃ = Vᴴb` in the eigenbasis of `A`.
fn rotate(eig: &HermitianEig, b: &ComplexVec) -> Vec<C64> {
    eig.vectors.iter().map(|v| v.inner(b)).collect()
}

/// Optimal multiplier from the secular equation, starting from `hint`.
fn secular_root(a: &[f64], bt: &[C64], eps: f64, hint: f64, a_norm: f64) -> f64 {
    let a_max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = a_max.max(0.0);
    let scale = lo.max(a_norm).max(hint).max(f64::MIN_POSITIVE);
    let thr = SINGULAR_REL_TOL * scale;
    let b_norm = bt.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let b_top = bt
        .iter()
        .zip(a)
        .filter(|(_, &ai)| lo - ai <= thr)
        .map(|(z, _)| z.norm_sqr())
        .sum::<f64>()
        .sqrt();
    let psi = |lam: f64, skip_top: bool| -> f64 {
        bt.iter()
            .zip(a)
            .filter(|(_, &ai)| !(skip_top && lo - ai <= thr))
            .map(|(z, &ai)| z.norm_sqr() / (lam - ai).powi(2))
            .sum()
    };
    if b_top <= 1e-12 * b_norm.max(f64::MIN_POSITIVE) && psi(lo, true) <= eps * eps {
        // hard case (or b = 0): the multiplier sits on λ_max(A)
        return lo;
    }
    // ψ(λ) = ε² on (lo, hi]; ψ is decreasing and convex there.
    let mut left = lo;
    let mut right = lo + b_norm / eps;
    let mut lam = if hint > left && hint <= right { hint } else { 0.5 * (left + right) };
    for _ in 0..200 {
        let p = psi(lam, false);
        if !p.is_finite() {
            left = lam;
            lam = 0.5 * (left + right);
            continue;
        }
        if p > eps * eps {
            left = lam;
        } else {
            right = lam;
        }
        // Newton on φ(λ) = 1/√ψ − 1/ε, nearly linear in λ.
        let dpsi: f64 = bt
            .iter()
            .zip(a)
            .map(|(z, &ai)| -2.0 * z.norm_sqr() / (lam - ai).powi(3))
            .sum();
        let phi = 1.0 / p.sqrt() - 1.0 / eps;
        let dphi = -0.5 * dpsi / p.powf(1.5);
        let mut next = lam - phi / dphi;
        if !(next > left && next < right) || !next.is_finite() {
            next = 0.5 * (left + right);
        }
        if (next - lam).abs() <= 4.0 * f64::EPSILON * lam.abs().max(f64::MIN_POSITIVE) {
            lam = next;
            break;
        }
        lam = next;
        if right - left <= 2.0 * f64::EPSILON * right.abs() {
            break;
        }
    }
    lam
}

fn dual_value_eig(a: &[f64], bt: &[C64], c: f64, eps: f64, lambda: f64) -> f64 {
    let scale = lambda.abs().max(a.iter().map(|x| x.abs()).fold(0.0, f64::max)).max(1.0);
    let zero = 1e-12 * scale;
    let b_norm = bt.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut quad = 0.0;
    let mut outside = 0.0;
    for (z, &ai) in bt.iter().zip(a) {
        let d = lambda - ai;
        if d < -zero {
            return f64::NEG_INFINITY;
        }
        if d > zero {
            quad += z.norm_sqr() / d;
        } else {
            outside += z.norm_sqr();
        }
    }
    if outside.sqrt() > RANGE_REL_TOL * b_norm {
        return f64::NEG_INFINITY;
    }
    -quad + c - lambda * eps * eps
}

/// Dual function `g(λ) = −bᴴ(λI − A)⁺b + c − λε²`, or `−∞` when `λI − A` is
/// not PSD or `b` leaves its range.
pub fn dual_value(q: &InnerQuadratic, epsilon: f64, lambda: f64) -> f64 {
    if lambda < 0.0 {
        return f64::NEG_INFINITY;
    }
    let eig = hermitian_eig(&q.a);
    dual_value_eig(&eig.values, &rotate(&eig, &q.b), q.c, epsilon, lambda)
}

/// Minimiser of `f` on the ball from the optimal multiplier, including the
/// hard case where `λI − A` is singular and the stationary point is padded
/// with a null-space component up to the boundary.
pub fn recover_error(q: &InnerQuadratic, epsilon: f64, lambda: f64) -> Result<ComplexVec> {
    let n = q.dim();
    if epsilon == 0.0 {
        return Ok(ComplexVec::zeros(n));
    }
    let eig = hermitian_eig(&q.a);
    let bt = rotate(&eig, &q.b);
    let d: Vec<f64> = eig.values.iter().map(|ai| lambda - ai).collect();
    let scale = lambda.max(q.a.norm()).max(f64::MIN_POSITIVE);
    let thr = SINGULAR_REL_TOL * scale;
    if d.iter().any(|&di| di < -1e-7 * scale.max(1.0)) {
        return Err(Error::solver(
            SolveStatus::NumericalFailure,
            format!("λI − A is not PSD at λ = {lambda}"),
        ));
    }

    let combine = |coef: &[C64]| -> nalgebra::DVector<C64> {
        let mut e = nalgebra::DVector::zeros(n);
        for (cf, v) in coef.iter().zip(&eig.vectors) {
            e += v.as_vector() * *cf;
        }
        e
    };

    let nonsingular = d.iter().all(|&di| di > thr);
    if nonsingular {
        let coef: Vec<C64> = bt.iter().zip(&d).map(|(z, di)| -z / *di).collect();
        let mut e = combine(&coef);
        let norm = e.norm();
        if norm > epsilon {
            if norm > epsilon + CLIP_TOL {
                return Err(Error::solver(
                    SolveStatus::NumericalFailure,
                    format!("recovered error norm {norm} exceeds ε = {epsilon}"),
                ));
            }
            e *= C64::new(epsilon / norm, 0.0);
        }
        return Ok(ComplexVec::from_vector_unchecked(e));
    }

    let coef: Vec<C64> = bt
        .iter()
        .zip(&d)
        .map(|(z, di)| if *di > thr { -z / *di } else { C64::new(0.0, 0.0) })
        .collect();
    let mut e = combine(&coef);
    let p_norm = e.norm();
    if p_norm > epsilon + CLIP_TOL {
        return Err(Error::solver(
            SolveStatus::NumericalFailure,
            format!("hard case: pseudo-inverse part has norm {p_norm} > ε = {epsilon}"),
        ));
    }
    let null_idx = d.iter().position(|&di| di <= thr).expect("singular direction");
    let alpha = (epsilon * epsilon - p_norm * p_norm).max(0.0).sqrt();
    e += eig.vectors[null_idx].as_vector() * C64::new(alpha, 0.0);
    let norm = e.norm();
    if norm > epsilon {
        e *= C64::new(epsilon / norm, 0.0);
    }
    Ok(ComplexVec::from_vector_unchecked(e))
}

/// Sampling oracle for the inner problem: `resolution` random directions,
/// each scanned radially, followed by a shrinking random local search.
/// Independent of the dual route; meant for validation on small `N_t`.
pub fn brute_force_worst_error(
    q: &InnerQuadratic,
    epsilon: f64,
    resolution: usize,
) -> (ComplexVec, f64) {
    const RADII: usize = 8;
    let n = q.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_b0f0);
    let mut best = ComplexVec::zeros(n);
    let mut best_val = q.objective(&best);
    if epsilon == 0.0 {
        return (best, best_val);
    }
    let draw_dir = |rng: &mut ChaCha8Rng| -> ComplexVec {
        loop {
            let v: Vec<C64> = (0..n)
                .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            let v = ComplexVec::from_vector_unchecked(nalgebra::DVector::from_vec(v));
            let norm = v.norm();
            if norm > 1e-12 {
                return v.scale(C64::new(1.0 / norm, 0.0));
            }
        }
    };
    for _ in 0..resolution {
        let dir = draw_dir(&mut rng);
        for k in 1..=RADII {
            let e = dir.scale(C64::new(epsilon * k as f64 / RADII as f64, 0.0));
            let v = q.objective(&e);
            if v < best_val {
                best_val = v;
                best = e;
            }
        }
    }
    let mut step = 0.1 * epsilon;
    while step > 1e-9 * epsilon {
        let mut improved = false;
        for _ in 0..64 {
            let cand = best.add(&draw_dir(&mut rng).scale(C64::new(step, 0.0)));
            let norm = cand.norm();
            let cand = if norm > epsilon {
                cand.scale(C64::new(epsilon / norm, 0.0))
            } else {
                cand
            };
            let v = q.objective(&cand);
            if v < best_val {
                best_val = v;
                best = cand;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, best_val)
}

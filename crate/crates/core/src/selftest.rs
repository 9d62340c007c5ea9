//! Quick oracle checks runnable from the command line.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{compute_sinr, BeamformerSet, ChannelSet, ComplexVec, ErrorSet, HermitianMat, QosTargets, C64};
use crate::qt::{transformed_sinr, update_t};
use crate::sampling::{sample_channel, sample_error_ball};
use crate::sdp::{solve_sdp, SdpOptions, SdpProblem};
use crate::sdr::{solve_power_min, SdrOptions};
use crate::worst_case::{assemble_quadratic, brute_force_worst_error, recover_error, solve_dual, InnerQuadratic};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed deviation.
    pub worst: f64,
    pub seconds: f64,
}

fn rvec(rng: &mut ChaCha8Rng, n: usize, s: f64) -> ComplexVec {
    ComplexVec::new(
        (0..n)
            .map(|_| C64::new(rng.random_range(-s..s), rng.random_range(-s..s)))
            .collect(),
    )
    .expect("finite entries")
}

fn random_setup(rng: &mut ChaCha8Rng) -> Result<(ChannelSet, ErrorSet, BeamformerSet)> {
    let n = rng.random_range(1..=4);
    let users = rng.random_range(1..=4);
    let eps = rng.random_range(0.0..0.1);
    let ch = ChannelSet::new((0..users).map(|_| sample_channel(rng, n)).collect(), eps, 0.01)?;
    let errs = ErrorSet::new((0..users).map(|_| sample_error_ball(rng, n, eps)).collect(), eps)?;
    let beams = BeamformerSet::new((0..users).map(|_| rvec(rng, n, 0.5)).collect())?;
    Ok((ch, errs, beams))
}

fn timed(name: &'static str, tol: f64, f: impl FnOnce() -> Result<f64>) -> Check {
    let start = Instant::now();
    let worst = f().unwrap_or(f64::INFINITY);
    Check {
        name,
        passed: worst <= tol,
        worst,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn qt_equivalence(trials: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (ch, errs, beams) = random_setup(&mut rng)?;
        let t = update_t(&ch, &errs, &beams)?;
        for l in 0..ch.users() {
            for u in 0..=l {
                let s = compute_sinr(u, l, &ch, &errs, &beams)?;
                let q = transformed_sinr(u, l, &t, &ch, &errs, &beams)?;
                worst = worst.max((s - q).abs() / s.abs().max(1e-300).max(1.0));
            }
        }
    }
    Ok(worst)
}

fn inner_identity(trials: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (ch, errs, beams) = random_setup(&mut rng)?;
        let t = update_t(&ch, &errs, &beams)?;
        for l in 0..ch.users() {
            let q = assemble_quadratic(l, &t, &beams, &ch)?;
            for _ in 0..10 {
                let e = sample_error_ball(&mut rng, ch.n_t(), ch.epsilon());
                let mut all = errs.errors().to_vec();
                all[l] = e.clone();
                let es = ErrorSet::new(all, ch.epsilon())?;
                let sum = (0..=l)
                    .map(|j| transformed_sinr(j, l, &t, &ch, &es, &beams))
                    .sum::<Result<f64>>()?;
                worst = worst.max((q.objective(&e) - sum).abs() / (1.0 + sum.abs()));
            }
        }
    }
    Ok(worst)
}

fn random_quadratic(rng: &mut ChaCha8Rng, n: usize, hard: bool) -> Result<InnerQuadratic> {
    let g = rvec(rng, n, 1.0);
    let k = rvec(rng, n, 1.0);
    let a = HermitianMat::from_matrix_unchecked(
        HermitianMat::outer(&g).as_matrix() + HermitianMat::outer(&k).as_matrix() * C64::new(0.3, 0.0),
    );
    let b = if hard {
        // b orthogonal to the top eigenvector, kept small
        let eig = crate::sdp::hermitian_eig(&a);
        let top = eig.vectors.last().expect("eigenvectors").clone();
        let v = rvec(rng, n, 0.1);
        v.sub(&top.scale(top.inner(&v)))
    } else {
        rvec(rng, n, 1.0)
    };
    InnerQuadratic::new(a, b, rng.random_range(-1.0..1.0))
}

fn duality_gap(trials: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let opts = SdpOptions::default();
    let mut worst: f64 = 0.0;
    for i in 0..trials {
        let n = rng.random_range(1..=4);
        let q = random_quadratic(&mut rng, n, i % 5 == 0)?;
        let eps = rng.random_range(0.05..1.0);
        let d = solve_dual(&q, eps, &opts)?;
        let e = recover_error(&q, eps, d.lambda)?;
        let gap = (q.objective(&e) - d.beta).abs() / (1.0 + d.beta.abs());
        let overshoot = (e.norm() - eps).max(0.0);
        worst = worst.max(gap.max(overshoot * 1e3));
    }
    Ok(worst)
}

fn brute_force(trials: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let q = random_quadratic(&mut rng, 2, false)?;
        let eps = rng.random_range(0.05..0.5);
        let d = solve_dual(&q, eps, &SdpOptions::default())?;
        let (_, v) = brute_force_worst_error(&q, eps, 5_000);
        worst = worst.max((v - d.beta).abs());
    }
    Ok(worst)
}

fn sdp_analytic() -> Result<f64> {
    let s = |v: f64| nalgebra::DMatrix::from_element(1, 1, v);
    let mut worst: f64 = 0.0;
    // min y s.t. y − 1 >= 0
    let mut p = SdpProblem::new(vec![1.0])?;
    p.add_block(s(-1.0), vec![(0, s(1.0))])?;
    worst = worst.max((solve_sdp(&p, &SdpOptions::default()).objective_value - 1.0).abs());
    // min y₁ + y₂ s.t. [[y₁, 1], [1, y₂]] ⪰ 0, optimum 2
    let mut p = SdpProblem::new(vec![1.0, 1.0])?;
    let e = |i: usize| {
        let mut m = nalgebra::DMatrix::zeros(2, 2);
        m[(i, i)] = 1.0;
        m
    };
    p.add_block(nalgebra::DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), vec![(0, e(0)), (1, e(1))])?;
    worst = worst.max((solve_sdp(&p, &SdpOptions::default()).objective_value - 2.0).abs());
    Ok(worst)
}

fn single_user(trials: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n = rng.random_range(1..=4);
        let h = sample_channel(&mut rng, n);
        let gamma_db = rng.random_range(0.0..10.0);
        let ch = ChannelSet::new(vec![h.clone()], 0.0, 0.01)?;
        let t = QosTargets::uniform_db(gamma_db, 1)?;
        let r = solve_power_min(&ch, &ErrorSet::zeros(1, n), &t, &SdrOptions::default())?;
        let want = t.gamma()[0] * 0.01 / h.norm_squared();
        let dev = (r.total_power - want).abs() / want;
        worst = worst.max(if r.rank_one_all() { dev } else { f64::INFINITY });
    }
    Ok(worst)
}

/// Runs every check with small instance counts.
pub fn run_all() -> Vec<Check> {
    vec![
        timed("quadratic transform reproduces SINR", 1e-9, || qt_equivalence(200)),
        timed("inner quadratic equals summed surrogate", 1e-9, || inner_identity(100)),
        timed("dual bound attained by recovered error", 1e-6, || duality_gap(100)),
        timed("dual value matches sampling oracle", 1e-3, || brute_force(10)),
        timed("sdp solver analytic optima", 1e-6, sdp_analytic),
        timed("single-user power closed form", 1e-6, || single_user(20)),
    ]
}

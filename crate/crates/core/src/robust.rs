//! Alternating robust design loop.
//!
//! Each iteration updates the quadratic-transform scalars from the current
//! beams and errors, replaces every receiver's error by the worst case of
//! its sum-SINR surrogate, and re-solves the power minimisation at those
//! errors. The loop stops once the beams stop moving.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BeamformerSet, ChannelSet, ComplexVec, ErrorSet, QosTargets, C64};
use crate::qt::update_t;
use crate::sampling::{derive_seed, sample_error_ball};
use crate::sdp::{SdpOptions, SolveStatus};
use crate::sdr::{solve_power_min, SdrOptions, SdrResult, RANDOMIZATION_TRIALS, RANK_ONE_THRESHOLD};
use crate::worst_case::{assemble_quadratic, recover_error, solve_dual};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub i_max: usize,
    pub delta_tol: f64,
    pub sdp_tol: f64,
    pub rank_one_threshold: f64,
    pub randomization_trials: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            i_max: 10,
            delta_tol: 1e-4,
            sdp_tol: 1e-7,
            rank_one_threshold: RANK_ONE_THRESHOLD,
            randomization_trials: RANDOMIZATION_TRIALS,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.i_max == 0 {
            return Err(Error::InvalidInput("i_max must be positive".into()));
        }
        for (name, v) in [
            ("delta_tol", self.delta_tol),
            ("sdp_tol", self.sdp_tol),
            ("rank_one_threshold", self.rank_one_threshold),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn sdp_options(&self) -> SdpOptions {
        SdpOptions {
            tol: self.sdp_tol,
            ..SdpOptions::default()
        }
    }

    fn sdr_options(&self, iteration: u64) -> SdrOptions {
        SdrOptions {
            sdp: self.sdp_options(),
            rank_one_threshold: self.rank_one_threshold,
            randomization_trials: self.randomization_trials,
            seed: derive_seed(self.seed, &[1, iteration]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustSolution {
    pub beams: BeamformerSet,
    /// Worst-case errors the final beams were designed against.
    pub errors: ErrorSet,
    /// Transmit power of the returned beams.
    pub total_power: f64,
    pub iterations: usize,
    pub converged: bool,
    pub per_iteration_delta: Vec<f64>,
    pub rank_one_all: bool,
    /// Whether the final SDR needed randomisation.
    pub used_randomization: bool,
    pub status: SolveStatus,
}

/// Matched filters `√p_u·ĥ_u/‖ĥ_u‖` with `p_u = U·Γ_u·σ²/‖ĥ_u‖²`.
pub fn init_beamformers(ch: &ChannelSet, targets: &QosTargets) -> Result<BeamformerSet> {
    crate::model::check_users(ch.users(), targets.users(), "targets")?;
    let users = ch.users() as f64;
    let beams = ch
        .estimates()
        .iter()
        .zip(targets.gamma())
        .map(|(h, g)| {
            let n2 = h.norm_squared();
            if n2 == 0.0 {
                return Err(Error::InvalidInput("zero channel estimate".into()));
            }
            let p = users * g * ch.sigma2() / n2;
            Ok(h.scale(C64::new((p / n2).sqrt(), 0.0)))
        })
        .collect::<Result<Vec<_>>>()?;
    BeamformerSet::new(beams)
}

pub fn init_errors<R: rand::Rng + ?Sized>(rng: &mut R, epsilon: f64, n_t: usize, users: usize) -> Result<ErrorSet> {
    ErrorSet::new(
        (0..users).map(|_| sample_error_ball(rng, n_t, epsilon)).collect(),
        epsilon,
    )
}

/// `δ = Σ_u ‖w_u − w'_u‖ / (N_t·U)`.
pub fn convergence_delta(prev: &BeamformerSet, next: &BeamformerSet) -> f64 {
    assert_eq!(prev.users(), next.users(), "beam sets differ in users");
    assert_eq!(prev.dim(), next.dim(), "beam sets differ in dimension");
    let sum: f64 = prev
        .beams()
        .iter()
        .zip(next.beams())
        .map(|(a, b)| a.sub(b).norm())
        .sum();
    sum / (prev.dim() * prev.users()) as f64
}

/// Worst-case errors of every receiver for fixed beams and scalars.
pub fn worst_case_errors(
    ch: &ChannelSet,
    errors: &ErrorSet,
    beams: &BeamformerSet,
    opts: &SdpOptions,
) -> Result<ErrorSet> {
    let t = update_t(ch, errors, beams)?;
    let eps = ch.epsilon();
    let mut out: Vec<ComplexVec> = Vec::with_capacity(ch.users());
    for l in 0..ch.users() {
        let q = assemble_quadratic(l, &t, beams, ch)?;
        let dual = solve_dual(&q, eps, opts)?;
        if !dual.status.is_optimal() {
            return Err(Error::solver(dual.status, format!("worst-case dual at receiver {l}")));
        }
        out.push(recover_error(&q, eps, dual.lambda)?);
    }
    ErrorSet::new(out, eps)
}

/// Runs the robust design for channels in canonical (SIC) order.
/// Uses `ch.epsilon()` as the error radius.
pub fn run(ch: &ChannelSet, targets: &QosTargets, config: &SolverConfig) -> Result<RobustSolution> {
    config.validate()?;
    if !ch.is_canonical() {
        return Err(Error::InvalidInput("channels are not in canonical order".into()));
    }
    let mut beams = init_beamformers(ch, targets)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0]));
    let mut errors = init_errors(&mut rng, ch.epsilon(), ch.n_t(), ch.users())?;
    let sdp_opts = config.sdp_options();

    let mut deltas = Vec::new();
    let mut last: Option<SdrResult> = None;
    let mut converged = false;
    for i in 1..=config.i_max {
        errors = worst_case_errors(ch, &errors, &beams, &sdp_opts).map_err(|e| e.at_iteration(i))?;
        let sdr = solve_power_min(ch, &errors, targets, &config.sdr_options(i as u64))
            .map_err(|e| e.at_iteration(i))?;
        let delta = convergence_delta(&beams, &sdr.beams);
        deltas.push(delta);
        beams = sdr.beams.clone();
        last = Some(sdr);
        if delta < config.delta_tol {
            converged = true;
            break;
        }
    }
    let sdr = last.expect("at least one iteration");
    Ok(RobustSolution {
        total_power: beams.total_power(),
        beams,
        errors,
        iterations: deltas.len(),
        converged,
        per_iteration_delta: deltas,
        rank_one_all: sdr.rank_one_all(),
        used_randomization: sdr.used_randomization,
        status: sdr.status,
    })
}

/// Single power minimisation treating the estimates as exact.
pub fn solve_nonrobust(ch: &ChannelSet, targets: &QosTargets, config: &SolverConfig) -> Result<SdrResult> {
    config.validate()?;
    solve_power_min(
        ch,
        &ErrorSet::zeros(ch.users(), ch.n_t()),
        targets,
        &config.sdr_options(0),
    )
}

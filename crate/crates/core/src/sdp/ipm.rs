//! Infeasible-start primal-dual path-following method with the HKM search
//! direction and Mehrotra predictor-corrector steps.
//!
//! The LMI problem `min cᵀy s.t. F₀ + Σ yᵢFᵢ ⪰ 0` is handled as the dual of
//! the standard-form pair
//!
//! ```text
//! (P) min ⟨C, X⟩  s.t. ⟨Aᵢ, X⟩ = bᵢ, X ⪰ 0
//! (D) max bᵀy    s.t. Z = C − Σ yᵢAᵢ ⪰ 0
//! ```
//!
//! with `C = F₀`, `Aᵢ = −Fᵢ`, `b = −c`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{min_eigenvalue, LmiBlock, SdpOptions, SdpProblem, SdpSolution, SolveStatus};

/// Iterate norm beyond which divergence is read as an infeasibility or
/// unboundedness certificate.
const DIVERGENCE: f64 = 1e10;
const STEP_FRACTION: f64 = 0.98;
/// Bound on `‖y‖` in the phase-I problem.
const PHASE_ONE_RADIUS: f64 = 1e4;

struct Block {
    c: DMatrix<f64>,
    /// `(i, Aᵢ)` with `Aᵢ = −Fᵢ`.
    a: Vec<(usize, DMatrix<f64>)>,
}

struct Outcome {
    y: DVector<f64>,
    status: SolveStatus,
    gap: f64,
    iterations: usize,
}

/// Solves the problem; see [`SdpSolution`] for the reported quantities.
///
/// When the main solve does not certify optimality a phase-I problem
/// `min s s.t. F(y) + sI ⪰ 0, s ≥ −1, ‖y‖ ≤ R` decides whether the
/// constraints are infeasible.
pub fn solve_sdp(problem: &SdpProblem, opts: &SdpOptions) -> SdpSolution {
    let blocks: Vec<Block> = problem.expanded_blocks().iter().map(to_standard).collect();
    let b = -DVector::from_column_slice(problem.objective());
    let out = path_following(&blocks, &b, opts);

    let status = match out.status {
        SolveStatus::Optimal => SolveStatus::Optimal,
        other => match phase_one(problem, opts) {
            Some(s) if s > opts.tol.max(1e-7) => SolveStatus::Infeasible,
            Some(_) if other == SolveStatus::Infeasible => SolveStatus::NumericalFailure,
            _ => other,
        },
    };
    let y = out.y;
    SdpSolution {
        objective_value: problem.objective_value(y.as_slice()),
        y,
        status,
        duality_gap: out.gap,
        iterations: out.iterations,
    }
}

fn to_standard(block: &LmiBlock) -> Block {
    Block {
        c: block.constant().clone(),
        a: block.terms().iter().map(|(i, f)| (*i, -f)).collect(),
    }
}

/// Optimal `s` of the phase-I problem, or `None` if it could not be solved.
fn phase_one(problem: &SdpProblem, opts: &SdpOptions) -> Option<f64> {
    let m = problem.num_vars();
    let s = m;
    let mut blocks = Vec::new();
    for blk in problem.expanded_blocks() {
        let n = blk.dim();
        let mut a: Vec<(usize, DMatrix<f64>)> = blk.terms().iter().map(|(i, f)| (*i, -f)).collect();
        a.push((s, -DMatrix::identity(n, n)));
        blocks.push(Block {
            c: blk.constant().clone(),
            a,
        });
    }
    // s + 1 >= 0
    blocks.push(Block {
        c: DMatrix::from_element(1, 1, 1.0),
        a: vec![(s, DMatrix::from_element(1, 1, -1.0))],
    });
    // [[R I, y], [yᵀ, R]] ⪰ 0
    let mut c = DMatrix::identity(m + 1, m + 1);
    c *= PHASE_ONE_RADIUS;
    let a = (0..m)
        .map(|i| {
            let mut f = DMatrix::zeros(m + 1, m + 1);
            f[(i, m)] = -1.0;
            f[(m, i)] = -1.0;
            (i, f)
        })
        .collect();
    blocks.push(Block { c, a });

    let mut b = DVector::zeros(m + 1);
    b[s] = -1.0;
    let out = path_following(&blocks, &b, opts);
    match out.status {
        SolveStatus::Optimal | SolveStatus::MaxIterations => Some(out.y[s]),
        _ => None,
    }
}

fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Largest `α ≤ 1/STEP_FRACTION` keeping `X + αΔX ⪰ 0`, given `L` with
/// `X = LLᵀ`.
fn max_step(chol: &Cholesky<f64, Dyn>, dx: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let Some(linv) = l.clone().try_inverse() else {
        return 0.0;
    };
    let s = sym(&linv * dx * linv.transpose());
    let lam = min_eigenvalue(&s);
    if lam >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lam
    }
}

fn initial_scale(blocks: &[Block], b: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut xi = Vec::with_capacity(blocks.len());
    let mut eta = Vec::with_capacity(blocks.len());
    for blk in blocks {
        let n = blk.c.nrows() as f64;
        let rn = n.sqrt();
        let mut x = 10f64.max(rn);
        let mut z = 10f64.max(rn).max(blk.c.norm());
        for (i, a) in &blk.a {
            let na = a.norm();
            x = x.max(rn * (1.0 + b[*i].abs()) / (1.0 + na));
            z = z.max(na);
        }
        xi.push(x);
        eta.push(z);
    }
    (xi, eta)
}

fn path_following(blocks: &[Block], b: &DVector<f64>, opts: &SdpOptions) -> Outcome {
    let m = b.len();
    let n_total: usize = blocks.iter().map(|blk| blk.c.nrows()).sum();
    let (xi, eta) = initial_scale(blocks, b);
    let mut x: Vec<DMatrix<f64>> = blocks
        .iter()
        .zip(&xi)
        .map(|(blk, s)| DMatrix::identity(blk.c.nrows(), blk.c.nrows()) * *s)
        .collect();
    let mut z: Vec<DMatrix<f64>> = blocks
        .iter()
        .zip(&eta)
        .map(|(blk, s)| DMatrix::identity(blk.c.nrows(), blk.c.nrows()) * *s)
        .collect();
    let mut y = DVector::zeros(m);

    let norm_b = b.norm();
    let norm_c = blocks.iter().map(|blk| blk.c.norm_squared()).sum::<f64>().sqrt();
    let mut last_gap = f64::INFINITY;

    for iter in 0..=opts.max_iter {
        // Residuals.
        let mut ax = DVector::zeros(m);
        for (blk, xk) in blocks.iter().zip(&x) {
            for (i, a) in &blk.a {
                ax[*i] += frob_dot(a, xk);
            }
        }
        let rp = b - &ax;
        let rd: Vec<DMatrix<f64>> = blocks
            .iter()
            .zip(&z)
            .map(|(blk, zk)| {
                let mut r = &blk.c - zk;
                for (i, a) in &blk.a {
                    r -= a * y[*i];
                }
                r
            })
            .collect();
        let pobj: f64 = blocks.iter().zip(&x).map(|(blk, xk)| frob_dot(&blk.c, xk)).sum();
        let dobj = b.dot(&y);
        let xz: f64 = x.iter().zip(&z).map(|(xk, zk)| frob_dot(xk, zk)).sum();
        let mu = xz / n_total as f64;

        let denom = 1.0 + pobj.abs() + dobj.abs();
        let gap = (pobj - dobj).abs().max(xz.max(0.0)) / denom;
        let pinf = rp.norm() / (1.0 + norm_b);
        let dinf = rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / (1.0 + norm_c);
        last_gap = gap;

        if !(gap.is_finite() && pinf.is_finite() && dinf.is_finite()) {
            return Outcome { y, status: SolveStatus::NumericalFailure, gap, iterations: iter };
        }
        if gap <= opts.tol && pinf <= opts.feas_tol && dinf <= opts.feas_tol {
            return Outcome { y, status: SolveStatus::Optimal, gap, iterations: iter };
        }
        // Divergence along a certificate direction.
        let trace_x: f64 = x.iter().map(|xk| xk.trace()).sum();
        if trace_x > DIVERGENCE * (1.0 + norm_b) && -pobj > 1e-8 * trace_x {
            return Outcome { y, status: SolveStatus::Infeasible, gap, iterations: iter };
        }
        if dobj > DIVERGENCE * (1.0 + norm_c) && y.norm() > DIVERGENCE {
            return Outcome { y, status: SolveStatus::Unbounded, gap, iterations: iter };
        }
        if iter == opts.max_iter {
            break;
        }

        // Factorizations.
        let mut zinv = Vec::with_capacity(blocks.len());
        let mut xchol = Vec::with_capacity(blocks.len());
        let mut zchol = Vec::with_capacity(blocks.len());
        for (xk, zk) in x.iter().zip(&z) {
            let (Some(cx), Some(cz)) = (Cholesky::new(xk.clone()), Cholesky::new(zk.clone())) else {
                return Outcome { y, status: SolveStatus::NumericalFailure, gap, iterations: iter };
            };
            zinv.push(cz.inverse());
            xchol.push(cx);
            zchol.push(cz);
        }

        // Schur complement M_ij = Σ_k tr(A_i X A_j Z⁻¹).
        let mut schur = DMatrix::zeros(m, m);
        for (k, blk) in blocks.iter().enumerate() {
            let g: Vec<DMatrix<f64>> = blk.a.iter().map(|(_, a)| &x[k] * a * &zinv[k]).collect();
            for (i, ai) in &blk.a {
                for ((j, _), gj) in blk.a.iter().zip(&g) {
                    schur[(*i, *j)] += frob_dot(ai, gj);
                }
            }
        }
        let schur = sym(schur);
        let solver = SchurSolver::new(schur);
        let Some(solver) = solver else {
            return Outcome { y, status: SolveStatus::NumericalFailure, gap, iterations: iter };
        };

        let direction = |rc: &[DMatrix<f64>]| -> Option<(Vec<DMatrix<f64>>, DVector<f64>, Vec<DMatrix<f64>>)> {
            let mut rhs = rp.clone();
            for (k, blk) in blocks.iter().enumerate() {
                let t = sym((&x[k] * &rd[k] - &rc[k]) * &zinv[k]);
                for (i, a) in &blk.a {
                    rhs[*i] += frob_dot(a, &t);
                }
            }
            let dy = solver.solve(&rhs)?;
            let mut dz = Vec::with_capacity(blocks.len());
            let mut dx = Vec::with_capacity(blocks.len());
            for (k, blk) in blocks.iter().enumerate() {
                let mut d = rd[k].clone();
                for (i, a) in &blk.a {
                    d -= a * dy[*i];
                }
                dx.push(sym((&rc[k] - &x[k] * &d) * &zinv[k]));
                dz.push(d);
            }
            Some((dx, dy, dz))
        };

        let step_lengths = |dx: &[DMatrix<f64>], dz: &[DMatrix<f64>]| -> (f64, f64) {
            let ap = xchol.iter().zip(dx).map(|(c, d)| max_step(c, d)).fold(f64::INFINITY, f64::min);
            let ad = zchol.iter().zip(dz).map(|(c, d)| max_step(c, d)).fold(f64::INFINITY, f64::min);
            (ap, ad)
        };

        // Predictor.
        let rc_aff: Vec<DMatrix<f64>> = x.iter().zip(&z).map(|(xk, zk)| -(xk * zk)).collect();
        let Some((dx_a, _, dz_a)) = direction(&rc_aff) else {
            return Outcome { y, status: SolveStatus::NumericalFailure, gap, iterations: iter };
        };
        let (ap, ad) = step_lengths(&dx_a, &dz_a);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mu_aff: f64 = x
            .iter()
            .zip(&z)
            .zip(dx_a.iter().zip(&dz_a))
            .map(|((xk, zk), (dxk, dzk))| {
                let xa = xk + dxk * ap;
                let za = zk + dzk * ad;
                frob_dot(&xa, &za)
            })
            .sum::<f64>()
            / n_total as f64;
        let sigma = if mu > 0.0 { (mu_aff.max(0.0) / mu).powi(3).clamp(0.0, 1.0) } else { 0.0 };

        // Corrector.
        let rc: Vec<DMatrix<f64>> = (0..blocks.len())
            .map(|k| {
                let n = x[k].nrows();
                DMatrix::identity(n, n) * (sigma * mu) - &x[k] * &z[k] - &dx_a[k] * &dz_a[k]
            })
            .collect();
        let Some((dx, dy, dz)) = direction(&rc) else {
            return Outcome { y, status: SolveStatus::NumericalFailure, gap, iterations: iter };
        };
        let (ap, ad) = step_lengths(&dx, &dz);
        let ap = (STEP_FRACTION * ap).min(1.0);
        let ad = (STEP_FRACTION * ad).min(1.0);

        for k in 0..blocks.len() {
            x[k] = sym(&x[k] + &dx[k] * ap);
            z[k] = sym(&z[k] + &dz[k] * ad);
        }
        y.axpy(ad, &dy, 1.0);
    }

    Outcome {
        y,
        status: SolveStatus::MaxIterations,
        gap: last_gap,
        iterations: opts.max_iter,
    }
}

/// Cholesky with an LU fallback for nearly singular Schur matrices.
enum SchurSolver {
    Chol(Cholesky<f64, Dyn>),
    Lu(nalgebra::LU<f64, Dyn, Dyn>),
}

impl SchurSolver {
    fn new(m: DMatrix<f64>) -> Option<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return None;
        }
        match Cholesky::new(m.clone()) {
            Some(c) => Some(SchurSolver::Chol(c)),
            None => {
                let lu = m.lu();
                if lu.is_invertible() {
                    Some(SchurSolver::Lu(lu))
                } else {
                    None
                }
            }
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let sol = match self {
            SchurSolver::Chol(c) => c.solve(rhs),
            SchurSolver::Lu(lu) => lu.solve(rhs)?,
        };
        sol.iter().all(|v| v.is_finite()).then_some(sol)
    }
}

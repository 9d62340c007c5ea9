//! Small dense semidefinite programs in LMI form.
//!
//! A problem is
//!
//! ```text
//! minimize    cᵀ y
//! subject to  F₀⁽ᵏ⁾ + Σᵢ yᵢ Fᵢ⁽ᵏ⁾ ⪰ 0   for every block k
//!             yᵢ ≥ 0                  for i in nonneg_vars
//! ```
//!
//! with real symmetric blocks. Complex Hermitian constraints enter through
//! [`embed_hermitian`].

mod embed;
mod ipm;

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embed::{embed_hermitian, embed_vector, hermitian_eig, HermitianEig};
pub use ipm::solve_sdp;

/// Symmetry tolerance for block matrices, relative to the block scale.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_optimal(self) -> bool {
        self == SolveStatus::Optimal
    }
}

/// One LMI block `F₀ + Σᵢ yᵢ Fᵢ ⪰ 0`. Only variables with a nonzero
/// coefficient matrix are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    constant: DMatrix<f64>,
    terms: Vec<(usize, DMatrix<f64>)>,
}

impl LmiBlock {
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> &[(usize, DMatrix<f64>)] {
        &self.terms
    }

    /// `F₀ + Σᵢ yᵢ Fᵢ`.
    pub fn evaluate(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (i, f) in &self.terms {
            m += f * y[*i];
        }
        m
    }

    fn scale(&self) -> f64 {
        self.terms
            .iter()
            .map(|(_, f)| f.norm())
            .fold(self.constant.norm(), f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    num_vars: usize,
    objective: Vec<f64>,
    blocks: Vec<LmiBlock>,
    nonneg_vars: Vec<usize>,
}

impl SdpProblem {
    pub fn new(objective: Vec<f64>) -> Result<Self> {
        if objective.is_empty() {
            return Err(Error::InvalidInput("SDP needs at least one variable".into()));
        }
        if objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("SDP objective must be finite".into()));
        }
        Ok(SdpProblem {
            num_vars: objective.len(),
            objective,
            blocks: Vec::new(),
            nonneg_vars: Vec::new(),
        })
    }

    /// Adds the block `constant + Σ yᵢ Fᵢ ⪰ 0` from `(i, Fᵢ)` pairs.
    /// Repeated indices are summed.
    pub fn add_block(
        &mut self,
        constant: DMatrix<f64>,
        terms: Vec<(usize, DMatrix<f64>)>,
    ) -> Result<()> {
        let n = constant.nrows();
        if n == 0 || constant.ncols() != n {
            return Err(Error::DimensionMismatch("LMI block must be square".into()));
        }
        check_symmetric(&constant)?;
        let mut merged: Vec<(usize, DMatrix<f64>)> = Vec::new();
        for (i, f) in terms {
            if i >= self.num_vars {
                return Err(Error::IndexOutOfRange(format!(
                    "variable {i} of {}",
                    self.num_vars
                )));
            }
            if f.nrows() != n || f.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "coefficient of y{i} is {}x{}, block is {n}x{n}",
                    f.nrows(),
                    f.ncols()
                )));
            }
            check_symmetric(&f)?;
            match merged.iter_mut().find(|(j, _)| *j == i) {
                Some((_, g)) => *g += f,
                None => merged.push((i, f)),
            }
        }
        merged.retain(|(_, f)| f.iter().any(|&x| x != 0.0));
        merged.sort_by_key(|(i, _)| *i);
        self.blocks.push(LmiBlock {
            constant,
            terms: merged,
        });
        Ok(())
    }

    /// Adds a scalar inequality `a₀ + Σ aᵢ yᵢ ≥ 0` as a 1×1 block.
    pub fn add_scalar_row(&mut self, constant: f64, coeffs: &[(usize, f64)]) -> Result<()> {
        self.add_block(
            DMatrix::from_element(1, 1, constant),
            coeffs
                .iter()
                .map(|&(i, a)| (i, DMatrix::from_element(1, 1, a)))
                .collect(),
        )
    }

    pub fn add_nonneg(&mut self, var: usize) -> Result<()> {
        if var >= self.num_vars {
            return Err(Error::IndexOutOfRange(format!("variable {var}")));
        }
        if !self.nonneg_vars.contains(&var) {
            self.nonneg_vars.push(var);
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn blocks(&self) -> &[LmiBlock] {
        &self.blocks
    }

    pub fn nonneg_vars(&self) -> &[usize] {
        &self.nonneg_vars
    }

    /// All constraints as LMI blocks, with nonnegativity encoded as 1×1
    /// blocks after the user blocks.
    pub fn expanded_blocks(&self) -> Vec<LmiBlock> {
        let mut out = self.blocks.clone();
        for &i in &self.nonneg_vars {
            out.push(LmiBlock {
                constant: DMatrix::zeros(1, 1),
                terms: vec![(i, DMatrix::from_element(1, 1, 1.0))],
            });
        }
        out
    }

    /// Smallest eigenvalue of each expanded block at `y`.
    pub fn block_min_eigenvalues(&self, y: &[f64]) -> Vec<f64> {
        self.expanded_blocks()
            .iter()
            .map(|b| min_eigenvalue(&b.evaluate(y)))
            .collect()
    }

    /// Whether every block is PSD within `-tol·(1 + ‖block‖)`.
    pub fn is_feasible(&self, y: &[f64], tol: f64) -> bool {
        self.expanded_blocks().iter().all(|b| {
            let m = b.evaluate(y);
            min_eigenvalue(&m) >= -tol * (1.0 + b.scale().max(m.norm()))
        })
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.iter().zip(y).map(|(c, y)| c * y).sum()
    }

    /// Self-describing text dump: a header line, the objective, the
    /// nonnegative variables, then every block as `F0` followed by its
    /// nonzero coefficient matrices, each matrix row-major one row per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sdp vars {} blocks {}", self.num_vars, self.blocks.len());
        let _ = writeln!(s, "objective {}", join(&self.objective));
        let nn: Vec<String> = self.nonneg_vars.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(s, "nonneg {}", nn.join(" "));
        for (k, b) in self.blocks.iter().enumerate() {
            let _ = writeln!(s, "block {k} dim {} terms {}", b.dim(), b.terms.len());
            let _ = writeln!(s, "F0");
            write_matrix(&mut s, &b.constant);
            for (i, f) in &b.terms {
                let _ = writeln!(s, "F {i}");
                write_matrix(&mut s, f);
            }
        }
        s
    }

    pub fn dump(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(self.to_text().as_bytes())
    }

    /// Parses the format written by [`SdpProblem::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidInput(format!("SDP text: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty"))?.split_whitespace().collect();
        if header.len() != 5 || header[0] != "sdp" {
            return Err(bad("bad header"));
        }
        let n_blocks: usize = header[4].parse().map_err(|_| bad("block count"))?;
        let objective = parse_floats(
            lines
                .next()
                .and_then(|l| l.strip_prefix("objective"))
                .ok_or_else(|| bad("objective"))?,
        )?;
        let mut p = SdpProblem::new(objective)?;
        let nn_line = lines.next().and_then(|l| l.strip_prefix("nonneg")).ok_or_else(|| bad("nonneg"))?;
        for tok in nn_line.split_whitespace() {
            p.add_nonneg(tok.parse().map_err(|_| bad("nonneg index"))?)?;
        }
        for _ in 0..n_blocks {
            let head: Vec<&str> = lines.next().ok_or_else(|| bad("block"))?.split_whitespace().collect();
            if head.len() != 6 || head[0] != "block" {
                return Err(bad("block header"));
            }
            let dim: usize = head[3].parse().map_err(|_| bad("dim"))?;
            let n_terms: usize = head[5].parse().map_err(|_| bad("terms"))?;
            let read_matrix = |lines: &mut dyn Iterator<Item = &str>| -> Result<DMatrix<f64>> {
                let mut data = Vec::with_capacity(dim * dim);
                for _ in 0..dim {
                    data.extend(parse_floats(lines.next().ok_or_else(|| bad("matrix row"))?)?);
                }
                if data.len() != dim * dim {
                    return Err(bad("matrix size"));
                }
                Ok(DMatrix::from_row_slice(dim, dim, &data))
            };
            if lines.next().map(str::trim) != Some("F0") {
                return Err(bad("expected F0"));
            }
            let constant = read_matrix(&mut lines)?;
            let mut terms = Vec::with_capacity(n_terms);
            for _ in 0..n_terms {
                let idx = lines
                    .next()
                    .and_then(|l| l.trim().strip_prefix("F "))
                    .ok_or_else(|| bad("expected F <i>"))?
                    .trim()
                    .parse()
                    .map_err(|_| bad("term index"))?;
                terms.push((idx, read_matrix(&mut lines)?));
            }
            p.add_block(constant, terms)?;
        }
        Ok(p)
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

fn write_matrix(s: &mut String, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        let row: Vec<f64> = m.row(r).iter().copied().collect();
        let _ = writeln!(s, "{}", join(&row));
    }
}

fn parse_floats(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("SDP text: bad number {t:?}")))
        })
        .collect()
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("LMI matrix has non-finite entries".into()));
    }
    let scale = m.amax();
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidInput(format!("LMI matrix not symmetric ({asym:e})")));
    }
    Ok(())
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Solver settings. `tol` is the relative duality gap target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    pub tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            tol: 1e-7,
            feas_tol: 1e-9,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub y: DVector<f64>,
    pub objective_value: f64,
    pub status: SolveStatus,
    /// Relative gap between primal and dual objectives at termination.
    pub duality_gap: f64,
    pub iterations: usize,
}

//! Monte Carlo campaigns: sample channels and errors, design beams with each
//! scheme, evaluate them on independent true errors and aggregate power,
//! outage, convergence and rank-one statistics.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{effective_sinrs, linear_to_db, BeamformerSet, ChannelSet, ErrorSet, QosTargets};
use crate::robust::{run, solve_nonrobust, SolverConfig};
use crate::sampling::{derive_seed, sample_channel, sample_error_ball};
use crate::sdr::solve_power_min;

/// An SINR counts as an outage when it falls short of its target by more
/// than this relative amount.
pub const OUTAGE_REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Robust,
    Nonrobust,
    PerfectCsi,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Robust, Scheme::Nonrobust, Scheme::PerfectCsi];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Robust => "robust",
            Scheme::Nonrobust => "nonrobust",
            Scheme::PerfectCsi => "perfect_csi",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub n_t: usize,
    pub users: usize,
    pub gamma_db_list: Vec<f64>,
    pub epsilon: f64,
    pub sigma2: f64,
    pub n_channels: usize,
    pub n_errors_per_channel: usize,
    pub solver: SolverConfig,
    pub master_seed: u64,
    pub output_path: PathBuf,
    pub schemes: Vec<Scheme>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            n_t: 3,
            users: 3,
            gamma_db_list: (0..=10).step_by(2).map(f64::from).collect(),
            epsilon: 0.01,
            sigma2: 0.01,
            n_channels: 500,
            n_errors_per_channel: 100,
            solver: SolverConfig::default(),
            master_seed: 0,
            output_path: PathBuf::from("results"),
            schemes: Scheme::ALL.to_vec(),
        }
    }
}

impl CampaignConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: CampaignConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.users == 0 {
            return Err(Error::Config("n_t and users must be positive".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Config(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if self.gamma_db_list.iter().any(|g| !g.is_finite()) {
            return Err(Error::Config("gamma_db_list entries must be finite".into()));
        }
        let mut seen = self.schemes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.schemes.len() {
            return Err(Error::Config("schemes contain duplicates".into()));
        }
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Estimated channels of realization `c`, in SIC order.
    pub fn channel_realization(&self, c: usize) -> Result<ChannelSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.master_seed, &[0, c as u64]));
        let est = (0..self.users).map(|_| sample_channel(&mut rng, self.n_t)).collect();
        Ok(ChannelSet::new(est, self.epsilon, self.sigma2)?.canonicalize_order().0)
    }

    /// True error draw `k` of channel realization `c`.
    pub fn error_realization(&self, c: usize, k: usize) -> Result<ErrorSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.master_seed, &[1, c as u64, k as u64]));
        ErrorSet::new(
            (0..self.users)
                .map(|_| sample_error_ball(&mut rng, self.n_t, self.epsilon))
                .collect(),
            self.epsilon,
        )
    }

    fn solver_for(&self, c: usize, g: usize) -> SolverConfig {
        SolverConfig {
            seed: derive_seed(self.master_seed, &[2, c as u64, g as u64]),
            ..self.solver
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Effective SINR per user, linear.
    pub sinr: Vec<f64>,
    pub outage: Vec<bool>,
}

/// Effective SINRs of designed beams under the true channels `ĥ + e`.
pub fn evaluate_realization(
    beams: &BeamformerSet,
    estimates: &ChannelSet,
    true_errors: &ErrorSet,
    targets: &QosTargets,
) -> Result<Evaluation> {
    let sinr = effective_sinrs(estimates, true_errors, beams)?;
    let outage = sinr
        .iter()
        .zip(targets.gamma())
        .map(|(s, g)| *s < g * (1.0 - OUTAGE_REL_TOL))
        .collect();
    Ok(Evaluation { sinr, outage })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrSample {
    pub user: usize,
    pub sinr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub gamma_db: f64,
    /// Successful designs (one per channel, or per channel and error for
    /// the perfect-CSI baseline).
    pub designs: usize,
    pub infeasible_count: usize,
    /// Mean transmit power of successful designs; `None` without any.
    pub mean_power_mw: Option<f64>,
    pub power_std_err_mw: Option<f64>,
    pub evaluations: usize,
    pub outage_events: usize,
    pub outage_probability: f64,
    /// `mean_power_mw / (1 − outage_probability)`; `None` at full outage.
    pub outage_adjusted_power_mw: Option<f64>,
    /// Designs whose final relaxation was rank one without randomisation,
    /// as a fraction of successful designs.
    pub feasibility_ratio: Option<f64>,
    pub rank_one_designs: usize,
    /// Robust runs only: buckets `1..=i_max`, the last one absorbing runs
    /// that hit the iteration cap without converging.
    pub iteration_histogram: Vec<usize>,
    pub converged_runs: usize,
    #[serde(skip)]
    pub sinr_samples_db: Vec<SinrSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    pub results: Vec<SchemeResult>,
    pub wall_time_s: f64,
}

impl CampaignResult {
    pub fn get(&self, scheme: Scheme, gamma_db: f64) -> Option<&SchemeResult> {
        self.results
            .iter()
            .find(|r| r.scheme == scheme && r.gamma_db == gamma_db)
    }

    /// Robust iteration histogram pooled over all targets.
    pub fn pooled_histogram(&self) -> Vec<usize> {
        let mut out = vec![0; self.config.solver.i_max];
        for r in self.results.iter().filter(|r| r.scheme == Scheme::Robust) {
            for (o, c) in out.iter_mut().zip(&r.iteration_histogram) {
                *o += c;
            }
        }
        out
    }
}

/// Outcome of one design and its evaluations.
#[derive(Debug, Default)]
struct Item {
    powers: Vec<f64>,
    infeasible: usize,
    rank_one: usize,
    iterations: Option<(usize, bool)>,
    evaluations: usize,
    outages: usize,
    samples: Vec<SinrSample>,
}

impl Item {
    fn record(&mut self, ev: &Evaluation) {
        self.evaluations += 1;
        self.outages += ev.outage.iter().filter(|&&o| o).count();
        self.samples.extend(ev.sinr.iter().enumerate().map(|(user, &s)| SinrSample {
            user,
            sinr_db: linear_to_db(s),
        }));
    }

    fn record_infeasible(&mut self, evaluations: usize, users: usize) {
        self.infeasible += 1;
        self.evaluations += evaluations;
        self.outages += evaluations * users;
    }
}

/// Designs with `scheme` on channel realization `c` and evaluates on its
/// error draws. Solver failures become infeasible designs.
fn run_item(cfg: &CampaignConfig, scheme: Scheme, g: usize, c: usize) -> Result<Item> {
    let gamma_db = cfg.gamma_db_list[g];
    let targets = QosTargets::uniform_db(gamma_db, cfg.users)?;
    let ch = cfg.channel_realization(c)?;
    let errors: Vec<ErrorSet> = (0..cfg.n_errors_per_channel)
        .map(|k| cfg.error_realization(c, k))
        .collect::<Result<_>>()?;
    let solver = cfg.solver_for(c, g);
    let mut item = Item::default();
    let design = match scheme {
        Scheme::Robust => run(&ch, &targets, &solver).map(|r| {
            item.iterations = Some((r.iterations, r.converged));
            (r.beams, r.rank_one_all && !r.used_randomization)
        }),
        Scheme::Nonrobust => solve_nonrobust(&ch, &targets, &solver)
            .map(|r| (r.beams.clone(), r.rank_one_all() && !r.used_randomization)),
        Scheme::PerfectCsi => {
            for e in &errors {
                let truth = ch.perturbed(e)?;
                let zero = ErrorSet::zeros(cfg.users, cfg.n_t);
                match solve_power_min(&truth, &zero, &targets, &solver_sdr(&solver)) {
                    Ok(r) => {
                        item.powers.push(r.beams.total_power());
                        if r.rank_one_all() && !r.used_randomization {
                            item.rank_one += 1;
                        }
                        item.record(&evaluate_realization(&r.beams, &truth, &zero, &targets)?);
                    }
                    Err(Error::Solver { .. }) => item.record_infeasible(1, cfg.users),
                    Err(other) => return Err(other),
                }
            }
            return Ok(item);
        }
    };
    match design {
        Ok((beams, rank_one)) => {
            item.powers.push(beams.total_power());
            item.rank_one += usize::from(rank_one);
            for e in &errors {
                item.record(&evaluate_realization(&beams, &ch, e, &targets)?);
            }
        }
        Err(Error::Solver { .. }) => item.record_infeasible(errors.len(), cfg.users),
        Err(other) => return Err(other),
    }
    Ok(item)
}

fn solver_sdr(s: &SolverConfig) -> crate::sdr::SdrOptions {
    crate::sdr::SdrOptions {
        sdp: s.sdp_options(),
        rank_one_threshold: s.rank_one_threshold,
        randomization_trials: s.randomization_trials,
        seed: s.seed,
    }
}

fn aggregate(cfg: &CampaignConfig, scheme: Scheme, gamma_db: f64, items: Vec<Item>) -> SchemeResult {
    let mut powers = Vec::new();
    let mut hist = vec![0; cfg.solver.i_max];
    let mut r = SchemeResult {
        scheme,
        gamma_db,
        designs: 0,
        infeasible_count: 0,
        mean_power_mw: None,
        power_std_err_mw: None,
        evaluations: 0,
        outage_events: 0,
        outage_probability: 0.0,
        outage_adjusted_power_mw: None,
        feasibility_ratio: None,
        rank_one_designs: 0,
        iteration_histogram: Vec::new(),
        converged_runs: 0,
        sinr_samples_db: Vec::new(),
    };
    for item in items {
        powers.extend(item.powers);
        r.infeasible_count += item.infeasible;
        r.rank_one_designs += item.rank_one;
        r.evaluations += item.evaluations;
        r.outage_events += item.outages;
        if let Some((iters, converged)) = item.iterations {
            hist[iters.clamp(1, cfg.solver.i_max) - 1] += 1;
            r.converged_runs += usize::from(converged);
        }
        r.sinr_samples_db.extend(item.samples);
    }
    r.designs = powers.len();
    if !powers.is_empty() {
        let n = powers.len() as f64;
        let mean = powers.iter().sum::<f64>() / n;
        r.mean_power_mw = Some(mean);
        r.power_std_err_mw = Some(if powers.len() > 1 {
            (powers.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        });
        r.feasibility_ratio = Some(r.rank_one_designs as f64 / n);
    }
    let pairs = r.evaluations * cfg.users;
    if pairs > 0 {
        r.outage_probability = r.outage_events as f64 / pairs as f64;
    }
    r.outage_adjusted_power_mw = match r.mean_power_mw {
        Some(m) if r.outage_probability < 1.0 => Some(m / (1.0 - r.outage_probability)),
        _ => None,
    };
    if scheme == Scheme::Robust {
        r.iteration_histogram = hist;
    }
    r
}

/// Runs every (Γ, scheme, channel) design in parallel. Results do not
/// depend on scheduling.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignResult> {
    cfg.validate()?;
    let start = Instant::now();
    let keys: Vec<(usize, Scheme)> = (0..cfg.gamma_db_list.len())
        .flat_map(|g| cfg.schemes.iter().map(move |&s| (g, s)))
        .collect();
    let work: Vec<(usize, Scheme, usize)> = keys
        .iter()
        .flat_map(|&(g, s)| (0..cfg.n_channels).map(move |c| (g, s, c)))
        .collect();
    let items: Vec<Item> = work
        .par_iter()
        .map(|&(g, s, c)| run_item(cfg, s, g, c))
        .collect::<Result<_>>()?;
    let mut items = items.into_iter();
    let results = keys
        .iter()
        .map(|&(g, s)| {
            let chunk: Vec<Item> = items.by_ref().take(cfg.n_channels).collect();
            aggregate(cfg, s, cfg.gamma_db_list[g], chunk)
        })
        .collect();
    Ok(CampaignResult {
        config: cfg.clone(),
        results,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const SINR_FILE: &str = "sinr_samples.csv";
pub const HISTOGRAM_FILE: &str = "iteration_histogram.csv";
pub const POWER_FILE: &str = "power_vs_gamma.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: CampaignConfig,
    pub results: Vec<SchemeResult>,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

/// Writes the summary document and the three tables into `dir`. Wall time
/// is left out so that equal campaigns give identical files.
pub fn export_results(result: &CampaignResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = Summary {
        config: result.config.clone(),
        results: result.results.clone(),
    };
    let summary_path = dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&summary_path, text + "\n").map_err(|e| Error::io(&summary_path, e))?;

    let sinr_path = dir.join(SINR_FILE);
    let mut w = csv::Writer::from_path(&sinr_path).map_err(|e| csv_err(&sinr_path, e))?;
    w.write_record(["scheme", "gamma_db", "user", "sinr_db"])
        .map_err(|e| csv_err(&sinr_path, e))?;
    for r in &result.results {
        for s in &r.sinr_samples_db {
            w.write_record([
                r.scheme.name().to_string(),
                r.gamma_db.to_string(),
                s.user.to_string(),
                s.sinr_db.to_string(),
            ])
            .map_err(|e| csv_err(&sinr_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&sinr_path, e))?;

    let hist_path = dir.join(HISTOGRAM_FILE);
    let mut w = csv::Writer::from_path(&hist_path).map_err(|e| csv_err(&hist_path, e))?;
    w.write_record(["iterations", "count"]).map_err(|e| csv_err(&hist_path, e))?;
    if result.config.schemes.contains(&Scheme::Robust) && result.config.n_channels > 0 {
        for (i, c) in result.pooled_histogram().iter().enumerate() {
            w.write_record([(i + 1).to_string(), c.to_string()])
                .map_err(|e| csv_err(&hist_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&hist_path, e))?;

    let power_path = dir.join(POWER_FILE);
    let mut w = csv::Writer::from_path(&power_path).map_err(|e| csv_err(&power_path, e))?;
    w.write_record(["scheme", "gamma_db", "mean_power_mw", "adjusted_power_mw"])
        .map_err(|e| csv_err(&power_path, e))?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    if result.config.n_channels > 0 {
        for r in &result.results {
            w.write_record([
                r.scheme.name().to_string(),
                r.gamma_db.to_string(),
                opt(r.mean_power_mw),
                opt(r.outage_adjusted_power_mw),
            ])
            .map_err(|e| csv_err(&power_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&power_path, e))?;

    Ok(vec![summary_path, sinr_path, hist_path, power_path])
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ComplexVec, C64};

    fn small() -> CampaignConfig {
        CampaignConfig {
            n_t: 2,
            users: 2,
            gamma_db_list: vec![0.0, 6.0],
            n_channels: 3,
            n_errors_per_channel: 4,
            master_seed: 11,
            ..CampaignConfig::default()
        }
    }

    #[test]
    fn config_toml_roundtrip_and_defaults() {
        let cfg = small();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(CampaignConfig::from_toml_str(&text).unwrap(), cfg);
        let partial = CampaignConfig::from_toml_str("users = 2\nschemes = [\"robust\"]\n[solver]\ni_max = 5\n").unwrap();
        assert_eq!(partial.users, 2);
        assert_eq!(partial.n_t, 3);
        assert_eq!(partial.solver.i_max, 5);
        assert_eq!(partial.solver.delta_tol, 1e-4);
        assert!(CampaignConfig::from_toml_str("bogus = 1").is_err());
        assert!(CampaignConfig::from_toml_str("epsilon = -1.0").is_err());
        assert!(CampaignConfig::from_toml_str("schemes = [\"robust\", \"robust\"]").is_err());
    }

    #[test]
    fn evaluation_edge_cases() {
        let ch = ChannelSet::new(
            vec![ComplexVec::from_real(&[0.5, 0.1]).unwrap(), ComplexVec::from_real(&[1.0, 0.0]).unwrap()],
            0.0,
            0.01,
        )
        .unwrap();
        let e = ErrorSet::zeros(2, 2);
        let zero = BeamformerSet::zeros(2, 2);
        let ev = evaluate_realization(&zero, &ch, &e, &QosTargets::uniform_db(0.0, 2).unwrap()).unwrap();
        assert_eq!(ev.outage, vec![true, true]);
        let w = BeamformerSet::new(vec![
            ComplexVec::new(vec![C64::new(0.3, 0.0), C64::new(0.0, 0.1)]).unwrap(),
            ComplexVec::from_real(&[0.2, 0.0]).unwrap(),
        ])
        .unwrap();
        let ev = evaluate_realization(&w, &ch, &e, &QosTargets::from_linear(vec![1e-12, 1e-12]).unwrap()).unwrap();
        assert_eq!(ev.outage, vec![false, false]);
    }

    #[test]
    fn small_campaign_invariants() {
        let cfg = small();
        let r = run_campaign(&cfg).unwrap();
        assert_eq!(r.results.len(), 6);
        for s in &r.results {
            assert!((0.0..=1.0).contains(&s.outage_probability));
            if let (Some(m), Some(a)) = (s.mean_power_mw, s.outage_adjusted_power_mw) {
                assert!(a >= m);
                assert_eq!(a == m, s.outage_probability == 0.0);
            }
            if let Some(f) = s.feasibility_ratio {
                assert!((0.0..=1.0).contains(&f));
            }
            match s.scheme {
                Scheme::Robust => {
                    assert_eq!(s.iteration_histogram.iter().sum::<usize>(), s.designs);
                    assert!(s.converged_runs <= s.designs);
                }
                Scheme::PerfectCsi => {
                    assert_eq!(s.designs + s.infeasible_count, 12);
                    assert_eq!(s.outage_events, s.infeasible_count * 2);
                }
                Scheme::Nonrobust => assert!(s.iteration_histogram.is_empty()),
            }
            assert_eq!(s.evaluations, 12);
        }
        assert_eq!(run_campaign(&cfg).unwrap().results, r.results);
    }

    #[test]
    fn export_roundtrip_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_campaign(&small()).unwrap();
        export_results(&r, dir.path()).unwrap();
        let back = read_summary(&dir.path().join(SUMMARY_FILE)).unwrap();
        assert_eq!(back.config, r.config);
        for (a, b) in back.results.iter().zip(&r.results) {
            let mut b = b.clone();
            b.sinr_samples_db.clear();
            assert_eq!(a, &b);
        }
        let power = fs::read_to_string(dir.path().join(POWER_FILE)).unwrap();
        assert_eq!(power.lines().count(), 1 + 6);

        let empty = CampaignConfig {
            n_channels: 0,
            ..small()
        };
        let r = run_campaign(&empty).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_results(&r, dir.path()).unwrap();
        for (f, header) in [
            (SINR_FILE, "scheme,gamma_db,user,sinr_db"),
            (HISTOGRAM_FILE, "iterations,count"),
            (POWER_FILE, "scheme,gamma_db,mean_power_mw,adjusted_power_mw"),
        ] {
            assert_eq!(fs::read_to_string(dir.path().join(f)).unwrap(), format!("{header}\n"));
        }
    }
}

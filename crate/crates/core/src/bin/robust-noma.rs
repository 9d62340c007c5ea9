use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use robust_noma::campaign::{export_results, run_campaign, CampaignConfig, Scheme};
use robust_noma::model::{linear_to_db, qos_margins, ComplexVec, ErrorSet, QosTargets};
use robust_noma::robust::{run, solve_nonrobust};
use robust_noma::{selftest, Result};

#[derive(Parser)]
#[command(name = "robust-noma", version, about = "Robust beamforming for downlink MISO NOMA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design beams for one channel realization and print them.
    Solve(Overrides),
    /// Run a Monte Carlo sweep and write result tables.
    Campaign(Overrides),
    /// Run the built-in oracle checks.
    Selftest,
}

#[derive(Args)]
struct Overrides {
    /// TOML file with campaign settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated SINR targets in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    gamma_db: Option<Vec<f64>>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    errors_per_channel: Option<usize>,
    /// Comma-separated subset of robust, nonrobust, perfect_csi.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    imax: Option<usize>,
    /// Convergence threshold on the beam change.
    #[arg(long)]
    tol: Option<f64>,
}

impl Overrides {
    fn resolve(self) -> Result<CampaignConfig> {
        let mut cfg = match &self.config {
            Some(p) => CampaignConfig::load(p)?,
            None => CampaignConfig::default(),
        };
        macro_rules! set {
            ($field:ident => $($target:tt)+) => {
                if let Some(v) = self.$field {
                    cfg.$($target)+ = v;
                }
            };
        }
        set!(seed => master_seed);
        set!(gamma_db => gamma_db_list);
        set!(epsilon => epsilon);
        set!(sigma2 => sigma2);
        set!(nt => n_t);
        set!(users => users);
        set!(channels => n_channels);
        set!(errors_per_channel => n_errors_per_channel);
        set!(schemes => schemes);
        set!(out => output_path);
        set!(imax => solver.i_max);
        set!(tol => solver.delta_tol);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fmt_vec(v: &ComplexVec) -> String {
    let parts: Vec<String> = v.entries().iter().map(|z| format!("{:+.6}{:+.6}j", z.re, z.im)).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_db(x: f64) -> String {
    format!("{:.3} dB", linear_to_db(x))
}

fn solve(cfg: &CampaignConfig) -> Result<()> {
    let ch = cfg.channel_realization(0)?;
    println!("channel realization 0 (seed {}), users in SIC order:", cfg.master_seed);
    for (u, h) in ch.estimates().iter().enumerate() {
        println!("  h[{u}] = {}  |h| = {:.6}", fmt_vec(h), h.norm());
    }
    let zero = ErrorSet::zeros(cfg.users, cfg.n_t);
    for &g in &cfg.gamma_db_list {
        let targets = QosTargets::uniform_db(g, cfg.users)?;
        for &scheme in &cfg.schemes {
            let (beams, errors, detail) = match scheme {
                Scheme::Robust => {
                    let r = run(&ch, &targets, &cfg.solver)?;
                    let detail = format!(
                        "iterations {} converged {} rank_one {}",
                        r.iterations, r.converged, r.rank_one_all
                    );
                    (r.beams, r.errors, detail)
                }
                Scheme::Nonrobust => {
                    let r = solve_nonrobust(&ch, &targets, &cfg.solver)?;
                    let detail = format!("rank_one {}", r.rank_one_all());
                    (r.beams, zero.clone(), detail)
                }
                // needs a true channel; only meaningful inside a campaign
                Scheme::PerfectCsi => continue,
            };
            println!("\n[{scheme}] gamma = {g} dB  power = {:.6e} mW  {detail}", beams.total_power());
            let margins = qos_margins(&beams, &ch, &errors, &targets)?;
            for (u, (w, m)) in beams.beams().iter().zip(&margins).enumerate() {
                println!(
                    "  w[{u}] = {}\n    sinr margin {:+.3e} (target {})",
                    fmt_vec(w),
                    m,
                    fmt_db(targets.gamma()[u])
                );
            }
        }
    }
    Ok(())
}

fn campaign(cfg: &CampaignConfig) -> Result<()> {
    let result = run_campaign(cfg)?;
    let files = export_results(&result, &cfg.output_path)?;
    println!(
        "{:<12} {:>8} {:>14} {:>10} {:>14} {:>8} {:>6}",
        "scheme", "gamma_db", "mean_mw", "outage", "adjusted_mw", "feas", "infeas"
    );
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "-".into());
    for r in &result.results {
        println!(
            "{:<12} {:>8} {:>14} {:>10.4} {:>14} {:>8} {:>6}",
            r.scheme.name(),
            r.gamma_db,
            opt(r.mean_power_mw),
            r.outage_probability,
            opt(r.outage_adjusted_power_mw),
            r.feasibility_ratio.map(|f| format!("{f:.4}")).unwrap_or_else(|| "-".into()),
            r.infeasible_count
        );
    }
    eprintln!("finished in {:.1} s", result.wall_time_s);
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(o) => o.resolve().and_then(|c| solve(&c)),
        Command::Campaign(o) => o.resolve().and_then(|c| campaign(&c)),
        Command::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                println!(
                    "{} {:<45} worst {:.3e} ({:.2} s)",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.worst,
                    c.seconds
                );
            }
            if checks.iter().all(|c| c.passed) {
                Ok(())
            } else {
                return ExitCode::FAILURE;
            }
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

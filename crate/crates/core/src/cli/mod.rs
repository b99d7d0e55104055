//! Config-driven experiment runner.

mod config;
mod run;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use config::*;
pub use run::{render_csv, render_json, run_experiment, write_outputs, RunOutput};
pub use table::{Summary, Table};

use crate::error::Error;

pub struct KindInfo {
    pub kind: &'static str,
    pub family: &'static str,
    pub about: &'static str,
    pub params: &'static [&'static str],
}

pub const REGISTRY: &[KindInfo] = &[
    KindInfo { kind: "separation", family: "detection", about: "fluctuation-to-gap ratio of λ_max between spiked Wigner and GOE", params: &["n", "lambda_grid", "mc_budget"] },
    KindInfo { kind: "lr_second_moment", family: "detection", about: "‖L_n‖² for the Rademacher spike, exact and Monte Carlo", params: &["n_grid", "lambda_grid", "mc_budget"] },
    KindInfo { kind: "goe_edge", family: "random matrices", about: "top eigenvalue of the normalized GOE", params: &["n", "draws"] },
    KindInfo { kind: "bbp", family: "random matrices", about: "top-eigenvector overlap in spiked Wigner across the spectral transition", params: &["n", "snr_grid", "draws"] },
    KindInfo { kind: "sbm_ldlr", family: "low-degree (SBM)", about: "degree-D likelihood-ratio norm bound for the k-community SBM", params: &["n_grid", "k", "degree", "d", "d_eta2_grid", "mc_budget"] },
    KindInfo { kind: "cumulant", family: "low-degree (estimation)", about: "cumulants κ_α for planted submatrix, closed-form and enumerated moments", params: &["n", "lambda", "rho", "degree"] },
    KindInfo { kind: "advantage", family: "low-degree (testing)", about: "r_α recursion advantage bounds for binary community models", params: &["n", "k", "q", "s_grid", "m_planted", "m_null", "degree"] },
    KindInfo { kind: "triangle", family: "detection", about: "signed triangle count under the binary community model", params: &["n", "k", "q", "s", "m", "draws", "replications"] },
    KindInfo { kind: "scalar_channel", family: "free energy", about: "scalar Gaussian channel: ψ, MMSE and the I-MMSE residual", params: &["priors", "lambda_grid", "h"] },
    KindInfo { kind: "nishimori", family: "free energy", about: "Nishimori identities on exact small-n posteriors", params: &["n", "lambda_grid", "bias", "draws"] },
    KindInfo { kind: "needle", family: "free energy", about: "needle-in-a-haystack free energy F_n(λ)", params: &["n", "lambda_grid", "draws"] },
    KindInfo { kind: "rs_fixed_point", family: "free energy", about: "replica-symmetric fixed point q*(λ) and MMSE limit", params: &["prior", "lambda_grid", "tol"] },
    KindInfo { kind: "fp_ld", family: "Franz–Parisi", about: "LD(D,λ) ≤ FP(D̃,λ) + e^{−D} sandwich and the Boolean counterexample", params: &["n", "degrees", "lambda_grid", "mc_budget", "boolean_n", "boolean_target", "boolean_degree"] },
    KindInfo { kind: "mcmc_stationarity", family: "MCMC", about: "Metropolis occupation against the exact Gibbs table; detailed balance", params: &["n", "k", "k_prime", "lambda", "beta_grid", "steps"] },
    KindInfo { kind: "hitting_time", family: "MCMC", about: "escape times from free-energy wells against t·e^{−D}", params: &["n", "k", "k_prime", "lambda_grid", "beta_grid", "t_grid", "replicas"] },
    KindInfo { kind: "fp_barrier", family: "MCMC", about: "Gibbs mass ratio across the overlap barrier against the FP bound", params: &["set", "lambda_grid", "eps", "degree", "draws"] },
    KindInfo { kind: "local_chain", family: "MCMC", about: "hitting times of local chains on transitive sets", params: &["set", "lambda_grid", "eps", "degree", "replicas"] },
    KindInfo { kind: "npp_ogp", family: "overlap gap (NPP)", about: "exhaustive scans for near-optimal pairs in the forbidden overlap band", params: &["n", "eps", "draws", "rho"] },
    KindInfo { kind: "npp_certificate", family: "overlap gap (NPP)", about: "first-moment exponent over (ε, ρ)", params: &["n", "eps_grid", "rho_grid"] },
    KindInfo { kind: "npp_gibbs", family: "overlap gap (NPP)", about: "Gibbs masses of the overlap sets at low temperature", params: &["n", "eps", "draws", "rho"] },
    KindInfo { kind: "interpolation", family: "overlap gap (p-spin)", about: "marginals along the interpolation path between two p-spin tensors", params: &["n", "p", "steps", "draws"] },
    KindInfo { kind: "poly_stability", family: "overlap gap (stability)", about: "mean and tail stability of the Hermite polynomial corpus", params: &["corpus_size", "rho_grid", "draws"] },
    KindInfo { kind: "hypercontractivity", family: "overlap gap (stability)", about: "moment growth E‖f‖^{2q} of a random Hermite polynomial", params: &["dim", "out", "degree", "terms", "q_grid", "draws"] },
    KindInfo { kind: "eogp_events", family: "overlap gap (p-spin)", about: "the three incompatible events along interpolation paths", params: &["n", "p", "steps", "polys", "degree", "terms", "randomize_signs", "mu", "nu1", "nu2", "gamma", "c"] },
    KindInfo { kind: "sk_sandwich", family: "SK certification", about: "sign rounding ≤ brute force ≤ spectral certificate on GOE draws", params: &["n", "draws"] },
    KindInfo { kind: "slepian", family: "SK certification", about: "Slepian comparison constant by Monte Carlo", params: &["n", "draws"] },
    KindInfo { kind: "quiet_planting", family: "SK certification", about: "λ_max AUC between GOE and quietly planted SK", params: &["n", "c_grid", "draws"] },
];

#[derive(Parser, Debug)]
#[command(name = "sclab", version, about = "Seeded numerical experiments on statistical-to-computational gaps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one experiment config and write CSV + JSON.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
        /// Worker count. Execution is currently sequential; the value is recorded only.
        #[arg(long, env = "SCLAB_THREADS", default_value_t = 1)]
        threads: usize,
        /// Output directory; defaults to the config's `output`, then `results/`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List experiment kinds and their parameters.
    List,
    /// Parse and check a config without running it.
    Validate { config: PathBuf },
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParam { .. } | Error::Unsupported(_) => 2,
        Error::Numeric(_) | Error::Budget(_) => 3,
        Error::Io(_) => 1,
    }
}

pub fn list_text() -> String {
    let mut s = String::new();
    for k in REGISTRY {
        s.push_str(&format!("{:<20} [{}] {}\n{:<20} params: seed, {}\n", k.kind, k.family, k.about, "", k.params.join(", ")));
    }
    s
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::List => {
            print!("{}", list_text());
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("ok: {} (hash {})", cfg.experiment.kind(), cfg.hash());
            Ok(())
        }
        Command::Run { config, seed_override, threads, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed_override {
                cfg.seed = s;
            }
            if threads == 0 {
                return Err(Error::Config("--threads must be ≥ 1".into()));
            }
            let dir = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("results"));
            let res = run_experiment(&cfg)?;
            for p in write_outputs(&res, &dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

pub fn main_with_args() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_matches_enum() {
        assert!(REGISTRY.len() >= 16);
        let mut kinds: Vec<_> = REGISTRY.iter().map(|k| k.kind).collect();
        kinds.sort();
        kinds.dedup();
        assert_eq!(kinds.len(), REGISTRY.len());
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::freeenergy::ScalarPrior;
use crate::mcmc::TransitiveSet;

pub const SCHEMA_VERSION: u32 = 1;

/// One experiment per file. `seed` is required; everything the run depends
/// on lives here so that the hash identifies the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Output file stem; defaults to the experiment kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Output directory; `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        self.experiment.validate()
    }

    pub fn stem(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.experiment.kind().to_string())
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON form, output
    /// location excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Separation(Separation),
    LrSecondMoment(LrSecondMoment),
    GoeEdge(GoeEdge),
    Bbp(Bbp),
    SbmLdlr(SbmLdlr),
    Cumulant(Cumulant),
    Advantage(Advantage),
    Triangle(Triangle),
    ScalarChannel(ScalarChannel),
    Nishimori(Nishimori),
    Needle(Needle),
    RsFixedPoint(RsFixedPoint),
    FpLd(FpLd),
    McmcStationarity(McmcStationarity),
    HittingTime(HittingTime),
    FpBarrier(FpBarrier),
    LocalChain(LocalChain),
    NppOgp(NppOgp),
    NppCertificate(NppCertificate),
    NppGibbs(NppGibbs),
    Interpolation(Interpolation),
    PolyStability(PolyStability),
    Hypercontractivity(Hypercontractivity),
    EogpEvents(EogpEvents),
    SkSandwich(SkSandwich),
    Slepian(Slepian),
    QuietPlanting(QuietPlanting),
}

macro_rules! params {
    ($name:ident { $($(#[$m:meta])* $field:ident : $ty:ty),* $(,)? }) => {
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name { $($(#[$m])* pub $field: $ty),* }
    };
}

params!(Separation { n: usize, lambda_grid: Vec<f64>, mc_budget: usize });
params!(LrSecondMoment { n_grid: Vec<usize>, lambda_grid: Vec<f64>, mc_budget: usize });
params!(GoeEdge { n: usize, draws: usize });
params!(Bbp { n: usize, snr_grid: Vec<f64>, draws: usize });
params!(SbmLdlr { n_grid: Vec<usize>, k: usize, degree: u32, d: f64, d_eta2_grid: Vec<f64>, mc_budget: usize });
params!(Cumulant { n: usize, lambda: f64, rho: f64, degree: u32 });
params!(Advantage { n: usize, k: f64, q: f64, s_grid: Vec<f64>, m_planted: usize, m_null: usize, degree: u32 });
params!(Triangle { n: usize, k: usize, q: f64, s: f64, m: usize, draws: usize, replications: usize });
params!(ScalarChannel { priors: Vec<ScalarPrior>, lambda_grid: Vec<f64>, h: f64 });
params!(Nishimori { n: usize, lambda_grid: Vec<f64>, bias: f64, draws: usize });
params!(Needle { n: usize, lambda_grid: Vec<f64>, draws: usize });
params!(RsFixedPoint { prior: ScalarPrior, lambda_grid: Vec<f64>, tol: f64 });
params!(FpLd {
    n: usize,
    degrees: Vec<u32>,
    lambda_grid: Vec<f64>,
    /// Overlap draws; 0 uses the exact overlap law.
    mc_budget: u64,
    boolean_n: usize,
    boolean_target: i64,
    boolean_degree: f64,
});
params!(McmcStationarity { n: usize, k: usize, k_prime: usize, lambda: f64, beta_grid: Vec<f64>, steps: u64 });
params!(HittingTime {
    n: usize,
    k: usize,
    k_prime: usize,
    lambda_grid: Vec<f64>,
    beta_grid: Vec<f64>,
    t_grid: Vec<u64>,
    replicas: usize,
});
params!(FpBarrier { set: TransitiveSet, lambda_grid: Vec<f64>, eps: f64, degree: f64, draws: usize });
params!(LocalChain { set: TransitiveSet, lambda_grid: Vec<f64>, eps: f64, degree: f64, replicas: usize });
params!(NppOgp { n: usize, eps: f64, draws: usize, rho: Option<f64> });
params!(NppCertificate { n: usize, eps_grid: Vec<f64>, rho_grid: Vec<f64> });
params!(NppGibbs { n: usize, eps: f64, draws: usize, rho: Option<f64> });
params!(Interpolation { n: usize, p: usize, steps: usize, draws: usize });
params!(PolyStability { corpus_size: usize, rho_grid: Vec<f64>, draws: usize });
params!(Hypercontractivity { dim: usize, out: usize, degree: u32, terms: usize, q_grid: Vec<f64>, draws: usize });
params!(EogpEvents {
    n: usize,
    p: usize,
    steps: usize,
    polys: usize,
    degree: u32,
    terms: usize,
    randomize_signs: bool,
    mu: f64,
    nu1: f64,
    nu2: f64,
    gamma: f64,
    c: f64,
});
params!(SkSandwich { n: usize, draws: usize });
params!(Slepian { n: usize, draws: usize });
params!(QuietPlanting { n: usize, c_grid: Vec<f64>, draws: usize });

fn need(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

fn nonempty<T>(v: &[T], name: &str) -> Result<()> {
    need(!v.is_empty(), || format!("`{name}` must not be empty"))
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Separation(_) => "separation",
            Experiment::LrSecondMoment(_) => "lr_second_moment",
            Experiment::GoeEdge(_) => "goe_edge",
            Experiment::Bbp(_) => "bbp",
            Experiment::SbmLdlr(_) => "sbm_ldlr",
            Experiment::Cumulant(_) => "cumulant",
            Experiment::Advantage(_) => "advantage",
            Experiment::Triangle(_) => "triangle",
            Experiment::ScalarChannel(_) => "scalar_channel",
            Experiment::Nishimori(_) => "nishimori",
            Experiment::Needle(_) => "needle",
            Experiment::RsFixedPoint(_) => "rs_fixed_point",
            Experiment::FpLd(_) => "fp_ld",
            Experiment::McmcStationarity(_) => "mcmc_stationarity",
            Experiment::HittingTime(_) => "hitting_time",
            Experiment::FpBarrier(_) => "fp_barrier",
            Experiment::LocalChain(_) => "local_chain",
            Experiment::NppOgp(_) => "npp_ogp",
            Experiment::NppCertificate(_) => "npp_certificate",
            Experiment::NppGibbs(_) => "npp_gibbs",
            Experiment::Interpolation(_) => "interpolation",
            Experiment::PolyStability(_) => "poly_stability",
            Experiment::Hypercontractivity(_) => "hypercontractivity",
            Experiment::EogpEvents(_) => "eogp_events",
            Experiment::SkSandwich(_) => "sk_sandwich",
            Experiment::Slepian(_) => "slepian",
            Experiment::QuietPlanting(_) => "quiet_planting",
        }
    }

    /// Shape checks that do not need the numerical modules; those report
    /// their own preconditions at run time.
    pub fn validate(&self) -> Result<()> {
        match self {
            Experiment::Separation(p) => nonempty(&p.lambda_grid, "lambda_grid"),
            Experiment::LrSecondMoment(p) => nonempty(&p.n_grid, "n_grid").and(nonempty(&p.lambda_grid, "lambda_grid")),
            Experiment::GoeEdge(p) => need(p.draws >= 2, || "`draws` must be ≥ 2".into()),
            Experiment::Bbp(p) => nonempty(&p.snr_grid, "snr_grid").and(need(p.draws >= 2, || "`draws` must be ≥ 2".into())),
            Experiment::SbmLdlr(p) => nonempty(&p.n_grid, "n_grid").and(nonempty(&p.d_eta2_grid, "d_eta2_grid")),
            Experiment::Cumulant(_) => Ok(()),
            Experiment::Advantage(p) => nonempty(&p.s_grid, "s_grid"),
            Experiment::Triangle(p) => need(p.draws >= 2 && p.replications >= 1, || "need draws ≥ 2 and replications ≥ 1".into()),
            Experiment::ScalarChannel(p) => nonempty(&p.priors, "priors").and(nonempty(&p.lambda_grid, "lambda_grid")),
            Experiment::Nishimori(p) => nonempty(&p.lambda_grid, "lambda_grid"),
            Experiment::Needle(p) => nonempty(&p.lambda_grid, "lambda_grid"),
            Experiment::RsFixedPoint(p) => nonempty(&p.lambda_grid, "lambda_grid"),
            Experiment::FpLd(p) => nonempty(&p.degrees, "degrees").and(nonempty(&p.lambda_grid, "lambda_grid")),
            Experiment::McmcStationarity(p) => nonempty(&p.beta_grid, "beta_grid"),
            Experiment::HittingTime(p) => nonempty(&p.lambda_grid, "lambda_grid")
                .and(nonempty(&p.beta_grid, "beta_grid"))
                .and(nonempty(&p.t_grid, "t_grid")),
            Experiment::FpBarrier(p) => nonempty(&p.lambda_grid, "lambda_grid"),
            Experiment::LocalChain(p) => nonempty(&p.lambda_grid, "lambda_grid"),
            Experiment::NppOgp(p) => need(p.draws >= 1, || "`draws` must be ≥ 1".into()),
            Experiment::NppCertificate(p) => nonempty(&p.eps_grid, "eps_grid").and(nonempty(&p.rho_grid, "rho_grid")),
            Experiment::NppGibbs(p) => need(p.draws >= 1, || "`draws` must be ≥ 1".into()),
            Experiment::Interpolation(p) => need(p.steps >= 1 && p.draws >= 1, || "need steps ≥ 1 and draws ≥ 1".into()),
            Experiment::PolyStability(p) => nonempty(&p.rho_grid, "rho_grid").and(need(p.corpus_size >= 1, || "`corpus_size` must be ≥ 1".into())),
            Experiment::Hypercontractivity(p) => nonempty(&p.q_grid, "q_grid"),
            Experiment::EogpEvents(p) => need(p.nu1 < p.nu2, || "need nu1 < nu2".into()),
            Experiment::SkSandwich(p) => need(p.draws >= 1, || "`draws` must be ≥ 1".into()),
            Experiment::Slepian(p) => need(p.draws >= 2, || "`draws` must be ≥ 2".into()),
            Experiment::QuietPlanting(p) => nonempty(&p.c_grid, "c_grid"),
        }
    }
}

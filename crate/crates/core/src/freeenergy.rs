//! Scalar-channel free energy, I-MMSE, Nishimori checks, the needle model and
//! the replica-symmetric fixed point for rank-one estimation.

use serde::{Deserialize, Serialize};

use crate::detect::bbp_overlap;
use crate::error::{ensure, invalid, Error, Result};
use crate::linalg::dot;
use crate::models::{normal, sample_spiked_wigner, PriorSpec};
use crate::quad::NormalRule;
use crate::rng::RngStream;
use crate::stats::{log_sum_exp, Estimate, Welford};
use rand::Rng as _;

pub const HERMITE_ORDER: usize = 60;
pub const PSI_TOL: f64 = 1e-6;
pub const LAMBDA_C_TOL: f64 = 1e-4;
pub const CLUSTER_TOL: f64 = 1e-8;
pub const FP_GRID: usize = 400;
pub const FP_STARTS: usize = 16;
pub const DEFAULT_DAMPING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "prior", rename_all = "snake_case")]
pub enum ScalarPrior {
    Rademacher,
    Gaussian,
    /// p δ_{√((1−p)/p)} + (1−p) δ_{−√(p/(1−p))}: mean 0, variance 1.
    TwoPoint { p: f64 },
}

impl ScalarPrior {
    pub fn validate(&self) -> Result<()> {
        match self {
            ScalarPrior::TwoPoint { p } => ensure(*p > 0.0 && *p < 1.0, "p", || format!("{p} not in (0,1)")),
            _ => Ok(()),
        }
    }

    /// Atoms and weights, or None for the Gaussian prior.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match *self {
            ScalarPrior::Rademacher => Some(vec![(1.0, 0.5), (-1.0, 0.5)]),
            ScalarPrior::Gaussian => None,
            ScalarPrior::TwoPoint { p } => Some(vec![(((1.0 - p) / p).sqrt(), p), (-(p / (1.0 - p)).sqrt(), 1.0 - p)]),
        }
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map_or(0.0, |a| a.iter().map(|(x, w)| x * w).sum())
    }

    pub fn second_moment(&self) -> f64 {
        self.atoms().map_or(1.0, |a| a.iter().map(|(x, w)| x * x * w).sum())
    }

    pub fn sample(&self, rng: &mut crate::rng::Rng) -> f64 {
        match *self {
            ScalarPrior::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            ScalarPrior::Gaussian => normal(rng),
            ScalarPrior::TwoPoint { p } => {
                if rng.random::<f64>() < p {
                    ((1.0 - p) / p).sqrt()
                } else {
                    -(p / (1.0 - p)).sqrt()
                }
            }
        }
    }
}

/// Y = √γ X + Z with X ~ P0, evaluated by quadrature over Z.
#[derive(Debug, Clone)]
pub struct ScalarChannel {
    pub prior: ScalarPrior,
    rule: NormalRule,
}

impl ScalarChannel {
    /// Discrete priors have a posterior that turns over a width ~1/√γ in Z,
    /// which Gauss–Hermite misses at moderate γ; they get a composite rule.
    pub fn new(prior: ScalarPrior) -> Result<Self> {
        prior.validate()?;
        let rule = match prior {
            ScalarPrior::Gaussian => NormalRule::gauss_hermite(HERMITE_ORDER),
            _ => NormalRule::composite_legendre(10.0, 200, 10),
        };
        Ok(Self { prior, rule })
    }

    pub fn with_rule(prior: ScalarPrior, rule: NormalRule) -> Result<Self> {
        prior.validate()?;
        Ok(Self { prior, rule })
    }

    pub fn second_moment(&self) -> f64 {
        self.prior.second_moment()
    }

    /// E[X | √γX + Z = y].
    pub fn posterior_mean(&self, y: f64, gamma: f64) -> f64 {
        match self.prior.atoms() {
            None => gamma.sqrt() * y / (1.0 + gamma),
            Some(atoms) => posterior_mean_atoms(&atoms, gamma.sqrt() * y, gamma),
        }
    }

    fn expect_xz(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let atoms = self.prior.atoms().expect("finite prior");
        atoms.iter().map(|&(x0, w)| w * self.rule.expect(|z| f(x0, z))).sum()
    }

    fn psi_raw(&self, gamma: f64) -> f64 {
        match self.prior.atoms() {
            None => 0.5 * (gamma - gamma.ln_1p()),
            Some(atoms) => {
                let sg = gamma.sqrt();
                let base: Vec<(f64, f64)> = atoms.iter().map(|&(x, w)| (x, w.ln() - 0.5 * gamma * x * x)).collect();
                self.expect_xz(|x0, z| {
                    let h = sg * z + gamma * x0;
                    let m = base.iter().map(|&(x, b)| b + h * x).fold(f64::NEG_INFINITY, f64::max);
                    m + base.iter().map(|&(x, b)| (b + h * x - m).exp()).sum::<f64>().ln()
                })
            }
        }
    }

    /// ψ′(γ) = ½ E[X·E[X|Y]], the Gaussian integration-by-parts form of the
    /// derivative of the integrand (no 1/√γ singularity at γ = 0).
    pub fn psi_prime(&self, gamma: f64) -> f64 {
        match self.prior.atoms() {
            None => 0.5 * gamma / (1.0 + gamma),
            Some(atoms) => {
                let sg = gamma.sqrt();
                0.5 * self.expect_xz(|x0, z| x0 * posterior_mean_atoms(&atoms, sg * z + gamma * x0, gamma))
            }
        }
    }

    /// E(X − E[X|Y])², computed directly from the posterior mean.
    pub fn mmse(&self, gamma: f64) -> f64 {
        match self.prior.atoms() {
            None => 1.0 / (1.0 + gamma),
            Some(atoms) => {
                let sg = gamma.sqrt();
                self.expect_xz(|x0, z| {
                    let m = posterior_mean_atoms(&atoms, sg * z + gamma * x0, gamma);
                    (x0 - m) * (x0 - m)
                })
            }
        }
    }
}

/// Posterior mean given the linear field h = √γ·y.
fn posterior_mean_atoms(atoms: &[(f64, f64)], h: f64, gamma: f64) -> f64 {
    let logs: Vec<f64> = atoms.iter().map(|&(x, w)| w.ln() + h * x - 0.5 * gamma * x * x).collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (&(x, _), &l) in atoms.iter().zip(&logs) {
        let e = (l - m).exp();
        num += x * e;
        den += e;
    }
    num / den
}

/// ψ_{P0}(γ), cross-checked against a finer rule.
pub fn scalar_psi(channel: &ScalarChannel, gamma: f64) -> Result<f64> {
    ensure(gamma >= 0.0 && gamma.is_finite(), "gamma", || format!("{gamma} must be finite and ≥ 0"))?;
    let v = channel.psi_raw(gamma);
    if channel.prior.atoms().is_some() {
        let fine = NormalRule::composite_legendre(12.0, 400, 12);
        let check = ScalarChannel { prior: channel.prior, rule: fine }.psi_raw(gamma);
        if (v - check).abs() > PSI_TOL {
            return Err(Error::Numeric(format!("quadrature unresolved at γ={gamma}: {v} vs {check}")));
        }
    }
    Ok(v)
}

pub fn scalar_mmse(channel: &ScalarChannel, lambda: f64) -> Result<f64> {
    ensure(lambda >= 0.0, "lambda", || format!("{lambda} < 0"))?;
    Ok(channel.mmse(lambda))
}

pub fn posterior_mean(channel: &ScalarChannel, y: f64, lambda: f64) -> Result<f64> {
    ensure(lambda >= 0.0, "lambda", || format!("{lambda} < 0"))?;
    Ok(channel.posterior_mean(y, lambda))
}

/// Monte Carlo estimate of ψ(γ) for cross-checking the quadrature.
pub fn scalar_psi_mc(prior: ScalarPrior, gamma: f64, budget: usize, stream: RngStream) -> Result<Estimate> {
    ensure(budget >= 2, "budget", || "need at least two draws".into())?;
    let mut rng = stream.rng();
    let sg = gamma.sqrt();
    let mut acc = Welford::default();
    for _ in 0..budget {
        let x0 = prior.sample(&mut rng);
        let z = normal(&mut rng);
        let v = match prior.atoms() {
            Some(atoms) => {
                let terms: Vec<f64> =
                    atoms.iter().map(|&(x, w)| w.ln() + sg * z * x + gamma * x * x0 - 0.5 * gamma * x * x).collect();
                log_sum_exp(&terms)
            }
            // ∫ N(x;0,1) exp(h x − γx²/2) dx = exp(h²/(2(1+γ)))/√(1+γ)
            None => {
                let h = sg * z + gamma * x0;
                h * h / (2.0 * (1.0 + gamma)) - 0.5 * gamma.ln_1p()
            }
        };
        acc.push(v);
    }
    Ok(acc.estimate())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ImmseReport {
    pub lambda: f64,
    pub h: f64,
    pub f_prime: f64,
    pub half_gap: f64,
    pub residual: f64,
    pub one_sided: bool,
}

/// Compares a finite difference of F = ψ against ½(E X² − MMSE(λ)). Below
/// λ = h a second-order one-sided stencil is used.
pub fn immse_check(channel: &ScalarChannel, lambda: f64, h: f64) -> Result<ImmseReport> {
    ensure((1e-4..=1e-2).contains(&h), "h", || format!("{h} not in [1e-4, 1e-2]"))?;
    ensure(lambda >= 0.0, "lambda", || format!("{lambda} < 0"))?;
    let f = |l: f64| channel.psi_raw(l);
    let one_sided = lambda < h;
    let f_prime = if one_sided {
        (-3.0 * f(lambda) + 4.0 * f(lambda + h) - f(lambda + 2.0 * h)) / (2.0 * h)
    } else {
        (f(lambda + h) - f(lambda - h)) / (2.0 * h)
    };
    let half_gap = 0.5 * (channel.second_moment() - channel.mmse(lambda));
    Ok(ImmseReport { lambda, h, f_prime, half_gap, residual: (f_prime - half_gap).abs(), one_sided })
}

/// Enumerated Gibbs measure with log-weights H(state).
#[derive(Debug, Clone)]
pub struct GibbsTable<S> {
    pub states: Vec<S>,
    pub log_weights: Vec<f64>,
    pub log_partition: f64,
}

impl<S> GibbsTable<S> {
    pub fn new(states: Vec<S>, log_weights: Vec<f64>) -> Result<Self> {
        ensure(!states.is_empty() && states.len() == log_weights.len(), "states", || "states/weights mismatch".into())?;
        let log_partition = log_sum_exp(&log_weights);
        if !log_partition.is_finite() {
            return Err(Error::Numeric("log partition function is not finite".into()));
        }
        Ok(Self { states, log_weights, log_partition })
    }

    pub fn prob(&self, i: usize) -> f64 {
        (self.log_weights[i] - self.log_partition).exp()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.states.len()).map(|i| self.prob(i)).collect()
    }

    pub fn normalization_error(&self) -> f64 {
        (self.probabilities().iter().sum::<f64>() - 1.0).abs()
    }

    pub fn expect(&self, mut f: impl FnMut(&S) -> f64) -> f64 {
        self.states.iter().enumerate().map(|(i, s)| self.prob(i) * f(s)).sum()
    }
}

pub const NISHIMORI_MAX_N: usize = 12;

#[derive(Debug, Clone, Serialize)]
pub struct NishimoriReport {
    pub n: usize,
    pub lambda: f64,
    /// E⟨xᵀX⟩ − E‖⟨x⟩‖² (equivalently E⟨x¹ᵀx²⟩).
    pub overlap_gap: Estimate,
    /// E⟨(x¹ᵀx²)²⟩ − E⟨(xᵀX)²⟩.
    pub squared_gap: Estimate,
    pub planted_overlap: f64,
    pub replica_overlap: f64,
}

impl NishimoriReport {
    pub fn within(&self, k: f64) -> bool {
        let ok = |e: &Estimate| e.mean.abs() <= k * e.stderr || e.mean.abs() < 1e-12;
        ok(&self.overlap_gap) && ok(&self.squared_gap)
    }
}

/// Y_ij = √(λ/n) X_iX_j + Z_ij for i<j with X_i ∈ {±1}, P(X_i = 1) = `bias`.
/// The posterior over {±1}^n is enumerated exactly for every Y draw.
pub fn nishimori_check(n: usize, lambda: f64, bias: f64, draws: usize, stream: RngStream) -> Result<NishimoriReport> {
    ensure(n <= NISHIMORI_MAX_N, "n", || format!("enumeration limited to n ≤ {NISHIMORI_MAX_N}"))
        .map_err(|_| Error::Budget(format!("2^{n} posterior states")))?;
    ensure(n >= 2, "n", || "need n ≥ 2".into())?;
    ensure(bias > 0.0 && bias < 1.0, "bias", || format!("{bias} not in (0,1)"))?;
    ensure(draws >= 2, "draws", || "need at least two draws".into())?;
    let mut rng = stream.rng();
    let c = (lambda / n as f64).sqrt();
    let field = 0.5 * (bias / (1.0 - bias)).ln();
    let spin = |s: u32, i: usize| if s >> i & 1 == 1 { 1.0 } else { -1.0 };
    let states: Vec<u32> = (0..1u32 << n).collect();
    let (mut g1, mut g2) = (Welford::default(), Welford::default());
    let (mut planted, mut replica) = (Welford::default(), Welford::default());
    let mut y = vec![0.0; n * n];
    for _ in 0..draws {
        let x: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < bias { 1.0 } else { -1.0 }).collect();
        for i in 0..n {
            for j in i + 1..n {
                y[i * n + j] = c * x[i] * x[j] + normal(&mut rng);
            }
        }
        let logw: Vec<f64> = states
            .iter()
            .map(|&s| {
                let mut h = 0.0;
                for i in 0..n {
                    let si = spin(s, i);
                    h += field * si;
                    for j in i + 1..n {
                        h += c * si * spin(s, j) * y[i * n + j];
                    }
                }
                h
            })
            .collect();
        let table = GibbsTable::new(states.clone(), logw)?;
        let p = table.probabilities();
        // first and second posterior moments ⟨x_i⟩, ⟨x_i x_j⟩
        let mut m1 = vec![0.0; n];
        let mut m2 = vec![0.0; n * n];
        for (&s, &ps) in states.iter().zip(&p) {
            for i in 0..n {
                let si = spin(s, i);
                m1[i] += ps * si;
                for j in 0..n {
                    m2[i * n + j] += ps * si * spin(s, j);
                }
            }
        }
        let a = dot(&m1, &x);
        let b = dot(&m1, &m1);
        let mut sq_rep = 0.0;
        let mut sq_pl = 0.0;
        for i in 0..n {
            for j in 0..n {
                sq_rep += m2[i * n + j] * m2[i * n + j];
                sq_pl += m2[i * n + j] * x[i] * x[j];
            }
        }
        g1.push(a - b);
        g2.push(sq_rep - sq_pl);
        planted.push(a);
        replica.push(b);
    }
    Ok(NishimoriReport {
        n,
        lambda,
        overlap_gap: g1.estimate(),
        squared_gap: g2.estimate(),
        planted_overlap: planted.mean(),
        replica_overlap: replica.mean(),
    })
}

pub const NEEDLE_MAX_N: usize = 24;

#[derive(Debug, Clone, Serialize)]
pub struct NeedlePoint {
    pub lambda: f64,
    pub free_energy: Estimate,
    pub mmse: Estimate,
    /// P(argmax_σ Y_σ = σ0).
    pub ml_success: f64,
}

/// Needle in a haystack: X = e_{σ0} in R^{2^n}, Y = √(λn)X + Z. All λ share
/// the same noise draws. With σ0 fixed (by symmetry) only Y_{σ0} carries
/// signal, so log Z_n = −n log 2 + LSE(√(λn)Z_σ − λn/2, plus λn at σ0).
pub fn needle_free_energy(n: usize, lambdas: &[f64], draws: usize, stream: RngStream) -> Result<Vec<NeedlePoint>> {
    if n > NEEDLE_MAX_N {
        return Err(Error::Budget(format!("2^{n} coordinates per draw exceeds 2^{NEEDLE_MAX_N}")));
    }
    ensure(n >= 1, "n", || "need n ≥ 1".into())?;
    ensure(draws >= 2, "draws", || "need at least two draws".into())?;
    for &l in lambdas {
        ensure(l >= 0.0, "lambda", || format!("{l} < 0"))?;
    }
    let mut rng = stream.rng();
    let mut z = vec![0.0; 1usize << n];
    let mut fe = vec![Welford::default(); lambdas.len()];
    let mut mm = vec![Welford::default(); lambdas.len()];
    let mut hits = vec![0usize; lambdas.len()];
    for _ in 0..draws {
        for v in z.iter_mut() {
            *v = normal(&mut rng);
        }
        for (k, d) in needle_draw(n, &z, lambdas).into_iter().enumerate() {
            fe[k].push(d.free_energy);
            mm[k].push(d.mmse);
            hits[k] += d.ml_hit as usize;
        }
    }
    Ok(lambdas
        .iter()
        .enumerate()
        .map(|(k, &l)| NeedlePoint {
            lambda: l,
            free_energy: if l == 0.0 { Estimate { n: draws, ..Estimate::exact(0.0) } } else { fe[k].estimate() },
            mmse: mm[k].estimate(),
            ml_success: hits[k] as f64 / draws as f64,
        })
        .collect())
}

struct NeedleDraw {
    free_energy: f64,
    mmse: f64,
    ml_hit: bool,
}

/// Noise z with z[0] at the planted coordinate.
fn needle_draw(n: usize, z: &[f64], lambdas: &[f64]) -> Vec<NeedleDraw> {
    let nf = n as f64;
    let zmax_rest = z[1..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    lambdas
        .iter()
        .map(|&l| {
            let a = (l * nf).sqrt();
            let h0 = a * z[0] + 0.5 * a * a;
            let shift = h0.max(a * zmax_rest - 0.5 * a * a);
            let mut s = (h0 - shift).exp();
            for &zi in &z[1..] {
                s += (a * zi - 0.5 * a * a - shift).exp();
            }
            let lz = shift + s.ln();
            // E‖X − ⟨x⟩‖² = (1 − p0)² + Σ_{σ≠σ0} p_σ²
            let p0 = (h0 - lz).exp();
            let mut rest = 0.0;
            for &zi in &z[1..] {
                let p = (a * zi - 0.5 * a * a - lz).exp();
                rest += p * p;
            }
            NeedleDraw {
                free_energy: (lz - nf * std::f64::consts::LN_2) / nf,
                mmse: (1.0 - p0) * (1.0 - p0) + rest,
                ml_hit: a + z[0] > zmax_rest,
            }
        })
        .collect()
}

/// MMSE_n(λ) = 1 − 2F_n′(λ) from a central difference on paired draws.
pub fn needle_mmse_fd(n: usize, lambda: f64, h: f64, draws: usize, stream: RngStream) -> Result<Estimate> {
    ensure(h > 0.0 && lambda >= h, "h", || format!("need 0 < h ≤ λ, got h={h}, λ={lambda}"))?;
    if n > NEEDLE_MAX_N {
        return Err(Error::Budget(format!("2^{n} coordinates per draw exceeds 2^{NEEDLE_MAX_N}")));
    }
    ensure(draws >= 2, "draws", || "need at least two draws".into())?;
    let mut rng = stream.rng();
    let mut z = vec![0.0; 1usize << n];
    let mut acc = Welford::default();
    for _ in 0..draws {
        for v in z.iter_mut() {
            *v = normal(&mut rng);
        }
        let d = needle_draw(n, &z, &[lambda - h, lambda + h]);
        acc.push(1.0 - (d[1].free_energy - d[0].free_energy) / h);
    }
    Ok(acc.estimate())
}

pub fn needle_free_energy_limit(lambda: f64) -> f64 {
    (0.5 * lambda - std::f64::consts::LN_2).max(0.0)
}

/// F(λ,q) = ψ(λq) − λq²/4.
#[derive(Debug, Clone)]
pub struct RsPotential<'a> {
    pub channel: &'a ScalarChannel,
    pub lambda: f64,
}

impl RsPotential<'_> {
    pub fn value(&self, q: f64) -> f64 {
        self.channel.psi_raw(self.lambda * q) - 0.25 * self.lambda * q * q
    }

    /// 2ψ′(λq) − q; zero exactly at the stationary points.
    pub fn gap(&self, q: f64) -> f64 {
        2.0 * self.channel.psi_prime(self.lambda * q) - q
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPoint {
    pub q: f64,
    pub potential: f64,
    /// Local maximum of q ↦ F(λ,q).
    pub stable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RsSolution {
    pub lambda: f64,
    pub q_star: f64,
    pub potential: f64,
    pub fixed_points: Vec<FixedPoint>,
    /// (start, endpoint) of each damped run; None when it did not settle.
    pub starts: Vec<(f64, Option<f64>)>,
    pub tie: bool,
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves q = 2ψ′(λq) on [0, E X²]. Roots are bracketed on a grid and
/// bisected; damped runs from evenly spaced starts are recorded and any
/// endpoint the grid missed is added. The root maximizing F is returned.
pub fn rs_fixed_point(channel: &ScalarChannel, lambda: f64, tol: f64, damping: f64) -> Result<RsSolution> {
    ensure(lambda > 0.0, "lambda", || format!("{lambda} must be > 0"))?;
    ensure(tol > 0.0, "tol", || "tol must be > 0".into())?;
    ensure(damping > 0.0 && damping <= 1.0, "damping", || format!("{damping} not in (0,1]"))?;
    let pot = RsPotential { channel, lambda };
    let qmax = channel.second_moment();
    let bis_tol = (0.01 * tol).max(1e-14);
    let mut roots: Vec<f64> = Vec::new();
    let grid: Vec<f64> = (0..=FP_GRID).map(|i| qmax * i as f64 / FP_GRID as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&q| pot.gap(q)).collect();
    for i in 0..FP_GRID {
        if vals[i].abs() < bis_tol {
            roots.push(grid[i]);
        } else if vals[i + 1].abs() >= bis_tol && (vals[i] > 0.0) != (vals[i + 1] > 0.0) {
            roots.push(bisect(|q| pot.gap(q), grid[i], grid[i + 1], bis_tol));
        }
    }
    if vals[FP_GRID].abs() < bis_tol {
        roots.push(grid[FP_GRID]);
    }

    let mut starts = Vec::with_capacity(FP_STARTS);
    for s in 0..FP_STARTS {
        let q0 = qmax * s as f64 / (FP_STARTS - 1) as f64;
        let mut q = q0;
        let mut end = None;
        for _ in 0..2000 {
            let next = ((1.0 - damping) * q + damping * 2.0 * channel.psi_prime(lambda * q)).clamp(0.0, qmax);
            let step = (next - q).abs();
            q = next;
            if step < 0.1 * tol {
                end = Some(q);
                break;
            }
        }
        if let Some(e) = end {
            if pot.gap(e).abs() < tol && roots.iter().all(|r| (r - e).abs() > tol.max(CLUSTER_TOL)) {
                roots.push(e);
            }
        }
        starts.push((q0, end));
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() <= CLUSTER_TOL);
    if roots.is_empty() {
        return Err(Error::Numeric(format!("no fixed point found at λ={lambda}")));
    }

    let eps = 1e-6 * qmax;
    let fixed_points: Vec<FixedPoint> = roots
        .iter()
        .map(|&q| {
            let left = if q > eps { pot.gap(q - eps) } else { 1.0 };
            let right = pot.gap((q + eps).min(qmax));
            let stable = (left >= 0.0 && right <= 0.0) || (q + eps >= qmax && left >= 0.0);
            FixedPoint { q, potential: pot.value(q), stable }
        })
        .collect();
    let best = fixed_points.iter().max_by(|a, b| a.potential.partial_cmp(&b.potential).unwrap()).unwrap().clone();
    let tie = fixed_points
        .iter()
        .filter(|f| (f.q - best.q).abs() > 1e-4 * qmax.max(1.0) && f.stable)
        .any(|f| (f.potential - best.potential).abs() < 1e-10);
    Ok(RsSolution { lambda, q_star: best.q, potential: best.potential, fixed_points, starts, tie })
}

#[derive(Debug, Clone, Serialize)]
pub struct MmseRow {
    pub lambda: f64,
    pub q_star: f64,
    pub mmse_limit: f64,
    pub dmse: f64,
    pub pca_mse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MmseCurve {
    pub rows: Vec<MmseRow>,
    /// Smallest λ with q*(λ) > (E X)², i.e. MMSE limit below DMSE.
    pub lambda_c: Option<f64>,
}

/// Nontrivial-estimation margin above the dummy level.
const QSTAR_MARGIN: f64 = 1e-6;

/// MMSE limit (E X²)² − q*² along a λ grid, with λ_c refined by bisection
/// between the first grid crossing and its predecessor.
pub fn mmse_limit_curve(channel: &ScalarChannel, lambdas: &[f64]) -> Result<MmseCurve> {
    ensure(!lambdas.is_empty(), "lambdas", || "empty grid".into())?;
    ensure(lambdas.windows(2).all(|w| w[0] < w[1]), "lambdas", || "grid must be increasing".into())?;
    let ex2 = channel.second_moment();
    let ex = channel.prior.mean();
    let dmse = ex2 * ex2 - ex.powi(4);
    let level = ex * ex + QSTAR_MARGIN;
    let solve = |l: f64| rs_fixed_point(channel, l, 1e-10, DEFAULT_DAMPING).map(|s| s.q_star);
    let mut rows = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let q = solve(l)?;
        rows.push(MmseRow { lambda: l, q_star: q, mmse_limit: ex2 * ex2 - q * q, dmse, pca_mse: pca_mse_limit(l) });
    }
    let mut lambda_c = None;
    if let Some(i) = rows.iter().position(|r| r.q_star > level) {
        if i == 0 {
            lambda_c = Some(rows[0].lambda);
        } else {
            let (mut lo, mut hi) = (rows[i - 1].lambda, rows[i].lambda);
            while hi - lo > LAMBDA_C_TOL {
                let mid = 0.5 * (lo + hi);
                if solve(mid)? > level {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            lambda_c = Some(0.5 * (lo + hi));
        }
    }
    Ok(MmseCurve { rows, lambda_c })
}

/// Limit of the matrix MSE of top-eigenvector PCA with the optimal scaling
/// (unit-variance prior).
pub fn pca_mse_limit(lambda: f64) -> f64 {
    if lambda <= 1.0 {
        1.0
    } else {
        (2.0 - 1.0 / lambda) / lambda
    }
}

/// Empirical ‖xxᵀ − s vvᵀ‖²_F for Y = √λ xxᵀ + W/√n, with v the top
/// eigenvector and s = (1 − 1/λ)₊ the limiting squared overlap.
pub fn pca_mse_empirical(n: usize, lambda: f64, prior: &PriorSpec, draws: usize, stream: RngStream) -> Result<Estimate> {
    ensure(lambda >= 0.0, "lambda", || format!("{lambda} < 0"))?;
    ensure(draws >= 2, "draws", || "need at least two draws".into())?;
    let s = if lambda > 1.0 { 1.0 - 1.0 / lambda } else { 0.0 };
    let mut acc = Welford::default();
    for d in 0..draws {
        let inst = sample_spiked_wigner(n, lambda.sqrt(), prior, true, stream.child(d as u64))?;
        let x = inst.signal_vector().ok_or_else(|| invalid("prior", "no vector signal"))?;
        let xx = dot(&x, &x);
        let o = bbp_overlap(&inst)? * xx;
        acc.push(xx * xx - 2.0 * s * o + s * s);
    }
    Ok(acc.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ch(p: ScalarPrior) -> ScalarChannel {
        ScalarChannel::new(p).unwrap()
    }

    #[test]
    fn gaussian_psi_closed_form() {
        let g = ch(ScalarPrior::Gaussian);
        assert_eq!(scalar_psi(&g, 0.0).unwrap(), 0.0);
        assert!((scalar_psi(&g, 1.0).unwrap() - 0.153_426_409_720_027_3).abs() < 1e-12);
        assert!((scalar_mmse(&g, 3.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn discrete_psi_zero_and_mmse_at_zero() {
        for p in [ScalarPrior::Rademacher, ScalarPrior::TwoPoint { p: 0.05 }] {
            let c = ch(p);
            assert!(scalar_psi(&c, 0.0).unwrap().abs() < 1e-12);
            assert!((c.mmse(0.0) - 1.0).abs() < 1e-9);
            assert!((c.second_moment() - 1.0).abs() < 1e-12);
            assert!(c.prior.mean().abs() < 1e-12);
        }
    }

    #[test]
    fn rademacher_below_gaussian_mmse() {
        let c = ch(ScalarPrior::Rademacher);
        for l in [0.5, 1.0, 2.0, 5.0] {
            assert!(c.mmse(l) <= 1.0 / (1.0 + l));
        }
    }

    #[test]
    fn immse_residuals() {
        let g = ch(ScalarPrior::Gaussian);
        assert!(immse_check(&g, 1.0, 1e-3).unwrap().residual < 1e-6);
        let r = ch(ScalarPrior::Rademacher);
        let b = immse_check(&r, 0.0, 1e-3).unwrap();
        assert!(b.one_sided && b.residual < 1e-4);
        for l in [0.5, 1.0, 2.0] {
            assert!(immse_check(&r, l, 1e-3).unwrap().residual < 1e-4);
        }
    }

    #[test]
    fn gibbs_table_normalizes() {
        let t = GibbsTable::new(vec![0, 1, 2], vec![700.0, 0.0, -700.0]).unwrap();
        assert!(t.normalization_error() < 1e-12);
    }

    #[test]
    fn gaussian_fixed_point() {
        let g = ch(ScalarPrior::Gaussian);
        for l in [0.5, 1.0, 1.5, 2.0, 5.0] {
            let s = rs_fixed_point(&g, l, 1e-10, DEFAULT_DAMPING).unwrap();
            assert!((s.q_star - (1.0 - 1.0 / l).max(0.0)).abs() < 1e-6, "λ={l}: {}", s.q_star);
        }
        let c = mmse_limit_curve(&g, &[0.5, 2.0]).unwrap();
        assert!((c.rows[0].mmse_limit - 1.0).abs() < 1e-9);
        assert!((c.rows[1].mmse_limit - 0.75).abs() < 1e-6);
    }

    #[test]
    fn needle_zero_snr() {
        let p = needle_free_energy(6, &[0.0, 1.0], 4, RngStream::new(1, 0)).unwrap();
        assert_eq!(p[0].free_energy.mean, 0.0);
        assert!(p[1].free_energy.mean >= 0.0);
    }
}

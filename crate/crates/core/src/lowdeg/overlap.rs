//! Overlap laws, the truncated-exponential LD value and the Franz–Parisi quantity
//! for Gaussian additive models Y = λu + Z, plus the Boolean counterexample.

use crate::detect::rademacher_overlap;
use crate::error::{ensure, Error, Result};
use crate::linalg::dot;
use crate::models::PriorSpec;
use crate::rng::{Rng, RngStream};
use crate::stats::{ln_choose, Estimate, LogSumExp};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// exp^{≤D}(x) = Σ_{d=0}^{D} x^d/d!.
pub fn truncated_exp(x: f64, d: u32) -> f64 {
    let mut t = 1.0;
    let mut s = 1.0;
    for k in 0..d {
        t *= x / (k + 1) as f64;
        s += t;
    }
    s
}

type OverlapFn = Arc<dyn Fn(&mut Rng) -> f64 + Send + Sync>;

/// Draws s = ⟨u, v⟩ for independent prior draws u, v.
#[derive(Clone)]
pub struct OverlapSampler {
    kind: Kind,
}

#[derive(Clone)]
enum Kind {
    /// u, v uniform on {±1/√n}^n; binned by popcount.
    Rademacher { n: usize },
    Prior { prior: PriorSpec, n: usize },
    Custom { label: String, symmetric: bool, f: OverlapFn },
}

impl std::fmt::Debug for OverlapSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "OverlapSampler({})", self.label())
    }
}

impl OverlapSampler {
    pub fn rademacher(n: usize) -> Self {
        Self { kind: Kind::Rademacher { n } }
    }

    pub fn from_prior(prior: PriorSpec, n: usize) -> Result<Self> {
        prior.validate()?;
        match prior {
            PriorSpec::RademacherNormalized => Ok(Self::rademacher(n)),
            PriorSpec::GaussianScalar | PriorSpec::SparseBernoulli { .. } => Ok(Self { kind: Kind::Prior { prior, n } }),
            other => Err(Error::Unsupported(format!("{other:?} has no scalar overlap"))),
        }
    }

    /// `symmetric` declares that s and −s have the same law, which lets the
    /// sample be symmetrized.
    pub fn custom(label: &str, symmetric: bool, f: impl Fn(&mut Rng) -> f64 + Send + Sync + 'static) -> Self {
        Self { kind: Kind::Custom { label: label.into(), symmetric, f: Arc::new(f) } }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            Kind::Rademacher { n } => format!("rademacher(n={n})"),
            Kind::Prior { prior, n } => format!("{prior:?}(n={n})"),
            Kind::Custom { label, .. } => label.clone(),
        }
    }

    /// Overlaps are on the normalized scale (‖u‖² ≈ 1) for the built-in priors.
    pub fn is_normalized(&self) -> bool {
        !matches!(self.kind, Kind::Custom { .. })
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.kind {
            Kind::Rademacher { .. } => true,
            Kind::Prior { prior, .. } => matches!(prior, PriorSpec::GaussianScalar),
            Kind::Custom { symmetric, .. } => *symmetric,
        }
    }

    pub fn draw(&self, rng: &mut Rng) -> f64 {
        match &self.kind {
            Kind::Rademacher { n } => rademacher_overlap(*n, rng),
            Kind::Prior { prior, n } => {
                let u = prior.sample_vector(*n, rng).expect("validated prior");
                let v = prior.sample_vector(*n, rng).expect("validated prior");
                dot(&u, &v)
            }
            Kind::Custom { f, .. } => f(rng),
        }
    }

    /// m i.i.d. overlaps, grouped into atoms. Symmetric laws are symmetrized
    /// (each draw counted half at s and half at −s), which zeroes the odd
    /// empirical moments without biasing the even ones.
    pub fn sample(&self, m: u64, stream: RngStream) -> Result<OverlapSample> {
        ensure(m >= 1, "mc_budget", || "need at least one draw".into())?;
        let mut rng = stream.rng();
        let raw = match &self.kind {
            Kind::Rademacher { n } => {
                let n = *n;
                let mut bins = vec![0u64; n + 1];
                for _ in 0..m {
                    let s = rademacher_overlap(n, &mut rng);
                    bins[((1.0 - s) * n as f64 / 2.0).round() as usize] += 1;
                }
                let atoms = bins
                    .iter()
                    .enumerate()
                    .rev()
                    .filter(|(_, &c)| c > 0)
                    .map(|(k, &c)| ((n as f64 - 2.0 * k as f64) / n as f64, c as f64))
                    .collect();
                OverlapSample::from_atoms(atoms, Some(m))
            }
            _ => {
                ensure(m <= 50_000_000, "mc_budget", || "too many raw draws to hold in memory".into())?;
                let mut xs: Vec<f64> = (0..m).map(|_| self.draw(&mut rng)).collect();
                xs.sort_by(f64::total_cmp);
                let mut atoms: Vec<(f64, f64)> = Vec::new();
                for x in xs {
                    match atoms.last_mut() {
                        Some(a) if a.0 == x => a.1 += 1.0,
                        _ => atoms.push((x, 1.0)),
                    }
                }
                OverlapSample::from_atoms(atoms, Some(m))
            }
        };
        Ok(if self.is_symmetric() { raw.symmetrized() } else { raw })
    }
}

/// Weighted atoms (s, w). With `draws = Some(m)` the weights are counts from m
/// Monte Carlo draws; with `None` they are exact probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSample {
    atoms: Vec<(f64, f64)>,
    total: f64,
    draws: Option<u64>,
}

impl OverlapSample {
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>, draws: Option<u64>) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total = atoms.iter().map(|a| a.1).sum();
        Self { atoms, total, draws }
    }

    /// Exact overlap law of the Rademacher-normalized prior: s = (n − 2K)/n, K ~ Bin(n, 1/2).
    pub fn exact_rademacher(n: usize) -> Self {
        let ln2n = n as f64 * std::f64::consts::LN_2;
        let atoms = (0..=n).map(|k| ((n as f64 - 2.0 * k as f64) / n as f64, (ln_choose(n as u64, k as u64) - ln2n).exp())).collect();
        Self::from_atoms(atoms, None)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn draws(&self) -> Option<u64> {
        self.draws
    }

    pub fn symmetrized(&self) -> Self {
        let mut atoms: Vec<(f64, f64)> = self.atoms.iter().flat_map(|&(s, w)| [(s, 0.5 * w), (-s, 0.5 * w)]).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(l) if l.0 == a.0 => l.1 += a.1,
                _ => merged.push(a),
            }
        }
        Self { atoms: merged, total: self.total, draws: self.draws }
    }

    /// Weighted mean of g(s) with its Monte Carlo standard error.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> Estimate {
        let (mut m1, mut m2) = (0.0, 0.0);
        for &(s, w) in &self.atoms {
            let v = g(s);
            m1 += w * v;
            m2 += w * v * v;
        }
        let mean = m1 / self.total;
        match self.draws {
            Some(m) => {
                let var = (m2 / self.total - mean * mean).max(0.0);
                Estimate { mean, stderr: (var / m as f64).sqrt(), n: m as usize }
            }
            None => Estimate::exact(mean),
        }
    }

    /// Empirical (or exact) P(|s| ≥ eps).
    pub fn tail(&self, eps: f64) -> f64 {
        self.atoms.iter().filter(|a| a.0.abs() >= eps).map(|a| a.1).sum::<f64>() / self.total
    }
}

/// LD(D, λ) = E exp^{≤D}(λ² s).
pub fn ld_value(sample: &OverlapSample, lambda: f64, d: u32) -> Estimate {
    if lambda == 0.0 {
        return Estimate::exact(1.0);
    }
    let l2 = lambda * lambda;
    sample.expect(|s| truncated_exp(l2 * s, d))
}

/// δ(D) = sup{ε ≥ 0 : P(|s| ≥ ε) ≥ e^{−D}}. From m draws this is the
/// ⌈m·e^{−D}⌉-th largest |s|, which needs m ≥ 10·e^D to be resolvable.
pub fn overlap_quantile_delta(sample: &OverlapSample, d: f64) -> Result<f64> {
    ensure(d >= 0.0, "D", || format!("{d} < 0"))?;
    let need = match sample.draws {
        Some(m) => {
            let min_budget = 10.0 * d.exp();
            if (m as f64) < min_budget {
                return Err(Error::Budget(format!("tail e^-{d} unresolvable with {m} draws; need at least {min_budget:.0}")));
            }
            (m as f64 * (-d).exp()).ceil()
        }
        None => sample.total * (-d).exp() * (1.0 - 1e-12),
    };
    let mut by_abs: Vec<(f64, f64)> = sample.atoms.iter().map(|&(s, w)| (s.abs(), w)).collect();
    by_abs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut cum = 0.0;
    for (a, w) in by_abs {
        cum += w;
        if cum >= need {
            return Ok(a);
        }
    }
    Ok(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpEstimate {
    pub value: Estimate,
    pub log_value: f64,
    pub delta: f64,
    pub d: f64,
    pub note: String,
}

/// FP(D, λ) = E[1{|s| ≤ δ(D)} exp(λ² s)].
pub fn fp_value(sample: &OverlapSample, lambda: f64, d: f64) -> Result<FpEstimate> {
    let delta = overlap_quantile_delta(sample, d)?;
    let l2 = lambda * lambda;
    let mut lse = LogSumExp::default();
    for &(s, w) in &sample.atoms {
        if s.abs() <= delta && w > 0.0 {
            lse.push(w.ln() + l2 * s);
        }
    }
    let log_value = lse.value() - sample.total.ln();
    let value = sample.expect(|s| if s.abs() <= delta { (l2 * s).exp() } else { 0.0 });
    let note = match sample.draws {
        Some(m) => format!("δ from the order statistic at rank ⌈{m}·e^-{d}⌉; may differ from the exact δ by one atom"),
        None => "exact overlap law".into(),
    };
    Ok(FpEstimate { value: Estimate { mean: log_value.exp(), ..value }, log_value, delta, d, note })
}

/// D̃ = D(2 + log(1 + λ²M)), where ‖u‖² ≤ M on the prior's support.
pub fn fp_degree(d: u32, lambda: f64, m: f64) -> f64 {
    d as f64 * (2.0 + (1.0 + lambda * lambda * m).ln())
}

/// One row of the LD/FP sandwich LD(D,λ) ≤ FP(D̃,λ) + e^{−D}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub d: u32,
    pub lambda: f64,
    pub d_tilde: f64,
    pub ld: Estimate,
    pub fp: FpEstimate,
    /// FP(D̃) + e^{−D} − LD(D), with the combined standard error.
    pub slack: f64,
    pub slack_stderr: f64,
}

pub fn ld_fp_sandwich(sample: &OverlapSample, d: u32, lambda: f64, m: f64) -> Result<SandwichRow> {
    ensure(d % 2 == 1, "D", || format!("the sandwich needs odd D, got {d}"))?;
    let ld = ld_value(sample, lambda, d);
    let d_tilde = fp_degree(d, lambda, m);
    let fp = fp_value(sample, lambda, d_tilde)?;
    let slack = fp.value.mean + (-(d as f64)).exp() - ld.mean;
    let slack_stderr = (fp.value.stderr.powi(2) + ld.stderr.powi(2)).sqrt();
    Ok(SandwichRow { d, lambda, d_tilde, ld, fp, slack, slack_stderr })
}

/// Prior on {±1}^n given by explicit support and weights, biasing x_i toward u_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BooleanPrior {
    pub support: Vec<Vec<i8>>,
    pub weights: Vec<f64>,
}

impl BooleanPrior {
    /// Uniform over all u ∈ {±1}^n with Σ u_i = target.
    pub fn fixed_sum(n: usize, target: i64) -> Result<Self> {
        ensure(n <= 24, "n", || "support enumeration limited to n ≤ 24".into())?;
        let support: Vec<Vec<i8>> = (0u32..1 << n)
            .filter(|&mask| n as i64 - 2 * mask.count_ones() as i64 == target)
            .map(|mask| (0..n).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect())
            .collect();
        ensure(!support.is_empty(), "target", || format!("no ±1 vector of length {n} sums to {target}"))?;
        let w = 1.0 / support.len() as f64;
        Ok(Self { weights: vec![w; support.len()], support })
    }

    fn pairs(&self) -> impl Iterator<Item = (&[i8], &[i8], f64)> + '_ {
        self.support.iter().zip(&self.weights).flat_map(move |(u, &wu)| self.support.iter().zip(&self.weights).map(move |(v, &wv)| (u.as_slice(), v.as_slice(), wu * wv)))
    }
}

/// ⟨L_u, L_v⟩ = Π (1 + u_i v_i).
pub fn boolean_kernel(u: &[i8], v: &[i8]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| 1.0 + (a * b) as f64).product()
}

/// LO(δ) = E[1{|⟨u,v⟩| ≤ δ} ⟨L_u, L_v⟩], exact over the support.
pub fn boolean_lo(prior: &BooleanPrior, delta: f64) -> f64 {
    prior
        .pairs()
        .filter(|(u, v, _)| (u.iter().zip(*v).map(|(&a, &b)| (a * b) as i64).sum::<i64>().abs() as f64) <= delta)
        .map(|(u, v, w)| w * boolean_kernel(u, v))
        .sum()
}

/// LD(D) = Σ_{|S|≤D} E[Π_{i∈S} u_i v_i] = E Σ_{k≤D} e_k(u∘v).
pub fn boolean_ld(prior: &BooleanPrior, d: usize) -> f64 {
    prior
        .pairs()
        .map(|(u, v, w)| {
            // elementary symmetric polynomials of u∘v up to degree d
            let mut e = vec![0.0; d + 1];
            e[0] = 1.0;
            for (&a, &b) in u.iter().zip(v) {
                let z = (a * b) as f64;
                for k in (1..=d).rev() {
                    e[k] += z * e[k - 1];
                }
            }
            w * e.iter().sum::<f64>()
        })
        .sum()
}

/// δ(D) for the Boolean prior's exact overlap law (unnormalized ⟨u, v⟩).
pub fn boolean_delta(prior: &BooleanPrior, d: f64) -> Result<f64> {
    let atoms: Vec<(f64, f64)> = prior.pairs().map(|(u, v, w)| (u.iter().zip(v).map(|(&a, &b)| (a * b) as f64).sum(), w)).collect();
    overlap_quantile_delta(&OverlapSample::from_atoms(atoms, None), d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_exp_small_cases() {
        assert_eq!(truncated_exp(0.0, 7), 1.0);
        assert_eq!(truncated_exp(0.3, 1), 1.3);
        assert_eq!(truncated_exp(1.0, 2), 2.5);
    }

    #[test]
    fn delta_trivial_laws() {
        let zero = OverlapSample::from_atoms(vec![(0.0, 1.0)], None);
        assert_eq!(overlap_quantile_delta(&zero, 3.0).unwrap(), 0.0);
        let pm = OverlapSample::from_atoms(vec![(-1.0, 0.5), (1.0, 0.5)], None);
        for d in [0.0, 1.0, 5.0] {
            assert_eq!(overlap_quantile_delta(&pm, d).unwrap(), 1.0);
        }
    }

    #[test]
    fn delta_of_uniform() {
        let s = OverlapSampler::custom("uniform01", false, |r| rand::Rng::random::<f64>(r)).sample(200_000, RngStream::new(3, 0)).unwrap();
        let d = overlap_quantile_delta(&s, 1.0).unwrap();
        // order statistic standard error √(p(1−p)/m) with p = e^{-1}
        let se = ((-1f64).exp() * (1.0 - (-1f64).exp()) / 200_000.0).sqrt();
        assert!((d - (1.0 - (-1f64).exp())).abs() < 2.0 * se + 1e-5, "{d}");
    }

    #[test]
    fn delta_rejects_small_budget() {
        let s = OverlapSampler::rademacher(10).sample(100, RngStream::new(1, 0)).unwrap();
        assert!(matches!(overlap_quantile_delta(&s, 3.0), Err(Error::Budget(_))));
    }

    #[test]
    fn boolean_counterexample_is_exactly_zero() {
        let p = BooleanPrior::fixed_sum(10, 8).unwrap();
        assert_eq!(p.support.len(), 10);
        assert_eq!(boolean_lo(&p, 9.0), 0.0);
        assert!(boolean_lo(&p, 10.0) > 0.0);
        assert!(boolean_ld(&p, 4) > 10.0);
    }
}

//! Overlap gaps: exhaustive number-partitioning landscapes, first-moment
//! certificates, interpolation paths for p-spin tensors and stability checks
//! for low-degree polynomial maps.

use std::collections::BTreeMap;
use std::f64::consts::{E, FRAC_PI_2, PI};

use serde::Serialize;

use crate::error::{ensure, Error, Result};
use crate::models::{kahan_sum, normal, pspin_energy, SpinVector, Tensor};
use crate::rng::RngStream;
use crate::stats::{binom_se, choose, h2, Estimate, LogSumExp, Welford};

pub const SCAN_MAX_N: usize = 26;
pub const GIBBS_MAX_N: usize = 24;
/// Solutions kept by a scan before giving up; pairs grow quadratically.
pub const MAX_SOLUTIONS: usize = 20_000;
pub const RHO_GRID_STEP: f64 = 0.01;

// ---------------------------------------------------------------------------
// Number partitioning

#[derive(Debug, Clone, Serialize)]
pub struct NppSolution {
    /// Sign class: bit j set means σ_j = −1; σ_{n−1} = +1 always.
    pub mask: u32,
    pub energy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LandscapeScan {
    pub n: usize,
    pub eps: f64,
    /// Energy threshold 2^{−εn}.
    pub level: f64,
    pub min_energy: f64,
    pub argmin: u32,
    pub solutions: Vec<NppSolution>,
    /// `overlap_counts[j]` = number of unordered pairs of distinct solution
    /// classes with |⟨σ, τ⟩| = j.
    pub overlap_counts: Vec<u64>,
}

pub fn class_spins(n: usize, mask: u32) -> SpinVector {
    SpinVector::new((0..n).map(|j| if mask >> j & 1 == 1 { -1 } else { 1 }).collect()).expect("±1 entries")
}

fn class_sum(x: &[f64], mask: u32) -> f64 {
    kahan_sum(x.iter().enumerate().map(|(j, &v)| if mask >> j & 1 == 1 { -v } else { v }))
}

/// Walks all 2^{n−1} sign classes in Gray-code order, calling `visit(mask, s)`
/// with the running ⟨σ, X⟩ (subject to rounding drift of order n·2^{n}·ulp).
fn gray_walk(x: &[f64], mut visit: impl FnMut(u32, f64)) {
    let n = x.len();
    let mut mask = 0u32;
    let mut s: f64 = x.iter().sum();
    visit(mask, s);
    for i in 1u64..(1u64 << (n - 1)) {
        let b = i.trailing_zeros();
        mask ^= 1 << b;
        if mask >> b & 1 == 1 {
            s -= 2.0 * x[b as usize];
        } else {
            s += 2.0 * x[b as usize];
        }
        visit(mask, s);
    }
}

fn drift_slack(x: &[f64]) -> f64 {
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    1e-9 * l1.max(1.0)
}

fn check_npp_input(x: &[f64], max_n: usize) -> Result<()> {
    ensure((2..=max_n).contains(&x.len()), "n", || format!("n = {} outside [2, {max_n}]", x.len()))?;
    ensure(x.iter().all(|v| v.is_finite()), "x", || "non-finite entry".into())
}

/// Exact minimizer of |⟨σ, X⟩| over sign classes.
pub fn npp_minimum(x: &[f64]) -> Result<(u32, f64)> {
    check_npp_input(x, SCAN_MAX_N)?;
    let slack = drift_slack(x);
    let (mut best, mut best_abs) = (0u32, f64::INFINITY);
    gray_walk(x, |mask, s| {
        if s.abs() <= best_abs + slack {
            let exact = class_sum(x, mask).abs();
            if exact < best_abs {
                best = mask;
                best_abs = exact;
            }
        }
    });
    Ok((best, best_abs / (x.len() as f64).sqrt()))
}

/// Every sign class with H(σ, X) ≤ 2^{−εn}, plus the pairwise overlap histogram.
pub fn npp_exhaustive_scan(x: &[f64], eps: f64) -> Result<LandscapeScan> {
    check_npp_input(x, SCAN_MAX_N)?;
    ensure(eps > 0.0, "eps", || format!("{eps} ≤ 0"))?;
    let n = x.len();
    let sqrt_n = (n as f64).sqrt();
    let level = (-eps * n as f64).exp2();
    let thr = level * sqrt_n;
    let slack = drift_slack(x);
    let (mut best, mut best_abs) = (0u32, f64::INFINITY);
    let mut solutions = Vec::new();
    let mut overflow = false;
    gray_walk(x, |mask, s| {
        let a = s.abs();
        if a > thr + slack && a > best_abs + slack {
            return;
        }
        let exact = class_sum(x, mask).abs();
        if exact < best_abs {
            best = mask;
            best_abs = exact;
        }
        if exact <= thr {
            if solutions.len() == MAX_SOLUTIONS {
                overflow = true;
            } else {
                solutions.push(NppSolution { mask, energy: exact / sqrt_n });
            }
        }
    });
    if overflow {
        return Err(Error::Budget(format!("more than {MAX_SOLUTIONS} solutions below 2^(-{eps}·{n})")));
    }
    let mut overlap_counts = vec![0u64; n + 1];
    for (i, a) in solutions.iter().enumerate() {
        for b in &solutions[i + 1..] {
            let d = (a.mask ^ b.mask).count_ones() as i64;
            overlap_counts[(n as i64 - 2 * d).unsigned_abs() as usize] += 1;
        }
    }
    Ok(LandscapeScan { n, eps, level, min_energy: best_abs / sqrt_n, argmin: best, solutions, overlap_counts })
}

impl LandscapeScan {
    /// Smallest |⟨σ, τ⟩| counted as overlap ≥ ρ.
    fn band_start(&self, rho: f64) -> usize {
        ((rho * self.n as f64) - 1e-9).ceil().max(0.0) as usize
    }

    /// Unordered pairs of distinct classes with O(σ, τ) ∈ [ρ, (n−2)/n].
    pub fn forbidden_pairs(&self, rho: f64) -> u64 {
        let hi = self.n - 2;
        let lo = self.band_start(rho);
        if lo > hi {
            return 0;
        }
        self.overlap_counts[lo..=hi].iter().sum()
    }

    pub fn band_occupancy(&self, rhos: &[f64]) -> Vec<(f64, u64)> {
        rhos.iter().map(|&r| (r, self.forbidden_pairs(r))).collect()
    }

    pub fn solution_spins(&self, i: usize) -> SpinVector {
        class_spins(self.n, self.solutions[i].mask)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FirstMomentExponent {
    pub n: usize,
    pub eps: f64,
    pub rho: f64,
    /// 1 + h((1−ρ)/2) − 2ε + (1/2n) log₂ n.
    pub leading: f64,
    /// (1/n) log₂ of a rigorous bound on E[#ordered pairs (σ, τ) in the band,
    /// both below 2^{−εn}], using the exact pair count and the bivariate
    /// Gaussian density bound.
    pub finite_n: f64,
}

/// Exponent of the first-moment bound on forbidden pairs.
pub fn npp_first_moment_exponent(n: usize, eps: f64, rho: f64) -> Result<FirstMomentExponent> {
    ensure(n >= 3, "n", || format!("n = {n} < 3"))?;
    ensure(eps > 0.0, "eps", || format!("{eps} ≤ 0"))?;
    let nf = n as f64;
    ensure(rho > 0.0 && rho <= (nf - 2.0) / nf + 1e-12, "rho", || format!("{rho} outside (0, (n−2)/n]"))?;
    let leading = 1.0 + h2((1.0 - rho) / 2.0) - 2.0 * eps + nf.log2() / (2.0 * nf);
    // k disagreements, 1 ≤ k ≤ K, or n − K ≤ k ≤ n − 1.
    let k_max = ((nf * (1.0 - rho) / 2.0) + 1e-9).floor() as u64;
    let pairs: f64 = (1..=k_max.max(1)).map(|k| choose(n as u64, k)).sum::<f64>() * 2.0;
    let r = 1.0 - 2.0 / nf;
    let log2_bound = nf + pairs.log2() + (2.0 / PI).log2() - 2.0 * nf * eps - 0.5 * (1.0 - r * r).log2();
    Ok(FirstMomentExponent { n, eps, rho, leading, finite_n: log2_bound / nf })
}

/// Smallest ρ on the 0.01 grid in (0, (n−2)/n] whose finite-n exponent is negative.
pub fn certified_rho(n: usize, eps: f64) -> Result<Option<f64>> {
    let nf = n as f64;
    let top = (nf - 2.0) / nf;
    let mut i = 1;
    loop {
        let rho = i as f64 * RHO_GRID_STEP;
        if rho > top + 1e-12 {
            return Ok(None);
        }
        if npp_first_moment_exponent(n, eps, rho)?.finite_n < 0.0 {
            return Ok(Some(rho));
        }
        i += 1;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GibbsPartition {
    pub n: usize,
    pub beta: f64,
    pub rho: f64,
    pub log_z: f64,
    /// log π_β(I₁), log π_β(I₂), log π_β(I₃); −∞ for an empty set.
    pub log_pi: [f64; 3],
    pub sizes: [u64; 3],
    pub ground_energy: f64,
    /// β·2^{−nε}.
    pub scale: f64,
    /// log(min{π(I₁), π(I₃)} / π(I₂)) / (β·2^{−nε}); `None` when I₂ is empty.
    pub fitted_constant: Option<f64>,
}

impl GibbsPartition {
    pub fn i2_empty(&self) -> bool {
        self.sizes[1] == 0
    }

    /// min{π(I₁), π(I₃)} ≥ π(I₂).
    pub fn holds(&self) -> bool {
        self.log_pi[0].min(self.log_pi[2]) >= self.log_pi[1]
    }

    /// log π_β(I₃) as computed directly from the ground energy.
    pub fn ground_log_pi(&self) -> f64 {
        -self.beta * self.ground_energy - self.log_z
    }
}

/// β = n·2^{nε}.
pub fn npp_default_beta(n: usize, eps: f64) -> f64 {
    n as f64 * (eps * n as f64).exp2()
}

/// π_β(σ) ∝ exp(−β H(σ, X)) on all of {±1}^n, with the sets
/// I₁ = {|⟨σ,σ*⟩/n| ≤ ρ}, I₂ = {ρ ≤ ⟨σ,σ*⟩/n ≤ (n−2)/n}, I₃ = {σ*}.
pub fn npp_gibbs_partition_ratio(x: &[f64], beta: f64, eps: f64, rho: f64) -> Result<GibbsPartition> {
    check_npp_input(x, GIBBS_MAX_N)?;
    ensure(beta >= 0.0 && beta.is_finite(), "beta", || format!("{beta} not a finite non-negative number"))?;
    ensure((0.0..=1.0).contains(&rho), "rho", || format!("{rho} outside [0, 1]"))?;
    let n = x.len();
    let nf = n as f64;
    let sqrt_n = nf.sqrt();
    let (star, ground_abs) = npp_minimum(x)?;
    let ground_energy = ground_abs / sqrt_n;
    let eps_tol = 1e-9;
    let mut acc = [LogSumExp::default(), LogSumExp::default(), LogSumExp::default()];
    let mut sizes = [0u64; 3];
    let mut total = LogSumExp::default();
    gray_walk(x, |mask, s| {
        let h = if mask == star { ground_abs } else { s.abs() } / sqrt_n;
        let lw = -beta * h;
        let d = (mask ^ star).count_ones() as f64;
        let ov = (nf - 2.0 * d) / nf;
        for (o, is_star) in [(ov, mask == star), (-ov, false)] {
            total.push(lw);
            if o.abs() <= rho + eps_tol {
                acc[0].push(lw);
                sizes[0] += 1;
            }
            if o >= rho - eps_tol && o <= (nf - 2.0) / nf + eps_tol {
                acc[1].push(lw);
                sizes[1] += 1;
            }
            if is_star {
                acc[2].push(lw);
                sizes[2] += 1;
            }
        }
    });
    let log_z = total.value();
    let log_pi = [0, 1, 2].map(|i| if sizes[i] == 0 { f64::NEG_INFINITY } else { acc[i].value() - log_z });
    let scale = beta * (-eps * nf).exp2();
    let fitted_constant = (sizes[1] > 0 && scale > 0.0).then(|| (log_pi[0].min(log_pi[2]) - log_pi[1]) / scale);
    Ok(GibbsPartition { n, beta, rho, log_z, log_pi, sizes, ground_energy, scale, fitted_constant })
}

// ---------------------------------------------------------------------------
// Interpolation paths

fn check_shapes(y: &Tensor, y2: &Tensor) -> Result<()> {
    ensure(y.p == y2.p && y.n == y2.n, "tensor", || format!("shape ({}, {}) vs ({}, {})", y.p, y.n, y2.p, y2.n))
}

/// Y_τ = cos(τ) Y + sin(τ) Y′, exact at both endpoints.
pub fn interpolate(y: &Tensor, y2: &Tensor, tau: f64) -> Result<Tensor> {
    check_shapes(y, y2)?;
    ensure((0.0..=FRAC_PI_2).contains(&tau), "tau", || format!("{tau} outside [0, π/2]"))?;
    if tau == 0.0 {
        return Ok(y.clone());
    }
    if tau == FRAC_PI_2 {
        return Ok(y2.clone());
    }
    let (s, c) = tau.sin_cos();
    let data = y.data.iter().zip(&y2.data).map(|(a, b)| c * a + s * b).collect();
    Tensor::new(y.p, y.n, data)
}

#[derive(Debug, Clone)]
pub struct InterpolationPath {
    pub y: Tensor,
    pub y_prime: Tensor,
    /// τ_ℓ = ℓπ/(2L), ℓ = 0..=L.
    pub taus: Vec<f64>,
}

impl InterpolationPath {
    pub fn new(y: Tensor, y_prime: Tensor, steps: usize) -> Result<Self> {
        check_shapes(&y, &y_prime)?;
        ensure(steps >= 1, "steps", || "need at least one step".into())?;
        let mut taus: Vec<f64> = (0..steps).map(|l| l as f64 * FRAC_PI_2 / steps as f64).collect();
        taus.push(FRAC_PI_2);
        Ok(Self { y, y_prime, taus })
    }

    pub fn steps(&self) -> usize {
        self.taus.len() - 1
    }

    pub fn at(&self, l: usize) -> Result<Tensor> {
        interpolate(&self.y, &self.y_prime, self.taus[l])
    }
}

/// H_n(x; Y_τ) along the path.
pub fn path_energies(x: &[f64], path: &InterpolationPath) -> Result<Vec<f64>> {
    (0..path.taus.len()).map(|l| pspin_energy(x, &path.at(l)?)).collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentCheck {
    pub entries: usize,
    pub mean: f64,
    pub variance: f64,
    pub fourth: f64,
    /// z-scores of the first, second and fourth raw moments against N(0, 1).
    pub z: [f64; 3],
}

impl MomentCheck {
    pub fn within(&self, k: f64) -> bool {
        self.z.iter().all(|z| z.abs() <= k)
    }
}

/// Pooled raw moments of the entries against the standard normal.
pub fn marginal_moments(entries: &[f64]) -> MomentCheck {
    let m = entries.len() as f64;
    let moment = |k: i32| entries.iter().map(|v| v.powi(k)).sum::<f64>() / m;
    let (m1, m2, m4) = (moment(1), moment(2), moment(4));
    // Var X = 1, Var X² = 2, Var X⁴ = 105 − 9.
    let z = [m1 / (1.0 / m).sqrt(), (m2 - 1.0) / (2.0 / m).sqrt(), (m4 - 3.0) / (96.0 / m).sqrt()];
    MomentCheck { entries: entries.len(), mean: m1, variance: m2 - m1 * m1, fourth: m4, z }
}

// ---------------------------------------------------------------------------
// Polynomial maps in the orthonormal Hermite basis

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HermiteTerm {
    /// Sorted (variable, power) pairs with positive powers.
    pub index: Vec<(usize, u32)>,
    pub coeffs: Vec<f64>,
}

impl HermiteTerm {
    pub fn degree(&self) -> u32 {
        self.index.iter().map(|&(_, a)| a).sum()
    }
}

/// f: ℝ^dim → ℝ^out, f = Σ_a c_a Π_v He_{a_v}(x_v)/√(a_v!).
/// The basis is orthonormal under N(0, I), so E‖f(X)‖² = Σ‖c_a‖² exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HermitePoly {
    pub dim: usize,
    pub out: usize,
    pub terms: Vec<HermiteTerm>,
}

/// He_0..He_d at x, divided by √(a!).
fn normalized_hermite(x: f64, d: u32) -> Vec<f64> {
    let mut he = vec![1.0; d as usize + 1];
    if d >= 1 {
        he[1] = x;
    }
    for k in 1..d as usize {
        he[k + 1] = x * he[k] - k as f64 * he[k - 1];
    }
    let mut fact = 1.0;
    for (k, h) in he.iter_mut().enumerate().skip(1) {
        fact *= k as f64;
        *h /= fact.sqrt();
    }
    he
}

impl HermitePoly {
    /// Merges repeated multi-indices so the orthonormal identities apply.
    pub fn new(dim: usize, out: usize, terms: Vec<HermiteTerm>) -> Result<Self> {
        ensure(dim >= 1 && out >= 1, "shape", || "dimensions must be positive".into())?;
        let mut merged: BTreeMap<Vec<(usize, u32)>, Vec<f64>> = BTreeMap::new();
        for t in terms {
            ensure(t.coeffs.len() == out, "coeffs", || "coefficient length must equal output dimension".into())?;
            let mut idx: BTreeMap<usize, u32> = BTreeMap::new();
            for (v, a) in t.index {
                ensure(v < dim, "index", || format!("variable {v} ≥ {dim}"))?;
                *idx.entry(v).or_default() += a;
            }
            let key: Vec<(usize, u32)> = idx.into_iter().filter(|&(_, a)| a > 0).collect();
            let slot = merged.entry(key).or_insert_with(|| vec![0.0; out]);
            for (s, c) in slot.iter_mut().zip(&t.coeffs) {
                *s += c;
            }
        }
        let terms = merged.into_iter().map(|(index, coeffs)| HermiteTerm { index, coeffs }).collect();
        Ok(Self { dim, out, terms })
    }

    /// x ↦ x/√d.
    pub fn linear_isometry(d: usize) -> Result<Self> {
        let c = 1.0 / (d as f64).sqrt();
        let terms = (0..d)
            .map(|i| {
                let mut coeffs = vec![0.0; d];
                coeffs[i] = c;
                HermiteTerm { index: vec![(i, 1)], coeffs }
            })
            .collect();
        Self::new(d, d, terms)
    }

    pub fn constant(dim: usize, value: Vec<f64>) -> Result<Self> {
        let out = value.len();
        Self::new(dim, out, vec![HermiteTerm { index: vec![], coeffs: value }])
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().filter(|t| t.coeffs.iter().any(|&c| c != 0.0)).map(HermiteTerm::degree).max().unwrap_or(0)
    }

    pub fn second_moment(&self) -> f64 {
        self.terms.iter().map(|t| t.coeffs.iter().map(|c| c * c).sum::<f64>()).sum()
    }

    /// E‖f(X) − f(Y)‖² for ρ-correlated standard Gaussians: 2Σ‖c_a‖²(1 − ρ^{|a|}).
    pub fn exact_discrepancy(&self, rho: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| 2.0 * t.coeffs.iter().map(|c| c * c).sum::<f64>() * (1.0 - rho.powi(t.degree() as i32)))
            .sum()
    }

    /// Rescaled so that E‖f(X)‖² = 1.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.second_moment();
        if !(m > 0.0) {
            return Err(Error::Numeric("zero polynomial cannot be normalized".into()));
        }
        let s = 1.0 / m.sqrt();
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coeffs.iter_mut().for_each(|c| *c *= s);
        }
        Ok(out)
    }

    /// Multiplies output coordinate i by signs[i].
    pub fn with_output_signs(&self, signs: &SpinVector) -> Result<Self> {
        ensure(signs.len() == self.out, "signs", || "length must equal output dimension".into())?;
        let mut out = self.clone();
        for t in &mut out.terms {
            for (c, &s) in t.coeffs.iter_mut().zip(signs.as_slice()) {
                *c *= s as f64;
            }
        }
        Ok(out)
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure(x.len() == self.dim, "x", || format!("length {} ≠ {}", x.len(), self.dim))?;
        let d = self.degree();
        let mut cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut y = vec![0.0; self.out];
        for t in &self.terms {
            let mut basis = 1.0;
            for &(v, a) in &t.index {
                basis *= cache.entry(v).or_insert_with(|| normalized_hermite(x[v], d))[a as usize];
            }
            for (yi, c) in y.iter_mut().zip(&t.coeffs) {
                *yi += c * basis;
            }
        }
        Ok(y)
    }
}

/// Random polynomial with `terms` monomials of total degree ≤ `degree`
/// (the first one of degree exactly `degree`), N(0, 1) coefficients,
/// normalized to E‖f‖² = 1.
pub fn random_hermite_poly(dim: usize, out: usize, degree: u32, terms: usize, stream: RngStream) -> Result<HermitePoly> {
    use rand::Rng as _;
    ensure(terms >= 1, "terms", || "need at least one term".into())?;
    let mut rng = stream.rng();
    let raw = (0..terms)
        .map(|i| {
            let t = if i == 0 { degree } else { rng.random_range(0..=degree) };
            let index = (0..t).map(|_| (rng.random_range(0..dim), 1)).collect();
            let coeffs = (0..out).map(|_| normal(&mut rng)).collect();
            HermiteTerm { index, coeffs }
        })
        .collect();
    HermitePoly::new(dim, out, raw)?.normalized()
}

pub const CORPUS_SEED: u64 = 0x0067_7031;

/// The fixed test corpus: polynomial i is drawn from stream (CORPUS_SEED, i)
/// with degree 1 + i mod 4, input dimension 3 + i mod 8, output dimension
/// 1 + i mod 3 and 1 + i mod 12 terms.
pub fn polynomial_corpus(count: usize) -> Result<Vec<HermitePoly>> {
    (0..count)
        .map(|i| {
            random_hermite_poly(3 + i % 8, 1 + i % 3, 1 + (i % 4) as u32, 1 + i % 12, RngStream::new(CORPUS_SEED, i as u64))
        })
        .collect()
}

fn correlated_pair(dim: usize, rho: f64, rng: &mut crate::rng::Rng) -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
    let s = (1.0 - rho * rho).max(0.0).sqrt();
    let y = x.iter().map(|&xi| rho * xi + s * normal(rng)).collect();
    (x, y)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailRow {
    pub t: f64,
    pub empirical: f64,
    pub bound: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub rho: f64,
    pub degree: u32,
    pub draws: usize,
    pub empirical_norm: Estimate,
    pub mean: Estimate,
    pub exact_mean: f64,
    /// 2(1 − ρ^D).
    pub mean_bound: f64,
    pub tail: Vec<TailRow>,
}

impl StabilityReport {
    pub fn mean_respected(&self, k: f64) -> bool {
        self.mean.mean <= self.mean_bound + k * self.mean.stderr + 1e-12
    }

    pub fn tail_respected(&self, k: f64) -> bool {
        self.tail.iter().all(|r| r.empirical <= r.bound + k * r.sigma)
    }
}

/// Monte Carlo check of E‖f(X) − f(Y)‖² ≤ 2(1 − ρ^D) and of the tail bound
/// P(‖f(X) − f(Y)‖² ≥ 2t(1 − ρ^D)) ≤ exp(−(D/3e) t^{1/D}) at t = (6e)^D·{1, 2, 4, 8}.
pub fn poly_stability_check(f: &HermitePoly, rho: f64, draws: usize, stream: RngStream) -> Result<StabilityReport> {
    ensure((0.0..=1.0).contains(&rho), "rho", || format!("{rho} outside [0, 1]"))?;
    ensure(draws >= 2, "draws", || "need at least two draws".into())?;
    let m = f.second_moment();
    if !(m > 0.0) {
        return Err(Error::Numeric("zero polynomial cannot be normalized".into()));
    }
    ensure((m - 1.0).abs() <= 1e-9, "f", || format!("E‖f‖² = {m}, expected 1"))?;
    let d = f.degree().max(1);
    let df = d as f64;
    let mean_bound = 2.0 * (1.0 - rho.powi(d as i32));
    let ts: Vec<f64> = (0..4).map(|k| (6.0 * E).powi(d as i32) * 2f64.powi(k)).collect();
    let mut rng = stream.rng();
    let (mut norm, mut disc) = (Welford::default(), Welford::default());
    let mut exceed = vec![0usize; ts.len()];
    for _ in 0..draws {
        let (x, y) = correlated_pair(f.dim, rho, &mut rng);
        let fx = f.eval(&x)?;
        let fy = f.eval(&y)?;
        norm.push(fx.iter().map(|v| v * v).sum());
        let s = sq_dist(&fx, &fy);
        disc.push(s);
        for (e, &t) in exceed.iter_mut().zip(&ts) {
            if s >= 2.0 * t * (1.0 - rho.powi(d as i32)) && s > 0.0 {
                *e += 1;
            }
        }
    }
    let tail = ts
        .iter()
        .zip(&exceed)
        .map(|(&t, &e)| {
            let bound = (-(df / (3.0 * E)) * t.powf(1.0 / df)).exp();
            TailRow { t, empirical: e as f64 / draws as f64, bound, sigma: binom_se(bound.min(1.0).max(1.0 / draws as f64), draws) }
        })
        .collect();
    Ok(StabilityReport {
        rho,
        degree: f.degree(),
        draws,
        empirical_norm: norm.estimate(),
        mean: disc.estimate(),
        exact_mean: f.exact_discrepancy(rho),
        mean_bound,
        tail,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HypercontractiveRow {
    pub q: f64,
    pub lhs: Estimate,
    pub rhs: f64,
}

impl HypercontractiveRow {
    pub fn respected(&self, k: f64) -> bool {
        self.lhs.mean <= self.rhs + k * self.lhs.stderr
    }
}

/// E‖f(Y)‖^{2q} against [3(q−1)]^{qD} (E‖f(Y)‖²)^q, q ∈ [2, 6].
pub fn hypercontractive_tail_check(f: &HermitePoly, qs: &[f64], draws: usize, stream: RngStream) -> Result<Vec<HypercontractiveRow>> {
    ensure(qs.iter().all(|q| (2.0..=6.0).contains(q)), "q", || "q must lie in [2, 6]".into())?;
    ensure(draws >= 2, "draws", || "need at least two draws".into())?;
    let m = f.second_moment();
    let d = f.degree() as f64;
    let mut rng = stream.rng();
    let mut acc = vec![Welford::default(); qs.len()];
    for _ in 0..draws {
        let y: Vec<f64> = (0..f.dim).map(|_| normal(&mut rng)).collect();
        let sq: f64 = f.eval(&y)?.iter().map(|v| v * v).sum();
        for (w, &q) in acc.iter_mut().zip(qs) {
            w.push(sq.powf(q));
        }
    }
    Ok(qs
        .iter()
        .zip(acc)
        .map(|(&q, w)| HypercontractiveRow { q, lhs: w.estimate(), rhs: (3.0 * (q - 1.0)).powf(q * d) * m.powf(q) })
        .collect())
}

/// g = √n f/‖f‖₂, or `None` when f = 0.
pub fn round_to_sphere(f: &[f64]) -> Option<Vec<f64>> {
    let norm = crate::linalg::norm(f);
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    let s = (f.len() as f64).sqrt() / norm;
    Some(f.iter().map(|v| v * s).collect())
}

// ---------------------------------------------------------------------------
// Ensemble overlap-gap events along an interpolation path

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EventParams {
    pub mu: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub gamma: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EventOutcome {
    /// No two μ-good path points have R ∈ (ν₁, ν₂), and good endpoints have R ≤ ν₁.
    pub overlap_gap: bool,
    /// Every rounded output is defined with H ≥ μ.
    pub succeeds: bool,
    /// ‖f(Y_{τ_ℓ}) − f(Y_{τ_{ℓ+1}})‖² < γ²cn for every ℓ.
    pub small_steps: bool,
    pub energies: Vec<Option<f64>>,
    pub max_step_sq: f64,
}

impl EventOutcome {
    pub fn all_three(&self) -> bool {
        self.overlap_gap && self.succeeds && self.small_steps
    }
}

fn overlap_r(a: &[f64], b: &[f64]) -> f64 {
    crate::linalg::dot(a, b).abs() / a.len() as f64
}

/// Evaluates f on every Y_τ of the path (flattened tensor in, ℝ^n out) and
/// records which of the three events hold. They cannot hold together when
/// c ≤ (ν₂ − ν₁)².
pub fn eogp_events(f: &HermitePoly, path: &InterpolationPath, params: EventParams) -> Result<EventOutcome> {
    let n = path.y.n;
    ensure(f.dim == path.y.data.len() && f.out == n, "f", || "polynomial must map ℝ^{n^p} to ℝ^n".into())?;
    ensure(params.nu1 < params.nu2, "nu", || "need ν₁ < ν₂".into())?;
    ensure(params.c <= (params.nu2 - params.nu1).powi(2), "c", || "need c ≤ (ν₂ − ν₁)²".into())?;
    let mut outputs = Vec::new();
    let mut points = Vec::new();
    let mut energies = Vec::new();
    for l in 0..path.taus.len() {
        let y = path.at(l)?;
        let fv = f.eval(&y.data)?;
        let g = round_to_sphere(&fv);
        let e = g.as_ref().map(|g| pspin_energy(g, &y)).transpose()?;
        outputs.push(fv);
        points.push(g);
        energies.push(e);
    }
    let good: Vec<Option<&Vec<f64>>> =
        points.iter().zip(&energies).map(|(g, e)| g.as_ref().filter(|_| e.is_some_and(|e| e >= params.mu))).collect();
    let mut overlap_gap = true;
    for i in 0..good.len() {
        for j in i + 1..good.len() {
            if let (Some(a), Some(b)) = (good[i], good[j]) {
                let r = overlap_r(a, b);
                if r > params.nu1 && r < params.nu2 {
                    overlap_gap = false;
                }
            }
        }
    }
    if let (Some(a), Some(b)) = (good[0], good[good.len() - 1]) {
        if overlap_r(a, b) > params.nu1 {
            overlap_gap = false;
        }
    }
    let succeeds = good.iter().all(Option::is_some);
    let max_step_sq = outputs.windows(2).map(|w| sq_dist(&w[0], &w[1])).fold(0.0, f64::max);
    let small_steps = max_step_sq < params.gamma * params.gamma * params.c * n as f64;
    Ok(EventOutcome { overlap_gap, succeeds, small_steps, energies, max_step_sq })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EogpWindow {
    pub d_tilde: u32,
    pub l_min: f64,
    pub l_max: f64,
    /// Smallest admissible integer L.
    pub steps: u64,
    /// ρ = cos(π/(2L)).
    pub rho: f64,
    /// 1 − ρ^{D̃} and its bound (D̃/2)(π/(2L))².
    pub decorrelation: f64,
    pub decorrelation_bound: f64,
}

/// Finds the smallest D̃ ≥ D for which an integer L satisfies
/// (π/(2γ))√(3D̃/c)(√(6e))^{D̃} ≤ L ≤ min{1/(9δ) − 1, e^{2D̃}/3}.
pub fn eogp_window(degree: u32, gamma: f64, c: f64, delta: f64, max_d_tilde: u32) -> Result<Option<EogpWindow>> {
    ensure(gamma > 0.0 && c > 0.0 && delta > 0.0, "params", || "γ, c, δ must be positive".into())?;
    for d in degree.max(1)..=max_d_tilde {
        let df = d as f64;
        let l_min = FRAC_PI_2 / gamma * (3.0 * df / c).sqrt() * (6.0 * E).sqrt().powf(df);
        let l_max = (1.0 / (9.0 * delta) - 1.0).min((2.0 * df).exp() / 3.0);
        let steps = l_min.ceil().max(1.0);
        if steps <= l_max {
            let theta = FRAC_PI_2 / steps;
            let rho = theta.cos();
            return Ok(Some(EogpWindow {
                d_tilde: d,
                l_min,
                l_max,
                steps: steps as u64,
                rho,
                decorrelation: 1.0 - rho.powi(d as i32),
                decorrelation_bound: df / 2.0 * theta * theta,
            }));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{npp_energy, npp_overlap};

    fn brute(x: &[f64], eps: f64) -> Vec<SpinVector> {
        let n = x.len();
        let level = (-eps * n as f64).exp2();
        (0u32..1 << (n - 1))
            .map(|m| class_spins(n, m))
            .filter(|s| npp_energy(s, x).unwrap() <= level)
            .collect()
    }

    #[test]
    fn scan_matches_brute_force() {
        for seed in 0..20 {
            let mut rng = RngStream::new(seed, 0).rng();
            let x = crate::models::sample_npp(12, &mut rng).unwrap();
            let eps = 0.3;
            let scan = npp_exhaustive_scan(&x, eps).unwrap();
            let oracle = brute(&x, eps);
            assert_eq!(scan.solutions.len(), oracle.len());
            let mut hist = vec![0u64; 13];
            for i in 0..oracle.len() {
                for j in i + 1..oracle.len() {
                    hist[(npp_overlap(&oracle[i], &oracle[j]) * 12.0).round() as usize] += 1;
                }
            }
            assert_eq!(scan.overlap_counts, hist);
            let min = (0u32..1 << 11).map(|m| npp_energy(&class_spins(12, m), &x).unwrap()).fold(f64::INFINITY, f64::min);
            assert!((scan.min_energy - min).abs() < 1e-12);
        }
    }

    #[test]
    fn first_moment_arithmetic() {
        let e = npp_first_moment_exponent(1000, 1.0, 0.99).unwrap();
        assert!(e.leading < 0.0 && e.finite_n < 0.0);
        let e = npp_first_moment_exponent(1000, 0.51, 0.01).unwrap();
        assert!(e.leading > 0.9);
    }

    #[test]
    fn gibbs_beta_zero_counts() {
        let mut rng = RngStream::new(3, 0).rng();
        let x = crate::models::sample_npp(10, &mut rng).unwrap();
        let g = npp_gibbs_partition_ratio(&x, 0.0, 0.75, 0.5).unwrap();
        for i in 0..3 {
            assert!((g.log_pi[i] - (g.sizes[i] as f64 / 1024.0).ln()).abs() < 1e-12);
        }
        assert_eq!(g.sizes[2], 1);
    }

    #[test]
    fn interpolation_endpoints_exact() {
        let a = Tensor::new(2, 3, (0..9).map(|i| i as f64 * 0.37 - 1.0).collect()).unwrap();
        let b = Tensor::new(2, 3, (0..9).map(|i| (i as f64).sin()).collect()).unwrap();
        assert_eq!(interpolate(&a, &b, 0.0).unwrap(), a);
        assert_eq!(interpolate(&a, &b, FRAC_PI_2).unwrap(), b);
        assert!(interpolate(&a, &Tensor::zeros(2, 4), 0.1).is_err());
    }

    #[test]
    fn hermite_basis_is_orthonormal() {
        // Gauss-Hermite quadrature on products of the normalized polynomials.
        let rule = crate::quad::NormalRule::gauss_hermite(20);
        for a in 0..5u32 {
            for b in 0..5u32 {
                let v = rule.expect(|x| normalized_hermite(x, 4)[a as usize] * normalized_hermite(x, 4)[b as usize]);
                assert!((v - if a == b { 1.0 } else { 0.0 }).abs() < 1e-10, "{a} {b} {v}");
            }
        }
    }

    #[test]
    fn round_to_sphere_sentinel() {
        assert!(round_to_sphere(&[0.0, 0.0]).is_none());
        assert_eq!(round_to_sphere(&[1.0, 0.0, 0.0, 0.0]).unwrap(), vec![2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn window_calculator() {
        assert!(eogp_window(2, 0.5, 0.01, 0.1, 50).unwrap().is_none());
        let w = eogp_window(2, 0.5, 0.01, 1e-12, 50).unwrap().unwrap();
        assert!(w.decorrelation <= w.decorrelation_bound);
        assert!(w.l_min <= w.steps as f64 && w.steps as f64 <= w.l_max);
    }
}

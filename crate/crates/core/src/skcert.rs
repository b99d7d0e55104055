//! Certificates and search for SK(W) = (1/n) max_{x∈{±1}^n} xᵀWx.

use serde::Serialize;

use crate::error::{ensure, Error, Result};
use crate::linalg::{lambda_max, top_eigenpair, SymMatrix};
use crate::models::{sample_quiet_planted_sk, SpinVector};
use crate::rng::RngStream;
use crate::stats::{auc, Estimate, Welford};

pub const BRUTE_MAX_N: usize = 22;
/// Twice the Parisi constant, the limit of E SK(W).
pub const PARISI_SK: f64 = 1.5264;

#[derive(Debug, Clone, Serialize)]
pub struct SkSolution {
    pub value: f64,
    /// Maximizer with x_{n−1} = +1.
    pub argmax: SpinVector,
}

fn quad(w: &SymMatrix, x: &[f64]) -> f64 {
    w.quad_form(x)
}

/// Exact SK(W) by Gray-code enumeration of the 2^{n−1} classes x ~ −x.
pub fn sk_bruteforce(w: &SymMatrix) -> Result<SkSolution> {
    let n = w.n();
    ensure((1..=BRUTE_MAX_N).contains(&n), "n", || format!("n = {n} outside [1, {BRUTE_MAX_N}]"))?;
    let mut x = vec![1.0f64; n];
    // h_i = Σ_{j≠i} W_ij x_j
    let mut h: Vec<f64> = (0..n).map(|i| (0..n).filter(|&j| j != i).map(|j| w.get(i, j)).sum()).collect();
    let mut q = quad(w, &x);
    let scale: f64 = w.as_slice().iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    let slack = 1e-9 * scale;
    let (mut best_q, mut best_x) = (q, x.clone());
    for i in 1u64..(1u64 << (n - 1)) {
        let b = i.trailing_zeros() as usize;
        q -= 4.0 * x[b] * h[b];
        let xb = x[b];
        for (j, hj) in h.iter_mut().enumerate() {
            if j != b {
                *hj -= 2.0 * xb * w.get(j, b);
            }
        }
        x[b] = -xb;
        if q >= best_q - slack {
            let exact = quad(w, &x);
            if exact > best_q {
                best_q = exact;
                best_x.copy_from_slice(&x);
            }
        }
    }
    let argmax = SpinVector::signs_of(&best_x);
    Ok(SkSolution { value: best_q / n as f64, argmax })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CertMethod {
    AbsSum,
    Spectral,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub method: CertMethod,
    pub value: f64,
    pub note: &'static str,
}

/// Σ_{i,j} |W_ij|. Since xᵀWx ≤ AbsSum on the cube, SK(W) ≤ AbsSum/n ≤ AbsSum.
pub fn abssum_cert(w: &SymMatrix) -> CertificateReport {
    let n = w.n();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += w.get(i, j).abs();
        }
    }
    CertificateReport { method: CertMethod::AbsSum, value: s, note: "O(n²) entry sum" }
}

/// λ_max(W) ≥ (1/n) xᵀWx for every x ∈ {±1}^n.
pub fn spectral_cert(w: &SymMatrix) -> Result<CertificateReport> {
    ensure(w.asymmetry() <= 1e-12, "W", || "matrix must be symmetric".into())?;
    let v = lambda_max(w)?;
    if !v.is_finite() {
        return Err(Error::Numeric("eigensolver returned a non-finite value".into()));
    }
    Ok(CertificateReport { method: CertMethod::Spectral, value: v, note: "top eigenvalue" })
}

/// sup_{X ⪰ 0, X_ii = 1} Tr(WX) needs a semidefinite solver, which is not provided.
pub fn sdp_cert(_w: &SymMatrix) -> Result<CertificateReport> {
    Err(Error::Unsupported("SDP certificate requires a semidefinite solver".into()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub x: SpinVector,
    /// (1/n) xᵀWx.
    pub value: f64,
    /// ⟨sign(v), v⟩/√n for the unit top eigenvector v.
    pub alignment: f64,
    pub lambda_max: f64,
}

/// x = sign(v_max).
pub fn sign_rounding_search(w: &SymMatrix) -> Result<SearchResult> {
    let n = w.n();
    let pair = top_eigenpair(w)?;
    let x = SpinVector::signs_of(&pair.vector);
    let xf = x.to_f64();
    let norm = crate::linalg::norm(&pair.vector);
    let alignment = crate::linalg::dot(&xf, &pair.vector).abs() / (norm * (n as f64).sqrt());
    Ok(SearchResult { value: quad(w, &xf) / n as f64, x, alignment, lambda_max: pair.value })
}

/// 2√(2/π).
pub fn slepian_bound_constant() -> f64 {
    2.0 * (2.0 / std::f64::consts::PI).sqrt()
}

/// Monte Carlo E max_{v∈{±1/√n}^n} 2⟨v, g⟩ = E 2Σ|g_i|/√n with g ~ N(0, I/n).
pub fn slepian_mc_check(n: usize, draws: usize, stream: RngStream) -> Result<Estimate> {
    ensure(n >= 1 && draws >= 2, "draws", || "need n ≥ 1 and at least two draws".into())?;
    let mut rng = stream.rng();
    let sd = 1.0 / (n as f64).sqrt();
    let mut acc = Welford::default();
    for _ in 0..draws {
        let s: f64 = (0..n).map(|_| (crate::models::normal(&mut rng) * sd).abs()).sum();
        acc.push(2.0 * s / (n as f64).sqrt());
    }
    Ok(acc.estimate())
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichDraw {
    pub rounding: f64,
    pub brute: Option<f64>,
    pub spectral: f64,
    pub abssum: f64,
}

impl SandwichDraw {
    /// rounding ≤ brute ≤ spectral and brute ≤ abssum, exactly.
    pub fn ordered(&self) -> bool {
        match self.brute {
            Some(b) => self.rounding <= b && b <= self.spectral && b <= self.abssum,
            None => self.rounding <= self.spectral,
        }
    }
}

/// All certificates and the sign-rounding search on one W.
pub fn sandwich(w: &SymMatrix) -> Result<SandwichDraw> {
    let brute = if w.n() <= BRUTE_MAX_N { Some(sk_bruteforce(w)?.value) } else { None };
    Ok(SandwichDraw {
        rounding: sign_rounding_search(w)?.value,
        brute,
        spectral: spectral_cert(w)?.value,
        abssum: abssum_cert(w).value,
    })
}

/// `draws` GOE matrices, draw i from `stream.child(i)`.
pub fn sandwich_sweep(n: usize, draws: usize, stream: RngStream) -> Result<Vec<SandwichDraw>> {
    (0..draws as u64)
        .map(|i| {
            let w = match sample_quiet_planted_sk(n, 0.0, stream.child(i))?.observation {
                crate::models::Observation::Matrix(m) => m,
                _ => unreachable!("SK sampler returns a matrix"),
            };
            sandwich(&w)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PlantingRow {
    pub c: f64,
    /// (1/n) xᵀW′x at the planted x.
    pub planted_value: Estimate,
    pub null_lambda: Estimate,
    pub planted_lambda: Estimate,
    /// P(λ_max(W′) > λ_max(W)).
    pub auc: f64,
}

/// W′ = (c/n)xxᵀ + W against W ~ GOE, scored by λ_max, `draws` per class.
/// The null ensemble is shared across the c grid.
pub fn quiet_planting_experiment(n: usize, c_grid: &[f64], draws: usize, stream: RngStream) -> Result<Vec<PlantingRow>> {
    ensure(c_grid.iter().all(|c| (0.0..=3.0).contains(c)), "c", || "c must lie in [0, 3]".into())?;
    ensure(draws >= 2, "draws", || "need at least two draws per class".into())?;
    let null_stream = stream.named("null");
    let null: Vec<f64> = (0..draws as u64)
        .map(|i| {
            let inst = sample_quiet_planted_sk(n, 0.0, null_stream.child(i))?;
            lambda_max(inst.matrix().expect("SK sampler returns a matrix"))
        })
        .collect::<Result<_>>()?;
    let null_lambda = crate::stats::welford(&null).estimate();
    c_grid
        .iter()
        .enumerate()
        .map(|(ci, &c)| {
            let s = stream.named("planted").child(ci as u64);
            let mut value = Welford::default();
            let mut scores = Vec::with_capacity(draws);
            for i in 0..draws as u64 {
                let inst = sample_quiet_planted_sk(n, c, s.child(i))?;
                let w = inst.matrix().expect("SK sampler returns a matrix");
                let x = inst.signal_vector().expect("planted spins");
                value.push(quad(w, &x) / n as f64);
                scores.push(lambda_max(w)?);
            }
            Ok(PlantingRow {
                c,
                planted_value: value.estimate(),
                null_lambda,
                planted_lambda: crate::stats::welford(&scores).estimate(),
                auc: auc(&null, &scores),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{sample_goe, GoeScale};

    fn naive(w: &SymMatrix) -> f64 {
        let n = w.n();
        (0u32..1 << n)
            .map(|m| {
                let x: Vec<f64> = (0..n).map(|j| if m >> j & 1 == 1 { -1.0 } else { 1.0 }).collect();
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += x[i] * w.get(i, j) * x[j];
                    }
                }
                s / n as f64
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn gray_code_matches_naive() {
        for seed in 0..10 {
            let mut rng = RngStream::new(seed, 1).rng();
            let n = 2 + seed as usize % 9;
            let w = sample_goe(n, GoeScale::Normalized, &mut rng).unwrap();
            let s = sk_bruteforce(&w).unwrap();
            assert!((s.value - naive(&w)).abs() < 1e-12);
            assert!((quad(&w, &s.argmax.to_f64()) / n as f64 - s.value).abs() < 1e-15);
        }
    }

    #[test]
    fn trivial_matrices() {
        let w = SymMatrix::from_upper(1, |_, _| -0.7);
        assert_eq!(sk_bruteforce(&w).unwrap().value, -0.7);
        let w = SymMatrix::from_upper(4, |_, _| 0.25);
        assert!((sk_bruteforce(&w).unwrap().value - 1.0).abs() < 1e-15);
        let id = SymMatrix::identity(6);
        assert!((spectral_cert(&id).unwrap().value - 1.0).abs() < 1e-12);
        assert!((sign_rounding_search(&id).unwrap().value - 1.0).abs() < 1e-15);
        assert_eq!(abssum_cert(&SymMatrix::zeros(3)).value, 0.0);
        assert!(sdp_cert(&id).is_err());
    }

    #[test]
    fn slepian_constant() {
        assert!((slepian_bound_constant() - 1.59577).abs() < 1e-5);
        assert!(PARISI_SK < slepian_bound_constant() && slepian_bound_constant() < 2.0);
    }
}

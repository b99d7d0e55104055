//! Cumulant recursion κ_α over multigraphs and the planted-submatrix correlation bound.

use super::multigraph::Multigraph;
use crate::error::{ensure, Error, Result};
use crate::stats::{choose, LogSumExp};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Exact moments of a signal X indexed by vertex pairs, and of a scalar target x.
pub trait MomentOracle {
    fn n(&self) -> usize;
    /// E[X^α].
    fn moment(&self, alpha: &Multigraph) -> Result<f64>;
    /// E[x X^α].
    fn target_moment(&self, alpha: &Multigraph) -> Result<f64>;
}

fn check_domain(alpha: &Multigraph, n: usize) -> Result<()> {
    match alpha.vertices().last() {
        Some(&v) if v as usize >= n => Err(Error::Unsupported(format!("{alpha:?} uses vertex {v} outside [0, {n})"))),
        _ => Ok(()),
    }
}

/// Planted submatrix X_ij = λ v_i v_j, v_i ~ Bernoulli(ρ), target x = v_0, in closed form:
/// E X^γ = λ^{|γ|} ρ^{|V(γ)|} and E x X^γ = λ^{|γ|} ρ^{|V(γ) ∪ {0}|}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedSubmatrixMoments {
    pub n: usize,
    pub lambda: f64,
    pub rho: f64,
}

impl MomentOracle for PlantedSubmatrixMoments {
    fn n(&self) -> usize {
        self.n
    }

    fn moment(&self, alpha: &Multigraph) -> Result<f64> {
        check_domain(alpha, self.n)?;
        Ok(self.lambda.powi(alpha.size() as i32) * self.rho.powi(alpha.vertices().len() as i32))
    }

    fn target_moment(&self, alpha: &Multigraph) -> Result<f64> {
        check_domain(alpha, self.n)?;
        let mut v = alpha.vertices();
        v.insert(0);
        Ok(self.lambda.powi(alpha.size() as i32) * self.rho.powi(v.len() as i32))
    }
}

/// Moments by enumeration over a finite list of weighted states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumeratedMoments {
    pub n: usize,
    /// (X as a dense symmetric n×n matrix, target x, probability).
    pub states: Vec<(Vec<f64>, f64, f64)>,
}

/// Largest vertex count accepted by the enumerating oracles.
pub const ENUM_MAX_N: usize = 8;

impl EnumeratedMoments {
    pub fn planted_submatrix(n: usize, lambda: f64, rho: f64) -> Result<Self> {
        ensure(n <= ENUM_MAX_N, "n", || format!("enumeration limited to n ≤ {ENUM_MAX_N}"))?;
        let states = (0u32..1 << n)
            .map(|mask| {
                let v: Vec<f64> = (0..n).map(|i| (mask >> i & 1) as f64).collect();
                let k = mask.count_ones() as i32;
                let p = rho.powi(k) * (1.0 - rho).powi(n as i32 - k);
                let x = (0..n * n).map(|e| lambda * v[e / n] * v[e % n]).collect();
                (x, v[0], p)
            })
            .collect();
        Ok(Self { n, states })
    }

    /// Applies X ↦ cX + y entrywise (y a dense symmetric matrix).
    pub fn affine(&self, c: f64, y: &[f64]) -> Self {
        Self {
            n: self.n,
            states: self.states.iter().map(|(x, t, p)| (x.iter().zip(y).map(|(a, b)| c * a + b).collect(), *t, *p)).collect(),
        }
    }

    fn eval(&self, alpha: &Multigraph, with_target: bool) -> Result<f64> {
        check_domain(alpha, self.n)?;
        let n = self.n;
        Ok(self
            .states
            .iter()
            .map(|(x, t, p)| {
                let m: f64 = alpha.edges().iter().map(|&(i, j, k)| x[i as usize * n + j as usize].powi(k as i32)).product();
                p * m * if with_target { *t } else { 1.0 }
            })
            .sum())
    }
}

impl MomentOracle for EnumeratedMoments {
    fn n(&self) -> usize {
        self.n
    }

    fn moment(&self, alpha: &Multigraph) -> Result<f64> {
        self.eval(alpha, false)
    }

    fn target_moment(&self, alpha: &Multigraph) -> Result<f64> {
        self.eval(alpha, true)
    }
}

/// κ (or r) values keyed by multigraph.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub values: Vec<(Multigraph, f64)>,
    index: HashMap<Multigraph, usize>,
}

impl CoefficientTable {
    fn from_values(values: Vec<(Multigraph, f64)>) -> Self {
        let index = values.iter().enumerate().map(|(i, (a, _))| (a.clone(), i)).collect();
        Self { values, index }
    }

    pub fn get(&self, alpha: &Multigraph) -> Option<f64> {
        self.index.get(alpha).map(|&i| self.values[i].1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Σ value²/α!.
    pub fn factorial_weighted_sum(&self) -> f64 {
        self.values.iter().map(|(a, v)| v * v / a.factorial()).sum()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(["alpha", "size", "value"]).map_err(io)?;
        for (a, v) in &self.values {
            out.write_record([a.edge_string(), a.size().to_string(), format!("{v:e}")]).map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Generic recursion c_α = top(α) − Σ_{β ⪇ α} c_β C(α,β) low(α − β) over `alphas`,
/// which must be closed under taking sub-multigraphs.
pub(crate) fn lattice_recursion(
    mut alphas: Vec<Multigraph>,
    top: impl Fn(&Multigraph) -> Result<f64>,
    low: impl Fn(&Multigraph) -> Result<f64>,
) -> Result<CoefficientTable> {
    alphas.sort_by_key(|a| a.size());
    let mut memo: HashMap<Multigraph, f64> = HashMap::with_capacity(alphas.len());
    let mut low_memo: HashMap<Multigraph, f64> = HashMap::new();
    let mut values = Vec::with_capacity(alphas.len());
    for a in alphas {
        let mut v = top(&a)?;
        for b in a.sub_multigraphs()? {
            if b == a {
                continue;
            }
            let cb = *memo.get(&b).ok_or_else(|| Error::Numeric(format!("{b:?} missing from the index set")))?;
            if cb == 0.0 {
                continue;
            }
            let rest = a.minus(&b);
            let m = match low_memo.get(&rest) {
                Some(&m) => m,
                None => {
                    let m = low(&rest)?;
                    low_memo.insert(rest, m);
                    m
                }
            };
            v -= cb * a.binom(&b) * m;
        }
        memo.insert(a.clone(), v);
        values.push((a, v));
    }
    Ok(CoefficientTable::from_values(values))
}

/// κ_α = E[x X^α] − Σ_{0≤β⪇α} κ_β C(α,β) E[X^{α−β}] for every multigraph on the
/// oracle's vertices (self-loops allowed) with |α| ≤ D.
pub fn kappa_cumulants(oracle: &dyn MomentOracle, d: u32) -> Result<CoefficientTable> {
    ensure(oracle.n() <= u16::MAX as usize, "n", || "too many vertices".into())?;
    let alphas = Multigraph::enumerate(oracle.n() as u16, true, d, None);
    lattice_recursion(alphas, |a| oracle.target_moment(a), |a| oracle.moment(a))
}

/// (|α|+1)^{|α|} λ^{|α|} ρ^{|V(α)|}; ρ for the empty multigraph.
pub fn kappa_magnitude_bound(alpha: &Multigraph, lambda: f64, rho: f64) -> f64 {
    let s = alpha.size() as i32;
    if s == 0 {
        return rho;
    }
    ((s + 1) as f64).powi(s) * lambda.powi(s) * rho.powi(alpha.vertices().len() as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrTerm {
    pub h: u32,
    pub d: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrBound {
    pub bound: f64,
    pub log_bound: f64,
    /// bound/ρ² − 1.
    pub excess: f64,
    /// E[x²] − bound = ρ − bound, a lower bound on the degree-D MMSE.
    pub mmse_lower: f64,
    pub terms: Vec<CorrTerm>,
}

/// Terms below this fraction of the leading term are dropped.
pub const CORR_TRUNCATION: f64 = 1e-30;

/// Corr²_{≤D} ≤ ρ² Σ_{h=0}^{D} [D²(D+1)²λ²]^h Σ_{d=h}^{D} [D(D+1)²λ²ρ²n]^{d−h}.
pub fn corr_ld_bound(lambda: f64, rho: f64, n: f64, d: u32) -> Result<CorrBound> {
    ensure(d >= 1, "D", || "need D ≥ 1".into())?;
    ensure(rho > 0.0 && rho < 1.0 && lambda >= 0.0 && n >= 1.0, "rho", || "need ρ ∈ (0,1), λ ≥ 0, n ≥ 1".into())?;
    let df = d as f64;
    let ln_a = if lambda == 0.0 { f64::NEG_INFINITY } else { (df * df * (df + 1.0).powi(2)).ln() + 2.0 * lambda.ln() };
    let ln_b = if lambda == 0.0 { f64::NEG_INFINITY } else { (df * (df + 1.0).powi(2)).ln() + 2.0 * lambda.ln() + 2.0 * rho.ln() + n.ln() };
    let ln_rho2 = 2.0 * rho.ln();
    let mut logs = Vec::new();
    for h in 0..=d {
        for dd in h..=d {
            let term = |ln_x: f64, p: u32| if p == 0 { 0.0 } else { p as f64 * ln_x };
            logs.push((h, dd, ln_rho2 + term(ln_a, h) + term(ln_b, dd - h)));
        }
    }
    let lead = logs.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max);
    let cut = lead + CORR_TRUNCATION.ln();
    let mut lse = LogSumExp::default();
    let mut terms = Vec::new();
    for (h, dd, l) in logs {
        if l >= cut {
            lse.push(l);
            terms.push(CorrTerm { h, d: dd, value: l.exp() });
        }
    }
    let log_bound = lse.value();
    let bound = log_bound.exp();
    Ok(CorrBound { bound, log_bound, excess: (log_bound - ln_rho2).exp_m1(), mmse_lower: rho - bound, terms })
}

/// Condition number above which the monomial Gram matrix is rejected.
pub const GRAM_COND_MAX: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactCorr {
    pub corr2: f64,
    pub condition: f64,
    pub monomials: usize,
}

/// E(x + Z)^k for Z ~ N(0,1).
fn shifted_gaussian_moment(x: f64, k: u32) -> f64 {
    (0..=k)
        .step_by(2)
        .map(|j| choose(k as u64, j as u64) * x.powi((k - j) as i32) * double_factorial(j.saturating_sub(1)))
        .sum()
}

fn double_factorial(k: u32) -> f64 {
    (1..=k).rev().step_by(2).map(|x| x as f64).product()
}

/// Exact Corr²_{≤D} = cᵀG⁻¹c for the planted submatrix model with unit diagonal noise,
/// by least squares over all monomials Y^a (|a| ≤ D) in the n(n+1)/2 entries
/// Y_ij = λ v_i v_j + Z_ij, target v_0.
pub fn exact_corr_squared(n: usize, lambda: f64, rho: f64, d: u32) -> Result<ExactCorr> {
    ensure(n <= 5, "n", || "exact correlation limited to n ≤ 5".into())?;
    let oracle = EnumeratedMoments::planted_submatrix(n, lambda, rho)?;
    let monos = Multigraph::enumerate(n as u16, true, d, None);
    let m = monos.len();
    ensure(m <= 2000, "D", || "too many monomials".into())?;
    let y_moment = |g: &Multigraph, with_target: bool| -> f64 {
        oracle
            .states
            .iter()
            .map(|(x, t, p)| {
                let prod: f64 = g.edges().iter().map(|&(i, j, k)| shifted_gaussian_moment(x[i as usize * n + j as usize], k)).product();
                p * prod * if with_target { *t } else { 1.0 }
            })
            .sum()
    };
    let mut gram = nalgebra::DMatrix::<f64>::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let v = y_moment(&monos[a].plus(&monos[b]), false);
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let c = nalgebra::DVector::from_iterator(m, monos.iter().map(|g| y_moment(g, true)));
    let eig = nalgebra::SymmetricEigen::new(gram.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0f64), |(l, h), &e| (l.min(e), h.max(e.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > GRAM_COND_MAX {
        return Err(Error::Numeric(format!("monomial Gram matrix condition {condition:e} exceeds {GRAM_COND_MAX:e}")));
    }
    let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| Error::Numeric("Gram matrix not positive definite".into()))?;
    let sol = chol.solve(&c);
    Ok(ExactCorr { corr2: c.dot(&sol), condition, monomials: m })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_moments() {
        assert_eq!(shifted_gaussian_moment(0.0, 4), 3.0);
        assert_eq!(shifted_gaussian_moment(2.0, 2), 5.0);
        assert_eq!(shifted_gaussian_moment(1.0, 3), 4.0);
    }

    #[test]
    fn base_cases() {
        let o = PlantedSubmatrixMoments { n: 4, lambda: 0.7, rho: 0.3 };
        let t = kappa_cumulants(&o, 2).unwrap();
        assert_eq!(t.get(&Multigraph::empty()).unwrap(), 0.3);
        let k12 = t.get(&Multigraph::from_pairs(&[(0, 1)])).unwrap();
        assert!((k12 - 0.7 * 0.09 * 0.7).abs() < 1e-15);
        assert!(t.get(&Multigraph::from_pairs(&[(1, 2)])).unwrap().abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_enumeration() {
        let c = PlantedSubmatrixMoments { n: 4, lambda: 0.9, rho: 0.35 };
        let e = EnumeratedMoments::planted_submatrix(4, 0.9, 0.35).unwrap();
        for a in Multigraph::enumerate(4, true, 3, None) {
            assert!((c.moment(&a).unwrap() - e.moment(&a).unwrap()).abs() < 1e-14);
            assert!((c.target_moment(&a).unwrap() - e.target_moment(&a).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn corr_bound_at_zero_signal() {
        let b = corr_ld_bound(0.0, 0.2, 100.0, 4).unwrap();
        assert!((b.bound - 0.04).abs() < 1e-15);
    }
}

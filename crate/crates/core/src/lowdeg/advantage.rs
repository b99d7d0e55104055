//! Planted-vs-planted advantage bounds via the r_α recursion.

use super::cumulant::{lattice_recursion, CoefficientTable, EnumeratedMoments, MomentOracle, ENUM_MAX_N};
use super::multigraph::Multigraph;
use crate::detect::{Separation, SeparationReport};
use crate::error::{ensure, Error, Result};
use serde::{Deserialize, Serialize};

/// r_α = E_P[X^α] − Σ_{0≤β⪇α} r_β C(α,β) E_Q[X^{α−β}] over the given index set
/// (closed under sub-multigraphs). For α ∈ {0,1}^N every C(α,β) is 1.
pub fn r_alpha_recursion(p: &dyn MomentOracle, q: &dyn MomentOracle, alphas: Vec<Multigraph>) -> Result<CoefficientTable> {
    ensure(p.n() == q.n(), "oracle", || "P and Q oracles disagree on n".into())?;
    lattice_recursion(alphas, |a| p.moment(a), |a| q.moment(a))
}

/// α ∈ {0,1}^N with |α| ≤ D over pairs i < j.
pub fn binary_index(n: usize, d: u32) -> Vec<Multigraph> {
    Multigraph::enumerate(n as u16, false, d, Some(1))
}

/// α ∈ N^N with |α| ≤ D over pairs i ≤ j (or i < j without loops).
pub fn gaussian_index(n: usize, d: u32, loops: bool) -> Vec<Multigraph> {
    Multigraph::enumerate(n as u16, loops, d, None)
}

/// √(Σ_{α∈{0,1}^N} r_α² / (τ0(1−τ1))^{|α|}).
pub fn adv_bound_binary(table: &CoefficientTable, tau0: f64, tau1: f64) -> Result<f64> {
    ensure(tau0 > 0.0 && tau0 <= tau1 && tau1 < 1.0, "tau0", || "need 0 < τ0 ≤ τ1 < 1".into())?;
    let c = tau0 * (1.0 - tau1);
    let mut s = 0.0;
    for (a, r) in &table.values {
        if a.edges().iter().any(|e| e.2 > 1 || e.0 == e.1) {
            return Err(Error::InvalidParam { name: "table", msg: format!("{a:?} is not a simple-graph index") });
        }
        s += r * r / c.powi(a.size() as i32);
    }
    Ok(s.sqrt())
}

/// √(Σ r_α² / α!).
pub fn adv_bound_gaussian(table: &CoefficientTable) -> f64 {
    table.factorial_weighted_sum().sqrt()
}

/// Scale matching the binary bound: X ↦ (X − τ0)/√(τ0(1−τ1)).
pub fn gaussian_scale(tau0: f64, tau1: f64) -> f64 {
    1.0 / (tau0 * (1.0 - tau1)).sqrt()
}

impl EnumeratedMoments {
    /// Binary community model signal: labels ℓ ∈ [M] w.p. k/(nM) each, ⋆ otherwise;
    /// X_ij = q + sM·1[σ_i = σ_j ≠ ⋆] on pairs i < j, and on the diagonal when `loops`.
    pub fn binary_community(n: usize, k: f64, q: f64, s: f64, m: usize, loops: bool) -> Result<Self> {
        ensure(n <= ENUM_MAX_N, "n", || format!("enumeration limited to n ≤ {ENUM_MAX_N}"))?;
        ensure(m >= 1 && k > 0.0 && k <= n as f64, "k", || "need M ≥ 1 and 0 < k ≤ n".into())?;
        let labels = m + 1; // label m is ⋆
        let count = (labels as u64).pow(n as u32);
        ensure(count <= 2_000_000, "m", || "too many label assignments".into())?;
        let slot = k / (n as f64 * m as f64);
        let mut states = Vec::with_capacity(count as usize);
        for code in 0..count {
            let mut c = code;
            let mut sigma = vec![0usize; n];
            let mut prob = 1.0;
            for x in sigma.iter_mut() {
                *x = (c % labels as u64) as usize;
                c /= labels as u64;
                prob *= if *x == m { 1.0 - k / n as f64 } else { slot };
            }
            if prob == 0.0 {
                continue;
            }
            let mut x = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    if i == j && !loops {
                        continue;
                    }
                    let same = sigma[i] != m && sigma[i] == sigma[j];
                    let v = q + if same { s * m as f64 } else { 0.0 };
                    x[i * n + j] = v;
                    x[j * n + i] = v;
                }
            }
            states.push((x, 0.0, prob));
        }
        Ok(Self { n, states })
    }
}

/// Adv ≤ 1 + this counts as "1 + o(1)".
pub const ADV_WEAK_TOL: f64 = 0.05;
/// Adv ≤ this counts as "O(1)".
pub const ADV_BOUNDED: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicationReport {
    pub adv: f64,
    /// Strongest separation the advantage value still allows.
    pub allowed: Separation,
    pub candidates: Vec<(String, Separation, bool)>,
    pub consistent: bool,
}

/// Adv = 1 + o(1) rules out weak separation; Adv = O(1) rules out strong separation.
/// Checks each candidate's empirical classification against that.
pub fn separation_implication_check(adv: f64, candidates: &[(String, SeparationReport)]) -> ImplicationReport {
    let allowed = if adv <= 1.0 + ADV_WEAK_TOL {
        Separation::None
    } else if adv <= ADV_BOUNDED {
        Separation::Weak
    } else {
        Separation::Strong
    };
    let rank = |s: Separation| match s {
        Separation::None => 0,
        Separation::Weak => 1,
        Separation::Strong => 2,
    };
    let rows: Vec<(String, Separation, bool)> = candidates.iter().map(|(name, r)| (name.clone(), r.classification, rank(r.classification) <= rank(allowed))).collect();
    let consistent = rows.iter().all(|r| r.2);
    ImplicationReport { adv, allowed, candidates: rows, consistent }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_models_have_unit_advantage() {
        let p = EnumeratedMoments::binary_community(4, 2.0, 0.2, 0.1, 2, false).unwrap();
        let t = r_alpha_recursion(&p, &p, binary_index(4, 3)).unwrap();
        for (a, r) in &t.values {
            if a.is_empty() {
                assert_eq!(*r, 1.0);
            } else {
                assert!(r.abs() < 1e-14, "{a:?} {r}");
            }
        }
        assert!((adv_bound_binary(&t, 0.2, 0.4).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binary_index_rejected_by_binary_bound_when_not_simple() {
        let p = EnumeratedMoments::binary_community(3, 2.0, 0.2, 0.1, 1, true).unwrap();
        let t = r_alpha_recursion(&p, &p, gaussian_index(3, 2, true)).unwrap();
        assert!(adv_bound_binary(&t, 0.2, 0.4).is_err());
    }
}

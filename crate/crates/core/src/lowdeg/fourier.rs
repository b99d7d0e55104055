//! Fourier-character LDLR for small binary models and the SBM second-moment bound.

use crate::error::{ensure, invalid, Error, Result};
use crate::rng::RngStream;
use crate::stats::{Estimate, Welford};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// Binary model: under Q, Y_i ∈ {a_i, b_i} with mean 0 and variance 1 (a_i b_i = −1);
/// under P, X ~ π (a finite mixture) and Y_i | X independent with E[Y_i | X] = X_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Planted prior atoms (X, probability).
    pub prior: Vec<(Vec<f64>, f64)>,
}

/// Enumeration limit for the planted prior and the character subsets.
pub const FOURIER_BUDGET: u64 = 50_000_000;

impl BinaryModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.a.len();
        ensure(self.b.len() == n, "b", || "length mismatch".into())?;
        for i in 0..n {
            ensure(self.a[i] < self.b[i] && (self.a[i] * self.b[i] + 1.0).abs() < 1e-12, "a", || format!("coordinate {i}: need a < b and ab = −1"))?;
        }
        let total: f64 = self.prior.iter().map(|p| p.1).sum();
        ensure((total - 1.0).abs() < 1e-9, "prior", || "weights must sum to 1".into())?;
        for (x, _) in &self.prior {
            ensure(x.len() == n, "prior", || "atom length mismatch".into())?;
            ensure(x.iter().zip(&self.a).zip(&self.b).all(|((&xi, &a), &b)| xi >= a - 1e-12 && xi <= b + 1e-12), "prior", || "X_i outside [a_i, b_i]".into())?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Index set of vertex pairs, in the order used by [`sbm_binary_model`].
pub fn pair_list(n: usize, self_loops: bool) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| ((if self_loops { i } else { i + 1 })..n).map(move |j| (i, j))).collect()
}

/// SBM as a binary model over pairs i ≤ j (or i < j), with X_ij = Δ_ij √(p/(1−p)) and
/// Δ_ij = η(k−1)/√2 on the diagonal, η(k−1) inside a community, −η across.
pub fn sbm_binary_model(n: usize, k: usize, d: f64, eta: f64, self_loops: bool) -> Result<BinaryModel> {
    ensure(n >= 2 && k >= 2, "n", || "need n ≥ 2 and k ≥ 2".into())?;
    let states = (k as u64).checked_pow(n as u32).filter(|&s| s <= 1_000_000).ok_or_else(|| Error::Budget("too many label assignments".into()))?;
    let p = d / n as f64;
    ensure(p > 0.0 && p < 1.0, "d", || "need 0 < d < n".into())?;
    let pairs = pair_list(n, self_loops);
    let r = (p / (1.0 - p)).sqrt();
    let a = vec![-r; pairs.len()];
    let b = vec![1.0 / r; pairs.len()];
    let w = 1.0 / states as f64;
    let mut prior = Vec::with_capacity(states as usize);
    let kf = k as f64;
    for code in 0..states {
        let mut labels = vec![0usize; n];
        let mut c = code;
        for l in labels.iter_mut() {
            *l = (c % k as u64) as usize;
            c /= k as u64;
        }
        let x = pairs
            .iter()
            .map(|&(i, j)| {
                let delta = if i == j {
                    eta * (kf - 1.0) / 2f64.sqrt()
                } else if labels[i] == labels[j] {
                    eta * (kf - 1.0)
                } else {
                    -eta
                };
                delta * r
            })
            .collect();
        prior.push((x, w));
    }
    let m = BinaryModel { a, b, prior };
    m.validate()?;
    Ok(m)
}

/// ‖L^{≤D}‖² = Σ_{|S|≤D} (E_P χ_S(Y))², with E_P χ_S = E_X Π_{i∈S} X_i.
pub fn fourier_ldlr_binary(model: &BinaryModel, d: usize) -> Result<f64> {
    model.validate()?;
    let n = model.len();
    let subsets: f64 = (0..=d.min(n)).map(|j| crate::stats::choose(n as u64, j as u64)).sum();
    ensure(subsets * model.prior.len() as f64 <= FOURIER_BUDGET as f64, "D", || "enumeration budget exceeded".into())?;
    let mut total = 0.0;
    let mut subset: Vec<usize> = Vec::with_capacity(d);
    // depth-first over subsets, carrying Π X_i per prior atom
    fn rec(model: &BinaryModel, start: usize, left: usize, prods: &[f64], subset: &mut Vec<usize>, total: &mut f64) {
        let mean: f64 = prods.iter().zip(&model.prior).map(|(p, a)| p * a.1).sum();
        *total += mean * mean;
        if left == 0 {
            return;
        }
        for i in start..model.len() {
            let next: Vec<f64> = prods.iter().zip(&model.prior).map(|(p, a)| p * a.0[i]).collect();
            subset.push(i);
            rec(model, i + 1, left - 1, &next, subset, total);
            subset.pop();
        }
    }
    let ones = vec![1.0; model.prior.len()];
    rec(model, 0, d, &ones, &mut subset, &mut total);
    Ok(total)
}

/// ⟨UUᵀ, U′U′ᵀ⟩ for two label vectors, with (UUᵀ)_ij = k·1[σ_i = σ_j] − 1:
/// k²Σ_ab N_ab² − kΣ_a n_a² − kΣ_b n′_b² + n², N the confusion matrix.
pub fn label_overlap(sigma: &[usize], tau: &[usize], k: usize) -> i64 {
    let n = sigma.len() as i64;
    let mut conf = vec![0i64; k * k];
    let mut na = vec![0i64; k];
    let mut nb = vec![0i64; k];
    for (&a, &b) in sigma.iter().zip(tau) {
        conf[a * k + b] += 1;
        na[a] += 1;
        nb[b] += 1;
    }
    let sq = |v: &[i64]| v.iter().map(|x| x * x).sum::<i64>();
    let k = k as i64;
    k * k * sq(&conf) - k * sq(&na) - k * sq(&nb) + n * n
}

/// Σ_{m=0}^{D} (1/m!) E[(c⟨UUᵀ, U′U′ᵀ⟩)^m] with c = (η²/2)·p/(1−p), p = d/n,
/// over independent uniform labelings.
pub fn sbm_ldlr_bound(n: usize, k: usize, d: f64, eta: f64, deg: u32, mc_budget: usize, stream: RngStream) -> Result<Estimate> {
    ensure(n >= 2 && k >= 2, "n", || "need n ≥ 2 and k ≥ 2".into())?;
    ensure(mc_budget >= 2, "mc_budget", || "need at least two draws".into())?;
    let p = d / n as f64;
    ensure(p > 0.0 && p < 1.0, "d", || "need 0 < d < n".into())?;
    if eta == 0.0 {
        return Ok(Estimate::exact(1.0));
    }
    let c = eta * eta / 2.0 * p / (1.0 - p);
    let mut rng = stream.rng();
    let mut w = Welford::default();
    let mut s = vec![0usize; n];
    let mut t = vec![0usize; n];
    for _ in 0..mc_budget {
        s.iter_mut().for_each(|x| *x = rng.random_range(0..k));
        t.iter_mut().for_each(|x| *x = rng.random_range(0..k));
        w.push(super::truncated_exp(c * label_overlap(&s, &t, k) as f64, deg));
    }
    Ok(w.estimate())
}

/// (UUᵀ)_ij for a label vector, k·1[σ_i = σ_j] − 1.
pub fn uut_entry(sigma: &[usize], k: usize, i: usize, j: usize) -> Result<i64> {
    if i >= sigma.len() || j >= sigma.len() {
        return Err(invalid("i", "index out of range"));
    }
    Ok(if sigma[i] == sigma[j] { k as i64 - 1 } else { -1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d_zero_and_null_signal() {
        let m = sbm_binary_model(3, 2, 1.0, 0.5, true).unwrap();
        assert!((fourier_ldlr_binary(&m, 0).unwrap() - 1.0).abs() < 1e-15);
        let flat = sbm_binary_model(3, 2, 1.0, 0.0, true).unwrap();
        for d in 0..=3 {
            assert!((fourier_ldlr_binary(&flat, d).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn label_overlap_matches_entrywise_sum() {
        let s = [0, 1, 2, 1, 0, 2, 2];
        let t = [1, 1, 0, 2, 2, 0, 1];
        let k = 3;
        let mut direct = 0;
        for i in 0..7 {
            for j in 0..7 {
                direct += uut_entry(&s, k, i, j).unwrap() * uut_entry(&t, k, i, j).unwrap();
            }
            assert_eq!(uut_entry(&s, k, i, i).unwrap(), k as i64 - 1);
        }
        assert_eq!(label_overlap(&s, &t, k), direct);
    }

    #[test]
    fn eta_zero_bound_is_one() {
        assert_eq!(sbm_ldlr_bound(50, 2, 3.0, 0.0, 8, 10, RngStream::new(0, 0)).unwrap().mean, 1.0);
    }
}

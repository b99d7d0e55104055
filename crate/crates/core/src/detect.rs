//! Hypothesis tests, separation metrics, likelihood-ratio second moments and
//! spectral / triangle statistics.

use crate::error::{ensure, invalid, Error, Result};
use crate::linalg::{dot, top_eigenpair, SymMatrix};
use crate::models::{Graph, ModelInstance, PriorSpec};
use crate::rng::{Rng, RngStream};
use crate::stats::{ln_choose, Estimate, LogSumExp, Welford};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Separation {
    Strong,
    Weak,
    None,
}

/// Ratio cutoffs standing in for o(1) and O(1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationCutoffs {
    pub strong: f64,
    pub weak: f64,
}

impl Default for SeparationCutoffs {
    fn default() -> Self {
        Self { strong: 0.1, weak: 10.0 }
    }
}

impl SeparationCutoffs {
    pub fn classify(&self, ratio: f64) -> Separation {
        if ratio < self.strong {
            Separation::Strong
        } else if ratio < self.weak {
            Separation::Weak
        } else {
            Separation::None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub mean_p: f64,
    pub mean_q: f64,
    pub var_p: f64,
    pub var_q: f64,
    /// √(max var) / |mean gap|; +∞ when the gap is zero.
    pub ratio: f64,
    pub classification: Separation,
    pub budget: usize,
    /// Standard error of the mean gap, so the caller can judge whether the gap is resolved.
    pub gap_stderr: f64,
}

/// Empirical fluctuation-to-gap ratio of `statistic` between P and Q.
/// P and Q draws use independent child streams of `stream`.
pub fn separation_ratio<T, F, P, Q>(statistic: F, mut p_sampler: P, mut q_sampler: Q, mc_budget: usize, stream: RngStream) -> Result<SeparationReport>
where
    F: Fn(&T) -> f64,
    P: FnMut(&mut Rng) -> T,
    Q: FnMut(&mut Rng) -> T,
{
    separation_ratio_with(statistic, &mut p_sampler, &mut q_sampler, mc_budget, stream, SeparationCutoffs::default())
}

pub fn separation_ratio_with<T, F, P, Q>(
    statistic: F,
    p_sampler: &mut P,
    q_sampler: &mut Q,
    mc_budget: usize,
    stream: RngStream,
    cutoffs: SeparationCutoffs,
) -> Result<SeparationReport>
where
    F: Fn(&T) -> f64,
    P: FnMut(&mut Rng) -> T,
    Q: FnMut(&mut Rng) -> T,
{
    ensure(mc_budget >= 100, "mc_budget", || format!("{mc_budget} < 100"))?;
    let (mut rp, mut rq) = (stream.named("p").rng(), stream.named("q").rng());
    let (mut wp, mut wq) = (Welford::default(), Welford::default());
    for _ in 0..mc_budget {
        wp.push(statistic(&p_sampler(&mut rp)));
        wq.push(statistic(&q_sampler(&mut rq)));
    }
    let (var_p, var_q) = (wp.variance(), wq.variance());
    let gap = (wp.mean() - wq.mean()).abs();
    let spread = var_p.max(var_q).sqrt();
    let ratio = if gap == 0.0 { f64::INFINITY } else { spread / gap };
    Ok(SeparationReport {
        mean_p: wp.mean(),
        mean_q: wq.mean(),
        var_p,
        var_q,
        ratio,
        classification: cutoffs.classify(ratio),
        budget: mc_budget,
        gap_stderr: ((var_p + var_q) / mc_budget as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    /// Pr_Q[f > threshold].
    pub type_i_error: f64,
    /// Pr_P[f ≤ threshold].
    pub type_ii_error: f64,
    pub threshold: f64,
    pub budget: usize,
}

impl TestOutcome {
    pub fn error_sum(&self) -> f64 {
        self.type_i_error + self.type_ii_error
    }
}

/// Decides "planted" when the statistic exceeds `threshold`.
pub fn threshold_test<T, F, P, Q>(statistic: F, threshold: f64, mut p_sampler: P, mut q_sampler: Q, mc_budget: usize, stream: RngStream) -> Result<TestOutcome>
where
    F: Fn(&T) -> f64,
    P: FnMut(&mut Rng) -> T,
    Q: FnMut(&mut Rng) -> T,
{
    ensure(threshold.is_finite(), "threshold", || "must be finite".into())?;
    ensure(mc_budget >= 1, "mc_budget", || "must be positive".into())?;
    let (mut rp, mut rq) = (stream.named("test-p").rng(), stream.named("test-q").rng());
    let mut miss = 0usize;
    let mut false_alarm = 0usize;
    for _ in 0..mc_budget {
        if statistic(&p_sampler(&mut rp)) <= threshold {
            miss += 1;
        }
        if statistic(&q_sampler(&mut rq)) > threshold {
            false_alarm += 1;
        }
    }
    Ok(TestOutcome {
        type_i_error: false_alarm as f64 / mc_budget as f64,
        type_ii_error: miss as f64 / mc_budget as f64,
        threshold,
        budget: mc_budget,
    })
}

pub fn midpoint_threshold(report: &SeparationReport) -> f64 {
    0.5 * (report.mean_p + report.mean_q)
}

/// Calibrates the midpoint threshold on one pair of streams and measures errors on fresh ones.
pub fn calibrated_threshold_test<T, F, P, Q>(statistic: F, mut p_sampler: P, mut q_sampler: Q, calib_budget: usize, test_budget: usize, stream: RngStream) -> Result<(SeparationReport, TestOutcome)>
where
    F: Fn(&T) -> f64,
    P: FnMut(&mut Rng) -> T,
    Q: FnMut(&mut Rng) -> T,
{
    let rep = separation_ratio_with(&statistic, &mut p_sampler, &mut q_sampler, calib_budget, stream.named("calibrate"), SeparationCutoffs::default())?;
    let t = midpoint_threshold(&rep);
    let out = threshold_test(&statistic, t, &mut p_sampler, &mut q_sampler, test_budget, stream.named("fresh"))?;
    Ok((rep, out))
}

/// Log-space Monte Carlo estimate of E exp(Z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEstimate {
    pub log_mean: f64,
    /// Delta-method standard error of `log_mean`.
    pub log_stderr: f64,
    pub n: usize,
}

impl LogEstimate {
    pub fn value(&self) -> f64 {
        self.log_mean.exp()
    }
}

/// ‖L_n‖² = E exp((nλ²/2)⟨x,x′⟩²) for the rank-one spiked Wigner model with
/// independent prior draws x, x′.
pub fn lr_second_moment(prior: &PriorSpec, lambda: f64, n: usize, mc_budget: usize, stream: RngStream) -> Result<LogEstimate> {
    ensure(lambda >= 0.0, "lambda", || format!("{lambda} < 0"))?;
    ensure(n >= 1 && mc_budget >= 1, "mc_budget", || "need n ≥ 1 and a positive budget".into())?;
    prior.validate()?;
    if lambda == 0.0 {
        return Ok(LogEstimate { log_mean: 0.0, log_stderr: 0.0, n: mc_budget });
    }
    let c = n as f64 * lambda * lambda / 2.0;
    let mut rng = stream.rng();
    let mut lse = LogSumExp::default();
    let mut lse2 = LogSumExp::default();
    let mut push = |s: f64| {
        let z = c * s * s;
        lse.push(z);
        lse2.push(2.0 * z);
    };
    match prior {
        PriorSpec::RademacherNormalized => {
            for _ in 0..mc_budget {
                push(rademacher_overlap(n, &mut rng));
            }
        }
        PriorSpec::GaussianScalar | PriorSpec::SparseBernoulli { .. } => {
            for _ in 0..mc_budget {
                let x = prior.sample_vector(n, &mut rng)?;
                let y = prior.sample_vector(n, &mut rng)?;
                push(dot(&x, &y));
            }
        }
        other => return Err(Error::Unsupported(format!("{other:?} has no scalar overlap"))),
    }
    let ln_b = (mc_budget as f64).ln();
    let log_mean = lse.value() - ln_b;
    let log_m2 = lse2.value() - ln_b;
    // Var[e^Z]/E[e^Z]² = E e^{2Z}/(E e^Z)² − 1, computed without leaving log space.
    let rel_var = ((log_m2 - 2.0 * log_mean).exp() - 1.0).max(0.0);
    Ok(LogEstimate { log_mean, log_stderr: (rel_var / mc_budget as f64).sqrt(), n: mc_budget })
}

/// ⟨x,x′⟩ for two independent uniform points of {±1/√n}^n.
pub fn rademacher_overlap(n: usize, rng: &mut Rng) -> f64 {
    let mut flips = 0u32;
    let mut left = n;
    while left >= 64 {
        flips += rng.random::<u64>().count_ones();
        left -= 64;
    }
    if left > 0 {
        flips += (rng.random::<u64>() & ((1u64 << left) - 1)).count_ones();
    }
    (n as f64 - 2.0 * flips as f64) / n as f64
}

/// Exact ‖L_n‖² for the Rademacher-normalized prior by summing over the binomial overlap law.
pub fn lr_second_moment_rademacher_exact(lambda: f64, n: usize) -> f64 {
    let c = n as f64 * lambda * lambda / 2.0;
    let mut lse = LogSumExp::default();
    for k in 0..=n {
        let s = (n as f64 - 2.0 * k as f64) / n as f64;
        lse.push(ln_choose(n as u64, k as u64) - n as f64 * std::f64::consts::LN_2 + c * s * s);
    }
    lse.value().exp()
}

pub fn subgaussian_tail_bound(sigma2: f64, a: f64) -> Result<f64> {
    ensure(sigma2 > 0.0, "sigma2", || format!("{sigma2} ≤ 0"))?;
    ensure(a >= 0.0, "a", || format!("{a} < 0"))?;
    Ok(2.0 * (-a * a / (2.0 * sigma2)).exp())
}

/// Empirical Pr[|X| ≥ a].
pub fn empirical_tail<S: FnMut(&mut Rng) -> f64>(mut sampler: S, a: f64, mc_budget: usize, rng: &mut Rng) -> Estimate {
    let hits = (0..mc_budget).filter(|_| sampler(rng).abs() >= a).count();
    let p = hits as f64 / mc_budget as f64;
    Estimate { mean: p, stderr: crate::stats::binom_se(p, mc_budget), n: mc_budget }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecision {
    pub lambda_max: f64,
    pub threshold: f64,
    pub planted: bool,
}

pub fn spectral_test(y: &SymMatrix, threshold: f64) -> Result<SpectralDecision> {
    let lambda_max = crate::linalg::lambda_max(y)?;
    Ok(SpectralDecision { lambda_max, threshold, planted: lambda_max > threshold })
}

/// ⟨x, v_max⟩² / (‖x‖² ‖v_max‖²) between the hidden signal and the top eigenvector.
pub fn bbp_overlap(instance: &ModelInstance) -> Result<f64> {
    let y = instance.symmetric_matrix().ok_or_else(|| invalid("instance", "observation is not a matrix"))?;
    let x = instance.signal_vector().ok_or_else(|| invalid("instance", "no vector signal"))?;
    let top = top_eigenpair(&y)?;
    let (xx, vv) = (dot(&x, &x), dot(&top.vector, &top.vector));
    ensure(xx > 0.0, "instance", || "signal is zero".into())?;
    let c = dot(&x, &top.vector);
    Ok((c * c / (xx * vv)).clamp(0.0, 1.0))
}

/// Limit of [`bbp_overlap`] in terms of the signal-to-noise ratio snr = λ² of
/// Y = λxxᵀ + W/√n: 1 − 1/snr above the transition, 0 below.
pub fn bbp_limit(snr: f64) -> f64 {
    if snr > 1.0 {
        1.0 - 1.0 / snr
    } else {
        0.0
    }
}

fn centered_adjacency(g: &Graph, q: f64) -> Result<Vec<f64>> {
    ensure(g.n >= 3, "n", || format!("need n ≥ 3, got {}", g.n))?;
    ensure((0.0..1.0).contains(&q), "q", || format!("{q} not in [0,1)"))?;
    let n = g.n;
    let mut r: Vec<f64> = g.adjacency().into_iter().map(|a| a as f64 - q).collect();
    for i in 0..n {
        r[i * n + i] = 0.0;
    }
    Ok(r)
}

/// R̂ = Σ_{i<j<k} R_ij R_ik R_jk with R_ij = Y_ij − q, summed over every triangle.
pub fn signed_triangle_stat(g: &Graph, q: f64) -> Result<f64> {
    let r = centered_adjacency(g, q)?;
    let n = g.n;
    let mut total = 0.0;
    for i in 0..n {
        let ri = &r[i * n..(i + 1) * n];
        for j in i + 1..n {
            let rij = ri[j];
            if rij == 0.0 {
                continue;
            }
            let rj = &r[j * n..(j + 1) * n];
            let mut s = 0.0;
            for k in j + 1..n {
                s += ri[k] * rj[k];
            }
            total += rij * s;
        }
    }
    Ok(total)
}

/// Same statistic as tr(R³)/6 with zeroed diagonal.
pub fn signed_triangle_stat_trace(g: &Graph, q: f64) -> Result<f64> {
    let r = centered_adjacency(g, q)?;
    let n = g.n;
    let mut tr = 0.0;
    let mut row = vec![0.0; n];
    for i in 0..n {
        // row = (R²)_{i,·}
        row.iter_mut().for_each(|x| *x = 0.0);
        for k in 0..n {
            let rik = r[i * n + k];
            if rik != 0.0 {
                row.iter_mut().zip(&r[k * n..(k + 1) * n]).for_each(|(x, &rkj)| *x += rik * rkj);
            }
        }
        tr += dot(&row, &r[i * n..(i + 1) * n]);
    }
    Ok(tr / 6.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleMoments {
    /// (1/6) M s³ k³, the leading-order mean.
    pub mean: f64,
    /// C(n,3) M s³ k³ / n³, the exact mean under the binary community model.
    pub mean_exact: f64,
    pub variance_bound: f64,
}

pub fn triangle_moment_formulas(n: usize, k: usize, q: f64, s: f64, m: usize) -> Result<TriangleMoments> {
    ensure(n >= 3 && k <= n, "k", || "need n ≥ 3 and k ≤ n".into())?;
    ensure(m >= 1 && s >= 0.0 && (0.0..=1.0).contains(&q), "s", || "need M ≥ 1, s ≥ 0, q ∈ [0,1]".into())?;
    let (nf, kf, mf) = (n as f64, k as f64, m as f64);
    let mean = mf * (s * kf).powi(3) / 6.0;
    let mean_exact = nf * (nf - 1.0) * (nf - 2.0) / 6.0 * mf * (s * kf / nf).powi(3);
    let variance_bound = mf * mf * kf.powi(5) * s.powi(6)
        + mf * kf.powi(4) * s.powi(4) * q
        + mf * mf * kf.powi(4) * s.powi(5)
        + nf.powi(3) * q.powi(3) / 3.0
        + nf * kf * kf * s * q * q
        + kf.powi(3) * q * q * s
        + kf.powi(3) * q * s * s
        + mf * kf.powi(3) * s.powi(3) / 3.0;
    Ok(TriangleMoments { mean, mean_exact, variance_bound })
}

/// Top eigenvalue threshold 2 + margin for the normalized GOE edge.
pub fn goe_edge_threshold(margin: f64) -> f64 {
    2.0 + margin
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{normal, sample_binary_community};

    fn graph_from(n: usize, edges: &[(u32, u32)]) -> Graph {
        Graph { n, edges: edges.to_vec(), labels: None, self_loops: false }
    }

    #[test]
    fn triangle_small_cases() {
        let empty = graph_from(5, &[]);
        assert_eq!(signed_triangle_stat(&empty, 0.0).unwrap(), 0.0);
        let k4 = graph_from(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert_eq!(signed_triangle_stat(&k4, 0.0).unwrap(), 4.0);
        assert!((signed_triangle_stat_trace(&k4, 0.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(signed_triangle_stat(&graph_from(2, &[(0, 1)]), 0.0).is_err());
    }

    #[test]
    fn triangle_mean_formula_arithmetic() {
        let t = triangle_moment_formulas(100, 10, 0.3, 0.1, 1).unwrap();
        assert!((t.mean - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(triangle_moment_formulas(100, 10, 0.3, 0.0, 2).unwrap().mean, 0.0);
    }

    #[test]
    fn triangle_forms_agree_on_community_graph() {
        let inst = sample_binary_community(60, 30, 0.2, 0.1, 2, RngStream::new(9, 1)).unwrap();
        let g = inst.graph().unwrap();
        let a = signed_triangle_stat(g, 0.2).unwrap();
        let b = signed_triangle_stat_trace(g, 0.2).unwrap();
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn separation_of_shifted_gaussians() {
        let rep = separation_ratio(|x: &f64| *x, |r| 10.0 + normal(r), normal, 20_000, RngStream::new(1, 0)).unwrap();
        assert!((rep.ratio - 0.1).abs() < 0.005, "{}", rep.ratio);
        let same = separation_ratio(|_: &f64| 3.0, normal, normal, 100, RngStream::new(1, 0)).unwrap();
        assert!(same.ratio.is_infinite());
        assert_eq!(same.classification, Separation::None);
    }

    #[test]
    fn threshold_errors_of_far_gaussians() {
        let out = threshold_test(|x: &f64| *x, 5.0, |r| 10.0 + normal(r), normal, 100_000, RngStream::new(2, 0)).unwrap();
        assert!(out.type_i_error < 1e-4 && out.type_ii_error < 1e-4);
        let same = threshold_test(|x: &f64| *x, 0.3, normal, normal, 100_000, RngStream::new(2, 0)).unwrap();
        assert!((same.error_sum() - 1.0).abs() < 0.01);
    }

    #[test]
    fn lr_at_zero_is_one() {
        for prior in [PriorSpec::RademacherNormalized, PriorSpec::GaussianScalar, PriorSpec::SparseBernoulli { rho: 0.2 }] {
            let e = lr_second_moment(&prior, 0.0, 30, 10, RngStream::new(0, 0)).unwrap();
            assert_eq!(e.value(), 1.0);
        }
    }

    #[test]
    fn rademacher_lr_matches_binomial_sum() {
        let exact = lr_second_moment_rademacher_exact(0.5, 100);
        let est = lr_second_moment(&PriorSpec::RademacherNormalized, 0.5, 100, 200_000, RngStream::new(4, 0)).unwrap();
        assert!((est.value() / exact - 1.0).abs() < 4.0 * est.log_stderr + 1e-3, "{} vs {exact}", est.value());
    }

    #[test]
    fn tail_bound_values() {
        assert_eq!(subgaussian_tail_bound(1.0, 0.0).unwrap(), 2.0);
        assert!((subgaussian_tail_bound(1.0, 2.0).unwrap() - 2.0 * (-2f64).exp()).abs() < 1e-15);
        assert!(subgaussian_tail_bound(0.0, 1.0).is_err());
    }

    #[test]
    fn spectral_test_identity() {
        let d = spectral_test(&SymMatrix::identity(5), 0.5).unwrap();
        assert!((d.lambda_max - 1.0).abs() < 1e-12 && d.planted);
    }
}

//! Seeded generators for every random model, with one instance representation.
//!
//! Internally the normalized GOE(n) convention is canonical (off-diagonal
//! variance 1/n, diagonal 2/n). The unit-entry convention (variances 1 and 2)
//! is available through [`GoeScale::UnitEntry`]; dividing it by √n gives the
//! normalized ensemble.

use crate::error::{ensure, invalid, Error, Result};
use crate::linalg::{SquareMatrix, SymMatrix};
use crate::rng::{Rng, RngStream};
use rand::seq::index::sample as sample_index;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoeScale {
    /// Off-diagonal variance 1, diagonal variance 2.
    UnitEntry,
    /// Off-diagonal variance 1/n, diagonal variance 2/n.
    Normalized,
}

impl GoeScale {
    /// (off-diagonal, diagonal) standard deviations at dimension n.
    pub fn std_devs(self, n: usize) -> (f64, f64) {
        match self {
            GoeScale::UnitEntry => (1.0, 2f64.sqrt()),
            GoeScale::Normalized => ((1.0 / n as f64).sqrt(), (2.0 / n as f64).sqrt()),
        }
    }
}

#[inline]
pub(crate) fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn sample_goe(n: usize, scale: GoeScale, rng: &mut Rng) -> Result<SymMatrix> {
    ensure(n >= 1, "n", || "dimension must be at least 1".into())?;
    let (so, sd) = scale.std_devs(n);
    Ok(SymMatrix::from_upper(n, |i, j| normal(rng) * if i == j { sd } else { so }))
}

/// A vector with entries in {−1, +1}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinVector(Vec<i8>);

impl SpinVector {
    pub fn new(entries: Vec<i8>) -> Result<Self> {
        if let Some(p) = entries.iter().position(|&s| s != 1 && s != -1) {
            return Err(invalid("entries", format!("entry {p} is {}, not ±1", entries[p])));
        }
        Ok(Self(entries))
    }

    pub fn uniform(n: usize, rng: &mut Rng) -> Self {
        Self((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
    }

    /// Signs of `v`, with zeros sent to +1.
    pub fn signs_of(v: &[f64]) -> Self {
        Self(v.iter().map(|&x| if x < 0.0 { -1 } else { 1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&s| s as f64).collect()
    }

    pub fn dot(&self, other: &SpinVector) -> i64 {
        self.0.iter().zip(&other.0).map(|(&a, &b)| (a * b) as i64).sum()
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|&s| -s).collect())
    }
}

/// A {0,1}-vector stored by its sorted support.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseIndicator {
    pub n: usize,
    support: Vec<usize>,
}

impl SparseIndicator {
    pub fn new(n: usize, mut support: Vec<usize>) -> Result<Self> {
        support.sort_unstable();
        support.dedup();
        if support.last().is_some_and(|&i| i >= n) {
            return Err(invalid("support", "index out of range"));
        }
        Ok(Self { n, support })
    }

    pub fn uniform(n: usize, k: usize, rng: &mut Rng) -> Result<Self> {
        ensure(k <= n, "k", || format!("sparsity {k} exceeds dimension {n}"))?;
        let s = sample_index(rng, n, k).into_vec();
        Self::new(n, s)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n];
        self.support.iter().for_each(|&i| v[i] = 1.0);
        v
    }

    pub fn overlap(&self, other: &SparseIndicator) -> usize {
        let (mut i, mut j, mut c) = (0, 0, 0);
        while i < self.support.len() && j < other.support.len() {
            match self.support[i].cmp(&other.support[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    c += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PriorSpec {
    /// x_i = ±1/√n.
    RademacherNormalized,
    /// x_i ~ N(0, 1/n).
    GaussianScalar,
    /// x_i = Bernoulli(ρ)/√(ρn), so E‖x‖² = 1.
    SparseBernoulli { rho: f64 },
    /// Rows of an n×r matrix drawn i.i.d. from a finite law π on R^r.
    BoundedRow { atoms: Vec<Vec<f64>>, weights: Vec<f64> },
    /// Community labels: each slot ℓ ∈ [k] with probability `slot_prob`, otherwise unlabeled.
    CommunityLabels { k: usize, slot_prob: f64 },
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PriorSpec::SparseBernoulli { rho } => {
                ensure(*rho > 0.0 && *rho < 1.0, "rho", || format!("{rho} not in (0,1)"))
            }
            PriorSpec::BoundedRow { atoms, weights } => {
                ensure(!atoms.is_empty() && atoms.len() == weights.len(), "atoms", || "atom/weight mismatch".into())?;
                let r = atoms[0].len();
                ensure(atoms.iter().all(|a| a.len() == r), "atoms", || "ragged atoms".into())?;
                let wsum: f64 = weights.iter().sum();
                ensure((wsum - 1.0).abs() < 1e-9 && weights.iter().all(|&w| w >= 0.0), "weights", || "not a probability vector".into())?;
                let mut mean = vec![0.0; r];
                for (a, &w) in atoms.iter().zip(weights) {
                    mean.iter_mut().zip(a).for_each(|(m, x)| *m += w * x);
                }
                ensure(mean.iter().all(|m| m.abs() < 1e-9), "atoms", || "π must have mean zero".into())?;
                let cov = nalgebra::DMatrix::<f64>::from_fn(r, r, |i, j| atoms.iter().zip(weights).map(|(a, &w)| w * a[i] * a[j]).sum::<f64>());
                let top = nalgebra::SymmetricEigen::new(cov).eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
                ensure((top - 1.0).abs() < 1e-9, "atoms", || format!("‖Cov(π)‖ = {top}, expected 1"))
            }
            PriorSpec::CommunityLabels { k, slot_prob } => ensure(
                *k >= 1 && *slot_prob >= 0.0 && *slot_prob * *k as f64 <= 1.0 + 1e-12,
                "slot_prob",
                || "k · slot_prob must be ≤ 1".into(),
            ),
            _ => Ok(()),
        }
    }

    /// One vector draw of length n for the scalar (rank-one) prior kinds.
    pub fn sample_vector(&self, n: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        let s = 1.0 / (n as f64).sqrt();
        match self {
            PriorSpec::RademacherNormalized => Ok((0..n).map(|_| if rng.random::<bool>() { s } else { -s }).collect()),
            PriorSpec::GaussianScalar => Ok((0..n).map(|_| s * normal(rng)).collect()),
            PriorSpec::SparseBernoulli { rho } => {
                let a = 1.0 / (rho * n as f64).sqrt();
                Ok((0..n).map(|_| if rng.random::<f64>() < *rho { a } else { 0.0 }).collect())
            }
            other => Err(Error::Unsupported(format!("{other:?} has no scalar vector draw"))),
        }
    }

    /// Rows of the bounded-row prior as an n×r row-major array.
    pub fn sample_rows(&self, n: usize, rng: &mut Rng) -> Result<(usize, Vec<f64>)> {
        match self {
            PriorSpec::BoundedRow { atoms, weights } => {
                let r = atoms[0].len();
                let mut out = Vec::with_capacity(n * r);
                for _ in 0..n {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = atoms.len() - 1;
                    for (i, &w) in weights.iter().enumerate() {
                        acc += w;
                        if u < acc {
                            pick = i;
                            break;
                        }
                    }
                    out.extend_from_slice(&atoms[pick]);
                }
                Ok((r, out))
            }
            other => Err(Error::Unsupported(format!("{other:?} is not a row prior"))),
        }
    }
}

/// Order-p tensor with n^p entries, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub p: usize,
    pub n: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(p: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        ensure(p >= 2, "p", || "tensor order must be ≥ 2".into())?;
        ensure(data.len() == n.pow(p as u32), "data", || "entry count must be n^p".into())?;
        Ok(Self { p, n, data })
    }

    pub fn zeros(p: usize, n: usize) -> Self {
        Self { p, n, data: vec![0.0; n.pow(p as u32)] }
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[idx.iter().fold(0, |acc, &i| acc * self.n + i)]
    }
}

/// Simple undirected graph stored as an edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub n: usize,
    /// Edges (i, j) with i ≤ j; i == j only when `self_loops` is set.
    pub edges: Vec<(u32, u32)>,
    pub labels: Option<Vec<Option<u32>>>,
    pub self_loops: bool,
}

impl Graph {
    /// Dense 0/1 adjacency, row-major.
    pub fn adjacency(&self) -> Vec<u8> {
        let n = self.n;
        let mut a = vec![0u8; n * n];
        for &(i, j) in &self.edges {
            a[i as usize * n + j as usize] = 1;
            a[j as usize * n + i as usize] = 1;
        }
        a
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(i, j) in &self.edges {
            d[i as usize] += 1;
            if i != j {
                d[j as usize] += 1;
            }
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Observation {
    Matrix(SymMatrix),
    Square(SquareMatrix),
    Tensor(Tensor),
    Graph(Graph),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Signal {
    None,
    Vector(Vec<f64>),
    Rows { r: usize, data: Vec<f64> },
    Spins(SpinVector),
    Sparse(SparseIndicator),
    Labels(Vec<Option<u32>>),
}

/// Everything needed to regenerate an instance, apart from the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelSpec {
    Goe { n: usize, scale: GoeScale },
    SpikedWigner { n: usize, lambda: f64, prior: PriorSpec, symmetric: bool },
    Sbm { n: usize, k: usize, d: f64, eta: f64, planted: bool, self_loops: bool },
    BinaryCommunity { n: usize, k: usize, q: f64, s: f64, m: usize },
    PlantedSubmatrix { n: usize, lambda: f64, rho: f64, reduced_diagonal: bool },
    SparsePca { n: usize, k: usize, lambda: f64 },
    Pspin { n: usize, p: usize },
    Npp { n: usize },
    QuietPlantedSk { n: usize, c: f64 },
}

impl ModelSpec {
    pub fn sample(&self, stream: RngStream) -> Result<ModelInstance> {
        match self {
            ModelSpec::Goe { n, scale } => {
                let w = sample_goe(*n, *scale, &mut stream.rng())?;
                Ok(ModelInstance { spec: self.clone(), stream, observation: Observation::Matrix(w), signal: Signal::None })
            }
            ModelSpec::SpikedWigner { n, lambda, prior, symmetric } => {
                sample_spiked_wigner(*n, *lambda, prior, *symmetric, stream)
            }
            ModelSpec::Sbm { n, k, d, eta, planted, self_loops } => {
                sample_sbm_with(*n, *k, *d, *eta, *planted, *self_loops, stream)
            }
            ModelSpec::BinaryCommunity { n, k, q, s, m } => sample_binary_community(*n, *k, *q, *s, *m, stream),
            ModelSpec::PlantedSubmatrix { n, lambda, rho, reduced_diagonal } => {
                sample_planted_submatrix_with(*n, *lambda, *rho, *reduced_diagonal, stream)
            }
            ModelSpec::SparsePca { n, k, lambda } => sample_sparse_pca(*n, *k, *lambda, stream),
            ModelSpec::Pspin { n, p } => sample_pspin(*n, *p, stream),
            ModelSpec::Npp { n } => {
                let x = sample_npp(*n, &mut stream.rng())?;
                Ok(ModelInstance { spec: self.clone(), stream, observation: Observation::Vector(x), signal: Signal::None })
            }
            ModelSpec::QuietPlantedSk { n, c } => sample_quiet_planted_sk(*n, *c, stream),
        }
    }

    /// Generation parameters as named numbers (for result rows).
    pub fn params(&self) -> BTreeMap<String, f64> {
        let v = serde_json::to_value(self).expect("spec serializes");
        let mut out = BTreeMap::new();
        if let serde_json::Value::Object(m) = v {
            for (k, x) in m {
                match x {
                    serde_json::Value::Number(num) => {
                        out.insert(k, num.as_f64().unwrap_or(f64::NAN));
                    }
                    serde_json::Value::Bool(b) => {
                        out.insert(k, if b { 1.0 } else { 0.0 });
                    }
                    _ => {}
                }
            }
        }
        out
    }
}

/// A sampled observation with its hidden signal and the stream that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInstance {
    pub spec: ModelSpec,
    pub stream: RngStream,
    pub observation: Observation,
    pub signal: Signal,
}

/// Serializable instance descriptor; observations are regenerated, never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub spec: ModelSpec,
    pub stream: RngStream,
}

impl InstanceRecord {
    pub fn regenerate(&self) -> Result<ModelInstance> {
        self.spec.sample(self.stream)
    }
}

impl ModelInstance {
    pub fn record(&self) -> InstanceRecord {
        InstanceRecord { spec: self.spec.clone(), stream: self.stream }
    }

    pub fn matrix(&self) -> Option<&SymMatrix> {
        match &self.observation {
            Observation::Matrix(m) => Some(m),
            _ => None,
        }
    }

    /// Symmetric view of the observation; the asymmetric variant is symmetrized as (A+Aᵀ)/√2.
    pub fn symmetric_matrix(&self) -> Option<SymMatrix> {
        match &self.observation {
            Observation::Matrix(m) => Some(m.clone()),
            Observation::Square(a) => Some(a.symmetrize()),
            _ => None,
        }
    }

    pub fn graph(&self) -> Option<&Graph> {
        match &self.observation {
            Observation::Graph(g) => Some(g),
            _ => None,
        }
    }

    pub fn tensor(&self) -> Option<&Tensor> {
        match &self.observation {
            Observation::Tensor(t) => Some(t),
            _ => None,
        }
    }

    /// Signal as a dense vector when it has one.
    pub fn signal_vector(&self) -> Option<Vec<f64>> {
        match &self.signal {
            Signal::Vector(v) => Some(v.clone()),
            Signal::Spins(s) => Some(s.to_f64()),
            Signal::Sparse(s) => Some(s.to_f64()),
            _ => None,
        }
    }

    /// Writes the observation as CSV rows (debug export).
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        match &self.observation {
            Observation::Matrix(m) => {
                for i in 0..m.n() {
                    out.write_record(m.row(i).iter().map(|x| format!("{x:e}"))).map_err(io)?;
                }
            }
            Observation::Square(a) => {
                for i in 0..a.n {
                    out.write_record(a.data[i * a.n..(i + 1) * a.n].iter().map(|x| format!("{x:e}"))).map_err(io)?;
                }
            }
            Observation::Vector(v) | Observation::Tensor(Tensor { data: v, .. }) => {
                for x in v {
                    out.write_record([format!("{x:e}")]).map_err(io)?;
                }
            }
            Observation::Graph(g) => {
                for (i, j) in &g.edges {
                    out.write_record([i.to_string(), j.to_string()]).map_err(io)?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Y = λ x xᵀ + W/√n with unit-entry W (symmetric), or the asymmetric variant
/// Y = (λ/√2) x xᵀ + G/√n with G fully i.i.d. N(0,1).
pub fn sample_spiked_wigner(n: usize, lambda: f64, prior: &PriorSpec, symmetric: bool, stream: RngStream) -> Result<ModelInstance> {
    ensure(n >= 1, "n", || "dimension must be at least 1".into())?;
    ensure(lambda >= 0.0, "lambda", || format!("{lambda} < 0"))?;
    prior.validate()?;
    let mut rng = stream.rng();
    let spec = ModelSpec::SpikedWigner { n, lambda, prior: prior.clone(), symmetric };
    let s = 1.0 / (n as f64).sqrt();
    match prior {
        PriorSpec::BoundedRow { .. } => {
            let (r, rows) = prior.sample_rows(n, &mut rng)?;
            ensure(symmetric, "symmetric", || "row priors only support the symmetric variant".into())?;
            let mut y = sample_goe(n, GoeScale::UnitEntry, &mut rng)?;
            y.scale(s);
            // Y += (λ/n) X Xᵀ
            for c in 0..r {
                let col: Vec<f64> = (0..n).map(|i| rows[i * r + c]).collect();
                y.add_rank_one(lambda / n as f64, &col);
            }
            Ok(ModelInstance { spec, stream, observation: Observation::Matrix(y), signal: Signal::Rows { r, data: rows } })
        }
        PriorSpec::CommunityLabels { .. } => Err(Error::Unsupported("community labels are not a spike prior".into())),
        _ => {
            let x = prior.sample_vector(n, &mut rng)?;
            if symmetric {
                let mut y = sample_goe(n, GoeScale::UnitEntry, &mut rng)?;
                y.scale(s);
                y.add_rank_one(lambda, &x);
                Ok(ModelInstance { spec, stream, observation: Observation::Matrix(y), signal: Signal::Vector(x) })
            } else {
                let c = lambda * std::f64::consts::FRAC_1_SQRT_2;
                let mut data = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        data.push(c * x[i] * x[j] + s * normal(&mut rng));
                    }
                }
                Ok(ModelInstance {
                    spec,
                    stream,
                    observation: Observation::Square(SquareMatrix { n, data }),
                    signal: Signal::Vector(x),
                })
            }
        }
    }
}

pub fn sample_sbm(n: usize, k: usize, d: f64, eta: f64, planted: bool, stream: RngStream) -> Result<ModelInstance> {
    sample_sbm_with(n, k, d, eta, planted, false, stream)
}

/// SBM with optional self-loops. With self-loops the null includes (i,i) with
/// probability d/n and the planted model with (1 + (k−1)η/√2)d/n.
pub fn sample_sbm_with(n: usize, k: usize, d: f64, eta: f64, planted: bool, self_loops: bool, stream: RngStream) -> Result<ModelInstance> {
    ensure(n >= 2, "n", || "need at least two vertices".into())?;
    ensure(k >= 2, "k", || "need at least two communities".into())?;
    ensure(d > 0.0, "d", || format!("{d} ≤ 0"))?;
    let lo = -1.0 / (k as f64 - 1.0);
    ensure(eta >= lo - 1e-12 && eta <= 1.0, "eta", || format!("{eta} outside [{lo}, 1]"))?;
    let p = d / n as f64;
    let p_in = (1.0 + (k as f64 - 1.0) * eta) * p;
    let p_out = (1.0 - eta) * p;
    let p_loop = if planted { (1.0 + (k as f64 - 1.0) * eta / 2f64.sqrt()) * p } else { p };
    ensure(p_in <= 1.0 && p_out <= 1.0 && p_loop <= 1.0, "d", || "edge probability exceeds 1".into())?;
    let mut rng = stream.rng();
    let labels: Option<Vec<u32>> = planted.then(|| (0..n).map(|_| rng.random_range(0..k as u32)).collect());
    let mut edges = Vec::new();
    for i in 0..n {
        let start = if self_loops { i } else { i + 1 };
        for j in start..n {
            let prob = if i == j {
                p_loop
            } else {
                match &labels {
                    None => p,
                    Some(l) if l[i] == l[j] => p_in,
                    Some(_) => p_out,
                }
            };
            if rng.random::<f64>() < prob {
                edges.push((i as u32, j as u32));
            }
        }
    }
    let lab = labels.map(|l| l.into_iter().map(Some).collect::<Vec<_>>());
    let signal = lab.clone().map(Signal::Labels).unwrap_or(Signal::None);
    Ok(ModelInstance {
        spec: ModelSpec::Sbm { n, k, d, eta, planted, self_loops },
        stream,
        observation: Observation::Graph(Graph { n, edges, labels: lab, self_loops }),
        signal,
    })
}

/// Labels: ℓ ∈ [M] each with probability k/(nM), unlabeled otherwise. Edges
/// inside a community are Bernoulli(q + sM), all others Bernoulli(q).
pub fn sample_binary_community(n: usize, k: usize, q: f64, s: f64, m: usize, stream: RngStream) -> Result<ModelInstance> {
    ensure(n >= 1 && k <= n, "k", || format!("need k ≤ n, got k={k}, n={n}"))?;
    ensure(m >= 1, "m", || "need at least one community".into())?;
    ensure((0.0..=1.0).contains(&q) && s >= 0.0 && q + s * m as f64 <= 1.0, "q", || "need 0 ≤ q and q + sM ≤ 1".into())?;
    let mut rng = stream.rng();
    let slot = k as f64 / (n as f64 * m as f64);
    let labels: Vec<Option<u32>> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let l = (u / slot).floor();
            if l < m as f64 {
                Some(l as u32)
            } else {
                None
            }
        })
        .collect();
    let p_in = q + s * m as f64;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let same = matches!((labels[i], labels[j]), (Some(a), Some(b)) if a == b);
            if rng.random::<f64>() < if same { p_in } else { q } {
                edges.push((i as u32, j as u32));
            }
        }
    }
    Ok(ModelInstance {
        spec: ModelSpec::BinaryCommunity { n, k, q, s, m },
        stream,
        observation: Observation::Graph(Graph { n, edges, labels: Some(labels.clone()), self_loops: false }),
        signal: Signal::Labels(labels),
    })
}

pub fn sample_planted_submatrix(n: usize, lambda: f64, rho: f64, stream: RngStream) -> Result<ModelInstance> {
    sample_planted_submatrix_with(n, lambda, rho, false, stream)
}

/// Y = λ v vᵀ + W with v_i ~ Bernoulli(ρ) and unit-entry W. With
/// `reduced_diagonal` the diagonal noise is N(0,1) instead of N(0,2).
pub fn sample_planted_submatrix_with(n: usize, lambda: f64, rho: f64, reduced_diagonal: bool, stream: RngStream) -> Result<ModelInstance> {
    ensure(n >= 1, "n", || "dimension must be at least 1".into())?;
    ensure(rho > 0.0 && rho < 1.0, "rho", || format!("{rho} not in (0,1)"))?;
    ensure(lambda >= 0.0, "lambda", || format!("{lambda} < 0"))?;
    let mut rng = stream.rng();
    let v: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < rho { 1.0 } else { 0.0 }).collect();
    let sd_diag = if reduced_diagonal { 1.0 } else { 2f64.sqrt() };
    let mut y = SymMatrix::from_upper(n, |i, j| normal(&mut rng) * if i == j { sd_diag } else { 1.0 });
    y.add_rank_one(lambda, &v);
    let support = (0..n).filter(|&i| v[i] == 1.0).collect();
    Ok(ModelInstance {
        spec: ModelSpec::PlantedSubmatrix { n, lambda, rho, reduced_diagonal },
        stream,
        observation: Observation::Matrix(y),
        signal: Signal::Sparse(SparseIndicator::new(n, support)?),
    })
}

/// Y = (λ/k) x xᵀ + W with x uniform over k-sparse {0,1}^n and W ~ GOE(n).
pub fn sample_sparse_pca(n: usize, k: usize, lambda: f64, stream: RngStream) -> Result<ModelInstance> {
    ensure(k >= 1 && k <= n, "k", || format!("need 1 ≤ k ≤ n, got k={k}, n={n}"))?;
    ensure(lambda > 0.0, "lambda", || format!("{lambda} ≤ 0"))?;
    let mut rng = stream.rng();
    let x = SparseIndicator::uniform(n, k, &mut rng)?;
    let mut y = sample_goe(n, GoeScale::Normalized, &mut rng)?;
    y.add_rank_one(lambda / k as f64, &x.to_f64());
    Ok(ModelInstance {
        spec: ModelSpec::SparsePca { n, k, lambda },
        stream,
        observation: Observation::Matrix(y),
        signal: Signal::Sparse(x),
    })
}

pub fn sample_pspin(n: usize, p: usize, stream: RngStream) -> Result<ModelInstance> {
    ensure(p >= 2, "p", || "order must be ≥ 2".into())?;
    ensure(n >= 1, "n", || "dimension must be at least 1".into())?;
    let len = (n as u64).checked_pow(p as u32).filter(|&l| l <= 50_000_000).ok_or_else(|| Error::Budget(format!("n^p too large for n={n}, p={p}")))?;
    let mut rng = stream.rng();
    let data = (0..len).map(|_| normal(&mut rng)).collect();
    Ok(ModelInstance {
        spec: ModelSpec::Pspin { n, p },
        stream,
        observation: Observation::Tensor(Tensor::new(p, n, data)?),
        signal: Signal::None,
    })
}

pub(crate) fn kahan_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let y = x - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

/// H_n(x; Y) = ⟨Y, x^{⊗p}⟩ / n^{(p+1)/2}, for ‖x‖₂ = √n.
pub fn pspin_energy(x: &[f64], y: &Tensor) -> Result<f64> {
    let n = y.n;
    ensure(x.len() == n, "x", || "length mismatch".into())?;
    let nx = crate::linalg::norm(x);
    ensure((nx - (n as f64).sqrt()).abs() <= 1e-8, "x", || format!("‖x‖ = {nx}, expected √n"))?;
    Ok(contract_full(x, y) / (n as f64).powf((y.p as f64 + 1.0) / 2.0))
}

/// ⟨Y, x^{⊗p}⟩ by repeated contraction of the last axis with compensated sums.
pub fn contract_full(x: &[f64], y: &Tensor) -> f64 {
    let n = y.n;
    let mut cur = y.data.clone();
    while cur.len() > 1 {
        cur = cur.chunks(n).map(|row| kahan_sum(row.iter().zip(x).map(|(a, b)| a * b))).collect();
    }
    cur[0]
}

pub fn sample_npp(n: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    ensure(n >= 1, "n", || "need at least one number".into())?;
    Ok((0..n).map(|_| normal(rng)).collect())
}

/// H(σ, X) = |⟨σ, X⟩| / √n.
pub fn npp_energy(sigma: &SpinVector, x: &[f64]) -> Result<f64> {
    ensure(sigma.len() == x.len(), "sigma", || "length mismatch".into())?;
    let s: f64 = sigma.as_slice().iter().zip(x).map(|(&a, &b)| a as f64 * b).sum();
    Ok(s.abs() / (x.len() as f64).sqrt())
}

/// O(σ, τ) = |⟨σ, τ⟩| / n.
pub fn npp_overlap(a: &SpinVector, b: &SpinVector) -> f64 {
    a.dot(b).unsigned_abs() as f64 / a.len() as f64
}

/// W′ = (c/n) x xᵀ + W with x uniform on {±1}^n and W ~ GOE(n).
pub fn sample_quiet_planted_sk(n: usize, c: f64, stream: RngStream) -> Result<ModelInstance> {
    ensure(c >= 0.0, "c", || format!("{c} < 0"))?;
    let mut rng = stream.rng();
    let x = SpinVector::uniform(n, &mut rng);
    let mut w = sample_goe(n, GoeScale::Normalized, &mut rng)?;
    if c != 0.0 {
        w.add_rank_one(c / n as f64, &x.to_f64());
    }
    Ok(ModelInstance {
        spec: ModelSpec::QuietPlantedSk { n, c },
        stream,
        observation: Observation::Matrix(w),
        signal: Signal::Spins(x),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goe_rejects_empty() {
        assert!(sample_goe(0, GoeScale::Normalized, &mut RngStream::new(1, 0).rng()).is_err());
    }

    #[test]
    fn instance_roundtrips_through_record() {
        let inst = sample_sparse_pca(12, 3, 2.0, RngStream::new(5, 7)).unwrap();
        let json = serde_json::to_string(&inst.record()).unwrap();
        let rec: InstanceRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(rec.regenerate().unwrap(), inst);
    }

    #[test]
    fn pspin_order_two_matches_matrix_form() {
        let inst = sample_pspin(6, 2, RngStream::new(3, 0)).unwrap();
        let t = inst.tensor().unwrap();
        let x = [1.0, -1.0, 1.0, 1.0, -1.0, 1.0];
        let mut q = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                q += x[i] * t.get(&[i, j]) * x[j];
            }
        }
        let h = pspin_energy(&x, t).unwrap();
        assert!((h - q / 6f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn pspin_rejects_off_sphere() {
        let inst = sample_pspin(3, 2, RngStream::new(3, 0)).unwrap();
        assert!(pspin_energy(&[1.0, 1.0, 1.1], inst.tensor().unwrap()).is_err());
    }

    #[test]
    fn bounded_row_validation() {
        let ok = PriorSpec::BoundedRow { atoms: vec![vec![1.0], vec![-1.0]], weights: vec![0.5, 0.5] };
        assert!(ok.validate().is_ok());
        let bad = PriorSpec::BoundedRow { atoms: vec![vec![2.0], vec![0.0]], weights: vec![0.5, 0.5] };
        assert!(bad.validate().is_err());
    }
}

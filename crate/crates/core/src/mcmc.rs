//! Gibbs measures on enumerable spaces, Metropolis chains, free-energy wells
//! and hitting-time experiments.

use std::collections::HashMap;
use std::hash::Hash;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Error, Result};
use crate::freeenergy::GibbsTable;
use crate::linalg::SymMatrix;
use crate::lowdeg::{fp_value, overlap_quantile_delta, OverlapSample};
use crate::models::{normal, SparseIndicator};
use crate::rng::{Rng, RngStream};
use crate::stats::{binom_se, choose, log_sum_exp, LogSumExp};

pub const GIBBS_MAX: usize = 1_000_000;
pub const MATRIX_MAX: usize = 1_000;
pub const TRANSITIVE_MAX: usize = 100_000;
pub const MIN_WELL_MASS: f64 = 1e-6;

pub trait StateSpace {
    type State: Clone + Eq + Hash;
    fn enumerate(&self) -> Result<Vec<Self::State>>;
    /// Neighbors in a fixed order; hill climbing breaks ties by this order.
    fn neighbors(&self, s: &Self::State) -> Vec<Self::State>;
    /// Draw from the proposal Ψ(s, ·).
    fn propose(&self, s: &Self::State, rng: &mut Rng) -> Self::State;
}

/// k′-sparse vectors in {0,1}^n as bitmasks; neighbors differ in exactly two
/// coordinates, so the graph is k′(n−k′)-regular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SparseSlice {
    pub n: usize,
    pub k: usize,
}

impl SparseSlice {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        ensure(n <= 64, "n", || format!("bitmask states need n ≤ 64, got {n}"))?;
        ensure(k >= 1 && k < n, "k", || format!("need 1 ≤ k′ < n, got k′={k}, n={n}"))?;
        Ok(Self { n, k })
    }

    pub fn size(&self) -> f64 {
        choose(self.n as u64, self.k as u64)
    }

    pub fn degree(&self) -> usize {
        self.k * (self.n - self.k)
    }

    /// Position in the increasing-mask (colex) order of `enumerate`.
    pub fn rank(&self, mask: u64) -> usize {
        let mut r = 0.0;
        let mut m = mask;
        let mut j = 1;
        while m != 0 {
            let pos = m.trailing_zeros() as u64;
            r += choose(pos, j);
            j += 1;
            m &= m - 1;
        }
        r as usize
    }

    pub fn mask_of(x: &SparseIndicator) -> u64 {
        x.support().iter().fold(0u64, |m, &i| m | 1 << i)
    }

    fn bits(&self, mask: u64) -> (Vec<usize>, Vec<usize>) {
        (0..self.n).partition(|&i| mask >> i & 1 == 1)
    }
}

impl StateSpace for SparseSlice {
    type State = u64;

    fn enumerate(&self) -> Result<Vec<u64>> {
        let size = self.size();
        if size > GIBBS_MAX as f64 {
            return Err(Error::Budget(format!("C({}, {}) = {size} states exceeds {GIBBS_MAX}", self.n, self.k)));
        }
        let mut out = Vec::with_capacity(size as usize);
        let mut v: u64 = (1 << self.k) - 1;
        let limit: u64 = if self.n == 64 { u64::MAX } else { 1 << self.n };
        while v < limit {
            out.push(v);
            // next mask with the same popcount
            let t = v | (v - 1);
            let next = (t.wrapping_add(1)) | (((!t & t.wrapping_add(1)) - 1) >> (v.trailing_zeros() + 1));
            if next <= v {
                break;
            }
            v = next;
        }
        Ok(out)
    }

    fn neighbors(&self, s: &u64) -> Vec<u64> {
        let (on, off) = self.bits(*s);
        let mut out = Vec::with_capacity(self.degree());
        for &i in &on {
            for &j in &off {
                out.push(s & !(1 << i) | 1 << j);
            }
        }
        out
    }

    fn propose(&self, s: &u64, rng: &mut Rng) -> u64 {
        let (on, off) = self.bits(*s);
        let i = on[rng.random_range(0..on.len())];
        let j = off[rng.random_range(0..off.len())];
        let t = s & !(1 << i) | 1 << j;
        debug_assert_eq!((s ^ t).count_ones(), 2);
        t
    }
}

/// H(v) = −vᵀYv on indicator vectors.
#[derive(Debug, Clone)]
pub struct SparsePcaHamiltonian {
    pub y: SymMatrix,
}

impl SparsePcaHamiltonian {
    pub fn energy(&self, mask: u64) -> f64 {
        let idx: Vec<usize> = (0..self.y.n()).filter(|&i| mask >> i & 1 == 1).collect();
        let mut s = 0.0;
        for &i in &idx {
            for &j in &idx {
                s += self.y.get(i, j);
            }
        }
        -s
    }

    /// H(to) − H(from) for a single swap, in O(k′).
    pub fn delta(&self, from: u64, to: u64) -> f64 {
        let diff = from ^ to;
        if diff == 0 {
            return 0.0;
        }
        debug_assert_eq!(diff.count_ones(), 2);
        let a = (from & diff).trailing_zeros() as usize;
        let b = (to & diff).trailing_zeros() as usize;
        let mut m = from & !(1 << a);
        let mut s = 0.0;
        while m != 0 {
            let j = m.trailing_zeros() as usize;
            s += self.y.get(b, j) - self.y.get(a, j);
            m &= m - 1;
        }
        -(2.0 * s + self.y.get(b, b) - self.y.get(a, a))
    }
}

/// μ_β(s) ∝ exp(−βH(s)) over the whole space.
pub fn gibbs_exact<S: StateSpace>(space: &S, h: impl Fn(&S::State) -> f64, beta: f64) -> Result<GibbsTable<S::State>> {
    ensure(beta >= 0.0, "beta", || format!("{beta} < 0"))?;
    let states = space.enumerate()?;
    if states.len() > GIBBS_MAX {
        return Err(Error::Budget(format!("{} states exceeds {GIBBS_MAX}", states.len())));
    }
    let logw = states.iter().map(|s| if beta == 0.0 { 0.0 } else { -beta * h(s) }).collect();
    GibbsTable::new(states, logw)
}

/// One Metropolis update. Only H(u) − H(v) is consulted.
pub fn metropolis_step<S: StateSpace>(
    space: &S,
    state: &S::State,
    delta_h: impl Fn(&S::State, &S::State) -> f64,
    beta: f64,
    rng: &mut Rng,
) -> S::State {
    let u = space.propose(state, rng);
    if beta == 0.0 {
        return u;
    }
    let d = delta_h(state, &u);
    if d <= 0.0 || rng.random::<f64>() < (-beta * d).exp() {
        u
    } else {
        state.clone()
    }
}

#[derive(Debug, Clone)]
pub struct ChainState<S> {
    pub current: S,
    pub steps: u64,
    rng: Rng,
}

impl<S: Clone> ChainState<S> {
    pub fn new(start: S, stream: RngStream) -> Self {
        Self { current: start, steps: 0, rng: stream.rng() }
    }

    pub fn step<Sp: StateSpace<State = S>>(&mut self, space: &Sp, delta_h: impl Fn(&S, &S) -> f64, beta: f64) {
        self.current = metropolis_step(space, &self.current, delta_h, beta, &mut self.rng);
        self.steps += 1;
    }
}

/// Total-variation distance between the chain's occupation after `steps`
/// moves and the exact table.
pub fn occupation_tv<S: StateSpace>(
    space: &S,
    table: &GibbsTable<S::State>,
    delta_h: impl Fn(&S::State, &S::State) -> f64,
    beta: f64,
    steps: u64,
    start: S::State,
    stream: RngStream,
) -> f64 {
    let index: HashMap<&S::State, usize> = table.states.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let mut counts = vec![0u64; table.states.len()];
    let mut chain = ChainState::new(start, stream);
    for _ in 0..steps {
        chain.step(space, &delta_h, beta);
        counts[index[&chain.current]] += 1;
    }
    let p = table.probabilities();
    0.5 * counts.iter().zip(&p).map(|(&c, &q)| (c as f64 / steps as f64 - q).abs()).sum::<f64>()
}

/// Dense Metropolis–Hastings matrix with Ψ(x,·) uniform over the neighbors
/// of x: P(x,y) = Ψ(x,y)·min{1, π(y)Ψ(y,x)/(π(x)Ψ(x,y))}.
pub fn metropolis_matrix<S: StateSpace>(space: &S, table: &GibbsTable<S::State>) -> Result<Vec<f64>> {
    let m = table.states.len();
    if m > MATRIX_MAX {
        return Err(Error::Budget(format!("{m} states exceeds {MATRIX_MAX} for an explicit matrix")));
    }
    let index: HashMap<&S::State, usize> = table.states.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let deg: Vec<f64> = table.states.iter().map(|s| space.neighbors(s).len() as f64).collect();
    let mut p = vec![0.0; m * m];
    for (x, s) in table.states.iter().enumerate() {
        let mut out = 0.0;
        for t in space.neighbors(s) {
            let y = index[&t];
            if y == x {
                continue;
            }
            let a = (table.log_weights[y] - table.log_weights[x] + (deg[x] / deg[y]).ln()).exp().min(1.0);
            let v = a / deg[x];
            p[x * m + y] += v;
            out += v;
        }
        p[x * m + x] = 1.0 - out;
    }
    Ok(p)
}

/// max_{x,y} |π(x)P(x,y) − π(y)P(y,x)| for a row-major m×m matrix.
pub fn detailed_balance_check(p: &[f64], pi: &[f64]) -> Result<f64> {
    let m = pi.len();
    ensure(p.len() == m * m, "P", || format!("expected {m}×{m} entries, got {}", p.len()))?;
    ensure(m <= MATRIX_MAX, "P", || format!("{m} states exceeds {MATRIX_MAX}"))?;
    let mut worst: f64 = 0.0;
    for x in 0..m {
        for y in x + 1..m {
            worst = worst.max((pi[x] * p[x * m + y] - pi[y] * p[y * m + x]).abs());
        }
    }
    Ok(worst)
}

/// Energies and planted overlaps ⟨v,x⟩ of every state of a sparse slice.
#[derive(Debug, Clone)]
pub struct WellLandscape {
    pub slice: SparseSlice,
    pub hamiltonian: SparsePcaHamiltonian,
    pub signal: u64,
    pub states: Vec<u64>,
    pub energies: Vec<f64>,
    pub overlaps: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WellSpec {
    pub ell: u32,
    pub beta: f64,
}

impl WellSpec {
    pub fn in_a(&self, overlap: u32) -> bool {
        overlap < self.ell
    }

    pub fn in_b(&self, overlap: u32) -> bool {
        overlap >= self.ell && overlap <= 2 * self.ell
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WellDepth {
    pub ell: u32,
    pub beta: f64,
    pub log_mu_a: f64,
    pub log_mu_b: f64,
    pub depth: f64,
    pub size_a: usize,
    pub size_b: usize,
}

impl WellLandscape {
    pub fn new(y: &SymMatrix, x: &SparseIndicator, k_prime: usize) -> Result<Self> {
        ensure(y.n() == x.n, "x", || "signal and observation dimensions differ".into())?;
        let slice = SparseSlice::new(y.n(), k_prime)?;
        let states = slice.enumerate()?;
        let hamiltonian = SparsePcaHamiltonian { y: y.clone() };
        let signal = SparseSlice::mask_of(x);
        let energies = states.iter().map(|&s| hamiltonian.energy(s)).collect();
        let overlaps = states.iter().map(|&s| (s & signal).count_ones()).collect();
        Ok(Self { slice, hamiltonian, signal, states, energies, overlaps })
    }

    pub fn table(&self, beta: f64) -> Result<GibbsTable<u64>> {
        GibbsTable::new(self.states.clone(), self.energies.iter().map(|&e| -beta * e).collect())
    }

    /// D_{β,ℓ} = log μ_β(A) − log μ_β(B).
    pub fn depth(&self, well: WellSpec) -> Result<WellDepth> {
        ensure(well.ell >= 1, "ell", || "ℓ must be ≥ 1".into())?;
        ensure(well.beta >= 0.0, "beta", || format!("{} < 0", well.beta))?;
        let (mut a, mut b, mut all) = (LogSumExp::default(), LogSumExp::default(), LogSumExp::default());
        let (mut size_a, mut size_b) = (0, 0);
        for (&e, &o) in self.energies.iter().zip(&self.overlaps) {
            let w = -well.beta * e;
            all.push(w);
            if well.in_a(o) {
                a.push(w);
                size_a += 1;
            } else if well.in_b(o) {
                b.push(w);
                size_b += 1;
            }
        }
        if size_a == 0 || size_b == 0 {
            return Err(invalid("ell", format!("ℓ={} leaves A ({size_a} states) or B ({size_b} states) empty", well.ell)));
        }
        let z = all.value();
        let (la, lb) = (a.value() - z, b.value() - z);
        Ok(WellDepth { ell: well.ell, beta: well.beta, log_mu_a: la, log_mu_b: lb, depth: la - lb, size_a, size_b })
    }

    /// ℓ in 1..=⌊min(k,k′)/2⌋ with the largest depth.
    pub fn deepest(&self, beta: f64) -> Result<WellDepth> {
        let k = self.signal.count_ones() as usize;
        let top = (k.min(self.slice.k) / 2).max(1) as u32;
        let mut best: Option<WellDepth> = None;
        for ell in 1..=top {
            if let Ok(d) = self.depth(WellSpec { ell, beta }) {
                if best.is_none_or(|b| d.depth > b.depth) {
                    best = Some(d);
                }
            }
        }
        best.ok_or_else(|| invalid("ell", "no ℓ gives non-empty A and B"))
    }
}

pub fn well_depth(y: &SymMatrix, x: &SparseIndicator, beta: f64, ell: u32, k_prime: usize) -> Result<WellDepth> {
    WellLandscape::new(y, x, k_prime)?.depth(WellSpec { ell, beta })
}

/// Lower bound −(4βλ/k)ℓ² + (log 2/2)ℓ − log 2 on the depth.
pub fn well_depth_lower_bound(beta: f64, lambda: f64, k: usize, ell: u32) -> f64 {
    let l = ell as f64;
    -4.0 * beta * lambda / k as f64 * l * l + 0.5 * std::f64::consts::LN_2 * l - std::f64::consts::LN_2
}

/// Jigsaw windows for k′ and ℓ; either may be empty at small n.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InformativeWindow {
    pub k_prime: (f64, f64),
    pub ell: (f64, f64),
}

pub fn informative_window(n: usize, k: usize, k_prime: usize, lambda: f64) -> InformativeWindow {
    let (nf, kf, kp) = (n as f64, k as f64, k_prime as f64);
    let ln = nf.ln();
    InformativeWindow {
        k_prime: (kf * kf * ln / (lambda * lambda * nf), nf * lambda * lambda / ln),
        ell: ((kf * kp / nf).max(1.0), kf / (2.0 * lambda) * (kp / nf * ln).sqrt()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HittingReport {
    pub depth: WellDepth,
    pub replicas: usize,
    pub t_grid: Vec<u64>,
    /// Empirical Pr{τ ≤ t}.
    pub empirical: Vec<f64>,
    /// t·e^{−D}.
    pub bound: Vec<f64>,
    pub sigma: Vec<f64>,
    pub violations: usize,
}

/// σ used for the bound comparison: binomial error at the bound (capped at 1),
/// floored at one hit in `replicas`.
fn hitting_sigma(bound: f64, replicas: usize) -> f64 {
    binom_se(bound.min(1.0).max(1.0 / replicas as f64), replicas)
}

/// Metropolis chains from X₀ ~ μ_β(·|A), run until they enter B or reach
/// max(t_grid). X₀ is drawn from the exact table restricted to A.
pub fn hitting_time_experiment(
    land: &WellLandscape,
    well: WellSpec,
    t_grid: &[u64],
    replicas: usize,
    stream: RngStream,
) -> Result<HittingReport> {
    ensure(!t_grid.is_empty() && t_grid.windows(2).all(|w| w[0] < w[1]), "t_grid", || "need an increasing grid".into())?;
    ensure(replicas >= 1, "replicas", || "need at least one replica".into())?;
    let depth = land.depth(well)?;
    if depth.log_mu_a.exp() < MIN_WELL_MASS {
        return Err(Error::Numeric(format!("μ(A) = {:e} too small to initialize from", depth.log_mu_a.exp())));
    }
    let a_idx: Vec<usize> = (0..land.states.len()).filter(|&i| well.in_a(land.overlaps[i])).collect();
    let logw: Vec<f64> = a_idx.iter().map(|&i| -well.beta * land.energies[i]).collect();
    let cond = GibbsTable::new(a_idx, logw)?;
    let cdf: Vec<f64> = cond
        .probabilities()
        .iter()
        .scan(0.0, |c, &p| {
            *c += p;
            Some(*c)
        })
        .collect();
    let t_max = *t_grid.last().unwrap();
    let h = &land.hamiltonian;
    let mut taus = Vec::with_capacity(replicas);
    for r in 0..replicas {
        let s = stream.child(r as u64);
        let mut rng = s.named("init").rng();
        let u: f64 = rng.random::<f64>() * cdf.last().unwrap();
        let pick = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
        let start = land.states[cond.states[pick]];
        let mut chain = ChainState::new(start, s.named("chain"));
        let mut tau = None;
        while chain.steps < t_max {
            chain.step(&land.slice, |a, b| h.delta(*a, *b), well.beta);
            if well.in_b((chain.current & land.signal).count_ones()) {
                tau = Some(chain.steps);
                break;
            }
        }
        taus.push(tau);
    }
    let empirical: Vec<f64> =
        t_grid.iter().map(|&t| taus.iter().filter(|x| x.is_some_and(|v| v <= t)).count() as f64 / replicas as f64).collect();
    let bound: Vec<f64> = t_grid.iter().map(|&t| t as f64 * (-depth.depth).exp()).collect();
    let sigma: Vec<f64> = bound.iter().map(|&b| hitting_sigma(b, replicas)).collect();
    let violations = empirical.iter().zip(&bound).zip(&sigma).filter(|((e, b), s)| **e > **b + 3.0 * **s).count();
    Ok(HittingReport { depth, replicas, t_grid: t_grid.to_vec(), empirical, bound, sigma, violations })
}

/// β = 0 walk from a uniform start: τ = first t ≥ 0 with X_t = target.
pub fn walk_hitting_times(slice: &SparseSlice, target: u64, replicas: usize, t_max: u64, stream: RngStream) -> Result<Vec<Option<u64>>> {
    let states = slice.enumerate()?;
    ensure(states.binary_search(&target).is_ok(), "target", || "target is not in the slice".into())?;
    let mut out = Vec::with_capacity(replicas);
    for r in 0..replicas {
        let mut rng = stream.child(r as u64).rng();
        let mut s = states[rng.random_range(0..states.len())];
        let mut t = 0;
        let hit = loop {
            if s == target {
                break Some(t);
            }
            if t == t_max {
                break None;
            }
            s = slice.propose(&s, &mut rng);
            t += 1;
        };
        out.push(hit);
    }
    Ok(out)
}

/// Pr{τ ≥ t} ≤ k′n^{2k′}/t for the β = 0 walk.
pub fn walk_tail_bound(n: usize, k_prime: usize, t: f64) -> f64 {
    k_prime as f64 * (n as f64).powi(2 * k_prime as i32) / t
}

/// Greedy ascent of f: move to the best strictly improving neighbor, ties to
/// the lowest neighbor index. Returns the visited states.
pub fn hill_climb<S: StateSpace>(space: &S, f: impl Fn(&S::State) -> f64, start: S::State) -> Vec<S::State> {
    let mut path = vec![start];
    loop {
        let cur = path.last().unwrap();
        let fc = f(cur);
        let mut best: Option<(S::State, f64)> = None;
        for t in space.neighbors(cur) {
            let v = f(&t);
            if v > fc && best.as_ref().is_none_or(|b| v > b.1) {
                best = Some((t, v));
            }
        }
        match best {
            Some((t, _)) => path.push(t),
            None => return path,
        }
    }
}

/// Finite transitive-symmetric subsets of the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum TransitiveSet {
    /// {±1/√n}^n; chain moves flip one sign.
    Hypercube { n: usize },
    /// (1/√m)(cos θ₁, sin θ₁, …, cos θ_m, sin θ_m), θ_i ∈ (2π/M)Z; chain moves
    /// shift one angle by ±2π/M. Small steps make Δ-local chains possible.
    Torus { blocks: usize, modulus: usize },
}

impl TransitiveSet {
    pub fn dim(&self) -> usize {
        match *self {
            TransitiveSet::Hypercube { n } => n,
            TransitiveSet::Torus { blocks, .. } => 2 * blocks,
        }
    }

    pub fn size(&self) -> f64 {
        match *self {
            TransitiveSet::Hypercube { n } => 2f64.powi(n as i32),
            TransitiveSet::Torus { blocks, modulus } => (modulus as f64).powi(blocks as i32),
        }
    }

    fn validate(&self) -> Result<()> {
        if let TransitiveSet::Torus { blocks, modulus } = *self {
            ensure(blocks >= 1 && modulus >= 3, "modulus", || "torus needs ≥ 1 block and modulus ≥ 3".into())?;
        }
        ensure(self.dim() >= 1, "n", || "empty set".into())?;
        if self.size() > TRANSITIVE_MAX as f64 {
            return Err(Error::Budget(format!("{} states exceeds {TRANSITIVE_MAX}", self.size())));
        }
        Ok(())
    }

    /// Row-major |S| × dim coordinates.
    pub fn points(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let m = self.size() as usize;
        let d = self.dim();
        let mut out = Vec::with_capacity(m * d);
        match *self {
            TransitiveSet::Hypercube { n } => {
                let s = 1.0 / (n as f64).sqrt();
                for idx in 0..m {
                    out.extend((0..n).map(|i| if idx >> i & 1 == 1 { -s } else { s }));
                }
            }
            TransitiveSet::Torus { blocks, modulus } => {
                let s = 1.0 / (blocks as f64).sqrt();
                for idx in 0..m {
                    let mut r = idx;
                    for _ in 0..blocks {
                        let th = 2.0 * std::f64::consts::PI * (r % modulus) as f64 / modulus as f64;
                        out.push(s * th.cos());
                        out.push(s * th.sin());
                        r /= modulus;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Largest ‖v − v′‖ over one chain move.
    pub fn step_size(&self) -> f64 {
        match *self {
            TransitiveSet::Hypercube { n } => 2.0 / (n as f64).sqrt(),
            TransitiveSet::Torus { blocks, modulus } => {
                2.0 * (std::f64::consts::PI / modulus as f64).sin() / (blocks as f64).sqrt()
            }
        }
    }

    /// Indices of the chain neighbors of state `idx`.
    pub fn neighbors(&self, idx: usize) -> Vec<usize> {
        match *self {
            TransitiveSet::Hypercube { n } => (0..n).map(|i| idx ^ (1 << i)).collect(),
            TransitiveSet::Torus { blocks, modulus } => {
                let mut out = Vec::with_capacity(2 * blocks);
                let mut place = 1;
                for _ in 0..blocks {
                    let digit = idx / place % modulus;
                    let base = idx - digit * place;
                    out.push(base + (digit + 1) % modulus * place);
                    out.push(base + (digit + modulus - 1) % modulus * place);
                    place *= modulus;
                }
                out
            }
        }
    }

    /// Exact law of ⟨u,v⟩ for independent uniform u, v (by transitivity, of
    /// ⟨u₀,v⟩ for a fixed u₀).
    pub fn overlap_law(&self) -> Result<OverlapSample> {
        let pts = self.points()?;
        let d = self.dim();
        let m = pts.len() / d;
        let w = 1.0 / m as f64;
        let u0 = &pts[..d];
        let atoms = pts.chunks(d).map(|v| (crate::linalg::dot(u0, v), w)).collect();
        Ok(OverlapSample::from_atoms(atoms, None))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BarrierReport {
    pub delta: f64,
    pub lambda_tilde: f64,
    pub fp: f64,
    /// 2(2·FP(D + log 2, λ̃))^{1−2ε} e^{−εD}.
    pub bound: f64,
    pub ratios: Vec<f64>,
    pub violation_rate: f64,
    /// e^{−εD}.
    pub allowed: f64,
    pub sigma: f64,
}

impl BarrierReport {
    pub fn respected(&self) -> bool {
        self.violation_rate <= self.allowed + 3.0 * self.sigma
    }
}

struct BarrierSetup {
    pts: Vec<f64>,
    dim: usize,
    delta: f64,
    lambda_tilde: f64,
    fp: f64,
    bound: f64,
}

fn barrier_setup(set: &TransitiveSet, lambda: f64, beta: f64, eps: f64, d: f64) -> Result<BarrierSetup> {
    ensure(eps > 0.0 && eps < 0.5, "eps", || format!("{eps} not in (0, 1/2)"))?;
    ensure(d >= 2.0, "D", || format!("{d} < 2"))?;
    ensure(lambda >= 0.0 && beta >= 0.0, "lambda", || "λ and β must be ≥ 0".into())?;
    let law = set.overlap_law()?;
    let delta = overlap_quantile_delta(&law, d)?;
    let lambda_tilde = (beta * lambda * (2.0 + eps) / (1.0 - 2.0 * eps)).sqrt();
    let fp = fp_value(&law, lambda_tilde, d + std::f64::consts::LN_2)?.value.mean;
    let bound = 2.0 * (2.0 * fp).powf(1.0 - 2.0 * eps) * (-eps * d).exp();
    Ok(BarrierSetup { pts: set.points()?, dim: set.dim(), delta, lambda_tilde, fp, bound })
}

/// Log-weights β⟨v,Y⟩ with Y = λu + Z, and overlaps ⟨u,v⟩, for all v ∈ S.
fn barrier_weights(setup: &BarrierSetup, u: usize, lambda: f64, beta: f64, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = setup.dim;
    let uu = &setup.pts[u * d..(u + 1) * d];
    let mut logw = Vec::with_capacity(setup.pts.len() / d);
    let mut ov = Vec::with_capacity(setup.pts.len() / d);
    for v in setup.pts.chunks(d) {
        let o = crate::linalg::dot(uu, v);
        ov.push(o);
        logw.push(beta * (lambda * o + crate::linalg::dot(v, z)));
    }
    (logw, ov)
}

fn barrier_ratio(logw: &[f64], ov: &[f64], delta: f64, eps: f64) -> Result<f64> {
    let (mut a, mut b) = (LogSumExp::default(), LogSumExp::default());
    let mut any_a = false;
    for (&w, &o) in logw.iter().zip(ov) {
        if o.abs() <= delta {
            a.push(w);
            any_a = true;
        } else if o > delta && o <= (1.0 + eps) * delta {
            b.push(w);
        }
    }
    if !any_a {
        return Err(invalid("delta", "A is empty"));
    }
    Ok((b.value() - a.value()).exp())
}

/// Empirical ν_β(B)/ν_β(A) over noise draws against the FP barrier bound.
pub fn fp_barrier_pipeline(set: &TransitiveSet, lambda: f64, beta: f64, eps: f64, d: f64, draws: usize, stream: RngStream) -> Result<BarrierReport> {
    ensure(draws >= 1, "draws", || "need at least one draw".into())?;
    let setup = barrier_setup(set, lambda, beta, eps, d)?;
    let m = setup.pts.len() / setup.dim;
    let mut ratios = Vec::with_capacity(draws);
    for r in 0..draws {
        let mut rng = stream.child(r as u64).rng();
        let u = rng.random_range(0..m);
        let z: Vec<f64> = (0..setup.dim).map(|_| normal(&mut rng)).collect();
        let (logw, ov) = barrier_weights(&setup, u, lambda, beta, &z);
        ratios.push(barrier_ratio(&logw, &ov, setup.delta, eps)?);
    }
    let violation_rate = ratios.iter().filter(|&&r| r > setup.bound).count() as f64 / draws as f64;
    let allowed = (-eps * d).exp();
    Ok(BarrierReport {
        delta: setup.delta,
        lambda_tilde: setup.lambda_tilde,
        fp: setup.fp,
        bound: setup.bound,
        ratios,
        violation_rate,
        allowed,
        sigma: binom_se(allowed, draws),
    })
}

/// max_v |ν_λ(v) − P(u = v | Y)| at the Bayesian temperature β = λ, with the
/// posterior computed from the Gaussian likelihood exp(−‖Y − λv‖²/2).
pub fn bayes_temperature_gap(set: &TransitiveSet, lambda: f64, stream: RngStream) -> Result<f64> {
    let pts = set.points()?;
    let d = set.dim();
    let m = pts.len() / d;
    let mut rng = stream.rng();
    let u = rng.random_range(0..m);
    let y: Vec<f64> = (0..d).map(|i| lambda * pts[u * d + i] + normal(&mut rng)).collect();
    let gibbs: Vec<f64> = pts.chunks(d).map(|v| lambda * crate::linalg::dot(v, &y)).collect();
    let lik: Vec<f64> = pts
        .chunks(d)
        .map(|v| -0.5 * v.iter().zip(&y).map(|(a, b)| (b - lambda * a).powi(2)).sum::<f64>())
        .collect();
    let (zg, zl) = (log_sum_exp(&gibbs), log_sum_exp(&lik));
    Ok(gibbs.iter().zip(&lik).map(|(g, l)| ((g - zg).exp() - (l - zl).exp()).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalChainReport {
    pub delta: f64,
    pub step: f64,
    /// e^{εD/2} / (2(2·FP(D + log 2, λ̃))^{1−2ε}).
    pub tau_bound: f64,
    /// Bound below 1: nothing to check.
    pub vacuous: bool,
    /// Replicas whose noise draw violated the barrier bound (excluded).
    pub bad_noise: usize,
    pub checked: usize,
    /// Fraction of checked replicas with τ < tau_bound.
    pub fraction_below: f64,
    /// e^{−εD/2}.
    pub allowed: f64,
    pub sigma: f64,
}

impl LocalChainReport {
    pub fn respected(&self) -> bool {
        self.vacuous || self.fraction_below <= self.allowed + 3.0 * self.sigma
    }
}

/// Metropolis chains with the set's local moves, started from ν_β(·|A); τ is
/// the first t ≥ 1 with ⟨u, X_t⟩ > δ. Requires the step Δ ≤ εδ.
pub fn local_chain_hitting_bound(
    set: &TransitiveSet,
    lambda: f64,
    beta: f64,
    eps: f64,
    d: f64,
    replicas: usize,
    stream: RngStream,
) -> Result<LocalChainReport> {
    ensure(replicas >= 1, "replicas", || "need at least one replica".into())?;
    let setup = barrier_setup(set, lambda, beta, eps, d)?;
    let step = set.step_size();
    if step > eps * setup.delta {
        return Err(invalid("step", format!("chain step {step:.4} exceeds εδ = {:.4}", eps * setup.delta)));
    }
    let tau_bound = (0.5 * eps * d).exp() / (2.0 * (2.0 * setup.fp).powf(1.0 - 2.0 * eps));
    let allowed = (-0.5 * eps * d).exp();
    let mut report = LocalChainReport {
        delta: setup.delta,
        step,
        tau_bound,
        vacuous: tau_bound < 1.0,
        bad_noise: 0,
        checked: 0,
        fraction_below: 0.0,
        allowed,
        sigma: 0.0,
    };
    if report.vacuous {
        return Ok(report);
    }
    let m = setup.pts.len() / setup.dim;
    // τ < tau_bound ⇔ τ ≤ ⌈tau_bound⌉ − 1
    let horizon = tau_bound.ceil() as u64 - 1;
    let mut below = 0usize;
    for r in 0..replicas {
        let s = stream.child(r as u64);
        let mut rng = s.rng();
        let u = rng.random_range(0..m);
        let z: Vec<f64> = (0..setup.dim).map(|_| normal(&mut rng)).collect();
        let (logw, ov) = barrier_weights(&setup, u, lambda, beta, &z);
        if barrier_ratio(&logw, &ov, setup.delta, eps)? > setup.bound {
            report.bad_noise += 1;
            continue;
        }
        report.checked += 1;
        let a: Vec<usize> = (0..m).filter(|&i| ov[i].abs() <= setup.delta).collect();
        let wa: Vec<f64> = a.iter().map(|&i| logw[i]).collect();
        let za = log_sum_exp(&wa);
        let mut x = rng.random::<f64>();
        let mut cur = *a.last().unwrap();
        for (&i, &w) in a.iter().zip(&wa) {
            x -= (w - za).exp();
            if x <= 0.0 {
                cur = i;
                break;
            }
        }
        let mut hit = false;
        for _ in 0..horizon {
            let nb = set.neighbors(cur);
            let prop = nb[rng.random_range(0..nb.len())];
            let dlog = logw[prop] - logw[cur];
            if dlog >= 0.0 || rng.random::<f64>() < dlog.exp() {
                cur = prop;
            }
            if ov[cur] > setup.delta {
                hit = true;
                break;
            }
        }
        below += hit as usize;
    }
    if report.checked > 0 {
        report.fraction_below = below as f64 / report.checked as f64;
        report.sigma = binom_se(allowed, report.checked);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::sample_sparse_pca;

    #[test]
    fn slice_enumeration_and_rank() {
        let s = SparseSlice::new(10, 3).unwrap();
        let st = s.enumerate().unwrap();
        assert_eq!(st.len(), 120);
        for (i, &m) in st.iter().enumerate() {
            assert_eq!(m.count_ones(), 3);
            assert_eq!(s.rank(m), i);
            assert_eq!(s.neighbors(&m).len(), s.degree());
        }
    }

    #[test]
    fn two_state_table() {
        let t = GibbsTable::new(vec![0, 1], vec![0.0, -2f64.ln()]).unwrap();
        let p = t.probabilities();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn swap_delta_matches_energy() {
        let inst = sample_sparse_pca(12, 3, 2.0, RngStream::new(3, 0)).unwrap();
        let h = SparsePcaHamiltonian { y: inst.matrix().unwrap().clone() };
        let s = SparseSlice::new(12, 3).unwrap();
        for m in s.enumerate().unwrap().into_iter().take(40) {
            for t in s.neighbors(&m) {
                assert!((h.delta(m, t) - (h.energy(t) - h.energy(m))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn metropolis_matrix_is_reversible() {
        let inst = sample_sparse_pca(8, 2, 2.0, RngStream::new(4, 0)).unwrap();
        let h = SparsePcaHamiltonian { y: inst.matrix().unwrap().clone() };
        let s = SparseSlice::new(8, 2).unwrap();
        let t = gibbs_exact(&s, |m| h.energy(*m), 3.0).unwrap();
        let p = metropolis_matrix(&s, &t).unwrap();
        assert!(detailed_balance_check(&p, &t.probabilities()).unwrap() < 1e-12);
    }

    #[test]
    fn beta_zero_depth_is_counting() {
        let inst = sample_sparse_pca(12, 4, 2.0, RngStream::new(5, 0)).unwrap();
        let x = match &inst.signal {
            crate::models::Signal::Sparse(x) => x.clone(),
            _ => unreachable!(),
        };
        let d = well_depth(inst.matrix().unwrap(), &x, 0.0, 1, 4).unwrap();
        assert!((d.depth - (d.size_a as f64 / d.size_b as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn torus_points_on_sphere_and_neighbors_local() {
        let set = TransitiveSet::Torus { blocks: 2, modulus: 5 };
        let pts = set.points().unwrap();
        for (i, v) in pts.chunks(4).enumerate() {
            assert!((crate::linalg::dot(v, v) - 1.0).abs() < 1e-12);
            for j in set.neighbors(i) {
                let w = &pts[j * 4..j * 4 + 4];
                let dist = v.iter().zip(w).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(dist <= set.step_size() + 1e-12);
            }
        }
    }

    #[test]
    fn trivial_barrier_ratio() {
        let set = TransitiveSet::Hypercube { n: 10 };
        let r = fp_barrier_pipeline(&set, 0.0, 0.0, 0.25, 4.0, 3, RngStream::new(6, 0)).unwrap();
        let law = set.overlap_law().unwrap();
        let a: f64 = law.atoms().iter().filter(|a| a.0.abs() <= r.delta).map(|a| a.1).sum();
        let b: f64 = law.atoms().iter().filter(|a| a.0 > r.delta && a.0 <= 1.25 * r.delta).map(|a| a.1).sum();
        for &x in &r.ratios {
            assert!((x - b / a).abs() < 1e-12);
        }
    }

    #[test]
    fn hypercube_flip_chain_is_not_local() {
        let set = TransitiveSet::Hypercube { n: 16 };
        assert!(local_chain_hitting_bound(&set, 0.5, 0.5, 0.25, 4.0, 10, RngStream::new(7, 0)).is_err());
    }
}

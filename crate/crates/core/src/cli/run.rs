use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng as _;
use serde_json::{json, Value};

use super::config::*;
use super::table::{cell_text, Summary, Table};
use crate::detect::{self, bbp_limit, bbp_overlap, goe_edge_threshold, signed_triangle_stat, triangle_moment_formulas};
use crate::error::{Error, Result};
use crate::freeenergy::{self, immse_check, mmse_limit_curve, needle_free_energy, needle_free_energy_limit, nishimori_check, rs_fixed_point, DEFAULT_DAMPING};
use crate::linalg::lambda_max;
use crate::lowdeg::{self, EnumeratedMoments, Multigraph, OverlapSample, OverlapSampler, PlantedSubmatrixMoments};
use crate::mcmc::{self, SparsePcaHamiltonian, SparseSlice, StateSpace, WellLandscape, WellSpec};
use crate::models::{sample_binary_community, sample_goe, sample_npp, sample_pspin, sample_sparse_pca, sample_spiked_wigner, GoeScale, Observation, PriorSpec, Signal, SpinVector, Tensor};
use crate::ogp;
use crate::rng::RngStream;
use crate::skcert;
use crate::stats::{welford, Estimate, Welford};

/// Result of one experiment. `elapsed` is kept out of the rendered CSV/JSON so
/// those stay byte-identical across runs.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub kind: &'static str,
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub table: Table,
    pub summary: Summary,
    pub elapsed: Duration,
}

macro_rules! row {
    ($($v:expr),* $(,)?) => { vec![$(json!($v)),*] };
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let root = RngStream::new(cfg.seed, 0);
    let (table, summary) = dispatch(&cfg.experiment, root)?;
    Ok(RunOutput {
        kind: cfg.experiment.kind(),
        name: cfg.stem(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        config: cfg.clone(),
        table,
        summary,
        elapsed: start.elapsed(),
    })
}

fn dispatch(e: &Experiment, s: RngStream) -> Result<(Table, Summary)> {
    match e {
        Experiment::Separation(p) => separation(p, s),
        Experiment::LrSecondMoment(p) => lr_second_moment(p, s),
        Experiment::GoeEdge(p) => goe_edge(p, s),
        Experiment::Bbp(p) => bbp(p, s),
        Experiment::SbmLdlr(p) => sbm_ldlr(p, s),
        Experiment::Cumulant(p) => cumulant(p),
        Experiment::Advantage(p) => advantage(p),
        Experiment::Triangle(p) => triangle(p, s),
        Experiment::ScalarChannel(p) => scalar_channel(p),
        Experiment::Nishimori(p) => nishimori(p, s),
        Experiment::Needle(p) => needle(p, s),
        Experiment::RsFixedPoint(p) => rs(p),
        Experiment::FpLd(p) => fp_ld(p, s),
        Experiment::McmcStationarity(p) => stationarity(p, s),
        Experiment::HittingTime(p) => hitting(p, s),
        Experiment::FpBarrier(p) => barrier(p, s),
        Experiment::LocalChain(p) => local_chain(p, s),
        Experiment::NppOgp(p) => npp_ogp(p, s),
        Experiment::NppCertificate(p) => npp_certificate(p),
        Experiment::NppGibbs(p) => npp_gibbs(p, s),
        Experiment::Interpolation(p) => interpolation(p, s),
        Experiment::PolyStability(p) => poly_stability(p, s),
        Experiment::Hypercontractivity(p) => hypercontractivity(p, s),
        Experiment::EogpEvents(p) => eogp(p, s),
        Experiment::SkSandwich(p) => sk_sandwich(p, s),
        Experiment::Slepian(p) => slepian(p, s),
        Experiment::QuietPlanting(p) => quiet_planting(p, s),
    }
}

fn matrix_of(obs: Observation) -> crate::linalg::SymMatrix {
    match obs {
        Observation::Matrix(m) => m,
        _ => unreachable!("sampler returns a symmetric matrix"),
    }
}

// ---------------------------------------------------------------------------
// Detection

fn separation(p: &Separation, s: RngStream) -> Result<(Table, Summary)> {
    let prior = PriorSpec::RademacherNormalized;
    let mut t = Table::new(&["lambda", "mean_p", "mean_q", "var_p", "var_q", "ratio", "gap_stderr", "classification"]);
    for (i, &lambda) in p.lambda_grid.iter().enumerate() {
        // Sampler failures surface as NaN and are reported below.
        let draw = |l: f64| {
            let prior = prior.clone();
            move |rng: &mut crate::rng::Rng| {
                let st = RngStream::new(rng.random(), 0);
                sample_spiked_wigner(p.n, l, &prior, true, st).and_then(|inst| lambda_max(&matrix_of(inst.observation))).unwrap_or(f64::NAN)
            }
        };
        let r = detect::separation_ratio(|v: &f64| *v, draw(lambda), draw(0.0), p.mc_budget, s.child(i as u64))?;
        if !(r.mean_p.is_finite() && r.mean_q.is_finite()) {
            return Err(Error::Numeric(format!("non-finite statistic at λ = {lambda}")));
        }
        t.push(row![lambda, r.mean_p, r.mean_q, r.var_p, r.var_q, r.ratio, r.gap_stderr, r.classification]);
    }
    Ok((t, Summary::default()))
}

fn lr_second_moment(p: &LrSecondMoment, s: RngStream) -> Result<(Table, Summary)> {
    let mut t = Table::new(&["n", "lambda", "exact", "mc", "mc_log_stderr"]);
    for &n in &p.n_grid {
        for (i, &lambda) in p.lambda_grid.iter().enumerate() {
            let exact = detect::lr_second_moment_rademacher_exact(lambda, n);
            let mc = detect::lr_second_moment(&PriorSpec::RademacherNormalized, lambda, n, p.mc_budget, s.child(n as u64).child(i as u64))?;
            t.push(row![n, lambda, exact, mc.value(), mc.log_stderr]);
        }
    }
    Ok((t, Summary::default()))
}

fn goe_edge(p: &GoeEdge, s: RngStream) -> Result<(Table, Summary)> {
    let mut t = Table::new(&["draw", "lambda_max"]);
    let mut vals = Vec::with_capacity(p.draws);
    for i in 0..p.draws {
        let w = sample_goe(p.n, GoeScale::Normalized, &mut s.child(i as u64).rng())?;
        let v = lambda_max(&w)?;
        vals.push(v);
        t.push(row![i, v]);
    }
    let e = welford(&vals).estimate();
    let mut sum = Summary::default();
    sum.set("mean", e.mean);
    sum.set("stderr", e.stderr);
    sum.set("edge", goe_edge_threshold(0.0));
    Ok((t, sum))
}

fn bbp(p: &Bbp, s: RngStream) -> Result<(Table, Summary)> {
    let mut t = Table::new(&["snr", "lambda", "overlap", "stderr", "limit"]);
    for (i, &snr) in p.snr_grid.iter().enumerate() {
        let lambda = snr.sqrt();
        let mut w = Welford::default();
        for d in 0..p.draws {
            let inst = sample_spiked_wigner(p.n, lambda, &PriorSpec::RademacherNormalized, true, s.child(i as u64).child(d as u64))?;
            w.push(bbp_overlap(&inst)?);
        }
        let e = w.estimate();
        t.push(row![snr, lambda, e.mean, e.stderr, bbp_limit(snr)]);
    }
    Ok((t, Summary::default()))
}

fn sbm_ldlr(p: &SbmLdlr, s: RngStream) -> Result<(Table, Summary)> {
    let mut t = Table::new(&["n", "D", "d", "eta", "d_eta2", "bound", "stderr"]);
    for (gi, &de2) in p.d_eta2_grid.iter().enumerate() {
        let eta = (de2 / p.d).sqrt();
        for &n in &p.n_grid {
            let e = lowdeg::sbm_ldlr_bound(n, p.k, p.d, eta, p.degree, p.mc_budget, s.child(gi as u64).child(n as u64))?;
            t.push(row![n, p.degree, p.d, eta, de2, e.mean, e.stderr]);
        }
    }
    Ok((t, Summary::default()))
}

// ---------------------------------------------------------------------------
// Low-degree coefficient engines

fn cumulant(p: &Cumulant) -> Result<(Table, Summary)> {
    let closed = lowdeg::kappa_cumulants(&PlantedSubmatrixMoments { n: p.n, lambda: p.lambda, rho: p.rho }, p.degree)?;
    let enumerated = lowdeg::kappa_cumulants(&EnumeratedMoments::planted_submatrix(p.n, p.lambda, p.rho)?, p.degree)?;
    let mut t = Table::new(&["alpha", "size", "connected", "avoids_target", "kappa", "kappa_enumerated", "magnitude_bound"]);
    let (mut route_diff, mut disconnected, mut bound_excess) = (0.0f64, 0.0f64, 0.0f64);
    for (a, k) in &closed.values {
        let ke = enumerated.get(a).ok_or_else(|| Error::Numeric(format!("{} missing from the enumerated table", a.edge_string())))?;
        route_diff = route_diff.max((k - ke).abs());
        let avoids = a.has_component_avoiding(0);
        let connected = a.is_connected();
        let bound = lowdeg::kappa_magnitude_bound(a, p.lambda, p.rho);
        if avoids {
            disconnected = disconnected.max(k.abs());
        } else if connected {
            bound_excess = bound_excess.max(k.abs() - bound);
        }
        t.push(row![a.edge_string(), a.size(), connected, avoids, k, ke, bound]);
    }
    let mut sum = Summary::default();
    sum.set("multigraphs", closed.len());
    sum.set("kappa_empty", closed.get(&Multigraph::empty()).unwrap_or(f64::NAN));
    sum.set("rho", p.rho);
    sum.set("max_route_diff", route_diff);
    sum.set("max_abs_disconnected", disconnected);
    sum.set("max_bound_excess", bound_excess);
    sum.set("corr_bound", closed.factorial_weighted_sum());
    Ok((t, sum))
}

fn advantage(p: &Advantage) -> Result<(Table, Summary)> {
    let mut t = Table::new(&["s", "adv_binary", "adv_gaussian"]);
    let index = lowdeg::binary_index(p.n, p.degree);
    let gindex = lowdeg::gaussian_index(p.n, p.degree, false);
    for &s in &p.s_grid {
        let planted = EnumeratedMoments::binary_community(p.n, p.k, p.q, s, p.m_planted, false)?;
        let null = EnumeratedMoments::binary_community(p.n, p.k, p.q, s, p.m_null, false)?;
        let (tau0, tau1) = (p.q, p.q + s * p.m_planted.max(p.m_null) as f64);
        let bin = lowdeg::r_alpha_recursion(&planted, &null, index.clone())?;
        let c = lowdeg::gaussian_scale(tau0, tau1);
        let shift = vec![-tau0 * c; p.n * p.n];
        let gau = lowdeg::r_alpha_recursion(&planted.affine(c, &shift), &null.affine(c, &shift), gindex.clone())?;
        t.push(row![s, lowdeg::adv_bound_binary(&bin, tau0, tau1)?, lowdeg::adv_bound_gaussian(&gau)]);
    }
    Ok((t, Summary::default()))
}

fn triangle(p: &Triangle, s: RngStream) -> Result<(Table, Summary)> {
    let f = triangle_moment_formulas(p.n, p.k, p.q, p.s, p.m)?;
    let mut t = Table::new(&["replication", "mean", "stderr", "variance", "variance_bound", "within_bound"]);
    let mut all = Welford::default();
    let mut within = 0;
    for r in 0..p.replications {
        let rs = s.child(r as u64);
        let mut w = Welford::default();
        for d in 0..p.draws {
            let inst = sample_binary_community(p.n, p.k, p.q, p.s, p.m, rs.child(d as u64))?;
            let g = match inst.observation {
                Observation::Graph(g) => g,
                _ => unreachable!("community sampler returns a graph"),
            };
            let v = signed_triangle_stat(&g, p.q)?;
            w.push(v);
            all.push(v);
        }
        let ok = w.variance() <= f.variance_bound;
        within += ok as usize;
        let e = w.estimate();
        t.push(row![r, e.mean, e.stderr, w.variance(), f.variance_bound, ok]);
    }
    let e = all.estimate();
    let mut sum = Summary::default();
    sum.set("mean", e.mean);
    sum.set("stderr", e.stderr);
    sum.set("mean_leading", f.mean);
    sum.set("mean_exact", f.mean_exact);
    sum.set("variance_bound", f.variance_bound);
    sum.set("fraction_within", within as f64 / p.replications as f64);
    Ok((t, sum))
}

// ---------------------------------------------------------------------------
// Free energy

fn prior_name(p: &freeenergy::ScalarPrior) -> String {
    match p {
        freeenergy::ScalarPrior::Rademacher => "rademacher".into(),
        freeenergy::ScalarPrior::Gaussian => "gaussian".into(),
        freeenergy::ScalarPrior::TwoPoint { p } => format!("two_point({p})"),
    }
}

fn scalar_channel(p: &ScalarChannel) -> Result<(Table, Summary)> {
    let mut t = Table::new(&["prior", "lambda", "psi", "mmse", "gaussian_mmse", "immse_residual"]);
    let mut worst: f64 = 0.0;
    for prior in &p.priors {
        let ch = freeenergy::ScalarChannel::new(*prior)?;
        for &lambda in &p.lambda_grid {
            let r = immse_check(&ch, lambda, p.h)?;
            worst = worst.max(r.residual.abs());
            t.push(row![
                prior_name(prior),
                lambda,
                freeenergy::scalar_psi(&ch, lambda)?,
                freeenergy::scalar_mmse(&ch, lambda)?,
                1.0 / (1.0 + lambda),
                r.residual
            ]);
        }
    }
    let mut sum = Summary::default();
    sum.set("max_immse_residual", worst);
    Ok((t, sum))
}

fn nishimori(p: &Nishimori, s: RngStream) -> Result<(Table, Summary)> {
    let mut t = Table::new(&["lambda", "overlap_gap", "overlap_gap_stderr", "squared_gap", "squared_gap_stderr", "within_3sigma"]);
    for (i, &lambda) in p.lambda_grid.iter().enumerate() {
        let r = nishimori_check(p.n, lambda, p.bias, p.draws, s.child(i as u64))?;
        t.push(row![lambda, r.overlap_gap.mean, r.overlap_gap.stderr, r.squared_gap.mean, r.squared_gap.stderr, r.within(3.0)]);
    }
    Ok((t, Summary::default()))
}

fn needle(p: &Needle, s: RngStream) -> Result<(Table, Summary)> {
    let mut t = Table::new(&["lambda", "free_energy", "stderr", "limit", "mmse", "mmse_stderr", "ml_success"]);
    for pt in needle_free_energy(p.n, &p.lambda_grid, p.draws, s)? {
        t.push(row![
            pt.lambda,
            pt.free_energy.mean,
            pt.free_energy.stderr,
            needle_free_energy_limit(pt.lambda),
            pt.mmse.mean,
            pt.mmse.stderr,
            pt.ml_success
        ]);
    }
    Ok((t, Summary::default()))
}

fn rs(p: &RsFixedPoint) -> Result<(Table, Summary)> {
    let ch = freeenergy::ScalarChannel::new(p.prior)?;
    let curve = mmse_limit_curve(&ch, &p.lambda_grid)?;
    let mut t = Table::new(&["lambda", "q_star", "fixed_points", "tie", "mmse_limit", "dmse", "pca_mse"]);
    for row in &curve.rows {
        let sol = rs_fixed_point(&ch, row.lambda, p.tol, DEFAULT_DAMPING)?;
        t.push(row![row.lambda, sol.q_star, sol.fixed_points.len(), sol.tie, row.mmse_limit, row.dmse, row.pca_mse]);
    }
    let mut sum = Summary::default();
    sum.set("prior", prior_name(&p.prior));
    sum.set("lambda_c", curve.lambda_c);
    Ok((t, sum))
}

// ---------------------------------------------------------------------------
// Franz–Parisi and low-degree

fn fp_ld(p: &FpLd, s: RngStream) -> Result<(Table, Summary)> {
    let sample = if p.mc_budget == 0 {
        OverlapSample::exact_rademacher(p.n)
    } else {
        OverlapSampler::rademacher(p.n).sample(p.mc_budget, s)?
    };
    let mut t = Table::new(&["D", "lambda", "d_tilde", "ld", "ld_stderr", "fp", "fp_stderr", "delta", "slack", "slack_stderr", "respected"]);
    let mut violations = 0;
    for &d in &p.degrees {
        for &lambda in &p.lambda_grid {
            let r = lowdeg::ld_fp_sandwich(&sample, d, lambda, 1.0)?;
            let ok = r.slack >= -3.0 * r.slack_stderr - 1e-12;
            violations += !ok as usize;
            t.push(row![d, lambda, r.d_tilde, r.ld.mean, r.ld.stderr, r.fp.value.mean, r.fp.value.stderr, r.fp.delta, r.slack, r.slack_stderr, ok]);
        }
    }
    let prior = lowdeg::BooleanPrior::fixed_sum(p.boolean_n, p.boolean_target)?;
    let delta = lowdeg::boolean_delta(&prior, p.boolean_degree)?;
    let mut sum = Summary::default();
    sum.set("violations", violations);
    sum.set("exact_overlap_law", p.mc_budget == 0);
    sum.set("boolean_delta", delta);
    sum.set("boolean_lo", lowdeg::boolean_lo(&prior, delta));
    sum.set("boolean_ld", lowdeg::boolean_ld(&prior, p.boolean_degree.floor() as usize));
    Ok((t, sum))
}

// ---------------------------------------------------------------------------
// MCMC

fn sparse_signal(sig: &Signal) -> Result<crate::models::SparseIndicator> {
    match sig {
        Signal::Sparse(x) => Ok(x.clone()),
        _ => Err(Error::Numeric("sparse PCA sampler returned no sparse signal".into())),
    }
}

fn stationarity(p: &McmcStationarity, s: RngStream) -> Result<(Table, Summary)> {
    let inst = sample_sparse_pca(p.n, p.k, p.lambda, s.named("instance"))?;
    let h = SparsePcaHamiltonian { y: matrix_of(inst.observation) };
    let space = SparseSlice::new(p.n, p.k_prime)?;
    let start = space.enumerate()?[0];
    let mut t = Table::new(&["beta", "states", "tv", "detailed_balance", "normalization_error"]);
    let (mut max_tv, mut max_db) = (0.0f64, 0.0f64);
    for (i, &beta) in p.beta_grid.iter().enumerate() {
        let table = mcmc::gibbs_exact(&space, |m| h.energy(*m), beta)?;
        let tv = mcmc::occupation_tv(&space, &table, |a, b| h.delta(*a, *b), beta, p.steps, start, s.child(i as u64));
        let pm = mcmc::metropolis_matrix(&space, &table)?;
        let db = mcmc::detailed_balance_check(&pm, &table.probabilities())?;
        max_tv = max_tv.max(tv);
        max_db = max_db.max(db);
        t.push(row![beta, table.states.len(), tv, db, table.normalization_error()]);
    }
    let mut sum = Summary::default();
    sum.set("max_tv", max_tv);
    sum.set("max_detailed_balance", max_db);
    Ok((t, sum))
}

fn hitting(p: &HittingTime, s: RngStream) -> Result<(Table, Summary)> {
    let mut t = Table::new(&["lambda", "beta", "ell", "depth", "t", "empirical", "bound", "sigma", "violated", "skipped"]);
    let (mut cells, mut skipped, mut violations) = (0, 0, 0);
    for (li, &lambda) in p.lambda_grid.iter().enumerate() {
        let inst = sample_sparse_pca(p.n, p.k, lambda, s.named("instance").child(li as u64))?;
        let x = sparse_signal(&inst.signal)?;
        let land = WellLandscape::new(inst.matrix().expect("sparse PCA returns a matrix"), &x, p.k_prime)?;
        for (bi, &beta) in p.beta_grid.iter().enumerate() {
            cells += 1;
            let well = land.deepest(beta)?;
            let spec = WellSpec { ell: well.ell, beta };
            match mcmc::hitting_time_experiment(&land, spec, &p.t_grid, p.replicas, s.child(li as u64).child(bi as u64)) {
                Ok(r) => {
                    for (j, &tt) in r.t_grid.iter().enumerate() {
                        let bad = r.empirical[j] > r.bound[j] + 3.0 * r.sigma[j];
                        t.push(row![lambda, beta, well.ell, well.depth, tt, r.empirical[j], r.bound[j], r.sigma[j], bad, false]);
                    }
                    violations += r.violations;
                }
                Err(Error::Numeric(_)) => {
                    skipped += 1;
                    t.push(row![lambda, beta, well.ell, well.depth, Value::Null, Value::Null, Value::Null, Value::Null, false, true]);
                }
                Err(e) => return Err(e),
            }
        }
    }
    let mut sum = Summary::default();
    sum.set("cells", cells);
    sum.set("skipped", skipped);
    sum.set("violations", violations);
    Ok((t, sum))
}

fn barrier(p: &FpBarrier, s: RngStream) -> Result<(Table, Summary)> {
    let mut t = Table::new(&["lambda", "beta", "delta", "fp", "bound", "violation_rate", "allowed", "sigma", "respected"]);
    for (i, &lambda) in p.lambda_grid.iter().enumerate() {
        let r = mcmc::fp_barrier_pipeline(&p.set, lambda, lambda, p.eps, p.degree, p.draws, s.child(i as u64))?;
        t.push(row![lambda, lambda, r.delta, r.fp, r.bound, r.violation_rate, r.allowed, r.sigma, r.respected()]);
    }
    Ok((t, Summary::default()))
}

fn local_chain(p: &LocalChain, s: RngStream) -> Result<(Table, Summary)> {
    let mut t = Table::new(&["lambda", "delta", "step", "tau_bound", "vacuous", "checked", "bad_noise", "fraction_below", "allowed", "sigma", "respected"]);
    for (i, &lambda) in p.lambda_grid.iter().enumerate() {
        let r = mcmc::local_chain_hitting_bound(&p.set, lambda, lambda, p.eps, p.degree, p.replicas, s.child(i as u64))?;
        t.push(row![lambda, r.delta, r.step, r.tau_bound, r.vacuous, r.checked, r.bad_noise, r.fraction_below, r.allowed, r.sigma, r.respected()]);
    }
    Ok((t, Summary::default()))
}

// ---------------------------------------------------------------------------
// Overlap gaps

fn resolve_rho(n: usize, eps: f64, rho: Option<f64>) -> Result<f64> {
    match rho {
        Some(r) => Ok(r),
        None => ogp::certified_rho(n, eps)?.ok_or_else(|| Error::Numeric(format!("no ρ certified at n = {n}, ε = {eps}"))),
    }
}

fn npp_ogp(p: &NppOgp, s: RngStream) -> Result<(Table, Summary)> {
    let rho = resolve_rho(p.n, p.eps, p.rho)?;
    let exp = ogp::npp_first_moment_exponent(p.n, p.eps, rho)?;
    let mut t = Table::new(&["draw", "min_energy", "level", "solutions", "forbidden_pairs"]);
    let mut hit = 0;
    for d in 0..p.draws {
        let x = sample_npp(p.n, &mut s.child(d as u64).rng())?;
        let scan = ogp::npp_exhaustive_scan(&x, p.eps)?;
        let pairs = scan.forbidden_pairs(rho);
        hit += (pairs > 0) as usize;
        t.push(row![d, scan.min_energy, scan.level, scan.solutions.len(), pairs]);
    }
    let mut sum = Summary::default();
    sum.set("rho", rho);
    sum.set("exponent_leading", exp.leading);
    sum.set("exponent_finite_n", exp.finite_n);
    sum.set("fraction_with_pairs", hit as f64 / p.draws as f64);
    Ok((t, sum))
}

fn npp_certificate(p: &NppCertificate) -> Result<(Table, Summary)> {
    let mut t = Table::new(&["n", "eps", "rho", "leading", "finite_n", "certified_rho"]);
    for &eps in &p.eps_grid {
        let cert = ogp::certified_rho(p.n, eps)?;
        for &rho in &p.rho_grid {
            let e = ogp::npp_first_moment_exponent(p.n, eps, rho)?;
            t.push(row![p.n, eps, rho, e.leading, e.finite_n, cert]);
        }
    }
    Ok((t, Summary::default()))
}

fn npp_gibbs(p: &NppGibbs, s: RngStream) -> Result<(Table, Summary)> {
    let rho = resolve_rho(p.n, p.eps, p.rho)?;
    let beta = ogp::npp_default_beta(p.n, p.eps);
    let mut t = Table::new(&["draw", "log_pi_1", "log_pi_2", "log_pi_3", "size_2", "holds", "fitted_constant"]);
    let mut holds = 0;
    for d in 0..p.draws {
        let x = sample_npp(p.n, &mut s.child(d as u64).rng())?;
        let g = ogp::npp_gibbs_partition_ratio(&x, beta, p.eps, rho)?;
        holds += g.holds() as usize;
        t.push(row![d, g.log_pi[0], g.log_pi[1], g.log_pi[2], g.sizes[1], g.holds(), g.fitted_constant]);
    }
    let mut sum = Summary::default();
    sum.set("rho", rho);
    sum.set("beta", beta);
    sum.set("fraction_holds", holds as f64 / p.draws as f64);
    Ok((t, sum))
}

fn tensor_of(obs: Observation) -> Tensor {
    match obs {
        Observation::Tensor(t) => t,
        _ => unreachable!("p-spin sampler returns a tensor"),
    }
}

fn pspin_path(n: usize, p: usize, steps: usize, s: RngStream) -> Result<ogp::InterpolationPath> {
    let y = tensor_of(sample_pspin(n, p, s.named("y"))?.observation);
    let y2 = tensor_of(sample_pspin(n, p, s.named("y_prime"))?.observation);
    ogp::InterpolationPath::new(y, y2, steps)
}

fn interpolation(p: &Interpolation, s: RngStream) -> Result<(Table, Summary)> {
    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); p.steps + 1];
    let mut endpoint_err: f64 = 0.0;
    let mut taus = Vec::new();
    for d in 0..p.draws {
        let path = pspin_path(p.n, p.p, p.steps, s.child(d as u64))?;
        for (l, pool) in pooled.iter_mut().enumerate() {
            pool.extend_from_slice(&path.at(l)?.data);
        }
        let first = path.at(0)?;
        let last = path.at(p.steps)?;
        let diff = |a: &Tensor, b: &Tensor| a.data.iter().zip(&b.data).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        endpoint_err = endpoint_err.max(diff(&first, &path.y)).max(diff(&last, &path.y_prime));
        taus = path.taus.clone();
    }
    let mut t = Table::new(&["l", "tau", "entries", "mean", "variance", "fourth", "z_mean", "z_second", "z_fourth"]);
    let mut worst_z: f64 = 0.0;
    for (l, pool) in pooled.iter().enumerate() {
        let m = ogp::marginal_moments(pool);
        worst_z = m.z.iter().fold(worst_z, |a, z| a.max(z.abs()));
        t.push(row![l, taus[l], m.entries, m.mean, m.variance, m.fourth, m.z[0], m.z[1], m.z[2]]);
    }
    let mut sum = Summary::default();
    sum.set("endpoint_error", endpoint_err);
    sum.set("max_abs_z", worst_z);
    Ok((t, sum))
}

fn poly_stability(p: &PolyStability, s: RngStream) -> Result<(Table, Summary)> {
    let corpus = ogp::polynomial_corpus(p.corpus_size)?;
    let mut t = Table::new(&["poly", "degree", "rho", "mean", "stderr", "exact_mean", "mean_bound", "mean_respected", "tail_respected"]);
    let (mut checks, mut mean_fail, mut tail_fail) = (0, 0, 0);
    for (i, f) in corpus.iter().enumerate() {
        for (j, &rho) in p.rho_grid.iter().enumerate() {
            let r = ogp::poly_stability_check(f, rho, p.draws, s.child(i as u64).child(j as u64))?;
            let (m_ok, t_ok) = (r.mean_respected(3.0), r.tail_respected(3.0));
            checks += 1;
            mean_fail += !m_ok as usize;
            tail_fail += !t_ok as usize;
            t.push(row![i, r.degree, rho, r.mean.mean, r.mean.stderr, r.exact_mean, r.mean_bound, m_ok, t_ok]);
        }
    }
    let mut sum = Summary::default();
    sum.set("checks", checks);
    sum.set("mean_failures", mean_fail);
    sum.set("tail_failures", tail_fail);
    Ok((t, sum))
}

fn hypercontractivity(p: &Hypercontractivity, s: RngStream) -> Result<(Table, Summary)> {
    let f = ogp::random_hermite_poly(p.dim, p.out, p.degree, p.terms, s.named("poly"))?;
    let mut t = Table::new(&["q", "lhs", "stderr", "rhs", "respected"]);
    for r in ogp::hypercontractive_tail_check(&f, &p.q_grid, p.draws, s.named("draws"))? {
        t.push(row![r.q, r.lhs.mean, r.lhs.stderr, r.rhs, r.respected(3.0)]);
    }
    Ok((t, Summary::default()))
}

fn eogp(p: &EogpEvents, s: RngStream) -> Result<(Table, Summary)> {
    let params = ogp::EventParams { mu: p.mu, nu1: p.nu1, nu2: p.nu2, gamma: p.gamma, c: p.c };
    let dim = p.n.checked_pow(p.p as u32).ok_or_else(|| Error::Budget("n^p overflows".into()))?;
    let mut t = Table::new(&["poly", "overlap_gap", "succeeds", "small_steps", "all_three", "max_step_sq"]);
    let mut all = 0;
    let mut pairs = [0usize; 3];
    for i in 0..p.polys {
        let ps = s.child(i as u64);
        let path = pspin_path(p.n, p.p, p.steps, ps.named("path"))?;
        let mut f = ogp::random_hermite_poly(dim, p.n, p.degree, p.terms, ps.named("poly"))?;
        if p.randomize_signs {
            let mut rng = ps.named("signs").rng();
            let signs: Vec<f64> = (0..p.n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            f = f.with_output_signs(&SpinVector::signs_of(&signs))?;
        }
        let o = ogp::eogp_events(&f, &path, params)?;
        all += o.all_three() as usize;
        pairs[0] += (o.overlap_gap && o.succeeds) as usize;
        pairs[1] += (o.overlap_gap && o.small_steps) as usize;
        pairs[2] += (o.succeeds && o.small_steps) as usize;
        t.push(row![i, o.overlap_gap, o.succeeds, o.small_steps, o.all_three(), o.max_step_sq]);
    }
    let mut sum = Summary::default();
    sum.set("all_three", all);
    sum.set("gap_and_success", pairs[0]);
    sum.set("gap_and_stable", pairs[1]);
    sum.set("success_and_stable", pairs[2]);
    Ok((t, sum))
}

// ---------------------------------------------------------------------------
// SK certification

fn sk_sandwich(p: &SkSandwich, s: RngStream) -> Result<(Table, Summary)> {
    let draws = skcert::sandwich_sweep(p.n, p.draws, s)?;
    let mut t = Table::new(&["draw", "rounding", "brute", "spectral", "abssum", "ordered"]);
    for (i, d) in draws.iter().enumerate() {
        t.push(row![i, d.rounding, d.brute, d.spectral, d.abssum, d.ordered()]);
    }
    let est = |f: &dyn Fn(&skcert::SandwichDraw) -> f64| -> Estimate { welford(&draws.iter().map(f).collect::<Vec<_>>()).estimate() };
    let rounding = est(&|d| d.rounding);
    let spectral = est(&|d| d.spectral);
    let abssum = est(&|d| d.abssum / (p.n as f64).powf(1.5));
    let mut sum = Summary::default();
    sum.set("all_ordered", draws.iter().all(|d| d.ordered()));
    sum.set("mean_rounding", rounding.mean);
    sum.set("rounding_stderr", rounding.stderr);
    sum.set("mean_spectral", spectral.mean);
    sum.set("mean_abssum_over_n32", abssum.mean);
    if draws.iter().all(|d| d.brute.is_some()) {
        let brute = est(&|d| d.brute.unwrap_or(f64::NAN));
        sum.set("mean_brute", brute.mean);
        sum.set("brute_stderr", brute.stderr);
    }
    sum.set("four_over_pi", 4.0 / std::f64::consts::PI);
    Ok((t, sum))
}

fn slepian(p: &Slepian, s: RngStream) -> Result<(Table, Summary)> {
    let e = skcert::slepian_mc_check(p.n, p.draws, s)?;
    let mut t = Table::new(&["quantity", "value", "stderr"]);
    t.push(row!["parisi", skcert::PARISI_SK, 0.0]);
    t.push(row!["slepian_constant", skcert::slepian_bound_constant(), 0.0]);
    t.push(row!["slepian_mc", e.mean, e.stderr]);
    t.push(row!["spectral_limit", 2.0, 0.0]);
    let mut sum = Summary::default();
    sum.set("parisi", skcert::PARISI_SK);
    sum.set("slepian_constant", skcert::slepian_bound_constant());
    sum.set("slepian_mc", e.mean);
    sum.set("slepian_mc_stderr", e.stderr);
    Ok((t, sum))
}

fn quiet_planting(p: &QuietPlanting, s: RngStream) -> Result<(Table, Summary)> {
    let mut t = Table::new(&["c", "planted_value", "planted_value_stderr", "null_lambda", "planted_lambda", "auc"]);
    for r in skcert::quiet_planting_experiment(p.n, &p.c_grid, p.draws, s)? {
        t.push(row![r.c, r.planted_value.mean, r.planted_value.stderr, r.null_lambda.mean, r.planted_lambda.mean, r.auc]);
    }
    Ok((t, Summary::default()))
}

// ---------------------------------------------------------------------------
// Rendering

/// CSV with `config_hash` and `seed` appended to every row.
pub fn render_csv(out: &RunOutput) -> Result<Vec<u8>> {
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = out.table.columns.clone();
    header.push("config_hash".into());
    header.push("seed".into());
    w.write_record(&header).map_err(io)?;
    for r in &out.table.rows {
        let mut rec: Vec<String> = r.iter().map(cell_text).collect();
        rec.push(out.config_hash.clone());
        rec.push(out.seed.to_string());
        w.write_record(&rec).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn render_json(out: &RunOutput) -> Result<Vec<u8>> {
    let doc = json!({
        "kind": out.kind,
        "name": out.name,
        "config_hash": out.config_hash,
        "seed": out.seed,
        "config": out.config,
        "rows": out.table.rows.len(),
        "summary": Value::Object(out.summary.0.clone()),
    });
    let mut v = serde_json::to_vec_pretty(&doc).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    v.push(b'\n');
    Ok(v)
}

/// Writes `<stem>.csv`, `<stem>.json` and the wall-clock sidecar
/// `<stem>.timing.json`; returns the three paths.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<[PathBuf; 3]> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{}.csv", out.name));
    let json = dir.join(format!("{}.json", out.name));
    let timing = dir.join(format!("{}.timing.json", out.name));
    std::fs::write(&csv, render_csv(out)?)?;
    std::fs::write(&json, render_json(out)?)?;
    let t = json!({ "config_hash": out.config_hash, "seed": out.seed, "wall_clock_s": out.elapsed.as_secs_f64() });
    std::fs::write(&timing, serde_json::to_vec_pretty(&t).map_err(|e| Error::Io(std::io::Error::other(e)))?)?;
    Ok([csv, json, timing])
}

use proptest::prelude::*;
use rand::Rng as _;

use sclab::detect::*;
use sclab::freeenergy::*;
use sclab::linalg::SymMatrix;
use sclab::lowdeg::*;
use sclab::mcmc::*;
use sclab::models::*;
use sclab::ogp::*;
use sclab::skcert::*;
use sclab::RngStream;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn goe(n: usize, seed: u64) -> SymMatrix {
    sample_goe(n, GoeScale::Normalized, &mut RngStream::new(seed, 0).rng()).unwrap()
}

fn priors() -> impl Strategy<Value = ScalarPrior> {
    prop_oneof![Just(ScalarPrior::Rademacher), Just(ScalarPrior::Gaussian), (0.02f64..0.98).prop_map(|p| ScalarPrior::TwoPoint { p })]
}

proptest! {
    #![proptest_config(cfg(24))]

    #[test]
    fn goe_is_exactly_symmetric(n in 1usize..40, seed in any::<u64>()) {
        prop_assert_eq!(goe(n, seed).asymmetry(), 0.0);
    }

    #[test]
    fn spiked_wigner_is_a_function_of_the_stream(n in 2usize..30, lambda in 0.0f64..4.0, seed in any::<u64>(), id in any::<u64>()) {
        let s = RngStream::new(seed, id);
        let a = sample_spiked_wigner(n, lambda, &PriorSpec::RademacherNormalized, true, s).unwrap();
        let b = sample_spiked_wigner(n, lambda, &PriorSpec::RademacherNormalized, true, s).unwrap();
        prop_assert_eq!(a.matrix().unwrap().asymmetry(), 0.0);
        prop_assert_eq!(a.observation, b.observation);
        prop_assert_eq!(a.signal, b.signal);
    }

    #[test]
    fn community_graph_is_a_function_of_the_stream(n in 10usize..40, seed in any::<u64>()) {
        let s = RngStream::new(seed, 3);
        let a = sample_binary_community(n, n / 2, 0.2, 0.3, 2, s).unwrap();
        let b = sample_binary_community(n, n / 2, 0.2, 0.3, 2, s).unwrap();
        prop_assert_eq!(a.observation, b.observation);
    }

    #[test]
    fn lr_at_zero_signal_is_one(n in 1usize..200, seed in any::<u64>()) {
        let est = lr_second_moment(&PriorSpec::RademacherNormalized, 0.0, n, 100, RngStream::new(seed, 0)).unwrap();
        prop_assert!((est.value() - 1.0).abs() < 1e-12);
        prop_assert!((lr_second_moment_rademacher_exact(0.0, n) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_test_is_invariant_to_positive_rescaling(c in 0.01f64..100.0, t in -1.0f64..2.0, seed in any::<u64>()) {
        let p = |r: &mut sclab::rng::Rng| r.random::<f64>() + 0.5;
        let q = |r: &mut sclab::rng::Rng| r.random::<f64>();
        let s = RngStream::new(seed, 0);
        let a = threshold_test(|x: &f64| *x, t, p, q, 200, s).unwrap();
        let b = threshold_test(|x: &f64| c * *x, c * t, p, q, 200, s).unwrap();
        prop_assert_eq!(a.type_i_error, b.type_i_error);
        prop_assert_eq!(a.type_ii_error, b.type_ii_error);
    }

    #[test]
    fn triangle_sum_and_trace_agree(n in 3usize..60, q in 0.05f64..0.6, seed in any::<u64>()) {
        let inst = sample_binary_community(n, (n / 2).max(1), q, 0.2, 2, RngStream::new(seed, 1)).unwrap();
        let g = inst.graph().unwrap();
        let a = signed_triangle_stat(g, q).unwrap();
        let b = signed_triangle_stat_trace(g, q).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn odd_truncated_exp_is_below_exp(x in -30.0f64..30.0, half in 0u32..15) {
        let d = 2 * half + 1;
        prop_assert!(truncated_exp(x, d) <= x.exp() * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn ld_and_fp_are_monotone_in_degree(n in 4usize..60, lambda in 0.1f64..1.5, d in 1u32..6) {
        let s = OverlapSample::exact_rademacher(n);
        let d1 = 2 * d - 1;
        let lo = ld_value(&s, lambda, d1).mean;
        let hi = ld_value(&s, lambda, d1 + 2).mean;
        prop_assert!(hi >= lo - 1e-12);
        let f1 = fp_value(&s, lambda, d as f64).unwrap().value.mean;
        let f2 = fp_value(&s, lambda, d as f64 + 1.0).unwrap().value.mean;
        prop_assert!(f2 >= f1 - 1e-12);
    }

    #[test]
    fn psi_is_monotone_and_half_lipschitz(prior in priors(), a in 0.0f64..40.0, b in 0.0f64..40.0) {
        let ch = ScalarChannel::new(prior).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (pl, ph) = (scalar_psi(&ch, lo).unwrap(), scalar_psi(&ch, hi).unwrap());
        let l = 0.5 * ch.second_moment();
        prop_assert!(ph >= pl - 1e-10);
        prop_assert!(ph - pl <= l * (hi - lo) + 1e-10);
        prop_assert!(scalar_mmse(&ch, hi).unwrap() <= scalar_mmse(&ch, lo).unwrap() + 1e-10);
    }

    #[test]
    fn gibbs_table_normalizes(ws in prop::collection::vec(-700.0f64..700.0, 1..300)) {
        let t = GibbsTable::new((0..ws.len()).collect(), ws).unwrap();
        prop_assert!(t.normalization_error() <= 1e-12);
        prop_assert!(t.probabilities().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn rs_solution_is_stationary_and_maximal(prior in priors(), lambda in 0.05f64..6.0) {
        let ch = ScalarChannel::new(prior).unwrap();
        let sol = rs_fixed_point(&ch, lambda, 1e-10, DEFAULT_DAMPING).unwrap();
        let pot = RsPotential { channel: &ch, lambda };
        prop_assert!(pot.gap(sol.q_star).abs() < 1e-6, "gap {}", pot.gap(sol.q_star));
        let top = ch.second_moment();
        for i in 0..=200 {
            let q = top * i as f64 / 200.0;
            prop_assert!(pot.value(q) <= pot.value(sol.q_star) + 1e-9, "F({q}) > F(q*)");
        }
    }

    #[test]
    fn metropolis_moves_are_local(n in 4usize..20, kp in 1usize..4, beta in 0.0f64..5.0, seed in any::<u64>()) {
        let kp = kp.min(n - 1);
        let space = SparseSlice::new(n, kp).unwrap();
        let h = SparsePcaHamiltonian { y: goe(n, seed) };
        let mut rng = RngStream::new(seed, 1).rng();
        let mut s: u64 = (1 << kp) - 1;
        for _ in 0..200 {
            let t = metropolis_step(&space, &s, |a, b| h.delta(*a, *b), beta, &mut rng);
            prop_assert!(matches!((s ^ t).count_ones(), 0 | 2));
            prop_assert_eq!(t.count_ones() as usize, kp);
            s = t;
        }
    }

    #[test]
    fn swap_delta_matches_energy_difference(n in 3usize..20, seed in any::<u64>()) {
        let h = SparsePcaHamiltonian { y: goe(n, seed) };
        let space = SparseSlice::new(n, 2).unwrap();
        let s: u64 = 0b11;
        for t in space.neighbors(&s) {
            prop_assert!((h.delta(s, t) - (h.energy(t) - h.energy(s))).abs() < 1e-12);
        }
    }

    #[test]
    fn well_depth_at_infinite_temperature_counts_states(n in 9usize..15, seed in any::<u64>()) {
        let inst = sample_sparse_pca(n, 4, 1.0, RngStream::new(seed, 0)).unwrap();
        let x = match &inst.signal { Signal::Sparse(x) => x.clone(), _ => unreachable!() };
        let d = well_depth(&inst.symmetric_matrix().unwrap(), &x, 0.0, 1, 4).unwrap();
        let want = (d.size_a as f64).ln() - (d.size_b as f64).ln();
        prop_assert!((d.depth - want).abs() < 1e-12);
    }

    #[test]
    fn npp_energy_is_even(n in 2usize..40, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0).rng();
        let x = sample_npp(n, &mut rng).unwrap();
        let s = SpinVector::uniform(n, &mut rng);
        prop_assert_eq!(npp_energy(&s, &x).unwrap(), npp_energy(&s.neg(), &x).unwrap());
    }

    #[test]
    fn rounding_lands_on_the_sphere(f in prop::collection::vec(-1e3f64..1e3, 1..100)) {
        prop_assume!(f.iter().any(|v| *v != 0.0));
        let g = round_to_sphere(&f).unwrap();
        let r = sclab::linalg::norm(&g);
        prop_assert!((r - (f.len() as f64).sqrt()).abs() <= 1e-10 * r);
    }

    #[test]
    fn interpolation_endpoints_are_exact(n in 2usize..6, p in 2usize..4, seed in any::<u64>()) {
        let a = sample_pspin(n, p, RngStream::new(seed, 0)).unwrap().tensor().unwrap().clone();
        let b = sample_pspin(n, p, RngStream::new(seed, 1)).unwrap().tensor().unwrap().clone();
        prop_assert_eq!(&interpolate(&a, &b, 0.0).unwrap(), &a);
        prop_assert_eq!(&interpolate(&a, &b, std::f64::consts::FRAC_PI_2).unwrap(), &b);
    }

    #[test]
    fn corpus_discrepancy_is_below_the_degree_bound(rho in 0.0f64..1.0) {
        for f in polynomial_corpus(40).unwrap() {
            let bound = 2.0 * (1.0 - rho.powi(f.degree() as i32));
            prop_assert!(f.exact_discrepancy(rho) <= bound * f.second_moment() + 1e-12);
        }
    }

    #[test]
    fn certificates_bound_the_optimum(n in 2usize..11, seed in any::<u64>()) {
        let w = goe(n, seed);
        let brute = sk_bruteforce(&w).unwrap().value;
        prop_assert!(spectral_cert(&w).unwrap().value >= brute - 1e-12);
        prop_assert!(abssum_cert(&w).value >= brute - 1e-12);
        prop_assert!(sign_rounding_search(&w).unwrap().value <= brute + 1e-12);
    }
}

#[test]
fn null_spiked_wigner_matches_goe_scale() {
    let n = 400;
    let y = sample_spiked_wigner(n, 0.0, &PriorSpec::RademacherNormalized, true, RngStream::new(7, 0)).unwrap();
    let y = y.matrix().unwrap();
    let (mut off, mut diag) = (0.0, 0.0);
    for i in 0..n {
        diag += y.get(i, i).powi(2);
        for j in i + 1..n {
            off += y.get(i, j).powi(2);
        }
    }
    let m = (n * (n - 1) / 2) as f64;
    // n·Var ≈ 1 off the diagonal, 2 on it
    let off = n as f64 * off / m;
    let diag = diag / 2.0;
    assert!((off - 1.0).abs() < 4.0 * (2.0 / m).sqrt(), "off-diagonal n·Var = {off}");
    assert!((diag - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt(), "diagonal n·Var/2 = {diag}");
}

#[test]
fn unit_entry_and_normalized_goe_differ_by_sqrt_n() {
    let n = 50;
    let mut r1 = RngStream::new(11, 0).rng();
    let mut r2 = RngStream::new(11, 0).rng();
    let a = sample_goe(n, GoeScale::UnitEntry, &mut r1).unwrap();
    let b = sample_goe(n, GoeScale::Normalized, &mut r2).unwrap();
    let s = (n as f64).sqrt();
    for i in 0..n {
        for j in 0..n {
            assert!((a.get(i, j) - s * b.get(i, j)).abs() < 1e-12);
        }
    }
}

#[test]
fn subgaussian_tails_hold_for_rademacher_sums() {
    let n = 50;
    let mut rng = RngStream::new(5, 0).rng();
    for a in [0.5, 1.0, 2.0, 3.0] {
        let est = empirical_tail(|r| (0..n).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).sum::<f64>() / (n as f64).sqrt(), a, 100_000, &mut rng);
        assert!(est.mean <= subgaussian_tail_bound(1.0, a).unwrap() + 3.0 * est.stderr, "a={a}: {}", est.mean);
    }
}

#[test]
fn needle_free_energy_is_nonnegative() {
    let pts = needle_free_energy(10, &[0.3, 1.0, 2.5], 400, RngStream::new(3, 0)).unwrap();
    for p in pts {
        assert!(p.free_energy.mean + 3.0 * p.free_energy.stderr >= 0.0, "λ={}: {:?}", p.lambda, p.free_energy);
    }
}

#[test]
fn two_point_transition_matches_brute_force_argmax() {
    let ch = ScalarChannel::new(ScalarPrior::TwoPoint { p: 0.05 }).unwrap();
    // oracle: first λ on a fine grid where the global grid maximizer of F(λ,·) leaves 0
    let top = ch.second_moment();
    let argmax = |lambda: f64| {
        let pot = RsPotential { channel: &ch, lambda };
        (0..=1000).map(|i| top * i as f64 / 1000.0).max_by(|a, b| pot.value(*a).total_cmp(&pot.value(*b))).unwrap()
    };
    let lambdas: Vec<f64> = (0..=50).map(|i| 0.5 + 0.004 * i as f64).collect();
    let oracle = lambdas.iter().copied().find(|&l| argmax(l) > 0.05 * top).unwrap();
    // the curve bisects between coarse grid points on its own
    let coarse: Vec<f64> = (0..=10).map(|i| 0.5 + 0.02 * i as f64).collect();
    let curve = mmse_limit_curve(&ch, &coarse).unwrap();
    let lc = curve.lambda_c.expect("a jump in the grid");
    assert!((lc - oracle).abs() <= 0.0041, "curve λ_c {lc} vs grid argmax {oracle}");
}

#[test]
fn certified_overlap_pairs_are_rare() {
    // exponent ≤ −0.1 at n = 18 should leave forbidden pairs in at most ~5% of draws
    let (n, eps) = (18, 0.9);
    let rho = (1..=99).map(|i| i as f64 / 100.0).find(|&r| npp_first_moment_exponent(n, eps, r).unwrap().finite_n <= -0.1).unwrap();
    let draws = 60;
    let stream = RngStream::new(19, 0);
    let hits = (0..draws)
        .filter(|&i| {
            let x = sample_npp(n, &mut stream.child(i).rng()).unwrap();
            npp_exhaustive_scan(&x, eps).unwrap().forbidden_pairs(rho) > 0
        })
        .count();
    assert!(hits as f64 / draws as f64 <= 0.05 + 3.0 * (0.05 * 0.95 / draws as f64).sqrt(), "{hits}/{draws} at ρ={rho}");
}

#[test]
fn planted_value_matches_planting_strength() {
    for c in [0.0, 0.7, 1.5] {
        let rows = quiet_planting_experiment(200, &[c], 50, RngStream::new(23, 0)).unwrap();
        let v = rows[0].planted_value;
        assert!((v.mean - c).abs() <= 3.0 * v.stderr + 1e-3, "c={c}: {v:?}");
    }
}

#[test]
fn planted_sbm_without_signal_matches_null_edge_moments() {
    let (n, d) = (300, 5.0);
    let pairs = (n * (n - 1) / 2) as f64;
    let p = d / n as f64;
    let reps = 40;
    let count = |planted: bool, s: RngStream| -> Vec<f64> {
        (0..reps).map(|i| sample_sbm(n, 3, d, 0.0, planted, s.child(i)).unwrap().graph().unwrap().edges.len() as f64).collect()
    };
    for planted in [false, true] {
        let w = sclab::stats::welford(&count(planted, RngStream::new(41, planted as u64)));
        let var = pairs * p * (1.0 - p);
        assert!((w.mean() - pairs * p).abs() <= 3.0 * (var / reps as f64).sqrt(), "planted={planted}: {}", w.mean());
        // sample variance of a binomial count, 3σ with σ² ≈ 2var²/(reps−1)
        assert!((w.variance() - var).abs() <= 3.0 * var * (2.0 / (reps - 1) as f64).sqrt(), "planted={planted}: {}", w.variance());
    }
}

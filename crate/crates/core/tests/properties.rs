//! Property tests for the module invariants.

use ginedge::ensemble::{make_spec, sample_deformed, sample_ginibre, AtomMeasure};
use ginedge::geometry::{classify_edge, functionals, trace_boundary, SearchBox, EdgeClass, DEFAULT_TOL_B, DEFAULT_TOL_Q};
use ginedge::kernel::{kernel_diagonal, kernel_value, predicted_correlation, KernelModel};
use ginedge::linalg::{eigenvalues, qr_positive, schur, ComplexMatrix};
use ginedge::montecarlo::{density_histogram, run_edge_experiment, ExperimentConfig};
use ginedge::oracles::{verify_cone_integral, verify_hciz, Method};
use ginedge::rng::RngStream;
use ginedge::stats::{pearson, sup_relative_error};
use ginedge::Complex64;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_matrix(n: usize, seed: u64) -> ComplexMatrix {
    let mut rng = RngStream::new(seed, 0);
    sample_ginibre(n, &mut rng)
}

/// Largest gap under a greedy nearest-neighbour matching of two
/// eigenvalue multisets.
fn matched_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    // greedy nearest matching is exact for well separated spectra
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in a {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, y)| (k, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn schur_reconstructs(n in 1usize..40, seed in any::<u64>()) {
        let m = random_matrix(n, seed);
        let s = schur(&m).unwrap();
        let back = s.reconstruct();
        prop_assert!(back.sub(&m).unwrap().frobenius_norm() <= 1e-10 * m.frobenius_norm());
        prop_assert!(s.t.is_upper_triangular());
    }

    #[test]
    fn similarity_and_trace(n in 2usize..32, seed in any::<u64>()) {
        let m = random_matrix(n, seed);
        let (u, _) = qr_positive(&random_matrix(n, seed ^ 0x55)).unwrap();
        let conj = u.matmul(&m).unwrap().matmul(&u.adjoint()).unwrap();
        let e1 = eigenvalues(&m, 60, 1e-14).unwrap().eigenvalues;
        let e2 = eigenvalues(&conj, 60, 1e-14).unwrap().eigenvalues;
        prop_assert!(matched_distance(&e1, &e2) <= 1e-9 * m.frobenius_norm());
        let sum: Complex64 = e1.iter().sum();
        prop_assert!((sum - m.trace()).norm() <= 1e-9 * m.frobenius_norm());
    }

    #[test]
    fn triangular_eigenvalues_are_the_diagonal(n in 1usize..24, seed in any::<u64>()) {
        let mut m = random_matrix(n, seed);
        for j in 0..n {
            for i in j + 1..n {
                m[(i, j)] = c(0.0, 0.0);
            }
        }
        let e = eigenvalues(&m, 60, 1e-14).unwrap().eigenvalues;
        prop_assert!(matched_distance(&e, &m.diagonal()) <= 1e-12);
    }

    #[test]
    fn apportionment_conserves_rows(
        w in prop::collection::vec(0.05f64..1.0, 1..5),
        n in 40usize..400,
        r0 in 0usize..3,
        big_r0 in 0usize..3,
        extra in 0usize..3,
    ) {
        let total: f64 = w.iter().sum();
        let pairs: Vec<(Complex64, f64)> = w.iter().enumerate().map(|(k, x)| (c(k as f64, 0.5), x / total)).collect();
        // renormalise so the weights sum to one to machine precision
        let s: f64 = pairs.iter().map(|p| p.1).sum();
        let mut pairs = pairs;
        let last = pairs.len() - 1;
        pairs[last].1 += 1.0 - s;
        let nu = AtomMeasure::from_pairs(&pairs).unwrap();
        let a_t1: Vec<Complex64> = (0..extra).map(|k| c(10.0 + k as f64, 0.0)).collect();
        if let Ok(spec) = make_spec(nu, 1.0, n, r0, a_t1, big_r0, Some(c(-3.0, 0.0))) {
            prop_assert_eq!(spec.ranks.iter().sum::<usize>() + r0 + extra + big_r0, n);
            prop_assert_eq!(spec.x0_diagonal().unwrap().len(), n);
        }
    }

    #[test]
    fn sampling_is_determined_by_seed(seed in any::<u64>()) {
        let spec = make_spec(AtomMeasure::dirac(c(0.0, 0.0)), 1.0, 12, 0, vec![], 1, None).unwrap();
        let a = sample_deformed(&spec, &mut RngStream::new(seed, 3)).unwrap();
        let b = sample_deformed(&spec, &mut RngStream::new(seed, 3)).unwrap();
        prop_assert!(a == b);
    }

    #[test]
    fn gradient_identity(re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let nu = AtomMeasure::from_pairs(&[(c(1.0, 0.0), 0.3), (c(0.0, 2.0), 0.5), (c(-1.5, -0.5), 0.2)]).unwrap();
        let z = c(re, im);
        prop_assume!(nu.atoms().iter().all(|a| (a.a - z).norm() > 0.2));
        let h = 1e-5;
        let p = |w: Complex64| functionals(&nu, w).unwrap().p00;
        let gx = (p(z + c(h, 0.0)) - p(z - c(h, 0.0))) / (2.0 * h);
        let gy = (p(z + c(0.0, h)) - p(z - c(0.0, h))) / (2.0 * h);
        let f = functionals(&nu, z).unwrap();
        let want = c(2.0 * f.p0.re, 2.0 * f.p0.im);
        prop_assert!((c(gx, gy) - want).norm() <= 1e-6 * want.norm().max(1e-3));
    }

    #[test]
    fn scaling_covariance(sr in 0.3f64..3.0, si in -2.0f64..2.0, re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let s = c(sr, si);
        let pairs = [(c(1.0, 0.0), 0.4), (c(-0.5, 1.0), 0.6)];
        let nu = AtomMeasure::from_pairs(&pairs).unwrap();
        let scaled = AtomMeasure::from_pairs(&pairs.map(|(a, w)| (a * s, w))).unwrap();
        let z = c(re, im);
        prop_assume!(nu.atoms().iter().all(|a| (a.a - z).norm() > 0.1));
        let f = functionals(&nu, z).unwrap();
        let g = functionals(&scaled, z * s).unwrap();
        let m2 = s.norm_sqr();
        prop_assert!((g.p00 * m2 - f.p00).abs() <= 1e-12 * f.p00);
        prop_assert!((g.p1 * m2 * m2 - f.p1).abs() <= 1e-12 * f.p1);
        // P0 picks up s / |s|^4
        let expect = f.p0 * s / (m2 * m2);
        prop_assert!((g.p0 - expect).norm() <= 1e-12 * expect.norm().max(1e-300));
    }

    #[test]
    fn classification_ignores_atom_order(re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let a = [(c(1.0, 0.0), 0.5), (c(0.0, 2.0), 0.3), (c(-1.0, 0.5), 0.2)];
        let mut b = a;
        b.reverse();
        let nu_a = AtomMeasure::from_pairs(&a).unwrap();
        let nu_b = AtomMeasure::from_pairs(&b).unwrap();
        let z = c(re, im);
        let ea = classify_edge(&nu_a, 1.0, z, DEFAULT_TOL_B, DEFAULT_TOL_Q);
        let eb = classify_edge(&nu_b, 1.0, z, DEFAULT_TOL_B, DEFAULT_TOL_Q);
        match (ea, eb) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x.class, y.class);
                prop_assert!((x.p00 - y.p00).abs() <= 1e-13 * x.p00);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "one ordering errored"),
        }
    }

    #[test]
    fn kernel_is_hermitian_with_real_diagonal(
        n in 0usize..5,
        zr in -2.5f64..2.5, zi in -2.5f64..2.5,
        wr in -2.5f64..2.5, wi in -2.5f64..2.5,
    ) {
        let (z, w) = (c(zr, zi), c(wr, wi));
        let k = kernel_value(n as f64, z, w, 6.0).unwrap();
        let kt = kernel_value(n as f64, w, z, 6.0).unwrap();
        prop_assert!((k - kt.conj()).norm() <= 1e-12 * k.norm().max(1e-12));
        let d = kernel_value(n as f64, z, z, 6.0).unwrap();
        prop_assert!(d.im.abs() <= 1e-14 && d.re >= 0.0);
    }

    #[test]
    fn correlations_are_nonnegative(
        n in 0usize..4,
        pts in prop::collection::vec((-2.5f64..2.5, -2.5f64..2.5), 2..4),
    ) {
        let edge = classify_edge(&AtomMeasure::dirac(c(0.0, 0.0)), 1.0, c(1.0, 0.0), DEFAULT_TOL_B, DEFAULT_TOL_Q).unwrap();
        let model = KernelModel::with_index(n, edge, 1.0);
        let z: Vec<Complex64> = pts.iter().map(|&(a, b)| c(a, b)).collect();
        prop_assert!(predicted_correlation(&model, &z).unwrap() >= -1e-8);
        let mut rep = z.clone();
        rep.push(z[0]);
        prop_assert!(predicted_correlation(&model, &rep).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn sup_error_ignores_bin_order(v in prop::collection::vec((0.0f64..1.0, 0.01f64..1.0), 1..30), seed in any::<u64>()) {
        let emp: Vec<f64> = v.iter().map(|p| p.0).collect();
        let pre: Vec<f64> = v.iter().map(|p| p.1).collect();
        let mut idx: Vec<usize> = (0..v.len()).collect();
        let mut rng = RngStream::new(seed, 0);
        for i in (1..idx.len()).rev() {
            idx.swap(i, (rng.next_u64() % (i as u64 + 1)) as usize);
        }
        let e2: Vec<f64> = idx.iter().map(|&i| emp[i]).collect();
        let p2: Vec<f64> = idx.iter().map(|&i| pre[i]).collect();
        prop_assert_eq!(sup_relative_error(&emp, &pre).unwrap(), sup_relative_error(&e2, &p2).unwrap());
    }
}

#[test]
fn kernel_profiles_decrease() {
    for n in 0..5 {
        let mut prev = f64::INFINITY;
        let mut x = -5.0;
        while x <= 5.0 {
            let k = kernel_diagonal(n as f64, x).unwrap();
            // deep inside, K_0 equals 1/pi to the last bit
            let resolvable = 1.0 - std::f64::consts::PI * prev > 1e-13;
            assert!(k <= prev * (1.0 + 1e-15) && (k < prev || !resolvable), "n = {n}, x = {x}");
            prev = k;
            x += 0.05;
        }
    }
}

#[test]
fn ginibre_entries_are_gaussian() {
    let mut rng = RngStream::new(77, 0);
    let mut re: Vec<f64> = (0..100_000).map(|_| rng.complex_normal().re).collect();
    re.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
    let n = re.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in re.iter().enumerate() {
        let f = normal.cdf(*x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    // 1% critical value of the Kolmogorov distribution
    assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
}

#[test]
fn traced_vertices_solve_the_level_equation() {
    let nu = AtomMeasure::from_pairs(&[(c(1.0, 0.0), 0.5), (c(0.0, 2.0), 0.5)]).unwrap();
    let tau = 1.6;
    let curve = trace_boundary(&nu, tau, &SearchBox::enclosing(&nu, tau), 200).unwrap();
    for z in curve.vertices() {
        let f = functionals(&nu, z).unwrap();
        assert!((f.p00 - 1.0 / tau).abs() <= 1e-8, "{z}");
    }
    let e = classify_edge(&nu, tau, c(0.0, 0.0), DEFAULT_TOL_B, DEFAULT_TOL_Q).unwrap();
    assert_eq!(e.class, EdgeClass::Regular);
}

#[test]
fn empirical_profile_decreases_within_noise() {
    let nu = AtomMeasure::dirac(c(0.0, 0.0));
    let spec = make_spec(nu.clone(), 1.0, 64, 0, vec![], 2, None).unwrap();
    let edge = classify_edge(&nu, 1.0, c(1.0, 0.0), DEFAULT_TOL_B, DEFAULT_TOL_Q).unwrap();
    let mut cfg = ExperimentConfig::new(spec, edge, 1500, 5).unwrap();
    cfg.bins = (12, 12);
    let samples = run_edge_experiment(&cfg).unwrap();
    let hist = density_histogram(&samples, &cfg).unwrap();
    let p = &hist.profile;
    let (d, s) = (p.density(), p.density_error());
    let bins = p.bins_in(-2.0, 2.0);
    for w in bins.windows(2) {
        let (a, b) = (w[0], w[1]);
        assert!(d[b] <= d[a] + 2.0 * (s[a] * s[a] + s[b] * s[b]).sqrt(), "bins {a} -> {b}: {} {}", d[a], d[b]);
    }
    assert!((hist.total_mass() - samples.total_points() as f64 / 1500.0).abs() < 1e-12);
}

#[test]
fn pearson_scales_with_exposure() {
    // doubling exposure with proportional counts doubles the statistic
    let e = [12.0, 30.0, 25.0, 8.0, 40.0];
    let o = [15.0, 26.0, 27.0, 5.0, 44.0];
    let (s1, d1, _, _) = pearson(&o, &e, 5.0).unwrap();
    let e2: Vec<f64> = e.iter().map(|x| 2.0 * x).collect();
    let o2: Vec<f64> = o.iter().map(|x| 2.0 * x).collect();
    let (s2, d2, p2, _) = pearson(&o2, &e2, 5.0).unwrap();
    assert_eq!(d1, d2);
    assert!((s2 - 2.0 * s1).abs() < 1e-12 * s1);
    assert!((0.0..=1.0).contains(&p2));
}

#[test]
fn monte_carlo_verdicts_carry_errors() {
    for v in [
        verify_cone_integral(3, &[-1.0, -1.0], 20_000, 1).unwrap(),
        verify_hciz(&[0.0, 1.0], &[0.0, 1.0], 20_000, 2).unwrap(),
    ] {
        assert_eq!(v.method, Method::MonteCarlo);
        let se = v.mc_std_error.expect("standard error");
        let within = v.rel_error <= 3.0 * se / v.rhs.norm();
        assert_eq!(within, v.passed());
    }
}

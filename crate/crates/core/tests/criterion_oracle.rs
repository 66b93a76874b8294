mod oracle;

use mavdesign_core::{
    build_candidate, fisher_point, h_vector, info_matrix, l_matrix, phi_bayes, phi_local,
    variance_tau2, AveragingScheme, CandidateSubset, Design, MavProblem, Misspecification,
    ModelFamily, ParamVector, PriorSpec, TargetFunctional,
};
use nalgebra::{DMatrix, SymmetricEigen};
use oracle::{rel, space};

fn emax_prior(dsc: [f64; 2]) -> PriorSpec {
    PriorSpec::product_grid(
        &ParamVector::new(4.5, vec![1.81, 0.79], vec![0.0, 1.0]),
        &[(2, vec![0.79, 1.79, 2.79]), (4, vec![1.0, 2.0, 3.0])],
        Misspecification::from_scaled(&dsc, 150).unwrap(),
    )
    .unwrap()
}

fn xi_star_a() -> Design {
    Design::new(
        vec![0.0, 0.819, 1.665, 2.669, 8.0],
        vec![0.105, 0.138, 0.199, 0.273, 0.285],
        &space(),
    )
    .unwrap()
}

fn xi_1() -> Design {
    Design::uniform(vec![0.0, 2.0, 4.0, 6.0, 8.0], &space()).unwrap()
}

fn equal_scheme() -> AveragingScheme {
    AveragingScheme::new(oracle::all_subsets(), vec![0.25; 4]).unwrap()
}

#[test]
fn random_instances_match_dense_inverse_oracle() {
    for (seed, family) in [(1, ModelFamily::sigmoid_emax()), (2, ModelFamily::logistic4())] {
        let mut rng = oracle::rng(seed);
        for case in 0..50 {
            let inst = oracle::random_instance(&mut rng, &family);
            let prior = PriorSpec::single(inst.params.clone(), inst.misspec.clone());
            let report = MavProblem::new(&inst.scheme, &family, &prior, &inst.target)
                .unwrap()
                .evaluate(inst.design.points(), inst.design.weights())
                .unwrap();
            let o = oracle::local(
                &inst.scheme,
                &family,
                inst.design.points(),
                inst.design.weights(),
                &inst.params,
                inst.misspec.delta(),
                &inst.target,
            );
            // averaging can cancel the bias far below its natural size |c| |delta|,
            // which is the scale its rounding error lives on
            let c = mavdesign_core::target_grad_full(&inst.target, &family, &inst.params).unwrap();
            let c_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            let d_norm = inst.misspec.delta().iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = c_norm * d_norm;
            let ctx = format!("{} case {case}", family.name());
            assert!(
                rel(report.nu_by_atom[0], o.nu, scale) < 1e-10,
                "nu {ctx}: {} vs {} (tau {scale}, {:?}, {:?})",
                report.nu_by_atom[0],
                o.nu,
                inst.target.kind(),
                inst.scheme.candidates()
            );
            assert!(rel(report.tau2_by_atom[0], o.tau2, 0.0) < 1e-10, "tau2 {ctx}");
            assert!(rel(report.phi, o.phi(), 0.0) < 1e-10, "phi {ctx}");

            for (i, subset) in inst.scheme.candidates().iter().enumerate() {
                let cand = build_candidate(&family, subset).unwrap();
                let h = h_vector(&family, &cand, &inst.design, &inst.params, &inst.target).unwrap();
                let hn = o.h[i].amax();
                for (a, b) in h.iter().zip(o.h[i].iter()) {
                    assert!(
                        (a - b).abs() <= 1e-10 * hn,
                        "h {ctx} candidate {subset}: {a} vs {b}"
                    );
                }
                let l = l_matrix(&family, &cand, &inst.design, &inst.params).unwrap();
                let ln = o.l[i].amax().max(1.0);
                assert!((&l - &o.l[i]).amax() <= 1e-10 * ln, "L {ctx} candidate {subset}");
            }
        }
    }
}

#[test]
fn bayesian_criterion_matches_oracle_on_emax_prior() {
    let fam = ModelFamily::sigmoid_emax();
    let prior = emax_prior([0.1, 1.0]);
    assert_eq!(prior.len(), 9);
    let target = TargetFunctional::ed(0.6, space()).unwrap();
    for design in [xi_star_a(), xi_1()] {
        let report = phi_bayes(&equal_scheme(), &fam, &design, &prior, &target).unwrap();
        let (phi, nus, taus) = oracle::bayes(&equal_scheme(), &fam, &design, &prior, &target);
        assert!(rel(report.phi, phi, 0.0) < 1e-10);
        for a in 0..9 {
            assert!(rel(report.nu_by_atom[a], nus[a], 1e-8) < 1e-10);
            assert!(rel(report.tau2_by_atom[a], taus[a], 0.0) < 1e-10);
        }
        let weighted: f64 = report
            .nu_by_atom
            .iter()
            .zip(&report.tau2_by_atom)
            .map(|(n, t)| (n * n + t) / 9.0)
            .sum();
        assert!(rel(weighted, report.phi, 0.0) < 1e-12);
    }
}

/// Gauss-Hermite nodes and weights for `int exp(-t^2) f(t) dt` (Golub-Welsch).
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let w = (0..n).map(|i| sqrt_pi * eig.eigenvectors[(0, i)].powi(2)).collect();
    (eig.eigenvalues.iter().copied().collect(), w)
}

#[test]
fn fisher_point_matches_score_outer_product_quadrature() {
    let fam = ModelFamily::sigmoid_emax();
    let params = ParamVector::new(4.5, vec![1.81, 0.79], vec![0.0, 1.0]);
    let wide = build_candidate(&fam, &CandidateSubset::full(2)).unwrap();
    let x = 2.0;
    let analytic = fisher_point(&fam, &wide, x, &params).unwrap();

    // E[score score^T] for y ~ N(eta, s2), from the log density directly
    let (nodes, weights) = gauss_hermite(80);
    let s2 = params.sigma2;
    let eta = mavdesign_core::mean_eta(&fam, x, &params).unwrap();
    let grad = mavdesign_core::grad_eta(&fam, x, &params).unwrap();
    let mut quad = DMatrix::<f64>::zeros(5, 5);
    for (t, w) in nodes.iter().zip(&weights) {
        let y = eta + (2.0 * s2).sqrt() * t;
        let r = y - eta;
        let mut score = vec![-0.5 / s2 + r * r / (2.0 * s2 * s2)];
        score.extend(grad.iter().map(|g| r * g / s2));
        for a in 0..5 {
            for b in 0..5 {
                quad[(a, b)] += w / std::f64::consts::PI.sqrt() * score[a] * score[b];
            }
        }
    }
    for a in 0..5 {
        for b in 0..5 {
            let (u, v) = (analytic[(a, b)], quad[(a, b)]);
            // structural zeros are met to round-off of the largest entry
            let floor = 1e-12 * analytic.amax();
            assert!((u - v).abs() <= 1e-6 * u.abs() + floor, "({a},{b}) {u} vs {v}");
        }
    }
}

#[test]
fn fisher_point_closed_forms() {
    // mean gradient (1, 2) with unit variance: [[0.5]] + [[1, 2], [2, 4]]
    #[derive(Debug)]
    struct Affine;
    impl mavdesign_core::MeanModel for Affine {
        fn mean(&self, x: f64, t: &[f64], g: &[f64]) -> f64 {
            t[0] + 2.0 * g[0] * x
        }
    }
    let fam = ModelFamily::new("affine", 2, 1, vec![0.0], std::sync::Arc::new(Affine)).unwrap();
    let wide = build_candidate(&fam, &CandidateSubset::full(1)).unwrap();
    let m = fisher_point(&fam, &wide, 1.0, &ParamVector::new(1.0, vec![0.3], vec![0.7])).unwrap();
    let expect = DMatrix::from_row_slice(3, 3, &[0.5, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 2.0, 4.0]);
    assert!((m - expect).amax() < 1e-9);

    let emax = ModelFamily::sigmoid_emax();
    let wide = build_candidate(&emax, &CandidateSubset::full(2)).unwrap();
    let p = ParamVector::new(2.0, vec![1.81, 0.79], vec![0.1, 2.0]);
    let p3 = ParamVector { sigma2: 6.0, ..p.clone() };
    let a = fisher_point(&emax, &wide, 1.3, &p).unwrap();
    let b = fisher_point(&emax, &wide, 1.3, &p3).unwrap();
    assert!((b[(0, 0)] - a[(0, 0)] / 9.0).abs() < 1e-15);
    for r in 1..5 {
        for c in 1..5 {
            assert!((b[(r, c)] - a[(r, c)] / 3.0).abs() < 1e-14 * a[(r, c)].abs().max(1.0));
        }
    }
}

#[test]
fn information_is_additive_and_linear_in_the_design() {
    let fam = ModelFamily::logistic4();
    let params = ParamVector::new(4.5, vec![-1.73, 4.0], vec![0.0, 1.0]);
    let wide = build_candidate(&fam, &CandidateSubset::full(2)).unwrap();
    let d = Design::new(vec![0.0, 2.5, 4.3, 8.0], vec![0.1, 0.4, 0.3, 0.2], &space()).unwrap();
    let j = info_matrix(&fam, &wide, &d, &params).unwrap();
    let mut sum = DMatrix::zeros(5, 5);
    for (x, w) in d.iter() {
        sum += fisher_point(&fam, &wide, x, &params).unwrap() * w;
    }
    assert!((&j - &sum).amax() <= 1e-14 * j.amax());

    let one = Design::dirac(3.0, &space()).unwrap();
    assert_eq!(
        info_matrix(&fam, &wide, &one, &params).unwrap(),
        fisher_point(&fam, &wide, 3.0, &params).unwrap()
    );
    let half = Design::uniform(vec![1.0, 5.0], &space()).unwrap();
    let a = info_matrix(&fam, &wide, &Design::dirac(1.0, &space()).unwrap(), &params).unwrap();
    let b = info_matrix(&fam, &wide, &Design::dirac(5.0, &space()).unwrap(), &params).unwrap();
    let mix = info_matrix(&fam, &wide, &half, &params).unwrap();
    assert!((mix - (a + b) * 0.5).amax() < 1e-14);
}

#[test]
fn single_candidate_variance_reduces_to_inverse_information_form() {
    let fam = ModelFamily::sigmoid_emax();
    let target = TargetFunctional::ed(0.6, space()).unwrap();
    let params = ParamVector::new(4.5, vec![1.81, 0.79], vec![0.0, 1.0]);
    for s in oracle::all_subsets() {
        let cand = build_candidate(&fam, &s).unwrap();
        let scheme = AveragingScheme::new(vec![s.clone()], vec![1.0]).unwrap();
        let tau2 = variance_tau2(&scheme, &fam, &xi_1(), &params, &target).unwrap();
        let js = info_matrix(&fam, &cand, &xi_1(), &params).unwrap();
        let c = mavdesign_core::target_grad_sub(&target, &fam, &cand, &params).unwrap();
        let c = nalgebra::DVector::from_vec(c);
        let direct = (c.transpose() * js.try_inverse().unwrap() * &c)[(0, 0)];
        assert!(rel(tau2, direct, 0.0) < 1e-12, "{s}: {tau2} vs {direct}");
    }
}

#[test]
fn wide_model_is_unbiased_and_bias_is_linear_in_delta() {
    let fam = ModelFamily::sigmoid_emax();
    let target = TargetFunctional::ed(0.6, space()).unwrap();
    let params = ParamVector::new(4.5, vec![1.81, 0.79], vec![0.0, 1.0]);
    let wide = build_candidate(&fam, &CandidateSubset::full(2)).unwrap();
    let l = l_matrix(&fam, &wide, &xi_1(), &params).unwrap();
    assert_eq!(l.shape(), (5, 2));
    assert!(l.amax() < 1e-12);
    let narrow = build_candidate(&fam, &CandidateSubset::empty()).unwrap();
    assert_eq!(l_matrix(&fam, &narrow, &xi_1(), &params).unwrap().shape(), (5, 2));

    let m1 = Misspecification::from_scaled(&[0.1, 1.0], 150).unwrap();
    let nu1 = mavdesign_core::bias_nu(&equal_scheme(), &fam, &xi_1(), &params, &m1, &target).unwrap();
    let nu2 =
        mavdesign_core::bias_nu(&equal_scheme(), &fam, &xi_1(), &params, &m1.scale(2.0), &target)
            .unwrap();
    assert!(rel(nu2, 2.0 * nu1, 0.0) < 1e-12);
    let zero = Misspecification::zero(2, 150);
    assert_eq!(
        mavdesign_core::bias_nu(&equal_scheme(), &fam, &xi_1(), &params, &zero, &target).unwrap(),
        0.0
    );
    let phi = phi_local(&equal_scheme(), &fam, &xi_1(), &params, &m1, &target).unwrap();
    let tau2 = variance_tau2(&equal_scheme(), &fam, &xi_1(), &params, &target).unwrap();
    assert!(rel(phi, nu1 * nu1 + tau2, 0.0) < 1e-12);
}

#[test]
fn optimal_emax_design_beats_standard_designs() {
    let fam = ModelFamily::sigmoid_emax();
    let target = TargetFunctional::ed(0.6, space()).unwrap();
    let scheme = equal_scheme();
    let atom = ParamVector::new(4.5, vec![1.81, 0.79], vec![0.0, 1.0]);
    let m = Misspecification::from_scaled(&[0.1, 1.0], 150).unwrap();
    let local_a = phi_local(&scheme, &fam, &xi_star_a(), &atom, &m, &target).unwrap();
    let local_1 = phi_local(&scheme, &fam, &xi_1(), &atom, &m, &target).unwrap();
    assert!(local_a < local_1);

    let prior = emax_prior([0.1, 1.0]);
    let xi_2 = Design::uniform((0..9).map(f64::from).collect(), &space()).unwrap();
    let a = phi_bayes(&scheme, &fam, &xi_star_a(), &prior, &target).unwrap().phi;
    assert!(a < phi_bayes(&scheme, &fam, &xi_1(), &prior, &target).unwrap().phi);
    assert!(a < phi_bayes(&scheme, &fam, &xi_2, &prior, &target).unwrap().phi);
}

#[test]
fn prior_weights_enter_linearly() {
    let fam = ModelFamily::logistic4();
    let target = TargetFunctional::auc(0.0, 8.0, space()).unwrap();
    let m = Misspecification::from_scaled(&[0.015, -1.0 / 6.0], 150).unwrap();
    let p1 = ParamVector::new(4.5, vec![-1.73, 3.0], vec![0.0, 5.0 / 6.0]);
    let p2 = ParamVector::new(4.5, vec![-1.73, 5.0], vec![0.0, 7.0 / 6.0]);
    let d = xi_1();
    let s = equal_scheme();
    let one = |p: &ParamVector| phi_local(&s, &fam, &d, p, &m, &target).unwrap();
    let atoms = vec![
        mavdesign_core::PriorAtom { params: p1.clone(), weight: 0.5, misspec: None },
        mavdesign_core::PriorAtom { params: p2.clone(), weight: 0.5, misspec: None },
    ];
    let prior = PriorSpec::new(atoms, m.clone()).unwrap();
    let both = phi_bayes(&s, &fam, &d, &prior, &target).unwrap().phi;
    assert!(rel(both, 0.5 * (one(&p1) + one(&p2)), 0.0) < 1e-12);
    let single = phi_bayes(&s, &fam, &d, &PriorSpec::single(p1.clone(), m.clone()), &target).unwrap();
    assert_eq!(single.phi, one(&p1));
}

#[test]
fn criterion_ignores_the_intercept_value() {
    let sp = space();
    for fam in [ModelFamily::sigmoid_emax(), ModelFamily::logistic4()] {
        let base = if fam.name() == "sigmoid_emax" {
            ParamVector::new(4.5, vec![1.81, 1.79], vec![0.0, 2.0])
        } else {
            ParamVector::new(4.5, vec![-1.73, 4.0], vec![0.0, 1.0])
        };
        let shifted = ParamVector::new(base.sigma2, base.vartheta.clone(), vec![0.7, base.gamma[1]]);
        let m = Misspecification::from_scaled(&[0.1, 0.5], 150).unwrap();
        let d = Design::new(vec![0.0, 1.0, 2.5, 4.0, 6.0, 8.0], vec![0.2, 0.1, 0.2, 0.2, 0.1, 0.2], &sp)
            .unwrap();
        for target in [
            TargetFunctional::ed(0.6, sp).unwrap(),
            TargetFunctional::auc(0.0, 8.0, sp).unwrap(),
            TargetFunctional::point(3.0, sp).unwrap(),
        ] {
            let eval = |p: &ParamVector| {
                MavProblem::new(&equal_scheme(), &fam, &PriorSpec::single(p.clone(), m.clone()), &target)
                    .unwrap()
                    .evaluate(d.points(), d.weights())
                    .unwrap()
            };
            let (a, b) = (eval(&base), eval(&shifted));
            assert!(
                rel(a.phi, b.phi, 0.0) < 1e-12,
                "{} {:?}: {} vs {}",
                fam.name(),
                target.kind(),
                a.phi,
                b.phi
            );
            assert!(rel(a.nu_by_atom[0], b.nu_by_atom[0], 1e-9) < 1e-12);
            assert!(rel(a.tau2_by_atom[0], b.tau2_by_atom[0], 0.0) < 1e-12);
            for s in oracle::all_subsets() {
                let cand = build_candidate(&fam, &s).unwrap();
                let ja = info_matrix(&fam, &cand, &d, &base).unwrap();
                let jb = info_matrix(&fam, &cand, &d, &shifted).unwrap();
                assert!((&ja - &jb).amax() <= 1e-12 * ja.amax());
            }
        }
    }
}

/// The slope parameter rescales the mean gradient, so the criterion value is
/// not invariant in it; record by how much it moves on the Emax prior.
#[test]
fn criterion_value_depends_on_emax_slope_parameter() {
    let fam = ModelFamily::sigmoid_emax();
    let target = TargetFunctional::ed(0.6, space()).unwrap();
    let grid = [(2usize, vec![0.79, 1.79, 2.79]), (4, vec![1.0, 2.0, 3.0])];
    let m = Misspecification::from_scaled(&[0.1, 1.0], 150).unwrap();
    let phi_at = |t1: f64| {
        let nominal = ParamVector::new(4.5, vec![t1, 0.79], vec![0.0, 1.0]);
        let prior = PriorSpec::product_grid(&nominal, &grid, m.clone()).unwrap();
        phi_bayes(&equal_scheme(), &fam, &xi_star_a(), &prior, &target).unwrap().phi
    };
    let (a, b) = (phi_at(1.81), phi_at(3.62));
    println!("Phi(xi*_A): vartheta1 = 1.81 -> {a}, vartheta1 = 3.62 -> {b}");
    assert!(rel(a, b, 0.0) > 1e-3);
}

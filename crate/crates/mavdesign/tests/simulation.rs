use std::path::{Path, PathBuf};

use mavdesign::core::{efficient_round, eval_target, fit_candidates, mean_eta, ParamVector};
use mavdesign::report::mse_csv;
use mavdesign::scenario::Truth;
use mavdesign::simulation::{run_replicate, stream_rng};
use mavdesign::{
    gen_data, load_named_design, load_scenario, run_mse_study, Error, Method, NamedDesign,
    Scenario, StudySpec,
};
use rand::Rng;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn emax() -> (Scenario, Vec<NamedDesign>) {
    let sc = load_scenario(fixture("scenarios/emax_ed06.json")).unwrap();
    let designs = ["xi_star_A", "xi_1"]
        .iter()
        .map(|n| load_named_design(fixture(&format!("designs/{n}.json")), &sc.space).unwrap())
        .collect();
    (sc, designs)
}

fn spec<'a>(sc: &'a Scenario, designs: &'a [NamedDesign], threads: usize) -> StudySpec<'a> {
    StudySpec {
        scenario: sc,
        designs,
        methods: &Method::ALL,
        truths: &sc.truths,
        reps: 20,
        seed: 5,
        threads: Some(threads),
    }
}

#[test]
fn datasets_follow_the_rounded_design() {
    let (sc, designs) = emax();
    let d = &designs[0].design;
    let counts = efficient_round(d, sc.spec.n).unwrap();
    let data = gen_data(&sc.family, &sc.truths[0].params, &counts, d.points(), &mut stream_rng(1, 0, 0)).unwrap();
    assert_eq!(data.len(), 150);
    for (x, c) in d.points().iter().zip(&counts) {
        assert_eq!(data.x.iter().filter(|v| *v == x).count(), *c);
    }
    assert!(gen_data(&sc.family, &sc.truths[0].params, &counts[1..], d.points(), &mut stream_rng(1, 0, 0)).is_err());
}

#[test]
fn zero_variance_gives_the_mean_curve() {
    let (sc, designs) = emax();
    let truth = ParamVector { sigma2: 0.0, ..sc.truths[0].params.clone() };
    let d = &designs[0].design;
    let data = gen_data(&sc.family, &truth, &[2; 5], d.points(), &mut stream_rng(1, 0, 0)).unwrap();
    let curve = ParamVector { sigma2: 1.0, ..truth };
    for (x, y) in data.x.iter().zip(&data.y) {
        assert_eq!(*y, mean_eta(&sc.family, *x, &curve).unwrap());
    }
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let draw = |d, l| stream_rng(9, d, l).random::<u64>();
    assert_eq!(draw(0, 0), draw(0, 0));
    assert_ne!(draw(0, 0), draw(0, 1));
    assert_ne!(draw(0, 0), draw(1, 0));
    assert_ne!(stream_rng(9, 0, 0).random::<u64>(), stream_rng(10, 0, 0).random::<u64>());
}

#[test]
fn nearly_noiseless_data_recover_the_target() {
    let (sc, designs) = emax();
    let truth = ParamVector { sigma2: 1e-10, ..sc.truths[0].params.clone() };
    let mu = eval_target(&sc.target, &sc.family, &truth).unwrap();
    let d = &designs[1].design;
    let counts = efficient_round(d, sc.spec.n).unwrap();
    let data = gen_data(&sc.family, &truth, &counts, d.points(), &mut stream_rng(3, 0, 0)).unwrap();
    let fits = fit_candidates(&sc.family, &sc.candidates, &data, &sc.nominal);
    // the wide candidate contains the truth
    let wide = fits[3].as_ref().unwrap();
    assert!((eval_target(&sc.target, &sc.family, &wide.params).unwrap() - mu).abs() < 1e-4);
    // and it is the only one that fits, so both data-driven rules pick it
    let rep = run_replicate(&sc, &data, &[Method::SmoothAic, Method::AicSelect]);
    for est in rep.estimates {
        assert!((est.unwrap() - mu).abs() < 1e-4);
    }
}

#[test]
fn log_likelihood_grows_along_nesting() {
    let (sc, designs) = emax();
    let d = &designs[0].design;
    let counts = efficient_round(d, sc.spec.n).unwrap();
    for l in 0..10 {
        let data = gen_data(&sc.family, &sc.truths[0].params, &counts, d.points(), &mut stream_rng(4, 0, l)).unwrap();
        let fits: Vec<_> = fit_candidates(&sc.family, &sc.candidates, &data, &sc.nominal)
            .into_iter()
            .map(|f| f.unwrap())
            .collect();
        // candidates {}, {2}, {1}, {1, 2}
        for (small, big) in [(0, 1), (0, 2), (1, 3), (2, 3)] {
            assert!(fits[small].loglik <= fits[big].loglik + 1e-9, "replicate {l}: {small} vs {big}");
        }
    }
}

#[test]
fn study_is_deterministic_across_thread_counts() {
    let (sc, designs) = emax();
    let one = run_mse_study(&spec(&sc, &designs, 1)).unwrap();
    let three = run_mse_study(&spec(&sc, &designs, 3)).unwrap();
    assert_eq!(mse_csv(&one), mse_csv(&three));
    assert_eq!(one.len(), 6);
    assert_eq!(one[0].design, "xi_star_A");
    assert_eq!(one[0].method, Method::Fixed);
    assert_eq!(one[3].design, "xi_1");
    assert!(one.iter().all(|r| r.reps == 20 && r.mse.is_finite() && r.mse >= 0.0));
}

#[test]
fn every_truth_gets_its_own_rows() {
    let (sc, designs) = emax();
    let truths = vec![
        sc.truths[0].clone(),
        Truth { id: "flat_hill".into(), params: ParamVector::new(4.5, vec![1.81, 0.79], vec![0.0, 1.0]) },
    ];
    let rows = run_mse_study(&StudySpec { truths: &truths, reps: 5, methods: &[Method::Fixed], ..spec(&sc, &designs, 1) }).unwrap();
    let ids: Vec<&str> = rows.iter().map(|r| r.truth_id.as_str()).collect();
    assert_eq!(ids, ["emax", "emax", "flat_hill", "flat_hill"]);
}

#[test]
fn invalid_studies_are_rejected() {
    let (sc, designs) = emax();
    let base = spec(&sc, &designs, 1);
    for bad in [
        StudySpec { methods: &[], ..base.clone() },
        StudySpec { designs: &[], ..base.clone() },
        StudySpec { truths: &[], ..base.clone() },
        StudySpec { reps: 0, ..base.clone() },
        StudySpec { threads: Some(0), ..base.clone() },
    ] {
        assert!(matches!(run_mse_study(&bad), Err(Error::Invalid(_))));
    }
    assert!("ridge".parse::<Method>().is_err());
    assert_eq!(" smooth_aic".parse::<Method>().unwrap(), Method::SmoothAic);
}

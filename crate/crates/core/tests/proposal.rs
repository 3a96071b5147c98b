mod common;

use nalgebra::{DMatrix, DVector};
use vrpf::lgssm::{EmissionKind, LgssmParams};
use vrpf::proposal::ProposalParams;
use vrpf::rng::{self, Stream};

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn scalar(a: f64, c: f64) -> LgssmParams {
    LgssmParams::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, c)).unwrap()
}

#[test]
fn affine_reparameterization() {
    let model = scalar(0.0, 1.0);
    let phi = ProposalParams::prior(1);
    let mean = phi.mean(&model, &v(&[0.0]));
    assert_eq!(phi.transform(&mean, &[0.0])[0], 0.0);

    let phi = ProposalParams::new(vec![1.0], vec![4f64.ln()]).unwrap();
    let mean = phi.mean(&model, &v(&[0.0]));
    assert!((phi.transform(&mean, &[0.5])[0] - 2.0).abs() < 1e-15);
}

#[test]
fn sample_mean_matches_proposal_mean() {
    let mut e = Stream::new(1, rng::EMISSION_INIT);
    let model = LgssmParams::from_alpha(0.42, 2, 2, EmissionKind::Dense, &mut e).unwrap();
    let phi = ProposalParams::new(vec![0.5, -1.0], vec![0.3, -0.4]).unwrap();
    let zp = v(&[1.0, -2.0]);
    let target = phi.mean(&model, &zp);
    let mut s = Stream::new(9, rng::PROPOSAL);
    let draws: Vec<DVector<f64>> = (0..100_000).map(|_| phi.sample_reparam(&model, &zp, &mut s).0).collect();
    for d in 0..2 {
        let xs: Vec<f64> = draws.iter().map(|z| z[d]).collect();
        let (m, se) = common::mean_se(&xs);
        assert!((m - target[d]).abs() < 3.0 * se, "coord {d}: {m} vs {}", target[d]);
    }
}

#[test]
fn logpdf_examples_and_oracle() {
    let model = scalar(0.42, 1.0);
    let phi = ProposalParams::prior(1);
    let zp = v(&[0.7]);
    let at_mean = v(&[0.42 * 0.7]);
    assert!((phi.logpdf(&model, &at_mean, &zp) + 0.918939).abs() < 1e-6);

    let mut s = Stream::new(3, "oracle");
    let model2 = LgssmParams::new(DMatrix::zeros(2, 2), DMatrix::zeros(1, 2)).unwrap();
    let phi2 = ProposalParams::new(vec![0.3, -0.2], vec![0.5, -0.7]).unwrap();
    let z = v(&[0.1, 0.9]);
    let joint = phi2.logpdf(&model2, &z, &v(&[0.0, 0.0]));
    let m1 = scalar(0.0, 0.0);
    let p1 = ProposalParams::new(vec![0.3], vec![0.5]).unwrap();
    let p2 = ProposalParams::new(vec![-0.2], vec![-0.7]).unwrap();
    let split = p1.logpdf(&m1, &v(&[0.1]), &v(&[0.0])) + p2.logpdf(&m1, &v(&[0.9]), &v(&[0.0]));
    assert!((joint - split).abs() < 1e-12);

    for _ in 0..50 {
        let mut e = Stream::new(s.next_u64(), rng::EMISSION_INIT);
        let model = LgssmParams::from_alpha(0.5, 3, 2, EmissionKind::Dense, &mut e).unwrap();
        let mu: Vec<f64> = (0..3).map(|_| s.standard_normal()).collect();
        let lv: Vec<f64> = (0..3).map(|_| 0.5 * s.standard_normal()).collect();
        let phi = ProposalParams::new(mu.clone(), lv.clone()).unwrap();
        let zp: Vec<f64> = (0..3).map(|_| s.standard_normal()).collect();
        let z: Vec<f64> = (0..3).map(|_| s.standard_normal()).collect();
        let az = &model.transition * v(&zp);
        let mean: Vec<f64> = (0..3).map(|d| az[d] + mu[d]).collect();
        let var: Vec<f64> = lv.iter().map(|l| l.exp()).collect();
        let oracle = common::log_diag_normal(&z, &mean, &var);
        assert!((phi.logpdf(&model, &v(&z), &v(&zp)) - oracle).abs() < 1e-12);
    }
}

#[test]
fn f_statistic_examples() {
    let model = LgssmParams::new(DMatrix::from_element(2, 2, 0.3), DMatrix::zeros(1, 2)).unwrap();
    let phi = ProposalParams::prior(2);
    let x = v(&[0.8]);
    let expected = -common::log_normal(0.8, 0.0, 1.0);
    let mut s = Stream::new(2, "f");
    for _ in 0..20 {
        let z = v(&[s.standard_normal(), s.standard_normal()]);
        let zp = v(&[s.standard_normal(), s.standard_normal()]);
        assert!((phi.f_statistic(&model, &z, &zp, &x) - expected).abs() < 1e-12);
    }
    let model1 = scalar(0.0, 0.0);
    let f = ProposalParams::prior(1).f_statistic(&model1, &v(&[0.4]), &v(&[0.0]), &v(&[0.0]));
    assert!((f - 0.918939).abs() < 1e-6);

    let mut e = Stream::new(6, rng::EMISSION_INIT);
    let model = LgssmParams::from_alpha(0.42, 2, 3, EmissionKind::Dense, &mut e).unwrap();
    let phi = ProposalParams::new(vec![0.1, 0.2], vec![-0.3, 0.4]).unwrap();
    let (z, zp, x) = (v(&[0.5, -0.5]), v(&[1.0, 0.0]), v(&[0.2, 0.1, -0.3]));
    let composed = phi.logpdf(&model, &z, &zp) - model.incremental_joint_logpdf(&z, &zp, &x).unwrap();
    assert!((phi.f_statistic(&model, &z, &zp, &x) - composed).abs() < 1e-12);
}

#[test]
fn eps_form_matches_density() {
    let model = scalar(0.42, 1.0);
    let phi = ProposalParams::new(vec![0.3], vec![-0.5]).unwrap();
    let zp = v(&[0.9]);
    let mut s = Stream::new(4, rng::PROPOSAL);
    for _ in 0..20 {
        let (z, eps) = phi.sample_reparam(&model, &zp, &mut s);
        assert!((phi.logpdf_from_eps(&eps) - phi.logpdf(&model, &z, &zp)).abs() < 1e-12);
    }
}

#[test]
fn serialized_form_is_stable() {
    let phi = ProposalParams::new(vec![0.5], vec![-1.0]).unwrap();
    let json = serde_json::to_string(&phi).unwrap();
    assert_eq!(json, r#"{"mu":[0.5],"log_var":[-1.0]}"#);
    assert!(ProposalParams::new(vec![0.0], vec![f64::INFINITY]).is_err());
    assert!(ProposalParams::new(vec![0.0, 1.0], vec![0.0]).is_err());
}

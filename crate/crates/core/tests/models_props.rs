use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use sme_risk::dataset::Dataset;
use sme_risk::models::{
    fit_fann, fit_gbt, fit_linear, predict_proba, FannConfig, FeedforwardNet, FittedModel, GbtConfig,
    LinearBinaryModel, LinearConfig, Link, ModelDocument, Node, Predictor, Tree,
};
use sme_risk::seed;

fn dataset(x: Array2<f64>, y: Vec<u8>) -> Dataset {
    let p = x.ncols();
    Dataset::new(x, y, (0..p).map(|j| format!("x{j}")).collect()).unwrap()
}

fn random_data(n: usize, p: usize, s: u64) -> Dataset {
    let mut rng = seed::rng(s);
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let mut y: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.4)).collect();
    y[0] = 0;
    y[1] = 1;
    dataset(x, y)
}

/// Half-open regions `(lo, hi]` per feature along the path to every leaf.
fn leaf_regions(t: &Tree, p: usize) -> Vec<(usize, Vec<(f64, f64)>)> {
    fn go(t: &Tree, k: usize, bounds: Vec<(f64, f64)>, out: &mut Vec<(usize, Vec<(f64, f64)>)>) {
        match t.nodes[k] {
            Node::Leaf { .. } => out.push((k, bounds)),
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let mut l = bounds.clone();
                l[feature].1 = l[feature].1.min(threshold);
                go(t, left, l, out);
                let mut r = bounds;
                r[feature].0 = r[feature].0.max(threshold);
                go(t, right, r, out);
            }
        }
    }
    let mut out = Vec::new();
    go(t, 0, vec![(f64::NEG_INFINITY, f64::INFINITY); p], &mut out);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn gbt_training_loss_never_increases(
        n in 20usize..100, p in 1usize..5, depth in 1usize..5, s in any::<u64>(), eta in 0.05f64..1.0
    ) {
        let d = random_data(n, p, s);
        let cfg = GbtConfig { n_trees: 30, max_depth: depth, learning_rate: eta, ..GbtConfig::default() };
        let m = fit_gbt(&d, &cfg).unwrap();
        prop_assert_eq!(m.train_loss.len(), 31);
        for w in m.train_loss.windows(2) {
            prop_assert!(w[1] <= w[0], "{:?}", w);
        }
    }

    #[test]
    fn every_input_reaches_exactly_one_leaf(s in any::<u64>(), probe in prop::collection::vec(-3.0f64..3.0, 3)) {
        let d = random_data(60, 3, s);
        let m = fit_gbt(&d, &GbtConfig { n_trees: 5, max_depth: 4, ..GbtConfig::default() }).unwrap();
        let x = Array1::from(probe);
        for t in &m.trees {
            let regions = leaf_regions(t, 3);
            let hits: Vec<usize> = regions
                .iter()
                .filter(|(_, b)| b.iter().zip(x.iter()).all(|(&(lo, hi), &v)| v > lo && v <= hi))
                .map(|(k, _)| *k)
                .collect();
            prop_assert_eq!(hits.len(), 1);
            prop_assert_eq!(hits[0], t.leaf_index(x.view()));
        }
    }

    #[test]
    fn fann_gradient_matches_central_differences(s in any::<u64>()) {
        let d = random_data(25, 3, s);
        let mut net = FeedforwardNet::zeros(3, 4);
        let mut rng = seed::rng(s ^ 0x5eed);
        let theta: Vec<f64> = net.params().iter().map(|_| rng.random_range(-1.5..1.5)).collect();
        net.set_params(&theta);
        let (_, grad) = net.loss_and_gradient(d.features(), d.labels());
        let h = 1e-5;
        for k in 0..theta.len() {
            let mut up = theta.clone();
            up[k] += h;
            let mut down = theta.clone();
            down[k] -= h;
            net.set_params(&up);
            let lu = net.loss(d.features(), d.labels());
            net.set_params(&down);
            let ld = net.loss(d.features(), d.labels());
            let numeric = (lu - ld) / (2.0 * h);
            let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-6);
            prop_assert!(rel < 1e-4, "param {k}: analytic {} numeric {numeric}", grad[k]);
        }
    }

    #[test]
    fn probabilities_stay_in_unit_interval(s in any::<u64>(), scale in 1.0f64..1e6) {
        let d = random_data(80, 3, s);
        let models = vec![
            FittedModel::Linear(fit_linear(&d, Link::Logit, &LinearConfig::default()).unwrap()),
            FittedModel::Linear(fit_linear(&d, Link::Gev { xi: 0.25 }, &LinearConfig::default()).unwrap()),
            FittedModel::Trees(fit_gbt(&d, &GbtConfig { n_trees: 10, ..GbtConfig::default() }).unwrap()),
            FittedModel::Net(fit_fann(&d, &FannConfig { epochs: 5, ..FannConfig::default() }).unwrap()),
        ];
        let mut rng = seed::rng(s);
        let probe = Array2::from_shape_fn((50, 3), |_| scale * rng.sample::<f64, _>(StandardNormal));
        for m in &models {
            for v in predict_proba(m, probe.view()).unwrap() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn intercept_only_fits_invert_the_base_rate(k in 1usize..99, xi in -0.3f64..0.3) {
        let y: Vec<u8> = (0..100).map(|i| u8::from(i < k)).collect();
        let x = Array2::<f64>::zeros((100, 0));
        let rate = k as f64 / 100.0;
        for link in [Link::Logit, Link::Probit, Link::Gev { xi }] {
            let m = LinearBinaryModel::fit(x.view(), &y, link, &LinearConfig::default()).unwrap();
            prop_assert!((m.coefficients[0] - link.quantile(rate)).abs() < 1e-6);
            prop_assert!((link.inverse(m.coefficients[0]) - rate).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_log_likelihood_is_monotone(s in any::<u64>()) {
        let d = random_data(150, 4, s);
        for link in [Link::Logit, Link::Probit, Link::Gev { xi: -0.2 }] {
            let m = fit_linear(&d, link, &LinearConfig::default()).unwrap();
            for w in m.convergence.trace.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
        }
    }
}

#[test]
fn fits_are_bit_reproducible() {
    let d = random_data(120, 3, 11);
    let a = fit_fann(
        &d,
        &FannConfig {
            seed: 5,
            epochs: 20,
            ..FannConfig::default()
        },
    )
    .unwrap();
    let b = fit_fann(
        &d,
        &FannConfig {
            seed: 5,
            epochs: 20,
            ..FannConfig::default()
        },
    )
    .unwrap();
    assert_eq!(a, b);
    let c = fit_fann(
        &d,
        &FannConfig {
            seed: 6,
            epochs: 20,
            ..FannConfig::default()
        },
    )
    .unwrap();
    assert_ne!(a, c);
    let g = GbtConfig::default();
    assert_eq!(fit_gbt(&d, &g).unwrap(), fit_gbt(&d, &g).unwrap());
    let l = LinearConfig::default();
    assert_eq!(
        fit_linear(&d, Link::Probit, &l).unwrap(),
        fit_linear(&d, Link::Probit, &l).unwrap()
    );
}

#[test]
fn fann_separates_well_separated_gaussians() {
    let mut rng = seed::rng(3);
    let n = 400;
    let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    // Class means 4 sd apart along both axes.
    let x = Array2::from_shape_fn((n, 2), |(i, _)| {
        let mu = if y[i] == 1 { 2.0 } else { -2.0 };
        mu + rng.sample::<f64, _>(StandardNormal)
    });
    let d = dataset(x, y.clone());
    let cfg = FannConfig {
        hidden_size: 8,
        learning_rate: 0.1,
        epochs: 100,
        batch_size: 16,
        seed: 1,
    };
    let net = fit_fann(&d, &cfg).unwrap();
    let p = net.predict_rows(d.features());
    let correct = p.iter().zip(&y).filter(|(&p, &y)| (p >= 0.5) == (y == 1)).count();
    assert!(correct as f64 / n as f64 >= 0.99, "{correct}/{n}");
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

#[test]
fn probit_and_logit_rank_nearly_identically() {
    let mut rng = seed::rng(17);
    let n = 2000;
    let x = Array2::from_shape_fn((n, 3), |_| rng.sample::<f64, _>(StandardNormal));
    let y: Vec<u8> = (0..n)
        .map(|i| {
            let eta = -0.5 + x[[i, 0]] - 0.7 * x[[i, 1]] + 0.3 * x[[i, 2]];
            u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
        })
        .collect();
    let d = dataset(x, y);
    let a = fit_linear(&d, Link::Logit, &LinearConfig::default()).unwrap();
    let b = fit_linear(&d, Link::Probit, &LinearConfig::default()).unwrap();
    let (ra, rb) = (
        ranks(&a.predict_rows(d.features())),
        ranks(&b.predict_rows(d.features())),
    );
    let m = (n - 1) as f64 / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - m) * (y - m)).sum();
    let var: f64 = ra.iter().map(|x| (x - m).powi(2)).sum();
    assert!(cov / var > 0.99, "spearman {}", cov / var);
}

#[test]
fn zero_coefficient_logit_predicts_one_half() {
    let m = LinearBinaryModel {
        link: Link::Logit,
        coefficients: vec![0.0; 4],
        convergence: sme_risk::models::Convergence {
            iterations: 0,
            log_likelihood: 0.0,
            trace: vec![],
            ridge_used: false,
            converged: true,
        },
    };
    let x = Array2::from_shape_fn((5, 3), |(i, j)| (i * j) as f64 - 3.0);
    assert!(m.predict_rows(x.view()).iter().all(|&p| p == 0.5));
}

#[test]
fn model_documents_round_trip_bit_identically() {
    let d = random_data(100, 3, 21);
    let models = vec![
        FittedModel::Linear(fit_linear(&d, Link::Gev { xi: 0.1 }, &LinearConfig::default()).unwrap()),
        FittedModel::Trees(fit_gbt(&d, &GbtConfig::default()).unwrap()),
        FittedModel::Net(
            fit_fann(
                &d,
                &FannConfig {
                    epochs: 10,
                    ..FannConfig::default()
                },
            )
            .unwrap(),
        ),
    ];
    for m in models {
        let doc = ModelDocument::new(m, d.feature_names().to_vec(), vec![], serde_json::json!({}), 0);
        let back = ModelDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(back, doc);
        assert_eq!(
            back.model.predict_rows(d.features()),
            doc.model.predict_rows(d.features())
        );
    }
    let bumped = r#"{"format_version": 9, "family": "lr", "feature_names": [], "log_transformed": [],
        "training_config": {}, "seed": 0, "model": {"kind": "net"}}"#;
    assert!(ModelDocument::from_json(bumped).is_err());
}

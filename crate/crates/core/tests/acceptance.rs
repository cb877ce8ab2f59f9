//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p sme-risk --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use sme_risk::dataset::{synthesize_firms, ClassMoments, Dataset, LabelMechanism};
use sme_risk::interpret::{ale_curve, compare_ale_pd, shapley_exact, shapley_sampling};
use sme_risk::metrics::{auc, h_measure, weighted_error_points, Severity};
use sme_risk::models::{
    fit_gbt, fit_linear, FeedforwardNet, FnPredictor, GbtConfig, LinearBinaryModel, LinearConfig, Link, Predictor,
};
use sme_risk::pipeline::{run_experiment, ExperimentConfig, ExperimentReport};
use sme_risk::{seed, ModelFamily};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.1?}, limit {limit:?}"))
}

fn dataset(x: Array2<f64>, y: Vec<u8>) -> Dataset {
    let p = x.ncols();
    Dataset::new(x, y, (0..p).map(|j| format!("x{j}")).collect()).unwrap()
}

fn gaussian(n: usize, p: usize, s: u64) -> Array2<f64> {
    let mut rng = seed::rng(s);
    Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal))
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn c1_generator() -> Outcome {
    let start = Instant::now();
    let m = ClassMoments::italian_smes();
    let n = 100_000;
    let d = synthesize_firms(&m, n, 2024, &LabelMechanism::default()).map_err(|e| e.to_string())?;
    within_time(start, Duration::from_secs(30))?;
    let pos = d.positives() as f64;
    let rate = pos / n as f64;
    let sigma = (m.default_rate * (1.0 - m.default_rate) / n as f64).sqrt();
    ensure((rate - m.default_rate).abs() <= 3.0 * sigma, || {
        format!("default rate {rate} vs {} (3σ = {})", m.default_rate, 3.0 * sigma)
    })?;
    let mut worst = 0.0f64;
    for (j, fm) in m.features.iter().enumerate() {
        for (class, target) in [(0u8, fm.survived_mean), (1u8, fm.failed_mean)] {
            let vals: Vec<f64> = (0..n)
                .filter(|&i| d.labels()[i] == class)
                .map(|i| d.features()[[i, j]])
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let abs = (mean - target).abs();
            let ok = abs <= 0.05 || abs <= 0.05 * target.abs();
            ensure(ok, || format!("{} class {class}: mean {mean} vs {target}", fm.name))?;
            worst = worst.max(abs / target.abs().max(1.0));
        }
    }
    Ok(format!(
        "rate {rate:.5}, worst mean error {worst:.2e}, {:.1?}",
        start.elapsed()
    ))
}

fn c2_ale() -> Outcome {
    let start = Instant::now();
    let n = 100_000;
    let beta = [1.5, -0.7, 3.0];
    let mut rng = seed::rng(7);
    let mut x = Array2::from_shape_fn((n, 4), |_| rng.random::<f64>());
    x.column_mut(3).fill(0.25);
    let d = dataset(x, vec![0; n]);
    let f = FnPredictor::new(4, move |r: ArrayView1<'_, f64>| {
        beta[0] * r[0] + beta[1] * r[1] + beta[2] * r[2] + r[3]
    });
    let mut worst = 0.0f64;
    for (j, &b) in beta.iter().enumerate() {
        let c = ale_curve(&f, &d, j, 40).map_err(|e| e.to_string())?;
        ensure(c.centering_residual().abs() < 1e-10, || {
            format!("feature {j} residual {}", c.centering_residual())
        })?;
        // Least-squares slope of effect on bin midpoint.
        let mids = c.midpoints();
        let k = mids.len() as f64;
        let (mx, my) = (mids.iter().sum::<f64>() / k, c.effects.iter().sum::<f64>() / k);
        let sxy: f64 = mids.iter().zip(&c.effects).map(|(a, e)| (a - mx) * (e - my)).sum();
        let sxx: f64 = mids.iter().map(|a| (a - mx).powi(2)).sum();
        let rel = (sxy / sxx - b).abs() / b.abs();
        ensure(rel < 1e-2, || format!("feature {j}: slope {} vs {b}", sxy / sxx))?;
        worst = worst.max(rel);
    }
    let flat = ale_curve(&f, &d, 3, 40).map_err(|e| e.to_string())?;
    ensure(flat.effects.iter().all(|&e| e == 0.0), || {
        format!("constant feature effects {:?}", flat.effects)
    })?;
    within_time(start, Duration::from_secs(10))?;
    Ok(format!(
        "worst relative slope error {worst:.1e}, {:.1?}",
        start.elapsed()
    ))
}

fn c3_ale_vs_pd() -> Outcome {
    let n = 10_000;
    let f = FnPredictor::new(2, |x: ArrayView1<'_, f64>| x[0] * x[1]);
    let indep = gaussian(n, 2, 31);
    let a = compare_ale_pd(&f, &dataset(indep.clone(), vec![0; n]), 0, 20, 200, 5).map_err(|e| e.to_string())?;
    ensure(a.max_z() <= 3.0, || format!("independent: max z {}", a.max_z()))?;
    let mut corr = indep;
    let rho: f64 = 0.99;
    for i in 0..n {
        corr[[i, 1]] = rho * corr[[i, 0]] + (1.0 - rho * rho).sqrt() * corr[[i, 1]];
    }
    let b = compare_ale_pd(&f, &dataset(corr, vec![0; n]), 0, 20, 200, 5).map_err(|e| e.to_string())?;
    ensure(b.max_z() > 5.0, || format!("correlated: max z {}", b.max_z()))?;
    Ok(format!(
        "max z independent {:.2}, correlated {:.1}",
        a.max_z(),
        b.max_z()
    ))
}

/// Random interaction model in which feature `p - 1` is unused and
/// features 0 and 1 are exchangeable.
fn symmetric_model(p: usize, s: u64) -> impl Predictor {
    let mut rng = seed::rng(s);
    let q = p - 1;
    let a: Vec<f64> = (0..q).map(|_| rng.random_range(-2.0..2.0)).collect();
    let b: Vec<f64> = (0..q * q).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h = move |x: &[f64]| {
        let mut eta = 0.0;
        for i in 0..q {
            eta += a[i] * x[i];
            for j in i + 1..q {
                eta += b[i * q + j] * x[i] * x[j];
            }
        }
        sigmoid(eta)
    };
    FnPredictor::new(p, move |x: ArrayView1<'_, f64>| {
        let mut v: Vec<f64> = x.iter().copied().collect();
        let direct = h(&v);
        v.swap(0, 1);
        direct + h(&v)
    })
}

fn c4_shapley() -> Outcome {
    let mut worst_eff = 0.0f64;
    let mut worst_sym = 0.0f64;
    for case in 0..200u64 {
        let p = 3 + (case % 7) as usize;
        let f = symmetric_model(p, case);
        let mut bg = gaussian(15, p, 1000 + case);
        let swapped = {
            let mut t = bg.clone();
            for i in 0..t.nrows() {
                t.swap([i, 0], [i, 1]);
            }
            t
        };
        bg = ndarray::concatenate(ndarray::Axis(0), &[bg.view(), swapped.view()]).unwrap();
        let mut x = gaussian(1, p, 5000 + case).row(0).to_owned();
        x[1] = x[0];
        let (phi, base) = shapley_exact(&f, bg.view(), x.view()).map_err(|e| e.to_string())?;
        let eff = (phi.iter().sum::<f64>() - (f.predict_row(x.view()) - base)).abs();
        ensure(eff < 1e-8, || format!("case {case}: efficiency gap {eff}"))?;
        ensure(phi[p - 1] == 0.0, || {
            format!("case {case}: null player got {}", phi[p - 1])
        })?;
        let sym = (phi[0] - phi[1]).abs();
        ensure(sym < 1e-10, || format!("case {case}: symmetry gap {sym}"))?;
        worst_eff = worst_eff.max(eff);
        worst_sym = worst_sym.max(sym);
    }

    let f = symmetric_model(9, 77);
    let bg = gaussian(50, 9, 78);
    let x = gaussian(1, 9, 79).row(0).to_owned();
    let (exact, _) = shapley_exact(&f, bg.view(), x.view()).map_err(|e| e.to_string())?;
    let (approx, _) = shapley_sampling(&f, bg.view(), x.view(), 2000, 80).map_err(|e| e.to_string())?;
    let dev = exact
        .iter()
        .zip(&approx)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(dev < 0.01, || format!("sampling deviation {dev}"))?;
    Ok(format!(
        "efficiency {worst_eff:.1e}, symmetry {worst_sym:.1e}, sampling max dev {dev:.4}"
    ))
}

fn brute_auc(s: &[f64], y: &[u8]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        if y[i] != 1 {
            continue;
        }
        for j in 0..s.len() {
            if y[j] == 0 {
                pairs += 1.0;
                if s[i] > s[j] {
                    num += 1.0;
                } else if s[i] == s[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

fn random_instance(rng: &mut seed::Rng, max_n: usize, levels: u32) -> (Vec<f64>, Vec<u8>) {
    let n = rng.random_range(2..=max_n);
    let s: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
        .collect();
    let mut y: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.3)).collect();
    y[0] = 0;
    y[1] = 1;
    (s, y)
}

fn c5_auc() -> Outcome {
    let mut rng = seed::rng(55);
    for case in 0..1000 {
        let levels = rng.random_range(2..200);
        let (s, y) = random_instance(&mut rng, 1000, levels);
        let a = auc(&s, &y).map_err(|e| e.to_string())?;
        let b = brute_auc(&s, &y);
        ensure(a == b, || format!("case {case}: {a} vs brute force {b}"))?;
    }
    Ok("1000 instances exact".into())
}

/// Midpoint rule on an m-point cost grid, minimum over all operating points.
fn grid_h(s: &[f64], y: &[u8], m: usize) -> f64 {
    use statrs::distribution::{Beta, Continuous};
    let pts = weighted_error_points(s, y);
    let pi1 = y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64;
    let pi0 = 1.0 - pi1;
    let beta = Beta::new(2.0, 2.0).unwrap();
    let (mut l, mut lmax) = (0.0, 0.0);
    for k in 0..m {
        let c = (k as f64 + 0.5) / m as f64;
        let w = beta.pdf(c);
        l += w * pts
            .iter()
            .map(|&(a, b)| c * a + (1.0 - c) * b)
            .fold(f64::INFINITY, f64::min);
        lmax += w * (c * pi0).min((1.0 - c) * pi1);
    }
    1.0 - l / lmax
}

fn c6_h_measure() -> Outcome {
    let mut rng = seed::rng(66);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let (s, y) = random_instance(&mut rng, 200, 50);
        let h = h_measure(&s, &y, Severity::default()).map_err(|e| e.to_string())?;
        let g = grid_h(&s, &y, 100_000);
        ensure((h - g).abs() < 1e-4, || format!("case {case}: {h} vs grid {g}"))?;
        worst = worst.max((h - g).abs());
    }
    let y = [0u8, 0, 1, 0, 1, 1];
    let perfect = h_measure(&[0.1, 0.2, 0.7, 0.3, 0.8, 0.9], &y, Severity::default()).map_err(|e| e.to_string())?;
    ensure((perfect - 1.0).abs() < 1e-12, || {
        format!("perfect classifier {perfect}")
    })?;
    let constant = h_measure(&[0.5; 6], &y, Severity::default()).map_err(|e| e.to_string())?;
    ensure(constant.abs() < 1e-12, || format!("constant scores {constant}"))?;
    Ok(format!("max |H - grid| {worst:.1e}"))
}

fn c7_models() -> Outcome {
    // FANN gradient against central differences.
    let mut worst_grad = 0.0f64;
    for case in 0..20u64 {
        let x = gaussian(30, 3, 700 + case);
        let y: Vec<u8> = (0..30).map(|i| u8::from(x[[i, 0]] + 0.3 * x[[i, 2]] > 0.0)).collect();
        let mut net = FeedforwardNet::zeros(3, 4);
        let mut rng = seed::rng(case);
        let theta: Vec<f64> = net.params().iter().map(|_| rng.random_range(-1.5..1.5)).collect();
        net.set_params(&theta);
        let (_, grad) = net.loss_and_gradient(x.view(), &y);
        let h = 1e-5;
        for k in 0..theta.len() {
            let (mut up, mut down) = (theta.clone(), theta.clone());
            up[k] += h;
            down[k] -= h;
            net.set_params(&up);
            let lu = net.loss(x.view(), &y);
            net.set_params(&down);
            let ld = net.loss(x.view(), &y);
            let numeric = (lu - ld) / (2.0 * h);
            let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-6);
            worst_grad = worst_grad.max(rel);
        }
    }
    ensure(worst_grad < 1e-4, || format!("gradient relative error {worst_grad}"))?;

    // GBT training loss per round.
    for case in 0..50u64 {
        let mut rng = seed::rng(900 + case);
        let n = rng.random_range(30..300);
        let p = rng.random_range(1..6);
        let x = gaussian(n, p, 950 + case);
        let mut y: Vec<u8> = (0..n)
            .map(|i| u8::from(x[[i, 0]] + rng.random::<f64>() > 0.8))
            .collect();
        y[0] = 0;
        y[1] = 1;
        let cfg = GbtConfig {
            n_trees: 40,
            max_depth: rng.random_range(1..5),
            learning_rate: rng.random_range(0.05..0.8),
            ..GbtConfig::default()
        };
        let m = fit_gbt(&dataset(x, y), &cfg).map_err(|e| e.to_string())?;
        ensure(m.train_loss.windows(2).all(|w| w[1] <= w[0]), || {
            format!("dataset {case}: loss increased")
        })?;
    }

    // Intercept-only fits.
    let mut worst_int = 0.0f64;
    for k in [1usize, 17, 172, 500, 999] {
        let y: Vec<u8> = (0..1000).map(|i| u8::from(i < k)).collect();
        let rate = k as f64 / 1000.0;
        for link in [
            Link::Logit,
            Link::Probit,
            Link::Gev { xi: -0.25 },
            Link::Gev { xi: 0.0 },
            Link::Gev { xi: 0.25 },
        ] {
            let m = LinearBinaryModel::fit(
                Array2::<f64>::zeros((1000, 0)).view(),
                &y,
                link,
                &LinearConfig::default(),
            )
            .map_err(|e| e.to_string())?;
            let err = (link.inverse(m.coefficients[0]) - rate).abs();
            ensure(err < 1e-6, || format!("{link:?} rate {rate}: {err}"))?;
            worst_int = worst_int.max(err);
        }
    }

    // Coefficient recovery from simulated data.
    let beta = [0.5, -1.2];
    let n = 50_000;
    let mut worst_beta = 0.0f64;
    let links = [
        Link::Logit,
        Link::Probit,
        Link::Gev { xi: -0.2 },
        Link::Gev { xi: 0.0 },
        Link::Gev { xi: 0.2 },
    ];
    for (i, link) in links.into_iter().enumerate() {
        // Clipped so every true linear predictor lies inside the GEV support,
        // which the fitted model is required to respect on all rows.
        let x = gaussian(n, 1, 4000 + i as u64).mapv(|v| v.clamp(-3.5, 3.5));
        let mut rng = seed::rng(4100 + i as u64);
        let y: Vec<u8> = (0..n)
            .map(|r| u8::from(rng.random::<f64>() < link.inverse(beta[0] + beta[1] * x[[r, 0]])))
            .collect();
        let m = fit_linear(&dataset(x, y), link, &LinearConfig::default()).map_err(|e| e.to_string())?;
        for (b, t) in m.coefficients.iter().zip(beta) {
            ensure((b - t).abs() < 0.05, || {
                format!("{link:?}: {:?} vs {beta:?}", m.coefficients)
            })?;
            worst_beta = worst_beta.max((b - t).abs());
        }
    }
    Ok(format!(
        "gradient {worst_grad:.1e}, intercept {worst_int:.1e}, beta {worst_beta:.3}, 50 GBT fits monotone"
    ))
}

static RUN: OnceLock<Result<(ExperimentReport, Duration), String>> = OnceLock::new();

fn default_run() -> Result<&'static (ExperimentReport, Duration), String> {
    RUN.get_or_init(|| {
        let start = Instant::now();
        run_experiment(&ExperimentConfig::default())
            .map(|r| (r, start.elapsed()))
            .map_err(|e| e.to_string())
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn c8_pipeline() -> Outcome {
    let (r, took) = default_run()?;
    ensure(*took < Duration::from_secs(600), || format!("pipeline took {took:?}"))?;
    for m in &r.models {
        ensure(m.test.auc >= 0.75, || format!("{} test AUC {}", m.family, m.test.auc))?;
    }
    let get = |f| r.model(f).ok_or_else(|| format!("{f} missing from report"));
    let (gbt, lr) = (get(ModelFamily::Gbt)?, get(ModelFamily::Logit)?);
    ensure(gbt.test.auc >= lr.test.auc, || {
        format!("GBT AUC {} < LR AUC {}", gbt.test.auc, lr.test.auc)
    })?;

    let curve = gbt
        .ale
        .iter()
        .find(|c| c.feature_name == "profit_margin")
        .ok_or("no profit_margin ALE")?;
    // Bin containing zero, and the largest drop between adjacent bins.
    let k0 = curve.boundaries.partition_point(|&z| z < 0.0).clamp(1, curve.bins()) - 1;
    let e = &curve.effects;
    let (drop_at, drop) = (0..e.len() - 1)
        .map(|k| (k, e[k + 1] - e[k]))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or("profit_margin ALE has a single bin")?;
    ensure(drop < 0.0 && (drop_at + 1 == k0 || drop_at == k0), || {
        format!(
            "largest drop {drop} between bins {drop_at} and {}, zero in bin {k0}",
            drop_at + 1
        )
    })?;
    let across = e[k0.saturating_sub(1)] - e[(k0 + 1).min(e.len() - 1)];
    ensure(across > 0.0, || format!("no decrease across zero: {across}"))?;

    let shap = gbt.shapley.as_ref().ok_or("no GBT Shapley summary")?;
    let top = &shap.feature_names[shap.ranking[0]];
    ensure(top == "profit_margin", || format!("GBT Shapley ranks {top} first"))?;

    let aucs: Vec<String> = r
        .models
        .iter()
        .map(|m| format!("{} {:.3}", m.family, m.test.auc))
        .collect();
    Ok(format!("AUC {}; step {drop:.3} at zero; {took:.1?}", aucs.join(", ")))
}

fn c9_determinism() -> Outcome {
    let (first, _) = default_run()?;
    let second = run_experiment(&ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let a = first.to_json_without_timestamps().map_err(|e| e.to_string())?;
    let b = second.to_json_without_timestamps().map_err(|e| e.to_string())?;
    ensure(a == b, || "reports differ outside timestamps".into())?;
    Ok(format!("{} bytes identical", a.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("generator fidelity", c1_generator),
        ("ALE correctness", c2_ale),
        ("ALE vs PD", c3_ale_vs_pd),
        ("Shapley axioms", c4_shapley),
        ("AUC oracle", c5_auc),
        ("H-measure oracle", c6_h_measure),
        ("model numerics", c7_models),
        ("pipeline reproduction", c8_pipeline),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {}: {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}: {name} ({why})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p irslab-cli --test acceptance`.

use irslab::channel::{dft, sample_channel, CirMatrix};
use irslab::estimator::{forward, gradient, loss, nmse, progressive_train, reconstruct_autocorrelation, NnModel, TrainConfig};
use irslab::evaluation::{
    kkt_residual, rate_from_gains, water_filling, Allocation, Axis, MeasurementSpec, Metric,
    RateConfig, SweepSpec, run_sweep,
};
use irslab::linalg::{quad_form, CMatrix};
use irslab::measurement::{random_reflection, subset_arsp, Measurement, MeasurementMode, MeasurementSet, RsPattern};
use irslab::optimizer::{exhaustive_optimum, optimize_reflection, Method, OptimizerConfig};
use irslab::rng::{complex_normal, SeedTree};
use irslab::{Scenario, C64};
use irslab_cli::{cmd_sweep, ExperimentConfig};
use rand::Rng;
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn planted(rank: usize, dim: usize, variance: f64, rng: &mut impl Rng) -> CMatrix {
    let a = CMatrix::from_fn(dim, rank, |_, _| complex_normal(rng, variance));
    &a * a.adjoint()
}

fn c1_subset_lemma() -> Outcome {
    let mut rng = SeedTree::new(101).stream("c1", 0);
    let (m, m0) = (128, 64);
    let pattern = RsPattern::new(m, m0, 1).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(1..=6);
        let n = rng.random_range(1..=16);
        let g = CMatrix::from_fn(m, n + 1, |r, _| if r < k { complex_normal(&mut rng, 1.0) } else { C64::new(0.0, 0.0) });
        let cir = CirMatrix::from_matrix(g);
        let v = random_reflection(n, 2, &mut rng).unwrap();
        let (p, sigma2) = (1.0, 0.1);
        let subset = subset_arsp(&v, &cir, &pattern, p, sigma2).unwrap();
        // Full-band ARSP through the M-point DFT of the superimposed CIR.
        let h = dft(&cir.apply(v.extended()));
        let full = p / (m * m) as f64 * h.iter().map(|z| z.norm_sqr()).sum::<f64>() + sigma2;
        worst = worst.max((subset - full).abs() / full);
    }
    outcome(worst < 1e-10, format!("max relative deviation {worst:.2e} over 100 instances (tol 1e-10)"))
}

fn c2_gradient() -> Outcome {
    let mut rng = SeedTree::new(102).stream("c2", 0);
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for _ in 0..50 {
        let n = rng.random_range(1..=8);
        let kp = rng.random_range(1..=3);
        let model = NnModel::random(n + 1, kp, 0.5, &mut rng);
        let batch: Vec<Measurement> = (0..8)
            .map(|_| Measurement {
                reflection: random_reflection(n, 2, &mut rng).unwrap(),
                rsrp: 0.5 + 3.0 * rng.random::<f64>(),
            })
            .collect();
        let sigma2 = 0.1;
        let g = gradient(&model, &batch, sigma2).unwrap();
        let mut fd = g.clone();
        for j in 0..g.nrows() {
            for k in 0..g.ncols() {
                let mut w = model.weights().clone();
                w[(j, k)] += h;
                let plus = loss(&NnModel::from_weights(w.clone()).unwrap(), &batch, sigma2).unwrap();
                w[(j, k)] -= 2.0 * h;
                let minus = loss(&NnModel::from_weights(w).unwrap(), &batch, sigma2).unwrap();
                fd[(j, k)] = (plus - minus) / (2.0 * h);
            }
        }
        worst = worst.max((&fd - &g).norm() / g.norm());
    }
    outcome(worst < 1e-5, format!("max relative error {worst:.2e} over 50 instances (tol 1e-5)"))
}

fn c3_representation() -> Outcome {
    let mut rng = SeedTree::new(103).stream("c3", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=32);
        let kp = rng.random_range(1..=6);
        let model = NnModel::random(n + 1, kp, 1.0, &mut rng);
        let v = random_reflection(n, rng.random_range(1..=3), &mut rng).unwrap();
        let mut r = CMatrix::zeros(n + 1, n + 1);
        for k in 0..kp {
            let w = column(&model.complex_weight(k));
            r += &w * w.adjoint();
        }
        let q = quad_form(&r, v.extended()).re;
        let p = forward(&model, &v).unwrap();
        worst = worst.max((p - q).abs() / q);
    }
    outcome(worst < 1e-12, format!("max relative deviation {worst:.2e} over 100 models (tol 1e-12)"))
}

fn column(w: &[C64]) -> CMatrix {
    CMatrix::from_fn(w.len(), 1, |i, _| w[i])
}

fn planted_run() -> (f64, usize, Vec<(usize, f64)>, f64) {
    let mut rng = SeedTree::new(104).stream("c4", 0);
    let r = planted(3, 17, 1e-11, &mut rng);
    let sigma2 = 1e-12;
    let recs = (0..600)
        .map(|_| {
            let v = random_reflection(16, 2, &mut rng).unwrap();
            let p = quad_form(&r, v.extended()).re + sigma2;
            Measurement { reflection: v, rsrp: p }
        })
        .collect();
    let set = MeasurementSet::new(sigma2, MeasurementMode::Exact, recs).unwrap();
    let cfg = TrainConfig { tau: 1, seed: 4, ..TrainConfig::default() };
    let (model, report) = progressive_train(&set, &cfg).unwrap();
    let e = nmse(reconstruct_autocorrelation(&model).entries(), &r).unwrap();
    let deltas = report.stages.iter().map(|s| (s.subnetworks, s.delta)).collect();
    (e, report.selected, deltas, cfg.varsigma)
}

fn c4_planted(run: &(f64, usize, Vec<(usize, f64)>, f64)) -> Outcome {
    let (e, k, _, _) = run;
    outcome(*e < 5e-2 && (*k == 3 || *k == 4), format!("NMSE {e:.2e} (tol 5e-2), K* = {k} (want 3 or 4)"))
}

fn c5_rank_trend(run: &(f64, usize, Vec<(usize, f64)>, f64)) -> Outcome {
    let (_, _, deltas, varsigma) = run;
    let d = |k: usize| deltas.iter().find(|(kk, _)| *kk == k).map(|(_, d)| *d);
    match (d(1), d(3), d(4)) {
        (Some(d1), Some(d3), Some(d4)) => outcome(
            d3 < 0.1 * d1 && (d4 - d3).abs() < *varsigma,
            format!("delta(1) {d1:.2e}, delta(3) {d3:.2e}, delta(4) {d4:.2e}, varsigma {varsigma:e}"),
        ),
        _ => outcome(false, format!("stages trained: {:?}", deltas.iter().map(|x| x.0).collect::<Vec<_>>())),
    }
}

fn c6_toy_optimality() -> Outcome {
    let mut rng = SeedTree::new(106).stream("c6", 0);
    let cfg = OptimizerConfig::default();
    let (mut hits, mut updates, mut monotone) = (0, 0, 0);
    for _ in 0..200 {
        let r = planted(3, 7, 1.0, &mut rng);
        let (_, opt) = exhaustive_optimum(&r, 1, 1.0).unwrap();
        let res = optimize_reflection(&r, 1, 1.0, &cfg, &mut rng).unwrap();
        if res.objective >= opt * (1.0 - 1e-12) {
            hits += 1;
        }
        for w in res.trajectory.windows(2) {
            updates += 1;
            if w[1] >= w[0] {
                monotone += 1;
            }
        }
    }
    outcome(
        hits >= 190 && monotone == updates,
        format!("optimum reached in {hits}/200 (need 190), monotone updates {monotone}/{updates}"),
    )
}

fn desk_spec(axis: Axis, metric: Metric, methods: Vec<Method>, realizations: usize, seed: u64) -> SweepSpec {
    SweepSpec {
        scenario: Scenario::default(),
        measurement: MeasurementSpec::default(),
        training: TrainConfig::default(),
        optimizer: OptimizerConfig::default(),
        axis,
        metric,
        methods,
        allocation: Allocation::Waterfilling,
        realizations,
        seed,
    }
}

fn c7_ordering() -> Outcome {
    let mut spec = desk_spec(
        Axis::Records(vec![300]),
        Metric::Gain,
        vec![Method::Proposed, Method::Csm, Method::Rms, Method::UpperBound],
        50,
        107,
    );
    spec.measurement.mode = MeasurementMode::Exact;
    let res = run_sweep(&spec).unwrap();
    let m = |x| res.row(300.0, x).unwrap().mean;
    let (p, c, r, u) = (m(Method::Proposed), m(Method::Csm), m(Method::Rms), m(Method::UpperBound));
    outcome(
        p >= c && c >= r && p >= 0.85 * u,
        format!("mean gain proposed {p:.4e} >= csm {c:.4e} >= rms {r:.4e}; proposed/upper_bound = {:.4}", p / u),
    )
}

fn c8_nmse_trend() -> Outcome {
    let spec = desk_spec(Axis::Records(vec![100, 200, 300]), Metric::Nmse, vec![Method::Proposed], 30, 108);
    let res = run_sweep(&spec).unwrap();
    let pts: Vec<(f64, f64)> = [100.0, 200.0, 300.0]
        .iter()
        .map(|&l| {
            let r = res.row(l, Method::Proposed).unwrap();
            (r.mean, r.std_err)
        })
        .collect();
    let ok = pts.windows(2).all(|w| w[1].0 + w[1].1 < w[0].0 - w[0].1);
    let txt: Vec<String> = pts.iter().map(|(m, s)| format!("{m:.3e}±{s:.1e}")).collect();
    outcome(ok, format!("NMSE at L=100,200,300: {}", txt.join(", ")))
}

fn c9_extra_taps() -> Outcome {
    let spec = desk_spec(Axis::Tap, Metric::TapPower, vec![Method::Proposed, Method::NoIrs], 50, 109);
    let res = run_sweep(&spec).unwrap();
    let sc = &spec.scenario;
    let (k1, kr, k) = (sc.direct_taps, sc.cascaded_taps(), sc.max_taps());
    let mean = |tap: usize, m| res.row(tap as f64, m).unwrap().mean;
    let extra = ((k1 + 1)..=kr).all(|t| mean(t, Method::Proposed) > 0.0);
    let above = (1..=k).all(|t| mean(t, Method::Proposed) > mean(t, Method::NoIrs));
    let ratios: Vec<String> = (1..=k)
        .map(|t| format!("{:.1e}/{:.1e}", mean(t, Method::Proposed), mean(t, Method::NoIrs)))
        .collect();
    outcome(extra && above, format!("per-tap with/without IRS: {}", ratios.join(" ")))
}

fn c10_water_filling() -> Outcome {
    let sc = Scenario::default();
    let mut rng = SeedTree::new(110).stream("c10", 0);
    let (mut worst, mut dominated) = (0.0f64, 0);
    for _ in 0..100 {
        let real = sample_channel(&sc, 0, &mut rng).unwrap();
        let cir = CirMatrix::build(&real, sc.subcarriers).unwrap();
        let v = random_reflection(sc.elements, sc.phase_bits, &mut rng).unwrap();
        let gains: Vec<f64> = dft(&cir.apply(v.extended())).iter().map(|z| z.norm_sqr()).collect();
        let (p, s2) = (sc.tx_power(), sc.noise_power());
        let alloc = water_filling(&gains, p, s2).unwrap();
        worst = worst.max(kkt_residual(&gains, &alloc, p, s2));
        let cfg = |allocation| RateConfig { cp_len: sc.cp_len, tx_power: p, sigma2: s2, allocation };
        let wf = rate_from_gains(&gains, &cfg(Allocation::Waterfilling)).unwrap();
        let eq = rate_from_gains(&gains, &cfg(Allocation::Equal)).unwrap();
        if wf >= eq {
            dominated += 1;
        }
    }
    outcome(
        worst < 1e-8 && dominated == 100,
        format!("max KKT residual {worst:.2e} (tol 1e-8), waterfilling >= equal on {dominated}/100"),
    )
}

fn c11_rate_vs_decay() -> Outcome {
    let spec = desk_spec(Axis::Epsilon(vec![0.5, 3.0]), Metric::Rate, vec![Method::Proposed], 30, 111);
    let res = run_sweep(&spec).unwrap();
    let lo = res.row(0.5, Method::Proposed).unwrap().mean;
    let hi = res.row(3.0, Method::Proposed).unwrap().mean;
    outcome(hi > lo, format!("mean rate {hi:.4} bps/Hz at epsilon=3 vs {lo:.4} at epsilon=0.5"))
}

fn c12_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "seed = 112\noutput_dir = {:?}\n[evaluation]\npreset = \"gain_vs_L\"\nrealizations = 4\nL = [50, 100]\n",
        dir.path().join("a")
    );
    let mut cfg = ExperimentConfig::from_toml(&text).unwrap();
    let a = cmd_sweep(&cfg).unwrap();
    let first = std::fs::read(&a.path).unwrap();
    let again = std::fs::read(cmd_sweep(&cfg).unwrap().path).unwrap();
    cfg.output_dir = dir.path().join("b");
    let other = std::fs::read(cmd_sweep(&cfg).unwrap().path).unwrap();
    // The echoed output_dir differs between a/ and b/; compare from the data header on.
    let data = |b: &[u8]| String::from_utf8_lossy(b).lines().filter(|l| !l.starts_with("#|")).collect::<Vec<_>>().join("\n");
    outcome(
        first == again && data(&first) == data(&other),
        format!("{} bytes, identical on repeat: {}", first.len(), first == again),
    )
}

fn main() {
    let budget = |s: u64| Duration::from_secs(s);
    let mut failed = 0;
    let mut report = |id: usize, name: &str, limit: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let pass = out.pass && took <= limit;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} [{}] {name}: {} ({:.1}s, budget {}s)",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    };
    report(1, "subset RSRP equals full-band ARSP", budget(10), &mut c1_subset_lemma);
    report(2, "analytic gradient vs finite differences", budget(10), &mut c2_gradient);
    report(3, "representation identity", budget(5), &mut c3_representation);
    let start = Instant::now();
    let run = planted_run();
    let shared = start.elapsed();
    report(4, "planted rank-3 recovery", budget(300).saturating_sub(shared), &mut || c4_planted(&run));
    report(5, "rank-detection trend", budget(300).saturating_sub(shared), &mut || c5_rank_trend(&run));
    report(6, "toy-scale optimality", budget(60), &mut c6_toy_optimality);
    report(7, "method ordering", budget(1800), &mut c7_ordering);
    report(8, "NMSE decreases with L", budget(1800), &mut c8_nmse_trend);
    report(9, "extra taps from the IRS", budget(300), &mut c9_extra_taps);
    report(10, "water-filling optimality", budget(5), &mut c10_water_filling);
    report(11, "rate improves with decay factor", budget(1800), &mut c11_rate_vs_decay);
    report(12, "sweep determinism", budget(600), &mut c12_determinism);
    println!("acceptance: {} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

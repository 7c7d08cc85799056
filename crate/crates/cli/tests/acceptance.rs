//! Acceptance gate. Each criterion prints one PASS/FAIL line; the binary
//! exits non-zero when any criterion fails.

use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use infoqgan::config::{Experiment, RunConfig};
use infoqgan::io;
use infoqgan::run::{self, SweepArgs, TrainOutcome};
use infoqgan_core::eval::ks2d_points;
use infoqgan_core::finance::{asset_stats, empirical_frontier, mpt_sigma, synthetic_assets, SyntheticPair};
use infoqgan_core::generator::{GeneratorSpec, LatentSample, Readout};
use infoqgan_core::mine::{dv_estimate, shuffle_marginal, MineEstimator};
use infoqgan_core::nn::{Activation, DenseNet};
use infoqgan_core::qsim::{circuit_output_gradient, parameter_shift_gradient, OutputSelector};
use infoqgan_core::training::Mode;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `max |a - b| / max |b|` over a matrix.
fn rel_err(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> f64 {
    let diff = analytic
        .iter()
        .flatten()
        .zip(numeric.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = numeric.iter().flatten().map(|b| b.abs()).fold(0.0, f64::max);
    diff / scale.max(1e-12)
}

fn central_difference(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let mut cols = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        cols.push(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect::<Vec<_>>());
    }
    // Transpose to one row per output.
    (0..cols[0].len()).map(|k| cols.iter().map(|c| c[k]).collect()).collect()
}

fn gradient_contract() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_circuit = 0.0f64;
    let mut worst_shift = 0.0f64;
    for i in 0..20 {
        let qubits = rng.random_range(2..=5);
        let layers = rng.random_range(1..=20);
        let readout = if i % 2 == 0 { Readout::Point2d } else { Readout::Distribution };
        let g = GeneratorSpec::random(qubits, layers, readout, std::f64::consts::PI, &mut rng).unwrap();
        let z = LatentSample::random(qubits, 0, g.noise_domain(), &mut rng);
        let analytic = g.jacobian(&z).unwrap();
        let numeric = central_difference(
            |p| {
                GeneratorSpec::new(qubits, layers, readout, p.to_vec())
                    .unwrap()
                    .generate(&z)
                    .unwrap()
            },
            &g.params,
            1e-4,
        );
        worst_circuit = worst_circuit.max(rel_err(&analytic, &numeric));

        // Second analytic route on the raw probabilities.
        let prefix = match readout {
            Readout::Point2d => infoqgan_core::generator::embed_noise_2d(&z).unwrap(),
            Readout::Distribution => infoqgan_core::generator::embed_noise_finance(&z).unwrap(),
        };
        let sel = OutputSelector::BasisProbabilities;
        let adjoint = circuit_output_gradient(g.template(), &g.params, &prefix, &sel).unwrap();
        let shift = parameter_shift_gradient(g.template(), &g.params, &prefix, &sel).unwrap();
        worst_shift = worst_shift.max(rel_err(&adjoint, &shift));
    }

    let mut worst_net = 0.0f64;
    for i in 0..10 {
        let depth = rng.random_range(1..=4);
        let mut dims = vec![rng.random_range(1..=16)];
        dims.extend((0..depth).map(|_| rng.random_range(1..=16)));
        let hidden = if i % 2 == 0 { Activation::Tanh } else { Activation::LeakyRelu };
        let output = if i % 3 == 0 { Activation::Sigmoid } else { Activation::Identity };
        let net = DenseNet::random(dims.clone(), hidden, output, &mut rng).unwrap();
        let input: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cot: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grads = net.backward(&input, &cot).unwrap();
        let weighted = |out: Vec<f64>| vec![out.iter().zip(&cot).map(|(o, c)| o * c).sum::<f64>()];

        let params = net.params().to_vec();
        let numeric_p = central_difference(
            |p| {
                let mut n = net.clone();
                n.params_mut().copy_from_slice(p);
                weighted(n.forward(&input).unwrap())
            },
            &params,
            1e-5,
        );
        let numeric_x = central_difference(|x| weighted(net.forward(x).unwrap()), &input, 1e-5);
        worst_net = worst_net
            .max(rel_err(&[grads.params], &numeric_p))
            .max(rel_err(&[grads.input], &numeric_x));
    }
    verdict(
        worst_circuit <= 1e-4 && worst_net <= 1e-4 && worst_shift <= 1e-10,
        format!(
            "circuits rel {worst_circuit:.2e}, dense nets rel {worst_net:.2e} (limit 1e-4); adjoint vs shift {worst_shift:.2e}"
        ),
    )
}

/// Fraction of `pts` in each quadrant around `c`, counted one point at a
/// time. Points on a dividing line belong to the left/lower side.
fn quadrants_by_scan(pts: &[(f64, f64)], c: (f64, f64)) -> [f64; 4] {
    let mut k = [0usize; 4];
    for &(x, y) in pts {
        let q = match (x > c.0, y > c.1) {
            (true, true) => 0,
            (false, true) => 1,
            (false, false) => 2,
            (true, false) => 3,
        };
        k[q] += 1;
    }
    k.map(|v| v as f64 / pts.len() as f64)
}

fn gap_by_scan(a: &[(f64, f64)], b: &[(f64, f64)], centers: &[(f64, f64)]) -> f64 {
    let mut best = 0.0f64;
    for &c in centers {
        let (fa, fb) = (quadrants_by_scan(a, c), quadrants_by_scan(b, c));
        for q in 0..4 {
            best = best.max((fa[q] - fb[q]).abs());
        }
    }
    best
}

/// Peacock's form: every `(x_i, y_j)` combination of the pooled sample.
fn peacock_by_scan(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let pooled: Vec<(f64, f64)> = a.iter().chain(b).copied().collect();
    let mut centers = Vec::with_capacity(pooled.len() * pooled.len());
    for &(x, _) in &pooled {
        for &(_, y) in &pooled {
            centers.push((x, y));
        }
    }
    gap_by_scan(a, b, &centers)
}

fn ks_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut mismatches = 0;
    let mut below_peacock = true;
    for i in 0..20 {
        let n1 = rng.random_range(10..=50);
        let n2 = rng.random_range(10..=50);
        // Every fourth pair lives on a coarse grid so ties are exercised.
        let mut draw = |shift: f64| -> (f64, f64) {
            let (x, y): (f64, f64) = (rng.random(), rng.random::<f64>() * (1.0 - shift) + shift);
            if i % 4 == 0 {
                ((x * 8.0).floor() / 8.0, (y * 8.0).floor() / 8.0)
            } else {
                (x, y)
            }
        };
        let shift = (i % 5) as f64 * 0.1;
        let a: Vec<_> = (0..n1).map(|_| draw(0.0)).collect();
        let b: Vec<_> = (0..n2).map(|_| draw(shift)).collect();
        let fast = ks2d_points(&a, &b).unwrap().statistic;
        let brute = 0.5 * (gap_by_scan(&a, &b, &a) + gap_by_scan(&a, &b, &b));
        if fast.to_bits() != brute.to_bits() {
            mismatches += 1;
        }
        below_peacock &= fast <= peacock_by_scan(&a, &b);
    }
    verdict(
        mismatches == 0 && below_peacock,
        format!("{mismatches}/20 pairs differ from the brute-force scan; bounded by the all-grid maximum: {below_peacock}"),
    )
}

fn gaussian_pairs(rho: f64, n: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let s = (1.0 - rho * rho).sqrt();
    (0..n)
        .map(|_| {
            let x: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            (vec![x], vec![rho * x + s * e])
        })
        .unzip()
}

fn mine_oracle() -> Verdict {
    const BATCH: usize = 256;
    const STEPS: usize = 3000;
    const EVAL: usize = 20_000;
    let mut lines = Vec::new();
    let mut pass = true;
    for rho in [0.5f64, 0.9] {
        let truth = -0.5 * (1.0 - rho * rho).ln();
        let mut hits = 0;
        let mut estimates = Vec::new();
        for seed in SEEDS {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let net = DenseNet::statistic_network(2, &mut rng).unwrap();
            let mut est = MineEstimator::new(net, 0.99).unwrap();
            for _ in 0..STEPS {
                let (c, o) = gaussian_pairs(rho, BATCH, &mut rng);
                est.step(&shuffle_marginal(c, o, &mut rng).unwrap(), 1e-3).unwrap();
            }
            let (c, o) = gaussian_pairs(rho, EVAL, &mut rng);
            let value = dv_estimate(&est.net, &shuffle_marginal(c, o, &mut rng).unwrap()).unwrap();
            hits += usize::from((value - truth).abs() <= 0.05);
            estimates.push(format!("{value:.4}"));
        }
        pass &= hits >= 4;
        lines.push(format!("rho {rho}: truth {truth:.4}, estimates [{}], {hits}/5 within 0.05", estimates.join(", ")));
    }
    verdict(pass, lines.join("; "))
}

fn train_quiet(cfg: &RunConfig) -> TrainOutcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = cfg.clone();
    cfg.out_dir = dir.path().to_path_buf();
    run::train(&cfg).unwrap()
}

fn seeded(experiment: Experiment, mode: Mode, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::defaults(experiment, mode);
    cfg.seed = seed;
    cfg
}

fn mode_collapse() -> Verdict {
    let mut p = [Vec::new(), Vec::new()];
    let mut d = [Vec::new(), Vec::new()];
    for (k, mode) in [Mode::Infoqgan, Mode::Qgan].into_iter().enumerate() {
        for seed in SEEDS {
            let ks = train_quiet(&seeded(Experiment::Circle2d, mode, seed)).ks.unwrap();
            p[k].push(ks.p_value);
            d[k].push(ks.statistic);
        }
    }
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    let (mi, mq) = (median(p[0].clone()), median(p[1].clone()));
    verdict(
        mi > 0.05 && mq < 0.05,
        format!(
            "median p InfoQGAN {mi:.4} (D {}), QGAN {mq:.4} (D {})",
            fmt(&d[0]),
            fmt(&d[1])
        ),
    )
}

fn final_correlations(outcome: &TrainOutcome) -> Vec<f64> {
    let last = outcome.correlations.iter().map(|c| c.epoch).max().unwrap();
    outcome
        .correlations
        .iter()
        .filter(|c| c.epoch == last)
        .map(|c| c.x.abs().max(c.y.abs()))
        .collect()
}

fn feature_control() -> Verdict {
    let mut info_ok = 0;
    let mut qgan_rows = Vec::new();
    let mut info_rows = Vec::new();
    let mut orthogonal = 0;
    for seed in SEEDS {
        let out = train_quiet(&seeded(Experiment::Square2d, Mode::Infoqgan, seed));
        let best = final_correlations(&out);
        info_ok += usize::from(best.iter().all(|&r| r >= 0.5));
        let last = out.correlations.iter().map(|c| c.epoch).max().unwrap();
        let fin: Vec<_> = out.correlations.iter().filter(|c| c.epoch == last).collect();
        // Codes steer different axes when their dominant axes differ.
        let axis = |c: &run::Correlation| c.x.abs() >= c.y.abs();
        orthogonal += usize::from(fin.len() == 2 && axis(fin[0]) != axis(fin[1]));
        info_rows.push(best.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join("/"));

        let base = train_quiet(&seeded(Experiment::Square2d, Mode::Qgan, seed));
        qgan_rows.push(final_correlations(&base).into_iter().fold(0.0, f64::max));
    }
    let qgan_max = qgan_rows.iter().copied().fold(0.0, f64::max);
    let qgan_rows: Vec<String> = qgan_rows.iter().map(|r| format!("{r:.2}")).collect();
    verdict(
        info_ok >= 3 && qgan_max < 0.3,
        format!(
            "InfoQGAN codes >= 0.5 in {info_ok}/5 seeds [{}], codes on distinct axes in {orthogonal}/5; QGAN max |r| per seed [{}] (limit 0.3)",
            info_rows.join(" "),
            qgan_rows.join(" ")
        ),
    )
}

const FIXTURE_PRICES: &str = "date,asset,close
2021-03-01,AAA,100.0
2021-03-02,AAA,101.5
2021-03-03,AAA,100.9
2021-03-04,AAA,102.2
2021-03-05,AAA,103.0
2021-03-08,AAA,101.1
2021-03-09,AAA,102.4
2021-03-10,AAA,104.0
2021-03-01,BBB,50.0
2021-03-02,BBB,49.2
2021-03-03,BBB,49.9
2021-03-04,BBB,49.1
2021-03-05,BBB,48.8
2021-03-08,BBB,50.3
2021-03-09,BBB,49.7
2021-03-10,BBB,49.0
";

fn frontier_gap(a: &infoqgan_core::finance::ReturnSeries, b: &infoqgan_core::finance::ReturnSeries) -> f64 {
    let (sa, sb) = asset_stats(a, b).unwrap();
    let alphas: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    empirical_frontier(a, b, &alphas)
        .unwrap()
        .iter()
        .zip(&alphas)
        .map(|(fp, &w)| (fp.stdev - mpt_sigma(w, &sa, &sb).unwrap()).abs())
        .fold(0.0, f64::max)
}

fn frontier_identity() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prices.csv");
    std::fs::write(&path, FIXTURE_PRICES).unwrap();
    let mut all = io::load_prices(&path).unwrap();
    let (a, b) = (all.remove("AAA").unwrap(), all.remove("BBB").unwrap());
    let csv_gap = frontier_gap(&a, &b);

    let pair = SyntheticPair {
        mu_a: 0.001,
        sigma_a: 0.018,
        mu_b: 0.002,
        sigma_b: 0.035,
        cov: -0.3 * 0.018 * 0.035,
    };
    let (sa, sb) = synthetic_assets(&pair, 2800, &mut ChaCha8Rng::seed_from_u64(33)).unwrap();
    let syn_gap = frontier_gap(&sa, &sb);
    verdict(
        csv_gap <= 1e-12 && syn_gap <= 1e-12,
        format!("max |sigma gap| CSV fixture {csv_gap:.1e}, synthetic {syn_gap:.1e} (limit 1e-12)"),
    )
}

fn mean_range(outcome: &TrainOutcome) -> f64 {
    let f = outcome.frontier.as_ref().unwrap();
    let hi = f.iter().map(|p| p.mean).fold(f64::NEG_INFINITY, f64::max);
    let lo = f.iter().map(|p| p.mean).fold(f64::INFINITY, f64::min);
    hi - lo
}

fn range_expansion() -> Verdict {
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in SEEDS {
        let info = mean_range(&train_quiet(&seeded(Experiment::Finance, Mode::Infoqgan, seed)));
        let base = mean_range(&train_quiet(&seeded(Experiment::Finance, Mode::Qgan, seed)));
        wins += usize::from(info >= 3.0 * base);
        rows.push(format!("{:.1}x", info / base));
    }
    verdict(wins >= 3, format!("InfoQGAN/QGAN mean-range ratio [{}], >= 3x in {wins}/5 seeds", rows.join(" ")))
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Verdict {
    let run_all = || {
        let dir = tempfile::tempdir().unwrap();
        for (experiment, mode, epochs) in [
            (Experiment::Circle2d, Mode::Infoqgan, 55),
            (Experiment::Square2d, Mode::Qgan, 20),
            (Experiment::Finance, Mode::Infoqgan, 10),
        ] {
            let mut cfg = seeded(experiment, mode, 7);
            cfg.epochs = epochs;
            cfg.out_dir = dir.path().join(format!("{experiment}"));
            run::train(&cfg).unwrap();
            cfg.out_dir = dir.path().join(format!("{experiment}-data"));
            run::gen_data(&cfg).unwrap();
            run::sweep(&SweepArgs {
                checkpoint: dir.path().join(format!("{experiment}")).join("checkpoint.json"),
                code_index: None,
                segments: 4,
                draws: 32,
                seed: 7,
                out: dir.path().join(format!("{experiment}-sweep")),
            })
            .unwrap();
        }
        (csv_bytes(dir.path()), dir)
    };
    let (first, _keep1) = run_all();
    let (second, _keep2) = run_all();
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    let same = first == second;
    verdict(same && !first.is_empty(), format!("{} CSV files compared, identical: {same} ({})", first.len(), names.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("1 gradient contract", gradient_contract),
        ("2 KS oracle equivalence", ks_oracle),
        ("3 MINE on Gaussians", mine_oracle),
        ("4 mode collapse (circle)", mode_collapse),
        ("5 feature control (square)", feature_control),
        ("6 frontier identity", frontier_identity),
        ("7 range expansion (finance)", range_expansion),
        ("8 determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut stdout = std::io::stdout();
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                verdict(false, format!("panicked: {msg}"))
            });
        failed += usize::from(!v.pass);
        writeln!(
            stdout,
            "criterion {name}: {} ({:.1}s) {}",
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        )
        .unwrap();
        stdout.flush().unwrap();
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

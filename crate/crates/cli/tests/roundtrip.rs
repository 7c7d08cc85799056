use infoqgan::checkpoint::Checkpoint;
use infoqgan::config::{Experiment, RunConfig};
use infoqgan::io;
use infoqgan::run::{self, KsReport};
use infoqgan_core::training::Mode;

fn small(experiment: Experiment, mode: Mode, dir: &std::path::Path) -> RunConfig {
    let mut c = RunConfig::defaults(experiment, mode);
    c.epochs = 6;
    c.seed = 4;
    c.eval.samples = 300;
    c.eval.ks_samples = 200;
    c.eval.correlation_draws = 200;
    c.eval.sweep_draws = 16;
    c.out_dir = dir.to_path_buf();
    c
}

#[test]
fn point_run_artifacts_reload() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Experiment::Circle2d, Mode::Infoqgan, dir.path());
    let out = run::train(&cfg).unwrap();
    let d = dir.path();

    assert_eq!(io::read_metrics(&d.join("metrics.csv")).unwrap(), out.history);
    assert_eq!(RunConfig::load(Some(&d.join("config.toml")), &[]).unwrap(), cfg);
    let ck = Checkpoint::load(&d.join("checkpoint.json")).unwrap();
    assert_eq!(ck.generator.to_spec().unwrap(), out.generator);
    assert_eq!(ck.meta.epoch, 6);
    assert!(Checkpoint::load(&run::checkpoint_path(d, 6)).is_ok());

    let ks: KsReport = io::read_json(&d.join("ks.json")).unwrap();
    assert_eq!(Some(ks), out.ks);
    let samples = io::read_points(&d.join("samples.csv")).unwrap();
    assert_eq!(samples.len(), 300);
    let target = io::read_points(&d.join("target.csv")).unwrap();
    assert_eq!(target, run::target_cloud(&cfg).unwrap().points);

    let corr = io::read_float_rows(&d.join("correlations.csv"), &["epoch", "latent", "corr_x", "corr_y"]).unwrap();
    assert_eq!(corr.len(), out.correlations.len());
    for (row, c) in corr.iter().zip(&out.correlations) {
        assert_eq!(row, &vec![c.epoch as f64, c.latent as f64, c.x, c.y]);
    }

    // The eval command re-reads both point files.
    let report = run::eval_files(&d.join("samples.csv"), Some(&d.join("target.csv")), &cfg, d).unwrap();
    assert_eq!(report.n1, 300);
    assert_eq!(io::read_json::<KsReport>(&d.join("ks.json")).unwrap(), report);
}

#[test]
fn finance_run_artifacts_reload() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Experiment::Finance, Mode::Infoqgan, dir.path());
    let out = run::train(&cfg).unwrap();
    let d = dir.path();

    assert_eq!(io::read_frontier(&d.join("frontier.csv")).unwrap(), out.frontier.unwrap());
    let sets = io::read_datasets(&d.join("datasets.csv")).unwrap();
    assert_eq!(sets.len(), 2000);
    match run::build_dataset(&cfg).unwrap() {
        run::Dataset::Portfolio { sets: fresh, .. } => assert_eq!(sets, fresh),
        run::Dataset::Points(_) => unreachable!(),
    }
    assert_eq!(io::read_frontier(&d.join("empirical_frontier.csv")).unwrap().len(), 101);
    let header: Vec<String> = std::iter::once("code".to_string()).chain((0..16).map(|i| format!("p{i}"))).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let hist = io::read_float_rows(&d.join("sweep_histograms.csv"), &header).unwrap();
    assert_eq!(hist.len(), cfg.eval.sweep_segments);
    for row in hist {
        assert!((row[1..].iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn generated_prices_feed_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Experiment::Finance, Mode::Qgan, dir.path());
    let written = run::gen_data(&cfg).unwrap();
    assert_eq!(written.len(), 2);

    let prices = dir.path().join("prices.csv");
    let loaded = io::load_prices(&prices).unwrap();
    let (a, b) = run::asset_pair(&cfg).unwrap();
    for s in [&a, &b] {
        let r = &loaded[s.asset_id()];
        assert_eq!(r.dates(), s.dates());
        for (x, y) in r.returns().iter().zip(s.returns()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    let mut from_file = cfg.clone();
    from_file.finance.prices = Some(prices);
    from_file.out_dir = dir.path().join("run");
    let out = run::train(&from_file).unwrap();
    assert_eq!(out.history.len(), 6);
}

#[test]
fn missing_price_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Experiment::Finance, Mode::Qgan, dir.path());
    cfg.finance.prices = Some(dir.path().join("absent.csv"));
    let err = run::train(&cfg).err().unwrap().to_string();
    assert!(err.contains("absent.csv"), "{err}");
}

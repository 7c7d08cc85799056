//! File formats: CSV tables, JSON documents, price files and atomic writes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use serde::Serialize;

use infoqgan_core::eval::FrontierPoint;
use infoqgan_core::finance::{returns_from_closes, Day, PortfolioDistribution, ReturnSeries, NUM_BINS};
use infoqgan_core::training::EpochMetrics;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| anyhow!("{} has no file name", path.display()))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("cannot move {} into place", path.display()))
}

/// A CSV table with a header and float cells in [`fmt_f64`] form.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn row<I, S>(&mut self, cells: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(cells)?;
        Ok(())
    }

    pub fn save(self, path: &Path) -> Result<()> {
        let bytes = self.writer.into_inner().map_err(|e| anyhow!("csv buffer: {e}"))?;
        write_atomic(path, &bytes)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<fs::File>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().with_context(|| format!("{}: unreadable header", path.display()))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        bail!("{}: header {:?}, expected {:?}", path.display(), got, expected);
    }
    Ok(())
}

/// Reads a headed CSV whose cells are all floats, requiring `header` exactly.
/// Errors carry the 1-based line number.
pub fn read_float_rows(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, header)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.with_context(|| format!("{}:{line}: malformed row", path.display()))?;
        if rec.len() != header.len() {
            bail!("{}:{line}: {} fields, expected {}", path.display(), rec.len(), header.len());
        }
        let row = rec
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| anyhow!("{}:{line}: {c:?} is not a number", path.display())))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub const POINT_HEADER: [&str; 2] = ["x", "y"];

pub fn write_points(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut t = Table::new(&POINT_HEADER)?;
    for &(x, y) in points {
        t.row([fmt_f64(x), fmt_f64(y)])?;
    }
    t.save(path)
}

pub fn read_points(path: &Path) -> Result<Vec<(f64, f64)>> {
    let rows = read_float_rows(path, &POINT_HEADER)?;
    if rows.is_empty() {
        bail!("{}: no points", path.display());
    }
    Ok(rows.into_iter().map(|r| (r[0], r[1])).collect())
}

fn bin_header(lead: &str) -> Vec<String> {
    std::iter::once(lead.to_string())
        .chain((0..NUM_BINS).map(|i| format!("p{i}")))
        .collect()
}

/// Distributions as rows `lead, p0..p15`.
pub fn write_distributions(path: &Path, lead: &str, rows: &[(f64, &[f64])]) -> Result<()> {
    let header = bin_header(lead);
    let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>())?;
    for (tag, bins) in rows {
        t.row(std::iter::once(fmt_f64(*tag)).chain(bins.iter().map(|&p| fmt_f64(p))))?;
    }
    t.save(path)
}

pub fn write_datasets(path: &Path, sets: &[PortfolioDistribution]) -> Result<()> {
    let rows: Vec<(f64, &[f64])> = sets.iter().map(|d| (d.alpha, d.bins.as_slice())).collect();
    write_distributions(path, "alpha", &rows)
}

pub fn read_datasets(path: &Path) -> Result<Vec<PortfolioDistribution>> {
    let header = bin_header("alpha");
    let rows = read_float_rows(path, &header.iter().map(String::as_str).collect::<Vec<_>>())?;
    Ok(rows
        .into_iter()
        .map(|r| PortfolioDistribution {
            alpha: r[0],
            bins: r[1..].to_vec(),
        })
        .collect())
}

pub const METRICS_HEADER: [&str; 7] = ["epoch", "g_loss", "d_loss", "mine_estimate", "lr_g", "lr_d", "lr_m"];

pub fn write_metrics(path: &Path, history: &[EpochMetrics]) -> Result<()> {
    let mut t = Table::new(&METRICS_HEADER)?;
    for m in history {
        t.row([
            m.epoch.to_string(),
            fmt_f64(m.generator_loss),
            fmt_f64(m.discriminator_loss),
            fmt_f64(m.mine_estimate),
            fmt_f64(m.lr_g),
            fmt_f64(m.lr_d),
            fmt_f64(m.lr_m),
        ])?;
    }
    t.save(path)
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>> {
    Ok(read_float_rows(path, &METRICS_HEADER)?
        .into_iter()
        .map(|r| EpochMetrics {
            epoch: r[0] as usize,
            generator_loss: r[1],
            discriminator_loss: r[2],
            mine_estimate: r[3],
            lr_g: r[4],
            lr_d: r[5],
            lr_m: r[6],
        })
        .collect())
}

pub const FRONTIER_HEADER: [&str; 3] = ["code_or_alpha", "mean", "stdev"];

pub fn write_frontier(path: &Path, points: &[FrontierPoint]) -> Result<()> {
    let mut t = Table::new(&FRONTIER_HEADER)?;
    for p in points {
        t.row([fmt_f64(p.code_or_alpha), fmt_f64(p.mean), fmt_f64(p.stdev)])?;
    }
    t.save(path)
}

pub fn read_frontier(path: &Path) -> Result<Vec<FrontierPoint>> {
    Ok(read_float_rows(path, &FRONTIER_HEADER)?
        .into_iter()
        .map(|r| FrontierPoint {
            code_or_alpha: r[0],
            mean: r[1],
            stdev: r[2],
        })
        .collect())
}

const EPOCH_DATE: NaiveDate = match NaiveDate::from_ymd_opt(1970, 1, 1) {
    Some(d) => d,
    None => panic!("valid date"),
};

pub fn day_from_date(date: NaiveDate) -> Day {
    Day((date - EPOCH_DATE).num_days() as i32)
}

pub fn date_from_day(day: Day) -> NaiveDate {
    EPOCH_DATE + chrono::Duration::days(day.0 as i64)
}

pub const PRICE_HEADER: [&str; 3] = ["date", "asset", "close"];

/// Reads `date,asset,close` rows into one return series per asset, keyed by
/// asset id. Rows may come in any order; each asset's dates must be unique.
pub fn load_prices(path: &Path) -> Result<BTreeMap<String, ReturnSeries>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &PRICE_HEADER)?;
    let mut by_asset: BTreeMap<String, Vec<(Day, f64, usize)>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.with_context(|| format!("{}:{line}: malformed row", path.display()))?;
        if rec.len() != 3 {
            bail!("{}:{line}: {} fields, expected 3", path.display(), rec.len());
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|_| anyhow!("{}:{line}: {:?} is not an ISO date", path.display(), &rec[0]))?;
        let close: f64 = rec[2]
            .parse()
            .map_err(|_| anyhow!("{}:{line}: close {:?} is not a number", path.display(), &rec[2]))?;
        if !(close > 0.0) || !close.is_finite() {
            bail!("{}:{line}: close {close} must be positive", path.display());
        }
        by_asset
            .entry(rec[1].to_string())
            .or_default()
            .push((day_from_date(date), close, line));
    }
    by_asset
        .into_iter()
        .map(|(asset, mut rows)| {
            rows.sort_by_key(|r| r.0);
            if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
                bail!("{}:{}: duplicate date for {asset}", path.display(), w[1].2);
            }
            let dates: Vec<Day> = rows.iter().map(|r| r.0).collect();
            let closes: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let series = returns_from_closes(asset.clone(), &dates, &closes)?;
            Ok((asset, series))
        })
        .collect()
}

/// Writes closes that reproduce `series` from a starting price, one asset
/// after another, dated one day before each series' first return.
pub fn write_prices(path: &Path, series: &[&ReturnSeries], start_price: f64) -> Result<()> {
    let mut t = Table::new(&PRICE_HEADER)?;
    for s in series {
        let Some(first) = s.dates().first() else { continue };
        let mut close = start_price;
        t.row([date_from_day(Day(first.0 - 1)).to_string(), s.asset_id().to_string(), fmt_f64(close)])?;
        for (d, r) in s.dates().iter().zip(s.returns()) {
            close *= 1.0 + r;
            t.row([date_from_day(*d).to_string(), s.asset_id().to_string(), fmt_f64(close)])?;
        }
    }
    t.save(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 123456.789, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn prices_parse_and_report_lines() {
        let dir = tmp();
        let p = dir.path().join("prices.csv");
        fs::write(&p, "date,asset,close\n2020-01-02,B,50\n2020-01-01,A,100\n2020-01-02,A,110\n").unwrap();
        let m = load_prices(&p).unwrap();
        assert_eq!(m.len(), 2);
        assert!((m["A"].returns()[0] - 0.1).abs() < 1e-15);
        assert!(m["B"].is_empty());

        fs::write(&p, "date,asset,close\n2020-01-01,A,100\n2020-13-01,A,110\n").unwrap();
        let err = format!("{:#}", load_prices(&p).unwrap_err());
        assert!(err.contains(":3:"), "{err}");

        fs::write(&p, "date,asset,close\n2020-01-01,A,-5\n").unwrap();
        assert!(format!("{:#}", load_prices(&p).unwrap_err()).contains(":2:"));

        fs::write(&p, "when,asset,close\n").unwrap();
        assert!(load_prices(&p).is_err());
    }

    #[test]
    fn prices_written_from_returns_reload() {
        let dir = tmp();
        let p = dir.path().join("prices.csv");
        let s = ReturnSeries::new("A", vec![Day(18000), Day(18001), Day(18003)], vec![0.01, -0.02, 0.005]).unwrap();
        write_prices(&p, &[&s], 100.0).unwrap();
        let back = &load_prices(&p).unwrap()["A"];
        assert_eq!(back.dates(), s.dates());
        for (a, b) in back.returns().iter().zip(s.returns()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn point_files_reject_junk() {
        let dir = tmp();
        let p = dir.path().join("pts.csv");
        fs::write(&p, "x,y\n").unwrap();
        assert!(read_points(&p).is_err());
        fs::write(&p, "x,y\n0.1,0.2\n0.3,abc\n").unwrap();
        assert!(format!("{:#}", read_points(&p).unwrap_err()).contains(":3:"));
        write_points(&p, &[(0.25, 0.5)]).unwrap();
        assert_eq!(read_points(&p).unwrap(), vec![(0.25, 0.5)]);
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tmp();
        let p = dir.path().join("sub/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        let names: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }
}

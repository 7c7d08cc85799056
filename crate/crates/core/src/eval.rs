//! Evaluation: the two-sample 2D Kolmogorov-Smirnov test, exact discrete
//! mutual information, Pearson correlation, mean/standard-deviation summaries
//! of return distributions and code sweeps over a trained generator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Needed without std; the unused-import lint misfires on recent toolchains.
#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;

use crate::error::{bail, Error, Result};
use crate::finance::bin_midpoint;
use crate::generator::{GeneratorSpec, LatentSample};
use crate::targets::PointCloud;

/// Significance level for the KS pass/fail decision.
pub const KS_ALPHA: f64 = 0.05;

/// Smallest sample accepted by [`ks2d`].
pub const KS_MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

impl KsResult {
    /// True when the same-distribution hypothesis survives at [`KS_ALPHA`].
    pub fn passes(&self) -> bool {
        self.p_value > KS_ALPHA
    }
}

/// Quadrant fractions of `points` around `(x0, y0)`, in the order
/// `[x > x0 & y > y0, x <= x0 & y > y0, x <= x0 & y <= y0, x > x0 & y <= y0]`.
/// Points on a dividing line count toward the lower/left side.
fn quadrant_fractions(n: usize, left: usize, below: usize, left_below: usize) -> [f64; 4] {
    let nf = n as f64;
    [
        (n + left_below - left - below) as f64 / nf,
        (left - left_below) as f64 / nf,
        left_below as f64 / nf,
        (below - left_below) as f64 / nf,
    ]
}

/// Fenwick tree over y-ranks for dominance counting.
struct Fenwick(Vec<usize>);

impl Fenwick {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< end`.
    fn prefix(&self, mut end: usize) -> usize {
        let mut s = 0;
        while end > 0 {
            s += self.0[end];
            end &= end - 1;
        }
        s
    }
}

/// For every center, the number of `points` with `x <= cx` and `y <= cy`,
/// by an x-sweep with a Fenwick tree over y. O((n + m) log n).
fn dominance_counts(points: &[(f64, f64)], centers: &[(f64, f64)]) -> Vec<usize> {
    let mut ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    ys.sort_by(f64::total_cmp);
    let mut by_x: Vec<(f64, f64)> = points.to_vec();
    by_x.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut order: Vec<usize> = (0..centers.len()).collect();
    order.sort_by(|&a, &b| centers[a].0.total_cmp(&centers[b].0));

    let mut tree = Fenwick(vec![0; ys.len() + 1]);
    let mut counts = vec![0; centers.len()];
    let mut next = 0;
    for c in order {
        let (cx, cy) = centers[c];
        while next < by_x.len() && by_x[next].0 <= cx {
            let rank = ys.partition_point(|&y| y < by_x[next].1);
            tree.add(rank);
            next += 1;
        }
        counts[c] = tree.prefix(ys.partition_point(|&y| y <= cy));
    }
    counts
}

fn max_quadrant_gap(a: &[(f64, f64)], b: &[(f64, f64)], centers: &[(f64, f64)]) -> f64 {
    let sorted = |pts: &[(f64, f64)], f: fn(&(f64, f64)) -> f64| {
        let mut v: Vec<f64> = pts.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let (ax, ay) = (sorted(a, |p| p.0), sorted(a, |p| p.1));
    let (bx, by) = (sorted(b, |p| p.0), sorted(b, |p| p.1));
    let a_ll = dominance_counts(a, centers);
    let b_ll = dominance_counts(b, centers);
    let mut best = 0.0f64;
    for (k, &(cx, cy)) in centers.iter().enumerate() {
        let fa = quadrant_fractions(
            a.len(),
            ax.partition_point(|&x| x <= cx),
            ay.partition_point(|&y| y <= cy),
            a_ll[k],
        );
        let fb = quadrant_fractions(
            b.len(),
            bx.partition_point(|&x| x <= cx),
            by.partition_point(|&y| y <= cy),
            b_ll[k],
        );
        for q in 0..4 {
            best = best.max((fa[q] - fb[q]).abs());
        }
    }
    best
}

fn sample_correlation(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    pearson(&xs, &ys).unwrap_or(0.0)
}

/// Kolmogorov distribution tail `Q(lambda) = 2 sum (-1)^(j-1) exp(-2 j^2 lambda^2)`.
/// Returns 1 where the alternating series has not settled (small lambda).
pub fn kolmogorov_q(lambda: f64) -> f64 {
    let a2 = -2.0 * lambda * lambda;
    let mut fac = 2.0;
    let mut sum = 0.0;
    let mut prev = 0.0f64;
    for j in 1..=100 {
        let j = j as f64;
        let term = fac * (a2 * j * j).exp();
        sum += term;
        if term.abs() <= 0.001 * prev || term.abs() <= 1e-8 * sum {
            return sum.clamp(0.0, 1.0);
        }
        fac = -fac;
        prev = term.abs();
    }
    1.0
}

/// Two-sample 2D KS test in the Fasano-Franceschini form: every point of
/// either sample serves as a center, the statistic is the largest quadrant
/// fraction gap, averaged over the two choices of center set. The p-value
/// uses the asymptotic Kolmogorov tail with effective size
/// `n1 n2 / (n1 + n2)` and the usual correction for the samples' x-y
/// correlation.
pub fn ks2d(a: &PointCloud, b: &PointCloud) -> Result<KsResult> {
    ks2d_points(&a.points, &b.points)
}

pub fn ks2d_points(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<KsResult> {
    let (n1, n2) = (a.len(), b.len());
    if n1 < KS_MIN_SAMPLES || n2 < KS_MIN_SAMPLES {
        bail!(Size, "2D KS test needs at least {KS_MIN_SAMPLES} points per sample, got {n1} and {n2}");
    }
    if a.iter().chain(b).any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        bail!(Domain, "2D KS test got a non-finite point");
    }
    let d1 = max_quadrant_gap(a, b, a);
    let d2 = max_quadrant_gap(a, b, b);
    let statistic = 0.5 * (d1 + d2);

    let r1 = sample_correlation(a);
    let r2 = sample_correlation(b);
    let rr = (1.0 - 0.5 * (r1 * r1 + r2 * r2)).max(0.0).sqrt();
    let sqen = ((n1 * n2) as f64 / (n1 + n2) as f64).sqrt();
    let lambda = statistic * sqen / (1.0 + rr * (0.25 - 0.75 / sqen));
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_q(lambda),
        n1,
        n2,
    })
}

/// Mutual information of a discrete joint table, in nats, with `0 ln 0 = 0`.
pub fn exact_mi(joint: &[Vec<f64>]) -> Result<f64> {
    let rows = joint.len();
    let cols = joint.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || joint.iter().any(|r| r.len() != cols) {
        bail!(Shape, "joint table must be a non-empty rectangle");
    }
    if joint.iter().flatten().any(|&p| !(p >= 0.0)) {
        bail!(Domain, "joint table has a negative or NaN entry");
    }
    let total: f64 = joint.iter().flatten().sum();
    if (total - 1.0).abs() > 1e-9 {
        bail!(Domain, "joint table sums to {total}, not 1");
    }
    let px: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..cols).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (px[i] * py[j])).ln();
            }
        }
    }
    // Rounding can leave a product table a hair below zero.
    Ok(mi.max(0.0))
}

/// Pearson correlation coefficient.
pub fn pearson(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.len() < 2 {
        bail!(Size, "pearson needs equal lengths >= 2, got {} and {}", u.len(), v.len());
    }
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let (mut suv, mut suu, mut svv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (da, db) = (a - mu, b - mv);
        suv += da * db;
        suu += da * da;
        svv += db * db;
    }
    if !(suu > 0.0) || !(svv > 0.0) {
        return Err(Error::Degenerate(format!("zero variance (su {suu}, sv {svv})")));
    }
    Ok((suv / (suu.sqrt() * svv.sqrt())).clamp(-1.0, 1.0))
}

/// A point in mean / standard-deviation space with the blend weight or code
/// value that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrontierPoint {
    pub code_or_alpha: f64,
    pub mean: f64,
    pub stdev: f64,
}

/// Mean and standard deviation of a binned return distribution over
/// `[-0.1, 0.1]`, placing each bin's mass at its midpoint.
pub fn mean_std_of_distribution(bins: &[f64], tag: f64) -> Result<FrontierPoint> {
    if bins.is_empty() {
        bail!(Size, "empty distribution");
    }
    let total: f64 = bins.iter().sum();
    if bins.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        bail!(Domain, "bins must be non-negative and sum to 1, got sum {total}");
    }
    let mids: Vec<f64> = (0..bins.len()).map(|i| bin_midpoint(i, bins.len())).collect();
    let mean: f64 = bins.iter().zip(&mids).map(|(p, m)| p * m).sum();
    let var: f64 = bins.iter().zip(&mids).map(|(p, m)| p * (m - mean) * (m - mean)).sum();
    Ok(FrontierPoint {
        code_or_alpha: tag,
        mean,
        stdev: var.sqrt(),
    })
}

/// Generator outputs collected at one code value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSegment {
    pub code: f64,
    pub outputs: Vec<Vec<f64>>,
}

impl SweepSegment {
    /// Element-wise mean of the outputs.
    pub fn mean_output(&self) -> Vec<f64> {
        let dim = self.outputs.first().map_or(0, Vec::len);
        let mut acc = vec![0.0; dim];
        for out in &self.outputs {
            acc.iter_mut().zip(out).for_each(|(a, o)| *a += o);
        }
        let n = self.outputs.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Frontier point of the averaged distribution (distribution readout).
    pub fn frontier_point(&self) -> Result<FrontierPoint> {
        let mut avg = self.mean_output();
        let total: f64 = avg.iter().sum();
        // Averaging normalized vectors only drifts by rounding.
        avg.iter_mut().for_each(|p| *p /= total);
        mean_std_of_distribution(&avg, self.code)
    }

    /// Outputs as `(x, y)` points (point readout).
    pub fn cloud(&self) -> Vec<(f64, f64)> {
        self.outputs.iter().map(|o| (o[0], o[1])).collect()
    }
}

/// Splits the code range into `segments` equal pieces; at each midpoint,
/// draws `draws_per_segment` latent vectors with every other entry random,
/// pins entry `code_index` to the midpoint and evaluates the generator.
pub fn code_sweep<R: Rng + ?Sized>(
    generator: &GeneratorSpec,
    code_index: usize,
    segments: usize,
    draws_per_segment: usize,
    rng: &mut R,
) -> Result<Vec<SweepSegment>> {
    if code_index >= generator.qubits() {
        bail!(Index, "code index {code_index} out of range for {} latent entries", generator.qubits());
    }
    if segments < 2 || draws_per_segment == 0 {
        bail!(Size, "sweep needs segments >= 2 and draws >= 1, got {segments} and {draws_per_segment}");
    }
    let domain = generator.noise_domain();
    let (lo, hi) = domain.bounds();
    (0..segments)
        .map(|s| {
            let code = lo + (hi - lo) * (s as f64 + 0.5) / segments as f64;
            let outputs = (0..draws_per_segment)
                .map(|_| {
                    let mut z = LatentSample::random(generator.qubits(), 0, domain, rng);
                    z.set(code_index, code)?;
                    generator.generate(&z)
                })
                .collect::<Result<_>>()?;
            Ok(SweepSegment { code, outputs })
        })
        .collect()
}

/// Frontier points of a distribution-readout sweep.
pub fn sweep_frontier(segments: &[SweepSegment]) -> Result<Vec<FrontierPoint>> {
    segments.iter().map(SweepSegment::frontier_point).collect()
}

/// Pearson correlation between each listed latent entry and each output
/// coordinate over `draws` fresh latent samples. Entry `[i][k]` pairs latent
/// `latent_indices[i]` with output `k`; a constant output reports 0.
pub fn latent_output_correlations<R: Rng + ?Sized>(
    generator: &GeneratorSpec,
    latent_indices: &[usize],
    draws: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if let Some(&i) = latent_indices.iter().find(|&&i| i >= generator.qubits()) {
        bail!(Index, "latent index {i} out of range for {} entries", generator.qubits());
    }
    let domain = generator.noise_domain();
    let mut latents = Vec::with_capacity(draws);
    let mut outputs = Vec::with_capacity(draws);
    for _ in 0..draws {
        let z = LatentSample::random(generator.qubits(), 0, domain, rng);
        outputs.push(generator.generate(&z)?);
        latents.push(z);
    }
    let dim = generator.output_dim();
    latent_indices
        .iter()
        .map(|&i| {
            let u: Vec<f64> = latents.iter().map(|z| z.noise[i]).collect();
            (0..dim)
                .map(|k| {
                    let v: Vec<f64> = outputs.iter().map(|o| o[k]).collect();
                    match pearson(&u, &v) {
                        Err(Error::Degenerate(_)) => Ok(0.0),
                        other => other,
                    }
                })
                .collect()
        })
        .collect()
}

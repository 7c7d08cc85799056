//! 2D target point clouds: a uniform disk and a uniform axis-aligned square.

use alloc::vec::Vec;

// Needed without std; the unused-import lint misfires on recent toolchains.
#[allow(unused_imports)]
use num_traits::Float;
use core::f64::consts::PI;

use rand::Rng;

use crate::error::{bail, Result};

/// Axis-aligned box `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Domain {
    pub const UNIT_SQUARE: Domain = Domain {
        x_min: 0.0,
        x_max: 1.0,
        y_min: 0.0,
        y_max: 1.0,
    };

    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<(f64, f64)>,
    pub domain: Domain,
}

impl PointCloud {
    pub fn new(points: Vec<(f64, f64)>, domain: Domain) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !domain.contains(**p)) {
            bail!(Geometry, "point {p:?} lies outside {domain:?}");
        }
        Ok(Self { points, domain })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }
}

/// `n` points uniform on the disk, drawn in polar form with `r = R sqrt(u)`
/// so the radial density is proportional to area.
pub fn biased_circle<R: Rng + ?Sized>(
    n: usize,
    center: (f64, f64),
    radius: f64,
    rng: &mut R,
) -> Result<PointCloud> {
    let (cx, cy) = center;
    let domain = Domain::UNIT_SQUARE;
    if !(radius > 0.0)
        || !domain.contains((cx - radius, cy - radius))
        || !domain.contains((cx + radius, cy + radius))
    {
        bail!(Geometry, "disk at {center:?} with radius {radius} does not fit in the unit square");
    }
    let points = (0..n)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let (s, c) = (2.0 * PI * rng.random::<f64>()).sin_cos();
            // Clamp guards against rounding a boundary point a hair outside.
            let x = (cx + r * c).clamp(cx - radius, cx + radius);
            let y = (cy + r * s).clamp(cy - radius, cy + radius);
            (x, y)
        })
        .collect();
    PointCloud::new(points, domain)
}

/// `n` points uniform on the axis-aligned square of side `side`.
pub fn central_square<R: Rng + ?Sized>(
    n: usize,
    center: (f64, f64),
    side: f64,
    rng: &mut R,
) -> Result<PointCloud> {
    let (cx, cy) = center;
    let h = side / 2.0;
    let domain = Domain::UNIT_SQUARE;
    if !(side > 0.0) || !domain.contains((cx - h, cy - h)) || !domain.contains((cx + h, cy + h)) {
        bail!(Geometry, "square at {center:?} with side {side} does not fit in the unit square");
    }
    let points = (0..n)
        .map(|_| {
            (
                rng.random_range(cx - h..=cx + h),
                rng.random_range(cy - h..=cy + h),
            )
        })
        .collect();
    PointCloud::new(points, domain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    fn variance(xs: &[f64]) -> f64 {
        let m = mean(xs);
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn circle_containment_and_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cloud = biased_circle(2000, (0.3, 0.3), 0.25, &mut rng).unwrap();
        assert_eq!(cloud.len(), 2000);
        for &(x, y) in &cloud.points {
            assert!(((x - 0.3).powi(2) + (y - 0.3).powi(2)).sqrt() <= 0.25 + 1e-12);
        }
        // Per-axis sd of a uniform disk is R / 2.
        let tol = 3.0 * (0.25 / 2.0) / (2000f64).sqrt();
        assert!((mean(&cloud.xs()) - 0.3).abs() < tol);
        assert!((mean(&cloud.ys()) - 0.3).abs() < tol);
        assert!(biased_circle(0, (0.3, 0.3), 0.25, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn square_containment_and_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cloud = central_square(2000, (0.5, 0.5), 0.5, &mut rng).unwrap();
        assert!(cloud.points.iter().all(|&(x, y)| (x - 0.5).abs() <= 0.25 && (y - 0.5).abs() <= 0.25));
        let expected = 0.25 / 12.0;
        assert!((variance(&cloud.xs()) / expected - 1.0).abs() < 0.2);
        assert!((variance(&cloud.ys()) / expected - 1.0).abs() < 0.2);
        let one = central_square(1, (0.5, 0.5), 0.5, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn shapes_must_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        assert!(biased_circle(10, (0.1, 0.3), 0.25, &mut rng).is_err());
        assert!(central_square(10, (0.9, 0.5), 0.5, &mut rng).is_err());
    }

    #[test]
    fn seeded_clouds_repeat() {
        let a = biased_circle(50, (0.3, 0.3), 0.25, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = biased_circle(50, (0.3, 0.3), 0.25, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
    }
}

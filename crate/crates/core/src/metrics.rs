//! Reconstruction error with global phase/scale alignment over the illuminated region.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::ScanGeometry;
use crate::grid::ComplexGrid;

pub const DEFAULT_MASK_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMask")]
pub struct IlluminationMask {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

#[derive(Deserialize)]
struct RawMask {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl TryFrom<RawMask> for IlluminationMask {
    type Error = Error;

    fn try_from(r: RawMask) -> Result<Self> {
        Self::from_vec(r.width, r.height, r.mask)
    }
}

impl IlluminationMask {
    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, mask: vec![true; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "mask of {} samples for {width}x{height}",
                mask.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyMask("no pixel selected".into()));
        }
        Ok(Self { width, height, mask })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }
}

/// Total probe intensity `sum_X |P(x - X)|^2` over the object array.
pub fn coverage(probe: &ComplexGrid, geometry: &ScanGeometry) -> Vec<f64> {
    let (ow, oh) = geometry.object_dims();
    let (pw, ph) = probe.dims();
    let mut cov = vec![0.0; ow * oh];
    for p in geometry.positions() {
        for y in 0..ph {
            for x in 0..pw {
                cov[(p.y + y) * ow + p.x + x] += probe.get(x, y).norm_sqr();
            }
        }
    }
    cov
}

/// Pixels whose total probe intensity reaches `threshold` times its maximum.
pub fn illumination_mask(
    probe: &ComplexGrid,
    geometry: &ScanGeometry,
    threshold: f64,
) -> Result<IlluminationMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("mask threshold must lie in (0, 1), got {threshold}")));
    }
    if probe.dims() != geometry.window() {
        return Err(Error::DimensionMismatch("probe does not match scan window".into()));
    }
    let cov = coverage(probe, geometry);
    let max = cov.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::EmptyMask("probe is identically zero".into()));
    }
    let (w, h) = geometry.object_dims();
    let mask: Vec<bool> = cov.iter().map(|&c| c > 0.0 && c >= threshold * max).collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask(format!("threshold {threshold} selects nothing")));
    }
    Ok(IlluminationMask { width: w, height: h, mask })
}

/// Least-squares complex factor `c` minimising `||c * estimate - truth||` over the mask.
pub fn alignment_factor(estimate: &ComplexGrid, truth: &ComplexGrid, mask: &IlluminationMask) -> Result<Complex64> {
    estimate.same_dims(truth)?;
    if estimate.dims() != mask.dims() {
        return Err(Error::DimensionMismatch("mask does not match grids".into()));
    }
    let mut cross = Complex64::new(0.0, 0.0);
    let mut energy = 0.0;
    for ((e, t), &m) in estimate.data().iter().zip(truth.data()).zip(mask.as_slice()) {
        if m {
            cross += e.conj() * t;
            energy += e.norm_sqr();
        }
    }
    if energy == 0.0 {
        return Err(Error::ZeroEstimate);
    }
    Ok(cross / energy)
}

/// `||c * estimate - truth|| / ||truth||` over the mask after optimal alignment.
pub fn align_and_error(estimate: &ComplexGrid, truth: &ComplexGrid, mask: &IlluminationMask) -> Result<f64> {
    let c = alignment_factor(estimate, truth, mask)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for ((e, t), &m) in estimate.data().iter().zip(truth.data()).zip(mask.as_slice()) {
        if m {
            num += (c * e - t).norm_sqr();
            den += t.norm_sqr();
        }
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("truth is zero on the mask".into()));
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{make_probe, raster_positions, Position, ProbeKind};
    use crate::testutil::random_grid;

    fn full(g: &ComplexGrid) -> IlluminationMask {
        IlluminationMask::full(g.width(), g.height())
    }

    #[test]
    fn single_position_tophat_mask_is_the_disc() {
        let probe = make_probe(ProbeKind::Tophat, 5.0, (16, 16)).unwrap();
        let geom = ScanGeometry::new(vec![Position { x: 4, y: 2 }], (16, 16), (24, 24)).unwrap();
        let mask = illumination_mask(&probe, &geom, 0.5).unwrap();
        for y in 0..24 {
            for x in 0..24 {
                let inside = x >= 4 && y >= 2 && x < 20 && y < 18 && probe.get(x - 4, y - 2).re == 1.0;
                assert_eq!(mask.contains(x, y), inside);
            }
        }
    }

    #[test]
    fn tiny_threshold_selects_union_of_supports() {
        let probe = make_probe(ProbeKind::Gaussian, 3.0, (8, 8)).unwrap();
        let geom = raster_positions((20, 20), (8, 8), 4, 1, 2).unwrap();
        let mask = illumination_mask(&probe, &geom, 1e-300).unwrap();
        let cov = coverage(&probe, &geom);
        for (i, &c) in cov.iter().enumerate() {
            assert_eq!(mask.as_slice()[i], c > 0.0);
        }
    }

    #[test]
    fn two_position_mask_count_by_enumeration() {
        let probe = make_probe(ProbeKind::Tophat, 3.0, (8, 8)).unwrap();
        let a = Position { x: 0, y: 0 };
        let b = Position { x: 3, y: 0 };
        let geom = ScanGeometry::new(vec![a, b], (8, 8), (12, 8)).unwrap();
        // Coverage is 1 in exactly one disc, 2 in the lens; threshold 0.75 keeps the lens only.
        let in_disc = |p: Position, x: usize, y: usize| {
            x >= p.x && x < p.x + 8 && y >= p.y && y < p.y + 8 && {
                let (dx, dy) = (x as f64 - (p.x + 4) as f64, y as f64 - (p.y + 4) as f64);
                dx * dx + dy * dy <= 9.0
            }
        };
        let mut lens = 0;
        let mut union = 0;
        for y in 0..8 {
            for x in 0..12 {
                let (ia, ib) = (in_disc(a, x, y), in_disc(b, x, y));
                lens += (ia && ib) as usize;
                union += (ia || ib) as usize;
            }
        }
        assert_eq!(illumination_mask(&probe, &geom, 0.75).unwrap().count(), lens);
        assert_eq!(illumination_mask(&probe, &geom, 0.4).unwrap().count(), union);
    }

    #[test]
    fn mask_errors() {
        let probe = make_probe(ProbeKind::Tophat, 3.0, (8, 8)).unwrap();
        let geom = raster_positions((16, 16), (8, 8), 4, 0, 0).unwrap();
        assert!(illumination_mask(&probe, &geom, 1.0).is_err());
        assert!(illumination_mask(&probe, &geom, 0.0).is_err());
        let zero = ComplexGrid::zeros(8, 8);
        assert!(matches!(illumination_mask(&zero, &geom, 0.5), Err(Error::EmptyMask(_))));
    }

    #[test]
    fn phase_and_scale_are_absorbed() {
        let t = random_grid(16, 16, 1);
        let m = full(&t);
        let rotated = t.scale(Complex64::from_polar(1.0, 0.7));
        assert!(align_and_error(&rotated, &t, &m).unwrap() < 1e-12);
        let doubled = t.scale(Complex64::new(2.0, 0.0));
        assert!(align_and_error(&doubled, &t, &m).unwrap() < 1e-12);
        assert!(align_and_error(&t, &t, &m).unwrap() < 1e-15);
    }

    #[test]
    fn orthogonal_perturbation() {
        let t = random_grid(16, 16, 2);
        let q = random_grid(16, 16, 3);
        // Gram-Schmidt q against t, then scale to 0.1 ||t||.
        let proj: Complex64 = t.data().iter().zip(q.data()).map(|(a, b)| a.conj() * b).sum::<Complex64>()
            / t.norm_sqr();
        let p = ComplexGrid::from_fn(16, 16, |x, y| q.get(x, y) - proj * t.get(x, y));
        let p = p.scale(Complex64::new(0.1 * t.norm() / p.norm(), 0.0));
        let est = ComplexGrid::from_fn(16, 16, |x, y| t.get(x, y) + p.get(x, y));
        let err = align_and_error(&est, &t, &full(&t)).unwrap();
        // With c = 1/1.01 the residual is (-0.01 t + p)/1.01, of relative norm 0.1/sqrt(1.01).
        assert!((err - 0.1 / 1.01f64.sqrt()).abs() < 1e-10, "err {err}");

        // Brute-force oracle: scan real scale factors around 1/1.01 (c is real here).
        let brute = (0..2001)
            .map(|i| 0.98 + 0.00002 * i as f64)
            .map(|c| {
                let r: f64 = est.data().iter().zip(t.data()).map(|(e, tv)| (e * c - tv).norm_sqr()).sum();
                (r / t.norm_sqr()).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((brute - err).abs() < 1e-8);
    }

    #[test]
    fn zero_estimate_is_reported() {
        let t = random_grid(4, 4, 4);
        let z = ComplexGrid::zeros(4, 4);
        assert!(matches!(align_and_error(&z, &t, &full(&t)), Err(Error::ZeroEstimate)));
    }

    #[test]
    fn shrinking_mask_drops_terms() {
        let t = random_grid(12, 12, 5);
        let e = random_grid(12, 12, 6);
        let big = full(&t);
        let small_bits: Vec<bool> = (0..144).map(|i| i % 3 != 0).collect();
        let small = IlluminationMask::from_vec(12, 12, small_bits).unwrap();
        // For any fixed c, the masked residual sum over a subset is no larger.
        let c = alignment_factor(&e, &t, &big).unwrap();
        let sum = |m: &IlluminationMask| -> f64 {
            e.data()
                .iter()
                .zip(t.data())
                .zip(m.as_slice())
                .filter(|(_, &k)| k)
                .map(|((ev, tv), _)| (c * ev - tv).norm_sqr())
                .sum()
        };
        assert!(sum(&small) <= sum(&big));
    }

    proptest::proptest! {
        #[test]
        fn error_is_invariant_to_phase_and_scale(seed in 0u64..500, phi in -3.2f64..3.2, s in 0.01f64..100.0) {
            let t = random_grid(8, 8, seed);
            let e = random_grid(8, 8, seed + 1000);
            let m = full(&t);
            let base = align_and_error(&e, &t, &m).unwrap();
            let moved = align_and_error(&e.scale(Complex64::from_polar(s, phi)), &t, &m).unwrap();
            proptest::prop_assert!((base - moved).abs() < 1e-10);
            proptest::prop_assert!(base > 0.0);
        }
    }
}

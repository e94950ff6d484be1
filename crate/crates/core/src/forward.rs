//! Objects, probes, scan geometries and noise-free diffraction stacks.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dft2, idft2, zero_pad_center, ComplexGrid, RealGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    RealSpace,
    FourierSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Tophat,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    CheckerboardText,
    SmoothPortrait,
}

/// Top-left pixel offset of a probe window inside the object array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Position {
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry")]
pub struct ScanGeometry {
    positions: Vec<Position>,
    window: (usize, usize),
    object_dims: (usize, usize),
}

#[derive(Deserialize)]
struct RawGeometry {
    positions: Vec<Position>,
    window: (usize, usize),
    object_dims: (usize, usize),
}

impl TryFrom<RawGeometry> for ScanGeometry {
    type Error = Error;

    fn try_from(r: RawGeometry) -> Result<Self> {
        Self::new(r.positions, r.window, r.object_dims)
    }
}

impl ScanGeometry {
    pub fn new(
        positions: Vec<Position>,
        window: (usize, usize),
        object_dims: (usize, usize),
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InfeasibleGeometry("no scan positions".into()));
        }
        if window.0 == 0 || window.1 == 0 {
            return Err(Error::InfeasibleGeometry("empty probe window".into()));
        }
        for p in &positions {
            check_window(*p, window, object_dims)?;
        }
        Ok(Self { positions, window, object_dims })
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn window(&self) -> (usize, usize) {
        self.window
    }

    pub fn object_dims(&self) -> (usize, usize) {
        self.object_dims
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn check_window(p: Position, window: (usize, usize), object_dims: (usize, usize)) -> Result<()> {
    if p.x + window.0 > object_dims.0 || p.y + window.1 > object_dims.1 {
        return Err(Error::OutOfBounds {
            x: p.x,
            y: p.y,
            w: window.0,
            h: window.1,
            ow: object_dims.0,
            oh: object_dims.1,
        });
    }
    Ok(())
}

/// Measured intensities together with everything needed to reconstruct from them.
///
/// In Fourier mode the patterns are those of real-space ptychography on the
/// object's spectrum, so reconstruction always runs in the "effective" domain
/// returned by [`effective_object`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct Dataset {
    pub mode: Mode,
    pub geometry: ScanGeometry,
    pub oversampling: usize,
    pub patterns: Vec<RealGrid>,
    pub probe: ComplexGrid,
}

#[derive(Deserialize)]
struct RawDataset {
    mode: Mode,
    geometry: ScanGeometry,
    oversampling: usize,
    patterns: Vec<RealGrid>,
    probe: ComplexGrid,
}

impl TryFrom<RawDataset> for Dataset {
    type Error = Error;

    fn try_from(r: RawDataset) -> Result<Self> {
        Self::new(r.mode, r.geometry, r.oversampling, r.patterns, r.probe)
    }
}

impl Dataset {
    pub fn new(
        mode: Mode,
        geometry: ScanGeometry,
        oversampling: usize,
        patterns: Vec<RealGrid>,
        probe: ComplexGrid,
    ) -> Result<Self> {
        if oversampling == 0 {
            return Err(Error::InvalidArgument("oversampling must be >= 1".into()));
        }
        if probe.dims() != geometry.window() {
            return Err(Error::DimensionMismatch(format!(
                "probe is {:?}, scan window is {:?}",
                probe.dims(),
                geometry.window()
            )));
        }
        if patterns.len() != geometry.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} patterns for {} positions",
                patterns.len(),
                geometry.len()
            )));
        }
        let expected = (geometry.window().0 * oversampling, geometry.window().1 * oversampling);
        if let Some(p) = patterns.iter().find(|p| p.dims() != expected) {
            return Err(Error::DimensionMismatch(format!(
                "pattern is {:?}, expected {:?}",
                p.dims(),
                expected
            )));
        }
        Ok(Self { mode, geometry, oversampling, patterns, probe })
    }

    pub fn pattern_dims(&self) -> (usize, usize) {
        let (w, h) = self.geometry.window();
        (w * self.oversampling, h * self.oversampling)
    }

    /// Same geometry and probe with different intensities.
    pub fn with_patterns(&self, patterns: Vec<RealGrid>) -> Result<Self> {
        Self::new(self.mode, self.geometry.clone(), self.oversampling, patterns, self.probe.clone())
    }
}

/// Probe of unit peak amplitude and flat phase, centered at `(w/2, h/2)`.
pub fn make_probe(kind: ProbeKind, radius: f64, window: (usize, usize)) -> Result<ComplexGrid> {
    let (w, h) = window;
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument("probe window must be nonempty".into()));
    }
    if !(radius >= 0.0) || radius > w.min(h) as f64 / 2.0 {
        return Err(Error::RadiusTooLarge { radius, w, h });
    }
    let (cx, cy) = ((w / 2) as f64, (h / 2) as f64);
    Ok(ComplexGrid::from_fn(w, h, |x, y| {
        let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
        let v = match kind {
            ProbeKind::Tophat => {
                if r2 <= radius * radius {
                    1.0
                } else {
                    0.0
                }
            }
            ProbeKind::Gaussian => {
                if radius == 0.0 {
                    if r2 == 0.0 { 1.0 } else { 0.0 }
                } else {
                    (-r2 / (2.0 * radius * radius)).exp()
                }
            }
        };
        Complex64::new(v, 0.0)
    }))
}

fn axis_positions(object: usize, window: usize, step: usize) -> Vec<usize> {
    (0..=object - window).step_by(step).collect()
}

/// Rectangular raster with seeded uniform integer jitter in `[-jitter, jitter]`
/// per axis, clamped so every window stays inside the object.
pub fn raster_positions(
    object_dims: (usize, usize),
    window: (usize, usize),
    step: usize,
    jitter: usize,
    seed: u64,
) -> Result<ScanGeometry> {
    if step == 0 {
        return Err(Error::InvalidArgument("scan step must be >= 1".into()));
    }
    if 2 * jitter >= step {
        return Err(Error::InvalidArgument(format!(
            "jitter {jitter} must be below half the step {step}"
        )));
    }
    if window.0 == 0 || window.1 == 0 || window.0 > object_dims.0 || window.1 > object_dims.1 {
        return Err(Error::InfeasibleGeometry(format!(
            "window {window:?} does not fit in object {object_dims:?}"
        )));
    }
    let xs = axis_positions(object_dims.0, window.0, step);
    let ys = axis_positions(object_dims.1, window.1, step);
    if xs.len() * ys.len() < 2 {
        return Err(Error::InfeasibleGeometry(format!(
            "step {step} leaves a single position for window {window:?} in object {object_dims:?}"
        )));
    }
    let (max_x, max_y) = ((object_dims.0 - window.0) as i64, (object_dims.1 - window.1) as i64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = jitter as i64;
    let mut positions = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            let (dx, dy) = if j > 0 {
                (rng.random_range(-j..=j), rng.random_range(-j..=j))
            } else {
                (0, 0)
            };
            positions.push(Position {
                x: (x as i64 + dx).clamp(0, max_x) as usize,
                y: (y as i64 + dy).clamp(0, max_y) as usize,
            });
        }
    }
    ScanGeometry::new(positions, window, object_dims)
}

/// Shared area of two windows offset by `step` along one axis, as a fraction of the window.
pub fn adjacent_overlap(step: usize, window: usize) -> f64 {
    window.saturating_sub(step) as f64 / window as f64
}

/// `O(x) P(x - X)` over the window at `position`.
pub fn exit_wave(object: &ComplexGrid, probe: &ComplexGrid, position: Position) -> Result<ComplexGrid> {
    let (pw, ph) = probe.dims();
    check_window(position, (pw, ph), object.dims())?;
    Ok(ComplexGrid::from_fn(pw, ph, |x, y| {
        object.get(position.x + x, position.y + y) * probe.get(x, y)
    }))
}

/// Far-field intensity `|dft2(pad(exit))|^2`.
pub fn diffract(exit: &ComplexGrid, oversampling: usize) -> Result<RealGrid> {
    let padded = zero_pad_center(exit, oversampling)?;
    Ok(dft2(&padded).intensity())
}

/// The field that real-space ptychography actually sees for a given mode.
pub fn effective_object(object: &ComplexGrid, mode: Mode) -> ComplexGrid {
    match mode {
        Mode::RealSpace => object.clone(),
        Mode::FourierSpace => dft2(object),
    }
}

/// Intensities for every position of `geometry` using an already-effective object.
pub fn intensity_stack(
    effective: &ComplexGrid,
    probe: &ComplexGrid,
    geometry: &ScanGeometry,
    oversampling: usize,
) -> Result<Vec<RealGrid>> {
    if effective.dims() != geometry.object_dims() {
        return Err(Error::DimensionMismatch(format!(
            "object is {:?}, geometry expects {:?}",
            effective.dims(),
            geometry.object_dims()
        )));
    }
    geometry
        .positions()
        .iter()
        .map(|&p| diffract(&exit_wave(effective, probe, p)?, oversampling))
        .collect()
}

/// Multiplies `object` by `(-1)^(x+y)`, which moves the zero frequency of
/// `dft2(object)` from (0, 0) to (w/2, h/2) when both dimensions are even.
pub fn center_spectrum(object: &ComplexGrid) -> ComplexGrid {
    ComplexGrid::from_fn(object.width(), object.height(), |x, y| {
        if (x + y) % 2 == 0 {
            object.get(x, y)
        } else {
            -object.get(x, y)
        }
    })
}

/// Noise-free intensity stack. Fourier mode runs the real-space pipeline on `dft2(object)`,
/// with the probe acting as the pupil.
pub fn simulate_dataset(
    object: &ComplexGrid,
    probe: &ComplexGrid,
    geometry: &ScanGeometry,
    mode: Mode,
    oversampling: usize,
) -> Result<Vec<RealGrid>> {
    intensity_stack(&effective_object(object, mode), probe, geometry, oversampling)
}

/// Noise-free [`Dataset`] for `object`.
pub fn simulate(
    object: &ComplexGrid,
    probe: &ComplexGrid,
    geometry: &ScanGeometry,
    mode: Mode,
    oversampling: usize,
) -> Result<Dataset> {
    let patterns = simulate_dataset(object, probe, geometry, mode, oversampling)?;
    Dataset::new(mode, geometry.clone(), oversampling, patterns, probe.clone())
}

fn check_range(name: &str, range: (f64, f64), lo: f64, hi: f64, open_lo: bool) -> Result<()> {
    let (a, b) = range;
    let lo_ok = if open_lo { a > lo } else { a >= lo };
    if !(a.is_finite() && b.is_finite() && lo_ok && a <= b && b <= hi) {
        return Err(Error::InvalidArgument(format!("{name} range [{a}, {b}] outside allowed bounds")));
    }
    Ok(())
}

fn rescale(field: &[f64], range: (f64, f64)) -> Vec<f64> {
    let min = field.iter().copied().fold(f64::INFINITY, f64::min);
    let max = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    field
        .iter()
        .map(|&v| {
            let t = if span > 0.0 { (v - min) / span } else { 0.0 };
            range.0 + t * (range.1 - range.0)
        })
        .collect()
}

fn checkerboard(w: usize, h: usize) -> Vec<f64> {
    let cell = (w.min(h) / 8).max(1);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push(if (x / cell + y / cell) % 2 == 0 { 1.0 } else { 0.0 });
        }
    }
    out
}

/// A band of blocky 3x5 glyphs across the middle of the frame.
fn glyph_text(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale = (w.min(h) / 24).max(1);
    let (gw, gh) = (3 * scale, 5 * scale);
    let pitch = gw + scale;
    let n_glyphs = (w.saturating_sub(scale)) / pitch;
    let top = h.saturating_sub(gh) / 2;
    let left = (w - n_glyphs * pitch + scale) / 2;
    let glyphs: Vec<[bool; 15]> = (0..n_glyphs)
        .map(|_| {
            let mut g = [false; 15];
            for b in g.iter_mut() {
                *b = rng.random_bool(0.55);
            }
            g
        })
        .collect();
    let mut out = vec![0.0; w * h];
    for (i, g) in glyphs.iter().enumerate() {
        let gx0 = left + i * pitch;
        for yy in 0..gh {
            for xx in 0..gw {
                let (x, y) = (gx0 + xx, top + yy);
                if x < w && y < h && g[(yy / scale) * 3 + xx / scale] {
                    out[y * w + x] = 1.0;
                }
            }
        }
    }
    out
}

fn smooth_field(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise = ComplexGrid::from_fn(w, h, |_, _| Complex64::new(rng.sample(StandardNormal), 0.0));
    let spectrum = dft2(&noise);
    // Gaussian low-pass, cutoff around six cycles across the frame.
    let cutoff = 6.0;
    let filtered = ComplexGrid::from_fn(w, h, |u, v| {
        let fu = if u <= w / 2 { u as f64 } else { u as f64 - w as f64 };
        let fv = if v <= h / 2 { v as f64 } else { v as f64 - h as f64 };
        let k2 = fu * fu + fv * fv;
        spectrum.get(u, v) * (-k2 / (2.0 * cutoff * cutoff)).exp()
    });
    idft2(&filtered).data().iter().map(|c| c.re).collect()
}

/// Synthetic test object. Amplitude comes from the first named pattern
/// (checkerboard, or a smooth random field) and phase from the second
/// (glyph text, or an independent smooth field).
pub fn synthesize_object(
    kind: ObjectKind,
    dims: (usize, usize),
    amplitude_range: (f64, f64),
    phase_range: (f64, f64),
    seed: u64,
) -> Result<ComplexGrid> {
    let (w, h) = dims;
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument("object dimensions must be positive".into()));
    }
    check_range("amplitude", amplitude_range, 0.0, 1.0, true)?;
    check_range("phase", phase_range, -PI, PI, false)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (amp, phase) = match kind {
        ObjectKind::CheckerboardText => (checkerboard(w, h), glyph_text(w, h, &mut rng)),
        ObjectKind::SmoothPortrait => (smooth_field(w, h, &mut rng), smooth_field(w, h, &mut rng)),
    };
    let amp = rescale(&amp, amplitude_range);
    let phase = rescale(&phase, phase_range);
    let data = amp.iter().zip(&phase).map(|(&a, &p)| Complex64::from_polar(a, p)).collect();
    ComplexGrid::new(w, h, data)
}

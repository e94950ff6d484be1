//! Dense complex and real 2-D grids and the unitary DFT.
//!
//! Grids are row-major. The DFT places zero frequency at index (0, 0) and
//! scales by `1/sqrt(width*height)` in both directions, so `dft2` and
//! `idft2` are exact inverses and preserve the L2 norm.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid<Complex64>")]
pub struct ComplexGrid {
    width: usize,
    height: usize,
    data: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid<f64>")]
pub struct RealGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

// Deserialization goes through the validating constructors.
#[derive(Deserialize)]
struct RawGrid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl TryFrom<RawGrid<Complex64>> for ComplexGrid {
    type Error = Error;

    fn try_from(r: RawGrid<Complex64>) -> Result<Self> {
        Self::new(r.width, r.height, r.data)
    }
}

impl TryFrom<RawGrid<f64>> for RealGrid {
    type Error = Error;

    fn try_from(r: RawGrid<f64>) -> Result<Self> {
        Self::new(r.width, r.height, r.data)
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid dimensions must be positive, got {width}x{height}"
        )));
    }
    if width * height != len {
        return Err(Error::DimensionMismatch(format!(
            "{width}x{height} grid needs {} samples, got {len}",
            width * height
        )));
    }
    Ok(())
}

impl ComplexGrid {
    pub fn new(width: usize, height: usize, data: Vec<Complex64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("complex grid sample".into()));
        }
        Ok(Self { width, height, data })
    }

    /// Panics on zero dimensions.
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, Complex64::new(0.0, 0.0))
    }

    pub fn filled(width: usize, height: usize, value: Complex64) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: Complex64) {
        self.data[y * self.width + x] = v;
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `|G|^2` pixelwise.
    pub fn intensity(&self) -> RealGrid {
        RealGrid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v.norm_sqr()).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Largest pixelwise `|a - b|`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl RealGrid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "real grid samples must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        assert!(value >= 0.0 && value.is_finite());
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Pixelwise map. The caller keeps the output nonnegative.
    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.dims(), other.dims());
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        assert!(s >= 0.0);
        self.map(|v| v * s)
    }

    pub fn sqrt(&self) -> Self {
        self.map(f64::sqrt)
    }

    pub fn same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn transform(field: &ComplexGrid, direction: FftDirection) -> ComplexGrid {
    let (w, h) = field.dims();
    let mut data = field.data.clone();
    let (row_fft, col_fft) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft(w, direction), p.plan_fft(h, direction))
    });

    row_fft.process(&mut data);

    if h > 1 {
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for x in 0..w {
            for y in 0..h {
                column[y] = data[y * w + x];
            }
            col_fft.process(&mut column);
            for y in 0..h {
                data[y * w + x] = column[y];
            }
        }
    }

    let norm = 1.0 / ((w * h) as f64).sqrt();
    for v in &mut data {
        *v *= norm;
    }
    ComplexGrid { width: w, height: h, data }
}

/// Unitary forward DFT, `F(u) = N^{-1/2} sum_x f(x) exp(-2 pi i u.x)`.
pub fn dft2(field: &ComplexGrid) -> ComplexGrid {
    transform(field, FftDirection::Forward)
}

/// Unitary inverse DFT; exact inverse of [`dft2`].
pub fn idft2(field: &ComplexGrid) -> ComplexGrid {
    transform(field, FftDirection::Inverse)
}

/// Offset of a centered `small` window inside `big`.
#[inline]
pub fn center_offset(big: usize, small: usize) -> usize {
    (big - small) / 2
}

/// Embeds `field` in the center of a grid `factor` times larger per axis.
pub fn zero_pad_center(field: &ComplexGrid, factor: usize) -> Result<ComplexGrid> {
    if factor == 0 {
        return Err(Error::InvalidArgument("padding factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(field.clone());
    }
    let (w, h) = field.dims();
    let (bw, bh) = (w * factor, h * factor);
    let (ox, oy) = (center_offset(bw, w), center_offset(bh, h));
    let mut out = ComplexGrid::zeros(bw, bh);
    for y in 0..h {
        let src = &field.data[y * w..(y + 1) * w];
        let start = (y + oy) * bw + ox;
        out.data[start..start + w].copy_from_slice(src);
    }
    Ok(out)
}

/// Centered sub-window; adjoint of [`zero_pad_center`].
pub fn crop_center(field: &ComplexGrid, width: usize, height: usize) -> Result<ComplexGrid> {
    let (bw, bh) = field.dims();
    if width == 0 || height == 0 || width > bw || height > bh {
        return Err(Error::DimensionMismatch(format!(
            "cannot crop {width}x{height} from {bw}x{bh}"
        )));
    }
    if (width, height) == (bw, bh) {
        return Ok(field.clone());
    }
    let (ox, oy) = (center_offset(bw, width), center_offset(bh, height));
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        let start = (y + oy) * bw + ox;
        data.extend_from_slice(&field.data[start..start + width]);
    }
    Ok(ComplexGrid { width, height, data })
}

//! Pixel grids and sub-pixel patch sampling.
//!
//! Cell `(col, row)` has its centroid at coordinates `(col, row)`; `x` runs
//! along columns and `y` along rows.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major grid of non-negative power returns.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Returns `None` when `data.len() != width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    /// Bilinear interpolation at `(x, y)`.
    ///
    /// Also returns the sum of squared interpolation weights, which scales
    /// the variance of independent per-cell noise at that point.
    pub fn bilinear(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        if self.width == 0 || self.height == 0 || !self.contains(x, y) {
            return None;
        }
        let x0 = libm::floor(x) as usize;
        let y0 = libm::floor(y) as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let v = self.get(x0, y0) * (1.0 - fx) * (1.0 - fy)
            + self.get(x1, y0) * fx * (1.0 - fy)
            + self.get(x0, y1) * (1.0 - fx) * fy
            + self.get(x1, y1) * fx * fy;
        let wx = (1.0 - fx) * (1.0 - fx) + fx * fx;
        let wy = (1.0 - fy) * (1.0 - fy) + fy * fy;
        Some((v, wx * wy))
    }

    /// Samples a `size × size` patch centred on `(x, y)` at unit spacing.
    pub fn sample_patch(&self, x: f64, y: f64, size: usize) -> PatchSample {
        let half = (size as f64 - 1.0) / 2.0;
        let mut values = Vec::with_capacity(size * size);
        for r in 0..size {
            for c in 0..size {
                let sx = x + c as f64 - half;
                let sy = y + r as f64 - half;
                values.push(self.bilinear(sx, sy));
            }
        }
        PatchSample { size, values }
    }
}

/// A patch sampled from an image. Entries outside the image are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub size: usize,
    /// `(value, Σ interpolation weight²)` per patch cell, row-major.
    pub values: Vec<Option<(f64, f64)>>,
}

impl PatchSample {
    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Converts to a full patch, or `None` when any cell falls off the image.
    pub fn to_patch(&self) -> Option<Patch> {
        let data = self
            .values
            .iter()
            .map(|v| v.map(|(x, _)| x))
            .collect::<Option<Vec<_>>>()?;
        Some(Patch {
            size: self.size,
            data,
        })
    }
}

/// Square block of pixel intensities (reference template).
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    size: usize,
    data: Vec<f64>,
}

impl Patch {
    pub fn filled(size: usize, value: f64) -> Self {
        Self {
            size,
            data: vec![value; size * size],
        }
    }

    pub fn from_vec(size: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == size * size).then_some(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ramp() -> Image {
        let mut img = Image::zeros(5, 4);
        for r in 0..4 {
            for c in 0..5 {
                img.set(c, r, (c + 10 * r) as f64);
            }
        }
        img
    }

    #[test]
    fn bilinear_hits_cell_values_at_centroids() {
        let img = ramp();
        assert_eq!(img.bilinear(3.0, 2.0), Some((23.0, 1.0)));
        assert_eq!(img.bilinear(4.0, 3.0), Some((34.0, 1.0)));
    }

    #[test]
    fn bilinear_is_exact_on_linear_fields() {
        let img = ramp();
        let (v, w2) = img.bilinear(1.5, 0.25).unwrap();
        assert_relative_eq!(v, 1.5 + 2.5, epsilon = 1e-12);
        assert_relative_eq!(w2, 0.5 * (0.75 * 0.75 + 0.25 * 0.25), epsilon = 1e-12);
    }

    #[test]
    fn outside_is_none() {
        let img = ramp();
        assert!(img.bilinear(-0.1, 1.0).is_none());
        assert!(img.bilinear(1.0, 3.01).is_none());
    }

    #[test]
    fn border_patch_is_clipped() {
        let img = ramp();
        let p = img.sample_patch(0.0, 0.0, 3);
        assert_eq!(p.valid_count(), 4);
        assert!(p.to_patch().is_none());
        let p = img.sample_patch(2.0, 1.0, 3);
        assert_eq!(p.valid_count(), 9);
        assert_eq!(p.to_patch().unwrap().data()[4], 12.0);
    }
}

use crate::error::{ensure, Result};

/// RGB image with values in [0, 1], row-major `(y·W + x)·3 + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize) -> Self {
        ImagePlane { width, height, rgb: vec![0.0; width * height * 3] }
    }

    pub fn from_rgb(width: usize, height: usize, rgb: Vec<f64>) -> Result<Self> {
        ensure(rgb.len() == width * height * 3, || {
            format!("rgb buffer has {} values, expected {}x{}x3", rgb.len(), width, height)
        })?;
        Ok(ImagePlane { width, height, rgb })
    }

    pub fn filled(width: usize, height: usize, value: [f64; 3]) -> Self {
        let rgb = (0..width * height).flat_map(|_| value).collect();
        ImagePlane { width, height, rgb }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, v: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.rgb[i..i + 3].copy_from_slice(&v);
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn same_shape(&self, other: &ImagePlane) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.rgb.len() == self.width * self.height * 3, || "rgb buffer size mismatch".into())?;
        ensure(self.rgb.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)), || {
            "image values must be finite and in [0, 1]".into()
        })
    }
}

/// Single-channel soft mask with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl SoftMask {
    pub fn new(width: usize, height: usize) -> Self {
        SoftMask { width, height, values: vec![0.0; width * height] }
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        SoftMask { width, height, values: vec![v; width * height] }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        ensure(values.len() == width * height, || {
            format!("mask buffer has {} values, expected {}x{}", values.len(), width, height)
        })?;
        Ok(SoftMask { width, height, values })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn same_shape(&self, other: &SoftMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn matches_image(&self, img: &ImagePlane) -> bool {
        self.width == img.width && self.height == img.height
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.values.len() == self.width * self.height, || "mask buffer size mismatch".into())?;
        ensure(self.values.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)), || {
            "mask values must be finite and in [0, 1]".into()
        })
    }
}

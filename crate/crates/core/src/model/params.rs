use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Sizes of the shape, expression and albedo coefficient vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub shape: usize,
    pub expression: usize,
    pub albedo: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims { shape: 100, expression: 50, albedo: 50 }
    }
}

/// The six parameter groups of a [`HeadParams`] vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Shape,
    Expression,
    Pose,
    Albedo,
    Camera,
    Light,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Shape,
        ParamGroup::Expression,
        ParamGroup::Pose,
        ParamGroup::Albedo,
        ParamGroup::Camera,
        ParamGroup::Light,
    ];
}

/// Per-image parameter vector: shape, expression, pose (global + jaw
/// axis-angle), albedo, weak-perspective camera `(s, tx, ty)` and 9×3
/// spherical-harmonic lighting (coefficient-major: `light[3·k + channel]`).
///
/// The same struct doubles as a gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub beta: Vec<f64>,
    pub psi: Vec<f64>,
    pub theta: [f64; 6],
    pub alpha: Vec<f64>,
    pub cam: [f64; 3],
    #[serde(with = "light_serde")]
    pub light: [f64; 27],
}

mod light_serde {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; 27], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; 27], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<f64>| D::Error::custom(format!("light: expected 27 values, got {}", v.len())))
    }
}

impl HeadParams {
    pub fn zeros(dims: ModelDims) -> Self {
        HeadParams {
            beta: vec![0.0; dims.shape],
            psi: vec![0.0; dims.expression],
            theta: [0.0; 6],
            alpha: vec![0.0; dims.albedo],
            cam: [0.0; 3],
            light: [0.0; 27],
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims { shape: self.beta.len(), expression: self.psi.len(), albedo: self.alpha.len() }
    }

    pub fn len(&self) -> usize {
        self.beta.len() + self.psi.len() + 6 + self.alpha.len() + 3 + 27
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn group(&self, g: ParamGroup) -> &[f64] {
        match g {
            ParamGroup::Shape => &self.beta,
            ParamGroup::Expression => &self.psi,
            ParamGroup::Pose => &self.theta,
            ParamGroup::Albedo => &self.alpha,
            ParamGroup::Camera => &self.cam,
            ParamGroup::Light => &self.light,
        }
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [f64] {
        match g {
            ParamGroup::Shape => &mut self.beta,
            ParamGroup::Expression => &mut self.psi,
            ParamGroup::Pose => &mut self.theta,
            ParamGroup::Albedo => &mut self.alpha,
            ParamGroup::Camera => &mut self.cam,
            ParamGroup::Light => &mut self.light,
        }
    }

    /// Flattens in group order β, ψ, θ, α, c, l.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for g in ParamGroup::ALL {
            out.extend_from_slice(self.group(g));
        }
        out
    }

    pub fn from_flat(dims: ModelDims, flat: &[f64]) -> Result<Self> {
        let mut p = HeadParams::zeros(dims);
        ensure(flat.len() == p.len(), || {
            format!("flat parameter vector has {} entries, expected {}", flat.len(), p.len())
        })?;
        let mut off = 0;
        for g in ParamGroup::ALL {
            let dst = p.group_mut(g);
            let n = dst.len();
            dst.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(p)
    }

    /// Group owning flat index `i`, and the offset within the group.
    pub fn locate(&self, mut i: usize) -> Option<(ParamGroup, usize)> {
        for g in ParamGroup::ALL {
            let n = self.group(g).len();
            if i < n {
                return Some((g, i));
            }
            i -= n;
        }
        None
    }

    pub fn get_flat(&self, i: usize) -> f64 {
        let (g, k) = self.locate(i).expect("flat index out of range");
        self.group(g)[k]
    }

    pub fn set_flat(&mut self, i: usize, v: f64) {
        let (g, k) = self.locate(i).expect("flat index out of range");
        self.group_mut(g)[k] = v;
    }

    /// `self += a·other`.
    pub fn axpy(&mut self, a: f64, other: &HeadParams) {
        for g in ParamGroup::ALL {
            for (x, y) in self.group_mut(g).iter_mut().zip(other.group(g)) {
                *x += a * y;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for g in ParamGroup::ALL {
            self.group_mut(g).iter_mut().for_each(|x| *x *= a);
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.to_flat().iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        ParamGroup::ALL.iter().all(|&g| self.group(g).iter().all(|x| x.is_finite()))
    }

    /// Checks dimensions against `dims`, finiteness, and `s > 0`.
    pub fn validate(&self, dims: ModelDims) -> Result<()> {
        self.check_dims(dims)?;
        ensure(self.is_finite(), || "parameters contain non-finite values".into())?;
        ensure(self.cam[0] > 0.0, || format!("camera scale must be > 0, got {}", self.cam[0]))
    }

    pub fn check_dims(&self, dims: ModelDims) -> Result<()> {
        ensure(self.dims() == dims, || {
            format!("parameter dims {:?} do not match model dims {:?}", self.dims(), dims)
        })
    }
}

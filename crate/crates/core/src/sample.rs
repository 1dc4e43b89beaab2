//! Seeded random potentials for property tests and the acceptance suite.
//!
//! Torus samples are low Fourier modes; sphere samples are Legendre series
//! in the moment coordinate (invariant spherical harmonics). Both are
//! rescaled so the minimum density lands at a requested margin.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::{ModelGeometry, ModelKind, Potential};

pub use rand::SeedableRng;

pub type Rng64 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Options for [`random_potential`].
#[derive(Debug, Clone, Copy)]
pub struct SampleSpec {
    /// Highest torus wave number / Legendre degree.
    pub modes: usize,
    /// Lowest sphere degree (2 keeps the sample off the first eigenspace).
    pub min_degree: usize,
    /// Range for `1 − min density`.
    pub depth: (f64, f64),
    /// Range of the random additive constant.
    pub constant: f64,
    /// Torus: restrict to functions of `x` alone.
    pub x_only: bool,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec { modes: 4, min_degree: 1, depth: (0.05, 0.9), constant: 1.0, x_only: false }
    }
}

/// Raw (unscaled, possibly inadmissible) random shape on the grid.
pub fn random_shape(model: &Arc<ModelGeometry>, rng: &mut Rng64, spec: &SampleSpec) -> Potential {
    match model.kind {
        ModelKind::Torus2 => {
            let n = model.n;
            let k = spec.modes as i64;
            let mut terms = Vec::new();
            for kx in -k..=k {
                for ky in -k..=k {
                    if (kx, ky) <= (0, 0) || (spec.x_only && ky != 0) {
                        continue;
                    }
                    let amp: f64 = rng.gen_range(-1.0..1.0) / ((kx * kx + ky * ky) as f64);
                    let phase: f64 = rng.gen_range(0.0..2.0 * PI);
                    terms.push((kx as f64, ky as f64, amp, phase));
                }
            }
            let samples = (0..n * n)
                .map(|idx| {
                    let (x, y) = model.torus_xy(idx);
                    terms.iter().map(|&(kx, ky, a, p)| a * (2.0 * PI * (kx * x + ky * y) + p).cos()).sum()
                })
                .collect();
            Potential::from_samples(model.clone(), samples).expect("grid sized")
        }
        ModelKind::P1Symmetric => {
            let mut coeffs = vec![0.0; spec.modes + 1];
            for (l, c) in coeffs.iter_mut().enumerate().skip(spec.min_degree.max(1)) {
                *c = rng.gen_range(-1.0..1.0) / l as f64;
            }
            Potential::legendre(model.clone(), &coeffs).expect("sphere grid")
        }
    }
}

/// Scales `shape` so that `min(1 + Δφ) = 1 − depth`, then adds `c`.
pub fn scale_to_depth(shape: &Potential, depth: f64, c: f64) -> Potential {
    let low = shape.density().min() - 1.0;
    let scale = if low < 0.0 { depth / (-low) } else { 0.0 };
    shape.scaled(scale).shifted(c)
}

/// A random admissible potential.
pub fn random_potential(model: &Arc<ModelGeometry>, rng: &mut Rng64, spec: &SampleSpec) -> Potential {
    let shape = random_shape(model, rng, spec);
    let depth = rng.gen_range(spec.depth.0..spec.depth.1);
    let c = if spec.constant > 0.0 { rng.gen_range(-spec.constant..spec.constant) } else { 0.0 };
    scale_to_depth(&shape, depth, c)
}

/// A random field (not necessarily admissible) of unit-ish size.
pub fn random_field(model: &Arc<ModelGeometry>, rng: &mut Rng64, modes: usize) -> Vec<f64> {
    let spec = SampleSpec { modes, ..SampleSpec::default() };
    random_shape(model, rng, &spec).into_samples()
}

//! Energy functionals on potentials.
//!
//! In complex dimension one every mixed wedge `ω^{n−l} ∧ ω_φ^l` is either
//! `ω` or `ω_φ`, so all functionals reduce to the two moments
//!
//! ```text
//! m₀ = ∫ φ ω,    m₁ = ∫ φ ω_φ
//! ```
//!
//! plus the entropy of the density. The formulas below keep the general
//! mixed-wedge shape (`J = V⁻¹m₀ − V⁻¹(m₀+m₁)/2`, ...) rather than the
//! simplifications they admit, so the identities between them are checked
//! rather than built in.

use crate::error::{Error, Result};
use crate::model::{DensityField, ModelGeometry, Potential};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aubin {
    pub i: f64,
    pub j: f64,
    pub i_minus_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalReport {
    pub i: f64,
    pub j: f64,
    pub i_minus_j: f64,
    pub am: f64,
    /// `Ent(e^{f_ω} ω, ω_φ)`.
    pub entropy_ref: f64,
    /// `Ent(ω, ω_φ)`.
    pub entropy_plain: f64,
    /// Entropy form with the `AM` and `∫φω_φ` terms.
    pub e_fano: f64,
    /// Entropy minus `μ(I − J)`.
    pub e_fano_ij: f64,
    /// Curvature form with `s₀ = nμ`.
    pub e_csc: f64,
    /// `E_fano − E_csc` predicted for a reference with nonzero `f_ω`: `−V⁻¹∫f_ω ω`.
    pub csc_offset: f64,
    /// Some node has density at or below the degeneracy level.
    pub degenerate: bool,
}

struct Moments {
    m0: f64,
    m1: f64,
}

fn moments(phi: &Potential, dens: &DensityField) -> Moments {
    let m = phi.model();
    let mut m0 = 0.0;
    let mut m1 = 0.0;
    for k in 0..m.len() {
        let wp = m.weights[k] * phi.samples()[k];
        m0 += wp;
        m1 += wp * dens.samples[k];
    }
    Moments { m0, m1 }
}

/// Aubin's `I`, `J` and `I − J`.
pub fn aubin(phi: &Potential) -> Result<Aubin> {
    let dens = phi.admissible_density()?;
    Ok(aubin_with(phi, &dens))
}

fn aubin_with(phi: &Potential, dens: &DensityField) -> Aubin {
    let v = phi.model().volume;
    let Moments { m0, m1 } = moments(phi, dens);
    let n = phi.model().dim();
    // Σ_{l=0}^{n} ω^{n−l}∧ω_φ^l integrated against φ
    let mixed = m0 + m1;
    let i = (m0 - m1) / v;
    let j = m0 / v - mixed / ((n + 1.0) * v);
    Aubin { i, j, i_minus_j: i - j }
}

/// Aubin–Mabuchi functional.
pub fn am(phi: &Potential) -> Result<f64> {
    let dens = phi.admissible_density()?;
    Ok(am_with(phi, &dens))
}

/// `AM` for envelope outputs, whose density may vanish. Tiny negative
/// densities from rounding in the polar tails are accepted as long as
/// their mass `V⁻¹∫ max(−ρ, 0) ω` stays below `1e−8`.
pub fn am_weak(phi: &Potential) -> Result<f64> {
    let dens = phi.density();
    let m = phi.model();
    let neg: f64 = dens.samples.iter().zip(&m.weights).map(|(d, w)| w * (-d).max(0.0)).sum::<f64>() / m.volume;
    if neg > 1e-8 {
        let low = dens.min();
        let node = dens.samples.iter().position(|&d| d == low).unwrap_or(0);
        return Err(Error::NotAdmissible { node, min_density: low });
    }
    Ok(am_with(phi, &dens))
}

fn am_with(phi: &Potential, dens: &DensityField) -> f64 {
    let v = phi.model().volume;
    let n = phi.model().dim();
    let Moments { m0, m1 } = moments(phi, dens);
    (m0 + m1) / ((n + 1.0) * v)
}

/// `V⁻¹∫ v ω_φ`, the derivative of `AM` at `φ` in direction `v`.
pub fn am_variation(phi: &Potential, v: &[f64]) -> f64 {
    let m = phi.model();
    let d = phi.density();
    (0..m.len()).map(|k| m.weights[k] * d.samples[k] * v[k]).sum::<f64>() / m.volume
}

/// Right-hand side of the difference formula
/// `AM(v) − AM(u) = V⁻¹/(n+1) ∫ (v − u) Σ ω_u^{n−k} ∧ ω_v^k`.
pub fn am_difference(u: &Potential, v: &Potential) -> f64 {
    let m = u.model();
    let du = u.density();
    let dv = v.density();
    let s: f64 = (0..m.len()).map(|k| m.weights[k] * (v.samples()[k] - u.samples()[k]) * (du.samples[k] + dv.samples[k])).sum();
    s / ((m.dim() + 1.0) * m.volume)
}

/// `Ent(ν, χ) = V⁻¹ ∫ log(χ/ν) χ`, both given as densities against `ω`.
pub fn entropy(nu: &DensityField, chi: &DensityField) -> Result<f64> {
    let m = &chi.model;
    let (tn, tc) = (nu.total(), chi.total());
    if (tn - tc).abs() > 1e-6 * m.volume {
        return Err(Error::MassMismatch(tn, tc));
    }
    Ok(entropy_raw(m, &nu.samples, &chi.samples))
}

fn entropy_raw(m: &ModelGeometry, nu: &[f64], chi: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..m.len() {
        let c = chi[k];
        if c > 0.0 {
            s += m.weights[k] * c * (c / nu[k]).ln();
        }
    }
    s / m.volume
}

/// Full functional report at `φ`.
pub fn mabuchi(phi: &Potential) -> Result<FunctionalReport> {
    let m = phi.model();
    let dens = phi.admissible_density()?;
    let v = m.volume;
    let n = m.dim();
    let mu = m.mu;
    let a = aubin_with(phi, &dens);
    let Moments { m0, m1 } = moments(phi, &dens);
    let amv = am_with(phi, &dens);
    let f = m.ricci();
    let ef: Vec<f64> = f.iter().map(|x| x.exp()).collect();
    let ones = vec![1.0; m.len()];
    let entropy_ref = entropy_raw(m, &ef, &dens.samples);
    let entropy_plain = entropy_raw(m, &ones, &dens.samples);
    let e_fano = entropy_ref - mu * amv + mu * m1 / v;
    let e_fano_ij = entropy_ref - mu * a.i_minus_j;
    // ∫ φ Ric ω = μ ∫ φ ω + ∫ φ Δ_ω f_ω ω
    let lf = m.div(f);
    let ric_term = mu * m0 + phi.samples().iter().zip(&lf).map(|(p, l)| p * l).sum::<f64>();
    let e_csc = entropy_plain + n * mu * amv - ric_term / v;
    let csc_offset = -m.mean(f);
    Ok(FunctionalReport {
        i: a.i,
        j: a.j,
        i_minus_j: a.i_minus_j,
        am: amv,
        entropy_ref,
        entropy_plain,
        e_fano,
        e_fano_ij,
        e_csc,
        csc_offset,
        degenerate: !dens.degenerate.is_empty(),
    })
}

/// K-energy in the entropy form.
pub fn k_energy(phi: &Potential) -> Result<f64> {
    Ok(mabuchi(phi)?.e_fano)
}

/// `−V⁻¹ ∫ v Δ_φ f_{ω_φ} ω_φ`, the derivative of `E` at `φ` in direction `v`.
pub fn mabuchi_derivative(phi: &Potential, v: &[f64]) -> Result<f64> {
    let m = phi.model();
    let f = crate::model::ricci_potential_of(phi)?;
    // w ρ Δ_φ f = L(f)
    let lf = m.div(&f);
    Ok(-v.iter().zip(&lf).map(|(a, b)| a * b).sum::<f64>() / m.volume)
}

/// `J(ω_base, ω_φ)`: Aubin's `J` of `φ − base` measured from `ω_base`.
pub fn j_relative(base: &Potential, phi: &Potential) -> Result<f64> {
    let m = base.model();
    if !m.same_grid(phi.model()) {
        return Err(Error::ModelMismatch("j_relative needs a common grid".into()));
    }
    let db = base.admissible_density()?;
    let dp = phi.admissible_density()?;
    let n = m.dim();
    let mut m0 = 0.0;
    let mut mixed = 0.0;
    for k in 0..m.len() {
        let d = phi.samples()[k] - base.samples()[k];
        m0 += m.weights[k] * db.samples[k] * d;
        mixed += m.weights[k] * d * (db.samples[k] + dp.samples[k]);
    }
    Ok(m0 / m.volume - mixed / ((n + 1.0) * m.volume))
}

/// The six members of the `I`/`J` comparison chain, in order.
pub fn ij_chain(a: &Aubin, n: f64) -> [f64; 6] {
    [
        a.i_minus_j / (n * n),
        a.i / (n * (n + 1.0)),
        a.j / n,
        a.i_minus_j,
        n * a.i / (n + 1.0),
        n * a.j,
    ]
}

/// Largest violation of the chain (0 when it holds).
pub fn ij_chain_violation(a: &Aubin, n: f64) -> f64 {
    let c = ij_chain(a, n);
    c.windows(2).map(|p| (p[0] - p[1]).max(0.0)).fold(0.0, f64::max)
}

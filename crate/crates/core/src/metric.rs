//! Rooftop envelopes, the `d₁` distance, geodesics, path lengths and the
//! Calabi distance.
//!
//! Sphere envelopes are exact lower convex hulls of `min(ψ+u, ψ+v)` in the
//! `x` variable. Torus envelopes solve the discrete obstacle problem
//! "largest `w ≤ min(u,v)` with `ρ(w) ≥ 0`" by projected SOR.
//!
//! Geodesics interpolate Legendre transforms of the total potential. The
//! discrete total potential is piecewise linear in `x`, so its transform is
//! piecewise linear in the slope variable `y` with vertices at the face
//! slopes and pieces of slope `x_i`. On the sphere the slope range is
//! `[0, 2]`; the values at the two ends come from the polar caps. On the
//! torus only potentials depending on `x` alone are supported; they are
//! unrolled over three periods.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::functionals;
use crate::linalg;
use crate::model::{grad_norm_sq, grad_norm_sq_slopes, ModelGeometry, ModelKind, Potential};

/// Speeds of a tangent vector under the three metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Speeds {
    /// `‖v‖_{L²(ω_φ)}`.
    pub mabuchi: f64,
    /// `‖Δ_φ v‖_{L²(ω_φ)}`.
    pub calabi: f64,
    /// `V⁻¹‖v‖_{L¹(ω_φ)}`.
    pub darvas: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Mabuchi,
    Calabi,
    Darvas,
}

impl Speeds {
    pub fn get(&self, which: Which) -> f64 {
        match which {
            Which::Mabuchi => self.mabuchi,
            Which::Calabi => self.calabi,
            Which::Darvas => self.darvas,
        }
    }
}

/// Metric speeds of `v` at `base`.
pub fn speeds(base: &Potential, v: &[f64]) -> Result<Speeds> {
    let m = base.model();
    let d = base.admissible_density()?;
    let lv = m.div(v);
    let mut s = Speeds::default();
    for k in 0..m.len() {
        let wd = m.weights[k] * d.samples[k];
        s.mabuchi += wd * v[k] * v[k];
        s.calabi += lv[k] * lv[k] / wd;
        s.darvas += wd * v[k].abs();
    }
    s.mabuchi = s.mabuchi.sqrt();
    s.calabi = s.calabi.sqrt();
    s.darvas /= m.volume;
    Ok(s)
}

fn check_pair(u: &Potential, v: &Potential) -> Result<()> {
    if !u.model().same_grid(v.model()) {
        return Err(Error::ModelMismatch("potentials live on different grids".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------- rooftop

/// Largest admissible potential below `min(u, v)`.
pub fn rooftop(u: &Potential, v: &Potential) -> Result<Potential> {
    check_pair(u, v)?;
    match u.model().kind {
        ModelKind::P1Symmetric => rooftop_sphere(u, v),
        ModelKind::Torus2 => rooftop_torus(u, v, 1e-15, 1_000_000),
    }
}

fn rooftop_sphere(u: &Potential, v: &Potential) -> Result<Potential> {
    // The lower convex hull of a piecewise-linear function is the running
    // sum of the isotonic regression of its face slopes, so the envelope is
    // built by pooling adjacent violators in slope space. Slopes are kept
    // with their complements `2 − s` so both polar ends stay accurate.
    let m = u.model().clone();
    let n = m.n;
    let r = &m.reference_potential;
    let from_u: Vec<bool> = (0..=n).map(|i| u.samples()[i] <= v.samples()[i]).collect();
    let low: Vec<f64> = (0..=n).map(|i| r[i] + u.samples()[i].min(v.samples()[i])).collect();
    struct Block {
        start: usize,
        len: usize,
        s: f64,
        c: f64,
        rel: Option<f64>,
    }
    impl Block {
        fn above(&self, other: &Block) -> bool {
            let (a, b) = (self.s / self.len as f64, other.s / other.len as f64);
            if a + b <= 2.0 {
                a > b
            } else {
                other.c / (other.len as f64) > self.c / self.len as f64
            }
        }
    }
    let mut blocks: Vec<Block> = Vec::with_capacity(n);
    for i in 0..n {
        let mut b = if from_u[i] == from_u[i + 1] {
            let rel = if from_u[i] { u.slopes()[i] } else { v.slopes()[i] };
            Block { start: i, len: 1, s: m.ref_slopes[i] + rel, c: m.ref_slopes_c[i] - rel, rel: Some(rel) }
        } else {
            // the reference increment cancels from the relative slope
            let (a, b) = if from_u[i] { (u, v) } else { (v, u) };
            let rel = b.slopes()[i] + (b.samples()[i] - a.samples()[i]) / m.h;
            Block { start: i, len: 1, s: m.ref_slopes[i] + rel, c: m.ref_slopes_c[i] - rel, rel: None }
        };
        while let Some(prev) = blocks.last() {
            if !prev.above(&b) {
                break;
            }
            let prev = blocks.pop().unwrap();
            b = Block { start: prev.start, len: prev.len + b.len, s: prev.s + b.s, c: prev.c + b.c, rel: None };
        }
        blocks.push(b);
    }
    let mut samples = vec![0.0; n + 1];
    let mut slopes = vec![0.0; n];
    for b in &blocks {
        let (sl, cm) = (b.s / b.len as f64, b.c / b.len as f64);
        for i in b.start..b.start + b.len {
            samples[i] = low[b.start] + (m.nodes[i] - m.nodes[b.start]) * sl - r[i];
            slopes[i] = match b.rel {
                Some(rel) => rel,
                None if sl <= 1.0 => sl - m.ref_slopes[i],
                None => m.ref_slopes_c[i] - cm,
            };
        }
    }
    samples[n] = low[n] - r[n];
    Potential::with_slopes(m, samples, slopes)
}

fn rooftop_torus(u: &Potential, v: &Potential, tol: f64, max_sweeps: usize) -> Result<Potential> {
    let m = u.model().clone();
    let n = m.n;
    let top: Vec<f64> = u.samples().iter().zip(v.samples()).map(|(a, b)| a.min(*b)).collect();
    let lift = 2.0 * m.h * m.h * m.scale;
    let omega = 2.0 / (1.0 + (PI * m.h).sin());
    let mut w = top.clone();
    for _ in 0..max_sweeps {
        let mut change: f64 = 0.0;
        for j in 0..n {
            let jp = (j + 1) % n;
            let jm = (j + n - 1) % n;
            for i in 0..n {
                let k = j * n + i;
                let nb = w[j * n + (i + 1) % n] + w[j * n + (i + n - 1) % n] + w[jp * n + i] + w[jm * n + i];
                let t = 0.25 * (nb + lift);
                let next = top[k].min(w[k] + omega * (t - w[k]));
                change = change.max((next - w[k]).abs());
                w[k] = next;
            }
        }
        if change <= tol * (1.0 + top.iter().fold(0.0f64, |a, b| a.max(b.abs()))) {
            return Potential::from_samples(m, w);
        }
    }
    Err(Error::NonConvergence { what: "projected SOR", iterations: max_sweeps })
}

/// Slow cross-check for torus envelopes: monotone projected Jacobi
/// iteration `w ← min(m, T w)` started from `m = min(u, v)`.
pub fn rooftop_jacobi(u: &Potential, v: &Potential, tol: f64, max_iter: usize) -> Result<Potential> {
    check_pair(u, v)?;
    let m = u.model().clone();
    if m.kind != ModelKind::Torus2 {
        return Err(Error::Unsupported("the Jacobi envelope is a torus cross-check"));
    }
    let n = m.n;
    let top: Vec<f64> = u.samples().iter().zip(v.samples()).map(|(a, b)| a.min(*b)).collect();
    let lift = 2.0 * m.h * m.h * m.scale;
    let mut w = top.clone();
    let mut next = w.clone();
    for _ in 0..max_iter {
        let mut change: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let k = j * n + i;
                let nb = w[j * n + (i + 1) % n] + w[j * n + (i + n - 1) % n] + w[((j + 1) % n) * n + i] + w[((j + n - 1) % n) * n + i];
                next[k] = top[k].min(0.25 * (nb + lift));
                change = change.max((next[k] - w[k]).abs());
            }
        }
        std::mem::swap(&mut w, &mut next);
        if change <= tol {
            return Potential::from_samples(m, w);
        }
    }
    Err(Error::NonConvergence { what: "projected Jacobi", iterations: max_iter })
}

// ---------------------------------------------------------------- Legendre

/// Piecewise-linear Legendre dual: vertices `y` (with `yc = 2 − y`), the
/// slope `σ_j` on segment `j`, and the value at the first vertex.
#[derive(Debug, Clone)]
struct Dual {
    y: Vec<f64>,
    yc: Vec<f64>,
    sigma: Vec<f64>,
    g_first: f64,
}

fn dual_sphere(p: &Potential) -> Dual {
    let m = p.model();
    let n = m.n;
    let mut y = Vec::with_capacity(n + 2);
    let mut yc = Vec::with_capacity(n + 2);
    y.push(0.0);
    yc.push(2.0);
    for i in 0..n {
        y.push(m.ref_slopes[i] + p.slopes()[i]);
        yc.push(m.ref_slopes_c[i] - p.slopes()[i]);
    }
    y.push(2.0);
    yc.push(0.0);
    Dual { y, yc, sigma: m.nodes.clone(), g_first: -(m.reference_potential[0] + p.samples()[0]) }
}

/// Dual of a convex piecewise-linear function through `(xs, us)`; no end vertices.
fn dual_nodes(xs: &[f64], us: &[f64]) -> Dual {
    let f: Vec<f64> = (0..xs.len() - 1).map(|i| (us[i + 1] - us[i]) / (xs[i + 1] - xs[i])).collect();
    let yc = f.iter().map(|y| 2.0 - y).collect();
    Dual { g_first: xs[0] * f[0] - us[0], y: f, yc, sigma: xs[1..xs.len() - 1].to_vec() }
}

/// Common refinement of two duals over their shared range.
struct Merged {
    y: Vec<f64>,
    /// Segment lengths, taken from `y` or `2 − y` on the side where each is small.
    dy: Vec<f64>,
    s0: Vec<f64>,
    s1: Vec<f64>,
    /// `g₀` and `g₁` at the first merged vertex.
    g0: f64,
    g1: f64,
}

fn eval_dual(d: &Dual, y: f64) -> f64 {
    let mut g = d.g_first;
    for j in 0..d.sigma.len() {
        if y <= d.y[j + 1] {
            return g + d.sigma[j] * (y - d.y[j]);
        }
        g += d.sigma[j] * (d.y[j + 1] - d.y[j]);
    }
    g + d.sigma.last().copied().unwrap_or(0.0) * (y - d.y[d.y.len() - 1])
}

fn merge(a: &Dual, b: &Dual) -> Merged {
    let lo = a.y[0].max(b.y[0]);
    let hi = a.y[a.y.len() - 1].min(b.y[b.y.len() - 1]);
    let mut verts: Vec<(f64, f64)> = Vec::with_capacity(a.y.len() + b.y.len());
    let (mut i, mut j) = (0, 0);
    while i < a.y.len() || j < b.y.len() {
        let take_a = j >= b.y.len() || (i < a.y.len() && a.y[i] <= b.y[j]);
        let (yv, ycv) = if take_a {
            i += 1;
            (a.y[i - 1], a.yc[i - 1])
        } else {
            j += 1;
            (b.y[j - 1], b.yc[j - 1])
        };
        if yv >= lo && yv <= hi {
            verts.push((yv, ycv));
        }
    }
    let y: Vec<f64> = verts.iter().map(|v| v.0).collect();
    let yc: Vec<f64> = verts.iter().map(|v| v.1).collect();
    let segs = y.len().saturating_sub(1);
    let mut dy = Vec::with_capacity(segs);
    let mut s0 = Vec::with_capacity(segs);
    let mut s1 = Vec::with_capacity(segs);
    let (mut ia, mut ib) = (0usize, 0usize);
    for k in 0..segs {
        dy.push(seg_len(y[k], yc[k], y[k + 1], yc[k + 1]));
        let mid = 0.5 * (y[k] + y[k + 1]);
        while ia + 1 < a.sigma.len() && a.y[ia + 1] < mid {
            ia += 1;
        }
        while ib + 1 < b.sigma.len() && b.y[ib + 1] < mid {
            ib += 1;
        }
        // degenerate zero-length segments may sit on either side
        s0.push(a.sigma[ia.min(a.sigma.len() - 1)]);
        s1.push(b.sigma[ib.min(b.sigma.len() - 1)]);
    }
    Merged { g0: eval_dual(a, y[0]), g1: eval_dual(b, y[0]), y, dy, s0, s1 }
}

/// Length of the `y`-segment between two vertices, taken from `y` or `yc`
/// on the side where each is small.
fn seg_len(y0: f64, yc0: f64, y1: f64, yc1: f64) -> f64 {
    if y0 + y1 <= 2.0 {
        y1 - y0
    } else {
        yc0 - yc1
    }
}

/// Monotone slope map `y ↦ x` of a C¹ reconstruction: linear between
/// vertices, with a jump from `xl` to `xr` at each vertex. `g` is the
/// Legendre dual at each vertex.
#[derive(Debug, Clone)]
struct SlopeMap {
    y: Vec<f64>,
    yc: Vec<f64>,
    xl: Vec<f64>,
    xr: Vec<f64>,
    g: Vec<f64>,
}

impl SlopeMap {
    /// Face slopes `ys` (complements `ycs`) sit at the face midpoints; the
    /// optional end vertices carry the flat pieces at the first and last node.
    fn from_faces(xs: &[f64], ys: &[f64], ycs: &[f64], ends: Option<((f64, f64), (f64, f64))>, g_first: f64) -> SlopeMap {
        let n = ys.len();
        let mid = |j: usize| 0.5 * (xs[j] + xs[j + 1]);
        let (x0, xn) = (xs[0], xs[n]);
        let mut map = SlopeMap { y: Vec::with_capacity(n + 2), yc: Vec::with_capacity(n + 2), xl: Vec::with_capacity(n + 2), xr: Vec::with_capacity(n + 2), g: Vec::new() };
        let mut push = |y: f64, yc: f64, xl: f64, xr: f64| {
            map.y.push(y);
            map.yc.push(yc);
            map.xl.push(xl);
            map.xr.push(xr);
        };
        if let Some(((y, yc), _)) = ends {
            push(y, yc, x0, x0);
        }
        for j in 0..n {
            let xl = if j == 0 && ends.is_some() { x0 } else { mid(j) };
            let xr = if j == n - 1 && ends.is_some() { xn } else { mid(j) };
            push(ys[j], ycs[j], xl, xr);
        }
        if let Some((_, (y, yc))) = ends {
            push(y, yc, xn, xn);
        }
        let mut g = Vec::with_capacity(map.y.len());
        g.push(g_first);
        for k in 0..map.y.len() - 1 {
            let dy = seg_len(map.y[k], map.yc[k], map.y[k + 1], map.yc[k + 1]);
            g.push(g[k] + 0.5 * dy * (map.xr[k] + map.xl[k + 1]));
        }
        map.g = g;
        map
    }
}

/// Two slope maps on the common refinement of their vertices.
struct SmoothMerged {
    y: Vec<f64>,
    yc: Vec<f64>,
    dy: Vec<f64>,
    /// `(xl, xr, g)` of each map at each merged vertex.
    a: Vec<(f64, f64, f64)>,
    b: Vec<(f64, f64, f64)>,
}

fn smooth_merge(a: &SlopeMap, b: &SlopeMap) -> SmoothMerged {
    let lo = a.y[0].max(b.y[0]);
    let hi = a.y[a.y.len() - 1].min(b.y[b.y.len() - 1]);
    // value of `map` at the vertex `(y, yc)`, which lies after its vertex `k - 1`
    let at = |map: &SlopeMap, k: usize, own: bool, y: f64, yc: f64| -> (f64, f64, f64) {
        if own {
            return (map.xl[k], map.xr[k], map.g[k]);
        }
        if k == 0 {
            // a tie with the first vertex: its left limit
            return (map.xl[0], map.xl[0], map.g[0]);
        }
        let p = k - 1;
        if k == map.y.len() {
            return (map.xr[p], map.xr[p], map.g[p]);
        }
        let part = seg_len(map.y[p], map.yc[p], y, yc);
        let whole = seg_len(map.y[p], map.yc[p], map.y[k], map.yc[k]);
        let f = if whole > 0.0 { (part / whole).clamp(0.0, 1.0) } else { 0.0 };
        let x = map.xr[p] + f * (map.xl[k] - map.xr[p]);
        (x, x, map.g[p] + 0.5 * part * (map.xr[p] + x))
    };
    let mut out = SmoothMerged { y: Vec::new(), yc: Vec::new(), dy: Vec::new(), a: Vec::new(), b: Vec::new() };
    let (mut i, mut j) = (0, 0);
    while i < a.y.len() || j < b.y.len() {
        let take_a = j >= b.y.len() || (i < a.y.len() && a.y[i] <= b.y[j]);
        let (y, yc) = if take_a { (a.y[i], a.yc[i]) } else { (b.y[j], b.yc[j]) };
        if y >= lo && y <= hi {
            out.y.push(y);
            out.yc.push(yc);
            out.a.push(at(a, i, take_a, y, yc));
            out.b.push(at(b, j, !take_a, y, yc));
        }
        if take_a {
            i += 1;
        } else {
            j += 1;
        }
    }
    for k in 0..out.y.len().saturating_sub(1) {
        out.dy.push(seg_len(out.y[k], out.yc[k], out.y[k + 1], out.yc[k + 1]));
    }
    out
}

/// Values of the reconstructed geodesic at `xs` at time `t`, together with
/// face slopes and their complements `2 − slope`.
fn smooth_interpolate(mg: &SmoothMerged, t: f64, xs: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let nv = mg.y.len();
    let blend = |k: usize| {
        let (a, b) = (mg.a[k], mg.b[k]);
        ((1.0 - t) * a.0 + t * b.0, (1.0 - t) * a.1 + t * b.1, (1.0 - t) * a.2 + t * b.2)
    };
    let v: Vec<(f64, f64, f64)> = (0..nv).map(blend).collect();
    // pieces in x: flat at vertex k, then a ramp to vertex k + 1
    let mut pieces: Vec<(f64, f64, usize, f64)> = Vec::with_capacity(2 * nv);
    for k in 0..nv {
        pieces.push((v[k].0, v[k].1, k, 0.0));
        if k + 1 < nv {
            pieces.push((v[k].1, v[k + 1].0, k, mg.dy[k]));
        }
    }
    let faces = xs.len() - 1;
    let mut sl = vec![0.0; faces];
    let mut cm = vec![0.0; faces];
    let mut vals = vec![f64::NAN; xs.len()];
    let mut face = 0;
    let mut node = 0;
    for &(pa, pb, k, dy) in &pieces {
        let len = pb - pa;
        let frac = |x: f64| if len > 0.0 { ((x - pa) / len).clamp(0.0, 1.0) } else { 0.0 };
        while node < xs.len() && xs[node] <= pb {
            let x = xs[node];
            if x >= pa {
                let f = frac(x);
                let y = mg.y[k] + f * dy;
                let g = v[k].2 + if dy > 0.0 { 0.5 * f * dy * (v[k].1 + x) } else { 0.0 };
                vals[node] = x * y - g;
            }
            node += 1;
        }
        if len <= 0.0 {
            continue;
        }
        while face < faces && xs[face + 1] <= pa {
            face += 1;
        }
        let mut f = face;
        while f < faces && xs[f] < pb {
            let (lo, hi) = (pa.max(xs[f]), pb.min(xs[f + 1]));
            if hi > lo {
                let avg = 0.5 * (frac(lo) + frac(hi)) * dy;
                sl[f] += (hi - lo) * (mg.y[k] + avg);
                cm[f] += (hi - lo) * (mg.yc[k] - avg);
            }
            f += 1;
        }
    }
    for f in 0..faces {
        let h = xs[f + 1] - xs[f];
        sl[f] /= h;
        cm[f] /= h;
    }
    (vals, sl, cm)
}

/// `∫ |g₀ − g₁| dy` over `[y_lo, y_lo + width]` (or the whole range when `width` is `None`).
fn dual_gap_integral(mg: &Merged, window: Option<(f64, f64)>) -> f64 {
    let segs = mg.dy.len();
    let mut hv = Vec::with_capacity(segs + 1);
    hv.push(mg.g0 - mg.g1);
    for j in 0..segs {
        hv.push(hv[j] + (mg.s0[j] - mg.s1[j]) * mg.dy[j]);
    }
    let seg_int = |ha: f64, hb: f64, len: f64| -> f64 {
        if ha * hb >= 0.0 {
            0.5 * len * (ha.abs() + hb.abs())
        } else {
            0.5 * len * (ha * ha + hb * hb) / (ha.abs() + hb.abs())
        }
    };
    let mut total = 0.0;
    for j in 0..segs {
        let (ya, yb) = (mg.y[j], mg.y[j + 1]);
        let (mut a, mut b, mut ha, mut hb) = (ya, yb, hv[j], hv[j + 1]);
        if let Some((lo, hi)) = window {
            if yb <= lo || ya >= hi {
                continue;
            }
            let lerp = |y: f64| if yb > ya { hv[j] + (hv[j + 1] - hv[j]) * (y - ya) / (yb - ya) } else { hv[j] };
            if a < lo {
                a = lo;
                ha = lerp(lo);
            }
            if b > hi {
                b = hi;
                hb = lerp(hi);
            }
            total += seg_int(ha, hb, b - a);
        } else {
            total += seg_int(ha, hb, mg.dy[j]);
        }
    }
    total
}

/// Checks that a torus potential depends on `x` only and returns its first row.
fn torus_row(p: &Potential) -> Result<Vec<f64>> {
    let m = p.model();
    let n = m.n;
    let s = p.samples();
    let scale = 1.0 + s.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    for j in 1..n {
        for i in 0..n {
            if (s[j * n + i] - s[i]).abs() > 1e-12 * scale {
                return Err(Error::Unsupported("torus geodesics need potentials depending on x alone"));
            }
        }
    }
    Ok(s[..n].to_vec())
}

/// Total potential of an `x`-only torus sample over three periods `[-1, 2)`.
fn torus_unrolled(m: &ModelGeometry, row: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = m.n;
    let xs: Vec<f64> = (0..3 * n).map(|j| (j as f64 - n as f64) * m.h).collect();
    let us = xs.iter().enumerate().map(|(j, &x)| m.scale * x * x + row[j % n]).collect();
    (xs, us)
}

/// Geodesic potentials `u_t` for each `t` in `ts`.
///
/// Each endpoint is replaced by a C¹ reconstruction whose slope map is
/// linear between face midpoints, and the duals of the reconstructions are
/// interpolated. The reconstruction error at the endpoints is added back
/// linearly in `t`, so `u_0 = u` and `u_1 = v`. Interpolating the raw
/// piecewise-linear duals instead puts kinks between nodes and leaves
/// grid-scale oscillations in the density.
pub fn legendre_interpolate(u: &Potential, v: &Potential, ts: &[f64]) -> Result<Vec<Potential>> {
    check_pair(u, v)?;
    let m = u.model().clone();
    match m.kind {
        ModelKind::P1Symmetric => {
            check_dual(&merge(&dual_sphere(u), &dual_sphere(v)))?;
            let mg = smooth_merge(&slope_map_sphere(u), &slope_map_sphere(v));
            let n = m.n;
            let eval = |t: f64| -> (Vec<f64>, Vec<f64>) {
                let (vals, sl, cm) = smooth_interpolate(&mg, t, &m.nodes);
                let samples = vals.iter().zip(&m.reference_potential).map(|(a, b)| a - b).collect();
                let slopes = (0..n).map(|i| if sl[i] <= 1.0 { sl[i] - m.ref_slopes[i] } else { m.ref_slopes_c[i] - cm[i] }).collect();
                (samples, slopes)
            };
            let (r0, r1) = (eval(0.0), eval(1.0));
            ts.iter()
                .map(|&t| {
                    if t == 0.0 {
                        return Ok(u.clone());
                    }
                    if t == 1.0 {
                        return Ok(v.clone());
                    }
                    let (s, sl) = eval(t);
                    let fix = |x: &[f64], ux: &[f64], r0x: &[f64], vx: &[f64], r1x: &[f64]| -> Vec<f64> {
                        (0..x.len()).map(|i| x[i] + (1.0 - t) * (ux[i] - r0x[i]) + t * (vx[i] - r1x[i])).collect()
                    };
                    let samples = fix(&s, u.samples(), &r0.0, v.samples(), &r1.0);
                    let slopes = fix(&sl, u.slopes(), &r0.1, v.slopes(), &r1.1);
                    Potential::with_slopes(m.clone(), samples, slopes)
                })
                .collect()
        }
        ModelKind::Torus2 => {
            let (ru, rv) = (torus_row(u)?, torus_row(v)?);
            let (xs, uu) = torus_unrolled(&m, &ru);
            let (_, vv) = torus_unrolled(&m, &rv);
            check_dual(&merge(&dual_nodes(&xs, &uu), &dual_nodes(&xs, &vv)))?;
            let mg = smooth_merge(&slope_map_nodes(&xs, &uu), &slope_map_nodes(&xs, &vv));
            let n = m.n;
            let middle = &xs[n..2 * n];
            let eval = |t: f64| -> Vec<f64> {
                let (vals, _, _) = smooth_interpolate(&mg, t, middle);
                (0..n).map(|i| vals[i] - m.scale * middle[i] * middle[i]).collect()
            };
            let (r0, r1) = (eval(0.0), eval(1.0));
            ts.iter()
                .map(|&t| {
                    let row: Vec<f64> = if t == 0.0 {
                        ru.clone()
                    } else if t == 1.0 {
                        rv.clone()
                    } else {
                        let r = eval(t);
                        (0..n).map(|i| r[i] + (1.0 - t) * (ru[i] - r0[i]) + t * (rv[i] - r1[i])).collect()
                    };
                    Potential::from_samples(m.clone(), (0..n * n).map(|k| row[k % n]).collect())
                })
                .collect()
        }
    }
}

fn slope_map_sphere(p: &Potential) -> SlopeMap {
    let m = p.model();
    let ys: Vec<f64> = (0..m.n).map(|i| m.ref_slopes[i] + p.slopes()[i]).collect();
    let ycs: Vec<f64> = (0..m.n).map(|i| m.ref_slopes_c[i] - p.slopes()[i]).collect();
    SlopeMap::from_faces(&m.nodes, &ys, &ycs, Some(((0.0, 2.0), (2.0, 0.0))), -(m.reference_potential[0] + p.samples()[0]))
}

fn slope_map_nodes(xs: &[f64], us: &[f64]) -> SlopeMap {
    let d = dual_nodes(xs, us);
    SlopeMap::from_faces(xs, &d.y, &d.yc, None, d.g_first)
}

fn check_dual(mg: &Merged) -> Result<()> {
    if mg.y.len() < 2 {
        return Err(Error::ConvexificationFailure("slope ranges do not overlap".into()));
    }
    let bad = mg.dy.iter().any(|d| *d < -1e-12) || mg.s0.windows(2).any(|w| w[1] < w[0]) || mg.s1.windows(2).any(|w| w[1] < w[0]);
    if bad {
        return Err(Error::ConvexificationFailure("potential is not convex in the symmetric variable".into()));
    }
    Ok(())
}

/// `d₁` from the initial speed of the Legendre geodesic:
/// `V⁻¹ ∫ |g_u − g_v| dμ`, with `dμ` the push-forward of `ω_u` to slopes.
pub fn d1_initial_speed(u: &Potential, v: &Potential) -> Result<f64> {
    check_pair(u, v)?;
    let m = u.model();
    match m.kind {
        ModelKind::P1Symmetric => {
            let mg = merge(&dual_sphere(u), &dual_sphere(v));
            check_dual(&mg)?;
            Ok(2.0 * PI * dual_gap_integral(&mg, None) / m.volume)
        }
        ModelKind::Torus2 => {
            let (xs, uu) = torus_unrolled(m, &torus_row(u)?);
            let (_, vv) = torus_unrolled(m, &torus_row(v)?);
            let (da, db) = (dual_nodes(&xs, &uu), dual_nodes(&xs, &vv));
            let mg = merge(&da, &db);
            check_dual(&mg)?;
            // the gap is periodic in y with period 2·scale
            let period = 2.0 * m.scale;
            let lo = mg.y[0];
            if mg.y[mg.y.len() - 1] < lo + period {
                return Err(Error::ConvexificationFailure("slope range shorter than one period".into()));
            }
            Ok(0.5 * dual_gap_integral(&mg, Some((lo, lo + period))) / m.volume)
        }
    }
}

// ---------------------------------------------------------------- paths

/// A path of potentials with per-segment speeds.
#[derive(Debug, Clone)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub potentials: Vec<Potential>,
    /// Speeds of segment `k` (between times `k` and `k+1`), evaluated at
    /// the segment midpoint.
    pub speeds: Vec<Speeds>,
}

impl PathRecord {
    pub fn new(times: Vec<f64>, potentials: Vec<Potential>) -> Result<PathRecord> {
        if times.len() != potentials.len() || times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("path needs at least two increasing times, one per potential".into()));
        }
        let mut out = Vec::with_capacity(times.len() - 1);
        for k in 0..times.len() - 1 {
            let (a, b) = (&potentials[k], &potentials[k + 1]);
            let dt = times[k + 1] - times[k];
            let mid = a.combine(0.5, b, 0.5);
            let vel: Vec<f64> = b.samples().iter().zip(a.samples()).map(|(y, x)| (y - x) / dt).collect();
            out.push(speeds(&mid, &vel)?);
        }
        Ok(PathRecord { times, potentials, speeds: out })
    }

    /// Straight segment `(1−t)u + t v` sampled at `K + 1` times.
    pub fn chord(u: &Potential, v: &Potential, k: usize) -> Result<PathRecord> {
        check_pair(u, v)?;
        let times: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
        let pots = times.iter().map(|&t| u.combine(1.0 - t, v, t)).collect();
        PathRecord::new(times, pots)
    }
}

/// Legendre geodesic from `u` to `v` with `K` steps.
pub fn geodesic(u: &Potential, v: &Potential, k: usize) -> Result<PathRecord> {
    if k == 0 {
        return Err(Error::InvalidArgument("geodesic needs K >= 1".into()));
    }
    let times: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
    let pots = legendre_interpolate(u, v, &times)?;
    PathRecord::new(times, pots)
}

/// `max |φ̈ − |∇φ̇|²_{ω_φ}|` over interior times and nodes, by central
/// differences in `t`. Sphere polar cells are left out: their gradient is
/// a cap average rather than a point value.
pub fn geodesic_residual(path: &PathRecord) -> Result<f64> {
    let n = path.times.len();
    if n < 3 {
        return Err(Error::InvalidArgument("residual needs at least three times".into()));
    }
    let m = path.potentials[0].model().clone();
    let skip_poles = m.kind == ModelKind::P1Symmetric;
    let mut worst: f64 = 0.0;
    for k in 1..n - 1 {
        let (t0, t1, t2) = (path.times[k - 1], path.times[k], path.times[k + 1]);
        let (a, b, c) = (path.potentials[k - 1].samples(), path.potentials[k].samples(), path.potentials[k + 1].samples());
        let (h0, h1) = (t1 - t0, t2 - t1);
        let vel: Vec<f64> = (0..m.len()).map(|i| (c[i] - a[i]) / (h0 + h1)).collect();
        let acc: Vec<f64> = (0..m.len()).map(|i| 2.0 * (h0 * c[i] - (h0 + h1) * b[i] + h1 * a[i]) / (h0 * h1 * (h0 + h1))).collect();
        let g = if skip_poles {
            let (sa, sc) = (path.potentials[k - 1].slopes(), path.potentials[k + 1].slopes());
            let fv: Vec<f64> = sa.iter().zip(sc).map(|(x, y)| (y - x) / (h0 + h1)).collect();
            grad_norm_sq_slopes(&path.potentials[k], &fv)
        } else {
            grad_norm_sq(&path.potentials[k], &vel)
        };
        let range = if skip_poles { 1..m.len() - 1 } else { 0..m.len() };
        for i in range {
            worst = worst.max((acc[i] - g[i]).abs());
        }
    }
    Ok(worst)
}

/// `Σ Δt · speed` over segments.
pub fn path_length(path: &PathRecord, which: Which) -> f64 {
    path.speeds.iter().zip(path.times.windows(2)).map(|(s, w)| (w[1] - w[0]) * s.get(which)).sum()
}

/// `d_C = 2√V arccos(V⁻¹ ∫ √(ρ_u ρ_v) ω)`.
pub fn calabi_distance(u: &Potential, v: &Potential) -> Result<f64> {
    check_pair(u, v)?;
    let m = u.model();
    let (du, dv) = (u.density(), v.density());
    let overlap: f64 = (0..m.len()).map(|k| m.weights[k] * (du.samples[k].max(0.0) * dv.samples[k].max(0.0)).sqrt()).sum::<f64>() / m.volume;
    Ok(2.0 * m.volume.sqrt() * overlap.clamp(-1.0, 1.0).acos())
}

/// Calabi distance between two raw densities against `ω`.
pub fn calabi_distance_densities(model: &ModelGeometry, a: &[f64], b: &[f64]) -> f64 {
    let overlap: f64 = (0..model.len()).map(|k| model.weights[k] * (a[k].max(0.0) * b[k].max(0.0)).sqrt()).sum::<f64>() / model.volume;
    2.0 * model.volume.sqrt() * overlap.clamp(-1.0, 1.0).acos()
}

// ---------------------------------------------------------------- d₁

#[derive(Debug, Clone, Copy)]
pub struct DistanceReport {
    /// `AM(u) + AM(v) − 2 AM(P(u,v))`.
    pub d1: f64,
    /// Initial-speed formula on the Legendre geodesic (`NaN` when unsupported).
    pub d1_dtn: f64,
    /// `V⁻¹ min(∫|u−v| ω_u, ∫|u−v| ω_v)`.
    pub mixed_lower: f64,
    /// `V⁻¹ (∫|u−v| ω_u + ∫|u−v| ω_v)`.
    pub mixed_upper: f64,
    pub d_c: f64,
    /// Residual of the `K = 16` Legendre geodesic (`NaN` when unsupported).
    pub geodesic_residual_max: f64,
}

/// Pythagorean `d₁` only.
pub fn d1_value(u: &Potential, v: &Potential) -> Result<f64> {
    let p = rooftop(u, v)?;
    Ok(functionals::am(u)? + functionals::am(v)? - 2.0 * functionals::am_weak(&p)?)
}

/// Full distance report between `u` and `v`.
pub fn d1(u: &Potential, v: &Potential) -> Result<DistanceReport> {
    let d = d1_value(u, v)?;
    let m = u.model();
    let (du, dv) = (u.admissible_density()?, v.admissible_density()?);
    let mut iu = 0.0;
    let mut iv = 0.0;
    for k in 0..m.len() {
        let gap = (u.samples()[k] - v.samples()[k]).abs() * m.weights[k];
        iu += gap * du.samples[k];
        iv += gap * dv.samples[k];
    }
    let (iu, iv) = (iu / m.volume, iv / m.volume);
    let (d1_dtn, res) = match d1_initial_speed(u, v) {
        Ok(x) => (x, geodesic(u, v, 16).and_then(|p| geodesic_residual(&p)).unwrap_or(f64::NAN)),
        Err(Error::Unsupported(_)) => (f64::NAN, f64::NAN),
        Err(e) => return Err(e),
    };
    Ok(DistanceReport { d1: d, d1_dtn, mixed_lower: iu.min(iv), mixed_upper: iu + iv, d_c: calabi_distance(u, v)?, geodesic_residual_max: res })
}

/// `‖∂_ε 2√ρ(φ + εv)‖²_{L²(ω)}` by central differences, for the
/// sphere-isometry check against `g_C(v, v)`.
pub fn root_density_pullback(phi: &Potential, v: &[f64], eps: f64) -> f64 {
    let m = phi.model();
    let a = phi.add_field(v, eps).density();
    let b = phi.add_field(v, -eps).density();
    let d: Vec<f64> = (0..m.len()).map(|k| (2.0 * a.samples[k].sqrt() - 2.0 * b.samples[k].sqrt()) / (2.0 * eps)).collect();
    linalg::dot(&m.weights, &d.iter().map(|x| x * x).collect::<Vec<_>>())
}

//! `KLAB1` snapshot files.
//!
//! ```text
//! KLAB1
//! kind N X mu V
//! sample
//! ...
//! ```
//!
//! Samples are written one per line in row-major order with 17
//! significant digits, which round-trips every `f64` exactly.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{fmt17, ModelGeometry, ModelKind, Potential};

pub const MAGIC: &str = "KLAB1";

pub fn write<W: Write>(out: &mut W, phi: &Potential) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "{}", phi.model().descriptor())?;
    for v in phi.samples() {
        writeln!(out, "{}", fmt17(*v))?;
    }
    Ok(())
}

pub fn write_file(path: &Path, phi: &Potential) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write(&mut w, phi)?;
    w.flush()?;
    Ok(())
}

/// Parsed second line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Descriptor {
    pub kind: ModelKind,
    pub n: usize,
    pub x_trunc: f64,
    pub mu: f64,
    pub volume: f64,
}

impl Descriptor {
    pub fn parse(line: &str) -> Result<Descriptor> {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(Error::Snapshot(format!("descriptor needs 5 fields, got {}", parts.len())));
        }
        let kind = ModelKind::parse(parts[0]).ok_or_else(|| Error::Snapshot(format!("unknown model kind {:?}", parts[0])))?;
        let n = parts[1].parse().map_err(|_| Error::Snapshot(format!("bad grid size {:?}", parts[1])))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Snapshot(format!("bad number {s:?}")));
        Ok(Descriptor { kind, n, x_trunc: num(parts[2])?, mu: num(parts[3])?, volume: num(parts[4])? })
    }

    pub fn of(m: &ModelGeometry) -> Descriptor {
        Descriptor { kind: m.kind, n: m.n, x_trunc: m.x_trunc, mu: m.mu, volume: m.volume }
    }

    /// A model matching this descriptor.
    pub fn build(&self) -> Result<Arc<ModelGeometry>> {
        let m = ModelGeometry::new(self.kind, self.n, self.x_trunc)?;
        let m = match self.kind {
            ModelKind::Torus2 => m.with_scale(self.volume)?,
            ModelKind::P1Symmetric => {
                if (self.volume - m.volume).abs() > 1e-12 * m.volume {
                    return Err(Error::Snapshot(format!("sphere volume {} is not 4π", self.volume)));
                }
                m
            }
        };
        Ok(Arc::new(m.with_mu(self.mu)))
    }

    fn matches(&self, m: &ModelGeometry) -> bool {
        let o = Descriptor::of(m);
        self.kind == o.kind && self.n == o.n && self.x_trunc == o.x_trunc && self.mu == o.mu && self.volume == o.volume
    }
}

/// Reads a snapshot line by line. With `expected`, the descriptor must
/// match that model and the potential is attached to it; otherwise a
/// model is built from the descriptor.
pub fn read<R: BufRead>(input: R, expected: Option<&Arc<ModelGeometry>>) -> Result<Potential> {
    let mut lines = input.lines();
    let mut next = |what: &str| -> Result<String> {
        lines.next().ok_or_else(|| Error::Snapshot(format!("missing {what}")))?.map_err(Error::from)
    };
    let magic = next("header")?;
    if magic.trim() != MAGIC {
        return Err(Error::Snapshot(format!("expected {MAGIC}, found {:?}", magic.trim())));
    }
    let desc = Descriptor::parse(&next("descriptor")?)?;
    let model = match expected {
        Some(m) => {
            if !desc.matches(m) {
                return Err(Error::ModelMismatch(format!("snapshot is '{}', run uses '{}'", descriptor_line(&desc), m.descriptor())));
            }
            m.clone()
        }
        None => desc.build()?,
    };
    let count = model.len();
    let mut samples = Vec::with_capacity(count);
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if samples.len() == count {
            return Err(Error::Snapshot(format!("more than {count} samples")));
        }
        samples.push(t.parse::<f64>().map_err(|_| Error::Snapshot(format!("bad sample {t:?}")))?);
    }
    if samples.len() != count {
        return Err(Error::Snapshot(format!("expected {count} samples, found {}", samples.len())));
    }
    Potential::from_samples(model, samples)
}

fn descriptor_line(d: &Descriptor) -> String {
    format!("{} {} {} {} {}", d.kind.name(), d.n, fmt17(d.x_trunc), fmt17(d.mu), fmt17(d.volume))
}

pub fn read_file(path: &Path, expected: Option<&Arc<ModelGeometry>>) -> Result<Potential> {
    let f = std::fs::File::open(path)?;
    read(std::io::BufReader::new(f), expected)
}

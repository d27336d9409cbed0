//! Binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "NHSP"            4 bytes
//! version           u32   (1)
//! dim               u32
//! n                 u32
//! L                 f64
//! space_tag         u32   (0 Euler, 1 Lagrange)
//! components        u32
//! coefficients      components × n^dim × (re f64, im f64), row-major modes
//! sections          zero or more of: tag [u8; 4], length u64, payload
//! ```
//!
//! Known sections: `TIME` (t: f64), `AMAT` (dim² f64, row-major) and `LMAP`
//! (t: f64, displacement limit: f64, dim² f64 matrix). A file carrying `LMAP`
//! stores a flow map: `dim` displacement components then `dim²` Jacobian
//! components `∂x^i/∂ξ^a` at index `i·dim + a`. Unknown sections are skipped.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::dynamics::{DynamicsError, StateBundle, UnimodularMatrix};
use crate::grid::{make_grid, Grid, GridError, SpaceTag, SpectralField, VectorField};
use crate::lagrangian::{FlowMap, LagrangianError};

pub const MAGIC: &[u8; 4] = b"NHSP";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown space tag {0}")]
    BadSpaceTag(u32),
    #[error("malformed section {0:?}")]
    BadSection(String),
    #[error("checkpoint holds {actual} components, expected {expected}")]
    ComponentCount { expected: usize, actual: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Lagrangian(#[from] LagrangianError),
}

/// Flow-map metadata carried by an `LMAP` section.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSection {
    pub t: f64,
    pub limit: f64,
    pub matrix: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub grid: Grid,
    pub tag: SpaceTag,
    pub fields: Vec<SpectralField>,
    pub time: Option<f64>,
    pub matrix: Option<Vec<f64>>,
    pub map: Option<MapSection>,
}

fn flat_matrix(a: &UnimodularMatrix) -> Vec<f64> {
    a.rows().into_iter().flatten().collect()
}

fn unflatten(m: &[f64], dim: usize) -> Result<UnimodularMatrix, CheckpointError> {
    if m.len() != dim * dim {
        return Err(CheckpointError::BadSection("matrix size".into()));
    }
    let rows: Vec<Vec<f64>> = m.chunks(dim).map(|r| r.to_vec()).collect();
    Ok(UnimodularMatrix::from_rows(&rows)?)
}

impl Checkpoint {
    pub fn from_fields(fields: Vec<SpectralField>) -> Result<Self, CheckpointError> {
        let first = fields.first().ok_or(CheckpointError::ComponentCount { expected: 1, actual: 0 })?;
        for f in &fields[1..] {
            first.ensure_same_space(f)?;
        }
        Ok(Checkpoint {
            grid: first.grid().clone(),
            tag: first.tag(),
            fields,
            time: None,
            matrix: None,
            map: None,
        })
    }

    /// `v` then the columns `u_a`, with time and `A`.
    pub fn from_state(state: &StateBundle) -> Self {
        let fields = state.fields().into_iter().cloned().collect();
        let mut c = Checkpoint::from_fields(fields).expect("state fields share one space");
        c.time = Some(state.t);
        c.matrix = Some(flat_matrix(&state.a));
        c
    }

    pub fn to_state(&self) -> Result<StateBundle, CheckpointError> {
        let d = self.grid.dim();
        self.expect_components(d + d * d)?;
        let a = match &self.matrix {
            Some(m) => unflatten(m, d)?,
            None => UnimodularMatrix::identity(d),
        };
        let v = VectorField::new(self.fields[..d].to_vec())?;
        let u = (0..d)
            .map(|c| VectorField::new(self.fields[d + c * d..d + (c + 1) * d].to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(StateBundle {
            v,
            u,
            a,
            t: self.time.unwrap_or(0.0),
        })
    }

    pub fn from_flow_map(map: &FlowMap) -> Self {
        let grid = map.grid();
        let fields = map
            .raw_displacement()
            .iter()
            .chain(map.raw_jacobian())
            .map(|arr| SpectralField::from_physical(grid, arr, SpaceTag::Lagrange).expect("grid-sized array"))
            .collect();
        let mut c = Checkpoint::from_fields(fields).expect("map fields share one space");
        c.map = Some(MapSection {
            t: map.t(),
            limit: map.displacement_limit(),
            matrix: flat_matrix(map.matrix()),
        });
        c
    }

    pub fn to_flow_map(&self) -> Result<FlowMap, CheckpointError> {
        let d = self.grid.dim();
        let sec = self
            .map
            .as_ref()
            .ok_or_else(|| CheckpointError::BadSection("missing LMAP".into()))?;
        self.expect_components(d + d * d)?;
        let phys: Vec<Vec<f64>> = self.fields.iter().map(|f| f.to_physical()).collect();
        let (disp, jac) = phys.split_at(d);
        let a = unflatten(&sec.matrix, d)?;
        Ok(FlowMap::from_parts(&self.grid, a, sec.t, disp.to_vec(), jac.to_vec())?.with_displacement_limit(sec.limit))
    }

    fn expect_components(&self, expected: usize) -> Result<(), CheckpointError> {
        if self.fields.len() != expected {
            return Err(CheckpointError::ComponentCount {
                expected,
                actual: self.fields.len(),
            });
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.grid.n() as u32).to_le_bytes())?;
        w.write_all(&self.grid.period().to_le_bytes())?;
        w.write_all(&self.tag.code().to_le_bytes())?;
        w.write_all(&(self.fields.len() as u32).to_le_bytes())?;
        for f in &self.fields {
            for c in f.coeffs() {
                w.write_all(&c.re.to_le_bytes())?;
                w.write_all(&c.im.to_le_bytes())?;
            }
        }
        if let Some(t) = self.time {
            write_section(w, b"TIME", &[t])?;
        }
        if let Some(m) = &self.matrix {
            write_section(w, b"AMAT", m)?;
        }
        if let Some(s) = &self.map {
            let mut payload = vec![s.t, s.limit];
            payload.extend_from_slice(&s.matrix);
            write_section(w, b"LMAP", &payload)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let dim = read_u32(r)? as usize;
        let n = read_u32(r)? as usize;
        let period = read_f64(r)?;
        let code = read_u32(r)?;
        let tag = SpaceTag::from_code(code).ok_or(CheckpointError::BadSpaceTag(code))?;
        let count = read_u32(r)? as usize;
        let grid = make_grid(dim, n, period)?;
        let mut fields = Vec::with_capacity(count);
        let mut buf = vec![0u8; grid.len() * 16];
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            let coeffs = buf
                .chunks_exact(16)
                .map(|c| {
                    Complex64::new(
                        f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                        f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
                    )
                })
                .collect();
            fields.push(SpectralField::from_coeffs(&grid, coeffs, tag)?);
        }
        let mut out = Checkpoint {
            grid,
            tag,
            fields,
            time: None,
            matrix: None,
            map: None,
        };
        loop {
            let mut stag = [0u8; 4];
            match r.read_exact(&mut stag) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            let len = read_u64(r)? as usize;
            let mut payload = vec![0u8; len];
            r.read_exact(&mut payload)?;
            let name = String::from_utf8_lossy(&stag).into_owned();
            if !len.is_multiple_of(8) {
                return Err(CheckpointError::BadSection(name));
            }
            let vals: Vec<f64> = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            match &stag {
                b"TIME" if vals.len() == 1 => out.time = Some(vals[0]),
                b"AMAT" if vals.len() == dim * dim => out.matrix = Some(vals),
                b"LMAP" if vals.len() == 2 + dim * dim => {
                    out.map = Some(MapSection {
                        t: vals[0],
                        limit: vals[1],
                        matrix: vals[2..].to_vec(),
                    })
                }
                b"TIME" | b"AMAT" | b"LMAP" => return Err(CheckpointError::BadSection(name)),
                _ => log::debug!("skipping unknown checkpoint section {name:?}"),
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Human-readable header and per-component summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let g = &self.grid;
        let _ = writeln!(s, "format     NHSP v{VERSION}");
        let _ = writeln!(s, "dim        {}", g.dim());
        let _ = writeln!(s, "n          {}", g.n());
        let _ = writeln!(s, "period     {}", g.period());
        let _ = writeln!(s, "space      {:?}", self.tag);
        let _ = writeln!(s, "components {}", self.fields.len());
        if let Some(t) = self.time {
            let _ = writeln!(s, "time       {t}");
        }
        if let Some(m) = &self.matrix {
            let _ = writeln!(s, "matrix     {m:?}");
        }
        if let Some(m) = &self.map {
            let _ = writeln!(s, "flow map   t = {}, limit = {}, A = {:?}", m.t, m.limit, m.matrix);
        }
        for (i, f) in self.fields.iter().enumerate() {
            let _ = writeln!(
                s,
                "[{i}] l2 = {:.6e}  max|c| = {:.6e}  mean = {:.3e}  symmetry defect = {:.1e}",
                f.l2_norm(),
                f.max_abs_coeff(),
                f.mean().re,
                f.conjugate_symmetry_defect()
            );
        }
        s
    }
}

fn write_section<W: Write>(w: &mut W, tag: &[u8; 4], vals: &[f64]) -> io::Result<()> {
    w.write_all(tag)?;
    w.write_all(&((vals.len() * 8) as u64).to_le_bytes())?;
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

//! Serialized artifacts: CSV tables, a little-endian binary cache for value
//! grids and policy tables, and run manifests. Everything returns bytes or
//! strings; callers decide where to write them.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{BoxRegion, SystemModel};
use crate::synthesis::{Interpolation, PolicyTable, SpecKind, StateGrid, ValueGrid};

const MAGIC: &[u8; 8] = b"DRSYNTH\0";
const FORMAT_VERSION: u32 = 1;
/// Bumped whenever a CSV column is added, removed or reordered.
pub const CSV_SCHEMA_VERSION: u32 = 1;

const KIND_VALUES: u8 = 0;
const KIND_POLICY: u8 = 1;

fn coord_headers(prefix: &str, n: usize) -> String {
    (1..=n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(",")
}

fn coords(x: &[f64]) -> String {
    x.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
}

/// `stage,node,x1..xn,value`, stage-major.
pub fn value_grid_csv(vg: &ValueGrid) -> String {
    let grid = vg.grid();
    let mut out = format!("stage,node,{},value\n", coord_headers("x", grid.dim()));
    for t in 0..=vg.horizon() {
        for (node, v) in vg.stage(t).iter().enumerate() {
            out.push_str(&format!("{t},{node},{},{v}\n", coords(&grid.node(node))));
        }
    }
    out
}

/// `stage,node,x1..xn,u1..um`, stage-major.
pub fn policy_csv(p: &PolicyTable) -> String {
    let grid = p.grid();
    let mut out = format!(
        "stage,node,{},{}\n",
        coord_headers("x", grid.dim()),
        coord_headers("u", p.input_dim())
    );
    for t in 0..p.horizon() {
        for node in 0..grid.len() {
            out.push_str(&format!(
                "{t},{node},{},{}\n",
                coords(&grid.node(node)),
                coords(p.input(t, node))
            ));
        }
    }
    out
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Config("cache file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn spec_code(k: SpecKind) -> u8 {
    match k {
        SpecKind::ReachAvoid => 0,
        SpecKind::Safety => 1,
    }
}

fn interp_code(i: Interpolation) -> u8 {
    match i {
        Interpolation::Multilinear => 0,
        Interpolation::Pessimistic => 1,
    }
}

fn write_header(w: &mut Writer, kind: u8, spec: u8, interp: u8, grid: &StateGrid, width: usize, stages: &[Vec<f64>]) {
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u8(kind);
    w.u8(spec);
    w.u8(interp);
    w.u8(0);
    let b = grid.working_box();
    w.u32(grid.dim() as u32);
    for d in 0..grid.dim() {
        w.f64(b.lower()[d]);
        w.f64(b.upper()[d]);
        w.u64(grid.points_per_dim()[d] as u64);
    }
    w.u32(width as u32);
    w.u32(stages.len() as u32);
    for s in stages {
        for &v in s {
            w.f64(v);
        }
    }
}

struct Decoded {
    kind: u8,
    spec: u8,
    interp: u8,
    grid: StateGrid,
    width: usize,
    stages: Vec<Vec<f64>>,
}

fn read_any(bytes: &[u8]) -> Result<Decoded> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Config("not a drsynth cache file".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Config(format!("unsupported cache version {version}")));
    }
    let kind = r.u8()?;
    let spec = r.u8()?;
    let interp = r.u8()?;
    r.u8()?;
    let dim = r.u32()? as usize;
    let mut lower = Vec::with_capacity(dim);
    let mut upper = Vec::with_capacity(dim);
    let mut counts = Vec::with_capacity(dim);
    for _ in 0..dim {
        lower.push(r.f64()?);
        upper.push(r.f64()?);
        counts.push(r.u64()? as usize);
    }
    let grid = StateGrid::new(BoxRegion::new(lower, upper)?, counts)?;
    let width = r.u32()? as usize;
    let n_stages = r.u32()? as usize;
    let per_stage = grid.len() * width;
    let mut stages = Vec::with_capacity(n_stages);
    for _ in 0..n_stages {
        stages.push((0..per_stage).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Config("trailing bytes in cache file".into()));
    }
    Ok(Decoded {
        kind,
        spec,
        interp,
        grid,
        width,
        stages,
    })
}

pub fn encode_value_grid(vg: &ValueGrid) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    write_header(
        &mut w,
        KIND_VALUES,
        spec_code(vg.spec_kind()),
        interp_code(vg.interpolation()),
        vg.grid(),
        1,
        vg.stages(),
    );
    w.0
}

pub fn decode_value_grid(bytes: &[u8], model: &SystemModel) -> Result<ValueGrid> {
    let d = read_any(bytes)?;
    if d.kind != KIND_VALUES || d.width != 1 {
        return Err(Error::Config("cache file does not hold a value grid".into()));
    }
    let kind = match d.spec {
        0 => SpecKind::ReachAvoid,
        1 => SpecKind::Safety,
        other => return Err(Error::Config(format!("bad spec code {other}"))),
    };
    let interp = match d.interp {
        0 => Interpolation::Multilinear,
        1 => Interpolation::Pessimistic,
        other => return Err(Error::Config(format!("bad interpolation code {other}"))),
    };
    ValueGrid::from_parts(model, d.grid, d.stages, kind, interp)
}

pub fn encode_policy(p: &PolicyTable) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    let stages: Vec<Vec<f64>> = (0..p.horizon()).map(|t| p.stage(t).to_vec()).collect();
    write_header(&mut w, KIND_POLICY, 0, 0, p.grid(), p.input_dim(), &stages);
    w.0
}

pub fn decode_policy(bytes: &[u8]) -> Result<PolicyTable> {
    let d = read_any(bytes)?;
    if d.kind != KIND_POLICY {
        return Err(Error::Config("cache file does not hold a policy table".into()));
    }
    PolicyTable::from_parts(d.grid, d.width, d.stages)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
}

/// Provenance record written next to every set of artifacts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub workers: usize,
    pub config_sha256: String,
    pub csv_schema: u32,
    pub cache_format: u32,
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, workers: usize, config_text: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            workers,
            config_sha256: sha256_hex(config_text.as_bytes()),
            csv_schema: CSV_SCHEMA_VERSION,
            cache_format: FORMAT_VERSION,
            artifacts: Vec::new(),
        }
    }

    pub fn add(&mut self, file: &str, bytes: &[u8]) {
        self.artifacts.push(ArtifactEntry {
            file: file.to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

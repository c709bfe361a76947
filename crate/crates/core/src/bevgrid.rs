//! Ego-centred bird's-eye-view occupancy grid with ground, obstacle and goal
//! channels.
//!
//! Rows run from the forward edge (row 0) backwards; columns run from the
//! ego's left to its right. Cell `(r, c)` covers forward offsets
//! `(e/2 − (r+1)·s, e/2 − r·s]` and rightward offsets `[c·s − e/2, (c+1)·s − e/2)`
//! for extent `e` and cell size `s`.

use crate::error::{Error, Result};
use crate::geometry::{OrientedRect, Pose, Segment, Vec2};
use crate::scenario::WorldState;
use ndarray::Array3;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CHANNELS: [&str; 3] = ["ground", "obstacle", "goal"];
pub const GROUND: usize = 0;
pub const OBSTACLE: usize = 1;
pub const GOAL: usize = 2;

const BLOB_MAGIC: &[u8; 8] = b"AFFDBEV\0";
const BLOB_VERSION: u32 = 1;
pub const BLOB_HEADER_BYTES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Side length of the square grid, meters.
    pub extent: f64,
    /// Cells per side.
    pub resolution: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { extent: 32.0, resolution: 256 }
    }
}

impl GridConfig {
    pub fn cell_size(&self) -> f64 {
        self.extent / self.resolution as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::config("bev.extent", "must be > 0"));
        }
        if self.resolution == 0 {
            return Err(Error::config("bev.resolution", "must be >= 1"));
        }
        Ok(())
    }

    /// Cell containing the ego-frame point (`forward`, `left`), if inside.
    pub fn ego_to_cell(&self, forward: f64, left: f64) -> Option<(usize, usize)> {
        let half = 0.5 * self.extent;
        let s = self.cell_size();
        let r = ((half - forward) / s).floor();
        let c = ((half - left) / s).floor();
        let n = self.resolution as f64;
        if (0.0..n).contains(&r) && (0.0..n).contains(&c) {
            Some((r as usize, c as usize))
        } else {
            None
        }
    }

    /// Ego-frame (`forward`, `left`) of a cell centre.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let half = 0.5 * self.extent;
        let s = self.cell_size();
        (half - (row as f64 + 0.5) * s, half - (col as f64 + 0.5) * s)
    }
}

/// World point in the ego frame as (`forward`, `left`).
pub fn to_ego(ego: Pose, p: Vec2) -> (f64, f64) {
    let d = p - ego.position();
    let (s, c) = ego.heading.sin_cos();
    (d.x * c + d.y * s, -d.x * s + d.y * c)
}

pub fn from_ego(ego: Pose, forward: f64, left: f64) -> Vec2 {
    let (s, c) = ego.heading.sin_cos();
    ego.position() + Vec2::new(forward * c - left * s, forward * s + left * c)
}

pub fn world_to_grid(cfg: &GridConfig, ego: Pose, p: Vec2) -> Option<(usize, usize)> {
    let (f, l) = to_ego(ego, p);
    cfg.ego_to_cell(f, l)
}

/// World position of a cell centre.
pub fn grid_to_world(cfg: &GridConfig, ego: Pose, row: usize, col: usize) -> Vec2 {
    let (f, l) = cfg.cell_center(row, col);
    from_ego(ego, f, l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    /// `(channel, row, col)`, binary occupancy.
    pub data: Array3<f32>,
}

impl BevGrid {
    pub fn zeros(cfg: &GridConfig) -> Self {
        Self { data: Array3::zeros((CHANNELS.len(), cfg.resolution, cfg.resolution)) }
    }

    pub fn occupied(&self, channel: usize) -> usize {
        self.data.index_axis(ndarray::Axis(0), channel).iter().filter(|&&v| v != 0.0).count()
    }
}

/// Index range of cells whose centres can fall inside `[lo, hi]` along one
/// axis, given the cell-centre formula `half − (i + 0.5)·s`.
fn index_span(cfg: &GridConfig, lo: f64, hi: f64) -> std::ops::RangeInclusive<usize> {
    let half = 0.5 * cfg.extent;
    let s = cfg.cell_size();
    let n = cfg.resolution as f64;
    let a = ((half - hi) / s - 0.5).floor().clamp(0.0, n - 1.0) as usize;
    let b = ((half - lo) / s - 0.5).ceil().clamp(0.0, n - 1.0) as usize;
    a..=b
}

/// Marks every cell whose centre satisfies `inside`, scanning only the cells
/// under the ego-frame bounding box.
fn fill(grid: &mut BevGrid, ch: usize, cfg: &GridConfig, bbox: [f64; 4], inside: impl Fn(f64, f64) -> bool) {
    let [f_lo, f_hi, l_lo, l_hi] = bbox;
    let half = 0.5 * cfg.extent;
    if f_hi < -half || f_lo > half || l_hi < -half || l_lo > half {
        return;
    }
    for r in index_span(cfg, f_lo, f_hi) {
        for c in index_span(cfg, l_lo, l_hi) {
            let (f, l) = cfg.cell_center(r, c);
            if inside(f, l) {
                grid.data[[ch, r, c]] = 1.0;
            }
        }
    }
}

fn bbox_of(points: &[(f64, f64)], pad: f64) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for &(f, l) in points {
        b[0] = b[0].min(f - pad);
        b[1] = b[1].max(f + pad);
        b[2] = b[2].min(l - pad);
        b[3] = b[3].max(l + pad);
    }
    b
}

pub fn rasterize(w: &WorldState, cfg: &GridConfig) -> BevGrid {
    let ego = w.ego.pose();
    let mut grid = BevGrid::zeros(cfg);

    let hw = w.map.spec.lane_half_width;
    for lane in &w.map.lanes {
        for pair in lane.points.windows(2) {
            let a = to_ego(ego, pair[0]);
            let b = to_ego(ego, pair[1]);
            let seg = Segment::new(Vec2::new(a.0, a.1), Vec2::new(b.0, b.1));
            fill(&mut grid, GROUND, cfg, bbox_of(&[a, b], hw), |f, l| seg.distance_to(Vec2::new(f, l)) <= hw);
        }
    }

    for e in &w.entities {
        let (f, l) = to_ego(ego, e.pose.position());
        let rect = OrientedRect::new(Pose::new(f, l, e.pose.heading - ego.heading), e.length, e.width);
        let corners: Vec<(f64, f64)> = rect.corners().iter().map(|p| (p.x, p.y)).collect();
        fill(&mut grid, OBSTACLE, cfg, bbox_of(&corners, 0.0), |f, l| rect.contains(Vec2::new(f, l)));
    }

    if let Some((r, c)) = world_to_grid(cfg, ego, w.route.goal) {
        grid.data[[GOAL, r, c]] = 1.0;
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSidecar {
    pub shape: [usize; 3],
    pub channels: Vec<String>,
    pub cell_size: f64,
    pub extent: f64,
    pub dtype: String,
    pub header_bytes: usize,
    /// Ego `[x, y, heading]` in world coordinates.
    pub ego_pose: [f64; 3],
    pub step: u64,
}

pub fn sidecar_path(blob: &Path) -> PathBuf {
    blob.with_extension("json")
}

pub fn encode_blob(grid: &BevGrid) -> Vec<u8> {
    let (ch, rows, cols) = grid.data.dim();
    let mut out = Vec::with_capacity(BLOB_HEADER_BYTES + 4 * grid.data.len());
    out.extend_from_slice(BLOB_MAGIC);
    for v in [BLOB_VERSION, ch as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in grid.data.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_blob(bytes: &[u8]) -> Result<BevGrid> {
    let bad = |why: &str| Error::Input(format!("BEV blob: {why}"));
    if bytes.len() < BLOB_HEADER_BYTES || &bytes[..8] != BLOB_MAGIC {
        return Err(bad("missing magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().expect("4 bytes")) as usize;
    if word(0) != BLOB_VERSION as usize {
        return Err(bad("unsupported version"));
    }
    let (ch, rows, cols) = (word(1), word(2), word(3));
    let payload = &bytes[BLOB_HEADER_BYTES..];
    if payload.len() != 4 * ch * rows * cols {
        return Err(bad("payload size does not match shape"));
    }
    let vals: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    let data = Array3::from_shape_vec((ch, rows, cols), vals).map_err(|e| bad(&e.to_string()))?;
    Ok(BevGrid { data })
}

/// Writes the grid blob at `path` and the JSON sidecar next to it.
pub fn export_frame(w: &WorldState, cfg: &GridConfig, path: &Path) -> Result<BevGrid> {
    let grid = rasterize(w, cfg);
    std::fs::write(path, encode_blob(&grid)).map_err(|e| Error::io(path, e))?;
    let side = FrameSidecar {
        shape: [CHANNELS.len(), cfg.resolution, cfg.resolution],
        channels: CHANNELS.iter().map(|s| s.to_string()).collect(),
        cell_size: cfg.cell_size(),
        extent: cfg.extent,
        dtype: "f32le".into(),
        header_bytes: BLOB_HEADER_BYTES,
        ego_pose: [w.ego.x, w.ego.y, w.ego.heading],
        step: w.t_step,
    };
    let sp = sidecar_path(path);
    let json = serde_json::to_vec_pretty(&side).map_err(|e| Error::Input(e.to_string()))?;
    std::fs::write(&sp, json).map_err(|e| Error::io(&sp, e))?;
    Ok(grid)
}

pub fn import_frame(path: &Path) -> Result<(BevGrid, FrameSidecar)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let grid = decode_blob(&bytes)?;
    let sp = sidecar_path(path);
    let text = std::fs::read(&sp).map_err(|e| Error::io(&sp, e))?;
    let side: FrameSidecar = serde_json::from_slice(&text).map_err(|e| Error::Input(format!("BEV sidecar: {e}")))?;
    if side.shape != [grid.data.dim().0, grid.data.dim().1, grid.data.dim().2] {
        return Err(Error::Shape(format!("sidecar shape {:?} vs blob {:?}", side.shape, grid.data.dim())));
    }
    Ok((grid, side))
}

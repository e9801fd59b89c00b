//! Robot-centric polar occupancy representation of local place geometry.
//!
//! A place observation is a 56 x 21 polar grid (angular x radial) of
//! ternary cells within a 5 m radius, giving 1176 categorical variables per
//! place. Radial cell depths grow geometrically away from the robot, so the
//! representation keeps higher resolution close to the robot and coarser
//! context further out.

mod model;
mod polar;

pub use model::{build_place_model, classify_local, LocalPosterior, PlaceModel, PlaceModelConfig};
pub use polar::{cartesian_to_polar, LocalGrid};

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spn::{Evidence, SpnError, VarId, VarTable};

pub const ANGULAR_CELLS: usize = 56;
pub const RADIAL_CELLS: usize = 21;
pub const CELLS_PER_PLACE: usize = ANGULAR_CELLS * RADIAL_CELLS;
pub const GRID_RADIUS_M: f64 = 5.0;
/// Depth of the innermost radial cell; outer depths grow geometrically.
pub const INNER_RADIAL_DEPTH_M: f64 = 0.12;
/// 45-degree views partitioning the angular cells.
pub const NUM_VIEWS: usize = 8;
pub const VIEW_ANGULAR_CELLS: usize = ANGULAR_CELLS / NUM_VIEWS;

#[derive(Debug, Error)]
pub enum PlaceError {
    #[error("degenerate local grid: {0}")]
    DegenerateGrid(String),
    #[error("cell code {0} is not one of 0 (free), 1 (occupied), 2 (unknown)")]
    BadCellCode(u8),
    #[error("grid parse error: {0}")]
    Parse(String),
    #[error("place model is untrained")]
    Untrained,
    #[error(transparent)]
    Spn(#[from] SpnError),
    #[error(transparent)]
    Learn(#[from] crate::learn::LearnError),
}

/// Ternary occupancy state of one cell.
///
/// `Unknown` marks space the robot could not observe (occluded or out of
/// range); as evidence it is treated as a missing value and marginalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum CellState {
    Free = 0,
    Occupied = 1,
    Unknown = 2,
}

impl CellState {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self, PlaceError> {
        match code {
            0 => Ok(CellState::Free),
            1 => Ok(CellState::Occupied),
            2 => Ok(CellState::Unknown),
            other => Err(PlaceError::BadCellCode(other)),
        }
    }
}

/// Robot-centric polar occupancy grid: 56 angular x 21 radial ternary
/// cells within a 5 m radius. Cell `(a, r)` maps to variable index
/// `a * 21 + r`; this bijection is fixed and stable across versions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolarGrid {
    cells: Vec<CellState>,
}

impl Default for PolarGrid {
    fn default() -> Self {
        Self::filled(CellState::Unknown)
    }
}

impl PolarGrid {
    pub fn filled(state: CellState) -> Self {
        Self { cells: vec![state; CELLS_PER_PLACE] }
    }

    pub fn from_cells(cells: Vec<CellState>) -> Result<Self, PlaceError> {
        if cells.len() != CELLS_PER_PLACE {
            return Err(PlaceError::Parse(format!(
                "expected {CELLS_PER_PLACE} cells, got {}",
                cells.len()
            )));
        }
        Ok(Self { cells })
    }

    #[inline]
    pub fn get(&self, angular: usize, radial: usize) -> CellState {
        self.cells[cell_index(angular, radial)]
    }

    #[inline]
    pub fn set(&mut self, angular: usize, radial: usize, state: CellState) {
        self.cells[cell_index(angular, radial)] = state;
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    /// Writes the grid into evidence over variables starting at `base`:
    /// free and occupied cells are observed values, unknown cells are
    /// marginalized out (all indicators admitted).
    pub fn write_evidence(&self, ev: &mut Evidence, base: u32) -> Result<(), SpnError> {
        for (i, &c) in self.cells.iter().enumerate() {
            let var = VarId(base + i as u32);
            match c {
                CellState::Free => ev.observe(var, 0)?,
                CellState::Occupied => ev.observe(var, 1)?,
                CellState::Unknown => ev.marginalize(var)?,
            }
        }
        Ok(())
    }

    pub fn to_evidence(&self, vars: &VarTable) -> Result<Evidence, SpnError> {
        let mut ev = Evidence::marginalized(vars);
        self.write_evidence(&mut ev, 0)?;
        Ok(ev)
    }

    /// Cells differing from `other` (Hamming distance over ternary codes).
    pub fn hamming(&self, other: &PolarGrid) -> usize {
        self.cells
            .iter()
            .zip(&other.cells)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Variable index of polar cell `(angular, radial)`.
#[inline]
pub fn cell_index(angular: usize, radial: usize) -> usize {
    debug_assert!(angular < ANGULAR_CELLS && radial < RADIAL_CELLS);
    angular * RADIAL_CELLS + radial
}

/// Inverse of [`cell_index`].
#[inline]
pub fn cell_coords(index: usize) -> (usize, usize) {
    (index / RADIAL_CELLS, index % RADIAL_CELLS)
}

/// The 1176-variable ternary table every place model shares.
pub fn place_var_table() -> VarTable {
    VarTable::uniform(CELLS_PER_PLACE, 3).expect("static table")
}

/// Radial cell edges in meters: 22 values from 0 to exactly 5.0, with cell
/// depths in geometric progression starting at [`INNER_RADIAL_DEPTH_M`].
/// The growth ratio is solved once by bisection.
pub fn radial_edges() -> &'static [f64; RADIAL_CELLS + 1] {
    static EDGES: OnceLock<[f64; RADIAL_CELLS + 1]> = OnceLock::new();
    EDGES.get_or_init(|| {
        let n = RADIAL_CELLS as i32;
        let total = GRID_RADIUS_M / INNER_RADIAL_DEPTH_M;
        let sum = |g: f64| (g.powi(n) - 1.0) / (g - 1.0);
        let (mut lo, mut hi) = (1.0 + 1e-9, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sum(mid) < total {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let g = 0.5 * (lo + hi);
        let mut edges = [0.0; RADIAL_CELLS + 1];
        let mut depth = INNER_RADIAL_DEPTH_M;
        for i in 1..=RADIAL_CELLS {
            edges[i] = edges[i - 1] + depth;
            depth *= g;
        }
        edges[RADIAL_CELLS] = GRID_RADIUS_M;
        edges
    })
}

/// Radial band whose annulus contains `rho` meters, if within range.
pub fn radial_band(rho: f64) -> Option<usize> {
    let edges = radial_edges();
    if !(0.0..edges[RADIAL_CELLS]).contains(&rho) {
        return None;
    }
    Some(edges[1..].partition_point(|&e| e <= rho))
}

/// One 45-degree sector: 7 angular columns x 21 radial cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct View {
    pub index: usize,
    cells: Vec<CellState>,
}

impl View {
    #[inline]
    pub fn get(&self, column: usize, radial: usize) -> CellState {
        self.cells[column * RADIAL_CELLS + radial]
    }

    /// Variables of view `v` in the shared per-place indexing.
    pub fn var_indices(view: usize) -> impl Iterator<Item = usize> {
        let lo = view * VIEW_ANGULAR_CELLS;
        (lo..lo + VIEW_ANGULAR_CELLS)
            .flat_map(|a| (0..RADIAL_CELLS).map(move |r| cell_index(a, r)))
    }
}

/// Splits the grid into its eight 45-degree views; view `v` holds angular
/// columns `7v..7v+7`.
pub fn split_views(grid: &PolarGrid) -> Vec<View> {
    (0..NUM_VIEWS)
        .map(|v| {
            let mut cells = Vec::with_capacity(VIEW_ANGULAR_CELLS * RADIAL_CELLS);
            for a in v * VIEW_ANGULAR_CELLS..(v + 1) * VIEW_ANGULAR_CELLS {
                for r in 0..RADIAL_CELLS {
                    cells.push(grid.get(a, r));
                }
            }
            View { index: v, cells }
        })
        .collect()
}

/// Reassembles a grid from its views; exact inverse of [`split_views`].
pub fn concat_views(views: &[View]) -> Result<PolarGrid, PlaceError> {
    if views.len() != NUM_VIEWS {
        return Err(PlaceError::Parse(format!(
            "expected {NUM_VIEWS} views, got {}",
            views.len()
        )));
    }
    let mut grid = PolarGrid::default();
    for (v, view) in views.iter().enumerate() {
        for c in 0..VIEW_ANGULAR_CELLS {
            for r in 0..RADIAL_CELLS {
                grid.set(v * VIEW_ANGULAR_CELLS + c, r, view.get(c, r));
            }
        }
    }
    Ok(grid)
}

// --- file formats ---

#[derive(Serialize, Deserialize)]
struct GridFile {
    format: String,
    version: u32,
    angular: usize,
    radial: usize,
    radius_m: f64,
    radial_edges: Vec<f64>,
    /// Row-major (angular-major) cell codes 0/1/2.
    cells: Vec<u8>,
}

const GRID_FORMAT: &str = "toponets-grid";
const GRID_VERSION: u32 = 1;
/// Magic prefix of the packed binary variant.
pub const GRID_MAGIC: &[u8; 4] = b"TPG1";

impl PolarGrid {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(GridFile {
            format: GRID_FORMAT.into(),
            version: GRID_VERSION,
            angular: ANGULAR_CELLS,
            radial: RADIAL_CELLS,
            radius_m: GRID_RADIUS_M,
            radial_edges: radial_edges().to_vec(),
            cells: self.cells.iter().map(|c| c.code()).collect(),
        })
        .expect("grid serialization cannot fail")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, PlaceError> {
        let file: GridFile = serde_json::from_value(value.clone())
            .map_err(|e| PlaceError::Parse(e.to_string()))?;
        if file.format != GRID_FORMAT || file.version != GRID_VERSION {
            return Err(PlaceError::Parse(format!(
                "unsupported grid container {}/{}",
                file.format, file.version
            )));
        }
        if file.angular != ANGULAR_CELLS || file.radial != RADIAL_CELLS {
            return Err(PlaceError::Parse(format!(
                "unsupported grid dimensions {}x{}",
                file.angular, file.radial
            )));
        }
        let cells = file
            .cells
            .iter()
            .map(|&c| CellState::from_code(c))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_cells(cells)
    }

    /// Packed binary variant: magic, u16 LE angular and radial counts, then
    /// 2 bits per cell, row-major, lowest bits first within each byte.
    pub fn to_packed(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + CELLS_PER_PLACE.div_ceil(4));
        out.extend_from_slice(GRID_MAGIC);
        out.extend_from_slice(&(ANGULAR_CELLS as u16).to_le_bytes());
        out.extend_from_slice(&(RADIAL_CELLS as u16).to_le_bytes());
        let mut byte = 0u8;
        for (i, c) in self.cells.iter().enumerate() {
            byte |= c.code() << ((i % 4) * 2);
            if i % 4 == 3 {
                out.push(byte);
                byte = 0;
            }
        }
        if CELLS_PER_PLACE % 4 != 0 {
            out.push(byte);
        }
        out
    }

    pub fn from_packed(bytes: &[u8]) -> Result<Self, PlaceError> {
        let body_len = CELLS_PER_PLACE.div_ceil(4);
        if bytes.len() != 8 + body_len || &bytes[0..4] != GRID_MAGIC {
            return Err(PlaceError::Parse("bad packed grid payload".into()));
        }
        let angular = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
        let radial = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        if angular != ANGULAR_CELLS || radial != RADIAL_CELLS {
            return Err(PlaceError::Parse(format!(
                "unsupported packed dimensions {angular}x{radial}"
            )));
        }
        let mut cells = Vec::with_capacity(CELLS_PER_PLACE);
        for i in 0..CELLS_PER_PLACE {
            let code = (bytes[8 + i / 4] >> ((i % 4) * 2)) & 0b11;
            cells.push(CellState::from_code(code)?);
        }
        Ok(Self { cells })
    }
}

//! Cartesian-to-polar conversion of local metric grids.

use super::{
    radial_edges, CellState, PlaceError, PolarGrid, ANGULAR_CELLS, GRID_RADIUS_M, RADIAL_CELLS,
};

/// A square metric occupancy grid centered on the robot, row-major with
/// `cells[y * size + x]`; physical coordinates put the robot at the grid
/// center with +x to the east and +y to the north.
#[derive(Debug, Clone)]
pub struct LocalGrid {
    pub size: usize,
    pub resolution_m: f64,
    pub cells: Vec<CellState>,
}

impl LocalGrid {
    pub fn filled(size: usize, resolution_m: f64, state: CellState) -> Self {
        Self { size, resolution_m, cells: vec![state; size * size] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> CellState {
        self.cells[y * self.size + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, state: CellState) {
        self.cells[y * self.size + x] = state;
    }

    /// State at a physical point; out-of-grid points read as unknown.
    #[inline]
    pub fn state_at(&self, x: f64, y: f64) -> CellState {
        let half = self.size as f64 / 2.0;
        let ix = (x / self.resolution_m + half).floor();
        let iy = (y / self.resolution_m + half).floor();
        if ix < 0.0 || iy < 0.0 || ix >= self.size as f64 || iy >= self.size as f64 {
            return CellState::Unknown;
        }
        self.get(ix as usize, iy as usize)
    }

    /// Physical half-extent in meters.
    pub fn half_extent(&self) -> f64 {
        self.size as f64 * self.resolution_m / 2.0
    }
}

/// Sub-samples per polar-cell axis when estimating area majority.
const SUPERSAMPLE: usize = 5;

/// Converts a robot-centered metric grid into the polar observation.
///
/// Each polar cell takes the majority state over a fixed sub-sampling
/// lattice of its annular sector (ties resolve occupied over unknown over
/// free). Angular column `a` spans `[a, a+1) * 2pi/56` counterclockwise
/// from the robot's +x heading.
pub fn cartesian_to_polar(local: &LocalGrid, radius_m: f64) -> Result<PolarGrid, PlaceError> {
    if local.size == 0 || !(local.resolution_m > 0.0) {
        return Err(PlaceError::DegenerateGrid("empty grid or non-positive resolution".into()));
    }
    if !(radius_m > 0.0) {
        return Err(PlaceError::DegenerateGrid("non-positive radius".into()));
    }
    if local.half_extent() + 1e-9 < radius_m {
        return Err(PlaceError::DegenerateGrid(format!(
            "grid half-extent {:.3} m does not cover the {radius_m} m radius",
            local.half_extent()
        )));
    }

    let edges = radial_edges();
    let scale = radius_m / GRID_RADIUS_M;
    let sector = std::f64::consts::TAU / ANGULAR_CELLS as f64;
    let mut grid = PolarGrid::default();
    for a in 0..ANGULAR_CELLS {
        // Sample angles strictly inside the sector.
        let angles: Vec<(f64, f64)> = (0..SUPERSAMPLE)
            .map(|j| {
                let theta = (a as f64 + (j as f64 + 0.5) / SUPERSAMPLE as f64) * sector;
                (theta.cos(), theta.sin())
            })
            .collect();
        for r in 0..RADIAL_CELLS {
            let (lo, hi) = (edges[r] * scale, edges[r + 1] * scale);
            let mut counts = [0usize; 3];
            for k in 0..SUPERSAMPLE {
                let rho = lo + (k as f64 + 0.5) / SUPERSAMPLE as f64 * (hi - lo);
                for &(c, s) in &angles {
                    counts[local.state_at(rho * c, rho * s).code() as usize] += 1;
                }
            }
            grid.set(a, r, majority(counts));
        }
    }
    Ok(grid)
}

/// Majority vote; ties prefer occupied, then unknown, then free.
fn majority(counts: [usize; 3]) -> CellState {
    let order = [CellState::Occupied, CellState::Unknown, CellState::Free];
    *order
        .iter()
        .max_by_key(|s| counts[s.code() as usize])
        .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::place::radial_band;

    fn grid_from_scene(scene: &dyn Fn(f64, f64) -> CellState, size: usize, res: f64) -> LocalGrid {
        let mut g = LocalGrid::filled(size, res, CellState::Unknown);
        let half = size as f64 / 2.0;
        for y in 0..size {
            for x in 0..size {
                let px = (x as f64 - half + 0.5) * res;
                let py = (y as f64 - half + 0.5) * res;
                g.set(x, y, scene(px, py));
            }
        }
        g
    }

    #[test]
    fn all_unknown_input_gives_all_unknown_polar() {
        let local = LocalGrid::filled(220, 0.05, CellState::Unknown);
        let polar = cartesian_to_polar(&local, GRID_RADIUS_M).unwrap();
        assert!(polar.cells().iter().all(|&c| c == CellState::Unknown));
    }

    #[test]
    fn degenerate_grids_are_rejected() {
        assert!(cartesian_to_polar(&LocalGrid::filled(0, 0.05, CellState::Free), 5.0).is_err());
        assert!(cartesian_to_polar(&LocalGrid::filled(10, 0.05, CellState::Free), 5.0).is_err());
        assert!(cartesian_to_polar(&LocalGrid::filled(220, -1.0, CellState::Free), 5.0).is_err());
    }

    /// Full circular wall aligned with one radial band: free inside, the
    /// band occupied, unknown beyond. The expected polar grid is derived
    /// per cell by an independent point-in-annulus test on the band edges.
    #[test]
    fn circular_wall_occupies_exactly_one_band() {
        let band = radial_band(3.0).unwrap();
        let edges = radial_edges();
        let (wall_lo, wall_hi) = (edges[band], edges[band + 1]);
        let scene = move |x: f64, y: f64| {
            let rho = (x * x + y * y).sqrt();
            if rho < wall_lo {
                CellState::Free
            } else if rho < wall_hi {
                CellState::Occupied
            } else {
                CellState::Unknown
            }
        };
        let local = grid_from_scene(&scene, 500, 0.02);
        let polar = cartesian_to_polar(&local, GRID_RADIUS_M).unwrap();
        for a in 0..ANGULAR_CELLS {
            for r in 0..RADIAL_CELLS {
                let expected = match r.cmp(&band) {
                    std::cmp::Ordering::Less => CellState::Free,
                    std::cmp::Ordering::Equal => CellState::Occupied,
                    std::cmp::Ordering::Greater => CellState::Unknown,
                };
                assert_eq!(polar.get(a, r), expected, "cell ({a},{r})");
            }
        }
    }

    /// Rotating the scene by 45 degrees cyclically shifts the polar grid by
    /// exactly 7 angular columns, up to raster discretization at sector
    /// boundaries.
    #[test]
    fn rotation_by_45_degrees_shifts_seven_columns() {
        let blockish = |x: f64, y: f64| -> CellState {
            let rho = (x * x + y * y).sqrt();
            if rho > 4.8 {
                CellState::Unknown
            } else if (1.0..2.0).contains(&x) && (-0.5..1.5).contains(&y) {
                CellState::Occupied
            } else if x < -2.0 && y.abs() < 1.0 {
                CellState::Occupied
            } else {
                CellState::Free
            }
        };
        let angle = std::f64::consts::FRAC_PI_4;
        let rotated = move |x: f64, y: f64| {
            // Inverse rotation: sample the base scene at R^-1 (x, y).
            let (c, s) = (angle.cos(), angle.sin());
            blockish(c * x + s * y, -s * x + c * y)
        };
        let base = cartesian_to_polar(&grid_from_scene(&blockish, 500, 0.02), GRID_RADIUS_M).unwrap();
        let rot = cartesian_to_polar(&grid_from_scene(&rotated, 500, 0.02), GRID_RADIUS_M).unwrap();
        let mut matches = 0;
        for a in 0..ANGULAR_CELLS {
            for r in 0..RADIAL_CELLS {
                if rot.get((a + 7) % ANGULAR_CELLS, r) == base.get(a, r) {
                    matches += 1;
                }
            }
        }
        let frac = matches as f64 / (ANGULAR_CELLS * RADIAL_CELLS) as f64;
        assert!(frac >= 0.95, "only {frac:.3} of cells matched after shifting");
    }
}

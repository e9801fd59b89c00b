//! Synthetic environment generator.
//!
//! Each floor is a corridor spine with rooms attached through doorway
//! nodes. Every place's local geometry is produced by rasterizing a
//! class-specific floorplan prototype around a jittered robot pose,
//! raytracing visibility from the robot (walls occlude; unreached cells
//! stay unknown), converting to the polar observation, and applying
//! per-cell flip noise. Everything is deterministic per seed.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassCatalogue, MapError, PlaceId, SemanticMap};
use crate::place::{cartesian_to_polar, CellState, LocalGrid, PolarGrid, GRID_RADIUS_M};
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorridorTopology {
    Chain,
    Loop,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub floors: usize,
    /// Inclusive range of rooms per floor.
    pub rooms_per_floor: (usize, usize),
    /// Inclusive range of places per room; the default mix assumes a mean
    /// of 3 (see [`GeneratorConfig::default_mix`]).
    pub places_per_room: (usize, usize),
    pub corridor_topology: CorridorTopology,
    /// Target per-class place frequency over the catalogue; must sum to 1.
    pub class_mix: Vec<f64>,
    /// Per-cell probability of replacing a polar cell with another state.
    pub geometry_noise: f64,
    pub rng_seed: u64,
}

impl GeneratorConfig {
    pub fn defaults_for(catalogue: &ClassCatalogue) -> Self {
        Self {
            floors: 1,
            rooms_per_floor: (8, 12),
            places_per_room: (2, 4),
            corridor_topology: CorridorTopology::Chain,
            class_mix: Self::default_mix(catalogue),
            geometry_noise: 0.02,
            rng_seed: 0,
        }
    }

    /// Mix consistent with the structural identities of the generator:
    /// one doorway per room and mean room size 3 imply
    /// `rooms_share = 3 * doorway_share`, with the remainder on corridors.
    pub fn default_mix(catalogue: &ClassCatalogue) -> Vec<f64> {
        let named = |pairs: &[(&str, f64)]| -> Vec<f64> {
            let mut mix = vec![0.0; catalogue.len()];
            for (name, p) in pairs {
                let i = catalogue.index_of(name).expect("fixture class");
                mix[i] = *p;
            }
            mix
        };
        match catalogue.len() {
            6 => named(&[
                ("corridor", 0.24),
                ("doorway", 0.19),
                ("office", 0.20),
                ("meeting_room", 0.15),
                ("kitchen", 0.12),
                ("bathroom", 0.10),
            ]),
            10 => named(&[
                ("corridor", 0.24),
                ("doorway", 0.19),
                ("small_office", 0.12),
                ("large_office", 0.08),
                ("meeting_room", 0.09),
                ("large_meeting_room", 0.05),
                ("kitchen", 0.08),
                ("printer_area", 0.05),
                ("bathroom", 0.06),
                ("stairs", 0.04),
            ]),
            n => vec![1.0 / n as f64; n],
        }
    }

    fn validate(&self, catalogue: &ClassCatalogue) -> Result<(), MapError> {
        if self.floors == 0 {
            return Err(MapError::InfeasibleConfig("zero floors".into()));
        }
        if self.rooms_per_floor.0 == 0 || self.rooms_per_floor.0 > self.rooms_per_floor.1 {
            return Err(MapError::InfeasibleConfig("bad rooms_per_floor range".into()));
        }
        if self.places_per_room.0 == 0 || self.places_per_room.0 > self.places_per_room.1 {
            return Err(MapError::InfeasibleConfig("bad places_per_room range".into()));
        }
        if self.class_mix.len() != catalogue.len() {
            return Err(MapError::InfeasibleConfig(format!(
                "class_mix has {} entries for {} classes",
                self.class_mix.len(),
                catalogue.len()
            )));
        }
        let total: f64 = self.class_mix.iter().sum();
        if (total - 1.0).abs() > 1e-6 || self.class_mix.iter().any(|&p| p < 0.0) {
            return Err(MapError::InfeasibleConfig("class_mix must be a distribution".into()));
        }
        if !(0.0..0.5).contains(&self.geometry_noise) {
            return Err(MapError::InfeasibleConfig("geometry_noise must be in [0, 0.5)".into()));
        }
        for name in ["corridor", "doorway"] {
            if catalogue.index_of(name).is_none() {
                return Err(MapError::InfeasibleConfig(format!("catalogue lacks {name}")));
            }
        }
        Ok(())
    }
}

/// Axis-aligned rectangle in room coordinates.
#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn contains(&self, x: f64, y: f64) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }
}

/// Class-specific floorplan family: room extent plus obstacle layout.
struct RoomProto {
    width: f64,
    height: f64,
    obstacles: Vec<Rect>,
    /// Door gaps along the room boundary (carved out of the walls).
    door_gaps: Vec<Rect>,
}

const WALL: f64 = 0.2;
const DOOR_W: f64 = 1.0;

fn room_proto(class_name: &str) -> RoomProto {
    let door_bottom = |w: f64| Rect {
        x0: w / 2.0 - DOOR_W / 2.0,
        y0: -WALL - 0.01,
        x1: w / 2.0 + DOOR_W / 2.0,
        y1: 0.01,
    };
    let block = |x0: f64, y0: f64, x1: f64, y1: f64| Rect { x0, y0, x1, y1 };
    match class_name {
        "corridor" => RoomProto {
            width: 2.2,
            height: 14.0,
            obstacles: vec![],
            // Door gaps into rooms on both sides.
            door_gaps: (0..4)
                .flat_map(|i| {
                    let y = 1.5 + i as f64 * 3.2;
                    [
                        block(-WALL - 0.01, y, 0.01, y + DOOR_W),
                        block(2.2 - 0.01, y, 2.2 + WALL + 0.01, y + DOOR_W),
                    ]
                })
                .collect(),
        },
        "doorway" => RoomProto {
            // Two open areas joined by a narrow passage; the robot stands in
            // the passage. Modeled as a wide room with two wall stubs.
            width: 7.0,
            height: 6.0,
            obstacles: vec![
                block(3.3, 0.0, 3.7, 2.3),
                block(3.3, 3.7, 3.7, 6.0),
            ],
            door_gaps: vec![],
        },
        "office" | "small_office" => RoomProto {
            width: 3.2,
            height: 3.6,
            obstacles: vec![block(0.1, 2.7, 1.7, 3.5)],
            door_gaps: vec![door_bottom(3.2)],
        },
        "large_office" => RoomProto {
            width: 5.5,
            height: 6.5,
            obstacles: vec![
                block(0.1, 5.5, 1.7, 6.4),
                block(3.8, 5.5, 5.4, 6.4),
                block(0.1, 2.8, 0.9, 4.4),
            ],
            door_gaps: vec![door_bottom(5.5)],
        },
        "meeting_room" => RoomProto {
            width: 4.2,
            height: 5.2,
            obstacles: vec![block(1.5, 1.6, 2.7, 4.0)],
            door_gaps: vec![door_bottom(4.2)],
        },
        "large_meeting_room" => RoomProto {
            width: 6.0,
            height: 8.5,
            obstacles: vec![block(2.1, 2.0, 3.9, 6.5)],
            door_gaps: vec![door_bottom(6.0)],
        },
        "kitchen" => RoomProto {
            width: 3.6,
            height: 4.2,
            obstacles: vec![
                block(0.0, 0.8, 0.6, 4.2),
                block(0.6, 3.6, 3.0, 4.2),
            ],
            door_gaps: vec![door_bottom(3.6)],
        },
        "printer_area" => RoomProto {
            width: 2.6,
            height: 2.6,
            obstacles: vec![block(0.9, 1.9, 1.7, 2.5)],
            door_gaps: vec![Rect {
                x0: 0.6,
                y0: -WALL - 0.01,
                x1: 2.0,
                y1: 0.01,
            }],
        },
        "bathroom" => RoomProto {
            width: 2.0,
            height: 2.4,
            obstacles: vec![block(0.0, 1.9, 0.5, 2.4), block(1.5, 1.9, 2.0, 2.4)],
            door_gaps: vec![door_bottom(2.0)],
        },
        "stairs" => RoomProto {
            width: 2.4,
            height: 7.0,
            obstacles: (0..12)
                .map(|i| {
                    let y = 2.2 + i as f64 * 0.38;
                    block(0.0, y, 2.4, y + 0.14)
                })
                .collect(),
            door_gaps: vec![door_bottom(2.4)],
        },
        // Unknown class names get a plain room.
        _ => RoomProto {
            width: 3.5,
            height: 3.5,
            obstacles: vec![],
            door_gaps: vec![door_bottom(3.5)],
        },
    }
}

/// Scene query in room coordinates: free inside, occupied at walls and
/// obstacles (with door gaps carved out), occupied outside.
fn scene_state(proto: &RoomProto, x: f64, y: f64) -> CellState {
    for gap in &proto.door_gaps {
        if gap.contains(x, y) {
            return CellState::Free;
        }
    }
    for obs in &proto.obstacles {
        if obs.contains(x, y) {
            return CellState::Occupied;
        }
    }
    if (0.0..proto.width).contains(&x) && (0.0..proto.height).contains(&y) {
        CellState::Free
    } else {
        CellState::Occupied
    }
}

const RASTER_RES: f64 = 0.05;
const RAYS_PER_COLUMN: usize = 16;

/// Rasterizes the prototype around the robot pose and raytraces
/// visibility: rays stop at the first occupied cell, cells never reached
/// stay unknown.
fn raytrace_local(proto: &RoomProto, robot_x: f64, robot_y: f64) -> LocalGrid {
    let size = ((2.0 * GRID_RADIUS_M) / RASTER_RES).ceil() as usize + 4;
    let mut grid = LocalGrid::filled(size, RASTER_RES, CellState::Unknown);
    let n_rays = crate::place::ANGULAR_CELLS * RAYS_PER_COLUMN;
    let step = RASTER_RES / 2.0;
    let half = size as f64 / 2.0;
    for ray in 0..n_rays {
        let theta = (ray as f64 + 0.5) / n_rays as f64 * std::f64::consts::TAU;
        let (dx, dy) = (theta.cos(), theta.sin());
        let mut rho = 0.0;
        while rho <= GRID_RADIUS_M {
            let (px, py) = (rho * dx, rho * dy);
            let ix = (px / RASTER_RES + half).floor();
            let iy = (py / RASTER_RES + half).floor();
            if ix < 0.0 || iy < 0.0 || ix >= size as f64 || iy >= size as f64 {
                break;
            }
            let (ix, iy) = (ix as usize, iy as usize);
            let state = scene_state(proto, robot_x + px, robot_y + py);
            grid.set(ix, iy, state);
            if state == CellState::Occupied {
                break;
            }
            rho += step;
        }
    }
    grid
}

/// Applies per-cell flip noise: with probability `p` a cell is replaced by
/// one of the other two states, uniformly.
fn apply_noise(grid: &mut PolarGrid, p: f64, rng: &mut ChaCha8Rng) {
    if p <= 0.0 {
        return;
    }
    for a in 0..crate::place::ANGULAR_CELLS {
        for r in 0..crate::place::RADIAL_CELLS {
            if rng.random_range(0.0..1.0) < p {
                let current = grid.get(a, r).code();
                let repl = (current + 1 + rng.random_range(0..2u8)) % 3;
                grid.set(a, r, CellState::from_code(repl).unwrap());
            }
        }
    }
}

/// Produces one place observation of the given class.
pub(crate) fn place_geometry(class_name: &str, noise: f64, rng: &mut ChaCha8Rng) -> PolarGrid {
    let proto = room_proto(class_name);
    // Jittered robot pose around the room center. Long traversal rooms
    // allow wide jitter along their axis (they are near self-similar
    // there); other axes stay close to center so observations remain near
    // their class prototype.
    let margin = 0.45;
    let long_axis = matches!(class_name, "corridor" | "stairs");
    let jitter = |extent: f64, cap: f64, rng: &mut ChaCha8Rng| {
        let amp = (extent / 2.0 - margin).min(cap);
        if amp <= 0.0 {
            extent / 2.0
        } else {
            extent / 2.0 + rng.random_range(-amp..amp)
        }
    };
    let (rx, ry) = match class_name {
        // Keep the doorway robot inside the passage.
        "doorway" => (3.5, 2.3 + 1.4 * rng.random_range(0.2..0.8)),
        _ => (
            jitter(proto.width, 0.5, rng),
            jitter(proto.height, if long_axis { 2.5 } else { 0.5 }, rng),
        ),
    };
    let local = raytrace_local(&proto, rx, ry);
    let mut polar = cartesian_to_polar(&local, GRID_RADIUS_M).expect("raster covers the radius");
    apply_noise(&mut polar, noise, rng);
    polar
}

/// Canonical (zero-jitter, zero-noise) observation of a class; the
/// prototype grid used by the nearest-prototype baseline.
pub fn class_prototype_grid(catalogue: &ClassCatalogue, class: usize) -> PolarGrid {
    let name = catalogue.class_name(class);
    let proto = room_proto(name);
    let (rx, ry) = match name {
        "doorway" => (3.5, 3.0),
        _ => (proto.width / 2.0, proto.height / 2.0),
    };
    let local = raytrace_local(&proto, rx, ry);
    cartesian_to_polar(&local, GRID_RADIUS_M).expect("raster covers the radius")
}

/// Generates a fully labeled environment. Rooms attach to a corridor spine
/// through doorway nodes; room places form a clique; multi-floor maps link
/// consecutive floor spines directly. Byte-identical output per seed.
pub fn generate_environment(
    catalogue: &ClassCatalogue,
    cfg: &GeneratorConfig,
) -> Result<SemanticMap, MapError> {
    cfg.validate(catalogue)?;
    let corridor = catalogue.index_of("corridor").unwrap();
    let doorway = catalogue.index_of("doorway").unwrap();
    let room_classes: Vec<usize> = (0..catalogue.len())
        .filter(|&c| c != corridor && c != doorway)
        .collect();
    let room_mass: f64 = room_classes.iter().map(|&c| cfg.class_mix[c]).sum();
    if room_mass <= 0.0 {
        return Err(MapError::InfeasibleConfig("class_mix gives rooms zero mass".into()));
    }

    let mut map = SemanticMap::new(catalogue.clone());
    let mut next_id = 0u32;
    let mut alloc = |map: &mut SemanticMap, label: usize, grid: PolarGrid| {
        let id = PlaceId(next_id);
        next_id += 1;
        map.add_place(id, Some(label), grid);
        id
    };

    let mut prev_spine_anchor: Option<PlaceId> = None;
    for floor in 0..cfg.floors {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, &[0xf100, floor as u64]));
        let rooms = rng.random_range(cfg.rooms_per_floor.0..=cfg.rooms_per_floor.1);
        let spine_len = ((rooms as f64) * cfg.class_mix[corridor] / cfg.class_mix[doorway].max(1e-9))
            .round()
            .max(2.0) as usize;

        // Corridor spine.
        let mut spine = Vec::with_capacity(spine_len);
        for _ in 0..spine_len {
            let grid = place_geometry("corridor", cfg.geometry_noise, &mut rng);
            spine.push(alloc(&mut map, corridor, grid));
        }
        for w in spine.windows(2) {
            map.add_edge(w[0], w[1]);
        }
        if cfg.corridor_topology == CorridorTopology::Loop && spine_len > 2 {
            map.add_edge(spine[0], *spine.last().unwrap());
        }

        // Room classes by largest-remainder quota on the mix, shuffled, so
        // realized frequencies track the target tightly.
        let mut room_labels: Vec<usize> = {
            let quota: Vec<f64> = room_classes
                .iter()
                .map(|&c| rooms as f64 * cfg.class_mix[c] / room_mass)
                .collect();
            let mut counts: Vec<usize> = quota.iter().map(|q| q.floor() as usize).collect();
            let mut order: Vec<usize> = (0..room_classes.len()).collect();
            order.sort_by(|&i, &j| (quota[j] - quota[j].floor()).total_cmp(&(quota[i] - quota[i].floor())));
            let mut short = rooms - counts.iter().sum::<usize>();
            for &i in order.iter().cycle() {
                if short == 0 {
                    break;
                }
                counts[i] += 1;
                short -= 1;
            }
            let mut labels: Vec<usize> = counts
                .iter()
                .zip(&room_classes)
                .flat_map(|(&n, &c)| std::iter::repeat_n(c, n))
                .collect();
            labels.shuffle(&mut rng);
            labels
        };

        // Rooms behind doorways.
        for _ in 0..rooms {
            let class = room_labels.pop().unwrap();
            let anchor = *spine.choose(&mut rng).unwrap();
            let door_grid = place_geometry("doorway", cfg.geometry_noise, &mut rng);
            let door = alloc(&mut map, doorway, door_grid);
            map.add_edge(anchor, door);

            let size = rng.random_range(cfg.places_per_room.0..=cfg.places_per_room.1);
            let name = catalogue.class_name(class).to_string();
            let mut members = Vec::with_capacity(size);
            for _ in 0..size {
                let grid = place_geometry(&name, cfg.geometry_noise, &mut rng);
                members.push(alloc(&mut map, class, grid));
            }
            map.add_edge(door, members[0]);
            if members.len() > 1 {
                map.add_edge(door, members[1]);
            }
            for i in 0..members.len() {
                for j in i + 1..members.len() {
                    map.add_edge(members[i], members[j]);
                }
            }
        }

        if let Some(prev) = prev_spine_anchor {
            map.add_edge(prev, spine[0]);
        }
        prev_spine_anchor = Some(*spine.last().unwrap());
    }

    debug_assert!(map.validate().is_ok());
    Ok(map)
}

/// Generates a map with exactly `target_nodes` places by growing rooms and
/// trimming highest-id leaf places.
pub fn generate_sized(
    catalogue: &ClassCatalogue,
    cfg: &GeneratorConfig,
    target_nodes: usize,
) -> Result<SemanticMap, MapError> {
    let mut cfg = cfg.clone();
    cfg.floors = 1;
    let mean_room = (cfg.places_per_room.0 + cfg.places_per_room.1) as f64 / 2.0;
    let per_room = 1.0 + mean_room + cfg.class_mix[catalogue.index_of("corridor").unwrap()]
        / cfg.class_mix[catalogue.index_of("doorway").unwrap()].max(1e-9);
    let rooms = ((target_nodes as f64) / per_room).ceil() as usize + 2;
    cfg.rooms_per_floor = (rooms, rooms);
    let mut map = generate_environment(catalogue, &cfg)?;
    if map.num_nodes() < target_nodes {
        return Err(MapError::InfeasibleConfig(format!(
            "generated only {} nodes for target {target_nodes}",
            map.num_nodes()
        )));
    }
    while map.num_nodes() > target_nodes {
        // Highest-id place whose removal keeps the map connected: leaf-most
        // room places have the highest ids within their room.
        let victim = map
            .node_ids()
            .into_iter()
            .rev()
            .find(|&id| {
                let mut trimmed = map.clone();
                trimmed.remove_node(id);
                !trimmed.is_empty_internal() && trimmed.is_connected()
            })
            .ok_or_else(|| MapError::InfeasibleConfig("cannot trim to target size".into()))?;
        map.remove_node(victim);
    }
    map.validate()?;
    Ok(map)
}

impl SemanticMap {
    fn remove_node(&mut self, id: PlaceId) {
        self.nodes.remove(&id);
        self.edges.retain(|&(a, b)| a != id && b != id);
    }

    fn is_empty_internal(&self) -> bool {
        self.nodes.is_empty()
    }
}

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{derive_gt_predicates, LabelSpace, Point, PredicateRules, Scene, Segment};
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Primitive shape family behind each node class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Archetype {
    Floor,
    Wall,
    Table,
    Shelf,
    Chair,
    Box,
    Lamp,
    Ball,
}

impl Archetype {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "floor" => Archetype::Floor,
            "wall" => Archetype::Wall,
            "table" => Archetype::Table,
            "shelf" => Archetype::Shelf,
            "chair" => Archetype::Chair,
            "box" => Archetype::Box,
            "lamp" => Archetype::Lamp,
            "ball" => Archetype::Ball,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Archetype::Floor => "floor",
            Archetype::Wall => "wall",
            Archetype::Table => "table",
            Archetype::Shelf => "shelf",
            Archetype::Chair => "chair",
            Archetype::Box => "box",
            Archetype::Lamp => "lamp",
            Archetype::Ball => "ball",
        }
    }

    fn rgb(self) -> Point {
        match self {
            Archetype::Floor => [0.55, 0.45, 0.35],
            Archetype::Wall => [0.9, 0.9, 0.85],
            Archetype::Table => [0.6, 0.4, 0.2],
            Archetype::Shelf => [0.45, 0.3, 0.2],
            Archetype::Chair => [0.2, 0.3, 0.6],
            Archetype::Box => [0.8, 0.6, 0.3],
            Archetype::Lamp => [0.95, 0.9, 0.5],
            Archetype::Ball => [0.85, 0.2, 0.2],
        }
    }
}

/// Random-layout draw weights for the non-floor archetypes.
const FURNITURE_WEIGHTS: [(Archetype, u32); 7] = [
    (Archetype::Wall, 2),
    (Archetype::Table, 4),
    (Archetype::Shelf, 2),
    (Archetype::Chair, 4),
    (Archetype::Box, 3),
    (Archetype::Lamp, 2),
    (Archetype::Ball, 3),
];

/// Height of every resting object above its support surface (m).
const REST_CLEARANCE: f64 = 0.02;
/// Distance kept between free-standing objects and the room boundary (m).
const ROOM_MARGIN: f64 = 0.2;
const WALL_THICKNESS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub labels: LabelSpace,
    /// Object count range, floor included.
    pub min_objects: usize,
    pub max_objects: usize,
    /// Range of room side lengths (m).
    pub room_extent: [f64; 2],
    /// Points per ordinary object; floors and walls get twice as many.
    pub points_per_segment: usize,
    /// Std of the Gaussian jitter added to every coordinate (m).
    pub jitter: f64,
    pub rules: PredicateRules,
    /// Exact object list by class name instead of a random draw.
    pub fixed_objects: Option<Vec<String>>,
    pub random_yaw: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            labels: LabelSpace::default(),
            min_objects: 4,
            max_objects: 9,
            room_extent: [4.0, 6.0],
            points_per_segment: 96,
            jitter: 0.005,
            rules: PredicateRules::default(),
            fixed_objects: None,
            random_yaw: true,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        self.labels.validate()?;
        for name in &self.labels.node_classes {
            if Archetype::from_name(name).is_none() {
                return Err(Error::Config(format!("no generator archetype for node class {name:?}")));
            }
        }
        if self.labels.edge_classes != LabelSpace::default().edge_classes {
            return Err(Error::Config(format!(
                "generator rules produce the predicates {:?}",
                LabelSpace::default().edge_classes
            )));
        }
        if self.min_objects < 2 || self.max_objects < self.min_objects {
            return Err(Error::Config(format!(
                "object count range [{}, {}] must satisfy 2 ≤ min ≤ max",
                self.min_objects, self.max_objects
            )));
        }
        if !(self.room_extent[0] > 1.0 && self.room_extent[1] >= self.room_extent[0]) {
            return Err(Error::Config(format!("bad room extent {:?}", self.room_extent)));
        }
        if self.points_per_segment < 8 {
            return Err(Error::Config("need at least 8 points per segment".into()));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::Config("jitter must be non-negative".into()));
        }
        if let Some(objs) = &self.fixed_objects {
            if objs.len() < 2 {
                return Err(Error::Config("a fixed layout needs at least two objects".into()));
            }
            for name in objs {
                if self.labels.node_index(name).is_none() {
                    return Err(Error::Config(format!("fixed object {name:?} is not a node class")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Placed {
    archetype: Archetype,
    center: [f64; 2],
    yaw: f64,
    /// Local (un-yawed) footprint half-extents.
    half: [f64; 2],
    base: f64,
    height: f64,
    /// Index of the table this rests on, if any.
    on: Option<usize>,
}

impl Placed {
    fn radius(&self) -> f64 {
        self.half[0].hypot(self.half[1])
    }

    fn top(&self) -> f64 {
        self.base + self.height
    }

    fn local_to_world(&self, u: f64, v: f64) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        [self.center[0] + c * u - s * v, self.center[1] + s * u + c * v]
    }
}

struct Layout<'a> {
    rng: &'a mut ChaCha8Rng,
    half_room: [f64; 2],
    placed: Vec<Placed>,
    free_walls: Vec<usize>,
}

impl Layout<'_> {
    fn collides(&self, center: [f64; 2], radius: f64, on: Option<usize>) -> bool {
        self.placed.iter().any(|p| {
            p.archetype != Archetype::Floor
                && p.archetype != Archetype::Wall
                && p.on == on
                && (p.center[0] - center[0]).hypot(p.center[1] - center[1]) < p.radius() + radius + 0.05
        })
    }

    fn random_floor_spot(&mut self, radius: f64) -> Option<[f64; 2]> {
        let lim = [
            self.half_room[0] - WALL_THICKNESS - ROOM_MARGIN - radius,
            self.half_room[1] - WALL_THICKNESS - ROOM_MARGIN - radius,
        ];
        if lim[0] <= 0.0 || lim[1] <= 0.0 {
            return None;
        }
        for _ in 0..64 {
            let c = [self.rng.gen_range(-lim[0]..lim[0]), self.rng.gen_range(-lim[1]..lim[1])];
            if !self.collides(c, radius, None) {
                return Some(c);
            }
        }
        None
    }

    fn yaw(&mut self, random: bool) -> f64 {
        if random { self.rng.gen_range(0.0..2.0 * PI) } else { 0.0 }
    }

    fn place(&mut self, a: Archetype, random_yaw: bool) -> Option<Placed> {
        let rng_dims = |rng: &mut ChaCha8Rng, lo: [f64; 3], hi: [f64; 3]| -> [f64; 3] {
            [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1]), rng.gen_range(lo[2]..hi[2])]
        };
        match a {
            Archetype::Floor => Some(Placed {
                archetype: a,
                center: [0.0, 0.0],
                yaw: 0.0,
                half: self.half_room,
                base: 0.0,
                height: 0.0,
                on: None,
            }),
            Archetype::Wall => {
                if self.free_walls.is_empty() {
                    return None;
                }
                let k = self.rng.gen_range(0..self.free_walls.len());
                let side = self.free_walls.swap_remove(k);
                let height = self.rng.gen_range(2.2..2.8);
                let [hx, hy] = self.half_room;
                let (center, yaw, len) = match side {
                    0 => ([0.0, hy - WALL_THICKNESS / 2.0], 0.0, hx),
                    1 => ([0.0, -hy + WALL_THICKNESS / 2.0], 0.0, hx),
                    2 => ([hx - WALL_THICKNESS / 2.0, 0.0], PI / 2.0, hy),
                    _ => ([-hx + WALL_THICKNESS / 2.0, 0.0], PI / 2.0, hy),
                };
                Some(Placed {
                    archetype: a,
                    center,
                    yaw,
                    half: [len, WALL_THICKNESS / 2.0],
                    base: REST_CLEARANCE,
                    height,
                    on: None,
                })
            }
            Archetype::Table | Archetype::Chair => {
                let d = if a == Archetype::Table {
                    rng_dims(self.rng, [1.0, 0.6, 0.7], [1.6, 0.9, 0.8])
                } else {
                    rng_dims(self.rng, [0.4, 0.4, 0.8], [0.55, 0.55, 1.0])
                };
                let half = [d[0] / 2.0, d[1] / 2.0];
                let radius = half[0].hypot(half[1]);
                let yaw = self.yaw(random_yaw);
                let tables: Vec<usize> = self
                    .placed
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.archetype == Archetype::Table)
                    .map(|(i, _)| i)
                    .collect();
                let mut center = None;
                if a == Archetype::Chair && !tables.is_empty() && self.rng.gen_bool(0.8) {
                    let t = self.placed[*tables.choose(self.rng).expect("non-empty")].clone();
                    for _ in 0..16 {
                        let gap = self.rng.gen_range(0.05..0.3);
                        let side = self.rng.gen_range(0..4);
                        let (u, v) = match side {
                            0 => (t.half[0] + gap + half[0], self.rng.gen_range(-0.5..0.5) * t.half[1]),
                            1 => (-(t.half[0] + gap + half[0]), self.rng.gen_range(-0.5..0.5) * t.half[1]),
                            2 => (self.rng.gen_range(-0.5..0.5) * t.half[0], t.half[1] + gap + half[1]),
                            _ => (self.rng.gen_range(-0.5..0.5) * t.half[0], -(t.half[1] + gap + half[1])),
                        };
                        let c = t.local_to_world(u, v);
                        let lim = [
                            self.half_room[0] - WALL_THICKNESS - ROOM_MARGIN - radius,
                            self.half_room[1] - WALL_THICKNESS - ROOM_MARGIN - radius,
                        ];
                        if c[0].abs() < lim[0] && c[1].abs() < lim[1] && !self.collides(c, radius, None) {
                            center = Some(c);
                            break;
                        }
                    }
                }
                let center = match center {
                    Some(c) => c,
                    None => self.random_floor_spot(radius)?,
                };
                Some(Placed { archetype: a, center, yaw, half, base: REST_CLEARANCE, height: d[2], on: None })
            }
            Archetype::Shelf => {
                let d = rng_dims(self.rng, [0.8, 0.3, 1.6], [1.2, 0.45, 2.0]);
                let half = [d[0] / 2.0, d[1] / 2.0];
                let radius = half[0].hypot(half[1]);
                let walls: Vec<Placed> = self
                    .placed
                    .iter()
                    .filter(|p| p.archetype == Archetype::Wall)
                    .cloned()
                    .collect();
                if let Some(w) = walls.choose(self.rng).cloned() {
                    for _ in 0..16 {
                        let gap = self.rng.gen_range(0.03..0.1);
                        let along = self.rng.gen_range(-0.7..0.7) * (w.half[0] - half[0] - ROOM_MARGIN).max(0.0);
                        let (s, co) = w.yaw.sin_cos();
                        let depth = w.half[1] + gap + half[1];
                        // unit vector from the wall towards the room centre
                        let norm = w.center[0].hypot(w.center[1]);
                        let inward = [-w.center[0] / norm, -w.center[1] / norm];
                        let c = [
                            w.center[0] + co * along + inward[0] * depth,
                            w.center[1] + s * along + inward[1] * depth,
                        ];
                        if !self.collides(c, radius, None) {
                            return Some(Placed {
                                archetype: a,
                                center: c,
                                yaw: w.yaw,
                                half,
                                base: REST_CLEARANCE,
                                height: d[2],
                                on: None,
                            });
                        }
                    }
                }
                let yaw = self.yaw(random_yaw);
                let center = self.random_floor_spot(radius)?;
                Some(Placed { archetype: a, center, yaw, half, base: REST_CLEARANCE, height: d[2], on: None })
            }
            Archetype::Box | Archetype::Lamp | Archetype::Ball => {
                let (half, height) = match a {
                    Archetype::Box => {
                        let d = rng_dims(self.rng, [0.2, 0.2, 0.2], [0.4, 0.4, 0.4]);
                        ([d[0] / 2.0, d[1] / 2.0], d[2])
                    }
                    Archetype::Lamp => {
                        let r = self.rng.gen_range(0.06..0.1);
                        ([r, r], self.rng.gen_range(0.4..0.6))
                    }
                    _ => {
                        let r = self.rng.gen_range(0.1..0.2);
                        ([r, r], 2.0 * r)
                    }
                };
                let radius = half[0].hypot(half[1]);
                let yaw = self.yaw(random_yaw && a == Archetype::Box);
                let tables: Vec<usize> = self
                    .placed
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.archetype == Archetype::Table)
                    .map(|(i, _)| i)
                    .collect();
                if !tables.is_empty() && self.rng.gen_bool(0.5) {
                    let ti = *tables.choose(self.rng).expect("non-empty");
                    let t = self.placed[ti].clone();
                    let lim = [t.half[0] - radius, t.half[1] - radius];
                    if lim[0] > 0.0 && lim[1] > 0.0 {
                        for _ in 0..16 {
                            let u = self.rng.gen_range(-lim[0]..lim[0]);
                            let v = self.rng.gen_range(-lim[1]..lim[1]);
                            let c = t.local_to_world(u, v);
                            if !self.collides(c, radius, Some(ti)) {
                                return Some(Placed {
                                    archetype: a,
                                    center: c,
                                    yaw,
                                    half,
                                    base: t.top() + REST_CLEARANCE,
                                    height,
                                    on: Some(ti),
                                });
                            }
                        }
                    }
                }
                let center = self.random_floor_spot(radius)?;
                Some(Placed { archetype: a, center, yaw, half, base: REST_CLEARANCE, height, on: None })
            }
        }
    }
}

fn sample_surface(p: &Placed, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let local: Vec<Point> = match p.archetype {
        Archetype::Floor => (0..n)
            .map(|_| [rng.gen_range(-p.half[0]..p.half[0]), rng.gen_range(-p.half[1]..p.half[1]), 0.0])
            .collect(),
        Archetype::Lamp => {
            let r = p.half[0];
            let h = p.height;
            let side = 2.0 * PI * r * h;
            let cap = PI * r * r;
            (0..n)
                .map(|_| {
                    let pick = rng.gen_range(0.0..side + 2.0 * cap);
                    let theta = rng.gen_range(0.0..2.0 * PI);
                    if pick < side {
                        [r * theta.cos(), r * theta.sin(), rng.gen_range(0.0..h)]
                    } else {
                        let rr = r * rng.gen_range(0.0f64..1.0).sqrt();
                        let z = if pick < side + cap { 0.0 } else { h };
                        [rr * theta.cos(), rr * theta.sin(), z]
                    }
                })
                .collect()
        }
        Archetype::Ball => {
            let r = p.half[0];
            (0..n)
                .map(|_| {
                    let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
                    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-12);
                    [r * v[0] / norm, r * v[1] / norm, r + r * v[2] / norm]
                })
                .collect()
        }
        _ => {
            let (lx, ly, lz) = (2.0 * p.half[0], 2.0 * p.half[1], p.height);
            let areas = [ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly];
            let total: f64 = areas.iter().sum();
            (0..n)
                .map(|_| {
                    let mut pick = rng.gen_range(0.0..total);
                    let mut face = 0;
                    while face < 5 && pick >= areas[face] {
                        pick -= areas[face];
                        face += 1;
                    }
                    let u = rng.gen_range(-0.5..0.5);
                    let v = rng.gen_range(-0.5..0.5);
                    match face {
                        0 => [-lx / 2.0, u * ly, (v + 0.5) * lz],
                        1 => [lx / 2.0, u * ly, (v + 0.5) * lz],
                        2 => [u * lx, -ly / 2.0, (v + 0.5) * lz],
                        3 => [u * lx, ly / 2.0, (v + 0.5) * lz],
                        4 => [u * lx, v * ly, 0.0],
                        _ => [u * lx, v * ly, lz],
                    }
                })
                .collect()
        }
    };
    local
        .into_iter()
        .map(|q| {
            let xy = p.local_to_world(q[0], q[1]);
            [xy[0], xy[1], p.base + q[2]]
        })
        .collect()
}

fn draw_archetypes(config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<Archetype> {
    if let Some(fixed) = &config.fixed_objects {
        return fixed.iter().filter_map(|n| Archetype::from_name(n)).collect();
    }
    let count = rng.gen_range(config.min_objects..=config.max_objects);
    let total: u32 = FURNITURE_WEIGHTS.iter().map(|(_, w)| w).sum();
    let mut out = vec![Archetype::Floor];
    let mut walls = 0;
    while out.len() < count {
        let mut pick = rng.gen_range(0..total);
        let mut chosen = Archetype::Box;
        for (a, w) in FURNITURE_WEIGHTS {
            if pick < w {
                chosen = a;
                break;
            }
            pick -= w;
        }
        if chosen == Archetype::Wall {
            if walls == 2 {
                continue;
            }
            walls += 1;
        }
        out.push(chosen);
    }
    out
}

fn try_layout(config: &GeneratorConfig, rng: &mut ChaCha8Rng, id: &str) -> Result<Scene> {
    let mut archetypes = draw_archetypes(config, rng);
    archetypes.sort();
    let side_x = rng.gen_range(config.room_extent[0]..=config.room_extent[1]);
    let side_y = rng.gen_range(config.room_extent[0]..=config.room_extent[1]);
    let mut layout = Layout {
        rng,
        half_room: [side_x / 2.0, side_y / 2.0],
        placed: Vec::new(),
        free_walls: vec![0, 1, 2, 3],
    };
    for a in archetypes {
        if let Some(p) = layout.place(a, config.random_yaw) {
            layout.placed.push(p);
        }
    }
    let placed = std::mem::take(&mut layout.placed);
    let rng = layout.rng;
    let jitter = Normal::new(0.0, config.jitter.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut segments = Vec::with_capacity(placed.len());
    for (k, p) in placed.iter().enumerate() {
        let n = match p.archetype {
            Archetype::Floor | Archetype::Wall => 2 * config.points_per_segment,
            _ => config.points_per_segment,
        };
        let mut points = sample_surface(p, n, rng);
        if config.jitter > 0.0 {
            for pt in &mut points {
                for c in pt.iter_mut() {
                    *c += jitter.sample(rng);
                }
            }
        }
        let base = p.archetype.rgb();
        let colors = (0..n)
            .map(|_| {
                let mut c = base;
                for v in c.iter_mut() {
                    *v = (*v + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0);
                }
                c
            })
            .collect();
        let class = config
            .labels
            .node_index(p.archetype.name())
            .ok_or_else(|| Error::Config(format!("class {} missing from label space", p.archetype.name())))?;
        segments.push(Segment {
            id: k as u32,
            points,
            colors,
            gt_class: class,
        });
    }
    let gt_edges = derive_gt_predicates(&segments, &config.rules);
    Ok(Scene {
        id: id.to_string(),
        labels: config.labels.clone(),
        segments,
        gt_edges,
    })
}

/// Generate one scene from its own seeded stream. The result depends only on
/// `(config, seed, stream)`.
pub fn generate_scene_stream(config: &GeneratorConfig, seed: u64, stream: u64, id: &str) -> Result<Scene> {
    config.validate()?;
    if config.fixed_objects.is_some() && !config.labels.node_classes.iter().all(|n| Archetype::from_name(n).is_some()) {
        return Err(Error::Config("unknown archetype in label space".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    for _ in 0..32 {
        let scene = try_layout(config, &mut rng, id)?;
        let small_ok = scene.segments.iter().all(|s| s.points.len() >= 8);
        if scene.segments.len() >= 2 && !scene.gt_edges.is_empty() && small_ok {
            return Ok(scene);
        }
    }
    Err(Error::Config(
        "could not lay out a scene with at least two objects and one relation".into(),
    ))
}

pub fn generate_scene(config: &GeneratorConfig, seed: u64) -> Result<Scene> {
    generate_scene_stream(config, seed, 0, &format!("scene-{seed}"))
}

/// `count` scenes, scene `k` drawn from stream `k` of `seed`.
pub fn generate_scenes(config: &GeneratorConfig, seed: u64, count: usize, exec: Exec) -> Result<Vec<Scene>> {
    config.validate()?;
    exec.map_range(count, |k| generate_scene_stream(config, seed, k as u64, &format!("scene-{k:05}")))
        .into_iter()
        .collect()
}

//! Random-walk UE motion inside rectangular areas.
//!
//! Each slot the UE draws one of four compass directions from the area's
//! distribution and moves `speed * slot_duration` meters. A move that would
//! leave the rectangle ends the episode; the UE is then respawned uniformly
//! with a fresh speed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::topology::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    East,
    South,
    West,
    North,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::East,
        Direction::South,
        Direction::West,
        Direction::North,
    ];

    pub fn unit(self) -> (f64, f64) {
        match self {
            Direction::East => (1.0, 0.0),
            Direction::South => (0.0, -1.0),
            Direction::West => (-1.0, 0.0),
            Direction::North => (0.0, 1.0),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSpec {
    pub id: usize,
    pub width_m: f64,
    pub height_m: f64,
    pub sbs_positions: Vec<Point>,
    /// East, south, west, north.
    pub direction_probs: [f64; 4],
    pub speed_range: (f64, f64),
}

impl AreaSpec {
    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width_m).contains(&p.x) && (0.0..=self.height_m).contains(&p.y)
    }

    pub fn sbs_count(&self) -> usize {
        self.sbs_positions.len()
    }

    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        if !(self.width_m > 0.0 && self.height_m > 0.0) {
            errors.push(format!("{prefix}: width_m and height_m must be > 0"));
        }
        let sum: f64 = self.direction_probs.iter().sum();
        if self.direction_probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            errors.push(format!(
                "{prefix}.direction_probs must be non-negative and sum to 1 (sum = {sum})"
            ));
        }
        let (lo, hi) = self.speed_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            errors.push(format!("{prefix}.speed_range must satisfy 0 <= min <= max"));
        }
        if self.sbs_positions.is_empty() {
            errors.push(format!("{prefix}.sbs_positions must not be empty"));
        }
        if self.sbs_positions.iter().any(|p| !self.contains(*p)) {
            errors.push(format!("{prefix}.sbs_positions must lie inside the area"));
        }
    }

    pub fn sample_direction<R: Rng + ?Sized>(&self, rng: &mut R) -> Direction {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for dir in Direction::ALL {
            acc += self.direction_probs[dir.index()];
            if u < acc {
                return dir;
            }
        }
        // Rounding in the cumulative sum; fall back to the last direction with mass.
        *Direction::ALL
            .iter()
            .rev()
            .find(|d| self.direction_probs[d.index()] > 0.0)
            .unwrap_or(&Direction::North)
    }

    pub fn sample_speed<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.speed_range;
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    }

    pub fn sample_position<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point::new(
            rng.random_range(0.0..=self.width_m),
            rng.random_range(0.0..=self.height_m),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkStep {
    pub pos: Point,
    pub exited: bool,
}

/// Moves one slot in a given direction. On exit the position is left unchanged.
pub fn step_in_direction(
    pos: Point,
    speed: f64,
    direction: Direction,
    area: &AreaSpec,
    slot_duration_s: f64,
) -> WalkStep {
    let (dx, dy) = direction.unit();
    let dist = speed * slot_duration_s;
    let next = Point::new(pos.x + dx * dist, pos.y + dy * dist);
    if area.contains(next) {
        WalkStep {
            pos: next,
            exited: false,
        }
    } else {
        WalkStep { pos, exited: true }
    }
}

pub fn step_walk<R: Rng + ?Sized>(
    pos: Point,
    speed: f64,
    area: &AreaSpec,
    slot_duration_s: f64,
    rng: &mut R,
) -> WalkStep {
    let dir = area.sample_direction(rng);
    step_in_direction(pos, speed, dir, area, slot_duration_s)
}

/// Position and per-episode speed of one UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeMotion {
    pub pos: Point,
    pub speed: f64,
}

impl UeMotion {
    pub fn spawn<R: Rng + ?Sized>(area: &AreaSpec, rng: &mut R) -> Self {
        let pos = area.sample_position(rng);
        let speed = area.sample_speed(rng);
        Self { pos, speed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSample {
    pub x: f64,
    pub y: f64,
    pub v: f64,
}

/// Sampled positions and speeds of one UE over the observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityFeature {
    pub samples: Vec<FeatureSample>,
}

impl MobilityFeature {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Records `(x, y, v)` at the start of each of `t_u` slots, then moves.
pub fn observe_trajectory<R: Rng + ?Sized>(
    area: &AreaSpec,
    start: UeMotion,
    t_u: usize,
    slot_duration_s: f64,
    rng: &mut R,
) -> MobilityFeature {
    let mut ue = start;
    let mut samples = Vec::with_capacity(t_u);
    for _ in 0..t_u {
        samples.push(FeatureSample {
            x: ue.pos.x,
            y: ue.pos.y,
            v: ue.speed,
        });
        let step = step_walk(ue.pos, ue.speed, area, slot_duration_s, rng);
        ue = if step.exited {
            UeMotion::spawn(area, rng)
        } else {
            UeMotion {
                pos: step.pos,
                speed: ue.speed,
            }
        };
    }
    MobilityFeature { samples }
}

pub fn collect_features<R: Rng + ?Sized>(
    area: &AreaSpec,
    ue_count: usize,
    t_u: usize,
    slot_duration_s: f64,
    rng: &mut R,
) -> Vec<MobilityFeature> {
    (0..ue_count)
        .map(|_| {
            let start = UeMotion::spawn(area, rng);
            observe_trajectory(area, start, t_u, slot_duration_s, rng)
        })
        .collect()
}

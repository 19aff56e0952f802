use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mobility::AreaSpec;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// All areas of the deployment. Areas need not be adjacent; each one uses
/// its own local coordinate frame with the origin at the south-west corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub areas: Vec<AreaSpec>,
}

impl NetworkTopology {
    pub fn area(&self, id: usize) -> Option<&AreaSpec> {
        self.areas.get(id)
    }

    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }
}

/// Uniform random SBS deployment inside a `width` x `height` rectangle.
pub fn random_deployment<R: Rng + ?Sized>(
    count: usize,
    width: f64,
    height: f64,
    rng: &mut R,
) -> Vec<Point> {
    (0..count)
        .map(|_| Point::new(rng.random_range(0.0..=width), rng.random_range(0.0..=height)))
        .collect()
}

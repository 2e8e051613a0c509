//! Oracles shared by the spot and acceptance tests.
#![allow(dead_code)]

pub mod bt_cases;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use safeland::geometry::{GroundPoint, MapFrame};
use safeland::semantic_map::{LabelGrid, MapConfig, SemanticGroundMap};
use safeland::spot::cells_to_meters;
use safeland::{ClassId, ClassSet};

/// Grass field with random unsafe rectangles and speckles.
pub fn random_labels(rng: &mut ChaCha8Rng, width: usize, height: usize) -> LabelGrid {
    let mut labels = LabelGrid::filled(width, height, ClassId::Grass);
    for _ in 0..rng.random_range(0..6) {
        let (w, h) = (rng.random_range(1..8), rng.random_range(1..8));
        let (x0, y0) = (rng.random_range(0..width), rng.random_range(0..height));
        let class = [ClassId::Road, ClassId::Roof, ClassId::Water][rng.random_range(0..3)];
        for y in y0..(y0 + h).min(height) {
            for x in x0..(x0 + w).min(width) {
                labels.set(x, y, class);
            }
        }
    }
    let speckle = rng.random_range(0.0..0.02);
    for y in 0..height {
        for x in 0..width {
            if rng.random::<f64>() < speckle {
                labels.set(x, y, ClassId::Tree);
            }
        }
    }
    labels
}

pub fn map_for(labels: &LabelGrid, cell_size: f64) -> SemanticGroundMap {
    let config = MapConfig {
        width: labels.width,
        height: labels.height,
        cell_size,
    };
    SemanticGroundMap::new(&config, MapFrame::new(GroundPoint::new(0.0, 0.0), 0.0)).unwrap()
}

/// Brute-force squared distance from member `i` to the nearest cell outside
/// the segment, with cells beyond the grid counting as outside.
pub fn brute_squared(cells: &[usize], width: usize, height: usize, i: usize) -> i64 {
    let mut member = vec![false; width * height];
    for &c in cells {
        member[c] = true;
    }
    let (x, y) = ((i % width) as i64, (i / width) as i64);
    let mut best = i64::MAX;
    for qy in -1..=height as i64 {
        for qx in -1..=width as i64 {
            let inside = qx >= 0 && qy >= 0 && qx < width as i64 && qy < height as i64;
            if inside && member[(qy * width as i64 + qx) as usize] {
                continue;
            }
            best = best.min((qx - x).pow(2) + (qy - y).pow(2));
        }
    }
    best
}

/// Does any cell center strictly within `r` of cell `i` carry an unsafe
/// label (cells beyond the grid are unsafe)?
pub fn brute_unsafe_within(labels: &LabelGrid, classes: &ClassSet, i: usize, r: f64, cs: f64) -> bool {
    let reach = (r / cs).ceil() as i64 + 1;
    let (x, y) = ((i % labels.width) as i64, (i / labels.width) as i64);
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            if cells_to_meters(dx * dx + dy * dy, cs) >= r {
                continue;
            }
            let (qx, qy) = (x + dx, y + dy);
            let inside = qx >= 0 && qy >= 0 && qx < labels.width as i64 && qy < labels.height as i64;
            if !inside || !classes.is_safe(labels.get(qx as usize, qy as usize)) {
                return true;
            }
        }
    }
    false
}

//! Landing-spot extraction: safe masks, 8-connected segments, exact metric
//! distance transforms, spot selection, validation and a spot history.
//!
//! Distances are measured between cell centers. A segment cell's distance is
//! the Euclidean distance to the nearest cell center outside the segment,
//! where every cell beyond the map border counts as outside.

use crate::classes::{ClassId, ClassSet};
use crate::geometry::GroundPoint;
use crate::semantic_map::{FilterConfig, LabelGrid, SemanticGroundMap};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpotConfig {
    pub r_safe: f64,
    pub history_capacity: usize,
}

impl Default for SpotConfig {
    fn default() -> Self {
        Self {
            r_safe: 3.0,
            history_capacity: 16,
        }
    }
}

/// Per safe class, the binary grid of cells carrying that label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafeMask {
    pub width: usize,
    pub height: usize,
    pub masks: Vec<(ClassId, Vec<bool>)>,
}

pub fn safe_mask(labels: &LabelGrid, classes: &ClassSet) -> SafeMask {
    let masks = classes
        .safe_classes()
        .iter()
        .map(|&c| (c, labels.labels.iter().map(|&l| l == c).collect()))
        .collect();
    SafeMask {
        width: labels.width,
        height: labels.height,
        masks,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub id: usize,
    pub class: ClassId,
    /// Row-major cell indices in discovery order.
    pub cells: Vec<usize>,
}

/// 8-connected components of a binary grid.
pub fn connected_components(width: usize, height: usize, mask: &[bool]) -> Vec<Vec<usize>> {
    debug_assert_eq!(mask.len(), width * height);
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            comp.push(i);
            let (x, y) = ((i % width) as isize, (i / width) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Segments of every safe class, numbered consecutively in class-rank order.
pub fn segments(mask: &SafeMask) -> Vec<Segment> {
    let mut out = Vec::new();
    for (class, m) in &mask.masks {
        for cells in connected_components(mask.width, mask.height, m) {
            out.push(Segment {
                id: out.len(),
                class: *class,
                cells,
            });
        }
    }
    out
}

const INF: i64 = i64::MAX / 4;

/// Exact 1-D squared distance transform of sampled function `f` (lower
/// envelope of parabolas). `f` entries are 0 or `INF`.
fn squared_edt_1d(f: &[i64], out: &mut [i64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    // the first finite sample seeds the envelope
    let Some(first) = f.iter().position(|&x| x < INF) else {
        out.iter_mut().for_each(|o| *o = INF);
        return;
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if f[q] >= INF {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as i64) - (f[p] + (p * p) as i64)) as f64 / (2 * (q - p)) as f64;
            if s <= z[k] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as i64 - v[k] as i64;
        *o = d * d + f[v[k]];
    }
}

/// Squared cell distances from each member to the nearest non-member, for a
/// segment's cells in an `width x height` grid.
fn segment_squared_distances(segment: &Segment, width: usize) -> Vec<i64> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for &i in &segment.cells {
        let (x, y) = (i % width, i / width);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    // bounding box plus a one-cell ring of non-members; every nearest
    // non-member lies on or inside the ring
    let bw = x1 - x0 + 3;
    let bh = y1 - y0 + 3;
    let mut grid = vec![0i64; bw * bh];
    for &i in &segment.cells {
        let (x, y) = (i % width - x0 + 1, i / width - y0 + 1);
        grid[y * bw + x] = INF;
    }

    let longest = bw.max(bh);
    let mut f = vec![0i64; longest];
    let mut out = vec![0i64; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0f64; longest + 1];
    for x in 0..bw {
        for y in 0..bh {
            f[y] = grid[y * bw + x];
        }
        squared_edt_1d(&f[..bh], &mut out[..bh], &mut v, &mut z);
        for y in 0..bh {
            grid[y * bw + x] = out[y];
        }
    }
    for y in 0..bh {
        f[..bw].copy_from_slice(&grid[y * bw..(y + 1) * bw]);
        squared_edt_1d(&f[..bw], &mut out[..bw], &mut v, &mut z);
        grid[y * bw..(y + 1) * bw].copy_from_slice(&out[..bw]);
    }

    segment
        .cells
        .iter()
        .map(|&i| {
            let (x, y) = (i % width - x0 + 1, i / width - y0 + 1);
            grid[y * bw + x]
        })
        .collect()
}

/// Converts a squared distance in cells to meters.
#[inline]
pub fn cells_to_meters(squared_cells: i64, cell_size: f64) -> f64 {
    (squared_cells as f64).sqrt() * cell_size
}

/// Distances in meters for each cell of `segment`, aligned with `segment.cells`.
pub fn distance_transform(segment: &Segment, width: usize, cell_size: f64) -> Vec<f64> {
    assert!(!segment.cells.is_empty(), "distance transform of an empty segment");
    segment_squared_distances(segment, width)
        .into_iter()
        .map(|d2| cells_to_meters(d2, cell_size))
        .collect()
}

/// Distance grid over all segments.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub distance: Vec<f64>,
    pub segment: Vec<Option<usize>>,
}

impl DistanceField {
    pub fn build(segments: &[Segment], width: usize, height: usize, cell_size: f64) -> Self {
        let mut field = Self {
            width,
            height,
            cell_size,
            distance: vec![0.0; width * height],
            segment: vec![None; width * height],
        };
        for seg in segments {
            for (&i, d) in seg.cells.iter().zip(distance_transform(seg, width, cell_size)) {
                field.distance[i] = d;
                field.segment[i] = Some(seg.id);
            }
        }
        field
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandingSpot {
    pub position: GroundPoint,
    pub clearance: f64,
    pub class: ClassId,
    pub created_tick: u64,
    pub valid: bool,
}

/// Best cell of one segment, in grid terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotCandidate {
    pub cell: usize,
    pub segment: usize,
    pub class: ClassId,
    pub clearance: f64,
}

/// Key ordering candidates: class rank ascending, clearance descending, then
/// row-major position.
fn better(a: &SpotCandidate, b: &SpotCandidate, classes: &ClassSet) -> bool {
    let ra = classes.rank(a.class).unwrap_or(u8::MAX);
    let rb = classes.rank(b.class).unwrap_or(u8::MAX);
    (ra, b.clearance, a.cell) < (rb, a.clearance, b.cell)
}

/// Per segment with some cell at `D >= r_safe`, its best cell; ordered best first.
pub fn qualifying_candidates(
    field: &DistanceField,
    segments: &[Segment],
    config: &SpotConfig,
    classes: &ClassSet,
) -> Vec<SpotCandidate> {
    let mut out: Vec<SpotCandidate> = Vec::new();
    for seg in segments {
        let mut best: Option<SpotCandidate> = None;
        for &i in &seg.cells {
            let d = field.distance[i];
            if d < config.r_safe {
                continue;
            }
            let cand = SpotCandidate {
                cell: i,
                segment: seg.id,
                class: seg.class,
                clearance: d,
            };
            if best.as_ref().is_none_or(|b| better(&cand, b, classes)) {
                best = Some(cand);
            }
        }
        out.extend(best);
    }
    out.sort_by(|a, b| {
        if better(a, b, classes) {
            std::cmp::Ordering::Less
        } else if better(b, a, classes) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpotSelection {
    Spot {
        spot: LandingSpot,
        /// Best spot of every qualifying segment, including `spot`.
        candidates: Vec<LandingSpot>,
    },
    NoSpot,
}

impl SpotSelection {
    pub fn spot(&self) -> Option<&LandingSpot> {
        match self {
            SpotSelection::Spot { spot, .. } => Some(spot),
            SpotSelection::NoSpot => None,
        }
    }
}

/// Picks the landing spot from the distance field and converts it to world
/// coordinates through the map frame.
pub fn select_spot(
    field: &DistanceField,
    segments: &[Segment],
    map: &SemanticGroundMap,
    config: &SpotConfig,
    classes: &ClassSet,
    tick: u64,
) -> SpotSelection {
    let to_spot = |c: &SpotCandidate| LandingSpot {
        position: map.cell_center_world(c.cell % field.width, c.cell / field.width),
        clearance: c.clearance,
        class: c.class,
        created_tick: tick,
        valid: true,
    };
    let candidates: Vec<LandingSpot> = qualifying_candidates(field, segments, config, classes)
        .iter()
        .map(to_spot)
        .collect();
    match candidates.first() {
        Some(&spot) => SpotSelection::Spot { spot, candidates },
        None => SpotSelection::NoSpot,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InvalidReason {
    UnsafeTerrain,
    PersonPresent,
    OutOfExtent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpotValidity {
    Valid,
    Invalid(InvalidReason),
}

impl SpotValidity {
    pub fn is_valid(&self) -> bool {
        matches!(self, SpotValidity::Valid)
    }
}

/// Radius searched for person evidence: one cell diagonal beyond `r_safe`,
/// so a person whose body reaches into the zone from a cell centered just
/// outside it still counts.
pub fn person_radius(r_safe: f64, cell_size: f64) -> f64 {
    r_safe + cell_size * std::f64::consts::SQRT_2
}

/// Checks that every cell whose center lies strictly within `r_safe` of the
/// spot is labeled safe, and that no cell within [`person_radius`] carries
/// latched person evidence.

pub fn validate_spot(
    map: &SemanticGroundMap,
    labels: &LabelGrid,
    spot: &LandingSpot,
    config: &SpotConfig,
    filter: &FilterConfig,
    classes: &ClassSet,
) -> SpotValidity {
    let Some((cx, cy)) = map.cell_at_world(&spot.position) else {
        return SpotValidity::Invalid(InvalidReason::OutOfExtent);
    };
    let cs = map.cell_size();
    let person_reach = person_radius(config.r_safe, cs);
    let reach = (person_reach / cs).ceil() as isize;
    let (w, h) = (map.width() as isize, map.height() as isize);
    let mut unsafe_terrain = false;
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let d = cells_to_meters((dx * dx + dy * dy) as i64, cs);
            if d >= person_reach {
                continue;
            }
            let inner = d < config.r_safe;
            let (x, y) = (cx as isize + dx, cy as isize + dy);
            if x < 0 || y < 0 || x >= w || y >= h {
                if inner {
                    return SpotValidity::Invalid(InvalidReason::OutOfExtent);
                }
                continue;
            }
            let (x, y) = (x as usize, y as usize);
            if map.cell(x, y)[ClassId::PERSON_INDEX] > filter.person_latch_threshold {
                return SpotValidity::Invalid(InvalidReason::PersonPresent);
            }
            if inner && !classes.is_safe(labels.get(x, y)) {
                unsafe_terrain = true;
            }
        }
    }
    if unsafe_terrain {
        SpotValidity::Invalid(InvalidReason::UnsafeTerrain)
    } else {
        SpotValidity::Valid
    }
}

/// Bounded FIFO of previously selected spots.
///
/// Pushing a spot within `r_safe` of a stored spot of the same class replaces
/// that entry instead of adding a near-duplicate.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotHistory {
    capacity: usize,
    r_safe: f64,
    spots: VecDeque<LandingSpot>,
}

impl SpotHistory {
    pub fn new(config: &SpotConfig) -> Self {
        Self {
            capacity: config.history_capacity.max(1),
            r_safe: config.r_safe,
            spots: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.spots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spots.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LandingSpot> {
        self.spots.iter()
    }

    pub fn push(&mut self, spot: LandingSpot) {
        if let Some(pos) = self
            .spots
            .iter()
            .position(|s| s.class == spot.class && s.position.distance(&spot.position) < self.r_safe)
        {
            self.spots.remove(pos);
        }
        if self.spots.len() == self.capacity {
            self.spots.pop_front();
        }
        self.spots.push_back(spot);
    }

    /// Highest-ranked stored spot that `is_valid` accepts, skipping any spot
    /// within `r_safe` of `exclude`. Stored validity flags are refreshed.
    pub fn best_alternative<F>(
        &mut self,
        exclude: Option<&LandingSpot>,
        classes: &ClassSet,
        mut is_valid: F,
    ) -> Option<LandingSpot>
    where
        F: FnMut(&LandingSpot) -> bool,
    {
        let mut best: Option<LandingSpot> = None;
        for s in self.spots.iter_mut() {
            if exclude.is_some_and(|e| e.position.distance(&s.position) < self.r_safe) {
                continue;
            }
            s.valid = is_valid(s);
            if !s.valid {
                continue;
            }
            let key = |x: &LandingSpot| {
                (
                    classes.rank(x.class).unwrap_or(u8::MAX),
                    std::cmp::Reverse(ordered(x.clearance)),
                    std::cmp::Reverse(x.created_tick),
                )
            };
            if best.as_ref().is_none_or(|b| key(s) < key(b)) {
                best = Some(*s);
            }
        }
        best
    }
}

fn ordered(x: f64) -> u64 {
    // clearances are non-negative, so the bit pattern orders them
    x.max(0.0).to_bits()
}

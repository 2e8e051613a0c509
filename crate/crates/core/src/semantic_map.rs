//! Metric semantic ground map with Bayesian refinement and semantic decay.
//!
//! Each cell holds one probability per class. The non-person entries form a
//! categorical belief over terrain; the person entry is a separate evidence
//! channel that rises whenever a person is the observed argmax and is only
//! decayed when a different class is observed at that cell.
//!
//! The map is ego-anchored: before every update it is re-registered onto a
//! frame centered under the camera. While the heading is unchanged the new
//! origin is snapped to the existing cell lattice, so re-registration is an
//! exact integer shift and content never drifts under repeated warps.

use crate::classes::{ClassId, ClassProbs, NUM_CLASSES};
use crate::geometry::{
    project_to_image_plane, registration_homography, CameraModel, GeometryError, GroundPoint,
    MapFrame, RegistrationHomography, RigidPose,
};
use crate::segmentation::SegmentationFrame;
use serde::{Deserialize, Serialize};

const PERSON: usize = ClassId::PERSON_INDEX;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("decay factor {0} outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("person latch threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("likelihood must be finite, non-negative and not all zero")]
    InvalidLikelihood,
    #[error("invalid map dimensions: {0}")]
    InvalidMap(&'static str),
    #[error("frame is {frame_w}x{frame_h} but camera expects {cam_w}x{cam_h}")]
    FrameSize {
        frame_w: usize,
        frame_h: usize,
        cam_w: usize,
        cam_h: usize,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub alpha: f64,
    pub person_latch_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            person_latch_threshold: 0.2,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(FilterError::InvalidAlpha(self.alpha));
        }
        if !(self.person_latch_threshold > 0.0 && self.person_latch_threshold < 1.0) {
            return Err(FilterError::InvalidThreshold(self.person_latch_threshold));
        }
        Ok(())
    }
}

/// Belief of a cell that has never been observed: uniform over the non-person
/// classes, no person evidence.
pub const UNINFORMED: ClassProbs = {
    let mut p = [1.0 / (NUM_CLASSES as f64 - 1.0); NUM_CLASSES];
    p[PERSON] = 0.0;
    p
};

/// Index of the largest entry; ties go to the lowest index.
#[inline]
pub fn argmax(v: &ClassProbs) -> usize {
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if v[c] > v[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesPosterior {
    pub probs: ClassProbs,
    /// Prior and likelihood had disjoint support; `probs` is the normalized
    /// likelihood.
    pub zero_evidence: bool,
}

fn check_likelihood(likelihood: &ClassProbs) -> Result<(), FilterError> {
    let ok = likelihood.iter().all(|l| l.is_finite() && *l >= 0.0)
        && likelihood.iter().any(|l| *l > 0.0);
    if ok {
        Ok(())
    } else {
        Err(FilterError::InvalidLikelihood)
    }
}

/// Bayes rule with explicit normalization. If the likelihood's argmax is
/// Person, the Person likelihood is set to 1 before the product.
pub fn bayes_update(prior: &ClassProbs, likelihood: &ClassProbs) -> Result<BayesPosterior, FilterError> {
    check_likelihood(likelihood)?;
    let mut lik = *likelihood;
    if argmax(&lik) == PERSON {
        lik[PERSON] = 1.0;
    }
    Ok(product_posterior(prior, &lik))
}

#[inline]
fn product_posterior(prior: &ClassProbs, lik: &ClassProbs) -> BayesPosterior {
    let mut post = [0.0; NUM_CLASSES];
    let mut total = 0.0;
    for c in 0..NUM_CLASSES {
        post[c] = lik[c] * prior[c];
        total += post[c];
    }
    if total > 0.0 && total.is_finite() {
        post.iter_mut().for_each(|p| *p /= total);
        return BayesPosterior {
            probs: post,
            zero_evidence: false,
        };
    }
    let sum: f64 = lik.iter().sum();
    let mut probs = *lik;
    probs.iter_mut().for_each(|l| *l /= sum);
    BayesPosterior {
        probs,
        zero_evidence: true,
    }
}

/// Posterior used to refine one map cell from one observation.
///
/// A person observation puts all posterior mass on Person. Otherwise the
/// terrain classes are updated by [`bayes_update`] with the person entries of
/// prior and likelihood removed, leaving a zero person posterior.
pub fn observation_posterior(prior: &ClassProbs, likelihood: &ClassProbs) -> Result<BayesPosterior, FilterError> {
    check_likelihood(likelihood)?;
    Ok(checked_observation_posterior(prior, likelihood))
}

/// [`observation_posterior`] for a likelihood already known to be valid.
#[inline]
fn checked_observation_posterior(prior: &ClassProbs, likelihood: &ClassProbs) -> BayesPosterior {
    if argmax(likelihood) == PERSON {
        let mut probs = [0.0; NUM_CLASSES];
        probs[PERSON] = 1.0;
        return BayesPosterior {
            probs,
            zero_evidence: false,
        };
    }
    let mut terrain_prior = *prior;
    terrain_prior[PERSON] = 0.0;
    let mut terrain_lik = *likelihood;
    terrain_lik[PERSON] = 0.0;
    // the terrain likelihood has positive mass: its argmax is not Person
    product_posterior(&terrain_prior, &terrain_lik)
}

/// Semantic decay of a single cell.
///
/// Observed cells blend every entry toward the posterior. Unobserved cells
/// scale the non-person entries by `alpha` and hold the person entry.
#[inline]
pub fn decay_cell(cell: &mut ClassProbs, posterior: Option<&ClassProbs>, alpha: f64) {
    match posterior {
        Some(post) => {
            for c in 0..NUM_CLASSES {
                cell[c] = alpha * cell[c] + (1.0 - alpha) * post[c];
            }
        }
        None => {
            for (c, v) in cell.iter_mut().enumerate() {
                if c != PERSON {
                    *v *= alpha;
                }
            }
        }
    }
}

/// Grid of per-cell class labels, row-major (`y` outer).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<ClassId>,
}

impl LabelGrid {
    pub fn filled(width: usize, height: usize, class: ClassId) -> Self {
        Self {
            width,
            height,
            labels: vec![class; width * height],
        }
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> ClassId {
        self.labels[iy * self.width + ix]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, class: ClassId) {
        self.labels[iy * self.width + ix] = class;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
}

impl Default for MapConfig {
    /// 64 m x 64 m at 0.25 m per cell.
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            cell_size: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGroundMap {
    width: usize,
    height: usize,
    cell_size: f64,
    frame: MapFrame,
    cells: Vec<ClassProbs>,
    last_observed: Vec<Option<u64>>,
}

impl SemanticGroundMap {
    pub fn new(config: &MapConfig, frame: MapFrame) -> Result<Self, FilterError> {
        if config.width == 0 || config.height == 0 {
            return Err(FilterError::InvalidMap("grid must be non-empty"));
        }
        if !(config.cell_size > 0.0 && config.cell_size.is_finite()) {
            return Err(FilterError::InvalidMap("cell size must be positive"));
        }
        let n = config.width * config.height;
        Ok(Self {
            width: config.width,
            height: config.height,
            cell_size: config.cell_size,
            frame,
            cells: vec![UNINFORMED; n],
            last_observed: vec![None; n],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn frame(&self) -> &MapFrame {
        &self.frame
    }

    pub fn cells(&self) -> &[ClassProbs] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [ClassProbs] {
        &mut self.cells
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.width + ix
    }

    pub fn cell(&self, ix: usize, iy: usize) -> &ClassProbs {
        &self.cells[self.index(ix, iy)]
    }

    pub fn cell_mut(&mut self, ix: usize, iy: usize) -> &mut ClassProbs {
        let i = self.index(ix, iy);
        &mut self.cells[i]
    }

    pub fn last_observed(&self, ix: usize, iy: usize) -> Option<u64> {
        self.last_observed[self.index(ix, iy)]
    }

    pub fn mark_observed(&mut self, ix: usize, iy: usize, tick: u64) {
        let i = self.index(ix, iy);
        self.last_observed[i] = Some(tick);
    }

    /// Metric extent `(x, y)` of the grid.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.cell_size,
            self.height as f64 * self.cell_size,
        )
    }

    /// Center of a cell in map-frame coordinates.
    #[inline]
    pub fn cell_center_frame(&self, ix: usize, iy: usize) -> GroundPoint {
        GroundPoint::new(
            (ix as f64 - self.width as f64 / 2.0 + 0.5) * self.cell_size,
            (iy as f64 - self.height as f64 / 2.0 + 0.5) * self.cell_size,
        )
    }

    pub fn cell_center_world(&self, ix: usize, iy: usize) -> GroundPoint {
        self.frame.frame_to_world(&self.cell_center_frame(ix, iy))
    }

    /// World coordinates of the center of cell `(0, 0)`.
    pub fn anchor(&self) -> GroundPoint {
        self.cell_center_world(0, 0)
    }

    /// Cell containing a map-frame point.
    pub fn cell_at_frame(&self, p: &GroundPoint) -> Option<(usize, usize)> {
        let fx = (p.x / self.cell_size + self.width as f64 / 2.0).floor();
        let fy = (p.y / self.cell_size + self.height as f64 / 2.0).floor();
        if fx >= 0.0 && fy >= 0.0 && fx < self.width as f64 && fy < self.height as f64 {
            Some((fx as usize, fy as usize))
        } else {
            None
        }
    }

    pub fn cell_at_world(&self, p: &GroundPoint) -> Option<(usize, usize)> {
        self.cell_at_frame(&self.frame.world_to_frame(p))
    }

    /// Frame the map should move to for a camera at `pose`: centered under
    /// the camera, snapped to the current lattice when the heading is kept.
    pub fn recentered_frame(&self, pose: &RigidPose) -> MapFrame {
        let target = MapFrame::of_pose(pose);
        if (target.yaw - self.frame.yaw).abs() > 1e-12 {
            return target;
        }
        let d = self.frame.world_to_frame(&target.origin);
        let snapped = GroundPoint::new(
            (d.x / self.cell_size).round() * self.cell_size,
            (d.y / self.cell_size).round() * self.cell_size,
        );
        MapFrame::new(self.frame.frame_to_world(&snapped), self.frame.yaw)
    }
}

/// Resamples the map under `h` (previous-map to current-map coordinates)
/// with nearest-neighbor lookup. Destination cells whose preimage falls
/// outside the grid become uninformed. The frame is left unchanged.
pub fn warp_map(map: &SemanticGroundMap, h: &RegistrationHomography) -> SemanticGroundMap {
    let inv = h.inverse();
    let mut out = map.clone();
    for iy in 0..map.height {
        for ix in 0..map.width {
            let src = inv.apply(&map.cell_center_frame(ix, iy));
            let dst = map.index(ix, iy);
            match map.cell_at_frame(&src) {
                Some((sx, sy)) => {
                    let s = map.index(sx, sy);
                    out.cells[dst] = map.cells[s];
                    out.last_observed[dst] = map.last_observed[s];
                }
                None => {
                    out.cells[dst] = UNINFORMED;
                    out.last_observed[dst] = None;
                }
            }
        }
    }
    out
}

/// Applies one tick of semantic decay; `posteriors[i]` is `None` for cells
/// without an observation this tick.
pub fn apply_decay(
    map: &mut SemanticGroundMap,
    posteriors: &[Option<ClassProbs>],
    config: &FilterConfig,
) {
    assert_eq!(posteriors.len(), map.cells.len(), "one posterior slot per cell");
    for (cell, post) in map.cells.iter_mut().zip(posteriors) {
        decay_cell(cell, post.as_ref(), config.alpha);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationReport {
    pub observed_cells: usize,
    pub person_cells: usize,
    pub zero_evidence_cells: usize,
    /// Whole-cell shift applied by re-registration, when it was a pure shift.
    pub shift: Option<(i64, i64)>,
}

/// One filtering step: re-register onto the current pose, then Bayes-update
/// and decay every cell, sampling the frame at each observed cell center.
pub fn integrate_observation(
    map: &mut SemanticGroundMap,
    frame: &SegmentationFrame,
    cam: &CameraModel,
    pose: &RigidPose,
    config: &FilterConfig,
    tick: u64,
) -> Result<IntegrationReport, FilterError> {
    config.validate()?;
    if frame.width() != cam.width || frame.height() != cam.height {
        return Err(FilterError::FrameSize {
            frame_w: frame.width(),
            frame_h: frame.height(),
            cam_w: cam.width,
            cam_h: cam.height,
        });
    }
    let mut report = IntegrationReport::default();

    let new_frame = map.recentered_frame(pose);
    if new_frame != map.frame {
        let h = pose.camera_center().z;
        let prev = RigidPose::nadir(map.frame.origin.x, map.frame.origin.y, h, map.frame.yaw);
        let curr = RigidPose::nadir(new_frame.origin.x, new_frame.origin.y, h, new_frame.yaw);
        let reg = registration_homography(&prev, &curr, cam)?;
        if new_frame.yaw == map.frame.yaw {
            let d = map.frame.world_to_frame(&new_frame.origin);
            report.shift = Some((
                (d.x / map.cell_size).round() as i64,
                (d.y / map.cell_size).round() as i64,
            ));
        }
        *map = warp_map(map, &reg);
        map.frame = new_frame;
    } else {
        report.shift = Some((0, 0));
    }

    for iy in 0..map.height {
        for ix in 0..map.width {
            let i = map.index(ix, iy);
            let center = map.cell_center_world(ix, iy);
            let pixel = project_to_image_plane(&center, cam, pose).and_then(|p| p.index(cam));
            match pixel {
                Some((u, v)) => {
                    let post = checked_observation_posterior(&map.cells[i], frame.probs(u, v));
                    if post.zero_evidence {
                        report.zero_evidence_cells += 1;
                    }
                    if post.probs[PERSON] == 1.0 {
                        report.person_cells += 1;
                    }
                    decay_cell(&mut map.cells[i], Some(&post.probs), config.alpha);
                    map.last_observed[i] = Some(tick);
                    report.observed_cells += 1;
                }
                None => decay_cell(&mut map.cells[i], None, config.alpha),
            }
        }
    }
    Ok(report)
}

/// Per-cell argmax; cells never observed are labeled Background.
pub fn filtered_argmax(map: &SemanticGroundMap) -> LabelGrid {
    let labels = map
        .cells
        .iter()
        .zip(&map.last_observed)
        .map(|(cell, seen)| match seen {
            Some(_) => ClassId::ALL[argmax(cell)],
            None => ClassId::Background,
        })
        .collect();
    LabelGrid {
        width: map.width,
        height: map.height,
        labels,
    }
}

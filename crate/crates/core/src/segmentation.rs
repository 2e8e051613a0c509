//! Segmentation providers.
//!
//! [`SegmentationProvider`] is the seam where a trained network would plug
//! in. [`SyntheticSegmenter`] instead corrupts a ground-truth class image with
//! a confusion-matrix noise model calibrated to per-class IoU figures.
//!
//! Frames can also be exchanged with an external process through a small
//! binary format, see [`write_frame`] and [`read_frame`].

use crate::classes::{ClassId, ClassProbs, NUM_CLASSES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum SegmentationError {
    #[error("view is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    ViewSize {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("confusion row {row} ({class}) sums to {sum}")]
    RowNotStochastic { row: usize, class: ClassId, sum: f64 },
    #[error("confusion entry ({row}, {col}) = {value} outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("concentration {0} outside [1/C, 1]")]
    Concentration(f64),
    #[error("noise config must list each of the {NUM_CLASSES} classes exactly once")]
    ClassList,
    #[error("frame pixel ({u}, {v}) is not a probability vector")]
    NotSimplex { u: usize, v: usize },
    #[error("bad frame stream: {0}")]
    Format(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("unknown class: {0}")]
    UnknownClass(#[from] crate::classes::UnknownClass),
    #[error("noise config: {0}")]
    Toml(#[from] toml::de::Error),
}

/// Image of ground-truth classes, row-major (`v` outer).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<ClassId>,
}

impl ClassImage {
    pub fn filled(width: usize, height: usize, class: ClassId) -> Self {
        Self {
            width,
            height,
            pixels: vec![class; width * height],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> ClassId {
        self.pixels[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, class: ClassId) {
        self.pixels[v * self.width + u] = class;
    }
}

/// Per-pixel class probabilities for one camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationFrame {
    width: usize,
    height: usize,
    pub tick: u64,
    probs: Vec<ClassProbs>,
}

/// Tolerance on per-pixel probability sums.
pub const SIMPLEX_TOL: f64 = 1e-6;

impl SegmentationFrame {
    /// Builds a frame, checking that each pixel is a probability vector.
    pub fn new(
        width: usize,
        height: usize,
        tick: u64,
        probs: Vec<ClassProbs>,
    ) -> Result<Self, SegmentationError> {
        if probs.len() != width * height {
            return Err(SegmentationError::Format("pixel count does not match dimensions"));
        }
        let frame = Self {
            width,
            height,
            tick,
            probs,
        };
        frame.validate()?;
        Ok(frame)
    }

    /// A frame that reports `view` with certainty.
    pub fn one_hot(view: &ClassImage, tick: u64) -> Self {
        let probs = view
            .pixels
            .iter()
            .map(|c| {
                let mut p = [0.0; NUM_CLASSES];
                p[c.index()] = 1.0;
                p
            })
            .collect();
        Self {
            width: view.width,
            height: view.height,
            tick,
            probs,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn probs(&self, u: usize, v: usize) -> &ClassProbs {
        &self.probs[v * self.width + u]
    }

    pub fn pixels(&self) -> &[ClassProbs] {
        &self.probs
    }

    pub fn argmax_image(&self) -> ClassImage {
        ClassImage {
            width: self.width,
            height: self.height,
            pixels: self
                .probs
                .iter()
                .map(|p| ClassId::ALL[crate::semantic_map::argmax(p)])
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), SegmentationError> {
        for (i, p) in self.probs.iter().enumerate() {
            let sum: f64 = p.iter().sum();
            if p.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(SegmentationError::NotSimplex {
                    u: i % self.width,
                    v: i / self.width,
                });
            }
        }
        Ok(())
    }
}

/// Anything that turns a camera view into class probabilities.
///
/// In simulation the "view" is the rendered ground-truth class image; an
/// external model process would instead exchange frames in the
/// [`write_frame`] format.
pub trait SegmentationProvider {
    fn segment(&mut self, view: &ClassImage, tick: u64) -> Result<SegmentationFrame, SegmentationError>;
}

/// Row-stochastic confusion matrix plus the softness of emitted vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    /// `confusion[true][emitted]`.
    pub confusion: [[f64; NUM_CLASSES]; NUM_CLASSES],
    /// Probability mass placed on the emitted class.
    pub concentration: f64,
    pub seed: u64,
}

/// Per-class IoU from the reference segmentation benchmark, as fractions.
/// `None` marks classes without a published score.
pub const REFERENCE_IOU: [Option<f64>; NUM_CLASSES] = [
    Some(0.9285), // road
    None,         // dirt
    None,         // gravel
    None,         // rock
    Some(0.8918), // grass
    Some(0.9641), // vegetation
    Some(0.8152), // tree
    Some(0.3914), // obstacle
    Some(0.8174), // animal
    Some(0.7009), // person
    Some(0.0188), // bicycle
    Some(0.6918), // vehicle
    Some(0.8330), // water
    None,         // boat
    Some(0.8349), // wall
    Some(0.8105), // roof
    Some(0.9740), // sky
    Some(0.3549), // drone
    Some(0.5061), // train-track
    None,         // background
];

/// Published mean IoU over the scored classes.
pub const REFERENCE_MIOU: f64 = 0.7022;

/// Diagonal used for classes without a published score.
pub const UNSCORED_DIAGONAL: f64 = 0.8;

fn adjacent(class: ClassId) -> &'static [ClassId] {
    use ClassId::*;
    match class {
        Road => &[Dirt, Gravel, TrainTrack],
        Dirt => &[Gravel, Road, Grass],
        Gravel => &[Dirt, Road, Rock],
        Rock => &[Gravel, Wall],
        Grass => &[Vegetation, Dirt],
        Vegetation => &[Grass, Tree],
        Tree => &[Vegetation],
        Obstacle => &[Wall, Vehicle, Roof],
        Animal => &[Person, Obstacle],
        Person => &[Animal, Bicycle, Obstacle],
        Bicycle => &[Person, Vehicle, Obstacle],
        Vehicle => &[Road, Obstacle, Boat],
        Water => &[Boat, Vegetation],
        Boat => &[Water, Vehicle],
        Wall => &[Roof, Obstacle],
        Roof => &[Wall, Obstacle],
        Sky => &[],
        Drone => &[Obstacle, Sky],
        TrainTrack => &[Road, Gravel],
        Background => &[Obstacle, Wall],
    }
}

impl NoiseModel {
    /// Noise-free model emitting the true class with full confidence.
    pub fn perfect() -> Self {
        let mut confusion = [[0.0; NUM_CLASSES]; NUM_CLASSES];
        for (c, row) in confusion.iter_mut().enumerate() {
            row[c] = 1.0;
        }
        Self {
            confusion,
            concentration: 1.0,
            seed: 0,
        }
    }

    /// Model whose diagonal follows the reference IoU table. Unscored
    /// classes use [`UNSCORED_DIAGONAL`]; Background uses the published mean.
    /// Off-diagonal mass goes half to Background and half to visually
    /// adjacent classes.
    pub fn calibrated() -> Self {
        let mut confusion = [[0.0; NUM_CLASSES]; NUM_CLASSES];
        for (c, row) in confusion.iter_mut().enumerate() {
            let class = ClassId::ALL[c];
            let diag = match (class, REFERENCE_IOU[c]) {
                (ClassId::Background, _) => REFERENCE_MIOU,
                (_, Some(iou)) => iou,
                (_, None) => UNSCORED_DIAGONAL,
            };
            row[c] = diag;
            let off = 1.0 - diag;
            let adj = adjacent(class);
            let (to_background, to_adjacent) = match (class, adj.is_empty()) {
                (ClassId::Background, _) => (0.0, off),
                (_, true) => (off, 0.0),
                _ => (off / 2.0, off / 2.0),
            };
            row[ClassId::Background.index()] += to_background;
            for a in adj {
                row[a.index()] += to_adjacent / adj.len() as f64;
            }
        }
        Self {
            confusion,
            concentration: 0.9,
            seed: 0,
        }
    }

    /// Moves `rate` of every non-person row into the Person column, taken from
    /// the row's Background entry first and its diagonal second.
    pub fn with_person_false_positive(mut self, rate: f64) -> Self {
        let bg = ClassId::Background.index();
        let person = ClassId::PERSON_INDEX;
        for (c, row) in self.confusion.iter_mut().enumerate() {
            if c == person {
                continue;
            }
            let mut need = rate.clamp(0.0, 1.0);
            for src in [bg, c] {
                let take = need.min(row[src]);
                row[src] -= take;
                need -= take;
            }
            row[person] += rate.clamp(0.0, 1.0) - need;
        }
        self
    }

    /// Replaces the Person diagonal with `diag`, rescaling the rest of the row.
    pub fn with_person_diagonal(mut self, diag: f64) -> Self {
        let person = ClassId::PERSON_INDEX;
        let row = &mut self.confusion[person];
        let old_off = 1.0 - row[person];
        let new_off = 1.0 - diag;
        for (c, v) in row.iter_mut().enumerate() {
            if c == person {
                *v = diag;
            } else if old_off > 0.0 {
                *v *= new_off / old_off;
            }
        }
        if old_off <= 0.0 && new_off > 0.0 {
            row[ClassId::Background.index()] = new_off;
        }
        self
    }

    pub fn diagonal(&self, class: ClassId) -> f64 {
        self.confusion[class.index()][class.index()]
    }

    pub fn validate(&self) -> Result<(), SegmentationError> {
        let c_min = 1.0 / NUM_CLASSES as f64;
        if !(self.concentration >= c_min && self.concentration <= 1.0) {
            return Err(SegmentationError::Concentration(self.concentration));
        }
        for (r, row) in self.confusion.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(SegmentationError::EntryOutOfRange {
                        row: r,
                        col: c,
                        value: v,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(SegmentationError::RowNotStochastic {
                    row: r,
                    class: ClassId::ALL[r],
                    sum,
                });
            }
        }
        Ok(())
    }

    fn cumulative(&self) -> [[f64; NUM_CLASSES]; NUM_CLASSES] {
        let mut cdf = [[0.0; NUM_CLASSES]; NUM_CLASSES];
        for (r, row) in self.confusion.iter().enumerate() {
            let mut acc = 0.0;
            for (c, v) in row.iter().enumerate() {
                acc += v;
                cdf[r][c] = acc;
            }
        }
        cdf
    }

    fn emitted_vectors(&self) -> [ClassProbs; NUM_CLASSES] {
        let rest = (1.0 - self.concentration) / (NUM_CLASSES as f64 - 1.0);
        let mut out = [[rest; NUM_CLASSES]; NUM_CLASSES];
        for (c, v) in out.iter_mut().enumerate() {
            v[c] = self.concentration;
        }
        out
    }

    /// Loads a model from a TOML file, see [`NoiseModelFile`].
    pub fn load(path: &Path) -> Result<Self, SegmentationError> {
        let text = std::fs::read_to_string(path)?;
        let file: NoiseModelFile = toml::from_str(&text)?;
        file.into_model()
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::calibrated()
    }
}

/// The calibrated default model.
pub fn default_noise_model() -> NoiseModel {
    NoiseModel::calibrated()
}

/// On-disk noise model.
///
/// ```toml
/// classes = ["road", "dirt", ...]   # all 20 class names, any order
/// concentration = 0.9
/// seed = 7
/// matrix = [[...], ...]             # rows and columns follow `classes`
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModelFile {
    pub classes: Vec<String>,
    pub concentration: f64,
    #[serde(default)]
    pub seed: u64,
    pub matrix: Vec<Vec<f64>>,
}

impl NoiseModelFile {
    pub fn from_model(model: &NoiseModel) -> Self {
        Self {
            classes: ClassId::ALL.iter().map(|c| c.name().to_owned()).collect(),
            concentration: model.concentration,
            seed: model.seed,
            matrix: model.confusion.iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn into_model(self) -> Result<NoiseModel, SegmentationError> {
        if self.classes.len() != NUM_CLASSES || self.matrix.len() != NUM_CLASSES {
            return Err(SegmentationError::ClassList);
        }
        let order = self
            .classes
            .iter()
            .map(|n| n.parse::<ClassId>())
            .collect::<Result<Vec<_>, _>>()?;
        let mut seen = [false; NUM_CLASSES];
        for c in &order {
            if std::mem::replace(&mut seen[c.index()], true) {
                return Err(SegmentationError::ClassList);
            }
        }
        let mut confusion = [[0.0; NUM_CLASSES]; NUM_CLASSES];
        for (r, row) in self.matrix.iter().enumerate() {
            if row.len() != NUM_CLASSES {
                return Err(SegmentationError::ClassList);
            }
            for (c, v) in row.iter().enumerate() {
                confusion[order[r].index()][order[c].index()] = *v;
            }
        }
        let model = NoiseModel {
            confusion,
            concentration: self.concentration,
            seed: self.seed,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Corrupts a ground-truth view: each pixel emits a class drawn from its true
/// class's confusion row, reported with `concentration` mass and the rest
/// spread evenly over the other classes.
pub fn segment<R: Rng + ?Sized>(
    view: &ClassImage,
    model: &NoiseModel,
    rng: &mut R,
    tick: u64,
) -> SegmentationFrame {
    let cdf = model.cumulative();
    let vectors = model.emitted_vectors();
    let probs = view
        .pixels
        .iter()
        .map(|truth| {
            let row = &cdf[truth.index()];
            let u: f64 = rng.random();
            let emitted = row
                .iter()
                .position(|&acc| u < acc)
                .unwrap_or_else(|| row.iter().rposition(|&acc| acc > 0.0).unwrap_or(0));
            vectors[emitted]
        })
        .collect();
    SegmentationFrame {
        width: view.width,
        height: view.height,
        tick,
        probs,
    }
}

/// Seeded synthetic provider.
#[derive(Debug, Clone)]
pub struct SyntheticSegmenter {
    model: NoiseModel,
    rng: ChaCha8Rng,
}

impl SyntheticSegmenter {
    pub fn new(model: NoiseModel, seed: u64) -> Self {
        Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }
}

impl SegmentationProvider for SyntheticSegmenter {
    fn segment(&mut self, view: &ClassImage, tick: u64) -> Result<SegmentationFrame, SegmentationError> {
        Ok(segment(view, &self.model, &mut self.rng, tick))
    }
}

const FRAME_MAGIC: &[u8; 8] = b"SLFRAME1";

/// Writes a frame as: magic `SLFRAME1`, then little-endian `u32` width,
/// `u32` height, `u32` class count, `u64` tick, then `f64` probabilities
/// ordered by row, column, class.
pub fn write_frame<W: Write>(frame: &SegmentationFrame, mut out: W) -> io::Result<()> {
    out.write_all(FRAME_MAGIC)?;
    out.write_all(&(frame.width as u32).to_le_bytes())?;
    out.write_all(&(frame.height as u32).to_le_bytes())?;
    out.write_all(&(NUM_CLASSES as u32).to_le_bytes())?;
    out.write_all(&frame.tick.to_le_bytes())?;
    for p in &frame.probs {
        for v in p {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_frame<R: Read>(mut input: R) -> Result<SegmentationFrame, SegmentationError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != FRAME_MAGIC {
        return Err(SegmentationError::Format("bad magic"));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |input: &mut R| -> io::Result<u32> {
        input.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let width = read_u32(&mut input)? as usize;
    let height = read_u32(&mut input)? as usize;
    let classes = read_u32(&mut input)? as usize;
    if classes != NUM_CLASSES {
        return Err(SegmentationError::Format("unexpected class count"));
    }
    let mut u64buf = [0u8; 8];
    input.read_exact(&mut u64buf)?;
    let tick = u64::from_le_bytes(u64buf);
    let mut probs = Vec::with_capacity(width * height);
    let mut f = [0u8; 8];
    for _ in 0..width * height {
        let mut p = [0.0; NUM_CLASSES];
        for v in p.iter_mut() {
            input.read_exact(&mut f)?;
            *v = f64::from_le_bytes(f);
        }
        probs.push(p);
    }
    SegmentationFrame::new(width, height, tick, probs)
}

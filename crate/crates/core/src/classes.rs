//! Semantic class catalogue and landing-safety ranking.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Number of semantic classes produced by the segmentation provider.
pub const NUM_CLASSES: usize = 20;

/// A per-class probability vector.
pub type ClassProbs = [f64; NUM_CLASSES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[repr(u8)]
pub enum ClassId {
    Road = 0,
    Dirt,
    Gravel,
    Rock,
    Grass,
    Vegetation,
    Tree,
    Obstacle,
    Animal,
    Person,
    Bicycle,
    Vehicle,
    Water,
    Boat,
    Wall,
    Roof,
    Sky,
    Drone,
    TrainTrack,
    Background,
}

impl ClassId {
    pub const ALL: [ClassId; NUM_CLASSES] = [
        ClassId::Road,
        ClassId::Dirt,
        ClassId::Gravel,
        ClassId::Rock,
        ClassId::Grass,
        ClassId::Vegetation,
        ClassId::Tree,
        ClassId::Obstacle,
        ClassId::Animal,
        ClassId::Person,
        ClassId::Bicycle,
        ClassId::Vehicle,
        ClassId::Water,
        ClassId::Boat,
        ClassId::Wall,
        ClassId::Roof,
        ClassId::Sky,
        ClassId::Drone,
        ClassId::TrainTrack,
        ClassId::Background,
    ];

    pub const PERSON_INDEX: usize = ClassId::Person as usize;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(index: usize) -> Option<ClassId> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassId::Road => "road",
            ClassId::Dirt => "dirt",
            ClassId::Gravel => "gravel",
            ClassId::Rock => "rock",
            ClassId::Grass => "grass",
            ClassId::Vegetation => "vegetation",
            ClassId::Tree => "tree",
            ClassId::Obstacle => "obstacle",
            ClassId::Animal => "animal",
            ClassId::Person => "person",
            ClassId::Bicycle => "bicycle",
            ClassId::Vehicle => "vehicle",
            ClassId::Water => "water",
            ClassId::Boat => "boat",
            ClassId::Wall => "wall",
            ClassId::Roof => "roof",
            ClassId::Sky => "sky",
            ClassId::Drone => "drone",
            ClassId::TrainTrack => "train-track",
            ClassId::Background => "background",
        }
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown class name `{0}`")]
pub struct UnknownClass(pub String);

impl FromStr for ClassId {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassId::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| UnknownClass(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClassSetError {
    #[error("person can never be a safe landing class")]
    PersonMarkedSafe,
    #[error("class {0} listed more than once in the safe ranking")]
    DuplicateSafeClass(ClassId),
}

/// Which classes are acceptable to land on, and in which order of preference.
///
/// Rank 0 is the most preferred safe class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSet {
    rank: [Option<u8>; NUM_CLASSES],
    safe: Vec<ClassId>,
}

impl ClassSet {
    /// Builds a class set whose safe classes are `ranked`, most preferred first.
    pub fn with_safe(ranked: &[ClassId]) -> Result<Self, ClassSetError> {
        let mut rank = [None; NUM_CLASSES];
        for (r, &c) in ranked.iter().enumerate() {
            if c == ClassId::Person {
                return Err(ClassSetError::PersonMarkedSafe);
            }
            if rank[c.index()].is_some() {
                return Err(ClassSetError::DuplicateSafeClass(c));
            }
            rank[c.index()] = Some(r as u8);
        }
        Ok(Self {
            rank,
            safe: ranked.to_vec(),
        })
    }

    #[inline]
    pub fn is_safe(&self, class: ClassId) -> bool {
        self.rank[class.index()].is_some()
    }

    #[inline]
    pub fn is_safe_index(&self, index: usize) -> bool {
        self.rank.get(index).is_some_and(|r| r.is_some())
    }

    #[inline]
    pub fn rank(&self, class: ClassId) -> Option<u8> {
        self.rank[class.index()]
    }

    /// Safe classes in rank order.
    pub fn safe_classes(&self) -> &[ClassId] {
        &self.safe
    }
}

impl Default for ClassSet {
    fn default() -> Self {
        Self::with_safe(&[ClassId::Grass, ClassId::Dirt, ClassId::Gravel])
            .expect("default ranking is valid")
    }
}

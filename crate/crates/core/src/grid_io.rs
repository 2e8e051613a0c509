//! Plain-text grid dumps for debugging and golden files.
//!
//! ```text
//! safeland-grid 1
//! size <width> <height>
//! cell_size <meters>
//! anchor <x> <y>
//! yaw <radians>
//! channels <count> <name> <name> ...
//! <one line per cell, row-major (y outer), channel values separated by spaces>
//! ```
//!
//! `anchor` is the world position of the center of cell (0, 0). Values use
//! Rust's shortest round-trip float formatting, so dumps reload bit-exactly.

use crate::classes::ClassId;
use crate::geometry::GroundPoint;
use crate::semantic_map::SemanticGroundMap;
use crate::spot::{DistanceField, SafeMask};
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

const MAGIC: &str = "safeland-grid 1";

#[derive(Debug, thiserror::Error)]
pub enum GridIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridDump {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub anchor: GroundPoint,
    pub yaw: f64,
    pub channels: Vec<String>,
    /// `width * height * channels.len()` values, channel innermost.
    pub values: Vec<f64>,
}

impl GridDump {
    pub fn value(&self, x: usize, y: usize, channel: usize) -> f64 {
        self.values[(y * self.width + x) * self.channels.len() + channel]
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "size {} {}", self.width, self.height)?;
        writeln!(out, "cell_size {}", self.cell_size)?;
        writeln!(out, "anchor {} {}", self.anchor.x, self.anchor.y)?;
        writeln!(out, "yaw {}", self.yaw)?;
        writeln!(out, "channels {} {}", self.channels.len(), self.channels.join(" "))?;
        let mut line = String::new();
        for cell in self.values.chunks(self.channels.len().max(1)) {
            line.clear();
            for (k, v) in cell.iter().enumerate() {
                if k > 0 {
                    line.push(' ');
                }
                write!(line, "{v}").expect("writing to a String");
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, GridIoError> {
        let mut lines = input.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String), GridIoError> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(GridIoError::Parse {
                    line: 0,
                    msg: format!("missing {what}"),
                }),
            }
        };
        let err = |line: usize, msg: &str| GridIoError::Parse {
            line,
            msg: msg.to_owned(),
        };
        let (n, magic) = next("header")?;
        if magic.trim() != MAGIC {
            return Err(err(n, "not a safeland grid dump"));
        }
        let mut field = |key: &str| -> Result<(usize, Vec<String>), GridIoError> {
            let (n, l) = next(key)?;
            let mut parts = l.split_whitespace().map(str::to_owned);
            if parts.next().as_deref() != Some(key) {
                return Err(err(n, &format!("expected `{key}`")));
            }
            Ok((n, parts.collect()))
        };
        let num = |n: usize, s: Option<&String>| -> Result<f64, GridIoError> {
            s.and_then(|s| s.parse().ok()).ok_or_else(|| err(n, "bad number"))
        };
        let (n, size) = field("size")?;
        let width = num(n, size.first())? as usize;
        let height = num(n, size.get(1))? as usize;
        let (n, cs) = field("cell_size")?;
        let cell_size = num(n, cs.first())?;
        let (n, anchor) = field("anchor")?;
        let anchor = GroundPoint::new(num(n, anchor.first())?, num(n, anchor.get(1))?);
        let (n, yaw) = field("yaw")?;
        let yaw = num(n, yaw.first())?;
        let (n, ch) = field("channels")?;
        let count = num(n, ch.first())? as usize;
        let channels: Vec<String> = ch[1..].to_vec();
        if channels.len() != count {
            return Err(err(n, "channel count does not match names"));
        }
        let mut values = Vec::with_capacity(width * height * count);
        for _ in 0..width * height {
            let (n, l) = next("cell values")?;
            let before = values.len();
            for tok in l.split_whitespace() {
                values.push(tok.parse().map_err(|_| err(n, "bad value"))?);
            }
            if values.len() - before != count {
                return Err(err(n, "wrong number of values"));
            }
        }
        Ok(Self {
            width,
            height,
            cell_size,
            anchor,
            yaw,
            channels,
            values,
        })
    }
}

impl SemanticGroundMap {
    /// Snapshot of the class probabilities.
    pub fn to_dump(&self) -> GridDump {
        GridDump {
            width: self.width(),
            height: self.height(),
            cell_size: self.cell_size(),
            anchor: self.anchor(),
            yaw: self.frame().yaw,
            channels: ClassId::ALL.iter().map(|c| c.name().to_owned()).collect(),
            values: self.cells().iter().flat_map(|c| c.iter().copied()).collect(),
        }
    }
}

/// Dumps a distance field as two channels: meters and segment id (-1 outside).
pub fn distance_field_dump(field: &DistanceField, map: &SemanticGroundMap) -> GridDump {
    GridDump {
        width: field.width,
        height: field.height,
        cell_size: field.cell_size,
        anchor: map.anchor(),
        yaw: map.frame().yaw,
        channels: vec!["distance".into(), "segment".into()],
        values: field
            .distance
            .iter()
            .zip(&field.segment)
            .flat_map(|(d, s)| [*d, s.map_or(-1.0, |s| s as f64)])
            .collect(),
    }
}

/// Dumps a safe mask with one 0/1 channel per safe class.
pub fn safe_mask_dump(mask: &SafeMask, map: &SemanticGroundMap) -> GridDump {
    let n = mask.width * mask.height;
    let mut values = Vec::with_capacity(n * mask.masks.len());
    for i in 0..n {
        for (_, m) in &mask.masks {
            values.push(if m[i] { 1.0 } else { 0.0 });
        }
    }
    GridDump {
        width: mask.width,
        height: mask.height,
        cell_size: map.cell_size(),
        anchor: map.anchor(),
        yaw: map.frame().yaw,
        channels: mask.masks.iter().map(|(c, _)| c.name().to_owned()).collect(),
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MapFrame;
    use crate::semantic_map::MapConfig;

    #[test]
    fn map_dump_roundtrips_exactly() {
        let config = MapConfig {
            width: 4,
            height: 3,
            cell_size: 0.3,
        };
        let mut map = SemanticGroundMap::new(&config, MapFrame::new(GroundPoint::new(1.5, -2.0), 0.25)).unwrap();
        map.cell_mut(2, 1)[4] = 0.123456789012345;
        let dump = map.to_dump();
        let mut buf = Vec::new();
        dump.write(&mut buf).unwrap();
        let back = GridDump::read(buf.as_slice()).unwrap();
        assert_eq!(back, dump);
        assert_eq!(back.value(2, 1, 4), 0.123456789012345);
    }

    #[test]
    fn truncated_dump_is_rejected() {
        let text = "safeland-grid 1\nsize 2 2\ncell_size 1\nanchor 0 0\nyaw 0\nchannels 1 a\n1\n2\n";
        assert!(GridDump::read(text.as_bytes()).is_err());
        assert!(GridDump::read("nope\n".as_bytes()).is_err());
    }
}

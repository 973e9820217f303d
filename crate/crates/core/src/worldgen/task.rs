use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const VOCABULARY: [&str; 8] = [
    "push", "red", "blue", "block", "to", "green", "yellow", "zone",
];

pub const NUM_TASKS: usize = 4;

pub fn vocabulary() -> Vec<String> {
    VOCABULARY.iter().map(|w| w.to_string()).collect()
}

/// Hex SHA-256 of the newline-joined vocabulary.
pub fn vocabulary_hash(vocab: &[String]) -> String {
    let mut hasher = Sha256::new();
    for word in vocab {
        hasher.update(word.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

pub fn tokenize(text: &str) -> Result<Vec<usize>> {
    text.split_whitespace()
        .map(|word| {
            VOCABULARY
                .iter()
                .position(|v| *v == word)
                .ok_or_else(|| Error::UnknownToken(word.to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockColor {
    Red,
    Blue,
}

impl BlockColor {
    /// Index of the block in [`super::WorldState::block_pos`].
    pub fn block_index(self) -> usize {
        match self {
            BlockColor::Red => 0,
            BlockColor::Blue => 1,
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            BlockColor::Red => [255, 0, 0],
            BlockColor::Blue => [0, 0, 255],
        }
    }
}

impl fmt::Display for BlockColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockColor::Red => "red",
            BlockColor::Blue => "blue",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneColor {
    Green,
    Yellow,
}

impl ZoneColor {
    pub fn center(self) -> [f64; 2] {
        match self {
            ZoneColor::Green => [0.2, 0.2],
            ZoneColor::Yellow => [0.8, 0.2],
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            ZoneColor::Green => [0, 128, 0],
            ZoneColor::Yellow => [128, 128, 0],
        }
    }
}

impl fmt::Display for ZoneColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ZoneColor::Green => "green",
            ZoneColor::Yellow => "yellow",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: usize,
    pub block_color: BlockColor,
    pub zone_color: ZoneColor,
    pub annotation: String,
    pub token_ids: Vec<usize>,
}

impl TaskSpec {
    /// The registered task grid: ids 0..4 are red→green, red→yellow,
    /// blue→green, blue→yellow.
    pub fn get(task_id: usize) -> Result<TaskSpec> {
        let (block_color, zone_color) = match task_id {
            0 => (BlockColor::Red, ZoneColor::Green),
            1 => (BlockColor::Red, ZoneColor::Yellow),
            2 => (BlockColor::Blue, ZoneColor::Green),
            3 => (BlockColor::Blue, ZoneColor::Yellow),
            other => return Err(Error::UnknownTask(other)),
        };
        let annotation = format!("push {block_color} block to {zone_color} zone");
        let token_ids = tokenize(&annotation)?;
        Ok(TaskSpec {
            task_id,
            block_color,
            zone_color,
            annotation,
            token_ids,
        })
    }

    pub fn all() -> Vec<TaskSpec> {
        (0..NUM_TASKS)
            .map(|id| TaskSpec::get(id).expect("registered task"))
            .collect()
    }

    pub fn block_index(&self) -> usize {
        self.block_color.block_index()
    }

    pub fn zone_center(&self) -> [f64; 2] {
        self.zone_color.center()
    }
}

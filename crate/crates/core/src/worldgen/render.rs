use super::state::WorldState;
use super::task::{BlockColor, ZoneColor};
use crate::error::{Error, Result};

pub const IMAGE_SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const FRAME_BYTES: usize = IMAGE_SIDE * IMAGE_SIDE * CHANNELS;

const GRIPPER_RGB: [u8; 3] = [255, 255, 255];

/// A 32×32 RGB frame, row-major, channel-interleaved.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Image(Vec<u8>);

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Image({}×{}×{})", IMAGE_SIDE, IMAGE_SIDE, CHANNELS)
    }
}

impl Image {
    pub fn black() -> Image {
        Image(vec![0; FRAME_BYTES])
    }

    pub fn filled(rgb: [u8; 3]) -> Image {
        Image(rgb.iter().copied().cycle().take(FRAME_BYTES).collect())
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Image> {
        if bytes.len() != FRAME_BYTES {
            return Err(Error::shape(
                "image",
                format!("expected {FRAME_BYTES} bytes, got {}", bytes.len()),
            ));
        }
        Ok(Image(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        let i = (row * IMAGE_SIDE + col) * CHANNELS;
        [self.0[i], self.0[i + 1], self.0[i + 2]]
    }

    fn fill_patch(&mut self, center: (i64, i64), lo: i64, hi: i64, rgb: [u8; 3]) {
        let side = IMAGE_SIDE as i64;
        for row in center.1 + lo..=center.1 + hi {
            for col in center.0 + lo..=center.0 + hi {
                if (0..side).contains(&row) && (0..side).contains(&col) {
                    let i = (row as usize * IMAGE_SIDE + col as usize) * CHANNELS;
                    self.0[i..i + CHANNELS].copy_from_slice(&rgb);
                }
            }
        }
    }
}

fn to_pixel(p: [f64; 2]) -> (i64, i64) {
    let max = (IMAGE_SIDE - 1) as f64;
    ((p[0] * max).round() as i64, ((1.0 - p[1]) * max).round() as i64)
}

/// Zones, then blocks, then the gripper; later entities overwrite earlier ones.
pub fn render(state: &WorldState) -> Image {
    let mut img = Image::black();
    for zone in [ZoneColor::Green, ZoneColor::Yellow] {
        img.fill_patch(to_pixel(zone.center()), -3, 3, zone.rgb());
    }
    for color in [BlockColor::Red, BlockColor::Blue] {
        if let Some(pos) = state.block_pos.get(color.block_index()) {
            img.fill_patch(to_pixel(*pos), -1, 1, color.rgb());
        }
    }
    img.fill_patch(to_pixel(state.gripper_pos), 0, 1, GRIPPER_RGB);
    img
}

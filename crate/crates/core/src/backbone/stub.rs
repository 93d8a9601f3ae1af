//! Built-in deterministic extractor: per-channel means over a 7x7 grid of
//! 32x32 blocks.

use crate::frames::{CHANNELS, INPUT_SIZE};

pub const STUB_NAME: &str = "stub";
pub const STUB_GRID: usize = 7;

const BLOCK: usize = INPUT_SIZE / STUB_GRID;

/// Block means of a 224x224x3 HWC buffer, returned in (7, 7, 3) order.
pub fn block_mean_features(values: &[f32]) -> Vec<f32> {
    debug_assert_eq!(values.len(), INPUT_SIZE * INPUT_SIZE * CHANNELS);
    let mut sums = vec![0f64; STUB_GRID * STUB_GRID * CHANNELS];
    for y in 0..INPUT_SIZE {
        let gy = y / BLOCK;
        let row = &values[y * INPUT_SIZE * CHANNELS..(y + 1) * INPUT_SIZE * CHANNELS];
        for (x, px) in row.chunks_exact(CHANNELS).enumerate() {
            let cell = (gy * STUB_GRID + x / BLOCK) * CHANNELS;
            for c in 0..CHANNELS {
                sums[cell + c] += px[c] as f64;
            }
        }
    }
    let n = (BLOCK * BLOCK) as f64;
    sums.into_iter().map(|s| (s / n) as f32).collect()
}

//! Per-patch UNet cost on a 16³ input for a few base widths.
//!
//! ```text
//! cargo run --release --example unet_bench
//! ```

use std::time::Instant;

use qsm_pdip::neural::{init_weights, unet_backward, unet_forward, FeatureMap, NetworkSpec};

const REPEATS: u32 = 50;

fn main() -> qsm_pdip::Result<()> {
    let z = FeatureMap::from_data(1, [16; 3], (0..4096).map(|i| (i as f64 * 0.37).sin()).collect())?;
    for base in [2usize, 4, 8] {
        let params = init_weights(NetworkSpec { levels: 2, base_channels: base }, 1)?;
        let t = Instant::now();
        for _ in 0..REPEATS {
            let (out, cache) = unet_forward(&params, &z)?;
            unet_backward(&params, &cache, &out)?;
        }
        let both = t.elapsed() / REPEATS;
        let t = Instant::now();
        for _ in 0..REPEATS {
            unet_forward(&params, &z)?;
        }
        println!("C0={base}: forward+backward {both:.1?}, forward {:.1?}", t.elapsed() / REPEATS);
    }
    Ok(())
}

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PixelPoint;
use crate::error::{Error, Result};
use crate::grid::PatchRect;

/// Draws `min(ceil(fraction * area), cap)` distinct integer pixels of `region`
/// uniformly without replacement. The result is raster-ordered and depends
/// only on the arguments.
pub fn sample_uniform(
    width: usize,
    height: usize,
    region: &PatchRect,
    fraction: f64,
    cap: usize,
    seed: u64,
) -> Result<Vec<PixelPoint>> {
    if region.area() == 0 {
        return Err(Error::Config("cannot sample from an empty region".into()));
    }
    if !region.fits_in(width, height) {
        return Err(Error::Dimension(format!(
            "sampling region {region:?} exceeds {width}x{height} frame"
        )));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "sample fraction must be in (0, 1], got {fraction}"
        )));
    }
    let area = region.area();
    let wanted = ((fraction * area as f64) - 1e-9).ceil().max(1.0) as usize;
    let count = wanted.min(cap).min(area);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = index::sample(&mut rng, area, count).into_vec();
    picks.sort_unstable();
    Ok(picks
        .into_iter()
        .map(|i| {
            PixelPoint::new(
                (region.x0 + i % region.width) as f32,
                (region.y0 + i / region.width) as f32,
            )
        })
        .collect())
}

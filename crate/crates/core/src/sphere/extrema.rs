//! Local extrema counting on pixelized spheres.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::run_blocks;
use crate::sphere::{FieldSample, SphereGrid};

/// Counts of strict local minima and maxima. Pixels tied with any neighbor
/// count as neither and are tallied separately.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremaCount {
    pub n_min: usize,
    pub n_max: usize,
    pub n_ties: usize,
}

const PIXBLOCK: usize = 65_536;

/// Count strict local extrema: pixel `i` is a maximum iff its value exceeds
/// every neighbor's value (minimum symmetric).
pub fn count_extrema(field: &FieldSample, grid: &SphereGrid) -> Result<ExtremaCount> {
    count_extrema_above(field, grid, f64::NEG_INFINITY)
}

/// Same as [`count_extrema`], but a maximum (minimum) is only counted where
/// the field value is at least `u`.
pub fn count_extrema_above(field: &FieldSample, grid: &SphereGrid, u: f64) -> Result<ExtremaCount> {
    let n = grid.n_pixels();
    if field.values.len() != n {
        return Err(Error::argument(format!(
            "field has {} values but the grid has {n} pixels",
            field.values.len()
        )));
    }
    let values = &field.values;
    let n_blocks = n.div_ceil(PIXBLOCK);
    let partials = run_blocks(n_blocks, |b| {
        let lo = b * PIXBLOCK;
        let hi = ((b + 1) * PIXBLOCK).min(n);
        let mut count = ExtremaCount::default();
        for p in lo..hi {
            let v = values[p];
            let mut above = 0usize;
            let mut below = 0usize;
            let mut tied = false;
            for &q in grid.neighbors(p) {
                let w = values[q as usize];
                if v > w {
                    above += 1;
                } else if v < w {
                    below += 1;
                } else {
                    tied = true;
                }
            }
            let deg = grid.neighbors(p).len();
            if tied {
                count.n_ties += 1;
            } else if above == deg && v >= u {
                count.n_max += 1;
            } else if below == deg && v >= u {
                count.n_min += 1;
            }
        }
        count
    });
    let mut total = ExtremaCount::default();
    for p in partials {
        total.n_min += p.n_min;
        total.n_max += p.n_max;
        total.n_ties += p.n_ties;
    }
    Ok(total)
}

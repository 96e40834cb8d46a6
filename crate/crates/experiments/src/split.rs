//! Stratified sampling over the four `(a, y)` cells.

use fairdro_core::{Cell, DataError, Dataset};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Shuffled indices of every cell, in [`Cell::ALL`] order.
fn shuffled_cells(data: &Dataset, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>, DataError> {
    Cell::ALL
        .iter()
        .map(|&c| {
            let mut idx = data.cell_indices(c);
            if idx.is_empty() {
                return Err(DataError::EmptyCell { a: c.a, y: c.y });
            }
            idx.shuffle(rng);
            Ok(idx)
        })
        .collect()
}

fn assemble(data: &Dataset, cells: &[Vec<usize>], take: &[usize]) -> Result<(Dataset, Dataset), DataError> {
    let mut first = Vec::new();
    let mut rest = Vec::new();
    for (idx, &k) in cells.iter().zip(take) {
        first.extend_from_slice(&idx[..k]);
        rest.extend_from_slice(&idx[k..]);
    }
    first.sort_unstable();
    rest.sort_unstable();
    Ok((data.subset(&first)?, data.subset(&rest)?))
}

/// Splits every cell independently, sending `round(fraction * size)` of its
/// samples (at least one, and never all of them) to the first output.
pub fn stratified_split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::BadFraction(fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = shuffled_cells(data, &mut rng)?;
    let take: Vec<usize> = cells
        .iter()
        .map(|idx| {
            let k = (fraction * idx.len() as f64).round() as usize;
            if idx.len() < 2 {
                k
            } else {
                k.clamp(1, idx.len() - 1)
            }
        })
        .collect();
    assemble(data, &cells, &take)
}

/// Draws exactly `n` samples, allocating them to cells in proportion to the
/// cell sizes by largest remainder, with every cell represented at least
/// once. Returns `(sample, rest)`.
pub fn stratified_sample(data: &Dataset, n: usize, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    let total = data.len();
    if n < Cell::ALL.len() || n >= total {
        return Err(DataError::BadFraction(n as f64 / total.max(1) as f64));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = shuffled_cells(data, &mut rng)?;
    let quota: Vec<f64> = cells.iter().map(|c| n as f64 * c.len() as f64 / total as f64).collect();
    let mut take: Vec<usize> = quota.iter().zip(&cells).map(|(q, c)| (q.floor() as usize).clamp(1, c.len())).collect();
    let mut order: Vec<usize> = (0..cells.len()).collect();
    // Largest fractional part first; ties go to the earlier cell.
    order.sort_by(|&i, &j| (quota[j] - quota[j].floor()).total_cmp(&(quota[i] - quota[i].floor())).then(i.cmp(&j)));
    let mut assigned: usize = take.iter().sum();
    let mut k = 0;
    while assigned < n {
        let c = order[k % order.len()];
        if take[c] < cells[c].len() {
            take[c] += 1;
            assigned += 1;
        }
        k += 1;
    }
    while assigned > n {
        // Only reachable when the floor-one rule over-allocates tiny cells.
        let c = (0..cells.len()).filter(|&c| take[c] > 1).max_by_key(|&c| take[c]).expect("n >= 4");
        take[c] -= 1;
        assigned -= 1;
    }
    assemble(data, &cells, &take)
}

//! Evaluation grids over the simplex.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SimplexPoint;

const GRID_SEED: u64 = 0x6d66_6c64_7067;
const GRID_RANDOM_POINTS: usize = 200;
const MAX_FACE_DIM: usize = 16;

/// `count` points drawn uniformly from the simplex (normalized exponentials).
pub fn random_simplex_points(d: usize, count: usize, seed: u64) -> Vec<SimplexPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let e: Vec<f64> = (0..d).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let s: f64 = e.iter().sum();
            SimplexPoint::new(e.into_iter().map(|v| v / s).collect()).expect("normalized")
        })
        .collect()
}

/// Barycenter, edge midpoints (lexicographic), vertices, then 200 seeded
/// uniform points.
pub fn validation_grid(d: usize) -> Vec<SimplexPoint> {
    let mut g = vec![SimplexPoint::barycenter(d)];
    for i in 0..d {
        for j in i + 1..d {
            let mut c = vec![0.0; d];
            c[i] = 0.5;
            c[j] = 0.5;
            g.push(SimplexPoint(c));
        }
    }
    g.extend((0..d).map(|i| SimplexPoint::vertex(d, i)));
    g.extend(random_simplex_points(d, GRID_RANDOM_POINTS, GRID_SEED));
    g
}

/// Barycenters of every face spanned by `size` states, for sizes in `sizes`.
pub fn face_barycenters(d: usize, sizes: std::ops::RangeInclusive<usize>) -> Vec<SimplexPoint> {
    let mut out = Vec::new();
    if d > MAX_FACE_DIM {
        return out;
    }
    for mask in 1u32..(1u32 << d) {
        let size = mask.count_ones() as usize;
        if !sizes.contains(&size) {
            continue;
        }
        let c: Vec<f64> = (0..d)
            .map(|i| {
                if mask & (1 << i) != 0 {
                    1.0 / size as f64
                } else {
                    0.0
                }
            })
            .collect();
        out.push(SimplexPoint(c));
    }
    out
}

/// Validation grid plus the barycenter of every face of dimension ≥ 2, so
/// that every pattern of vanishing coordinates is represented.
pub fn ergodicity_grid(d: usize) -> Vec<SimplexPoint> {
    let mut g = validation_grid(d);
    if d > 3 {
        g.extend(face_barycenters(d, 3..=d - 1));
    }
    g
}

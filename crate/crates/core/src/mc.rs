//! Seeded, chunked Monte Carlo means. Results depend only on the seed and the number
//! of paths, never on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const CHUNK: usize = 1024;

/// Sample mean and standard error of `sample` over `n_paths` draws.
pub(crate) fn mean_and_se<F>(n_paths: usize, seed: u64, sample: F) -> (f64, f64)
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks = n_paths.div_ceil(CHUNK);
    let partial: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64 + 1);
            let count = CHUNK.min(n_paths - c * CHUNK);
            // Welford within the chunk.
            let (mut mean, mut m2) = (0.0, 0.0);
            for i in 0..count {
                let v = sample(&mut rng);
                let delta = v - mean;
                mean += delta / (i + 1) as f64;
                m2 += delta * (v - mean);
            }
            (mean, m2, count)
        })
        .collect();
    // Chan's pairwise merge in chunk order.
    let (mut mean, mut m2, mut count) = (0.0, 0.0, 0usize);
    for (mb, m2b, nb) in partial {
        if nb == 0 {
            continue;
        }
        let n = count + nb;
        let delta = mb - mean;
        mean += delta * nb as f64 / n as f64;
        m2 += m2b + delta * delta * (count as f64) * (nb as f64) / n as f64;
        count = n;
    }
    if count < 2 {
        return (mean, f64::INFINITY);
    }
    let var = m2 / (count - 1) as f64;
    (mean, (var / count as f64).sqrt())
}

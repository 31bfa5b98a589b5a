//! Seeded synthetic ratings corpus with MovieLens-1M-like shape: a few
//! latent taste groups, block-structured movie affinities, half-step
//! ratings, and a heavy-tailed per-user rating count.
//!
//! Useful when the real `ratings.dat` is unavailable; the generated file
//! round-trips through the same parser and pipeline.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::dataset::RatingRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub users: usize,
    pub movies: usize,
    /// Latent taste groups; each loves a distinct pair of movie blocks.
    pub groups: usize,
    pub seed: u64,
    /// Per-user floor on distinct rated movies.
    pub min_count: usize,
    /// Approximate mean of the heavy-tailed per-user rating count.
    pub mean_count: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 6040,
            movies: 3706,
            groups: 4,
            seed: 0,
            min_count: 20,
            mean_count: 140.0,
        }
    }
}

const TIMESTAMP_BASE: i64 = 978_300_000;

/// Group-to-block affinity in [0, 1]; blocks `2g` and `2g+1` are the loved
/// pair of group `g`.
fn affinity(group: usize, block: usize, groups: usize) -> f64 {
    if block / 2 == group {
        0.9
    } else if block == (2 * group + 2) % (2 * groups) {
        0.5
    } else {
        0.12
    }
}

fn round_to_half(v: f64) -> f64 {
    (v * 2.0).round() / 2.0
}

fn rating_value(aff: f64, noise: f64) -> f64 {
    round_to_half(0.75 + 4.25 * aff + noise).clamp(0.5, 5.0)
}

/// Deterministic corpus for `cfg`; every user has at least `min_count`
/// distinct movies and every movie id in `1..=movies` appears.
pub fn generate_records(cfg: &SynthConfig) -> Result<Vec<RatingRecord>> {
    if cfg.users == 0 || cfg.movies == 0 || cfg.groups == 0 {
        return Err(Error::InvalidArgument(
            "synthetic corpus needs users, movies, and groups".into(),
        ));
    }
    let blocks = 2 * cfg.groups;
    if cfg.movies < blocks {
        return Err(Error::InvalidArgument(format!(
            "{} movies cannot fill {blocks} blocks",
            cfg.movies
        )));
    }
    if cfg.min_count > cfg.movies {
        return Err(Error::InvalidArgument(format!(
            "min_count {} exceeds the {} available movies",
            cfg.min_count, cfg.movies
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let extra_mean = (cfg.mean_count - cfg.min_count as f64).max(1.0);
    let sigma = 0.8;
    let mu = extra_mean.ln() - sigma * sigma / 2.0;
    let count_dist = LogNormal::new(mu, sigma).map_err(|e| Error::Numeric(e.to_string()))?;
    let noise_dist = Normal::new(0.0, 0.6).map_err(|e| Error::Numeric(e.to_string()))?;

    let block_size = cfg.movies.div_ceil(blocks);
    let block_of = |movie_idx: usize| (movie_idx / block_size).min(blocks - 1);

    let mut records = Vec::new();
    let mut rated = vec![false; cfg.movies];
    for user_idx in 0..cfg.users {
        let user_id = user_idx as u32 + 1;
        let group = user_idx % cfg.groups;

        // cumulative block weights for this group
        let weights: Vec<f64> = (0..blocks)
            .map(|b| 0.15 + affinity(group, b, cfg.groups))
            .collect();
        let total: f64 = weights.iter().sum();

        let extra = count_dist.sample(&mut rng).round().max(0.0) as usize;
        let count = (cfg.min_count + extra).min(cfg.movies / 2).max(cfg.min_count);

        let mut seen = HashSet::with_capacity(count);
        let mut attempts = 0usize;
        while seen.len() < count && attempts < count * 40 {
            attempts += 1;
            let mut pick = rng.random_range(0.0..total);
            let mut block = blocks - 1;
            for (b, w) in weights.iter().enumerate() {
                if pick < *w {
                    block = b;
                    break;
                }
                pick -= w;
            }
            let lo = block * block_size;
            let hi = ((block + 1) * block_size).min(cfg.movies);
            // power-biased index: early movies in a block are more popular
            let u: f64 = rng.random::<f64>();
            let movie_idx = lo + ((u.powf(1.7) * (hi - lo) as f64) as usize).min(hi - lo - 1);
            if !seen.insert(movie_idx) {
                continue;
            }
            let aff = affinity(group, block_of(movie_idx), cfg.groups);
            records.push(RatingRecord {
                user_id,
                movie_id: movie_idx as u32 + 1,
                rating: rating_value(aff, noise_dist.sample(&mut rng)),
                timestamp: TIMESTAMP_BASE + records.len() as i64,
            });
            rated[movie_idx] = true;
        }
        if seen.len() < cfg.min_count {
            return Err(Error::Numeric(format!(
                "user {user_id} only reached {} distinct movies",
                seen.len()
            )));
        }
    }

    // coverage pass: park each unrated movie with a rotating user
    let mut park = 0usize;
    for movie_idx in 0..cfg.movies {
        if rated[movie_idx] {
            continue;
        }
        let user_idx = park % cfg.users;
        park += 1;
        let group = user_idx % cfg.groups;
        let aff = affinity(group, block_of(movie_idx), cfg.groups);
        records.push(RatingRecord {
            user_id: user_idx as u32 + 1,
            movie_id: movie_idx as u32 + 1,
            rating: rating_value(aff, noise_dist.sample(&mut rng)),
            timestamp: TIMESTAMP_BASE + records.len() as i64,
        });
    }

    Ok(records)
}

/// Write records in the `user::movie::rating::timestamp` text layout.
pub fn write_ratings(records: &[RatingRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = BufWriter::new(file);
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    for r in records {
        // whole-star ratings print bare, half stars keep one decimal
        if r.rating.fract() == 0.0 {
            writeln!(
                out,
                "{}::{}::{}::{}",
                r.user_id, r.movie_id, r.rating as i64, r.timestamp
            )
            .map_err(io_err)?;
        } else {
            writeln!(
                out,
                "{}::{}::{:.1}::{}",
                r.user_id, r.movie_id, r.rating, r.timestamp
            )
            .map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

/// Generate and write in one call.
pub fn generate_to(cfg: &SynthConfig, path: &Path) -> Result<usize> {
    let records = generate_records(cfg)?;
    write_ratings(&records, path)?;
    Ok(records.len())
}

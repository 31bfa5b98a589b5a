//! Ratings ingestion: parse `ratings.dat` lines, build the normalized
//! user-by-movie matrix, and produce seeded user-level splits.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_MIN_RATINGS: usize = 20;
pub const DEFAULT_SPLIT_RATIO: f64 = 0.33;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingRecord {
    pub user_id: u32,
    pub movie_id: u32,
    /// Half-step value in {0.0, 0.5, ..., 5.0}.
    pub rating: f64,
    /// Parsed for format validation, then unused.
    pub timestamp: i64,
}

/// Dense normalized ratings, rows ordered by ascending user id and columns
/// by ascending movie id. Unrated cells are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsMatrix {
    pub values: Array2<f64>,
    pub user_index: BTreeMap<u32, usize>,
    pub movie_index: BTreeMap<u32, usize>,
}

impl RatingsMatrix {
    pub fn users(&self) -> usize {
        self.values.nrows()
    }

    pub fn movies(&self) -> usize {
        self.values.ncols()
    }

    /// User ids in row order.
    pub fn user_ids(&self) -> Vec<u32> {
        self.user_index.keys().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSet {
    pub train: RatingsMatrix,
    pub validation: RatingsMatrix,
    pub test: RatingsMatrix,
    pub seed: u64,
}

/// Parse `user::movie::rating::timestamp` lines. Empty lines are skipped;
/// anything else malformed is an error carrying its 1-based line number.
pub fn parse_ratings(source: impl BufRead) -> Result<Vec<RatingRecord>> {
    let mut records = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: format!("unreadable line: {e}"),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        records.push(parse_line(trimmed, line_no)?);
    }
    Ok(records)
}

fn parse_line(line: &str, line_no: usize) -> Result<RatingRecord> {
    let err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let fields: Vec<&str> = line.split("::").collect();
    if fields.len() != 4 {
        return Err(err(format!("expected 4 `::`-separated fields, found {}", fields.len())));
    }
    let user_id: u32 = fields[0]
        .parse()
        .map_err(|_| err(format!("bad user id {:?}", fields[0])))?;
    let movie_id: u32 = fields[1]
        .parse()
        .map_err(|_| err(format!("bad movie id {:?}", fields[1])))?;
    if user_id == 0 || movie_id == 0 {
        return Err(err("ids must be positive".into()));
    }
    let rating: f64 = fields[2]
        .parse()
        .map_err(|_| err(format!("bad rating {:?}", fields[2])))?;
    if !(0.0..=5.0).contains(&rating) {
        return Err(err(format!("rating {rating} outside [0, 5]")));
    }
    let doubled = rating * 2.0;
    if (doubled - doubled.round()).abs() > 1e-9 {
        return Err(err(format!("rating {rating} is not a half-step value")));
    }
    let timestamp: i64 = fields[3]
        .parse()
        .map_err(|_| err(format!("bad timestamp {:?}", fields[3])))?;
    Ok(RatingRecord {
        user_id,
        movie_id,
        rating,
        timestamp,
    })
}

/// Build the normalized matrix: ratings scaled by 1/5, users with fewer
/// than `min_ratings` distinct (nonzero-rated) movies dropped. Columns
/// cover every movie id in `records`, including those only rated by
/// dropped users. Duplicate (user, movie) pairs keep the maximum rating so
/// the result does not depend on record order.
pub fn build_matrix(records: &[RatingRecord], min_ratings: usize) -> Result<RatingsMatrix> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut movie_ids = BTreeSet::new();
    let mut per_user: BTreeMap<u32, BTreeMap<u32, f64>> = BTreeMap::new();
    for r in records {
        movie_ids.insert(r.movie_id);
        let entry = per_user
            .entry(r.user_id)
            .or_default()
            .entry(r.movie_id)
            .or_insert(0.0);
        *entry = entry.max(r.rating / 5.0);
    }

    per_user.retain(|_, ratings| ratings.values().filter(|&&v| v > 0.0).count() >= min_ratings);
    if per_user.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let movie_index: BTreeMap<u32, usize> = movie_ids
        .into_iter()
        .enumerate()
        .map(|(col, id)| (id, col))
        .collect();
    let user_index: BTreeMap<u32, usize> = per_user
        .keys()
        .enumerate()
        .map(|(row, &id)| (id, row))
        .collect();

    let mut values = Array2::zeros((user_index.len(), movie_index.len()));
    for (user_id, ratings) in &per_user {
        let row = user_index[user_id];
        for (movie_id, &v) in ratings {
            values[[row, movie_index[movie_id]]] = v;
        }
    }

    Ok(RatingsMatrix {
        values,
        user_index,
        movie_index,
    })
}

/// Round-half-to-even split arithmetic: returns
/// `(train, validation, test)` user counts for `u` users.
pub fn split_sizes(u: usize, ratio: f64) -> (usize, usize, usize) {
    let pool = (ratio * u as f64).round_ties_even() as usize;
    let test = (ratio * pool as f64).round_ties_even() as usize;
    (u - pool, pool - test, test)
}

/// Seeded user-level split. A shuffled `ratio` share of users forms the
/// test-validation pool; the pool's own `ratio` share becomes test and the
/// larger remainder validation.
pub fn split(matrix: &RatingsMatrix, ratio: f64, seed: u64) -> Result<SplitSet> {
    if !(0.0..1.0).contains(&ratio) || ratio <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "split ratio {ratio} outside (0, 1)"
        )));
    }
    let u = matrix.users();
    if u < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 users to split, have {u}"
        )));
    }

    let mut ids = matrix.user_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let (train_n, val_n, test_n) = split_sizes(u, ratio);
    let pool = &ids[..val_n + test_n];
    let train_ids: BTreeSet<u32> = ids[val_n + test_n..].iter().copied().collect();
    let test_ids: BTreeSet<u32> = pool[..test_n].iter().copied().collect();
    let val_ids: BTreeSet<u32> = pool[test_n..].iter().copied().collect();
    debug_assert_eq!(train_ids.len(), train_n);

    Ok(SplitSet {
        train: take_rows(matrix, &train_ids),
        validation: take_rows(matrix, &val_ids),
        test: take_rows(matrix, &test_ids),
        seed,
    })
}

/// Sub-matrix of the given users, rows re-ordered by ascending user id.
pub fn take_rows(matrix: &RatingsMatrix, users: &BTreeSet<u32>) -> RatingsMatrix {
    let mut values = Array2::zeros((users.len(), matrix.movies()));
    let mut user_index = BTreeMap::new();
    for (row, &id) in users.iter().enumerate() {
        values
            .row_mut(row)
            .assign(&matrix.values.row(matrix.user_index[&id]));
        user_index.insert(id, row);
    }
    RatingsMatrix {
        values,
        user_index,
        movie_index: matrix.movie_index.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(user_id: u32, movie_id: u32, rating: f64) -> RatingRecord {
        RatingRecord {
            user_id,
            movie_id,
            rating,
            timestamp: 0,
        }
    }

    #[test]
    fn parses_the_published_line_format() {
        let records = parse_ratings("1::1193::5::978300760".as_bytes()).unwrap();
        assert_eq!(
            records,
            vec![RatingRecord {
                user_id: 1,
                movie_id: 1193,
                rating: 5.0,
                timestamp: 978_300_760
            }]
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_ratings("7::42::abc::1".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");

        let err = parse_ratings("1::2::3::4\n5::6::9::8".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");

        for bad in [
            "1::2::3",          // too few fields
            "0::2::3::4",       // zero id
            "1::2::-1::4",      // below range
            "1::2::5.3::4",     // not a half step
            "1::2::3::x",       // bad timestamp
            "1::2::3::4::5",    // too many fields
        ] {
            assert!(parse_ratings(bad.as_bytes()).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn half_step_ratings_parse() {
        let records = parse_ratings("1::2::4.5::0\n1::3::0.5::0".as_bytes()).unwrap();
        assert_eq!(records[0].rating, 4.5);
        assert_eq!(records[1].rating, 0.5);
    }

    #[test]
    fn empty_input_gives_empty_list() {
        assert!(parse_ratings("".as_bytes()).unwrap().is_empty());
        assert!(parse_ratings("\n\n  \n".as_bytes()).unwrap().is_empty());
    }

    fn user_block(user_id: u32, count: usize) -> Vec<RatingRecord> {
        (0..count)
            .map(|m| rec(user_id, m as u32 + 1, 1.0 + (m % 9) as f64 * 0.5))
            .collect()
    }

    #[test]
    fn normalization_divides_by_five() {
        let mut records = user_block(1, 20);
        records[0].rating = 5.0;
        records[1].rating = 2.5;
        let m = build_matrix(&records, 20).unwrap();
        assert_eq!(m.values[[0, 0]], 1.0);
        assert_eq!(m.values[[0, 1]], 0.5);
        assert!(m
            .values
            .iter()
            .all(|&v| (0.0..=1.0).contains(&v) && (v * 10.0 - (v * 10.0).round()).abs() < 1e-9));
    }

    #[test]
    fn users_below_the_threshold_are_dropped() {
        let mut records = user_block(1, 20);
        records.extend(user_block(2, 19));
        let m = build_matrix(&records, 20).unwrap();
        assert_eq!(m.users(), 1);
        assert!(m.user_index.contains_key(&1));

        assert!(matches!(
            build_matrix(&user_block(3, 5), 20),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(build_matrix(&[], 20), Err(Error::EmptyDataset)));
    }

    #[test]
    fn columns_cover_all_source_movies() {
        // movie 99 is only rated by the dropped user but still gets a column
        let mut records = user_block(1, 20);
        records.push(rec(2, 99, 4.0));
        let m = build_matrix(&records, 20).unwrap();
        assert_eq!(m.users(), 1);
        assert_eq!(m.movies(), 21);
        assert_eq!(m.values[[0, m.movie_index[&99]]], 0.0);
    }

    #[test]
    fn duplicates_keep_the_maximum_and_order_does_not_matter() {
        let mut records = user_block(1, 20);
        records.push(rec(1, 1, 2.0));
        let forward = build_matrix(&records, 20).unwrap();
        records.reverse();
        let backward = build_matrix(&records, 20).unwrap();
        assert_eq!(forward, backward);
        // original movie-1 rating was 1.0; the duplicate 2.0 wins
        assert_eq!(forward.values[[0, forward.movie_index[&1]]], 2.0 / 5.0);
    }

    #[test]
    fn split_sizes_follow_the_rounding_rule() {
        assert_eq!(split_sizes(6040, 0.33), (4047, 1335, 658));
        assert_eq!(split_sizes(3, 0.33), (2, 1, 0));
        assert_eq!(split_sizes(1000, 0.33), (670, 221, 109));
    }

    fn toy_matrix(users: usize) -> RatingsMatrix {
        let mut records = Vec::new();
        for u in 0..users {
            records.extend(user_block(u as u32 + 1, 20 + u % 3));
        }
        build_matrix(&records, 20).unwrap()
    }

    #[test]
    fn split_partitions_users() {
        let m = toy_matrix(30);
        let s = split(&m, 0.33, 7).unwrap();
        let (train_n, val_n, test_n) = split_sizes(30, 0.33);
        assert_eq!(s.train.users(), train_n);
        assert_eq!(s.validation.users(), val_n);
        assert_eq!(s.test.users(), test_n);

        let mut all: Vec<u32> = s
            .train
            .user_ids()
            .into_iter()
            .chain(s.validation.user_ids())
            .chain(s.test.user_ids())
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all, m.user_ids());
    }

    #[test]
    fn split_rows_carry_their_original_values() {
        let m = toy_matrix(12);
        let s = split(&m, 0.33, 3).unwrap();
        for part in [&s.train, &s.validation, &s.test] {
            for (&id, &row) in &part.user_index {
                assert_eq!(part.values.row(row), m.values.row(m.user_index[&id]));
            }
        }
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let m = toy_matrix(20);
        let a = split(&m, 0.33, 11).unwrap();
        let b = split(&m, 0.33, 11).unwrap();
        assert_eq!(a, b);
        let c = split(&m, 0.33, 12).unwrap();
        assert_ne!(a.test.user_ids(), c.test.user_ids());
    }

    #[test]
    fn split_rejects_bad_inputs() {
        let m = toy_matrix(10);
        assert!(split(&m, 0.0, 1).is_err());
        assert!(split(&m, 1.0, 1).is_err());
        assert!(split(&m, -0.2, 1).is_err());
        let tiny = toy_matrix(2);
        assert!(split(&tiny, 0.33, 1).is_err());
    }
}

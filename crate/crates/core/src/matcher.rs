//! Hamming-distance matching against the reference database and the
//! real/fake judgment: a query is real iff its minimum distance to any
//! enrolled reference is strictly below the threshold; distance exactly at
//! the threshold is fake.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::{compute_hash, Hash120, HASH_BITS, HASH_HEX_LEN};
use crate::imageprep::RasterImage;

/// Number of differing bit positions between two hashes (0..=120).
pub fn hamming(a: &Hash120, b: &Hash120) -> u32 {
    a.as_bytes()
        .iter()
        .zip(b.as_bytes())
        .map(|(x, y)| (x ^ y).count_ones())
        .sum()
}

/// Real/fake decision for a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Real,
    Fake,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Real => "real",
            Verdict::Fake => "fake",
        })
    }
}

impl FromStr for Verdict {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Verdict::Real),
            "fake" => Ok(Verdict::Fake),
            other => Err(Error::Parse(format!("invalid verdict {other:?}"))),
        }
    }
}

/// Verdict record for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub query_id: String,
    pub min_distance: u32,
    pub nearest_id: String,
    pub verdict: Verdict,
    pub threshold: u32,
}

/// Ordered collection of enrolled (image id, hash) pairs.
#[derive(Debug, Clone, Default)]
pub struct ReferenceDb {
    entries: Vec<(String, Hash120)>,
    ids: HashSet<String>,
    source_path: Option<PathBuf>,
}

impl ReferenceDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    /// Where this database was loaded from, if anywhere.
    pub fn source_path(&self) -> Option<&Path> {
        self.source_path.as_deref()
    }

    /// Entries in enrollment order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &Hash120)> {
        self.entries.iter().map(|(id, h)| (id.as_str(), h))
    }

    /// Appends a precomputed hash under a fresh id.
    pub fn insert(&mut self, id: impl Into<String>, hash: Hash120) -> Result<()> {
        let id = id.into();
        if id.is_empty() || id.contains('\n') || id.contains('\r') {
            return Err(Error::InvalidId(id));
        }
        if !self.ids.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        self.entries.push((id, hash));
        Ok(())
    }

    /// Hashes the image and appends it under `id`.
    pub fn enroll(&mut self, id: impl Into<String>, img: &RasterImage) -> Result<()> {
        self.insert(id, compute_hash(img))
    }

    /// Smallest Hamming distance from `query` to any entry, with the id of
    /// the first entry (in enrollment order) attaining it. Entries whose id
    /// equals `exclude_id` are skipped (leave-one-out evaluation).
    pub fn min_distance(&self, query: &Hash120, exclude_id: Option<&str>) -> Result<(u32, &str)> {
        let mut best: Option<(u32, &str)> = None;
        for (id, hash) in &self.entries {
            if exclude_id == Some(id.as_str()) {
                continue;
            }
            let d = hamming(hash, query);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, id));
            }
        }
        best.ok_or(Error::EmptyDatabase)
    }

    /// Applies the threshold decision: real iff min distance < `d`,
    /// fake iff min distance >= `d`.
    pub fn judge(&self, query_id: impl Into<String>, query: &Hash120, d: u32) -> Result<Judgment> {
        let (min_distance, nearest_id) = self.min_distance(query, None)?;
        Ok(Judgment {
            query_id: query_id.into(),
            min_distance,
            nearest_id: nearest_id.to_string(),
            verdict: if min_distance < d {
                Verdict::Real
            } else {
                Verdict::Fake
            },
            threshold: d,
        })
    }

    /// Minimum distances for many queries via word-packed popcount scans.
    /// Results are bit-exactly those of [`min_distance`] per query; work is
    /// partitioned across the ambient rayon pool.
    pub fn batch_min_distance(&self, queries: &[Hash120]) -> Result<Vec<(u32, String)>> {
        if self.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        let packed: Vec<[u64; 2]> = self.entries.iter().map(|(_, h)| h.as_words()).collect();
        Ok(queries
            .par_iter()
            .map(|q| {
                let (d, i) = scan_min(q.as_words(), &packed);
                (d, self.entries[i].0.clone())
            })
            .collect())
    }

    /// Writes one `<hex30> <image-id>` line per entry, LF-terminated.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = Vec::with_capacity(self.entries.len() * (HASH_HEX_LEN + 16));
        for (id, hash) in &self.entries {
            writeln!(out, "{} {}", hash.to_hex(), id)?;
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Reads a database written by [`save`](Self::save). Order is preserved.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut db = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_err = |msg: String| Error::ParseLine {
                line: lineno + 1,
                msg,
            };
            if line.len() < HASH_HEX_LEN + 2 || line.as_bytes().get(HASH_HEX_LEN) != Some(&b' ') {
                return Err(line_err(format!(
                    "expected `<{HASH_HEX_LEN} hex chars> <id>`, got {line:?}"
                )));
            }
            let hash =
                Hash120::parse_hex(&line[..HASH_HEX_LEN]).map_err(|e| line_err(e.to_string()))?;
            let id = &line[HASH_HEX_LEN + 1..];
            db.insert(id, hash).map_err(|e| line_err(e.to_string()))?;
        }
        db.source_path = Some(path.to_path_buf());
        Ok(db)
    }
}

// Linear scan over packed words. Ties keep the first entry.
#[inline(always)]
fn scan_min_impl(q: [u64; 2], packed: &[[u64; 2]]) -> (u32, usize) {
    let mut best = u32::MAX;
    let mut best_i = 0;
    for (i, w) in packed.iter().enumerate() {
        let d = (q[0] ^ w[0]).count_ones() + (q[1] ^ w[1]).count_ones();
        if d < best {
            best = d;
            best_i = i;
        }
    }
    (best, best_i)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn scan_min_popcnt(q: [u64; 2], packed: &[[u64; 2]]) -> (u32, usize) {
    scan_min_impl(q, packed)
}

fn scan_min(q: [u64; 2], packed: &[[u64; 2]]) -> (u32, usize) {
    #[cfg(target_arch = "x86_64")]
    {
        if is_x86_feature_detected!("popcnt") {
            // Same code, compiled with the hardware popcount instruction.
            return unsafe { scan_min_popcnt(q, packed) };
        }
    }
    scan_min_impl(q, packed)
}

/// Timing and equivalence report for the scalar vs. packed search paths.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub db_size: usize,
    pub queries: usize,
    pub seed: u64,
    pub scalar_secs: f64,
    pub packed_secs: f64,
    pub paths_agree: bool,
    pub packed_mpairs_per_sec: f64,
}

/// Generates a random database and query set, times both search paths and
/// checks that they return identical (distance, id) answers.
pub fn run_bench(db_size: usize, queries: usize, seed: u64) -> Result<BenchReport> {
    use rand::{RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut random_hash = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut bytes = [0u8; 15];
        rng.fill_bytes(&mut bytes);
        Hash120::from_bytes(bytes)
    };

    let mut db = ReferenceDb::new();
    for i in 0..db_size {
        db.insert(format!("ref{i:07}"), random_hash(&mut rng))?;
    }
    let query_set: Vec<Hash120> = (0..queries).map(|_| random_hash(&mut rng)).collect();

    let t0 = Instant::now();
    let scalar: Vec<(u32, String)> = query_set
        .iter()
        .map(|q| db.min_distance(q, None).map(|(d, id)| (d, id.to_string())))
        .collect::<Result<_>>()?;
    let scalar_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let packed = db.batch_min_distance(&query_set)?;
    let packed_secs = t1.elapsed().as_secs_f64();

    Ok(BenchReport {
        db_size,
        queries,
        seed,
        scalar_secs,
        packed_secs,
        paths_agree: scalar == packed,
        packed_mpairs_per_sec: (db_size as f64 * queries as f64) / packed_secs / 1e6,
    })
}

/// Writes the judgment batch as CSV with the standard header.
pub fn write_judgments_csv<W: std::io::Write>(writer: W, judgments: &[Judgment]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["query_id", "min_distance", "nearest_id", "verdict", "threshold"])?;
    for j in judgments {
        w.write_record([
            j.query_id.as_str(),
            &j.min_distance.to_string(),
            &j.nearest_id,
            &j.verdict.to_string(),
            &j.threshold.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

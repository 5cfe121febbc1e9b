//! The 120-bit robust hash: block statistics over the preprocessed planes,
//! quantized against per-group medians.
//!
//! Feature layout (120 scalars, fixed order):
//!   64 luma means on an 8x8 block grid,
//!   16 Cb means on a 4x4 grid,
//!   16 Cr means on a 4x4 grid,
//!   16 luma population standard deviations on a 4x4 grid,
//!    8 luma means over horizontal 16-row bands.
//! Each group is quantized separately: bit = 1 iff the feature is strictly
//! above its group median, so chroma bits are not dominated by luma scale
//! and constant images hash to all zeros.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imageprep::{self, Plane, PlanarYCbCr, RasterImage, PLANE_DIM};

/// Number of bits in a hash.
pub const HASH_BITS: usize = 120;
/// Number of hex characters in the serialized form.
pub const HASH_HEX_LEN: usize = 30;

const HASH_BYTES: usize = HASH_BITS / 8;

/// An immutable 120-bit robust hash. Bit 1 is the most significant bit of
/// the first byte; serializes to exactly 30 hex characters.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hash120 {
    bytes: [u8; HASH_BYTES],
}

impl Hash120 {
    /// Builds a hash from 120 bits, first bit most significant.
    pub fn from_bits(bits: &[bool]) -> Self {
        assert_eq!(bits.len(), HASH_BITS, "need exactly 120 bits");
        let mut bytes = [0u8; HASH_BYTES];
        for (i, &bit) in bits.iter().enumerate() {
            if bit {
                bytes[i / 8] |= 0x80 >> (i % 8);
            }
        }
        Self { bytes }
    }

    pub fn from_bytes(bytes: [u8; HASH_BYTES]) -> Self {
        Self { bytes }
    }

    pub fn as_bytes(&self) -> &[u8; HASH_BYTES] {
        &self.bytes
    }

    /// The i-th bit, 0-indexed.
    pub fn bit(&self, i: usize) -> bool {
        assert!(i < HASH_BITS);
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..HASH_BITS).map(|i| self.bit(i)).collect()
    }

    /// Bitwise complement, still 120 bits.
    pub fn complement(&self) -> Self {
        let mut bytes = self.bytes;
        for b in &mut bytes {
            *b = !*b;
        }
        Self { bytes }
    }

    // Packed big-endian words for the popcount search path. The 8 bits of
    // padding in the second word are zero on both sides and cancel in XOR.
    pub(crate) fn as_words(&self) -> [u64; 2] {
        let hi = u64::from_be_bytes(self.bytes[0..8].try_into().unwrap());
        let mut tail = [0u8; 8];
        tail[..7].copy_from_slice(&self.bytes[8..15]);
        [hi, u64::from_be_bytes(tail)]
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(HASH_HEX_LEN);
        for b in &self.bytes {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    /// Parses exactly 30 hex characters (either case).
    pub fn parse_hex(s: &str) -> Result<Self> {
        if s.len() != HASH_HEX_LEN {
            return Err(Error::Parse(format!(
                "hash must be {HASH_HEX_LEN} hex chars, got {}",
                s.len()
            )));
        }
        let mut bytes = [0u8; HASH_BYTES];
        for (i, chunk) in s.as_bytes().chunks_exact(2).enumerate() {
            let pair = std::str::from_utf8(chunk).map_err(|_| bad_hex(s))?;
            bytes[i] = u8::from_str_radix(pair, 16).map_err(|_| bad_hex(s))?;
        }
        Ok(Self { bytes })
    }
}

fn bad_hex(s: &str) -> Error {
    Error::Parse(format!("invalid hex in hash {s:?}"))
}

impl fmt::Display for Hash120 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Hash120 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash120({})", self.to_hex())
    }
}

impl FromStr for Hash120 {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse_hex(s)
    }
}

/// The 120 raw features in fixed group order.
#[derive(Debug, Clone)]
pub struct FeatureVector {
    pub luma_means_8x8: Vec<f64>,
    pub cb_means_4x4: Vec<f64>,
    pub cr_means_4x4: Vec<f64>,
    pub luma_stddev_4x4: Vec<f64>,
    pub luma_band_means: Vec<f64>,
}

/// Per-block means over a g x g grid, row-major block order.
pub fn block_means(plane: &Plane, grid: usize) -> Vec<f64> {
    assert!(PLANE_DIM % grid == 0, "grid must divide 128");
    let bs = PLANE_DIM / grid;
    let mut out = Vec::with_capacity(grid * grid);
    for by in 0..grid {
        for bx in 0..grid {
            let mut sum = 0.0;
            for y in by * bs..(by + 1) * bs {
                for x in bx * bs..(bx + 1) * bs {
                    sum += plane.get(x, y);
                }
            }
            out.push(sum / (bs * bs) as f64);
        }
    }
    out
}

/// Per-block population standard deviations over a g x g grid.
pub fn block_stddevs(plane: &Plane, grid: usize) -> Vec<f64> {
    assert!(PLANE_DIM % grid == 0, "grid must divide 128");
    let bs = PLANE_DIM / grid;
    let means = block_means(plane, grid);
    let mut out = Vec::with_capacity(grid * grid);
    for by in 0..grid {
        for bx in 0..grid {
            let mean = means[by * grid + bx];
            let mut sq = 0.0;
            for y in by * bs..(by + 1) * bs {
                for x in bx * bs..(bx + 1) * bs {
                    let d = plane.get(x, y) - mean;
                    sq += d * d;
                }
            }
            out.push((sq / (bs * bs) as f64).sqrt());
        }
    }
    out
}

/// Means over `bands` horizontal stripes of equal height.
pub fn band_means(plane: &Plane, bands: usize) -> Vec<f64> {
    assert!(PLANE_DIM % bands == 0, "bands must divide 128");
    let rows = PLANE_DIM / bands;
    let mut out = Vec::with_capacity(bands);
    for b in 0..bands {
        let mut sum = 0.0;
        for y in b * rows..(b + 1) * rows {
            for x in 0..PLANE_DIM {
                sum += plane.get(x, y);
            }
        }
        out.push(sum / (rows * PLANE_DIM) as f64);
    }
    out
}

fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Quantizes values against their median: bit = 1 iff value > median
/// (strict, so all-equal inputs give all zeros). Even-length inputs use the
/// mean of the two middle order statistics.
pub fn bits_vs_median(values: &[f64]) -> Vec<bool> {
    assert!(!values.is_empty(), "no values to quantize");
    let m = median(values);
    values.iter().map(|&v| v > m).collect()
}

/// Extracts the 120 features from preprocessed planes.
pub fn extract_features(planes: &PlanarYCbCr) -> FeatureVector {
    FeatureVector {
        luma_means_8x8: block_means(&planes.y, 8),
        cb_means_4x4: block_means(&planes.cb, 4),
        cr_means_4x4: block_means(&planes.cr, 4),
        luma_stddev_4x4: block_stddevs(&planes.y, 4),
        luma_band_means: band_means(&planes.y, 8),
    }
}

/// Computes the 120-bit robust hash of an image of any size.
pub fn compute_hash(img: &RasterImage) -> Hash120 {
    let planes = imageprep::preprocess(img);
    let features = extract_features(&planes);
    let mut bits = Vec::with_capacity(HASH_BITS);
    for group in [
        &features.luma_means_8x8,
        &features.cb_means_4x4,
        &features.cr_means_4x4,
        &features.luma_stddev_4x4,
        &features.luma_band_means,
    ] {
        bits.extend(bits_vs_median(group));
    }
    Hash120::from_bits(&bits)
}

/// Decodes a PNG/JPEG stream and hashes it.
pub fn hash_bytes(bytes: &[u8], format: imageprep::ImageFormat) -> Result<Hash120> {
    Ok(compute_hash(&imageprep::decode_image(bytes, format)?))
}

/// Reads, decodes and hashes an image file (format sniffed from content).
pub fn hash_file(path: impl AsRef<std::path::Path>) -> Result<Hash120> {
    Ok(compute_hash(&imageprep::decode_file(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seeded_plane(seed: u64) -> Plane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Plane::from_vec(
            (0..PLANE_DIM * PLANE_DIM)
                .map(|_| rng.random_range(0.0..255.0))
                .collect(),
        )
    }

    #[test]
    fn block_means_constant_plane() {
        let out = block_means(&Plane::filled(42.5), 8);
        assert_eq!(out.len(), 64);
        assert!(out.iter().all(|&v| v == 42.5));
    }

    #[test]
    fn block_stats_piecewise_constant() {
        let plane = Plane::from_vec(
            (0..PLANE_DIM * PLANE_DIM)
                .map(|i| if i % PLANE_DIM < 64 { 0.0 } else { 100.0 })
                .collect(),
        );
        let means = block_means(&plane, 4);
        assert_eq!(means.iter().filter(|&&v| v == 0.0).count(), 8);
        assert_eq!(means.iter().filter(|&&v| v == 100.0).count(), 8);
        let devs = block_stddevs(&plane, 4);
        assert!(devs.iter().all(|&v| v == 0.0));
    }

    // Brute-force block statistics, written against the definition.
    fn oracle_block_stats(plane: &Plane, grid: usize) -> (Vec<f64>, Vec<f64>) {
        let bs = PLANE_DIM / grid;
        let mut means = Vec::new();
        let mut devs = Vec::new();
        for by in 0..grid {
            for bx in 0..grid {
                let mut vals = Vec::new();
                for y in 0..bs {
                    for x in 0..bs {
                        vals.push(plane.get(bx * bs + x, by * bs + y));
                    }
                }
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / vals.len() as f64;
                means.push(mean);
                devs.push(var.sqrt());
            }
        }
        (means, devs)
    }

    #[test]
    fn block_stats_match_bruteforce_oracle() {
        let plane = seeded_plane(7);
        let (om, od) = oracle_block_stats(&plane, 4);
        let means = block_means(&plane, 4);
        let devs = block_stddevs(&plane, 4);
        for i in 0..16 {
            assert!((means[i] - om[i]).abs() < 1e-9);
            assert!((devs[i] - od[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn bits_vs_median_small_cases() {
        let bits = bits_vs_median(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(bits, vec![false, false, true, true]);
        assert!(bits_vs_median(&[5.0; 10]).iter().all(|&b| !b));
    }

    #[test]
    fn bits_vs_median_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let values: Vec<f64> = (0..64).map(|_| rng.random_range(-10.0..10.0)).collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let m = (sorted[31] + sorted[32]) / 2.0;
        let expect: Vec<bool> = values.iter().map(|&v| v > m).collect();
        assert_eq!(bits_vs_median(&values), expect);
    }

    #[test]
    fn hash_is_deterministic() {
        let img = crate::forge::gen_synthetic(1, 5)[0].clone();
        assert_eq!(compute_hash(&img), compute_hash(&img));
    }

    #[test]
    fn constant_image_hashes_to_zero() {
        let img = RasterImage::from_fn(200, 150, |_, _| [90, 30, 210]);
        let h = compute_hash(&img);
        assert_eq!(h.to_hex(), "0".repeat(30));
    }

    #[test]
    fn negative_image_changes_hash() {
        let img = crate::forge::gen_synthetic(1, 11)[0].clone();
        let neg = RasterImage::from_fn(img.width(), img.height(), |x, y| {
            let [r, g, b] = img.pixel(x, y);
            [255 - r, 255 - g, 255 - b]
        });
        assert_ne!(compute_hash(&img), compute_hash(&neg));
    }

    #[test]
    fn hash_invariant_under_png_recompression() {
        let img = crate::forge::gen_synthetic(1, 23)[0].clone();
        let buf = image::RgbImage::from_raw(img.width(), img.height(), img.data().to_vec())
            .unwrap();
        let mut bytes = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut bytes, image::ImageFormat::Png).unwrap();
        let reread =
            imageprep::decode_image(&bytes.into_inner(), imageprep::ImageFormat::Png).unwrap();
        assert_eq!(compute_hash(&img), compute_hash(&reread));
    }

    #[test]
    fn hex_fixed_points() {
        let zero = Hash120::from_bits(&[false; 120]);
        assert_eq!(zero.to_hex(), "000000000000000000000000000000");
        let mut bits = [false; 120];
        bits[0] = true;
        let first = Hash120::from_bits(&bits);
        assert_eq!(first.to_hex(), "800000000000000000000000000000");
    }

    #[test]
    fn parse_hex_rejects_bad_input() {
        assert!(Hash120::parse_hex("0123").is_err());
        assert!(Hash120::parse_hex(&"g".repeat(30)).is_err());
        assert!(Hash120::parse_hex(&"0".repeat(31)).is_err());
    }

    proptest! {
        #[test]
        fn hex_round_trip(bytes in prop::array::uniform15(any::<u8>())) {
            let h = Hash120::from_bytes(bytes);
            prop_assert_eq!(Hash120::parse_hex(&h.to_hex()).unwrap(), h);
            prop_assert_eq!(h.to_hex().len(), HASH_HEX_LEN);
        }

        #[test]
        fn bits_round_trip(bytes in prop::array::uniform15(any::<u8>())) {
            let h = Hash120::from_bytes(bytes);
            prop_assert_eq!(Hash120::from_bits(&h.bits()), h);
        }
    }
}

//! Near-duplicate removal for collage images.
//!
//! Two signals are used. The first is a 64-bit difference hash (dhash)
//! compared by Hamming distance. The second is an image-level embedding
//! supplied by the detection backend, compared by cosine and euclidean
//! distance.
//!
//! The dhash is computed row-wise: the image is converted to luma
//! (`0.299 R + 0.587 G + 0.114 B`), downscaled to 9 columns by 8 rows by
//! exact area averaging, and bit `row * 8 + col` is set when
//! `pixel[row][col] < pixel[row][col + 1]`.
//!
//! Luma is kept as an integer scaled by 1000 and the area average is kept as
//! an un-normalised integer sum. Every output cell has the same total weight,
//! so comparing sums is the same as comparing averages, and the hash has no
//! floating-point rounding in it at all.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const DHASH_COLS: usize = 9;
pub const DHASH_ROWS: usize = 8;

/// A 64-bit perceptual hash. Serialised as a `0x`-prefixed, 16 digit hex
/// string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash64(pub u64);

impl Hash64 {
    pub fn distance(self, other: Hash64) -> u32 {
        hamming_distance(self, other)
    }
}

impl fmt::Display for Hash64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:016x}", self.0)
    }
}

impl FromStr for Hash64 {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let digits = s.strip_prefix("0x").unwrap_or(s);
        u64::from_str_radix(digits, 16).map(Hash64)
    }
}

impl Serialize for Hash64 {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Hash64 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn hamming_distance(a: Hash64, b: Hash64) -> u32 {
    (a.0 ^ b.0).count_ones()
}

/// Grayscale raster with luma stored as `1000 * luma`, so that RGB input
/// converts without rounding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LumaImage {
    width: usize,
    height: usize,
    data: Vec<u32>,
}

impl LumaImage {
    /// `data` is row-major, already scaled by 1000. Returns `None` for a
    /// zero-sized image or a buffer of the wrong length.
    pub fn from_scaled(width: usize, height: usize, data: Vec<u32>) -> Option<Self> {
        (width > 0 && height > 0 && data.len() == width * height).then_some(LumaImage { width, height, data })
    }

    /// 8-bit grayscale input, row-major.
    pub fn from_gray8(width: usize, height: usize, gray: &[u8]) -> Option<Self> {
        Self::from_scaled(width, height, gray.iter().map(|&v| u32::from(v) * 1000).collect())
    }

    /// 8-bit RGB input, row-major, three bytes per pixel.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Option<Self> {
        if rgb.len() != width * height * 3 {
            return None;
        }
        let data = rgb
            .chunks_exact(3)
            .map(|p| 299 * u32::from(p[0]) + 587 * u32::from(p[1]) + 114 * u32::from(p[2]))
            .collect();
        Self::from_scaled(width, height, data)
    }

    pub fn decode(bytes: &[u8], origin: &Path) -> Result<Self> {
        let img = image::load_from_memory(bytes).map_err(|e| Error::ImageDecode {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::from_rgb8(w as usize, h as usize, rgb.as_raw()).ok_or_else(|| Error::ImageDecode {
            path: origin.to_path_buf(),
            message: "image has zero width or height".into(),
        })
    }

    pub fn open(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::ImageDecode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::decode(&bytes, path)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn at(&self, x: usize, y: usize) -> u32 {
        self.data[y * self.width + x]
    }
}

/// Overlaps between source pixels and output cells along one axis, in units
/// where a source pixel spans `cells` units and an output cell spans `len`.
fn axis_weights(len: usize, cells: usize) -> Vec<Vec<(usize, u64)>> {
    (0..len)
        .map(|i| {
            let lo = i * cells;
            let hi = lo + cells;
            let first = lo / len;
            let last = (hi - 1) / len;
            (first..=last)
                .filter_map(|c| {
                    let overlap = hi.min((c + 1) * len).saturating_sub(lo.max(c * len));
                    (overlap > 0).then_some((c, overlap as u64))
                })
                .collect()
        })
        .collect()
}

/// Area-averaged 9x8 downscale. Each cell holds the weighted luma sum over
/// a constant total weight of `width * height` (times the 1000 luma scale).
pub fn downscale_area(image: &LumaImage) -> [[u64; DHASH_COLS]; DHASH_ROWS] {
    let xw = axis_weights(image.width, DHASH_COLS);
    let yw = axis_weights(image.height, DHASH_ROWS);
    let mut grid = [[0u64; DHASH_COLS]; DHASH_ROWS];
    let mut row_acc = [0u64; DHASH_COLS];
    for (y, ys) in yw.iter().enumerate() {
        row_acc.fill(0);
        for (x, xs) in xw.iter().enumerate() {
            let v = u64::from(image.at(x, y));
            for &(c, w) in xs {
                row_acc[c] += w * v;
            }
        }
        for &(r, w) in ys {
            for c in 0..DHASH_COLS {
                grid[r][c] += w * row_acc[c];
            }
        }
    }
    grid
}

/// Row-wise difference hash of an already-downscaled grid.
pub fn dhash_from_grid<T: PartialOrd>(grid: &[[T; DHASH_COLS]; DHASH_ROWS]) -> Hash64 {
    let mut bits = 0u64;
    for (row, cells) in grid.iter().enumerate() {
        for (col, pair) in cells.windows(2).enumerate() {
            if pair[0] < pair[1] {
                bits |= 1 << (row * 8 + col);
            }
        }
    }
    Hash64(bits)
}

pub fn compute_dhash(image: &LumaImage) -> Hash64 {
    dhash_from_grid(&downscale_area(image))
}

/// Decodes and hashes an image file.
pub fn dhash_file(path: &Path) -> Result<Hash64> {
    LumaImage::open(path).map(|img| compute_dhash(&img))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMetric {
    Cosine,
    Euclidean,
}

/// Euclidean distance, or cosine distance `1 - cos(e1, e2)` clamped at zero.
pub fn embedding_pair_distance(e1: &[f64], e2: &[f64], metric: EmbeddingMetric) -> Result<f64> {
    if e1.len() != e2.len() {
        return Err(Error::Dimension {
            expected: e1.len(),
            found: e2.len(),
        });
    }
    match metric {
        EmbeddingMetric::Euclidean => Ok(euclidean(e1, e2)),
        EmbeddingMetric::Cosine => {
            let (mut dot, mut n1, mut n2) = (0.0, 0.0, 0.0);
            for (a, b) in e1.iter().zip(e2) {
                dot += a * b;
                n1 += a * a;
                n2 += b * b;
            }
            if n1 == 0.0 || n2 == 0.0 {
                return Err(Error::DegenerateVector);
            }
            Ok((1.0 - dot / (n1.sqrt() * n2.sqrt())).max(0.0))
        }
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingCombine {
    /// Cosine and euclidean thresholds must both hold.
    #[default]
    BothRequired,
    /// Either threshold holding is enough.
    EitherSuffices,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DedupCriteria {
    pub hamming_threshold: f64,
    pub cosine_threshold: f64,
    pub euclidean_threshold: f64,
    #[serde(default)]
    pub embedding_combine: EmbeddingCombine,
}

impl Default for DedupCriteria {
    fn default() -> Self {
        DedupCriteria {
            hamming_threshold: 1.2,
            cosine_threshold: 0.0035,
            euclidean_threshold: 25.0,
            embedding_combine: EmbeddingCombine::BothRequired,
        }
    }
}

impl DedupCriteria {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("hamming_threshold", self.hamming_threshold),
            ("cosine_threshold", self.cosine_threshold),
            ("euclidean_threshold", self.euclidean_threshold),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        Ok(())
    }

    pub fn hash_match(&self, a: Hash64, b: Hash64) -> bool {
        f64::from(hamming_distance(a, b)) <= self.hamming_threshold
    }

    /// Applies the embedding rule. Pairs whose distance is undefined
    /// (mismatched lengths, zero vectors under cosine) never match.
    pub fn embedding_match(&self, a: &[f64], b: &[f64]) -> bool {
        let cos = embedding_pair_distance(a, b, EmbeddingMetric::Cosine)
            .map(|d| d <= self.cosine_threshold)
            .unwrap_or(false);
        let euc = embedding_pair_distance(a, b, EmbeddingMetric::Euclidean)
            .map(|d| d <= self.euclidean_threshold)
            .unwrap_or(false);
        match self.embedding_combine {
            EmbeddingCombine::BothRequired => cos && euc,
            EmbeddingCombine::EitherSuffices => cos || euc,
        }
    }
}

/// What dedup needs to know about one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupItem {
    pub image_id: String,
    pub dhash: Hash64,
    pub embedding: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemovalReason {
    Hash,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub removed_id: String,
    pub kept_id: String,
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DedupOutcome {
    pub kept: Vec<String>,
    pub removed: Vec<Removal>,
}

/// All index pairs `(i, j)`, `i < j`, whose Hamming distance is within
/// `threshold`, in lexicographic order. Rows are scanned in parallel.
pub fn hamming_pairs_within(hashes: &[Hash64], threshold: f64) -> Vec<(usize, usize, u32)> {
    hashes
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, &a)| {
            hashes[i + 1..].iter().enumerate().filter_map(move |(k, &b)| {
                let d = hamming_distance(a, b);
                (f64::from(d) <= threshold).then_some((i, i + 1 + k, d))
            })
        })
        .collect()
}

/// Greedy near-duplicate removal.
///
/// Images are visited in ascending `image_id` order. An image is removed
/// when it matches an already kept image under the hash rule or the
/// embedding rule; its representative is the earliest such kept image.
pub fn dedup(images: &[DedupItem], criteria: &DedupCriteria) -> DedupOutcome {
    let mut order: Vec<&DedupItem> = images.iter().collect();
    order.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let hashes: Vec<Hash64> = order.iter().map(|i| i.dhash).collect();
    // hash_neighbours[j] lists earlier positions i < j within the hash threshold
    let mut hash_neighbours: Vec<Vec<usize>> = vec![Vec::new(); order.len()];
    for (i, j, _) in hamming_pairs_within(&hashes, criteria.hamming_threshold) {
        hash_neighbours[j].push(i);
    }

    let mut kept_pos: Vec<usize> = Vec::new();
    let mut is_kept = vec![false; order.len()];
    let mut outcome = DedupOutcome::default();
    for (pos, item) in order.iter().enumerate() {
        let hit = kept_pos.iter().find_map(|&k| {
            if hash_neighbours[pos].binary_search(&k).is_ok() {
                return Some((k, RemovalReason::Hash));
            }
            match (&item.embedding, &order[k].embedding) {
                (Some(a), Some(b)) if criteria.embedding_match(a, b) => Some((k, RemovalReason::Embedding)),
                _ => None,
            }
        });
        match hit {
            Some((k, reason)) => outcome.removed.push(Removal {
                removed_id: item.image_id.clone(),
                kept_id: order[k].image_id.clone(),
                reason,
            }),
            None => {
                is_kept[pos] = true;
                kept_pos.push(pos);
                outcome.kept.push(item.image_id.clone());
            }
        }
    }
    debug_assert_eq!(is_kept.iter().filter(|k| **k).count(), outcome.kept.len());
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_image_hashes_to_zero() {
        for (w, h) in [(9, 8), (1, 1), (37, 23), (640, 480)] {
            let img = LumaImage::from_gray8(w, h, &vec![128u8; w * h]).unwrap();
            assert_eq!(compute_dhash(&img), Hash64(0), "{w}x{h}");
        }
    }

    #[test]
    fn increasing_rows_hash_to_all_ones() {
        for (w, h) in [(9, 8), (90, 80), (200, 13)] {
            let gray: Vec<u8> = (0..h).flat_map(|_| (0..w).map(|x| (x * 255 / (w - 1)) as u8)).collect();
            let img = LumaImage::from_gray8(w, h, &gray).unwrap();
            assert_eq!(compute_dhash(&img), Hash64(u64::MAX), "{w}x{h}");
        }
    }

    #[test]
    fn native_size_downscale_is_identity() {
        let gray: Vec<u8> = (0..72).map(|i| (i * 37 % 251) as u8).collect();
        let img = LumaImage::from_gray8(9, 8, &gray).unwrap();
        let grid = downscale_area(&img);
        for r in 0..8 {
            for c in 0..9 {
                // weight per cell is 1*1 in scaled units (w=9 spans, h=8 spans)
                assert_eq!(grid[r][c], u64::from(gray[r * 9 + c]) * 1000 * 72);
            }
        }
    }

    #[test]
    fn area_average_of_2x_image_matches_block_means() {
        // 18x16 image: each output cell averages a 2x2 block.
        let gray: Vec<u8> = (0..18 * 16).map(|i| (i * 97 % 256) as u8).collect();
        let img = LumaImage::from_gray8(18, 16, &gray).unwrap();
        let grid = downscale_area(&img);
        for r in 0..8 {
            for c in 0..9 {
                let block: u64 = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|(dy, dx)| u64::from(gray[(2 * r + dy) * 18 + 2 * c + dx]))
                    .sum();
                // total cell weight is 18*16 units; each source pixel weight 9*8 = 72
                assert_eq!(grid[r][c], block * 1000 * 72);
            }
        }
    }

    #[test]
    fn rgb_luma_weights() {
        let img = LumaImage::from_rgb8(1, 1, &[10, 20, 30]).unwrap();
        assert_eq!(img.at(0, 0), 299 * 10 + 587 * 20 + 114 * 30);
    }

    #[test]
    fn decode_rejects_garbage() {
        let err = LumaImage::decode(b"not an image", Path::new("x.png")).unwrap_err();
        assert!(matches!(err, Error::ImageDecode { .. }));
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming_distance(Hash64(0xdead_beef), Hash64(0xdead_beef)), 0);
        assert_eq!(hamming_distance(Hash64(0), Hash64(u64::MAX)), 64);
    }

    #[test]
    fn hash_string_round_trip() {
        let h = Hash64(0x00ff_0000_1234_abcd);
        assert_eq!(h.to_string(), "0x00ff00001234abcd");
        assert_eq!(h.to_string().parse::<Hash64>().unwrap(), h);
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(serde_json::from_str::<Hash64>(&json).unwrap(), h);
    }

    #[test]
    fn embedding_distance_examples() {
        let v = [1.0, 2.0, 3.0];
        assert_eq!(
            embedding_pair_distance(&v, &v, EmbeddingMetric::Euclidean).unwrap(),
            0.0
        );
        let d = embedding_pair_distance(&[1.0, 0.0], &[0.0, 1.0], EmbeddingMetric::Cosine).unwrap();
        assert_eq!(d, 1.0);
        assert!(matches!(
            embedding_pair_distance(&[1.0], &[1.0, 2.0], EmbeddingMetric::Euclidean),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            embedding_pair_distance(&[0.0, 0.0], &[1.0, 2.0], EmbeddingMetric::Cosine),
            Err(Error::DegenerateVector)
        ));
    }

    #[test]
    fn criteria_defaults_and_validation() {
        let c = DedupCriteria::default();
        assert_eq!(c.hamming_threshold, 1.2);
        assert_eq!(c.cosine_threshold, 0.0035);
        assert_eq!(c.euclidean_threshold, 25.0);
        assert_eq!(c.embedding_combine, EmbeddingCombine::BothRequired);
        assert!(c.validate().is_ok());
        let bad = DedupCriteria {
            cosine_threshold: -0.1,
            ..c
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    fn item(id: &str, h: u64) -> DedupItem {
        DedupItem {
            image_id: id.into(),
            dhash: Hash64(h),
            embedding: None,
        }
    }

    #[test]
    fn dedup_empty() {
        assert_eq!(dedup(&[], &DedupCriteria::default()), DedupOutcome::default());
    }

    #[test]
    fn identical_images_keep_one() {
        let out = dedup(&[item("b", 42), item("a", 42)], &DedupCriteria::default());
        assert_eq!(out.kept, vec!["a"]);
        assert_eq!(
            out.removed,
            vec![Removal {
                removed_id: "b".into(),
                kept_id: "a".into(),
                reason: RemovalReason::Hash
            }]
        );
    }

    #[test]
    fn one_bit_is_duplicate_two_bits_is_not() {
        let c = DedupCriteria::default();
        let out = dedup(&[item("a", 0), item("b", 1), item("c", 0b110)], &c);
        assert_eq!(out.kept, vec!["a", "c"]);
        assert_eq!(out.removed.len(), 1);
    }

    #[test]
    fn embedding_rule_modes() {
        let a = DedupItem {
            image_id: "a".into(),
            dhash: Hash64(0),
            embedding: Some(vec![10.0, 0.0]),
        };
        // same direction (cosine 0) but 30 apart in euclidean distance
        let b = DedupItem {
            image_id: "b".into(),
            dhash: Hash64(u64::MAX),
            embedding: Some(vec![40.0, 0.0]),
        };
        let both = DedupCriteria::default();
        assert_eq!(dedup(&[a.clone(), b.clone()], &both).kept.len(), 2);
        let either = DedupCriteria {
            embedding_combine: EmbeddingCombine::EitherSuffices,
            ..both
        };
        let out = dedup(&[a, b], &either);
        assert_eq!(out.kept, vec!["a"]);
        assert_eq!(out.removed[0].reason, RemovalReason::Embedding);
    }

    proptest! {
        #[test]
        fn hamming_matches_bit_loop(a in any::<u64>(), b in any::<u64>()) {
            let oracle = (0..64).filter(|k| (a >> k) & 1 != (b >> k) & 1).count() as u32;
            prop_assert_eq!(hamming_distance(Hash64(a), Hash64(b)), oracle);
        }

        #[test]
        fn dhash_invariant_under_png_reencode(gray in proptest::collection::vec(any::<u8>(), 20 * 15)) {
            let img = LumaImage::from_gray8(20, 15, &gray).unwrap();
            let buf = image::GrayImage::from_raw(20, 15, gray.clone()).unwrap();
            let mut png = Vec::new();
            buf.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png).unwrap();
            let decoded = LumaImage::decode(&png, Path::new("mem.png")).unwrap();
            prop_assert_eq!(compute_dhash(&img), compute_dhash(&decoded));
        }

        #[test]
        fn embedding_distances_match_naive(v in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..40)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let mut sq = 0.0;
            for i in 0..a.len() { sq += (a[i] - b[i]).powi(2); }
            let e = embedding_pair_distance(&a, &b, EmbeddingMetric::Euclidean).unwrap();
            prop_assert!((e - sq.sqrt()).abs() < 1e-9);
            let dot: f64 = (0..a.len()).map(|i| a[i] * b[i]).sum();
            let na: f64 = (0..a.len()).map(|i| a[i] * a[i]).sum::<f64>().sqrt();
            let nb: f64 = (0..b.len()).map(|i| b[i] * b[i]).sum::<f64>().sqrt();
            if na > 0.0 && nb > 0.0 {
                let c = embedding_pair_distance(&a, &b, EmbeddingMetric::Cosine).unwrap();
                prop_assert!((c - (1.0 - dot / (na * nb)).max(0.0)).abs() < 1e-9);
            }
        }

        #[test]
        fn dedup_is_idempotent(hashes in proptest::collection::vec(0u64..64, 0..40)) {
            // small value range plants plenty of near-duplicates
            let items: Vec<DedupItem> = hashes.iter().enumerate().map(|(i, &h)| item(&format!("img{i:03}"), h)).collect();
            let c = DedupCriteria::default();
            let out = dedup(&items, &c);
            prop_assert_eq!(out.kept.len() + out.removed.len(), items.len());
            let kept: Vec<DedupItem> = items.iter().filter(|i| out.kept.contains(&i.image_id)).cloned().collect();
            let again = dedup(&kept, &c);
            prop_assert!(again.removed.is_empty());
            for r in &out.removed {
                let a = items.iter().find(|i| i.image_id == r.removed_id).unwrap();
                let b = items.iter().find(|i| i.image_id == r.kept_id).unwrap();
                prop_assert!(c.hash_match(a.dhash, b.dhash));
                prop_assert!(out.kept.contains(&r.kept_id));
            }
        }
    }
}

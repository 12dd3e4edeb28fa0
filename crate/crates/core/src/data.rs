//! Two-modality datasets, client partitioning and paired/unpaired splits.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// One co-registered image pair, both `[1,H,W]` in `[0,1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub modality_a: Tensor,
    pub modality_b: Tensor,
}

/// 3×3 mean filter with edge replication.
pub fn box_blur3(image: &Tensor) -> Tensor {
    let s = image.shape();
    let (h, w) = (s[1], s[2]);
    let src = image.data();
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        src[y * w + x]
    };
    Tensor::from_fn(s, |i| {
        let (y, x) = ((i / w) as isize, (i % w) as isize);
        let mut acc = 0.0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                acc += at(y + dy, x + dx);
            }
        }
        acc / 9.0
    })
}

/// The fixed A→B modality transform of the synthetic data: `blur3(1 − a)`.
pub fn synthetic_transform(a: &Tensor) -> Tensor {
    box_blur3(&a.map(|v| 1.0 - v))
}

/// `n` samples whose modality A is a clamped sum of 2–4 Gaussian blobs and
/// whose modality B is [`synthetic_transform`] of A.
pub fn synth_dataset(n: usize, image_size: usize, seed: u64) -> Result<Vec<Sample>> {
    if n == 0 || image_size == 0 {
        return Err(Error::InvalidArgument(format!(
            "synthetic dataset needs n >= 1 and image_size >= 1, got n={n} size={image_size}"
        )));
    }
    let size = image_size as f64;
    Ok((0..n)
        .map(|id| {
            let mut rng = SeededRng::derive(seed, &[0x626c_6f62, id as u64]);
            let blobs: Vec<[f64; 4]> = (0..2 + rng.below(3))
                .map(|_| {
                    [
                        rng.uniform_range(0.5, 1.0),
                        rng.uniform_range(0.15 * size, 0.85 * size),
                        rng.uniform_range(0.15 * size, 0.85 * size),
                        rng.uniform_range(size / 16.0, size / 5.0),
                    ]
                })
                .collect();
            let a = Tensor::from_fn(&[1, image_size, image_size], |i| {
                let (y, x) = ((i / image_size) as f64 + 0.5, (i % image_size) as f64 + 0.5);
                let v: f64 = blobs
                    .iter()
                    .map(|[amp, cx, cy, s]| {
                        amp * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp()
                    })
                    .sum();
                v.clamp(0.0, 1.0)
            });
            let b = synthetic_transform(&a);
            Sample {
                id,
                modality_a: a,
                modality_b: b,
            }
        })
        .collect())
}

/// Seeded hold-out: returns `(train, test)` with `round(fraction·N)` test samples.
pub fn holdout(
    samples: Vec<Sample>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must be in [0,1), got {test_fraction}"
        )));
    }
    let n_test = (test_fraction * samples.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    SeededRng::derive(seed, &[0x7465_7374]).shuffle(&mut order);
    let mut is_test = vec![false; samples.len()];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = samples.into_iter().zip(is_test).partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(s, _)| s).collect(),
        test.into_iter().map(|(s, _)| s).collect(),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    Average,
    Gradual,
    Extreme,
    Explicit,
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Average => "average",
            SchemeKind::Gradual => "gradual",
            SchemeKind::Extreme => "extreme",
            SchemeKind::Explicit => "explicit",
        })
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "average" => Ok(SchemeKind::Average),
            "gradual" => Ok(SchemeKind::Gradual),
            "extreme" => Ok(SchemeKind::Extreme),
            "explicit" => Ok(SchemeKind::Explicit),
            other => Err(format!(
                "unknown scheme `{other}` (expected average, gradual, extreme or explicit)"
            )),
        }
    }
}

/// Per-client data proportions.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionScheme {
    kind: SchemeKind,
    proportions: Vec<f64>,
}

impl PartitionScheme {
    pub fn explicit(proportions: Vec<f64>) -> Result<Self> {
        Self::checked(SchemeKind::Explicit, proportions)
    }

    fn checked(kind: SchemeKind, proportions: Vec<f64>) -> Result<Self> {
        if proportions.is_empty() {
            return Err(Error::InvalidArgument(
                "a scheme needs at least one client".into(),
            ));
        }
        if proportions.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "proportions must be positive, got {proportions:?}"
            )));
        }
        let sum: f64 = proportions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "proportions must sum to 1, got {sum} from {proportions:?}"
            )));
        }
        Ok(PartitionScheme { kind, proportions })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn proportions(&self) -> &[f64] {
        &self.proportions
    }

    pub fn n_clients(&self) -> usize {
        self.proportions.len()
    }
}

/// Named proportion rows for 2, 4 and 8 clients. `average` also accepts any
/// other positive client count.
pub fn make_scheme(kind: SchemeKind, n_clients: usize) -> Result<PartitionScheme> {
    let rep = |v: f64, n: usize| std::iter::repeat_n(v, n);
    let proportions: Vec<f64> = match (kind, n_clients) {
        (SchemeKind::Average, n) if n > 0 => rep(1.0 / n as f64, n).collect(),
        (SchemeKind::Gradual, 2) => vec![0.6, 0.4],
        (SchemeKind::Gradual, 4) => vec![0.4, 0.3, 0.2, 0.1],
        (SchemeKind::Gradual, 8) => [0.3, 0.2]
            .into_iter()
            .chain(rep(0.1, 4))
            .chain(rep(0.05, 2))
            .collect(),
        (SchemeKind::Extreme, 2) => vec![0.9, 0.1],
        (SchemeKind::Extreme, 4) => std::iter::once(0.7).chain(rep(0.1, 3)).collect(),
        (SchemeKind::Extreme, 8) => std::iter::once(0.3).chain(rep(0.1, 7)).collect(),
        (kind, n) => {
            return Err(Error::InvalidArgument(format!(
                "scheme `{kind}` is not defined for {n} clients; supply explicit proportions"
            )))
        }
    };
    PartitionScheme::checked(kind, proportions)
}

/// Largest-remainder apportionment of `n` items; ties go to the lower index.
pub fn apportion(proportions: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = proportions.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&i, &j| {
        let (fi, fj) = (exact[i] - exact[i].floor(), exact[j] - exact[j].floor());
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    for &k in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// Disjoint, exhaustive assignment of `ids` to clients.
pub fn partition(ids: &[usize], scheme: &PartitionScheme, seed: u64) -> Result<Vec<Vec<usize>>> {
    let k = scheme.n_clients();
    if ids.len() < k {
        return Err(Error::InvalidArgument(format!(
            "cannot partition {} samples across {k} clients",
            ids.len()
        )));
    }
    let mut shuffled = ids.to_vec();
    SeededRng::derive(seed, &[0x7061_7274]).shuffle(&mut shuffled);
    let mut rest = shuffled.as_slice();
    Ok(apportion(scheme.proportions(), ids.len())
        .into_iter()
        .map(|c| {
            let (head, tail) = rest.split_at(c);
            rest = tail;
            head.to_vec()
        })
        .collect())
}

/// A client's private data: true pairs, plus unpaired A and B images whose
/// positions never line up with their true partner (for two or more).
#[derive(Clone, Debug, Default)]
pub struct ClientDataset {
    pub paired: Vec<Arc<Sample>>,
    pub unpaired_a: Vec<Arc<Sample>>,
    pub unpaired_b: Vec<Arc<Sample>>,
}

/// One training item: A and B images in `[0,1]` and whether they truly correspond.
#[derive(Clone, Copy, Debug)]
pub struct TrainItem<'a> {
    pub a: &'a Tensor,
    pub b: &'a Tensor,
    pub paired: bool,
}

impl ClientDataset {
    pub fn len(&self) -> usize {
        self.paired.len() + self.unpaired_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Paired items first, then unpaired positions.
    pub fn items(&self) -> Vec<TrainItem<'_>> {
        let paired = self.paired.iter().map(|s| TrainItem {
            a: &s.modality_a,
            b: &s.modality_b,
            paired: true,
        });
        let unpaired = self
            .unpaired_a
            .iter()
            .zip(&self.unpaired_b)
            .map(|(a, b)| TrainItem {
                a: &a.modality_a,
                b: &b.modality_b,
                paired: false,
            });
        paired.chain(unpaired).collect()
    }

    pub fn sample_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .paired
            .iter()
            .chain(&self.unpaired_a)
            .map(|s| s.id)
            .collect();
        ids.sort_unstable();
        ids
    }
}

/// Keeps `round(ratio·m)` seeded-random samples as pairs; the rest keep their
/// A images in order and receive a shuffled arrangement of their B images with
/// every fixed point swapped away.
pub fn split_paired_unpaired(
    samples: &[Arc<Sample>],
    paired_ratio: f64,
    seed: u64,
) -> Result<ClientDataset> {
    if !(0.0..=1.0).contains(&paired_ratio) {
        return Err(Error::InvalidArgument(format!(
            "paired ratio must be in [0,1], got {paired_ratio}"
        )));
    }
    let m = samples.len();
    let n_paired = (paired_ratio * m as f64).round() as usize;
    let mut rng = SeededRng::derive(seed, &[0x7061_6972]);
    let mut order: Vec<usize> = (0..m).collect();
    rng.shuffle(&mut order);
    let (paired_idx, rest) = order.split_at(n_paired);

    let mut perm: Vec<usize> = (0..rest.len()).collect();
    rng.shuffle(&mut perm);
    if perm.len() >= 2 {
        // a swap with the next slot never creates a new fixed point
        for i in 0..perm.len() {
            if perm[i] == i {
                let j = (i + 1) % perm.len();
                perm.swap(i, j);
            }
        }
    }
    Ok(ClientDataset {
        paired: paired_idx.iter().map(|&i| samples[i].clone()).collect(),
        unpaired_a: rest.iter().map(|&i| samples[i].clone()).collect(),
        unpaired_b: perm.iter().map(|&p| samples[rest[p]].clone()).collect(),
    })
}

fn png_names(dir: &Path) -> Result<BTreeMap<String, std::path::PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                out.insert(name.to_string(), path);
            }
        }
    }
    Ok(out)
}

fn load_gray(path: &Path, image_size: usize) -> Result<Tensor> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f64> = match img {
        image::DynamicImage::ImageLuma8(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
        image::DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other => {
            return Err(Error::Data(format!(
                "{} is not grayscale ({:?})",
                path.display(),
                other.color()
            )))
        }
    };
    let side = w.min(h);
    let (x0, y0) = ((w - side) / 2, (h - side) / 2);
    let cropped: Vec<f64> = (0..side * side)
        .map(|i| pixels[(y0 + i / side) * w + x0 + i % side])
        .collect();
    Ok(resize_bilinear(&cropped, side, image_size))
}

/// Bilinear resize of a square image with half-pixel centres and edge clamping.
fn resize_bilinear(src: &[f64], side: usize, out: usize) -> Tensor {
    if side == out {
        return Tensor::new(vec![1, out, out], src.to_vec()).expect("square image");
    }
    let scale = side as f64 / out as f64;
    let coord = |o: usize| {
        let c = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (side - 1) as f64);
        let lo = c.floor() as usize;
        (lo, (lo + 1).min(side - 1), c - lo as f64)
    };
    Tensor::from_fn(&[1, out, out], |i| {
        let (y0, y1, fy) = coord(i / out);
        let (x0, x1, fx) = coord(i % out);
        let top = src[y0 * side + x0] * (1.0 - fx) + src[y0 * side + x1] * fx;
        let bottom = src[y1 * side + x0] * (1.0 - fx) + src[y1 * side + x1] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Reads `modality_a/*.png` and `modality_b/*.png` under `path`, matching
/// files by name. Images are center-cropped to a square, scaled to `[0,1]`
/// and bilinearly resized to `image_size`. Ids follow sorted file names.
pub fn load_image_dir(path: &Path, image_size: usize) -> Result<Vec<Sample>> {
    if image_size == 0 {
        return Err(Error::InvalidArgument("image size must be positive".into()));
    }
    let a = png_names(&path.join("modality_a"))?;
    let b = png_names(&path.join("modality_b"))?;
    let mut orphans: Vec<String> = a
        .keys()
        .filter(|k| !b.contains_key(*k))
        .map(|k| format!("modality_a/{k}"))
        .collect();
    orphans.extend(
        b.keys()
            .filter(|k| !a.contains_key(*k))
            .map(|k| format!("modality_b/{k}")),
    );
    if !orphans.is_empty() {
        return Err(Error::Data(format!(
            "unmatched image files: {}",
            orphans.join(", ")
        )));
    }
    a.iter()
        .enumerate()
        .map(|(id, (name, pa))| {
            Ok(Sample {
                id,
                modality_a: load_gray(pa, image_size)?,
                modality_b: load_gray(&b[name], image_size)?,
            })
        })
        .collect()
}

/// One manifest row: which client holds a sample and whether it is paired.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub sample_id: usize,
    pub client_id: usize,
    pub paired: bool,
}

pub fn manifest_rows(clients: &[ClientDataset]) -> Vec<ManifestRow> {
    let mut rows: Vec<ManifestRow> = clients
        .iter()
        .enumerate()
        .flat_map(|(client_id, ds)| {
            let paired = ds.paired.iter().map(move |s| ManifestRow {
                sample_id: s.id,
                client_id,
                paired: true,
            });
            let unpaired = ds.unpaired_a.iter().map(move |s| ManifestRow {
                sample_id: s.id,
                client_id,
                paired: false,
            });
            paired.chain(unpaired)
        })
        .collect();
    rows.sort_by_key(|r| r.sample_id);
    rows
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_id", "client_id", "paired"])?;
    for r in rows {
        w.write_record([
            r.sample_id.to_string(),
            r.client_id.to_string(),
            (r.paired as u8).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let field = |i: usize| -> Result<usize> {
                rec.get(i)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Data(format!("bad manifest row {rec:?}")))
            };
            Ok(ManifestRow {
                sample_id: field(0)?,
                client_id: field(1)?,
                paired: field(2)? == 1,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arcs(samples: Vec<Sample>) -> Vec<Arc<Sample>> {
        samples.into_iter().map(Arc::new).collect()
    }

    #[test]
    fn synthetic_is_deterministic_and_in_range() {
        let a = synth_dataset(12, 16, 5).unwrap();
        assert_eq!(a, synth_dataset(12, 16, 5).unwrap());
        assert_ne!(a, synth_dataset(12, 16, 6).unwrap());
        for s in &a {
            for v in s.modality_a.data().iter().chain(s.modality_b.data()) {
                assert!((0.0..=1.0).contains(v));
            }
        }
    }

    #[test]
    fn modality_b_matches_independent_blur_oracle() {
        let n = 12usize;
        for s in synth_dataset(6, n, 2).unwrap() {
            // explicitly padded copy of 1 − a with replicated borders
            let inv: Vec<f64> = s.modality_a.data().iter().map(|v| 1.0 - v).collect();
            let mut padded = vec![0.0; (n + 2) * (n + 2)];
            for y in 0..n + 2 {
                for x in 0..n + 2 {
                    let (sy, sx) = (
                        y.saturating_sub(1).min(n - 1),
                        x.saturating_sub(1).min(n - 1),
                    );
                    padded[y * (n + 2) + x] = inv[sy * n + sx];
                }
            }
            for y in 0..n {
                for x in 0..n {
                    let window: f64 = (0..9)
                        .map(|k| padded[(y + k / 3) * (n + 2) + x + k % 3])
                        .sum();
                    assert!((s.modality_b.data()[y * n + x] - window / 9.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn table_rows() {
        assert_eq!(
            make_scheme(SchemeKind::Average, 8).unwrap().proportions(),
            &[0.125; 8]
        );
        assert_eq!(
            make_scheme(SchemeKind::Extreme, 2).unwrap().proportions(),
            &[0.9, 0.1]
        );
        assert_eq!(
            make_scheme(SchemeKind::Gradual, 8).unwrap().proportions(),
            &[0.3, 0.2, 0.1, 0.1, 0.1, 0.1, 0.05, 0.05]
        );
        assert_eq!(
            make_scheme(SchemeKind::Gradual, 2).unwrap().proportions(),
            &[0.6, 0.4]
        );
        assert_eq!(
            make_scheme(SchemeKind::Extreme, 4).unwrap().proportions(),
            &[0.7, 0.1, 0.1, 0.1]
        );
        assert!(make_scheme(SchemeKind::Gradual, 3).is_err());
        assert!(make_scheme(SchemeKind::Explicit, 2).is_err());
        assert!(PartitionScheme::explicit(vec![0.5, 0.4]).is_err());
        assert!(PartitionScheme::explicit(vec![1.2, -0.2]).is_err());
    }

    #[test]
    fn gradual_6000_sizes() {
        let ids: Vec<usize> = (0..6000).collect();
        let parts = partition(&ids, &make_scheme(SchemeKind::Gradual, 4).unwrap(), 1).unwrap();
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        assert_eq!(sizes, [2400, 1800, 1200, 600]);
    }

    #[test]
    fn one_sample_per_client() {
        let ids: Vec<usize> = (0..8).collect();
        let parts = partition(&ids, &make_scheme(SchemeKind::Average, 8).unwrap(), 3).unwrap();
        assert!(parts.iter().all(|p| p.len() == 1));
        assert!(partition(&ids[..3], &make_scheme(SchemeKind::Average, 4).unwrap(), 3).is_err());
    }

    #[test]
    fn apportion_breaks_ties_low_index_first() {
        assert_eq!(apportion(&[0.5, 0.5], 3), [2, 1]);
        assert_eq!(apportion(&[0.25; 4], 2), [1, 1, 0, 0]);
    }

    #[test]
    fn half_paired() {
        let s = arcs(synth_dataset(100, 4, 1).unwrap());
        let ds = split_paired_unpaired(&s, 0.5, 9).unwrap();
        assert_eq!(
            (ds.paired.len(), ds.unpaired_a.len(), ds.unpaired_b.len()),
            (50, 50, 50)
        );
        assert_eq!(ds.sample_ids(), (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn all_paired() {
        let s = arcs(synth_dataset(10, 4, 1).unwrap());
        let ds = split_paired_unpaired(&s, 1.0, 9).unwrap();
        assert_eq!(ds.paired.len(), 10);
        assert!(ds.unpaired_a.is_empty() && ds.unpaired_b.is_empty());
        assert!(split_paired_unpaired(&s, 1.1, 9).is_err());
    }

    #[test]
    fn unpaired_is_a_derangement() {
        let s = arcs(synth_dataset(10, 4, 1).unwrap());
        for seed in 0..50 {
            let ds = split_paired_unpaired(&s, 0.0, seed).unwrap();
            assert_eq!(ds.unpaired_a.len(), 10);
            for (a, b) in ds.unpaired_a.iter().zip(&ds.unpaired_b) {
                assert_ne!(a.id, b.id, "seed {seed}");
            }
            let mut b_ids: Vec<usize> = ds.unpaired_b.iter().map(|s| s.id).collect();
            b_ids.sort_unstable();
            assert_eq!(b_ids, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn holdout_is_disjoint() {
        let (train, test) = holdout(synth_dataset(50, 4, 1).unwrap(), 0.2, 4).unwrap();
        assert_eq!((train.len(), test.len()), (40, 10));
        let mut ids: Vec<usize> = train.iter().chain(&test).map(|s| s.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..50).collect::<Vec<_>>());
    }

    fn write_png(path: &Path, w: u32, h: u32, value: u8) {
        image::GrayImage::from_pixel(w, h, image::Luma([value]))
            .save(path)
            .unwrap();
    }

    #[test]
    fn mid_gray_png_scales_to_128_over_255() {
        let dir = tempfile::tempdir().unwrap();
        for m in ["modality_a", "modality_b"] {
            std::fs::create_dir(dir.path().join(m)).unwrap();
            write_png(&dir.path().join(m).join("s0.png"), 40, 24, 128);
        }
        let samples = load_image_dir(dir.path(), 8).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].modality_a.shape(), &[1, 8, 8]);
        for v in samples[0]
            .modality_a
            .data()
            .iter()
            .chain(samples[0].modality_b.data())
        {
            assert!((v - 128.0 / 255.0).abs() < 1e-12);
        }
    }

    #[test]
    fn image_dir_edge_cases() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_image_dir(dir.path(), 8).unwrap().is_empty());
        for m in ["modality_a", "modality_b"] {
            std::fs::create_dir(dir.path().join(m)).unwrap();
        }
        write_png(&dir.path().join("modality_a/lonely.png"), 4, 4, 10);
        let err = load_image_dir(dir.path(), 8).unwrap_err().to_string();
        assert!(err.contains("modality_a/lonely.png"), "{err}");

        write_png(&dir.path().join("modality_b/lonely.png"), 4, 4, 10);
        image::RgbImage::from_pixel(4, 4, image::Rgb([1, 2, 3]))
            .save(dir.path().join("modality_a/rgb.png"))
            .unwrap();
        write_png(&dir.path().join("modality_b/rgb.png"), 4, 4, 10);
        let err = load_image_dir(dir.path(), 8).unwrap_err().to_string();
        assert!(err.contains("not grayscale"), "{err}");
    }

    #[test]
    fn bilinear_preserves_linear_ramps() {
        // a horizontal ramp stays linear away from the clamped border
        let side = 8;
        let src: Vec<f64> = (0..side * side).map(|i| (i % side) as f64).collect();
        let out = resize_bilinear(&src, side, 4);
        let row: Vec<f64> = out.data()[..4].to_vec();
        assert_eq!(row, [0.5, 2.5, 4.5, 6.5]);
    }

    #[test]
    fn manifest_round_trip() {
        let s = arcs(synth_dataset(20, 4, 1).unwrap());
        let clients = vec![
            split_paired_unpaired(&s[..12], 0.5, 1).unwrap(),
            split_paired_unpaired(&s[12..], 0.5, 2).unwrap(),
        ];
        let rows = manifest_rows(&clients);
        assert_eq!(rows.len(), 20);
        assert_eq!(rows.iter().filter(|r| r.paired).count(), 10);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        write_manifest(&path, &rows).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn partition_is_exhaustive_and_disjoint(
            raw in proptest::collection::vec(0.05f64..1.0, 1..9),
            extra in 0usize..200,
            seed in any::<u64>(),
        ) {
            let sum: f64 = raw.iter().sum();
            let props: Vec<f64> = raw.iter().map(|p| p / sum).collect();
            let Ok(scheme) = PartitionScheme::explicit(props.clone()) else { return Ok(()) };
            let n = props.len() + extra;
            let ids: Vec<usize> = (0..n).collect();
            let parts = partition(&ids, &scheme, seed).unwrap();
            let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, ids);
            for (p, part) in props.iter().zip(&parts) {
                prop_assert!((part.len() as f64 - p * n as f64).abs() < 1.0 + 1e-9);
            }
        }

        #[test]
        fn split_honors_ratio(m in 0usize..40, ratio in 0.0f64..=1.0, seed in any::<u64>()) {
            let s = arcs(synth_dataset(m.max(1), 2, 1).unwrap()[..m].to_vec());
            let ds = split_paired_unpaired(&s, ratio, seed).unwrap();
            prop_assert!((ds.paired.len() as f64 - ratio * m as f64).abs() <= 1.0);
            prop_assert_eq!(ds.unpaired_a.len(), ds.unpaired_b.len());
            prop_assert_eq!(ds.len(), m);
            if ds.unpaired_a.len() >= 2 {
                for (a, b) in ds.unpaired_a.iter().zip(&ds.unpaired_b) {
                    prop_assert_ne!(a.id, b.id);
                }
            }
        }
    }
}

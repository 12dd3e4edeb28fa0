//! Latent-space projection of generator bottlenecks and fidelity/diversity
//! summaries of the resulting 2-D clouds.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::Generator;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub const HISTOGRAM_BINS: usize = 16;
pub const DEFAULT_CLOUD_SIZE: usize = 400;

/// Splits the final axis into `(L/2, 2)` and averages everything except the
/// size-2 axis: `x` is the mean of even final-axis entries, `y` of odd ones.
pub fn project_latent(latent: &Tensor) -> Result<(f64, f64)> {
    let last = *latent.shape().last().unwrap_or(&0);
    if latent.numel() < 2 || last % 2 != 0 {
        return Err(Error::shape(
            "project_latent",
            format!(
                "final axis must have even length, got shape {:?}",
                latent.shape()
            ),
        ));
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for pair in latent.data().chunks_exact(2) {
        sx += pair[0];
        sy += pair[1];
    }
    let half = (latent.numel() / 2) as f64;
    Ok((sx / half, sy / half))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LatentGroup {
    RealA,
    FakeA,
    RealB,
    FakeB,
}

impl LatentGroup {
    pub const ALL: [LatentGroup; 4] = [
        LatentGroup::RealA,
        LatentGroup::FakeA,
        LatentGroup::RealB,
        LatentGroup::FakeB,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for LatentGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LatentGroup::RealA => "realA",
            LatentGroup::FakeA => "fakeA",
            LatentGroup::RealB => "realB",
            LatentGroup::FakeB => "fakeB",
        })
    }
}

impl FromStr for LatentGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LatentGroup::ALL
            .into_iter()
            .find(|g| g.to_string() == s)
            .ok_or_else(|| Error::Data(format!("unknown latent group `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatentPoint {
    pub sample_id: usize,
    pub group: LatentGroup,
    pub x: f64,
    pub y: f64,
}

fn signed(image: &Tensor) -> Tensor {
    image.map(|v| 2.0 * v - 1.0)
}

/// Projects bottleneck latents for `n` seeded-random test samples (fewer when
/// the test set is smaller). Real A and generated A go through the encoder of
/// `gen_ab`, real B and generated B through the encoder of `gen_ba`.
/// Points come four per sample in the order realA, fakeA, realB, fakeB.
pub fn latent_cloud(
    gen_ab: &Generator,
    gen_ba: &Generator,
    test_set: &[Sample],
    n: usize,
    rng: &mut SeededRng,
    exec: Execution,
) -> Result<Vec<LatentPoint>> {
    if test_set.is_empty() {
        return Err(Error::InvalidArgument(
            "latent cloud needs a non-empty test set".into(),
        ));
    }
    let mut order: Vec<usize> = (0..test_set.len()).collect();
    rng.shuffle(&mut order);
    order.truncate(n.min(test_set.len()));
    let per_sample = exec.map(order, |i| -> Result<[LatentPoint; 4]> {
        let s = &test_set[i];
        let (a, b) = (signed(&s.modality_a), signed(&s.modality_b));
        let fake_b = gen_ab.forward(&a)?;
        let fake_a = gen_ba.forward(&b)?;
        let point = |group, latent: Tensor| -> Result<LatentPoint> {
            let (x, y) = project_latent(&latent)?;
            Ok(LatentPoint {
                sample_id: s.id,
                group,
                x,
                y,
            })
        };
        Ok([
            point(LatentGroup::RealA, gen_ab.extract_latent(&a)?)?,
            point(LatentGroup::FakeA, gen_ab.extract_latent(&fake_a)?)?,
            point(LatentGroup::RealB, gen_ba.extract_latent(&b)?)?,
            point(LatentGroup::FakeB, gen_ba.extract_latent(&fake_b)?)?,
        ])
    });
    let mut points = Vec::with_capacity(per_sample.len() * 4);
    for p in per_sample {
        points.extend(p?);
    }
    Ok(points)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloudSummary {
    /// Histogram intersection of real A and fake A clouds.
    pub overlap_a: f64,
    /// Histogram intersection of real B and fake B clouds.
    pub overlap_b: f64,
    /// Trace of the 2×2 sample covariance, indexed like [`LatentGroup::ALL`].
    pub diversity: [f64; 4],
}

impl CloudSummary {
    pub fn diversity_of(&self, group: LatentGroup) -> f64 {
        self.diversity[group.index()]
    }
}

fn coords(points: &[LatentPoint], group: LatentGroup) -> Vec<(f64, f64)> {
    points
        .iter()
        .filter(|p| p.group == group)
        .map(|p| (p.x, p.y))
        .collect()
}

fn covariance_trace(xy: &[(f64, f64)]) -> f64 {
    let n = xy.len() as f64;
    let (mx, my) = xy.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    let ss: f64 = xy
        .iter()
        .map(|(x, y)| (x - mx).powi(2) + (y - my).powi(2))
        .sum();
    ss / (n - 1.0)
}

/// Normalized-histogram intersection on a shared grid over the joint bounding box.
pub fn histogram_overlap(real: &[(f64, f64)], fake: &[(f64, f64)], bins: usize) -> f64 {
    let all = real.iter().chain(fake);
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let bin = |v: f64, lo: f64, hi: f64| -> usize {
        if hi <= lo {
            0
        } else {
            (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
        }
    };
    let hist = |pts: &[(f64, f64)]| {
        let mut h = vec![0.0; bins * bins];
        for &(x, y) in pts {
            h[bin(y, y0, y1) * bins + bin(x, x0, x1)] += 1.0 / pts.len() as f64;
        }
        h
    };
    let (hr, hf) = (hist(real), hist(fake));
    hr.iter()
        .zip(&hf)
        .map(|(a, b)| a.min(*b))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

pub fn cloud_summary(points: &[LatentPoint]) -> Result<CloudSummary> {
    let groups: Vec<Vec<(f64, f64)>> = LatentGroup::ALL
        .iter()
        .map(|&g| coords(points, g))
        .collect();
    for (g, pts) in LatentGroup::ALL.iter().zip(&groups) {
        if pts.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "cloud summary needs at least 2 points in group {g}, got {}",
                pts.len()
            )));
        }
        if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::NonFinite(format!("latent point in group {g}")));
        }
    }
    let mut diversity = [0.0; 4];
    for (d, pts) in diversity.iter_mut().zip(&groups) {
        *d = covariance_trace(pts);
    }
    Ok(CloudSummary {
        overlap_a: histogram_overlap(&groups[0], &groups[1], HISTOGRAM_BINS),
        overlap_b: histogram_overlap(&groups[2], &groups[3], HISTOGRAM_BINS),
        diversity,
    })
}

/// Writes `sample_id,group,x,y` rows.
pub fn write_cloud_csv(path: &Path, points: &[LatentPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_id", "group", "x", "y"])?;
    for p in points {
        w.write_record([
            p.sample_id.to_string(),
            p.group.to_string(),
            p.x.to_string(),
            p.y.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_cloud_csv(path: &Path) -> Result<Vec<LatentPoint>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let bad = || Error::Data(format!("bad latent row {rec:?}"));
            let num = |i: usize| {
                rec.get(i)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(bad)
            };
            Ok(LatentPoint {
                sample_id: rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
                group: rec.get(1).ok_or_else(bad)?.parse()?,
                x: num(2)?,
                y: num(3)?,
            })
        })
        .collect()
}

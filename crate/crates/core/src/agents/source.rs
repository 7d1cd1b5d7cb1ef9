//! Heatmap providers for the landmark agent.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::heatmap::{channel_index, HeatmapFile, HeatmapSet, PresenceVector, LANDMARK_CHANNELS};
use crate::dental::{Arch, LandmarkGroup, PointCloud, TEETH_PER_ARCH};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Supplies raw (unconditioned) heatmaps and presence for a cloud.
pub trait HeatmapSource: Send + Sync {
    fn heatmaps(&self, cloud: &PointCloud, arch: Arch) -> Result<(HeatmapSet, PresenceVector)>;
}

/// Noise dials of the synthetic oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleNoise {
    /// Standard deviation of the absolute Gaussian noise added to every value.
    pub heatmap_sd: f64,
    /// Uniform jitter applied to presence probabilities (then clamped).
    pub presence_jitter: f64,
    /// Probability of replacing `p` with `1 - p` for a slot.
    pub presence_flip_prob: f64,
}

impl Default for OracleNoise {
    fn default() -> Self {
        Self { heatmap_sd: 0.0, presence_jitter: 0.0, presence_flip_prob: 0.0 }
    }
}

impl OracleNoise {
    pub fn is_zero(&self) -> bool {
        self.heatmap_sd == 0.0 && self.presence_jitter == 0.0 && self.presence_flip_prob == 0.0
    }
}

/// Gaussian bumps centred on known landmark positions.
///
/// Each real column holds `exp(-d^2 / (2 sigma^2))` for the distance `d`
/// from the point to the channel's landmark; the null column holds 1. With
/// zero noise the arg-max of a present tooth's channel is the cloud point
/// closest to its landmark.
#[derive(Debug, Clone)]
pub struct SyntheticOracleSource {
    landmarks: BTreeMap<(usize, LandmarkGroup), Vec3>,
    presence: [f64; TEETH_PER_ARCH],
    sigma: f64,
    noise: OracleNoise,
    seed: u64,
}

impl SyntheticOracleSource {
    pub const DEFAULT_SIGMA: f64 = 1.5;

    pub fn new(
        landmarks: BTreeMap<(usize, LandmarkGroup), Vec3>,
        presence: [f64; TEETH_PER_ARCH],
        noise: OracleNoise,
        seed: u64,
    ) -> Result<Self> {
        PresenceVector::new(presence)?;
        Ok(Self { landmarks, presence, sigma: Self::DEFAULT_SIGMA, noise, seed })
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }
}

impl HeatmapSource for SyntheticOracleSource {
    fn heatmaps(&self, cloud: &PointCloud, _arch: Arch) -> Result<(HeatmapSet, PresenceVector)> {
        let n = cloud.len();
        let columns = n + 1;
        let mut values = vec![0.0; LANDMARK_CHANNELS * columns];
        let inv_two_var = 1.0 / (2.0 * self.sigma * self.sigma);
        let cutoff = (8.0 * self.sigma).powi(2);
        for ((slot, group), lm) in &self.landmarks {
            let row = &mut values[channel_index(*slot, *group) * columns..][..columns];
            for (v, p) in row.iter_mut().zip(cloud.points()) {
                let d2 = p.distance_squared(*lm);
                if d2 < cutoff {
                    *v = (-d2 * inv_two_var).exp();
                }
            }
        }
        for row in values.chunks_mut(columns) {
            row[n] = 1.0;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        if self.noise.heatmap_sd > 0.0 {
            let normal = Normal::new(0.0, self.noise.heatmap_sd).map_err(|e| Error::invalid(e.to_string()))?;
            for v in &mut values {
                *v += normal.sample(&mut rng).abs();
            }
        }
        let mut presence = self.presence;
        for p in &mut presence {
            if self.noise.presence_jitter > 0.0 {
                let j = self.noise.presence_jitter;
                *p = (*p + rng.random_range(-j..=j)).clamp(0.0, 1.0);
            }
            if self.noise.presence_flip_prob > 0.0 && rng.random::<f64>() < self.noise.presence_flip_prob {
                *p = 1.0 - *p;
            }
        }
        Ok((HeatmapSet::new(columns, values)?, PresenceVector::new(presence)?))
    }
}

/// Loads precomputed heatmaps from a file (binary or JSON container).
#[derive(Debug, Clone)]
pub struct FileHeatmapSource {
    path: PathBuf,
}

impl FileHeatmapSource {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

impl HeatmapSource for FileHeatmapSource {
    fn heatmaps(&self, cloud: &PointCloud, _arch: Arch) -> Result<(HeatmapSet, PresenceVector)> {
        let file = HeatmapFile::read(&self.path)?;
        check_columns(&file.heatmaps, cloud)?;
        Ok((file.heatmaps, file.presence))
    }
}

/// In-memory heatmaps, e.g. decoded from a request body.
#[derive(Debug, Clone)]
pub struct StaticHeatmapSource(pub HeatmapFile);

impl HeatmapSource for StaticHeatmapSource {
    fn heatmaps(&self, cloud: &PointCloud, _arch: Arch) -> Result<(HeatmapSet, PresenceVector)> {
        check_columns(&self.0.heatmaps, cloud)?;
        Ok((self.0.heatmaps.clone(), self.0.presence))
    }
}

fn check_columns(h: &HeatmapSet, cloud: &PointCloud) -> Result<()> {
    if h.columns() != cloud.len() + 1 {
        return Err(Error::invalid(format!(
            "heatmaps were computed for {} points, cloud has {}",
            h.columns() - 1,
            cloud.len()
        )));
    }
    Ok(())
}

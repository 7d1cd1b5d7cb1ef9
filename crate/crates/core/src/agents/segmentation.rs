use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AgentId, AgentOutput, ToothEstimator};
use crate::dental::{Arch, ArchState, FdiTooth, PointCloud, ToothState, TEETH_PER_ARCH};
use crate::error::{Error, Result};
use crate::geometry::{principal_axes, Vec3};

/// Point-count confidence: `clamp(n / 200, 0.3, 0.99)`.
pub fn segmentation_confidence(points: usize) -> f64 {
    (points as f64 / 200.0).clamp(0.3, 0.99)
}

/// Per-tooth grouping plus PCA. Labeled clouds are grouped by label;
/// unlabeled clouds are clustered with seeded k-means and the clusters are
/// assigned to slots by their position along the arch.
#[derive(Debug, Clone)]
pub struct SegmentationAgent {
    pub clustering: bool,
    pub seed: u64,
    pub max_clusters: usize,
    pub restarts: usize,
}

impl Default for SegmentationAgent {
    fn default() -> Self {
        Self { clustering: true, seed: 0, max_clusters: TEETH_PER_ARCH, restarts: 4 }
    }
}

impl SegmentationAgent {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn tooth_from_points(fdi: FdiTooth, points: &[Vec3]) -> Result<ToothState> {
        let axes = principal_axes(points)?;
        let mut t = ToothState::new(fdi, axes.centroid, axes.orientation(), segmentation_confidence(points.len()));
        t.extents = axes.extents;
        Ok(t)
    }

    fn labeled(&self, cloud: &PointCloud, labels: &[FdiTooth], arch: Arch) -> Result<ArchState> {
        let mut groups: BTreeMap<FdiTooth, Vec<Vec3>> = BTreeMap::new();
        for (p, l) in cloud.points().iter().zip(labels) {
            if l.arch() != arch {
                return Err(Error::invalid(format!("label {l} does not belong to the {arch:?} arch")));
            }
            groups.entry(*l).or_default().push(*p);
        }
        let mut state = ArchState::empty(arch);
        for (fdi, pts) in groups {
            state.insert(Self::tooth_from_points(fdi, &pts)?)?;
        }
        Ok(state)
    }

    fn clustered(&self, cloud: &PointCloud, arch: Arch) -> Result<ArchState> {
        let points = cloud.points();
        let k = self.max_clusters.min(points.len()).max(1);
        let arc = ArcParam::new(cloud);

        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for attempt in 0..=self.restarts {
            let init = if attempt == 0 { arc.quantile_seeds(points, k) } else { kmeans_pp(points, k, &mut rng) };
            let (inertia, assign) = lloyd(points, init, 100);
            if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
                best = Some((inertia, assign));
            }
        }
        let (_, assign) = best.expect("at least one k-means run");

        let mut clusters: Vec<Vec<Vec3>> = vec![Vec::new(); k];
        for (p, c) in points.iter().zip(&assign) {
            clusters[*c].push(*p);
        }
        let mut clusters: Vec<(f64, Vec<Vec3>)> =
            clusters.into_iter().filter(|c| !c.is_empty()).map(|c| (arc.angle(Vec3::mean(&c).unwrap()), c)).collect();
        clusters.sort_by(|a, b| a.0.total_cmp(&b.0));

        let slots = assign_slots(&clusters.iter().map(|c| c.0).collect::<Vec<_>>());
        let mut state = ArchState::empty(arch);
        for ((_, pts), slot) in clusters.iter().zip(slots) {
            state.insert(Self::tooth_from_points(FdiTooth::from_slot(arch, slot)?, pts)?)?;
        }
        Ok(state)
    }
}

impl ToothEstimator for SegmentationAgent {
    fn id(&self) -> AgentId {
        AgentId::Segmentation
    }

    fn infer(&self, cloud: &PointCloud, arch: Arch) -> Result<AgentOutput> {
        let start = Instant::now();
        let state = match cloud.labels() {
            Some(labels) => self.labeled(cloud, labels, arch)?,
            None if self.clustering => self.clustered(cloud, arch)?,
            None => return Err(Error::invalid("unlabeled cloud and clustering disabled")),
        };
        Ok(AgentOutput::new(AgentId::Segmentation, state, start.elapsed()))
    }
}

/// Angular position along the arch, seen from a point behind the arch
/// opening. Increases from the patient's right (slot 1) to the left.
struct ArcParam {
    origin: Vec3,
}

impl ArcParam {
    fn new(cloud: &PointCloud) -> Self {
        let (lo, hi) = cloud.bounds();
        let c = cloud.centroid();
        let depth = (hi.y - lo.y).max(1.0);
        Self { origin: Vec3::new(c.x, lo.y - 0.5 * depth, c.z) }
    }

    fn angle(&self, p: Vec3) -> f64 {
        (p.x - self.origin.x).atan2(p.y - self.origin.y)
    }

    fn quantile_seeds(&self, points: &[Vec3], k: usize) -> Vec<Vec3> {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| self.angle(points[a]).total_cmp(&self.angle(points[b])).then(a.cmp(&b)));
        (0..k)
            .map(|j| {
                let lo = j * order.len() / k;
                let hi = ((j + 1) * order.len() / k).max(lo + 1);
                let bin: Vec<Vec3> = order[lo..hi].iter().map(|&i| points[i]).collect();
                Vec3::mean(&bin).unwrap()
            })
            .collect()
    }
}

fn kmeans_pp(points: &[Vec3], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| p.distance_squared(centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..points.len())
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        };
        let c = points[next];
        centers.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(p.distance_squared(c));
        }
    }
    centers
}

fn nearest(centers: &[Vec3], p: Vec3) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = p.distance_squared(*c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Lloyd iterations; empty clusters are re-seeded at the worst-fit point.
fn lloyd(points: &[Vec3], mut centers: Vec<Vec3>, max_iter: usize) -> (f64, Vec<usize>) {
    let k = centers.len();
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let (c, _) = nearest(&centers, *p);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        let mut sums = vec![Vec3::ZERO; k];
        let mut counts = vec![0usize; k];
        for (a, p) in assign.iter().zip(points) {
            sums[*a] += *p;
            counts[*a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j] / counts[j] as f64;
            } else {
                let worst = points
                    .iter()
                    .enumerate()
                    .max_by(|a, b| nearest(&centers, *a.1).1.total_cmp(&nearest(&centers, *b.1).1))
                    .map(|(i, _)| i)
                    .unwrap();
                centers[j] = points[worst];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points.iter().zip(&assign).map(|(p, a)| p.distance_squared(centers[*a])).sum();
    (inertia, assign)
}

/// Maps arc-sorted cluster angles to distinct slots 1..=16. A full set maps
/// one-to-one; fewer clusters are spread proportionally over the angle span.
fn assign_slots(angles: &[f64]) -> Vec<usize> {
    let n = angles.len();
    if n >= TEETH_PER_ARCH || n <= 1 {
        return (1..=n.min(TEETH_PER_ARCH)).collect();
    }
    let (lo, hi) = (angles[0], angles[n - 1]);
    let span = (hi - lo).max(f64::EPSILON);
    let mut slots = Vec::with_capacity(n);
    let mut next_free = 1;
    for (i, a) in angles.iter().enumerate() {
        let ideal = 1 + ((a - lo) / span * (TEETH_PER_ARCH - 1) as f64).round() as usize;
        // keep room for the clusters still to come
        let latest = TEETH_PER_ARCH - (n - 1 - i);
        let s = ideal.max(next_free).min(latest);
        slots.push(s);
        next_free = s + 1;
    }
    slots
}

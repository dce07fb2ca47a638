//! Collision-aware guidance: obstacle point clouds, nearest-point
//! distances, the signed-distance penalty, and its analytic gradient with
//! respect to waypoints. Everything here operates in world coordinates on
//! immutable data.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Obstacle surface samples available to the planner at inference time.
/// An empty cloud means no known obstacles.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstaclePointCloud {
    points: Array2<f64>,
}

impl ObstaclePointCloud {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if !points.iter().all(|v| v.is_finite()) {
            return Err(Error::Shape("point cloud contains non-finite entries".into()));
        }
        Ok(Self { points })
    }

    pub fn empty(dim: usize) -> Self {
        Self { points: Array2::zeros((0, dim)) }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }
}

/// Guidance hyperparameters. Defaults follow the experiment settings:
/// strength 0.2, start step 5, sphere radius 0.08 m, safety margin 0.06 m.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceConfig {
    /// Multiplier on the guidance gradient (lambda).
    pub strength: f64,
    /// Noise level at or below which guidance is applied (chi).
    pub start_step: usize,
    /// Radius of the sphere approximating the end effector.
    pub eef_radius: f64,
    /// Extra clearance added on top of the sphere radius.
    pub safety_margin: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self { strength: 0.2, start_step: 5, eef_radius: 0.08, safety_margin: 0.06 }
    }
}

impl GuidanceConfig {
    /// Distance below which the penalty activates.
    pub fn threshold(&self) -> f64 {
        self.safety_margin + self.eef_radius
    }

    pub fn validate(&self, diffusion_steps: usize) -> Result<()> {
        if self.strength < 0.0 {
            return Err(Error::Config("guidance strength must be >= 0".into()));
        }
        if self.start_step < 1 || self.start_step > diffusion_steps {
            return Err(Error::Config(format!(
                "guidance start step {} outside 1..={diffusion_steps}",
                self.start_step
            )));
        }
        if self.eef_radius <= 0.0 || self.safety_margin <= 0.0 {
            return Err(Error::Config("guidance radii must be positive".into()));
        }
        Ok(())
    }
}

/// Minimum Euclidean distance from `p` to the cloud and the argmin index.
/// Ties break toward the lowest index. `None` signals an empty cloud, which
/// callers treat as "no obstacles" (zero cost).
pub fn nearest_distance(p: ArrayView1<'_, f64>, cloud: &ObstaclePointCloud) -> Option<(f64, usize)> {
    if cloud.is_empty() {
        return None;
    }
    let mut best = f64::INFINITY;
    let mut best_idx = 0;
    for (i, q) in cloud.points.rows().into_iter().enumerate() {
        let diff = &p - &q;
        let d2 = diff.dot(&diff);
        if d2 < best {
            best = d2;
            best_idx = i;
        }
    }
    Some((best.sqrt(), best_idx))
}

/// Signed-distance penalty for a single waypoint:
/// `-d(p) + (margin + radius)` inside the threshold, 0 outside.
pub fn collision_cost(p: ArrayView1<'_, f64>, cloud: &ObstaclePointCloud, cfg: &GuidanceConfig) -> f64 {
    match nearest_distance(p, cloud) {
        None => 0.0,
        Some((d, _)) => {
            let threshold = cfg.threshold();
            if d <= threshold {
                -d + threshold
            } else {
                0.0
            }
        }
    }
}

/// Summed collision cost over all waypoints of a path.
pub fn trajectory_cost(waypoints: &Array2<f64>, cloud: &ObstaclePointCloud, cfg: &GuidanceConfig) -> f64 {
    waypoints.rows().into_iter().map(|p| collision_cost(p, cloud, cfg)).sum()
}

/// Gradient of the summed collision cost with respect to each waypoint.
///
/// Inside the margin the gradient is `-(p - q*) / |p - q*|` toward the
/// nearest cloud point `q*`; it is zero outside the margin, zero at the
/// singular point `p = q*` (the reverse-step noise breaks the tie on the
/// next iteration), and zero at the boundary waypoints so the endpoint
/// clamp is never fought.
pub fn cost_gradient(
    waypoints: &Array2<f64>,
    cloud: &ObstaclePointCloud,
    cfg: &GuidanceConfig,
) -> Array2<f64> {
    let n = waypoints.nrows();
    let mut grad = Array2::zeros(waypoints.raw_dim());
    if cloud.is_empty() || n < 3 {
        return grad;
    }
    let threshold = cfg.threshold();
    for i in 1..n - 1 {
        let p = waypoints.row(i);
        if let Some((d, idx)) = nearest_distance(p, cloud) {
            if d <= threshold && d > 0.0 {
                let dir = (&p - &cloud.point(idx)) / d;
                grad.row_mut(i).assign(&(-dir));
            }
        }
    }
    grad
}

/// Apply cost-based guidance to a reverse-step mean: `mu - strength * grad`.
/// With zero strength or an empty cloud this is the identity.
pub fn guided_correction(
    mu: &Array2<f64>,
    cloud: &ObstaclePointCloud,
    cfg: &GuidanceConfig,
) -> Array2<f64> {
    if cfg.strength == 0.0 || cloud.is_empty() {
        return mu.clone();
    }
    let grad = cost_gradient(mu, cloud, cfg);
    mu - &(grad * cfg.strength)
}

/// Write a cloud as plain text: header `#pcd d=<d> m=<M>`, one point per
/// line with whitespace-separated coordinates.
pub fn write_point_cloud(cloud: &ObstaclePointCloud, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("#pcd d={} m={}\n", cloud.dim(), cloud.len()));
    for row in cloud.points.rows() {
        let coords: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&coords.join(" "));
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_point_cloud(path: &Path) -> Result<ObstaclePointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format(path, "missing header line"))?;
    let rest = header
        .strip_prefix("#pcd ")
        .ok_or_else(|| Error::format(path, "header must start with '#pcd'"))?;
    let mut dim = None;
    let mut count = None;
    for token in rest.split_whitespace() {
        if let Some(v) = token.strip_prefix("d=") {
            dim = Some(v.parse::<usize>().map_err(|_| Error::format(path, "invalid value for d"))?);
        } else if let Some(v) = token.strip_prefix("m=") {
            count = Some(v.parse::<usize>().map_err(|_| Error::format(path, "invalid value for m"))?);
        }
    }
    let dim = dim.ok_or_else(|| Error::format(path, "header missing d"))?;
    let count = count.ok_or_else(|| Error::format(path, "header missing m"))?;

    let mut data = Vec::with_capacity(count * dim);
    let mut rows = 0;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| Error::format(path, format!("invalid coordinate '{v}'"))))
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::format(path, format!("point has {} coordinates, header d={dim}", values.len())));
        }
        data.extend(values);
        rows += 1;
    }
    if rows != count {
        return Err(Error::format(path, format!("m: header says {count} points but payload has {rows}")));
    }
    let points = Array2::from_shape_vec((rows, dim), data)
        .map_err(|e| Error::format(path, format!("payload shape: {e}")))?;
    ObstaclePointCloud::new(points)
}

/// Convenience for tests and small literals.
pub fn cloud_from_rows(rows: &[Vec<f64>]) -> ObstaclePointCloud {
    let dim = rows.first().map(|r| r.len()).unwrap_or(2);
    let mut points = Array2::zeros((rows.len(), dim));
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            points[[i, j]] = *v;
        }
    }
    ObstaclePointCloud { points }
}

pub fn point(coords: &[f64]) -> Array1<f64> {
    Array1::from_vec(coords.to_vec())
}

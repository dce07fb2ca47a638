//! Training-set generation: RRT demonstrations in an obstacle-free
//! workspace, start-point augmentation, fixed-length normalization, and
//! dataset persistence.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::denoiser::TaskContext;
use crate::error::{Error, Result};
use crate::rng::{self, rng_from_seed, streams};
use crate::trajectory::{euclidean, resample_polyline, Bounds, Trajectory};

/// Generation parameters. The step size and goal bias produce mildly
/// multimodal, non-straight demonstrations; shortcutting knocks the worst
/// jag out of raw RRT paths before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct DatagenConfig {
    pub base_count: usize,
    pub step_size: f64,
    pub goal_bias: f64,
    pub shortcut_attempts: usize,
    pub k_per_traj: usize,
    pub min_separation: f64,
    pub max_nodes: usize,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            base_count: 1000,
            step_size: 0.05,
            goal_bias: 0.1,
            shortcut_attempts: 20,
            k_per_traj: 1,
            min_separation: 0.4,
            max_nodes: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub n: usize,
    pub d: usize,
    pub count: usize,
    pub bounds: Bounds,
    pub seed: u64,
}

/// Demonstration trajectories with parallel task contexts. Every
/// trajectory has exactly `n` waypoints and endpoints equal to its
/// context's start and goal.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub trajectories: Vec<Trajectory>,
    pub contexts: Vec<TaskContext>,
    pub meta: DatasetMeta,
}

/// Grow a rapidly exploring random tree from `start` toward `goal` with
/// uniform workspace sampling and the given goal bias; returns the
/// root-to-goal polyline. In an empty workspace this succeeds well within
/// `max_nodes`, which caps runaway growth anyway.
pub fn rrt_plan(
    start: &Array1<f64>,
    goal: &Array1<f64>,
    bounds: &Bounds,
    seed: u64,
    step_size: f64,
    goal_bias: f64,
    max_nodes: usize,
) -> Result<Array2<f64>> {
    if !bounds.contains(start.view()) || !bounds.contains(goal.view()) {
        return Err(Error::Usage("rrt start and goal must lie inside the bounds".into()));
    }
    if step_size <= 0.0 {
        return Err(Error::Config("rrt step size must be positive".into()));
    }
    let dim = bounds.dim();
    let mut rng = rng_from_seed(seed);
    let mut nodes: Vec<Array1<f64>> = vec![start.clone()];
    let mut parents: Vec<usize> = vec![0];

    loop {
        if nodes.len() >= max_nodes {
            return Err(Error::Generation(format!(
                "rrt exceeded {max_nodes} nodes without reaching the goal"
            )));
        }
        let target = if rng.gen::<f64>() < goal_bias {
            goal.clone()
        } else {
            Array1::from_shape_fn(dim, |k| rng.gen_range(bounds.lo[k]..bounds.hi[k]))
        };
        let (nearest_idx, nearest_dist) = nodes
            .iter()
            .enumerate()
            .map(|(i, p)| (i, euclidean(p.view(), target.view())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("tree is never empty");
        if nearest_dist == 0.0 {
            continue;
        }
        let from = nodes[nearest_idx].clone();
        let new = if nearest_dist <= step_size {
            target
        } else {
            &from + &((&target - &from) * (step_size / nearest_dist))
        };
        nodes.push(new.clone());
        parents.push(nearest_idx);

        if euclidean(new.view(), goal.view()) <= step_size {
            let mut idx = nodes.len() - 1;
            if &new != goal {
                nodes.push(goal.clone());
                parents.push(idx);
                idx = nodes.len() - 1;
            }
            let mut chain = vec![idx];
            while idx != 0 {
                idx = parents[idx];
                chain.push(idx);
            }
            chain.reverse();
            let mut out = Array2::zeros((chain.len(), dim));
            for (row, node_idx) in chain.iter().enumerate() {
                out.row_mut(row).assign(&nodes[*node_idx]);
            }
            return Ok(out);
        }
    }
}

/// Random pair shortcutting: replace the span between two random waypoints
/// with a straight segment re-discretized at `step_size`. The workspace is
/// obstacle-free, so every shortcut is admissible.
pub fn shortcut_path(path: &Array2<f64>, attempts: usize, step_size: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let dim = path.ncols();
    let mut points: Vec<Array1<f64>> = path.rows().into_iter().map(|r| r.to_owned()).collect();
    for _ in 0..attempts {
        if points.len() < 3 {
            break;
        }
        let i = rng.gen_range(0..points.len() - 2);
        let j = rng.gen_range(i + 2..points.len());
        let a = points[i].clone();
        let b = points[j].clone();
        let span = euclidean(a.view(), b.view());
        let segments = (span / step_size).ceil().max(1.0) as usize;
        let mut replacement = Vec::with_capacity(segments - 1);
        for k in 1..segments {
            let frac = k as f64 / segments as f64;
            replacement.push(&a * (1.0 - frac) + &b * frac);
        }
        points.splice(i + 1..j, replacement);
    }
    let mut out = Array2::zeros((points.len(), dim));
    for (row, p) in points.iter().enumerate() {
        out.row_mut(row).assign(p);
    }
    out
}

/// Normalize a polyline to exactly `n` waypoints: arc-length-uniform
/// linear interpolation when the polyline is longer than `n`, end-padding
/// with the final point when shorter. Endpoints are preserved exactly.
pub fn normalize_length(polyline: &Array2<f64>, n: usize) -> Result<Trajectory> {
    if polyline.nrows() < 2 {
        return Err(Error::Usage("cannot normalize a single-point polyline".into()));
    }
    if n < 2 {
        return Err(Error::Usage("target length must be at least 2".into()));
    }
    let m = polyline.nrows();
    let waypoints = if m == n {
        polyline.clone()
    } else if m > n {
        resample_polyline(polyline, n)?
    } else {
        let mut out = Array2::zeros((n, polyline.ncols()));
        for i in 0..m {
            out.row_mut(i).assign(&polyline.row(i));
        }
        let last = polyline.row(m - 1).to_owned();
        for i in m..n {
            out.row_mut(i).assign(&last);
        }
        out
    };
    Trajectory::new(waypoints, 0)
}

fn sample_task<R: Rng>(bounds: &Bounds, min_separation: f64, rng: &mut R) -> Result<(Array1<f64>, Array1<f64>)> {
    let dim = bounds.dim();
    for _ in 0..1000 {
        let start = Array1::from_shape_fn(dim, |k| rng.gen_range(bounds.lo[k]..bounds.hi[k]));
        let goal = Array1::from_shape_fn(dim, |k| rng.gen_range(bounds.lo[k]..bounds.hi[k]));
        if euclidean(start.view(), goal.view()) >= min_separation {
            return Ok((start, goal));
        }
    }
    Err(Error::Generation(format!(
        "could not sample a start/goal pair separated by {min_separation}"
    )))
}

fn generate_one(cfg: &DatagenConfig, n: usize, bounds: &Bounds, seed: u64) -> Result<(Trajectory, TaskContext)> {
    let mut rng = rng_from_seed(seed);
    let (start, goal) = sample_task(bounds, cfg.min_separation, &mut rng)?;
    let rrt_seed = rng.gen::<u64>();
    let raw = rrt_plan(&start, &goal, bounds, rrt_seed, cfg.step_size, cfg.goal_bias, cfg.max_nodes)?;
    let smoothed = shortcut_path(&raw, cfg.shortcut_attempts, cfg.step_size, &mut rng);
    let traj = normalize_length(&smoothed, n)?;
    let ctx = TaskContext::new(start, goal)?;
    Ok((traj, ctx))
}

/// Generate `base_count` demonstrations plus `k_per_traj` start-resampled
/// variants of each. Deterministic for a fixed seed; generation is
/// parallel across trajectories with per-trajectory derived seeds.
pub fn generate_dataset(
    cfg: &DatagenConfig,
    n: usize,
    d: usize,
    bounds: &Bounds,
    seed: u64,
) -> Result<TrajectoryDataset> {
    if cfg.base_count == 0 {
        return Err(Error::Usage("dataset generation needs a positive count".into()));
    }
    if bounds.dim() != d {
        return Err(Error::Shape("bounds dimension does not match d".into()));
    }
    let base: Vec<(Trajectory, TaskContext)> = (0..cfg.base_count)
        .into_par_iter()
        .map(|i| generate_one(cfg, n, bounds, rng::derive_seed(seed, streams::DATAGEN, i as u64)))
        .collect::<Result<_>>()?;

    let (trajectories, contexts): (Vec<_>, Vec<_>) = base.into_iter().unzip();
    let dataset = TrajectoryDataset {
        meta: DatasetMeta { n, d, count: trajectories.len(), bounds: bounds.clone(), seed },
        trajectories,
        contexts,
    };
    if cfg.k_per_traj == 0 {
        return Ok(dataset);
    }
    augment_starts(&dataset, cfg.k_per_traj, rng::derive_seed(seed, streams::DATAGEN, u64::MAX))
}

/// For each trajectory, add `k_per_traj` variants that start at a
/// uniformly chosen interior waypoint (goal unchanged), re-normalized to
/// the dataset length.
pub fn augment_starts(dataset: &TrajectoryDataset, k_per_traj: usize, seed: u64) -> Result<TrajectoryDataset> {
    if dataset.trajectories.is_empty() {
        return Err(Error::Usage("cannot augment an empty dataset".into()));
    }
    if k_per_traj == 0 {
        return Ok(dataset.clone());
    }
    let n = dataset.meta.n;
    let mut trajectories = dataset.trajectories.clone();
    let mut contexts = dataset.contexts.clone();
    for (idx, (traj, ctx)) in dataset.trajectories.iter().zip(dataset.contexts.iter()).enumerate() {
        let mut rng = rng_from_seed(rng::derive_seed(seed, streams::DATAGEN, idx as u64));
        // Interior waypoints that are distinct from the goal; padding can
        // make late waypoints coincide with it.
        let candidates: Vec<usize> = (1..n - 1)
            .filter(|&j| euclidean(traj.waypoints.row(j), ctx.goal.view()) > 1e-9)
            .collect();
        for _ in 0..k_per_traj {
            if candidates.is_empty() {
                trajectories.push(traj.clone());
                contexts.push(ctx.clone());
                continue;
            }
            let j = candidates[rng.gen_range(0..candidates.len())];
            let suffix = traj.waypoints.slice(ndarray::s![j.., ..]).to_owned();
            let renormalized = normalize_length(&suffix, n)?;
            let start = renormalized.waypoints.row(0).to_owned();
            contexts.push(TaskContext::new(start, ctx.goal.clone())?);
            trajectories.push(renormalized);
        }
    }
    Ok(TrajectoryDataset {
        meta: DatasetMeta { count: trajectories.len(), ..dataset.meta.clone() },
        trajectories,
        contexts,
    })
}

const DATASET_MAGIC: &str = "capeset v1";

/// Write a dataset: text header `{version, n, d, count, bounds, seed}`
/// followed by the little-endian 64-bit-float waypoint payload,
/// trajectory-major. Round trips are bit-exact.
pub fn write_dataset(dataset: &TrajectoryDataset, path: &Path) -> Result<()> {
    let fmt_vec = |v: &Array1<f64>| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ");
    let mut header = String::new();
    header.push_str(DATASET_MAGIC);
    header.push('\n');
    header.push_str(&format!("n {}\n", dataset.meta.n));
    header.push_str(&format!("d {}\n", dataset.meta.d));
    header.push_str(&format!("count {}\n", dataset.meta.count));
    header.push_str(&format!("bounds_lo {}\n", fmt_vec(&dataset.meta.bounds.lo)));
    header.push_str(&format!("bounds_hi {}\n", fmt_vec(&dataset.meta.bounds.hi)));
    header.push_str(&format!("seed {}\n", dataset.meta.seed));
    header.push_str("payload\n");

    let mut bytes = header.into_bytes();
    for traj in &dataset.trajectories {
        for v in traj.waypoints.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<TrajectoryDataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let marker = b"payload\n";
    let payload_at = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::format(path, "missing payload marker"))?;
    let header = std::str::from_utf8(&bytes[..payload_at])
        .map_err(|_| Error::format(path, "header is not valid text"))?;
    let payload = &bytes[payload_at + marker.len()..];

    let mut lines = header.lines();
    let magic = lines.next().unwrap_or_default();
    if magic != DATASET_MAGIC {
        return Err(Error::format(path, format!("bad version tag '{magic}'")));
    }
    let mut fields = std::collections::BTreeMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| Error::format(path, format!("malformed header line '{line}'")))?;
        fields.insert(key.to_string(), value.to_string());
    }
    let get = |key: &str| -> Result<String> {
        fields
            .get(key)
            .cloned()
            .ok_or_else(|| Error::format(path, format!("header missing field {key}")))
    };
    let n: usize = get("n")?.parse().map_err(|_| Error::format(path, "invalid value for n"))?;
    let d: usize = get("d")?.parse().map_err(|_| Error::format(path, "invalid value for d"))?;
    let count: usize =
        get("count")?.parse().map_err(|_| Error::format(path, "invalid value for count"))?;
    let seed: u64 = get("seed")?.parse().map_err(|_| Error::format(path, "invalid value for seed"))?;
    let parse_vec = |key: &str| -> Result<Array1<f64>> {
        let parsed: std::result::Result<Vec<f64>, _> =
            get(key)?.split_whitespace().map(|v| v.parse::<f64>()).collect();
        parsed
            .map(Array1::from_vec)
            .map_err(|_| Error::format(path, format!("invalid value for {key}")))
    };
    let bounds = Bounds::new(parse_vec("bounds_lo")?, parse_vec("bounds_hi")?)
        .map_err(|e| Error::format(path, format!("invalid bounds: {e}")))?;
    if bounds.dim() != d {
        return Err(Error::format(path, format!("bounds dimension does not match d {d}")));
    }

    let expected_bytes = count * n * d * 8;
    if payload.len() != expected_bytes {
        return Err(Error::format(
            path,
            format!(
                "count: header says {count} trajectories ({expected_bytes} payload bytes) \
                 but payload has {} bytes",
                payload.len()
            ),
        ));
    }
    let mut trajectories = Vec::with_capacity(count);
    let mut contexts = Vec::with_capacity(count);
    for i in 0..count {
        let offset = i * n * d * 8;
        let values: Vec<f64> = payload[offset..offset + n * d * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let waypoints = Array2::from_shape_vec((n, d), values)
            .map_err(|e| Error::format(path, format!("trajectory {i}: {e}")))?;
        let traj = Trajectory::new(waypoints, 0)
            .map_err(|e| Error::format(path, format!("trajectory {i}: {e}")))?;
        let ctx = TaskContext::new(traj.start().to_owned(), traj.goal().to_owned())
            .map_err(|e| Error::format(path, format!("trajectory {i} context: {e}")))?;
        trajectories.push(traj);
        contexts.push(ctx);
    }
    Ok(TrajectoryDataset {
        meta: DatasetMeta { n, d, count, bounds, seed },
        trajectories,
        contexts,
    })
}

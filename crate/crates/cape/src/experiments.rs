//! Metrics aggregation, paired benchmarks, parameter sweeps with
//! crash-resumable CSV output, plot emission, and the trend checks
//! reported in the verdict file.
//!
//! Paired design: within a benchmark (and across every sweep cell), episode
//! i always uses the same scene and the same episode seed for every
//! controller, so controller comparisons are paired comparisons.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::guidance::GuidanceConfig;
use crate::planner::{default_max_iterations, ControllerKind, PlannerConfig};
use crate::rng::{self, streams};
use crate::schedule::DiffusionSchedule;
use crate::stats::sign_test_p;
use crate::trajectory::Bounds;
use crate::world::{
    generate_scene, run_episode, Difficulty, EpisodeRecord, ObsMode, ObservationModel, Outcome,
    Scene, Timing,
};

/// Outcome fractions plus planning-effort averages. Counts are the source
/// of truth; the fractions are derived on access, so the partition
/// `successes + collisions + non_completions == episodes` is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub successes: usize,
    pub collisions: usize,
    pub non_completions: usize,
    pub episodes: usize,
    pub mean_refine_hz: f64,
    pub mean_model_evals: f64,
}

impl MetricsSummary {
    pub fn sr(&self) -> f64 {
        self.successes as f64 / self.episodes as f64
    }

    pub fn cr(&self) -> f64 {
        self.collisions as f64 / self.episodes as f64
    }

    pub fn ncr(&self) -> f64 {
        self.non_completions as f64 / self.episodes as f64
    }
}

/// Fold episode records into outcome counts and effort averages.
pub fn aggregate(records: &[EpisodeRecord]) -> Result<MetricsSummary> {
    if records.is_empty() {
        return Err(Error::Usage("cannot aggregate zero episodes".into()));
    }
    let mut successes = 0;
    let mut collisions = 0;
    let mut non_completions = 0;
    let mut hz_sum = 0.0;
    let mut evals_sum = 0.0;
    for r in records {
        match r.outcome {
            Outcome::Success => successes += 1,
            Outcome::Collision => collisions += 1,
            Outcome::NonCompletion => non_completions += 1,
        }
        hz_sum += r.refine_count as f64 / r.wall_time_secs.max(1e-12);
        evals_sum += r.model_eval_count as f64;
    }
    Ok(MetricsSummary {
        successes,
        collisions,
        non_completions,
        episodes: records.len(),
        mean_refine_hz: hz_sum / records.len() as f64,
        mean_model_evals: evals_sum / records.len() as f64,
    })
}

/// Everything immutable a benchmark or sweep needs.
pub struct ExperimentEnv<'a> {
    pub model: &'a Denoiser,
    pub sched: &'a DiffusionSchedule,
    pub bounds: Bounds,
    pub guidance: GuidanceConfig,
    pub planner: PlannerConfig,
    pub observation: ObservationModel,
    pub timing: Timing,
    pub root_seed: u64,
}

impl ExperimentEnv<'_> {
    /// The posed scene list and per-episode seeds shared by every
    /// controller and every sweep cell: scene i with pose j reuses the
    /// scene's own start for j = 0 and resampled initial poses after that.
    fn posed_scenes(
        &self,
        difficulty: Difficulty,
        n_scenes: usize,
        n_poses: usize,
    ) -> Result<(Vec<Scene>, Vec<u64>)> {
        let mut posed = Vec::with_capacity(n_scenes * n_poses);
        let mut seeds = Vec::with_capacity(n_scenes * n_poses);
        for i in 0..n_scenes {
            let scene_seed = rng::derive_seed(self.root_seed, streams::SCENE, i as u64);
            let scene = generate_scene(difficulty, scene_seed, &self.bounds)?;
            for j in 0..n_poses {
                let e = (i * n_poses + j) as u64;
                let scene_j = if j == 0 {
                    scene.clone()
                } else {
                    let start = scene.sample_start(rng::derive_seed(self.root_seed, streams::POSE, e))?;
                    scene.with_start(start)
                };
                posed.push(scene_j);
                seeds.push(rng::derive_seed(self.root_seed, streams::EPISODE, e));
            }
        }
        Ok((posed, seeds))
    }

    fn run_row(
        &self,
        posed: &[Scene],
        seeds: &[u64],
        pcfg: &PlannerConfig,
        gcfg: &GuidanceConfig,
        obs: &ObservationModel,
    ) -> Result<Vec<EpisodeRecord>> {
        posed
            .par_iter()
            .zip(seeds.par_iter())
            .map(|(scene, seed)| {
                run_episode(
                    scene, self.model, self.sched, pcfg, gcfg, obs, *seed, self.timing, None,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub controller: ControllerKind,
    pub summary: MetricsSummary,
    pub records: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub difficulty: Difficulty,
    pub obs_mode: ObsMode,
    pub scenes: Vec<Scene>,
    pub episode_seeds: Vec<u64>,
    pub rows: Vec<BenchRow>,
}

impl BenchResult {
    pub fn row(&self, kind: ControllerKind) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.controller == kind)
    }
}

/// Run every controller over the same posed scenes and episode seeds.
pub fn run_benchmark(
    env: &ExperimentEnv<'_>,
    difficulty: Difficulty,
    obs_mode: ObsMode,
    controllers: &[ControllerKind],
    n_scenes: usize,
    n_poses: usize,
) -> Result<BenchResult> {
    if controllers.is_empty() || n_scenes == 0 || n_poses == 0 {
        return Err(Error::Usage("benchmark needs controllers, scenes, and poses".into()));
    }
    let (posed, seeds) = env.posed_scenes(difficulty, n_scenes, n_poses)?;
    let obs = ObservationModel { mode: obs_mode, ..env.observation.clone() };
    let mut rows = Vec::with_capacity(controllers.len());
    for kind in controllers {
        let pcfg = PlannerConfig { controller: *kind, ..env.planner.clone() };
        let records = env.run_row(&posed, &seeds, &pcfg, &env.guidance, &obs)?;
        rows.push(BenchRow { controller: *kind, summary: aggregate(&records)?, records });
    }
    Ok(BenchResult { difficulty, obs_mode, scenes: posed, episode_seeds: seeds, rows })
}

/// A named parameter grid swept over paired scenes.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub grid: Vec<(String, Vec<f64>)>,
    pub controllers: Vec<ControllerKind>,
    pub difficulty: Difficulty,
    pub obs_mode: ObsMode,
    pub n_scenes: usize,
    pub n_poses: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("sweep grid must name at least one parameter".into()));
        }
        for (name, values) in &self.grid {
            if values.is_empty() {
                return Err(Error::Config(format!("sweep parameter '{name}' has no values")));
            }
            for (i, v) in values.iter().enumerate() {
                if values[..i].contains(v) {
                    return Err(Error::Config(format!(
                        "duplicate value {v} for sweep parameter '{name}'"
                    )));
                }
            }
        }
        if self.controllers.is_empty() {
            return Err(Error::Config("sweep needs at least one controller".into()));
        }
        if self.n_scenes == 0 || self.n_poses == 0 {
            return Err(Error::Config("sweep needs scenes and poses".into()));
        }
        Ok(())
    }

    /// Cartesian product of the grid, first parameter outermost.
    fn cells(&self) -> Vec<Vec<(String, f64)>> {
        let mut cells: Vec<Vec<(String, f64)>> = vec![vec![]];
        for (name, values) in &self.grid {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for cell in &cells {
                for v in values {
                    let mut extended = cell.clone();
                    extended.push((name.clone(), *v));
                    next.push(extended);
                }
            }
            cells = next;
        }
        cells
    }
}

/// Apply one named sweep parameter to the run configuration.
pub fn apply_param(
    name: &str,
    value: f64,
    pcfg: &mut PlannerConfig,
    gcfg: &mut GuidanceConfig,
    n: usize,
) -> Result<()> {
    let as_level = |value: f64, what: &str| -> Result<usize> {
        if value.fract() != 0.0 || value < 1.0 {
            return Err(Error::Config(format!("{what} must be a positive integer, got {value}")));
        }
        Ok(value as usize)
    };
    match name {
        "lambda" => {
            if value < 0.0 {
                return Err(Error::Config(format!("lambda must be >= 0, got {value}")));
            }
            gcfg.strength = value;
        }
        "chi" => gcfg.start_step = as_level(value, "chi")?,
        "delta" => pcfg.prior_noise_level = as_level(value, "delta")?,
        "m" => {
            let m = as_level(value, "m")?;
            pcfg.prefix_length = m;
            pcfg.max_iterations = default_max_iterations(n, m);
        }
        other => {
            return Err(Error::Config(format!(
                "unknown sweep parameter '{other}'; known: lambda, chi, m, delta"
            )))
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub controller: ControllerKind,
    pub difficulty: Difficulty,
    pub obs_mode: ObsMode,
    pub params: Vec<(String, f64)>,
    pub summary: MetricsSummary,
}

fn csv_header(spec: &SweepSpec) -> String {
    let mut cols = vec!["controller".to_string(), "difficulty".to_string(), "obs_mode".to_string()];
    cols.extend(spec.grid.iter().map(|(name, _)| name.clone()));
    cols.extend(
        ["sr", "cr", "ncr", "mean_model_evals", "mean_refine_hz", "n"].map(String::from),
    );
    cols.join(",")
}

fn csv_row(row: &SweepRow) -> String {
    let mut cols = vec![
        row.controller.name().to_string(),
        row.difficulty.name().to_string(),
        row.obs_mode.to_string(),
    ];
    cols.extend(row.params.iter().map(|(_, v)| format!("{v}")));
    let s = &row.summary;
    cols.push(format!("{}", s.sr()));
    cols.push(format!("{}", s.cr()));
    cols.push(format!("{}", s.ncr()));
    cols.push(format!("{}", s.mean_model_evals));
    cols.push(format!("{}", s.mean_refine_hz));
    cols.push(format!("{}", s.episodes));
    cols.join(",")
}

fn parse_resumed_row(
    line: &str,
    spec: &SweepSpec,
    expected: &(ControllerKind, Vec<(String, f64)>),
    path: &Path,
) -> Result<SweepRow> {
    let cols: Vec<&str> = line.split(',').collect();
    let want_cols = 3 + spec.grid.len() + 6;
    if cols.len() != want_cols {
        return Err(Error::format(path, format!("row has {} columns, expected {want_cols}", cols.len())));
    }
    let (kind, params) = expected;
    if cols[0] != kind.name() {
        return Err(Error::format(
            path,
            format!("existing row controller '{}' does not match expected '{}'", cols[0], kind.name()),
        ));
    }
    if cols[1] != spec.difficulty.name() || cols[2] != spec.obs_mode.to_string() {
        return Err(Error::format(path, "existing row difficulty/obs_mode does not match sweep"));
    }
    for (i, (name, value)) in params.iter().enumerate() {
        let got: f64 = cols[3 + i]
            .parse()
            .map_err(|_| Error::format(path, format!("invalid value for {name}")))?;
        if got != *value {
            return Err(Error::format(
                path,
                format!("existing row {name}={got} does not match expected {value}"),
            ));
        }
    }
    let base = 3 + spec.grid.len();
    let parse_f = |i: usize, name: &str| -> Result<f64> {
        cols[base + i]
            .parse::<f64>()
            .map_err(|_| Error::format(path, format!("invalid value for {name}")))
    };
    let episodes: usize = cols[base + 5]
        .parse()
        .map_err(|_| Error::format(path, "invalid value for n"))?;
    let sr = parse_f(0, "sr")?;
    let cr = parse_f(1, "cr")?;
    let ncr = parse_f(2, "ncr")?;
    let successes = (sr * episodes as f64).round() as usize;
    let collisions = (cr * episodes as f64).round() as usize;
    let non_completions = (ncr * episodes as f64).round() as usize;
    if successes + collisions + non_completions != episodes {
        return Err(Error::format(path, "resumed row outcome counts do not partition n"));
    }
    Ok(SweepRow {
        controller: *kind,
        difficulty: spec.difficulty,
        obs_mode: spec.obs_mode,
        params: params.clone(),
        summary: MetricsSummary {
            successes,
            collisions,
            non_completions,
            episodes,
            mean_refine_hz: parse_f(4, "mean_refine_hz")?,
            mean_model_evals: parse_f(3, "mean_model_evals")?,
        },
    })
}

/// Run a sweep, appending one CSV row per (cell, controller) as it
/// completes. Re-running against a partially written file skips the
/// completed prefix and continues, so an interrupted sweep converges to
/// the same final file as an uninterrupted one.
pub fn run_sweep(env: &ExperimentEnv<'_>, spec: &SweepSpec, csv_path: &Path) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    // Validate parameter names up front.
    for (name, values) in &spec.grid {
        let mut pcfg = env.planner.clone();
        let mut gcfg = env.guidance.clone();
        apply_param(name, values[0], &mut pcfg, &mut gcfg, env.model.trajectory_len())?;
    }

    let cells = spec.cells();
    let mut expected: Vec<(ControllerKind, Vec<(String, f64)>)> = Vec::new();
    for cell in &cells {
        for kind in &spec.controllers {
            expected.push((*kind, cell.clone()));
        }
    }

    let header = csv_header(spec);
    let mut completed: Vec<SweepRow> = Vec::new();
    if csv_path.exists() {
        let text = fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let mut lines = text.split_inclusive('\n');
        match lines.next() {
            Some(first) if first.trim_end_matches('\n') == header => {}
            Some(first) => {
                return Err(Error::format(
                    csv_path,
                    format!("existing header '{}' does not match this sweep", first.trim_end()),
                ))
            }
            None => {}
        }
        for line in lines {
            // A line without its newline was interrupted mid-write; drop it
            // and recompute from there.
            if !line.ends_with('\n') {
                break;
            }
            let trimmed = line.trim_end();
            if trimmed.is_empty() {
                continue;
            }
            if completed.len() >= expected.len() {
                return Err(Error::format(csv_path, "existing file has more rows than this sweep"));
            }
            let row = parse_resumed_row(trimmed, spec, &expected[completed.len()], csv_path)?;
            completed.push(row);
        }
    }

    // Rewrite the valid prefix, then append fresh rows incrementally.
    if let Some(parent) = csv_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut file = fs::File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
    writeln!(file, "{header}").map_err(|e| Error::io(csv_path, e))?;
    for row in &completed {
        writeln!(file, "{}", csv_row(row)).map_err(|e| Error::io(csv_path, e))?;
    }
    file.flush().map_err(|e| Error::io(csv_path, e))?;

    let (posed, seeds) = env.posed_scenes(spec.difficulty, spec.n_scenes, spec.n_poses)?;
    let obs = ObservationModel { mode: spec.obs_mode, ..env.observation.clone() };
    let mut rows = completed;
    for (kind, params) in expected.iter().skip(rows.len()) {
        let mut pcfg = PlannerConfig { controller: *kind, ..env.planner.clone() };
        let mut gcfg = env.guidance.clone();
        for (name, value) in params {
            apply_param(name, *value, &mut pcfg, &mut gcfg, env.model.trajectory_len())?;
        }
        let records = env.run_row(&posed, &seeds, &pcfg, &gcfg, &obs)?;
        let row = SweepRow {
            controller: *kind,
            difficulty: spec.difficulty,
            obs_mode: spec.obs_mode,
            params: params.clone(),
            summary: aggregate(&records)?,
        };
        writeln!(file, "{}", csv_row(&row)).map_err(|e| Error::io(csv_path, e))?;
        file.flush().map_err(|e| Error::io(csv_path, e))?;
        rows.push(row);
    }
    Ok(rows)
}

/// One acceptance-style check evaluated against run data.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub id: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(id: &str, pass: bool, detail: String) -> Self {
        Self { id: id.to_string(), pass, detail }
    }
}

/// Machine-readable verdict file: a JSON array of check outcomes.
pub fn write_verdict(checks: &[CheckOutcome], path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(checks)
        .map_err(|e| Error::format(path, format!("serializing verdict: {e}")))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

/// Count decisive pairs between two controllers' paired episode records
/// and return the one-sided sign-test p-value that `a` beats `b`.
pub fn paired_sign_test(a: &[EpisodeRecord], b: &[EpisodeRecord]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired records must align");
    let mut favorable = 0;
    let mut discordant = 0;
    for (ra, rb) in a.iter().zip(b.iter()) {
        let wa = ra.outcome == Outcome::Success;
        let wb = rb.outcome == Outcome::Success;
        if wa != wb {
            discordant += 1;
            if wa {
                favorable += 1;
            }
        }
    }
    sign_test_p(favorable, discordant)
}

/// Structural ordering checks over a full-observation benchmark: CAPE at
/// least ties the refinement baseline, which at least ties one-shot
/// planning, with a 0.10 success-rate margin between the ends backed by a
/// paired sign test.
pub fn check_controller_ordering(result: &BenchResult) -> Vec<CheckOutcome> {
    let mut checks = Vec::new();
    let (Some(cape), Some(refine), Some(mpd)) = (
        result.row(ControllerKind::Cape),
        result.row(ControllerKind::MpdRefine),
        result.row(ControllerKind::Mpd),
    ) else {
        checks.push(CheckOutcome::new(
            "controller-ordering",
            false,
            "benchmark is missing a controller row".into(),
        ));
        return checks;
    };
    let (sr_c, sr_r, sr_m) = (cape.summary.sr(), refine.summary.sr(), mpd.summary.sr());
    checks.push(CheckOutcome::new(
        "controller-ordering",
        sr_c >= sr_r && sr_r >= sr_m,
        format!("sr cape={sr_c:.3} mpd-refine={sr_r:.3} mpd={sr_m:.3}"),
    ));
    checks.push(CheckOutcome::new(
        "cape-mpd-margin",
        sr_c - sr_m >= 0.10,
        format!("sr(cape) - sr(mpd) = {:.3}", sr_c - sr_m),
    ));
    let p = paired_sign_test(&cape.records, &mpd.records);
    checks.push(CheckOutcome::new(
        "cape-mpd-sign-test",
        p < 0.05,
        format!("one-sided paired sign test p = {p:.4}"),
    ));
    checks
}

/// Limited-observation gap: CAPE over one-shot planning by at least 0.15.
pub fn check_limited_gap(result: &BenchResult) -> CheckOutcome {
    let (Some(cape), Some(mpd)) =
        (result.row(ControllerKind::Cape), result.row(ControllerKind::Mpd))
    else {
        return CheckOutcome::new("limited-gap", false, "benchmark is missing a controller row".into());
    };
    let gap = cape.summary.sr() - mpd.summary.sr();
    CheckOutcome::new(
        "limited-gap",
        gap >= 0.15,
        format!("sr(cape) - sr(mpd) = {gap:.3} under limited observation"),
    )
}

/// Refinement economy: per refinement cycle CAPE spends `delta` model
/// evaluations against the full schedule for the restart baseline
/// (asserted from the episode counters), and its measured refinement rate
/// is at least 3x higher.
pub fn check_refinement_economy(
    result: &BenchResult,
    delta: usize,
    diffusion_steps: usize,
) -> Vec<CheckOutcome> {
    let mut checks = Vec::new();
    let (Some(cape), Some(refine)) =
        (result.row(ControllerKind::Cape), result.row(ControllerKind::MpdRefine))
    else {
        checks.push(CheckOutcome::new(
            "refine-evals-per-cycle",
            false,
            "benchmark is missing a controller row".into(),
        ));
        return checks;
    };
    let t = diffusion_steps as u64;
    let d = delta as u64;
    let cape_ok = cape
        .records
        .iter()
        .all(|r| r.model_eval_count == t + d * r.refine_count);
    let refine_ok = refine
        .records
        .iter()
        .all(|r| r.model_eval_count == t + t * r.refine_count);
    checks.push(CheckOutcome::new(
        "refine-evals-per-cycle",
        cape_ok && refine_ok,
        format!(
            "cape spends {d} evals per refinement, restart baseline {t}; ratio {:.1}",
            t as f64 / d as f64
        ),
    ));
    let (hz_c, hz_r) = (cape.summary.mean_refine_hz, refine.summary.mean_refine_hz);
    checks.push(CheckOutcome::new(
        "refine-rate-3x",
        hz_c >= 3.0 * hz_r,
        format!("mean refine rate: cape {hz_c:.2} Hz vs mpd-refine {hz_r:.2} Hz"),
    ));
    checks
}

fn sr_for(rows: &[SweepRow], kind: ControllerKind, param: &str) -> Vec<(f64, f64)> {
    let mut points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.controller == kind)
        .filter_map(|r| {
            r.params
                .iter()
                .find(|(name, _)| name == param)
                .map(|(_, v)| (*v, r.summary.sr()))
        })
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    points
}

/// Guidance-strength robustness: CAPE's success-rate spread across the
/// lambda grid is strictly smaller than the restart baseline's on the same
/// paired scenes.
pub fn check_lambda_robustness(rows: &[SweepRow]) -> CheckOutcome {
    let spread = |kind| {
        let points = sr_for(rows, kind, "lambda");
        let min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        max - min
    };
    let cape = spread(ControllerKind::Cape);
    let refine = spread(ControllerKind::MpdRefine);
    CheckOutcome::new(
        "lambda-robustness",
        cape.is_finite() && refine.is_finite() && cape < refine,
        format!("sr range across lambda: cape {cape:.3} vs mpd-refine {refine:.3}"),
    )
}

/// Prefix/noise trend: short prefix with low prior noise at least ties the
/// long-prefix high-noise corner.
pub fn check_m_delta_trend(rows: &[SweepRow]) -> CheckOutcome {
    let find = |m: f64, delta: f64| {
        rows.iter()
            .filter(|r| r.controller == ControllerKind::Cape)
            .find(|r| {
                r.params.iter().any(|(n, v)| n == "m" && *v == m)
                    && r.params.iter().any(|(n, v)| n == "delta" && *v == delta)
            })
            .map(|r| r.summary.sr())
    };
    match (find(2.0, 2.0), find(10.0, 10.0)) {
        (Some(fast), Some(slow)) => CheckOutcome::new(
            "m-delta-trend",
            fast >= slow,
            format!("sr(m=2, delta=2) = {fast:.3} vs sr(m=10, delta=10) = {slow:.3}"),
        ),
        _ => CheckOutcome::new("m-delta-trend", false, "sweep is missing the corner cells".into()),
    }
}

/// Guidance start-step profile: the best chi lies within 2 of 5, or the
/// whole profile is flat (spread below 0.05).
pub fn check_chi_profile(rows: &[SweepRow]) -> CheckOutcome {
    let points = sr_for(rows, ControllerKind::Cape, "chi");
    if points.is_empty() {
        return CheckOutcome::new("chi-profile", false, "sweep has no chi rows".into());
    }
    let best = points.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let flat = max - min < 0.05;
    let near_five = (best.0 - 5.0).abs() <= 2.0;
    CheckOutcome::new(
        "chi-profile",
        flat || near_five,
        format!("best chi = {} (sr {:.3}), profile spread {:.3}", best.0, best.1, max - min),
    )
}

/// One curve file per swept parameter.
pub fn emit_sweep_plots(spec: &SweepSpec, rows: &[SweepRow], out_dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for (param, _) in &spec.grid {
        let mut series = Vec::new();
        for kind in &spec.controllers {
            let mut by_value: std::collections::BTreeMap<ordered_key::Key, (f64, usize)> =
                Default::default();
            for (value, sr) in sr_for(rows, *kind, param) {
                let entry = by_value.entry(ordered_key::Key::from(value)).or_insert((0.0, 0));
                entry.0 += sr;
                entry.1 += 1;
            }
            let points: Vec<(f64, f64)> = by_value
                .into_iter()
                .map(|(value, (sum, count))| (value.into_inner(), sum / count as f64))
                .collect();
            series.push((kind.name().to_string(), points));
        }
        let path = out_dir.join(format!("sr_vs_{param}.svg"));
        crate::plots::write_sr_curve(param, &series, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Executed-path overlays for the first pose of every scene.
pub fn emit_bench_plots(result: &BenchResult, n_poses: usize, out_dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for row in &result.rows {
        for (scene_idx, episode_idx) in (0..result.scenes.len()).step_by(n_poses).enumerate() {
            let scene = &result.scenes[episode_idx];
            let record = &row.records[episode_idx];
            let title = format!(
                "{} scene {scene_idx} ({}) [{}]",
                row.controller, result.difficulty, record.outcome
            );
            let path = out_dir.join(format!("overlay_{}_s{scene_idx:02}.svg", row.controller));
            crate::plots::write_episode_overlay(scene, &record.executed_path, &[], &title, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

mod ordered_key {
    /// Total-ordered f64 key for grouping sweep values.
    #[derive(PartialEq, Eq, PartialOrd, Ord)]
    pub struct Key(u64);

    impl From<f64> for Key {
        fn from(v: f64) -> Self {
            let bits = v.to_bits();
            // Flip ordering for negative values so the integer order
            // matches the float order.
            Key(if bits >> 63 == 0 { bits | (1 << 63) } else { !bits })
        }
    }

    impl Key {
        pub fn into_inner(&self) -> f64 {
            let bits = self.0;
            f64::from_bits(if bits >> 63 == 1 { bits & !(1 << 63) } else { !bits })
        }
    }
}

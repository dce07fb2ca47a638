//! Simulated cluttered workspaces: randomized scene generation,
//! full/limited observation models, ground-truth collision checking, and
//! episode execution.
//!
//! The planner never sees exact obstacle geometry: it receives only
//! obstacle point clouds produced by the observation model, while
//! collision outcomes are judged against the true spheres.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::denoiser::{Denoiser, TaskContext};
use crate::error::{Error, Result};
use crate::guidance::{GuidanceConfig, ObstaclePointCloud};
use crate::planner::{Controller, PlannerConfig};
use crate::rng::{self, rng_from_seed, streams};
use crate::schedule::DiffusionSchedule;
use crate::trajectory::{euclidean, Bounds};

/// Scene difficulty tiers. Obstacle counts per tier: easy has 25 small,
/// medium has 15 small and 2 medium, hard has 25 small and 2 large.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Difficulty {
    Empty,
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 4] =
        [Difficulty::Empty, Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn name(&self) -> &'static str {
        match self {
            Difficulty::Empty => "empty",
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }

    /// (count, radius) groups making up the tier's clutter.
    fn obstacle_spec(&self) -> &'static [(usize, f64)] {
        match self {
            Difficulty::Empty => &[],
            Difficulty::Easy => &[(25, SMALL_RADIUS)],
            Difficulty::Medium => &[(15, SMALL_RADIUS), (2, MEDIUM_RADIUS)],
            Difficulty::Hard => &[(25, SMALL_RADIUS), (2, LARGE_RADIUS)],
        }
    }
}

impl std::str::FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "empty" => Ok(Difficulty::Empty),
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            other => Err(Error::Usage(format!(
                "unknown difficulty '{other}'; valid names: empty, easy, medium, hard"
            ))),
        }
    }
}

impl std::fmt::Display for Difficulty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub const SMALL_RADIUS: f64 = 0.02;
pub const MEDIUM_RADIUS: f64 = 0.05;
pub const LARGE_RADIUS: f64 = 0.08;
/// Minimum straight-line start-goal separation.
pub const MIN_SEPARATION: f64 = 0.4;

#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub center: Array1<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub bounds: Bounds,
    pub obstacles: Vec<Obstacle>,
    pub start: Array1<f64>,
    pub goal: Array1<f64>,
    pub difficulty: Difficulty,
    pub seed: u64,
}

fn start_goal_clearance() -> f64 {
    GuidanceConfig::default().threshold()
}

fn clear_of_obstacles(p: &Array1<f64>, obstacles: &[Obstacle], clearance: f64) -> bool {
    obstacles
        .iter()
        .all(|o| euclidean(p.view(), o.center.view()) >= o.radius + clearance)
}

/// Generate a randomized scene, deterministic per seed. Obstacle
/// placements are rejection-sampled until the start and goal keep their
/// clearance; a scene too dense to satisfy that within 1000 attempts is a
/// generation error.
pub fn generate_scene(difficulty: Difficulty, seed: u64, bounds: &Bounds) -> Result<Scene> {
    let dim = bounds.dim();
    let mut rng = rng_from_seed(rng::derive_seed(seed, streams::SCENE, 0));
    let clearance = start_goal_clearance();

    let mut budget = 1000u32;
    let (start, goal) = loop {
        if budget == 0 {
            return Err(Error::Generation("could not place start and goal".into()));
        }
        budget -= 1;
        let start = Array1::from_shape_fn(dim, |k| rng.gen_range(bounds.lo[k]..bounds.hi[k]));
        let goal = Array1::from_shape_fn(dim, |k| rng.gen_range(bounds.lo[k]..bounds.hi[k]));
        if euclidean(start.view(), goal.view()) >= MIN_SEPARATION {
            break (start, goal);
        }
    };

    let mut obstacles = Vec::new();
    let mut budget = 1000u32;
    for &(count, radius) in difficulty.obstacle_spec() {
        for _ in 0..count {
            loop {
                if budget == 0 {
                    return Err(Error::Generation(format!(
                        "scene too dense: exceeded 1000 rejection attempts placing {} obstacles",
                        difficulty.name()
                    )));
                }
                budget -= 1;
                let center =
                    Array1::from_shape_fn(dim, |k| rng.gen_range(bounds.lo[k]..bounds.hi[k]));
                let clear_start = euclidean(center.view(), start.view()) >= radius + clearance;
                let clear_goal = euclidean(center.view(), goal.view()) >= radius + clearance;
                if clear_start && clear_goal {
                    obstacles.push(Obstacle { center, radius });
                    break;
                }
            }
        }
    }

    Ok(Scene { bounds: bounds.clone(), obstacles, start, goal, difficulty, seed })
}

impl Scene {
    /// Sample an alternative initial pose: collision-clear and at least the
    /// minimum separation from the goal.
    pub fn sample_start(&self, seed: u64) -> Result<Array1<f64>> {
        let dim = self.bounds.dim();
        let mut rng = rng_from_seed(rng::derive_seed(seed, streams::POSE, 0));
        let clearance = start_goal_clearance();
        for _ in 0..1000 {
            let p = Array1::from_shape_fn(dim, |k| rng.gen_range(self.bounds.lo[k]..self.bounds.hi[k]));
            if euclidean(p.view(), self.goal.view()) >= MIN_SEPARATION
                && clear_of_obstacles(&p, &self.obstacles, clearance)
            {
                return Ok(p);
            }
        }
        Err(Error::Generation("could not sample an initial pose".into()))
    }

    pub fn with_start(&self, start: Array1<f64>) -> Scene {
        Scene { start, ..self.clone() }
    }
}

/// Full observation reveals complete obstacle point clouds; limited
/// observation reveals surface points within a sensing disk around the
/// robot and remembers everything seen so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObsMode {
    Full,
    Limited,
}

impl std::str::FromStr for ObsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(ObsMode::Full),
            "limited" => Ok(ObsMode::Limited),
            other => Err(Error::Usage(format!(
                "unknown observation mode '{other}'; valid names: full, limited"
            ))),
        }
    }
}

impl std::fmt::Display for ObsMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ObsMode::Full => "full",
            ObsMode::Limited => "limited",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub mode: ObsMode,
    pub sensing_radius: f64,
    pub samples_per_obstacle: usize,
}

impl Default for ObservationModel {
    fn default() -> Self {
        Self { mode: ObsMode::Full, sensing_radius: 0.25, samples_per_obstacle: 64 }
    }
}

impl ObservationModel {
    pub fn validate(&self) -> Result<()> {
        if self.mode == ObsMode::Limited && self.sensing_radius <= 0.0 {
            return Err(Error::Config("sensing radius must be positive in limited mode".into()));
        }
        if self.samples_per_obstacle == 0 {
            return Err(Error::Config("samples per obstacle must be positive".into()));
        }
        Ok(())
    }
}

/// Deterministic surface samples for every obstacle of a scene, plus the
/// persistent set of revealed sample indices.
#[derive(Debug, Clone)]
pub struct ObservationState {
    samples: Vec<Array1<f64>>,
    revealed: BTreeSet<usize>,
    model: ObservationModel,
    dim: usize,
}

fn surface_samples(scene: &Scene, per_obstacle: usize) -> Vec<Array1<f64>> {
    let dim = scene.bounds.dim();
    let mut all = Vec::with_capacity(scene.obstacles.len() * per_obstacle);
    for (idx, obstacle) in scene.obstacles.iter().enumerate() {
        let mut rng =
            rng_from_seed(rng::derive_seed(scene.seed, streams::SURFACE, idx as u64));
        for _ in 0..per_obstacle {
            let mut dir = Array1::zeros(dim);
            if dim == 2 {
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                dir[0] = theta.cos();
                dir[1] = theta.sin();
            } else {
                loop {
                    for v in dir.iter_mut() {
                        *v = rng.sample::<f64, _>(rand_distr::StandardNormal);
                    }
                    let norm = dir.dot(&dir).sqrt();
                    if norm > 1e-9 {
                        dir /= norm;
                        break;
                    }
                }
            }
            all.push(&obstacle.center + &(dir * obstacle.radius));
        }
    }
    all
}

impl ObservationState {
    pub fn new(scene: &Scene, model: &ObservationModel) -> Result<Self> {
        model.validate()?;
        let samples = surface_samples(scene, model.samples_per_obstacle);
        let mut state = Self {
            samples,
            revealed: BTreeSet::new(),
            model: model.clone(),
            dim: scene.bounds.dim(),
        };
        if state.model.mode == ObsMode::Full {
            state.revealed = (0..state.samples.len()).collect();
        }
        Ok(state)
    }

    /// Update the revealed set from the given position and return the cloud
    /// accumulated so far. Observing twice from the same pose is a no-op.
    pub fn observe(&mut self, position: &Array1<f64>) -> ObstaclePointCloud {
        if self.model.mode == ObsMode::Limited {
            for (i, p) in self.samples.iter().enumerate() {
                if euclidean(position.view(), p.view()) <= self.model.sensing_radius {
                    self.revealed.insert(i);
                }
            }
        }
        self.cloud()
    }

    pub fn cloud(&self) -> ObstaclePointCloud {
        let mut points = Array2::zeros((self.revealed.len(), self.dim));
        for (row, idx) in self.revealed.iter().enumerate() {
            points.row_mut(row).assign(&self.samples[*idx]);
        }
        ObstaclePointCloud::new(points).expect("surface samples are finite")
    }

    pub fn revealed_count(&self) -> usize {
        self.revealed.len()
    }

    pub fn total_samples(&self) -> usize {
        self.samples.len()
    }
}

fn point_segment_distance(p: &Array1<f64>, a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(&ab);
    if len2 == 0.0 {
        return euclidean(p.view(), a.view());
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    let closest = a + &(ab * t);
    euclidean(p.view(), closest.view())
}

/// Swept-sphere test: true iff the segment passes strictly closer than
/// `radius + r_eef` to any obstacle center. Exact tangency counts as free.
pub fn check_segment_collision(a: &Array1<f64>, b: &Array1<f64>, scene: &Scene, r_eef: f64) -> bool {
    scene
        .obstacles
        .iter()
        .any(|o| point_segment_distance(&o.center, a, b) < o.radius + r_eef)
}

/// Episode outcome: exactly one of success, collision, or non-completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Success,
    Collision,
    NonCompletion,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::NonCompletion => "non-completion",
        })
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub outcome: Outcome,
    pub executed_path: Vec<Array1<f64>>,
    pub model_eval_count: u64,
    pub refine_count: u64,
    pub wall_time_secs: f64,
    pub iterations: usize,
}

/// Per-cycle plan snapshot for plotting and debugging.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PlanSnapshot {
    pub iteration: usize,
    pub noise_level: usize,
    pub waypoints: Vec<Vec<f64>>,
}

/// Wall-clock or injected deterministic timing for episode records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Timing {
    Wall,
    /// Every episode reports exactly this many seconds; keeps derived
    /// rate columns deterministic for reproducibility tests.
    Fixed(f64),
}

/// Drive one controller through one scene. Failures are outcomes, not
/// errors: the first executed segment that hits an obstacle ends the
/// episode as a collision, reaching the goal tolerance is a success, and
/// exhausting the iteration budget is a non-completion.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    scene: &Scene,
    model: &Denoiser,
    sched: &DiffusionSchedule,
    pcfg: &PlannerConfig,
    gcfg: &GuidanceConfig,
    obs: &ObservationModel,
    seed: u64,
    timing: Timing,
    mut snapshots: Option<&mut Vec<PlanSnapshot>>,
) -> Result<EpisodeRecord> {
    let clock = Instant::now();
    let ctx = TaskContext::new(scene.start.clone(), scene.goal.clone())?;
    let mut controller = Controller::new(model, sched, pcfg.clone(), gcfg.clone(), ctx)?;
    let mut obs_state = ObservationState::new(scene, obs)?;
    let mut rng = rng_from_seed(rng::derive_seed(seed, streams::EPISODE, 0));

    let mut collided = false;
    while !controller.state().done {
        let cloud = obs_state.observe(&controller.state().position);
        let before = controller.state().position.clone();
        let step = controller.step(&cloud, &mut rng)?;
        if let (Some(snaps), Some(level)) = (snapshots.as_deref_mut(), step.replanned_from) {
            if let Some(plan) = &controller.state().current_plan {
                snaps.push(PlanSnapshot {
                    iteration: controller.state().iteration,
                    noise_level: level,
                    waypoints: plan.waypoints.rows().into_iter().map(|r| r.to_vec()).collect(),
                });
            }
        }
        let mut prev = before;
        for p in &step.executed {
            if check_segment_collision(&prev, p, scene, gcfg.eef_radius) {
                collided = true;
                break;
            }
            obs_state.observe(p);
            prev = p.clone();
        }
        if collided {
            break;
        }
    }

    let at_goal = euclidean(controller.state().position.view(), scene.goal.view())
        <= pcfg.goal_tolerance;
    let outcome = if collided {
        Outcome::Collision
    } else if at_goal {
        Outcome::Success
    } else {
        Outcome::NonCompletion
    };
    let wall_time_secs = match timing {
        Timing::Wall => clock.elapsed().as_secs_f64(),
        Timing::Fixed(secs) => secs,
    };
    let stats = controller.stats();
    Ok(EpisodeRecord {
        outcome,
        executed_path: controller.state().executed_path.clone(),
        model_eval_count: stats.model_evals,
        refine_count: stats.refine_count,
        wall_time_secs,
        iterations: controller.state().iteration,
    })
}

const SCENE_MAGIC: &str = "capescene v1";

/// Write a scene as structured text: a key-value header and one obstacle
/// per line. Coordinates carry 17 significant digits, so round trips are
/// exact.
pub fn write_scene(scene: &Scene, path: &Path) -> Result<()> {
    let fmt_vec = |v: &Array1<f64>| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ");
    let mut out = String::new();
    out.push_str(SCENE_MAGIC);
    out.push('\n');
    out.push_str(&format!("d {}\n", scene.bounds.dim()));
    out.push_str(&format!("difficulty {}\n", scene.difficulty));
    out.push_str(&format!("seed {}\n", scene.seed));
    out.push_str(&format!("bounds_lo {}\n", fmt_vec(&scene.bounds.lo)));
    out.push_str(&format!("bounds_hi {}\n", fmt_vec(&scene.bounds.hi)));
    out.push_str(&format!("start {}\n", fmt_vec(&scene.start)));
    out.push_str(&format!("goal {}\n", fmt_vec(&scene.goal)));
    out.push_str(&format!("obstacles {}\n", scene.obstacles.len()));
    for o in &scene.obstacles {
        out.push_str(&format!("{} {:.16e}\n", fmt_vec(&o.center), o.radius));
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let magic = lines.next().unwrap_or_default();
    if magic != SCENE_MAGIC {
        return Err(Error::format(path, format!("bad version tag '{magic}'")));
    }
    let mut fields = std::collections::BTreeMap::new();
    let mut obstacle_lines = Vec::new();
    let mut obstacle_count: Option<usize> = None;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        if obstacle_count.is_some() {
            obstacle_lines.push(line.to_string());
            continue;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| Error::format(path, format!("malformed header line '{line}'")))?;
        if key == "obstacles" {
            obstacle_count = Some(
                value.parse().map_err(|_| Error::format(path, "invalid value for obstacles"))?,
            );
        } else {
            fields.insert(key.to_string(), value.to_string());
        }
    }
    let get = |key: &str| -> Result<String> {
        fields
            .get(key)
            .cloned()
            .ok_or_else(|| Error::format(path, format!("header missing field {key}")))
    };
    let parse_vec = |key: &str| -> Result<Array1<f64>> {
        let parsed: std::result::Result<Vec<f64>, _> =
            get(key)?.split_whitespace().map(|v| v.parse::<f64>()).collect();
        parsed
            .map(Array1::from_vec)
            .map_err(|_| Error::format(path, format!("invalid value for {key}")))
    };
    let d: usize = get("d")?.parse().map_err(|_| Error::format(path, "invalid value for d"))?;
    let difficulty: Difficulty = get("difficulty")?.parse()
        .map_err(|_| Error::format(path, "invalid value for difficulty"))?;
    let seed: u64 =
        get("seed")?.parse().map_err(|_| Error::format(path, "invalid value for seed"))?;
    let bounds = Bounds::new(parse_vec("bounds_lo")?, parse_vec("bounds_hi")?)
        .map_err(|e| Error::format(path, format!("invalid bounds: {e}")))?;
    let start = parse_vec("start")?;
    let goal = parse_vec("goal")?;
    if bounds.dim() != d || start.len() != d || goal.len() != d {
        return Err(Error::format(path, format!("fields disagree with d {d}")));
    }
    let count = obstacle_count.ok_or_else(|| Error::format(path, "header missing field obstacles"))?;
    if obstacle_lines.len() != count {
        return Err(Error::format(
            path,
            format!("obstacles: header says {count} but file has {}", obstacle_lines.len()),
        ));
    }
    let mut obstacles = Vec::with_capacity(count);
    for line in obstacle_lines {
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| Error::format(path, format!("invalid obstacle entry '{v}'"))))
            .collect::<Result<_>>()?;
        if values.len() != d + 1 {
            return Err(Error::format(path, "obstacle line has wrong arity"));
        }
        obstacles.push(Obstacle {
            center: Array1::from_vec(values[..d].to_vec()),
            radius: values[d],
        });
    }
    Ok(Scene { bounds, obstacles, start, goal, difficulty, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::DenoiserConfig;
    use crate::planner::ControllerKind;
    use crate::schedule::make_schedule;
    use crate::trajectory::Normalizer;
    use ndarray::array;

    fn unit() -> Bounds {
        Bounds::unit_square()
    }

    #[test]
    fn difficulty_tiers_have_the_stated_clutter() {
        let empty = generate_scene(Difficulty::Empty, 1, &unit()).unwrap();
        assert!(empty.obstacles.is_empty());

        let easy = generate_scene(Difficulty::Easy, 1, &unit()).unwrap();
        assert_eq!(easy.obstacles.len(), 25);
        assert!(easy.obstacles.iter().all(|o| o.radius == SMALL_RADIUS));

        let medium = generate_scene(Difficulty::Medium, 1, &unit()).unwrap();
        assert_eq!(medium.obstacles.len(), 17);
        assert_eq!(medium.obstacles.iter().filter(|o| o.radius == SMALL_RADIUS).count(), 15);
        assert_eq!(medium.obstacles.iter().filter(|o| o.radius == MEDIUM_RADIUS).count(), 2);

        let hard = generate_scene(Difficulty::Hard, 1, &unit()).unwrap();
        assert_eq!(hard.obstacles.len(), 27);
        assert_eq!(hard.obstacles.iter().filter(|o| o.radius == LARGE_RADIUS).count(), 2);
    }

    #[test]
    fn scenes_are_seed_deterministic_and_respect_clearance() {
        let a = generate_scene(Difficulty::Medium, 9, &unit()).unwrap();
        let b = generate_scene(Difficulty::Medium, 9, &unit()).unwrap();
        assert_eq!(a, b);
        assert!(euclidean(a.start.view(), a.goal.view()) >= MIN_SEPARATION);
        let clearance = start_goal_clearance();
        for o in &a.obstacles {
            assert!(euclidean(o.center.view(), a.start.view()) >= o.radius + clearance);
            assert!(euclidean(o.center.view(), a.goal.view()) >= o.radius + clearance);
        }
        let c = generate_scene(Difficulty::Medium, 10, &unit()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sampled_poses_respect_the_same_invariants() {
        let scene = generate_scene(Difficulty::Hard, 4, &unit()).unwrap();
        for seed in 0..5 {
            let p = scene.sample_start(seed).unwrap();
            assert!(euclidean(p.view(), scene.goal.view()) >= MIN_SEPARATION);
            assert!(clear_of_obstacles(&p, &scene.obstacles, start_goal_clearance()));
        }
    }

    #[test]
    fn segment_collision_closed_form_cases() {
        let scene = Scene {
            bounds: unit(),
            obstacles: vec![Obstacle { center: array![0.5, 0.0], radius: 0.1 }],
            start: array![0.0, 0.5],
            goal: array![1.0, 0.5],
            difficulty: Difficulty::Easy,
            seed: 0,
        };
        let r_eef = 0.08;
        // Straight through the center.
        assert!(check_segment_collision(&array![0.0, 0.0], &array![1.0, 0.0], &scene, r_eef));
        // Tangent at exactly radius + r_eef: strict inequality, no contact.
        assert!(!check_segment_collision(&array![0.0, 0.18], &array![1.0, 0.18], &scene, r_eef));
        assert!(check_segment_collision(&array![0.0, 0.1799], &array![1.0, 0.1799], &scene, r_eef));
        // Empty scene never collides.
        let empty = generate_scene(Difficulty::Empty, 0, &unit()).unwrap();
        assert!(!check_segment_collision(&array![0.0, 0.0], &array![1.0, 1.0], &empty, r_eef));
    }

    #[test]
    fn adding_an_obstacle_never_clears_a_colliding_path() {
        let mut scene = Scene {
            bounds: unit(),
            obstacles: vec![Obstacle { center: array![0.5, 0.5], radius: 0.05 }],
            start: array![0.1, 0.5],
            goal: array![0.9, 0.5],
            difficulty: Difficulty::Easy,
            seed: 0,
        };
        let path = [array![0.1, 0.5], array![0.5, 0.5], array![0.9, 0.5]];
        let collides = |scene: &Scene| {
            path.windows(2).any(|w| check_segment_collision(&w[0], &w[1], scene, 0.08))
        };
        assert!(collides(&scene));
        scene.obstacles.push(Obstacle { center: array![0.3, 0.52], radius: 0.03 });
        assert!(collides(&scene));
    }

    #[test]
    fn full_observation_reveals_everything_up_front() {
        let scene = generate_scene(Difficulty::Medium, 3, &unit()).unwrap();
        let model = ObservationModel { mode: ObsMode::Full, ..Default::default() };
        let mut state = ObservationState::new(&scene, &model).unwrap();
        let cloud = state.observe(&scene.start);
        assert_eq!(cloud.len(), 64 * scene.obstacles.len());
    }

    #[test]
    fn limited_observation_accumulates_and_stays_a_subset() {
        let scene = Scene {
            bounds: unit(),
            obstacles: vec![
                Obstacle { center: array![0.2, 0.2], radius: 0.05 },
                Obstacle { center: array![0.9, 0.9], radius: 0.05 },
            ],
            start: array![0.2, 0.4],
            goal: array![0.9, 0.6],
            difficulty: Difficulty::Easy,
            seed: 11,
        };
        let model = ObservationModel {
            mode: ObsMode::Limited,
            sensing_radius: 0.25,
            samples_per_obstacle: 32,
        };
        let mut limited = ObservationState::new(&scene, &model).unwrap();
        let near = limited.observe(&array![0.2, 0.4]);
        assert!(near.len() > 0, "nearby obstacle should be visible");
        assert!(near.len() <= 32, "distant obstacle must stay hidden");
        // Idempotent from the same pose.
        let again = limited.observe(&array![0.2, 0.4]);
        assert_eq!(near, again);
        // Approach the far obstacle: its points appear and previous ones stay.
        let after = limited.observe(&array![0.9, 0.75]);
        assert!(after.len() > near.len());

        let full_model = ObservationModel { mode: ObsMode::Full, samples_per_obstacle: 32, ..Default::default() };
        let full = ObservationState::new(&scene, &full_model).unwrap().cloud();
        // Every limited point appears in the full sample table.
        for p in after.points().rows() {
            let present = full.points().rows().into_iter().any(|q| {
                p.iter().zip(q.iter()).all(|(a, b)| a == b)
            });
            assert!(present);
        }
    }

    fn tiny_model() -> Denoiser {
        let arch = DenoiserConfig { hidden_width: 12, depth: 2, time_embed_dim: 4 };
        let norm = Normalizer::from_bounds(&unit());
        Denoiser::new(8, 2, 6, arch, norm, 42).unwrap()
    }

    #[test]
    fn walled_off_scene_never_succeeds() {
        // A wall of overlapping obstacles across the workspace.
        let mut obstacles = Vec::new();
        for i in 0..11 {
            obstacles.push(Obstacle { center: array![0.1 * i as f64, 0.5], radius: 0.08 });
        }
        let scene = Scene {
            bounds: unit(),
            obstacles,
            start: array![0.5, 0.1],
            goal: array![0.5, 0.9],
            difficulty: Difficulty::Hard,
            seed: 0,
        };
        let model = tiny_model();
        let sched = make_schedule(6, 1e-4, 0.5).unwrap();
        let obs = ObservationModel::default();
        for kind in ControllerKind::ALL {
            let pcfg = PlannerConfig {
                prefix_length: 2,
                prior_noise_level: 2,
                max_iterations: 30,
                goal_tolerance: 0.02,
                controller: kind,
            };
            let record = run_episode(
                &scene,
                &model,
                &sched,
                &pcfg,
                &GuidanceConfig { start_step: 3, ..Default::default() },
                &obs,
                7,
                Timing::Fixed(1.0),
                None,
            )
            .unwrap();
            assert_ne!(record.outcome, Outcome::Success, "{kind}");
        }
    }

    #[test]
    fn episodes_are_deterministic_and_fill_counters() {
        let scene = generate_scene(Difficulty::Easy, 5, &unit()).unwrap();
        let model = tiny_model();
        let sched = make_schedule(6, 1e-4, 0.5).unwrap();
        let pcfg = PlannerConfig {
            prefix_length: 2,
            prior_noise_level: 2,
            max_iterations: 30,
            goal_tolerance: 0.02,
            controller: ControllerKind::Cape,
        };
        let gcfg = GuidanceConfig { start_step: 3, ..Default::default() };
        let obs = ObservationModel::default();
        let run = || {
            run_episode(&scene, &model, &sched, &pcfg, &gcfg, &obs, 3, Timing::Fixed(2.0), None)
                .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.executed_path, b.executed_path);
        assert_eq!(a.model_eval_count, b.model_eval_count);
        assert_eq!(a.wall_time_secs, 2.0);
        assert!(a.model_eval_count >= 6);
    }

    #[test]
    fn snapshots_record_each_replanning_cycle() {
        let scene = generate_scene(Difficulty::Empty, 2, &unit()).unwrap();
        let model = tiny_model();
        let sched = make_schedule(6, 1e-4, 0.5).unwrap();
        let pcfg = PlannerConfig {
            prefix_length: 2,
            prior_noise_level: 2,
            max_iterations: 10,
            goal_tolerance: 0.02,
            controller: ControllerKind::Cape,
        };
        let mut snaps = Vec::new();
        run_episode(
            &scene,
            &model,
            &sched,
            &pcfg,
            &GuidanceConfig::default(),
            &ObservationModel::default(),
            3,
            Timing::Fixed(1.0),
            Some(&mut snaps),
        )
        .unwrap();
        assert!(!snaps.is_empty());
        assert_eq!(snaps[0].noise_level, 6);
        for s in &snaps[1..] {
            assert_eq!(s.noise_level, 2);
        }
    }

    #[test]
    #[ignore]
    fn probe_scene_passability() {
        // Scratch calibration probe: grid BFS over free space (cells whose
        // centers clear every obstacle by r_eef) plus straight-line
        // collision fraction. Run with --ignored --nocapture.
        let r_eef = 0.08;
        let bounds = Bounds::desk(2);
        let extent = bounds.hi[0];
        for difficulty in [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard] {
            let mut passable = 0;
            let mut straight_free = 0;
            let total = 50;
            for seed in 0..total {
                let scene = generate_scene(difficulty, seed, &bounds).unwrap();
                if !check_segment_collision(&scene.start, &scene.goal, &scene, r_eef) {
                    straight_free += 1;
                }
                // 120x120 grid BFS from start cell to goal cell.
                let g = 120usize;
                let cell = |p: &Array1<f64>| {
                    let cx = ((p[0] / extent * g as f64) as usize).min(g - 1);
                    let cy = ((p[1] / extent * g as f64) as usize).min(g - 1);
                    (cx, cy)
                };
                let mut free = vec![true; g * g];
                for ix in 0..g {
                    for iy in 0..g {
                        let p = array![
                            (ix as f64 + 0.5) / g as f64 * extent,
                            (iy as f64 + 0.5) / g as f64 * extent
                        ];
                        let blocked = scene
                            .obstacles
                            .iter()
                            .any(|o| euclidean(p.view(), o.center.view()) < o.radius + r_eef);
                        free[ix * g + iy] = !blocked;
                    }
                }
                let (sx, sy) = cell(&scene.start);
                let (gx, gy) = cell(&scene.goal);
                let mut queue = std::collections::VecDeque::new();
                let mut seen = vec![false; g * g];
                if free[sx * g + sy] {
                    queue.push_back((sx, sy));
                    seen[sx * g + sy] = true;
                }
                let mut reached = false;
                while let Some((x, y)) = queue.pop_front() {
                    if (x, y) == (gx, gy) {
                        reached = true;
                        break;
                    }
                    let neighbors = [
                        (x.wrapping_sub(1), y),
                        (x + 1, y),
                        (x, y.wrapping_sub(1)),
                        (x, y + 1),
                    ];
                    for (nx, ny) in neighbors {
                        if nx < g && ny < g && free[nx * g + ny] && !seen[nx * g + ny] {
                            seen[nx * g + ny] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
                if reached {
                    passable += 1;
                }
            }
            println!(
                "{difficulty}: passable {passable}/{total}, straight-line free {straight_free}/{total}"
            );
        }
    }

    #[test]
    fn scene_file_round_trip_is_exact() {
        let scene = generate_scene(Difficulty::Hard, 123, &unit()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.txt");
        write_scene(&scene, &path).unwrap();
        let back = read_scene(&path).unwrap();
        assert_eq!(scene, back);
    }

    #[test]
    fn scene_file_obstacle_mismatch_names_the_field() {
        let scene = generate_scene(Difficulty::Easy, 1, &unit()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.txt");
        write_scene(&scene, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let doctored = text.replace("obstacles 25", "obstacles 26");
        fs::write(&path, doctored).unwrap();
        let err = read_scene(&path).unwrap_err();
        assert!(err.to_string().contains("obstacles"), "error was: {err}");
    }
}

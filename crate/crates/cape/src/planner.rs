//! Guided denoising and the receding-horizon controllers.
//!
//! Denoising runs in normalized diffusion coordinates; plans returned to
//! callers are world-coordinate level-0 trajectories whose endpoints are
//! written from the task context as the final step, so the clamp holds
//! exactly. The guidance gradient is computed on the denormalized
//! reverse-step mean and mapped back through the normalizer's scale.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use crate::denoiser::{Denoiser, TaskContext};
use crate::error::{Error, Result};
use crate::guidance::{cost_gradient, GuidanceConfig, ObstaclePointCloud};
use crate::rng::standard_normal_matrix;
use crate::schedule::{forward_noise_raw, reverse_mean_raw, DiffusionSchedule};
use crate::trajectory::{euclidean, path_length, resample_polyline, Normalizer, Trajectory};

/// Which controller drives an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    /// Prior-seeded iterative guided refinement.
    Cape,
    /// One-shot guided planning; the initial plan is executed to completion.
    Mpd,
    /// Refines every cycle, but each pass restarts from Gaussian noise.
    MpdRefine,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::Cape, ControllerKind::Mpd, ControllerKind::MpdRefine];

    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Cape => "cape",
            ControllerKind::Mpd => "mpd",
            ControllerKind::MpdRefine => "mpd-refine",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cape" => Ok(ControllerKind::Cape),
            "mpd" => Ok(ControllerKind::Mpd),
            "mpd-refine" | "mpd_refine" | "mpdrefine" => Ok(ControllerKind::MpdRefine),
            other => Err(Error::Usage(format!(
                "unknown controller '{other}'; valid names: {}",
                ControllerKind::valid_names()
            ))),
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Receding-horizon parameters. Defaults: prefix length 2, prior noise
/// level 2, goal tolerance 0.02 m, iteration cap 10 * (N / m).
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub prefix_length: usize,
    pub prior_noise_level: usize,
    pub max_iterations: usize,
    pub goal_tolerance: f64,
    pub controller: ControllerKind,
}

pub fn default_max_iterations(n: usize, prefix_length: usize) -> usize {
    10 * (n / prefix_length.max(1)).max(1)
}

impl PlannerConfig {
    pub fn defaults_for(controller: ControllerKind, n: usize) -> Self {
        Self {
            prefix_length: 2,
            prior_noise_level: 2,
            max_iterations: default_max_iterations(n, 2),
            goal_tolerance: 0.02,
            controller,
        }
    }

    pub fn validate(&self, n: usize, diffusion_steps: usize) -> Result<()> {
        if self.prefix_length < 1 || self.prefix_length >= n {
            return Err(Error::Config(format!(
                "prefix length {} outside 1..{n}",
                self.prefix_length
            )));
        }
        if self.prior_noise_level < 1 || self.prior_noise_level > diffusion_steps {
            return Err(Error::Config(format!(
                "prior noise level {} outside 1..={diffusion_steps}",
                self.prior_noise_level
            )));
        }
        if self.goal_tolerance <= 0.0 {
            return Err(Error::Config("goal tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Deterministic counters filled while planning.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlanStats {
    /// Calls into the noise predictor.
    pub model_evals: u64,
    /// Refinement passes (the initial plan does not count).
    pub refine_count: u64,
}

fn clamp_endpoints(x: &mut Array2<f64>, start: &Array1<f64>, goal: &Array1<f64>) {
    let n = x.nrows();
    x.row_mut(0).assign(start);
    x.row_mut(n - 1).assign(goal);
}

/// Reverse the diffusion chain from `t_start` down to 1.
///
/// Each step takes the posterior mean under the model's noise prediction,
/// applies cost-based guidance for `t <= start_step`, adds the scheduled
/// reverse noise (zero at t = 1), and re-clamps the endpoints. The input
/// must be tagged at `t_start` and live in normalized coordinates; the
/// output is a world-coordinate plan whose endpoints equal the context's
/// start and goal bit-for-bit.
#[allow(clippy::too_many_arguments)]
pub fn guided_denoise(
    traj_t: &Trajectory,
    t_start: usize,
    ctx: &TaskContext,
    model: &Denoiser,
    cloud: &ObstaclePointCloud,
    gcfg: &GuidanceConfig,
    sched: &DiffusionSchedule,
    rng: &mut ChaCha8Rng,
    stats: &mut PlanStats,
) -> Result<Trajectory> {
    if t_start < 1 || t_start > sched.steps() {
        return Err(Error::Range(format!(
            "t_start {t_start} outside 1..={}",
            sched.steps()
        )));
    }
    if traj_t.noise_level != t_start {
        return Err(Error::Usage(format!(
            "trajectory tagged at level {} but denoising starts at {t_start}",
            traj_t.noise_level
        )));
    }
    let n = model.trajectory_len();
    let d = model.dim();
    if traj_t.waypoints.dim() != (n, d) {
        return Err(Error::Shape(format!(
            "trajectory shape {:?} does not match model ({n}, {d})",
            traj_t.waypoints.dim()
        )));
    }

    let normalizer = model.normalizer();
    let start_n = normalizer.point_to_normalized(ctx.start.view());
    let goal_n = normalizer.point_to_normalized(ctx.goal.view());
    let half_extent = normalizer.half_extent().clone();

    let mut x = traj_t.waypoints.clone();
    clamp_endpoints(&mut x, &start_n, &goal_n);
    for t in (1..=t_start).rev() {
        let eps_pred = model.predict_noise_waypoints(&x, t, ctx)?;
        stats.model_evals += 1;
        let mut mu = reverse_mean_raw(&x, &eps_pred, sched.alpha(t), sched.alpha_bar(t));
        if t <= gcfg.start_step && gcfg.strength > 0.0 && !cloud.is_empty() {
            let mu_world = normalizer.to_world(&mu);
            let mut grad = cost_gradient(&mu_world, cloud, gcfg);
            // Chain rule from world to normalized coordinates.
            for mut row in grad.rows_mut() {
                row *= &half_extent;
            }
            mu -= &(grad * gcfg.strength);
        }
        let z = standard_normal_matrix(rng, n, d);
        x = mu + z * sched.sigma(t);
        clamp_endpoints(&mut x, &start_n, &goal_n);
    }

    let mut world = normalizer.to_world(&x);
    clamp_endpoints(&mut world, &ctx.start, &ctx.goal);
    Trajectory::new(world, 0)
}

/// Sample a trajectory from scratch: Gaussian noise denoised over the full
/// schedule with guidance and endpoint clamping.
pub fn initial_plan(
    ctx: &TaskContext,
    model: &Denoiser,
    cloud: &ObstaclePointCloud,
    gcfg: &GuidanceConfig,
    sched: &DiffusionSchedule,
    rng: &mut ChaCha8Rng,
    stats: &mut PlanStats,
) -> Result<Trajectory> {
    let noise = standard_normal_matrix(rng, model.trajectory_len(), model.dim());
    let traj_t = Trajectory { waypoints: noise, noise_level: sched.steps() };
    guided_denoise(&traj_t, sched.steps(), ctx, model, cloud, gcfg, sched, rng, stats)
}

/// The clean prior geometry: the unexecuted remainder of `plan` (waypoints
/// `m..N-1`) prepended with the new start and appended with the goal, then
/// re-parameterized to exactly N waypoints uniform in arc length. A
/// degenerate remainder falls back to the straight start-goal line.
pub fn prior_polyline(
    plan: &Trajectory,
    prefix_length: usize,
    new_start: &Array1<f64>,
    goal: &Array1<f64>,
) -> Result<Array2<f64>> {
    let n = plan.len();
    if prefix_length >= n {
        return Err(Error::Usage(format!("prefix length {prefix_length} must stay below {n}")));
    }
    let d = plan.dim();
    let mut rows = Vec::with_capacity(n - prefix_length + 1);
    rows.push(new_start.clone());
    for i in prefix_length..n - 1 {
        rows.push(plan.waypoints.row(i).to_owned());
    }
    rows.push(goal.clone());
    let mut poly = Array2::zeros((rows.len(), d));
    for (i, r) in rows.iter().enumerate() {
        poly.row_mut(i).assign(r);
    }
    if path_length(&poly) <= 1e-12 {
        let mut line = Array2::zeros((2, d));
        line.row_mut(0).assign(new_start);
        line.row_mut(1).assign(goal);
        return resample_polyline(&line, n);
    }
    resample_polyline(&poly, n)
}

/// Build the refinement prior with explicit noise (test hook).
#[allow(clippy::too_many_arguments)]
pub fn build_prior_with_noise(
    plan: &Trajectory,
    prefix_length: usize,
    new_start: &Array1<f64>,
    goal: &Array1<f64>,
    prior_noise_level: usize,
    sched: &DiffusionSchedule,
    normalizer: &Normalizer,
    noise: &Array2<f64>,
) -> Result<Trajectory> {
    if plan.noise_level != 0 {
        return Err(Error::Usage("prior construction starts from a clean plan".into()));
    }
    if prior_noise_level < 1 || prior_noise_level > sched.steps() {
        return Err(Error::Range(format!(
            "prior noise level {prior_noise_level} outside 1..={}",
            sched.steps()
        )));
    }
    let clean_world = prior_polyline(plan, prefix_length, new_start, goal)?;
    let clean_norm = normalizer.to_normalized(&clean_world);
    let noised = forward_noise_raw(&clean_norm, noise, sched.alpha_bar(prior_noise_level));
    Trajectory::new(noised, prior_noise_level)
}

/// Extract the remainder of the previous plan, re-interpolate it, and
/// perturb it to the intermediate noise level, yielding the trajectory
/// prior that seeds the next guided denoising pass.
#[allow(clippy::too_many_arguments)]
pub fn build_prior(
    plan: &Trajectory,
    prefix_length: usize,
    new_start: &Array1<f64>,
    goal: &Array1<f64>,
    prior_noise_level: usize,
    sched: &DiffusionSchedule,
    normalizer: &Normalizer,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let noise = standard_normal_matrix(rng, plan.len(), plan.dim());
    build_prior_with_noise(
        plan,
        prefix_length,
        new_start,
        goal,
        prior_noise_level,
        sched,
        normalizer,
        &noise,
    )
}

/// Mutable controller state across receding-horizon cycles.
#[derive(Debug, Clone)]
pub struct PlannerState {
    pub current_plan: Option<Trajectory>,
    pub iteration: usize,
    pub executed_path: Vec<Array1<f64>>,
    pub position: Array1<f64>,
    pub done: bool,
}

/// Waypoints executed in one controller cycle.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub executed: Vec<Array1<f64>>,
    /// Noise level the cycle's denoising pass started from (None when the
    /// cycle executed without replanning).
    pub replanned_from: Option<usize>,
}

/// One controller instance drives one episode, sharing the immutable model
/// and schedule.
pub struct Controller<'a> {
    kind: ControllerKind,
    pcfg: PlannerConfig,
    gcfg: GuidanceConfig,
    model: &'a Denoiser,
    sched: &'a DiffusionSchedule,
    ctx: TaskContext,
    state: PlannerState,
    stats: PlanStats,
    plan_cursor: usize,
    history_len: usize,
}

impl<'a> Controller<'a> {
    pub fn new(
        model: &'a Denoiser,
        sched: &'a DiffusionSchedule,
        pcfg: PlannerConfig,
        gcfg: GuidanceConfig,
        ctx: TaskContext,
    ) -> Result<Self> {
        pcfg.validate(model.trajectory_len(), sched.steps())?;
        gcfg.validate(sched.steps())?;
        if ctx.start.len() != model.dim() {
            return Err(Error::Shape("context dimension does not match model".into()));
        }
        let position = ctx.start.clone();
        Ok(Self {
            kind: pcfg.controller,
            pcfg,
            gcfg,
            model,
            sched,
            ctx,
            state: PlannerState {
                current_plan: None,
                iteration: 0,
                executed_path: vec![position.clone()],
                position,
                done: false,
            },
            stats: PlanStats::default(),
            plan_cursor: 0,
            history_len: 8,
        })
    }

    pub fn state(&self) -> &PlannerState {
        &self.state
    }

    pub fn stats(&self) -> PlanStats {
        self.stats
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn goal(&self) -> &Array1<f64> {
        &self.ctx.goal
    }

    fn at_goal(&self) -> bool {
        euclidean(self.state.position.view(), self.ctx.goal.view()) <= self.pcfg.goal_tolerance
    }

    fn push_history(&mut self) {
        let history = self.ctx.history.get_or_insert_with(|| Array2::zeros((0, self.model.dim())));
        let mut rows: Vec<Array1<f64>> = history.rows().into_iter().map(|r| r.to_owned()).collect();
        rows.push(self.state.position.clone());
        let keep = rows.len().saturating_sub(self.history_len);
        let rows = &rows[keep..];
        let mut out = Array2::zeros((rows.len(), self.model.dim()));
        for (i, r) in rows.iter().enumerate() {
            out.row_mut(i).assign(r);
        }
        self.ctx.history = Some(out);
    }

    /// Run one receding-horizon cycle: replan according to the controller
    /// variant, execute the next prefix, update the task context to the
    /// executed state, and check termination.
    pub fn step(&mut self, cloud: &ObstaclePointCloud, rng: &mut ChaCha8Rng) -> Result<StepResult> {
        if self.state.done {
            return Err(Error::Usage("controller already finished its episode".into()));
        }
        if self.at_goal() {
            self.state.done = true;
            return Ok(StepResult { executed: vec![], replanned_from: None });
        }

        let mut replanned_from = None;
        if self.state.current_plan.is_none() {
            let plan = initial_plan(
                &self.ctx,
                self.model,
                cloud,
                &self.gcfg,
                self.sched,
                rng,
                &mut self.stats,
            )?;
            replanned_from = Some(self.sched.steps());
            self.state.current_plan = Some(plan);
            self.plan_cursor = 0;
        } else {
            match self.kind {
                ControllerKind::Mpd => {}
                ControllerKind::Cape => {
                    let plan = self.state.current_plan.as_ref().unwrap();
                    let prior = build_prior(
                        plan,
                        self.pcfg.prefix_length,
                        &self.state.position,
                        &self.ctx.goal,
                        self.pcfg.prior_noise_level,
                        self.sched,
                        self.model.normalizer(),
                        rng,
                    )?;
                    let refined = guided_denoise(
                        &prior,
                        self.pcfg.prior_noise_level,
                        &self.ctx,
                        self.model,
                        cloud,
                        &self.gcfg,
                        self.sched,
                        rng,
                        &mut self.stats,
                    )?;
                    replanned_from = Some(self.pcfg.prior_noise_level);
                    self.state.current_plan = Some(refined);
                    self.stats.refine_count += 1;
                }
                ControllerKind::MpdRefine => {
                    let plan = initial_plan(
                        &self.ctx,
                        self.model,
                        cloud,
                        &self.gcfg,
                        self.sched,
                        rng,
                        &mut self.stats,
                    )?;
                    replanned_from = Some(self.sched.steps());
                    self.state.current_plan = Some(plan);
                    self.stats.refine_count += 1;
                }
            }
        }

        // Execute the next prefix. Replanning controllers always take
        // waypoints 1..=m of the fresh plan (waypoint 0 is the current
        // state); the one-shot controller walks a cursor along its plan.
        let plan = self.state.current_plan.as_ref().unwrap();
        let n = plan.len();
        let m = self.pcfg.prefix_length;
        let range = match self.kind {
            ControllerKind::Mpd => {
                let from = self.plan_cursor + 1;
                let to = (self.plan_cursor + m).min(n - 1);
                self.plan_cursor = to;
                from..=to
            }
            _ => 1..=m,
        };
        let mut executed = Vec::with_capacity(m);
        for i in range {
            executed.push(plan.waypoints.row(i).to_owned());
        }
        for p in &executed {
            self.push_history();
            self.state.position = p.clone();
            self.state.executed_path.push(p.clone());
        }
        self.ctx.start = self.state.position.clone();
        self.state.iteration += 1;

        if self.at_goal() || self.state.iteration >= self.pcfg.max_iterations {
            self.state.done = true;
        }
        Ok(StepResult { executed, replanned_from })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::DenoiserConfig;
    use crate::guidance::cloud_from_rows;
    use crate::rng::rng_from_seed;
    use crate::schedule::make_schedule;
    use crate::trajectory::Bounds;
    use ndarray::array;

    const TINY_T: usize = 6;

    fn tiny_model(seed: u64) -> Denoiser {
        let arch = DenoiserConfig { hidden_width: 12, depth: 2, time_embed_dim: 4 };
        let norm = Normalizer::from_bounds(&Bounds::unit_square());
        Denoiser::new(8, 2, TINY_T, arch, norm, seed).unwrap()
    }

    fn tiny_sched() -> DiffusionSchedule {
        make_schedule(TINY_T, 1e-4, 0.5).unwrap()
    }

    fn ctx() -> TaskContext {
        TaskContext::new(array![0.1, 0.2], array![0.9, 0.8]).unwrap()
    }

    #[test]
    fn denoised_endpoints_equal_start_and_goal_exactly() {
        let model = tiny_model(1);
        let sched = tiny_sched();
        let ctx = ctx();
        let cloud = ObstaclePointCloud::empty(2);
        let gcfg = GuidanceConfig { start_step: 3, ..Default::default() };
        for seed in 0..50 {
            let mut rng = rng_from_seed(seed);
            let mut stats = PlanStats::default();
            let plan =
                initial_plan(&ctx, &model, &cloud, &gcfg, &sched, &mut rng, &mut stats).unwrap();
            assert_eq!(plan.waypoints.row(0).to_owned(), ctx.start);
            assert_eq!(plan.waypoints.row(7).to_owned(), ctx.goal);
            assert_eq!(plan.noise_level, 0);
        }
    }

    #[test]
    fn unguided_pass_matches_reference_sampler_bitwise() {
        // With zero strength and an empty cloud the loop must match a
        // plainly written reverse-chain sampler drawing the same noise.
        let model = tiny_model(5);
        let sched = tiny_sched();
        let ctx = ctx();
        let gcfg = GuidanceConfig { strength: 0.0, start_step: 3, ..Default::default() };
        let cloud = ObstaclePointCloud::empty(2);

        let mut rng = rng_from_seed(33);
        let noise = standard_normal_matrix(&mut rng, 8, 2);
        let traj_t = Trajectory { waypoints: noise.clone(), noise_level: TINY_T };
        let mut stats = PlanStats::default();
        let got = guided_denoise(
            &traj_t, TINY_T, &ctx, &model, &cloud, &gcfg, &sched, &mut rng, &mut stats,
        )
        .unwrap();

        // Reference implementation.
        let mut ref_rng = rng_from_seed(33);
        let _ = standard_normal_matrix(&mut ref_rng, 8, 2);
        let normalizer = model.normalizer();
        let s_n = normalizer.point_to_normalized(ctx.start.view());
        let g_n = normalizer.point_to_normalized(ctx.goal.view());
        let mut x = noise;
        x.row_mut(0).assign(&s_n);
        x.row_mut(7).assign(&g_n);
        for t in (1..=TINY_T).rev() {
            let eps = model.predict_noise_waypoints(&x, t, &ctx).unwrap();
            let coeff = (1.0 - sched.alpha(t)) / (1.0 - sched.alpha_bar(t)).sqrt();
            let mu = (&x - &(eps * coeff)) / sched.alpha(t).sqrt();
            let z = standard_normal_matrix(&mut ref_rng, 8, 2);
            x = mu + z * sched.sigma(t);
            x.row_mut(0).assign(&s_n);
            x.row_mut(7).assign(&g_n);
        }
        let mut expected = normalizer.to_world(&x);
        expected.row_mut(0).assign(&ctx.start);
        expected.row_mut(7).assign(&ctx.goal);

        assert_eq!(got.waypoints, expected);
    }

    #[test]
    fn eval_counts_match_loop_lengths() {
        let model = tiny_model(2);
        let sched = tiny_sched();
        let ctx = ctx();
        let cloud = ObstaclePointCloud::empty(2);
        let gcfg = GuidanceConfig { start_step: 3, ..Default::default() };

        let mut rng = rng_from_seed(1);
        let mut stats = PlanStats::default();
        initial_plan(&ctx, &model, &cloud, &gcfg, &sched, &mut rng, &mut stats).unwrap();
        assert_eq!(stats.model_evals, TINY_T as u64);

        let mut stats = PlanStats::default();
        let prior_noise = standard_normal_matrix(&mut rng, 8, 2);
        let clean = straight_plan(&ctx);
        let prior = build_prior_with_noise(
            &clean,
            2,
            &ctx.start,
            &ctx.goal,
            2,
            &sched,
            model.normalizer(),
            &prior_noise,
        )
        .unwrap();
        guided_denoise(&prior, 2, &ctx, &model, &cloud, &gcfg, &sched, &mut rng, &mut stats)
            .unwrap();
        assert_eq!(stats.model_evals, 2);
    }

    #[test]
    fn different_seeds_vary_the_interior() {
        let model = tiny_model(2);
        let sched = tiny_sched();
        let ctx = ctx();
        let cloud = ObstaclePointCloud::empty(2);
        let gcfg = GuidanceConfig::default();
        let mut rng_a = rng_from_seed(10);
        let mut rng_b = rng_from_seed(11);
        let mut stats = PlanStats::default();
        let a = initial_plan(&ctx, &model, &cloud, &gcfg, &sched, &mut rng_a, &mut stats).unwrap();
        let b = initial_plan(&ctx, &model, &cloud, &gcfg, &sched, &mut rng_b, &mut stats).unwrap();
        assert_ne!(a.waypoints, b.waypoints);
    }

    #[test]
    fn mismatched_level_tag_is_a_usage_error() {
        let model = tiny_model(2);
        let sched = tiny_sched();
        let ctx = ctx();
        let cloud = ObstaclePointCloud::empty(2);
        let gcfg = GuidanceConfig::default();
        let mut rng = rng_from_seed(0);
        let traj = Trajectory { waypoints: Array2::zeros((8, 2)), noise_level: 3 };
        let mut stats = PlanStats::default();
        let err = guided_denoise(
            &traj, 4, &ctx, &model, &cloud, &gcfg, &sched, &mut rng, &mut stats,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    fn straight_plan(ctx: &TaskContext) -> Trajectory {
        let mut line = Array2::zeros((2, 2));
        line.row_mut(0).assign(&ctx.start);
        line.row_mut(1).assign(&ctx.goal);
        Trajectory::new(resample_polyline(&line, 8).unwrap(), 0).unwrap()
    }

    #[test]
    fn straight_prior_stays_straight() {
        let ctx = ctx();
        let plan = straight_plan(&ctx);
        // New start on the line (the executed prefix endpoint).
        let new_start = plan.waypoints.row(2).to_owned();
        let poly = prior_polyline(&plan, 2, &new_start, &ctx.goal).unwrap();
        assert_eq!(poly.nrows(), 8);
        // Collinearity: every point lies on the segment new_start -> goal.
        let dir = &ctx.goal - &new_start;
        let len = dir.dot(&dir).sqrt();
        for row in poly.rows() {
            let rel = &row - &new_start;
            let cross = rel[0] * dir[1] - rel[1] * dir[0];
            assert!(cross.abs() / len < 1e-9, "off-line by {cross}");
        }
        assert_eq!(poly.row(0).to_owned(), new_start);
        assert_eq!(poly.row(7).to_owned(), ctx.goal);
    }

    #[test]
    fn zero_noise_prior_is_scaled_reinterpolation() {
        let model = tiny_model(3);
        let sched = tiny_sched();
        let ctx = ctx();
        let plan = straight_plan(&ctx);
        let new_start = plan.waypoints.row(2).to_owned();
        let zeros = Array2::zeros((8, 2));
        let delta = 2;
        let prior = build_prior_with_noise(
            &plan,
            2,
            &new_start,
            &ctx.goal,
            delta,
            &sched,
            model.normalizer(),
            &zeros,
        )
        .unwrap();
        let clean = prior_polyline(&plan, 2, &new_start, &ctx.goal).unwrap();
        let expected = model.normalizer().to_normalized(&clean) * sched.alpha_bar(delta).sqrt();
        for (a, b) in prior.waypoints.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(prior.noise_level, delta);
    }

    #[test]
    fn prior_always_has_n_waypoints() {
        let model = tiny_model(3);
        let sched = tiny_sched();
        let ctx = ctx();
        let plan = straight_plan(&ctx);
        let mut rng = rng_from_seed(8);
        for m in 1..8 {
            let prior = build_prior(
                &plan,
                m,
                &ctx.start,
                &ctx.goal,
                2,
                &sched,
                model.normalizer(),
                &mut rng,
            )
            .unwrap();
            assert_eq!(prior.len(), 8, "m = {m}");
        }
    }

    #[test]
    fn degenerate_remainder_falls_back_to_straight_line() {
        // A plan that dwells at one point for its whole remainder.
        let mut waypoints = Array2::zeros((8, 2));
        for i in 0..8 {
            waypoints.row_mut(i).assign(&array![0.5, 0.5]);
        }
        let plan = Trajectory::new(waypoints, 0).unwrap();
        let poly = prior_polyline(&plan, 2, &array![0.5, 0.5], &array![0.5, 0.5]).unwrap();
        assert_eq!(poly.nrows(), 8);
        for row in poly.rows() {
            assert_eq!(row.to_owned(), array![0.5, 0.5]);
        }
    }

    fn controller<'a>(
        model: &'a Denoiser,
        sched: &'a DiffusionSchedule,
        kind: ControllerKind,
    ) -> Controller<'a> {
        let pcfg = PlannerConfig {
            prefix_length: 2,
            prior_noise_level: 2,
            max_iterations: 40,
            goal_tolerance: 0.02,
            controller: kind,
        };
        Controller::new(model, sched, pcfg, GuidanceConfig { start_step: 3, ..Default::default() }, ctx())
            .unwrap()
    }

    #[test]
    fn cape_cycles_cost_delta_evals_after_the_initial_plan() {
        let model = tiny_model(4);
        let sched = tiny_sched();
        let cloud = ObstaclePointCloud::empty(2);
        let mut ctl = controller(&model, &sched, ControllerKind::Cape);
        let mut rng = rng_from_seed(0);
        ctl.step(&cloud, &mut rng).unwrap();
        assert_eq!(ctl.stats().model_evals, TINY_T as u64);
        assert_eq!(ctl.stats().refine_count, 0);
        let before = ctl.stats().model_evals;
        ctl.step(&cloud, &mut rng).unwrap();
        assert_eq!(ctl.stats().model_evals - before, 2);
        assert_eq!(ctl.stats().refine_count, 1);
    }

    #[test]
    fn mpd_refine_cycles_cost_full_t_evals() {
        let model = tiny_model(4);
        let sched = tiny_sched();
        let cloud = ObstaclePointCloud::empty(2);
        let mut ctl = controller(&model, &sched, ControllerKind::MpdRefine);
        let mut rng = rng_from_seed(0);
        ctl.step(&cloud, &mut rng).unwrap();
        let before = ctl.stats().model_evals;
        ctl.step(&cloud, &mut rng).unwrap();
        assert_eq!(ctl.stats().model_evals - before, TINY_T as u64);
        assert_eq!(ctl.stats().refine_count, 1);
    }

    #[test]
    fn mpd_never_replans() {
        let model = tiny_model(4);
        let sched = tiny_sched();
        let cloud = ObstaclePointCloud::empty(2);
        let mut ctl = controller(&model, &sched, ControllerKind::Mpd);
        let mut rng = rng_from_seed(0);
        while !ctl.state().done {
            ctl.step(&cloud, &mut rng).unwrap();
        }
        assert_eq!(ctl.stats().model_evals, TINY_T as u64);
        assert_eq!(ctl.stats().refine_count, 0);
    }

    #[test]
    fn goal_within_tolerance_at_start_finishes_immediately() {
        let model = tiny_model(4);
        let sched = tiny_sched();
        let cloud = ObstaclePointCloud::empty(2);
        let pcfg = PlannerConfig {
            prefix_length: 2,
            prior_noise_level: 2,
            max_iterations: 40,
            goal_tolerance: 0.02,
            controller: ControllerKind::Cape,
        };
        let near_goal = TaskContext::new(array![0.9, 0.801], array![0.9, 0.8]).unwrap();
        let mut ctl =
            Controller::new(&model, &sched, pcfg, GuidanceConfig::default(), near_goal).unwrap();
        let mut rng = rng_from_seed(0);
        let result = ctl.step(&cloud, &mut rng).unwrap();
        assert!(result.executed.is_empty());
        assert!(ctl.state().done);
        assert_eq!(ctl.stats().model_evals, 0);
        assert!(ctl.step(&cloud, &mut rng).is_err());
    }

    #[test]
    fn executed_path_is_append_only_and_tracks_the_cursor() {
        let model = tiny_model(4);
        let sched = tiny_sched();
        let cloud = ObstaclePointCloud::empty(2);
        let mut ctl = controller(&model, &sched, ControllerKind::Cape);
        let mut rng = rng_from_seed(3);
        let mut seen = ctl.state().executed_path.len();
        for _ in 0..5 {
            if ctl.state().done {
                break;
            }
            let result = ctl.step(&cloud, &mut rng).unwrap();
            let now = ctl.state().executed_path.len();
            assert_eq!(now - seen, result.executed.len());
            assert!(result.executed.len() <= 2);
            seen = now;
            // The controller's next start is the last executed waypoint.
            assert_eq!(ctl.state().position, *ctl.state().executed_path.last().unwrap());
        }
    }

    #[test]
    fn episodes_are_seed_deterministic() {
        let model = tiny_model(4);
        let sched = tiny_sched();
        let cloud = cloud_from_rows(&[vec![0.5, 0.5]]);
        let run = || {
            let mut ctl = controller(&model, &sched, ControllerKind::Cape);
            let mut rng = rng_from_seed(77);
            while !ctl.state().done {
                ctl.step(&cloud, &mut rng).unwrap();
            }
            (ctl.state().executed_path.clone(), ctl.stats())
        };
        let (path_a, stats_a) = run();
        let (path_b, stats_b) = run();
        assert_eq!(path_a, path_b);
        assert_eq!(stats_a, stats_b);
    }
}

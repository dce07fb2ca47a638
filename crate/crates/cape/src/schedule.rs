//! Closed-form diffusion arithmetic: the variance schedule, forward
//! noising, and the reverse posterior mean. All tables are precomputed at
//! construction; the schedule is immutable and shareable afterwards.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Default number of diffusion steps.
pub const DEFAULT_STEPS: usize = 25;
/// Default geometric beta endpoints, chosen so the terminal marginal is
/// close to isotropic noise (alpha_bar_T < 0.05 at T = 25) while the noise
/// is spread across the whole chain rather than piled onto the last few
/// steps. Endpoints too small leave a strong signal at t = T, which breaks
/// sampling chains that start from pure Gaussian noise.
pub const DEFAULT_BETA_MIN: f64 = 0.01;
pub const DEFAULT_BETA_MAX: f64 = 0.45;

/// Precomputed beta/alpha/alpha_bar/sigma tables for `steps` noise levels.
///
/// Indexing is 1-based through the accessors, matching the convention that
/// noise level 0 is clean data: `beta(t)` is valid for `t` in `1..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    steps: usize,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.checked(t);
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.checked(t);
        self.alpha[t - 1]
    }

    /// Cumulative product of alphas up to and including `t`; `alpha_bar(0)` is 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            return 1.0;
        }
        self.checked(t);
        self.alpha_bar[t - 1]
    }

    /// Reverse-step noise scale; the DDPM posterior standard deviation.
    /// `sigma(1)` is exactly 0, so the final reverse step is deterministic.
    pub fn sigma(&self, t: usize) -> f64 {
        self.checked(t);
        self.sigma[t - 1]
    }

    fn checked(&self, t: usize) {
        assert!(t >= 1 && t <= self.steps, "noise level {t} outside 1..={}", self.steps);
    }

    fn validate_range(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.steps {
            return Err(Error::Range(format!(
                "noise level {t} outside valid range 1..={}",
                self.steps
            )));
        }
        Ok(())
    }
}

/// Build a schedule with `steps` beta values geometrically spaced from
/// `beta_min` to `beta_max` and derive the alpha/alpha_bar/sigma tables.
pub fn make_schedule(steps: usize, beta_min: f64, beta_max: f64) -> Result<DiffusionSchedule> {
    if steps < 2 {
        return Err(Error::Config(format!("schedule needs at least 2 steps, got {steps}")));
    }
    if !(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0) {
        return Err(Error::Config(format!(
            "beta endpoints must satisfy 0 < beta_min < beta_max < 1, got [{beta_min}, {beta_max}]"
        )));
    }

    let ratio = beta_max / beta_min;
    let beta: Vec<f64> = (0..steps)
        .map(|i| beta_min * ratio.powf(i as f64 / (steps - 1) as f64))
        .collect();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut product = 1.0;
    for a in &alpha {
        product *= a;
        alpha_bar.push(product);
    }
    let mut sigma = Vec::with_capacity(steps);
    for t in 1..=steps {
        let prev = if t >= 2 { alpha_bar[t - 2] } else { 1.0 };
        let var = beta[t - 1] * (1.0 - prev) / (1.0 - alpha_bar[t - 1]);
        sigma.push(var.sqrt());
    }

    Ok(DiffusionSchedule { steps, beta, alpha, alpha_bar, sigma })
}

/// Scalar core of the forward noising map, exposed for closed-form tests:
/// `sqrt(alpha_bar) * x0 + sqrt(1 - alpha_bar) * eps`.
pub fn forward_noise_raw(x0: &Array2<f64>, eps: &Array2<f64>, alpha_bar: f64) -> Array2<f64> {
    x0 * alpha_bar.sqrt() + eps * (1.0 - alpha_bar).sqrt()
}

/// Perturb a clean trajectory to noise level `t` using the supplied noise.
pub fn forward_noise(
    traj: &Trajectory,
    t: usize,
    noise: &Array2<f64>,
    sched: &DiffusionSchedule,
) -> Result<Trajectory> {
    sched.validate_range(t)?;
    if traj.noise_level != 0 {
        return Err(Error::Usage(format!(
            "forward noising starts from a clean trajectory, got level {}",
            traj.noise_level
        )));
    }
    if noise.dim() != traj.waypoints.dim() {
        return Err(Error::Shape(format!(
            "noise shape {:?} does not match trajectory {:?}",
            noise.dim(),
            traj.waypoints.dim()
        )));
    }
    Ok(Trajectory {
        waypoints: forward_noise_raw(&traj.waypoints, noise, sched.alpha_bar(t)),
        noise_level: t,
    })
}

/// Scalar core of the reverse posterior mean:
/// `(x_t - ((1 - alpha) / sqrt(1 - alpha_bar)) * eps_pred) / sqrt(alpha)`.
pub fn reverse_mean_raw(
    x_t: &Array2<f64>,
    eps_pred: &Array2<f64>,
    alpha: f64,
    alpha_bar: f64,
) -> Array2<f64> {
    let coeff = (1.0 - alpha) / (1.0 - alpha_bar).sqrt();
    (x_t - &(eps_pred * coeff)) / alpha.sqrt()
}

/// Posterior mean of the reverse step at level `t` given a noise prediction.
pub fn reverse_mean(
    traj_t: &Trajectory,
    t: usize,
    eps_pred: &Array2<f64>,
    sched: &DiffusionSchedule,
) -> Result<Array2<f64>> {
    sched.validate_range(t)?;
    if eps_pred.dim() != traj_t.waypoints.dim() {
        return Err(Error::Shape(format!(
            "eps_pred shape {:?} does not match trajectory {:?}",
            eps_pred.dim(),
            traj_t.waypoints.dim()
        )));
    }
    Ok(reverse_mean_raw(&traj_t.waypoints, eps_pred, sched.alpha(t), sched.alpha_bar(t)))
}

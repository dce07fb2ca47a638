//! Trajectories, workspace bounds, and polyline geometry shared by the
//! diffusion arithmetic, the planner, and data generation.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// A fixed-length sequence of waypoints in `R^d`, tagged with the noise
/// level of the marginal it nominally belongs to (0 = clean data).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Array2<f64>,
    pub noise_level: usize,
}

impl Trajectory {
    pub fn new(waypoints: Array2<f64>, noise_level: usize) -> Result<Self> {
        if waypoints.nrows() < 2 {
            return Err(Error::Shape(format!(
                "trajectory needs at least 2 waypoints, got {}",
                waypoints.nrows()
            )));
        }
        if !waypoints.iter().all(|v| v.is_finite()) {
            return Err(Error::Shape("trajectory contains non-finite entries".into()));
        }
        Ok(Self { waypoints, noise_level })
    }

    /// Number of waypoints.
    pub fn len(&self) -> usize {
        self.waypoints.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.nrows() == 0
    }

    /// Spatial dimension.
    pub fn dim(&self) -> usize {
        self.waypoints.ncols()
    }

    pub fn start(&self) -> ArrayView1<'_, f64> {
        self.waypoints.row(0)
    }

    pub fn goal(&self) -> ArrayView1<'_, f64> {
        self.waypoints.row(self.len() - 1)
    }
}

/// An axis-aligned workspace box.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Array1<f64>,
    pub hi: Array1<f64>,
}

impl Bounds {
    pub fn new(lo: Array1<f64>, hi: Array1<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Shape("bounds lo/hi dimension mismatch".into()));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l < h)) {
            return Err(Error::Config("bounds require lo < hi per axis".into()));
        }
        Ok(Self { lo, hi })
    }

    /// The unit square; compact workspace used widely in tests.
    pub fn unit_square() -> Self {
        Self { lo: Array1::zeros(2), hi: Array1::ones(2) }
    }

    pub fn unit_box(dim: usize) -> Self {
        Self { lo: Array1::zeros(dim), hi: Array1::ones(dim) }
    }

    /// The default desk-scale workspace: a 2 m box, matching the reach the
    /// metric defaults (radii, margins, separations) are calibrated for.
    pub fn desk(dim: usize) -> Self {
        Self { lo: Array1::zeros(dim), hi: Array1::from_elem(dim, 2.0) }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: ArrayView1<'_, f64>) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(self.hi.iter()))
            .all(|(x, (l, h))| *x >= *l && *x <= *h)
    }

    pub fn clamp_point(&self, p: &mut Array1<f64>) {
        for (x, (l, h)) in p.iter_mut().zip(self.lo.iter().zip(self.hi.iter())) {
            *x = x.clamp(*l, *h);
        }
    }
}

/// Affine map between world coordinates and the `[-1, 1]` box the network
/// and the diffusion chain operate in.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    center: Array1<f64>,
    half_extent: Array1<f64>,
}

impl Normalizer {
    pub fn from_bounds(bounds: &Bounds) -> Self {
        let center = (&bounds.lo + &bounds.hi) * 0.5;
        let half_extent = (&bounds.hi - &bounds.lo) * 0.5;
        Self { center, half_extent }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn half_extent(&self) -> &Array1<f64> {
        &self.half_extent
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            lo: &self.center - &self.half_extent,
            hi: &self.center + &self.half_extent,
        }
    }

    pub fn to_normalized(&self, world: &Array2<f64>) -> Array2<f64> {
        let mut out = world.clone();
        for mut row in out.rows_mut() {
            row -= &self.center;
            row /= &self.half_extent;
        }
        out
    }

    pub fn to_world(&self, normalized: &Array2<f64>) -> Array2<f64> {
        let mut out = normalized.clone();
        for mut row in out.rows_mut() {
            row *= &self.half_extent;
            row += &self.center;
        }
        out
    }

    pub fn point_to_normalized(&self, world: ArrayView1<'_, f64>) -> Array1<f64> {
        (&world - &self.center) / &self.half_extent
    }

    pub fn point_to_world(&self, normalized: ArrayView1<'_, f64>) -> Array1<f64> {
        &normalized.to_owned() * &self.half_extent + &self.center
    }
}

/// Total polyline length (sum of segment lengths between consecutive rows).
pub fn path_length(points: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for i in 1..points.nrows() {
        let seg = &points.row(i) - &points.row(i - 1);
        total += seg.dot(&seg).sqrt();
    }
    total
}

/// Resample a polyline to exactly `n` points spaced uniformly in arc
/// length. Endpoints are copied exactly. A polyline with zero total arc
/// length resamples to `n` copies of its first point.
pub fn resample_polyline(points: &Array2<f64>, n: usize) -> Result<Array2<f64>> {
    if points.nrows() < 2 {
        return Err(Error::Usage("cannot resample a polyline with fewer than 2 points".into()));
    }
    if n < 2 {
        return Err(Error::Usage("resample target must be at least 2 points".into()));
    }
    let dim = points.ncols();
    let m = points.nrows();

    let mut cumulative = Vec::with_capacity(m);
    cumulative.push(0.0);
    for i in 1..m {
        let seg = &points.row(i) - &points.row(i - 1);
        cumulative.push(cumulative[i - 1] + seg.dot(&seg).sqrt());
    }
    let total = cumulative[m - 1];

    let mut out = Array2::zeros((n, dim));
    out.row_mut(0).assign(&points.row(0));
    out.row_mut(n - 1).assign(&points.row(m - 1));
    if total <= 0.0 {
        for i in 1..n - 1 {
            out.row_mut(i).assign(&points.row(0));
        }
        return Ok(out);
    }

    let mut seg = 0usize;
    for i in 1..n - 1 {
        let target = total * i as f64 / (n - 1) as f64;
        while seg + 1 < m - 1 && cumulative[seg + 1] < target {
            seg += 1;
        }
        let seg_len = cumulative[seg + 1] - cumulative[seg];
        let frac = if seg_len > 0.0 { (target - cumulative[seg]) / seg_len } else { 0.0 };
        let p = &points.row(seg) * (1.0 - frac) + &points.row(seg + 1) * frac;
        out.row_mut(i).assign(&p);
    }
    Ok(out)
}

pub fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let diff = &a - &b;
    diff.dot(&diff).sqrt()
}

/// Mean waypoint-wise Euclidean distance between two equally shaped paths.
pub fn mean_waypoint_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim(), "paths must share a shape");
    let n = a.nrows();
    let mut total = 0.0;
    for i in 0..n {
        total += euclidean(a.row(i), b.row(i));
    }
    total / n as f64
}

pub fn rows_to_array(rows: &[Array1<f64>]) -> Array2<f64> {
    assert!(!rows.is_empty());
    let dim = rows[0].len();
    let mut out = Array2::zeros((rows.len(), dim));
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).assign(r);
    }
    out
}

/// Cumulative arc length at each waypoint, used by monotonicity checks.
pub fn cumulative_arc_length(points: &Array2<f64>) -> Vec<f64> {
    let mut cumulative = vec![0.0];
    for i in 1..points.nrows() {
        let seg = &points.row(i) - &points.row(i - 1);
        cumulative.push(cumulative[i - 1] + seg.dot(&seg).sqrt());
    }
    cumulative
}

pub fn waypoint_row(points: &Array2<f64>, i: usize) -> Array1<f64> {
    points.index_axis(Axis(0), i).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn resample_three_collinear_points_to_five() {
        // Arc-length arithmetic by hand: x hits 0, 0.5, 1.0, 1.5, 2.0.
        let poly = array![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let out = resample_polyline(&poly, 5).unwrap();
        let xs: Vec<f64> = out.column(0).to_vec();
        let expected = [0.0, 0.5, 1.0, 1.5, 2.0];
        for (x, e) in xs.iter().zip(expected.iter()) {
            assert!((x - e).abs() < 1e-12, "got {xs:?}");
        }
        assert!(out.column(1).iter().all(|y| y.abs() < 1e-12));
    }

    #[test]
    fn resample_preserves_endpoints_exactly() {
        let poly = array![[0.13, 0.77], [0.4, 0.2], [0.9, 0.66]];
        let out = resample_polyline(&poly, 9).unwrap();
        assert_eq!(out.row(0), poly.row(0));
        assert_eq!(out.row(8), poly.row(2));
    }

    #[test]
    fn resample_degenerate_polyline_repeats_point() {
        let poly = array![[0.5, 0.5], [0.5, 0.5]];
        let out = resample_polyline(&poly, 4).unwrap();
        for row in out.rows() {
            assert_eq!(row, poly.row(0));
        }
    }

    #[test]
    fn resample_rejects_single_point() {
        let poly = array![[0.0, 0.0]];
        assert!(matches!(resample_polyline(&poly, 4), Err(Error::Usage(_))));
    }

    #[test]
    fn normalizer_round_trip_is_tight() {
        let bounds = Bounds::unit_square();
        let norm = Normalizer::from_bounds(&bounds);
        let world = array![[0.1, 0.9], [0.5, 0.5], [0.0, 1.0]];
        let back = norm.to_world(&norm.to_normalized(&world));
        for (a, b) in world.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        // Corners map to the corners of [-1, 1]^2.
        let n = norm.to_normalized(&array![[0.0, 0.0], [1.0, 1.0]]);
        assert_eq!(n, array![[-1.0, -1.0], [1.0, 1.0]]);
    }

    #[test]
    fn trajectory_rejects_non_finite() {
        let bad = array![[0.0, 0.0], [f64::NAN, 1.0]];
        assert!(Trajectory::new(bad, 0).is_err());
    }
}

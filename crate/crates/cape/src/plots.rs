//! Minimal SVG rendering for episode overlays and sweep curves. Output
//! bytes are a pure function of the input data (no timestamps).

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::world::{PlanSnapshot, Scene};

const SIZE: f64 = 600.0;
const MARGIN: f64 = 40.0;

struct Frame {
    lo: (f64, f64),
    scale: f64,
}

impl Frame {
    fn for_scene(scene: &Scene) -> Frame {
        let lo = (scene.bounds.lo[0], scene.bounds.lo[1]);
        let extent = (scene.bounds.hi[0] - lo.0).max(scene.bounds.hi[1] - lo.1);
        Frame { lo, scale: (SIZE - 2.0 * MARGIN) / extent }
    }

    fn x(&self, wx: f64) -> f64 {
        MARGIN + (wx - self.lo.0) * self.scale
    }

    fn y(&self, wy: f64) -> f64 {
        SIZE - MARGIN - (wy - self.lo.1) * self.scale
    }
}

fn polyline_points(frame: &Frame, points: impl Iterator<Item = (f64, f64)>) -> String {
    points
        .map(|(x, y)| format!("{:.2},{:.2}", frame.x(x), frame.y(y)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Scene overlay: obstacle outlines, start/goal markers, per-iteration plan
/// snapshots (light), and the executed path (dark).
pub fn write_episode_overlay(
    scene: &Scene,
    executed: &[Array1<f64>],
    snapshots: &[PlanSnapshot],
    title: &str,
    path: &Path,
) -> Result<()> {
    let frame = Frame::for_scene(scene);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" \
         viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"24\" font-family=\"monospace\" font-size=\"14\">{title}</text>\n"
    ));
    for o in &scene.obstacles {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"#d0d0d0\" stroke=\"#707070\"/>\n",
            frame.x(o.center[0]),
            frame.y(o.center[1]),
            o.radius * frame.scale
        ));
    }
    for snap in snapshots {
        let pts = polyline_points(&frame, snap.waypoints.iter().map(|w| (w[0], w[1])));
        svg.push_str(&format!(
            "<polyline points=\"{pts}\" fill=\"none\" stroke=\"#9fbfdf\" stroke-width=\"1\"/>\n"
        ));
    }
    if executed.len() > 1 {
        let pts = polyline_points(&frame, executed.iter().map(|p| (p[0], p[1])));
        svg.push_str(&format!(
            "<polyline points=\"{pts}\" fill=\"none\" stroke=\"#202020\" stroke-width=\"2\"/>\n"
        ));
    }
    svg.push_str(&format!(
        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"5\" fill=\"#2a9d2a\"/>\n",
        frame.x(scene.start[0]),
        frame.y(scene.start[1])
    ));
    svg.push_str(&format!(
        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"7\" fill=\"none\" stroke=\"#c03030\" stroke-width=\"2.5\"/>\n",
        frame.x(scene.goal[0]),
        frame.y(scene.goal[1])
    ));
    svg.push_str("</svg>\n");
    write_file(path, svg.as_bytes())
}

/// Success-rate curve per controller over one swept parameter.
pub fn write_sr_curve(
    param: &str,
    series: &[(String, Vec<(f64, f64)>)],
    path: &Path,
) -> Result<()> {
    let mut xs: Vec<f64> = series.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.0)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.is_empty() {
        return Err(Error::Usage("cannot plot an empty series".into()));
    }
    let (x_min, x_max) = (xs[0], *xs.last().unwrap());
    let span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let to_x = |v: f64| MARGIN + (v - x_min) / span * (SIZE - 2.0 * MARGIN);
    let to_y = |sr: f64| SIZE - MARGIN - sr * (SIZE - 2.0 * MARGIN);

    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"];
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" \
         viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"24\" font-family=\"monospace\" font-size=\"14\">success rate vs {param}</text>\n"
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#404040\"/>\n",
        SIZE - MARGIN,
        SIZE - MARGIN
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{}\" stroke=\"#404040\"/>\n",
        SIZE - MARGIN
    ));
    for x in &xs {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{x}</text>\n",
            to_x(*x),
            SIZE - MARGIN + 18.0
        ));
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = palette[i % palette.len()];
        let line = pts
            .iter()
            .map(|(x, sr)| format!("{:.2},{:.2}", to_x(*x), to_y(*sr)))
            .collect::<Vec<_>>()
            .join(" ");
        svg.push_str(&format!(
            "<polyline points=\"{line}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n"
        ));
        for (x, sr) in pts {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                to_x(*x),
                to_y(*sr)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\" fill=\"{color}\">{name}</text>\n",
            SIZE - MARGIN - 110.0,
            MARGIN + 16.0 * (i + 1) as f64
        ));
    }
    svg.push_str("</svg>\n");
    write_file(path, svg.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Bounds;
    use crate::world::{generate_scene, Difficulty};

    #[test]
    fn overlay_bytes_are_deterministic_and_styled() {
        let scene = generate_scene(Difficulty::Medium, 4, &Bounds::unit_square()).unwrap();
        let executed = vec![scene.start.clone(), scene.goal.clone()];
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.svg");
        let b = dir.path().join("b.svg");
        write_episode_overlay(&scene, &executed, &[], "episode", &a).unwrap();
        write_episode_overlay(&scene, &executed, &[], "episode", &b).unwrap();
        let bytes_a = fs::read(&a).unwrap();
        assert_eq!(bytes_a, fs::read(&b).unwrap());
        let text = String::from_utf8(bytes_a).unwrap();
        assert!(text.matches("<circle").count() >= scene.obstacles.len() + 2);
    }

    #[test]
    fn curve_plot_renders_each_series() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.svg");
        let series = vec![
            ("cape".to_string(), vec![(0.1, 0.9), (0.2, 0.92), (0.5, 0.88), (1.0, 0.85)]),
            ("mpd-refine".to_string(), vec![(0.1, 0.5), (0.2, 0.7), (0.5, 0.6), (1.0, 0.4)]),
        ];
        write_sr_curve("lambda", &series, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("cape"));
        assert!(text.contains("mpd-refine"));
        assert_eq!(text.matches("<polyline").count(), 2);
    }
}

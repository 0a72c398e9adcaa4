//! Trajectory CSV and SVG plot emission.

use std::fmt::Write as _;
use std::io::Write;

use hocbf_core::poly::{Monomial, Poly};
use hocbf_core::runtime::Trajectory;

use crate::scenario::Scenario;

/// Header `run, t, states, inputs, rho_<clif>, margin_<candidate>`. The last
/// row of each run has empty input and slack fields.
pub fn write_trajectories_csv<W: Write>(out: W, scenario: &Scenario, runs: &[&Trajectory]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let cfg = &scenario.config;
    let mut header = vec!["run".to_string(), "t".to_string()];
    header.extend(cfg.system.states.iter().cloned());
    header.extend(cfg.system.inputs.iter().cloned());
    header.extend(scenario.clifs.iter().map(|c| format!("rho_{}", c.name)));
    header.extend(scenario.candidates.iter().map(|c| format!("margin_{}", c.name)));
    w.write_record(&header)?;
    let m = cfg.system.inputs.len();
    let k = scenario.clifs.len();
    for (run, traj) in runs.iter().enumerate() {
        for i in 0..traj.states.len() {
            let mut rec = vec![run.to_string(), fmt(traj.times[i])];
            rec.extend(traj.states[i].iter().map(|v| fmt(*v)));
            match traj.inputs.get(i) {
                Some(u) => rec.extend(u.iter().map(|v| fmt(*v))),
                None => rec.extend(std::iter::repeat_n(String::new(), m)),
            }
            match traj.slacks.get(i) {
                Some(r) => rec.extend(r.iter().map(|v| fmt(*v))),
                None => rec.extend(std::iter::repeat_n(String::new(), k)),
            }
            rec.extend(traj.margins[i].iter().map(|v| fmt(*v)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

/// Zero set of a candidate drawn in the plot plane.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// Obstacle disc (the candidate is negative inside).
    Circle { cx: f64, cy: f64, r: f64 },
    /// `a p + b q + c = 0`.
    Line { a: f64, b: f64, c: f64 },
}

/// Recognizes circles and lines in the variables `(p, q)`.
pub fn shape_of(b: &Poly, p: usize, q: usize) -> Option<Shape> {
    if b.variables().iter().any(|v| *v != p && *v != q) {
        return None;
    }
    let n = b.space().len();
    let mono = |ep: u32, eq: u32| {
        let mut e = vec![0u32; n];
        e[p] += ep;
        e[q] += eq;
        Monomial::from_exponents(&e).expect("small exponents")
    };
    let c = |ep, eq| b.coeff(&mono(ep, eq));
    match b.degree() {
        1 => Some(Shape::Line {
            a: c(1, 0),
            b: c(0, 1),
            c: c(0, 0),
        }),
        2 => {
            let k = c(2, 0);
            if k > 0.0 && c(0, 2) == k && c(1, 1) == 0.0 {
                let cx = -c(1, 0) / (2.0 * k);
                let cy = -c(0, 1) / (2.0 * k);
                let r2 = cx * cx + cy * cy - c(0, 0) / k;
                (r2 > 0.0).then(|| Shape::Circle { cx, cy, r: r2.sqrt() })
            } else {
                None
            }
        }
        _ => None,
    }
}

const W: f64 = 960.0;
const H: f64 = 560.0;
const PAD: f64 = 40.0;
const PLANE: f64 = 480.0;

/// Trajectories in the plane of the first two states with obstacles, box and
/// goal, plus one input-envelope panel per input. Output is deterministic.
pub fn emit_plot(runs: &[&Trajectory], scenario: &Scenario) -> String {
    let (p, q) = (0usize, 1usize.min(scenario.system.n() - 1));
    let (px, py) = (scenario.state_box[p], scenario.state_box[q]);
    let sx = |v: f64| PAD + (v - px.0) / (px.1 - px.0) * PLANE;
    let sy = |v: f64| PAD + PLANE - (v - py.0) / (py.1 - py.0) * PLANE;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect class="frame" x="{PAD}" y="{PAD}" width="{PLANE}" height="{PLANE}" fill="none" stroke="black"/>"#);
    for cand in &scenario.candidates {
        match shape_of(&cand.b, p, q) {
            Some(Shape::Circle { cx, cy, r }) => {
                let _ = writeln!(
                    s,
                    r##"<ellipse class="obstacle" cx="{:.3}" cy="{:.3}" rx="{:.3}" ry="{:.3}" fill="#bbbbbb" stroke="black"/>"##,
                    sx(cx),
                    sy(cy),
                    r / (px.1 - px.0) * PLANE,
                    r / (py.1 - py.0) * PLANE
                );
            }
            Some(Shape::Line { a, b, c }) => {
                let pts = if b.abs() >= a.abs() {
                    [(px.0, -(a * px.0 + c) / b), (px.1, -(a * px.1 + c) / b)]
                } else {
                    [(-(b * py.0 + c) / a, py.0), (-(b * py.1 + c) / a, py.1)]
                };
                let _ = writeln!(
                    s,
                    r#"<line class="wall" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="black" stroke-width="2"/>"#,
                    sx(pts[0].0),
                    sy(pts[0].1),
                    sx(pts[1].0),
                    sy(pts[1].1)
                );
            }
            None => {}
        }
    }
    if let Some(goal) = &scenario.config.goal {
        let idx = |name: &str| scenario.config.system.states.iter().position(|s| s == name);
        let gp = goal.vars.iter().position(|v| idx(v) == Some(p));
        let gq = goal.vars.iter().position(|v| idx(v) == Some(q));
        let gx = gp.map_or(0.5 * (px.0 + px.1), |i| goal.target[i]);
        let gy = gq.map_or(0.5 * (py.0 + py.1), |i| goal.target[i]);
        let _ = writeln!(
            s,
            r#"<circle class="goal" cx="{:.3}" cy="{:.3}" r="6" fill="none" stroke="green" stroke-width="2"/>"#,
            sx(gx),
            sy(gy)
        );
    }
    for traj in runs {
        let Some(first) = traj.states.first() else { continue };
        let moving = traj.states.iter().any(|x| x[p] != first[p] || x[q] != first[q]);
        if moving {
            let pts: Vec<String> = traj
                .states
                .iter()
                .map(|x| format!("{:.3},{:.3}", sx(x[p]), sy(x[q])))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="traj" points="{}" fill="none" stroke="blue"/>"#,
                pts.join(" ")
            );
        }
        let _ = writeln!(
            s,
            r#"<circle class="start" cx="{:.3}" cy="{:.3}" r="3" fill="blue"/>"#,
            sx(first[p]),
            sy(first[q])
        );
    }

    // input envelopes
    let m = scenario.input_box.len();
    let left = 2.0 * PAD + PLANE + 20.0;
    let width = W - left - PAD;
    let gap = 20.0;
    let ph = (PLANE - gap * (m.saturating_sub(1)) as f64) / m.max(1) as f64;
    let t_end = runs
        .iter()
        .filter_map(|t| t.times.last())
        .fold(0.0f64, |a, b| a.max(*b))
        .max(1e-9);
    for (k, &(lo, hi)) in scenario.input_box.iter().enumerate() {
        let top = PAD + k as f64 * (ph + gap);
        let span = hi - lo;
        let ylo = lo - 0.1 * span;
        let yhi = hi + 0.1 * span;
        let ty = |v: f64| top + ph - (v - ylo) / (yhi - ylo) * ph;
        let tx = |t: f64| left + t / t_end * width;
        let _ = writeln!(
            s,
            r#"<rect class="panel" x="{left:.3}" y="{top:.3}" width="{width:.3}" height="{ph:.3}" fill="none" stroke="black"/>"#
        );
        for bound in [lo, hi] {
            let _ = writeln!(
                s,
                r#"<line class="bound" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="red" stroke-dasharray="4 3"/>"#,
                left,
                ty(bound),
                left + width,
                ty(bound)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" font-size="12">{}</text>"#,
            left + 4.0,
            top + 14.0,
            scenario.config.system.inputs[k]
        );
        for traj in runs {
            if traj.inputs.is_empty() {
                continue;
            }
            let pts: Vec<String> = traj
                .inputs
                .iter()
                .zip(&traj.times)
                .map(|(u, t)| format!("{:.3},{:.3}", tx(*t), ty(u[k])))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="input" points="{}" fill="none" stroke="blue" stroke-opacity="0.5"/>"#,
                pts.join(" ")
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

//! SVG figures: robot trails over a scenario, and metric comparisons.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use plotters::prelude::*;
use rpf_core::scenario::Scenario;
use rpf_core::sim::read_trajectory;
use rpf_core::Obstacle;

use crate::commands::EvalReport;
use crate::{Classify, CmdResult};

const SIZE: (u32, u32) = (800, 800);

fn draw_err<E: std::fmt::Debug>(e: E) -> anyhow::Error {
    anyhow!("drawing failed: {e:?}")
}

pub fn trajectory(csv: &Path, scenario: Option<&Path>, out: &Path) -> CmdResult {
    let file = File::open(csv)
        .with_context(|| format!("opening {}", csv.display()))
        .config()?;
    let rows = read_trajectory(file).config()?;
    if rows.is_empty() {
        return Err(anyhow!("{}: no records", csv.display())).config();
    }
    let scenario = scenario.map(Scenario::load).transpose().config()?;

    let mut trails: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &rows {
        trails.entry(r.robot_id).or_default().push((r.x, r.y));
    }

    let mut pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.x, r.y)).collect();
    if let Some(sc) = &scenario {
        pts.extend(sc.robots.iter().map(|r| (r.goal.x, r.goal.y)));
        for o in &sc.obstacles {
            match *o {
                Obstacle::Circle { center, radius } => {
                    pts.push((center.x - radius, center.y - radius));
                    pts.push((center.x + radius, center.y + radius));
                }
                Obstacle::Rect { min, max } => {
                    pts.push((min.x, min.y));
                    pts.push((max.x, max.y));
                }
            }
        }
    }
    let (x0, x1, y0, y1) = square_bounds(&pts);

    let root = SVGBackend::new(out, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err).runtime()?;
    let mut chart = ChartBuilder::on(&root)
        .margin(20)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(draw_err)
        .runtime()?;
    chart
        .configure_mesh()
        .x_desc("x (m)")
        .y_desc("y (m)")
        .light_line_style(WHITE)
        .draw()
        .map_err(draw_err)
        .runtime()?;

    if let Some(sc) = &scenario {
        for o in &sc.obstacles {
            match *o {
                Obstacle::Circle { center, radius } => {
                    let outline: Vec<(f64, f64)> = (0..=64)
                        .map(|k| {
                            let t = k as f64 / 64.0 * std::f64::consts::TAU;
                            (center.x + radius * t.cos(), center.y + radius * t.sin())
                        })
                        .collect();
                    chart.draw_series(std::iter::once(Polygon::new(outline, BLACK.mix(0.25).filled())))
                }
                Obstacle::Rect { min, max } => chart.draw_series(std::iter::once(PathElement::new(
                    vec![
                        (min.x, min.y),
                        (max.x, min.y),
                        (max.x, max.y),
                        (min.x, max.y),
                        (min.x, min.y),
                    ],
                    BLACK.stroke_width(2),
                ))),
            }
            .map_err(draw_err)
            .runtime()?;
        }
    }

    for (k, (id, trail)) in trails.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        chart
            .draw_series(LineSeries::new(trail.iter().copied(), color.stroke_width(2)))
            .map_err(draw_err)
            .runtime()?
            .label(format!("robot {id}"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 15, y)], color.stroke_width(2)));
        let start = trail[0];
        chart
            .draw_series(std::iter::once(Circle::new(start, 5, color.filled())))
            .map_err(draw_err)
            .runtime()?;
        if let Some(goal) = scenario
            .as_ref()
            .and_then(|s| s.robots.get(*id))
            .map(|r| (r.goal.x, r.goal.y))
        {
            chart
                .draw_series(std::iter::once(Cross::new(goal, 6, color.stroke_width(2))))
                .map_err(draw_err)
                .runtime()?;
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)
        .runtime()?;
    root.present().map_err(draw_err).runtime()?;
    Ok(())
}

/// Equal-aspect box around `pts` with a 5 % margin.
fn square_bounds(pts: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let half = ((x1 - x0).max(y1 - y0) / 2.0).max(0.5) * 1.05;
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    (cx - half, cx + half, cy - half, cy + half)
}

/// Side-by-side bars of mean traveling distance and smoothness, one bar per
/// report in each panel.
pub fn reports(paths: &[std::path::PathBuf], out: &Path) -> CmdResult {
    if paths.is_empty() {
        return Err(anyhow!("pass --trajectory <csv> or at least one --report <json>")).config();
    }
    let mut loaded = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))
            .config()?;
        let report: EvalReport = serde_json::from_str(&text)
            .with_context(|| format!("{} is not a metric report", p.display()))
            .config()?;
        let label = p
            .parent()
            .and_then(|d| d.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| report.mode.to_string());
        loaded.push((format!("{label} ({})", report.mode), report));
    }
    bars(&loaded, out).runtime()
}

fn bars(loaded: &[(String, EvalReport)], out: &Path) -> anyhow::Result<()> {
    let root = SVGBackend::new(out, (1000, 450)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let panels = root.split_evenly((1, 2));
    type Metric = (&'static str, fn(&EvalReport) -> f64);
    let metrics: [Metric; 2] = [
        ("traveling distance (m)", |r| r.mean_traveling_distance),
        ("smoothness (rad)", |r| r.mean_smoothness),
    ];
    for (area, (name, get)) in panels.iter().zip(metrics) {
        let values: Vec<f64> = loaded.iter().map(|(_, r)| get(r)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            bail!("non-finite {name} in a report");
        }
        let top = values.iter().copied().fold(0.0, f64::max).max(1e-9) * 1.15;
        let n = loaded.len();
        let mut chart = ChartBuilder::on(area)
            .caption(name, ("sans-serif", 18))
            .margin(15)
            .x_label_area_size(40)
            .y_label_area_size(55)
            .build_cartesian_2d((0..n).into_segmented(), 0.0..top)
            .map_err(draw_err)?;
        let labels: Vec<String> = loaded.iter().map(|(l, _)| l.clone()).collect();
        chart
            .configure_mesh()
            .disable_x_mesh()
            .x_label_formatter(&|v| match v {
                SegmentValue::CenterOf(i) => labels.get(*i).cloned().unwrap_or_default(),
                _ => String::new(),
            })
            .draw()
            .map_err(draw_err)?;
        chart
            .draw_series(values.iter().enumerate().map(|(i, &v)| {
                let color = Palette99::pick(i).filled();
                let mut bar = Rectangle::new([(SegmentValue::Exact(i), 0.0), (SegmentValue::Exact(i + 1), v)], color);
                bar.set_margin(0, 0, 12, 12);
                bar
            }))
            .map_err(draw_err)?;
    }
    root.present().map_err(draw_err)?;
    Ok(())
}

//! Figure sets built from traces, reports and regions.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use vrmerge_core::stability::EnergyReport;
use vrmerge_core::{Lane, SimulationTrace};

use crate::svg::{BarChart, LinePlot, Series};

fn label(trace: &SimulationTrace, i: usize) -> String {
    format!("{} ({})", i + 1, trace.vehicles[i].lane.letter())
}

fn series_of(trace: &SimulationTrace, i: usize, ys: &[f64]) -> Series {
    let mut s = Series::new(label(trace, i), i, trace.times.iter().copied().zip(ys.iter().copied()).collect());
    s.dashed = trace.vehicles[i].lane == Lane::Ramp;
    s
}

fn per_vehicle(trace: &SimulationTrace, title: &str, y_label: &str, pick: impl Fn(usize) -> Vec<f64>) -> String {
    let mut plot = LinePlot::new(title, "t (s)", y_label);
    for i in 0..trace.vehicles.len() {
        plot.push(series_of(trace, i, &pick(i)));
    }
    plot.render()
}

fn write(dir: &Path, name: &str, svg: String) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Position, speed, acceleration and gap panels.
pub fn state_panels(trace: &SimulationTrace, dir: &Path) -> Result<Vec<PathBuf>> {
    if trace.is_empty() {
        bail!("trace is empty");
    }
    let v = &trace.vehicles;
    Ok(vec![
        write(dir, "positions.svg", per_vehicle(trace, "(a) positions on the virtual axis", "x (m)", |i| v[i].x.clone()))?,
        write(dir, "speeds.svg", per_vehicle(trace, "(b) speeds", "v (m/s)", |i| v[i].v.clone()))?,
        write(dir, "accelerations.svg", per_vehicle(trace, "(c) accelerations", "a (m/s^2)", |i| v[i].a.clone()))?,
        write(dir, "gaps.svg", {
            let mut plot = LinePlot::new("(d) virtual gap to the preceding vehicle", "t (s)", "gap (m)");
            for i in 1..v.len() {
                let gaps: Vec<f64> = v[i - 1].x.iter().zip(&v[i].x).map(|(a, b)| a - b).collect();
                plot.push(series_of(trace, i, &gaps));
            }
            plot.render()
        })?,
    ])
}

/// Spacing errors and per-lane physical positions.
pub fn spacing_panels(trace: &SimulationTrace, dir: &Path) -> Result<Vec<PathBuf>> {
    if trace.is_empty() {
        bail!("trace is empty");
    }
    let v = &trace.vehicles;
    let mut lanes = Vec::new();
    for lane in [Lane::Main, Lane::Ramp] {
        let mut plot = LinePlot::new(format!("{} lane positions", lane.name()), "t (s)", "x (m)");
        for i in (0..v.len()).filter(|&i| v[i].lane == lane) {
            plot.push(series_of(trace, i, &v[i].x));
        }
        let merge = trace.merge_distance;
        let t_end = trace.times[trace.len() - 1];
        let mut o = Series::new("merge point", 7, vec![(0.0, merge), (t_end, merge)]);
        o.dashed = true;
        if merge.abs() < 1e6 {
            plot.push(o);
        }
        lanes.push(write(dir, &format!("lane_{}.svg", lane.name()), plot.render())?);
    }
    let mut out = vec![write(
        dir,
        "spacing_error.svg",
        per_vehicle(trace, "deviation from the target spacing", "e (m)", |i| v[i].e.clone()),
    )?];
    out.extend(lanes);
    Ok(out)
}

pub fn energy_chart(report: &EnergyReport, title: &str, dir: &Path, name: &str) -> Result<PathBuf> {
    let energies = match report.mode {
        vrmerge_core::EnergyMode::Absolute => &report.absolute,
        vrmerge_core::EnergyMode::Deviation => &report.deviation,
    };
    let mut bars = Vec::new();
    let mut markers = Vec::new();
    for (i, &e) in energies.iter().enumerate() {
        let verdict = report.verdicts.iter().find(|v| v.vehicle == i);
        bars.push(((i + 1).to_string(), e, verdict.is_some_and(|v| !v.holds)));
        markers.push(verdict.map(|v| v.bound));
    }
    let chart = BarChart { title: title.to_string(), y_label: "squared L2 speed energy".into(), bars, markers };
    write(dir, name, chart.render())
}

/// Offset, heading error, rate command and global path of the ramp vehicles.
pub fn lateral_panels(trace: &SimulationTrace, dir: &Path) -> Result<Vec<PathBuf>> {
    let ramp: Vec<usize> = (0..trace.vehicles.len()).filter(|&i| trace.vehicles[i].lateral.is_some()).collect();
    if ramp.is_empty() {
        bail!("trace has no lateral channels");
    }
    let lat = |i: usize| trace.vehicles[i].lateral.as_ref().expect("filtered");
    let panel = |title: &str, y: &str, pick: &dyn Fn(usize) -> Vec<f64>| {
        let mut plot = LinePlot::new(title, "t (s)", y);
        for &i in &ramp {
            plot.push(series_of(trace, i, &pick(i)));
        }
        plot.render()
    };
    let mut path_plot = LinePlot::new("global paths", "X (m)", "Y (m)");
    path_plot.equal_aspect = true;
    for &i in &ramp {
        let l = lat(i);
        path_plot.push(Series::new(label(trace, i), i, l.px.iter().copied().zip(l.py.iter().copied()).collect()));
    }
    Ok(vec![
        write(dir, "lateral_offset.svg", panel("lateral offset r", "r (m)", &|i| lat(i).r.clone()))?,
        write(
            dir,
            "heading_error.svg",
            panel("heading error", "dtheta (deg)", &|i| lat(i).dtheta.iter().map(|d| d.to_degrees()).collect()),
        )?,
        write(dir, "rate_command.svg", panel("angular-rate command", "mu (rad/s)", &|i| lat(i).mu.clone()))?,
        write(dir, "global_paths.svg", path_plot.render())?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use vrmerge_core::sim::{self, scenarios};

    #[test]
    fn state_panels_are_four_svgs() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = scenarios::twelve_vehicle(vrmerge_core::WeightScheme::Equal);
        s.duration = 2.0;
        let trace = sim::run(&s).unwrap();
        let files = state_panels(&trace, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        for f in files {
            let text = std::fs::read_to_string(f).unwrap();
            assert!(text.matches(r#"class="series""#).count() >= 11);
        }
    }

    #[test]
    fn lateral_panels_need_lateral_channels() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = scenarios::four_vehicle_extreme();
        s.duration = 1.0;
        let trace = sim::run(&s).unwrap();
        assert!(lateral_panels(&trace, dir.path()).is_err());
    }
}

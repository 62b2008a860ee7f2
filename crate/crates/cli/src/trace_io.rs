//! Trace CSV files.
//!
//! Layout: `#` metadata lines, one CSV header row, one row per sample, then
//! `# event ...` footer lines. Each vehicle contributes the same channel set
//! so the column count is `1 + vehicles * channels`.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use vrmerge_core::sim::{Event, LateralSeries, RunStatus, SimulationTrace, VehicleSeries};
use vrmerge_core::{build_topology, Lane, VehicleId};

pub const SCHEMA_VERSION: u32 = 1;

const BASE_CHANNELS: [&str; 5] = ["x", "v", "a", "e", "lane"];
const LATERAL_CHANNELS: [&str; 6] = ["s", "r", "dtheta", "mu", "px", "py"];

/// Nine significant digits.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        x.to_string()
    }
}

fn event_line(e: &Event) -> String {
    match *e {
        Event::MergePassage { t, vehicle } => format!("merge t={} vehicle={vehicle}", num(t)),
        Event::SaturationStart { t, vehicle } => format!("saturation_start t={} vehicle={vehicle}", num(t)),
        Event::SaturationEnd { t, vehicle } => format!("saturation_end t={} vehicle={vehicle}", num(t)),
        Event::FifoInsert { t, vehicle } => format!("fifo_insert t={} vehicle={vehicle}", num(t)),
        Event::SmallAngleViolation { t, vehicle } => format!("small_angle t={} vehicle={vehicle}", num(t)),
        Event::RateLimitActive { t, vehicle } => format!("rate_limit t={} vehicle={vehicle}", num(t)),
        Event::Collision { t, ahead, behind, gap } => {
            format!("collision t={} ahead={ahead} behind={behind} gap={}", num(t), num(gap))
        }
    }
}

fn parse_event(line: &str) -> Result<Event> {
    let mut parts = line.split_whitespace();
    let kind = parts.next().ok_or_else(|| anyhow!("empty event"))?;
    let mut field = |name: &str| -> Result<String> {
        let p = parts.next().ok_or_else(|| anyhow!("event `{line}` lacks {name}"))?;
        p.strip_prefix(name)
            .and_then(|r| r.strip_prefix('='))
            .map(str::to_string)
            .ok_or_else(|| anyhow!("event `{line}`: expected {name}=..."))
    };
    let t: f64 = field("t")?.parse()?;
    Ok(match kind {
        "collision" => Event::Collision {
            t,
            ahead: field("ahead")?.parse()?,
            behind: field("behind")?.parse()?,
            gap: field("gap")?.parse()?,
        },
        _ => {
            let vehicle: usize = field("vehicle")?.parse()?;
            match kind {
                "merge" => Event::MergePassage { t, vehicle },
                "saturation_start" => Event::SaturationStart { t, vehicle },
                "saturation_end" => Event::SaturationEnd { t, vehicle },
                "fifo_insert" => Event::FifoInsert { t, vehicle },
                "small_angle" => Event::SmallAngleViolation { t, vehicle },
                "rate_limit" => Event::RateLimitActive { t, vehicle },
                other => bail!("unknown event kind `{other}`"),
            }
        }
    })
}

/// Renders a trace as CSV text. `config` is echoed into the header.
pub fn trace_to_csv(trace: &SimulationTrace, config: Option<&str>) -> Result<String> {
    let lateral = trace.vehicles.iter().any(|v| v.lateral.is_some());
    let mut out = String::new();
    writeln!(out, "# vrmerge-trace schema={SCHEMA_VERSION}")?;
    writeln!(out, "# name={}", trace.name)?;
    writeln!(out, "# seed={}", trace.seed.map_or("none".to_string(), |s| s.to_string()))?;
    writeln!(out, "# sample_dt={}", num(trace.sample_dt))?;
    writeln!(out, "# merge_distance={}", num(trace.merge_distance))?;
    writeln!(
        out,
        "# status={}",
        match trace.status {
            RunStatus::Completed => "completed",
            RunStatus::Collision => "collision",
        }
    )?;
    for (i, v) in trace.vehicles.iter().enumerate() {
        writeln!(out, "# vehicle seq={} id={} lane={}", i + 1, v.id, v.lane.letter())?;
    }
    if let Some(cfg) = config {
        for line in cfg.lines() {
            writeln!(out, "# config | {line}")?;
        }
    }

    let mut wtr = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    for i in 1..=trace.vehicles.len() {
        for c in BASE_CHANNELS {
            header.push(format!("{c}_{i}"));
        }
        if lateral {
            for c in LATERAL_CHANNELS {
                header.push(format!("{c}_{i}"));
            }
        }
    }
    wtr.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for k in 0..trace.len() {
        row.clear();
        row.push(num(trace.times[k]));
        for v in &trace.vehicles {
            row.push(num(v.x[k]));
            row.push(num(v.v[k]));
            row.push(num(v.a[k]));
            row.push(num(v.e[k]));
            row.push(v.lane.flag().to_string());
            if lateral {
                match &v.lateral {
                    Some(l) => {
                        for series in [&l.s, &l.r, &l.dtheta, &l.mu, &l.px, &l.py] {
                            row.push(num(series[k]));
                        }
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), LATERAL_CHANNELS.len())),
                }
            }
        }
        wtr.write_record(&row)?;
    }
    out.push_str(std::str::from_utf8(&wtr.into_inner()?)?);
    for e in &trace.events {
        writeln!(out, "# event {}", event_line(e))?;
    }
    Ok(out)
}

pub fn write_trace(trace: &SimulationTrace, config: Option<&str>, path: &Path) -> Result<()> {
    let text = trace_to_csv(trace, config)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Parsed trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub schema_version: u32,
    pub config: Option<String>,
    pub trace: SimulationTrace,
}

pub fn read_trace(path: &Path) -> Result<TraceFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_trace(&text)
}

pub fn parse_trace(text: &str) -> Result<TraceFile> {
    let mut schema_version = None;
    let mut name = String::new();
    let mut seed = None;
    let mut sample_dt = None;
    let mut merge_distance = 0.0;
    let mut status = RunStatus::Completed;
    let mut vehicles: Vec<(VehicleId, Lane)> = Vec::new();
    let mut config_lines = Vec::new();
    let mut events = Vec::new();
    let mut body = String::new();

    for line in text.lines() {
        let Some(meta) = line.strip_prefix("# ") else {
            body.push_str(line);
            body.push('\n');
            continue;
        };
        if let Some(rest) = meta.strip_prefix("vrmerge-trace schema=") {
            schema_version = Some(rest.parse::<u32>()?);
        } else if let Some(rest) = meta.strip_prefix("name=") {
            name = rest.to_string();
        } else if let Some(rest) = meta.strip_prefix("seed=") {
            seed = if rest == "none" { None } else { Some(rest.parse()?) };
        } else if let Some(rest) = meta.strip_prefix("sample_dt=") {
            sample_dt = Some(rest.parse::<f64>()?);
        } else if let Some(rest) = meta.strip_prefix("merge_distance=") {
            merge_distance = rest.parse()?;
        } else if let Some(rest) = meta.strip_prefix("status=") {
            status = match rest {
                "completed" => RunStatus::Completed,
                "collision" => RunStatus::Collision,
                other => bail!("unknown status `{other}`"),
            };
        } else if let Some(rest) = meta.strip_prefix("vehicle ") {
            let mut id = None;
            let mut lane = None;
            for part in rest.split_whitespace() {
                if let Some(v) = part.strip_prefix("id=") {
                    id = Some(VehicleId(v.parse()?));
                } else if let Some(v) = part.strip_prefix("lane=") {
                    lane = match v {
                        "M" => Some(Lane::Main),
                        "R" => Some(Lane::Ramp),
                        other => bail!("unknown lane `{other}`"),
                    };
                }
            }
            vehicles.push((
                id.ok_or_else(|| anyhow!("vehicle line lacks id"))?,
                lane.ok_or_else(|| anyhow!("vehicle line lacks lane"))?,
            ));
        } else if let Some(rest) = meta.strip_prefix("config | ") {
            config_lines.push(rest.to_string());
        } else if meta == "config |" {
            config_lines.push(String::new());
        } else if let Some(rest) = meta.strip_prefix("event ") {
            events.push(parse_event(rest)?);
        }
    }
    let schema_version = schema_version.ok_or_else(|| anyhow!("missing schema version header"))?;
    if schema_version != SCHEMA_VERSION {
        bail!("unsupported trace schema {schema_version}");
    }
    let sample_dt = sample_dt.ok_or_else(|| anyhow!("missing sample_dt header"))?;

    let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let header = rdr.headers()?.clone();
    let n = vehicles.len();
    let per_vehicle = header.len().saturating_sub(1).checked_div(n).unwrap_or(0);
    let lateral = per_vehicle == BASE_CHANNELS.len() + LATERAL_CHANNELS.len();
    if n == 0 || header.len() != 1 + n * per_vehicle || !(lateral || per_vehicle == BASE_CHANNELS.len()) {
        bail!("column count {} does not match {} vehicles", header.len(), n);
    }

    let mut times = Vec::new();
    let mut series: Vec<VehicleSeries> = vehicles
        .iter()
        .map(|&(id, lane)| VehicleSeries {
            id,
            lane,
            x: Vec::new(),
            v: Vec::new(),
            a: Vec::new(),
            e: Vec::new(),
            lateral: None,
        })
        .collect();
    let mut lat: Vec<LateralSeries> = vec![LateralSeries::default(); n];
    let mut lat_present = vec![false; n];
    for (row_no, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .with_context(|| format!("row {}: column {} is not a number", row_no + 1, &header[i]))
        };
        times.push(field(0)?);
        for (j, s) in series.iter_mut().enumerate() {
            let base = 1 + j * per_vehicle;
            s.x.push(field(base)?);
            s.v.push(field(base + 1)?);
            s.a.push(field(base + 2)?);
            s.e.push(field(base + 3)?);
            if lateral && !record[base + 5].is_empty() {
                lat_present[j] = true;
                let l = &mut lat[j];
                for (c, dst) in [&mut l.s, &mut l.r, &mut l.dtheta, &mut l.mu, &mut l.px, &mut l.py]
                    .into_iter()
                    .enumerate()
                {
                    dst.push(field(base + 5 + c)?);
                }
            }
        }
    }
    for ((s, l), present) in series.iter_mut().zip(lat).zip(lat_present) {
        if present {
            s.lateral = Some(l);
        }
    }
    let lanes: Vec<Lane> = vehicles.iter().map(|v| v.1).collect();
    Ok(TraceFile {
        schema_version,
        config: (!config_lines.is_empty()).then(|| config_lines.join("\n") + "\n"),
        trace: SimulationTrace {
            name,
            seed,
            sample_dt,
            times,
            vehicles: series,
            events,
            status,
            topology: build_topology(&lanes),
            merge_distance,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use vrmerge_core::sim::{self, scenarios, LeaderProfile, ScenarioConfig};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 5e-9 * a.abs().max(b.abs()) || (a.is_nan() && b.is_nan())
    }

    #[test]
    fn ten_steps_give_eleven_rows() {
        let mut s = ScenarioConfig::new(vec![0.0, -25.0], vec![]);
        s.duration = 0.01;
        let trace = sim::run(&s).unwrap();
        let text = trace_to_csv(&trace, None).unwrap();
        let data_rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
        assert_eq!(data_rows, 11);
        let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(header.split(',').count(), 1 + 2 * 5);
    }

    #[test]
    fn round_trip_preserves_values() {
        let mut s = scenarios::twelve_vehicle(vrmerge_core::WeightScheme::Equal);
        s.duration = 2.0;
        s.record_every = 50;
        let trace = sim::run(&s).unwrap();
        let back = parse_trace(&trace_to_csv(&trace, Some("a = 1\n")).unwrap()).unwrap();
        assert_eq!(back.schema_version, SCHEMA_VERSION);
        assert_eq!(back.config.as_deref(), Some("a = 1\n"));
        let t = back.trace;
        assert_eq!(t.vehicles.len(), trace.vehicles.len());
        assert_eq!(t.topology, trace.topology);
        assert_eq!(t.events.len(), trace.events.len());
        for (a, b) in trace.vehicles.iter().zip(&t.vehicles) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.lane, b.lane);
            for (p, q) in a.x.iter().chain(&a.v).chain(&a.a).chain(&a.e).zip(b.x.iter().chain(&b.v).chain(&b.a).chain(&b.e)) {
                assert!(close(*p, *q), "{p} vs {q}");
            }
        }
    }

    #[test]
    fn lateral_round_trip() {
        let mut s = scenarios::single_ramp_lateral();
        s.duration = 1.0;
        s.record_every = 100;
        let trace = sim::run(&s).unwrap();
        let back = parse_trace(&trace_to_csv(&trace, None).unwrap()).unwrap().trace;
        let (a, b) = (trace.vehicles[0].lateral.as_ref().unwrap(), back.vehicles[0].lateral.as_ref().unwrap());
        for (p, q) in a.r.iter().zip(&b.r).chain(a.px.iter().zip(&b.px)) {
            assert!(close(*p, *q));
        }
    }

    #[test]
    fn collision_trace_has_event_footer() {
        let mut s = ScenarioConfig::new(vec![0.0, -1.0], vec![]);
        s.controller.omega_e = 0.01;
        s.controller.omega_v = 2.0;
        s.leader = LeaderProfile::BrakeAccel { brake_at: 0.0, decel: 1.0, low_speed: 0.0, accel_at: 5000.0, accel: 1.0 };
        s.duration = 30.0;
        let trace = sim::run(&s).unwrap();
        assert!(trace.collided());
        let text = trace_to_csv(&trace, None).unwrap();
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("# event collision"), "{last}");
        let back = parse_trace(&text).unwrap().trace;
        assert_eq!(back.status, RunStatus::Collision);
        assert!(back.times.len() < 30_001);
        assert!(matches!(back.events.last(), Some(Event::Collision { .. })));
    }

    #[test]
    fn rejects_missing_schema() {
        assert!(parse_trace("t,x_1\n0,0\n").is_err());
    }
}

//! Deterministic fixed-step simulation of the virtual platoon.
//!
//! The plant is a forward-Euler double integrator at step `dt`. Controller
//! commands are recomputed every `control_period` from the previous step's
//! states (synchronous update) and held in between. The virtual sequence and
//! topology are refreshed every `resequence_period` under the FIFO lock.

use nalgebra::Matrix2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{self, ControllerConfig, VehicleState, WeightVector};
use crate::error::{Error, Result};
use crate::lateral::{
    self, CurvilinearState, FeedforwardSign, LateralPlant, LateralWeights, PathGeometry,
};
use crate::stability::{self, EnergyMode, EnergyReport};
use crate::topology::{build_topology, CommTopology};
use crate::virtual_axis::{self, Lane, LaneVehicle, LanePool, VehicleId, VirtualSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LeaderProfile {
    Constant,
    /// `v = v0 + amplitude * sin(omega t)`.
    Sine { amplitude: f64, omega: f64 },
    /// Cruise, brake to `low_speed`, hold, then accelerate back to `v0`.
    BrakeAccel {
        brake_at: f64,
        decel: f64,
        low_speed: f64,
        accel_at: f64,
        accel: f64,
    },
}

impl Default for LeaderProfile {
    fn default() -> Self {
        LeaderProfile::Sine {
            amplitude: 3.0,
            omega: 0.5,
        }
    }
}

impl LeaderProfile {
    pub fn brake_accel() -> Self {
        LeaderProfile::BrakeAccel {
            brake_at: 13.0,
            decel: 2.0,
            low_speed: 10.0,
            accel_at: 26.0,
            accel: 2.0,
        }
    }

    fn validate(&self, v0: f64, cfg: &ControllerConfig) -> Result<()> {
        match *self {
            LeaderProfile::Constant => Ok(()),
            LeaderProfile::Sine { amplitude, omega } => {
                if !(amplitude >= 0.0 && omega >= 0.0) {
                    return Err(Error::InvalidParameter(
                        "sine amplitude and omega must be >= 0".into(),
                    ));
                }
                if amplitude > v0 {
                    return Err(Error::InvalidParameter(
                        "sine amplitude exceeds the initial speed".into(),
                    ));
                }
                if amplitude * omega > cfg.u_max.min(-cfg.u_min) {
                    return Err(Error::InvalidParameter(
                        "sine leader acceleration exceeds the saturation bounds".into(),
                    ));
                }
                Ok(())
            }
            LeaderProfile::BrakeAccel {
                brake_at,
                decel,
                low_speed,
                accel_at,
                accel,
            } => {
                if !(decel > 0.0 && accel > 0.0 && low_speed >= 0.0 && low_speed <= v0) {
                    return Err(Error::InvalidParameter("bad brake/accelerate profile".into()));
                }
                if decel > -cfg.u_min || accel > cfg.u_max {
                    return Err(Error::InvalidParameter(
                        "leader profile exceeds the saturation bounds".into(),
                    ));
                }
                if accel_at < brake_at + (v0 - low_speed) / decel {
                    return Err(Error::InvalidParameter(
                        "leader re-accelerates before finishing its brake".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Leader speed and acceleration at time `t` for initial speed `v0`.
pub fn leader_state(profile: &LeaderProfile, v0: f64, t: f64) -> (f64, f64) {
    match *profile {
        LeaderProfile::Constant => (v0, 0.0),
        LeaderProfile::Sine { amplitude, omega } => (
            v0 + amplitude * (omega * t).sin(),
            amplitude * omega * (omega * t).cos(),
        ),
        LeaderProfile::BrakeAccel {
            brake_at,
            decel,
            low_speed,
            accel_at,
            accel,
        } => {
            let brake_end = brake_at + (v0 - low_speed) / decel;
            let accel_end = accel_at + (v0 - low_speed) / accel;
            if t < brake_at {
                (v0, 0.0)
            } else if t < brake_end {
                (v0 - decel * (t - brake_at), -decel)
            } else if t < accel_at {
                (low_speed, 0.0)
            } else if t < accel_end {
                (low_speed + accel * (t - accel_at), accel)
            } else {
                (v0, 0.0)
            }
        }
    }
}

/// Random initial placement: consecutive gaps of `mean_gap +/- jitter`
/// (uniform), lanes assigned by a seeded shuffle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPlacement {
    pub mainline: usize,
    pub ramp: usize,
    #[serde(default = "default_mean_gap")]
    pub mean_gap: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    pub seed: u64,
}

fn default_mean_gap() -> f64 {
    20.0
}

fn default_jitter() -> f64 {
    10.0
}

impl RandomPlacement {
    /// Positions per lane, leader first. The first vehicle sits at 0.
    pub fn generate(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if !(self.jitter >= 0.0 && self.mean_gap - self.jitter > 0.0) {
            return Err(Error::InvalidParameter("random gaps must stay positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let total = self.mainline + self.ramp;
        let mut positions = Vec::with_capacity(total);
        let mut x = 0.0f64;
        for i in 0..total {
            if i > 0 {
                let gap = self.mean_gap + rng.gen_range(-self.jitter..=self.jitter);
                x -= gap;
            }
            positions.push(x.round());
        }
        let mut lanes: Vec<Lane> = std::iter::repeat_n(Lane::Main, self.mainline)
            .chain(std::iter::repeat_n(Lane::Ramp, self.ramp))
            .collect();
        lanes[1.min(total)..].shuffle(&mut rng);
        let mut main = Vec::new();
        let mut ramp = Vec::new();
        for (p, lane) in positions.into_iter().zip(lanes) {
            match lane {
                Lane::Main => main.push(p),
                Lane::Ramp => ramp.push(p),
            }
        }
        Ok((main, ramp))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSetup {
    #[serde(default)]
    pub mainline: Vec<f64>,
    #[serde(default)]
    pub ramp: Vec<f64>,
    #[serde(default = "default_initial_speed")]
    pub initial_speed: f64,
    /// Overrides `mainline`/`ramp` when present.
    #[serde(default)]
    pub random: Option<RandomPlacement>,
}

fn default_initial_speed() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LateralSetup {
    pub path: PathGeometry,
    #[serde(default)]
    pub weights: LateralWeights,
    /// Initial lateral offset of every ramp vehicle, m.
    #[serde(default = "default_initial_offset")]
    pub initial_offset: f64,
    /// Initial heading error of every ramp vehicle, degrees.
    #[serde(default = "default_initial_heading_deg")]
    pub initial_heading_deg: f64,
    /// Clamp on `|mu|`, rad/s.
    #[serde(default = "default_rate_limit")]
    pub rate_limit: f64,
    #[serde(default)]
    pub plant: LateralPlant,
    #[serde(default)]
    pub feedforward: FeedforwardSign,
}

fn default_initial_offset() -> f64 {
    1.0
}

fn default_initial_heading_deg() -> f64 {
    5.0
}

fn default_rate_limit() -> f64 {
    0.5
}

impl LateralSetup {
    pub fn new(path: PathGeometry) -> Self {
        Self {
            path,
            weights: LateralWeights::default(),
            initial_offset: default_initial_offset(),
            initial_heading_deg: default_initial_heading_deg(),
            rate_limit: default_rate_limit(),
            plant: LateralPlant::Exact,
            feedforward: FeedforwardSign::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub vehicles: VehicleSetup,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub leader: LeaderProfile,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_dt")]
    pub control_period: f64,
    #[serde(default = "default_resequence_period")]
    pub resequence_period: f64,
    /// Record one sample every this many integration steps.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Distance from the virtual-axis origin to the merge point O, m.
    #[serde(default = "default_merge_distance")]
    pub merge_distance: f64,
    #[serde(default)]
    pub lateral: Option<LateralSetup>,
}

fn default_duration() -> f64 {
    80.0
}

fn default_dt() -> f64 {
    0.001
}

fn default_resequence_period() -> f64 {
    1.0
}

fn default_record_every() -> usize {
    1
}

fn default_merge_distance() -> f64 {
    600.0
}

impl ScenarioConfig {
    /// Scenario with the default timing and controller around the given lanes.
    pub fn new(mainline: Vec<f64>, ramp: Vec<f64>) -> Self {
        Self {
            name: String::new(),
            vehicles: VehicleSetup {
                mainline,
                ramp,
                initial_speed: default_initial_speed(),
                random: None,
            },
            controller: ControllerConfig::default(),
            leader: LeaderProfile::default(),
            duration: default_duration(),
            dt: default_dt(),
            control_period: default_dt(),
            resequence_period: default_resequence_period(),
            record_every: default_record_every(),
            merge_distance: default_merge_distance(),
            lateral: None,
        }
    }

    /// Integer step counts `(steps, control_stride, resequence_stride)`.
    fn strides(&self) -> Result<(usize, usize, usize)> {
        let ratio = |num: f64, what: &str| -> Result<usize> {
            let r = num / self.dt;
            let n = r.round();
            if n < 1.0 || (r - n).abs() > 1e-6 * n.max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "{what} must be a positive integer multiple of dt"
                )));
            }
            Ok(n as usize)
        };
        Ok((
            ratio(self.duration, "duration")?,
            ratio(self.control_period, "control_period")?,
            ratio(self.resequence_period, "resequence_period")?,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::InvalidParameter("duration must be > 0".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter("dt must be > 0".into()));
        }
        if self.control_period < self.dt {
            return Err(Error::InvalidParameter("control_period must be >= dt".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be >= 1".into()));
        }
        if !self.merge_distance.is_finite() {
            return Err(Error::NonFinite("merge_distance"));
        }
        self.strides()?;
        self.controller.validate()?;
        let v0 = self.vehicles.initial_speed;
        if !(v0 >= 0.0 && v0.is_finite()) {
            return Err(Error::InvalidParameter("initial_speed must be >= 0".into()));
        }
        self.leader.validate(v0, &self.controller)?;
        if let Some(lat) = &self.lateral {
            lat.path.validate()?;
            if !(lat.rate_limit > 0.0) {
                return Err(Error::InvalidParameter("rate_limit must be > 0".into()));
            }
            if lat.initial_heading_deg.abs() >= 90.0 {
                return Err(Error::InvalidParameter(
                    "initial heading error must be below 90 degrees".into(),
                ));
            }
        }
        let pool = self.pool()?;
        if pool.is_empty() {
            return Err(Error::InvalidParameter("scenario has no vehicles".into()));
        }
        Ok(())
    }

    /// Initial per-lane positions, after applying random placement.
    pub fn lane_positions(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        match &self.vehicles.random {
            Some(r) => r.generate(),
            None => Ok((self.vehicles.mainline.clone(), self.vehicles.ramp.clone())),
        }
    }

    /// Mainline vehicles get ids `1..=m`, ramp vehicles `m+1..`.
    pub fn pool(&self) -> Result<LanePool> {
        let (main, ramp) = self.lane_positions()?;
        let v0 = self.vehicles.initial_speed;
        let m = main.len() as u32;
        virtual_axis::pool_union(
            main.iter()
                .enumerate()
                .map(|(i, &p)| LaneVehicle::new(i as u32 + 1, p, v0))
                .collect(),
            ramp.iter()
                .enumerate()
                .map(|(i, &p)| LaneVehicle::new(m + i as u32 + 1, p, v0))
                .collect(),
        )
    }

    pub fn seed(&self) -> Option<u64> {
        self.vehicles.random.map(|r| r.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LateralSeries {
    pub s: Vec<f64>,
    pub r: Vec<f64>,
    pub dtheta: Vec<f64>,
    pub mu: Vec<f64>,
    pub px: Vec<f64>,
    pub py: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSeries {
    pub id: VehicleId,
    pub lane: Lane,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Acceleration applied over the interval starting at each sample.
    pub a: Vec<f64>,
    /// Weighted spacing error; zero for the leader.
    pub e: Vec<f64>,
    pub lateral: Option<LateralSeries>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    MergePassage { t: f64, vehicle: usize },
    SaturationStart { t: f64, vehicle: usize },
    SaturationEnd { t: f64, vehicle: usize },
    FifoInsert { t: f64, vehicle: usize },
    SmallAngleViolation { t: f64, vehicle: usize },
    RateLimitActive { t: f64, vehicle: usize },
    Collision { t: f64, ahead: usize, behind: usize, gap: f64 },
}

impl Event {
    pub fn time(&self) -> f64 {
        match *self {
            Event::MergePassage { t, .. }
            | Event::SaturationStart { t, .. }
            | Event::SaturationEnd { t, .. }
            | Event::FifoInsert { t, .. }
            | Event::SmallAngleViolation { t, .. }
            | Event::RateLimitActive { t, .. }
            | Event::Collision { t, .. } => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Collision,
}

/// Recorded run. Vehicles are stored in virtual-sequence order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub name: String,
    pub seed: Option<u64>,
    /// Sample interval, s.
    pub sample_dt: f64,
    pub times: Vec<f64>,
    pub vehicles: Vec<VehicleSeries>,
    pub events: Vec<Event>,
    pub status: RunStatus,
    pub topology: CommTopology,
    pub merge_distance: f64,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn collided(&self) -> bool {
        self.status == RunStatus::Collision
    }

    pub fn speeds(&self) -> Vec<&[f64]> {
        self.vehicles.iter().map(|v| v.v.as_slice()).collect()
    }

    pub fn collision_events(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| matches!(e, Event::Collision { .. }))
    }

    /// Index of the last sample at or before `t`.
    pub fn sample_at(&self, t: f64) -> usize {
        let idx = ((t / self.sample_dt) + 1e-9).floor() as usize;
        idx.min(self.times.len().saturating_sub(1))
    }
}

struct LateralVehicle {
    state: CurvilinearState,
    p: Option<Matrix2<f64>>,
    mu: f64,
    rate_limited: bool,
    small_angle_flagged: bool,
}

fn weights_for(topology: &CommTopology, cfg: &ControllerConfig) -> Result<Vec<Option<WeightVector>>> {
    (0..topology.len())
        .map(|j| {
            let n = topology.predecessor_count(j)?;
            if n == 0 {
                Ok(None)
            } else {
                control::weights(cfg.scheme, n).map(Some)
            }
        })
        .collect()
}

/// Runs a scenario to completion or first collision.
pub fn run(scenario: &ScenarioConfig) -> Result<SimulationTrace> {
    scenario.validate()?;
    let (steps, control_stride, reseq_stride) = scenario.strides()?;
    let dt = scenario.dt;
    let cfg = &scenario.controller;
    let v0 = scenario.vehicles.initial_speed;
    let merge = scenario.merge_distance;

    let pool = scenario.pool()?;
    let mut seq = virtual_axis::sequence(&pool);
    let lanes = seq.lanes();
    let n = seq.len();
    let mut topology = build_topology(&lanes);
    let mut weights = weights_for(&topology, cfg)?;

    let mut states: Vec<VehicleState> = seq
        .entries()
        .iter()
        .map(|e| VehicleState::new(e.position, e.speed, 0.0))
        .collect();
    states[0].a = leader_state(&scenario.leader, v0, 0.0).1;

    let mut lateral_vehicles: Vec<Option<LateralVehicle>> = lanes
        .iter()
        .zip(&states)
        .map(|(&lane, st)| match (&scenario.lateral, lane) {
            (Some(lat), Lane::Ramp) => {
                let dtheta = lat.initial_heading_deg.to_radians();
                Some(LateralVehicle {
                    state: CurvilinearState {
                        s: lat.path.merge_s + (st.x - merge),
                        r: lat.initial_offset,
                        dtheta,
                        v_tilde: st.v / dtheta.cos(),
                    },
                    p: None,
                    mu: 0.0,
                    rate_limited: false,
                    small_angle_flagged: false,
                })
            }
            _ => None,
        })
        .collect();

    let expected_samples = steps / scenario.record_every + 2;
    let mut times = Vec::with_capacity(expected_samples);
    let mut series: Vec<VehicleSeries> = seq
        .entries()
        .iter()
        .zip(&lateral_vehicles)
        .map(|(e, lat)| VehicleSeries {
            id: e.id,
            lane: e.lane,
            x: Vec::with_capacity(expected_samples),
            v: Vec::with_capacity(expected_samples),
            a: Vec::with_capacity(expected_samples),
            e: Vec::with_capacity(expected_samples),
            lateral: lat.as_ref().map(|_| LateralSeries::default()),
        })
        .collect();

    let mut events = Vec::new();
    let mut commands = vec![0.0; n];
    let mut saturated = vec![false; n];
    let mut status = RunStatus::Completed;

    for step in 0..=steps {
        let t = step as f64 * dt;

        if step > 0 && step % reseq_stride == 0 && step < steps {
            let next = resequence_states(&seq, &states)?;
            if next.source_ids() != seq.source_ids() {
                // A fixed vehicle set under the FIFO lock keeps its order.
                return Err(Error::InvalidParameter("FIFO order changed mid-run".into()));
            }
            seq = next;
            topology = build_topology(&seq.lanes());
            weights = weights_for(&topology, cfg)?;
        }

        if step % control_stride == 0 && step < steps {
            let (_, a_lead) = leader_state(&scenario.leader, v0, t);
            commands[0] = a_lead;
            for i in 1..n {
                let preds = topology.predecessors(i)?;
                let w = weights[i].as_ref().ok_or(Error::NoPredecessors)?;
                let raw = control::raw_command(i, &states, preds, w, cfg)?;
                let sat = raw < cfg.u_min || raw > cfg.u_max;
                if sat != saturated[i] {
                    events.push(if sat {
                        Event::SaturationStart { t, vehicle: i }
                    } else {
                        Event::SaturationEnd { t, vehicle: i }
                    });
                    saturated[i] = sat;
                }
                commands[i] = raw.clamp(cfg.u_min, cfg.u_max);
            }
        }

        // Acceleration actually applied over [t, t + dt).
        let applied: Vec<f64> = (0..n)
            .map(|i| {
                if i == 0 {
                    commands[0]
                } else if states[i].v + commands[i] * dt < 0.0 {
                    -states[i].v / dt
                } else {
                    commands[i]
                }
            })
            .collect();

        // Lateral commands from the current state.
        if let Some(lat_cfg) = &scenario.lateral {
            for (i, slot) in lateral_vehicles.iter_mut().enumerate() {
                let Some(lv) = slot else { continue };
                let kappa = lat_cfg.path.curvature_at(lv.state.s);
                let mu = if lv.state.v_tilde > 0.0 {
                    let p = lateral::care_solve_warm(
                        lv.state.v_tilde,
                        &lat_cfg.weights,
                        lv.p.as_ref(),
                    )?;
                    lv.p = Some(p);
                    let gains = lateral::gains_from_p(
                        lv.state.v_tilde,
                        &lat_cfg.weights,
                        p,
                        lat_cfg.feedforward,
                    )?;
                    lateral::lateral_command(&lv.state, &gains, kappa)
                } else {
                    0.0
                };
                let limited = mu.abs() > lat_cfg.rate_limit;
                if limited && !lv.rate_limited {
                    events.push(Event::RateLimitActive { t, vehicle: i });
                }
                lv.rate_limited = limited;
                lv.mu = mu.clamp(-lat_cfg.rate_limit, lat_cfg.rate_limit);
                if !lv.state.small_angle_valid() && !lv.small_angle_flagged {
                    events.push(Event::SmallAngleViolation { t, vehicle: i });
                    lv.small_angle_flagged = true;
                }
            }
        }

        if step % scenario.record_every == 0 || step == steps {
            times.push(t);
            for i in 0..n {
                let e = match weights[i].as_ref() {
                    Some(w) => control::spacing_error(i, &states, topology.predecessors(i)?, w, cfg)?,
                    None => 0.0,
                };
                let s = &mut series[i];
                s.x.push(states[i].x);
                s.v.push(states[i].v);
                s.a.push(applied[i]);
                s.e.push(e);
                if let (Some(ls), Some(lv), Some(lat_cfg)) =
                    (s.lateral.as_mut(), lateral_vehicles[i].as_ref(), scenario.lateral.as_ref())
                {
                    let pose = lat_cfg.path.to_global(&lv.state).ok();
                    ls.s.push(lv.state.s);
                    ls.r.push(lv.state.r);
                    ls.dtheta.push(lv.state.dtheta);
                    ls.mu.push(lv.mu);
                    ls.px.push(pose.map_or(f64::NAN, |p| p.x));
                    ls.py.push(pose.map_or(f64::NAN, |p| p.y));
                }
            }
        }

        if step == steps {
            break;
        }

        // Integrate to t + dt.
        let t_next = (step + 1) as f64 * dt;
        for i in 0..n {
            let before = states[i];
            let x = before.x + before.v * dt;
            let v = if i == 0 {
                leader_state(&scenario.leader, v0, t_next).0
            } else if before.v + applied[i] * dt < 0.0 {
                0.0
            } else {
                before.v + applied[i] * dt
            };
            states[i] = VehicleState::new(x, v, applied[i]);
            if before.x <= merge && x > merge {
                events.push(Event::MergePassage { t: t_next, vehicle: i });
            }
        }
        if let Some(lat_cfg) = &scenario.lateral {
            for (i, slot) in lateral_vehicles.iter_mut().enumerate() {
                let Some(lv) = slot else { continue };
                let kappa = lat_cfg.path.curvature_at(lv.state.s);
                let mut next = lateral::lateral_step(&lv.state, lv.mu, kappa, dt, lat_cfg.plant);
                next.v_tilde = states[i].v / next.dtheta.cos();
                lv.state = next;
            }
        }

        if let Some(ev) = detect_collision(&states, &lanes, merge, t_next) {
            events.push(ev);
            status = RunStatus::Collision;
            times.push(t_next);
            for i in 0..n {
                let s = &mut series[i];
                s.x.push(states[i].x);
                s.v.push(states[i].v);
                s.a.push(states[i].a);
                let e = match weights[i].as_ref() {
                    Some(w) => control::spacing_error(i, &states, topology.predecessors(i)?, w, cfg)?,
                    None => 0.0,
                };
                s.e.push(e);
                if let (Some(ls), Some(lv), Some(lat_cfg)) =
                    (s.lateral.as_mut(), lateral_vehicles[i].as_ref(), scenario.lateral.as_ref())
                {
                    let pose = lat_cfg.path.to_global(&lv.state).ok();
                    ls.s.push(lv.state.s);
                    ls.r.push(lv.state.r);
                    ls.dtheta.push(lv.state.dtheta);
                    ls.mu.push(lv.mu);
                    ls.px.push(pose.map_or(f64::NAN, |p| p.x));
                    ls.py.push(pose.map_or(f64::NAN, |p| p.y));
                }
            }
            break;
        }
    }

    Ok(SimulationTrace {
        name: scenario.name.clone(),
        seed: scenario.seed(),
        sample_dt: dt * scenario.record_every as f64,
        times,
        vehicles: series,
        events,
        status,
        topology,
        merge_distance: merge,
    })
}

fn resequence_states(seq: &VirtualSequence, states: &[VehicleState]) -> Result<VirtualSequence> {
    let mut main = Vec::new();
    let mut ramp = Vec::new();
    for (entry, st) in seq.entries().iter().zip(states) {
        let v = LaneVehicle {
            id: entry.id,
            position: st.x,
            speed: st.v,
        };
        match entry.lane {
            Lane::Main => main.push(v),
            Lane::Ramp => ramp.push(v),
        }
    }
    let pool = virtual_axis::pool_union(main, ramp)?;
    virtual_axis::resequence(seq, &pool, &[])
}

/// Same-lane pairs always count; cross-lane pairs only once both are past O.
fn detect_collision(states: &[VehicleState], lanes: &[Lane], merge: f64, t: f64) -> Option<Event> {
    for j in 1..states.len() {
        if let Some(p) = (0..j).rev().find(|&p| lanes[p] == lanes[j]) {
            let gap = states[p].x - states[j].x;
            if gap <= 0.0 {
                return Some(Event::Collision { t, ahead: p, behind: j, gap });
            }
        }
        let p = j - 1;
        if lanes[p] != lanes[j] && states[p].x > merge && states[j].x > merge {
            let gap = states[p].x - states[j].x;
            if gap <= 0.0 {
                return Some(Event::Collision { t, ahead: p, behind: j, gap });
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsOptions {
    /// Samples before this time are ignored for oscillation metrics, s.
    pub transient: f64,
    /// Window at the end of the run for the mean spacing error, s.
    pub tail_window: f64,
    pub convergence_tol: f64,
    /// Void sampling interval, s.
    pub void_interval: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            transient: 20.0,
            tail_window: 10.0,
            convergence_tol: 0.1,
            void_interval: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleMetrics {
    pub peak_to_peak_speed: f64,
    pub energy_absolute: f64,
    pub energy_deviation: f64,
    /// Smallest virtual gap to the immediately preceding vehicle.
    pub min_gap: Option<f64>,
    pub mean_abs_error_tail: f64,
    /// First time after which `|e_i|` stays below the tolerance.
    pub convergence_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub vehicles: Vec<VehicleMetrics>,
    /// `(t, sum of max(0, gap - desired gap))` over adjacent virtual pairs.
    pub void: Vec<(f64, f64)>,
    /// `(t, sum of |gap - desired gap|)` over the same pairs.
    pub spacing_mismatch: Vec<(f64, f64)>,
    pub energy: EnergyReport,
    pub collided: bool,
}

pub fn metrics(
    trace: &SimulationTrace,
    cfg: &ControllerConfig,
    opts: &MetricsOptions,
) -> Result<MetricsReport> {
    let len = trace.len();
    if len < 2 {
        return Err(Error::TraceTooShort(len));
    }
    let energy = stability::energy_report(&trace.speeds(), trace.sample_dt, &trace.topology, EnergyMode::Absolute)?;
    let start = trace.sample_at(opts.transient).min(len - 1);
    let tail_start = trace.sample_at((trace.times[len - 1] - opts.tail_window).max(0.0));

    let vehicles = trace
        .vehicles
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let window = &s.v[start..];
            let (lo, hi) = window
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let min_gap = (i > 0).then(|| {
                let ahead = &trace.vehicles[i - 1].x;
                ahead
                    .iter()
                    .zip(&s.x)
                    .map(|(a, b)| a - b)
                    .fold(f64::INFINITY, f64::min)
            });
            let tail = &s.e[tail_start..];
            let mean_abs_error_tail = tail.iter().map(|e| e.abs()).sum::<f64>() / tail.len() as f64;
            VehicleMetrics {
                peak_to_peak_speed: hi - lo,
                energy_absolute: energy.absolute[i],
                energy_deviation: energy.deviation[i],
                min_gap,
                mean_abs_error_tail,
                convergence_time: convergence_time(&trace.times, &s.e, opts.convergence_tol),
            }
        })
        .collect();

    let stride = ((opts.void_interval / trace.sample_dt).round() as usize).max(1);
    let mut void = Vec::new();
    let mut spacing_mismatch = Vec::new();
    for k in (0..len).step_by(stride) {
        let mut excess = 0.0;
        let mut mismatch = 0.0;
        for j in 1..trace.vehicles.len() {
            let gap = trace.vehicles[j - 1].x[k] - trace.vehicles[j].x[k];
            let desired = control::desired_spacing(1, trace.vehicles[j].v[k], cfg);
            excess += (gap - desired).max(0.0);
            mismatch += (gap - desired).abs();
        }
        void.push((trace.times[k], excess));
        spacing_mismatch.push((trace.times[k], mismatch));
    }

    Ok(MetricsReport {
        vehicles,
        void,
        spacing_mismatch,
        energy,
        collided: trace.collided(),
    })
}

/// Earliest sample time after which every sample satisfies `|e| < tol`.
pub fn convergence_time(times: &[f64], e: &[f64], tol: f64) -> Option<f64> {
    let last_bad = e.iter().rposition(|x| x.abs() >= tol);
    match last_bad {
        None => times.first().copied(),
        Some(i) if i + 1 < times.len() => Some(times[i + 1]),
        Some(_) => None,
    }
}

/// Earliest time at or after `from` where `|e| < tol` holds for `hold` seconds.
pub fn settle_time(times: &[f64], e: &[f64], tol: f64, from: f64, hold: f64) -> Option<f64> {
    let mut start: Option<usize> = None;
    for (k, (&t, &x)) in times.iter().zip(e).enumerate() {
        if t < from {
            continue;
        }
        if x.abs() < tol {
            let s = *start.get_or_insert(k);
            if t - times[s] >= hold {
                return Some(times[s]);
            }
        } else {
            start = None;
        }
    }
    None
}

/// Smallest merge distance `D` (measured from the virtual-axis origin) for
/// which every follower has settled to `|e_i| < tol` before reaching O,
/// found by bisection on `[lo, hi]`. `None` when even `hi` is too short.
pub fn min_control_range(
    trace: &SimulationTrace,
    tol: f64,
    hold: f64,
    lo: f64,
    hi: f64,
    resolution: f64,
) -> Option<f64> {
    let settled_at: Vec<Option<f64>> = trace
        .vehicles
        .iter()
        .skip(1)
        .map(|s| {
            settle_time(&trace.times, &s.e, tol, 0.0, hold)
                .map(|t| s.x[trace.sample_at(t)])
        })
        .collect();
    let long_enough = |d: f64| settled_at.iter().all(|x| x.is_some_and(|x| x <= d));
    if !long_enough(hi) {
        return None;
    }
    let (mut lo, mut hi) = (lo, hi);
    if long_enough(lo) {
        return Some(lo);
    }
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        if long_enough(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Built-in scenarios mirroring the published experiments.
pub mod scenarios {
    use super::*;
    use crate::control::WeightScheme;

    pub const MAINLINE_12: [f64; 7] = [0.0, -30.0, -46.0, -68.0, -89.0, -165.0, -186.0];
    pub const RAMP_12: [f64; 5] = [-20.0, -109.0, -132.0, -154.0, -198.0];
    pub const MAINLINE_4: [f64; 2] = [0.0, -8.0];
    pub const RAMP_4: [f64; 2] = [-2.0, -9.0];

    /// Twelve vehicles, sine leader, 80 s.
    pub fn twelve_vehicle(scheme: WeightScheme) -> ScenarioConfig {
        let mut s = ScenarioConfig::new(MAINLINE_12.to_vec(), RAMP_12.to_vec());
        s.name = format!("twelve-vehicle-{}", scheme.name());
        s.controller.scheme = scheme;
        s.record_every = 10;
        s
    }

    /// Four vehicles starting inside the safe headway, brake/accelerate leader.
    pub fn four_vehicle_extreme() -> ScenarioConfig {
        let mut s = ScenarioConfig::new(MAINLINE_4.to_vec(), RAMP_4.to_vec());
        s.name = "four-vehicle-extreme".into();
        s.leader = LeaderProfile::brake_accel();
        s.duration = 40.0;
        s.merge_distance = 250.0;
        s.record_every = 10;
        s
    }

    /// Twelve-vehicle run with a curved loop ramp (radius 300 m) long enough
    /// to hold every ramp vehicle at t = 0.
    pub fn curved_ramp() -> ScenarioConfig {
        let mut s = twelve_vehicle(WeightScheme::Equal);
        s.name = "curved-ramp".into();
        let path = PathGeometry::ramp_arc(300.0, 800.0, 1200.0).expect("valid ramp geometry");
        s.lateral = Some(LateralSetup::new(path));
        s
    }

    /// One ramp vehicle on a 300 m arc of radius 300 m entering a straight
    /// mainline, starting 1 m off the centreline with a 5 degree heading error.
    pub fn single_ramp_lateral() -> ScenarioConfig {
        let mut s = ScenarioConfig::new(vec![], vec![0.0]);
        s.name = "single-ramp-lateral".into();
        s.leader = LeaderProfile::Constant;
        s.duration = 25.0;
        s.merge_distance = 300.0;
        let path = PathGeometry::ramp_arc(300.0, 300.0, 500.0).expect("valid ramp geometry");
        s.lateral = Some(LateralSetup::new(path));
        s
    }

    /// Leader and one follower at equilibrium, leader speed `20 + amplitude sin(omega t)`.
    pub fn frequency_response(omega: f64, amplitude: f64, duration: f64) -> ScenarioConfig {
        let mut s = ScenarioConfig::new(vec![0.0, -25.0], vec![]);
        s.name = format!("frequency-response-{omega}");
        s.leader = LeaderProfile::Sine { amplitude, omega };
        s.duration = duration;
        s.merge_distance = 1e9;
        s
    }
}

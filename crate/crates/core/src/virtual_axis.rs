//! Virtual rotation of the mainline and on-ramp onto one shared axis.
//!
//! Every vehicle keeps its signed distance to the merge point O (negative
//! upstream). Sorting the union of both lanes by that distance yields the
//! first-in-first-out virtual car-following sequence.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VehicleId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Lane of origin. The numeric flag is 1 for mainline and 0 for ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lane {
    Main,
    Ramp,
}

impl Lane {
    pub fn flag(self) -> u8 {
        match self {
            Lane::Main => 1,
            Lane::Ramp => 0,
        }
    }

    pub fn from_flag(flag: u8) -> Option<Lane> {
        match flag {
            1 => Some(Lane::Main),
            0 => Some(Lane::Ramp),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Lane::Main => "mainline",
            Lane::Ramp => "ramp",
        }
    }

    /// Single-letter code used by the CLI (`M` / `R`).
    pub fn letter(self) -> char {
        match self {
            Lane::Main => 'M',
            Lane::Ramp => 'R',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneVehicle {
    pub id: VehicleId,
    /// Signed distance to the merge point, m.
    pub position: f64,
    pub speed: f64,
}

impl LaneVehicle {
    pub fn new(id: u32, position: f64, speed: f64) -> Self {
        Self {
            id: VehicleId(id),
            position,
            speed,
        }
    }
}

/// Both lanes, each listed leader first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LanePool {
    mainline: Vec<LaneVehicle>,
    ramp: Vec<LaneVehicle>,
}

impl LanePool {
    pub fn mainline(&self) -> &[LaneVehicle] {
        &self.mainline
    }

    pub fn ramp(&self) -> &[LaneVehicle] {
        &self.ramp
    }

    pub fn len(&self) -> usize {
        self.mainline.len() + self.ramp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (Lane, &LaneVehicle)> {
        self.mainline
            .iter()
            .map(|v| (Lane::Main, v))
            .chain(self.ramp.iter().map(|v| (Lane::Ramp, v)))
    }

    fn find(&self, id: VehicleId) -> Option<(Lane, &LaneVehicle)> {
        self.iter().find(|(_, v)| v.id == id)
    }
}

/// Combines the two lanes into one pool, validating ids and per-lane order.
pub fn pool_union(mainline: Vec<LaneVehicle>, ramp: Vec<LaneVehicle>) -> Result<LanePool> {
    check_lane(Lane::Main, &mainline)?;
    check_lane(Lane::Ramp, &ramp)?;

    let mut seen = HashSet::new();
    for v in mainline.iter().chain(ramp.iter()) {
        if !seen.insert(v.id) {
            return Err(Error::DuplicateId(v.id));
        }
    }
    Ok(LanePool { mainline, ramp })
}

fn check_lane(lane: Lane, vehicles: &[LaneVehicle]) -> Result<()> {
    for v in vehicles {
        if !v.position.is_finite() || !v.speed.is_finite() {
            return Err(Error::NonFinite("vehicle state"));
        }
    }
    for pair in vehicles.windows(2) {
        let (ahead, behind) = (&pair[0], &pair[1]);
        if behind.position == ahead.position {
            return Err(Error::EqualPositions {
                lane: lane.name(),
                first: ahead.id,
                second: behind.id,
                position: ahead.position,
            });
        }
        if behind.position > ahead.position {
            return Err(Error::LaneOrder {
                lane: lane.name(),
                id: behind.id,
                position: behind.position,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequencedVehicle {
    pub id: VehicleId,
    pub lane: Lane,
    pub position: f64,
    pub speed: f64,
}

/// Ordered virtual platoon. Index 0 is the virtual leader (closest to O).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VirtualSequence {
    entries: Vec<SequencedVehicle>,
}

impl VirtualSequence {
    pub fn from_entries(entries: Vec<SequencedVehicle>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[SequencedVehicle] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.position).collect()
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.speed).collect()
    }

    pub fn lanes(&self) -> Vec<Lane> {
        self.entries.iter().map(|e| e.lane).collect()
    }

    /// Mainline/ramp indicator per sequence slot (1 = mainline).
    pub fn flags(&self) -> Vec<u8> {
        self.entries.iter().map(|e| e.lane.flag()).collect()
    }

    /// Sequence numbers `1..=N`.
    pub fn seq_ids(&self) -> Vec<usize> {
        (1..=self.entries.len()).collect()
    }

    pub fn source_ids(&self) -> Vec<VehicleId> {
        self.entries.iter().map(|e| e.id).collect()
    }
}

/// Strategy turning a pool into a car-following order. Any implementation
/// must respect first-in-first-out within each lane.
pub trait Sequencer {
    fn order(&self, pool: &LanePool) -> VirtualSequence;
}

/// Sort by distance to the merge point, descending. Exact cross-lane ties
/// go to the mainline vehicle.
#[derive(Debug, Clone, Copy, Default)]
pub struct DistanceSort;

impl Sequencer for DistanceSort {
    fn order(&self, pool: &LanePool) -> VirtualSequence {
        let mut entries: Vec<SequencedVehicle> = pool
            .iter()
            .map(|(lane, v)| SequencedVehicle {
                id: v.id,
                lane,
                position: v.position,
                speed: v.speed,
            })
            .collect();
        // Mainline entries precede ramp entries in `pool.iter()`, so a stable
        // sort by position alone already breaks ties in favour of the mainline.
        entries.sort_by(|a, b| b.position.total_cmp(&a.position));
        VirtualSequence { entries }
    }
}

pub fn sequence(pool: &LanePool) -> VirtualSequence {
    DistanceSort.order(pool)
}

/// Re-sequences under a FIFO lock.
///
/// Vehicles already in `prev` keep their relative order and only have their
/// position and speed refreshed. Ids listed in `exited` are dropped. Vehicles
/// new to the pool are sorted by position and appended behind the locked
/// ones.
pub fn resequence(
    prev: &VirtualSequence,
    pool: &LanePool,
    exited: &[VehicleId],
) -> Result<VirtualSequence> {
    if prev.is_empty() {
        return Ok(sequence(pool));
    }
    let exited: HashSet<VehicleId> = exited.iter().copied().collect();

    let mut locked = Vec::with_capacity(pool.len());
    let mut known = HashSet::new();
    for entry in prev.entries() {
        if exited.contains(&entry.id) {
            continue;
        }
        let (lane, v) = pool.find(entry.id).ok_or(Error::MissingVehicle(entry.id))?;
        known.insert(entry.id);
        locked.push(SequencedVehicle {
            id: v.id,
            lane,
            position: v.position,
            speed: v.speed,
        });
    }

    let mut arrivals: Vec<SequencedVehicle> = pool
        .iter()
        .filter(|(_, v)| !known.contains(&v.id) && !exited.contains(&v.id))
        .map(|(lane, v)| SequencedVehicle {
            id: v.id,
            lane,
            position: v.position,
            speed: v.speed,
        })
        .collect();
    arrivals.sort_by(|a, b| b.position.total_cmp(&a.position));

    locked.extend(arrivals);
    Ok(VirtualSequence { entries: locked })
}

/// Position lookup used by callers that rebuild pools from sequences.
pub fn index_by_id(seq: &VirtualSequence) -> HashMap<VehicleId, usize> {
    seq.entries()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id, i))
        .collect()
}

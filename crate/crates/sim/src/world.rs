//! Read-only view of the scenario shared by all workers.

use skywatch_core::geometry::{geometry_from_enu, Enu, GeoPosition, RelativeGeometry, SystemPose};
use skywatch_core::{Millis, SensorId, TargetClass};

use crate::error::SimResult;
use crate::scenario::{FalseEvent, ResolvedTarget, Scenario, TargetState};

#[derive(Debug, Clone)]
pub struct World {
    pub scenario: Scenario,
    pub seed: u64,
    pub origin: GeoPosition,
    pub pose: SystemPose,
    pub targets: Vec<ResolvedTarget>,
    pub duration: Millis,
}

/// A target present at some instant, with its geometry from the system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<'a> {
    pub index: usize,
    pub target: &'a ResolvedTarget,
    pub state: TargetState,
    pub geometry: RelativeGeometry,
}

impl Observation<'_> {
    pub fn class(&self) -> TargetClass {
        self.target.spec.class
    }
}

impl World {
    pub fn new(scenario: &Scenario, seed: u64) -> SimResult<World> {
        scenario.validate()?;
        let origin = scenario.system.origin();
        let targets = scenario
            .targets
            .iter()
            .map(|t| ResolvedTarget::resolve(t, &origin))
            .collect::<SimResult<Vec<_>>>()?;
        Ok(World {
            scenario: scenario.clone(),
            seed,
            origin,
            pose: scenario.system.pose()?,
            targets,
            duration: scenario.duration_ms(),
        })
    }

    /// Targets present at `t`, in scenario order. A target coincident with
    /// the system has no defined direction and is skipped.
    pub fn observe(&self, t: Millis) -> Vec<Observation<'_>> {
        self.targets
            .iter()
            .enumerate()
            .filter_map(|(index, target)| {
                let state = target.state_at(t, self.duration)?;
                let [east, north, up] = state.position;
                let geometry = geometry_from_enu(&Enu { east, north, up }).ok()?;
                Some(Observation {
                    index,
                    target,
                    state,
                    geometry,
                })
            })
            .collect()
    }

    pub fn false_events(&self, sensor: SensorId, t: Millis) -> impl Iterator<Item = &FalseEvent> {
        self.scenario.false_events.iter().filter(move |e| {
            let start = (e.t * 1000.0).round() as Millis;
            let end = ((e.t + e.duration) * 1000.0).round() as Millis;
            e.sensor == sensor && t >= start && t < end
        })
    }

    pub fn stalled(&self, sensor: SensorId, t: Millis) -> bool {
        self.scenario.stalls.iter().any(|s| {
            s.sensor == sensor && t >= (s.from * 1000.0).round() as Millis && t < (s.to * 1000.0).round() as Millis
        })
    }
}

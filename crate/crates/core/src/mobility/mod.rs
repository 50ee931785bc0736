//! Vehicle movement generation.
//!
//! Four models produce piecewise-linear movement schedules over a grid road
//! network: Simple (straight motion with toroidal wrap), Manhattan (random
//! turns with semaphore stops), Downtown (Manhattan plus a dense low-speed
//! central zone) and Flow (trip-based car-following with signalized
//! intersections). All of them are pure functions of their configuration and
//! seed.

use thiserror::Error;

use crate::road_network::RoadNetwork;

mod builder;
mod flow;
mod manhattan;
mod simple;

pub(crate) use builder::TraceBuilder;

#[derive(Debug, Error)]
pub enum MobilityError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("time {t} outside the trace horizon [0, {duration}]")]
    OutOfRange { t: f64, duration: f64 },
    #[error("vehicle {0} has no waypoints")]
    EmptyTrace(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MobilityModel {
    /// CityMob Simple: constant heading, no semaphores, toroidal wrap.
    Simple,
    /// CityMob Manhattan: random turns, semaphore stops, optional damage.
    Manhattan,
    /// CityMob Downtown: Manhattan with a dense, speed-capped central zone.
    Downtown,
    /// MOVE-style flow: shortest-path trips with car-following and signals.
    Flow,
}

impl MobilityModel {
    pub fn name(self) -> &'static str {
        match self {
            MobilityModel::Simple => "sm",
            MobilityModel::Manhattan => "mm",
            MobilityModel::Downtown => "dm",
            MobilityModel::Flow => "flow",
        }
    }

    pub fn parse(s: &str) -> Option<MobilityModel> {
        match s.to_ascii_lowercase().as_str() {
            "sm" | "simple" => Some(MobilityModel::Simple),
            "mm" | "manhattan" => Some(MobilityModel::Manhattan),
            "dm" | "downtown" => Some(MobilityModel::Downtown),
            "flow" | "move" => Some(MobilityModel::Flow),
            _ => None,
        }
    }
}

/// Axis-aligned rectangle, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DowntownConfig {
    pub rect: Rect,
    /// Share of vehicles initially placed inside the rectangle (exact quota).
    pub density_fraction: f64,
    /// Speed cap inside the rectangle as a fraction of `max_speed`.
    pub speed_factor: f64,
    /// Probability that a downtown vehicle picks a turn leading back inside.
    pub stay_inside_probability: f64,
}

impl DowntownConfig {
    /// Centered rectangle covering one third of each dimension, 70 % of the
    /// fleet inside, speed halved.
    pub fn default_for_area(width: f64, height: f64) -> DowntownConfig {
        DowntownConfig {
            rect: Rect {
                x_min: width / 3.0,
                y_min: height / 3.0,
                x_max: 2.0 * width / 3.0,
                y_max: 2.0 * height / 3.0,
            },
            density_fraction: 0.7,
            speed_factor: 0.5,
            stay_inside_probability: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DamageConfig {
    /// Probability that a vehicle breaks down once during the trace.
    pub p_damage: f64,
    /// How long a broken vehicle stays in place.
    pub repair_time: f64,
}

/// Turn split at Manhattan intersections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnProbabilities {
    pub left: f64,
    pub right: f64,
    pub straight: f64,
}

impl Default for TurnProbabilities {
    fn default() -> Self {
        TurnProbabilities { left: 0.25, right: 0.25, straight: 0.5 }
    }
}

/// Parameters specific to the flow model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    /// Mobility integration step.
    pub tick: f64,
    /// Minimum bumper gap kept to a leader.
    pub gap_min: f64,
    /// Time headway of the car-following rule.
    pub headway: f64,
    /// Signal period used when the network has no semaphores of its own.
    pub signal_period: f64,
    pub signal_green_fraction: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            tick: 0.5,
            gap_min: 2.0,
            headway: 1.5,
            signal_period: 60.0,
            signal_green_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityConfig {
    pub model: MobilityModel,
    pub n_vehicles: usize,
    pub duration: f64,
    pub max_speed: f64,
    pub min_speed: f64,
    pub seed: u64,
    pub net: RoadNetwork,
    pub downtown: Option<DowntownConfig>,
    pub damage: Option<DamageConfig>,
    pub turns: TurnProbabilities,
    pub flow: FlowParams,
}

impl MobilityConfig {
    /// Configuration with the standard experiment defaults: 300 s horizon,
    /// speeds in [5, 40] m/s.
    pub fn new(model: MobilityModel, net: RoadNetwork, n_vehicles: usize, seed: u64) -> Self {
        MobilityConfig {
            model,
            n_vehicles,
            duration: 300.0,
            max_speed: 40.0,
            min_speed: 5.0,
            seed,
            net,
            downtown: None,
            damage: None,
            turns: TurnProbabilities::default(),
            flow: FlowParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), MobilityError> {
        if self.n_vehicles < 1 {
            return Err(MobilityError::InvalidConfig("need at least one vehicle".into()));
        }
        if !(self.duration > 0.0) {
            return Err(MobilityError::InvalidConfig(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.min_speed > 0.0) || self.min_speed > self.max_speed {
            return Err(MobilityError::InvalidConfig(format!(
                "need 0 < min_speed <= max_speed, got {}..{}",
                self.min_speed, self.max_speed
            )));
        }
        if let Some(dt) = &self.downtown {
            if !(0.0..=1.0).contains(&dt.density_fraction) {
                return Err(MobilityError::InvalidConfig(format!(
                    "density fraction must be in [0,1], got {}",
                    dt.density_fraction
                )));
            }
            if !(0.0..=1.0).contains(&dt.speed_factor) {
                return Err(MobilityError::InvalidConfig(format!(
                    "downtown speed factor must be in [0,1], got {}",
                    dt.speed_factor
                )));
            }
            let r = &dt.rect;
            if r.x_min < 0.0
                || r.y_min < 0.0
                || r.x_max > self.net.area_width
                || r.y_max > self.net.area_height
                || r.x_min >= r.x_max
                || r.y_min >= r.y_max
            {
                return Err(MobilityError::InvalidConfig(
                    "downtown rectangle must be non-empty and inside the area".into(),
                ));
            }
        }
        if let Some(dmg) = &self.damage {
            if !(0.0..=1.0).contains(&dmg.p_damage) || !(dmg.repair_time > 0.0) {
                return Err(MobilityError::InvalidConfig(
                    "damage needs a probability in [0,1] and a positive repair time".into(),
                ));
            }
        }
        Ok(())
    }

    fn expect_model(&self, model: MobilityModel) -> Result<(), MobilityError> {
        if self.model == model {
            Ok(())
        } else {
            Err(MobilityError::InvalidConfig(format!(
                "config is for model {:?}, generator is {:?}",
                self.model, model
            )))
        }
    }
}

/// One trace point. `speed` is the travel speed toward the next waypoint;
/// zero means the vehicle dwells in place until then.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
}

/// A vehicle that halted in place for a repair interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DamageEvent {
    pub vehicle: usize,
    pub start: f64,
    pub duration: f64,
    pub x: f64,
    pub y: f64,
}

/// Position and speed sampled from a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
}

/// Per-vehicle movement schedules over a bounded area.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub area_width: f64,
    pub area_height: f64,
    pub duration: f64,
    pub vehicles: Vec<Vec<Waypoint>>,
    pub damage_events: Vec<DamageEvent>,
}

impl TraceSet {
    pub fn n_vehicles(&self) -> usize {
        self.vehicles.len()
    }

    /// Position and speed of a vehicle at time `t` by linear interpolation
    /// between the bracketing waypoints. Motion legs advance at the recorded
    /// speed and clamp at the leg's destination; dwell legs hold position.
    pub fn position_at(&self, vehicle: usize, t: f64) -> Result<Sample, MobilityError> {
        if t < -1e-9 || t > self.duration + 1e-9 {
            return Err(MobilityError::OutOfRange { t, duration: self.duration });
        }
        let wps = self
            .vehicles
            .get(vehicle)
            .ok_or(MobilityError::EmptyTrace(vehicle))?;
        if wps.is_empty() {
            return Err(MobilityError::EmptyTrace(vehicle));
        }
        if t <= wps[0].t {
            let w = &wps[0];
            return Ok(Sample { x: w.x, y: w.y, speed: if wps.len() > 1 { w.speed } else { 0.0 } });
        }
        // Index of the last waypoint with time <= t.
        let k = wps.partition_point(|w| w.t <= t) - 1;
        if k + 1 >= wps.len() {
            let w = &wps[wps.len() - 1];
            return Ok(Sample { x: w.x, y: w.y, speed: 0.0 });
        }
        let (a, b) = (&wps[k], &wps[k + 1]);
        if a.speed <= 0.0 {
            return Ok(Sample { x: a.x, y: a.y, speed: 0.0 });
        }
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        let d = (dx * dx + dy * dy).sqrt();
        if d < 1e-12 {
            return Ok(Sample { x: a.x, y: a.y, speed: a.speed });
        }
        let traveled = (a.speed * (t - a.t)).min(d);
        let f = traveled / d;
        Ok(Sample { x: a.x + dx * f, y: a.y + dy * f, speed: a.speed })
    }
}

/// Generate a trace set for the model named in the configuration.
pub fn generate(cfg: &MobilityConfig) -> Result<TraceSet, MobilityError> {
    match cfg.model {
        MobilityModel::Simple => generate_simple(cfg),
        MobilityModel::Manhattan => generate_manhattan(cfg),
        MobilityModel::Downtown => generate_downtown(cfg),
        MobilityModel::Flow => generate_flow(cfg),
    }
}

pub use flow::generate_flow;
pub use manhattan::{generate_downtown, generate_manhattan};
pub use simple::generate_simple;

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_with(wps: Vec<Waypoint>) -> TraceSet {
        TraceSet {
            area_width: 500.0,
            area_height: 500.0,
            duration: 100.0,
            vehicles: vec![wps],
            damage_events: Vec::new(),
        }
    }

    #[test]
    fn midpoint_of_linear_motion() {
        let ts = trace_with(vec![
            Waypoint { t: 0.0, x: 0.0, y: 0.0, speed: 10.0 },
            Waypoint { t: 10.0, x: 100.0, y: 0.0, speed: 0.0 },
        ]);
        let s = ts.position_at(0, 5.0).unwrap();
        assert!((s.x - 50.0).abs() < 1e-12);
        assert_eq!(s.y, 0.0);
        assert_eq!(s.speed, 10.0);
    }

    #[test]
    fn exact_at_waypoints() {
        let ts = trace_with(vec![
            Waypoint { t: 0.0, x: 3.0, y: 4.0, speed: 5.0 },
            Waypoint { t: 2.0, x: 9.0, y: 12.0, speed: 0.0 },
        ]);
        let s0 = ts.position_at(0, 0.0).unwrap();
        assert_eq!((s0.x, s0.y), (3.0, 4.0));
        let s1 = ts.position_at(0, 2.0).unwrap();
        assert_eq!((s1.x, s1.y), (9.0, 12.0));
    }

    #[test]
    fn dwell_holds_position() {
        let ts = trace_with(vec![
            Waypoint { t: 0.0, x: 7.0, y: 8.0, speed: 0.0 },
            Waypoint { t: 50.0, x: 7.0, y: 8.0, speed: 0.0 },
        ]);
        let s = ts.position_at(0, 25.0).unwrap();
        assert_eq!((s.x, s.y, s.speed), (7.0, 8.0, 0.0));
    }

    #[test]
    fn beyond_last_waypoint_holds_last_position() {
        let ts = trace_with(vec![
            Waypoint { t: 0.0, x: 0.0, y: 0.0, speed: 10.0 },
            Waypoint { t: 10.0, x: 100.0, y: 0.0, speed: 0.0 },
        ]);
        let s = ts.position_at(0, 90.0).unwrap();
        assert_eq!((s.x, s.y, s.speed), (100.0, 0.0, 0.0));
    }

    #[test]
    fn out_of_range_is_an_error() {
        let ts = trace_with(vec![Waypoint { t: 0.0, x: 0.0, y: 0.0, speed: 0.0 }]);
        assert!(matches!(
            ts.position_at(0, 101.0),
            Err(MobilityError::OutOfRange { .. })
        ));
        assert!(matches!(
            ts.position_at(0, -0.5),
            Err(MobilityError::OutOfRange { .. })
        ));
    }
}

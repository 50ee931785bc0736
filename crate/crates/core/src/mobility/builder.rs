//! Waypoint emission on the trace-file grid.
//!
//! The ns-2 trace format stores six decimal places, so the builder keeps
//! every waypoint on that grid as it is produced: times on whole
//! microseconds, coordinates on micrometres, and leg speeds derived as
//! distance / duration of the quantized leg. Legs longer than one second are
//! chopped so that speed rounding in the written file can never displace a
//! parsed trajectory by more than a micrometre. Toroidal wraps are encoded
//! as one-microsecond jump legs, the only representation of a position jump
//! the format admits.

use super::Waypoint;
use crate::quant::{q6, s_to_us_ceil, us_to_s};

/// Longest emitted motion leg, in seconds.
const MAX_LEG_S: f64 = 1.0;

/// Below this distance a move is treated as a position snap, not a leg.
const SNAP_DISTANCE: f64 = 1e-5;

pub(crate) struct TraceBuilder {
    t_us: u64,
    duration_us: u64,
    x: f64,
    y: f64,
    wps: Vec<Waypoint>,
    done: bool,
}

fn dist(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt()
}

impl TraceBuilder {
    pub fn new(start: (f64, f64), duration: f64) -> TraceBuilder {
        TraceBuilder {
            t_us: 0,
            duration_us: s_to_us_ceil(duration),
            x: q6(start.0),
            y: q6(start.1),
            wps: Vec::new(),
            done: false,
        }
    }

    pub fn now(&self) -> f64 {
        us_to_s(self.t_us)
    }

    pub fn now_us(&self) -> u64 {
        self.t_us
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn push_motion(&mut self, speed: f64) {
        self.wps.push(Waypoint { t: us_to_s(self.t_us), x: self.x, y: self.y, speed });
    }

    /// Constant-speed straight leg to `target`, chopped into sub-legs of at
    /// most [`MAX_LEG_S`]. Stops early (and marks the builder done) at the
    /// horizon.
    pub fn move_to(&mut self, target: (f64, f64), nominal_speed: f64) {
        if self.done {
            return;
        }
        debug_assert!(nominal_speed > 0.0);
        let (tx, ty) = (q6(target.0), q6(target.1));
        let total = dist(self.x, self.y, tx, ty);
        if total < SNAP_DISTANCE {
            self.x = tx;
            self.y = ty;
            return;
        }
        let n = ((total / nominal_speed) / MAX_LEG_S).ceil().max(1.0) as u64;
        let (sx, sy) = (self.x, self.y);
        for i in 1..=n {
            let f = i as f64 / n as f64;
            let px = if i == n { tx } else { q6(sx + (tx - sx) * f) };
            let py = if i == n { ty } else { q6(sy + (ty - sy) * f) };
            if !self.sub_leg(px, py, nominal_speed) {
                return;
            }
        }
    }

    /// One quantized leg; returns false when the horizon was reached.
    fn sub_leg(&mut self, px: f64, py: f64, nominal_speed: f64) -> bool {
        let d = dist(self.x, self.y, px, py);
        if d < 1e-9 {
            self.x = px;
            self.y = py;
            return true;
        }
        // Rounding the duration up keeps the emitted speed at or below the
        // nominal one.
        let dt_us = s_to_us_ceil(d / nominal_speed).max(1);
        let avail = self.duration_us - self.t_us;
        if dt_us >= avail {
            if avail > 0 {
                let f = avail as f64 / dt_us as f64;
                let ex = q6(self.x + (px - self.x) * f);
                let ey = q6(self.y + (py - self.y) * f);
                let d2 = dist(self.x, self.y, ex, ey);
                if d2 > 1e-9 {
                    let speed = d2 / us_to_s(avail);
                    self.push_motion(speed);
                    self.t_us = self.duration_us;
                    self.x = ex;
                    self.y = ey;
                }
            }
            self.t_us = self.duration_us;
            self.done = true;
            return false;
        }
        let speed = d / us_to_s(dt_us);
        self.push_motion(speed);
        self.t_us += dt_us;
        self.x = px;
        self.y = py;
        true
    }

    /// Leg with a fixed end time (flow model emission). The speed falls out
    /// of the quantized distance and duration.
    pub fn move_until(&mut self, target: (f64, f64), t_end_us: u64) {
        if self.done {
            return;
        }
        let t_end_us = t_end_us.min(self.duration_us);
        if t_end_us <= self.t_us {
            return;
        }
        let (tx, ty) = (q6(target.0), q6(target.1));
        let total = dist(self.x, self.y, tx, ty);
        if total < SNAP_DISTANCE {
            self.dwell_until_us(t_end_us);
            self.x = tx;
            self.y = ty;
            return;
        }
        let span = t_end_us - self.t_us;
        let n = (us_to_s(span) / MAX_LEG_S).ceil().max(1.0) as u64;
        let (sx, sy, s_us) = (self.x, self.y, self.t_us);
        for i in 1..=n {
            let f = i as f64 / n as f64;
            let (px, py, pt) = if i == n {
                (tx, ty, t_end_us)
            } else {
                (
                    q6(sx + (tx - sx) * f),
                    q6(sy + (ty - sy) * f),
                    s_us + (span as f64 * f).round() as u64,
                )
            };
            let d = dist(self.x, self.y, px, py);
            if pt <= self.t_us {
                continue;
            }
            if d < 1e-9 {
                self.dwell_until_us(pt);
                self.x = px;
                self.y = py;
                continue;
            }
            let speed = d / us_to_s(pt - self.t_us);
            self.push_motion(speed);
            self.t_us = pt;
            self.x = px;
            self.y = py;
        }
        if self.t_us >= self.duration_us {
            self.done = true;
        }
    }

    /// Instantaneous position jump, encoded as a one-microsecond leg. Used
    /// for toroidal wrap; the emitted speed is far above any vehicle speed
    /// and is recognizable as a wrap marker.
    pub fn jump_to(&mut self, target: (f64, f64)) {
        if self.done {
            return;
        }
        if self.duration_us - self.t_us < 1 {
            self.t_us = self.duration_us;
            self.done = true;
            return;
        }
        let (tx, ty) = (q6(target.0), q6(target.1));
        let d = dist(self.x, self.y, tx, ty);
        if d < 1e-9 {
            return;
        }
        let speed = d / 1e-6;
        self.push_motion(speed);
        self.t_us += 1;
        self.x = tx;
        self.y = ty;
    }

    pub fn dwell(&mut self, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        let until = self.t_us.saturating_add(s_to_us_ceil(dt));
        self.dwell_until_us(until);
    }

    /// Dwell in place until the given tick (clamped to the horizon).
    pub fn dwell_until_us(&mut self, t_us: u64) {
        if self.done {
            return;
        }
        let t_us = t_us.min(self.duration_us);
        if t_us <= self.t_us {
            return;
        }
        // Consecutive dwells merge: a single zero-speed waypoint covers the
        // whole stop until the next waypoint.
        let already_dwelling = self
            .wps
            .last()
            .map(|w| w.speed == 0.0 && w.x == self.x && w.y == self.y)
            .unwrap_or(false);
        if !already_dwelling {
            self.push_motion(0.0);
        }
        self.t_us = t_us;
        if self.t_us >= self.duration_us {
            self.done = true;
        }
    }

    /// Close any trailing motion leg and return the waypoint list. Every
    /// vehicle ends up with at least one waypoint, the first at t = 0.
    pub fn finish(mut self) -> Vec<Waypoint> {
        match self.wps.last() {
            None => {
                self.t_us = 0;
                self.push_motion(0.0);
            }
            // A motion waypoint's speed points at the next waypoint, so an
            // open leg is closed with its arrival point.
            Some(w) if w.speed > 0.0 => self.push_motion(0.0),
            Some(_) => {}
        }
        self.wps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_kinematics(wps: &[Waypoint]) {
        for pair in wps.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            assert!(b.t > a.t, "times strictly increasing: {:?} {:?}", a, b);
            if a.speed > 0.0 {
                let d = dist(a.x, a.y, b.x, b.y);
                let dt = b.t - a.t;
                assert!(
                    (d / a.speed - dt).abs() <= 1e-6 * dt,
                    "kinematic mismatch: d={d} s={} dt={dt}",
                    a.speed
                );
            }
        }
    }

    #[test]
    fn long_leg_is_chopped_and_consistent() {
        let mut b = TraceBuilder::new((0.0, 0.0), 100.0);
        b.move_to((400.0, 0.0), 10.0);
        let wps = b.finish();
        // 40 s of travel in <= 1 s pieces.
        assert!(wps.len() >= 40);
        check_kinematics(&wps);
        assert_eq!(wps.last().unwrap().x, 400.0);
    }

    #[test]
    fn horizon_truncates_mid_leg() {
        let mut b = TraceBuilder::new((0.0, 0.0), 5.0);
        b.move_to((400.0, 0.0), 10.0);
        assert!(b.is_done());
        let wps = b.finish();
        check_kinematics(&wps);
        let last = wps.last().unwrap();
        assert!((last.t - 5.0).abs() < 1e-9);
        assert!((last.x - 50.0).abs() < 1e-4);
    }

    #[test]
    fn emitted_speed_never_exceeds_nominal() {
        let mut b = TraceBuilder::new((3.33337, 7.1), 50.0);
        b.move_to((488.1234567, 255.7), 39.99);
        for w in b.finish().iter().filter(|w| w.speed > 0.0) {
            assert!(w.speed <= 39.99 + 1e-12, "speed {}", w.speed);
        }
    }

    #[test]
    fn dwells_merge() {
        let mut b = TraceBuilder::new((1.0, 2.0), 100.0);
        b.dwell(3.0);
        b.dwell(4.0);
        b.move_to((11.0, 2.0), 5.0);
        let wps = b.finish();
        check_kinematics(&wps);
        assert_eq!(wps.iter().filter(|w| w.speed == 0.0 && w.t < 6.9).count(), 1);
    }

    #[test]
    fn jump_is_one_microsecond() {
        let mut b = TraceBuilder::new((500.0, 80.0), 100.0);
        b.move_to((500.0, 80.0), 10.0);
        b.jump_to((0.0, 80.0));
        b.move_to((10.0, 80.0), 10.0);
        let wps = b.finish();
        let jump = wps.iter().find(|w| w.speed > 1e6).unwrap();
        assert_eq!(jump.x, 500.0);
        check_kinematics(&wps);
    }

    #[test]
    fn move_until_hits_exact_end_time() {
        let mut b = TraceBuilder::new((0.0, 0.0), 100.0);
        b.move_until((12.5, 0.0), 2_500_000);
        let wps = b.finish();
        check_kinematics(&wps);
        assert!((b_last_time(&wps) - 2.5).abs() < 1e-9);
    }

    fn b_last_time(wps: &[Waypoint]) -> f64 {
        wps.last().unwrap().t
    }

    fn dist(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
        ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt()
    }
}

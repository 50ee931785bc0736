//! ns-2 movement-trace serialization.
//!
//! Traces are written as the classic setdest scenario directives:
//!
//! ```text
//! $node_(0) set X_ 50.000000
//! $node_(0) set Y_ 60.000000
//! $node_(0) set Z_ 0.000000
//! $ns_ at 2.000000 "$node_(0) setdest 100.000000 60.000000 10.000000"
//! ```
//!
//! Numbers carry exactly six decimals, directives are sorted by time then
//! node id, dwells are encoded by omission. Parsing reconstructs waypoint
//! lists, computing each leg's arrival from distance / speed and letting a
//! later directive preempt an unfinished one.

use std::fmt::Write as _;

use thiserror::Error;

use crate::mobility::{TraceSet, Waypoint};

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: motion directive for node {node} before its initial position")]
    MotionBeforeInit { line: usize, node: usize },
    #[error("node ids are not contiguous: saw {seen} nodes but highest id is {max_id}")]
    NonContiguousNodes { seen: usize, max_id: usize },
}

/// Serialize a trace set. Output is deterministic: per-node initial
/// positions first, then motion directives ordered by (time, node).
pub fn write_trace(ts: &TraceSet) -> String {
    let mut out = String::new();
    for (node, wps) in ts.vehicles.iter().enumerate() {
        let first = wps.first();
        let (x, y) = first.map(|w| (w.x, w.y)).unwrap_or((0.0, 0.0));
        writeln!(out, "$node_({node}) set X_ {x:.6}").unwrap();
        writeln!(out, "$node_({node}) set Y_ {y:.6}").unwrap();
        writeln!(out, "$node_({node}) set Z_ 0.000000").unwrap();
    }
    let mut motions: Vec<(f64, usize, &Waypoint, &Waypoint)> = Vec::new();
    for (node, wps) in ts.vehicles.iter().enumerate() {
        for pair in wps.windows(2) {
            if pair[0].speed > 0.0 {
                motions.push((pair[0].t, node, &pair[0], &pair[1]));
            }
        }
    }
    motions.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    for (t, node, from, to) in motions {
        writeln!(
            out,
            "$ns_ at {t:.6} \"$node_({node}) setdest {:.6} {:.6} {:.6}\"",
            to.x, to.y, from.speed
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum Directive {
    Initial { node: usize, axis: u8, value: f64 },
    Motion { t: f64, node: usize, x: f64, y: f64, speed: f64 },
}

/// Parse trace text back into a `TraceSet`. Lines starting with `#` are
/// comments; anything else must be one of the two directive forms.
pub fn parse_trace(text: &str) -> Result<TraceSet, TraceIoError> {
    let mut directives: Vec<(usize, Directive)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        directives.push((line_no, parse_line(line, line_no)?));
    }

    let mut max_id: Option<usize> = None;
    for (_, d) in &directives {
        let node = match d {
            Directive::Initial { node, .. } | Directive::Motion { node, .. } => *node,
        };
        max_id = Some(max_id.map_or(node, |m: usize| m.max(node)));
    }
    let Some(max_id) = max_id else {
        return Ok(TraceSet {
            area_width: 0.0,
            area_height: 0.0,
            duration: 0.0,
            vehicles: Vec::new(),
            damage_events: Vec::new(),
        });
    };
    let n = max_id + 1;

    let mut init: Vec<[Option<f64>; 2]> = vec![[None, None]; n];
    let mut motions: Vec<Vec<Directive>> = vec![Vec::new(); n];
    let mut seen = vec![false; n];
    for (line_no, d) in directives {
        match d {
            Directive::Initial { node, axis, value } => {
                seen[node] = true;
                if axis < 2 {
                    init[node][axis as usize] = Some(value);
                }
            }
            Directive::Motion { t, node, .. } => {
                if init[node][0].is_none() || init[node][1].is_none() {
                    return Err(TraceIoError::MotionBeforeInit { line: line_no, node });
                }
                seen[node] = true;
                let _ = t;
                motions[node].push(d);
            }
        }
    }
    let seen_count = seen.iter().filter(|s| **s).count();
    if seen_count != n {
        return Err(TraceIoError::NonContiguousNodes { seen: seen_count, max_id });
    }

    let mut vehicles = Vec::with_capacity(n);
    let mut duration: f64 = 0.0;
    let mut area_w: f64 = 0.0;
    let mut area_h: f64 = 0.0;
    for node in 0..n {
        // Stable order by directive time (file order breaks ties).
        motions[node].sort_by(|a, b| {
            let (Directive::Motion { t: ta, .. }, Directive::Motion { t: tb, .. }) = (a, b) else {
                unreachable!()
            };
            ta.partial_cmp(tb).unwrap()
        });
        let x0 = init[node][0].unwrap_or(0.0);
        let y0 = init[node][1].unwrap_or(0.0);
        let wps = rebuild_waypoints(x0, y0, &motions[node]);
        for w in &wps {
            duration = duration.max(w.t);
            area_w = area_w.max(w.x);
            area_h = area_h.max(w.y);
        }
        vehicles.push(wps);
    }

    Ok(TraceSet { area_width: area_w, area_height: area_h, duration, vehicles, damage_events: Vec::new() })
}

/// Turn one node's motion directives back into waypoints. A directive at
/// the pending leg's arrival time continues the motion; an earlier one
/// preempts it mid-flight; a later one inserts a dwell.
fn rebuild_waypoints(x0: f64, y0: f64, motions: &[Directive]) -> Vec<Waypoint> {
    let mut wps: Vec<Waypoint> = Vec::new();
    let mut pos = (x0, y0);
    // Current open leg: (start time, from, to, speed, arrival time).
    let mut open: Option<(f64, (f64, f64), (f64, f64), f64, f64)> = None;
    let eps = 1e-9;

    let mut push = |wps: &mut Vec<Waypoint>, w: Waypoint| {
        if let Some(last) = wps.last_mut() {
            if w.t <= last.t + eps {
                *last = Waypoint { t: last.t, ..w };
                return;
            }
        }
        wps.push(w);
    };

    for d in motions {
        let Directive::Motion { t, x, y, speed } = *d else { unreachable!() };
        if let Some((t0, from, to, v, arrive)) = open.take() {
            if t >= arrive - eps {
                // Leg completes; dwell (by omission) until the new directive.
                pos = to;
                if t > arrive + eps {
                    push(&mut wps, Waypoint { t: arrive, x: to.0, y: to.1, speed: 0.0 });
                }
            } else {
                // Preempted mid-leg.
                let d_full = dist(from, to);
                let traveled = (v * (t - t0)).min(d_full);
                let f = if d_full > 0.0 { traveled / d_full } else { 1.0 };
                pos = (from.0 + (to.0 - from.0) * f, from.1 + (to.1 - from.1) * f);
            }
        }
        let target = (x, y);
        let d = dist(pos, target);
        let arrive = if speed > 0.0 { t + d / speed } else { t };
        push(&mut wps, Waypoint { t, x: pos.0, y: pos.1, speed });
        open = Some((t, pos, target, speed, arrive));
        pos = target;
    }
    if let Some((_, _, to, _, arrive)) = open {
        push(&mut wps, Waypoint { t: arrive, x: to.0, y: to.1, speed: 0.0 });
    }
    if wps.is_empty() {
        wps.push(Waypoint { t: 0.0, x: x0, y: y0, speed: 0.0 });
    } else if wps[0].t > 0.0 {
        wps.insert(0, Waypoint { t: 0.0, x: x0, y: y0, speed: 0.0 });
    }
    wps
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt()
}

fn parse_line(line: &str, line_no: usize) -> Result<Directive, TraceIoError> {
    let err = |msg: &str| TraceIoError::Parse { line: line_no, msg: msg.to_string() };
    if let Some(rest) = line.strip_prefix("$node_(") {
        // $node_(i) set X_ <v>
        let (node, rest) = split_node_id(rest).ok_or_else(|| err("malformed node id"))?;
        let mut it = rest.split_whitespace();
        if it.next() != Some("set") {
            return Err(err("expected `set`"));
        }
        let axis = match it.next() {
            Some("X_") => 0u8,
            Some("Y_") => 1,
            Some("Z_") => 2,
            _ => return Err(err("expected X_, Y_ or Z_")),
        };
        let value: f64 = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err("bad coordinate value"))?;
        if it.next().is_some() {
            return Err(err("trailing tokens"));
        }
        return Ok(Directive::Initial { node, axis, value });
    }
    if let Some(rest) = line.strip_prefix("$ns_ at ") {
        // $ns_ at <t> "$node_(i) setdest <x> <y> <s>"
        let (t_str, quoted) = rest
            .split_once(' ')
            .ok_or_else(|| err("expected time and command"))?;
        let t: f64 = t_str.parse().map_err(|_| err("bad time"))?;
        if t < 0.0 {
            return Err(err("negative time"));
        }
        let cmd = quoted
            .strip_prefix('"')
            .and_then(|c| c.strip_suffix('"'))
            .ok_or_else(|| err("command must be quoted"))?;
        let rest = cmd
            .strip_prefix("$node_(")
            .ok_or_else(|| err("expected $node_(...) in command"))?;
        let (node, rest) = split_node_id(rest).ok_or_else(|| err("malformed node id"))?;
        let mut it = rest.split_whitespace();
        if it.next() != Some("setdest") {
            return Err(err("expected `setdest`"));
        }
        let mut next_f64 = |what: &str| -> Result<f64, TraceIoError> {
            it.next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| err(&format!("bad {what}")))
        };
        let x = next_f64("destination x")?;
        let y = next_f64("destination y")?;
        let speed = next_f64("speed")?;
        if it.next().is_some() {
            return Err(err("trailing tokens"));
        }
        if !(speed > 0.0) {
            return Err(err("speed must be positive"));
        }
        return Ok(Directive::Motion { t, node, x, y, speed });
    }
    Err(err("unrecognized directive"))
}

/// Split `123) rest...` into the id and the remainder.
fn split_node_id(s: &str) -> Option<(usize, &str)> {
    let close = s.find(')')?;
    let id: usize = s[..close].parse().ok()?;
    Some((id, s[close + 1..].trim_start()))
}

//! Grid road topology: intersections, directed lane segments, speed limits,
//! and semaphores.
//!
//! The network is a regular lattice of two-way streets (one lane per
//! direction), immutable once built, and shared by every mobility model.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::quant::q6;
use crate::rng::root_rng;

/// Index into [`RoadNetwork::intersections`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IntersectionId(pub usize);

/// Index into [`RoadNetwork::segments`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentId(pub usize);

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no route from intersection {0} to {1}")]
    NoRoute(usize, usize),
    #[error("unknown intersection id {0}")]
    UnknownIntersection(usize),
}

/// Street axis. Horizontal streets run east-west, vertical ones north-south.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    EastWest,
    NorthSouth,
}

impl Axis {
    pub fn perpendicular(self) -> Axis {
        match self {
            Axis::EastWest => Axis::NorthSouth,
            Axis::NorthSouth => Axis::EastWest,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub id: IntersectionId,
    pub x: f64,
    pub y: f64,
    /// Lattice column (0..=blocks_x).
    pub col: u32,
    /// Lattice row (0..=blocks_y).
    pub row: u32,
}

/// One directed lane between lattice-adjacent intersections.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: SegmentId,
    pub from: IntersectionId,
    pub to: IntersectionId,
    pub length: f64,
    pub speed_limit: f64,
    pub lane_count: u32,
    pub axis: Axis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SemaphoreLocation {
    Intersection(IntersectionId),
    /// Mid-street light, anchored to the canonical (`from < to`) direction.
    /// The reverse direction sees it at `length - offset`.
    MidSegment { segment: SegmentId, offset: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalState {
    Green,
    Red,
}

/// Cyclic two-phase traffic light.
#[derive(Debug, Clone, PartialEq)]
pub struct SemaphoreSpec {
    pub location: SemaphoreLocation,
    pub period: f64,
    pub green_fraction: f64,
    pub phase_offset: f64,
    /// Axis that sees green during the first phase of each cycle.
    pub axis_rule: Axis,
}

impl SemaphoreSpec {
    /// Signal shown to traffic approaching along `approach` at time `t`.
    /// Exactly one axis is green at any instant.
    pub fn state_at(&self, t: f64, approach: Axis) -> SignalState {
        let local = (t - self.phase_offset).rem_euclid(self.period);
        let first_phase = local < self.green_fraction * self.period;
        if (approach == self.axis_rule) == first_phase {
            SignalState::Green
        } else {
            SignalState::Red
        }
    }

    /// Earliest time >= `t` at which `approach` sees green.
    pub fn next_green_at(&self, t: f64, approach: Axis) -> f64 {
        if self.state_at(t, approach) == SignalState::Green {
            return t;
        }
        let split = self.green_fraction * self.period;
        let local = (t - self.phase_offset).rem_euclid(self.period);
        if approach == self.axis_rule {
            // Green window is [0, split); currently in [split, period).
            t + (self.period - local)
        } else {
            // Green window is [split, period); currently in [0, split).
            t + (split - local)
        }
    }
}

/// Planar grid of two-way streets. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    pub area_width: f64,
    pub area_height: f64,
    pub blocks_x: u32,
    pub blocks_y: u32,
    pub intersections: Vec<Intersection>,
    pub segments: Vec<Segment>,
    pub semaphores: Vec<SemaphoreSpec>,
    out_edges: Vec<Vec<SegmentId>>,
    in_edges: Vec<Vec<SegmentId>>,
}

/// Edge weight used by [`RoadNetwork::shortest_route`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteWeight {
    Distance,
    TravelTime,
}

/// Ordered list of directed segments joining two intersections.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub segments: Vec<SegmentId>,
    pub cost: f64,
}

impl RoadNetwork {
    /// Build a `blocks_x` x `blocks_y` grid covering `area_width` x
    /// `area_height` metres; every street gets one lane per direction at the
    /// given speed limit.
    pub fn build_grid(
        blocks_x: u32,
        blocks_y: u32,
        area_width: f64,
        area_height: f64,
        speed_limit: f64,
    ) -> Result<RoadNetwork, NetworkError> {
        if blocks_x < 1 || blocks_y < 1 {
            return Err(NetworkError::InvalidConfig(format!(
                "grid needs at least one block per axis, got {blocks_x}x{blocks_y}"
            )));
        }
        if !(area_width > 0.0) || !(area_height > 0.0) {
            return Err(NetworkError::InvalidConfig(format!(
                "area dimensions must be positive, got {area_width}x{area_height}"
            )));
        }
        if !(speed_limit > 0.0) {
            return Err(NetworkError::InvalidConfig(format!(
                "speed limit must be positive, got {speed_limit}"
            )));
        }

        let cols = blocks_x as usize + 1;
        let rows = blocks_y as usize + 1;
        let mut intersections = Vec::with_capacity(cols * rows);
        for row in 0..rows {
            for col in 0..cols {
                let id = IntersectionId(row * cols + col);
                intersections.push(Intersection {
                    id,
                    x: q6(col as f64 * area_width / blocks_x as f64),
                    y: q6(row as f64 * area_height / blocks_y as f64),
                    col: col as u32,
                    row: row as u32,
                });
            }
        }

        let mut segments = Vec::new();
        let mut push_pair = |a: usize, b: usize, axis: Axis, segs: &mut Vec<Segment>| {
            let (ia, ib) = (&intersections[a], &intersections[b]);
            let length = ((ib.x - ia.x).powi(2) + (ib.y - ia.y).powi(2)).sqrt();
            for (from, to) in [(a, b), (b, a)] {
                segs.push(Segment {
                    id: SegmentId(segs.len()),
                    from: IntersectionId(from),
                    to: IntersectionId(to),
                    length,
                    speed_limit,
                    lane_count: 1,
                    axis,
                });
            }
        };
        for row in 0..rows {
            for col in 0..cols {
                let here = row * cols + col;
                if col + 1 < cols {
                    push_pair(here, here + 1, Axis::EastWest, &mut segments);
                }
                if row + 1 < rows {
                    push_pair(here, here + cols, Axis::NorthSouth, &mut segments);
                }
            }
        }

        let mut out_edges = vec![Vec::new(); intersections.len()];
        let mut in_edges = vec![Vec::new(); intersections.len()];
        for seg in &segments {
            out_edges[seg.from.0].push(seg.id);
            in_edges[seg.to.0].push(seg.id);
        }
        for list in out_edges.iter_mut().chain(in_edges.iter_mut()) {
            list.sort_by_key(|s| s.0);
        }

        Ok(RoadNetwork {
            area_width,
            area_height,
            blocks_x,
            blocks_y,
            intersections,
            segments,
            semaphores: Vec::new(),
            out_edges,
            in_edges,
        })
    }

    pub fn intersection(&self, id: IntersectionId) -> &Intersection {
        &self.intersections[id.0]
    }

    pub fn segment(&self, id: SegmentId) -> &Segment {
        &self.segments[id.0]
    }

    /// Outgoing segments of an intersection, ordered by segment id.
    pub fn out_segments(&self, id: IntersectionId) -> &[SegmentId] {
        &self.out_edges[id.0]
    }

    /// The segment running opposite to `id` on the same street.
    pub fn reverse_of(&self, id: SegmentId) -> SegmentId {
        let seg = self.segment(id);
        *self
            .out_edges[seg.to.0]
            .iter()
            .find(|s| self.segment(**s).to == seg.from)
            .expect("grid streets are two-way")
    }

    /// Point at `offset` metres from the start of a segment.
    pub fn point_on_segment(&self, id: SegmentId, offset: f64) -> (f64, f64) {
        let seg = self.segment(id);
        let (a, b) = (self.intersection(seg.from), self.intersection(seg.to));
        let f = (offset / seg.length).clamp(0.0, 1.0);
        (a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f)
    }

    fn edge_cost(&self, id: SegmentId, weight: RouteWeight) -> f64 {
        let seg = self.segment(id);
        match weight {
            RouteWeight::Distance => seg.length,
            RouteWeight::TravelTime => seg.length / seg.speed_limit,
        }
    }

    /// Minimum-weight route between two intersections. Among equal-cost
    /// routes, the one whose next intersection id is smallest at every step
    /// wins, which makes the choice deterministic.
    pub fn shortest_route(
        &self,
        from: IntersectionId,
        to: IntersectionId,
        weight: RouteWeight,
    ) -> Result<Route, NetworkError> {
        if from.0 >= self.intersections.len() {
            return Err(NetworkError::UnknownIntersection(from.0));
        }
        if to.0 >= self.intersections.len() {
            return Err(NetworkError::UnknownIntersection(to.0));
        }
        if from == to {
            return Ok(Route { segments: Vec::new(), cost: 0.0 });
        }

        // Dijkstra on reversed edges gives the remaining cost to `to` from
        // every node; the route is then rebuilt greedily from `from`,
        // breaking ties by smallest next intersection id.
        let n = self.intersections.len();
        let mut dist = vec![f64::INFINITY; n];
        dist[to.0] = 0.0;
        let mut heap: BinaryHeap<Reverse<(MinCost, usize)>> = BinaryHeap::new();
        heap.push(Reverse((MinCost(0.0), to.0)));
        while let Some(Reverse((MinCost(d), v))) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &seg_id in &self.in_edges[v] {
                let seg = self.segment(seg_id);
                let u = seg.from.0;
                let cand = d + self.edge_cost(seg_id, weight);
                if cand < dist[u] {
                    dist[u] = cand;
                    heap.push(Reverse((MinCost(cand), u)));
                }
            }
        }
        if !dist[from.0].is_finite() {
            return Err(NetworkError::NoRoute(from.0, to.0));
        }

        let mut segments = Vec::new();
        let mut here = from.0;
        while here != to.0 {
            let next = self.out_edges[here]
                .iter()
                .filter(|&&s| {
                    let seg = self.segment(s);
                    let via = self.edge_cost(s, weight) + dist[seg.to.0];
                    via <= dist[here] + 1e-9 * dist[here].max(1.0)
                })
                .min_by_key(|&&s| self.segment(s).to.0)
                .copied()
                .expect("finite distance implies an optimal outgoing edge");
            segments.push(next);
            here = self.segment(next).to.0;
        }
        Ok(Route { segments, cost: dist[from.0] })
    }

    /// Total weight of a route under the given metric.
    pub fn route_cost(&self, route: &Route, weight: RouteWeight) -> f64 {
        route.segments.iter().map(|&s| self.edge_cost(s, weight)).sum()
    }

    /// Return a copy of the network with randomly placed semaphores. Each
    /// intersection draws with probability `p_intersection`; each undirected
    /// street draws a mid-street light (uniform offset) with probability
    /// `p_midstreet`. Placement is a pure function of the inputs and `seed`.
    pub fn with_semaphores(
        &self,
        p_intersection: f64,
        p_midstreet: f64,
        period: f64,
        seed: u64,
    ) -> Result<RoadNetwork, NetworkError> {
        if !(0.0..=1.0).contains(&p_intersection) || !(0.0..=1.0).contains(&p_midstreet) {
            return Err(NetworkError::InvalidConfig(format!(
                "semaphore probabilities must be in [0,1], got {p_intersection} / {p_midstreet}"
            )));
        }
        if !(period > 0.0) {
            return Err(NetworkError::InvalidConfig(format!(
                "semaphore period must be positive, got {period}"
            )));
        }

        let mut rng = root_rng(seed);
        let mut semaphores = Vec::new();
        for inter in &self.intersections {
            if rng.random::<f64>() < p_intersection {
                semaphores.push(SemaphoreSpec {
                    location: SemaphoreLocation::Intersection(inter.id),
                    period,
                    green_fraction: 0.5,
                    phase_offset: 0.0,
                    // Checkerboard phasing so adjacent crossings alternate.
                    axis_rule: if (inter.col + inter.row) % 2 == 0 {
                        Axis::EastWest
                    } else {
                        Axis::NorthSouth
                    },
                });
            }
        }
        for seg in &self.segments {
            if seg.from < seg.to && rng.random::<f64>() < p_midstreet {
                let offset = (rng.random::<f64>() * seg.length).clamp(0.001, seg.length - 0.001);
                semaphores.push(SemaphoreSpec {
                    location: SemaphoreLocation::MidSegment { segment: seg.id, offset: q6(offset) },
                    period,
                    green_fraction: 0.5,
                    phase_offset: 0.0,
                    axis_rule: seg.axis,
                });
            }
        }

        let mut net = self.clone();
        net.semaphores = semaphores;
        Ok(net)
    }

    /// Plain-text dump: `I <id> <x> <y>`, `S <id> <from> <to> <speed_limit>`,
    /// `L <semaphore fields>`, one record per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for i in &self.intersections {
            writeln!(out, "I {} {:.3} {:.3}", i.id.0, i.x, i.y).unwrap();
        }
        for s in &self.segments {
            writeln!(out, "S {} {} {} {:.3}", s.id.0, s.from.0, s.to.0, s.speed_limit).unwrap();
        }
        for sem in &self.semaphores {
            let axis = match sem.axis_rule {
                Axis::EastWest => "EW",
                Axis::NorthSouth => "NS",
            };
            match sem.location {
                SemaphoreLocation::Intersection(id) => writeln!(
                    out,
                    "L I {} {:.3} {:.3} {:.3} {}",
                    id.0, sem.period, sem.green_fraction, sem.phase_offset, axis
                )
                .unwrap(),
                SemaphoreLocation::MidSegment { segment, offset } => writeln!(
                    out,
                    "L S {} {:.3} {:.3} {:.3} {:.3} {}",
                    segment.0, offset, sem.period, sem.green_fraction, sem.phase_offset, axis
                )
                .unwrap(),
            }
        }
        out
    }
}

/// f64 wrapper with a total order for the Dijkstra heap (costs are finite).
#[derive(PartialEq, PartialOrd)]
struct MinCost(f64);

impl Eq for MinCost {}

impl Ord for MinCost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.partial_cmp(other).expect("route costs are never NaN")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid5() -> RoadNetwork {
        RoadNetwork::build_grid(5, 5, 500.0, 500.0, 40.0).unwrap()
    }

    #[test]
    fn smallest_grid_counts() {
        let net = RoadNetwork::build_grid(1, 1, 500.0, 500.0, 40.0).unwrap();
        assert_eq!(net.intersections.len(), 4);
        assert_eq!(net.segments.len(), 8);
    }

    #[test]
    fn five_by_five_counts_and_pitch() {
        let net = grid5();
        assert_eq!(net.intersections.len(), 36);
        assert_eq!(net.segments.len(), 120);
        for seg in &net.segments {
            assert!((seg.length - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn counts_match_closed_form_up_to_ten() {
        for bx in 1..=10u32 {
            for by in 1..=10u32 {
                let net = RoadNetwork::build_grid(bx, by, 500.0, 400.0, 30.0).unwrap();
                let expect_i = (bx as usize + 1) * (by as usize + 1);
                let expect_s = 2 * (by as usize * (bx as usize + 1) + bx as usize * (by as usize + 1));
                assert_eq!(net.intersections.len(), expect_i, "{bx}x{by}");
                assert_eq!(net.segments.len(), expect_s, "{bx}x{by}");
            }
        }
    }

    #[test]
    fn zero_blocks_rejected() {
        assert!(matches!(
            RoadNetwork::build_grid(0, 5, 500.0, 500.0, 40.0),
            Err(NetworkError::InvalidConfig(_))
        ));
        assert!(matches!(
            RoadNetwork::build_grid(5, 5, -1.0, 500.0, 40.0),
            Err(NetworkError::InvalidConfig(_))
        ));
        assert!(matches!(
            RoadNetwork::build_grid(5, 5, 500.0, 500.0, 0.0),
            Err(NetworkError::InvalidConfig(_))
        ));
    }

    #[test]
    fn streets_are_two_way() {
        let net = grid5();
        for seg in &net.segments {
            let rev = net.segment(net.reverse_of(seg.id));
            assert_eq!(rev.from, seg.to);
            assert_eq!(rev.to, seg.from);
        }
    }

    #[test]
    fn route_two_blocks_right_two_up_is_400m() {
        let net = grid5();
        let from = IntersectionId(0);
        let to = IntersectionId(2 * 6 + 2);
        let route = net.shortest_route(from, to, RouteWeight::Distance).unwrap();
        assert!((route.cost - 400.0).abs() < 1e-9);
        assert!((net.route_cost(&route, RouteWeight::Distance) - 400.0).abs() < 1e-9);
        assert_eq!(route.segments.len(), 4);
    }

    #[test]
    fn route_to_self_is_empty() {
        let net = grid5();
        let route = net
            .shortest_route(IntersectionId(8), IntersectionId(8), RouteWeight::Distance)
            .unwrap();
        assert!(route.segments.is_empty());
        assert_eq!(route.cost, 0.0);
    }

    #[test]
    fn tie_break_prefers_smaller_next_intersection() {
        // From the corner to its diagonal neighbour both L-paths cost the
        // same; the eastbound first hop reaches intersection 1, the
        // northbound one intersection 6.
        let net = grid5();
        let route = net
            .shortest_route(IntersectionId(0), IntersectionId(7), RouteWeight::Distance)
            .unwrap();
        let first_hop = net.segment(route.segments[0]).to;
        assert_eq!(first_hop, IntersectionId(1));
    }

    #[test]
    fn distance_routes_equal_manhattan_distance() {
        let net = grid5();
        for a in 0..36 {
            for b in 0..36 {
                let (ia, ib) = (&net.intersections[a], &net.intersections[b]);
                let manhattan = (ia.x - ib.x).abs() + (ia.y - ib.y).abs();
                let route = net
                    .shortest_route(IntersectionId(a), IntersectionId(b), RouteWeight::Distance)
                    .unwrap();
                assert!((route.cost - manhattan).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn travel_time_route_never_slower_than_distance_route() {
        // Skew some speed limits so the two weights disagree.
        let mut net = grid5();
        for seg in net.segments.iter_mut() {
            seg.speed_limit = if seg.id.0 % 3 == 0 { 10.0 } else { 40.0 };
        }
        for (a, b) in [(0usize, 35usize), (3, 30), (14, 21), (6, 29)] {
            let by_time = net
                .shortest_route(IntersectionId(a), IntersectionId(b), RouteWeight::TravelTime)
                .unwrap();
            let by_dist = net
                .shortest_route(IntersectionId(a), IntersectionId(b), RouteWeight::Distance)
                .unwrap();
            let t_fast = net.route_cost(&by_time, RouteWeight::TravelTime);
            let t_dist = net.route_cost(&by_dist, RouteWeight::TravelTime);
            assert!(t_fast <= t_dist + 1e-9);
        }
    }

    #[test]
    fn unknown_intersection_is_an_error() {
        let net = grid5();
        assert!(matches!(
            net.shortest_route(IntersectionId(0), IntersectionId(99), RouteWeight::Distance),
            Err(NetworkError::UnknownIntersection(99))
        ));
    }

    #[test]
    fn semaphore_placement_zero_and_certain() {
        let net = grid5();
        let none = net.with_semaphores(0.0, 0.0, 60.0, 1).unwrap();
        assert!(none.semaphores.is_empty());
        let all = net.with_semaphores(1.0, 0.0, 60.0, 1).unwrap();
        assert_eq!(all.semaphores.len(), 36);
    }

    #[test]
    fn semaphore_placement_is_deterministic_in_seed() {
        let net = grid5();
        let a = net.with_semaphores(0.5, 0.3, 60.0, 42).unwrap();
        let b = net.with_semaphores(0.5, 0.3, 60.0, 42).unwrap();
        assert_eq!(a.semaphores, b.semaphores);
        let c = net.with_semaphores(0.5, 0.3, 60.0, 43).unwrap();
        assert_ne!(a.semaphores, c.semaphores);
    }

    #[test]
    fn semaphore_probability_out_of_range_rejected() {
        let net = grid5();
        assert!(net.with_semaphores(1.5, 0.0, 60.0, 1).is_err());
        assert!(net.with_semaphores(0.5, 0.0, 0.0, 1).is_err());
    }

    fn test_spec() -> SemaphoreSpec {
        SemaphoreSpec {
            location: SemaphoreLocation::Intersection(IntersectionId(0)),
            period: 60.0,
            green_fraction: 0.5,
            phase_offset: 0.0,
            axis_rule: Axis::EastWest,
        }
    }

    #[test]
    fn semaphore_phase_evaluation() {
        let spec = test_spec();
        assert_eq!(spec.state_at(10.0, Axis::EastWest), SignalState::Green);
        assert_eq!(spec.state_at(40.0, Axis::EastWest), SignalState::Red);
        // 70 mod 60 = 10 < 30, back to green.
        assert_eq!(spec.state_at(70.0, Axis::EastWest), SignalState::Green);
    }

    #[test]
    fn exactly_one_axis_green() {
        let spec = SemaphoreSpec { phase_offset: 13.5, green_fraction: 0.3, ..test_spec() };
        for i in 0..600 {
            let t = i as f64 * 0.37;
            let ew = spec.state_at(t, Axis::EastWest);
            let ns = spec.state_at(t, Axis::NorthSouth);
            assert_ne!(ew, ns, "t={t}");
        }
    }

    #[test]
    fn next_green_arithmetic() {
        let spec = test_spec();
        // North-south traffic arriving at t=18 waits out the remaining 12 s
        // of the east-west phase.
        assert_eq!(spec.state_at(18.0, Axis::NorthSouth), SignalState::Red);
        let g = spec.next_green_at(18.0, Axis::NorthSouth);
        assert!((g - 30.0).abs() < 1e-9);
        // Already green: no wait.
        assert_eq!(spec.next_green_at(31.0, Axis::NorthSouth), 31.0);
        // Favored axis waits for the next cycle.
        let g2 = spec.next_green_at(45.0, Axis::EastWest);
        assert!((g2 - 60.0).abs() < 1e-9);
    }

    #[test]
    fn dump_lists_every_record() {
        let net = grid5().with_semaphores(1.0, 0.0, 60.0, 1).unwrap();
        let text = net.dump();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 36 + 120 + 36);
        assert!(lines[0].starts_with("I 0 0.000 0.000"));
        assert!(lines[36].starts_with("S 0 0 1 40.000"));
    }
}

//! Deterministic discrete-event wireless simulator.
//!
//! One engine instance owns every node's MAC and AODV state, a single
//! seeded RNG, and a (time, sequence)-ordered event queue. The channel
//! evaluates two-ray ground reception per receiver with a
//! first-come-strictly-stronger capture rule; the MAC is a simplified
//! 802.11 CSMA/CA (DIFS + uniform backoff, doubling contention window,
//! unicast ACK with up to 7 retransmissions, broadcasts sent once).
//! Node positions come from the mobility trace, frozen at each frame's
//! transmit start.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeSet, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

mod log;
mod phy;

pub use log::{AppDropReason, EventLog, LogRecord, MacDropReason, RtKind};
pub use phy::{PhyConfig, PhyError};

use crate::aodv::{
    rerr_bytes, Action, AodvNode, DataPacket, DropReason, RerrMessage, RouteEntry, RreqMessage,
    RrepMessage, RREP_BYTES, RREQ_BYTES,
};
use crate::mobility::TraceSet;
use crate::rng::root_rng;

/// Transmitter and receiver closer than this are treated as at this range.
const MIN_DISTANCE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Phy(#[from] PhyError),
}

/// Simplified 802.11 DCF timing and framing constants.
#[derive(Debug, Clone, PartialEq)]
pub struct MacParams {
    /// Backoff slot, seconds.
    pub slot: f64,
    pub sifs: f64,
    pub difs: f64,
    /// Initial contention window (slots drawn from [0, cw]).
    pub cw_min: u32,
    pub cw_max: u32,
    /// Retransmissions of a unicast frame before giving up.
    pub retry_limit: u32,
    /// PLCP preamble + header time prepended to every frame, seconds.
    pub preamble: f64,
    /// MAC framing overhead added to every payload, bytes.
    pub mac_overhead: u32,
    /// ACK frame size, bytes.
    pub ack_bytes: u32,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            slot: 20e-6,
            sifs: 10e-6,
            difs: 50e-6,
            cw_min: 31,
            cw_max: 1023,
            retry_limit: 7,
            preamble: 192e-6,
            mac_overhead: 30,
            ack_bytes: 14,
        }
    }
}

/// One CBR connection: fixed-size packets at a fixed interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    pub src: usize,
    pub dst: usize,
    pub start: f64,
    pub interval: f64,
    pub packet_size: u32,
    pub max_packets: u32,
}

/// Everything one run needs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub traces: TraceSet,
    pub connections: Vec<Connection>,
    pub phy: PhyConfig,
    pub mac: MacParams,
    pub duration: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MacDest {
    Unicast(usize),
    Broadcast,
}

#[derive(Debug, Clone)]
enum FramePayload {
    Data(DataPacket),
    Rreq(RreqMessage),
    Rrep(RrepMessage),
    Rerr(RerrMessage),
    Ack { acked_uid: u64 },
}

#[derive(Debug, Clone)]
struct Frame {
    uid: u64,
    dest: MacDest,
    wire_bytes: u32,
    payload: FramePayload,
}

#[derive(Debug, Clone)]
struct Reception {
    tx_id: usize,
    power: f64,
    collided: bool,
    decodable: bool,
}

#[derive(Debug, Clone)]
struct Transmission {
    frame: Frame,
    tx_node: usize,
}

/// Per-node MAC state.
#[derive(Debug, Default)]
struct Mac {
    queue: VecDeque<Frame>,
    /// Head frame has an active lifecycle (access, airtime, or ACK wait).
    in_service: bool,
    busy_until: f64,
    tx_until: f64,
    access_token: u64,
    retries: u32,
    awaiting_ack: Option<u64>,
    ack_token: u64,
    ongoing: Vec<Reception>,
    /// Unicast frame uids already passed up (duplicates are re-ACKed only).
    seen_uids: BTreeSet<u64>,
}

struct Node {
    mac: Mac,
    aodv: AodvNode,
}

#[derive(Debug, Clone)]
enum EventKind {
    AppEmit { conn: usize, k: u32 },
    MacAccess { node: usize, token: u64 },
    MacTxStart { node: usize, token: u64 },
    TxEnd { tx_id: usize },
    AckTxStart { node: usize, peer: usize, acked_uid: u64 },
    AckTimeout { node: usize, token: u64 },
    RoutingSend { node: usize, frame: Frame },
    DiscoveryTimeout { node: usize, dest: usize, token: u64 },
    Purge { node: usize },
}

struct QueuedEvent {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for QueuedEvent {}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .partial_cmp(&other.time)
            .expect("event times are never NaN")
            .then(self.seq.cmp(&other.seq))
    }
}

/// A configured engine, runnable once. After [`Simulation::run`] the event
/// log and final routing state stay inspectable.
pub struct Simulation {
    traces: TraceSet,
    connections: Vec<Connection>,
    phy: PhyConfig,
    mac_params: MacParams,
    duration: f64,
    now: f64,
    seq: u64,
    queue: BinaryHeap<Reverse<QueuedEvent>>,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    txs: Vec<Transmission>,
    log: EventLog,
    next_uid: u64,
    next_pkt: u64,
    ran: bool,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Simulation, SimError> {
        scenario.phy.validate()?;
        let n = scenario.traces.n_vehicles();
        if n == 0 {
            return Err(SimError::InvalidScenario("no vehicles in the trace".into()));
        }
        if scenario.duration < 0.0 {
            return Err(SimError::InvalidScenario("negative duration".into()));
        }
        if scenario.duration > scenario.traces.duration + 1e-6 {
            return Err(SimError::InvalidScenario(format!(
                "simulation duration {} exceeds the trace horizon {}",
                scenario.duration, scenario.traces.duration
            )));
        }
        for c in &scenario.connections {
            if c.src >= n || c.dst >= n || c.src == c.dst {
                return Err(SimError::InvalidScenario(format!(
                    "connection {} -> {} is not valid for {} nodes",
                    c.src, c.dst, n
                )));
            }
        }
        let nodes = (0..n)
            .map(|id| Node { mac: Mac::default(), aodv: AodvNode::new(id) })
            .collect();
        Ok(Simulation {
            rng: root_rng(scenario.seed),
            traces: scenario.traces,
            connections: scenario.connections,
            phy: scenario.phy,
            mac_params: scenario.mac,
            duration: scenario.duration,
            now: 0.0,
            seq: 0,
            queue: BinaryHeap::new(),
            nodes,
            txs: Vec::new(),
            log: EventLog::default(),
            next_uid: 0,
            next_pkt: 0,
            ran: false,
        })
    }

    /// Process every event up to the horizon and return the log.
    pub fn run(&mut self) -> &EventLog {
        assert!(!self.ran, "a Simulation runs once");
        self.ran = true;

        let starts: Vec<(usize, f64)> = self
            .connections
            .iter()
            .enumerate()
            .filter(|(_, c)| c.start <= self.duration && c.max_packets > 0)
            .map(|(i, c)| (i, c.start))
            .collect();
        for (i, start) in starts {
            self.schedule(start, EventKind::AppEmit { conn: i, k: 0 });
        }
        for node in 0..self.nodes.len() {
            self.schedule(1.0_f64.min(self.duration), EventKind::Purge { node });
        }

        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.time > self.duration {
                break;
            }
            assert!(
                ev.time >= self.now - 1e-9,
                "causality violation: event at {} while clock is at {}",
                ev.time,
                self.now
            );
            self.now = ev.time.max(self.now);
            self.dispatch(ev.kind);
        }
        &self.log
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    /// Final routing-table entry of a node, for oracle checks.
    pub fn route_entry(&self, node: usize, dest: usize) -> Option<&RouteEntry> {
        self.nodes[node].aodv.table.get(dest)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        assert!(
            time >= self.now - 1e-9,
            "causality violation: scheduling at {} while clock is at {}",
            time,
            self.now
        );
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(QueuedEvent { time: time.max(self.now), seq, kind }));
    }

    fn position(&self, node: usize) -> (f64, f64) {
        let t = self.now.min(self.traces.duration);
        let s = self
            .traces
            .position_at(node, t)
            .expect("validated trace horizon");
        (s.x, s.y)
    }

    fn dispatch(&mut self, kind: EventKind) {
        match kind {
            EventKind::AppEmit { conn, k } => self.on_app_emit(conn, k),
            EventKind::MacAccess { node, token } => self.on_mac_access(node, token),
            EventKind::MacTxStart { node, token } => self.on_mac_tx_start(node, token),
            EventKind::TxEnd { tx_id } => self.on_tx_end(tx_id),
            EventKind::AckTxStart { node, peer, acked_uid } => {
                self.on_ack_tx_start(node, peer, acked_uid)
            }
            EventKind::AckTimeout { node, token } => self.on_ack_timeout(node, token),
            EventKind::RoutingSend { node, frame } => self.enqueue_frame(node, frame),
            EventKind::DiscoveryTimeout { node, dest, token } => {
                let mut out = Vec::new();
                self.nodes[node].aodv.discovery_timeout(self.now, dest, token, &mut out);
                self.apply_actions(node, out);
            }
            EventKind::Purge { node } => {
                self.nodes[node].aodv.purge(self.now);
                let next = self.now + 1.0;
                if next <= self.duration {
                    self.schedule(next, EventKind::Purge { node });
                }
            }
        }
    }

    fn on_app_emit(&mut self, conn: usize, k: u32) {
        let c = self.connections[conn].clone();
        let pkt_id = self.next_pkt;
        self.next_pkt += 1;
        self.log.push(LogRecord::AppSend {
            t: self.now,
            node: c.src,
            pkt: pkt_id,
            dst: c.dst,
            bytes: c.packet_size,
        });
        let packet = DataPacket {
            pkt_id,
            src: c.src,
            dst: c.dst,
            bytes: c.packet_size,
            origin_time: self.now,
            hops: 0,
        };
        let mut out = Vec::new();
        self.nodes[c.src].aodv.send_data(self.now, packet, &mut out);
        self.apply_actions(c.src, out);

        if k + 1 < c.max_packets {
            let next = self.now + c.interval;
            if next <= self.duration {
                self.schedule(next, EventKind::AppEmit { conn, k: k + 1 });
            }
        }
    }

    fn apply_actions(&mut self, node: usize, actions: Vec<Action>) {
        let overhead = self.mac_params.mac_overhead;
        for a in actions {
            match a {
                Action::SendRreq { msg, jitter } => {
                    let frame = self.make_frame(
                        MacDest::Broadcast,
                        RREQ_BYTES + overhead,
                        FramePayload::Rreq(msg),
                    );
                    if jitter > 0.0 {
                        self.schedule(self.now + jitter, EventKind::RoutingSend { node, frame });
                    } else {
                        self.enqueue_frame(node, frame);
                    }
                }
                Action::SendRerr { msg } => {
                    let bytes = rerr_bytes(msg.unreachable.len()) + overhead;
                    let frame =
                        self.make_frame(MacDest::Broadcast, bytes, FramePayload::Rerr(msg));
                    self.enqueue_frame(node, frame);
                }
                Action::SendRrep { next_hop, msg } => {
                    let frame = self.make_frame(
                        MacDest::Unicast(next_hop),
                        RREP_BYTES + overhead,
                        FramePayload::Rrep(msg),
                    );
                    self.enqueue_frame(node, frame);
                }
                Action::ForwardData { next_hop, packet } => {
                    let bytes = packet.bytes + overhead;
                    let frame = self.make_frame(
                        MacDest::Unicast(next_hop),
                        bytes,
                        FramePayload::Data(packet),
                    );
                    self.enqueue_frame(node, frame);
                }
                Action::ArmDiscoveryTimer { destination, token, delay } => {
                    self.schedule(
                        self.now + delay,
                        EventKind::DiscoveryTimeout { node, dest: destination, token },
                    );
                }
                Action::DropData { packet, reason } => {
                    let reason = match reason {
                        DropReason::BufferOverflow => AppDropReason::BufferOverflow,
                        DropReason::NoRoute => AppDropReason::NoRoute,
                        DropReason::HopLimit => AppDropReason::HopLimit,
                    };
                    self.log.push(LogRecord::AppDrop {
                        t: self.now,
                        node,
                        pkt: packet.pkt_id,
                        dst: packet.dst,
                        reason,
                    });
                }
                Action::RrepUnforwardable { origin } => {
                    self.log.push(LogRecord::MacDrop {
                        t: self.now,
                        node,
                        reason: MacDropReason::NoReverseRoute,
                        peer: origin,
                    });
                }
            }
        }
    }

    fn make_frame(&mut self, dest: MacDest, wire_bytes: u32, payload: FramePayload) -> Frame {
        let uid = self.next_uid;
        self.next_uid += 1;
        Frame { uid, dest, wire_bytes, payload }
    }

    fn enqueue_frame(&mut self, node: usize, frame: Frame) {
        let mac = &mut self.nodes[node].mac;
        mac.queue.push_back(frame);
        if !mac.in_service {
            mac.in_service = true;
            mac.retries = 0;
            self.start_access(node);
        }
    }

    /// Arm (or re-arm) the contention chain for the head frame.
    fn start_access(&mut self, node: usize) {
        let mac = &mut self.nodes[node].mac;
        mac.access_token += 1;
        let token = mac.access_token;
        let at = self.now.max(mac.busy_until);
        self.schedule(at, EventKind::MacAccess { node, token });
    }

    fn contention_window(&self, retries: u32) -> u32 {
        let mac = &self.mac_params;
        (((mac.cw_min + 1) << retries.min(10)) - 1).min(mac.cw_max)
    }

    fn on_mac_access(&mut self, node: usize, token: u64) {
        let mac = &self.nodes[node].mac;
        if token != mac.access_token || !mac.in_service {
            return;
        }
        if self.now < mac.busy_until {
            let at = mac.busy_until;
            self.schedule(at, EventKind::MacAccess { node, token });
            return;
        }
        let cw = self.contention_window(self.nodes[node].mac.retries);
        let slots = self.rng.random_range(0..=cw as u64) as f64;
        let at = self.now + self.mac_params.difs + slots * self.mac_params.slot;
        self.schedule(at, EventKind::MacTxStart { node, token });
    }

    fn on_mac_tx_start(&mut self, node: usize, token: u64) {
        let mac = &self.nodes[node].mac;
        if token != mac.access_token || !mac.in_service {
            return;
        }
        if self.now < mac.busy_until {
            // The medium turned busy under our backoff; contend again.
            self.start_access(node);
            return;
        }
        let frame = self.nodes[node].mac.queue.front().expect("in_service head").clone();
        self.begin_transmission(node, frame);
    }

    /// Put a frame on the air: mark the medium busy at every node in
    /// carrier-sense range, apply the capture/collision rules, log routing
    /// transmissions, and schedule the end of the airtime.
    fn begin_transmission(&mut self, node: usize, frame: Frame) {
        let airtime = self.phy.airtime(frame.wire_bytes, self.mac_params.preamble);
        let end = self.now + airtime;

        if let Some(kind) = rt_kind(&frame.payload) {
            self.log.push(LogRecord::RtSend {
                t: self.now,
                node,
                kind,
                bytes: frame.wire_bytes,
            });
        }

        let tx_id = self.txs.len();
        self.txs.push(Transmission { frame, tx_node: node });

        {
            let mac = &mut self.nodes[node].mac;
            mac.tx_until = end;
            mac.busy_until = mac.busy_until.max(end);
            // Half-duplex: transmitting wrecks anything being received.
            for r in &mut mac.ongoing {
                r.collided = true;
            }
        }

        let tx_pos = self.position(node);
        for j in 0..self.nodes.len() {
            if j == node {
                continue;
            }
            let p_pos = self.position(j);
            let d = ((p_pos.0 - tx_pos.0).powi(2) + (p_pos.1 - tx_pos.1).powi(2))
                .sqrt()
                .max(MIN_DISTANCE);
            let power = self.phy.rx_power(d).expect("distance clamped positive");
            if power < self.phy.cs_threshold {
                continue;
            }
            self.hear_busy(j, end);
            let mac = &mut self.nodes[j].mac;
            // Receiving while transmitting is impossible half-duplex.
            let mut collided = self.now < mac.tx_until;
            for r in &mut mac.ongoing {
                if r.power > power {
                    collided = true; // the earlier, stronger frame captures
                } else {
                    r.collided = true;
                    collided = true;
                }
            }
            let decodable = power >= self.phy.rx_threshold;
            mac.ongoing.push(Reception { tx_id, power, collided, decodable });
        }

        self.schedule(end, EventKind::TxEnd { tx_id });
    }

    /// Carrier sensed at `node` until `until`: defer any pending access.
    fn hear_busy(&mut self, node: usize, until: f64) {
        let mac = &mut self.nodes[node].mac;
        mac.busy_until = mac.busy_until.max(until);
        if mac.in_service && mac.awaiting_ack.is_none() && self.now >= mac.tx_until {
            let busy_until = mac.busy_until;
            mac.access_token += 1;
            let token = mac.access_token;
            self.schedule(busy_until, EventKind::MacAccess { node, token });
        }
    }

    fn on_tx_end(&mut self, tx_id: usize) {
        let tx = self.txs[tx_id].clone();

        // Resolve receptions.
        for j in 0..self.nodes.len() {
            if j == tx.tx_node {
                continue;
            }
            let mac = &mut self.nodes[j].mac;
            let Some(idx) = mac.ongoing.iter().position(|r| r.tx_id == tx_id) else {
                continue;
            };
            let rec = mac.ongoing.swap_remove(idx);
            if rec.decodable && !rec.collided {
                self.deliver(j, &tx.frame, tx.tx_node);
            }
        }

        // Transmitter-side completion.
        match (&tx.frame.payload, tx.frame.dest) {
            (FramePayload::Ack { .. }, _) => {} // fire and forget
            (_, MacDest::Broadcast) => self.complete_head(tx.tx_node),
            (_, MacDest::Unicast(_)) => {
                let mac = &mut self.nodes[tx.tx_node].mac;
                mac.awaiting_ack = Some(tx.frame.uid);
                mac.ack_token += 1;
                let token = mac.ack_token;
                let ack_air = self.phy.airtime(self.mac_params.ack_bytes, self.mac_params.preamble);
                let timeout = self.now
                    + self.mac_params.sifs
                    + ack_air
                    + 2.0 * self.mac_params.slot;
                self.schedule(timeout, EventKind::AckTimeout { node: tx.tx_node, token });
            }
        }
    }

    fn deliver(&mut self, node: usize, frame: &Frame, from: usize) {
        match &frame.payload {
            FramePayload::Ack { acked_uid } => {
                if frame.dest == MacDest::Unicast(node) {
                    let mac = &mut self.nodes[node].mac;
                    if mac.awaiting_ack == Some(*acked_uid) {
                        mac.awaiting_ack = None;
                        mac.ack_token += 1; // cancels the pending timeout
                        mac.retries = 0;
                        self.complete_head(node);
                    }
                }
            }
            payload => {
                match frame.dest {
                    MacDest::Broadcast => self.pass_up(node, payload.clone(), from),
                    MacDest::Unicast(d) if d == node => {
                        self.schedule(
                            self.now + self.mac_params.sifs,
                            EventKind::AckTxStart { node, peer: from, acked_uid: frame.uid },
                        );
                        let fresh = self.nodes[node].mac.seen_uids.insert(frame.uid);
                        if fresh {
                            self.pass_up(node, payload.clone(), from);
                        }
                    }
                    MacDest::Unicast(_) => {} // not for us, not promiscuous
                }
            }
        }
    }

    fn pass_up(&mut self, node: usize, payload: FramePayload, from: usize) {
        let mut out = Vec::new();
        match payload {
            FramePayload::Data(p) => {
                if p.dst == node {
                    self.log.push(LogRecord::AppRecv {
                        t: self.now,
                        node,
                        pkt: p.pkt_id,
                        src: p.src,
                        bytes: p.bytes,
                        hops: p.hops,
                    });
                } else {
                    self.nodes[node].aodv.send_data(self.now, p, &mut out);
                }
            }
            FramePayload::Rreq(m) => {
                self.nodes[node].aodv.process_rreq(self.now, &m, from, &mut self.rng, &mut out)
            }
            FramePayload::Rrep(m) => {
                self.nodes[node].aodv.process_rrep(self.now, &m, from, &mut out)
            }
            FramePayload::Rerr(m) => {
                self.nodes[node].aodv.process_rerr(self.now, &m, from, &mut out)
            }
            FramePayload::Ack { .. } => unreachable!("handled in deliver"),
        }
        self.apply_actions(node, out);
    }

    fn on_ack_tx_start(&mut self, node: usize, peer: usize, acked_uid: u64) {
        if self.now < self.nodes[node].mac.tx_until {
            return; // busy transmitting: the ACK is simply lost
        }
        let frame = self.make_frame(
            MacDest::Unicast(peer),
            self.mac_params.ack_bytes,
            FramePayload::Ack { acked_uid },
        );
        self.begin_transmission(node, frame);
    }

    fn on_ack_timeout(&mut self, node: usize, token: u64) {
        let mac = &mut self.nodes[node].mac;
        if token != mac.ack_token || mac.awaiting_ack.is_none() {
            return;
        }
        mac.awaiting_ack = None;
        mac.retries += 1;
        if mac.retries > self.mac_params.retry_limit {
            let frame = mac.queue.front().expect("head was awaiting ack").clone();
            let MacDest::Unicast(next_hop) = frame.dest else { unreachable!() };
            self.log.push(LogRecord::MacDrop {
                t: self.now,
                node,
                reason: MacDropReason::RetryLimit,
                peer: next_hop,
            });
            let mut out = Vec::new();
            self.nodes[node].aodv.handle_link_break(self.now, next_hop, &mut out);
            self.apply_actions(node, out);
            self.complete_head(node);
        } else {
            self.start_access(node);
        }
    }

    /// Head frame is done (delivered, dropped, or broadcast sent): service
    /// the next one if any.
    fn complete_head(&mut self, node: usize) {
        let mac = &mut self.nodes[node].mac;
        mac.queue.pop_front();
        mac.retries = 0;
        mac.awaiting_ack = None;
        if mac.queue.is_empty() {
            mac.in_service = false;
        } else {
            self.start_access(node);
        }
    }
}

fn rt_kind(p: &FramePayload) -> Option<RtKind> {
    match p {
        FramePayload::Rreq(_) => Some(RtKind::Rreq),
        FramePayload::Rrep(_) => Some(RtKind::Rrep),
        FramePayload::Rerr(_) => Some(RtKind::Rerr),
        _ => None,
    }
}

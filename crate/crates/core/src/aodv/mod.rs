//! Ad hoc On-Demand Distance Vector routing.
//!
//! Each node runs one [`AodvNode`]: route discovery by expanding-ring RREQ
//! floods, RREP unicasts along reverse routes, RERR invalidation driven by
//! MAC link-break reports, per-destination packet buffering, and periodic
//! table hygiene. Handlers are pure state transitions that return actions
//! (frames to send, timers to arm, packets to drop) for the event engine to
//! carry out, which keeps the protocol logic testable on its own.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub mod table;

pub use table::{
    attempt_timeout, seqno_newer, RouteEntry, RoutingTable, ACTIVE_ROUTE_TIMEOUT, DELETE_PERIOD,
    MY_ROUTE_TIMEOUT, NET_DIAMETER, NODE_TRAVERSAL_TIME, PATH_DISCOVERY_TIME, RING_TTLS,
};

/// Control packet payload sizes on the wire, before MAC framing.
pub const RREQ_BYTES: u32 = 24;
pub const RREP_BYTES: u32 = 20;

pub fn rerr_bytes(n_destinations: usize) -> u32 {
    8 + 8 * n_destinations as u32
}

/// Spread applied to forwarded RREQ rebroadcasts so neighboring relays do
/// not all key up in the same slot.
pub const REBROADCAST_JITTER: f64 = 0.010;

/// Data packets give up after this many MAC hops (loop safety valve).
pub const MAX_DATA_HOPS: u32 = NET_DIAMETER;

/// Buffered packets per destination while discovery runs.
pub const BUFFER_CAPACITY: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct RreqMessage {
    pub rreq_id: u32,
    pub origin: usize,
    pub origin_seqno: u32,
    pub destination: usize,
    pub dest_seqno: Option<u32>,
    pub hop_count: u32,
    pub ttl: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrepMessage {
    /// Node the reply travels back to (the discovery originator).
    pub origin: usize,
    /// Destination the route leads to.
    pub destination: usize,
    pub dest_seqno: u32,
    pub hop_count: u32,
    /// Remaining lifetime granted to the route, seconds.
    pub lifetime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerrMessage {
    /// Unreachable destinations with their bumped sequence numbers.
    pub unreachable: Vec<(usize, u32)>,
}

/// An application data packet as routed between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub pkt_id: u64,
    pub src: usize,
    pub dst: usize,
    /// Application payload size, bytes.
    pub bytes: u32,
    /// When the application emitted it.
    pub origin_time: f64,
    /// MAC hops taken so far (incremented per forward).
    pub hops: u32,
}

/// What a handler wants the engine to do.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Broadcast a routing message after `jitter` seconds.
    SendRreq { msg: RreqMessage, jitter: f64 },
    SendRerr { msg: RerrMessage },
    /// Unicast a reply one hop toward the discovery originator.
    SendRrep { next_hop: usize, msg: RrepMessage },
    /// Unicast a data packet to its next hop.
    ForwardData { next_hop: usize, packet: DataPacket },
    /// Arm a discovery-retry timer.
    ArmDiscoveryTimer { destination: usize, token: u64, delay: f64 },
    /// Give up on a data packet.
    DropData { packet: DataPacket, reason: DropReason },
    /// An RREP could not be forwarded (reverse route missing).
    RrepUnforwardable { origin: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    BufferOverflow,
    NoRoute,
    HopLimit,
}

/// Outcome of [`AodvNode::send_data`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Forwarded,
    QueuedPendingDiscovery,
}

#[derive(Debug, Clone)]
struct Discovery {
    attempt: usize,
    token: u64,
}

/// Per-node AODV state.
#[derive(Debug, Clone)]
pub struct AodvNode {
    pub id: usize,
    seqno: u32,
    rreq_id: u32,
    pub table: RoutingTable,
    /// (origin, rreq_id) -> expiry of the path-discovery window.
    seen_rreqs: BTreeMap<(usize, u32), f64>,
    pending: BTreeMap<usize, Discovery>,
    buffers: BTreeMap<usize, VecDeque<DataPacket>>,
    next_token: u64,
}

impl AodvNode {
    pub fn new(id: usize) -> AodvNode {
        AodvNode {
            id,
            seqno: 0,
            rreq_id: 0,
            table: RoutingTable::default(),
            seen_rreqs: BTreeMap::new(),
            pending: BTreeMap::new(),
            buffers: BTreeMap::new(),
            next_token: 0,
        }
    }

    pub fn seqno(&self) -> u32 {
        self.seqno
    }

    /// Route a data packet: forward through a valid route, otherwise buffer
    /// it and start (or join) a discovery.
    pub fn send_data(
        &mut self,
        now: f64,
        packet: DataPacket,
        out: &mut Vec<Action>,
    ) -> SendOutcome {
        if packet.hops > MAX_DATA_HOPS {
            out.push(Action::DropData { packet, reason: DropReason::HopLimit });
            return SendOutcome::Forwarded;
        }
        let dst = packet.dst;
        if let Some(route) = self.table.valid_route(dst, now) {
            let next_hop = route.next_hop;
            self.table.refresh(dst, now + ACTIVE_ROUTE_TIMEOUT);
            self.table.refresh(next_hop, now + ACTIVE_ROUTE_TIMEOUT);
            let mut p = packet;
            p.hops += 1;
            out.push(Action::ForwardData { next_hop, packet: p });
            return SendOutcome::Forwarded;
        }

        let buffer = self.buffers.entry(dst).or_default();
        if buffer.len() >= BUFFER_CAPACITY {
            let oldest = buffer.pop_front().expect("capacity > 0");
            out.push(Action::DropData { packet: oldest, reason: DropReason::BufferOverflow });
        }
        buffer.push_back(packet);

        if !self.pending.contains_key(&dst) {
            self.start_discovery(now, dst, 0, out);
        }
        SendOutcome::QueuedPendingDiscovery
    }

    fn start_discovery(&mut self, now: f64, dst: usize, attempt: usize, out: &mut Vec<Action>) {
        let token = self.next_token;
        self.next_token += 1;
        self.pending.insert(dst, Discovery { attempt, token });

        self.seqno = self.seqno.wrapping_add(1);
        self.rreq_id = self.rreq_id.wrapping_add(1);
        let ttl = RING_TTLS[attempt];
        // Our own flood counts as seen so echoes are ignored.
        self.seen_rreqs
            .insert((self.id, self.rreq_id), now + PATH_DISCOVERY_TIME);
        let msg = RreqMessage {
            rreq_id: self.rreq_id,
            origin: self.id,
            origin_seqno: self.seqno,
            destination: dst,
            dest_seqno: self.table.get(dst).and_then(|e| e.seqno),
            hop_count: 0,
            ttl,
        };
        out.push(Action::SendRreq { msg, jitter: 0.0 });
        out.push(Action::ArmDiscoveryTimer {
            destination: dst,
            token,
            delay: attempt_timeout(ttl),
        });
    }

    /// Discovery-retry timer fired. Escalates the ring search or flushes
    /// the buffer as undeliverable.
    pub fn discovery_timeout(
        &mut self,
        now: f64,
        dst: usize,
        token: u64,
        out: &mut Vec<Action>,
    ) {
        let Some(d) = self.pending.get(&dst) else { return };
        if d.token != token {
            return; // canceled or superseded
        }
        if self.table.valid_route(dst, now).is_some() {
            self.pending.remove(&dst);
            self.flush_buffer(now, dst, out);
            return;
        }
        let attempt = d.attempt + 1;
        if attempt < RING_TTLS.len() {
            self.start_discovery(now, dst, attempt, out);
        } else {
            self.pending.remove(&dst);
            if let Some(buf) = self.buffers.remove(&dst) {
                for packet in buf {
                    out.push(Action::DropData { packet, reason: DropReason::NoRoute });
                }
            }
        }
    }

    fn flush_buffer(&mut self, now: f64, dst: usize, out: &mut Vec<Action>) {
        if let Some(buf) = self.buffers.remove(&dst) {
            for packet in buf {
                self.send_data(now, packet, out);
            }
        }
    }

    /// Handle a received RREQ broadcast.
    pub fn process_rreq(
        &mut self,
        now: f64,
        msg: &RreqMessage,
        previous_hop: usize,
        rng: &mut ChaCha8Rng,
        out: &mut Vec<Action>,
    ) {
        // Path-discovery dedup window.
        if let Some(expiry) = self.seen_rreqs.get(&(msg.origin, msg.rreq_id)) {
            if *expiry >= now {
                return;
            }
        }
        self.seen_rreqs
            .insert((msg.origin, msg.rreq_id), now + PATH_DISCOVERY_TIME);
        if msg.origin == self.id {
            return;
        }

        self.table.ensure_neighbor(previous_hop, now);
        // Reverse route toward the flood's origin.
        self.table.update(
            msg.origin,
            previous_hop,
            msg.hop_count + 1,
            Some(msg.origin_seqno),
            now + 2.0 * PATH_DISCOVERY_TIME,
        );
        self.maybe_flush_after_route_change(now, msg.origin, out);

        if msg.destination == self.id {
            // The spec'd freshness bump: our seqno rises to the requested one.
            if let Some(requested) = msg.dest_seqno {
                if seqno_newer(requested, self.seqno) {
                    self.seqno = requested;
                }
            }
            out.push(Action::SendRrep {
                next_hop: previous_hop,
                msg: RrepMessage {
                    origin: msg.origin,
                    destination: self.id,
                    dest_seqno: self.seqno,
                    hop_count: 0,
                    lifetime: MY_ROUTE_TIMEOUT,
                },
            });
            return;
        }

        // Intermediate reply from a cache at least as fresh as requested.
        if let Some(route) = self.table.valid_route(msg.destination, now) {
            if let Some(cached_seqno) = route.seqno {
                let fresh_enough = msg
                    .dest_seqno
                    .map_or(true, |want| !seqno_newer(want, cached_seqno));
                if fresh_enough {
                    let lifetime = route.lifetime - now;
                    let hops = route.hop_count;
                    let fwd_next = route.next_hop;
                    out.push(Action::SendRrep {
                        next_hop: previous_hop,
                        msg: RrepMessage {
                            origin: msg.origin,
                            destination: msg.destination,
                            dest_seqno: cached_seqno,
                            hop_count: hops,
                            lifetime,
                        },
                    });
                    // Precursor bookkeeping for future RERRs on either side.
                    if let Some(e) = self.table.get_mut(msg.destination) {
                        e.precursors.insert(previous_hop);
                    }
                    if let Some(e) = self.table.get_mut(msg.origin) {
                        e.precursors.insert(fwd_next);
                    }
                    return;
                }
            }
        }

        if msg.ttl > 1 {
            let fwd = RreqMessage {
                hop_count: msg.hop_count + 1,
                ttl: msg.ttl - 1,
                ..msg.clone()
            };
            let jitter = rng.random::<f64>() * REBROADCAST_JITTER;
            out.push(Action::SendRreq { msg: fwd, jitter });
        }
    }

    /// Handle a received RREP unicast.
    pub fn process_rrep(
        &mut self,
        now: f64,
        msg: &RrepMessage,
        previous_hop: usize,
        out: &mut Vec<Action>,
    ) {
        self.table.ensure_neighbor(previous_hop, now);
        self.table.update(
            msg.destination,
            previous_hop,
            msg.hop_count + 1,
            Some(msg.dest_seqno),
            now + msg.lifetime,
        );

        if msg.origin == self.id {
            if self.table.valid_route(msg.destination, now).is_some() {
                self.pending.remove(&msg.destination);
                self.flush_buffer(now, msg.destination, out);
            }
            return;
        }

        // Forward along the reverse route toward the originator.
        let Some(rev) = self.table.valid_route(msg.origin, now) else {
            out.push(Action::RrepUnforwardable { origin: msg.origin });
            return;
        };
        let rev_next = rev.next_hop;
        self.table.refresh(msg.origin, now + ACTIVE_ROUTE_TIMEOUT);
        if let Some(e) = self.table.get_mut(msg.destination) {
            e.precursors.insert(rev_next);
        }
        out.push(Action::SendRrep {
            next_hop: rev_next,
            msg: RrepMessage { hop_count: msg.hop_count + 1, ..msg.clone() },
        });
    }

    /// Handle a received RERR broadcast: adopt invalidations for routes that
    /// run through the sender and cascade along precursors.
    pub fn process_rerr(
        &mut self,
        now: f64,
        msg: &RerrMessage,
        previous_hop: usize,
        out: &mut Vec<Action>,
    ) {
        let mut cascade = Vec::new();
        let mut any_precursors = false;
        for (dest, seqno) in &msg.unreachable {
            let Some(e) = self.table.get(*dest) else { continue };
            if !e.valid || e.next_hop != previous_hop {
                continue;
            }
            let had_precursors = !e.precursors.is_empty();
            self.table.invalidate(*dest, now);
            if let Some(e) = self.table.get_mut(*dest) {
                e.seqno = Some(*seqno); // adopt the advertised freshness
            }
            cascade.push((*dest, *seqno));
            any_precursors |= had_precursors;
        }
        if !cascade.is_empty() && any_precursors {
            out.push(Action::SendRerr { msg: RerrMessage { unreachable: cascade } });
        }
    }

    /// MAC reported a failed unicast to `broken`: invalidate everything
    /// routed through it and (when anyone upstream cares) broadcast a RERR.
    pub fn handle_link_break(&mut self, now: f64, broken: usize, out: &mut Vec<Action>) {
        let mut unreachable = Vec::new();
        let mut any_precursors = false;
        for dest in self.table.routes_via(broken) {
            let had_precursors = self
                .table
                .get(dest)
                .map(|e| !e.precursors.is_empty())
                .unwrap_or(false);
            if let Some(seqno) = self.table.invalidate(dest, now) {
                unreachable.push((dest, seqno));
                any_precursors |= had_precursors;
            }
        }
        if !unreachable.is_empty() && any_precursors {
            out.push(Action::SendRerr { msg: RerrMessage { unreachable } });
        }
    }

    /// One-second housekeeping tick.
    pub fn purge(&mut self, now: f64) {
        self.table.purge(now);
        self.seen_rreqs.retain(|_, expiry| *expiry >= now);
    }

    /// A fresh route may satisfy packets still waiting on a discovery that
    /// has not timed out yet.
    fn maybe_flush_after_route_change(&mut self, now: f64, dest: usize, out: &mut Vec<Action>) {
        if self.pending.contains_key(&dest)
            && self.table.valid_route(dest, now).is_some()
        {
            self.pending.remove(&dest);
            self.flush_buffer(now, dest, out);
        }
    }

    #[cfg(test)]
    fn buffered(&self, dst: usize) -> usize {
        self.buffers.get(&dst).map(|b| b.len()).unwrap_or(0)
    }
}

//! AODV routing table: destination-keyed entries ordered by sequence-number
//! freshness, with lazy lifetime expiry and delayed garbage collection.

use std::collections::{BTreeMap, BTreeSet};

/// Seconds an actively used route stays valid.
pub const ACTIVE_ROUTE_TIMEOUT: f64 = 3.0;
/// Lifetime a destination advertises in its own RREP.
pub const MY_ROUTE_TIMEOUT: f64 = 2.0 * ACTIVE_ROUTE_TIMEOUT;
/// Per-hop traversal estimate used for discovery timeouts.
pub const NODE_TRAVERSAL_TIME: f64 = 0.040;
/// Network-wide TTL for the final discovery attempts.
pub const NET_DIAMETER: u32 = 35;
/// Window during which a (origin, rreq_id) pair is considered seen.
pub const PATH_DISCOVERY_TIME: f64 = 3.0;
/// Invalid entries are deleted after this long.
pub const DELETE_PERIOD: f64 = 2.0 * ACTIVE_ROUTE_TIMEOUT;
/// Expanding-ring TTL schedule: four rings, then two network-wide floods.
pub const RING_TTLS: [u32; 6] = [1, 3, 5, 7, NET_DIAMETER, NET_DIAMETER];

/// Timeout for one discovery attempt at the given TTL.
pub fn attempt_timeout(ttl: u32) -> f64 {
    2.0 * NODE_TRAVERSAL_TIME * (ttl as f64 + 2.0)
}

/// Signed 32-bit freshness comparison, robust across wraparound.
pub fn seqno_newer(a: u32, b: u32) -> bool {
    (a.wrapping_sub(b) as i32) > 0
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub next_hop: usize,
    pub hop_count: u32,
    /// Known destination sequence number; `None` until one is learned.
    pub seqno: Option<u32>,
    /// Absolute expiry time.
    pub lifetime: f64,
    pub valid: bool,
    /// When the entry was invalidated (drives deletion).
    pub invalidated_at: f64,
    /// Upstream neighbors routing through us toward this destination.
    pub precursors: BTreeSet<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct RoutingTable {
    entries: BTreeMap<usize, RouteEntry>,
}

impl RoutingTable {
    /// Entry for a destination regardless of state.
    pub fn get(&self, dest: usize) -> Option<&RouteEntry> {
        self.entries.get(&dest)
    }

    pub fn get_mut(&mut self, dest: usize) -> Option<&mut RouteEntry> {
        self.entries.get_mut(&dest)
    }

    /// Valid, unexpired entry.
    pub fn valid_route(&self, dest: usize, now: f64) -> Option<&RouteEntry> {
        self.entries.get(&dest).filter(|e| e.valid && e.lifetime >= now)
    }

    /// Install or refresh a route if the update is at least as fresh as the
    /// stored one (newer seqno, or equal seqno with fewer hops, or the
    /// stored entry is invalid/unknown). Returns true when applied.
    pub fn update(
        &mut self,
        dest: usize,
        next_hop: usize,
        hop_count: u32,
        seqno: Option<u32>,
        lifetime: f64,
    ) -> bool {
        let apply = match self.entries.get(&dest) {
            None => true,
            Some(e) => match (e.seqno, seqno) {
                (Some(old), Some(new)) => {
                    seqno_newer(new, old)
                        || (new == old && (!e.valid || hop_count < e.hop_count))
                }
                // Unknown incoming seqno only overrides unusable entries.
                (Some(_), None) => !e.valid,
                (None, _) => true,
            },
        };
        if !apply {
            return false;
        }
        let precursors = self
            .entries
            .get(&dest)
            .map(|e| e.precursors.clone())
            .unwrap_or_default();
        let stored_seqno = match (self.entries.get(&dest).and_then(|e| e.seqno), seqno) {
            (Some(old), None) => Some(old),
            (_, new) => new,
        };
        self.entries.insert(
            dest,
            RouteEntry {
                next_hop,
                hop_count,
                seqno: stored_seqno,
                lifetime,
                valid: true,
                invalidated_at: 0.0,
                precursors,
            },
        );
        true
    }

    /// Make sure a neighbor reached in one hop has a usable entry; existing
    /// fresher state is only lifetime-refreshed.
    pub fn ensure_neighbor(&mut self, neighbor: usize, now: f64) {
        match self.entries.get_mut(&neighbor) {
            Some(e) if e.valid && e.lifetime >= now => {
                e.lifetime = e.lifetime.max(now + ACTIVE_ROUTE_TIMEOUT);
            }
            _ => {
                self.update(neighbor, neighbor, 1, None, now + ACTIVE_ROUTE_TIMEOUT);
            }
        }
    }

    /// Extend a route's lifetime (route use keeps it alive).
    pub fn refresh(&mut self, dest: usize, until: f64) {
        if let Some(e) = self.entries.get_mut(&dest) {
            if e.valid {
                e.lifetime = e.lifetime.max(until);
            }
        }
    }

    /// Invalidate a route, bumping its sequence number. Returns the entry's
    /// new seqno if a valid route existed.
    pub fn invalidate(&mut self, dest: usize, now: f64) -> Option<u32> {
        let e = self.entries.get_mut(&dest)?;
        if !e.valid {
            return None;
        }
        e.valid = false;
        e.invalidated_at = now;
        e.seqno = Some(e.seqno.map_or(1, |s| s.wrapping_add(1)));
        e.seqno
    }

    /// Destinations currently routed through `next_hop`.
    pub fn routes_via(&self, next_hop: usize) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|(_, e)| e.valid && e.next_hop == next_hop)
            .map(|(d, _)| *d)
            .collect()
    }

    /// Periodic hygiene: expire stale valid routes, delete long-invalid
    /// ones.
    pub fn purge(&mut self, now: f64) {
        let expired: Vec<usize> = self
            .entries
            .iter()
            .filter(|(_, e)| e.valid && e.lifetime < now)
            .map(|(d, _)| *d)
            .collect();
        for d in expired {
            self.invalidate(d, now);
        }
        self.entries
            .retain(|_, e| e.valid || now - e.invalidated_at <= DELETE_PERIOD);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&usize, &RouteEntry)> {
        self.entries.iter()
    }
}

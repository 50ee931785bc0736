//! Structured event log of a simulation run.
//!
//! The log captures everything the metrics layer needs: application sends
//! and receives, per-hop routing transmissions, MAC drops, and
//! application-level drops. It serializes to a line-oriented text form with
//! six-decimal timestamps.

use std::fmt::Write as _;

/// Routing control packet kind, as tagged on RT_SEND lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtKind {
    Rreq,
    Rrep,
    Rerr,
}

impl RtKind {
    pub fn tag(self) -> &'static str {
        match self {
            RtKind::Rreq => "RREQ",
            RtKind::Rrep => "RREP",
            RtKind::Rerr => "RERR",
        }
    }
}

/// Why the MAC gave up on a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacDropReason {
    RetryLimit,
    NoReverseRoute,
}

impl MacDropReason {
    pub fn tag(self) -> &'static str {
        match self {
            MacDropReason::RetryLimit => "retry_limit",
            MacDropReason::NoReverseRoute => "no_reverse_route",
        }
    }
}

/// Why a data packet was dropped above the MAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppDropReason {
    BufferOverflow,
    NoRoute,
    HopLimit,
}

impl AppDropReason {
    pub fn tag(self) -> &'static str {
        match self {
            AppDropReason::BufferOverflow => "buffer_overflow",
            AppDropReason::NoRoute => "no_route",
            AppDropReason::HopLimit => "hop_limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogRecord {
    AppSend { t: f64, node: usize, pkt: u64, dst: usize, bytes: u32 },
    AppRecv { t: f64, node: usize, pkt: u64, src: usize, bytes: u32, hops: u32 },
    RtSend { t: f64, node: usize, kind: RtKind, bytes: u32 },
    MacDrop { t: f64, node: usize, reason: MacDropReason, peer: usize },
    AppDrop { t: f64, node: usize, pkt: u64, dst: usize, reason: AppDropReason },
}

impl LogRecord {
    pub fn time(&self) -> f64 {
        match self {
            LogRecord::AppSend { t, .. }
            | LogRecord::AppRecv { t, .. }
            | LogRecord::RtSend { t, .. }
            | LogRecord::MacDrop { t, .. }
            | LogRecord::AppDrop { t, .. } => *t,
        }
    }
}

/// Immutable record of everything observable in a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub records: Vec<LogRecord>,
}

impl EventLog {
    pub fn push(&mut self, r: LogRecord) {
        self.records.push(r);
    }

    /// Line-oriented serialization: `<time> <kind> <node> <fields...>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            match r {
                LogRecord::AppSend { t, node, pkt, dst, bytes } => {
                    writeln!(out, "{t:.6} APP_SEND {node} {pkt} {dst} {bytes}").unwrap()
                }
                LogRecord::AppRecv { t, node, pkt, src, bytes, hops } => {
                    writeln!(out, "{t:.6} APP_RECV {node} {pkt} {src} {bytes} {hops}").unwrap()
                }
                LogRecord::RtSend { t, node, kind, bytes } => {
                    writeln!(out, "{t:.6} RT_SEND {node} {} {bytes}", kind.tag()).unwrap()
                }
                LogRecord::MacDrop { t, node, reason, peer } => {
                    writeln!(out, "{t:.6} MAC_DROP {node} {} {peer}", reason.tag()).unwrap()
                }
                LogRecord::AppDrop { t, node, pkt, dst, reason } => {
                    writeln!(out, "{t:.6} APP_DROP {node} {pkt} {dst} {}", reason.tag()).unwrap()
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_form_is_stable() {
        let mut log = EventLog::default();
        log.push(LogRecord::AppSend { t: 1.0, node: 3, pkt: 7, dst: 9, bytes: 512 });
        log.push(LogRecord::RtSend { t: 1.25, node: 3, kind: RtKind::Rreq, bytes: 54 });
        log.push(LogRecord::AppRecv { t: 1.5, node: 9, pkt: 7, src: 3, bytes: 512, hops: 2 });
        log.push(LogRecord::MacDrop { t: 2.0, node: 4, reason: MacDropReason::RetryLimit, peer: 5 });
        log.push(LogRecord::AppDrop {
            t: 2.5,
            node: 3,
            pkt: 8,
            dst: 9,
            reason: AppDropReason::BufferOverflow,
        });
        let text = log.to_text();
        assert_eq!(
            text,
            "1.000000 APP_SEND 3 7 9 512\n\
             1.250000 RT_SEND 3 RREQ 54\n\
             1.500000 APP_RECV 9 7 3 512 2\n\
             2.000000 MAC_DROP 4 retry_limit 5\n\
             2.500000 APP_DROP 3 8 9 buffer_overflow\n"
        );
    }
}

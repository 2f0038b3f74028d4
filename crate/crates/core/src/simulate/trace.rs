use std::fmt::{self, Write};

use crate::model::Rank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    ActionStart,
    ActionEnd,
    SendStart,
    SendEnd,
    RecvStart,
    RecvEnd,
    CollectiveStart,
    CollectiveEnd,
    TaskAssign,
    TaskDone,
    Deadlock,
}

impl EventKind {
    pub const ALL: [EventKind; 11] = [
        EventKind::ActionStart,
        EventKind::ActionEnd,
        EventKind::SendStart,
        EventKind::SendEnd,
        EventKind::RecvStart,
        EventKind::RecvEnd,
        EventKind::CollectiveStart,
        EventKind::CollectiveEnd,
        EventKind::TaskAssign,
        EventKind::TaskDone,
        EventKind::Deadlock,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::ActionStart => "action_start",
            EventKind::ActionEnd => "action_end",
            EventKind::SendStart => "send_start",
            EventKind::SendEnd => "send_end",
            EventKind::RecvStart => "recv_start",
            EventKind::RecvEnd => "recv_end",
            EventKind::CollectiveStart => "collective_start",
            EventKind::CollectiveEnd => "collective_end",
            EventKind::TaskAssign => "task_assign",
            EventKind::TaskDone => "task_done",
            EventKind::Deadlock => "deadlock",
        }
    }

    pub fn parse(s: &str) -> Option<EventKind> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Structured event payload. Rendered as space-separated fields, label first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Detail {
    pub label: Option<String>,
    pub peer: Option<Rank>,
    pub bytes: Option<f64>,
    pub handle: Option<String>,
    /// Blocking rendezvous transfer.
    pub synchronous: Option<bool>,
}

impl Detail {
    pub fn label(label: impl Into<String>) -> Self {
        Detail { label: Some(label.into()), ..Default::default() }
    }

    pub fn peer(mut self, peer: Rank) -> Self {
        self.peer = Some(peer);
        self
    }

    pub fn bytes(mut self, bytes: f64) -> Self {
        self.bytes = Some(bytes);
        self
    }

    pub fn handle(mut self, handle: Option<&str>) -> Self {
        self.handle = handle.map(str::to_string);
        self
    }

    pub fn synchronous(mut self, sync: bool) -> Self {
        self.synchronous = Some(sync);
        self
    }
}

impl fmt::Display for Detail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        if let Some(l) = &self.label {
            parts.push(l.clone());
        }
        if let Some(p) = self.peer {
            parts.push(format!("peer=P{p}"));
        }
        if let Some(b) = self.bytes {
            parts.push(format!("bytes={b}"));
        }
        if let Some(h) = &self.handle {
            parts.push(format!("handle={h}"));
        }
        if let Some(s) = self.synchronous {
            parts.push(if s { "sync".into() } else { "async".into() });
        }
        f.write_str(&parts.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub rank: Rank,
    pub kind: EventKind,
    pub detail: Detail,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    /// Sorted by (time, rank, kind), emission order breaking ties.
    pub events: Vec<Event>,
    pub final_time: f64,
}

impl Trace {
    /// Sort `events` into the canonical order. `events` must be in emission order.
    pub(crate) fn from_emitted(mut events: Vec<Event>) -> Trace {
        // stable sort keeps emission order within equal keys
        events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.rank.cmp(&b.rank)).then(a.kind.cmp(&b.kind)));
        let final_time = events.iter().map(|e| e.time).fold(0.0, f64::max);
        Trace { events, final_time }
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn for_rank(&self, rank: Rank) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.rank == rank)
    }

    /// One line per event: `time<TAB>rank<TAB>kind<TAB>detail`, time to 3 decimals.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let _ = writeln!(out, "{:.3}\t{}\t{}\t{}", e.time, e.rank, e.kind, e.detail);
        }
        out
    }
}

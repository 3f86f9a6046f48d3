use std::collections::VecDeque;

use super::EventKind;
use crate::ensemble::{EnsembleMeasure, Particle};

/// One applied event. `t` and `u` are the values after the jump; `rho` is the
/// total rate of the state the jump left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventRecord {
    pub kind: EventKind,
    pub t: f64,
    pub u: f64,
    pub rho: f64,
    /// Change of the integer mass total.
    pub dmass: i64,
    /// Particle count after the jump.
    pub count: u64,
}

/// Particles removed and added by one event (debug traces only).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Change {
    pub removed: Vec<Particle>,
    pub added: Vec<Particle>,
}

/// Bounded event log. Normal runs keep the last `capacity` records; debug
/// runs keep every record together with the initial ensemble and the
/// particle changes, which is enough to replay the path.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    capacity: usize,
    records: VecDeque<EventRecord>,
    dropped: u64,
    debug: Option<DebugLog>,
}

#[derive(Clone, Debug, PartialEq)]
struct DebugLog {
    initial: EnsembleMeasure,
    changes: Vec<Change>,
}

impl Trace {
    pub fn new(capacity: usize, debug_initial: Option<EnsembleMeasure>) -> Self {
        Trace {
            capacity,
            records: VecDeque::new(),
            dropped: 0,
            debug: debug_initial.map(|initial| DebugLog {
                initial,
                changes: Vec::new(),
            }),
        }
    }

    pub fn push(&mut self, record: EventRecord, change: Option<Change>) {
        match &mut self.debug {
            Some(log) => {
                log.changes.push(change.unwrap_or_default());
                self.records.push_back(record);
            }
            None => {
                if self.capacity == 0 {
                    self.dropped += 1;
                    return;
                }
                if self.records.len() == self.capacity {
                    self.records.pop_front();
                    self.dropped += 1;
                }
                self.records.push_back(record);
            }
        }
    }

    pub fn is_debug(&self) -> bool {
        self.debug.is_some()
    }

    /// True when every event since the start is still held.
    pub fn is_complete(&self) -> bool {
        self.dropped == 0
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &EventRecord> {
        self.records.iter()
    }

    pub fn initial(&self) -> Option<&EnsembleMeasure> {
        self.debug.as_ref().map(|d| &d.initial)
    }

    pub fn changes(&self) -> Option<&[Change]> {
        self.debug.as_ref().map(|d| d.changes.as_slice())
    }
}

//! Per-session event buffer with live fan-out.

use std::collections::VecDeque;

use parking_lot::Mutex;
use tokio::sync::broadcast;
use weave_core::{EventKind, EventSink, ProgressEvent};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Position in the session's event stream, from 1.
    pub seq: u64,
    pub event: ProgressEvent,
}

struct State {
    buf: VecDeque<Frame>,
    next_seq: u64,
    dropped: u64,
}

/// Holds the last `capacity` events of a session. Publishing and
/// subscribing share one lock, so a subscriber's replay and its live
/// receiver never overlap or leave a gap.
pub struct Hub {
    capacity: usize,
    state: Mutex<State>,
    tx: broadcast::Sender<Frame>,
}

/// What a new subscriber gets: the replay, whether the buffer already
/// lost part of it, and the live tail.
pub struct Subscription {
    pub replay: Vec<Frame>,
    pub truncated: bool,
    pub live: broadcast::Receiver<Frame>,
}

impl Hub {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        let (tx, _) = broadcast::channel(capacity);
        Self {
            capacity,
            state: Mutex::new(State {
                buf: VecDeque::new(),
                next_seq: 1,
                dropped: 0,
            }),
            tx,
        }
    }

    pub fn publish(&self, event: ProgressEvent) {
        let mut st = self.state.lock();
        let frame = Frame {
            seq: st.next_seq,
            event,
        };
        st.next_seq += 1;
        if st.buf.len() == self.capacity {
            st.buf.pop_front();
            st.dropped += 1;
        }
        st.buf.push_back(frame.clone());
        let _ = self.tx.send(frame);
    }

    /// Replays from the most recent `plan` event. If that event has been
    /// pushed out, everything still buffered is replayed and the
    /// subscription is marked truncated.
    pub fn subscribe(&self) -> Subscription {
        let st = self.state.lock();
        let start = st
            .buf
            .iter()
            .rposition(|f| f.event.event == EventKind::Plan);
        let truncated = start.is_none() && st.dropped > 0 && !st.buf.is_empty();
        let replay = st.buf.iter().skip(start.unwrap_or(0)).cloned().collect();
        Subscription {
            replay,
            truncated,
            live: self.tx.subscribe(),
        }
    }

    /// Events pushed out of the buffer so far.
    pub fn dropped(&self) -> u64 {
        self.state.lock().dropped
    }

    pub fn len(&self) -> usize {
        self.state.lock().buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl EventSink for Hub {
    fn emit(&self, event: ProgressEvent) {
        self.publish(event);
    }
}

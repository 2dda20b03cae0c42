//! FIFO matching of communication halves per (sender task, receiver task, tag).

use std::collections::{HashMap, VecDeque};

use crate::model::Location;
use crate::prv::{CommSide, UnmatchedComm};
use crate::record::CommRecord;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Half {
    pub location: Location,
    pub logical: u64,
    pub physical: u64,
    pub size: u64,
}

/// ((sender appl, task), (receiver appl, task), tag)
type Key = ((u32, u32), (u32, u32), u64);

#[derive(Debug, Default)]
pub(crate) struct Matcher {
    sends: HashMap<Key, VecDeque<Half>>,
    recvs: HashMap<Key, VecDeque<Half>>,
    pub completed: Vec<CommRecord>,
}

/// The receive would complete before its send left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct CausalityViolation {
    pub send: u64,
    pub recv: u64,
}

fn key(sender: &Location, receiver: &Location, tag: u64) -> Key {
    (
        (sender.appl, sender.task),
        (receiver.appl, receiver.task),
        tag,
    )
}

fn complete(send: Half, recv: Half, tag: u64) -> CommRecord {
    CommRecord {
        send: send.location,
        recv: recv.location,
        logical_send: send.logical,
        physical_send: send.physical,
        logical_recv: recv.logical,
        physical_recv: recv.physical,
        size: send.size,
        tag,
    }
}

impl Matcher {
    /// `send` leaves towards `peer`. Completes against the oldest pending
    /// receive, if any.
    pub fn send(&mut self, send: Half, peer: &Location, tag: u64) -> Result<(), CausalityViolation> {
        let k = key(&send.location, peer, tag);
        if let Some(q) = self.recvs.get_mut(&k) {
            if let Some(recv) = q.front() {
                if recv.physical < send.physical {
                    return Err(CausalityViolation {
                        send: send.physical,
                        recv: recv.physical,
                    });
                }
                let recv = q.pop_front().unwrap();
                self.completed.push(complete(send, recv, tag));
                return Ok(());
            }
        }
        self.sends.entry(k).or_default().push_back(send);
        Ok(())
    }

    /// `recv` completes a message from `peer`.
    pub fn recv(&mut self, recv: Half, peer: &Location, tag: u64) -> Result<(), CausalityViolation> {
        let k = key(peer, &recv.location, tag);
        if let Some(q) = self.sends.get_mut(&k) {
            if let Some(send) = q.front() {
                if recv.physical < send.physical {
                    return Err(CausalityViolation {
                        send: send.physical,
                        recv: recv.physical,
                    });
                }
                let send = q.pop_front().unwrap();
                self.completed.push(complete(send, recv, tag));
                return Ok(());
            }
        }
        self.recvs.entry(k).or_default().push_back(recv);
        Ok(())
    }

    /// Halves still waiting for a partner, oldest first.
    pub fn leftovers(&self) -> Vec<UnmatchedComm> {
        let mut out = Vec::new();
        for (side, map) in [(CommSide::Send, &self.sends), (CommSide::Recv, &self.recvs)] {
            for (&(s, r, tag), q) in map {
                let peer_task = if side == CommSide::Send { r.1 } else { s.1 };
                out.extend(q.iter().map(|h| UnmatchedComm {
                    side,
                    location: h.location,
                    peer_task,
                    tag,
                    time: h.physical,
                }));
            }
        }
        out.sort_by_key(|u| (u.time, u.location, u.tag));
        out
    }
}

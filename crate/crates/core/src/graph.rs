//! Dynamic user-item interaction graph.
//!
//! The graph is an append-only event log plus per-node adjacency lists. Every
//! interaction creates two directed edges, user→item and item→user, each labelled
//! with its order relative to the head (1 for the head's earliest interaction).
//! Snapshots are cutoff filters over the shared log: they see events strictly
//! before their timestamp that already existed when the snapshot was taken.

use std::fmt;
use std::sync::Arc;

use parking_lot::RwLock;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Part {
    User,
    Item,
}

impl Part {
    pub fn opposite(self) -> Part {
        match self {
            Part::User => Part::Item,
            Part::Item => Part::User,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub part: Part,
    pub index: usize,
}

impl NodeId {
    pub fn user(index: usize) -> Self {
        NodeId {
            part: Part::User,
            index,
        }
    }

    pub fn item(index: usize) -> Self {
        NodeId {
            part: Part::Item,
            index,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.part {
            Part::User => write!(f, "u{}", self.index),
            Part::Item => write!(f, "i{}", self.index),
        }
    }
}

/// Per-event data carried alongside the edge: the label and the embedding-table ids
/// of both profiles as they were at interaction time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventPayload {
    pub label: u8,
    pub user_features: Vec<usize>,
    pub item_features: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionEvent {
    pub user: usize,
    pub item: usize,
    pub timestamp: i64,
    pub payload: EventPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectedEdge {
    pub head: NodeId,
    pub tail: NodeId,
    pub order: usize,
}

/// One entry of an ordered neighbour sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub tail: NodeId,
    pub order: usize,
    pub event: usize,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy)]
struct AdjEntry {
    event: usize,
    tail: usize,
    timestamp: i64,
}

#[derive(Debug, Default)]
struct EventLog {
    events: Vec<InteractionEvent>,
    user_adj: Vec<Vec<AdjEntry>>,
    item_adj: Vec<Vec<AdjEntry>>,
    frozen: Option<(usize, usize)>,
}

impl EventLog {
    fn adjacency(&self, v: NodeId) -> &[AdjEntry] {
        let lists = match v.part {
            Part::User => &self.user_adj,
            Part::Item => &self.item_adj,
        };
        lists.get(v.index).map_or(&[], |l| l.as_slice())
    }

    fn visible(&self, v: NodeId, cutoff: i64, limit: usize) -> &[AdjEntry] {
        let adj = self.adjacency(v);
        let n = adj.partition_point(|e| e.event < limit && e.timestamp < cutoff);
        &adj[..n]
    }
}

/// Read-only queries shared by the live graph and its snapshots.
pub trait GraphView {
    /// Last `min(L, k)` neighbours of `v` in ascending order.
    fn neighbors(&self, v: NodeId, k: usize) -> Vec<Neighbor>;

    /// Untruncated interaction count `L` within the view.
    fn degree(&self, v: NodeId) -> usize;

    fn payload(&self, event: usize) -> Option<EventPayload>;

    fn ordered_neighbors(&self, v: NodeId, k: usize) -> Vec<(NodeId, usize)> {
        self.neighbors(v, k).into_iter().map(|n| (n.tail, n.order)).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct InteractionGraph {
    log: Arc<RwLock<EventLog>>,
}

impl InteractionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph whose node indices must stay below the given vocabulary sizes.
    pub fn frozen(users: usize, items: usize) -> Self {
        let log = EventLog {
            frozen: Some((users, items)),
            ..EventLog::default()
        };
        InteractionGraph {
            log: Arc::new(RwLock::new(log)),
        }
    }

    pub fn event_count(&self) -> usize {
        self.log.read().events.len()
    }

    pub fn events(&self) -> Vec<InteractionEvent> {
        self.log.read().events.clone()
    }

    /// Appends an interaction and returns the (user-side, item-side) edge orders.
    pub fn insert_interaction(&self, event: InteractionEvent) -> Result<(usize, usize)> {
        let mut log = self.log.write();
        if event.timestamp < 0 {
            return Err(Error::Domain(format!("negative timestamp {}", event.timestamp)));
        }
        if let Some(last) = log.events.last() {
            if event.timestamp < last.timestamp {
                return Err(Error::OutOfOrder {
                    last: last.timestamp,
                    got: event.timestamp,
                });
            }
        }
        if let Some((users, items)) = log.frozen {
            if event.user >= users || event.item >= items {
                return Err(Error::Data(format!(
                    "node (u{}, i{}) outside frozen vocabulary ({users} users, {items} items)",
                    event.user, event.item
                )));
            }
        }
        let idx = log.events.len();
        let (user, item, timestamp) = (event.user, event.item, event.timestamp);
        if log.user_adj.len() <= user {
            log.user_adj.resize_with(user + 1, Vec::new);
        }
        if log.item_adj.len() <= item {
            log.item_adj.resize_with(item + 1, Vec::new);
        }
        log.user_adj[user].push(AdjEntry {
            event: idx,
            tail: item,
            timestamp,
        });
        log.item_adj[item].push(AdjEntry {
            event: idx,
            tail: user,
            timestamp,
        });
        let orders = (log.user_adj[user].len(), log.item_adj[item].len());
        log.events.push(event);
        Ok(orders)
    }

    /// View of all events with timestamp `< t` that exist now.
    pub fn snapshot_at(&self, t: i64) -> GraphSnapshot {
        GraphSnapshot {
            log: Arc::clone(&self.log),
            cutoff: t,
            limit: self.event_count(),
        }
    }

    /// Every directed edge headed at `v`, in order.
    pub fn edges_from(&self, v: NodeId) -> Vec<DirectedEdge> {
        self.neighbors(v, usize::MAX)
            .into_iter()
            .map(|n| DirectedEdge {
                head: v,
                tail: n.tail,
                order: n.order,
            })
            .collect()
    }
}

fn collect_neighbors(log: &EventLog, v: NodeId, k: usize, cutoff: i64, limit: usize) -> Vec<Neighbor> {
    let visible = log.visible(v, cutoff, limit);
    let start = visible.len().saturating_sub(k);
    let tail_part = v.part.opposite();
    visible[start..]
        .iter()
        .enumerate()
        .map(|(offset, e)| Neighbor {
            tail: NodeId {
                part: tail_part,
                index: e.tail,
            },
            order: start + offset + 1,
            event: e.event,
            timestamp: e.timestamp,
        })
        .collect()
}

impl GraphView for InteractionGraph {
    fn neighbors(&self, v: NodeId, k: usize) -> Vec<Neighbor> {
        let log = self.log.read();
        collect_neighbors(&log, v, k, i64::MAX, usize::MAX)
    }

    fn degree(&self, v: NodeId) -> usize {
        self.log.read().adjacency(v).len()
    }

    fn payload(&self, event: usize) -> Option<EventPayload> {
        self.log.read().events.get(event).map(|e| e.payload.clone())
    }
}

/// Immutable cutoff view of an [`InteractionGraph`].
#[derive(Debug, Clone)]
pub struct GraphSnapshot {
    log: Arc<RwLock<EventLog>>,
    cutoff: i64,
    limit: usize,
}

impl GraphSnapshot {
    pub fn cutoff(&self) -> i64 {
        self.cutoff
    }
}

impl GraphView for GraphSnapshot {
    fn neighbors(&self, v: NodeId, k: usize) -> Vec<Neighbor> {
        let log = self.log.read();
        collect_neighbors(&log, v, k, self.cutoff, self.limit)
    }

    fn degree(&self, v: NodeId) -> usize {
        self.log.read().visible(v, self.cutoff, self.limit).len()
    }

    fn payload(&self, event: usize) -> Option<EventPayload> {
        if event >= self.limit {
            return None;
        }
        let log = self.log.read();
        log.events
            .get(event)
            .filter(|e| e.timestamp < self.cutoff)
            .map(|e| e.payload.clone())
    }
}

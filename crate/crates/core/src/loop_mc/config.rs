use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::lattice::TorusLattice;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Cross,
    DoubleBar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub edge: usize,
    pub time: f64,
    pub kind: LinkKind,
}

/// Stable handle to a stored link. Handles of removed links may be reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LinkId(pub(crate) u32);

/// A link as seen from one of its endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Event {
    pub time: f64,
    pub slot: u32,
}

/// Links on `E × [0, β)`, indexed per edge and per vertex by time.
///
/// Two events at the same vertex never share a time; inserts that would tie
/// are rejected so loop tracing always sees a strict order.
#[derive(Debug, Clone)]
pub struct LinkConfiguration {
    lattice: TorusLattice,
    beta: f64,
    slots: Vec<Option<Link>>,
    free: Vec<u32>,
    live: Vec<u32>,
    live_pos: Vec<u32>,
    per_edge: Vec<Vec<Event>>,
    per_vertex: Vec<Vec<Event>>,
}

fn position(events: &[Event], time: f64) -> std::result::Result<usize, usize> {
    let p = events.partition_point(|e| e.time < time);
    if events.get(p).is_some_and(|e| e.time == time) {
        Ok(p)
    } else {
        Err(p)
    }
}

impl LinkConfiguration {
    pub fn new(lattice: TorusLattice, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Parameter(format!("β must be positive and finite, got {beta}")));
        }
        Ok(Self {
            lattice,
            beta,
            slots: Vec::new(),
            free: Vec::new(),
            live: Vec::new(),
            live_pos: Vec::new(),
            per_edge: vec![Vec::new(); lattice.edge_count()],
            per_vertex: vec![Vec::new(); lattice.volume()],
        })
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Number of links `M`.
    pub fn link_count(&self) -> usize {
        self.live.len()
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.slots.get(id.0 as usize).and_then(Option::as_ref)
    }

    /// The `i`-th live link, for `i < link_count()`. Order is arbitrary but
    /// deterministic given the insert/remove history.
    pub fn nth(&self, i: usize) -> LinkId {
        LinkId(self.live[i])
    }

    pub fn links(&self) -> impl Iterator<Item = (LinkId, &Link)> + '_ {
        self.live.iter().map(|&s| (LinkId(s), self.slots[s as usize].as_ref().expect("live slot")))
    }

    /// Links on `edge`, sorted by time.
    pub fn edge_links(&self, edge: usize) -> impl Iterator<Item = &Link> + '_ {
        self.per_edge[edge].iter().map(|e| self.slot(e.slot))
    }

    pub fn find(&self, edge: usize, time: f64) -> Option<LinkId> {
        let events = self.per_edge.get(edge)?;
        position(events, time).ok().map(|p| LinkId(events[p].slot))
    }

    pub(crate) fn slot(&self, s: u32) -> &Link {
        self.slots[s as usize].as_ref().expect("event refers to a live link")
    }

    pub(crate) fn events(&self, x: usize) -> &[Event] {
        &self.per_vertex[x]
    }

    /// Index of the event at `time` in vertex `x`'s list.
    pub(crate) fn event_index(&self, x: usize, time: f64) -> usize {
        position(&self.per_vertex[x], time).expect("event present at vertex")
    }

    /// Index of the first event strictly after `time` at `x`.
    pub(crate) fn events_before(&self, x: usize, time: f64) -> usize {
        self.per_vertex[x].partition_point(|e| e.time < time)
    }

    /// Check that `link` could be inserted: valid edge, time in `(0, β)`, no
    /// tie with another event at either endpoint.
    pub fn check_insertable(&self, link: &Link) -> Result<()> {
        if link.edge >= self.lattice.edge_count() {
            return Err(Error::Precondition(format!("edge {} out of range", link.edge)));
        }
        if !(link.time > 0.0 && link.time < self.beta) {
            return Err(Error::Precondition(format!(
                "link time {} outside (0, {})",
                link.time, self.beta
            )));
        }
        let (x, y) = self.lattice.endpoints(link.edge);
        for v in [x, y] {
            if position(&self.per_vertex[v], link.time).is_ok() {
                return Err(Error::Precondition(format!(
                    "time {} already used at vertex {v}",
                    link.time
                )));
            }
        }
        Ok(())
    }

    pub fn insert(&mut self, link: Link) -> Result<LinkId> {
        self.check_insertable(&link)?;
        let slot = match self.free.pop() {
            Some(s) => {
                self.slots[s as usize] = Some(link);
                s
            }
            None => {
                self.slots.push(Some(link));
                self.live_pos.push(0);
                (self.slots.len() - 1) as u32
            }
        };
        self.live_pos[slot as usize] = self.live.len() as u32;
        self.live.push(slot);
        let event = Event { time: link.time, slot };
        let (x, y) = self.lattice.endpoints(link.edge);
        let list = &mut self.per_edge[link.edge];
        let p = position(list, link.time).unwrap_err();
        list.insert(p, event);
        for v in [x, y] {
            let list = &mut self.per_vertex[v];
            let p = position(list, link.time).unwrap_err();
            list.insert(p, event);
        }
        Ok(LinkId(slot))
    }

    pub fn remove(&mut self, id: LinkId) -> Result<Link> {
        let link = self
            .slots
            .get_mut(id.0 as usize)
            .and_then(Option::take)
            .ok_or_else(|| Error::Precondition(format!("no live link with id {}", id.0)))?;
        let pos = self.live_pos[id.0 as usize] as usize;
        self.live.swap_remove(pos);
        if let Some(&moved) = self.live.get(pos) {
            self.live_pos[moved as usize] = pos as u32;
        }
        self.free.push(id.0);
        let (x, y) = self.lattice.endpoints(link.edge);
        let list = &mut self.per_edge[link.edge];
        list.remove(position(list, link.time).expect("edge event"));
        for v in [x, y] {
            let list = &mut self.per_vertex[v];
            list.remove(position(list, link.time).expect("vertex event"));
        }
        Ok(link)
    }
}

/// Draw a uniform time in `(0, β)` that does not tie with an event at either
/// endpoint of `edge`.
pub(crate) fn fresh_time<R: Rng>(config: &LinkConfiguration, edge: usize, rng: &mut R) -> f64 {
    let (x, y) = config.lattice().endpoints(edge);
    loop {
        let t = rng.random::<f64>() * config.beta();
        let clash = |v: usize| position(config.events(v), t).is_ok();
        if t > 0.0 && t < config.beta() && !clash(x) && !clash(y) {
            return t;
        }
    }
}

pub(crate) fn random_kind<R: Rng>(u: f64, rng: &mut R) -> LinkKind {
    if rng.random::<f64>() < u {
        LinkKind::Cross
    } else {
        LinkKind::DoubleBar
    }
}

fn check_poisson_params(beta: f64, u: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Parameter(format!("u must lie in [0, 1], got {u}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Parameter(format!("β must be positive and finite, got {beta}")));
    }
    Ok(())
}

pub(crate) fn sample_poisson_with<R: Rng>(
    lattice: &TorusLattice,
    beta: f64,
    u: f64,
    rng: &mut R,
) -> Result<LinkConfiguration> {
    check_poisson_params(beta, u)?;
    let mut config = LinkConfiguration::new(*lattice, beta)?;
    let count = Poisson::new(beta).map_err(|e| Error::Parameter(e.to_string()))?;
    for edge in 0..lattice.edge_count() {
        let n = count.sample(rng) as usize;
        for _ in 0..n {
            let time = fresh_time(&config, edge, rng);
            let kind = random_kind(u, rng);
            config.insert(Link { edge, time, kind })?;
        }
    }
    Ok(config)
}

/// Independent Poisson processes of unit intensity on every `edge × [0, β)`,
/// each link a cross with probability `u`.
pub fn sample_poisson(lattice: &TorusLattice, beta: f64, u: f64, seed: u64) -> Result<LinkConfiguration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_poisson_with(lattice, beta, u, &mut rng)
}

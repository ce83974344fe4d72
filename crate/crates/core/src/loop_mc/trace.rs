use serde::Serialize;

use super::config::{Link, LinkConfiguration, LinkId, LinkKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    Up,
    Down,
}

/// Traversal of segment `seg` at vertex `v`. Segment `j` runs from event `j`
/// up to event `j + 1` (cyclically); a vertex without events has one
/// segment, the whole circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    v: usize,
    seg: usize,
    dir: Dir,
}

/// Event index hit at the end of the traversal, if the vertex has any.
fn end_event(config: &LinkConfiguration, pos: Pos) -> Option<usize> {
    let n = config.events(pos.v).len();
    (n > 0).then(|| match pos.dir {
        Dir::Up => (pos.seg + 1) % n,
        Dir::Down => pos.seg,
    })
}

/// Jump across the link at event `e` of `pos.v`.
fn follow(config: &LinkConfiguration, pos: Pos, e: usize) -> Pos {
    let event = config.events(pos.v)[e];
    let link = config.slot(event.slot);
    let (a, b) = config.lattice().endpoints(link.edge);
    let w = if a == pos.v { b } else { a };
    let k = config.event_index(w, link.time);
    let below = (k + config.events(w).len() - 1) % config.events(w).len();
    match (link.kind, pos.dir) {
        (LinkKind::DoubleBar, Dir::Up) | (LinkKind::Cross, Dir::Down) => Pos { v: w, seg: below, dir: Dir::Down },
        (LinkKind::DoubleBar, Dir::Down) | (LinkKind::Cross, Dir::Up) => Pos { v: w, seg: k, dir: Dir::Up },
    }
}

/// Partition of all vertical segments into loops.
#[derive(Debug, Clone, Serialize)]
pub struct LoopDecomposition {
    offsets: Vec<usize>,
    times: Vec<f64>,
    loop_of: Vec<u32>,
    loop_count: usize,
    beta: f64,
}

/// One vertical segment `{v} × (start, end)`; `end` may exceed `β` when the
/// segment wraps through time 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub vertex: usize,
    pub start: f64,
    pub end: f64,
    pub loop_id: usize,
}

impl LoopDecomposition {
    pub fn loop_count(&self) -> usize {
        self.loop_count
    }

    pub fn segment_count(&self) -> usize {
        self.loop_of.len()
    }

    /// Loop through `(x, t)`. Times on an event are assigned to the segment
    /// above it.
    pub fn membership(&self, x: usize, t: f64) -> usize {
        let (lo, hi) = (self.offsets[x], self.offsets[x + 1]);
        let times = &self.times[lo..hi];
        if times.len() == 1 && times[0].is_nan() {
            return self.loop_of[lo] as usize;
        }
        let t = t.rem_euclid(self.beta);
        let p = times.partition_point(|&s| s <= t);
        let seg = (p + times.len() - 1) % times.len();
        self.loop_of[lo + seg] as usize
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        (0..self.offsets.len() - 1).flat_map(move |v| {
            let (lo, hi) = (self.offsets[v], self.offsets[v + 1]);
            (lo..hi).map(move |i| {
                let (start, end) = if self.times[i].is_nan() {
                    (0.0, self.beta)
                } else if i + 1 < hi {
                    (self.times[i], self.times[i + 1])
                } else {
                    (self.times[i], self.times[lo] + self.beta)
                };
                Segment { vertex: v, start, end, loop_id: self.loop_of[i] as usize }
            })
        })
    }
}

/// Trace every loop. Each segment is visited exactly once, so the work is
/// `O(M + L^d)` up to the logarithmic event lookups.
pub fn trace_loops(config: &LinkConfiguration) -> LoopDecomposition {
    let volume = config.lattice().volume();
    let mut offsets = Vec::with_capacity(volume + 1);
    let mut times = Vec::new();
    offsets.push(0);
    for v in 0..volume {
        let events = config.events(v);
        if events.is_empty() {
            times.push(f64::NAN);
        } else {
            times.extend(events.iter().map(|e| e.time));
        }
        offsets.push(times.len());
    }
    const UNSET: u32 = u32::MAX;
    let mut loop_of = vec![UNSET; times.len()];
    let mut loop_count = 0usize;
    for v in 0..volume {
        for seg in 0..offsets[v + 1] - offsets[v] {
            if loop_of[offsets[v] + seg] != UNSET {
                continue;
            }
            let id = loop_count as u32;
            loop_count += 1;
            let start = Pos { v, seg, dir: Dir::Up };
            let mut pos = start;
            loop {
                loop_of[offsets[pos.v] + pos.seg] = id;
                let Some(e) = end_event(config, pos) else { break };
                pos = follow(config, pos, e);
                if pos.v == start.v && pos.seg == start.seg {
                    break;
                }
            }
        }
    }
    LoopDecomposition { offsets, times, loop_of, loop_count, beta: config.beta() }
}

// The four sides of a cut at (x, τ), (y, τ): x⁻, x⁺, y⁻, y⁺.
const PASS: [(usize, usize); 2] = [(0, 1), (2, 3)];
const BAR: [(usize, usize); 2] = [(0, 2), (1, 3)];
const CROSS: [(usize, usize); 2] = [(0, 3), (1, 2)];

fn internal(kind: LinkKind) -> [(usize, usize); 2] {
    match kind {
        LinkKind::Cross => CROSS,
        LinkKind::DoubleBar => BAR,
    }
}

/// Number of cycles formed by two perfect matchings on four points.
fn cycles(a: &[usize; 4], b: [(usize, usize); 2]) -> i32 {
    let mut partner_b = [0; 4];
    for (p, q) in b {
        partner_b[p] = q;
        partner_b[q] = p;
    }
    let mut seen = [false; 4];
    let mut count = 0;
    for s in 0..4 {
        if seen[s] {
            continue;
        }
        count += 1;
        let mut p = s;
        while !seen[p] {
            seen[p] = true;
            let q = a[p];
            seen[q] = true;
            p = partner_b[q];
        }
    }
    count
}

enum Cut {
    /// Point cut strictly inside segments `sx` at `x` and `sy` at `y`.
    Open { sx: usize, sy: usize },
    /// Cut at an existing link, stored in `slot`.
    Link { slot: u32 },
}

struct LocalCut {
    x: usize,
    y: usize,
    cut: Cut,
}

impl LocalCut {
    fn side(&self, v: usize, dir: Dir) -> usize {
        let base = if v == self.x { 0 } else { 2 };
        base + if dir == Dir::Up { 0 } else { 1 }
    }

    fn start(&self, config: &LinkConfiguration, side: usize) -> Pos {
        let v = if side < 2 { self.x } else { self.y };
        let upper = side % 2 == 1;
        match self.cut {
            Cut::Open { sx, sy } => {
                let seg = if v == self.x { sx } else { sy };
                Pos { v, seg, dir: if upper { Dir::Up } else { Dir::Down } }
            }
            Cut::Link { slot } => {
                let time = config.slot(slot).time;
                let k = config.event_index(v, time);
                let n = config.events(v).len();
                if upper {
                    Pos { v, seg: k, dir: Dir::Up }
                } else {
                    Pos { v, seg: (k + n - 1) % n, dir: Dir::Down }
                }
            }
        }
    }

    /// Walk away from `side` along the rest of the configuration until the
    /// cut is reached again; returns the side arrived at.
    fn arc_end(&self, config: &LinkConfiguration, side: usize) -> usize {
        let mut pos = self.start(config, side);
        let mut first = true;
        loop {
            if let Cut::Open { sx, sy } = self.cut {
                let inside = (pos.v == self.x && pos.seg == sx) || (pos.v == self.y && pos.seg == sy);
                if inside && !first {
                    return self.side(pos.v, pos.dir);
                }
            }
            let Some(e) = end_event(config, pos) else {
                // Event-free circle: the walk comes straight back round.
                return self.side(pos.v, pos.dir);
            };
            if let Cut::Link { slot } = self.cut {
                if config.events(pos.v)[e].slot == slot {
                    return self.side(pos.v, pos.dir);
                }
            }
            pos = follow(config, pos, e);
            first = false;
        }
    }

    fn external_pairing(&self, config: &LinkConfiguration) -> [usize; 4] {
        let mut partner = [usize::MAX; 4];
        for s in 0..4 {
            if partner[s] == usize::MAX {
                let t = self.arc_end(config, s);
                partner[s] = t;
                partner[t] = s;
            }
        }
        partner
    }
}

fn open_cut(config: &LinkConfiguration, link: &Link) -> LocalCut {
    let (x, y) = config.lattice().endpoints(link.edge);
    let seg_at = |v: usize| {
        let n = config.events(v).len();
        if n == 0 {
            0
        } else {
            (config.events_before(v, link.time) + n - 1) % n
        }
    };
    LocalCut { x, y, cut: Cut::Open { sx: seg_at(x), sy: seg_at(y) } }
}

/// `|𝓛|` change from inserting `link` (assumed insertable).
pub(crate) fn delta_insert(config: &LinkConfiguration, link: &Link) -> i32 {
    let cut = open_cut(config, link);
    let ext = cut.external_pairing(config);
    cycles(&ext, internal(link.kind)) - cycles(&ext, PASS)
}

/// `|𝓛|` change from removing the live link `id`.
pub(crate) fn delta_remove(config: &LinkConfiguration, id: LinkId) -> i32 {
    let link = *config.link(id).expect("live link");
    let (x, y) = config.lattice().endpoints(link.edge);
    let cut = LocalCut { x, y, cut: Cut::Link { slot: id.0 } };
    let ext = cut.external_pairing(config);
    cycles(&ext, PASS) - cycles(&ext, internal(link.kind))
}

/// `|𝓛(ω′)| − |𝓛(ω)|` where `ω′` toggles `link`: removal if a link with the
/// same edge and time is present, insertion otherwise. Only the loops through
/// the link's endpoints are retraced.
///
/// With crosses only, or double bars only on a bipartite torus (even `L`),
/// the result is always `±1`. Mixing both kinds allows `0`: a link joining a
/// loop to itself with the "wrong" orientation just reroutes it.
pub fn delta_loops_on_toggle(config: &LinkConfiguration, link: &Link) -> Result<i32> {
    match config.find(link.edge, link.time) {
        Some(id) => {
            let present = config.link(id).expect("found link");
            if present.kind != link.kind {
                return Err(Error::Precondition(format!(
                    "link at edge {} time {} has kind {:?}, not {:?}",
                    link.edge, link.time, present.kind, link.kind
                )));
            }
            Ok(delta_remove(config, id))
        }
        None => {
            config.check_insertable(link)?;
            Ok(delta_insert(config, link))
        }
    }
}

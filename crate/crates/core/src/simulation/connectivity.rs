//! Connectivity accounting during damage and restoration. A customer is
//! served exactly when its load node is connected to the substation of its
//! own service area.
//!
//! The storm phase (edges only fail) recounts from scratch each hour; the
//! restoration phase (edges only return) runs an incremental union-find whose
//! roots carry a substation bitset and an unserved-customers-per-area map, so
//! each repair updates served counts in near-constant time and the gain of a
//! prospective repair — its criticality — is a cheap cross lookup.

use crate::network::{NetworkGraph, NodeKind};

pub(crate) fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize]; // path halving
        x = parent[x as usize];
    }
    x
}

pub(crate) fn union(parent: &mut [u32], rank: &mut [u8], a: u32, b: u32) -> bool {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra == rb {
        return false;
    }
    let (hi, lo) = if rank[ra as usize] >= rank[rb as usize] {
        (ra, rb)
    } else {
        (rb, ra)
    };
    parent[lo as usize] = hi;
    if rank[ra as usize] == rank[rb as usize] {
        rank[hi as usize] += 1;
    }
    true
}

/// Customers connected to their own substation, per area, for the subgraph of
/// intact edges.
pub fn served_counts(graph: &NetworkGraph, intact: &[bool]) -> Vec<u64> {
    debug_assert_eq!(intact.len(), graph.edges.len());
    let n = graph.n_nodes();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    let mut rank = vec![0u8; n];
    for (eid, e) in graph.edges.iter().enumerate() {
        if intact[eid] {
            union(&mut parent, &mut rank, e.a, e.b);
        }
    }
    let sub_roots: Vec<u32> = graph
        .substations
        .iter()
        .map(|&s| find(&mut parent, s))
        .collect();
    let mut served = vec![0u64; graph.n_areas()];
    for (id, node) in graph.nodes.iter().enumerate() {
        if node.kind != NodeKind::Load {
            continue;
        }
        if let Some(a) = node.area {
            if find(&mut parent, id as u32) == sub_roots[a as usize] {
                served[a as usize] += node.customers as u64;
            }
        }
    }
    served
}

/// Served fraction per area in [0, 1]; an area with no customers reads 1.0.
pub fn served_fraction(graph: &NetworkGraph, intact: &[bool]) -> Vec<f64> {
    served_counts(graph, intact)
        .iter()
        .zip(graph.area_customers())
        .map(|(&s, &t)| if t == 0 { 1.0 } else { s as f64 / t as f64 })
        .collect()
}

/// Incremental connectivity with served-customer bookkeeping. Built once at
/// storm end; only grows (repairs) from there.
pub struct ConnectivityTracker {
    parent: Vec<u32>,
    rank: Vec<u8>,
    /// Bitset words per node (`ceil(n_areas / 64)`).
    words: usize,
    /// Substation-area bitset, valid at component roots.
    subs: Vec<u64>,
    /// Per-root `(area, unserved customers)` entries, sorted by area. At most
    /// one entry per area, so merges cost O(areas).
    unserved: Vec<Vec<(u32, u64)>>,
    served: Vec<u64>,
    total_unserved: u64,
}

impl ConnectivityTracker {
    pub fn build(graph: &NetworkGraph, intact: &[bool]) -> Self {
        debug_assert_eq!(intact.len(), graph.edges.len());
        let n = graph.n_nodes();
        let n_areas = graph.n_areas();
        let words = n_areas.div_ceil(64);
        let mut parent: Vec<u32> = (0..n as u32).collect();
        let mut rank = vec![0u8; n];
        for (eid, e) in graph.edges.iter().enumerate() {
            if intact[eid] {
                union(&mut parent, &mut rank, e.a, e.b);
            }
        }
        let mut subs = vec![0u64; n * words];
        for (a, &s) in graph.substations.iter().enumerate() {
            let r = find(&mut parent, s) as usize;
            subs[r * words + a / 64] |= 1 << (a % 64);
        }
        let mut unserved: Vec<Vec<(u32, u64)>> = vec![Vec::new(); n];
        let mut served = vec![0u64; n_areas];
        let mut total_unserved = 0u64;
        for (id, node) in graph.nodes.iter().enumerate() {
            if node.kind != NodeKind::Load || node.customers == 0 {
                continue;
            }
            let Some(a) = node.area else { continue };
            let r = find(&mut parent, id as u32) as usize;
            if subs[r * words + a as usize / 64] >> (a as usize % 64) & 1 == 1 {
                served[a as usize] += node.customers as u64;
            } else {
                unserved[r].push((a, node.customers as u64));
                total_unserved += node.customers as u64;
            }
        }
        for entries in unserved.iter_mut() {
            if entries.len() > 1 {
                entries.sort_unstable_by_key(|&(a, _)| a);
                // coalesce duplicates in place
                let mut w = 0;
                for i in 1..entries.len() {
                    if entries[i].0 == entries[w].0 {
                        entries[w].1 += entries[i].1;
                    } else {
                        w += 1;
                        entries[w] = entries[i];
                    }
                }
                entries.truncate(w + 1);
            }
        }
        Self {
            parent,
            rank,
            words,
            subs,
            unserved,
            served,
            total_unserved,
        }
    }

    pub fn served(&self) -> &[u64] {
        &self.served
    }

    pub fn total_unserved(&self) -> u64 {
        self.total_unserved
    }

    pub fn find_root(&mut self, node: u32) -> u32 {
        find(&mut self.parent, node)
    }

    /// Unserved customers per area in the component rooted at `root`.
    pub fn unserved_at(&self, root: u32) -> &[(u32, u64)] {
        &self.unserved[root as usize]
    }

    fn subs_word(&self, root: u32, w: usize) -> u64 {
        self.subs[root as usize * self.words + w]
    }

    /// True if the component rooted at `root` contains any substation, i.e.
    /// it is grid-energized rather than an island.
    pub fn has_substation(&self, root: u32) -> bool {
        (0..self.words).any(|w| self.subs_word(root, w) != 0)
    }

    /// Customers that would become newly served if `edge` alone were
    /// repaired: substations on one side times unserved customers of their
    /// areas on the other.
    pub fn criticality(&mut self, graph: &NetworkGraph, edge: u32) -> u64 {
        let e = &graph.edges[edge as usize];
        let (ra, rb) = (self.find_root(e.a), self.find_root(e.b));
        if ra == rb {
            return 0;
        }
        self.cross_gain(ra, rb) + self.cross_gain(rb, ra)
    }

    /// Σ over areas whose substation sits under `sub_root` of unserved
    /// customers of that area under `load_root`.
    fn cross_gain(&self, sub_root: u32, load_root: u32) -> u64 {
        let entries = &self.unserved[load_root as usize];
        if entries.is_empty() {
            return 0;
        }
        let mut gain = 0;
        for &(a, c) in entries {
            if self.subs_word(sub_root, a as usize / 64) >> (a as usize % 64) & 1 == 1 {
                gain += c;
            }
        }
        gain
    }

    /// Repair `edge`: merge its endpoint components and mark every customer
    /// whose substation just became reachable as served. Returns the newly
    /// served customer count.
    pub fn union_edge(&mut self, graph: &NetworkGraph, edge: u32) -> u64 {
        let e = &graph.edges[edge as usize];
        let (ra, rb) = (self.find_root(e.a), self.find_root(e.b));
        if ra == rb {
            return 0;
        }
        let gained = self.settle(ra, rb) + self.settle(rb, ra);

        // Union by rank; fold the smaller root's bookkeeping into the winner.
        let (hi, lo) = if self.rank[ra as usize] >= self.rank[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[lo as usize] = hi;
        if self.rank[ra as usize] == self.rank[rb as usize] {
            self.rank[hi as usize] += 1;
        }
        for w in 0..self.words {
            let bits = self.subs[lo as usize * self.words + w];
            self.subs[hi as usize * self.words + w] |= bits;
        }
        let lo_entries = std::mem::take(&mut self.unserved[lo as usize]);
        if !lo_entries.is_empty() {
            let hi_entries = std::mem::take(&mut self.unserved[hi as usize]);
            self.unserved[hi as usize] = merge_entries(hi_entries, lo_entries);
        }
        gained
    }

    /// Move customers of areas whose substation is under `sub_root` out of
    /// `load_root`'s unserved map and into the served counters.
    fn settle(&mut self, sub_root: u32, load_root: u32) -> u64 {
        let mut gained = 0;
        let entries = &mut self.unserved[load_root as usize];
        let mut i = 0;
        while i < entries.len() {
            let (a, c) = entries[i];
            if self.subs[sub_root as usize * self.words + a as usize / 64] >> (a as usize % 64) & 1
                == 1
            {
                self.served[a as usize] += c;
                gained += c;
                entries.remove(i);
            } else {
                i += 1;
            }
        }
        self.total_unserved -= gained;
        gained
    }
}

fn merge_entries(a: Vec<(u32, u64)>, b: Vec<(u32, u64)>) -> Vec<(u32, u64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push((a[i].0, a[i].1 + b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

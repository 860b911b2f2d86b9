//! Isomorphism classes of connected k-regular graphs on small vertex sets.
//!
//! Classes are found by closing a seed graph under double edge swaps that
//! keep the graph connected (that move set connects every class), deduplicated
//! by an exact canonical form from individualization-refinement.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

/// Adjacency as one bitmask per vertex; n <= 16.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Small {
    pub n: usize,
    pub rows: Vec<u16>,
}

impl Small {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in 0..self.n {
            for v in u + 1..self.n {
                if self.rows[u] >> v & 1 == 1 {
                    out.push((u, v));
                }
            }
        }
        out
    }

    fn connected(&self) -> bool {
        let mut seen: u16 = 1;
        let mut frontier: u16 = 1;
        while frontier != 0 {
            let mut next = 0;
            for u in 0..self.n {
                if frontier >> u & 1 == 1 {
                    next |= self.rows[u];
                }
            }
            frontier = next & !seen;
            seen |= next;
        }
        seen.count_ones() as usize == self.n
    }
}

/// Colour refinement to the coarsest equitable partition, with cells ordered
/// by isomorphism-invariant signatures only.
fn refine(g: &Small, colors: &mut [usize]) {
    loop {
        let cells = colors.iter().max().map_or(0, |m| m + 1);
        let mut sigs: Vec<(usize, Vec<usize>)> = (0..g.n)
            .map(|u| {
                let mut counts = vec![0; cells];
                for v in 0..g.n {
                    if g.rows[u] >> v & 1 == 1 {
                        counts[colors[v]] += 1;
                    }
                }
                (colors[u], counts)
            })
            .collect();
        let mut distinct = sigs.clone();
        distinct.sort();
        distinct.dedup();
        if distinct.len() == cells {
            return;
        }
        for (u, sig) in sigs.drain(..).enumerate() {
            colors[u] = distinct.binary_search(&sig).unwrap();
        }
    }
}

fn code(g: &Small, colors: &[usize]) -> u128 {
    let mut at = vec![0; g.n];
    for (u, &c) in colors.iter().enumerate() {
        at[c] = u;
    }
    let mut bits = 0u128;
    let mut pos = 0;
    for a in 0..g.n {
        for b in a + 1..g.n {
            if g.rows[at[a]] >> at[b] & 1 == 1 {
                bits |= 1 << pos;
            }
            pos += 1;
        }
    }
    bits
}

fn search(g: &Small, colors: Vec<usize>, best: &mut Option<u128>) {
    let cells = colors.iter().max().unwrap() + 1;
    if cells == g.n {
        let c = code(g, &colors);
        if best.is_none_or(|b| c < b) {
            *best = Some(c);
        }
        return;
    }
    let mut size = vec![0; cells];
    for &c in &colors {
        size[c] += 1;
    }
    let target = (0..cells).find(|&c| size[c] > 1).unwrap();
    for v in (0..g.n).filter(|&v| colors[v] == target) {
        let mut next: Vec<usize> = colors.iter().map(|&c| if c > target { c + 1 } else { c }).collect();
        for u in 0..g.n {
            if colors[u] == target && u != v {
                next[u] = target + 1;
            }
        }
        refine(g, &mut next);
        search(g, next, best);
    }
}

/// Initial colouring by triangles through each vertex and the size of its
/// distance-2 shell; colour refinement alone cannot split a regular graph.
fn invariant_colors(g: &Small) -> Vec<usize> {
    let sig: Vec<(u32, u32)> = (0..g.n)
        .map(|u| {
            let nb = g.rows[u];
            let mut tri = 0;
            let mut reach = 0u16;
            for v in (0..g.n).filter(|&v| nb >> v & 1 == 1) {
                tri += (g.rows[v] & nb).count_ones();
                reach |= g.rows[v];
            }
            (tri / 2, (reach & !nb & !(1 << u)).count_ones())
        })
        .collect();
    let mut distinct = sig.clone();
    distinct.sort();
    distinct.dedup();
    sig.iter().map(|s| distinct.binary_search(s).unwrap()).collect()
}

/// Exact canonical code: equal iff the graphs are isomorphic.
pub fn canonical(g: &Small) -> u128 {
    let mut colors = invariant_colors(g);
    refine(g, &mut colors);
    let mut best = None;
    search(g, colors, &mut best);
    best.unwrap()
}

fn seed(n: usize, k: usize) -> Small {
    // Circulant with offsets 1..k/2, plus the antipodal matching for odd k.
    let mut rows = vec![0u16; n];
    let mut link = |u: usize, v: usize| {
        rows[u] |= 1 << v;
        rows[v] |= 1 << u;
    };
    for u in 0..n {
        for d in 1..=k / 2 {
            link(u, (u + d) % n);
        }
        if k % 2 == 1 {
            link(u, (u + n / 2) % n);
        }
    }
    Small { n, rows }
}

fn swap_neighbours(g: &Small) -> Vec<Small> {
    let edges = g.edges();
    let mut seen: HashSet<Vec<u16>> = HashSet::new();
    let mut out = Vec::new();
    for (x, &(a, b)) in edges.iter().enumerate() {
        for &(c, d) in &edges[x + 1..] {
            for (p, q) in [(c, d), (d, c)] {
                // (a,b),(p,q) -> (a,p),(b,q)
                if a == p || b == q || g.rows[a] >> p & 1 == 1 || g.rows[b] >> q & 1 == 1 {
                    continue;
                }
                let mut rows = g.rows.clone();
                rows[a] ^= 1 << b | 1 << p;
                rows[b] ^= 1 << a | 1 << q;
                rows[p] ^= 1 << q | 1 << a;
                rows[q] ^= 1 << p | 1 << b;
                let h = Small { n: g.n, rows };
                if h.connected() && seen.insert(h.rows.clone()) {
                    out.push(h);
                }
            }
        }
    }
    out
}

/// One representative per isomorphism class of connected k-regular graphs
/// on `n` vertices.
pub fn connected_regular(n: usize, k: usize) -> Vec<Small> {
    assert!(n <= 16 && k < n && (n * k).is_multiple_of(2));
    let start = seed(n, k);
    assert!(start.connected());
    let mut classes: HashMap<u128, Small> = HashMap::new();
    classes.insert(canonical(&start), start.clone());
    let mut frontier = vec![start];
    while !frontier.is_empty() {
        let found: Vec<(u128, Small)> = frontier
            .par_iter()
            .flat_map_iter(|g| swap_neighbours(g).into_iter().map(|h| (canonical(&h), h)))
            .collect();
        frontier.clear();
        for (key, h) in found {
            if let Entry::Vacant(e) = classes.entry(key) {
                e.insert(h.clone());
                frontier.push(h);
            }
        }
    }
    classes.into_values().collect()
}

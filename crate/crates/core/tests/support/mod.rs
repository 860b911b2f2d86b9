//! Independent oracles shared by the integration suites. Nothing here calls
//! into the code paths it is used to check.

#![allow(dead_code, clippy::needless_range_loop)]

pub mod census;

use topoprune::{RegularGraph, Topology};

pub const UNREACHABLE: usize = usize::MAX / 4;

/// All-pairs distances by Floyd-Warshall on the adjacency matrix.
pub fn floyd_warshall<G: Topology>(g: &G) -> Vec<Vec<usize>> {
    let n = g.order();
    let mut d = vec![vec![UNREACHABLE; n]; n];
    for u in 0..n {
        d[u][u] = 0;
        for &v in g.neighbors(u) {
            if v != u {
                d[u][v] = 1;
            }
        }
    }
    for m in 0..n {
        for u in 0..n {
            for v in 0..n {
                let via = d[u][m] + d[m][v];
                if via < d[u][v] {
                    d[u][v] = via;
                }
            }
        }
    }
    d
}

/// Mean over ordered pairs, as (total, pairs); `None` if disconnected.
pub fn oracle_aspl<G: Topology>(g: &G) -> Option<(u64, u64)> {
    let d = floyd_warshall(g);
    let n = d.len();
    let mut total = 0u64;
    for u in 0..n {
        for v in 0..n {
            if u != v {
                if d[u][v] >= UNREACHABLE {
                    return None;
                }
                total += d[u][v] as u64;
            }
        }
    }
    Some((total, (n * (n - 1)) as u64))
}

fn bool_matmul(a: &[Vec<bool>], b: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).any(|m| a[i][m] && b[m][j])).collect())
        .collect()
}

/// GR of every node from boolean adjacency-matrix powers: the first `R` with
/// row `a` of `A^R` all true. `None` when no power up to `2n` covers the row.
pub fn oracle_gr<G: Topology>(g: &G) -> Vec<Option<usize>> {
    let n = g.order();
    let adj: Vec<Vec<bool>> = (0..n).map(|u| (0..n).map(|v| g.neighbors(u).contains(&v)).collect()).collect();
    let mut power = adj.clone();
    let mut gr = vec![None; n];
    for r in 1..=2 * n {
        for a in 0..n {
            if gr[a].is_none() && power[a].iter().all(|&x| x) {
                gr[a] = Some(r);
            }
        }
        power = bool_matmul(&power, &adj);
    }
    gr
}

/// Parameter-usage count of output group `j` by explicit path support: a
/// weight block (dst <- src) in transition `t` (0 = first) is used iff `src`
/// feeds `dst` and `dst` reaches `j` through the remaining transitions.
pub fn oracle_usage<G: Topology>(g: &G, layers: usize, s: usize, j: usize) -> u64 {
    let n = g.order();
    let d = exact_walks(g, layers);
    let mut total = 0u64;
    for t in 0..layers - 1 {
        let remaining = layers - 2 - t;
        for dst in 0..n {
            if d[remaining][dst][j] {
                total += (g.neighbors(dst).len() * s * s) as u64;
            }
        }
    }
    total
}

/// `walk[r][u][v]`: a walk of exactly `r` edges joins `u` and `v`.
fn exact_walks<G: Topology>(g: &G, layers: usize) -> Vec<Vec<Vec<bool>>> {
    let n = g.order();
    let adj: Vec<Vec<bool>> = (0..n).map(|u| (0..n).map(|v| g.neighbors(u).contains(&v)).collect()).collect();
    let mut walks = vec![(0..n).map(|u| (0..n).map(|v| u == v).collect()).collect::<Vec<Vec<bool>>>()];
    for _ in 1..layers {
        let next = bool_matmul(walks.last().unwrap(), &adj);
        walks.push(next);
    }
    walks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(xs: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
        let mut r = vec![0.0; xs.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub fn is_simple_regular(g: &RegularGraph) -> bool {
    let n = g.n();
    (0..n).all(|u| {
        let nb = g.neighbors(u);
        nb.len() == g.k() && !nb.contains(&u) && nb.windows(2).all(|w| w[0] < w[1])
    })
}

pub fn cycle(n: usize) -> RegularGraph {
    RegularGraph::new(n, 2, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
}

pub fn complete(n: usize) -> RegularGraph {
    RegularGraph::new(n, n - 1, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)))).unwrap()
}

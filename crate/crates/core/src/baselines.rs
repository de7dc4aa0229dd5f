//! Exact solvers and the nearest-neighbour heuristic.

use thiserror::Error;

use crate::instances::{distance_matrix, CityInstance};
use crate::tour::{Tour, TourError};

pub const BRUTE_FORCE_MAX: usize = 12;
pub const HELD_KARP_MAX: usize = 22;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("brute force enumerates (n-1)!/2 tours and stops at {BRUTE_FORCE_MAX} cities (got {0}); use Held-Karp")]
    BruteForceTooLarge(usize),
    #[error("Held-Karp is limited to {HELD_KARP_MAX} cities (got {0})")]
    HeldKarpTooLarge(usize),
    #[error("start city {start} out of range for {n} cities")]
    InvalidStart { start: usize, n: usize },
    #[error(transparent)]
    Tour(#[from] TourError),
}

/// Optimal tour by enumerating every cyclic order once: city 0 is fixed
/// first and each order is kept in one orientation only.
pub fn exact_brute_force(inst: &CityInstance) -> Result<Tour, BaselineError> {
    let n = inst.len();
    if n > BRUTE_FORCE_MAX {
        return Err(BaselineError::BruteForceTooLarge(n));
    }
    let d = distance_matrix(inst);
    let mut path = Vec::with_capacity(n);
    path.push(0);
    let mut used = vec![false; n];
    used[0] = true;
    let mut best = (f64::INFINITY, Vec::new());

    fn search(
        d: &crate::instances::DistanceMatrix,
        path: &mut Vec<usize>,
        used: &mut [bool],
        len: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        let n = used.len();
        let last = *path.last().unwrap();
        if path.len() == n {
            // each cycle appears twice; keep the orientation with path[1] < path[n-1]
            if path[1] < path[n - 1] {
                let total = len + d.get(last, 0);
                if total < best.0 {
                    best.0 = total;
                    best.1.clone_from(path);
                }
            }
            return;
        }
        for next in 1..n {
            if !used[next] {
                used[next] = true;
                path.push(next);
                search(d, path, used, len + d.get(last, next), best);
                path.pop();
                used[next] = false;
            }
        }
    }

    search(&d, &mut path, &mut used, 0.0, &mut best);
    Ok(Tour::new(inst, best.1)?)
}

/// Optimal tour by dynamic programming over subsets of cities `1..n`.
pub fn exact_held_karp(inst: &CityInstance) -> Result<Tour, BaselineError> {
    let n = inst.len();
    if n > HELD_KARP_MAX {
        return Err(BaselineError::HeldKarpTooLarge(n));
    }
    let d = distance_matrix(inst);
    // cities 1..n map to bits 0..m
    let m = n - 1;
    let full = 1usize << m;
    let mut cost = vec![f64::INFINITY; full * m];
    let mut parent = vec![u8::MAX; full * m];
    for j in 0..m {
        cost[(1 << j) * m + j] = d.get(0, j + 1);
    }
    for set in 1..full {
        if set.count_ones() < 2 {
            continue;
        }
        let mut bits = set;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let prev_set = set & !(1 << j);
            let mut best = f64::INFINITY;
            let mut arg = u8::MAX;
            let mut rest = prev_set;
            while rest != 0 {
                let k = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let c = cost[prev_set * m + k] + d.get(k + 1, j + 1);
                if c < best {
                    best = c;
                    arg = k as u8;
                }
            }
            cost[set * m + j] = best;
            parent[set * m + j] = arg;
        }
    }
    let last_set = full - 1;
    let (mut end, mut best) = (0, f64::INFINITY);
    for j in 0..m {
        let c = cost[last_set * m + j] + d.get(j + 1, 0);
        if c < best {
            best = c;
            end = j;
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut set = last_set;
    let mut j = end;
    loop {
        order.push(j + 1);
        let p = parent[set * m + j];
        set &= !(1 << j);
        if p == u8::MAX {
            break;
        }
        j = p as usize;
    }
    order.push(0);
    order.reverse();
    Ok(Tour::new(inst, order)?)
}

/// Greedy tour from `start`; equal distances go to the lower index.
pub fn nearest_neighbor(inst: &CityInstance, start: usize) -> Result<Tour, BaselineError> {
    let n = inst.len();
    if start >= n {
        return Err(BaselineError::InvalidStart { start, n });
    }
    let d = distance_matrix(inst);
    Ok(Tour::new(inst, greedy_order(&d, start))?)
}

fn greedy_order(d: &crate::instances::DistanceMatrix, start: usize) -> Vec<usize> {
    let n = d.n();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut current = start;
    visited[current] = true;
    order.push(current);
    for _ in 1..n {
        let row = d.row(current);
        let mut next = usize::MAX;
        let mut best = f64::INFINITY;
        for (j, &dist) in row.iter().enumerate() {
            if !visited[j] && dist < best {
                best = dist;
                next = j;
            }
        }
        visited[next] = true;
        order.push(next);
        current = next;
    }
    order
}

/// Nearest-neighbour tours from every start city, indexed by start.
pub fn nearest_neighbor_all(inst: &CityInstance) -> Vec<Tour> {
    let d = distance_matrix(inst);
    (0..inst.len())
        .map(|s| Tour::new(inst, greedy_order(&d, s)).expect("greedy order is a permutation"))
        .collect()
}

/// Cheapest nearest-neighbour tour over all start cities; the lowest start
/// wins ties.
pub fn nearest_neighbor_best(inst: &CityInstance) -> Tour {
    nearest_neighbor_all(inst)
        .into_iter()
        .reduce(|best, t| if t.cost() < best.cost() { t } else { best })
        .expect("instances have at least 3 cities")
}

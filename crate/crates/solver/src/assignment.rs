//! Assignment of items to a few bins with exact bin counts.
//!
//! Maximises `sum_i gain[i][bin_i]` subject to bin `c` receiving exactly
//! `capacity[c]` items. This is a transportation problem whose constraint
//! matrix is totally unimodular, so an integral plan is optimal. Items are
//! inserted one at a time along a longest augmenting path; with `k` bins the
//! path lives on a `k`-node exchange graph whose edges are the best single
//! moves between bins, kept in lazy heaps. Total cost `O(n k^2 log n)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, PartialEq)]
pub struct BinAssignment {
    pub bin: Vec<usize>,
    pub value: f64,
    /// Bin prices: every item's bin maximises `gain[i][c] - price[c]`.
    pub price: Vec<f64>,
}

/// Heap entry ordered by gain, ties broken towards the lower index.
#[derive(Debug, Clone, Copy)]
struct Move {
    gain: f64,
    item: usize,
}

impl PartialEq for Move {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Move {}
impl PartialOrd for Move {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Move {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain.total_cmp(&other.gain).then_with(|| other.item.cmp(&self.item))
    }
}

struct State<'a> {
    gains: &'a [Vec<f64>],
    k: usize,
    bin: Vec<usize>,
    /// `moves[c * k + d]`: items in `c` that could move to `d`.
    moves: Vec<BinaryHeap<Move>>,
}

impl State<'_> {
    fn place(&mut self, item: usize, c: usize) {
        self.bin[item] = c;
        let row = &self.gains[item];
        for d in 0..self.k {
            if d != c && row[d].is_finite() {
                self.moves[c * self.k + d].push(Move {
                    gain: row[d] - row[c],
                    item,
                });
            }
        }
    }

    /// Best single move from `c` to `d`, discarding stale entries.
    fn best_move(&mut self, c: usize, d: usize) -> Option<Move> {
        let heap = &mut self.moves[c * self.k + d];
        while let Some(top) = heap.peek() {
            if self.bin[top.item] == c {
                return Some(*top);
            }
            heap.pop();
        }
        None
    }

    fn exchange_matrix(&mut self) -> Vec<Option<Move>> {
        let k = self.k;
        let mut ex = vec![None; k * k];
        for c in 0..k {
            for d in 0..k {
                if c != d {
                    ex[c * k + d] = self.best_move(c, d);
                }
            }
        }
        ex
    }
}

/// Solves the assignment; `gains[i][c] = -inf` forbids bin `c` for item `i`.
/// Returns `None` when the capacities do not sum to the item count or no
/// feasible assignment exists.
pub fn assign_to_bins(gains: &[Vec<f64>], capacity: &[usize]) -> Option<BinAssignment> {
    let n = gains.len();
    let k = capacity.len();
    if capacity.iter().sum::<usize>() != n || gains.iter().any(|r| r.len() != k || r.iter().any(|g| g.is_nan())) {
        return None;
    }
    let mut st = State {
        gains,
        k,
        bin: vec![usize::MAX; n],
        moves: (0..k * k).map(|_| BinaryHeap::new()).collect(),
    };
    let mut load = vec![0usize; k];

    for i in 0..n {
        let ex = st.exchange_matrix();
        // Longest simple paths from item i; k is tiny so paths are explicit.
        let mut dist: Vec<f64> = gains[i].clone();
        let mut path: Vec<Vec<usize>> = (0..k).map(|c| vec![c]).collect();
        for _ in 1..k {
            let mut changed = false;
            for c in 0..k {
                if !dist[c].is_finite() {
                    continue;
                }
                for d in 0..k {
                    let Some(m) = ex[c * k + d] else { continue };
                    let cand = dist[c] + m.gain;
                    if cand > dist[d] && !path[c].contains(&d) {
                        dist[d] = cand;
                        let mut p = path[c].clone();
                        p.push(d);
                        path[d] = p;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let end = (0..k)
            .filter(|&d| load[d] < capacity[d] && dist[d].is_finite())
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))?;
        let route = &path[end];
        // Pick every mover before moving anyone.
        let movers: Vec<usize> = route.windows(2).map(|w| ex[w[0] * k + w[1]].expect("edge on path").item).collect();
        st.place(i, route[0]);
        for (m, w) in movers.into_iter().zip(route.windows(2)) {
            st.place(m, w[1]);
        }
        load[end] += 1;
    }

    let ex = st.exchange_matrix();
    let mut price = vec![0.0; k];
    for _ in 0..k {
        for c in 0..k {
            for d in 0..k {
                if let Some(m) = ex[c * k + d] {
                    price[d] = f64::max(price[d], price[c] + m.gain);
                }
            }
        }
    }
    let value = st.bin.iter().enumerate().map(|(i, &c)| gains[i][c]).sum();
    Some(BinAssignment {
        bin: st.bin,
        value,
        price,
    })
}

//! Selects, for each input position, the access at which it was consumed.

use std::rc::Rc;

use crate::symexec::{Context, Trace};

/// Indices of a longest non-decreasing subsequence of `seq`.
///
/// Patience sorting with upper-bound placement; the subsequence is recovered
/// backwards from the last pile.
pub fn longest_increasing_subsequence(seq: &[u32]) -> Vec<usize> {
    // tails[k]: index of the smallest tail of a subsequence of length k + 1
    let mut tails: Vec<usize> = Vec::new();
    let mut prev: Vec<Option<usize>> = vec![None; seq.len()];
    for (i, &x) in seq.iter().enumerate() {
        let k = tails.partition_point(|&t| seq[t] <= x);
        prev[i] = if k > 0 { Some(tails[k - 1]) } else { None };
        if k == tails.len() {
            tails.push(i);
        } else {
            tails[k] = i;
        }
    }
    let mut out = Vec::with_capacity(tails.len());
    let mut cur = tails.last().copied();
    while let Some(i) = cur {
        out.push(i);
        cur = prev[i];
    }
    out.reverse();
    out
}

/// Values of [`longest_increasing_subsequence`].
pub fn lis_values(seq: &[u32]) -> Vec<u32> {
    longest_increasing_subsequence(seq)
        .into_iter()
        .map(|i| seq[i])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsumptionAssignment {
    /// Selected access order per position; non-decreasing.
    pub orders: Vec<u32>,
    /// Context recorded with each selected access.
    pub contexts: Vec<Rc<Context>>,
    /// Backtracking steps taken.
    pub backtracks: usize,
    /// Positions that inherited their predecessor's accesses.
    pub fallbacks: usize,
}

/// Backtracks from last accesses until the selected orders are non-decreasing.
pub fn identify_input_consumptions(trace: &Trace) -> ConsumptionAssignment {
    let lists: Vec<Vec<(u32, Rc<Context>)>> = trace
        .positions
        .iter()
        .map(|p| {
            p.access_orders
                .iter()
                .copied()
                .zip(p.contexts.iter().cloned())
                .collect()
        })
        .collect();
    let root = trace
        .positions
        .first()
        .and_then(|p| p.contexts.first().cloned());
    resolve(lists, root)
}

fn resolve(
    mut lists: Vec<Vec<(u32, Rc<Context>)>>,
    root: Option<Rc<Context>>,
) -> ConsumptionAssignment {
    let n = lists.len();
    let total: usize = lists.iter().map(Vec::len).sum();
    let mut backtracks = 0;
    let mut fallbacks = 0;
    // Every round pops one access or refills an empty list from its
    // predecessor; the cap only guards against a pathological cycle.
    let cap = (total + n + 1) * (n + 1) * 4;
    loop {
        for i in 0..n {
            if lists[i].is_empty() {
                fallbacks += 1;
                lists[i] = if i == 0 {
                    let ctx = root.clone().expect("position 0 has an access");
                    vec![(0, ctx)]
                } else {
                    lists[i - 1].clone()
                };
            }
        }
        let orders: Vec<u32> = lists.iter().map(|l| l.last().expect("non-empty").0).collect();
        let lis = longest_increasing_subsequence(&orders);
        if lis.len() == n || backtracks >= cap {
            let mut orders = orders;
            let mut contexts: Vec<Rc<Context>> =
                lists.iter().map(|l| l.last().expect("non-empty").1.clone()).collect();
            if lis.len() != n {
                // Not expected to happen; clamp into a non-decreasing sequence.
                for i in 1..n {
                    if orders[i] < orders[i - 1] {
                        orders[i] = orders[i - 1];
                        contexts[i] = contexts[i - 1].clone();
                    }
                }
            }
            return ConsumptionAssignment {
                orders,
                contexts,
                backtracks,
                fallbacks,
            };
        }
        let outlier = (0..n)
            .find(|i| lis.binary_search(i).is_err())
            .expect("an index outside the subsequence");
        lists[outlier].pop();
        backtracks += 1;
    }
}

/// Assignment by last access only, for comparison.
pub fn last_access_assignment(trace: &Trace) -> ConsumptionAssignment {
    ConsumptionAssignment {
        orders: trace
            .positions
            .iter()
            .map(|p| *p.access_orders.last().expect("accessed"))
            .collect(),
        contexts: trace
            .positions
            .iter()
            .map(|p| p.contexts.last().expect("accessed").clone())
            .collect(),
        backtracks: 0,
        fallbacks: 0,
    }
}

/// Runs the selection on bare access-order lists, with dummy contexts.
pub fn consume_orders(lists: &[Vec<u32>]) -> Vec<u32> {
    let ctx = Rc::new(Context::parse("main#0").expect("valid context"));
    let lists = lists
        .iter()
        .map(|l| l.iter().map(|o| (*o, ctx.clone())).collect())
        .collect();
    resolve(lists, Some(ctx)).orders
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lis_examples() {
        assert_eq!(lis_values(&[5, 26, 21, 28]), vec![5, 21, 28]);
        assert_eq!(lis_values(&[1, 2, 3]), vec![1, 2, 3]);
        assert_eq!(lis_values(&[5, 15, 15, 28]), vec![5, 15, 15, 28]);
        assert!(lis_values(&[]).is_empty());
    }

    #[test]
    fn calc_walkthrough() {
        let lists = vec![
            vec![0, 1, 2, 3, 4, 5],
            (6..=15).chain([26]).collect(),
            vec![16, 17, 18, 19, 20, 21],
            vec![22, 23, 24, 25, 27, 28],
        ];
        assert_eq!(consume_orders(&lists), vec![5, 15, 21, 28]);
    }

    #[test]
    fn identity_when_increasing() {
        let lists = vec![vec![0], vec![1], vec![2]];
        assert_eq!(consume_orders(&lists), vec![0, 1, 2]);
    }

    #[test]
    fn fallback_on_exhausted_position() {
        // The subsequence keeps [3, 9]; position 0 runs dry and restarts at 0.
        assert_eq!(consume_orders(&[vec![7], vec![3], vec![9]]), vec![0, 3, 9]);
        // A later position that runs dry inherits its predecessor.
        assert_eq!(consume_orders(&[vec![1], vec![8], vec![4]]), vec![1, 1, 4]);
    }
}

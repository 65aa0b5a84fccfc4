//! Frequent sequential patterns by projected-database growth.

use std::collections::BTreeMap;

/// A sequential pattern and the number of database sequences containing it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern<T> {
    pub support: usize,
    pub tokens: Vec<T>,
}

impl<T> Pattern<T> {
    pub fn new(support: usize, tokens: Vec<T>) -> Self {
        Pattern { support, tokens }
    }
}

/// Whether `pattern` occurs in `seq` as an order-preserving subsequence.
pub fn is_subsequence<T: PartialEq>(pattern: &[T], seq: &[T]) -> bool {
    let mut it = seq.iter();
    pattern.iter().all(|p| it.any(|s| s == p))
}

/// Per-item support in the suffixes of a pseudo-projected database, where
/// each entry is `(sequence index, start offset)`.
pub(crate) fn local_supports<'a, T: Ord + Clone>(
    db: &'a [Vec<T>],
    projected: &[(usize, usize)],
) -> BTreeMap<&'a T, usize> {
    // (support, index of the last projected entry counted)
    let mut counts: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    for (k, &(sid, start)) in projected.iter().enumerate() {
        for item in &db[sid][start..] {
            let e = counts.entry(item).or_insert((0, usize::MAX));
            if e.1 != k {
                *e = (e.0 + 1, k);
            }
        }
    }
    counts.into_iter().map(|(item, (c, _))| (item, c)).collect()
}

pub(crate) fn project<T: PartialEq>(db: &[Vec<T>], projected: &[(usize, usize)], item: &T) -> Vec<(usize, usize)> {
    projected
        .iter()
        .filter_map(|&(sid, start)| {
            db[sid][start..].iter().position(|x| x == item).map(|off| (sid, start + off + 1))
        })
        .collect()
}

/// Every pattern with support ≥ `eta`, in depth-first lexicographic order.
pub fn prefixspan<T: Ord + Clone>(db: &[Vec<T>], eta: usize) -> Vec<Pattern<T>> {
    let eta = eta.max(1);
    let mut out = Vec::new();
    let root: Vec<(usize, usize)> = (0..db.len()).map(|i| (i, 0)).collect();
    let mut prefix = Vec::new();
    grow(db, eta, &root, &mut prefix, &mut out);
    out
}

fn grow<T: Ord + Clone>(
    db: &[Vec<T>],
    eta: usize,
    projected: &[(usize, usize)],
    prefix: &mut Vec<T>,
    out: &mut Vec<Pattern<T>>,
) {
    let frequent: Vec<T> = local_supports(db, projected)
        .into_iter()
        .filter(|&(_, c)| c >= eta)
        .map(|(item, _)| item.clone())
        .collect();
    for item in frequent {
        let next = project(db, projected, &item);
        prefix.push(item);
        out.push(Pattern::new(next.len(), prefix.clone()));
        grow(db, eta, &next, prefix, out);
        prefix.pop();
    }
}

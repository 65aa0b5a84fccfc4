//! Closed sequential pattern mining with bidirectional extension checks and
//! BackScan pruning. Equivalent to filtering the full [`prefixspan`] output
//! for closedness, without enumerating the non-closed search space.
//!
//! For a prefix `e1…en` and a supporting sequence `S`:
//! * the *first instance* takes the leftmost match of each item in turn;
//! * the *last-in-last* position `LL_n` is the last `en` in `S`, and `LL_i` the
//!   last `ei` before `LL_{i+1}`;
//! * the *last-in-first* position `LF_n` is the first-instance position of
//!   `en`, and `LF_i` the last `ei` before `LF_{i+1}`.
//!
//! The i-th maximum period spans from just after the first-instance position
//! of `e_{i-1}` (or the start of `S`) up to `LL_i`; the semi-maximum period is
//! the same with `LF_i`. An item present in the i-th maximum period of every
//! supporting sequence can be inserted without losing support, so the prefix
//! is not closed. An item present in every i-th semi-maximum period does the
//! same for every extension of the prefix, so the whole subtree is skipped.
//!
//! [`prefixspan`]: super::prefixspan::prefixspan

use super::prefixspan::Pattern;

pub fn closed_patterns<T: Ord + Clone>(db: &[Vec<T>], eta: usize) -> Vec<Pattern<T>> {
    // intern tokens; ids follow token order, so id order is token order
    let mut alphabet: Vec<T> = db.iter().flatten().cloned().collect();
    alphabet.sort();
    alphabet.dedup();
    let ids: Vec<Vec<u32>> = db
        .iter()
        .map(|s| s.iter().map(|t| alphabet.binary_search(t).expect("interned") as u32).collect())
        .collect();
    let mut miner = Miner::new(&ids, eta.max(1), alphabet.len());
    miner.run();
    miner
        .out
        .into_iter()
        .map(|(support, toks)| Pattern::new(support, toks.iter().map(|&i| alphabet[i as usize].clone()).collect()))
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Period {
    Maximum,
    SemiMaximum,
}

/// Projected entry: sequence index and the offset just past the first
/// instance of the current prefix.
type Entry = (u32, u32);

struct Miner<'a> {
    db: &'a [Vec<u32>],
    eta: usize,
    // local support counting
    counts: Vec<usize>,
    last_seen: Vec<u64>,
    // period intersection marks
    marks: Vec<u64>,
    epoch: u64,
    prefix: Vec<u32>,
    out: Vec<(usize, Vec<u32>)>,
}

impl<'a> Miner<'a> {
    fn new(db: &'a [Vec<u32>], eta: usize, alphabet: usize) -> Self {
        Miner {
            db,
            eta,
            counts: vec![0; alphabet],
            last_seen: vec![0; alphabet],
            marks: vec![0; alphabet],
            epoch: 0,
            prefix: Vec::new(),
            out: Vec::new(),
        }
    }

    fn run(&mut self) {
        let root: Vec<Entry> = (0..self.db.len() as u32).map(|i| (i, 0)).collect();
        for (item, c) in self.local_supports(&root) {
            if c >= self.eta {
                let next = self.project(&root, item);
                self.prefix.push(item);
                self.grow(&next);
                self.prefix.pop();
            }
        }
    }

    fn grow(&mut self, projected: &[Entry]) {
        let support = projected.len();
        if self.has_common_period_item(projected, Period::SemiMaximum) {
            return;
        }
        let locals = self.local_supports(projected);
        let forward_closed = locals.iter().all(|&(_, c)| c < support);
        if forward_closed && !self.has_common_period_item(projected, Period::Maximum) {
            self.out.push((support, self.prefix.clone()));
        }
        for (item, c) in locals {
            if c >= self.eta {
                let next = self.project(projected, item);
                self.prefix.push(item);
                self.grow(&next);
                self.prefix.pop();
            }
        }
    }

    /// Items of the projected suffixes with the number of entries containing
    /// them, in item order.
    fn local_supports(&mut self, projected: &[Entry]) -> Vec<(u32, usize)> {
        let mut touched = Vec::new();
        for &(sid, start) in projected {
            self.epoch += 1;
            for &item in &self.db[sid as usize][start as usize..] {
                let i = item as usize;
                if self.last_seen[i] != self.epoch {
                    self.last_seen[i] = self.epoch;
                    if self.counts[i] == 0 {
                        touched.push(item);
                    }
                    self.counts[i] += 1;
                }
            }
        }
        touched.sort_unstable();
        touched
            .into_iter()
            .map(|item| (item, std::mem::take(&mut self.counts[item as usize])))
            .collect()
    }

    fn project(&self, projected: &[Entry], item: u32) -> Vec<Entry> {
        projected
            .iter()
            .filter_map(|&(sid, start)| {
                let seq = &self.db[sid as usize];
                seq[start as usize..].iter().position(|&x| x == item).map(|off| (sid, start + off as u32 + 1))
            })
            .collect()
    }

    fn has_common_period_item(&mut self, projected: &[Entry], kind: Period) -> bool {
        let n = self.prefix.len();
        // candidates[i]: items seen in the i-th period of every sequence so far
        let mut candidates: Vec<Option<Vec<u32>>> = vec![None; n];
        let mut first = vec![0usize; n];
        let mut anchors = vec![0usize; n];
        for &(sid, _) in projected {
            let seq = &self.db[sid as usize];
            first_instance(&self.prefix, seq, &mut first);
            back_anchors(&self.prefix, seq, &first, kind, &mut anchors);
            let mut any_alive = false;
            for i in 0..n {
                let start = if i == 0 { 0 } else { first[i - 1] + 1 };
                let period = &seq[start..anchors[i]];
                match &mut candidates[i] {
                    None => {
                        let mut c = period.to_vec();
                        c.sort_unstable();
                        c.dedup();
                        any_alive |= !c.is_empty();
                        candidates[i] = Some(c);
                    }
                    Some(c) if c.is_empty() => {}
                    Some(c) => {
                        self.epoch += 1;
                        for &x in period {
                            self.marks[x as usize] = self.epoch;
                        }
                        let epoch = self.epoch;
                        let marks = &self.marks;
                        c.retain(|&x| marks[x as usize] == epoch);
                        any_alive |= !c.is_empty();
                    }
                }
            }
            if !any_alive {
                return false;
            }
        }
        candidates.iter().any(|c| c.as_ref().is_some_and(|s| !s.is_empty()))
    }
}

/// Leftmost embedding positions of `prefix` in `seq`.
fn first_instance(prefix: &[u32], seq: &[u32], pos: &mut [usize]) {
    let mut from = 0;
    for (k, item) in prefix.iter().enumerate() {
        let off = seq[from..].iter().position(|x| x == item).expect("sequence supports prefix");
        pos[k] = from + off;
        from += off + 1;
    }
}

/// Backward anchors `LL` or `LF`, depending on the period kind.
fn back_anchors(prefix: &[u32], seq: &[u32], first: &[usize], kind: Period, anchors: &mut [usize]) {
    let n = prefix.len();
    let mut limit = match kind {
        Period::Maximum => seq.iter().rposition(|x| *x == prefix[n - 1]).expect("last item present"),
        Period::SemiMaximum => first[n - 1],
    };
    anchors[n - 1] = limit;
    for i in (0..n - 1).rev() {
        limit = seq[..limit].iter().rposition(|x| *x == prefix[i]).expect("embedding exists");
        anchors[i] = limit;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mining::prefixspan::prefixspan;

    fn closed_by_filter<T: Ord + Clone>(db: &[Vec<T>], eta: usize) -> Vec<Pattern<T>> {
        let all = prefixspan(db, eta);
        all.iter()
            .filter(|p| {
                !all.iter().any(|q| {
                    q.support == p.support
                        && q.tokens.len() > p.tokens.len()
                        && crate::mining::prefixspan::is_subsequence(&p.tokens, &q.tokens)
                })
            })
            .cloned()
            .collect()
    }

    #[test]
    fn single_sequence_is_its_only_closed_pattern() {
        let db = vec![vec![1, 2, 3, 4, 5]];
        assert_eq!(closed_patterns(&db, 1), vec![Pattern::new(1, vec![1, 2, 3, 4, 5])]);
    }

    #[test]
    fn repeated_items() {
        let db = vec![vec![1, 2, 1, 2], vec![2, 1, 2]];
        let mut got = closed_patterns(&db, 1);
        let mut want = closed_by_filter(&db, 1);
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn agrees_with_filtered_prefixspan_on_random_dbs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..300 {
            let n = rng.random_range(1..=7);
            let db: Vec<Vec<u8>> = (0..n)
                .map(|_| (0..rng.random_range(1..=7)).map(|_| rng.random_range(0..5)).collect())
                .collect();
            let eta = rng.random_range(1..=3);
            let mut got = closed_patterns(&db, eta);
            let mut want = closed_by_filter(&db, eta);
            got.sort();
            want.sort();
            assert_eq!(got, want, "db {db:?} eta {eta}");
        }
    }
}

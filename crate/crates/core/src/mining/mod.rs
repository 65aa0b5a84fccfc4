//! Frequent-pattern model of normal movement: closed sequential patterns over
//! historical token sequences, with patterns that are a strict prefix of
//! another kept pattern removed.

pub mod closed;
pub mod prefixspan;

use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geohash::CellToken;

pub use closed::closed_patterns;
pub use prefixspan::{is_subsequence, prefixspan, Pattern};

/// Keep closed patterns (no super-sequence with equal support in the input),
/// then drop every pattern that is a strict prefix of another kept one.
pub fn close_and_prune<T: Ord + Clone>(patterns: &[Pattern<T>]) -> Vec<Pattern<T>> {
    let closed: Vec<Pattern<T>> = patterns
        .iter()
        .filter(|p| {
            !patterns.iter().any(|q| {
                q.support == p.support && q.tokens.len() > p.tokens.len() && is_subsequence(&p.tokens, &q.tokens)
            })
        })
        .cloned()
        .collect();
    prefix_prune(closed)
}

/// Remove patterns that are a strict prefix of another pattern; the result is
/// sorted by tokens.
pub fn prefix_prune<T: Ord + Clone>(mut patterns: Vec<Pattern<T>>) -> Vec<Pattern<T>> {
    patterns.sort_by(|a, b| a.tokens.cmp(&b.tokens).then(b.support.cmp(&a.support)));
    patterns.dedup_by(|a, b| a.tokens == b.tokens);
    // in token order a pattern's extensions follow it immediately
    let keep: Vec<bool> = (0..patterns.len())
        .map(|i| {
            patterns.get(i + 1).is_none_or(|next| {
                !(next.tokens.len() > patterns[i].tokens.len() && next.tokens.starts_with(&patterns[i].tokens))
            })
        })
        .collect();
    patterns.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect()
}

/// Closed, prefix-pruned patterns of `db` with support ≥ `eta`, in canonical
/// (lexicographic token) order.
pub fn mine_patterns<T: Ord + Clone>(db: &[Vec<T>], eta: usize) -> Vec<Pattern<T>> {
    prefix_prune(closed_patterns(db, eta))
}

/// Order-insensitive fingerprint of a sequence multiset.
pub fn fingerprint(db: &[Vec<CellToken>]) -> String {
    let mut lines: Vec<String> =
        db.iter().map(|s| s.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")).collect();
    lines.sort();
    let mut h = Sha256::new();
    for l in &lines {
        h.update(l.as_bytes());
        h.update(b"\n");
    }
    hex::encode(&h.finalize()[..16])
}

/// Immutable snapshot of mined patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    pub patterns: Vec<Pattern<CellToken>>,
    pub eta: usize,
    pub precision: u8,
    pub source_hash: String,
}

impl PatternSet {
    pub fn empty(eta: usize, precision: u8) -> Self {
        PatternSet { patterns: Vec::new(), eta, precision, source_hash: fingerprint(&[]) }
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# eta={} precision={} source_hash={}", self.eta, self.precision, self.source_hash)?;
        for p in &self.patterns {
            let toks: Vec<String> = p.tokens.iter().map(|t| t.to_string()).collect();
            writeln!(w, "{}\t{}", p.support, toks.join(" "))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.ok_or_else(|| Error::Parse { line: 1, msg: "missing header".into() })?;
        let bad_header = || Error::Parse { line: 1, msg: format!("bad header {header:?}") };
        let mut eta = None;
        let mut precision = None;
        let mut source_hash = None;
        for field in header.trim_start_matches('#').split_whitespace() {
            match field.split_once('=') {
                Some(("eta", v)) => eta = v.parse().ok(),
                Some(("precision", v)) => precision = v.parse().ok(),
                Some(("source_hash", v)) => source_hash = Some(v.to_string()),
                _ => return Err(bad_header()),
            }
        }
        let (eta, precision, source_hash) =
            (eta.ok_or_else(bad_header)?, precision.ok_or_else(bad_header)?, source_hash.ok_or_else(bad_header)?);
        let mut patterns = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse { line: i + 2, msg: msg.to_string() };
            let (sup, toks) = line.split_once('\t').ok_or_else(|| err("missing tab"))?;
            let support: usize = sup.parse().map_err(|_| err("bad support"))?;
            let tokens = toks
                .split_whitespace()
                .map(|t| t.parse::<CellToken>().map_err(|_| err("bad token")))
                .collect::<Result<Vec<_>>>()?;
            if tokens.is_empty() {
                return Err(err("empty pattern"));
            }
            patterns.push(Pattern::new(support, tokens));
        }
        Ok(PatternSet { patterns, eta, precision, source_hash })
    }
}

/// Mine a pattern set from a snapshot of historical sequences.
pub fn mine(history: &[Vec<CellToken>], eta: usize, precision: u8) -> PatternSet {
    PatternSet {
        patterns: mine_patterns(history, eta),
        eta,
        precision,
        source_hash: fingerprint(history),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_db() -> Vec<Vec<char>> {
        ["ABD", "ABCD", "ABCD", "ABEF", "ABEF", "ABEF", "AEF", "AGHI", "AGHI"]
            .iter()
            .map(|s| s.chars().collect())
            .collect()
    }

    fn pat(support: usize, s: &str) -> Pattern<char> {
        Pattern::new(support, s.chars().collect())
    }

    #[test]
    fn listed_patterns_are_in_prefixspan_output() {
        let all = prefixspan(&reference_db(), 2);
        for p in [pat(9, "A"), pat(6, "AB"), pat(3, "ABD"), pat(2, "ABCD"), pat(3, "ABEF"), pat(4, "AEF"), pat(2, "AGHI")]
        {
            assert!(all.contains(&p), "{p:?}");
        }
    }

    #[test]
    fn reference_db_close_and_prune() {
        let got = close_and_prune(&prefixspan(&reference_db(), 2));
        let want = vec![pat(3, "ABD"), pat(2, "ABCD"), pat(3, "ABEF"), pat(4, "AEF"), pat(2, "AGHI")];
        let mut want_sorted = want.clone();
        want_sorted.sort_by(|a, b| a.tokens.cmp(&b.tokens));
        assert_eq!(got, want_sorted);
        assert_eq!(mine_patterns(&reference_db(), 2), want_sorted);
    }

    #[test]
    fn close_and_prune_small_cases() {
        assert_eq!(close_and_prune(&[pat(2, "XY")]), vec![pat(2, "XY")]);
        assert_eq!(close_and_prune(&[pat(3, "A"), pat(3, "AB")]), vec![pat(3, "AB")]);
    }

    #[test]
    fn mine_edge_cases() {
        let one = vec![vec!['Q', 'R', 'S']];
        assert_eq!(mine_patterns(&one, 1), vec![pat(1, "QRS")]);
        assert!(mine_patterns(&reference_db(), 10).is_empty());
        assert!(mine_patterns::<char>(&[], 1).is_empty());
    }

    #[test]
    fn store_roundtrip() {
        let t = |c| CellToken::new(18, c).unwrap();
        let history = vec![vec![t(1), t(2), t(3)], vec![t(1), t(2)], vec![t(4)]];
        let set = mine(&history, 1, 18);
        let mut buf = Vec::new();
        set.write_to(&mut buf).unwrap();
        let back = PatternSet::read_from(&buf[..]).unwrap();
        assert_eq!(back, set);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn fingerprint_ignores_order() {
        let t = |c| CellToken::new(18, c).unwrap();
        let a = vec![vec![t(1), t(2)], vec![t(3)]];
        let b = vec![vec![t(3)], vec![t(1), t(2)]];
        assert_eq!(fingerprint(&a), fingerprint(&b));
        assert_ne!(fingerprint(&a), fingerprint(&a[..1]));
    }
}

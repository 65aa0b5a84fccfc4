//! Local alignment (Smith-Waterman with affine gaps) reporting the number of
//! matched positions on the best local alignment.
//!
//! Cells carry `(score, matches)` pairs compared lexicographically, so among
//! all maximal-score local alignments the one with the most matched positions
//! is reported. This makes the count independent of traceback order.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentParams {
    pub match_score: f64,
    pub mismatch_score: f64,
    /// Cost of the first position of a gap.
    pub gap_open: f64,
    /// Cost of each further position of the same gap.
    pub gap_extend: f64,
}

impl Default for AlignmentParams {
    fn default() -> Self {
        AlignmentParams { match_score: 1.0, mismatch_score: -1.0, gap_open: -1.0, gap_extend: -0.5 }
    }
}

impl AlignmentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.match_score > 0.0) {
            return Err(Error::Config(format!("match_score > 0 violated ({})", self.match_score)));
        }
        for (name, v) in [
            ("mismatch_score", self.mismatch_score),
            ("gap_open", self.gap_open),
            ("gap_extend", self.gap_extend),
        ] {
            if !(v <= 0.0) {
                return Err(Error::Config(format!("{name} <= 0 violated ({v})")));
            }
        }
        Ok(())
    }
}

const TIE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    score: f64,
    matches: u32,
}

impl Cell {
    const ZERO: Cell = Cell { score: 0.0, matches: 0 };
    const NONE: Cell = Cell { score: f64::NEG_INFINITY, matches: 0 };

    fn plus(self, score: f64, matches: u32) -> Cell {
        Cell { score: self.score + score, matches: self.matches + matches }
    }

    fn max(self, other: Cell) -> Cell {
        if other.score > self.score + TIE || ((other.score - self.score).abs() <= TIE && other.matches > self.matches) {
            other
        } else {
            self
        }
    }
}

/// Score and matched-position count of the best local alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub score: f64,
    pub matches: u32,
}

/// Best local alignment of `u` against `v`.
pub fn align<T: PartialEq>(u: &[T], v: &[T], params: &AlignmentParams) -> Alignment {
    let cols = v.len() + 1;
    // h: best ending at (i, j); e: ending with a gap consuming u; f: consuming v
    let mut h_prev = vec![Cell::ZERO; cols];
    let mut h_cur = vec![Cell::ZERO; cols];
    let mut e_prev = vec![Cell::NONE; cols];
    let mut e_cur = vec![Cell::NONE; cols];
    let mut best = Cell::ZERO;
    for ui in u {
        h_cur[0] = Cell::ZERO;
        e_cur[0] = Cell::NONE;
        let mut f = Cell::NONE;
        for j in 1..cols {
            let diag = if *ui == v[j - 1] {
                h_prev[j - 1].plus(params.match_score, 1)
            } else {
                h_prev[j - 1].plus(params.mismatch_score, 0)
            };
            let e = h_prev[j].plus(params.gap_open, 0).max(e_prev[j].plus(params.gap_extend, 0));
            f = h_cur[j - 1].plus(params.gap_open, 0).max(f.plus(params.gap_extend, 0));
            let h = Cell::ZERO.max(diag).max(e).max(f);
            e_cur[j] = e;
            h_cur[j] = h;
            best = best.max(h);
        }
        std::mem::swap(&mut h_prev, &mut h_cur);
        std::mem::swap(&mut e_prev, &mut e_cur);
    }
    Alignment { score: best.score, matches: best.matches }
}

/// Matched positions on the best local alignment of `u` and `v`.
pub fn smith_waterman<T: PartialEq>(u: &[T], v: &[T], params: &AlignmentParams) -> Result<usize> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::Empty("alignment of an empty sequence"));
    }
    Ok(align(u, v, params).matches as usize)
}


#[cfg(test)]
mod tests {
    use super::*;

    fn sw(u: &str, v: &str) -> usize {
        let u: Vec<char> = u.chars().collect();
        let v: Vec<char> = v.chars().collect();
        smith_waterman(&u, &v, &AlignmentParams::default()).unwrap()
    }

    #[test]
    fn identical_sequences_match_fully() {
        assert_eq!(sw("ABCDEFG", "ABCDEFG"), 7);
    }

    #[test]
    fn disjoint_alphabets() {
        assert_eq!(sw("ABC", "XYZ"), 0);
    }

    #[test]
    fn mismatch_is_bridged() {
        assert_eq!(sw("ABCD", "ABXD"), 3);
        let (u, v): (Vec<char>, Vec<char>) = ("ABCD".chars().collect(), "ABXD".chars().collect());
        assert_eq!(oracle::brute_force(&u, &v, &AlignmentParams::default()).1, 3);
    }

    #[test]
    fn gap_in_pattern_keeps_all_matches() {
        // a-a, skip X, b-b: score 1 - 1 + 1 = 1 ties a single match, but
        // covers two matched positions
        assert_eq!(sw("AXB", "AB"), 2);
    }

    #[test]
    fn empty_is_an_error() {
        let p = AlignmentParams::default();
        assert!(smith_waterman::<u8>(&[], &[1], &p).is_err());
        assert!(smith_waterman::<u8>(&[1], &[], &p).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(AlignmentParams::default().validate().is_ok());
        assert!(AlignmentParams { match_score: 0.0, ..Default::default() }.validate().is_err());
        assert!(AlignmentParams { gap_open: 0.5, ..Default::default() }.validate().is_err());
    }
}

//! Text metrics: corpus BLEU, ROUGE-L, exact-match METEOR and
//! physical-concept coverage.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Lowercases and splits on whitespace; each punctuation character becomes
/// its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if ch.is_ascii_punctuation() || (!ch.is_alphanumeric() && !ch.is_whitespace()) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.extend(ch.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

fn ngrams(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU with uniform weights over 1..=`max_n` grams and brevity penalty.
pub fn bleu(candidates: &[Vec<String>], references: &[Vec<String>], max_n: usize) -> f64 {
    assert_eq!(candidates.len(), references.len(), "one reference per candidate");
    assert!(max_n >= 1);
    let mut log_p = 0.0;
    for n in 1..=max_n {
        let (mut hit, mut total) = (0usize, 0usize);
        for (c, r) in candidates.iter().zip(references) {
            let rc = ngrams(r, n);
            for (g, k) in ngrams(c, n) {
                hit += k.min(rc.get(g).copied().unwrap_or(0));
                total += k;
            }
        }
        if hit == 0 {
            return 0.0;
        }
        log_p += (hit as f64 / total as f64).ln();
    }
    let c: usize = candidates.iter().map(Vec::len).sum();
    let r: usize = references.iter().map(Vec::len).sum();
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (log_p / max_n as f64).exp()
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub const ROUGE_BETA: f64 = 1.2;

pub fn rouge_l_pair(c: &[String], r: &[String]) -> f64 {
    let l = lcs(c, r);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / c.len() as f64;
    let rec = l as f64 / r.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * rec / (rec + b2 * p)
}

/// Mean per-pair LCS F-measure.
pub fn rouge_l(candidates: &[Vec<String>], references: &[Vec<String>]) -> f64 {
    assert_eq!(candidates.len(), references.len(), "one reference per candidate");
    if candidates.is_empty() {
        return 0.0;
    }
    let sum: f64 = candidates.iter().zip(references).map(|(c, r)| rouge_l_pair(c, r)).sum();
    sum / candidates.len() as f64
}

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_GAMMA: f64 = 0.5;
pub const METEOR_BETA: f64 = 3.0;

/// Exact-match alignment as (candidate, reference) index pairs. Each
/// candidate token takes the reference position right after the previous
/// match when possible, else the first unused one.
fn align(c: &[String], r: &[String]) -> Vec<(usize, usize)> {
    let mut used = vec![false; r.len()];
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (i, tok) in c.iter().enumerate() {
        let next = out.last().map(|&(_, j)| j + 1);
        let j = next
            .filter(|&j| j < r.len() && !used[j] && &r[j] == tok)
            .or_else(|| (0..r.len()).find(|&j| !used[j] && &r[j] == tok));
        if let Some(j) = j {
            used[j] = true;
            out.push((i, j));
        }
    }
    out
}

pub fn meteor_pair(c: &[String], r: &[String]) -> f64 {
    let al = align(c, r);
    let m = al.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / c.len() as f64;
    let rec = m as f64 / r.len() as f64;
    let f_mean = p * rec / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * rec);
    let chunks = 1 + al.windows(2).filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1)).count();
    let penalty = METEOR_GAMMA * (chunks as f64 / m as f64).powf(METEOR_BETA);
    (1.0 - penalty) * f_mean
}

pub fn meteor(candidates: &[Vec<String>], references: &[Vec<String>]) -> f64 {
    assert_eq!(candidates.len(), references.len(), "one reference per candidate");
    if candidates.is_empty() {
        return 0.0;
    }
    let sum: f64 = candidates.iter().zip(references).map(|(c, r)| meteor_pair(c, r)).sum();
    sum / candidates.len() as f64
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptLexicon {
    pub gravity: BTreeSet<String>,
    pub friction: BTreeSet<String>,
    pub collision: BTreeSet<String>,
}

fn words(list: &[&str]) -> BTreeSet<String> {
    list.iter().map(|w| w.to_string()).collect()
}

impl Default for ConceptLexicon {
    fn default() -> Self {
        ConceptLexicon {
            gravity: words(&["falls", "fall", "drop", "drops", "slope", "land", "lands"]),
            friction: words(&["roll", "rolls", "slide", "slides", "trap", "travel", "stuck", "remain", "remains"]),
            collision: words(&[
                "hit", "hits", "collide", "collides", "impact", "land", "lands", "pin", "pins", "bounce",
                "bounces",
            ]),
        }
    }
}

fn read_words(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text.split_whitespace().map(str::to_lowercase).collect())
}

impl ConceptLexicon {
    /// Replaces the word set of each concept whose file is given. Files hold
    /// whitespace-separated words.
    pub fn with_overrides(
        mut self,
        gravity: Option<&Path>,
        friction: Option<&Path>,
        collision: Option<&Path>,
    ) -> Result<Self> {
        if let Some(p) = gravity {
            self.gravity = read_words(p)?;
        }
        if let Some(p) = friction {
            self.friction = read_words(p)?;
        }
        if let Some(p) = collision {
            self.collision = read_words(p)?;
        }
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub gravity: usize,
    pub friction: usize,
    pub collision: usize,
}

impl std::ops::AddAssign for Coverage {
    fn add_assign(&mut self, o: Coverage) {
        self.gravity += o.gravity;
        self.friction += o.friction;
        self.collision += o.collision;
    }
}

pub fn coverage(tokens: &[String], lexicon: &ConceptLexicon) -> Coverage {
    let count = |set: &BTreeSet<String>| tokens.iter().filter(|t| set.contains(t.as_str())).count();
    Coverage {
        gravity: count(&lexicon.gravity),
        friction: count(&lexicon.friction),
        collision: count(&lexicon.collision),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pairs: usize,
    pub bleu1: f64,
    pub bleu2: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    /// Concept word counts summed over candidates.
    pub coverage: Coverage,
    /// `coverage` divided by the number of candidates.
    pub coverage_per_text: [f64; 3],
}

pub fn evaluate(candidates: &[Vec<String>], references: &[Vec<String>], lexicon: &ConceptLexicon) -> MetricReport {
    let mut cov = Coverage::default();
    for c in candidates {
        cov += coverage(c, lexicon);
    }
    let n = candidates.len().max(1) as f64;
    MetricReport {
        pairs: candidates.len(),
        bleu1: bleu(candidates, references, 1),
        bleu2: bleu(candidates, references, 2),
        rouge_l: rouge_l(candidates, references),
        meteor: meteor(candidates, references),
        coverage: cov,
        coverage_per_text: [cov.gravity as f64 / n, cov.friction as f64 / n, cov.collision as f64 / n],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(t("The ball, falls."), vec!["the", "ball", ",", "falls", "."]);
        assert!(t("   ").is_empty());
    }

    #[test]
    fn lcs_lengths() {
        assert_eq!(lcs(&t("a b c d"), &t("a c d e")), 3);
        assert_eq!(lcs(&t("a b"), &t("c d")), 0);
    }

    #[test]
    fn alignment_prefers_contiguous_run() {
        let al = align(&t("b c"), &t("c a b c"));
        assert_eq!(al, vec![(0, 2), (1, 3)]);
    }
}

//! Attributable n-gram diversity penalty.
//!
//! The tracker counts every overlapping n-gram (`min_n..=max_n`) in the
//! current statistics window. An n-gram is high-frequency once its count
//! reaches the threshold. A text is penalized `delta_d` per high-frequency
//! n-gram occurrence, and each occurrence is attributed to the position of
//! its final token.

use std::collections::HashMap;

use crate::config::{DiversityConfig, StatsWindow};
use crate::env::TokenId;

#[derive(Debug, Clone)]
pub struct DiversityTracker {
    counts: HashMap<Box<[TokenId]>, u32>,
    config: DiversityConfig,
}

/// Sentence-level penalty and its per-token attribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityPenalty {
    /// `-delta_d * (number of matched n-gram occurrences)`; never positive.
    pub scalar: f64,
    /// Number of matched n-grams ending at each position.
    pub marks: Vec<f64>,
}

impl DiversityTracker {
    pub fn new(config: DiversityConfig) -> Self {
        Self {
            counts: HashMap::new(),
            config,
        }
    }

    pub fn config(&self) -> &DiversityConfig {
        &self.config
    }

    pub fn reset(&mut self) {
        self.counts.clear();
    }

    /// Starts a new batch: clears the counts unless the window is global.
    pub fn begin_batch(&mut self) {
        if self.config.window == StatsWindow::Batch {
            self.reset();
        }
    }

    /// Adds every n-gram occurrence of every sequence in `batch`.
    pub fn update_ngram_stats<'a, I>(&mut self, batch: I)
    where
        I: IntoIterator<Item = &'a [TokenId]>,
    {
        let (lo, hi) = (self.config.min_n, self.config.max_n);
        for seq in batch {
            for n in lo..=hi.min(seq.len()) {
                for gram in seq.windows(n) {
                    match self.counts.get_mut(gram) {
                        Some(c) => *c += 1,
                        None => {
                            self.counts.insert(gram.into(), 1);
                        }
                    }
                }
            }
        }
    }

    pub fn count(&self, gram: &[TokenId]) -> u32 {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn is_high_frequency(&self, gram: &[TokenId]) -> bool {
        self.count(gram) >= self.config.threshold
    }

    /// Current high-frequency set, sorted.
    pub fn high_frequency(&self) -> Vec<Vec<TokenId>> {
        let mut out: Vec<Vec<TokenId>> = self
            .counts
            .iter()
            .filter(|(_, &c)| c >= self.config.threshold)
            .map(|(g, _)| g.to_vec())
            .collect();
        out.sort();
        out
    }

    pub fn distinct_ngrams(&self) -> usize {
        self.counts.len()
    }

    pub fn diversity_penalty(&self, tokens: &[TokenId]) -> DiversityPenalty {
        let (lo, hi) = (self.config.min_n, self.config.max_n);
        let mut marks = vec![0.0; tokens.len()];
        let mut matched = 0usize;
        for end in 0..tokens.len() {
            for n in lo..=hi.min(end + 1) {
                if self.is_high_frequency(&tokens[end + 1 - n..=end]) {
                    marks[end] += 1.0;
                    matched += 1;
                }
            }
        }
        DiversityPenalty {
            scalar: -(matched as f64) * self.config.delta_d,
            marks,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tracker(threshold: u32) -> DiversityTracker {
        DiversityTracker::new(DiversityConfig {
            threshold,
            ..DiversityConfig::default()
        })
    }

    #[test]
    fn abab_counts() {
        let mut t = tracker(3);
        let seq: &[TokenId] = &[0, 1, 0, 1];
        t.update_ngram_stats([seq]);
        assert_eq!(t.count(&[0, 1]), 2);
        assert_eq!(t.count(&[1, 0]), 1);
        assert_eq!(t.count(&[0, 1, 0]), 1);
        assert_eq!(t.count(&[1, 0, 1]), 1);
        assert_eq!(t.count(&[0, 1, 0, 1]), 1);
        assert_eq!(t.distinct_ngrams(), 5);
    }

    #[test]
    fn empty_batch_and_short_sequences_add_nothing() {
        let mut t = tracker(3);
        t.update_ngram_stats(std::iter::empty());
        let one: &[TokenId] = &[4];
        let none: &[TokenId] = &[];
        t.update_ngram_stats([one, none]);
        assert_eq!(t.distinct_ngrams(), 0);
    }

    #[test]
    fn no_match_gives_zero() {
        let mut t = tracker(2);
        let a: &[TokenId] = &[1, 2, 3];
        t.update_ngram_stats([a]);
        let p = t.diversity_penalty(&[1, 2, 3]);
        assert_eq!(p.scalar, 0.0);
        assert_eq!(p.marks, vec![0.0; 3]);
    }

    #[test]
    fn single_matched_bigram() {
        let mut t = tracker(2);
        let a: &[TokenId] = &[7, 8];
        let b: &[TokenId] = &[9, 7, 8];
        t.update_ngram_stats([a, b]);
        let p = t.diversity_penalty(&[5, 7, 8, 6]);
        assert!((p.scalar + 0.1).abs() < 1e-15);
        assert_eq!(p.marks, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn batch_window_resets_and_global_window_accumulates() {
        let seq: &[TokenId] = &[1, 2];
        let mut t = tracker(1);
        t.update_ngram_stats([seq]);
        t.begin_batch();
        assert_eq!(t.count(&[1, 2]), 0);

        let mut g = DiversityTracker::new(DiversityConfig {
            window: StatsWindow::Global,
            ..DiversityConfig::default()
        });
        g.update_ngram_stats([seq]);
        g.begin_batch();
        g.update_ngram_stats([seq]);
        assert_eq!(g.count(&[1, 2]), 2);
    }

    #[test]
    fn high_frequency_set_is_recomputable() {
        let mut t = tracker(2);
        let a: &[TokenId] = &[1, 2, 3];
        let b: &[TokenId] = &[1, 2, 4];
        t.update_ngram_stats([a, b]);
        assert_eq!(t.high_frequency(), vec![vec![1, 2]]);
    }
}

//! Rule-based quality components: structural (length, format) and semantic
//! (relevance, correctness, risk). All operate on the content of a
//! generation, i.e. the tokens before EOS, except [`risk_scan`] which is
//! aligned with the full rollout.

use std::collections::HashSet;

use crate::env::{content, LengthInterval, Prompt, TokenId, Vocabulary};

/// `+1` inside `[min, max]`, otherwise `-min(1, dist / min)` where `dist` is
/// the distance to the nearest bound.
pub fn length_reward(len: usize, interval: LengthInterval) -> f64 {
    if (interval.min..=interval.max).contains(&len) {
        return 1.0;
    }
    let dist = if len < interval.min {
        interval.min - len
    } else {
        len - interval.max
    };
    -(dist as f64 / interval.min as f64).min(1.0)
}

/// `+1` when the content holds exactly one SEP with a nonempty title before it
/// and a nonempty description after it, else `-1`.
pub fn format_reward(tokens: &[TokenId], vocab: &Vocabulary) -> f64 {
    let text = content(tokens, vocab.special.eos);
    let seps: Vec<usize> = text
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == vocab.special.sep)
        .map(|(i, _)| i)
        .collect();
    match seps.as_slice() {
        [i] if *i > 0 && *i + 1 < text.len() => 1.0,
        _ => -1.0,
    }
}

/// Mean of query-keyword coverage and bidword presence, in `[0, 1]`.
pub fn relevance_reward(prompt: &Prompt, tokens: &[TokenId], eos: TokenId) -> f64 {
    let present: HashSet<TokenId> = content(tokens, eos).iter().copied().collect();
    let coverage = if prompt.query_keyword_ids.is_empty() {
        0.0
    } else {
        prompt
            .query_keyword_ids
            .iter()
            .filter(|k| present.contains(k))
            .count() as f64
            / prompt.query_keyword_ids.len() as f64
    };
    let bid = if present.contains(&prompt.bidword_id) {
        1.0
    } else {
        0.0
    };
    (coverage + bid) / 2.0
}

/// `-1` if any configured pair of mutually exclusive tokens co-occurs, else `0`.
pub fn correctness_reward(tokens: &[TokenId], vocab: &Vocabulary) -> f64 {
    let present: HashSet<TokenId> = content(tokens, vocab.special.eos).iter().copied().collect();
    let violations = vocab
        .contradiction_pairs
        .iter()
        .filter(|(a, b)| present.contains(a) && present.contains(b))
        .count();
    -(violations as f64).min(1.0)
}

/// Per-position blacklist indicator over the full rollout.
pub fn risk_scan(tokens: &[TokenId], vocab: &Vocabulary) -> Vec<f64> {
    tokens
        .iter()
        .map(|&t| if vocab.is_blacklisted(t) { 1.0 } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_vocabulary, VocabConfig};

    fn vocab() -> Vocabulary {
        build_vocabulary(&VocabConfig::default(), 7).unwrap()
    }

    #[test]
    fn length_inside_and_on_bounds() {
        let iv = LengthInterval { min: 8, max: 24 };
        assert_eq!(length_reward(16, iv), 1.0);
        assert_eq!(length_reward(8, iv), 1.0);
        assert_eq!(length_reward(24, iv), 1.0);
    }

    #[test]
    fn length_penalty_is_linear_then_clamped() {
        let iv = LengthInterval { min: 8, max: 24 };
        assert_eq!(length_reward(4, iv), -0.5);
        assert_eq!(length_reward(28, iv), -0.5);
        assert_eq!(length_reward(0, iv), -1.0);
        assert_eq!(length_reward(40, iv), -1.0);
    }

    #[test]
    fn format_template() {
        let v = vocab();
        let (w, sep, eos) = (v.filler_ids[0], v.special.sep, v.special.eos);
        assert_eq!(format_reward(&[w, sep, w, w, eos], &v), 1.0);
        assert_eq!(format_reward(&[w, w, w, eos], &v), -1.0);
        assert_eq!(format_reward(&[w, sep, w, sep, w, eos], &v), -1.0);
        assert_eq!(format_reward(&[sep, w, eos], &v), -1.0);
        assert_eq!(format_reward(&[w, sep, eos], &v), -1.0);
        // tokens after EOS are not content
        assert_eq!(format_reward(&[w, sep, w, eos, sep], &v), 1.0);
    }

    #[test]
    fn relevance_cases() {
        let v = vocab();
        let k = &v.keyword_ids;
        let eos = v.special.eos;
        let prompt = Prompt {
            id: 0,
            query_keyword_ids: vec![k[0], k[1], k[2], k[3]],
            bidword_id: k[4],
        };
        assert_eq!(relevance_reward(&prompt, &[k[0], k[1], k[2], k[3], k[4], eos], eos), 1.0);
        assert_eq!(relevance_reward(&prompt, &[v.filler_ids[0], eos], eos), 0.0);
        assert_eq!(relevance_reward(&prompt, &[k[0], k[2], k[4], eos], eos), 0.75);
    }

    #[test]
    fn correctness_pairs() {
        let v = vocab();
        let (a, b) = v.contradiction_pairs[0];
        let (c, d) = v.contradiction_pairs[1];
        let eos = v.special.eos;
        assert_eq!(correctness_reward(&[a, eos], &v), 0.0);
        assert_eq!(correctness_reward(&[a, v.filler_ids[0], b, eos], &v), -1.0);
        assert_eq!(correctness_reward(&[a, b, c, d, eos], &v), -1.0);
    }

    #[test]
    fn risk_marks_blacklisted_positions() {
        let v = vocab();
        let w = v.filler_ids[0];
        assert_eq!(risk_scan(&[w, w, w], &v), vec![0.0; 3]);
        let seq = [w, w, w, v.blacklist_ids[1], w];
        assert_eq!(risk_scan(&seq, &v), vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    }
}

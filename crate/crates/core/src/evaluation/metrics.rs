use std::collections::BTreeMap;

use crate::text::{lcs_len, tokenize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("{0} is undefined on an empty corpus")]
    Empty(&'static str),
    #[error("{metric}: {predictions} predictions but {references} references")]
    Length {
        metric: &'static str,
        predictions: usize,
        references: usize,
    },
    #[error("cider needs at least 2 pairs: with a single reference every n-gram has zero idf")]
    CiderCorpus,
}

fn check(metric: &'static str, preds: &[String], refs: &[String]) -> Result<(), MetricError> {
    if preds.len() != refs.len() {
        return Err(MetricError::Length {
            metric,
            predictions: preds.len(),
            references: refs.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricError::Empty(metric));
    }
    Ok(())
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU-1..`n_max` on a 0–100 scale: clipped n-gram precision summed
/// over the corpus, geometric mean, brevity penalty, no smoothing.
pub fn bleu(preds: &[String], refs: &[String], n_max: usize) -> Result<Vec<f64>, MetricError> {
    check("bleu", preds, refs)?;
    let pt: Vec<Vec<String>> = preds.iter().map(|p| tokenize(p)).collect();
    let rt: Vec<Vec<String>> = refs.iter().map(|r| tokenize(r)).collect();
    let c: usize = pt.iter().map(Vec::len).sum();
    let r: usize = rt.iter().map(Vec::len).sum();
    let bp = if c == 0 {
        0.0
    } else if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };

    let mut log_p = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (p, r) in pt.iter().zip(&rt) {
            let ref_counts = ngram_counts(r, n);
            for (g, k) in ngram_counts(p, n) {
                matched += k.min(ref_counts.get(g).copied().unwrap_or(0));
                total += k;
            }
        }
        log_p.push(if matched == 0 {
            f64::NEG_INFINITY
        } else {
            (matched as f64 / total as f64).ln()
        });
    }
    Ok((1..=n_max)
        .map(|n| {
            let mean = log_p[..n].iter().sum::<f64>() / n as f64;
            if mean.is_finite() {
                100.0 * bp * mean.exp()
            } else {
                0.0
            }
        })
        .collect())
}

/// Recall weight of the ROUGE-L F-measure used by the common captioning toolkit.
pub const ROUGE_BETA: f64 = 1.2;

/// Sentence ROUGE-L F-measure in [0, 1].
pub fn rouge_l_pair(pred: &[String], reference: &[String], beta: f64) -> f64 {
    let lcs = lcs_len(pred, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / pred.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    let b2 = beta * beta;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Mean per-pair ROUGE-L on a 0–100 scale.
pub fn rouge_l(preds: &[String], refs: &[String], beta: f64) -> Result<f64, MetricError> {
    check("rouge_l", preds, refs)?;
    let total: f64 = preds
        .iter()
        .zip(refs)
        .map(|(p, r)| rouge_l_pair(&tokenize(p), &tokenize(r), beta))
        .sum();
    Ok(100.0 * total / preds.len() as f64)
}

const CIDER_N: usize = 4;

/// CIDEr: TF-IDF weighted n-gram cosine for n = 1..4, averaged over n and over
/// pairs, times 10. Document frequencies come from the references.
pub fn cider(preds: &[String], refs: &[String]) -> Result<f64, MetricError> {
    check("cider", preds, refs)?;
    if preds.len() < 2 {
        return Err(MetricError::CiderCorpus);
    }
    let pt: Vec<Vec<String>> = preds.iter().map(|p| tokenize(p)).collect();
    let rt: Vec<Vec<String>> = refs.iter().map(|r| tokenize(r)).collect();
    let log_n = (refs.len() as f64).ln();

    let mut total = 0.0;
    for n in 1..=CIDER_N {
        let ref_counts: Vec<_> = rt.iter().map(|r| ngram_counts(r, n)).collect();
        let mut df: BTreeMap<&[String], usize> = BTreeMap::new();
        for counts in &ref_counts {
            for g in counts.keys() {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        let weight = |g: &[String], tf: usize| {
            let d = df.get(g).copied().unwrap_or(0).max(1) as f64;
            tf as f64 * (log_n - d.ln())
        };
        for (p, rc) in pt.iter().zip(&ref_counts) {
            let pc = ngram_counts(p, n);
            let pv: BTreeMap<&[String], f64> = pc.iter().map(|(g, &tf)| (*g, weight(g, tf))).collect();
            let rv: BTreeMap<&[String], f64> = rc.iter().map(|(g, &tf)| (*g, weight(g, tf))).collect();
            let dot: f64 = pv.iter().filter_map(|(g, w)| rv.get(g).map(|v| w * v)).sum();
            let np = pv.values().map(|w| w * w).sum::<f64>().sqrt();
            let nr = rv.values().map(|w| w * w).sum::<f64>().sqrt();
            if np > 0.0 && nr > 0.0 {
                total += dot / (np * nr);
            }
        }
    }
    Ok(10.0 * total / (CIDER_N as f64 * preds.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let c = s(&["the cat sat on the mat", "a dog ran in the park today"]);
        for b in bleu(&c, &c, 4).unwrap() {
            assert!((b - 100.0).abs() < 1e-9);
        }
        let b = bleu(&s(&["x y z", "u v w"]), &c, 4).unwrap();
        assert_eq!(b[0], 0.0);
    }

    #[test]
    fn bleu_brevity_penalty() {
        // unigram precision 1, c = 2, r = 4
        let b = bleu(&s(&["a b"]), &s(&["a b c d"]), 1).unwrap();
        assert!((b[0] - 100.0 * (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rouge_values() {
        let c = s(&["heat the flask", "stir"]);
        assert!((rouge_l(&c, &c, ROUGE_BETA).unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(rouge_l(&s(&["a"]), &s(&["b"]), ROUGE_BETA).unwrap(), 0.0);
        // lcs 2, p = 1, r = 0.5, beta 1 -> 2/3
        let f = rouge_l_pair(&tokenize("a b"), &tokenize("a x b y"), 1.0);
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cider_identity_and_errors() {
        let c = s(&["heat the test tube gently", "add two drops of indicator", "swirl the conical flask slowly"]);
        assert!((cider(&c, &c).unwrap() - 10.0).abs() < 1e-9);
        assert_eq!(cider(&c[..1], &c[..1]), Err(MetricError::CiderCorpus));
        assert_eq!(cider(&[], &[]), Err(MetricError::Empty("cider")));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(bleu(&s(&["a"]), &[], 4), Err(MetricError::Length { .. })));
    }
}

//! Model sequences for higher-order campaigns.

use std::collections::HashSet;

/// All model sequences of length `1..=max_order`, as indices into `models`.
///
/// `ids[i]` names model `i` and `permanent[i]` marks permanent models.
/// Permanent models form a prefix in input order and are never permuted;
/// non-permanent models follow in every distinct order. Entries with the
/// same id are interchangeable, so their permutations collapse. Output is
/// ordered by length, then by first generation.
pub fn generate_model_sequences(ids: &[&str], permanent: &[bool], max_order: usize) -> Vec<Vec<usize>> {
    assert_eq!(ids.len(), permanent.len());
    let n = ids.len();
    let mut out = Vec::new();
    let mut seen: HashSet<Vec<&str>> = HashSet::new();
    for k in 1..=max_order.min(n) {
        for subset in combinations(n, k) {
            let (perm, rest): (Vec<usize>, Vec<usize>) = subset.iter().partition(|&&i| permanent[i]);
            for tail in permutations(&rest) {
                let seq: Vec<usize> = perm.iter().copied().chain(tail).collect();
                let key: Vec<&str> = seq.iter().map(|&i| ids[i]).collect();
                if seen.insert(key) {
                    out.push(seq);
                }
            }
        }
    }
    out
}

/// k-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Permutations of `items` in lexicographic order of positions.
fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn named(ids: &[&str], permanent: &[bool], k: usize) -> Vec<String> {
        generate_model_sequences(ids, permanent, k)
            .iter()
            .map(|s| s.iter().map(|&i| ids[i]).collect::<Vec<_>>().join(","))
            .collect()
    }

    #[test]
    fn single_model() {
        assert_eq!(named(&["N1"], &[false], 1), ["N1"]);
        assert_eq!(named(&["N1"], &[false], 3), ["N1"]);
    }

    #[test]
    fn three_non_permanent_pairs() {
        let s = named(&["N1", "N2", "N3"], &[false; 3], 2);
        assert_eq!(s.len(), 9);
        assert!(s.contains(&"N3,N1".to_string()));
    }

    #[test]
    fn repeated_model_not_permuted() {
        let s = named(&["N1", "N1", "N2"], &[false; 3], 2);
        assert_eq!(s, ["N1", "N2", "N1,N1", "N1,N2", "N2,N1"]);
    }

    #[test]
    fn permanent_prefix() {
        let s = named(&["P1", "N1"], &[true, false], 2);
        assert_eq!(s, ["P1", "N1", "P1,N1"]);
    }
}

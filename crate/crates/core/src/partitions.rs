//! Set partitions of `{0, .., k-1}` as restricted growth strings.

/// Bell number `B(k)`; `None` on overflow.
pub fn bell(k: usize) -> Option<u64> {
    // Bell triangle
    let mut row: Vec<u64> = vec![1];
    for _ in 0..k {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last()?);
        for value in &row {
            let v = next.last()?.checked_add(*value)?;
            next.push(v);
        }
        row = next;
    }
    row.first().copied()
}

/// All restricted growth strings of length `k`, in lexicographic order.
/// String `a` encodes the partition where `i` and `j` share a block iff
/// `a[i] == a[j]`; blocks are numbered by first appearance.
pub fn restricted_growth_strings(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let mut a = vec![0usize; k];
    // running maximum of a[0..=i]
    let mut max = vec![0usize; k];
    loop {
        out.push(a.clone());
        let mut i = k - 1;
        loop {
            if i == 0 {
                return out;
            }
            if a[i] <= max[i - 1] {
                a[i] += 1;
                max[i] = max[i - 1].max(a[i]);
                for j in i + 1..k {
                    a[j] = 0;
                    max[j] = max[i];
                }
                break;
            }
            i -= 1;
        }
    }
}

pub fn blocks_of(rgs: &[usize]) -> Vec<Vec<usize>> {
    let count = rgs.iter().copied().max().map_or(0, |m| m + 1);
    let mut blocks = vec![Vec::new(); count];
    for (i, &b) in rgs.iter().enumerate() {
        blocks[b].push(i);
    }
    blocks
}

/// Relabel arbitrary block labels into restricted growth form.
pub fn normalize(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

//! Small numerical kernels shared by the link, likelihood and EM code.

/// `log(sum(exp(xs)))`, returning `-inf` when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Pairwise (tree) summation. The reduction tree depends only on the slice
/// length, so the result is reproducible regardless of how the inputs were
/// produced.
pub fn tree_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            tree_sum(&xs[..mid]) + tree_sum(&xs[mid..])
        }
    }
}

/// Softmax with max-subtraction. Returns `None` if any input is NaN.
pub fn softmax(logits: &[f64]) -> Option<Vec<f64>> {
    if logits.iter().any(|x| x.is_nan()) {
        return None;
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        // +inf entries win outright; all -inf is degenerate
        if max == f64::INFINITY {
            let n_inf = logits.iter().filter(|&&x| x == f64::INFINITY).count() as f64;
            return Some(
                logits
                    .iter()
                    .map(|&x| if x == f64::INFINITY { 1.0 / n_inf } else { 0.0 })
                    .collect(),
            );
        }
        return None;
    }
    let mut out: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    Some(out)
}

/// Normalizes a non-negative vector in place so it sums to one.
pub fn normalize(xs: &mut [f64]) -> f64 {
    let total: f64 = xs.iter().sum();
    if total > 0.0 {
        for x in xs.iter_mut() {
            *x /= total;
        }
    }
    total
}

/// Index of the largest entry, ties resolved to the lowest index.
pub fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            Some(b) if xs[b] >= x => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Calls `f` on every permutation of `0..n` (Heap's algorithm).
pub fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            f(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

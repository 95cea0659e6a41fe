//! Local maxima and their topographic prominence on 1-D signals.

/// Indices of local maxima. A flat-topped peak is reported once, at the
/// middle of its plateau (left middle for even plateaus). The first and last
/// samples are never peaks.
pub fn find_peaks(x: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                peaks.push((i + j) / 2);
                i = j + 1;
                continue;
            }
            i = j.max(i) + 1;
            continue;
        }
        i += 1;
    }
    peaks
}

/// Height of `x[peak]` above the higher of the two lowest points separating
/// it from strictly higher ground (or the signal ends) on either side.
pub fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    let mut left_min = h;
    for &v in x[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// The `count` most prominent peaks as `(index, prominence)`, most prominent
/// first; equal prominences keep index order.
pub fn most_prominent(x: &[f64], count: usize) -> Vec<(usize, f64)> {
    let mut p: Vec<(usize, f64)> = find_peaks(x)
        .into_iter()
        .map(|i| (i, prominence(x, i)))
        .collect();
    p.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    p.truncate(count);
    p
}

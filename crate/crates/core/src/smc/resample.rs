use rand::Rng;
use rand_distr::Exp1;

/// `n` independent categorical draws from `norm_weights`, returned in
/// increasing order. With `conditional` set, the last slot is pinned to the
/// last index.
///
/// The draws come from `n` sorted uniforms (normalized partial sums of
/// exponentials) merged against the cumulative weights, which costs O(n)
/// instead of a binary search per draw.
pub fn resample_categorical<R: Rng + ?Sized>(norm_weights: &[f64], n: usize, conditional: bool, rng: &mut R) -> Vec<usize> {
    let free = if conditional { n.saturating_sub(1) } else { n };
    let mut out = Vec::with_capacity(n);
    if free > 0 {
        let mut spacings: Vec<f64> = (0..=free).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let scale: f64 = spacings.iter().sum();
        let total: f64 = norm_weights.iter().sum();
        let last = norm_weights.iter().rposition(|&w| w > 0.0).unwrap_or(norm_weights.len() - 1);
        let (mut j, mut cum, mut acc) = (0usize, norm_weights[0], 0.0);
        let stretch = total / scale;
        for e in spacings.drain(..free) {
            acc += e;
            let u = acc * stretch;
            while j < last && cum <= u {
                j += 1;
                cum += norm_weights[j];
            }
            out.push(j);
        }
    }
    if conditional && n > 0 {
        out.push(norm_weights.len() - 1);
    }
    out
}

/// One categorical draw given cumulative weights. Zero-weight entries are never
/// returned.
#[inline]
pub(crate) fn draw_index<R: Rng + ?Sized>(cumulative: &[f64], total: f64, rng: &mut R) -> usize {
    let u = rng.random::<f64>() * total;
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

/// Single draw proportional to `norm_weights`.
pub fn select_index<R: Rng + ?Sized>(norm_weights: &[f64], rng: &mut R) -> usize {
    let mut cumulative = Vec::with_capacity(norm_weights.len());
    let mut total = 0.0;
    for &w in norm_weights {
        total += w;
        cumulative.push(total);
    }
    draw_index(&cumulative, total, rng)
}

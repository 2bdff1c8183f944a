use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::domain::{IntervalUnion, ParameterDomain, Region};
use crate::error::{Error, Result};

/// Latin hypercube sample of `n` points.
///
/// For product regions every dimension is split into `n` equal-probability
/// strata of the uniform distribution on its interval union, each stratum is
/// hit exactly once, and strata are paired across dimensions by independent
/// random permutations. Box unions get a per-box Latin hypercube with the
/// `n` points allotted in proportion to box volume.
pub fn lhs_sample(n: usize, domain: &ParameterDomain, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("Latin hypercube needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match domain.region() {
        Region::Product(dims) => Ok(product_lhs(n, dims, &mut rng)),
        Region::Boxes(boxes) => {
            let volumes: Vec<f64> = boxes
                .iter()
                .map(|b| b.iter().map(|(lo, hi)| hi - lo).product())
                .collect();
            let counts = apportion(n, &volumes);
            let mut out = Vec::with_capacity(n);
            for (b, &count) in boxes.iter().zip(&counts) {
                if count == 0 {
                    continue;
                }
                let dims = b
                    .iter()
                    .map(|&(lo, hi)| IntervalUnion::single(lo, hi))
                    .collect::<Result<Vec<_>>>()?;
                out.extend(product_lhs(count, &dims, &mut rng));
            }
            Ok(out)
        }
    }
}

fn product_lhs(n: usize, dims: &[IntervalUnion], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dims.len()]; n];
    for (d, axis) in dims.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (point, &k) in points.iter_mut().zip(&strata) {
            let jitter: f64 = rng.random();
            point[d] = axis.quantile((k as f64 + jitter) / n as f64);
        }
    }
    points
}

/// Largest-remainder split of `n` in proportion to `weights`.
fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

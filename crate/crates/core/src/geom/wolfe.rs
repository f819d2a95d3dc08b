//! Wolfe's nearest-point algorithm: the point of conv{p_1..p_m} closest to a
//! target under a diagonal metric sum_i w_i u_i^2.
//!
//! Active-set method over the weight simplex. Each major step adds the
//! generator minimizing <x, q_k> (lowest index on ties); minor steps move
//! toward the affine minimizer of the current corral and drop generators
//! whose weight reaches zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_ITER: usize = 10_000;

#[derive(Debug, Clone)]
pub struct NearestPoint {
    /// Dense convex weights over the generators.
    pub weights: Vec<f64>,
    /// The combination sum_k weights_k p_k.
    pub point: Vec<f64>,
    /// Squared metric distance from the target.
    pub dist2: f64,
    pub iterations: usize,
}

fn dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..w.len() {
        s += w[i] * a[i] * b[i];
    }
    s
}

/// Minimizes ||sum_k l_k p_k - target||_w over the simplex of l.
///
/// `eps` is the absolute stopping threshold on the Wolfe gap
/// ||x||^2 - min_k <x, q_k>, which bounds the squared distance to the
/// optimum.
pub fn nearest_point(points: &[&[f64]], target: &[f64], metric: &[f64], eps: f64) -> Result<NearestPoint> {
    let m = points.len();
    if m == 0 {
        return Err(Error::EmptySet("polytope without generators".into()));
    }
    let n = target.len();
    let q: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(target).map(|(a, b)| a - b).collect())
        .collect();
    let scale2 = q.iter().map(|v| dot(metric, v, v)).fold(0.0, f64::max);
    let eps = eps.max(1e-15 * scale2);

    // start at the generator nearest to the target
    let mut start = 0;
    let mut best = f64::INFINITY;
    for (k, v) in q.iter().enumerate() {
        let d = dot(metric, v, v);
        if d < best {
            best = d;
            start = k;
        }
    }
    let mut corral = vec![start];
    let mut lambda = vec![1.0];
    let mut x = q[start].clone();
    let mut iterations = 0;

    loop {
        iterations += 1;
        if iterations > MAX_ITER {
            return Err(Error::NonConvergent(format!(
                "nearest-point routine exceeded {MAX_ITER} iterations"
            )));
        }
        let xx = dot(metric, &x, &x);
        let mut j = 0;
        let mut jval = f64::INFINITY;
        for (k, v) in q.iter().enumerate() {
            let d = dot(metric, &x, v);
            if d < jval {
                jval = d;
                j = k;
            }
        }
        if xx - jval <= eps || corral.contains(&j) {
            break;
        }
        corral.push(j);
        lambda.push(0.0);

        // minor cycle: at most one generator is dropped per pass
        for _ in 0..=corral.len() {
            let mu = affine_minimizer(&q, &corral, metric, n);
            if mu.iter().all(|v| *v > 0.0) {
                lambda = mu;
                break;
            }
            let mut theta = 1.0f64;
            for (l, u) in lambda.iter().zip(&mu) {
                if *u <= 0.0 {
                    let t = l / (l - u);
                    if t < theta {
                        theta = t;
                    }
                }
            }
            for (l, u) in lambda.iter_mut().zip(&mu) {
                *l = (1.0 - theta) * *l + theta * u;
            }
            // drop the generators that hit zero, keeping at least one
            let mut keep_c = Vec::with_capacity(corral.len());
            let mut keep_l = Vec::with_capacity(corral.len());
            for (c, l) in corral.iter().zip(&lambda) {
                if *l > 1e-15 {
                    keep_c.push(*c);
                    keep_l.push(*l);
                }
            }
            if keep_c.is_empty() {
                let (i, _) = lambda
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, l)| if *l > acc.1 { (i, *l) } else { acc });
                keep_c.push(corral[i]);
                keep_l.push(1.0);
            }
            corral = keep_c;
            lambda = keep_l;
        }
        let total: f64 = lambda.iter().sum();
        for l in lambda.iter_mut() {
            *l /= total;
        }
        x = combine(&q, &corral, &lambda, n);
    }

    let total: f64 = lambda.iter().sum();
    let mut weights = vec![0.0; m];
    for (c, l) in corral.iter().zip(&lambda) {
        weights[*c] += l / total;
    }
    let mut point = vec![0.0; n];
    for (k, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            for i in 0..n {
                point[i] += w * points[k][i];
            }
        }
    }
    let diff: Vec<f64> = point.iter().zip(target).map(|(a, b)| a - b).collect();
    Ok(NearestPoint { weights, point, dist2: dot(metric, &diff, &diff), iterations })
}

fn combine(q: &[Vec<f64>], corral: &[usize], lambda: &[f64], n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for (c, l) in corral.iter().zip(lambda) {
        for i in 0..n {
            x[i] += l * q[*c][i];
        }
    }
    x
}

/// Affine combination of the corral with minimal metric norm, solved as a
/// least-squares problem in differences from the first corral point.
fn affine_minimizer(q: &[Vec<f64>], corral: &[usize], metric: &[f64], n: usize) -> Vec<f64> {
    let k = corral.len();
    if k == 1 {
        return vec![1.0];
    }
    let base = &q[corral[0]];
    let sw: Vec<f64> = metric.iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(n, k - 1, |i, j| sw[i] * (q[corral[j + 1]][i] - base[i]));
    let b = DVector::from_fn(n, |i, _| -sw[i] * base[i]);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let sol = svd
        .solve(&b, 1e-13 * smax.max(1e-300))
        .unwrap_or_else(|_| DVector::zeros(k - 1));
    let mut mu = Vec::with_capacity(k);
    mu.push(1.0 - sol.iter().sum::<f64>());
    mu.extend(sol.iter().cloned());
    mu
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_projection() {
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        let r = nearest_point(&[&a, &b], &[1.0, 1.0], &[0.5, 0.5], 0.0).unwrap();
        assert!((r.point[0] - 0.5).abs() < 1e-14 && (r.point[1] - 0.5).abs() < 1e-14);
        assert!((r.weights[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn interior_target_is_returned() {
        let pts = [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let r = nearest_point(&refs, &[0.5, 0.5], &[1.0, 1.0], 0.0).unwrap();
        assert!(r.dist2 < 1e-28);
        assert!((r.point[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn duplicates_and_ties_resolve_to_lowest_index() {
        let pts = [[1.0, 1.0], [1.0, 1.0], [3.0, 3.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let r = nearest_point(&refs, &[0.0, 0.0], &[1.0, 1.0], 0.0).unwrap();
        assert_eq!(r.weights, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn weighted_metric_changes_the_answer() {
        // nearest point of the segment [(1,0),(0,1)] to the origin
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        let r = nearest_point(&[&a, &b], &[0.0, 0.0], &[0.75, 0.25], 0.0).unwrap();
        // minimize 0.75 l^2 + 0.25 (1-l)^2 -> l = 0.25
        assert!((r.point[0] - 0.25).abs() < 1e-14);
    }
}

//! Numerical check of the centring objective behind covariance attention.
//!
//! For query rows `q_j` and key rows `k_xi` the objective is
//!
//! ```text
//! O(theta, phi) = sum_j (q_j - theta)^T Phi (q_j - theta) / sum_j |q_j - theta|^2
//!               + sum_xi (k_xi - phi)^T Omega (k_xi - phi) / sum_xi |k_xi - phi|^2
//! ```
//!
//! where `Phi` is the normalised scatter of pairwise key differences and
//! `Omega` the same for queries. Its gradient vanishes at the row means; this
//! module evaluates `O` and measures that gradient by central differences.
//! Nothing here is used for training.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// `sum_{a,b} (x_a - x_b)(x_a - x_b)^T / sum_{a,b} |x_a - x_b|^2` as a
/// row-major `d x d` matrix.
fn pair_scatter(x: &Tensor, what: &str) -> Result<Vec<f64>> {
    let (n, d) = x.dims2("pair scatter")?;
    let mut m = vec![0.0; d * d];
    let mut total = 0.0;
    let mut diff = vec![0.0; d];
    for a in 0..n {
        for b in 0..n {
            for ((o, xa), xb) in diff.iter_mut().zip(x.row(a)).zip(x.row(b)) {
                *o = xa - xb;
            }
            for r in 0..d {
                for c in 0..d {
                    m[r * d + c] += diff[r] * diff[c];
                }
                total += diff[r] * diff[r];
            }
        }
    }
    if total == 0.0 {
        return Err(Error::Degenerate(format!("all {what} rows are equal")));
    }
    m.iter_mut().for_each(|v| *v /= total);
    Ok(m)
}

/// `sum_j (x_j - c)^T M (x_j - c) / sum_j |x_j - c|^2`.
fn rayleigh(x: &Tensor, c: &[f64], m: &[f64]) -> Result<f64> {
    let d = c.len();
    let (mut num, mut den) = (0.0, 0.0);
    for row in x.rows() {
        let diff: Vec<f64> = row.iter().zip(c).map(|(a, b)| a - b).collect();
        for r in 0..d {
            let md: f64 = (0..d).map(|s| m[r * d + s] * diff[s]).sum();
            num += diff[r] * md;
            den += diff[r] * diff[r];
        }
    }
    if den == 0.0 {
        return Err(Error::Degenerate("centre coincides with every row".into()));
    }
    Ok(num / den)
}

fn check_inputs(theta: &[f64], phi: &[f64], q: &Tensor, k: &Tensor) -> Result<()> {
    let (nq, dq) = q.dims2("objective queries")?;
    let (nk, dk) = k.dims2("objective keys")?;
    if nq != nk || dq != dk {
        return Err(Error::shape("objective", q.shape(), k.shape()));
    }
    if nq < 2 {
        return Err(Error::invalid(format!(
            "objective needs at least 2 rows, got {nq}"
        )));
    }
    if theta.len() != dq || phi.len() != dq {
        return Err(Error::invalid(format!(
            "centres of width {} and {} for rows of width {dq}",
            theta.len(),
            phi.len()
        )));
    }
    Ok(())
}

pub fn eval_objective(theta: &[f64], phi: &[f64], q: &Tensor, k: &Tensor) -> Result<f64> {
    check_inputs(theta, phi, q, k)?;
    let phi_m = pair_scatter(k, "key")?;
    let omega_m = pair_scatter(q, "query")?;
    Ok(rayleigh(q, theta, &phi_m)? + rayleigh(k, phi, &omega_m)?)
}

/// Central-difference gradient of `O` with respect to `(theta, phi)`.
pub fn objective_gradient(
    theta: &[f64],
    phi: &[f64],
    q: &Tensor,
    k: &Tensor,
    eps: f64,
) -> Result<Vec<f64>> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid(format!("step must be positive, got {eps}")));
    }
    let d = theta.len();
    let mut point: Vec<f64> = theta.iter().chain(phi).copied().collect();
    let mut grad = Vec::with_capacity(2 * d);
    for i in 0..2 * d {
        let orig = point[i];
        point[i] = orig + eps;
        let plus = eval_objective(&point[..d], &point[d..], q, k)?;
        point[i] = orig - eps;
        let minus = eval_objective(&point[..d], &point[d..], q, k)?;
        point[i] = orig;
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityOptions {
    pub eps: f64,
    /// Number of random reference points.
    pub draws: usize,
    /// Stationary when the gradient norm at the means is below
    /// `tolerance * median(reference norms)`.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for StationarityOptions {
    fn default() -> Self {
        StationarityOptions {
            eps: 1e-6,
            draws: 100,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub grad_norm_at_mean: f64,
    pub median_reference_norm: f64,
    pub ratio: f64,
    pub is_stationary: bool,
}

pub fn check_stationarity(q: &Tensor, k: &Tensor, eps: f64) -> Result<StationarityReport> {
    check_stationarity_with(
        q,
        k,
        &StationarityOptions {
            eps,
            ..StationarityOptions::default()
        },
    )
}

/// Reference points are drawn uniformly from the box `mean +- spread` where
/// `spread` is the largest absolute deviation of any entry from its mean.
pub fn check_stationarity_with(
    q: &Tensor,
    k: &Tensor,
    opts: &StationarityOptions,
) -> Result<StationarityReport> {
    if opts.draws == 0 {
        return Err(Error::invalid(
            "stationarity check needs at least one reference draw",
        ));
    }
    let theta = q.mean_rows()?.into_data();
    let phi = k.mean_rows()?.into_data();
    let norm = |g: Vec<f64>| g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let at_mean = norm(objective_gradient(&theta, &phi, q, k, opts.eps)?);

    let spread = |x: &Tensor, c: &[f64]| {
        x.rows()
            .flat_map(|r| r.iter().zip(c).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    };
    let (sq, sk) = (spread(q, &theta), spread(k, &phi));
    let mut rng = Rng::new(opts.seed);
    let mut refs = Vec::with_capacity(opts.draws);
    for _ in 0..opts.draws {
        let t: Vec<f64> = theta.iter().map(|c| c + rng.range_f64(-sq, sq)).collect();
        let p: Vec<f64> = phi.iter().map(|c| c + rng.range_f64(-sk, sk)).collect();
        refs.push(norm(objective_gradient(&t, &p, q, k, opts.eps)?));
    }
    refs.sort_by(f64::total_cmp);
    let median = if refs.len() % 2 == 1 {
        refs[refs.len() / 2]
    } else {
        0.5 * (refs[refs.len() / 2 - 1] + refs[refs.len() / 2])
    };
    // with width 1 both quotients are identically 1, so O is flat everywhere
    if q.shape()[1] == 1 {
        return Ok(StationarityReport {
            grad_norm_at_mean: at_mean,
            median_reference_norm: median,
            ratio: 0.0,
            is_stationary: true,
        });
    }
    Ok(StationarityReport {
        grad_norm_at_mean: at_mean,
        median_reference_norm: median,
        ratio: at_mean / median,
        is_stationary: at_mean < opts.tolerance * median,
    })
}

/// One random instance checked by [`verify_trials`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    /// Seed that produced the accepted instance.
    pub seed: u64,
    pub report: StationarityReport,
}

/// Checks `trials` random instances of `n` query and key rows of width `d`,
/// entries uniform in [-1, 1]. Instance seeds start at `seed` and advance by
/// one per draw; a degenerate draw is skipped in favour of the next seed.
pub fn verify_trials(
    seed: u64,
    n: usize,
    d: usize,
    trials: usize,
    opts: &StationarityOptions,
) -> Result<Vec<Trial>> {
    if n < 2 || d == 0 {
        return Err(Error::invalid(format!(
            "need at least 2 rows and width >= 1, got n={n}, d={d}"
        )));
    }
    let mut out = Vec::with_capacity(trials);
    let mut next = seed;
    let mut skipped = 0;
    while out.len() < trials {
        let s = next;
        next = next.wrapping_add(1);
        let mut rng = Rng::new(s);
        let q = rng.uniform(&[n, d], 1.0);
        let k = rng.uniform(&[n, d], 1.0);
        match check_stationarity_with(&q, &k, opts) {
            Ok(report) => out.push(Trial { seed: s, report }),
            Err(Error::Degenerate(_)) if skipped < 1000 => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Literal triple sums over index pairs, with both centres present in
    /// every inner product.
    fn brute_force(theta: &[f64], phi: &[f64], q: &Tensor, k: &Tensor) -> f64 {
        let n = q.shape()[0];
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let minus =
            |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<f64>>();
        let mut num1 = 0.0;
        let mut num2 = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let qa = minus(q.row(a), theta);
                    let d1 = dot(&qa, &minus(k.row(b), phi)) - dot(&qa, &minus(k.row(c), phi));
                    num1 += d1 * d1;
                    let ka = minus(k.row(a), phi);
                    let d2 = dot(&ka, &minus(q.row(b), theta)) - dot(&ka, &minus(q.row(c), theta));
                    num2 += d2 * d2;
                }
            }
        }
        let sq_self = |x: &Tensor, c: &[f64]| {
            (0..n)
                .map(|j| dot(&minus(x.row(j), c), &minus(x.row(j), c)))
                .sum::<f64>()
        };
        let sq_pairs = |x: &Tensor| {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let dd = minus(x.row(a), x.row(b));
                    s += dot(&dd, &dd);
                }
            }
            s
        };
        num1 / (sq_self(q, theta) * sq_pairs(k)) + num2 / (sq_self(k, phi) * sq_pairs(q))
    }

    #[test]
    fn rayleigh_form_matches_triple_sums() {
        let mut rng = Rng::new(11);
        for _ in 0..10 {
            let q = rng.uniform(&[4, 3], 1.0);
            let k = rng.uniform(&[4, 3], 1.0);
            let theta = rng.uniform(&[3], 1.0).into_data();
            let phi = rng.uniform(&[3], 1.0).into_data();
            let a = eval_objective(&theta, &phi, &q, &k).unwrap();
            let b = brute_force(&theta, &phi, &q, &k);
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn translation_and_role_swap() {
        let mut rng = Rng::new(12);
        let q = rng.uniform(&[5, 3], 1.0);
        let k = rng.uniform(&[5, 3], 1.0);
        let theta = rng.uniform(&[3], 1.0).into_data();
        let phi = rng.uniform(&[3], 1.0).into_data();
        let base = eval_objective(&theta, &phi, &q, &k).unwrap();

        let c = [0.3, -1.2, 2.0];
        let shifted_rows: Vec<Vec<f64>> = q
            .rows()
            .map(|r| r.iter().zip(&c).map(|(x, y)| x + y).collect())
            .collect();
        let q2 = Tensor::from_rows(&shifted_rows).unwrap();
        let theta2: Vec<f64> = theta.iter().zip(&c).map(|(x, y)| x + y).collect();
        let shifted = eval_objective(&theta2, &phi, &q2, &k).unwrap();
        assert!((base - shifted).abs() < 1e-12);

        let swapped = eval_objective(&phi, &theta, &k, &q).unwrap();
        assert!((base - swapped).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let q = Tensor::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let k = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let c = [0.0, 0.0];
        assert!(matches!(
            eval_objective(&c, &c, &q, &k),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            eval_objective(&c, &c, &k, &q),
            Err(Error::Degenerate(_))
        ));
        assert!(eval_objective(&c, &c, &Tensor::zeros(&[1, 2]), &Tensor::zeros(&[1, 2])).is_err());
        assert!(eval_objective(&[0.0], &c, &k, &k).is_err());
    }

    #[test]
    fn stationary_at_means() {
        let mut rng = Rng::new(13);
        for _ in 0..5 {
            let q = rng.uniform(&[6, 4], 1.0);
            let k = rng.uniform(&[6, 4], 1.0);
            let report = check_stationarity(&q, &k, 1e-6).unwrap();
            assert!(report.is_stationary, "{report:?}");
            assert!(report.median_reference_norm > 0.0);
        }
    }

    #[test]
    fn antipodal_pair() {
        let q = Tensor::from_rows(&[vec![1.0, -2.0, 0.5], vec![-1.0, 2.0, -0.5]]).unwrap();
        let k = Tensor::from_rows(&[vec![0.3, 0.1, -0.7], vec![-0.3, -0.1, 0.7]]).unwrap();
        let g = objective_gradient(&[0.0; 3], &[0.0; 3], &q, &k, 1e-6).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-8), "{g:?}");
    }

    #[test]
    fn moving_off_the_mean_changes_objective() {
        let mut rng = Rng::new(14);
        let q = rng.uniform(&[6, 4], 1.0);
        let k = rng.uniform(&[6, 4], 1.0);
        let theta = q.mean_rows().unwrap().into_data();
        let phi = k.mean_rows().unwrap().into_data();
        let at_mean = eval_objective(&theta, &phi, &q, &k).unwrap();
        for step in [0.1, 0.5, 1.0] {
            let moved: Vec<f64> = theta
                .iter()
                .enumerate()
                .map(|(i, t)| if i == 0 { t + step } else { *t })
                .collect();
            let o = eval_objective(&moved, &phi, &q, &k).unwrap();
            assert!((o - at_mean).abs() > 1e-9, "step {step}");
        }
    }

    #[test]
    fn trials_are_deterministic_and_pass() {
        let opts = StationarityOptions::default();
        let a = verify_trials(7, 6, 4, 5, &opts).unwrap();
        assert_eq!(a, verify_trials(7, 6, 4, 5, &opts).unwrap());
        assert_eq!(
            a.iter().map(|t| t.seed).collect::<Vec<_>>(),
            vec![7, 8, 9, 10, 11]
        );
        assert!(a.iter().all(|t| t.report.is_stationary));
        assert!(verify_trials(0, 2, 3, 3, &opts)
            .unwrap()
            .iter()
            .all(|t| t.report.is_stationary));
        assert!(verify_trials(0, 1, 3, 1, &opts).is_err());
    }

    #[test]
    fn width_one_objective_is_flat() {
        let q = Tensor::new(vec![3, 1], vec![0.1, -0.4, 0.9]).unwrap();
        let k = Tensor::new(vec![3, 1], vec![0.3, 0.2, -0.7]).unwrap();
        for t in [-1.0, 0.0, 2.5] {
            assert!((eval_objective(&[t], &[0.1], &q, &k).unwrap() - 2.0).abs() < 1e-12);
        }
        let r = check_stationarity(&q, &k, 1e-6).unwrap();
        assert!(r.is_stationary && !r.ratio.is_nan());
    }
}

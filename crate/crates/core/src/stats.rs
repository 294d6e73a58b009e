//! Pearson goodness of fit and profile errors.

use serde::{Deserialize, Serialize};

use crate::kernel::KernelModel;
use crate::montecarlo::HistogramGrid;
use crate::{Error, Result};

/// Smallest predicted density accepted by [`sup_relative_error`].
pub const PREDICTION_FLOOR: f64 = 1e-4;
/// Default minimum expected count per merged bin.
pub const DEFAULT_MIN_EXPECTED: f64 = 5.0;

const MAX_ITER: usize = 10_000;
const EPS: f64 = 1e-16;

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    1.0 - gamma_q(a, x)
}

/// Regularized upper incomplete gamma `Q(a, x)`: power series for
/// `x < a + 1`, Lentz continued fraction otherwise.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "gamma_q needs a > 0");
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let log_pre = a * x.ln() - x - libm::lgamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        (1.0 - sum * log_pre.exp()).clamp(0.0, 1.0)
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        (log_pre.exp() * h).clamp(0.0, 1.0)
    }
}

/// `P(chi2_dof > x)`.
pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    gamma_q(dof as f64 / 2.0, x / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: usize,
    pub pvalue: f64,
    pub sup_rel_error: f64,
    pub region: String,
    /// Number of bins after merging.
    pub merged_bins: usize,
}

/// Groups consecutive bins until each group's expected count reaches
/// `min_expected`; a short tail joins the last group.
pub fn merge_bins(observed: &[f64], expected: &[f64], min_expected: f64) -> (Vec<f64>, Vec<f64>) {
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&oi, &ei) in observed.iter().zip(expected) {
        o += oi;
        e += ei;
        if e >= min_expected {
            obs.push(o);
            exp.push(e);
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match (obs.last_mut(), exp.last_mut()) {
            (Some(lo), Some(le)) => {
                *lo += o;
                *le += e;
            }
            _ => {
                obs.push(o);
                exp.push(e);
            }
        }
    }
    (obs, exp)
}

/// Pearson test of raw counts against expected counts.
pub fn pearson(observed: &[f64], expected: &[f64], min_expected: f64) -> Result<(f64, usize, f64, usize)> {
    if observed.len() != expected.len() {
        return Err(Error::Stats("observed and expected lengths differ".into()));
    }
    let (obs, exp) = merge_bins(observed, expected, min_expected);
    if obs.len() < 2 {
        return Err(Error::Stats(format!("only {} bin(s) left after merging", obs.len())));
    }
    let stat: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = obs.len() - 1;
    Ok((stat, dof, chi_square_sf(stat, dof), obs.len()))
}

/// `max |empirical - predicted| / predicted`.
pub fn sup_relative_error(empirical: &[f64], predicted: &[f64]) -> Result<f64> {
    if empirical.len() != predicted.len() || empirical.is_empty() {
        return Err(Error::Stats("profile lengths differ or are empty".into()));
    }
    let mut sup: f64 = 0.0;
    for (e, p) in empirical.iter().zip(predicted) {
        if !(*p >= PREDICTION_FLOOR) {
            return Err(Error::Stats(format!(
                "predicted density {p:e} is below the floor {PREDICTION_FLOOR:e}; region reaches too far outside"
            )));
        }
        sup = sup.max((e - p).abs() / p);
    }
    Ok(sup)
}

/// Sup relative error of the band profile over bins with centres in
/// `region`.
pub fn profile_sup_error(hist: &HistogramGrid, model: &KernelModel, region: (f64, f64)) -> Result<f64> {
    let p = &hist.profile;
    let bins = p.bins_in(region.0, region.1);
    let density = p.density();
    let predicted = p.predicted(model)?;
    let emp: Vec<f64> = bins.iter().map(|&i| density[i]).collect();
    let pre: Vec<f64> = bins.iter().map(|&i| predicted[i]).collect();
    sup_relative_error(&emp, &pre)
}

/// Pearson test of the band profile against the kernel diagonal.
///
/// The test runs on the `|Im zhat| <= band` profile rather than the full
/// 2-D grid: the prediction depends on `Re zhat` only, while at finite `N`
/// the curvature of the support boundary shifts the edge at large
/// `|Im zhat|`. Expected counts are quadratures of the kernel diagonal over
/// each bin, times the number of trials. The reported sup error covers
/// every bin whose prediction clears [`PREDICTION_FLOOR`].
pub fn chi_square_gof(hist: &HistogramGrid, model: &KernelModel, min_expected: f64) -> Result<GofResult> {
    let p = &hist.profile;
    let trials = p.trials as f64;
    let expected: Vec<f64> = p.expected_per_trial(model)?.into_iter().map(|e| e * trials).collect();
    let observed: Vec<f64> = p.counts.iter().map(|&c| c as f64).collect();
    let (statistic, dof, pvalue, merged) = pearson(&observed, &expected, min_expected)?;
    let predicted = p.predicted(model)?;
    let density = p.density();
    let keep: Vec<usize> = (0..predicted.len()).filter(|&i| predicted[i] >= PREDICTION_FLOOR).collect();
    let emp: Vec<f64> = keep.iter().map(|&i| density[i]).collect();
    let pre: Vec<f64> = keep.iter().map(|&i| predicted[i]).collect();
    let sup = if keep.is_empty() { f64::NAN } else { sup_relative_error(&emp, &pre)? };
    let (lo, hi) = keep
        .first()
        .zip(keep.last())
        .map(|(&a, &b)| (p.edges[a], p.edges[b + 1]))
        .unwrap_or((f64::NAN, f64::NAN));
    Ok(GofResult {
        statistic,
        dof,
        pvalue,
        sup_rel_error: sup,
        region: format!("Re zhat in [{lo}, {hi}], |Im zhat| <= {}", p.band),
        merged_bins: merged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_q_special_cases() {
        // Q(1, x) = e^{-x}
        for x in [0.1, 1.0, 2.5, 10.0, 40.0] {
            assert!((gamma_q(1.0, x) - (-x).exp()).abs() < 1e-15, "x = {x}");
        }
        // chi2 with 2 dof: sf = e^{-x/2}
        assert!((chi_square_sf(3.0, 2) - (-1.5f64).exp()).abs() < 1e-15);
        // chi2 with 1 dof: sf = erfc(sqrt(x/2))
        for x in [0.2, 1.0, 3.84, 12.0] {
            assert!((chi_square_sf(x, 1) - libm::erfc((x / 2.0).sqrt())).abs() < 1e-13, "x = {x}");
        }
        assert_eq!(gamma_q(3.0, 0.0), 1.0);
        assert!((gamma_p(2.0, 1.0) - (1.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn merging_keeps_totals() {
        let o = [1.0, 0.0, 7.0, 2.0, 3.0, 9.0, 0.0];
        let e = [0.5, 1.0, 6.0, 2.0, 2.5, 8.0, 0.2];
        let (mo, me) = merge_bins(&o, &e, 5.0);
        assert_eq!(me, vec![7.5, 12.7]);
        assert_eq!(mo, vec![8.0, 14.0]);
        let (_, dof, p, merged) = pearson(&o, &e, 5.0).unwrap();
        assert_eq!((dof, merged), (1, 2));
        assert!((0.0..=1.0).contains(&p));
        assert!(pearson(&[1.0], &[9.0], 5.0).is_err());
    }

    #[test]
    fn maximal_misfit() {
        let e = vec![50.0; 10];
        let o = vec![0.0; 10];
        let (_, _, p, _) = pearson(&o, &e, 5.0).unwrap();
        assert!(p < 1e-6);
    }

    #[test]
    fn sup_error_examples() {
        let p = [0.3, 0.2, 0.01];
        assert_eq!(sup_relative_error(&p, &p).unwrap(), 0.0);
        let e: Vec<f64> = p.iter().map(|x| 1.1 * x).collect();
        assert!((sup_relative_error(&e, &p).unwrap() - 0.1).abs() < 1e-12);
        assert!(sup_relative_error(&[0.0], &[1e-6]).is_err());
        let mut q = p;
        let mut f = e.clone();
        q.reverse();
        f.reverse();
        assert_eq!(sup_relative_error(&f, &q).unwrap(), sup_relative_error(&e, &p).unwrap());
    }
}

//! Goodness-of-fit statistics: Kolmogorov–Smirnov and chi-square.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Minimum sample size for a one-sample KS distance.
pub const KS_MIN_SAMPLES: usize = 100;

/// Result of a test: statistic and p-value.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size for KS, degrees of freedom for chi-square.
    pub n: f64,
}

/// `sup |F_n - F|` for a continuous reference CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("KS sample"));
    }
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            got: samples.len() as u64,
            need: KS_MIN_SAMPLES as u64,
        });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    // Ties are handled by jumping over the whole run of equal values.
    while i < xs.len() {
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d
            .max((f - i as f64 / n).abs())
            .max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    Ok(d)
}

/// One-sample KS test with the asymptotic Kolmogorov p-value.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<TestOutcome> {
    let d = ks_distance(samples, cdf)?;
    let n = samples.len() as f64;
    Ok(TestOutcome {
        statistic: d,
        p_value: kolmogorov_sf(d, n),
        n,
    })
}

/// Two-sample KS test. With ties (discrete data) the p-value is conservative.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("KS sample"));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    Ok(TestOutcome {
        statistic: d,
        p_value: kolmogorov_sf(d, ne),
        n: ne,
    })
}

/// P(sqrt(n) D > observed) under the null, with the usual finite-n correction.
pub fn kolmogorov_sf(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson goodness of fit of counts against expected probabilities.
///
/// Cells with expected count below 5 are pooled into their neighbour so the
/// asymptotic law applies.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<TestOutcome> {
    if counts.len() != probs.len() {
        return Err(Error::InvalidArgument(
            "counts and probabilities differ in length".into(),
        ));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::Empty("chi-square counts"));
    }
    let nf = n as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        o += c as f64;
        e += p * nf;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return Err(Error::InsufficientSamples { got: n, need: 10 });
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = (cells.len() - 1) as f64;
    Ok(TestOutcome {
        statistic: stat,
        p_value: chi2_sf(stat, df),
        n: df,
    })
}

/// Pearson test of independence for a contingency table.
///
/// Empty rows and columns are dropped before counting degrees of freedom.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<TestOutcome> {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    if rows.is_empty() {
        return Err(Error::Empty("contingency table"));
    }
    let ncol = rows[0].len();
    if rows.iter().any(|r| r.len() != ncol) {
        return Err(Error::InvalidArgument("ragged contingency table".into()));
    }
    let cols: Vec<usize> = (0..ncol)
        .filter(|&j| rows.iter().map(|r| r[j]).sum::<u64>() > 0)
        .collect();
    if rows.len() < 2 || cols.len() < 2 {
        return Err(Error::InsufficientSamples {
            got: rows.len().min(cols.len()) as u64,
            need: 2,
        });
    }
    let n: f64 = rows.iter().flat_map(|r| r.iter()).map(|&c| c as f64).sum();
    let rsum: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|&c| c as f64).sum())
        .collect();
    let csum: Vec<f64> = cols
        .iter()
        .map(|&j| rows.iter().map(|r| r[j] as f64).sum())
        .collect();
    let mut stat = 0.0;
    for (i, r) in rows.iter().enumerate() {
        for (k, &j) in cols.iter().enumerate() {
            let e = rsum[i] * csum[k] / n;
            stat += (r[j] as f64 - e).powi(2) / e;
        }
    }
    let df = ((rows.len() - 1) * (cols.len() - 1)) as f64;
    Ok(TestOutcome {
        statistic: stat,
        p_value: chi2_sf(stat, df),
        n: df,
    })
}

fn chi2_sf(stat: f64, df: f64) -> f64 {
    ChiSquared::new(df).map(|d| d.sf(stat)).unwrap_or(f64::NAN)
}

// SPDX-License-Identifier: Apache-2.0

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
}

/// Two-sided paired t-test on `xs - ys`.
///
/// Zero spread is special-cased: identical differences of zero give
/// `(0, 1)`, any other constant difference gives `(±inf, 0)`.
pub fn paired_t_test(xs: &[f64], ys: &[f64]) -> Result<TTest> {
    if xs.len() != ys.len() {
        bail!(Argument, "paired t-test needs equal lengths, got {} and {}", xs.len(), ys.len());
    }
    let n = xs.len();
    if n < 2 {
        bail!(Argument, "paired t-test needs n >= 2, got {n}");
    }
    let d: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let df = n - 1;
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            TTest { t: 0.0, p: 1.0, df }
        } else {
            TTest {
                t: f64::INFINITY.copysign(mean),
                p: 0.0,
                df,
            }
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    Ok(TTest { t, p: two_sided_p(t, df)?, df })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn two_sided_p(t: f64, df: usize) -> Result<f64> {
    if df == 0 {
        bail!(Argument, "Student t needs df >= 1");
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("valid parameters");
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

//! Central-difference gradient verification.
//!
//! Drives any deterministic scalar function of a flat parameter vector and
//! compares an analytic gradient coordinate by coordinate. Used by the test
//! suite and exposed as the `gradcheck` CLI subcommand.

use std::fmt;

/// Outcome of a gradient check. `worst` lists the most offending
/// coordinates as `(index, analytic, finite difference, relative error)`.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Coordinates compared (both gradients above the noise floor).
    pub checked: usize,
    /// Coordinates skipped because both gradients were below the floor.
    pub skipped_small: usize,
    /// Fraction of checked coordinates within `tol`.
    pub frac_within: f64,
    pub max_rel_err: f64,
    pub worst: Vec<(usize, f64, f64, f64)>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self, required_frac: f64) -> bool {
        self.checked == 0 || self.frac_within >= required_frac
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "gradcheck: {}/{} coordinates within {:.1e} (max rel err {:.3e}, {} below noise floor)",
            (self.frac_within * self.checked as f64).round() as usize,
            self.checked,
            self.tol,
            self.max_rel_err,
            self.skipped_small
        )?;
        for (idx, a, fd, rel) in &self.worst {
            writeln!(f, "  [{idx}] analytic {a:+.6e}  fd {fd:+.6e}  rel {rel:.3e}")?;
        }
        Ok(())
    }
}

/// Compares `analytic` against central differences of `f` at `params`.
/// Coordinates where both gradients are below `min_grad` are skipped as
/// numerically uninformative.
pub fn grad_check<F>(
    mut f: F,
    params: &[f64],
    analytic: &[f64],
    h: f64,
    tol: f64,
    min_grad: f64,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length must match params");
    let mut scratch = params.to_vec();
    let mut checked = 0usize;
    let mut within = 0usize;
    let mut skipped = 0usize;
    let mut max_rel: f64 = 0.0;
    let mut offenders: Vec<(usize, f64, f64, f64)> = Vec::new();
    for i in 0..params.len() {
        scratch[i] = params[i] + h;
        let up = f(&scratch);
        scratch[i] = params[i] - h;
        let dn = f(&scratch);
        scratch[i] = params[i];
        let fd = (up - dn) / (2.0 * h);
        let a = analytic[i];
        if a.abs() < min_grad && fd.abs() < min_grad {
            skipped += 1;
            continue;
        }
        checked += 1;
        let rel = (a - fd).abs() / a.abs().max(fd.abs());
        max_rel = max_rel.max(rel);
        if rel < tol {
            within += 1;
        } else {
            offenders.push((i, a, fd, rel));
        }
    }
    offenders.sort_by(|x, y| y.3.partial_cmp(&x.3).unwrap());
    offenders.truncate(10);
    GradCheckReport {
        checked,
        skipped_small: skipped,
        frac_within: if checked == 0 { 1.0 } else { within as f64 / checked as f64 },
        max_rel_err: max_rel,
        worst: offenders,
        tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_norm_gradient_verifies_tightly() {
        let params: Vec<f64> = (0..20).map(|i| 0.1 * i as f64 - 0.7).collect();
        let analytic: Vec<f64> = params.iter().map(|p| 2.0 * p).collect();
        let report = grad_check(
            |x| x.iter().map(|v| v * v).sum(),
            &params,
            &analytic,
            1e-5,
            1e-9,
            1e-10,
        );
        assert!(report.passed(1.0), "{report}");
        assert!(report.max_rel_err < 1e-9);
    }

    #[test]
    fn a_planted_sign_bug_is_flagged() {
        let params = vec![0.5, -0.3, 0.8, 0.2];
        let mut analytic: Vec<f64> = params.iter().map(|p| 2.0 * p).collect();
        analytic[2] = -analytic[2];
        let report = grad_check(
            |x| x.iter().map(|v| v * v).sum(),
            &params,
            &analytic,
            1e-5,
            1e-6,
            1e-10,
        );
        assert!(!report.passed(1.0));
        assert_eq!(report.worst[0].0, 2, "the corrupted coordinate tops the report");
        let text = report.to_string();
        assert!(text.contains("[2]"));
    }
}

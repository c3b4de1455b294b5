use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NovaError, Result};

/// A scalar function of a flat parameter vector with an analytic gradient.
pub trait Objective {
    fn value(&self, params: &[f64]) -> f64;
    fn gradient(&self, params: &[f64]) -> Vec<f64>;
}

/// Adapter from a pair of closures.
pub struct FnObjective<V, G> {
    pub value: V,
    pub gradient: G,
}

impl<V, G> Objective for FnObjective<V, G>
where
    V: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn value(&self, params: &[f64]) -> f64 {
        (self.value)(params)
    }

    fn gradient(&self, params: &[f64]) -> Vec<f64> {
        (self.gradient)(params)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst_probe(&self) -> Option<&Probe> {
        self.probes.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient with central differences at `probes`
/// distinct random indices (all indices when `probes >= params.len()`).
pub fn grad_check(
    objective: &dyn Objective,
    params: &[f64],
    probes: usize,
    h: f64,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(h > 0.0) {
        return Err(NovaError::InvalidInput(format!("finite-difference step must be > 0 (got {h})")));
    }
    let analytic = objective.gradient(params);
    if analytic.len() != params.len() {
        return Err(NovaError::InvalidInput("gradient length differs from parameter length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = sample(&mut rng, params.len(), probes.min(params.len())).into_vec();
    indices.sort_unstable();

    let mut work = params.to_vec();
    let probes: Vec<Probe> = indices
        .into_iter()
        .map(|index| {
            let orig = work[index];
            work[index] = orig + h;
            let up = objective.value(&work);
            work[index] = orig - h;
            let down = objective.value(&work);
            work[index] = orig;
            let numeric = (up - down) / (2.0 * h);
            Probe {
                index,
                analytic: analytic[index],
                numeric,
                rel_error: relative_error(analytic[index], numeric),
            }
        })
        .collect();
    let worst = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        passed: worst < tolerance,
        probes,
        worst,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{sigmoid, softplus};

    #[test]
    fn quadratic_is_exact() {
        let obj = FnObjective {
            value: |p: &[f64]| p.iter().map(|x| 3.0 * x * x - x).sum(),
            gradient: |p: &[f64]| p.iter().map(|x| 6.0 * x - 1.0).collect(),
        };
        let params: Vec<f64> = (0..20).map(|i| i as f64 * 0.37 - 3.0).collect();
        let report = grad_check(&obj, &params, 20, 1e-4, 1e-9, 0).unwrap();
        assert!(report.passed, "worst {}", report.worst);
        assert_eq!(report.probes.len(), 20);
    }

    #[test]
    fn softplus_chain() {
        // f(p) = Σ softplus(p_i · softplus(p_{i+1}))
        let f = |p: &[f64]| (0..p.len() - 1).map(|i| softplus(p[i] * softplus(p[i + 1]))).sum::<f64>();
        let g = |p: &[f64]| {
            let mut g = vec![0.0; p.len()];
            for i in 0..p.len() - 1 {
                let inner = softplus(p[i + 1]);
                let outer = sigmoid(p[i] * inner);
                g[i] += outer * inner;
                g[i + 1] += outer * p[i] * sigmoid(p[i + 1]);
            }
            g
        };
        let obj = FnObjective { value: f, gradient: g };
        let params: Vec<f64> = (0..12).map(|i| (i as f64 * 0.9).sin() * 2.0).collect();
        let report = grad_check(&obj, &params, 12, 1e-4, 1e-4, 1).unwrap();
        assert!(report.passed, "worst {}", report.worst);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let obj = FnObjective {
            value: |p: &[f64]| p.iter().map(|x| x * x).sum(),
            gradient: |p: &[f64]| {
                let mut g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
                g[3] *= 1.5;
                g
            },
        };
        let report = grad_check(&obj, &[1.0; 6], 6, 1e-4, 1e-3, 0).unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst_probe().unwrap().index, 3);
    }

    #[test]
    fn rejects_non_positive_step() {
        let obj = FnObjective {
            value: |_: &[f64]| 0.0,
            gradient: |p: &[f64]| vec![0.0; p.len()],
        };
        assert!(grad_check(&obj, &[1.0], 1, 0.0, 1e-3, 0).is_err());
    }
}

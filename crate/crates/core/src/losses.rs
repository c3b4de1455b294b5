//! Training objectives.
//!
//! Every loss is mean-normalized by the number of supervised entries so that
//! weights do not depend on batch size or resolution. Each loss comes in a
//! value-only form and a `*_grad` form returning the gradient with respect
//! to its prediction input. The subgradient of `|x|` at 0 is taken as 0.

use serde::{Deserialize, Serialize};

use crate::error::{NovaError, Result};

/// A loss value and the number of entries it averages over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    pub value: f64,
    pub count: usize,
}

fn check_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(NovaError::InvalidInput(format!("{what}: length mismatch ({a} vs {b})")));
    }
    Ok(())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean squared error over rays and channels.
pub fn loss_recon(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64> {
    Ok(loss_recon_grad(pred, gt)?.0.value)
}

pub fn loss_recon_grad(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<(LossTerm, Vec<[f64; 3]>)> {
    check_len("loss_recon", pred.len(), gt.len())?;
    let validity = vec![1u8; pred.len()];
    masked_mse(pred, gt, &validity)
}

fn masked_mse(pred: &[[f64; 3]], gt: &[[f64; 3]], validity: &[u8]) -> Result<(LossTerm, Vec<[f64; 3]>)> {
    let valid = validity.iter().filter(|&&v| v != 0).count();
    if valid == 0 {
        return Err(NovaError::NoSupervision("every ray is invalid".into()));
    }
    let count = 3 * valid;
    let scale = 1.0 / count as f64;
    let mut sum = 0.0;
    let mut grad = vec![[0.0; 3]; pred.len()];
    for r in 0..pred.len() {
        if validity[r] == 0 {
            continue;
        }
        for c in 0..3 {
            let d = pred[r][c] - gt[r][c];
            sum += d * d;
            grad[r][c] = 2.0 * d * scale;
        }
    }
    Ok((LossTerm { value: sum * scale, count }, grad))
}

/// Squared mask error over valid rays, averaged over fields and valid rays.
pub fn loss_nvm(pred: &[Vec<f64>], gt: &[Vec<f64>], validity: &[u8]) -> Result<f64> {
    Ok(loss_nvm_grad(pred, gt, validity)?.0.value)
}

pub fn loss_nvm_grad(pred: &[Vec<f64>], gt: &[Vec<f64>], validity: &[u8]) -> Result<(LossTerm, Vec<Vec<f64>>)> {
    check_len("loss_nvm fields", pred.len(), gt.len())?;
    for (p, g) in pred.iter().zip(gt) {
        check_len("loss_nvm rays", p.len(), validity.len())?;
        check_len("loss_nvm rays", g.len(), validity.len())?;
    }
    let valid = validity.iter().filter(|&&v| v != 0).count();
    if valid == 0 {
        return Err(NovaError::NoSupervision("every ray is invalid".into()));
    }
    let count = pred.len() * valid;
    if count == 0 {
        return Ok((LossTerm::default(), Vec::new()));
    }
    let scale = 1.0 / count as f64;
    let mut sum = 0.0;
    let grads = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            p.iter()
                .zip(g)
                .zip(validity)
                .map(|((&p, &g), &v)| {
                    if v == 0 {
                        return 0.0;
                    }
                    let d = p - g;
                    sum += d * d;
                    2.0 * d * scale
                })
                .collect()
        })
        .collect();
    Ok((LossTerm { value: sum * scale, count }, grads))
}

/// Per-field color error on the pixels each field is responsible for,
/// averaged over supervised (field, ray) pairs. Zero pairs yield 0.
pub fn loss_nvcn(pred: &[Vec<[f64; 3]>], gt: &[[f64; 3]], masks: &[Vec<f64>], validity: &[u8]) -> Result<LossTerm> {
    Ok(loss_nvcn_grad(pred, gt, masks, validity)?.0)
}

pub fn loss_nvcn_grad(
    pred: &[Vec<[f64; 3]>],
    gt: &[[f64; 3]],
    masks: &[Vec<f64>],
    validity: &[u8],
) -> Result<(LossTerm, Vec<Vec<[f64; 3]>>)> {
    check_len("loss_nvcn fields", pred.len(), masks.len())?;
    check_len("loss_nvcn rays", gt.len(), validity.len())?;
    for (p, m) in pred.iter().zip(masks) {
        check_len("loss_nvcn rays", p.len(), gt.len())?;
        check_len("loss_nvcn rays", m.len(), gt.len())?;
    }
    let weight_sum: f64 = masks
        .iter()
        .flat_map(|m| m.iter().zip(validity).map(|(&m, &v)| if v != 0 { m } else { 0.0 }))
        .sum();
    let count = masks
        .iter()
        .flat_map(|m| m.iter().zip(validity).filter(|(&m, &v)| v != 0 && m > 0.0))
        .count();
    let mut grads = vec![vec![[0.0; 3]; gt.len()]; pred.len()];
    if weight_sum <= 0.0 {
        return Ok((LossTerm { value: 0.0, count: 0 }, grads));
    }
    let scale = 1.0 / weight_sum;
    let mut sum = 0.0;
    for n in 0..pred.len() {
        for r in 0..gt.len() {
            let w = if validity[r] != 0 { masks[n][r] } else { 0.0 };
            if w == 0.0 {
                continue;
            }
            for c in 0..3 {
                let d = pred[n][r][c] - gt[r][c];
                sum += w * d * d;
                grads[n][r][c] = 2.0 * w * d * scale;
            }
        }
    }
    Ok((LossTerm { value: sum * scale, count }, grads))
}

/// Validity-masked MSE of the composed color.
pub fn loss_nvcf(pred: &[[f64; 3]], gt: &[[f64; 3]], validity: &[u8]) -> Result<f64> {
    Ok(loss_nvcf_grad(pred, gt, validity)?.0.value)
}

pub fn loss_nvcf_grad(pred: &[[f64; 3]], gt: &[[f64; 3]], validity: &[u8]) -> Result<(LossTerm, Vec<[f64; 3]>)> {
    check_len("loss_nvcf", pred.len(), gt.len())?;
    check_len("loss_nvcf", pred.len(), validity.len())?;
    masked_mse(pred, gt, validity)
}

/// Mean over samples of `|Σ_n β[n] - 1|`. `beta[n]` holds one value per
/// sample, in the same order for every field.
pub fn loss_nvb(beta: &[Vec<f64>]) -> Result<f64> {
    Ok(loss_nvb_grad(beta)?.0.value)
}

pub fn loss_nvb_grad(beta: &[Vec<f64>]) -> Result<(LossTerm, Vec<f64>)> {
    let Some(first) = beta.first() else {
        return Ok((LossTerm::default(), Vec::new()));
    };
    let len = first.len();
    for b in beta {
        check_len("loss_nvb", b.len(), len)?;
    }
    if len == 0 {
        return Ok((LossTerm::default(), Vec::new()));
    }
    let scale = 1.0 / len as f64;
    let mut sum = 0.0;
    // The gradient is the same for every field.
    let grad = (0..len)
        .map(|i| {
            let excess: f64 = beta.iter().map(|b| b[i]).sum::<f64>() - 1.0;
            sum += excess.abs();
            sign(excess) * scale
        })
        .collect();
    Ok((LossTerm { value: sum * scale, count: len }, grad))
}

/// Opacity outside each field's mask: `Σ (1 - M)·valid·Σ_k |α|` averaged
/// over contributing (field, ray) pairs. `alpha[n]` is `[ray * K + k]`.
pub fn loss_nva(alpha: &[Vec<f64>], masks: &[Vec<f64>], validity: &[u8], samples_per_ray: usize) -> Result<LossTerm> {
    Ok(loss_nva_grad(alpha, masks, validity, samples_per_ray)?.0)
}

pub fn loss_nva_grad(
    alpha: &[Vec<f64>],
    masks: &[Vec<f64>],
    validity: &[u8],
    samples_per_ray: usize,
) -> Result<(LossTerm, Vec<Vec<f64>>)> {
    check_len("loss_nva fields", alpha.len(), masks.len())?;
    let k = samples_per_ray;
    for (a, m) in alpha.iter().zip(masks) {
        check_len("loss_nva rays", m.len(), validity.len())?;
        check_len("loss_nva samples", a.len(), validity.len() * k)?;
    }
    let weight = |n: usize, r: usize| if validity[r] != 0 { 1.0 - masks[n][r] } else { 0.0 };
    let count = (0..alpha.len())
        .flat_map(|n| (0..validity.len()).map(move |r| (n, r)))
        .filter(|&(n, r)| weight(n, r) > 0.0)
        .count();
    let mut grads = vec![vec![0.0; validity.len() * k]; alpha.len()];
    if count == 0 {
        return Ok((LossTerm::default(), grads));
    }
    let scale = 1.0 / count as f64;
    let mut sum = 0.0;
    for n in 0..alpha.len() {
        for r in 0..validity.len() {
            let w = weight(n, r);
            if w == 0.0 {
                continue;
            }
            for j in r * k..(r + 1) * k {
                let a = alpha[n][j];
                sum += w * a.abs();
                grads[n][j] = w * sign(a) * scale;
            }
        }
    }
    Ok((LossTerm { value: sum * scale, count }, grads))
}

/// Weight per objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub recon: f64,
    pub nvm: f64,
    pub nvcn: f64,
    pub nvcf: f64,
    pub nvb: f64,
    pub nva: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            recon: 1.0,
            nvm: 0.1,
            nvcn: 0.1,
            nvcf: 0.1,
            nvb: 0.01,
            nva: 0.01,
        }
    }
}

impl LossWeights {
    pub fn recon_only() -> Self {
        LossWeights {
            recon: 1.0,
            nvm: 0.0,
            nvcn: 0.0,
            nvcf: 0.0,
            nvb: 0.0,
            nva: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.recon, self.nvm, self.nvcn, self.nvcf, self.nvb, self.nva]
    }

    pub fn get(&self, term: Term) -> f64 {
        self.as_array()[term as usize]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(NovaError::Config(format!("loss weight {} must be >= 0", Term::ALL[i].name())));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(NovaError::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }

    /// Any novel-view objective active.
    pub fn uses_novel_view(&self) -> bool {
        self.nvm > 0.0 || self.nvcn > 0.0 || self.nvcf > 0.0 || self.nvb > 0.0 || self.nva > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Term {
    Recon = 0,
    Nvm,
    Nvcn,
    Nvcf,
    Nvb,
    Nva,
}

impl Term {
    pub const ALL: [Term; 6] = [Term::Recon, Term::Nvm, Term::Nvcn, Term::Nvcf, Term::Nvb, Term::Nva];

    pub fn name(self) -> &'static str {
        match self {
            Term::Recon => "recon",
            Term::Nvm => "nvm",
            Term::Nvcn => "nvcn",
            Term::Nvcf => "nvcf",
            Term::Nvb => "nvb",
            Term::Nva => "nva",
        }
    }
}

/// Unweighted terms of one rendering pass (reference or novel view).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PassLosses {
    pub terms: [Option<LossTerm>; 6],
}

impl PassLosses {
    pub fn set(&mut self, term: Term, value: LossTerm) {
        self.terms[term as usize] = Some(value);
    }

    pub fn get(&self, term: Term) -> Option<LossTerm> {
        self.terms[term as usize]
    }
}

/// Named pre-weight values, weights and counts, plus the weighted total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub values: [f64; 6],
    pub weights: [f64; 6],
    pub counts: [usize; 6],
    pub total: f64,
}

impl LossReport {
    pub fn value(&self, term: Term) -> f64 {
        self.values[term as usize]
    }

    pub fn count(&self, term: Term) -> usize {
        self.counts[term as usize]
    }

    /// One JSON object per line: step, every term, total.
    pub fn log_line(&self, step: usize) -> String {
        let mut map = serde_json::Map::new();
        map.insert("step".into(), step.into());
        for t in Term::ALL {
            map.insert(t.name().into(), self.value(t).into());
        }
        map.insert("total".into(), self.total.into());
        serde_json::Value::Object(map).to_string()
    }
}

/// Merges the passes term by term (values and counts add) and forms the
/// weighted total.
pub fn total_loss(passes: &[PassLosses], weights: &LossWeights) -> LossReport {
    let mut values = [0.0; 6];
    let mut counts = [0; 6];
    for pass in passes {
        for t in Term::ALL {
            if let Some(term) = pass.get(t) {
                values[t as usize] += term.value;
                counts[t as usize] += term.count;
            }
        }
    }
    let w = weights.as_array();
    let total = values.iter().zip(&w).map(|(v, w)| v * w).sum();
    LossReport {
        values,
        weights: w,
        counts,
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recon_examples() {
        let a = vec![[0.2, 0.4, 0.6]; 3];
        assert_eq!(loss_recon(&a, &a).unwrap(), 0.0);
        assert_eq!(loss_recon(&[[0.0; 3]; 4], &[[1.0; 3]; 4]).unwrap(), 1.0);
        assert!(loss_recon(&a, &a[..2]).is_err());
    }

    #[test]
    fn nvm_examples() {
        let m = vec![vec![0.3, 1.0]];
        assert_eq!(loss_nvm(&m, &m, &[1, 1]).unwrap(), 0.0);
        assert_eq!(loss_nvm(&[vec![0.0]], &[vec![1.0]], &[1]).unwrap(), 1.0);
        let err = loss_nvm(&m, &m, &[0, 0]).unwrap_err();
        assert!(err.to_string().contains("no supervision"));
    }

    #[test]
    fn nvcn_examples() {
        let pred = vec![vec![[0.5; 3]; 2]];
        let term = loss_nvcn(&pred, &[[0.1; 3]; 2], &[vec![0.0, 0.0]], &[1, 1]).unwrap();
        assert_eq!(term, LossTerm { value: 0.0, count: 0 });
        let term = loss_nvcn(&pred, &[[0.5; 3]; 2], &[vec![1.0, 0.0]], &[1, 1]).unwrap();
        assert_eq!(term, LossTerm { value: 0.0, count: 1 });
    }

    #[test]
    fn nvcf_examples() {
        let a = vec![[0.1, 0.2, 0.3]; 2];
        assert_eq!(loss_nvcf(&a, &a, &[1, 0]).unwrap(), 0.0);
        assert_eq!(loss_nvcf(&[[0.0; 3], [0.3; 3]], &[[1.0; 3], [0.0; 3]], &[1, 0]).unwrap(), 1.0);
        assert!(loss_nvcf(&a, &a, &[0, 0]).is_err());
    }

    #[test]
    fn nvb_examples() {
        assert_eq!(loss_nvb(&[vec![0.25, 1.0], vec![0.75, 0.0]]).unwrap(), 0.0);
        let v = loss_nvb(&[vec![0.3], vec![0.5]]).unwrap();
        assert!((v - 0.2).abs() < 1e-15);
        let (_, g) = loss_nvb_grad(&[vec![0.5], vec![0.5]]).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn nva_examples() {
        let zero = loss_nva(&[vec![0.0, 0.0]], &[vec![0.0]], &[1], 2).unwrap();
        assert_eq!(zero.value, 0.0);
        let t = loss_nva(&[vec![0.25, 0.25]], &[vec![0.0]], &[1], 2).unwrap();
        assert_eq!(t, LossTerm { value: 0.5, count: 1 });
        // Inside the mask nothing is penalized.
        let t = loss_nva(&[vec![0.9, 0.9]], &[vec![1.0]], &[1], 2).unwrap();
        assert_eq!(t, LossTerm { value: 0.0, count: 0 });
    }

    #[test]
    fn total_selects_weights() {
        let mut pass = PassLosses::default();
        let vals = [0.7, 0.2, 0.3, 0.4, 0.5, 0.6];
        for (t, v) in Term::ALL.iter().zip(vals) {
            pass.set(*t, LossTerm { value: v, count: 3 });
        }
        let report = total_loss(&[pass], &LossWeights::recon_only());
        assert_eq!(report.total, 0.7);
        assert_eq!(total_loss(&[PassLosses::default()], &LossWeights::default()).total, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let w: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let weights = LossWeights {
                recon: w[0],
                nvm: w[1],
                nvcn: w[2],
                nvcf: w[3],
                nvb: w[4],
                nva: w[5],
            };
            let report = total_loss(&[pass, pass], &weights);
            let mut dot = 0.0;
            for i in 0..6 {
                dot += w[i] * 2.0 * vals[i];
            }
            assert!((report.total - dot).abs() < 1e-12);
            assert_eq!(report.counts, [6; 6]);
        }
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        let mut w = LossWeights::default();
        w.nvm = -1.0;
        assert!(w.validate().is_err());
        let zero = LossWeights {
            recon: 0.0,
            ..LossWeights::recon_only()
        };
        assert!(zero.validate().is_err());
        assert!(!LossWeights::recon_only().uses_novel_view());
    }

    #[test]
    fn log_line_is_single_json_record() {
        let report = total_loss(&[PassLosses::default()], &LossWeights::default());
        let line = report.log_line(12);
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["step"], 12);
        assert_eq!(v["total"], 0.0);
        assert!(v.get("nvcf").is_some());
    }
}

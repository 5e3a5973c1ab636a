use crate::error::{Error, Result};
use crate::tensor::tape::{accumulate, Node, Op};
use crate::tensor::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossDiagnostics {
    pub unmasked: usize,
    /// Every pixel carried the uncertain label; the loss is 0 with no gradient.
    pub all_masked: bool,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Tape {
    /// Mean sigmoid cross-entropy over pixels whose label is not −1, with
    /// positive pixels weighted by `pos_weight`.
    pub fn masked_bce(&mut self, logits: Var, labels: &[f32], pos_weight: f32) -> Result<(Var, LossDiagnostics)> {
        let z = self.value(logits);
        if labels.len() != z.len() {
            return Err(Error::dim("masked_bce", format!("{} labels for {} logits", labels.len(), z.len())));
        }
        if !(pos_weight > 0.0) || !pos_weight.is_finite() {
            return Err(Error::invalid(format!("pos_weight must be finite and > 0, got {pos_weight}")));
        }
        let pw = pos_weight as f64;
        let unmasked = labels.iter().filter(|&&l| l != -1.0).count();
        let mut dlogits = vec![0.0f32; z.len()];
        let mut total = 0.0f64;
        for (i, (&zi, &y)) in z.iter().zip(labels).enumerate() {
            let zi = zi as f64;
            let grad = if y == 1.0 {
                total += pw * softplus(-zi);
                pw * (super::elementwise::sigmoid(zi) - 1.0)
            } else if y == 0.0 {
                total += softplus(zi);
                super::elementwise::sigmoid(zi)
            } else if y == -1.0 {
                continue;
            } else {
                return Err(Error::invalid(format!("label {y} at index {i} is not in {{-1, 0, 1}}")));
            };
            dlogits[i] = (grad / unmasked as f64) as f32;
        }
        let value = if unmasked == 0 { 0.0 } else { total / unmasked as f64 };
        let diag = LossDiagnostics { unmasked, all_masked: unmasked == 0 };
        let v = self.push("masked_bce", vec![], vec![value as f32], Op::MaskedBce { logits, dlogits })?;
        Ok((v, diag))
    }
}

pub(super) fn backward(nodes: &[Node], logits: Var, dlogits: &[f32], g: &[f32], grads: &mut [Option<Vec<f32>>]) {
    accumulate(nodes, grads, logits, |d| d.iter_mut().zip(dlogits).for_each(|(d, dl)| *d += g[0] * dl));
}

#[cfg(test)]
mod tests {
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn single_positive_at_zero_logit_is_ln2() {
        let mut t = Tape::new();
        let z = t.input(Tensor::zeros(&[1, 1, 1, 1]).unwrap(), true);
        let (l, d) = t.masked_bce(z, &[1.0], 1.0).unwrap();
        assert!((t.value(l)[0] as f64 - std::f64::consts::LN_2).abs() < 1e-7);
        assert_eq!(d.unmasked, 1);
    }

    #[test]
    fn fully_masked_is_zero_with_flag() {
        let mut t = Tape::new();
        let z = t.input(Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap(), true);
        let (l, d) = t.masked_bce(z, &[-1.0; 3], 2.0).unwrap();
        assert_eq!(t.value(l), &[0.0]);
        assert!(d.all_masked);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(z).unwrap(), &[0.0; 3]);
    }

    #[test]
    fn rejects_bad_labels() {
        let mut t = Tape::new();
        let z = t.input(Tensor::zeros(&[2]).unwrap(), true);
        assert!(t.masked_bce(z, &[0.5, 1.0], 1.0).is_err());
        assert!(t.masked_bce(z, &[0.0], 1.0).is_err());
    }
}

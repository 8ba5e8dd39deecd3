//! RMSprop with L2 weight decay folded into the gradient.
//!
//! Update rule per coordinate:
//!
//! ```text
//! g <- g + weight_decay * p        (weights only, not biases / batch norm)
//! s <- decay * s + (1 - decay) * g^2
//! p <- p - lr * g / (sqrt(s) + eps)
//! ```

use crate::error::{Error, Result};

use super::layers::ParamKind;

/// Structural pairing of a parameter holder with a same-shaped gradient
/// holder, visiting every tensor in registry order.
pub trait ParamPairs {
    fn visit_pair_mut<F: FnMut(&str, ParamKind, &mut [f64], &[f64])>(&mut self, grads: &Self, f: F);
}

#[derive(Debug, Clone)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    pub weight_decay: f64,
    state: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(lr: f64, decay: f64, eps: f64, weight_decay: f64) -> Self {
        RmsProp { lr, decay, eps, weight_decay, state: Vec::new() }
    }

    /// Apply one update to `params` given same-shaped `grads`.
    pub fn step<T: ParamPairs>(&mut self, params: &mut T, grads: &T) -> Result<()> {
        let mut idx = 0usize;
        let mut shape_err: Option<String> = None;
        params.visit_pair_mut(grads, |name, kind, p, g| {
            if p.len() != g.len() {
                if shape_err.is_none() {
                    shape_err = Some(format!(
                        "tensor {name}: {} params vs {} gradients",
                        p.len(),
                        g.len()
                    ));
                }
                return;
            }
            if self.state.len() == idx {
                self.state.push(vec![0.0; p.len()]);
            }
            let s = &mut self.state[idx];
            let wd = if kind == ParamKind::Weight { self.weight_decay } else { 0.0 };
            for j in 0..p.len() {
                let grad = g[j] + wd * p[j];
                s[j] = self.decay * s[j] + (1.0 - self.decay) * grad * grad;
                p[j] -= self.lr * grad / (s[j].sqrt() + self.eps);
            }
            idx += 1;
        });
        match shape_err {
            Some(m) => Err(Error::Contract(format!("optimizer mismatch: {m}"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flat {
        w: Vec<f64>,
        b: Vec<f64>,
    }

    impl ParamPairs for Flat {
        fn visit_pair_mut<F: FnMut(&str, ParamKind, &mut [f64], &[f64])>(
            &mut self,
            grads: &Self,
            mut f: F,
        ) {
            f("w", ParamKind::Weight, &mut self.w, &grads.w);
            f("b", ParamKind::Bias, &mut self.b, &grads.b);
        }
    }

    #[test]
    fn hand_evaluated_scalar_step() {
        // p=1, g=1, s=0, decay=0.9, lr=0.1, eps=1e-8:
        // s' = 0.1, p' = 1 - 0.1 / (sqrt(0.1) + 1e-8) = 0.683772...
        let mut opt = RmsProp::new(0.1, 0.9, 1e-8, 0.0);
        let mut p = Flat { w: vec![1.0], b: vec![] };
        let g = Flat { w: vec![1.0], b: vec![] };
        opt.step(&mut p, &g).unwrap();
        assert!((opt.state[0][0] - 0.1).abs() < 1e-15);
        assert!((p.w[0] - 0.683772).abs() < 1e-6, "p = {}", p.w[0]);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged_without_decay() {
        let mut opt = RmsProp::new(0.1, 0.9, 1e-8, 0.0);
        let mut p = Flat { w: vec![0.5, -2.0], b: vec![1.25] };
        let g = Flat { w: vec![0.0, 0.0], b: vec![0.0] };
        opt.step(&mut p, &g).unwrap();
        assert_eq!(p.w, vec![0.5, -2.0]);
        assert_eq!(p.b, vec![1.25]);
    }

    #[test]
    fn weight_decay_applies_to_weights_only() {
        let mut opt = RmsProp::new(0.1, 0.9, 1e-8, 0.5);
        let mut p = Flat { w: vec![1.0], b: vec![1.0] };
        let g = Flat { w: vec![0.0], b: vec![0.0] };
        opt.step(&mut p, &g).unwrap();
        assert!(p.w[0] < 1.0, "weight decays");
        assert_eq!(p.b[0], 1.0, "bias does not");
    }

    #[test]
    fn steps_are_deterministic() {
        let run = || {
            let mut opt = RmsProp::new(1e-3, 0.9, 1e-8, 1e-5);
            let mut p = Flat { w: vec![0.3, -0.7, 0.11], b: vec![0.0] };
            for i in 0..10 {
                let g = Flat {
                    w: p.w.iter().map(|v| v * 0.5 + i as f64 * 0.01).collect(),
                    b: vec![0.02],
                };
                opt.step(&mut p, &g).unwrap();
            }
            p.w
        };
        let a = run();
        let b = run();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

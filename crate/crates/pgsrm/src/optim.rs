//! Gradient post-processing and the Adam parameter update.

use crate::num::Real;

/// Scales every gradient by `max_norm / g` when the global L2 norm `g`
/// exceeds `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm<S: Real>(grads: &mut [Vec<S>], max_norm: S) -> S {
    let mut sq = S::ZERO;
    for g in grads.iter() {
        for &v in g {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// Adam optimizer state over a fixed list of parameter tensors.
///
/// Bias-corrected first/second moments with the conventional transformer
/// defaults (beta1 0.9, beta2 0.999, eps 1e-8).
#[derive(Debug, Clone)]
pub struct Adam<S> {
    beta1: S,
    beta2: S,
    eps: S,
    step: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Real> Adam<S> {
    /// `sizes` lists the element count of each parameter tensor, in the order
    /// parameters and gradients will be passed to [`Adam::step`].
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            beta1: S::from_f64(0.9),
            beta2: S::from_f64(0.999),
            eps: S::from_f64(1e-8),
            step: 0,
            m: sizes.iter().map(|&n| vec![S::ZERO; n]).collect(),
            v: sizes.iter().map(|&n| vec![S::ZERO; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. `params[i]` and `grads[i]` must have the
    /// length declared at construction.
    pub fn step(&mut self, params: &mut [&mut [S]], grads: &[Vec<S>], lr: S) {
        assert_eq!(params.len(), self.m.len(), "parameter count mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = S::ONE - self.beta1.powi(t);
        let bc2 = S::ONE - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.len(), g.len(), "parameter/gradient shape mismatch");
            assert_eq!(p.len(), m.len(), "parameter/state shape mismatch");
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (S::ONE - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (S::ONE - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_below_threshold_is_identity() {
        let mut grads = vec![vec![0.3f64, 0.4]];
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 0.5).abs() < 1e-12);
        assert_eq!(grads[0], vec![0.3, 0.4]);
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut grads = vec![vec![3.0f64], vec![4.0f64]];
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((grads[0][0] - 0.6).abs() < 1e-12);
        assert!((grads[1][0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn clip_post_norm_bounded() {
        let mut rng = crate::rng::Rng::new(17);
        let mut grads: Vec<Vec<f32>> = (0..4)
            .map(|_| (0..13).map(|_| rng.normal() as f32 * 3.0).collect())
            .collect();
        clip_global_norm(&mut grads, 1.0f32);
        let post: f32 = grads
            .iter()
            .flat_map(|g| g.iter().map(|&v| v * v))
            .sum::<f32>()
            .sqrt();
        assert!(post <= 1.0 + 1e-6, "{post}");
    }

    #[test]
    fn clip_zero_gradients_pass_through() {
        let mut grads = vec![vec![0.0f32; 5]];
        let norm = clip_global_norm(&mut grads, 1.0);
        assert_eq!(norm, 0.0);
        assert!(grads[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut adam: Adam<f64> = Adam::new(&[3]);
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![vec![0.0; 3]];
        adam.step(&mut [&mut p], &g, 0.1);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn adam_single_step_matches_closed_form() {
        // From zero moments: m1 = (1-b1) g, v1 = (1-b2) g^2, with bias
        // correction mhat = g, vhat = g^2, so the step is lr * g / (|g| + eps).
        let g0 = 0.37f64;
        let lr = 0.01;
        let mut adam: Adam<f64> = Adam::new(&[1]);
        let mut p = vec![2.0];
        adam.step(&mut [&mut p], &[vec![g0]], lr);
        let expect = 2.0 - lr * g0 / (g0.abs() + 1e-8);
        assert!((p[0] - expect).abs() < 1e-12, "{} vs {}", p[0], expect);
    }

    #[test]
    fn adam_batched_equals_independent() {
        let ga = vec![0.3f64, -0.2];
        let gb = vec![1.5f64];
        let mut joint: Adam<f64> = Adam::new(&[2, 1]);
        let mut pa = vec![0.1, 0.2];
        let mut pb = vec![-0.5];
        joint.step(&mut [&mut pa, &mut pb], &[ga.clone(), gb.clone()], 0.05);

        let mut solo_a: Adam<f64> = Adam::new(&[2]);
        let mut solo_b: Adam<f64> = Adam::new(&[1]);
        let mut qa = vec![0.1, 0.2];
        let mut qb = vec![-0.5];
        solo_a.step(&mut [&mut qa], &[ga], 0.05);
        solo_b.step(&mut [&mut qb], &[gb], 0.05);

        assert_eq!(pa, qa);
        assert_eq!(pb, qb);
    }

    #[test]
    #[should_panic(expected = "shape mismatch")]
    fn adam_rejects_mismatched_gradient() {
        let mut adam: Adam<f32> = Adam::new(&[2]);
        let mut p = vec![0.0f32, 1.0];
        adam.step(&mut [&mut p], &[vec![1.0f32; 3]], 0.1);
    }
}

use super::{DenseNet, Gradients};
use crate::error::{check_dim, Error, Result};

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &DenseNet, lr: f64) -> Self {
        Self::with_betas(net, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(net: &DenseNet, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Gradients {
        &self.m
    }

    pub fn second_moment(&self) -> &Gradients {
        &self.v
    }

    /// Applies one update. A non-finite gradient leaves both the network and the
    /// optimizer state untouched.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        check_dim("adam layers", self.m.weights.len(), grads.weights.len())?;
        check_dim("adam layers", net.layers.len(), grads.weights.len())?;
        for (layer, (gw, gb)) in net.layers.iter().zip(grads.weights.iter().zip(&grads.bias)) {
            check_dim("adam weights", layer.weights.len(), gw.len())?;
            check_dim("adam bias", layer.bias.len(), gb.len())?;
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient passed to adam".into()));
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);

        for (idx, layer) in net.layers.iter_mut().enumerate() {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let g = grads.weights[idx].iter().chain(&grads.bias[idx]);
            let m = self.m.weights[idx].iter_mut().chain(self.m.bias[idx].iter_mut());
            let v = self.v.weights[idx].iter_mut().chain(self.v.bias[idx].iter_mut());
            for (((p, &g), m), v) in params.zip(g).zip(m).zip(v) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};

    fn scalar_net(x: f64) -> DenseNet {
        // one identity unit whose bias is the optimised scalar
        DenseNet::new(vec![Dense::new(1, 1, vec![0.0], vec![x], Activation::Identity).unwrap()])
            .unwrap()
    }

    fn grads_for(net: &DenseNet, gw: f64, gb: f64) -> Gradients {
        let mut g = Gradients::zeros_like(net);
        g.weights[0][0] = gw;
        g.bias[0][0] = gb;
        g
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut net = scalar_net(0.7);
        let before = net.clone();
        let mut opt = Adam::new(&net, 0.1);
        for _ in 0..5 {
            opt.step(&mut net, &Gradients::zeros_like(&before)).unwrap();
        }
        assert_eq!(net, before);
        assert_eq!(opt.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        for g in [3.0, -0.02, 1e4] {
            let mut net = scalar_net(1.0);
            let mut opt = Adam::new(&net, 0.01);
            let grads = grads_for(&net, 0.0, g);
            opt.step(&mut net, &grads).unwrap();
            let moved = net.layers()[0].bias()[0] - 1.0;
            let expected = -0.01 * g.signum();
            // |g| / (|g| + eps) correction
            assert!((moved - expected).abs() < 0.01 * 1e-8 / g.abs() + 1e-15, "{moved}");
        }
    }

    #[test]
    fn non_finite_gradient_aborts_update() {
        let mut net = scalar_net(1.0);
        let mut opt = Adam::new(&net, 0.01);
        let before = (net.clone(), opt.clone());
        let g = grads_for(&net, f64::NAN, 1.0);
        let err = opt.step(&mut net, &g).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!((net, opt), before);
    }

    #[test]
    fn moments_match_parameter_shapes() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let net = DenseNet::mlp(3, &[7, 5], 2, 1.0, &mut rng).unwrap();
        let opt = Adam::new(&net, 1e-3);
        let shape = Gradients::zeros_like(&net);
        assert_eq!(opt.first_moment(), &shape);
        assert_eq!(opt.second_moment(), &shape);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(x) = x^2, grad 2x; independent scalar simulation of the same recurrence
        let mut net = scalar_net(1.0);
        let mut opt = Adam::new(&net, 0.1);
        let (mut m, mut v, mut x_ref) = (0.0f64, 0.0f64, 1.0f64);
        let mut trace = Vec::new();
        for t in 1..=100 {
            let x = net.layers()[0].bias()[0];
            let g = grads_for(&net, 0.0, 2.0 * x);
            opt.step(&mut net, &g).unwrap();

            let g = 2.0 * x_ref;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x_ref -= 0.1 * mh / (vh.sqrt() + 1e-8);
            trace.push(net.layers()[0].bias()[0]);
        }
        assert!((trace[99] - x_ref).abs() < 1e-12);
        assert!(trace[99].abs() < 0.1, "final x = {}", trace[99]);
        // early steps move steadily toward the minimum
        for w in trace[..8].windows(2) {
            assert!(w[1].abs() < w[0].abs());
        }
    }
}

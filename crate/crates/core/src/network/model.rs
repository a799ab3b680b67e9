use super::{DataSet, NetworkParams};
use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::numerics::dot;

/// Every intermediate of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace<S = f64> {
    /// `x^(0)`.
    pub input: Vec<f64>,
    /// `z^(ℓ) = W^(ℓ) x^(ℓ-1)` for `ℓ = 1..=H`.
    pub preactivations: Vec<Vec<S>>,
    /// `x^(ℓ) = σ(z^(ℓ)) / √m` for `ℓ = 1..=H`.
    pub activations: Vec<Vec<S>>,
    /// `f = aᵀ x^(H)`.
    pub output: S,
}

impl<S: Scalar> ForwardTrace<S> {
    /// `x^(ℓ)` for `ℓ = 0..=H`, with the input lifted to constants.
    pub fn layer_output(&self, layer: usize) -> Vec<S> {
        if layer == 0 {
            self.input.iter().map(|&v| S::from_real(v)).collect()
        } else {
            self.activations[layer - 1].clone()
        }
    }
}

impl<S: Scalar> NetworkParams<S> {
    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace<S>> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let inv_sqrt_m = 1.0 / (self.width() as f64).sqrt();
        let act = *self.activation();
        let mut preactivations = Vec::with_capacity(self.depth());
        let mut activations: Vec<Vec<S>> = Vec::with_capacity(self.depth());
        for (layer, w) in self.weights().iter().enumerate() {
            let z = if layer == 0 { w.matvec_real(x) } else { w.matvec(&activations[layer - 1]) };
            let xl = z.iter().map(|&zi| zi.smooth(&act, 0).scale(inv_sqrt_m)).collect();
            preactivations.push(z);
            activations.push(xl);
        }
        let output = dot(self.output_weights(), activations.last().expect("depth >= 1"));
        Ok(ForwardTrace { input: x.to_vec(), preactivations, activations, output })
    }

    /// Backward vectors `b^(ℓ) = ∂f/∂z^(ℓ)`:
    /// `b^(H) = σ'_H a/√m`, `b^(ℓ) = σ'_ℓ (W^(ℓ+1))ᵀ b^(ℓ+1)/√m`.
    pub fn backward_vectors(&self, trace: &ForwardTrace<S>) -> Vec<Vec<S>> {
        let inv_sqrt_m = 1.0 / (self.width() as f64).sqrt();
        let act = *self.activation();
        let h = self.depth();
        let mut out: Vec<Vec<S>> = vec![Vec::new(); h];
        let mut upstream: Vec<S> = self.output_weights().to_vec();
        for layer in (0..h).rev() {
            if layer + 1 < h {
                upstream = self.weights()[layer + 1].tmatvec(&out[layer + 1]);
            }
            out[layer] = trace.preactivations[layer]
                .iter()
                .zip(&upstream)
                .map(|(&z, &u)| (z.smooth(&act, 1) * u).scale(inv_sqrt_m))
                .collect();
        }
        out
    }

    /// `∇_θ f` in canonical order: `∂f/∂W^(ℓ) = b^(ℓ) ⊗ x^(ℓ-1)`, `∂f/∂a = x^(H)`.
    pub fn param_gradient(&self, trace: &ForwardTrace<S>) -> Vec<S> {
        let mut out = vec![S::zero(); self.param_count()];
        self.accumulate_gradient(trace, S::one(), &mut out);
        out
    }

    /// `out += weight · ∇_θ f`.
    pub fn accumulate_gradient(&self, trace: &ForwardTrace<S>, weight: S, out: &mut [S]) {
        assert_eq!(out.len(), self.param_count());
        let back = self.backward_vectors(trace);
        let mut at = 0;
        for (layer, b) in back.iter().enumerate() {
            if layer == 0 {
                for &bi in b {
                    let wb = weight * bi;
                    for (o, &xj) in out[at..at + trace.input.len()].iter_mut().zip(&trace.input) {
                        *o += wb.scale(xj);
                    }
                    at += trace.input.len();
                }
            } else {
                let prev = &trace.activations[layer - 1];
                for &bi in b {
                    let wb = weight * bi;
                    for (o, &xj) in out[at..at + prev.len()].iter_mut().zip(prev) {
                        *o += wb * xj;
                    }
                    at += prev.len();
                }
            }
        }
        for (o, &xh) in out[at..].iter_mut().zip(trace.activations.last().unwrap()) {
            *o += weight * xh;
        }
    }

    /// Network outputs on every training input.
    pub fn outputs(&self, data: &DataSet) -> Result<Vec<S>> {
        data.inputs().iter().map(|x| Ok(self.forward(x)?.output)).collect()
    }
}

/// `L(θ) = (1/2n) Σ_α (f(x_α, θ) − y_α)²`.
pub fn loss<S: Scalar>(params: &NetworkParams<S>, data: &DataSet) -> Result<S> {
    let mut acc = S::zero();
    for (x, &y) in data.inputs().iter().zip(data.labels()) {
        let r = params.forward(x)?.output - S::from_real(y);
        acc += r * r;
    }
    Ok(acc.scale(0.5 / data.n() as f64))
}

/// `∇_θ L = (1/n) Σ_β ∇_θ f_β (f_β − y_β)`.
pub fn loss_gradient(params: &NetworkParams, data: &DataSet) -> Result<Vec<f64>> {
    let mut out = vec![0.0; params.param_count()];
    let inv_n = 1.0 / data.n() as f64;
    for (x, &y) in data.inputs().iter().zip(data.labels()) {
        let trace = params.forward(x)?;
        params.accumulate_gradient(&trace, (trace.output - y) * inv_n, &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, NetworkConfig};
    use crate::numerics::{norm2, Matrix, RngStream};

    fn scalar_net(act: Activation, w: f64, a: f64) -> NetworkParams {
        NetworkParams::from_parts(1, act, vec![Matrix::from_vec(1, 1, vec![w]).unwrap()], vec![a]).unwrap()
    }

    #[test]
    fn scalar_tanh_forward() {
        let t = scalar_net(Activation::Tanh, 2.0, 3.0).forward(&[0.5]).unwrap();
        assert!((t.activations[0][0] - 0.761_594_155_955_764_9).abs() < 1e-15);
        assert!((t.output - 2.284_782_467_867_294_6).abs() < 1e-14);
    }

    #[test]
    fn scalar_softplus_forward() {
        let t = scalar_net(Activation::softplus(10.0), 2.0, 1.0).forward(&[0.5]).unwrap();
        let expected = (1.0 + 10f64.exp()).ln() / 10.0;
        assert!((t.output - expected).abs() < 1e-15);
        assert!((t.output - 1.000_004_539_889_921_8).abs() < 1e-14);
    }

    #[test]
    fn zero_input_gives_zero_output_for_tanh() {
        let p = NetworkConfig::new(3, 8, 3).with_seed(1).init_params().unwrap();
        assert_eq!(p.forward(&[0.0; 3]).unwrap().output, 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let p = NetworkConfig::new(3, 8, 1).init_params().unwrap();
        assert!(matches!(p.forward(&[1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn trace_layers_recompute_exactly() {
        let p = NetworkConfig::new(3, 7, 3).with_seed(2).init_params().unwrap();
        let t = p.forward(&[0.3, -0.5, 0.8]).unwrap();
        for l in 1..=3 {
            let prev = t.layer_output(l - 1);
            let z = p.weights()[l - 1].matvec(&prev);
            assert_eq!(z, t.preactivations[l - 1]);
            let inv = 1.0 / 7f64.sqrt();
            let x: Vec<f64> = z.iter().map(|v| v.tanh() * inv).collect();
            assert_eq!(x, t.activations[l - 1]);
        }
    }

    #[test]
    fn scalar_gradient_by_hand() {
        let p = scalar_net(Activation::Tanh, 2.0, 3.0);
        let g = p.param_gradient(&p.forward(&[0.5]).unwrap());
        let sech2 = 1.0 - 1f64.tanh().powi(2);
        assert!((g[0] - 3.0 * 0.5 * sech2).abs() < 1e-15);
        assert!((g[0] - 0.629_961_512_421_039).abs() < 1e-12);
        assert!((g[1] - 0.761_594_155_955_764_9).abs() < 1e-15);
    }

    #[test]
    fn linear_single_layer_output_gradient() {
        let p = NetworkConfig::new(3, 5, 1).with_activation(Activation::Identity).with_seed(3).init_params().unwrap();
        let x = [0.2, 0.4, -0.1];
        let g = p.param_gradient(&p.forward(&x).unwrap());
        let wx: Vec<f64> = p.weights()[0].matvec_real(&x).iter().map(|v| v / 5f64.sqrt()).collect();
        assert_eq!(&g[15..], &wx[..]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let acts = [Activation::Tanh, Activation::softplus(2.0), Activation::Identity];
        let mut rng = RngStream::new(77, 0);
        for (i, act) in acts.into_iter().enumerate() {
            for k in 0..6 {
                let d = 1 + (k % 4);
                let m = 2 + k;
                let h_layers = 1 + (k % 3);
                let p = NetworkConfig::new(d, m, h_layers)
                    .with_activation(act)
                    .with_seed((i * 10 + k) as u64)
                    .init_params()
                    .unwrap();
                let x = rng.gaussian_vec(d, 0.6);
                let g = p.param_gradient(&p.forward(&x).unwrap());
                let theta = p.flatten();
                let h = 1e-5;
                let mut fd = vec![0.0; theta.len()];
                for j in 0..theta.len() {
                    let mut tp = theta.clone();
                    tp[j] += h;
                    let mut tm = theta.clone();
                    tm[j] -= h;
                    let fp = p.with_flat(&tp).unwrap().forward(&x).unwrap().output;
                    let fm = p.with_flat(&tm).unwrap().forward(&x).unwrap().output;
                    fd[j] = (fp - fm) / (2.0 * h);
                }
                let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
                assert!(norm2(&diff) <= 1e-7 * norm2(&g).max(1e-8), "{act}: {}", norm2(&diff) / norm2(&g));
            }
        }
    }

    #[test]
    fn loss_examples() {
        let p = scalar_net(Activation::Identity, 1.0, 2.0);
        let data = DataSet::new(vec![vec![1.0]], vec![0.0]).unwrap();
        assert_eq!(loss(&p, &data).unwrap(), 2.0);
        let exact = DataSet::new(vec![vec![1.0]], vec![2.0]).unwrap();
        assert_eq!(loss(&p, &exact).unwrap(), 0.0);
        // residuals (1, -1)
        let two = DataSet::new(vec![vec![1.0], vec![0.5]], vec![1.0, 2.0]).unwrap();
        assert_eq!(loss(&p, &two).unwrap(), 0.5);
    }

    #[test]
    fn layer_norms_are_order_one() {
        for seed in 0..20 {
            let p = NetworkConfig::new(4, 512, 2).with_seed(seed).init_params().unwrap();
            let x = [0.5, 0.5, 0.5, 0.5];
            let t = p.forward(&x).unwrap();
            let n1 = norm2(&t.activations[0]);
            assert!((0.1..=10.0).contains(&n1), "seed {seed}: {n1}");
        }
    }

    #[test]
    fn output_stays_order_one_across_widths() {
        let x = [0.6, 0.0, 0.8];
        for m in [64, 128, 256, 512] {
            let mut outs: Vec<f64> = (0..20)
                .map(|s| {
                    NetworkConfig::new(3, m, 2).with_seed(s).init_params().unwrap().forward(&x).unwrap().output.abs()
                })
                .collect();
            outs.sort_by(f64::total_cmp);
            let median = 0.5 * (outs[9] + outs[10]);
            assert!((0.01..=100.0).contains(&median), "m={m}: {median}");
        }
    }
}

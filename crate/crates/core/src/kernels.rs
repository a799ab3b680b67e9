//! The neural tangent kernel `K^(2)` and its higher-order hierarchy.
//!
//! `K^(2)(x_α, x_β) = ⟨∇_θ f(x_α), ∇_θ f(x_β)⟩` is evaluated two ways: as a
//! Gram matrix of flattened gradients ([`ntk_gram`]) and as the layerwise sum
//! `Σ_ℓ ⟨b^(ℓ)_α, b^(ℓ)_β⟩⟨x^(ℓ-1)_α, x^(ℓ-1)_β⟩ + ⟨x^(H)_α, x^(H)_β⟩`
//! ([`ntk_layerwise`]).
//!
//! Higher orders follow from
//!
//! ```text
//! K^(r+1)(x_1, …, x_r, x_β) = ⟨∇_θ K^(r)(x_1, …, x_r), ∇_θ f(x_β)⟩,
//! ```
//!
//! which [`kernel_hierarchy`] evaluates exactly with nested dual numbers: the
//! last index is the outermost lift, and every inner direction `∇f` is
//! recomputed at the already-perturbed parameters. [`kernel_fd_oracle`]
//! evaluates the same recursion with central differences in plain `f64` and
//! serves as an independent check.

use rayon::prelude::*;

use crate::autodiff::{lift_params, lift_params_real, Dual, Scalar};
use crate::error::{Error, Result};
use crate::network::{DataSet, NetworkParams};
use crate::numerics::{dot, Matrix};

/// Deepest dual nesting instantiated; bounds the hierarchy order.
pub const MAX_NESTING_DEPTH: usize = 3;

/// Highest kernel order [`kernel_hierarchy`] can produce.
pub const MAX_KERNEL_ORDER: usize = 2 + MAX_NESTING_DEPTH;

/// Values of `K^(r)` on a dense index grid.
///
/// For kernels over the training set the shape is `[n; r]`. Kernels that
/// include extra probe points have shape `[P, P, n, …, n]`: the first two
/// slots range over the probes and the remaining `r - 2` over the training
/// directions.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelTensor {
    order: usize,
    shape: Vec<usize>,
    values: Vec<f64>,
    snapshot: u64,
}

impl KernelTensor {
    pub fn new(order: usize, shape: Vec<usize>, values: Vec<f64>, snapshot: u64) -> Result<Self> {
        if order < 2 || shape.len() != order {
            return Err(Error::invalid(format!("kernel of order {order} needs {order} dimensions")));
        }
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::invalid("kernel values do not match shape"));
        }
        Ok(Self { order, shape, values, snapshot })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Fingerprint of the parameters the kernel was evaluated at.
    pub fn snapshot(&self) -> u64 {
        self.snapshot
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.order);
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &dim)| {
            assert!(i < dim, "kernel index out of range");
            acc * dim + i
        })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[self.offset(index)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// The order-2 kernel as a matrix.
    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.order != 2 {
            return Err(Error::invalid("only order-2 kernels are matrices"));
        }
        Matrix::from_vec(self.shape[0], self.shape[1], self.values.clone())
    }

    /// Largest `|K(i, j, …) − K(j, i, …)|`.
    pub fn first_pair_asymmetry(&self) -> f64 {
        let (p, rest) = (self.shape[0], self.values.len() / (self.shape[0] * self.shape[1]));
        let mut worst = 0.0_f64;
        for i in 0..p {
            for j in 0..p {
                for k in 0..rest {
                    let a = self.values[(i * p + j) * rest + k];
                    let b = self.values[(j * p + i) * rest + k];
                    worst = worst.max((a - b).abs());
                }
            }
        }
        worst
    }

    /// `Σ_j T(…, j) v_j` over the last slot, as a flat row-major vector.
    pub fn contract_last(&self, v: &[f64]) -> Vec<f64> {
        let n = *self.shape.last().expect("kernel tensors have at least two slots");
        assert_eq!(n, v.len(), "contraction length mismatch");
        self.values.par_chunks(n).with_min_len(64).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// Restricts the two probe slots to `first` and `second` ranges.
    pub fn slice_probes(&self, first: std::ops::Range<usize>, second: std::ops::Range<usize>) -> KernelTensor {
        let p = self.shape[0];
        let rest = self.values.len() / (p * self.shape[1]);
        let mut values = Vec::with_capacity(first.len() * second.len() * rest);
        for i in first.clone() {
            for j in second.clone() {
                let at = (i * p + j) * rest;
                values.extend_from_slice(&self.values[at..at + rest]);
            }
        }
        let mut shape = self.shape.clone();
        shape[0] = first.len();
        shape[1] = second.len();
        KernelTensor { order: self.order, shape, values, snapshot: self.snapshot }
    }

    /// One row per index tuple: `i1,…,ir,value`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (1..=self.order).map(|k| format!("i{k}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",value\n");
        let mut index = vec![0usize; self.order];
        for v in &self.values {
            for i in &index {
                out.push_str(&i.to_string());
                out.push(',');
            }
            out.push_str(&format!("{v:e}\n"));
            for k in (0..self.order).rev() {
                index[k] += 1;
                if index[k] < self.shape[k] {
                    break;
                }
                index[k] = 0;
            }
        }
        out
    }
}

/// `‖a − b‖∞ / ‖b‖∞`, or the absolute difference when `b` vanishes.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// NTK as the Gram matrix of flattened parameter gradients.
pub fn ntk_gram(params: &NetworkParams, data: &DataSet) -> Result<KernelTensor> {
    let grads: Vec<Vec<f64>> =
        data.inputs().iter().map(|x| Ok(params.param_gradient(&params.forward(x)?))).collect::<Result<_>>()?;
    let n = grads.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = dot(&grads[i], &grads[j]);
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    KernelTensor::new(2, vec![n, n], values, params.fingerprint())
}

/// NTK assembled from per-layer contributions `G^(1), …, G^(H+1)`.
#[derive(Clone, Debug)]
pub struct LayerwiseNtk {
    pub total: KernelTensor,
    /// `contributions[ℓ-1] = G^(ℓ)`; the last entry is the output-layer term.
    pub contributions: Vec<Matrix>,
}

pub fn ntk_layerwise(params: &NetworkParams, data: &DataSet) -> Result<LayerwiseNtk> {
    let n = data.n();
    let parts = per_sample_factors(params, data.inputs())?;
    let h = params.depth();
    let mut contributions = vec![Matrix::zeros(n, n); h + 1];
    let mut total = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let terms = layer_terms(&parts[i], &parts[j]);
            let mut sum = 0.0;
            for (l, g) in terms.into_iter().enumerate() {
                contributions[l][(i, j)] = g;
                contributions[l][(j, i)] = g;
                sum += g;
            }
            total[i * n + j] = sum;
            total[j * n + i] = sum;
        }
    }
    Ok(LayerwiseNtk { total: KernelTensor::new(2, vec![n, n], total, params.fingerprint())?, contributions })
}

/// Backward vectors and layer inputs of one sample.
struct SampleFactors<S> {
    back: Vec<Vec<S>>,
    /// `x^(0) … x^(H)` lifted to `S`.
    layers: Vec<Vec<S>>,
}

fn per_sample_factors<S: Scalar>(params: &NetworkParams<S>, xs: &[Vec<f64>]) -> Result<Vec<SampleFactors<S>>> {
    xs.iter()
        .map(|x| {
            let trace = params.forward(x)?;
            let back = params.backward_vectors(&trace);
            let layers = (0..=params.depth()).map(|l| trace.layer_output(l)).collect();
            Ok(SampleFactors { back, layers })
        })
        .collect()
}

/// `[G^(1), …, G^(H+1)]` for one pair of samples.
fn layer_terms<S: Scalar>(a: &SampleFactors<S>, b: &SampleFactors<S>) -> Vec<S> {
    let h = a.back.len();
    let mut out = Vec::with_capacity(h + 1);
    for l in 0..h {
        out.push(dot(&a.back[l], &b.back[l]) * dot(&a.layers[l], &b.layers[l]));
    }
    out.push(dot(&a.layers[h], &b.layers[h]));
    out
}

/// `K^(2)` over `probes × probes` at any scalar type, exactly symmetric.
fn ntk_block<S: Scalar>(params: &NetworkParams<S>, probes: &[Vec<f64>]) -> Result<Vec<S>> {
    let p = probes.len();
    let parts = per_sample_factors(params, probes)?;
    let mut out = vec![S::zero(); p * p];
    for i in 0..p {
        for j in i..p {
            let v = layer_terms(&parts[i], &parts[j]).into_iter().fold(S::zero(), |acc, g| acc + g);
            out[i * p + j] = v;
            out[j * p + i] = v;
        }
    }
    Ok(out)
}

/// Directions along which the trailing kernel indices differentiate.
#[derive(Clone, Copy, Debug)]
pub enum Directions<'a> {
    /// `∇_θ f(x_β)` for each training input, re-evaluated at the current
    /// (possibly perturbed) parameters.
    Gradients(&'a [Vec<f64>]),
    /// Fixed real vectors, constant under perturbation.
    Fixed(&'a [Vec<f64>]),
}

impl Directions<'_> {
    fn len(&self) -> usize {
        match self {
            Directions::Gradients(xs) => xs.len(),
            Directions::Fixed(vs) => vs.len(),
        }
    }
}

/// Scalar types that can host one more level of directional differentiation.
pub trait NestedScalar: Scalar {
    /// Flattened `[P, P, n^depth]` block of `K^(2+depth)` at `params`.
    fn kernel_block(
        params: &NetworkParams<Self>,
        probes: &[Vec<f64>],
        dirs: Directions<'_>,
        depth: usize,
    ) -> Result<Vec<Self>>;
}

fn descend<S>(params: &NetworkParams<S>, probes: &[Vec<f64>], dirs: Directions<'_>, depth: usize) -> Result<Vec<S>>
where
    S: Scalar,
    Dual<S>: NestedScalar,
{
    let count = dirs.len();
    let blocks: Vec<Vec<S>> = (0..count)
        .into_par_iter()
        .map(|beta| {
            let lifted = match dirs {
                Directions::Gradients(xs) => {
                    let grad = params.param_gradient(&params.forward(&xs[beta])?);
                    lift_params(params, &grad)?
                }
                Directions::Fixed(vs) => lift_params_real(params, &vs[beta])?,
            };
            let sub = <Dual<S> as NestedScalar>::kernel_block(&lifted, probes, dirs, depth - 1)?;
            Ok(sub.into_iter().map(|v| v.tangent).collect())
        })
        .collect::<Result<_>>()?;
    let inner = blocks.first().map_or(0, Vec::len);
    let mut out = vec![S::zero(); inner * count];
    for (beta, block) in blocks.into_iter().enumerate() {
        for (idx, v) in block.into_iter().enumerate() {
            out[idx * count + beta] = v;
        }
    }
    Ok(out)
}

macro_rules! nested_scalar {
    ($($t:ty),*) => {$(
        impl NestedScalar for $t {
            fn kernel_block(
                params: &NetworkParams<Self>,
                probes: &[Vec<f64>],
                dirs: Directions<'_>,
                depth: usize,
            ) -> Result<Vec<Self>> {
                if depth == 0 {
                    ntk_block(params, probes)
                } else {
                    descend(params, probes, dirs, depth)
                }
            }
        }
    )*};
}

nested_scalar!(f64, Dual<f64>, Dual<Dual<f64>>);

impl NestedScalar for Dual<Dual<Dual<f64>>> {
    fn kernel_block(
        params: &NetworkParams<Self>,
        probes: &[Vec<f64>],
        _dirs: Directions<'_>,
        depth: usize,
    ) -> Result<Vec<Self>> {
        if depth == 0 {
            ntk_block(params, probes)
        } else {
            Err(Error::invalid(format!("dual nesting deeper than {MAX_NESTING_DEPTH} is not instantiated")))
        }
    }
}

fn check_order(p: usize) -> Result<()> {
    if !(2..=MAX_KERNEL_ORDER).contains(&p) {
        return Err(Error::invalid(format!("kernel order {p} outside supported range 2..={MAX_KERNEL_ORDER}")));
    }
    Ok(())
}

/// `K^(r)` for a single order with the first two slots over `probes` and
/// the trailing `r - 2` slots along `dirs`.
pub fn kernel_order(
    params: &NetworkParams,
    probes: &[Vec<f64>],
    dirs: Directions<'_>,
    r: usize,
) -> Result<KernelTensor> {
    check_order(r)?;
    if probes.is_empty() {
        return Err(Error::invalid("no probe points"));
    }
    let values = f64::kernel_block(params, probes, dirs, r - 2)?;
    let mut shape = vec![probes.len(), probes.len()];
    shape.extend(std::iter::repeat_n(dirs.len(), r - 2));
    KernelTensor::new(r, shape, values, params.fingerprint())
}

/// `[K^(2), …, K^(p)]` over the training set.
pub fn kernel_hierarchy(params: &NetworkParams, data: &DataSet, p: usize) -> Result<Vec<KernelTensor>> {
    kernel_hierarchy_at(params, data.inputs(), data, p)
}

/// Like [`kernel_hierarchy`] but with the two leading slots over `probes`.
pub fn kernel_hierarchy_at(
    params: &NetworkParams,
    probes: &[Vec<f64>],
    data: &DataSet,
    p: usize,
) -> Result<Vec<KernelTensor>> {
    check_order(p)?;
    (2..=p).map(|r| kernel_order(params, probes, Directions::Gradients(data.inputs()), r)).collect()
}

/// Finite-difference step for [`kernel_fd_oracle`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FdStep {
    /// `h = ε^(1/3) · ‖θ‖∞ / ‖v‖∞` per level.
    Auto,
    /// `θ ± h·v` with the given `h` at every level.
    Fixed(f64),
}

impl FdStep {
    fn for_direction(&self, theta: &[f64], v: &[f64]) -> f64 {
        match *self {
            FdStep::Fixed(h) => h,
            FdStep::Auto => {
                let tn = theta.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1.0);
                let vn = v.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
                f64::EPSILON.cbrt() * tn / vn
            }
        }
    }
}

/// `K^(r)` by nested central differences of the full recursive evaluation,
/// bottoming out at [`ntk_gram`]. Uses only `f64` arithmetic.
pub fn kernel_fd_oracle(params: &NetworkParams, data: &DataSet, r: usize, step: FdStep) -> Result<KernelTensor> {
    if r < 3 {
        return Err(Error::invalid("the finite-difference oracle starts at order 3"));
    }
    let n = data.n();
    let values = fd_recursive(params, data, r, step)?;
    KernelTensor::new(r, vec![n; r], values, params.fingerprint())
}

fn fd_recursive(params: &NetworkParams, data: &DataSet, r: usize, step: FdStep) -> Result<Vec<f64>> {
    if r == 2 {
        return Ok(ntk_gram(params, data)?.values);
    }
    let n = data.n();
    let theta = params.flatten();
    let blocks: Vec<Vec<f64>> = data
        .inputs()
        .par_iter()
        .map(|x| {
            let v = params.param_gradient(&params.forward(x)?);
            let h = step.for_direction(&theta, &v);
            let plus: Vec<f64> = theta.iter().zip(&v).map(|(t, d)| t + h * d).collect();
            let minus: Vec<f64> = theta.iter().zip(&v).map(|(t, d)| t - h * d).collect();
            let kp = fd_recursive(&params.with_flat(&plus)?, data, r - 1, step)?;
            let km = fd_recursive(&params.with_flat(&minus)?, data, r - 1, step)?;
            Ok(kp.iter().zip(&km).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        })
        .collect::<Result<_>>()?;
    let inner = blocks[0].len();
    let mut out = vec![0.0; inner * n];
    for (beta, block) in blocks.into_iter().enumerate() {
        for (idx, v) in block.into_iter().enumerate() {
            out[idx * n + beta] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, NetworkConfig};
    use crate::numerics::min_eigenvalue_sym;

    fn net(d: usize, m: usize, h: usize, act: Activation, seed: u64) -> NetworkParams {
        NetworkConfig::new(d, m, h).with_activation(act).with_seed(seed).init_params().unwrap()
    }

    #[test]
    fn scalar_net_ntk() {
        let p =
            NetworkParams::from_parts(1, Activation::Tanh, vec![Matrix::from_vec(1, 1, vec![2.0]).unwrap()], vec![3.0])
                .unwrap();
        let data = DataSet::new(vec![vec![0.5]], vec![0.0]).unwrap();
        let k = ntk_gram(&p, &data).unwrap();
        let t = 1f64.tanh();
        let expected = t * t + (1.5 * (1.0 - t * t)).powi(2);
        assert!((k.get(&[0, 0]) - expected).abs() < 1e-15);
        assert!((k.get(&[0, 0]) - 0.976_877_165_517_777).abs() < 1e-12);
    }

    #[test]
    fn gram_equals_layerwise() {
        let acts = [Activation::Tanh, Activation::softplus(1.5), Activation::Identity];
        for (i, act) in acts.into_iter().enumerate() {
            for k in 0..7u64 {
                let (d, m, h) = (1 + (k as usize % 8), 2 + k as usize, 1 + (k as usize % 3));
                let p = net(d, m, h, act, 100 * i as u64 + k);
                let data = DataSet::synthetic(1 + (k as usize % 4), d, k).unwrap();
                let a = ntk_gram(&p, &data).unwrap();
                let b = ntk_layerwise(&p, &data).unwrap();
                assert!(relative_error(a.values(), b.total.values()) < 1e-12);
                assert_eq!(b.contributions.len(), h + 1);
            }
        }
    }

    #[test]
    fn ntk_is_symmetric_psd() {
        let p = net(4, 16, 2, Activation::Tanh, 1);
        let data = DataSet::synthetic(3, 4, 1).unwrap();
        let k = ntk_gram(&p, &data).unwrap();
        let mat = k.to_matrix().unwrap();
        assert_eq!(mat.asymmetry(), 0.0);
        assert!(min_eigenvalue_sym(&mat).unwrap() >= -1e-10);
        for g in ntk_layerwise(&p, &data).unwrap().contributions {
            for i in 0..3 {
                assert!(g[(i, i)] >= 0.0);
            }
        }
    }

    #[test]
    fn single_hidden_layer_has_two_contributions() {
        let p = net(3, 5, 1, Activation::Tanh, 2);
        let data = DataSet::synthetic(2, 3, 2).unwrap();
        assert_eq!(ntk_layerwise(&p, &data).unwrap().contributions.len(), 2);
    }

    #[test]
    fn hierarchy_order_two_matches_gram() {
        let p = net(4, 8, 2, Activation::Tanh, 5);
        let data = DataSet::synthetic(3, 4, 5).unwrap();
        let ks = kernel_hierarchy(&p, &data, 2).unwrap();
        assert!(relative_error(ks[0].values(), ntk_gram(&p, &data).unwrap().values()) < 1e-12);
    }

    // Identity activation, one hidden layer: f = aᵀWx/√m, so
    // K2(1,2) = (⟨a,a⟩⟨x1,x2⟩ + ⟨Wx1,Wx2⟩)/m,
    // K3(1,2,3) = (2⟨x1,x2⟩f3 + ⟨x1,x3⟩f2 + ⟨x2,x3⟩f1)/m,
    // K4(1,2,3,4) = (2⟨x1,x2⟩K2(3,4) + ⟨x1,x3⟩K2(2,4) + ⟨x2,x3⟩K2(1,4))/m.
    #[test]
    fn identity_closed_forms() {
        let m = 6;
        let p = net(3, m, 1, Activation::Identity, 9);
        let data = DataSet::synthetic(3, 3, 9).unwrap();
        let xs = data.inputs();
        let f = p.outputs(&data).unwrap();
        let ks = kernel_hierarchy(&p, &data, 4).unwrap();
        let ip = |i: usize, j: usize| dot(&xs[i], &xs[j]);
        let mf = m as f64;
        let k2 = |i: usize, j: usize| ks[0].get(&[i, j]);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let k3 = (2.0 * ip(i, j) * f[k] + ip(i, k) * f[j] + ip(j, k) * f[i]) / mf;
                    assert!((ks[1].get(&[i, j, k]) - k3).abs() < 1e-12);
                    for l in 0..3 {
                        let k4 = (2.0 * ip(i, j) * k2(k, l) + ip(i, k) * k2(j, l) + ip(j, k) * k2(i, l)) / mf;
                        assert!((ks[2].get(&[i, j, k, l]) - k4).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn first_two_slots_are_exactly_symmetric() {
        let p = net(4, 10, 2, Activation::Tanh, 3);
        let data = DataSet::synthetic(3, 4, 3).unwrap();
        for k in kernel_hierarchy(&p, &data, 4).unwrap() {
            assert_eq!(k.first_pair_asymmetry(), 0.0);
            assert!(k.is_finite());
        }
    }

    #[test]
    fn hierarchy_matches_fd_oracle() {
        let p = net(4, 12, 2, Activation::Tanh, 4);
        let data = DataSet::synthetic(3, 4, 4).unwrap();
        let ks = kernel_hierarchy(&p, &data, 4).unwrap();
        let k3 = kernel_fd_oracle(&p, &data, 3, FdStep::Fixed(1e-4)).unwrap();
        assert!(relative_error(k3.values(), ks[1].values()) < 1e-5);
        let k4 = kernel_fd_oracle(&p, &data, 4, FdStep::Auto).unwrap();
        assert!(relative_error(k4.values(), ks[2].values()) < 1e-3);
    }

    #[test]
    fn probes_extend_training_kernels() {
        let p = net(3, 8, 2, Activation::Tanh, 6);
        let data = DataSet::synthetic(3, 3, 6).unwrap();
        let mut probes = data.inputs().to_vec();
        probes.push(vec![0.0, 0.6, 0.8]);
        let ext = kernel_hierarchy_at(&p, &probes, &data, 3).unwrap();
        let base = kernel_hierarchy(&p, &data, 3).unwrap();
        for (e, b) in ext.iter().zip(&base) {
            assert_eq!(e.shape()[0], 4);
            assert_eq!(e.slice_probes(0..3, 0..3).values(), b.values());
        }
    }

    #[test]
    fn order_bounds() {
        let p = net(2, 3, 1, Activation::Tanh, 0);
        let data = DataSet::synthetic(2, 2, 0).unwrap();
        assert!(matches!(kernel_hierarchy(&p, &data, MAX_KERNEL_ORDER + 1), Err(Error::InvalidArgument(_))));
        assert!(kernel_hierarchy(&p, &data, 1).is_err());
        assert_eq!(kernel_hierarchy(&p, &data, MAX_KERNEL_ORDER).unwrap().len(), MAX_KERNEL_ORDER - 1);
        assert!(kernel_fd_oracle(&p, &data, 2, FdStep::Auto).is_err());
    }

    #[test]
    fn csv_lists_every_tuple() {
        let k = KernelTensor::new(3, vec![2, 2, 2], (0..8).map(f64::from).collect(), 0).unwrap();
        let csv = k.to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "i1,i2,i3,value");
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[2], "0,0,1,1e0");
        assert_eq!(lines[8], "1,1,1,7e0");
    }
}

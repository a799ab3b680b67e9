use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Matrix;
use crate::error::{Error, Result};

/// A reproducible random stream addressed by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto the cipher's stream
/// counter, so distinct ids give independent sequences and no stream depends
/// on how many draws another stream has made.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn gaussian_vec(&mut self, len: usize, std: f64) -> Vec<f64> {
        (0..len).map(|_| std * self.standard_normal()).collect()
    }
}

/// A `rows × cols` matrix of i.i.d. `N(0, std²)` entries drawn in row-major
/// order from `rng`.
pub fn gaussian_matrix(rng: &mut RngStream, rows: usize, cols: usize, std: f64) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!("gaussian_matrix needs positive dimensions, got {rows}x{cols}")));
    }
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::invalid(format!("gaussian_matrix needs std > 0, got {std}")));
    }
    Matrix::from_vec(rows, cols, rng.gaussian_vec(rows * cols, std))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_draws() {
        let a = gaussian_matrix(&mut RngStream::new(1, 0), 2, 2, 1.0).unwrap();
        let b = gaussian_matrix(&mut RngStream::new(1, 0), 2, 2, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ() {
        let a = gaussian_matrix(&mut RngStream::new(1, 0), 4, 4, 1.0).unwrap();
        let b = gaussian_matrix(&mut RngStream::new(1, 1), 4, 4, 1.0).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn consuming_advances() {
        let mut rng = RngStream::new(7, 3);
        let a = gaussian_matrix(&mut rng, 3, 3, 1.0).unwrap();
        let b = gaussian_matrix(&mut rng, 3, 3, 1.0).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn large_sample_moments() {
        let m = gaussian_matrix(&mut RngStream::new(1, 0), 1000, 1000, 1.0).unwrap();
        let n = m.as_slice().len() as f64;
        let mean = m.as_slice().iter().sum::<f64>() / n;
        let var = m.as_slice().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.01, "std {}", var.sqrt());
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut rng = RngStream::new(1, 0);
        assert!(matches!(gaussian_matrix(&mut rng, 2, 2, 0.0), Err(Error::InvalidArgument(_))));
        assert!(gaussian_matrix(&mut rng, 0, 2, 1.0).is_err());
        assert!(gaussian_matrix(&mut rng, 2, 2, -1.0).is_err());
    }
}

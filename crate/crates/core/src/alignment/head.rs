use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::AlignmentError;
use crate::store::codec::{self, Reader};
use crate::store::StoreError;

pub const HEAD_MAGIC: [u8; 4] = *b"SDAH";
pub const HEAD_VERSION: u16 = 1;

/// Affine map from the uni-modal space into the multi-modal space,
/// `x -> W x + bias`, plus the two softmax temperatures it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentHead {
    dim_in: usize,
    dim_out: usize,
    /// Row-major `dim_out x dim_in`.
    weight: Vec<f64>,
    bias: Vec<f64>,
    tau_student: f64,
    tau_teacher: f64,
}

impl AlignmentHead {
    pub fn new(
        dim_in: usize,
        dim_out: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
        tau_student: f64,
        tau_teacher: f64,
    ) -> Result<Self, AlignmentError> {
        if dim_in == 0 || dim_out == 0 || weight.len() != dim_in * dim_out || bias.len() != dim_out {
            return Err(AlignmentError::Shape { dim_in, dim_out, weight_len: weight.len(), bias_len: bias.len() });
        }
        check_temperature(tau_student)?;
        check_temperature(tau_teacher)?;
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(AlignmentError::NonFiniteParameter);
        }
        Ok(Self { dim_in, dim_out, weight, bias, tau_student, tau_teacher })
    }

    pub fn identity(dim: usize, tau_student: f64, tau_teacher: f64) -> Result<Self, AlignmentError> {
        let mut weight = vec![0.0; dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = 1.0;
        }
        Self::new(dim, dim, weight, vec![0.0; dim], tau_student, tau_teacher)
    }

    /// Gaussian init with variance `1 / dim_in` and zero bias.
    pub fn init(
        dim_in: usize,
        dim_out: usize,
        seed: u64,
        tau_student: f64,
        tau_teacher: f64,
    ) -> Result<Self, AlignmentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (1.0 / dim_in.max(1) as f64).sqrt()).expect("valid std");
        let weight = (0..dim_in * dim_out).map(|_| normal.sample(&mut rng)).collect();
        Self::new(dim_in, dim_out, weight, vec![0.0; dim_out], tau_student, tau_teacher)
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn tau_student(&self) -> f64 {
        self.tau_student
    }

    pub fn tau_teacher(&self) -> f64 {
        self.tau_teacher
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weight, &mut self.bias)
    }

    /// Errors unless the head maps `dim_in` to `dim_out`.
    pub fn expect_dims(&self, dim_in: usize, dim_out: usize) -> Result<(), AlignmentError> {
        if self.dim_in != dim_in || self.dim_out != dim_out {
            return Err(AlignmentError::HeadDims {
                head_in: self.dim_in,
                head_out: self.dim_out,
                expected_in: dim_in,
                expected_out: dim_out,
            });
        }
        Ok(())
    }

    /// `W x + bias`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, AlignmentError> {
        if x.len() != self.dim_in {
            return Err(AlignmentError::DimMismatch { expected: self.dim_in, actual: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(AlignmentError::NonFiniteInput);
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.weight.chunks_exact(self.dim_in).zip(&self.bias).map(|(row, b)| crate::vector::dot(row, x) + b).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(34 + 8 * (self.weight.len() + self.bias.len()));
        out.extend_from_slice(&HEAD_MAGIC);
        out.extend_from_slice(&HEAD_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim_in as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim_out as u32).to_le_bytes());
        out.extend_from_slice(&self.tau_student.to_le_bytes());
        out.extend_from_slice(&self.tau_teacher.to_le_bytes());
        for v in self.weight.iter().chain(&self.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        codec::seal(&mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AlignmentError> {
        if bytes.len() >= 4 && bytes[..4] != HEAD_MAGIC {
            return Err(StoreError::BadMagic { expected: HEAD_MAGIC, found: bytes[..4].try_into().unwrap() }.into());
        }
        let mut r = Reader::new(bytes);
        r.take(4)?;
        let version = r.u16()?;
        if version != HEAD_VERSION {
            return Err(StoreError::UnsupportedVersion { expected: HEAD_VERSION, found: version }.into());
        }
        let dim_in = r.u32()? as usize;
        let dim_out = r.u32()? as usize;
        let tau_student = r.f64()?;
        let tau_teacher = r.f64()?;
        let n_params = (dim_in as u64 * dim_out as u64) + dim_out as u64;
        let expected = r.position() as u64 + 8 * n_params + 4;
        let actual = bytes.len() as u64;
        if actual < expected {
            return Err(StoreError::Truncated { expected, actual }.into());
        }
        if actual > expected {
            return Err(StoreError::TrailingBytes { expected, actual }.into());
        }
        codec::unseal(bytes)?;
        let weight = (0..dim_in * dim_out).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let bias = (0..dim_out).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        Self::new(dim_in, dim_out, weight, bias, tau_student, tau_teacher)
    }
}

fn check_temperature(tau: f64) -> Result<(), AlignmentError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(AlignmentError::Temperature(tau));
    }
    Ok(())
}

pub fn save_head(head: &AlignmentHead, path: impl AsRef<Path>) -> Result<(), AlignmentError> {
    codec::write_atomic(path.as_ref(), &head.to_bytes()).map_err(|e| StoreError::io(path.as_ref(), e).into())
}

pub fn load_head(path: impl AsRef<Path>) -> Result<AlignmentHead, AlignmentError> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| StoreError::io(path.as_ref(), e))?;
    AlignmentHead::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_examples() {
        let id = AlignmentHead::identity(2, 0.1, 0.05).unwrap();
        assert_eq!(id.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);

        let zero = AlignmentHead::new(2, 2, vec![0.0; 4], vec![3.0, 3.0], 0.1, 0.05).unwrap();
        assert_eq!(zero.forward(&[-7.0, 11.0]).unwrap(), vec![3.0, 3.0]);

        let h = AlignmentHead::new(2, 2, vec![1.0, 1.0, 0.0, 2.0], vec![0.0, 1.0], 0.1, 0.05).unwrap();
        assert_eq!(h.forward(&[1.0, 1.0]).unwrap(), vec![2.0, 3.0]);
        assert!(matches!(h.forward(&[1.0]), Err(AlignmentError::DimMismatch { expected: 2, actual: 1 })));
    }

    #[test]
    fn invalid_heads() {
        assert!(AlignmentHead::new(2, 2, vec![0.0; 3], vec![0.0; 2], 0.1, 0.1).is_err());
        assert!(matches!(AlignmentHead::identity(2, 0.0, 0.1), Err(AlignmentError::Temperature(_))));
        assert!(AlignmentHead::new(1, 1, vec![f64::NAN], vec![0.0], 0.1, 0.1).is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let head = AlignmentHead::init(3, 5, 7, 0.1, 0.05).unwrap();
        let back = AlignmentHead::from_bytes(&head.to_bytes()).unwrap();
        assert_eq!(back, head);
        assert!(back.weight().iter().zip(head.weight()).all(|(a, b)| a.to_bits() == b.to_bits()));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.sdah");
        save_head(&head, &path).unwrap();
        assert_eq!(load_head(&path).unwrap(), head);
    }

    #[test]
    fn corrupted_checkpoint() {
        let mut bytes = AlignmentHead::init(2, 2, 1, 0.1, 0.05).unwrap().to_bytes();
        let n = bytes.len();
        bytes[n - 10] ^= 1;
        assert!(matches!(
            AlignmentHead::from_bytes(&bytes),
            Err(AlignmentError::Store(StoreError::ChecksumMismatch { .. }))
        ));
        let mut bytes = AlignmentHead::init(2, 2, 1, 0.1, 0.05).unwrap().to_bytes();
        bytes[..4].copy_from_slice(b"SDEC");
        assert!(matches!(AlignmentHead::from_bytes(&bytes), Err(AlignmentError::Store(StoreError::BadMagic { .. }))));
    }

    #[test]
    fn dim_mismatch_names_both() {
        let head = AlignmentHead::init(4, 8, 0, 0.1, 0.05).unwrap();
        head.expect_dims(4, 8).unwrap();
        let msg = head.expect_dims(6, 8).unwrap_err().to_string();
        assert!(msg.contains("4 -> 8") && msg.contains("6 -> 8"), "{msg}");
    }
}

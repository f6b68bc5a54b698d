//! Dense NCHW tensors and the handful of kernels the network needs:
//! 3×3 convolution, PReLU, MSE and Adam.
//!
//! Every kernel is generic over [`Scalar`], so the production path runs in
//! `f32` while gradient checks run the identical code in `f64`.

mod adam;
mod conv;
mod kernels;
mod loss;
mod prelu;
pub mod reference;

use std::fmt::Debug;

use num_traits::Float;

use crate::error::{Error, Result};

pub use adam::{AdamConfig, AdamState, ParamRef};
pub use conv::{conv2d_backward, conv2d_backward_params, conv2d_forward, ConvGrads, ConvLayer, PaddingMode};
pub use loss::{mse_loss, MseNormalization};
pub use prelu::{prelu_backward, prelu_forward};

/// Element type of a [`Tensor`].
pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> f32 {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> f64 {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense 4-D array in (batch, channel, height, width) order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Result<Self> {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: [usize; 4], value: T) -> Result<Self> {
        check_shape(&shape)?;
        Ok(Tensor {
            shape,
            data: vec![value; shape.iter().product()],
        })
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        check_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::shape(
                "Tensor::from_vec",
                format!("shape {shape:?} needs {expected} elements, got {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Result<Self> {
        check_shape(&shape)?;
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(n * c * h * w);
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f([b, ch, y, x]));
                    }
                }
            }
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    fn offset(&self, [b, c, y, x]: [usize; 4]) -> usize {
        let [_, ch, h, w] = self.shape;
        ((b * ch + c) * h + y) * w + x
    }

    pub fn get(&self, idx: [usize; 4]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: [usize; 4], value: T) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    /// Contiguous `h*w` slice of one channel of one batch item.
    pub fn plane(&self, b: usize, c: usize) -> &[T] {
        let hw = self.shape[2] * self.shape[3];
        let start = (b * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let hw = self.shape[2] * self.shape[3];
        let start = (b * self.shape[1] + c) * hw;
        &mut self.data[start..start + hw]
    }

    /// All channels of batch item `b`.
    pub fn item(&self, b: usize) -> &[T] {
        let chw = self.shape[1] * self.shape[2] * self.shape[3];
        &self.data[b * chw..(b + 1) * chw]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [T] {
        let chw = self.shape[1] * self.shape[2] * self.shape[3];
        &mut self.data[b * chw..(b + 1) * chw]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise sum; shapes must agree.
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("Tensor::add", self, other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Ok(Tensor {
            shape: self.shape,
            data,
        })
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        same_shape("Tensor::add_assign", self, other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    /// Inner product over all elements, accumulated in `f64`.
    pub fn dot(&self, other: &Tensor<T>) -> Result<f64> {
        same_shape("Tensor::dot", self, other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.as_f64() * b.as_f64())
            .sum())
    }

    /// Element type conversion (e.g. to `f64` for verification runs).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Splits the channel axis into single-channel tensors.
    pub fn split_channels(&self) -> Vec<Tensor<T>> {
        let [n, c, h, w] = self.shape;
        (0..c)
            .map(|ch| {
                let mut data = Vec::with_capacity(n * h * w);
                for b in 0..n {
                    data.extend_from_slice(self.plane(b, ch));
                }
                Tensor {
                    shape: [n, 1, h, w],
                    data,
                }
            })
            .collect()
    }

    /// Concatenates tensors along the channel axis.
    pub fn concat_channels(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("Tensor::concat_channels", "no tensors given"))?;
        let [n, _, h, w] = first.shape;
        for p in parts {
            if p.shape[0] != n || p.shape[2] != h || p.shape[3] != w {
                return Err(Error::shape(
                    "Tensor::concat_channels",
                    format!("shape {:?} incompatible with {:?}", p.shape, first.shape),
                ));
            }
        }
        let c: usize = parts.iter().map(|p| p.shape[1]).sum();
        let mut data = Vec::with_capacity(n * c * h * w);
        for b in 0..n {
            for p in parts {
                data.extend_from_slice(p.item(b));
            }
        }
        Ok(Tensor {
            shape: [n, c, h, w],
            data,
        })
    }
}

fn check_shape(shape: &[usize; 4]) -> Result<()> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::shape(
            "Tensor",
            format!("all dimensions must be >= 1, got {shape:?}"),
        ));
    }
    Ok(())
}

pub(crate) fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape, b.shape)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dimension() {
        assert!(Tensor::<f32>::zeros([1, 0, 2, 2]).is_err());
        assert!(Tensor::<f32>::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn indexing_is_nchw() {
        let t = Tensor::<f64>::from_fn([2, 3, 4, 5], |[b, c, y, x]| {
            (b * 1000 + c * 100 + y * 10 + x) as f64
        })
        .unwrap();
        assert_eq!(t.get([1, 2, 3, 4]), 1234.0);
        assert_eq!(t.plane(1, 2)[3 * 5 + 4], 1234.0);
        assert_eq!(t.data()[((1 * 3 + 2) * 4 + 3) * 5 + 4], 1234.0);
    }

    #[test]
    fn split_and_concat_are_inverse() {
        let t = Tensor::<f32>::from_fn([2, 3, 2, 2], |[b, c, y, x]| (b * 8 + c * 4 + y * 2 + x) as f32)
            .unwrap();
        let parts = t.split_channels();
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[1].shape(), [2, 1, 2, 2]);
        assert_eq!(Tensor::concat_channels(&parts).unwrap(), t);
    }
}

//! Dense row-major tensors.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major array. `shape.iter().product() == data.len()` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Elementwise operations. `Sqrt` ignores its second operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Div,
    Sqrt,
    Scale,
}

/// Right-hand side of an elementwise operation.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a, T> {
    Tensor(&'a Tensor<T>),
    Scalar(T),
}

fn check_shape(shape: &[usize], len: usize) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) || shape.iter().product::<usize>() != len {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            len,
        });
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        check_shape(shape, data.len())?;
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_slice(shape: &[usize], data: &[T]) -> Result<Self> {
        Self::new(shape, data.to_vec())
    }

    /// One-dimensional tensor over `data`. Panics if `data` is empty.
    pub fn vector(data: Vec<T>) -> Self {
        let n = data.len();
        Self::new(&[n], data).expect("vector must be non-empty")
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape, vec![value; len])
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: vec![T::zero(); self.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::domain(format!(
                "expected a rank-2 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        check_shape(shape, self.data.len())?;
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    /// Elementwise quotient; a zero divisor is a domain error.
    pub fn div(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        if let Some(i) = other.data.iter().position(|v| v.is_zero()) {
            return Err(Error::domain(format!("division by zero at element {i}")));
        }
        self.zip_with(other, |a, b| a / b)
    }

    /// Elementwise square root; a negative element is a domain error.
    pub fn sqrt(&self) -> Result<Self> {
        if let Some(i) = self.data.iter().position(|v| *v < T::zero()) {
            return Err(Error::domain(format!("square root of negative value at element {i}")));
        }
        Ok(self.map(T::sqrt))
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    pub fn add_scalar(&self, v: T) -> Self {
        self.map(|a| a + v)
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// Fails with the first NaN or infinite element.
    pub fn check_finite(&self, name: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite {
                tensor: name.to_string(),
                index,
                value: self.data[index].as_f64(),
            }),
            None => Ok(()),
        }
    }

    /// Matrix product of rank-2 tensors, optionally transposing either side.
    pub fn matmul(&self, rhs: &Self, transpose_lhs: bool, transpose_rhs: bool) -> Result<Self> {
        let (ar, ac) = self.dims2()?;
        let (br, bc) = rhs.dims2()?;
        let (m, k, a_strides) = if transpose_lhs {
            (ac, ar, (1, ac as isize))
        } else {
            (ar, ac, (ac as isize, 1))
        };
        let (k2, n, b_strides) = if transpose_rhs {
            (bc, br, (1, bc as isize))
        } else {
            (br, bc, (bc as isize, 1))
        };
        if k != k2 {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            &self.data,
            a_strides,
            &rhs.data,
            b_strides,
            T::zero(),
            &mut out,
            (n as isize, 1),
        );
        Self::new(&[m, n], out)
    }
}

/// Applies `op` to `a` and `b`. Tensor operands must share `a`'s shape;
/// scalar operands broadcast. `Scale` requires a scalar operand.
pub fn elementwise<T: Scalar>(op: ElementwiseOp, a: &Tensor<T>, b: Operand<'_, T>) -> Result<Tensor<T>> {
    use ElementwiseOp::*;
    match (op, b) {
        (Sqrt, _) => a.sqrt(),
        (Add, Operand::Tensor(b)) => a.add(b),
        (Sub, Operand::Tensor(b)) => a.sub(b),
        (Mul, Operand::Tensor(b)) => a.mul(b),
        (Div, Operand::Tensor(b)) => a.div(b),
        (Add, Operand::Scalar(s)) => Ok(a.add_scalar(s)),
        (Sub, Operand::Scalar(s)) => Ok(a.add_scalar(-s)),
        (Mul | Scale, Operand::Scalar(s)) => Ok(a.scale(s)),
        (Div, Operand::Scalar(s)) => {
            if s.is_zero() {
                return Err(Error::domain("division by zero scalar"));
            }
            Ok(a.map(|v| v / s))
        }
        (Scale, Operand::Tensor(_)) => Err(Error::domain("scale takes a scalar factor")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(data: &[f64]) -> Tensor<f64> {
        Tensor::vector(data.to_vec())
    }

    #[test]
    fn masking_by_binary_vector() {
        let out = elementwise(
            ElementwiseOp::Mul,
            &v(&[1., 2., 3.]),
            Operand::Tensor(&v(&[0., 1., 0.])),
        )
        .unwrap();
        assert_eq!(out.data(), &[0., 2., 0.]);
    }

    #[test]
    fn zero_scale_annihilates() {
        let out = elementwise(ElementwiseOp::Scale, &v(&[1., 2.]), Operand::Scalar(0.0)).unwrap();
        assert_eq!(out.data(), &[0., 0.]);
    }

    #[test]
    fn sqrt_of_perfect_squares() {
        let out = elementwise(ElementwiseOp::Sqrt, &v(&[4., 9.]), Operand::Scalar(0.0)).unwrap();
        assert_eq!(out.data(), &[2., 3.]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]).unwrap();
        let b = Tensor::<f64>::zeros(&[3, 2]).unwrap();
        match a.add(&b) {
            Err(Error::ShapeMismatch { left, right }) => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![3, 2]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(v(&[-1.0]).sqrt(), Err(Error::Domain(_))));
        assert!(matches!(v(&[1.0]).div(&v(&[0.0])), Err(Error::Domain(_))));
        assert!(matches!(
            elementwise(ElementwiseOp::Div, &v(&[1.0]), Operand::Scalar(0.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(Tensor::<f64>::new(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f64>::new(&[0], vec![]).is_err());
    }

    #[test]
    fn check_finite_reports_index() {
        match v(&[1.0, f64::NAN]).check_finite("g") {
            Err(Error::NonFinite { tensor, index, .. }) => {
                assert_eq!(tensor, "g");
                assert_eq!(index, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn matmul_with_transposes() {
        let a = Tensor::<f64>::from_slice(&[2, 3], &[1., 2., 3., 4., 5., 6.]).unwrap();
        let at = Tensor::<f64>::from_slice(&[3, 2], &[1., 4., 2., 5., 3., 6.]).unwrap();
        let b = Tensor::<f64>::from_slice(&[3, 2], &[7., 8., 9., 10., 11., 12.]).unwrap();
        let direct = a.matmul(&b, false, false).unwrap();
        assert_eq!(direct.data(), &[58., 64., 139., 154.]);
        assert_eq!(at.matmul(&b, true, false).unwrap(), direct);
        let bt = Tensor::<f64>::from_slice(&[2, 3], &[7., 9., 11., 8., 10., 12.]).unwrap();
        assert_eq!(a.matmul(&bt, false, true).unwrap(), direct);
        assert!(a.matmul(&a, false, false).is_err());
    }

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..16).prop_flat_map(|n| {
            (
                prop::collection::vec(-1e3..1e3f64, n),
                prop::collection::vec(0.5..1e3f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn elementwise_matches_scalar_loop((a, b) in pair()) {
            let ta = v(&a);
            let tb = v(&b);
            for (op, f) in [
                (ElementwiseOp::Add, (|x, y| x + y) as fn(f64, f64) -> f64),
                (ElementwiseOp::Sub, |x, y| x - y),
                (ElementwiseOp::Mul, |x, y| x * y),
                (ElementwiseOp::Div, |x, y| x / y),
            ] {
                let out = elementwise(op, &ta, Operand::Tensor(&tb)).unwrap();
                for ((o, x), y) in out.data().iter().zip(&a).zip(&b) {
                    prop_assert_eq!(o.to_bits(), f(*x, *y).to_bits());
                }
            }
            let roots = elementwise(ElementwiseOp::Sqrt, &tb, Operand::Scalar(0.0)).unwrap();
            for (r, y) in roots.data().iter().zip(&b) {
                prop_assert_eq!(r.to_bits(), y.sqrt().to_bits());
            }
        }
    }
}

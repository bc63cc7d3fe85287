use num_traits::Float;

/// Scalar type the engine computes in. Production code uses `f32`
/// ([`Real`]); gradient-check suites instantiate the same kernels with
/// `f64` to keep finite-difference noise below the test tolerances.
pub trait Scalar: Float + std::fmt::Debug + Default + Send + Sync + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// The scalar type used by everything outside the test suites.
pub type Real = f32;

/// Convert an `f64` constant into the active scalar type.
#[inline]
pub fn lit<S: Scalar>(x: f64) -> S {
    S::from(x).expect("literal representable in scalar type")
}

/// Dense row-major tensor. `data.len()` always equals the product of
/// `shape`; constructors enforce it.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S = Real> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Self {
        let expected: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            expected,
            "shape {:?} expects {} elements, got {}",
            shape,
            expected,
            data.len()
        );
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![S::zero(); n] }
    }

    pub fn filled(shape: &[usize], value: S) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn from_f64(shape: &[usize], values: &[f64]) -> Self {
        let data: Vec<S> = values.iter().map(|&v| lit(v)).collect();
        Self::new(shape.to_vec(), data)
    }

    pub fn scalar(value: S) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshaped(&self, shape: &[usize]) -> Self {
        let expected: usize = shape.iter().product();
        assert_eq!(self.numel(), expected, "reshape {:?} -> {:?}", self.shape, shape);
        Self { shape: shape.to_vec(), data: self.data.clone() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sum of squares accumulated in f64.
    pub fn sq_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| {
                let x = v.to_f64().unwrap_or(f64::NAN);
                x * x
            })
            .sum()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_matches_len() {
        let t: Tensor<f32> = Tensor::new(vec![2, 3], vec![0.0; 6]);
        assert_eq!(t.numel(), 6);
        assert_eq!(t.shape(), &[2, 3]);
    }

    #[test]
    #[should_panic]
    fn mismatched_shape_panics() {
        let _: Tensor<f32> = Tensor::new(vec![2, 3], vec![0.0; 5]);
    }

    #[test]
    fn finiteness_detects_nan() {
        let mut t: Tensor<f32> = Tensor::zeros(&[4]);
        assert!(t.is_finite());
        t.data_mut()[2] = f32::NAN;
        assert!(!t.is_finite());
    }
}

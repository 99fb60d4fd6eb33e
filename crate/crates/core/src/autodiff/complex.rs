use crate::scalar::Scalar;

use super::{AdError, Gradients, Tape, Tensor, Var};

/// Complex array stored as two real arrays of identical shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor<T> {
    pub re: Tensor<T>,
    pub im: Tensor<T>,
}

impl<T: Scalar> ComplexTensor<T> {
    pub fn new(re: Tensor<T>, im: Tensor<T>) -> Result<Self, AdError> {
        if re.shape() != im.shape() {
            return Err(AdError::Shape {
                op: "complex",
                lhs: re.shape().to_vec(),
                rhs: im.shape().to_vec(),
            });
        }
        Ok(Self { re, im })
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }
}

/// Real/imaginary channel pair on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexVar {
    pub re: Var,
    pub im: Var,
}

impl<T: Scalar> Tape<T> {
    pub fn complex_leaf(&mut self, value: ComplexTensor<T>, requires_grad: bool) -> ComplexVar {
        ComplexVar {
            re: self.leaf(value.re, requires_grad),
            im: self.leaf(value.im, requires_grad),
        }
    }

    pub fn complex_value(&self, z: ComplexVar) -> ComplexTensor<T> {
        ComplexTensor {
            re: self.value(z.re).clone(),
            im: self.value(z.im).clone(),
        }
    }

    /// `a b` for complex matrices, as
    /// `(a_r b_r - a_i b_i) + i (a_r b_i + a_i b_r)`.
    pub fn complex_matmul(&mut self, a: ComplexVar, b: ComplexVar) -> Result<ComplexVar, AdError> {
        let rr = self.matmul(a.re, b.re)?;
        let ii = self.matmul(a.im, b.im)?;
        let ri = self.matmul(a.re, b.im)?;
        let ir = self.matmul(a.im, b.re)?;
        Ok(ComplexVar {
            re: self.sub(rr, ii)?,
            im: self.add(ri, ir)?,
        })
    }

    pub fn complex_add(&mut self, a: ComplexVar, b: ComplexVar) -> Result<ComplexVar, AdError> {
        Ok(ComplexVar {
            re: self.add(a.re, b.re)?,
            im: self.add(a.im, b.im)?,
        })
    }

    /// Component-wise ReLU: `relu(x) + i relu(y)`.
    pub fn complex_relu(&mut self, z: ComplexVar) -> Result<ComplexVar, AdError> {
        Ok(ComplexVar {
            re: self.relu(z.re)?,
            im: self.relu(z.im)?,
        })
    }

    /// `|z|^2` elementwise.
    pub fn complex_abs2(&mut self, z: ComplexVar) -> Result<Var, AdError> {
        let a = self.square(z.re)?;
        let b = self.square(z.im)?;
        self.add(a, b)
    }
}

/// `z' = W z` with `W` of shape `[m, n]` and `z` of shape `[n, k]`.
pub fn complex_matvec<T: Scalar>(tape: &mut Tape<T>, w: ComplexVar, z: ComplexVar) -> Result<ComplexVar, AdError> {
    tape.complex_matmul(w, z)
}

/// `dL/dRe(w) + i dL/dIm(w)`, i.e. twice the conjugate Wirtinger derivative
/// of a real loss. `None` if `w` was not a trainable leaf.
pub fn wirtinger_grad<T: Scalar>(grads: &Gradients<T>, w: ComplexVar) -> Option<ComplexTensor<T>> {
    Some(ComplexTensor {
        re: grads.get(w.re)?.clone(),
        im: grads.get(w.im)?.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: &[f64], im: &[f64], rows: usize) -> ComplexTensor<f64> {
        let cols = re.len() / rows;
        ComplexTensor::new(Tensor::matrix(rows, cols, re.to_vec()), Tensor::matrix(rows, cols, im.to_vec())).unwrap()
    }

    #[test]
    fn multiply_by_i() {
        let mut t = Tape::new();
        let w = t.complex_leaf(c(&[0.0], &[1.0], 1), false);
        let z = t.complex_leaf(c(&[1.0], &[0.0], 1), false);
        let out = complex_matvec(&mut t, w, z).unwrap();
        let v = t.complex_value(out);
        assert_eq!((v.re.data()[0], v.im.data()[0]), (0.0, 1.0));
    }

    #[test]
    fn real_weights_act_per_channel() {
        let mut t = Tape::new();
        let w = t.complex_leaf(c(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4], 2), false);
        let z = t.complex_leaf(c(&[1.0, -1.0], &[0.5, 2.0], 2), false);
        let out = complex_matvec(&mut t, w, z).unwrap();
        let out = t.complex_value(out);
        assert_eq!(out.re.data(), &[-1.0, -1.0]);
        assert_eq!(out.im.data(), &[4.5, 9.5]);
    }

    #[test]
    fn modulus_squared_gradient() {
        let mut t = Tape::new();
        let z = t.complex_leaf(c(&[3.0], &[4.0], 1), true);
        let l = t.complex_abs2(z).unwrap();
        let l = t.sum(l).unwrap();
        let g = t.backward(l).unwrap();
        let wg = wirtinger_grad(&g, z).unwrap();
        assert_eq!((wg.re.data()[0], wg.im.data()[0]), (6.0, 8.0));
    }

    #[test]
    fn real_part_of_product_gradient() {
        // L = Re(w z), z = 2 - 5i fixed: dL/dw = c - i d = 2 + 5i
        let mut t = Tape::new();
        let w = t.complex_leaf(c(&[0.7], &[-0.3], 1), true);
        let z = t.complex_leaf(c(&[2.0], &[-5.0], 1), false);
        let p = t.complex_matmul(w, z).unwrap();
        let l = t.sum(p.re).unwrap();
        let g = t.backward(l).unwrap();
        let wg = wirtinger_grad(&g, w).unwrap();
        assert_eq!((wg.re.data()[0], wg.im.data()[0]), (2.0, 5.0));
    }

    #[test]
    fn mismatched_parts_rejected() {
        assert!(ComplexTensor::new(Tensor::<f64>::vector(vec![1.0]), Tensor::vector(vec![1.0, 2.0])).is_err());
    }
}

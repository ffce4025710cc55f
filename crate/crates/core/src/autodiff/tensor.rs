//! Tensor storage, the gradient tape, and elementwise operators.

use std::cell::RefCell;
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Element types the engine runs on. `f32` is the pipeline type; `f64`
/// exists for gradient checking.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Default + Send + Sync + 'static
{
    /// Shorthand for lossy conversion from `f64` literals.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dense 4-D shape: (batch, channels, height, width).
pub type Shape = [usize; 4];

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

type BackwardFn<T> = Box<dyn Fn(&[T])>;

pub(super) struct Node<T: Scalar> {
    pub(super) id: u64,
    pub(super) shape: Shape,
    pub(super) data: Vec<T>,
    pub(super) grad: Option<Vec<T>>,
    pub(super) needs_grad: bool,
    pub(super) parents: Vec<Tensor<T>>,
    pub(super) backward: Option<BackwardFn<T>>,
}

/// Differentiable NCHW tensor. Cloning is cheap (shared node).
pub struct Tensor<T: Scalar> {
    pub(super) node: Rc<RefCell<Node<T>>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Self { node: Rc::clone(&self.node) }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.node.borrow();
        write!(f, "Tensor(id={}, shape={:?}, needs_grad={})", n.id, n.shape, n.needs_grad)
    }
}

fn validate_shape(shape: Shape) -> Result<usize> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!("tensor dimensions must be positive, got {shape:?}")));
    }
    Ok(shape.iter().product())
}

fn check_finite<T: Scalar>(op: &str, data: &[T]) -> Result<()> {
    for (i, v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numeric(format!("{op} produced non-finite value {v} at index {i}")));
        }
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    fn new_node(
        shape: Shape,
        data: Vec<T>,
        needs_grad: bool,
        parents: Vec<Tensor<T>>,
        backward: Option<BackwardFn<T>>,
    ) -> Self {
        let id = NEXT_ID.fetch_add(1, Ordering::Relaxed);
        Self {
            node: Rc::new(RefCell::new(Node { id, shape, data, grad: None, needs_grad, parents, backward })),
        }
    }

    /// Constant leaf tensor.
    pub fn from_data(shape: Shape, data: Vec<T>) -> Result<Self> {
        let numel = validate_shape(shape)?;
        if data.len() != numel {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {shape:?}",
                data.len()
            )));
        }
        check_finite("tensor construction", &data)?;
        Ok(Self::new_node(shape, data, false, Vec::new(), None))
    }

    /// Trainable leaf tensor (gradients accumulate here).
    pub fn parameter(shape: Shape, data: Vec<T>) -> Result<Self> {
        let t = Self::from_data(shape, data)?;
        t.node.borrow_mut().needs_grad = true;
        Ok(t)
    }

    pub fn zeros(shape: Shape) -> Result<Self> {
        let numel = validate_shape(shape)?;
        Self::from_data(shape, vec![T::zero(); numel])
    }

    pub fn full(shape: Shape, value: T) -> Result<Self> {
        let numel = validate_shape(shape)?;
        Self::from_data(shape, vec![value; numel])
    }

    pub fn scalar(value: T) -> Result<Self> {
        Self::from_data([1, 1, 1, 1], vec![value])
    }

    /// Operator-output constructor: derives the needs-grad flag, drops the
    /// tape edges when no input participates in training, and surfaces
    /// non-finite outputs eagerly.
    pub(super) fn from_op(
        op: &'static str,
        shape: Shape,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: impl Fn(&[T]) + 'static,
    ) -> Result<Self> {
        let numel = validate_shape(shape)?;
        debug_assert_eq!(data.len(), numel);
        check_finite(op, &data)?;
        let needs = parents.iter().any(|p| p.needs_grad());
        if needs {
            Ok(Self::new_node(shape, data, true, parents, Some(Box::new(backward))))
        } else {
            Ok(Self::new_node(shape, data, false, Vec::new(), None))
        }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.node.borrow().shape
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.node.borrow().data.len()
    }

    pub fn needs_grad(&self) -> bool {
        self.node.borrow().needs_grad
    }

    pub fn id(&self) -> u64 {
        self.node.borrow().id
    }

    /// Copy of the values.
    pub fn to_vec(&self) -> Vec<T> {
        self.node.borrow().data.clone()
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> T {
        let n = self.node.borrow();
        assert_eq!(n.data.len(), 1, "item() requires a scalar tensor");
        n.data[0]
    }

    /// Run `f` against the raw values without copying.
    pub fn with_data<R>(&self, f: impl FnOnce(&[T]) -> R) -> R {
        f(&self.node.borrow().data)
    }

    /// Overwrite the values of a leaf tensor in place (parameter updates,
    /// running statistics). Panics on graph nodes.
    pub fn set_data(&self, data: &[T]) {
        let mut n = self.node.borrow_mut();
        assert!(n.backward.is_none(), "set_data is only valid on leaf tensors");
        assert_eq!(n.data.len(), data.len(), "set_data length mismatch");
        n.data.copy_from_slice(data);
    }

    /// Copy of the gradient buffer, if one has been allocated.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.node.borrow().grad.clone()
    }

    /// Reset (and allocate) the gradient buffer to zeros.
    pub fn zero_grad(&self) {
        let mut n = self.node.borrow_mut();
        let len = n.data.len();
        match &mut n.grad {
            Some(g) => g.iter_mut().for_each(|v| *v = T::zero()),
            None => n.grad = Some(vec![T::zero(); len]),
        }
    }

    pub(super) fn accumulate_grad(&self, g: &[T]) {
        let mut n = self.node.borrow_mut();
        if !n.needs_grad {
            return;
        }
        match &mut n.grad {
            Some(buf) => {
                for (a, &b) in buf.iter_mut().zip(g) {
                    *a = *a + b;
                }
            }
            None => n.grad = Some(g.to_vec()),
        }
    }

    /// Reverse-mode sweep from a scalar output: gradients accumulate into
    /// every tensor on the path that needs them.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::InvalidInput(format!(
                "backward requires a scalar output, got shape {:?}",
                self.shape()
            )));
        }
        if !self.needs_grad() {
            // Constant graph: nothing to do.
            return Ok(());
        }
        let order = self.topo_order();
        self.accumulate_grad(&[T::one()]);
        for t in order.iter().rev() {
            let n = t.node.borrow();
            if let Some(ref f) = n.backward {
                if let Some(ref g) = n.grad {
                    f(g);
                }
            }
        }
        Ok(())
    }

    /// Topological order (parents before children) over the needs-grad
    /// subgraph, iteratively to keep deep graphs off the call stack.
    fn topo_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            let id = t.id();
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(id) {
                continue;
            }
            let parents: Vec<Tensor<T>> = t
                .node
                .borrow()
                .parents
                .iter()
                .filter(|p| p.needs_grad())
                .cloned()
                .collect();
            stack.push((t, true));
            for p in parents {
                stack.push((p, false));
            }
        }
        order
    }

    fn same_shape(&self, other: &Tensor<T>, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "{op}: shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// Elementwise sum.
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.same_shape(other, "add")?;
        let data = self.with_data(|a| other.with_data(|b| a.iter().zip(b).map(|(&x, &y)| x + y).collect()));
        let (pa, pb) = (self.clone(), other.clone());
        Tensor::from_op("add", self.shape(), data, vec![self.clone(), other.clone()], move |g| {
            pa.accumulate_grad(g);
            pb.accumulate_grad(g);
        })
    }

    /// Elementwise difference.
    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.same_shape(other, "sub")?;
        let data = self.with_data(|a| other.with_data(|b| a.iter().zip(b).map(|(&x, &y)| x - y).collect()));
        let (pa, pb) = (self.clone(), other.clone());
        Tensor::from_op("sub", self.shape(), data, vec![self.clone(), other.clone()], move |g| {
            pa.accumulate_grad(g);
            let neg: Vec<T> = g.iter().map(|&v| -v).collect();
            pb.accumulate_grad(&neg);
        })
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.same_shape(other, "mul")?;
        let data = self.with_data(|a| other.with_data(|b| a.iter().zip(b).map(|(&x, &y)| x * y).collect()));
        let (pa, pb) = (self.clone(), other.clone());
        let (va, vb) = (self.to_vec(), other.to_vec());
        Tensor::from_op("mul", self.shape(), data, vec![self.clone(), other.clone()], move |g| {
            let ga: Vec<T> = g.iter().zip(&vb).map(|(&gi, &b)| gi * b).collect();
            pa.accumulate_grad(&ga);
            let gb: Vec<T> = g.iter().zip(&va).map(|(&gi, &a)| gi * a).collect();
            pb.accumulate_grad(&gb);
        })
    }

    /// Multiply by a constant.
    pub fn scale(&self, c: T) -> Result<Tensor<T>> {
        let data = self.with_data(|a| a.iter().map(|&x| x * c).collect());
        let p = self.clone();
        Tensor::from_op("scale", self.shape(), data, vec![self.clone()], move |g| {
            let gp: Vec<T> = g.iter().map(|&v| v * c).collect();
            p.accumulate_grad(&gp);
        })
    }

    /// Elementwise absolute value; the subgradient at zero is zero.
    pub fn abs(&self) -> Result<Tensor<T>> {
        let data = self.with_data(|a| a.iter().map(|&x| x.abs()).collect());
        let p = self.clone();
        let saved = self.to_vec();
        Tensor::from_op("abs", self.shape(), data, vec![self.clone()], move |g| {
            let gp: Vec<T> = g
                .iter()
                .zip(&saved)
                .map(|(&gi, &x)| {
                    if x > T::zero() {
                        gi
                    } else if x < T::zero() {
                        -gi
                    } else {
                        T::zero()
                    }
                })
                .collect();
            p.accumulate_grad(&gp);
        })
    }

    /// Clamp into `[lo, hi]`; the subgradient is zero where the input was
    /// clamped.
    pub fn clamp(&self, lo: T, hi: T) -> Result<Tensor<T>> {
        if lo > hi {
            return Err(Error::InvalidInput(format!("clamp: lo {lo} exceeds hi {hi}")));
        }
        let data = self.with_data(|a| a.iter().map(|&x| x.max(lo).min(hi)).collect());
        let p = self.clone();
        let saved = self.to_vec();
        Tensor::from_op("clamp", self.shape(), data, vec![self.clone()], move |g| {
            let gp: Vec<T> = g
                .iter()
                .zip(&saved)
                .map(|(&gi, &x)| if x >= lo && x <= hi { gi } else { T::zero() })
                .collect();
            p.accumulate_grad(&gp);
        })
    }

    /// Rectified linear unit.
    pub fn relu(&self) -> Result<Tensor<T>> {
        let data = self.with_data(|a| a.iter().map(|&x| x.max(T::zero())).collect());
        let p = self.clone();
        let saved = self.to_vec();
        Tensor::from_op("relu", self.shape(), data, vec![self.clone()], move |g| {
            let gp: Vec<T> =
                g.iter().zip(&saved).map(|(&gi, &x)| if x > T::zero() { gi } else { T::zero() }).collect();
            p.accumulate_grad(&gp);
        })
    }

    /// Logistic sigmoid.
    pub fn sigmoid(&self) -> Result<Tensor<T>> {
        let data: Vec<T> =
            self.with_data(|a| a.iter().map(|&x| T::one() / (T::one() + (-x).exp())).collect());
        let p = self.clone();
        let saved = data.clone();
        Tensor::from_op("sigmoid", self.shape(), data, vec![self.clone()], move |g| {
            let gp: Vec<T> = g.iter().zip(&saved).map(|(&gi, &s)| gi * s * (T::one() - s)).collect();
            p.accumulate_grad(&gp);
        })
    }

    /// Sum of all elements as a scalar tensor. Accumulates in `f64` so long
    /// `f32` chains do not drift.
    pub fn sum_all(&self) -> Result<Tensor<T>> {
        let total = self.with_data(|a| {
            T::from_f64_lossy(a.iter().fold(0.0f64, |acc, &v| acc + v.to_f64().unwrap_or(0.0)))
        });
        let p = self.clone();
        let n = self.numel();
        Tensor::from_op("sum", [1, 1, 1, 1], vec![total], vec![self.clone()], move |g| {
            p.accumulate_grad(&vec![g[0]; n]);
        })
    }

    /// Mean of all elements as a scalar tensor.
    pub fn mean_all(&self) -> Result<Tensor<T>> {
        let n = self.numel();
        let inv = T::from_f64_lossy(1.0 / n as f64);
        self.sum_all()?.scale(inv)
    }

    /// Mean over the elements where `mask` is true. Errors when the mask
    /// selects nothing.
    pub fn masked_mean(&self, mask: &[bool]) -> Result<Tensor<T>> {
        if mask.len() != self.numel() {
            return Err(Error::Shape(format!(
                "mask length {} does not match tensor with {} elements",
                mask.len(),
                self.numel()
            )));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::Numeric("masked_mean over an empty mask".into()));
        }
        let total = self.with_data(|a| {
            T::from_f64_lossy(
                a.iter()
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .fold(0.0f64, |acc, (&v, _)| acc + v.to_f64().unwrap_or(0.0)),
            )
        });
        let inv = T::from_f64_lossy(1.0 / count as f64);
        let p = self.clone();
        let mask: Vec<bool> = mask.to_vec();
        Tensor::from_op("masked_mean", [1, 1, 1, 1], vec![total * inv], vec![self.clone()], move |g| {
            let gp: Vec<T> = mask.iter().map(|&m| if m { g[0] * inv } else { T::zero() }).collect();
            p.accumulate_grad(&gp);
        })
    }

    /// Spatial crop in H and W (used to trim auto-padded forward passes).
    pub fn crop_spatial(&self, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
        let [n, c, h, w] = self.shape();
        if out_h > h || out_w > w || out_h == 0 || out_w == 0 {
            return Err(Error::Shape(format!("cannot crop {h}x{w} to {out_h}x{out_w}")));
        }
        if out_h == h && out_w == w {
            return Ok(self.clone());
        }
        let mut data = Vec::with_capacity(n * c * out_h * out_w);
        self.with_data(|src| {
            for ni in 0..n {
                for ci in 0..c {
                    let plane = (ni * c + ci) * h * w;
                    for y in 0..out_h {
                        let row = plane + y * w;
                        data.extend_from_slice(&src[row..row + out_w]);
                    }
                }
            }
        });
        let p = self.clone();
        Tensor::from_op("crop", [n, c, out_h, out_w], data, vec![self.clone()], move |g| {
            let mut gp = vec![T::zero(); n * c * h * w];
            for ni in 0..n {
                for ci in 0..c {
                    let plane = (ni * c + ci) * h * w;
                    let gplane = (ni * c + ci) * out_h * out_w;
                    for y in 0..out_h {
                        for x in 0..out_w {
                            gp[plane + y * w + x] = g[gplane + y * out_w + x];
                        }
                    }
                }
            }
            p.accumulate_grad(&gp);
        })
    }

    /// Zero-pad on the bottom/right of the spatial dims.
    pub fn pad_spatial(&self, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
        let [n, c, h, w] = self.shape();
        if out_h < h || out_w < w {
            return Err(Error::Shape(format!("cannot pad {h}x{w} down to {out_h}x{out_w}")));
        }
        if out_h == h && out_w == w {
            return Ok(self.clone());
        }
        let mut data = vec![T::zero(); n * c * out_h * out_w];
        self.with_data(|src| {
            for ni in 0..n {
                for ci in 0..c {
                    let plane = (ni * c + ci) * h * w;
                    let dplane = (ni * c + ci) * out_h * out_w;
                    for y in 0..h {
                        for x in 0..w {
                            data[dplane + y * out_w + x] = src[plane + y * w + x];
                        }
                    }
                }
            }
        });
        let p = self.clone();
        Tensor::from_op("pad", [n, c, out_h, out_w], data, vec![self.clone()], move |g| {
            let mut gp = vec![T::zero(); n * c * h * w];
            for ni in 0..n {
                for ci in 0..c {
                    let plane = (ni * c + ci) * h * w;
                    let gplane = (ni * c + ci) * out_h * out_w;
                    for y in 0..h {
                        for x in 0..w {
                            gp[plane + y * w + x] = g[gplane + y * out_w + x];
                        }
                    }
                }
            }
            p.accumulate_grad(&gp);
        })
    }
}

/// Stack tensors along the channel axis; batch and spatial dims must match.
pub fn concat_channels<T: Scalar>(xs: &[Tensor<T>]) -> Result<Tensor<T>> {
    if xs.is_empty() {
        return Err(Error::Shape("concat_channels needs at least one input".into()));
    }
    let [n, _, h, w] = xs[0].shape();
    let mut c_total = 0;
    for x in xs {
        let [xn, xc, xh, xw] = x.shape();
        if xn != n || xh != h || xw != w {
            return Err(Error::Shape(format!(
                "concat_channels: {:?} incompatible with {:?}",
                x.shape(),
                xs[0].shape()
            )));
        }
        c_total += xc;
    }
    let mut data = Vec::with_capacity(n * c_total * h * w);
    for ni in 0..n {
        for x in xs {
            let xc = x.shape()[1];
            x.with_data(|src| {
                let start = ni * xc * h * w;
                data.extend_from_slice(&src[start..start + xc * h * w]);
            });
        }
    }
    let parents: Vec<Tensor<T>> = xs.to_vec();
    let handles: Vec<Tensor<T>> = xs.to_vec();
    let channels: Vec<usize> = xs.iter().map(|x| x.shape()[1]).collect();
    Tensor::from_op("concat_channels", [n, c_total, h, w], data, parents, move |g| {
        let plane = h * w;
        for (i, t) in handles.iter().enumerate() {
            let xc = channels[i];
            let offset: usize = channels[..i].iter().sum();
            let mut gp = vec![T::zero(); n * xc * plane];
            for ni in 0..n {
                let src = (ni * c_total + offset) * plane;
                let dst = ni * xc * plane;
                gp[dst..dst + xc * plane].copy_from_slice(&g[src..src + xc * plane]);
            }
            t.accumulate_grad(&gp);
        }
    })
}

//! Reverse-mode automatic differentiation over `ndarray` arrays.
//!
//! A [`Tape`] records every operation of a forward pass; [`Tape::backward`]
//! replays it in reverse, accumulating gradients for every node. All values
//! are `f64` so analytic gradients can be checked against central finite
//! differences at tight tolerances. Everything runs single-threaded and in
//! insertion order, which makes whole training runs bitwise reproducible.

mod conv;
mod ops;

pub use conv::{conv2d_shape, Conv2dSpec};
pub use ops::upsample_bilinear_array;

use ndarray::{ArrayD, IxDyn};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScaled(Var, Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Reshape(Var),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: Conv2dSpec,
    },
    MaxPool2d {
        input: Var,
        argmax: Vec<usize>,
    },
    UpsampleBilinear {
        input: Var,
    },
    /// Multiply a `C x H x W` tensor by an `H x W` map, broadcast over channels.
    MulSpatial {
        input: Var,
        weights: Var,
    },
    /// Sum a `C x H x W` tensor over its spatial axes, yielding a length-C vector.
    SumSpatial(Var),
    SumAll(Var),
    MeanAll(Var),
    /// Elementwise division of a tensor by a scalar variable.
    DivScalar(Var, Var),
    /// Stack N length-D vectors into an `N x D` matrix.
    StackRows(Vec<Var>),
    /// Cosine distance field between dense features and a prototype matrix.
    CosineDistance {
        features: Var,
        protos: Var,
    },
    /// Mean cross-entropy of softmax(logits) against per-pixel class targets.
    /// `valid` masks out pixels whose class has no logit row.
    SoftmaxCrossEntropy {
        logits: Var,
        target: Vec<usize>,
        valid: Vec<bool>,
        probs: ArrayD<f64>,
    },
    /// Build an `N x 1 x K x K` Gabor kernel stack from five length-N
    /// parameter vectors (theta, lambda, psi, sigma, gamma).
    GaborKernels {
        params: [Var; 5],
        kernel_size: usize,
    },
}

pub(crate) struct Node {
    pub value: ArrayD<f64>,
    pub op: Op,
}

/// Counters for the rare numeric edge cases the forward pass tolerates.
#[derive(Debug, Default, Clone, Copy)]
pub struct Diagnostics {
    /// Cosine distances that were pinned to 2.0 because a vector had zero norm.
    pub zero_norm_distances: u64,
    /// Classes skipped in the reverse (query-to-support) pass because the
    /// predicted query mask contained no pixel of that class.
    pub par_skipped_classes: u64,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    pub diagnostics: Diagnostics,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &ArrayD<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = &self.nodes[v.0].value;
        debug_assert_eq!(val.len(), 1, "scalar() on non-scalar node");
        val.iter().next().copied().unwrap()
    }

    pub(crate) fn push(&mut self, value: ArrayD<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar_leaf(&mut self, value: f64) -> Var {
        self.leaf(ArrayD::from_elem(IxDyn(&[]), value))
    }

    /// Runs the backward pass from `root` (must be scalar) and returns
    /// per-node gradients. Nodes unreachable from `root` get `None`.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(
            self.nodes[root.0].value.len(),
            1,
            "backward root must be a scalar"
        );
        let mut grads: Vec<Option<ArrayD<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(ArrayD::from_elem(self.nodes[root.0].value.raw_dim(), 1.0));

        for idx in (0..=root.0).rev() {
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &grad, &mut grads);
            grads[idx] = Some(grad);
        }
        Gradients { grads }
    }
}

pub struct Gradients {
    grads: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of a node, or zeros in its shape when it did not receive one.
    pub fn get_or_zeros(&self, v: Var, tape: &Tape) -> ArrayD<f64> {
        match self.grads[v.0] {
            Some(ref g) => g.clone(),
            None => ArrayD::zeros(tape.value(v).raw_dim()),
        }
    }
}

pub(crate) fn accumulate(slot: &mut Option<ArrayD<f64>>, delta: ArrayD<f64>) {
    match slot {
        Some(existing) => *existing += &delta,
        None => *slot = Some(delta),
    }
}

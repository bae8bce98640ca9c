//! Feed-forward actor and critic networks with hand-written backprop.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

/// Affine layer `y = x W + b`, with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((inputs, outputs)),
            b: Array1::zeros(outputs),
        }
    }

    /// Orthogonal weights scaled by `gain`, zero bias.
    fn orthogonal<R: Rng + ?Sized>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        Self {
            w: orthogonal(inputs, outputs, rng) * gain,
            b: Array1::zeros(outputs),
        }
    }
}

/// A random matrix with orthonormal rows or columns (whichever are fewer),
/// via modified Gram-Schmidt on a Gaussian sample.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let (long, short) = (rows.max(cols), rows.min(cols));
    let mut q = Array2::<f64>::zeros((short, long));
    for i in 0..short {
        loop {
            let mut v: Array1<f64> = (0..long).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            for j in 0..i {
                let qj = q.row(j);
                let proj = v.dot(&qj);
                v.scaled_add(-proj, &qj);
            }
            let norm = v.dot(&v).sqrt();
            if norm > 1e-8 {
                q.row_mut(i).assign(&(v / norm));
                break;
            }
        }
    }
    if rows >= cols {
        q.reversed_axes().as_standard_layout().into_owned()
    } else {
        q
    }
}

/// Multi-layer perceptron: tanh on hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Layer inputs kept for the backward pass; `inputs[0]` is the batch itself.
pub struct Trace {
    inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut R) -> Self {
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i == last { output_gain } else { hidden_gain };
                Dense::orthogonal(w[0], w[1], gain, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.w.nrows(), l.w.ncols()))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").w.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = h.dot(&l.w) + &l.b;
            if i < last {
                h.mapv_inplace(f64::tanh);
            }
        }
        h
    }

    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = h.dot(&l.w) + &l.b;
            if i < last {
                z.mapv_inplace(f64::tanh);
            }
            inputs.push(std::mem::replace(&mut h, z));
        }
        Trace { inputs, output: h }
    }

    /// Accumulates parameter gradients into `grads` given `d_out = dL/d output`.
    pub fn backward(&self, trace: &Trace, d_out: Array2<f64>, grads: &mut Mlp) {
        let mut delta = d_out;
        for i in (0..self.layers.len()).rev() {
            let input = &trace.inputs[i];
            grads.layers[i].w += &input.t().dot(&delta);
            grads.layers[i].b += &delta.sum_axis(Axis(0));
            if i > 0 {
                let mut d_in = delta.dot(&self.layers[i].w.t());
                // input[i] is tanh output of layer i-1
                d_in.zip_mut_with(input, |d, &a| *d *= 1.0 - a * a);
                delta = d_in;
            }
        }
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.w.as_slice().expect("standard layout"),
                    l.b.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.w.as_slice_mut().expect("standard layout"),
                    l.b.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.layers
            .iter()
            .flat_map(|l| [vec![l.w.nrows(), l.w.ncols()], vec![l.b.len()]])
            .collect()
    }
}

/// Separate actor (two logits: STOP, CONTINUE) and critic (state value).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork {
    pub actor: Mlp,
    pub critic: Mlp,
}

impl PolicyNetwork {
    /// Two tanh hidden layers of `hidden` units each.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let gain = 2f64.sqrt();
        Self {
            actor: Mlp::new(&[obs_dim, hidden, hidden, 2], gain, 0.01, rng),
            critic: Mlp::new(&[obs_dim, hidden, hidden, 1], gain, 1.0, rng),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn hidden_width(&self) -> usize {
        self.actor.layers[0].w.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            actor: self.actor.zeros_like(),
            critic: self.critic.zeros_like(),
        }
    }

    /// Action probabilities `[p_stop, p_continue]` for each row of `obs`.
    pub fn probabilities(&self, obs: ArrayView2<f64>) -> Array2<f64> {
        let mut logits = self.actor.forward(obs);
        for mut row in logits.rows_mut() {
            let p = softmax2(row[0], row[1]);
            row[0] = p[0];
            row[1] = p[1];
        }
        logits
    }

    pub fn values(&self, obs: ArrayView2<f64>) -> Array1<f64> {
        self.critic.forward(obs).column(0).to_owned()
    }

    /// Parameter arrays in declaration order: actor layers then critic
    /// layers, each as weight then bias.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.actor.param_slices();
        v.extend(self.critic.param_slices());
        v
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.actor.param_slices_mut();
        v.extend(self.critic.param_slices_mut());
        v
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (net, mlp) in [("actor", &self.actor), ("critic", &self.critic)] {
            for i in 0..mlp.layers.len() {
                names.push(format!("{net}.{i}.weight"));
                names.push(format!("{net}.{i}.bias"));
            }
        }
        names
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut v = self.actor.shapes();
        v.extend(self.critic.shapes());
        v
    }

    pub fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Builds a network from flat parameter arrays; the first `actor_layers`
    /// weight/bias pairs belong to the actor.
    pub fn from_parts(shapes: &[Vec<usize>], arrays: Vec<Vec<f64>>, actor_layers: usize) -> Option<Self> {
        if shapes.len() != arrays.len() || shapes.len() % 2 != 0 {
            return None;
        }
        let mut layers = Vec::new();
        for (pair, data) in shapes.chunks(2).zip(arrays.chunks(2)) {
            let (ws, bs) = (&pair[0], &pair[1]);
            if ws.len() != 2 || bs.len() != 1 || bs[0] != ws[1] {
                return None;
            }
            let w = Array2::from_shape_vec((ws[0], ws[1]), data[0].clone()).ok()?;
            let b = Array1::from_vec(data[1].clone());
            if b.len() != bs[0] {
                return None;
            }
            layers.push(Dense { w, b });
        }
        if actor_layers == 0 || actor_layers >= layers.len() {
            return None;
        }
        let critic = layers.split_off(actor_layers);
        let (actor, critic) = (Mlp { layers }, Mlp { layers: critic });
        if critic.layers.is_empty()
            || actor.output_dim() != 2
            || critic.output_dim() != 1
            || critic.input_dim() != actor.input_dim()
            || !chain_ok(&actor)
            || !chain_ok(&critic)
        {
            return None;
        }
        Some(Self { actor, critic })
    }
}

fn chain_ok(m: &Mlp) -> bool {
    m.layers.windows(2).all(|w| w[0].w.ncols() == w[1].w.nrows())
}

/// Numerically stable two-way softmax.
pub fn softmax2(a: f64, b: f64) -> [f64; 2] {
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    let s = ea + eb;
    [ea / s, eb / s]
}

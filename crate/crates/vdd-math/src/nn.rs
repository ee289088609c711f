//! Layer building blocks: parameter initialization plus Linear / MLP / GRU.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tape::{ParamStore, Tape, Tensor};

/// Uniform Glorot initialization.
pub fn glorot(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> ArrayD<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
}

pub fn zeros(shape: &[usize]) -> ArrayD<f64> {
    ArrayD::zeros(IxDyn(shape))
}

pub fn ones(shape: &[usize]) -> ArrayD<f64> {
    ArrayD::ones(IxDyn(shape))
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn init(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, in_dim: usize, out_dim: usize) -> Self {
        store.insert(&format!("{name}/w"), glorot(rng, &[in_dim, out_dim], in_dim, out_dim));
        store.insert(&format!("{name}/b"), zeros(&[out_dim]));
        Linear {
            name: name.to_string(),
            in_dim,
            out_dim,
        }
    }

    /// x: [B, in] -> [B, out]
    pub fn forward(&self, tape: &Tape, store: &ParamStore, x: &Tensor) -> Tensor {
        let w = tape.param(store, &format!("{}/w", self.name));
        let b = tape.param(store, &format!("{}/b", self.name));
        &x.matmul(&w) + &b
    }
}

/// Linear -> LayerNorm -> SiLU hidden stack with a plain linear output head.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub name: String,
    pub hidden: Vec<Linear>,
    pub norms: bool,
    pub out: Linear,
}

impl Mlp {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_dim: usize,
        hidden_dims: &[usize],
        out_dim: usize,
        norms: bool,
    ) -> Self {
        let mut hidden = Vec::new();
        let mut d = in_dim;
        for (i, &hd) in hidden_dims.iter().enumerate() {
            hidden.push(Linear::init(store, rng, &format!("{name}/h{i}"), d, hd));
            if norms {
                store.insert(&format!("{name}/h{i}/ln_g"), ones(&[hd]));
                store.insert(&format!("{name}/h{i}/ln_b"), zeros(&[hd]));
            }
            d = hd;
        }
        let out = Linear::init(store, rng, &format!("{name}/out"), d, out_dim);
        Mlp {
            name: name.to_string(),
            hidden,
            norms,
            out,
        }
    }

    pub fn forward(&self, tape: &Tape, store: &ParamStore, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        for (i, layer) in self.hidden.iter().enumerate() {
            h = layer.forward(tape, store, &h);
            if self.norms {
                let g = tape.param(store, &format!("{}/h{i}/ln_g", self.name));
                let b = tape.param(store, &format!("{}/h{i}/ln_b", self.name));
                h = h.layer_norm(&g, &b, h.shape().len() - 1, 1e-5);
            }
            h = h.silu();
        }
        self.out.forward(tape, store, &h)
    }
}

/// Standard GRU cell.
///
/// r = sigmoid(x Wr + h Ur + br); u = sigmoid(x Wu + h Uu + bu);
/// c = tanh(x Wc + (r*h) Uc + bc); h' = u*h + (1-u)*c
#[derive(Clone, Debug)]
pub struct GruCell {
    pub name: String,
    pub in_dim: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn init(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, in_dim: usize, hidden: usize) -> Self {
        for gate in ["r", "u", "c"] {
            store.insert(
                &format!("{name}/w{gate}"),
                glorot(rng, &[in_dim, hidden], in_dim, hidden),
            );
            store.insert(
                &format!("{name}/u{gate}"),
                glorot(rng, &[hidden, hidden], hidden, hidden),
            );
            store.insert(&format!("{name}/b{gate}"), zeros(&[hidden]));
        }
        GruCell {
            name: name.to_string(),
            in_dim,
            hidden,
        }
    }

    /// x: [B, in], h: [B, hidden] -> [B, hidden]
    pub fn forward(&self, tape: &Tape, store: &ParamStore, x: &Tensor, h: &Tensor) -> Tensor {
        let p = |g: &str, m: &str| tape.param(store, &format!("{}/{m}{g}", self.name));
        let r = (&(&x.matmul(&p("r", "w")) + &h.matmul(&p("r", "u"))) + &p("r", "b")).sigmoid();
        let u = (&(&x.matmul(&p("u", "w")) + &h.matmul(&p("u", "u"))) + &p("u", "b")).sigmoid();
        let rh = &r * h;
        let c = (&(&x.matmul(&p("c", "w")) + &rh.matmul(&p("c", "u"))) + &p("c", "b")).tanh();
        let one_minus_u = u.scale(-1.0).add_scalar(1.0);
        &(&u * h) + &(&one_minus_u * &c)
    }
}

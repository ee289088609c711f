//! Reverse-mode autodiff tape.
//!
//! Values are `ArrayD<f64>`. A `Tape` owns the recorded graph of one forward
//! pass; `Tensor` is a cheap handle into it. Parameters live outside the tape
//! in a `ParamStore` and enter a graph via [`Tape::param`], which caches the
//! node so repeated reads of the same parameter share one gradient slot.

use std::cell::{Ref, RefCell};
use std::collections::BTreeMap;
use std::rc::Rc;

use ndarray::{ArrayD, Axis, IxDyn, Slice};

/// Named parameter arrays. BTreeMap keeps iteration order deterministic.
#[derive(Clone, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, ArrayD<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: ArrayD<f64>) {
        self.entries.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> &ArrayD<f64> {
        self.entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ArrayD<f64> {
        self.entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ArrayD<f64>)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|a| a.len()).sum()
    }
}

/// Backward rule: receives all node values, the output gradient, and a sink
/// accumulating gradients into parent slots.
pub type BackFn = Box<dyn Fn(&[ArrayD<f64>], &ArrayD<f64>, &mut dyn FnMut(usize, ArrayD<f64>))>;

struct TapeInner {
    values: Vec<ArrayD<f64>>,
    backs: Vec<Option<BackFn>>,
    /// node id -> parameter name (one entry per distinct parameter)
    params: Vec<(usize, String)>,
    param_nodes: BTreeMap<String, usize>,
}

#[derive(Clone)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone)]
pub struct Tensor {
    tape: Tape,
    id: usize,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                values: Vec::new(),
                backs: Vec::new(),
                params: Vec::new(),
                param_nodes: BTreeMap::new(),
            })),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: ArrayD<f64>, back: Option<BackFn>) -> Tensor {
        let mut inner = self.inner.borrow_mut();
        let id = inner.values.len();
        inner.values.push(value);
        inner.backs.push(back);
        Tensor {
            tape: self.clone(),
            id,
        }
    }

    pub fn constant(&self, value: ArrayD<f64>) -> Tensor {
        self.push(value, None)
    }

    /// Id the next pushed node will receive (for custom ops that want to read
    /// their own output value in backward).
    pub fn next_id(&self) -> usize {
        self.len()
    }

    /// Record a custom op. The closure must only sink gradients to parents
    /// with smaller ids.
    pub fn push_op(&self, value: ArrayD<f64>, back: BackFn) -> Tensor {
        self.push(value, Some(back))
    }

    pub fn scalar(&self, x: f64) -> Tensor {
        self.constant(ArrayD::from_elem(IxDyn(&[]), x))
    }

    pub fn zeros(&self, shape: &[usize]) -> Tensor {
        self.constant(ArrayD::zeros(IxDyn(shape)))
    }

    /// Enter a named parameter into the graph. Cached per tape: repeated calls
    /// return the same node so gradients from all uses accumulate together.
    pub fn param(&self, store: &ParamStore, name: &str) -> Tensor {
        if let Some(&id) = self.inner.borrow().param_nodes.get(name) {
            return Tensor {
                tape: self.clone(),
                id,
            };
        }
        let t = self.constant(store.get(name).clone());
        let mut inner = self.inner.borrow_mut();
        inner.params.push((t.id, name.to_string()));
        inner.param_nodes.insert(name.to_string(), t.id);
        t
    }
}

/// Gradients produced by one backward pass.
pub struct Grads {
    slots: Vec<Option<ArrayD<f64>>>,
}

impl Grads {
    /// Gradient with respect to a tensor; zeros if the loss does not reach it.
    pub fn wrt(&self, t: &Tensor) -> ArrayD<f64> {
        match self.slots.get(t.id).and_then(|s| s.as_ref()) {
            Some(g) => g.clone(),
            None => ArrayD::zeros(t.value().dim()),
        }
    }

    pub fn has(&self, t: &Tensor) -> bool {
        self.slots.get(t.id).map_or(false, |s| s.is_some())
    }

    /// Gradients of all parameters touched by the graph.
    pub fn by_param(&self, tape: &Tape) -> BTreeMap<String, ArrayD<f64>> {
        let inner = tape.inner.borrow();
        let mut out = BTreeMap::new();
        for (id, name) in &inner.params {
            if let Some(Some(g)) = self.slots.get(*id) {
                out.insert(name.clone(), g.clone());
            }
        }
        out
    }
}

fn accum(slot: &mut Option<ArrayD<f64>>, g: ArrayD<f64>) {
    match slot {
        Some(a) => *a += &g,
        None => *slot = Some(g),
    }
}

impl Tensor {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    fn val(&self) -> Ref<'_, ArrayD<f64>> {
        Ref::map(self.tape.inner.borrow(), |i| &i.values[self.id])
    }

    pub fn value(&self) -> ArrayD<f64> {
        self.val().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.val().shape().to_vec()
    }

    pub fn scalar_value(&self) -> f64 {
        let v = self.val();
        assert_eq!(v.len(), 1, "scalar_value on non-scalar tensor");
        *v.iter().next().unwrap()
    }

    /// Run reverse-mode accumulation from this (typically scalar) tensor.
    pub fn backward(&self) -> Grads {
        let inner = self.tape.inner.borrow();
        let n = inner.values.len();
        let mut slots: Vec<Option<ArrayD<f64>>> = Vec::with_capacity(n);
        slots.resize_with(n, || None);
        slots[self.id] = Some(ArrayD::ones(inner.values[self.id].dim()));
        for id in (0..=self.id).rev() {
            if slots[id].is_none() {
                continue;
            }
            let Some(back) = inner.backs[id].as_ref() else {
                continue;
            };
            let (left, right) = slots.split_at_mut(id);
            let g = right[0].as_ref().unwrap();
            back(&inner.values, g, &mut |pid, delta| {
                debug_assert!(pid < id, "backward edge must point to earlier node");
                accum(&mut left[pid], delta);
            });
        }
        Grads { slots }
    }

    // ---- shape helpers ----------------------------------------------------

    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        let v = self.val();
        let old_shape = v.shape().to_vec();
        let new = v
            .to_shape(IxDyn(shape))
            .expect("reshape: incompatible size")
            .to_owned();
        drop(v);
        let xid = self.id;
        self.tape.push(
            new,
            Some(Box::new(move |_vals, g, sink| {
                let gr = g
                    .to_shape(IxDyn(&old_shape))
                    .expect("reshape backward")
                    .to_owned();
                sink(xid, gr);
            })),
        )
    }

    pub fn detach(&self) -> Tensor {
        self.tape.constant(self.value())
    }

    /// Forward: `value` (a constant). Backward: gradient flows to self
    /// unchanged. Used for straight-through estimators.
    pub fn straight_through(&self, value: ArrayD<f64>) -> Tensor {
        assert_eq!(value.shape(), self.val().shape(), "straight_through shape");
        let xid = self.id;
        self.tape.push(
            value,
            Some(Box::new(move |_vals, g, sink| sink(xid, g.clone()))),
        )
    }

    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Tensor {
        let v = self.val();
        let full = v.shape().to_vec();
        let out = v
            .slice_axis(
                Axis(axis),
                Slice::from(start as isize..(start + len) as isize),
            )
            .to_owned();
        drop(v);
        let xid = self.id;
        self.tape.push(
            out,
            Some(Box::new(move |_vals, g, sink| {
                let mut gr = ArrayD::<f64>::zeros(IxDyn(&full));
                gr.slice_axis_mut(
                    Axis(axis),
                    Slice::from(start as isize..(start + len) as isize),
                )
                .assign(g);
                sink(xid, gr);
            })),
        )
    }

    pub fn concat(axis: usize, parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty());
        let tape = parts[0].tape.clone();
        let views: Vec<ArrayD<f64>> = parts.iter().map(|p| p.value()).collect();
        let view_refs: Vec<_> = views.iter().map(|v| v.view()).collect();
        let out = ndarray::concatenate(Axis(axis), &view_refs).expect("concat shapes");
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let lens: Vec<usize> = views.iter().map(|v| v.shape()[axis]).collect();
        tape.push(
            out,
            Some(Box::new(move |_vals, g, sink| {
                let mut start = 0usize;
                for (&pid, &len) in ids.iter().zip(&lens) {
                    let piece = g
                        .slice_axis(Axis(axis), Slice::from(start as isize..(start + len) as isize))
                        .to_owned();
                    sink(pid, piece);
                    start += len;
                }
            })),
        )
    }

    // ---- unary elementwise ------------------------------------------------

    fn unary(
        &self,
        f: impl Fn(f64) -> f64,
        back: impl Fn(f64, f64) -> f64 + 'static, // (x, out) -> dout/dx
    ) -> Tensor {
        let v = self.val();
        let out = v.mapv(&f);
        drop(v);
        let xid = self.id;
        let oid = self.tape.len(); // id the new node will receive
        self.tape.push(
            out,
            Some(Box::new(move |vals, g, sink| {
                let x = &vals[xid];
                let o = &vals[oid];
                let mut gr = ArrayD::<f64>::zeros(x.dim());
                ndarray::Zip::from(&mut gr)
                    .and(x)
                    .and(o)
                    .and(g)
                    .for_each(|gr, &x, &o, &g| *gr = g * back(x, o));
                sink(xid, gr);
            })),
        )
    }

    pub fn exp(&self) -> Tensor {
        self.unary(f64::exp, |_x, o| o)
    }

    pub fn ln(&self) -> Tensor {
        self.unary(f64::ln, |x, _o| 1.0 / x)
    }

    pub fn tanh(&self) -> Tensor {
        self.unary(f64::tanh, |_x, o| 1.0 - o * o)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary(sigmoid_scalar, |_x, o| o * (1.0 - o))
    }

    pub fn silu(&self) -> Tensor {
        self.unary(
            |x| x * sigmoid_scalar(x),
            |x, _o| {
                let s = sigmoid_scalar(x);
                s + x * s * (1.0 - s)
            },
        )
    }

    pub fn sin(&self) -> Tensor {
        self.unary(f64::sin, |x, _o| x.cos())
    }

    pub fn cos(&self) -> Tensor {
        self.unary(f64::cos, |x, _o| -x.sin())
    }

    pub fn tan(&self) -> Tensor {
        self.unary(f64::tan, |x, _o| {
            let c = x.cos();
            1.0 / (c * c)
        })
    }

    pub fn atan(&self) -> Tensor {
        self.unary(f64::atan, |x, _o| 1.0 / (1.0 + x * x))
    }

    pub fn sqrt(&self) -> Tensor {
        self.unary(f64::sqrt, |_x, o| 0.5 / o)
    }

    pub fn square(&self) -> Tensor {
        self.unary(|x| x * x, |x, _o| 2.0 * x)
    }

    pub fn abs(&self) -> Tensor {
        self.unary(f64::abs, |x, _o| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn neg(&self) -> Tensor {
        self.unary(|x| -x, |_x, _o| -1.0)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.unary(move |x| c * x, move |_x, _o| c)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        self.unary(move |x| x + c, |_x, _o| 1.0)
    }

    /// Hard clamp; gradient is zero outside `[lo, hi]`.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        self.unary(
            move |x| x.clamp(lo, hi),
            move |x, _o| {
                if (lo..=hi).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            },
        )
    }

    /// Clamp with a straight-through gradient (passes everywhere).
    pub fn clamp_st(&self, lo: f64, hi: f64) -> Tensor {
        self.unary(move |x| x.clamp(lo, hi), |_x, _o| 1.0)
    }

    /// max(x, c); gradient passes where x >= c.
    pub fn max_scalar(&self, c: f64) -> Tensor {
        self.unary(
            move |x| x.max(c),
            move |x, _o| if x >= c { 1.0 } else { 0.0 },
        )
    }

    pub fn min_scalar(&self, c: f64) -> Tensor {
        self.unary(
            move |x| x.min(c),
            move |x, _o| if x <= c { 1.0 } else { 0.0 },
        )
    }

    /// 1.0 where x >= 0 else 0.0; zero gradient.
    pub fn step_fn(&self) -> Tensor {
        self.unary(|x| if x >= 0.0 { 1.0 } else { 0.0 }, |_x, _o| 0.0)
    }

    // ---- binary (broadcasting) ---------------------------------------------

    fn binary(
        &self,
        rhs: &Tensor,
        f: impl Fn(f64, f64) -> f64,
        da: impl Fn(f64, f64) -> f64 + 'static, // (a, b) -> dout/da
        db: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Tensor {
        let av = self.val();
        let bv = rhs.val();
        let out_shape = broadcast_shape(av.shape(), bv.shape());
        let ab = av.broadcast(IxDyn(&out_shape)).expect("lhs broadcast");
        let bb = bv.broadcast(IxDyn(&out_shape)).expect("rhs broadcast");
        let mut out = ArrayD::<f64>::zeros(IxDyn(&out_shape));
        ndarray::Zip::from(&mut out)
            .and(&ab)
            .and(&bb)
            .for_each(|o, &a, &b| *o = f(a, b));
        let a_shape = av.shape().to_vec();
        let b_shape = bv.shape().to_vec();
        drop(av);
        drop(bv);
        let (aid, bid) = (self.id, rhs.id);
        self.tape.push(
            out,
            Some(Box::new(move |vals, g, sink| {
                let av = vals[aid].broadcast(g.dim()).unwrap().to_owned();
                let bv = vals[bid].broadcast(g.dim()).unwrap().to_owned();
                let mut ga = ArrayD::<f64>::zeros(g.dim());
                let mut gb = ArrayD::<f64>::zeros(g.dim());
                ndarray::Zip::from(&mut ga)
                    .and(&av)
                    .and(&bv)
                    .and(g)
                    .for_each(|ga, &a, &b, &g| *ga = g * da(a, b));
                ndarray::Zip::from(&mut gb)
                    .and(&av)
                    .and(&bv)
                    .and(g)
                    .for_each(|gb, &a, &b, &g| *gb = g * db(a, b));
                sink(aid, unbroadcast(ga, &a_shape));
                sink(bid, unbroadcast(gb, &b_shape));
            })),
        )
    }

    pub fn add(&self, rhs: &Tensor) -> Tensor {
        self.binary(rhs, |a, b| a + b, |_a, _b| 1.0, |_a, _b| 1.0)
    }

    pub fn sub(&self, rhs: &Tensor) -> Tensor {
        self.binary(rhs, |a, b| a - b, |_a, _b| 1.0, |_a, _b| -1.0)
    }

    pub fn mul(&self, rhs: &Tensor) -> Tensor {
        self.binary(rhs, |a, b| a * b, |_a, b| b, |a, _b| a)
    }

    pub fn div(&self, rhs: &Tensor) -> Tensor {
        self.binary(rhs, |a, b| a / b, |_a, b| 1.0 / b, |a, b| -a / (b * b))
    }

    /// Elementwise atan2(self, other) with broadcasting.
    pub fn atan2(&self, x: &Tensor) -> Tensor {
        self.binary(
            x,
            |y, x| y.atan2(x),
            |y, x| x / (x * x + y * y),
            |y, x| -y / (x * x + y * y),
        )
    }

    // ---- matmul -------------------------------------------------------------

    /// [M,K] x [K,N] -> [M,N]
    pub fn matmul(&self, rhs: &Tensor) -> Tensor {
        let av = self.val();
        let bv = rhs.val();
        let a2 = av
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .expect("matmul lhs must be 2-D");
        let b2 = bv
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .expect("matmul rhs must be 2-D");
        let out = a2.dot(&b2).into_dyn();
        drop(av);
        drop(bv);
        let (aid, bid) = (self.id, rhs.id);
        self.tape.push(
            out,
            Some(Box::new(move |vals, g, sink| {
                let a = vals[aid]
                    .view()
                    .into_dimensionality::<ndarray::Ix2>()
                    .unwrap();
                let b = vals[bid]
                    .view()
                    .into_dimensionality::<ndarray::Ix2>()
                    .unwrap();
                let g2 = g.view().into_dimensionality::<ndarray::Ix2>().unwrap();
                sink(aid, g2.dot(&b.t()).into_dyn());
                sink(bid, a.t().dot(&g2).into_dyn());
            })),
        )
    }

    // ---- reductions ----------------------------------------------------------

    pub fn sum_all(&self) -> Tensor {
        let v = self.val();
        let s = v.sum();
        let shape = v.shape().to_vec();
        drop(v);
        let xid = self.id;
        self.tape.push(
            ArrayD::from_elem(IxDyn(&[]), s),
            Some(Box::new(move |_vals, g, sink| {
                let gs = *g.iter().next().unwrap();
                sink(xid, ArrayD::from_elem(IxDyn(&shape), gs));
            })),
        )
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.val().len() as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// Sum along `axis`, removing it.
    pub fn sum_axis(&self, axis: usize) -> Tensor {
        let v = self.val();
        let out = v.sum_axis(Axis(axis));
        let full = v.shape().to_vec();
        drop(v);
        let xid = self.id;
        self.tape.push(
            out.into_dyn(),
            Some(Box::new(move |_vals, g, sink| {
                let expanded = g.clone().insert_axis(Axis(axis));
                let gr = expanded
                    .broadcast(IxDyn(&full))
                    .expect("sum_axis backward broadcast")
                    .to_owned();
                sink(xid, gr);
            })),
        )
    }

    pub fn mean_axis(&self, axis: usize) -> Tensor {
        let n = self.val().shape()[axis] as f64;
        self.sum_axis(axis).scale(1.0 / n)
    }

    // ---- softmax family -------------------------------------------------------

    /// log softmax along `axis` (numerically stable, single node).
    pub fn log_softmax(&self, axis: usize) -> Tensor {
        let v = self.val();
        let out = log_softmax_value(&v, axis);
        drop(v);
        let xid = self.id;
        let oid = self.tape.len();
        self.tape.push(
            out,
            Some(Box::new(move |vals, g, sink| {
                // d/dx log_softmax: g - softmax * sum(g, axis)
                let p = vals[oid].mapv(f64::exp);
                let gsum = g.sum_axis(Axis(axis)).insert_axis(Axis(axis));
                let gsum_b = gsum.broadcast(g.dim()).unwrap();
                let mut gr = ArrayD::<f64>::zeros(g.dim());
                ndarray::Zip::from(&mut gr)
                    .and(g)
                    .and(&p)
                    .and(&gsum_b)
                    .for_each(|gr, &g, &p, &s| *gr = g - p * s);
                sink(xid, gr);
            })),
        )
    }

    pub fn softmax(&self, axis: usize) -> Tensor {
        self.log_softmax(axis).exp()
    }

    // ---- layer norm -----------------------------------------------------------

    /// Layer normalization along `axis` with per-feature gain/bias of length
    /// `shape[axis]`.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, axis: usize, eps: f64) -> Tensor {
        let v = self.val();
        let gm = gamma.val();
        let bt = beta.val();
        let c = v.shape()[axis];
        assert_eq!(gm.len(), c, "layer_norm gamma length");
        assert_eq!(bt.len(), c, "layer_norm beta length");
        let mut out = v.clone();
        let gms = gm.as_slice().unwrap().to_vec();
        let bts = bt.as_slice().unwrap().to_vec();
        for mut lane in out.lanes_mut(Axis(axis)) {
            let n = lane.len() as f64;
            let mean = lane.sum() / n;
            let var = lane.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            for (i, x) in lane.iter_mut().enumerate() {
                *x = (*x - mean) * inv * gms[i] + bts[i];
            }
        }
        drop(v);
        drop(gm);
        drop(bt);
        let (xid, gid, bid) = (self.id, gamma.id, beta.id);
        self.tape.push(
            out,
            Some(Box::new(move |vals, g, sink| {
                let x = &vals[xid];
                let gm = vals[gid].as_slice().unwrap().to_vec();
                let c = x.shape()[axis];
                let mut gx = ArrayD::<f64>::zeros(x.dim());
                let mut ggamma = vec![0.0f64; c];
                let mut gbeta = vec![0.0f64; c];
                for ((xl, gl), mut gxl) in x
                    .lanes(Axis(axis))
                    .into_iter()
                    .zip(g.lanes(Axis(axis)))
                    .zip(gx.lanes_mut(Axis(axis)))
                {
                    let n = xl.len() as f64;
                    let mean = xl.sum() / n;
                    let var = xl.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                    let inv = 1.0 / (var + eps).sqrt();
                    // xhat and the two reduced terms
                    let mut sum_gy = 0.0;
                    let mut sum_gy_xhat = 0.0;
                    for i in 0..c as usize {
                        let xh = (xl[i] - mean) * inv;
                        let gy = gl[i] * gm[i];
                        sum_gy += gy;
                        sum_gy_xhat += gy * xh;
                        ggamma[i] += gl[i] * xh;
                        gbeta[i] += gl[i];
                    }
                    for i in 0..c as usize {
                        let xh = (xl[i] - mean) * inv;
                        let gy = gl[i] * gm[i];
                        gxl[i] = inv * (gy - sum_gy / n - xh * sum_gy_xhat / n);
                    }
                }
                sink(xid, gx);
                sink(gid, ArrayD::from_shape_vec(IxDyn(&[c]), ggamma).unwrap());
                sink(bid, ArrayD::from_shape_vec(IxDyn(&[c]), gbeta).unwrap());
            })),
        )
    }
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_softmax_value(x: &ArrayD<f64>, axis: usize) -> ArrayD<f64> {
    let mut out = x.clone();
    for mut lane in out.lanes_mut(Axis(axis)) {
        let m = lane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + lane.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        lane.mapv_inplace(|v| v - lse);
    }
    out
}

pub fn softmax_value(x: &ArrayD<f64>, axis: usize) -> ArrayD<f64> {
    let mut out = log_softmax_value(x, axis);
    out.mapv_inplace(f64::exp);
    out
}

/// numpy-style broadcast result shape.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let n = a.len().max(b.len());
    let mut out = vec![0usize; n];
    for i in 0..n {
        let ad = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let bd = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        assert!(
            ad == bd || ad == 1 || bd == 1,
            "incompatible broadcast {a:?} vs {b:?}"
        );
        out[i] = ad.max(bd);
    }
    out
}

/// Reduce a broadcasted gradient back to `target` shape.
fn unbroadcast(mut g: ArrayD<f64>, target: &[usize]) -> ArrayD<f64> {
    while g.ndim() > target.len() {
        g = g.sum_axis(Axis(0));
    }
    for (ax, (&gd, &td)) in g.shape().to_vec().iter().zip(target).enumerate() {
        if gd != td {
            debug_assert_eq!(td, 1);
            g = g.sum_axis(Axis(ax)).insert_axis(Axis(ax));
        }
    }
    g
}

impl std::ops::Add for &Tensor {
    type Output = Tensor;
    fn add(self, rhs: &Tensor) -> Tensor {
        Tensor::add(self, rhs)
    }
}

impl std::ops::Sub for &Tensor {
    type Output = Tensor;
    fn sub(self, rhs: &Tensor) -> Tensor {
        Tensor::sub(self, rhs)
    }
}

impl std::ops::Mul for &Tensor {
    type Output = Tensor;
    fn mul(self, rhs: &Tensor) -> Tensor {
        Tensor::mul(self, rhs)
    }
}

impl std::ops::Div for &Tensor {
    type Output = Tensor;
    fn div(self, rhs: &Tensor) -> Tensor {
        Tensor::div(self, rhs)
    }
}

impl std::ops::Neg for &Tensor {
    type Output = Tensor;
    fn neg(self) -> Tensor {
        Tensor::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn add_broadcast_and_grads() {
        let tape = Tape::new();
        let a = tape.constant(arr2(&[[1.0, 2.0], [3.0, 4.0]]).into_dyn());
        let b = tape.constant(ArrayD::from_shape_vec(IxDyn(&[2]), vec![10.0, 20.0]).unwrap());
        let y = (&a + &b).sum_all();
        assert_eq!(y.scalar_value(), 1.0 + 2.0 + 3.0 + 4.0 + 2.0 * 30.0);
        let g = y.backward();
        assert_eq!(g.wrt(&b).as_slice().unwrap(), &[2.0, 2.0]);
        assert_eq!(g.wrt(&a).iter().cloned().collect::<Vec<_>>(), vec![1.0; 4]);
    }

    #[test]
    fn matmul_grads() {
        let tape = Tape::new();
        let a = tape.constant(arr2(&[[1.0, 2.0]]).into_dyn());
        let b = tape.constant(arr2(&[[3.0], [4.0]]).into_dyn());
        let y = a.matmul(&b).sum_all();
        assert_eq!(y.scalar_value(), 11.0);
        let g = y.backward();
        assert_eq!(g.wrt(&a).as_slice().unwrap(), &[3.0, 4.0]);
        assert_eq!(g.wrt(&b).as_slice().unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn detach_blocks_gradient() {
        let tape = Tape::new();
        let a = tape.scalar(3.0);
        let y = &a.detach() * &a; // d/da should be 3, not 6
        let g = y.backward();
        assert_eq!(g.wrt(&a).iter().next().unwrap(), &3.0);
    }

    #[test]
    fn shared_param_accumulates() {
        let mut store = ParamStore::new();
        store.insert("w", ArrayD::from_elem(IxDyn(&[]), 2.0));
        let tape = Tape::new();
        let w1 = tape.param(&store, "w");
        let w2 = tape.param(&store, "w");
        assert_eq!(w1.id(), w2.id());
        let y = &w1 * &w2; // w^2, dy/dw = 4
        let g = y.backward().by_param(&tape);
        assert_eq!(g["w"].iter().next().unwrap(), &4.0);
    }
}

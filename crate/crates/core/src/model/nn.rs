//! Minimal layers with hand-written backward passes.
//!
//! Every layer follows the same protocol: `forward(&self, ..)` returns the
//! output together with a cache, and `backward(&mut self, cache, grad)`
//! accumulates parameter gradients and returns the gradient with respect to
//! the input. Tensors are dense row-major NCHW buffers.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    pub shape: [usize; 4],
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self { shape, data: vec![S::zero(); shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<S>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor shape {shape:?}");
        Self { shape, data }
    }

    /// A batch of flat feature vectors, shaped `[n, features, 1, 1]`.
    pub fn matrix(n: usize, features: usize, data: Vec<S>) -> Self {
        Self::from_vec([n, features, 1, 1], data)
    }

    pub fn n(&self) -> usize {
        self.shape[0]
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn item(&self, i: usize) -> &[S] {
        let l = self.item_len();
        &self.data[i * l..(i + 1) * l]
    }

    pub fn reshape(mut self, shape: [usize; 4]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape;
        self
    }
}

/// A named weight buffer with its gradient and Adam moments. Non-trainable
/// parameters hold layer state such as batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub shape: Vec<usize>,
    pub value: Vec<S>,
    pub grad: Vec<S>,
    pub trainable: bool,
    pub(crate) m: Vec<S>,
    pub(crate) v: Vec<S>,
}

impl<S: Scalar> Param<S> {
    pub fn new(shape: Vec<usize>, value: Vec<S>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        let n = value.len();
        Self { shape, value, grad: vec![S::zero(); n], trainable: true, m: vec![S::zero(); n], v: vec![S::zero(); n] }
    }

    pub fn state(shape: Vec<usize>, value: Vec<S>) -> Self {
        Self { trainable: false, ..Self::new(shape, value) }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = S::zero());
    }
}

/// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialisation.
pub fn uniform_init<S: Scalar, R: rand::Rng + ?Sized>(rng: &mut R, n: usize, fan_in: usize) -> Vec<S> {
    let bound = 1.0 / (fan_in as f64).sqrt();

    (0..n).map(|_| S::of(rng.random_range(-bound..bound))).collect()
}

/// Named access to every parameter of a module tree.
pub trait Params<S> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<S>)>);
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<S>)>);
}

impl<S> Params<S> for Param<S> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<S>)>) {
        out.push((prefix.to_owned(), self));
    }
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<S>)>) {
        out.push((prefix.to_owned(), self));
    }
}

impl<S, T: Params<S>> Params<S> for Vec<T> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<S>)>) {
        for (i, x) in self.iter().enumerate() {
            x.params(&format!("{prefix}.{i}"), out);
        }
    }
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<S>)>) {
        for (i, x) in self.iter_mut().enumerate() {
            x.params_mut(&format!("{prefix}.{i}"), out);
        }
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_owned()
    } else {
        format!("{prefix}.{name}")
    }
}

macro_rules! impl_params {
    ($ty:ident; $($field:ident),+) => {
        impl<S: $crate::scalar::Scalar> $crate::model::nn::Params<S> for $ty<S> {
            fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a $crate::model::nn::Param<S>)>) {
                $( self.$field.params(&$crate::model::nn::join(prefix, stringify!($field)), out); )+
            }
            fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut $crate::model::nn::Param<S>)>) {
                $( self.$field.params_mut(&$crate::model::nn::join(prefix, stringify!($field)), out); )+
            }
        }
    };
}
pub(crate) use impl_params;

// ---------------------------------------------------------------------------
// im2col helpers

/// Geometry shared by a convolution and its transpose: an image of
/// `channels x height x width` sampled on a `grid_h x grid_w` grid of
/// `k x k` patches with the given stride and zero padding.
#[derive(Debug, Clone, Copy)]
struct PatchGeometry {
    channels: usize,
    height: usize,
    width: usize,
    k: usize,
    stride: usize,
    pad: usize,
    grid_h: usize,
    grid_w: usize,
}

impl PatchGeometry {
    fn rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.grid_h * self.grid_w
    }

    /// Grid positions `lo..hi` whose source coordinate `pos * stride + offset
    /// - pad` falls inside `0..extent`.
    #[inline]
    fn valid(&self, grid: usize, offset: usize, extent: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if self.pad > offset { (self.pad - offset).div_ceil(s) } else { 0 };
        let hi = if extent + self.pad > offset { (extent + self.pad - offset).div_ceil(s).min(grid) } else { 0 };
        (lo.min(hi), hi)
    }

    fn im2col<S: Scalar>(&self, image: &[S], cols: &mut [S]) {
        let (gh, gw, k, s) = (self.grid_h, self.grid_w, self.k, self.stride);
        for c in 0..self.channels {
            let plane = &image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for a in 0..k {
                let (i_lo, i_hi) = self.valid(gh, a, self.height);
                for b in 0..k {
                    let (j_lo, j_hi) = self.valid(gw, b, self.width);
                    let row = (c * k + a) * k + b;
                    let dst = &mut cols[row * gh * gw..(row + 1) * gh * gw];
                    dst[..i_lo * gw].fill(S::zero());
                    dst[i_hi * gw..].fill(S::zero());
                    for i in i_lo..i_hi {
                        let src = &plane[(i * s + a - self.pad) * self.width..];
                        let out = &mut dst[i * gw..(i + 1) * gw];
                        out[..j_lo].fill(S::zero());
                        out[j_hi..].fill(S::zero());
                        let x0 = j_lo * s + b - self.pad;
                        let out = &mut out[j_lo..j_hi];
                        if s == 1 {
                            out.copy_from_slice(&src[x0..x0 + out.len()]);
                        } else {
                            for (o, v) in out.iter_mut().zip(src[x0..].iter().step_by(s)) {
                                *o = *v;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatters columns back, accumulating.
    fn col2im<S: Scalar>(&self, cols: &[S], image: &mut [S]) {
        let (gh, gw, k, s) = (self.grid_h, self.grid_w, self.k, self.stride);
        for c in 0..self.channels {
            let plane = &mut image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for a in 0..k {
                let (i_lo, i_hi) = self.valid(gh, a, self.height);
                for b in 0..k {
                    let (j_lo, j_hi) = self.valid(gw, b, self.width);
                    let row = (c * k + a) * k + b;
                    let src = &cols[row * gh * gw..(row + 1) * gh * gw];
                    for i in i_lo..i_hi {
                        let dst = &mut plane[(i * s + a - self.pad) * self.width..];
                        let x0 = j_lo * s + b - self.pad;
                        let vals = &src[i * gw + j_lo..i * gw + j_hi];
                        if s == 1 {
                            for (d, v) in dst[x0..x0 + vals.len()].iter_mut().zip(vals) {
                                *d += *v;
                            }
                        } else {
                            for (d, v) in dst[x0..].iter_mut().step_by(s).zip(vals) {
                                *d += *v;
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Linear

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S> {
    pub weight: Param<S>,
    pub bias: Param<S>,
}
impl_params!(Linear; weight, bias);

impl<S: Scalar> Linear<S> {
    pub fn new<R: rand::Rng + ?Sized>(rng: &mut R, input: usize, output: usize) -> Self {
        Self {
            weight: Param::new(vec![output, input], uniform_init(rng, output * input, input)),
            bias: Param::new(vec![output], uniform_init(rng, output, input)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&self, x: &Tensor<S>) -> (Tensor<S>, Tensor<S>) {
        let (n, i, o) = (x.n(), self.input_dim(), self.output_dim());
        assert_eq!(x.item_len(), i, "linear input width");
        let mut y = Vec::with_capacity(n * o);
        for _ in 0..n {
            y.extend_from_slice(&self.bias.value);
        }
        S::gemm(false, true, n, o, i, S::one(), &x.data, &self.weight.value, S::one(), &mut y);
        (Tensor::matrix(n, o, y), x.clone())
    }

    pub fn backward(&mut self, x: &Tensor<S>, g: &Tensor<S>) -> Tensor<S> {
        let (n, i, o) = (x.n(), self.input_dim(), self.output_dim());
        S::gemm(true, false, o, i, n, S::one(), &g.data, &x.data, S::one(), &mut self.weight.grad);
        for row in g.data.chunks_exact(o) {
            for (b, v) in self.bias.grad.iter_mut().zip(row) {
                *b += *v;
            }
        }
        let mut dx = vec![S::zero(); n * i];
        S::gemm(false, false, n, i, o, S::one(), &g.data, &self.weight.value, S::zero(), &mut dx);
        Tensor::from_vec(x.shape, dx)
    }
}

// ---------------------------------------------------------------------------
// Convolutions

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<S> {
    /// `[out, in * k * k]`
    pub weight: Param<S>,
    pub bias: Param<S>,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}
impl_params!(Conv2d; weight, bias);

impl<S: Scalar> Conv2d<S> {
    pub fn new<R: rand::Rng + ?Sized>(
        rng: &mut R,
        input: usize,
        output: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let fan_in = input * kernel * kernel;
        Self {
            weight: Param::new(vec![output, fan_in], uniform_init(rng, output * fan_in, fan_in)),
            bias: Param::new(vec![output], uniform_init(rng, output, fan_in)),
            kernel,
            stride,
            pad,
        }
    }

    fn channels(&self) -> (usize, usize) {
        let out = self.weight.shape[0];
        (self.weight.shape[1] / (self.kernel * self.kernel), out)
    }

    pub fn output_size(&self, size: usize) -> usize {
        (size + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn geometry(&self, shape: [usize; 4]) -> PatchGeometry {
        PatchGeometry {
            channels: shape[1],
            height: shape[2],
            width: shape[3],
            k: self.kernel,
            stride: self.stride,
            pad: self.pad,
            grid_h: self.output_size(shape[2]),
            grid_w: self.output_size(shape[3]),
        }
    }

    pub fn forward(&self, x: &Tensor<S>) -> (Tensor<S>, Tensor<S>) {
        let (cin, cout) = self.channels();
        assert_eq!(x.shape[1], cin, "conv input channels");
        let geo = self.geometry(x.shape);
        let (rows, cols_n) = (geo.rows(), geo.cols());
        let mut y = Tensor::zeros([x.n(), cout, geo.grid_h, geo.grid_w]);
        let mut cols = vec![S::zero(); rows * cols_n];
        for n in 0..x.n() {
            geo.im2col(x.item(n), &mut cols);
            let out = &mut y.data[n * cout * cols_n..(n + 1) * cout * cols_n];
            for (c, chunk) in out.chunks_exact_mut(cols_n).enumerate() {
                chunk.iter_mut().for_each(|v| *v = self.bias.value[c]);
            }
            S::gemm(false, false, cout, cols_n, rows, S::one(), &self.weight.value, &cols, S::one(), out);
        }
        (y, x.clone())
    }

    /// Returns `None` for the input gradient when `input_grad` is false.
    pub fn backward(&mut self, x: &Tensor<S>, g: &Tensor<S>, input_grad: bool) -> Option<Tensor<S>> {
        let (_, cout) = self.channels();
        let geo = self.geometry(x.shape);
        let (rows, cols_n) = (geo.rows(), geo.cols());
        let mut cols = vec![S::zero(); rows * cols_n];
        let mut dcols = vec![S::zero(); rows * cols_n];
        let mut dx = input_grad.then(|| Tensor::zeros(x.shape));
        let item = x.item_len();
        for n in 0..x.n() {
            let gn = &g.data[n * cout * cols_n..(n + 1) * cout * cols_n];
            geo.im2col(x.item(n), &mut cols);
            S::gemm(false, true, cout, rows, cols_n, S::one(), gn, &cols, S::one(), &mut self.weight.grad);
            for (c, chunk) in gn.chunks_exact(cols_n).enumerate() {
                self.bias.grad[c] += chunk.iter().copied().sum::<S>();
            }
            if let Some(dx) = dx.as_mut() {
                S::gemm(true, false, rows, cols_n, cout, S::one(), &self.weight.value, gn, S::zero(), &mut dcols);
                geo.col2im(&dcols, &mut dx.data[n * item..(n + 1) * item]);
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d<S> {
    /// `[in, out * k * k]`
    pub weight: Param<S>,
    pub bias: Param<S>,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub output_pad: usize,
}
impl_params!(ConvTranspose2d; weight, bias);

impl<S: Scalar> ConvTranspose2d<S> {
    pub fn new<R: rand::Rng + ?Sized>(
        rng: &mut R,
        input: usize,
        output: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        output_pad: usize,
    ) -> Self {
        let fan_in = output * kernel * kernel;
        Self {
            weight: Param::new(vec![input, fan_in], uniform_init(rng, input * fan_in, fan_in)),
            bias: Param::new(vec![output], uniform_init(rng, output, fan_in)),
            kernel,
            stride,
            pad,
            output_pad,
        }
    }

    fn channels(&self) -> (usize, usize) {
        (self.weight.shape[0], self.weight.shape[1] / (self.kernel * self.kernel))
    }

    pub fn output_size(&self, size: usize) -> usize {
        (size - 1) * self.stride + self.kernel + self.output_pad - 2 * self.pad
    }

    fn geometry(&self, shape: [usize; 4]) -> PatchGeometry {
        let (_, cout) = self.channels();
        PatchGeometry {
            channels: cout,
            height: self.output_size(shape[2]),
            width: self.output_size(shape[3]),
            k: self.kernel,
            stride: self.stride,
            pad: self.pad,
            grid_h: shape[2],
            grid_w: shape[3],
        }
    }

    pub fn forward(&self, x: &Tensor<S>) -> (Tensor<S>, Tensor<S>) {
        let (cin, cout) = self.channels();
        assert_eq!(x.shape[1], cin, "transposed conv input channels");
        let geo = self.geometry(x.shape);
        let (rows, hw) = (geo.rows(), geo.cols());
        let plane = geo.height * geo.width;
        let mut y = Tensor::zeros([x.n(), cout, geo.height, geo.width]);
        let mut cols = vec![S::zero(); rows * hw];
        for n in 0..x.n() {
            S::gemm(true, false, rows, hw, cin, S::one(), &self.weight.value, x.item(n), S::zero(), &mut cols);
            let out = &mut y.data[n * cout * plane..(n + 1) * cout * plane];
            for (c, chunk) in out.chunks_exact_mut(plane).enumerate() {
                chunk.iter_mut().for_each(|v| *v = self.bias.value[c]);
            }
            geo.col2im(&cols, out);
        }
        (y, x.clone())
    }

    pub fn backward(&mut self, x: &Tensor<S>, g: &Tensor<S>) -> Tensor<S> {
        let (cin, cout) = self.channels();
        let geo = self.geometry(x.shape);
        let (rows, hw) = (geo.rows(), geo.cols());
        let plane = geo.height * geo.width;
        let mut gcols = vec![S::zero(); rows * hw];
        let mut dx = Tensor::zeros(x.shape);
        for n in 0..x.n() {
            let gn = &g.data[n * cout * plane..(n + 1) * cout * plane];
            for (c, chunk) in gn.chunks_exact(plane).enumerate() {
                self.bias.grad[c] += chunk.iter().copied().sum::<S>();
            }
            geo.im2col(gn, &mut gcols);
            S::gemm(false, true, cin, rows, hw, S::one(), x.item(n), &gcols, S::one(), &mut self.weight.grad);
            S::gemm(false, false, cin, hw, rows, S::one(), &self.weight.value, &gcols, S::zero(), &mut dx.data[n * cin * hw..(n + 1) * cin * hw]);
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// Batch normalisation

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<S> {
    pub gamma: Param<S>,
    pub beta: Param<S>,
    pub running_mean: Param<S>,
    pub running_var: Param<S>,
    pub eps: f64,
    pub momentum: f64,
}
impl_params!(BatchNorm; gamma, beta, running_mean, running_var);

#[derive(Debug, Clone)]
pub struct BatchNormCache<S> {
    xhat: Vec<S>,
    inv_std: Vec<S>,
    mean: Vec<S>,
    var: Vec<S>,
    shape: [usize; 4],
    train: bool,
}

impl<S: Scalar> BatchNorm<S> {
    pub fn new(channels: usize, eps: f64, momentum: f64) -> Self {
        Self {
            gamma: Param::new(vec![channels], vec![S::one(); channels]),
            beta: Param::new(vec![channels], vec![S::zero(); channels]),
            running_mean: Param::state(vec![channels], vec![S::zero(); channels]),
            running_var: Param::state(vec![channels], vec![S::one(); channels]),
            eps,
            momentum,
        }
    }

    /// Normalises over batch and spatial positions per channel. Training mode
    /// uses batch statistics; the running averages are updated in
    /// [`Self::backward`].
    pub fn forward(&self, x: &Tensor<S>, train: bool) -> (Tensor<S>, BatchNormCache<S>) {
        let [n, c, h, w] = x.shape;
        let plane = h * w;
        let count = (n * plane) as f64;
        let mut mean = vec![S::zero(); c];
        let mut var = vec![S::zero(); c];
        if train {
            for ch in 0..c {
                let mut s = 0.0;
                for b in 0..n {
                    s += x.data[(b * c + ch) * plane..(b * c + ch + 1) * plane].iter().map(|v| v.f64()).sum::<f64>();
                }
                let m = s / count;
                let mut q = 0.0;
                for b in 0..n {
                    q += x.data[(b * c + ch) * plane..(b * c + ch + 1) * plane]
                        .iter()
                        .map(|v| (v.f64() - m).powi(2))
                        .sum::<f64>();
                }
                mean[ch] = S::of(m);
                var[ch] = S::of(q / count);
            }
        } else {
            mean.clone_from(&self.running_mean.value);
            var.clone_from(&self.running_var.value);
        }
        let eps = S::of(self.eps);
        let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![S::zero(); x.data.len()];
        let mut y = vec![S::zero(); x.data.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * plane;
                for p in base..base + plane {
                    let xh = (x.data[p] - mean[ch]) * inv_std[ch];
                    xhat[p] = xh;
                    y[p] = self.gamma.value[ch] * xh + self.beta.value[ch];
                }
            }
        }
        (Tensor::from_vec(x.shape, y), BatchNormCache { xhat, inv_std, mean, var, shape: x.shape, train })
    }

    pub fn backward(&mut self, cache: &BatchNormCache<S>, g: &Tensor<S>) -> Tensor<S> {
        let [n, c, h, w] = cache.shape;
        let plane = h * w;
        let count = n * plane;
        let mut dx = vec![S::zero(); g.data.len()];
        for ch in 0..c {
            let idx = || (0..n).flat_map(move |b| ((b * c + ch) * plane)..((b * c + ch + 1) * plane));
            let sum_g: S = idx().map(|p| g.data[p]).sum();
            let sum_gx: S = idx().map(|p| g.data[p] * cache.xhat[p]).sum();
            self.gamma.grad[ch] += sum_gx;
            self.beta.grad[ch] += sum_g;
            let scale = self.gamma.value[ch] * cache.inv_std[ch];
            if cache.train {
                let m = S::of(count as f64);
                for p in idx() {
                    dx[p] = scale / m * (m * g.data[p] - sum_g - cache.xhat[p] * sum_gx);
                }
            } else {
                for p in idx() {
                    dx[p] = scale * g.data[p];
                }
            }
        }
        if cache.train {
            let mom = S::of(self.momentum);
            let unbias = if count > 1 { S::of(count as f64 / (count - 1) as f64) } else { S::one() };
            for ch in 0..c {
                let rm = &mut self.running_mean.value[ch];
                *rm = (S::one() - mom) * *rm + mom * cache.mean[ch];
                let rv = &mut self.running_var.value[ch];
                *rv = (S::one() - mom) * *rv + mom * cache.var[ch] * unbias;
            }
        }
        Tensor::from_vec(cache.shape, dx)
    }
}

// ---------------------------------------------------------------------------
// Parameter-free layers

pub fn leaky_relu<S: Scalar>(x: &Tensor<S>, slope: f64) -> Tensor<S> {
    let a = S::of(slope);
    Tensor::from_vec(x.shape, x.data.iter().map(|&v| if v > S::zero() { v } else { a * v }).collect())
}

/// Gradient of [`leaky_relu`] given its input.
pub fn leaky_relu_backward<S: Scalar>(x: &Tensor<S>, g: &Tensor<S>, slope: f64) -> Tensor<S> {
    let a = S::of(slope);
    Tensor::from_vec(
        x.shape,
        x.data.iter().zip(&g.data).map(|(&v, &d)| if v > S::zero() { d } else { a * d }).collect(),
    )
}

pub fn sigmoid<S: Scalar>(v: S) -> S {
    S::one() / (S::one() + (-v).exp())
}

/// 2x2 max pooling with stride 2 (odd trailing rows/columns are dropped).
/// Returns the pooled tensor and the flat argmax index for each output.
pub fn max_pool2<S: Scalar>(x: &Tensor<S>) -> (Tensor<S>, Vec<usize>) {
    let [n, c, h, w] = x.shape;
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros([n, c, oh, ow]);
    let mut arg = vec![0usize; n * c * oh * ow];
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + 2 * i * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let p = base + (2 * i + di) * w + 2 * j + dj;
                    if x.data[p] > x.data[best] {
                        best = p;
                    }
                }
                let o = (plane * oh + i) * ow + j;
                y.data[o] = x.data[best];
                arg[o] = best;
            }
        }
    }
    (y, arg)
}

pub fn max_pool2_backward<S: Scalar>(shape: [usize; 4], arg: &[usize], g: &Tensor<S>) -> Tensor<S> {
    let mut dx = Tensor::zeros(shape);
    for (&a, &d) in arg.iter().zip(&g.data) {
        dx.data[a] += d;
    }
    dx
}

// ---------------------------------------------------------------------------
// LSTM

/// One LSTM layer; gate rows are ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer<S> {
    /// `[4h, input]`
    pub w_ih: Param<S>,
    /// `[4h, h]`
    pub w_hh: Param<S>,
    pub bias: Param<S>,
}
impl_params!(LstmLayer; w_ih, w_hh, bias);

#[derive(Debug, Clone)]
pub struct LstmLayerCache<S> {
    inputs: Vec<Vec<S>>,
    /// States entering each step; index `t` is the state before step `t`.
    h: Vec<Vec<S>>,
    c: Vec<Vec<S>>,
    /// Post-activation gates `[b, 4h]` per step.
    gates: Vec<Vec<S>>,
    tanh_c: Vec<Vec<S>>,
}

impl<S: Scalar> LstmLayer<S> {
    pub fn new<R: rand::Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Param::new(vec![4 * hidden, input], uniform_init(rng, 4 * hidden * input, hidden)),
            w_hh: Param::new(vec![4 * hidden, hidden], uniform_init(rng, 4 * hidden * hidden, hidden)),
            bias: Param::new(vec![4 * hidden], uniform_init(rng, 4 * hidden, hidden)),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape[1]
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.shape[1]
    }

    /// Runs the sequence `xs` (each `[batch, input]`) from `(h0, c0)` and
    /// returns the hidden state after every step.
    pub fn forward(&self, xs: &[Vec<S>], h0: Vec<S>, c0: Vec<S>, batch: usize) -> (Vec<Vec<S>>, LstmLayerCache<S>) {
        let hd = self.hidden();
        let inp = self.input_dim();
        let steps = xs.len();
        let flat: Vec<S> = xs.iter().flatten().copied().collect();
        let mut pre_x = Vec::with_capacity(steps * batch * 4 * hd);
        for _ in 0..steps * batch {
            pre_x.extend_from_slice(&self.bias.value);
        }
        S::gemm(false, true, steps * batch, 4 * hd, inp, S::one(), &flat, &self.w_ih.value, S::one(), &mut pre_x);

        let mut cache = LstmLayerCache {
            inputs: xs.to_vec(),
            h: vec![h0],
            c: vec![c0],
            gates: Vec::with_capacity(steps),
            tanh_c: Vec::with_capacity(steps),
        };
        let mut outputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut gates = pre_x[t * batch * 4 * hd..(t + 1) * batch * 4 * hd].to_vec();
            S::gemm(false, true, batch, 4 * hd, hd, S::one(), &cache.h[t], &self.w_hh.value, S::one(), &mut gates);
            let mut c_next = vec![S::zero(); batch * hd];
            let mut h_next = vec![S::zero(); batch * hd];
            let mut tanh_c = vec![S::zero(); batch * hd];
            for b in 0..batch {
                let row = &mut gates[b * 4 * hd..(b + 1) * 4 * hd];
                for j in 0..hd {
                    row[j] = sigmoid(row[j]);
                    row[hd + j] = sigmoid(row[hd + j]);
                    row[2 * hd + j] = row[2 * hd + j].tanh();
                    row[3 * hd + j] = sigmoid(row[3 * hd + j]);
                    let k = b * hd + j;
                    c_next[k] = row[hd + j] * cache.c[t][k] + row[j] * row[2 * hd + j];
                    tanh_c[k] = c_next[k].tanh();
                    h_next[k] = row[3 * hd + j] * tanh_c[k];
                }
            }
            cache.gates.push(gates);
            cache.tanh_c.push(tanh_c);
            cache.c.push(c_next);
            cache.h.push(h_next.clone());
            outputs.push(h_next);
        }
        (outputs, cache)
    }

    /// Backpropagates `dh_out` (gradient on each step's output) through time
    /// and returns the gradient on each step's input. Initial states are
    /// treated as constants.
    pub fn backward(&mut self, cache: &LstmLayerCache<S>, dh_out: &[Vec<S>], batch: usize) -> Vec<Vec<S>> {
        let hd = self.hidden();
        let inp = self.input_dim();
        let steps = cache.gates.len();
        let mut dh = vec![S::zero(); batch * hd];
        let mut dc = vec![S::zero(); batch * hd];
        let mut dgates_all = vec![S::zero(); steps * batch * 4 * hd];
        for t in (0..steps).rev() {
            for (d, o) in dh.iter_mut().zip(&dh_out[t]) {
                *d += *o;
            }
            let gates = &cache.gates[t];
            let dg = &mut dgates_all[t * batch * 4 * hd..(t + 1) * batch * 4 * hd];
            for b in 0..batch {
                for j in 0..hd {
                    let k = b * hd + j;
                    let row = &gates[b * 4 * hd..(b + 1) * 4 * hd];
                    let (i, f, g, o) = (row[j], row[hd + j], row[2 * hd + j], row[3 * hd + j]);
                    let tc = cache.tanh_c[t][k];
                    let dct = dc[k] + dh[k] * o * (S::one() - tc * tc);
                    let d = &mut dg[b * 4 * hd..(b + 1) * 4 * hd];
                    d[j] = dct * g * i * (S::one() - i);
                    d[hd + j] = dct * cache.c[t][k] * f * (S::one() - f);
                    d[2 * hd + j] = dct * i * (S::one() - g * g);
                    d[3 * hd + j] = dh[k] * tc * o * (S::one() - o);
                    dc[k] = dct * f;
                }
            }
            S::gemm(true, false, 4 * hd, hd, batch, S::one(), dg, &cache.h[t], S::one(), &mut self.w_hh.grad);
            let mut dh_prev = vec![S::zero(); batch * hd];
            S::gemm(false, false, batch, hd, 4 * hd, S::one(), dg, &self.w_hh.value, S::zero(), &mut dh_prev);
            dh = dh_prev;
        }
        let flat: Vec<S> = cache.inputs.iter().flatten().copied().collect();
        S::gemm(true, false, 4 * hd, inp, steps * batch, S::one(), &dgates_all, &flat, S::one(), &mut self.w_ih.grad);
        for row in dgates_all.chunks_exact(4 * hd) {
            for (b, v) in self.bias.grad.iter_mut().zip(row) {
                *b += *v;
            }
        }
        let mut dx = vec![S::zero(); steps * batch * inp];
        S::gemm(false, false, steps * batch, inp, 4 * hd, S::one(), &dgates_all, &self.w_ih.value, S::zero(), &mut dx);
        dx.chunks_exact(batch * inp).map(<[S]>::to_vec).collect()
    }
}

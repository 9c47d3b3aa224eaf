//! Shared-trunk Gaussian policy / value network with hand-written backprop.
//!
//! Weights live in one flat vector. Affine maps are stored row-major
//! (`out x in` weights followed by `out` biases) in the order: shared trunk,
//! policy branch, value branch. Hidden layers use ReLU; both heads are affine.
//! The policy head emits the mean `c` and a raw value mapped to the standard
//! deviation `d = softplus(raw) + D_FLOOR`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::env::{EnvConfig, EpisodeState, Observation, Policy, OBS_DIM};
use crate::error::{Error, Result};
use crate::math::{ln, sigmoid, softplus, sqrt};
use crate::rng::{Purpose, SimRng, StreamKey};

/// Lower bound on the policy standard deviation.
pub const D_FLOOR: f64 = 1e-4;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"VAHN";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

impl Activation {
    fn tag(self) -> u8 {
        match self {
            Activation::Relu => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(Activation::Relu),
            _ => Err(Error::Format("unknown activation tag")),
        }
    }
}

/// Layer widths of the network. `shared`, `policy` and `value` list hidden
/// widths; the heads add output widths 2 and 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input: usize,
    pub shared: Vec<usize>,
    pub policy: Vec<usize>,
    pub value: Vec<usize>,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            input: OBS_DIM,
            shared: vec![32, 64, 128],
            policy: vec![64, 32],
            value: vec![64, 32],
            activation: Activation::Relu,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.input != OBS_DIM {
            return Err(Error::Dimension("input width must equal the observation size"));
        }
        if self.shared.is_empty() {
            return Err(Error::Dimension("at least one shared layer is required"));
        }
        let widths = self.shared.iter().chain(&self.policy).chain(&self.value);
        if widths.clone().any(|&w| w == 0) {
            return Err(Error::Dimension("layer widths must be positive"));
        }
        Ok(())
    }

    /// Number of affine maps in the shared trunk.
    pub fn shared_maps(&self) -> usize {
        self.shared.len()
    }

    fn layer_shapes(&self) -> (Vec<Layer>, usize) {
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut push = |inp: usize, out: usize, relu: bool| {
            layers.push(Layer { inp, out, w: offset, b: offset + inp * out, relu });
            offset += inp * out + out;
        };
        let mut prev = self.input;
        for &w in &self.shared {
            push(prev, w, true);
            prev = w;
        }
        let top = prev;
        for (hidden, out) in [(&self.policy, 2), (&self.value, 1)] {
            let mut prev = top;
            for &w in hidden {
                push(prev, w, true);
                prev = w;
            }
            push(prev, out, false);
        }
        (layers, offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    inp: usize,
    out: usize,
    w: usize,
    b: usize,
    relu: bool,
}

/// Gaussian policy at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    pub mean: f64,
    pub std: f64,
    /// Pre-softplus output behind `std`.
    pub raw_std: f64,
}

impl PolicyOutput {
    pub fn new(mean: f64, raw_std: f64) -> Self {
        Self { mean, std: softplus(raw_std) + D_FLOOR, raw_std }
    }

    /// `ln phi(action; c, d)`.
    pub fn log_density(&self, action: f64) -> f64 {
        let u = (action - self.mean) / self.std;
        -ln(self.std) - LN_SQRT_2PI - 0.5 * u * u
    }

    /// `(d/dc, d/dd)` of [`Self::log_density`].
    pub fn log_density_grad(&self, action: f64) -> (f64, f64) {
        let diff = action - self.mean;
        let var = self.std * self.std;
        (diff / var, -1.0 / self.std + diff * diff / (var * self.std))
    }

    /// Differential entropy `ln d + ln sqrt(2 pi e)`.
    pub fn entropy(&self) -> f64 {
        ln(self.std) + LN_SQRT_2PI + 0.5
    }

    /// Draws `c + d Z`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.std * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetOutput {
    pub policy: PolicyOutput,
    pub value: f64,
}

/// Adjoint of a scalar objective with respect to the three head outputs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeadAdjoint {
    pub mean: f64,
    /// With respect to the standard deviation `d` (not its raw value).
    pub std: f64,
    pub value: f64,
}

/// Pre- and post-activation buffers of one forward pass.
#[derive(Debug, Clone)]
pub struct Workspace {
    input: Observation,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    top_adjoint: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    layers: Vec<Layer>,
    weights: Vec<f64>,
}

impl NetworkParams {
    /// All-zero network.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let (layers, len) = arch.layer_shapes();
        Ok(Self { arch, layers, weights: vec![0.0; len] })
    }

    /// He-uniform weights, zero biases. The two head layers are scaled by
    /// `head_gain` and the raw-std bias starts at `raw_std_bias`.
    pub fn init(arch: Architecture, key: StreamKey, head_gain: f64, raw_std_bias: f64) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let mut rng = key.with_purpose(Purpose::Init).rng();
        let heads = p.head_layers();
        for (i, layer) in p.layers.clone().iter().enumerate() {
            let bound = sqrt(6.0 / layer.inp as f64);
            let gain = if heads.contains(&i) { head_gain } else { 1.0 };
            let dist = Uniform::new_inclusive(-bound, bound).map_err(|_| Error::InvalidParameter("bad init bound"))?;
            for w in &mut p.weights[layer.w..layer.b] {
                *w = gain * dist.sample(&mut rng);
            }
        }
        let policy_head = p.layers[heads[0]];
        p.weights[policy_head.b + 1] = raw_std_bias;
        Ok(p)
    }

    fn head_layers(&self) -> [usize; 2] {
        let ns = self.arch.shared.len();
        let policy_head = ns + self.arch.policy.len();
        [policy_head, self.layers.len() - 1]
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `(start, end)` of each affine map's weights-then-biases block, in storage order.
    pub fn layer_ranges(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.w, l.b + l.out)).collect()
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            input: [0.0; OBS_DIM],
            pre: self.layers.iter().map(|l| vec![0.0; l.out]).collect(),
            post: self.layers.iter().map(|l| vec![0.0; l.out]).collect(),
            delta: self.layers.iter().map(|l| vec![0.0; l.out]).collect(),
            top_adjoint: vec![0.0; *self.arch.shared.last().unwrap_or(&0)],
        }
    }

    fn input_of<'a>(&self, ws: &'a Workspace, i: usize) -> &'a [f64] {
        let ns = self.arch.shared.len();
        let policy_start = ns;
        let value_start = ns + self.arch.policy.len() + 1;
        if i == 0 {
            &ws.input
        } else if i == policy_start || i == value_start {
            &ws.post[ns - 1]
        } else {
            &ws.post[i - 1]
        }
    }

    /// Forward pass, keeping intermediate values in `ws` for [`Self::backward`].
    pub fn forward_with(&self, obs: &Observation, ws: &mut Workspace) -> Result<NetOutput> {
        if let Some(i) = obs.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput(i));
        }
        ws.input = *obs;
        for (i, layer) in self.layers.iter().enumerate() {
            let (mut pre, mut post) = (core::mem::take(&mut ws.pre[i]), core::mem::take(&mut ws.post[i]));
            let x = self.input_of(ws, i);
            let w = &self.weights[layer.w..layer.b];
            let b = &self.weights[layer.b..layer.b + layer.out];
            for o in 0..layer.out {
                let row = &w[o * layer.inp..(o + 1) * layer.inp];
                let z = row.iter().zip(x).fold(b[o], |acc, (wi, xi)| acc + wi * xi);
                pre[o] = z;
                post[o] = if layer.relu { z.max(0.0) } else { z };
            }
            ws.pre[i] = pre;
            ws.post[i] = post;
        }
        let [ph, vh] = self.head_layers();
        Ok(NetOutput { policy: PolicyOutput::new(ws.post[ph][0], ws.post[ph][1]), value: ws.post[vh][0] })
    }

    pub fn forward(&self, obs: &Observation) -> Result<NetOutput> {
        self.forward_with(obs, &mut self.workspace())
    }

    /// Adds the gradient of the objective whose head adjoint is `adj` to `grad`,
    /// using the forward pass stored in `ws`.
    pub fn backward(&self, ws: &mut Workspace, adj: HeadAdjoint, grad: &mut [f64]) {
        let ns = self.arch.shared.len();
        let [ph, vh] = self.head_layers();
        ws.delta[ph][0] = adj.mean;
        ws.delta[ph][1] = adj.std * sigmoid(ws.pre[ph][1]);
        ws.delta[vh][0] = adj.value;
        ws.top_adjoint.iter_mut().for_each(|x| *x = 0.0);
        for (first, head) in [(ns, ph), (ph + 1, vh)] {
            for i in (first..=head).rev() {
                self.backprop_layer(ws, i, grad, i > first);
            }
        }
        let top = ns - 1;
        for o in 0..self.layers[top].out {
            ws.delta[top][o] = if ws.pre[top][o] > 0.0 { ws.top_adjoint[o] } else { 0.0 };
        }
        for i in (0..ns).rev() {
            self.backprop_layer(ws, i, grad, i > 0);
        }
    }

    /// Accumulates parameter gradients of layer `i` from `ws.delta[i]` and pushes
    /// the adjoint to its input (into the previous layer or the trunk top).
    fn backprop_layer(&self, ws: &mut Workspace, i: usize, grad: &mut [f64], to_previous: bool) {
        let layer = self.layers[i];
        let delta = core::mem::take(&mut ws.delta[i]);
        {
            let x = self.input_of(ws, i);
            let (gw, gb) = grad[layer.w..layer.b + layer.out].split_at_mut(layer.inp * layer.out);
            for o in 0..layer.out {
                let d = delta[o];
                gb[o] += d;
                if d != 0.0 {
                    for (g, xi) in gw[o * layer.inp..(o + 1) * layer.inp].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
        }
        let ns = self.arch.shared.len();
        let feeds_trunk = i >= ns && !to_previous;
        if to_previous || feeds_trunk {
            let w = &self.weights[layer.w..layer.b];
            let mut target =
                if feeds_trunk { core::mem::take(&mut ws.top_adjoint) } else { core::mem::take(&mut ws.delta[i - 1]) };
            if !feeds_trunk {
                target.iter_mut().for_each(|x| *x = 0.0);
            }
            for o in 0..layer.out {
                let d = delta[o];
                if d != 0.0 {
                    for (t, wi) in target.iter_mut().zip(&w[o * layer.inp..(o + 1) * layer.inp]) {
                        *t += d * wi;
                    }
                }
            }
            if feeds_trunk {
                ws.top_adjoint = target;
            } else {
                let prev_pre = &ws.pre[i - 1];
                for (t, z) in target.iter_mut().zip(prev_pre) {
                    if *z <= 0.0 {
                        *t = 0.0;
                    }
                }
                ws.delta[i - 1] = target;
            }
        }
        ws.delta[i] = delta;
    }

    /// Serialises the architecture header and all weights (little-endian).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.weights.len());
        out.extend_from_slice(&WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.push(self.arch.activation.tag());
        let put = |out: &mut Vec<u8>, x: usize| out.extend_from_slice(&(x as u32).to_le_bytes());
        put(&mut out, self.arch.input);
        put(&mut out, self.arch.shared.len());
        for list in [&self.arch.shared, &self.arch.policy, &self.arch.value] {
            put(&mut out, list.len());
            for &w in list {
                put(&mut out, w);
            }
        }
        out.extend_from_slice(&(self.weights.len() as u64).to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != WEIGHTS_MAGIC {
            return Err(Error::Format("not a weight file"));
        }
        let version = r.u32()?;
        if version != WEIGHTS_VERSION {
            return Err(Error::Version { found: version, expected: WEIGHTS_VERSION });
        }
        let activation = Activation::from_tag(r.take(1)?[0])?;
        let input = r.u32()? as usize;
        let shared_maps = r.u32()? as usize;
        let mut lists: [Vec<usize>; 3] = Default::default();
        for list in lists.iter_mut() {
            let n = r.u32()? as usize;
            if n > 1024 {
                return Err(Error::Format("implausible layer count"));
            }
            for _ in 0..n {
                list.push(r.u32()? as usize);
            }
        }
        let [shared, policy, value] = lists;
        if shared.len() != shared_maps {
            return Err(Error::Format("inconsistent shared layer count"));
        }
        let arch = Architecture { input, shared, policy, value, activation };
        let mut p = Self::zeros(arch)?;
        let count = r.u64()? as usize;
        if count != p.weights.len() {
            return Err(Error::Dimension("weight count does not match the architecture"));
        }
        for w in p.weights.iter_mut() {
            *w = f64::from_le_bytes(r.take(8)?.try_into().map_err(|_| Error::Format("truncated weights"))?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after weights"));
        }
        Ok(p)
    }

    /// Like [`Self::from_bytes`] but also requires the stored architecture to equal `expected`.
    pub fn from_bytes_expecting(bytes: &[u8], expected: &Architecture) -> Result<Self> {
        let p = Self::from_bytes(bytes)?;
        if &p.arch != expected {
            return Err(Error::Dimension("stored architecture differs from the configured one"));
        }
        Ok(p)
    }
}

/// The network as an environment policy: the mean action, or a Gaussian draw
/// when built with a random stream, clamped to `[-limit, limit]`.
#[derive(Debug, Clone)]
pub struct NetPolicy<'a> {
    params: &'a NetworkParams,
    ws: Workspace,
    rng: Option<SimRng>,
    limit: f64,
}

impl<'a> NetPolicy<'a> {
    pub fn deterministic(params: &'a NetworkParams) -> Self {
        Self { params, ws: params.workspace(), rng: None, limit: f64::INFINITY }
    }

    pub fn stochastic(params: &'a NetworkParams, rng: SimRng) -> Self {
        Self { params, ws: params.workspace(), rng: Some(rng), limit: f64::INFINITY }
    }

    pub fn with_limit(mut self, limit: f64) -> Self {
        self.limit = limit;
        self
    }
}

impl Policy for NetPolicy<'_> {
    fn act(&mut self, _: &EpisodeState, obs: &Observation, _: &EnvConfig) -> Result<f64> {
        let out = self.params.forward_with(obs, &mut self.ws)?;
        let a = match self.rng.as_mut() {
            Some(rng) => out.policy.sample(rng),
            None => out.policy.mean,
        };
        Ok(a.clamp(-self.limit, self.limit))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Format("truncated weight file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().map_err(|_| Error::Format("truncated weight file"))?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().map_err(|_| Error::Format("truncated weight file"))?))
    }
}

/// Adam optimiser taking ascent steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(learning_rate: f64, len: usize) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// `theta += lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p += self.learning_rate * (*m / c1) / (sqrt(*v / c2) + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::abs;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use rand::{Rng, SeedableRng};

    fn small() -> Architecture {
        Architecture { input: OBS_DIM, shared: vec![8, 7], policy: vec![6, 5], value: vec![4], activation: Activation::Relu }
    }

    fn random_obs(rng: &mut impl Rng) -> Observation {
        let mut o = [0.0; OBS_DIM];
        for x in &mut o {
            *x = rng.random_range(-1.5..1.5);
        }
        o
    }

    fn random_params(arch: Architecture, seed: u64) -> NetworkParams {
        let mut p = NetworkParams::init(arch, StreamKey::new(seed), 1.0, 0.0).unwrap();
        let mut rng = StreamKey::new(seed + 1000).rng();
        for w in p.as_mut_slice() {
            *w += rng.random_range(-0.1..0.1);
        }
        p
    }

    #[test]
    fn default_architecture_shape() {
        let p = NetworkParams::zeros(Architecture::default()).unwrap();
        let expect = 6 * 32 + 32 + 32 * 64 + 64 + 64 * 128 + 128 // shared
            + 128 * 64 + 64 + 64 * 32 + 32 + 32 * 2 + 2 // policy
            + 128 * 64 + 64 + 64 * 32 + 32 + 32 + 1; // value
        assert_eq!(p.len(), expect);
        assert_eq!(p.architecture().shared_maps(), 3);
    }

    #[test]
    fn zero_network_outputs() {
        let p = NetworkParams::zeros(Architecture::default()).unwrap();
        let out = p.forward(&[0.3, -1.0, 2.0, 0.5, 0.0, 1.0]).unwrap();
        assert_eq!(out.policy.mean, 0.0);
        assert!((out.policy.std - (core::f64::consts::LN_2 + D_FLOOR)).abs() < 1e-15);
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = NetworkParams::zeros(Architecture::default()).unwrap();
        assert_eq!(p.forward(&[0.0, f64::NAN, 0.0, 0.0, 0.0, 0.0]), Err(Error::NonFiniteInput(1)));
    }

    #[test]
    fn std_never_below_floor() {
        let out = PolicyOutput::new(0.0, -800.0);
        assert!(out.std >= D_FLOOR);
        let mut rng = StreamKey::new(1).rng();
        let xs: Vec<f64> = (0..20_000).map(|_| out.sample(&mut rng)).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64);
        assert!((sd / D_FLOOR - 1.0).abs() < 0.05);
    }

    #[test]
    fn sampling_moments() {
        // softplus(raw) + floor = 0.5
        let raw = ln(libm::exp(0.5 - D_FLOOR) - 1.0);
        let out = PolicyOutput::new(1.0, raw);
        assert!((out.std - 0.5).abs() < 1e-12);
        let mut rng = StreamKey::new(2).rng();
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| out.sample(&mut rng)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let sd = sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64);
        assert!((m - 1.0).abs() < 0.01 && (sd - 0.5).abs() < 0.01, "{m} {sd}");
        let a = out.sample(&mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
        let b = out.sample(&mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn log_density_identities() {
        let out = PolicyOutput::new(0.3, 0.2);
        assert!((out.log_density(0.3) - (-ln(out.std) - 0.5 * ln(2.0 * core::f64::consts::PI))).abs() < 1e-14);
        let a = 1.1;
        let (dc, dd) = out.log_density_grad(a);
        assert!((dc - (a - 0.3) / (out.std * out.std)).abs() < 1e-14);
        let h = 1e-6;
        let up = PolicyOutput { std: out.std + h, ..out }.log_density(a);
        let dn = PolicyOutput { std: out.std - h, ..out }.log_density(a);
        assert!((dd - (up - dn) / (2.0 * h)).abs() < 1e-7);
    }

    /// J = a c + b d + e v + w ln phi(action).
    fn objective(p: &NetworkParams, obs: &Observation, coef: [f64; 5]) -> f64 {
        let out = p.forward(obs).unwrap();
        coef[0] * out.policy.mean + coef[1] * out.policy.std + coef[2] * out.value + coef[3] * out.policy.log_density(coef[4])
    }

    fn analytic(p: &NetworkParams, obs: &Observation, coef: [f64; 5]) -> Vec<f64> {
        let mut ws = p.workspace();
        let out = p.forward_with(obs, &mut ws).unwrap();
        let (dc, dd) = out.policy.log_density_grad(coef[4]);
        let mut g = vec![0.0; p.len()];
        p.backward(&mut ws, HeadAdjoint { mean: coef[0] + coef[3] * dc, std: coef[1] + coef[3] * dd, value: coef[2] }, &mut g);
        g
    }

    fn check_gradient(p: &NetworkParams, obs: &Observation, coef: [f64; 5], indices: impl Iterator<Item = usize>) {
        let g = analytic(p, obs, coef);
        for i in indices {
            let mut q = p.clone();
            let h = 1e-5 * abs(p.as_slice()[i]).max(1.0);
            q.as_mut_slice()[i] = p.as_slice()[i] + h;
            let up = objective(&q, obs, coef);
            q.as_mut_slice()[i] = p.as_slice()[i] - h;
            let dn = objective(&q, obs, coef);
            let fd = (up - dn) / (2.0 * h);
            let ok = abs(fd - g[i]) <= 1e-4 * abs(fd).max(abs(g[i])) || abs(fd - g[i]) <= 1e-7;
            assert!(ok, "weight {i}: analytic {} vs fd {fd}", g[i]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_small_network() {
        let mut rng = StreamKey::new(8).rng();
        for trial in 0..20 {
            let p = random_params(small(), trial);
            let obs = random_obs(&mut rng);
            let coef = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-2.0..2.0),
            ];
            check_gradient(&p, &obs, coef, 0..p.len());
        }
    }

    #[test]
    fn gradient_matches_finite_differences_default_network() {
        let mut rng = StreamKey::new(9).rng();
        let p = random_params(Architecture::default(), 3);
        let obs = random_obs(&mut rng);
        let picks: Vec<usize> = (0..400).map(|_| rng.random_range(0..p.len())).collect();
        check_gradient(&p, &obs, [0.7, -0.4, 0.3, 1.2, 0.5], picks.into_iter());
    }

    #[test]
    fn shared_gradient_sums_both_heads() {
        let p = random_params(small(), 4);
        let obs = [0.5, 1.0, -0.2, 0.9, 0.0, 0.7];
        let both = analytic(&p, &obs, [0.6, 0.3, -0.8, 0.0, 0.0]);
        let policy_only = analytic(&p, &obs, [0.6, 0.3, 0.0, 0.0, 0.0]);
        let value_only = analytic(&p, &obs, [0.0, 0.0, -0.8, 0.0, 0.0]);
        for i in 0..p.len() {
            assert!((both[i] - policy_only[i] - value_only[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_and_scaled_objectives() {
        let p = random_params(small(), 5);
        let obs = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        assert!(analytic(&p, &obs, [0.0; 5]).iter().all(|g| *g == 0.0));
        let g1 = analytic(&p, &obs, [0.3, 0.2, 0.1, 0.4, 0.7]);
        let g3 = analytic(&p, &obs, [0.9, 0.6, 0.3, 1.2, 0.7]);
        for (a, b) in g1.iter().zip(&g3) {
            assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn weights_round_trip() {
        let p = random_params(Architecture::default(), 6);
        let bytes = p.to_bytes();
        let q = NetworkParams::from_bytes(&bytes).unwrap();
        assert_eq!(p, q);
        let obs = [1.19, 1.0, 0.0, 1.0, 0.0, 1.0];
        assert_eq!(p.forward(&obs).unwrap(), q.forward(&obs).unwrap());
        assert!(matches!(NetworkParams::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(NetworkParams::from_bytes_expecting(&bytes, &small()), Err(Error::Dimension(_))));
        let mut wrong = bytes.clone();
        wrong[4] = 9;
        assert!(matches!(NetworkParams::from_bytes(&wrong), Err(Error::Version { found: 9, .. })));
        assert!(NetworkParams::from_bytes(b"nope").is_err());
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut opt = Adam::new(0.01, 3);
        let mut theta = [0.0, 1.0, -1.0];
        opt.ascend(&mut theta, &[2.0, -0.5, 0.0]);
        assert!((theta[0] - 0.01).abs() < 1e-9);
        assert!((theta[1] - 0.99).abs() < 1e-9);
        assert_eq!(theta[2], -1.0);
    }

    proptest! {
        #[test]
        fn forward_is_pure(seed in 0u64..1000, x in proptest::array::uniform6(-3.0f64..3.0)) {
            let p = random_params(small(), seed);
            let a = p.forward(&x).unwrap();
            let mut ws = p.workspace();
            p.forward_with(&[9.0; 6], &mut ws).unwrap();
            let b = p.forward_with(&x, &mut ws).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a.policy.std >= D_FLOOR);
        }
    }
}

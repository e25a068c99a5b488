//! Layer helpers shared by the network modules.

use rand::Rng;

use crate::diffops::{Graph, Init, ParamId, ParamStore, Var, LEAKY_SLOPE};
use crate::error::Result;

/// A convolution with reflect padding `k / 2` and an optional bias.
#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl ConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        init: Init,
    ) -> Result<Self> {
        let weight = store.create(format!("{name}.weight"), (c_out, c_in, k, k), c_in * k * k, init, rng)?;
        let bias = store.create(format!("{name}.bias"), (1, c_out, 1, 1), 1, Init::Zeros, rng)?;
        Ok(ConvLayer {
            weight,
            bias: Some(bias),
            stride,
            pad: k / 2,
        })
    }

    /// A 1x1 convolution on `(B, C, 1, 1)` vectors, i.e. a dense layer.
    pub fn dense<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        c_in: usize,
        c_out: usize,
        init: Init,
    ) -> Result<Self> {
        Self::new(store, rng, name, c_in, c_out, 1, 1, init)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|b| g.param(store, b));
        g.conv2d(x, w, b, self.stride, self.pad)
    }

    /// Convolution followed by the hidden leaky activation.
    pub fn forward_act(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let y = self.forward(g, store, x)?;
        Ok(g.leaky_relu(y, LEAKY_SLOPE))
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut v = vec![self.weight];
        v.extend(self.bias);
        v
    }
}

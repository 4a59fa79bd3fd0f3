use rand::Rng;

use super::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::ops::{
    self, concat_channels, conv2d, conv2d_backward, deconv, deconv_backward, max_unpool2x2, max_unpool2x2_backward,
    maxpool2x2, maxpool2x2_backward, relu, relu_backward, split_channels, ConvParams, LayerGeometry, PoolIndices,
};
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LayerKind {
    /// 3x3 convolution followed by ReLU.
    Conv3x3Relu,
    /// 1x1 convolution followed by ReLU (branch merge).
    MergeRelu,
    /// Linear 1x1 convolution (side reduction, fusion).
    Pointwise,
    Deconv { factor: usize },
}

/// Indices into `Network::layers` for each architectural role, one entry per
/// scale where applicable.
#[derive(Clone, Debug)]
struct Layout {
    encoder: Vec<Vec<usize>>,
    decoder: Vec<Vec<usize>>,
    /// `None` at scale 1, where the branch is the encoder output itself.
    merge: Vec<Option<usize>>,
    side_reduce: Vec<usize>,
    side_deconv: Vec<usize>,
    fuse: usize,
}

/// Parameter structure and values. Immutable during forward; training
/// mutates it through [`Network::layers_mut`].
#[derive(Clone, Debug)]
pub struct Network<T> {
    config: NetworkConfig,
    channels: Vec<usize>,
    layers: Vec<ConvParams<T>>,
    names: Vec<String>,
    kinds: Vec<LayerKind>,
    layout: Layout,
}

/// The six full-resolution logit maps of one forward pass.
#[derive(Clone, PartialEq, Debug)]
pub struct SideOutputs<T> {
    /// F^1 .. F^5, shallowest scale first.
    pub side: Vec<Tensor4<T>>,
    pub fused: Tensor4<T>,
}

impl<T: Scalar> SideOutputs<T> {
    /// Side maps followed by the fused map.
    pub fn maps(&self) -> impl Iterator<Item = &Tensor4<T>> {
        self.side.iter().chain(std::iter::once(&self.fused))
    }

    pub fn zeros_like(&self) -> Self {
        SideOutputs {
            side: self.side.iter().map(|t| Tensor4::zeros(t.shape())).collect(),
            fused: Tensor4::zeros(self.fused.shape()),
        }
    }
}

#[derive(Clone, Debug)]
struct BlockCache<T> {
    input: Tensor4<T>,
    /// Post-ReLU output of each convolution.
    outputs: Vec<Tensor4<T>>,
}

impl<T: Scalar> BlockCache<T> {
    fn output(&self) -> &Tensor4<T> {
        self.outputs.last().expect("blocks have at least one conv")
    }

    fn conv_input(&self, j: usize) -> &Tensor4<T> {
        if j == 0 {
            &self.input
        } else {
            &self.outputs[j - 1]
        }
    }
}

#[derive(Clone, Debug)]
struct BranchStep<T> {
    pool_indices: PoolIndices,
    merge_input: Tensor4<T>,
}

#[derive(Clone, Debug)]
struct SideCache<T> {
    reduce_input: Tensor4<T>,
    reduced: Tensor4<T>,
}

/// Intermediates retained by [`Network::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ActivationCache<T> {
    encoder: Vec<BlockCache<T>>,
    pool_indices: Vec<PoolIndices>,
    deepest_pooled: Shape4,
    branch: Vec<Tensor4<T>>,
    branch_steps: Vec<Option<BranchStep<T>>>,
    decoder: Vec<BlockCache<T>>,
    side: Vec<SideCache<T>>,
    fuse_input: Tensor4<T>,
}

impl<T: Scalar> ActivationCache<T> {
    /// Encoder block output E_k at its pre-pool resolution (`k` is 0-based).
    pub fn encoder_output(&self, k: usize) -> &Tensor4<T> {
        self.encoder[k].output()
    }

    /// Branch map B_k.
    pub fn branch_output(&self, k: usize) -> &Tensor4<T> {
        &self.branch[k]
    }

    /// Decoder block output D_k.
    pub fn decoder_output(&self, k: usize) -> &Tensor4<T> {
        self.decoder[k].output()
    }

    /// Unpooled tensor entering decoder block k.
    pub fn decoder_input(&self, k: usize) -> &Tensor4<T> {
        &self.decoder[k].input
    }

    /// Indices recorded by the pooling layer after encoder block k.
    pub fn pool_indices(&self, k: usize) -> &PoolIndices {
        &self.pool_indices[k]
    }
}

/// Parameter gradients, parallel to [`Network::layers`].
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub layers: Vec<ConvParams<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Gradients {
            layers: net.layers.iter().map(ConvParams::zeroed_like).collect(),
        }
    }

    pub fn get(&self, p: ParamRef) -> T {
        self.layers[p.layer].value(p.offset)
    }
}

/// Full result of [`Network::backward`].
#[derive(Clone, Debug)]
pub struct NetworkGrad<T> {
    pub params: Gradients<T>,
    pub input: Tensor4<T>,
}

/// Address of one scalar parameter: layer index plus flat offset into its
/// weights-then-bias values.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ParamRef {
    pub layer: usize,
    pub offset: usize,
}

/// Structural counts used to check the built architecture.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Topology {
    pub encoder_conv_layers: usize,
    pub decoder_conv_layers: usize,
    pub pool_layers: usize,
    pub unpool_layers: usize,
    pub branch_merges: usize,
    pub side_heads: usize,
    pub fusion_inputs: usize,
    pub block_channels: Vec<usize>,
    pub deconv_factors: Vec<usize>,
}

/// Binary plane `(n, 1, h, w)` stored as 0/1 bytes.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BinaryMask {
    pub shape: Shape4,
    pub data: Vec<u8>,
}

impl BinaryMask {
    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

impl<T: Scalar> Network<T> {
    /// Builds the architecture with He-normal convolution weights, zero
    /// biases, and bilinear deconvolution kernels.
    pub fn build<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeroed(config)?;
        for (layer, kind) in net.layers.iter_mut().zip(&net.kinds) {
            match *kind {
                LayerKind::Deconv { factor } => *layer = ops::bilinear_kernel(layer.out_channels(), factor),
                _ => layer.weights = ops::he_normal_init(layer.weights.shape(), rng)?,
            }
        }
        Ok(net)
    }

    /// Same structure as [`Network::build`] with every value zero.
    pub fn zeroed(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let ch = config.block_channels()?;
        let s = ch.len();
        let mut layers = Vec::new();
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        let mut push = |p: ConvParams<T>, name: String, kind: LayerKind| {
            layers.push(p);
            names.push(name);
            kinds.push(kind);
            layers.len() - 1
        };

        let mut encoder = Vec::with_capacity(s);
        let mut in_c = config.input_channels;
        for k in 0..s {
            let ids = (0..config.convs_per_block[k])
                .map(|j| {
                    let src = if j == 0 { in_c } else { ch[k] };
                    push(
                        ConvParams::zeros(ch[k], src, 3, 3),
                        format!("encoder.{}.conv{}", k + 1, j + 1),
                        LayerKind::Conv3x3Relu,
                    )
                })
                .collect();
            encoder.push(ids);
            in_c = ch[k];
        }

        let mut decoder = Vec::with_capacity(s);
        for k in 0..s {
            let out_c = decoder_out_channels(&ch, k);
            let n = config.convs_per_block[k];
            let ids = (0..n)
                .map(|j| {
                    let dst = if j + 1 == n { out_c } else { ch[k] };
                    push(
                        ConvParams::zeros(dst, ch[k], 3, 3),
                        format!("decoder.{}.conv{}", k + 1, j + 1),
                        LayerKind::Conv3x3Relu,
                    )
                })
                .collect();
            decoder.push(ids);
        }

        let merge = (0..s)
            .map(|k| {
                (k > 0).then(|| {
                    push(
                        ConvParams::zeros(ch[k], ch[k - 1] + ch[k], 1, 1),
                        format!("branch.{}.merge", k + 1),
                        LayerKind::MergeRelu,
                    )
                })
            })
            .collect();

        let mut side_reduce = Vec::with_capacity(s);
        let mut side_deconv = Vec::with_capacity(s);
        for k in 0..s {
            side_reduce.push(push(
                ConvParams::zeros(1, ch[k] + decoder_out_channels(&ch, k), 1, 1),
                format!("side.{}.reduce", k + 1),
                LayerKind::Pointwise,
            ));
            let factor = 1 << k;
            side_deconv.push(push(
                ConvParams::zeros(1, 1, 2 * factor, 2 * factor),
                format!("side.{}.deconv", k + 1),
                LayerKind::Deconv { factor },
            ));
        }
        let fuse = push(ConvParams::zeros(1, s, 1, 1), "fuse".into(), LayerKind::Pointwise);

        Ok(Network {
            config: config.clone(),
            channels: ch,
            layers,
            names,
            kinds,
            layout: Layout {
                encoder,
                decoder,
                merge,
                side_reduce,
                side_deconv,
                fuse,
            },
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn block_channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn num_scales(&self) -> usize {
        self.channels.len()
    }

    pub fn layers(&self) -> &[ConvParams<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvParams<T>] {
        &mut self.layers
    }

    pub fn layer_names(&self) -> &[String] {
        &self.names
    }

    pub fn layer_kinds(&self) -> &[LayerKind] {
        &self.kinds
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(ConvParams::num_values).sum()
    }

    /// Every scalar parameter address, in layer order.
    pub fn param_refs(&self) -> Vec<ParamRef> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(layer, p)| (0..p.num_values()).map(move |offset| ParamRef { layer, offset }))
            .collect()
    }

    pub fn param(&self, p: ParamRef) -> T {
        self.layers[p.layer].value(p.offset)
    }

    pub fn param_mut(&mut self, p: ParamRef) -> &mut T {
        self.layers[p.layer].value_mut(p.offset)
    }

    pub fn topology(&self) -> Topology {
        let s = self.num_scales();
        Topology {
            encoder_conv_layers: self.layout.encoder.iter().map(Vec::len).sum(),
            decoder_conv_layers: self.layout.decoder.iter().map(Vec::len).sum(),
            pool_layers: s,
            unpool_layers: s,
            branch_merges: self.layout.merge.iter().flatten().count(),
            side_heads: self.layout.side_reduce.len(),
            fusion_inputs: self.layers[self.layout.fuse].in_channels(),
            block_channels: self.channels.clone(),
            deconv_factors: self
                .layout
                .side_deconv
                .iter()
                .map(|&i| match self.kinds[i] {
                    LayerKind::Deconv { factor } => factor,
                    _ => unreachable!("side deconv slot holds a deconv"),
                })
                .collect(),
        }
    }

    /// Kernel geometry of encoder block `k` (0-based), convolutions only.
    pub fn encoder_block_geometry(&self, k: usize) -> Vec<LayerGeometry> {
        self.layout.encoder[k]
            .iter()
            .map(|&i| LayerGeometry::conv(self.layers[i].kernel().0))
            .collect()
    }

    pub fn check_input(&self, shape: Shape4) -> Result<()> {
        shape.require_positive("network input")?;
        if shape.c != self.config.input_channels {
            return Err(Error::Shape(format!(
                "input has {} channels, network expects {}",
                shape.c, self.config.input_channels
            )));
        }
        let m = self.config.size_multiple();
        if shape.h % m != 0 || shape.w % m != 0 {
            return Err(Error::Shape(format!(
                "input height and width must be divisible by {m}, got {}x{}",
                shape.h, shape.w
            )));
        }
        Ok(())
    }

    /// Shapes of the six output maps for an input shape, without computing
    /// anything.
    pub fn output_shapes(&self, input: Shape4) -> Result<Vec<Shape4>> {
        self.check_input(input)?;
        let s = self.num_scales();
        let mut shapes = Vec::with_capacity(s + 1);
        for k in 0..s {
            let (h, w) = (input.h >> k, input.w >> k);
            let reduce_in = self.layers[self.layout.side_reduce[k]].in_channels();
            debug_assert_eq!(reduce_in, self.channels[k] + decoder_out_channels(&self.channels, k));
            let f = 1 << k;
            shapes.push(Shape4::new(input.n, 1, h * f, w * f));
        }
        shapes.push(Shape4::new(input.n, 1, input.h, input.w));
        Ok(shapes)
    }

    fn run_block(&self, ids: &[usize], input: Tensor4<T>) -> Result<BlockCache<T>> {
        let mut outputs = Vec::with_capacity(ids.len());
        for &i in ids {
            let x = outputs.last().unwrap_or(&input);
            let y = relu(&conv2d(x, &self.layers[i], 1)?);
            outputs.push(y);
        }
        Ok(BlockCache { input, outputs })
    }

    fn block_backward(&self, ids: &[usize], cache: &BlockCache<T>, grad: Tensor4<T>, grads: &mut Gradients<T>) -> Result<Tensor4<T>> {
        let mut g = grad;
        for (j, &i) in ids.iter().enumerate().rev() {
            let gz = relu_backward(&cache.outputs[j], &g)?;
            let (gin, gp) = conv2d_backward(cache.conv_input(j), &self.layers[i], 1, &gz)?;
            grads.layers[i] = gp;
            g = gin;
        }
        Ok(g)
    }

    /// Branch maps B_1..B_S from encoder outputs E_1..E_S.
    ///
    /// B_1 = E_1; B_k = relu(merge_k(concat(maxpool(B_{k-1}), E_k))).
    pub fn branch_maps(&self, encoder_outputs: &[Tensor4<T>]) -> Result<Vec<Tensor4<T>>> {
        Ok(self.branch_forward(encoder_outputs)?.0)
    }

    #[allow(clippy::type_complexity)]
    fn branch_forward(&self, e: &[Tensor4<T>]) -> Result<(Vec<Tensor4<T>>, Vec<Option<BranchStep<T>>>)> {
        if e.len() != self.num_scales() {
            return Err(Error::Shape(format!("{} encoder maps for {} scales", e.len(), self.num_scales())));
        }
        let mut maps: Vec<Tensor4<T>> = vec![e[0].clone()];
        let mut steps = vec![None];
        for (k, merge) in self.layout.merge.iter().enumerate().skip(1) {
            let m = merge.expect("merge layer exists past scale 1");
            let (pooled, pool_indices) = maxpool2x2(&maps[k - 1])?;
            let merge_input = concat_channels(&pooled, &e[k])?;
            maps.push(relu(&conv2d(&merge_input, &self.layers[m], 0)?));
            steps.push(Some(BranchStep {
                pool_indices,
                merge_input,
            }));
        }
        Ok((maps, steps))
    }

    /// Runs the full network, returning the six logit maps and the cache
    /// needed by [`Network::backward`].
    pub fn forward(&self, image: &Tensor4<T>) -> Result<(SideOutputs<T>, ActivationCache<T>)> {
        self.check_input(image.shape())?;
        let s = self.num_scales();

        let mut encoder = Vec::with_capacity(s);
        let mut pool_indices = Vec::with_capacity(s);
        let offset = T::from_acc(self.config.input_offset);
        let mut x = image.map(|v| v - offset);
        for ids in &self.layout.encoder {
            let block = self.run_block(ids, x)?;
            let (pooled, idx) = maxpool2x2(block.output())?;
            encoder.push(block);
            pool_indices.push(idx);
            x = pooled;
        }
        let deepest_pooled = x.shape();

        let e: Vec<Tensor4<T>> = encoder.iter().map(|b| b.output().clone()).collect();
        let (branch, branch_steps) = self.branch_forward(&e)?;

        let mut decoder: Vec<Option<BlockCache<T>>> = vec![None; s];
        let mut d = x;
        for k in (0..s).rev() {
            let up = max_unpool2x2(&d, &pool_indices[k], e[k].shape())?;
            let block = self.run_block(&self.layout.decoder[k], up)?;
            d = block.output().clone();
            decoder[k] = Some(block);
        }
        let decoder: Vec<BlockCache<T>> = decoder.into_iter().map(|b| b.expect("every scale decoded")).collect();

        let mut side = Vec::with_capacity(s);
        let mut side_maps = Vec::with_capacity(s);
        for k in 0..s {
            let reduce_input = concat_channels(&branch[k], decoder[k].output())?;
            let reduced = conv2d(&reduce_input, &self.layers[self.layout.side_reduce[k]], 0)?;
            side_maps.push(deconv(&reduced, &self.layers[self.layout.side_deconv[k]], 1 << k)?);
            side.push(SideCache { reduce_input, reduced });
        }

        let mut fuse_input = side_maps[0].clone();
        for m in &side_maps[1..] {
            fuse_input = concat_channels(&fuse_input, m)?;
        }
        let fused = conv2d(&fuse_input, &self.layers[self.layout.fuse], 0)?;

        Ok((
            SideOutputs { side: side_maps, fused },
            ActivationCache {
                encoder,
                pool_indices,
                deepest_pooled,
                branch,
                branch_steps,
                decoder,
                side,
                fuse_input,
            },
        ))
    }

    /// Reverse pass from gradients on the six output maps.
    pub fn backward(&self, cache: &ActivationCache<T>, grad: &SideOutputs<T>) -> Result<NetworkGrad<T>> {
        let s = self.num_scales();
        if grad.side.len() != s {
            return Err(Error::Shape(format!("{} side gradients for {s} scales", grad.side.len())));
        }
        let mut grads = Gradients::zeros_like(self);

        // fusion head
        let (g_fuse_in, gp) = conv2d_backward(&cache.fuse_input, &self.layers[self.layout.fuse], 0, &grad.fused)?;
        grads.layers[self.layout.fuse] = gp;
        let mut g_side = Vec::with_capacity(s);
        for k in 0..s {
            let mut g = g_fuse_in.slice_channels(k, k + 1)?;
            g.add_assign(&grad.side[k])?;
            g_side.push(g);
        }

        // side heads
        let mut g_branch = Vec::with_capacity(s);
        let mut g_dec = Vec::with_capacity(s);
        for k in 0..s {
            let sc = &cache.side[k];
            let (ldec, lred) = (self.layout.side_deconv[k], self.layout.side_reduce[k]);
            let (g_red, gp) = deconv_backward(&sc.reduced, &self.layers[ldec], 1 << k, &g_side[k])?;
            grads.layers[ldec] = gp;
            let (g_in, gp) = conv2d_backward(&sc.reduce_input, &self.layers[lred], 0, &g_red)?;
            grads.layers[lred] = gp;
            let (gb, gd) = split_channels(&g_in, self.channels[k])?;
            g_branch.push(gb);
            g_dec.push(gd);
        }

        // decoder, shallow to deep
        let mut carry: Option<Tensor4<T>> = None;
        for k in 0..s {
            let mut g = g_dec[k].clone();
            if let Some(c) = carry.take() {
                g.add_assign(&c)?;
            }
            let g_up = self.block_backward(&self.layout.decoder[k], &cache.decoder[k], g, &mut grads)?;
            carry = Some(max_unpool2x2_backward(&cache.pool_indices[k], &g_up)?);
        }
        let g_deepest = carry.expect("at least one scale");
        debug_assert_eq!(g_deepest.shape(), cache.deepest_pooled);

        // branch, deep to shallow
        let mut g_enc: Vec<Tensor4<T>> = cache.encoder.iter().map(|b| Tensor4::zeros(b.output().shape())).collect();
        for k in (1..s).rev() {
            let step = cache.branch_steps[k].as_ref().expect("branch step past scale 1");
            let m = self.layout.merge[k].expect("merge layer past scale 1");
            let gz = relu_backward(&cache.branch[k], &g_branch[k])?;
            let (g_in, gp) = conv2d_backward(&step.merge_input, &self.layers[m], 0, &gz)?;
            grads.layers[m] = gp;
            let (g_pooled, g_e) = split_channels(&g_in, self.channels[k - 1])?;
            g_enc[k].add_assign(&g_e)?;
            let back = maxpool2x2_backward(&step.pool_indices, &g_pooled)?;
            g_branch[k - 1].add_assign(&back)?;
        }
        g_enc[0].add_assign(&g_branch[0])?;

        // encoder, deep to shallow
        let back = maxpool2x2_backward(&cache.pool_indices[s - 1], &g_deepest)?;
        g_enc[s - 1].add_assign(&back)?;
        let mut g_input = None;
        for k in (0..s).rev() {
            let g = std::mem::replace(&mut g_enc[k], Tensor4::zeros(Shape4::new(0, 0, 0, 0)));
            let g_x = self.block_backward(&self.layout.encoder[k], &cache.encoder[k], g, &mut grads)?;
            if k > 0 {
                let back = maxpool2x2_backward(&cache.pool_indices[k - 1], &g_x)?;
                g_enc[k - 1].add_assign(&back)?;
            } else {
                g_input = Some(g_x);
            }
        }

        Ok(NetworkGrad {
            params: grads,
            input: g_input.expect("scale 1 reached"),
        })
    }
}

fn decoder_out_channels(ch: &[usize], k: usize) -> usize {
    if k == 0 {
        ch[0]
    } else {
        ch[k - 1]
    }
}

/// Thresholds the fused probability map: `sigmoid(F_fused) > threshold`.
pub fn predict<T: Scalar>(net: &Network<T>, image: &Tensor4<T>, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold {threshold} outside (0, 1)")));
    }
    let (out, _) = net.forward(image)?;
    Ok(threshold_logits(&out.fused, threshold))
}

pub(crate) fn threshold_logits<T: Scalar>(logits: &Tensor4<T>, threshold: f64) -> BinaryMask {
    BinaryMask {
        shape: logits.shape(),
        data: logits
            .data()
            .iter()
            .map(|&f| u8::from(ops::sigmoid(f).acc() > threshold))
            .collect(),
    }
}

//! The encoder/decoder networks and the training loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reorder_autodiff::{Tape, Tensor, Var};
use reorder_core::{AdjacencyMatrix, Permutation};

use crate::assign::harden;
use crate::config::{Architecture, DecoderKind, ModelConfig, LATENT_DIM};
use crate::loss::{bce, sliced_wasserstein};
use crate::operators::{sinkhorn, softsort};
use crate::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const ELU_ALPHA: f64 = 1.0;

/// Rows per forward pass when running inference over many inputs.
const INFERENCE_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    weight: usize,
    bias: usize,
    /// LayerNorm gain and bias, present on hidden layers.
    norm: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    arch: Architecture,
    params: Vec<Param>,
    encoder: Vec<Layer>,
    decoder: Vec<Layer>,
}

/// Constant inputs of one loss evaluation.
#[derive(Debug, Clone)]
pub struct LossInputs {
    /// Target reorderings `A_P`, `[B, n, n]`.
    pub targets: Tensor,
    /// The graph's adjacency matrix in its stored node order, `[n, n]`.
    pub adjacency: Tensor,
    /// Prior samples, `[B, 2]`.
    pub prior: Tensor,
    /// Projection directions, `[2, L]`.
    pub directions: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub reconstruction: Var,
    pub latent: Var,
    pub z: Var,
}

/// One decoded latent point.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub z: [f64; 2],
    pub order: Permutation,
    pub matrix: AdjacencyMatrix,
}

fn layer_specs(prefix: &str, widths: &[usize]) -> Vec<(String, Vec<usize>)> {
    let mut specs = Vec::new();
    let last = widths.len() - 2;
    for (i, pair) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        specs.push((format!("{prefix}.{i}.weight"), vec![fan_in, fan_out]));
        specs.push((format!("{prefix}.{i}.bias"), vec![fan_out]));
        if i < last {
            specs.push((format!("{prefix}.{i}.norm.gain"), vec![fan_out]));
            specs.push((format!("{prefix}.{i}.norm.bias"), vec![fan_out]));
        }
    }
    specs
}

fn index_layers(widths: &[usize], offset: usize) -> (Vec<Layer>, usize) {
    let mut layers = Vec::new();
    let mut k = offset;
    let last = widths.len() - 2;
    for i in 0..widths.len() - 1 {
        let norm = (i < last).then_some((k + 2, k + 3));
        layers.push(Layer {
            weight: k,
            bias: k + 1,
            norm,
        });
        k += if i < last { 4 } else { 2 };
    }
    (layers, k)
}

impl Model {
    /// Freshly initialized model; errors for `n < 8` (see
    /// [`Architecture::for_config`]).
    pub fn new(config: ModelConfig) -> Result<Self> {
        let arch = Architecture::for_config(&config)?;
        Self::with_architecture(config, arch)
    }

    /// Weights and biases uniform in `±sqrt(1 / fan_in)`, LayerNorm gains 1
    /// and biases 0, drawn from a generator seeded by `config.seed`.
    pub fn with_architecture(config: ModelConfig, arch: Architecture) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x1417_5eed);
        let mut params = Vec::new();
        for (prefix, widths) in [("encoder", &arch.encoder), ("decoder", &arch.decoder)] {
            for (name, shape) in layer_specs(prefix, widths) {
                let value = if name.ends_with("norm.gain") {
                    Tensor::filled(&shape, 1.0)
                } else if name.ends_with("norm.bias") {
                    Tensor::zeros(&shape)
                } else {
                    let bound = (1.0 / widths[layer_index(&name)] as f64).sqrt();
                    Tensor::from_fn(&shape, |_| rng.random_range(-bound..=bound))
                };
                params.push(Param { name, value });
            }
        }
        Self::from_params(config, arch, params)
    }

    /// Assembles a model from named parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, arch: Architecture, params: Vec<Param>) -> Result<Self> {
        config.validate()?;
        check_arch(&config, &arch)?;
        let mut expected = layer_specs("encoder", &arch.encoder);
        expected.extend(layer_specs("decoder", &arch.decoder));
        if expected.len() != params.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in expected.iter().zip(&params) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(Error::Config(format!(
                    "parameter `{}` {:?} does not match expected `{name}` {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        let (encoder, next) = index_layers(&arch.encoder, 0);
        let (decoder, _) = index_layers(&arch.decoder, next);
        Ok(Self {
            config,
            arch,
            params,
            encoder,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Records the parameters on `tape`, trainable when `grad` is set.
    pub fn record(&self, tape: &mut Tape, grad: bool) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.value.clone(), grad)).collect()
    }

    fn mlp(&self, tape: &mut Tape, vars: &[Var], layers: &[Layer], mut x: Var) -> Result<Var> {
        for layer in layers {
            let h = tape.matmul(x, vars[layer.weight])?;
            x = tape.add(h, vars[layer.bias])?;
            if let Some((g, b)) = layer.norm {
                let normed = tape.layer_norm(x, vars[g], vars[b], LAYER_NORM_EPS)?;
                x = tape.elu(normed, ELU_ALPHA);
            }
        }
        Ok(x)
    }

    /// `x: [B, n²]` → `z: [B, 2]`.
    pub fn encode_on(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        self.mlp(tape, vars, &self.encoder, x)
    }

    /// `z: [B, 2]` → soft permutations `[B, n, n]`.
    pub fn decode_on(&self, tape: &mut Tape, vars: &[Var], z: Var) -> Result<Var> {
        let n = self.n();
        let b = tape.shape(z)[0];
        let out = self.mlp(tape, vars, &self.decoder, z)?;
        match self.config.decoder {
            DecoderKind::Sinkhorn => {
                let logits = tape.reshape(out, &[b, n, n])?;
                sinkhorn(tape, logits, self.config.tau, self.config.sinkhorn_iters)
            }
            DecoderKind::SoftSort => softsort(tape, out, self.config.tau),
        }
    }

    /// Soft reconstructions `P′ A P′ᵀ` for `p: [B, n, n]`.
    pub fn reconstruct_on(&self, tape: &mut Tape, p: Var, adjacency: Var) -> Result<Var> {
        let n = self.n();
        let b = tape.shape(p)[0];
        let flat = tape.reshape(p, &[b * n, n])?;
        let pa = tape.matmul(flat, adjacency)?;
        let pa = tape.reshape(pa, &[b, n, n])?;
        let pt = tape.transpose(p)?;
        Ok(tape.bmm(pa, pt)?)
    }

    /// `L = L_X + λ·L_Z` for one batch.
    pub fn loss_on(&self, tape: &mut Tape, vars: &[Var], inputs: &LossInputs) -> Result<LossVars> {
        let n = self.n();
        let shape = inputs.targets.shape();
        if shape.len() != 3 || shape[1] != n || shape[2] != n {
            return Err(Error::Shape(format!("targets {shape:?} are not [B, {n}, {n}]")));
        }
        let b = shape[0];
        let targets = tape.constant(inputs.targets.clone());
        let adjacency = tape.constant(inputs.adjacency.clone());
        let prior = tape.constant(inputs.prior.clone());
        let directions = tape.constant(inputs.directions.clone());

        let x = tape.reshape(targets, &[b, n * n])?;
        let z = self.encode_on(tape, vars, x)?;
        let p = self.decode_on(tape, vars, z)?;
        let rec = self.reconstruct_on(tape, p, adjacency)?;
        let reconstruction = bce(tape, targets, rec)?;
        let latent = sliced_wasserstein(tape, z, prior, directions)?;
        let weighted = tape.scale(latent, self.config.lambda);
        let total = tape.add(reconstruction, weighted)?;
        Ok(LossVars {
            total,
            reconstruction,
            latent,
            z,
        })
    }

    /// Latent codes of the given reordered adjacency matrices.
    pub fn encode(&self, inputs: &[AdjacencyMatrix]) -> Result<Vec<[f64; 2]>> {
        let n = self.n();
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(INFERENCE_CHUNK) {
            let mut data = Vec::with_capacity(chunk.len() * n * n);
            for a in chunk {
                if a.n() != n {
                    return Err(Error::Shape(format!("input has n = {}, model expects {n}", a.n())));
                }
                data.extend(a.to_f64());
            }
            let mut tape = Tape::new();
            let vars = self.record(&mut tape, false);
            let x = tape.constant(Tensor::new(&[chunk.len(), n * n], data)?);
            let z = self.encode_on(&mut tape, &vars, x)?;
            out.extend(tape.value(z).data().chunks(LATENT_DIM).map(|c| [c[0], c[1]]));
        }
        Ok(out)
    }

    /// Soft permutation matrices (row-major `n × n` each) for latent points.
    pub fn soft_permutations(&self, zs: &[[f64; 2]]) -> Result<Vec<Vec<f64>>> {
        let n = self.n();
        let mut out = Vec::with_capacity(zs.len());
        for chunk in zs.chunks(INFERENCE_CHUNK) {
            let mut tape = Tape::new();
            let vars = self.record(&mut tape, false);
            let flat: Vec<f64> = chunk.iter().flat_map(|z| z.iter().copied()).collect();
            let z = tape.constant(Tensor::new(&[chunk.len(), LATENT_DIM], flat)?);
            let p = self.decode_on(&mut tape, &vars, z)?;
            out.extend(tape.value(p).data().chunks(n * n).map(<[f64]>::to_vec));
        }
        Ok(out)
    }

    /// Decodes latent points to exact permutations and the reordered
    /// adjacency matrices they produce.
    pub fn decode(&self, adjacency: &AdjacencyMatrix, zs: &[[f64; 2]]) -> Result<Vec<Decoded>> {
        let n = self.n();
        if adjacency.n() != n {
            return Err(Error::Shape(format!(
                "graph has n = {}, model expects {n}",
                adjacency.n()
            )));
        }
        let soft = self.soft_permutations(zs)?;
        zs.iter()
            .zip(soft)
            .map(|(&z, p)| {
                let order = harden(&p, n, self.config.decoder);
                let matrix = adjacency.reorder(&order)?;
                Ok(Decoded { z, order, matrix })
            })
            .collect()
    }

    /// Hardened reconstruction of each input: encode, decode, harden.
    pub fn reconstruct(&self, adjacency: &AdjacencyMatrix, inputs: &[AdjacencyMatrix]) -> Result<Vec<Decoded>> {
        let zs = self.encode(inputs)?;
        self.decode(adjacency, &zs)
    }
}

impl Decoded {
    /// True when the matrix is `reorder(A, order)` and so carries `A`'s edge
    /// count and degree multiset.
    pub fn preserves_structure(&self, adjacency: &AdjacencyMatrix) -> bool {
        self.order.len() == adjacency.n()
            && adjacency.reorder(&self.order).is_ok_and(|m| m == self.matrix)
            && self.matrix.edge_count() == adjacency.edge_count()
            && self.matrix.degree_multiset() == adjacency.degree_multiset()
    }
}

fn layer_index(name: &str) -> usize {
    name.split('.').nth(1).and_then(|s| s.parse().ok()).expect("generated name")
}

fn check_arch(config: &ModelConfig, arch: &Architecture) -> Result<()> {
    let n = config.n;
    let ok_enc = arch.encoder.len() >= 2
        && arch.encoder[0] == n * n
        && *arch.encoder.last().unwrap() == LATENT_DIM
        && arch.encoder.iter().all(|&w| w > 0);
    let out = match config.decoder {
        DecoderKind::Sinkhorn => n * n,
        DecoderKind::SoftSort => n,
    };
    let ok_dec = arch.decoder.len() >= 2
        && arch.decoder[0] == LATENT_DIM
        && *arch.decoder.last().unwrap() == out
        && arch.decoder.iter().all(|&w| w > 0);
    if !(ok_enc && ok_dec) {
        return Err(Error::Config(format!(
            "architecture {arch:?} does not fit n = {n} with the {} decoder",
            config.decoder
        )));
    }
    Ok(())
}

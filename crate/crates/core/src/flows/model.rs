use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::coupling::CouplingLayer;
use super::funnel::{FunnelLayer, DEFAULT_LOG_STD_BOUNDS};
use super::permutation::PermutationLayer;
use crate::nnmath::{MlpSpec, ParamStore, Tape, Var};
use crate::seed::labeled_rng;
use crate::{Error, Result};

/// Serializable description of one layer, data side first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Coupling {
        mask: Vec<bool>,
        conditioner: MlpSpec,
        clamp: f64,
    },
    Permutation {
        perm: Vec<usize>,
    },
    Funnel {
        in_dim: usize,
        keep: Vec<usize>,
        bijection: MlpSpec,
        decoder: MlpSpec,
        clamp: f64,
        log_std_bounds: (f64, f64),
    },
}

/// Architecture descriptor: everything needed to rebuild a model's layer
/// stack and parameter layout. Parameter values live in the `MFSF01` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowArchitecture {
    pub data_dim: usize,
    pub cond_dim: usize,
    pub init_seed: u64,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Coupling(CouplingLayer),
    Permutation(PermutationLayer),
    Funnel(FunnelLayer),
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        match self {
            Layer::Coupling(c) => c.dim(),
            Layer::Permutation(p) => p.dim(),
            Layer::Funnel(f) => f.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Layer::Coupling(c) => c.dim(),
            Layer::Permutation(p) => p.dim(),
            Layer::Funnel(f) => f.out_dim(),
        }
    }
}

/// Conditional surjective flow `q(y | θ)`.
///
/// Layers are listed data side first: `layers[0]` consumes `y` in the
/// normalizing direction and the last layer produces the base variable.
/// In the backward indexing `y = u_K → … → u_0`, listed position `i`
/// (zero-based) is flow layer `K - i`.
#[derive(Debug, Clone)]
pub struct FlowModel {
    arch: FlowArchitecture,
    layers: Vec<Layer>,
    params: ParamStore,
    base_dim: usize,
}

impl FlowModel {
    /// Builds the layer stack and initializes parameters from
    /// `arch.init_seed`.
    pub fn new(arch: FlowArchitecture) -> Result<Self> {
        let mut params = ParamStore::new();
        let mut layers = Vec::with_capacity(arch.layers.len());
        let mut width = arch.data_dim;
        for (i, spec) in arch.layers.iter().enumerate() {
            let name = format!("layer{i}");
            let mut rng = labeled_rng(arch.init_seed, &name);
            let layer = match spec {
                LayerSpec::Coupling {
                    mask,
                    conditioner,
                    clamp,
                } => Layer::Coupling(CouplingLayer::new(
                    &name,
                    mask.clone(),
                    conditioner.clone(),
                    *clamp,
                    arch.cond_dim,
                    &mut params,
                    &mut rng,
                )?),
                LayerSpec::Permutation { perm } => {
                    Layer::Permutation(PermutationLayer::new(perm.clone())?)
                }
                LayerSpec::Funnel {
                    in_dim,
                    keep,
                    bijection,
                    decoder,
                    clamp,
                    log_std_bounds,
                } => Layer::Funnel(FunnelLayer::new(
                    &name,
                    *in_dim,
                    keep.clone(),
                    bijection.clone(),
                    decoder.clone(),
                    *clamp,
                    *log_std_bounds,
                    arch.cond_dim,
                    &mut params,
                    &mut rng,
                )?),
            };
            if layer.in_dim() != width {
                return Err(Error::dim(format!("layer {i} input width"), width, layer.in_dim()));
            }
            width = layer.out_dim();
            layers.push(layer);
        }
        Ok(Self {
            arch,
            layers,
            params,
            base_dim: width,
        })
    }

    pub fn architecture(&self) -> &FlowArchitecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn data_dim(&self) -> usize {
        self.arch.data_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.arch.cond_dim
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    /// Flow blocks in listed order as `(layer index, width)`; permutations
    /// are zero-log-det reindexings folded into the preceding block.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| !matches!(l, Layer::Permutation(_)))
            .map(|(i, l)| (i, l.out_dim()))
            .collect()
    }

    /// Output width of each flow block, data side first.
    pub fn block_widths(&self) -> Vec<usize> {
        self.blocks().into_iter().map(|(_, w)| w).collect()
    }

    /// Partition of block positions into bijective and surjective sets.
    pub fn partition(&self) -> (Vec<usize>, Vec<usize>) {
        let mut bij = Vec::new();
        let mut surj = Vec::new();
        for (pos, (i, _)) in self.blocks().into_iter().enumerate() {
            match self.layers[i] {
                Layer::Funnel(_) => surj.push(pos),
                _ => bij.push(pos),
            }
        }
        (bij, surj)
    }

    fn check_inputs(&self, tape: &Tape, y: Var, cond: Var) -> Result<()> {
        if tape.cols(y) != self.data_dim() {
            return Err(Error::dim("response length", self.data_dim(), tape.cols(y)));
        }
        if tape.cols(cond) != self.cond_dim() {
            return Err(Error::dim("conditioning length", self.cond_dim(), tape.cols(cond)));
        }
        if tape.rows(y) != tape.rows(cond) {
            return Err(Error::dim("conditioning rows", tape.rows(y), tape.rows(cond)));
        }
        Ok(())
    }

    /// Per-row `log q(y | θ)` as a `(rows, 1)` tape variable: the base
    /// density of `u_0` plus every bijective log-det and funnel contribution.
    pub fn log_likelihood(&self, tape: &mut Tape, y: Var, cond: Var) -> Result<Var> {
        self.check_inputs(tape, y, cond)?;
        let mut u = y;
        let mut total: Option<Var> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let term = match layer {
                Layer::Coupling(c) => {
                    let (next, logdet) = c.normalize(tape, &self.params, u, cond, i)?;
                    u = next;
                    Some(logdet)
                }
                Layer::Permutation(p) => {
                    u = p.normalize(tape, u)?;
                    None
                }
                Layer::Funnel(f) => {
                    let (z, contribution) = f.normalize(tape, &self.params, u, cond, i)?;
                    u = z;
                    Some(contribution)
                }
            };
            if tape.value(u).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer: i,
                    detail: "intermediate state".into(),
                });
            }
            if let Some(term) = term {
                total = Some(match total {
                    Some(acc) => tape.add(acc, term),
                    None => term,
                });
            }
        }
        let base = tape.std_normal_logpdf(u);
        let out = match total {
            Some(acc) => tape.add(acc, base),
            None => base,
        };
        if let Some(bad) = tape.value(out).iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: self.layers.len(),
                detail: format!("log-likelihood of row {bad}"),
            });
        }
        Ok(out)
    }

    /// Log-likelihood of each row of `ys` (row-major, `rows × W`) given the
    /// matching rows of `conds`.
    pub fn log_likelihood_rows(&self, ys: &[f64], conds: &[f64]) -> Result<Vec<f64>> {
        let w = self.data_dim();
        let rows = ys.len() / w;
        if ys.len() != rows * w || conds.len() != rows * self.cond_dim() {
            return Err(Error::dim("batch length", rows * self.cond_dim(), conds.len()));
        }
        let mut tape = Tape::new();
        let y = tape.leaf(rows, w, ys.to_vec());
        let c = tape.leaf(rows, self.cond_dim(), conds.to_vec());
        let out = self.log_likelihood(&mut tape, y, c)?;
        Ok(tape.value(out).to_vec())
    }

    pub fn log_likelihood_one(&self, y: &[f64], cond: &[f64]) -> Result<f64> {
        if y.len() != self.data_dim() {
            return Err(Error::dim("response length", self.data_dim(), y.len()));
        }
        if cond.len() != self.cond_dim() {
            return Err(Error::dim("conditioning length", self.cond_dim(), cond.len()));
        }
        Ok(self.log_likelihood_rows(y, cond)?[0])
    }

    /// Maps base draws `(rows, base_dim)` to data space.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        base: Var,
        cond: Var,
        rng: &mut R,
    ) -> Result<Var> {
        if tape.cols(base) != self.base_dim {
            return Err(Error::dim("base sample width", self.base_dim, tape.cols(base)));
        }
        let mut u = base;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            u = match layer {
                Layer::Coupling(c) => c.generate(tape, &self.params, u, cond, i)?,
                Layer::Permutation(p) => p.generate(tape, u)?,
                Layer::Funnel(f) => f.generate(tape, &self.params, u, cond, rng, i)?,
            };
        }
        Ok(u)
    }

    /// Draws `n` series from `q(· | θ)`, returned row-major `(n, W)`.
    pub fn sample_rows<R: Rng + ?Sized>(&self, cond: &[f64], n: usize, rng: &mut R) -> Result<Vec<f64>> {
        if cond.len() != self.cond_dim() {
            return Err(Error::dim("conditioning length", self.cond_dim(), cond.len()));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
        }
        let mut tape = Tape::new();
        let base: Vec<f64> = (0..n * self.base_dim).map(|_| rng.sample(StandardNormal)).collect();
        let base = tape.leaf(n, self.base_dim, base);
        let conds: Vec<f64> = (0..n).flat_map(|_| cond.iter().copied()).collect();
        let c = tape.leaf(n, self.cond_dim(), conds);
        let y = self.generate(&mut tape, base, c, rng)?;
        Ok(tape.value(y).to_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, cond: &[f64], n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let rows = self.sample_rows(cond, n, rng)?;
        Ok(rows.chunks(self.data_dim()).map(<[f64]>::to_vec).collect())
    }

    /// Writes `<stem>.json` (architecture) and `<stem>.bin` (parameters).
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref();
        let json = serde_json::to_string_pretty(&self.arch)?;
        std::fs::write(stem.with_extension("json"), json)?;
        self.params.save(stem.with_extension("bin"))
    }

    pub fn load(stem: impl AsRef<Path>) -> Result<Self> {
        let stem = stem.as_ref();
        let arch: FlowArchitecture =
            serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
        let stored = ParamStore::load(stem.with_extension("bin"))?;
        let mut model = Self::new(arch)?;
        model.params.copy_values_from(&stored).map_err(|e| {
            Error::Format(format!("parameter file does not match architecture: {e}"))
        })?;
        Ok(model)
    }
}

/// Shape of the default layout: `pre_couplings` couplings at width W (each
/// followed by a seeded permutation), one funnel `W → Q`, then
/// `post_couplings` couplings at width Q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultLayout {
    pub data_dim: usize,
    pub latent_dim: usize,
    pub cond_dim: usize,
    pub pre_couplings: usize,
    pub post_couplings: usize,
    pub conditioner_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub clamp: f64,
    pub log_std_bounds: (f64, f64),
}

impl DefaultLayout {
    pub fn new(data_dim: usize, latent_dim: usize, cond_dim: usize) -> Self {
        Self {
            data_dim,
            latent_dim,
            cond_dim,
            pre_couplings: 4,
            post_couplings: 2,
            conditioner_hidden: vec![64, 64],
            decoder_hidden: vec![64, 64],
            clamp: 2.0,
            log_std_bounds: DEFAULT_LOG_STD_BOUNDS,
        }
    }

    pub fn architecture(&self, seed: u64) -> Result<FlowArchitecture> {
        let (w, q, m) = (self.data_dim, self.latent_dim, self.cond_dim);
        if q == 0 || q >= w {
            return Err(Error::InvalidArgument(format!(
                "latent dimension must satisfy 0 < Q < W, got Q={q}, W={w}"
            )));
        }
        if self.post_couplings > 0 && q < 2 {
            return Err(Error::InvalidArgument(
                "couplings after the funnel need Q >= 2".into(),
            ));
        }
        let mut rng = labeled_rng(seed, "permutations");
        let mut layers = Vec::new();
        let coupling = |dim: usize, parity: usize| {
            let mask: Vec<bool> = (0..dim).map(|i| i % 2 == parity).collect();
            let nt = mask.iter().filter(|b| **b).count();
            LayerSpec::Coupling {
                conditioner: MlpSpec::new(dim - nt + m, self.conditioner_hidden.clone(), 2 * nt),
                mask,
                clamp: self.clamp,
            }
        };
        for k in 0..self.pre_couplings {
            layers.push(coupling(w, k % 2));
            layers.push(LayerSpec::Permutation {
                perm: PermutationLayer::random(w, &mut rng).perm().to_vec(),
            });
        }
        layers.push(LayerSpec::Funnel {
            in_dim: w,
            keep: (0..q).collect(),
            bijection: MlpSpec::new(w - q + m, self.conditioner_hidden.clone(), 2 * q),
            decoder: MlpSpec::new(q + m, self.decoder_hidden.clone(), 2 * (w - q)),
            clamp: self.clamp,
            log_std_bounds: self.log_std_bounds,
        });
        for k in 0..self.post_couplings {
            if k > 0 {
                layers.push(LayerSpec::Permutation {
                    perm: PermutationLayer::random(q, &mut rng).perm().to_vec(),
                });
            }
            layers.push(coupling(q, k % 2));
        }
        Ok(FlowArchitecture {
            data_dim: w,
            cond_dim: m,
            init_seed: seed,
            layers,
        })
    }

    pub fn build(&self, seed: u64) -> Result<FlowModel> {
        FlowModel::new(self.architecture(seed)?)
    }
}

/// Default seven-block model: four couplings at width W, a funnel to Q, two
/// couplings at width Q.
pub fn build_default_model(w: usize, q: usize, m: usize, seed: u64) -> Result<FlowModel> {
    DefaultLayout::new(w, q, m).build(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnmath::gaussian_logpdf;
    use crate::seed::rng_from_seed;

    #[test]
    fn default_widths_and_partition() {
        let model = build_default_model(200, 10, 9, 1).unwrap();
        assert_eq!(model.block_widths(), vec![200, 200, 200, 200, 10, 10, 10]);
        let (b, s) = model.partition();
        assert_eq!(s, vec![4]);
        assert_eq!(b.len(), 6);
        assert_eq!(model.base_dim(), 10);
    }

    #[test]
    fn default_rejects_bad_latent() {
        assert!(build_default_model(4, 4, 1, 0).is_err());
        assert!(build_default_model(4, 0, 1, 0).is_err());
    }

    #[test]
    fn parameter_count_is_sum_of_mlps() {
        let model = build_default_model(12, 4, 3, 5).unwrap();
        let expected: usize = model
            .architecture()
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Coupling { conditioner, .. } => conditioner.param_count(),
                LayerSpec::Permutation { .. } => 0,
                LayerSpec::Funnel { bijection, decoder, .. } => {
                    bijection.param_count() + decoder.param_count()
                }
            })
            .sum();
        // closed form: 4 couplings at W=12 (6 pass + 3 cond -> 64 -> 64 -> 12),
        // funnel (8+3 -> 64 -> 64 -> 8, 4+3 -> 64 -> 64 -> 16), 2 couplings at Q=4
        let mlp = |i: usize, o: usize| i * 64 + 64 + 64 * 64 + 64 + 64 * o + o;
        let closed = 4 * mlp(9, 12) + mlp(11, 8) + mlp(7, 16) + 2 * mlp(5, 4);
        assert_eq!(expected, closed);
        assert_eq!(model.params().len(), closed);
    }

    #[test]
    fn identity_at_init_is_standard_normal() {
        let model = build_default_model(8, 3, 2, 3).unwrap();
        let y = [0.3, -1.0, 0.2, 2.0, -0.5, 0.1, 0.0, 1.1];
        let ll = model.log_likelihood_one(&y, &[0.5, -0.5]).unwrap();
        let want = gaussian_logpdf(&y, &[0.0; 8], &[0.0; 8]).unwrap();
        assert!((ll - want).abs() < 1e-12);
    }

    #[test]
    fn small_model_smoke() {
        let mut model = build_default_model(4, 2, 1, 9).unwrap();
        let mut rng = rng_from_seed(1);
        for v in model.params_mut().values_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
        let ll = model.log_likelihood_one(&[0.1, 0.2, -0.3, 0.4], &[0.3]).unwrap();
        assert!(ll.is_finite());
        let samples = model.sample(&[0.3], 5, &mut rng).unwrap();
        assert_eq!(samples.len(), 5);
        assert!(samples.iter().all(|s| s.len() == 4 && s.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn dimension_errors() {
        let model = build_default_model(4, 2, 1, 9).unwrap();
        assert!(model.log_likelihood_one(&[0.0; 3], &[0.0]).is_err());
        assert!(model.log_likelihood_one(&[0.0; 4], &[0.0, 1.0]).is_err());
        assert!(model.sample(&[0.0], 0, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn save_load_is_bit_identical() {
        let mut model = build_default_model(6, 2, 2, 4).unwrap();
        let mut rng = rng_from_seed(2);
        for v in model.params_mut().values_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("model");
        model.save(&stem).unwrap();
        let loaded = FlowModel::load(&stem).unwrap();
        let ys: Vec<f64> = (0..18).map(|i| (i as f64 * 0.37).sin()).collect();
        let cs: Vec<f64> = (0..6).map(|i| (i as f64 * 0.11).cos()).collect();
        let a = model.log_likelihood_rows(&ys, &cs).unwrap();
        let b = loaded.log_likelihood_rows(&ys, &cs).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

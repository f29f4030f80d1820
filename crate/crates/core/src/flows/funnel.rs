use rand::Rng;
use rand_distr::StandardNormal;

use crate::nnmath::{Mlp, MlpSpec, ParamStore, Tape, Var};
use crate::{Error, Result};

/// Dimension-reducing funnel `W → Q`.
///
/// The input splits into a kept block `u⁺` (the `keep` indices, length Q)
/// and a discarded block `u⁻` (the rest). In the normalizing direction the
/// kept block passes through a conditional affine bijection driven by
/// `(u⁻, θ)`:
///
/// ```text
/// z = (u⁺ - shift(u⁻, θ)) · exp(-s(u⁻, θ))
/// ```
///
/// and the layer contributes `log N(u⁻; μ(z, θ), exp(2σ(z, θ))) - Σ s`.
/// In the generating direction `u⁻` is sampled from the decoder and
/// `u⁺ = z · exp(s) + shift`.
#[derive(Debug, Clone)]
pub struct FunnelLayer {
    in_dim: usize,
    keep: Vec<usize>,
    discard: Vec<usize>,
    merge_idx: Vec<usize>,
    bijection: Mlp,
    decoder: Mlp,
    clamp: f64,
    log_std_bounds: (f64, f64),
}

pub const DEFAULT_LOG_STD_BOUNDS: (f64, f64) = (-7.0, 7.0);

impl FunnelLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_dim: usize,
        keep: Vec<usize>,
        bijection: MlpSpec,
        decoder: MlpSpec,
        clamp: f64,
        log_std_bounds: (f64, f64),
        cond_dim: usize,
        params: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        let q = keep.len();
        if q == 0 || q >= in_dim {
            return Err(Error::InvalidArgument(format!(
                "{name}: funnel needs 0 < Q < W, got Q={q}, W={in_dim}"
            )));
        }
        let mut seen = vec![false; in_dim];
        for &k in &keep {
            if k >= in_dim || seen[k] {
                return Err(Error::InvalidArgument(format!(
                    "{name}: keep set must hold {q} distinct indices below {in_dim}"
                )));
            }
            seen[k] = true;
        }
        let discard: Vec<usize> = (0..in_dim).filter(|&i| !seen[i]).collect();
        let d = discard.len();
        if bijection.input_dim != d + cond_dim || bijection.output_dim != 2 * q {
            return Err(Error::InvalidArgument(format!(
                "{name}: kept-block conditioner must map {} -> {}, got {} -> {}",
                d + cond_dim,
                2 * q,
                bijection.input_dim,
                bijection.output_dim
            )));
        }
        if decoder.input_dim != q + cond_dim || decoder.output_dim != 2 * d {
            return Err(Error::InvalidArgument(format!(
                "{name}: decoder must map {} -> {}, got {} -> {}",
                q + cond_dim,
                2 * d,
                decoder.input_dim,
                decoder.output_dim
            )));
        }
        if !(clamp > 0.0) || !(log_std_bounds.0 < log_std_bounds.1) {
            return Err(Error::InvalidArgument(format!("{name}: invalid clamps")));
        }
        let mut merge_idx = vec![0; in_dim];
        for (pos, &i) in discard.iter().chain(&keep).enumerate() {
            merge_idx[i] = pos;
        }
        let bijection = Mlp::register(&format!("{name}.kept"), bijection, params, rng)?;
        let decoder = Mlp::register(&format!("{name}.decoder"), decoder, params, rng)?;
        Ok(Self {
            in_dim,
            keep,
            discard,
            merge_idx,
            bijection,
            decoder,
            clamp,
            log_std_bounds,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.keep.len()
    }

    pub fn keep(&self) -> &[usize] {
        &self.keep
    }

    pub fn clamp(&self) -> f64 {
        self.clamp
    }

    pub fn log_std_bounds(&self) -> (f64, f64) {
        self.log_std_bounds
    }

    pub fn bijection(&self) -> &Mlp {
        &self.bijection
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    fn kept_affine(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        discarded: Var,
        cond: Var,
        layer: usize,
    ) -> Result<(Var, Var)> {
        let input = tape.concat(&[discarded, cond]);
        let out = self.bijection.forward(tape, params, input)?;
        check_finite(tape, out, layer, "funnel kept-block conditioner output")?;
        let q = self.keep.len();
        let shift = tape.column_range(out, 0..q);
        let raw = tape.column_range(out, q..2 * q);
        let s = tape.soft_clamp(raw, self.clamp);
        Ok((shift, s))
    }

    /// Decoder `(mean, log_std)` for the discarded block given `z`.
    pub fn decode(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        z: Var,
        cond: Var,
        layer: usize,
    ) -> Result<(Var, Var)> {
        let input = tape.concat(&[z, cond]);
        let out = self.decoder.forward(tape, params, input)?;
        check_finite(tape, out, layer, "funnel decoder output")?;
        let d = self.discard.len();
        let mean = tape.column_range(out, 0..d);
        let raw = tape.column_range(out, d..2 * d);
        let log_std = tape.clamp(raw, self.log_std_bounds.0, self.log_std_bounds.1);
        Ok((mean, log_std))
    }

    /// Returns `(z, contribution)` with `contribution` a `(rows, 1)` column.
    pub fn normalize(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        u: Var,
        cond: Var,
        layer: usize,
    ) -> Result<(Var, Var)> {
        if tape.cols(u) != self.in_dim {
            return Err(Error::dim(format!("layer {layer} funnel input"), self.in_dim, tape.cols(u)));
        }
        let kept = tape.columns(u, &self.keep);
        let discarded = tape.columns(u, &self.discard);
        let (shift, s) = self.kept_affine(tape, params, discarded, cond, layer)?;
        let centered = tape.sub(kept, shift);
        let neg_s = tape.scale(s, -1.0);
        let inv_scale = tape.exp(neg_s);
        let z = tape.mul(centered, inv_scale);
        let (mean, log_std) = self.decode(tape, params, z, cond, layer)?;
        let decoder_lp = tape.gaussian_logpdf(discarded, mean, log_std);
        let log_det = tape.row_sum(neg_s);
        let contribution = tape.add(decoder_lp, log_det);
        Ok((z, contribution))
    }

    /// Generating direction with caller-supplied standard-normal noise
    /// `eps` of shape `(rows, W - Q)`.
    pub fn generate_with_noise(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        z: Var,
        cond: Var,
        eps: Var,
        layer: usize,
    ) -> Result<Var> {
        if tape.cols(z) != self.keep.len() {
            return Err(Error::dim(
                format!("layer {layer} funnel latent"),
                self.keep.len(),
                tape.cols(z),
            ));
        }
        let (mean, log_std) = self.decode(tape, params, z, cond, layer)?;
        let std = tape.exp(log_std);
        let noise = tape.mul(std, eps);
        let discarded = tape.add(mean, noise);
        let (shift, s) = self.kept_affine(tape, params, discarded, cond, layer)?;
        let scale = tape.exp(s);
        let scaled = tape.mul(z, scale);
        let kept = tape.add(scaled, shift);
        let merged = tape.concat(&[discarded, kept]);
        Ok(tape.columns(merged, &self.merge_idx))
    }

    pub fn generate<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        z: Var,
        cond: Var,
        rng: &mut R,
        layer: usize,
    ) -> Result<Var> {
        let rows = tape.rows(z);
        let d = self.discard.len();
        let noise: Vec<f64> = (0..rows * d).map(|_| rng.sample(StandardNormal)).collect();
        let eps = tape.leaf(rows, d, noise);
        self.generate_with_noise(tape, params, z, cond, eps, layer)
    }

    pub fn normalize_vec(&self, params: &ParamStore, u: &[f64], cond: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut tape = Tape::new();
        let uv = tape.leaf(1, u.len(), u.to_vec());
        let cv = tape.leaf(1, cond.len(), cond.to_vec());
        let (z, c) = self.normalize(&mut tape, params, uv, cv, 0)?;
        Ok((tape.value(z).to_vec(), tape.value(c)[0]))
    }

    pub fn generate_vec<R: Rng + ?Sized>(
        &self,
        params: &ParamStore,
        z: &[f64],
        cond: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let zv = tape.leaf(1, z.len(), z.to_vec());
        let cv = tape.leaf(1, cond.len(), cond.to_vec());
        let u = self.generate(&mut tape, params, zv, cv, rng, 0)?;
        Ok(tape.value(u).to_vec())
    }
}

fn check_finite(tape: &Tape, v: Var, layer: usize, what: &str) -> Result<()> {
    if tape.value(v).iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            layer,
            detail: what.into(),
        });
    }
    Ok(())
}

use rand::Rng;

use crate::nnmath::{Mlp, MlpSpec, ParamStore, Tape, Var};
use crate::{Error, Result};

/// Conditional masked affine coupling.
///
/// Entries with `mask == true` are transformed; the rest pass through and,
/// together with the conditioning vector, feed the conditioner that emits a
/// shift and a raw log-scale for the transformed entries. The log-scale is
/// soft-clamped to `(-clamp, clamp)`.
///
/// Normalizing direction: `t' = (t - shift) · exp(-s)`, log-det `-Σ s`.
#[derive(Debug, Clone)]
pub struct CouplingLayer {
    dim: usize,
    mask: Vec<bool>,
    pass_idx: Vec<usize>,
    trans_idx: Vec<usize>,
    /// Position of each original index in `pass ++ trans`.
    merge_idx: Vec<usize>,
    conditioner: Mlp,
    clamp: f64,
}

impl CouplingLayer {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        mask: Vec<bool>,
        conditioner: MlpSpec,
        clamp: f64,
        cond_dim: usize,
        params: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        let dim = mask.len();
        let trans_idx: Vec<usize> = (0..dim).filter(|&i| mask[i]).collect();
        let pass_idx: Vec<usize> = (0..dim).filter(|&i| !mask[i]).collect();
        if trans_idx.is_empty() || pass_idx.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{name}: coupling mask needs at least one transformed and one pass-through entry"
            )));
        }
        if conditioner.input_dim != pass_idx.len() + cond_dim {
            return Err(Error::dim(
                format!("{name} conditioner input"),
                pass_idx.len() + cond_dim,
                conditioner.input_dim,
            ));
        }
        if conditioner.output_dim != 2 * trans_idx.len() {
            return Err(Error::dim(
                format!("{name} conditioner output"),
                2 * trans_idx.len(),
                conditioner.output_dim,
            ));
        }
        if !(clamp > 0.0) {
            return Err(Error::InvalidArgument(format!("{name}: clamp must be positive")));
        }
        let mut merge_idx = vec![0; dim];
        for (pos, &i) in pass_idx.iter().chain(&trans_idx).enumerate() {
            merge_idx[i] = pos;
        }
        let conditioner = Mlp::register(&format!("{name}.cond"), conditioner, params, rng)?;
        Ok(Self {
            dim,
            mask,
            pass_idx,
            trans_idx,
            merge_idx,
            conditioner,
            clamp,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn clamp(&self) -> f64 {
        self.clamp
    }

    pub fn conditioner(&self) -> &Mlp {
        &self.conditioner
    }

    /// Returns `(shift, s)` for the transformed block.
    fn shift_and_log_scale(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        pass: Var,
        cond: Var,
        layer: usize,
    ) -> Result<(Var, Var)> {
        let input = tape.concat(&[pass, cond]);
        let out = self.conditioner.forward(tape, params, input)?;
        if tape.value(out).iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer,
                detail: "coupling conditioner output".into(),
            });
        }
        let nt = self.trans_idx.len();
        let shift = tape.column_range(out, 0..nt);
        let raw = tape.column_range(out, nt..2 * nt);
        let s = tape.soft_clamp(raw, self.clamp);
        Ok((shift, s))
    }

    /// Data-side to base-side map. Returns `(u_next, logdet)` where `logdet`
    /// is a `(rows, 1)` column.
    pub fn normalize(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        u: Var,
        cond: Var,
        layer: usize,
    ) -> Result<(Var, Var)> {
        if tape.cols(u) != self.dim {
            return Err(Error::dim(format!("layer {layer} coupling input"), self.dim, tape.cols(u)));
        }
        let pass = tape.columns(u, &self.pass_idx);
        let t = tape.columns(u, &self.trans_idx);
        let (shift, s) = self.shift_and_log_scale(tape, params, pass, cond, layer)?;
        let centered = tape.sub(t, shift);
        let neg_s = tape.scale(s, -1.0);
        let inv_scale = tape.exp(neg_s);
        let t_next = tape.mul(centered, inv_scale);
        let merged = tape.concat(&[pass, t_next]);
        let u_next = tape.columns(merged, &self.merge_idx);
        let logdet = tape.row_sum(neg_s);
        Ok((u_next, logdet))
    }

    /// Exact inverse of [`CouplingLayer::normalize`].
    pub fn generate(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        u_next: Var,
        cond: Var,
        layer: usize,
    ) -> Result<Var> {
        if tape.cols(u_next) != self.dim {
            return Err(Error::dim(
                format!("layer {layer} coupling input"),
                self.dim,
                tape.cols(u_next),
            ));
        }
        let pass = tape.columns(u_next, &self.pass_idx);
        let t_next = tape.columns(u_next, &self.trans_idx);
        let (shift, s) = self.shift_and_log_scale(tape, params, pass, cond, layer)?;
        let scale = tape.exp(s);
        let scaled = tape.mul(t_next, scale);
        let t = tape.add(scaled, shift);
        let merged = tape.concat(&[pass, t]);
        Ok(tape.columns(merged, &self.merge_idx))
    }

    pub fn normalize_vec(&self, params: &ParamStore, u: &[f64], cond: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut tape = Tape::new();
        let uv = tape.leaf(1, u.len(), u.to_vec());
        let cv = tape.leaf(1, cond.len(), cond.to_vec());
        let (out, logdet) = self.normalize(&mut tape, params, uv, cv, 0)?;
        Ok((tape.value(out).to_vec(), tape.value(logdet)[0]))
    }

    pub fn generate_vec(&self, params: &ParamStore, u_next: &[f64], cond: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let uv = tape.leaf(1, u_next.len(), u_next.to_vec());
        let cv = tape.leaf(1, cond.len(), cond.to_vec());
        let out = self.generate(&mut tape, params, uv, cv, 0)?;
        Ok(tape.value(out).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use nalgebra::DMatrix;

    fn layer(mask: Vec<bool>, cond_dim: usize, hidden: Vec<usize>, zero: bool, seed: u64) -> (CouplingLayer, ParamStore) {
        let nt = mask.iter().filter(|m| **m).count();
        let np = mask.len() - nt;
        let spec = MlpSpec {
            final_zero_init: zero,
            ..MlpSpec::new(np + cond_dim, hidden, 2 * nt)
        };
        let mut params = ParamStore::new();
        let l = CouplingLayer::new("c", mask, spec, 2.0, cond_dim, &mut params, &mut rng_from_seed(seed)).unwrap();
        (l, params)
    }

    #[test]
    fn zero_init_is_identity() {
        let (l, p) = layer(vec![true, false, true, false], 2, vec![8], true, 1);
        let u = [0.3, -1.2, 2.0, 0.5];
        let (v, ld) = l.normalize_vec(&p, &u, &[0.1, 0.2]).unwrap();
        assert_eq!(v, u);
        assert_eq!(ld, 0.0);
        assert_eq!(l.generate_vec(&p, &u, &[0.1, 0.2]).unwrap(), u);
    }

    #[test]
    fn constant_shift() {
        // conditioner: affine, zero weights, bias = (shift 1, raw scale 0)
        let (l, mut p) = layer(vec![false, true], 1, vec![], true, 0);
        let b = l.conditioner().tensors()[0].1;
        p.tensor_mut(b).copy_from_slice(&[1.0, 0.0]);
        let (v, ld) = l.normalize_vec(&p, &[3.0, 5.0], &[0.0]).unwrap();
        assert_eq!(v, vec![3.0, 4.0]);
        assert_eq!(ld, 0.0);
        assert_eq!(l.generate_vec(&p, &[3.0, 4.0], &[0.0]).unwrap(), vec![3.0, 5.0]);
    }

    #[test]
    fn rejects_degenerate_masks() {
        let spec = MlpSpec::new(1, vec![], 4);
        let mut params = ParamStore::new();
        let err = CouplingLayer::new("c", vec![true, true], spec, 2.0, 1, &mut params, &mut rng_from_seed(0));
        assert!(err.is_err());
    }

    fn randomized(seed: u64) -> (CouplingLayer, ParamStore) {
        let (l, mut p) = layer(vec![true, false, false, true, true, false], 2, vec![5], false, seed);
        let mut rng = rng_from_seed(seed + 100);
        for v in p.values_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
        (l, p)
    }

    #[test]
    fn logdet_matches_finite_difference_jacobian() {
        let (l, p) = randomized(3);
        let cond = [0.4, -0.7];
        let u = [0.2, -0.1, 1.3, 0.8, -0.6, 0.05];
        let (_, ld) = l.normalize_vec(&p, &u, &cond).unwrap();
        let h = 1e-6;
        let mut jac = DMatrix::zeros(6, 6);
        for j in 0..6 {
            let mut up = u;
            up[j] += h;
            let mut um = u;
            um[j] -= h;
            let fp = l.normalize_vec(&p, &up, &cond).unwrap().0;
            let fm = l.normalize_vec(&p, &um, &cond).unwrap().0;
            for i in 0..6 {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let fd = jac.determinant().abs().ln();
        assert!((fd - ld).abs() < 1e-6, "fd {fd} vs {ld}");
    }

    #[test]
    fn round_trip() {
        let mut rng = rng_from_seed(9);
        for seed in 0..20 {
            let (l, p) = randomized(seed);
            let u: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let cond = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let (v, _) = l.normalize_vec(&p, &u, &cond).unwrap();
            let back = l.generate_vec(&p, &v, &cond).unwrap();
            let err = u.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "round trip error {err}");
        }
    }

    #[test]
    fn non_finite_conditioner_output_is_reported() {
        let (l, mut p) = layer(vec![false, true], 1, vec![], true, 0);
        let b = l.conditioner().tensors()[0].1;
        p.tensor_mut(b)[0] = f64::NAN;
        let mut tape = Tape::new();
        let u = tape.leaf(1, 2, vec![0.0, 0.0]);
        let c = tape.leaf(1, 1, vec![0.0]);
        let err = l.normalize(&mut tape, &p, u, c, 7).unwrap_err();
        assert!(matches!(err, Error::NonFinite { layer: 7, .. }));
    }
}

use rand::Rng;

use crate::nnmath::{Tape, Var};
use crate::{Error, Result};

/// Fixed reindexing `u_next[i] = u[perm[i]]`; log-det is exactly zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationLayer {
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

impl PermutationLayer {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut inverse = vec![usize::MAX; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            if p >= perm.len() || inverse[p] != usize::MAX {
                return Err(Error::InvalidArgument(format!("not a permutation: {perm:?}")));
            }
            inverse[p] = i;
        }
        Ok(Self { perm, inverse })
    }

    /// Fisher-Yates shuffle of `0..dim`.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..dim).collect();
        for i in (1..dim).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        Self::new(perm).expect("shuffle of a range is a permutation")
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn normalize(&self, tape: &mut Tape, u: Var) -> Result<Var> {
        if tape.cols(u) != self.dim() {
            return Err(Error::dim("permutation input", self.dim(), tape.cols(u)));
        }
        Ok(tape.columns(u, &self.perm))
    }

    pub fn generate(&self, tape: &mut Tape, u_next: Var) -> Result<Var> {
        if tape.cols(u_next) != self.dim() {
            return Err(Error::dim("permutation input", self.dim(), tape.cols(u_next)));
        }
        Ok(tape.columns(u_next, &self.inverse))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn inverse_round_trip() {
        let p = PermutationLayer::random(7, &mut rng_from_seed(5));
        let mut tape = Tape::new();
        let u = tape.leaf(1, 7, (0..7).map(|i| i as f64).collect());
        let v = p.normalize(&mut tape, u).unwrap();
        let w = p.generate(&mut tape, v).unwrap();
        assert_eq!(tape.value(w), tape.value(u));
    }

    #[test]
    fn rejects_non_permutations() {
        assert!(PermutationLayer::new(vec![0, 0, 1]).is_err());
        assert!(PermutationLayer::new(vec![0, 3]).is_err());
    }
}

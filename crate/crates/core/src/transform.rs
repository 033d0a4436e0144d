//! Path transformations acting on Wiener coordinates.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::gaussian::{Coordinates, Path};

/// A map `w ↦ Tw`, expressed on coordinates `x_i = δe_i`.
///
/// `rng` is only consumed by transformations that inject fresh noise
/// (the truncated basis shift); deterministic maps ignore it.
pub trait Transform: Sync {
    fn name(&self) -> String;

    /// Dimension of the coordinate space the map acts on.
    fn dim(&self) -> usize;

    fn apply_coords(&self, x: &Coordinates, rng: &mut dyn RngCore) -> Coordinates;

    fn invertible(&self) -> bool {
        true
    }

    fn apply_path(&self, p: &Path, rng: &mut dyn RngCore) -> Result<Path> {
        if p.grid().m() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: p.grid().m(),
            });
        }
        let y = self.apply_coords(&p.coordinates(), rng);
        Path::from_coordinates(p.grid(), &y, p.stream())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub dim: usize,
}

impl Transform for Identity {
    fn name(&self) -> String {
        "identity".into()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_coords(&self, x: &Coordinates, _rng: &mut dyn RngCore) -> Coordinates {
        x.clone()
    }
}

/// Iterates `t` `n` times from `x`.
pub fn orbit_point(t: &dyn Transform, x: &Coordinates, n: usize, rng: &mut dyn RngCore) -> Coordinates {
    let mut cur = x.clone();
    for _ in 0..n {
        cur = t.apply_coords(&cur, rng);
    }
    cur
}
